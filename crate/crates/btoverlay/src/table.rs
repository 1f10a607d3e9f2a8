//! Comma-separated tables with `#`-prefixed metadata lines.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    /// Emitted before the header, one `# ` line each.
    pub metadata: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            metadata: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Adds metadata; multi-line text becomes several comment lines.
    pub fn note(&mut self, text: impl AsRef<str>) -> &mut Self {
        self.metadata.extend(text.as_ref().lines().map(str::to_owned));
        self
    }

    pub fn push<I, D>(&mut self, row: I)
    where
        I: IntoIterator<Item = D>,
        D: Display,
    {
        let row: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parsed values of one column.
    pub fn floats(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column(name)?;
        self.rows.iter().map(|r| r[c].parse().ok()).collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for line in &self.metadata {
            writeln!(out, "# {line}").map_err(csv::Error::from)?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        self.write(BufWriter::new(file))
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut metadata = Vec::new();
        let mut body = String::new();
        for line in BufReader::new(input).lines() {
            let line = line.map_err(csv::Error::from)?;
            match line.strip_prefix('#') {
                Some(m) => metadata.push(m.strip_prefix(' ').unwrap_or(m).to_owned()),
                None => {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let header = r.headers()?.iter().map(str::to_owned).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_owned).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            metadata,
            header,
            rows,
        })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::read(file)
    }
}

/// Mean, minimum and maximum of a set of per-seed values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut count = 0;
        let (mut sum, mut min, mut max) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            count += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        (count > 0).then(|| Self {
            mean: (sum / count as f64).clamp(min, max),
            min,
            max,
            count,
        })
    }

    pub fn cells(&self) -> [String; 3] {
        [fmt(self.mean), fmt(self.min), fmt(self.max)]
    }
}

/// Compact float formatting: integers without a fraction, otherwise up to
/// six decimals.
pub fn fmt(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_with_metadata() {
        let mut t = Table::new(["a", "b"]);
        t.note("preset = \"x\"\nseeds = [1, 2]");
        t.push([1.5, 2.0]);
        t.push(["x,y", "z"]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# preset = \"x\"\n# seeds = [1, 2]\na,b\n"));
        assert_eq!(Table::read(buf.as_slice()).unwrap(), t);
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn rejects_ragged_rows() {
        Table::new(["a"]).push([1, 2]);
    }

    #[test]
    fn summary_orders() {
        let s = Summary::of([3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.count), (2.0, 1.0, 3.0, 3));
        assert!(Summary::of([]).is_none());
        let tiny = Summary::of([0.1; 7]).unwrap();
        assert!(tiny.min <= tiny.mean && tiny.mean <= tiny.max);
    }

    #[test]
    fn formats_compactly() {
        assert_eq!(fmt(3.0), "3");
        assert_eq!(fmt(0.25), "0.25");
        assert_eq!(fmt(1.0 / 3.0), "0.333333");
    }
}
