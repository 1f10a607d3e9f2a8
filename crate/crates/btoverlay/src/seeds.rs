//! Seed lists for multi-run experiments.

use std::str::FromStr;

use crate::error::{Error, Result};

/// Seeds used when none are given: `1..=runs`.
pub fn default_seeds(runs: u32) -> Vec<u64> {
    (1..=u64::from(runs.max(1))).collect()
}

/// Inclusive seed range as written on the command line: `7`, `1..10` or
/// `1..=10` (both range forms include the upper end).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> Vec<u64> {
        (self.first..=self.last).collect()
    }
}

impl FromStr for SeedRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::SeedRange(s.to_owned());
        let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
        let (first, last) = match s.split_once("..") {
            Some((a, b)) => (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?),
            None => {
                let n = num(s)?;
                (n, n)
            }
        };
        if first > last {
            return Err(bad());
        }
        Ok(Self { first, last })
    }
}
