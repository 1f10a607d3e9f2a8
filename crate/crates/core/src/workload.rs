//! Arrival and lifetime generation.

use alloc::vec::Vec;
use rand::Rng;

use crate::config::{ArrivalLaw, LifetimeLaw, ScenarioConfig};
use crate::Seconds;

/// Arrivals per slot of the exponential law.
///
/// Counts are `ceil(amplitude * exp(-rate * (i - 1)))`; this is the rounding
/// that yields 1000/497/247/123 for the default law.
pub fn slot_counts(amplitude: f64, rate: f64, num_slots: u32) -> Vec<u32> {
    (0..num_slots)
        .map(|i| {
            let expected = amplitude * libm::exp(-rate * f64::from(i));
            // exact integers (slot 1) must not be pushed up by float noise
            libm::ceil(expected - 1e-9).max(0.0) as u32
        })
        .collect()
}

/// Arrival instants in seconds, sorted ascending.
///
/// Per-slot counts are fixed by the law; only the placement inside each
/// slot is drawn from `rng`.
pub fn schedule_arrivals<R: Rng + ?Sized>(law: &ArrivalLaw, rng: &mut R) -> Vec<Seconds> {
    let mut times = match law {
        ArrivalLaw::ExponentialSlots {
            amplitude,
            rate,
            slot_minutes,
            num_slots,
        } => {
            let slot = slot_minutes * 60.0;
            let counts = slot_counts(*amplitude, *rate, *num_slots);
            let mut times = Vec::with_capacity(counts.iter().map(|&c| c as usize).sum());
            for (i, &count) in counts.iter().enumerate() {
                let start = slot * i as f64;
                for _ in 0..count {
                    times.push(rng.gen_range(start..start + slot));
                }
            }
            times
        }
        ArrivalLaw::ExplicitSchedule { times_secs } => times_secs.clone(),
    };
    times.sort_by(f64::total_cmp);
    times
}

/// Departure instant of a peer arriving at `arrival`.
pub fn draw_lifetime<R: Rng + ?Sized>(law: &LifetimeLaw, arrival: Seconds, rng: &mut R) -> Seconds {
    match *law {
        LifetimeLaw::UniformMinutes { lo_mins, hi_mins } => {
            arrival + rng.gen_range(lo_mins * 60.0..=hi_mins * 60.0)
        }
        LifetimeLaw::UniformWindow {
            window_start_mins,
            window_end_mins,
        } => rng
            .gen_range(window_start_mins * 60.0..=window_end_mins * 60.0)
            .max(arrival),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeerPlan {
    pub arrival: Seconds,
    pub departure: Seconds,
    pub nated: bool,
}

/// The full workload of a run, indexed by arrival order.
///
/// Draw order is fixed: all arrival instants, then one (lifetime, NAT flag)
/// pair per peer in arrival order.
pub fn plan_peers<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<PeerPlan> {
    let arrivals = schedule_arrivals(&cfg.arrival_law, rng);
    arrivals
        .into_iter()
        .map(|arrival| {
            let departure = draw_lifetime(&cfg.lifetime_law, arrival, rng);
            let nated = cfg.nat_fraction > 0.0 && rng.gen_bool(cfg.nat_fraction);
            PeerPlan {
                arrival,
                departure,
                nated,
            }
        })
        .collect()
}
