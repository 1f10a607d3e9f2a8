//! Scenario configuration: protocol parameters and workload laws.

use alloc::vec::Vec;
use thiserror::Error;

use crate::Seconds;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ConfigError {
    #[error("max_outgoing must satisfy 0 < max_outgoing <= max_peer_set (got {max_outgoing} with max_peer_set {max_peer_set})")]
    Outgoing { max_outgoing: u32, max_peer_set: u32 },
    #[error("recontact_threshold must satisfy 0 < recontact_threshold <= max_peer_set (got {0})")]
    RecontactThreshold(u32),
    #[error("tracker_return_count must be positive")]
    ZeroReturnCount,
    #[error("nat_fraction must lie in [0, 1] (got {0})")]
    NatFraction(f64),
    #[error("{0} must be finite and positive")]
    NonPositive(&'static str),
    #[error("invalid arrival law: {0}")]
    Arrival(&'static str),
    #[error("invalid lifetime law: {0}")]
    Lifetime(&'static str),
    #[error("announce expiry range must satisfy 0 < lo <= hi")]
    ExpiryRange,
}

/// How peers join the torrent.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum ArrivalLaw {
    /// Slot `i` (1-based) receives `ceil(amplitude * exp(-rate * (i - 1)))`
    /// arrivals for `i <= num_slots`, placed uniformly inside the slot.
    ExponentialSlots {
        amplitude: f64,
        rate: f64,
        slot_minutes: f64,
        num_slots: u32,
    },
    /// Arrival instants given verbatim, in seconds.
    ExplicitSchedule { times_secs: Vec<Seconds> },
}

impl Default for ArrivalLaw {
    fn default() -> Self {
        ArrivalLaw::ExponentialSlots {
            amplitude: 1000.0,
            rate: 0.7,
            slot_minutes: 10.0,
            num_slots: 4,
        }
    }
}

impl ArrivalLaw {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            ArrivalLaw::ExponentialSlots {
                amplitude,
                rate,
                slot_minutes,
                num_slots,
            } => {
                if !(amplitude.is_finite() && *amplitude > 0.0) {
                    return Err(ConfigError::Arrival("amplitude must be positive"));
                }
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(ConfigError::Arrival("rate must be positive"));
                }
                if !(slot_minutes.is_finite() && *slot_minutes > 0.0) {
                    return Err(ConfigError::Arrival("slot_minutes must be positive"));
                }
                if *num_slots == 0 {
                    return Err(ConfigError::Arrival("num_slots must be at least 1"));
                }
            }
            ArrivalLaw::ExplicitSchedule { times_secs } => {
                if times_secs.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                    return Err(ConfigError::Arrival(
                        "arrival times must be finite and non-negative",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// How long peers stay.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum LifetimeLaw {
    /// Departure = arrival + U[lo, hi] minutes.
    UniformMinutes { lo_mins: f64, hi_mins: f64 },
    /// Departure = U[start, end] minutes of absolute time, never before arrival.
    UniformWindow {
        window_start_mins: f64,
        window_end_mins: f64,
    },
}

impl Default for LifetimeLaw {
    fn default() -> Self {
        LifetimeLaw::UniformMinutes {
            lo_mins: 10.0,
            hi_mins: 20.0,
        }
    }
}

impl LifetimeLaw {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (lo, hi) = match *self {
            LifetimeLaw::UniformMinutes { lo_mins, hi_mins } => (lo_mins, hi_mins),
            LifetimeLaw::UniformWindow {
                window_start_mins,
                window_end_mins,
            } => (window_start_mins, window_end_mins),
        };
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0) {
            return Err(ConfigError::Lifetime("bounds must be finite and non-negative"));
        }
        if lo > hi {
            return Err(ConfigError::Lifetime("lower bound exceeds upper bound"));
        }
        Ok(())
    }
}

/// Every protocol and workload parameter of one scenario.
///
/// `Default` is the tracker-only initial scenario: peer set 80, 40 outgoing
/// connections, 50 peers per tracker response, re-contact below 20
/// neighbours, no NAT, no PEX, 1867 arrivals over four 10-minute slots.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct ScenarioConfig {
    /// Maximum peer set size.
    pub max_peer_set: u32,
    /// Maximum number of connections a peer may initiate itself.
    pub max_outgoing: u32,
    /// Peers returned per tracker request.
    pub tracker_return_count: u32,
    /// Peer set size below which a peer asks the tracker for more peers.
    pub recontact_threshold: u32,
    pub recontact_min_interval_secs: f64,
    /// When disabled, peers never announce and the tracker forgets them
    /// once their expiry threshold elapses.
    pub announce_enabled: bool,
    pub announce_interval_mins: f64,
    /// Per-peer expiry threshold is drawn from this range at registration.
    pub announce_expiry_mins: (f64, f64),
    pub nat_fraction: f64,
    pub pex_enabled: bool,
    pub pex_period_mins: f64,
    /// Connection attempts to NATed peers learnt through PEX fail.
    pub pex_nat_blocks: bool,
    pub arrival_law: ArrivalLaw,
    pub lifetime_law: LifetimeLaw,
    pub snapshot_interval_secs: f64,
    pub seed: u64,
    pub runs: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            max_peer_set: 80,
            max_outgoing: 40,
            tracker_return_count: 50,
            recontact_threshold: 20,
            recontact_min_interval_secs: 300.0,
            announce_enabled: true,
            announce_interval_mins: 30.0,
            announce_expiry_mins: (30.0, 45.0),
            nat_fraction: 0.0,
            pex_enabled: false,
            pex_period_mins: 1.0,
            pex_nat_blocks: true,
            arrival_law: ArrivalLaw::default(),
            lifetime_law: LifetimeLaw::default(),
            snapshot_interval_secs: 60.0,
            seed: 1,
            runs: 10,
        }
    }
}

impl ScenarioConfig {
    /// The PEX experiment: 1000 peers arriving over the first hour with the
    /// same exponential slot law, departing uniformly during the second hour.
    pub fn pex_1000() -> Self {
        Self {
            pex_enabled: true,
            arrival_law: ArrivalLaw::ExponentialSlots {
                // six 10-minute slots; ceil-rounded counts sum to exactly 1000
                amplitude: 509.5,
                rate: 0.7,
                slot_minutes: 10.0,
                num_slots: 6,
            },
            lifetime_law: LifetimeLaw::UniformWindow {
                window_start_mins: 60.0,
                window_end_mins: 120.0,
            },
            ..Self::default()
        }
    }

    /// Parameters tied together the way the peer-set sweep does it:
    /// `O_max = Δ/2`, `σ = (Δ + O_max)/2`.
    pub fn with_peer_set(mut self, max_peer_set: u32) -> Self {
        self.max_peer_set = max_peer_set;
        self.max_outgoing = max_peer_set / 2;
        self.tracker_return_count = (max_peer_set + self.max_outgoing) / 2;
        self
    }

    /// `σ = (Δ + O_max)/2` for the outgoing-connection sweep.
    pub fn with_outgoing(mut self, max_outgoing: u32) -> Self {
        self.max_outgoing = max_outgoing;
        self.tracker_return_count = (self.max_peer_set + max_outgoing) / 2;
        self
    }

    pub fn recontact_min_interval(&self) -> Seconds {
        self.recontact_min_interval_secs
    }

    pub fn announce_interval(&self) -> Seconds {
        self.announce_interval_mins * 60.0
    }

    pub fn pex_period(&self) -> Seconds {
        self.pex_period_mins * 60.0
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_outgoing == 0 || self.max_outgoing > self.max_peer_set {
            return Err(ConfigError::Outgoing {
                max_outgoing: self.max_outgoing,
                max_peer_set: self.max_peer_set,
            });
        }
        if self.recontact_threshold == 0 || self.recontact_threshold > self.max_peer_set {
            return Err(ConfigError::RecontactThreshold(self.recontact_threshold));
        }
        if self.tracker_return_count == 0 {
            return Err(ConfigError::ZeroReturnCount);
        }
        if !(0.0..=1.0).contains(&self.nat_fraction) {
            return Err(ConfigError::NatFraction(self.nat_fraction));
        }
        for (name, v) in [
            ("recontact_min_interval_secs", self.recontact_min_interval_secs),
            ("announce_interval_mins", self.announce_interval_mins),
            ("pex_period_mins", self.pex_period_mins),
            ("snapshot_interval_secs", self.snapshot_interval_secs),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::NonPositive(name));
            }
        }
        let (lo, hi) = self.announce_expiry_mins;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(ConfigError::ExpiryRange);
        }
        self.arrival_law.validate()?;
        self.lifetime_law.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ScenarioConfig::default().validate().unwrap();
        ScenarioConfig::pex_1000().validate().unwrap();
    }

    #[test]
    fn rejects_outgoing_above_peer_set() {
        let cfg = ScenarioConfig {
            max_outgoing: 81,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(ConfigError::Outgoing { .. })));
        let cfg = ScenarioConfig {
            max_outgoing: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_bad_threshold_fraction_and_laws() {
        let bad = [
            ScenarioConfig {
                recontact_threshold: 0,
                ..Default::default()
            },
            ScenarioConfig {
                recontact_threshold: 81,
                ..Default::default()
            },
            ScenarioConfig {
                tracker_return_count: 0,
                ..Default::default()
            },
            ScenarioConfig {
                nat_fraction: 1.5,
                ..Default::default()
            },
            ScenarioConfig {
                arrival_law: ArrivalLaw::ExponentialSlots {
                    amplitude: 1.0,
                    rate: 0.7,
                    slot_minutes: 10.0,
                    num_slots: 0,
                },
                ..Default::default()
            },
            ScenarioConfig {
                lifetime_law: LifetimeLaw::UniformMinutes {
                    lo_mins: 20.0,
                    hi_mins: 10.0,
                },
                ..Default::default()
            },
            ScenarioConfig {
                announce_expiry_mins: (45.0, 30.0),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn sweep_helpers_tie_parameters() {
        let cfg = ScenarioConfig::default().with_peer_set(200);
        assert_eq!(
            (cfg.max_outgoing, cfg.tracker_return_count),
            (100, 150)
        );
        let cfg = ScenarioConfig::default().with_outgoing(70);
        assert_eq!(cfg.tracker_return_count, 75);
    }
}
