//! Deterministic simulator of BitTorrent overlay construction.
//!
//! The crate models how the tracker protocol, NATed peers and peer exchange
//! (PEX) shape the graph of open connections in a torrent, and ships the
//! measurements used to characterise that graph: average peer set size,
//! sampled diameter, partition census and robustness to targeted or random
//! removal. Two closed-form models (convergence speed toward the maximum
//! peer set, service time on mesh and chain-of-clusters overlays) and a
//! round-based piece-exchange simulator (choking + local rarest first)
//! complete the picture.
//!
//! Everything here is `no_std` + `alloc`: file formats, CSV, sweeps and the
//! command-line front end live in the `btoverlay` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod analysis;
pub mod bitset;
pub mod config;
pub mod event;
pub mod exchange;
pub mod graph;
pub mod metrics;
pub mod peer;
pub mod rng;
pub mod sim;
pub mod tracker;
pub mod workload;

/// Arrival-order index of a peer. Peer `0` is the first to join the torrent.
pub type PeerIndex = u32;

/// Simulated time, in seconds.
pub type Seconds = f64;

pub use config::{ArrivalLaw, ConfigError, LifetimeLaw, ScenarioConfig};
pub use graph::OverlayGraph;
pub use sim::{run_scenario, Simulation, SimulationResult};
