//! Simulator and finite-size security toolkit for device-independent weak
//! string erasure (WSE) and position verification (PV) in the bounded
//! storage model.
//!
//! The crate is organised bottom-up:
//!
//! - [`qcore`]: exact one- and two-qubit density operators, projective
//!   measurement with Born-rule sampling, the four protocol bases and
//!   deterministic random streams.
//! - [`devices`]: pluggable device strategies (honest, depolarized, the
//!   sequential-source attack, classical adversaries).
//! - [`wse`]: the weak string erasure round loop, CHSH scoring and abort rules.
//! - [`pv`]: position verification on a line with light-speed timing.
//! - [`bounds`]: every closed-form security quantity (tradeoff function,
//!   entropy penalties, rates, abort bounds).
//! - [`stats`]: tail bounds, Monte Carlo estimation and entropy estimation.

pub mod bounds;
pub mod devices;
pub mod pv;
pub mod qcore;
pub mod stats;
pub mod symbols;
pub mod wse;

pub use symbols::Trit;
