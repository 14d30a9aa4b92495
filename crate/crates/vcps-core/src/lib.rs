//! Simulator and learning harness for edge-coordinated vehicular sensing:
//! vehicles sense typed information streams, queue them in per-vehicle
//! priority queues, and upload them over V2I links to roadside units that
//! assemble logical views. Scoring combines view age (timeliness +
//! consistency) and view cost (redundancy + sensing + transmission); per-RSU
//! actor-critic agents learn the sensing frequencies, priorities, transmit
//! powers, and bandwidth shares.
//!
//! Built with the `parallel` feature (default), batch work fans out across a
//! rayon pool; results are reduced in input order so both builds produce
//! bit-identical numbers.

pub mod channel;
pub mod domain;
pub mod env;
pub mod learn;
pub mod metrics;
pub mod par;
pub mod presets;
pub mod queueing;
