//! Adaptive random linear network coding and optimal storage allocation.
//!
//! * [`gf`]: GF(2^8) and GF(2^16) arithmetic.
//! * [`rlnc`]: source encoding, relay recoding and progressive decoding.
//! * [`controller`]: the centralized code-rate controller.
//! * [`netsim`]: a round-based lossy network simulator.
//! * [`allocation`]: optimal placement of coded parts across data centers.
//! * [`oracle`]: brute-force references used for cross-checking.

pub mod allocation;
pub mod controller;
pub mod gf;
pub mod netsim;
pub mod oracle;
pub mod rlnc;
