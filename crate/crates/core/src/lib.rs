//! Symbolic tensor calculus in abstract index notation, with a
//! derivation replay engine and an exact-arithmetic numeric oracle.
//!
//! The crate decides equality of indexed expressions modulo declared
//! slot symmetries, metric contraction, dummy relabeling, and traceless
//! declarations; expands covariant-derivative commutators into field
//! strength and curvature couplings; replays scripted derivations of
//! first-order wave systems; and cross-checks every identity on
//! pseudorandom exact-rational geometry and jet samples.

pub mod calculus;
pub mod canon;
pub mod coeff;
pub mod derivation;
pub mod gen;
pub mod oracle;
pub mod parse;
pub mod suite;
pub mod ir;
pub fn run() -> i32 { 0 }
