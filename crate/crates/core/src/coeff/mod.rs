//! Exact scalar arithmetic: the number field Q(i, sqrt2, sqrt3),
//! multivariate polynomials over it, and their fraction field.

mod poly;
mod radical;
mod ratio;

pub use poly::{gcd, Monomial, Poly, ScalarId};
pub use radical::Radical;
pub use ratio::{Coeff, EvalError};
