//! Exact two-sector formal-distribution calculus with operator product
//! expansion extraction and axiom verification on truncated graded state
//! spaces.
//!
//! The crate is organized as:
//!
//! - [`scalar`], [`exponent`]: exact rationals, exponent pairs, coset keys,
//!   generalized binomials, and all sign conventions;
//! - [`window`], [`dist`]: truncated formal distributions in up to three
//!   two-sector variables, with explicit validity windows;
//! - [`space`], [`backends`]: finite truncations of graded state spaces
//!   (free boson, free fermion, tensor products) with their generator
//!   fields and translation operators;
//! - [`engine`]: locality detection, reduced OPE extraction, generalized
//!   products, closure under products, and multiple locality;
//! - [`checks`]: verdict-producing checks for every axiom (creativity,
//!   translation covariance, completeness, skew-symmetry, duality in both
//!   channels, module duality, uniqueness, existence);
//! - [`specfile`], [`report`], [`suite`]: the spec-file format, report
//!   rendering, and the named check batteries driven by the CLI.

pub mod backends;
pub mod checks;
pub mod dist;
pub mod engine;
pub mod error;
pub mod exponent;
pub mod report;
pub mod scalar;
pub mod space;
pub mod specfile;
pub mod suite;
pub mod window;

pub use dist::{Dist, SectorTag, SupportSet};
pub use error::{CalcError, Result};
pub use exponent::{CosetKey, ExpPair, Parity};
pub use scalar::{gen_binom, inv_factorial, Rat, Scalar};
pub use window::{Key, Support};
