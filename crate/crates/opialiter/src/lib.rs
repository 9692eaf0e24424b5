//! Fixed-point iteration toolkit for dense and sparse l2 coordinate spaces.
//!
//! The pieces compose in one direction: [`space`] gives points and the
//! metric, [`domains`] the convex sets iterations live in, [`operators`] the
//! maps being iterated, [`engines`] the iteration schemes that produce
//! traces, and [`diagnostics`] the tail-windowed checks that judge them.
//! [`suite`] bundles named constructions with frozen expected values, and
//! [`scenario`] wires everything to JSON files for the `opialiter` binary.
//!
//! Asymptotic statements (liminf, limsup, "the limit exists") are judged
//! through finite surrogates: min, max, and mean over a tail window of the
//! computed sequence. Every verdict carries the window and the measured
//! numbers it was based on, and ties inside a tolerance band are reported
//! as inconclusive rather than silently resolved.

pub mod diagnostics;
pub mod domains;
pub mod engines;
pub mod error;
pub mod operators;
pub mod scenario;
pub mod space;
pub mod suite;

pub use diagnostics::{Status, TailWindow, Verdict, Witness};
pub use domains::ConvexDomain;
pub use engines::{
    mann_run, picard_run, regularized_solve, EpsSchedule, Scheme, StopReason, Trace,
};
pub use error::{Error, Result};
pub use operators::{make_operator, Operator, OperatorSpec};
pub use space::{combine, inner_product, Point};
