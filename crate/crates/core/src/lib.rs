//! Covering-lemma laboratory: maximal operators, overlap functionals,
//! doubling constants and norm estimates on finite metric measure spaces.
//!
//! Spaces come in two backends. The atomic backend carries finitely many
//! points with positive masses and supports every operator. The segment
//! backend is an exact piecewise-linear measure on horizontal segments of
//! the `l1` plane; ball measures and overlap norms are computed exactly on
//! it, and [`space::discretize`] turns it into an atomic space when an
//! operator has to be evaluated.

pub mod boman;
pub mod error;
pub mod maximal;
pub mod normlab;
pub mod num;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod space;
pub mod tol;

pub use error::{Error, Result};
pub use maximal::{OperatorSpec, TestFunction, Variant};
pub use space::{AtomicSpace, Ball, Center, Closure, Metric, MetricMeasureSpace, Segment, SegmentSpace};
