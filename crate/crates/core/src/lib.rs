//! Numerical laboratory for Q-valued functions and Almgren-type frequency
//! analysis of branched minimal graphs.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the double-precision instantiation used by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod cli;
pub mod curve;
pub mod error;
pub mod excess;
pub mod frequency;
pub mod grid;
pub mod qfile;
pub mod qfunction;
pub mod qvalue;
pub mod resample;
pub mod scalar;
pub mod scale_track;
pub mod synthetic;

pub use error::{Error, Result};
pub use grid::PolarGrid;
pub use qfunction::{Provenance, QFunction};
pub use qvalue::{QPoint, SheetSelection};
pub use scalar::Real;

pub type QPoint64 = QPoint<f64>;
pub type QFunction64 = QFunction<f64>;
pub type SheetSelection64 = SheetSelection<f64>;
