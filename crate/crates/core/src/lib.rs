//! Numerical toolkit for harmonic analysis under the Zygmund dilations
//! `(x1, x2, x3) -> (s x1, t x2, s t x3)` on periodic 3-D grids.

// `!(x > 0.0)` is the idiom used throughout to reject NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calderon;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod field;
pub mod frames;
pub mod geometry;
pub mod kernels;
pub mod operators;
pub mod par;
pub mod report;
pub mod stats;
pub mod sums;
pub mod weights;

pub use error::{Error, Result};
pub use field::{fft_convolve, integrate, lp_norm, Grid3, ScalarField3, SpectralField3};
pub use geometry::{
    build_lattice, build_lattice_with_min, cone_section, is_zygmund, zygmund_dilate, Rect3, SamplePolicy,
    ZygLattice, ZygmundCone, ZygmundRectangle,
};
pub use report::{Check, Curve, ExperimentReport};
pub use rustfft::num_complex::Complex64;
