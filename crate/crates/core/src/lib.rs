//! Eigenvalue branches of parameter-dependent normal matrices.
//!
//! The crate provides the numeric and symbolic machinery to follow the
//! eigenvalues of a family `A(t)` (or `A(x, y)`) of normal complex matrices:
//! root finding for characteristic polynomials, optimal-matching curve
//! tracking with C^1/C^2 refinement, Riesz spectral projections and unitary
//! frame transport, truncated power-series branch expansion with Puiseux
//! ramification, and two-parameter blow-up desingularization.
//!
//! Everything is organized around a few core types re-exported from the
//! crate root: [`Series1`], [`Poly2`], [`ScalarExpr`], [`MonicPoly`],
//! [`MatrixFamily`], [`BranchSet`], and [`ChartTree`].

pub mod assignment;
pub mod blowup;
pub mod corpus;
pub mod expr;
pub mod family;
pub mod formal;
pub mod mat;
pub mod monic;
pub mod poly2;
pub mod series;
pub mod seriespoly;
pub mod spectral;
pub mod tracking;

pub use blowup::{ChartTree, NcOutcome, ResolveMode, ResolveOptions};
pub use corpus::CorpusEntry;
pub use expr::ScalarExpr;
pub use family::{Domain, FamilyKind, MatrixFamily, NormalityCertificate};
pub use formal::{NonflatReport, SeriesBranch};
pub use monic::MonicPoly;
pub use poly2::Poly2;
pub use series::Series1;
pub use seriespoly::SeriesPoly;
pub use spectral::{Contour, Frame, SpectralProjection, TransportOptions, TransportResult};
pub use tracking::{BranchSet, LipschitzReport, Smoothness, TrackOptions};

use num_complex::Complex;

/// Scalar type used throughout the crate. Swapping the underlying float
/// here (for example to a software wide-float type) changes the working
/// precision of the whole crate at once.
pub type Real = f64;

/// Complex scalar built on [`Real`].
pub type C64 = Complex<Real>;

/// Dynamically sized complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dynamically sized complex column vector.
pub type CVector = nalgebra::DVector<C64>;
