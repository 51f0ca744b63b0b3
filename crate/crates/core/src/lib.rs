//! Pseudohermitian geometry of the generalized ellipsoids
//! `Im w = |z_1|^{2m_1} + … + |z_{s−1}|^{2m_{s−1}} + |z_s|²`
//! and classification of their CR maps.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`.

// `!(x <= tol)` is used on purpose so that NaN fails; tensor code indexes by
// position.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod classify;
pub mod cone;
pub mod curvature;
pub mod error;
pub mod frame;
pub mod lee;
pub mod linalg;
pub mod maps;
pub mod model;
pub mod sample;
pub mod report;
pub mod scalar;

pub use error::{CrError, Result};
pub use model::Signature;
pub use scalar::Real;

pub type Point = model::SurfacePoint<f64>;
pub type Vector = frame::TangentVector<f64>;
pub type Levi = frame::LeviData<f64>;
pub type Curvature = curvature::CurvatureData<f64>;
pub type Map = maps::MapDescriptor<f64>;
pub type Matrix = linalg::CMatrix<f64>;
pub type Complex = num_complex::Complex64;
