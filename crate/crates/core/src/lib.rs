//! Meshless updated-Lagrangian elastoplasticity on a velocity-based XPBD
//! solver.
//!
//! Particles carry a deformation gradient that is advanced from kernel-
//! corrected velocity gradients; per-particle compliant constraints derived
//! from StVK-Hencky energy are solved with colored Gauss-Seidel or Jacobi
//! sweeps, with plastic return mapping applied inside the iteration loop.
//!
//! The math layers ([`linalg`], [`kernels`], [`constitutive`]) are generic
//! over the scalar type via [`real::Real`]; the solver and I/O layers are
//! pinned to `f64` through the aliases below.

pub mod constitutive;
pub mod kernels;
pub mod linalg;
pub mod oracles;
pub mod particles;
pub mod real;
pub mod scene_io;
pub mod solver;

/// Scalar type used by the simulation pipeline.
pub type Scalar = f64;
/// 3-vector at simulation precision.
pub type Vec3 = linalg::Vector3<Scalar>;
/// 3x3 matrix at simulation precision.
pub type Mat3 = linalg::Matrix3<Scalar>;
/// SVD triple at simulation precision.
pub type Svd = linalg::SvdTriple<Scalar>;

/// Single-precision aliases for callers that trade accuracy for bandwidth.
pub type Vec3f = linalg::Vector3<f32>;
pub type Mat3f = linalg::Matrix3<f32>;
