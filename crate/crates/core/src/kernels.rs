//! Wendland C2 smoothing kernel and the kernel-gradient correction matrix.
//!
//! The correction matrix restores first-order consistency of meshless
//! gradient estimates: applied to samples of an affine field, the corrected
//! gradient operator recovers the exact Jacobian for any neighborhood with an
//! invertible moment matrix, including one-sided boundary neighborhoods.

use crate::linalg::{pseudo_inverse, Matrix3, Vector3};
use crate::real::Real;

/// Relative singular-value cutoff for the moment-matrix pseudo-inverse.
pub const MOMENT_PINV_CUTOFF: f64 = 1e-6;

/// Wendland C2 kernel with compact support `k = 2r`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct KernelSpec<T> {
    /// Particle kernel radius `r`.
    pub particle_radius: T,
    /// Support radius, always `2r`.
    pub support: T,
    /// Spatial dimension, 2 or 3. Controls the normalization constant.
    pub dimension: u32,
    /// Normalization making the kernel integrate to 1 over its support.
    pub normalization: T,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(particle_radius: T, dimension: u32) -> Self {
        assert!(
            dimension == 2 || dimension == 3,
            "kernel dimension must be 2 or 3"
        );
        let support = particle_radius + particle_radius;
        let normalization = match dimension {
            2 => T::from_f64_lossy(7.0) / (T::PI() * support * support),
            _ => T::from_f64_lossy(21.0 / 2.0) / (T::PI() * support * support * support),
        };
        Self {
            particle_radius,
            support,
            dimension,
            normalization,
        }
    }
}

/// Kernel value at distance `dist`. Zero for `dist >= k`, C1-continuous,
/// nonnegative and nonincreasing.
pub fn kernel_value<T: Real>(spec: &KernelSpec<T>, dist: T) -> T {
    let q = dist / spec.support;
    if q >= T::one() {
        return T::zero();
    }
    let one_minus = T::one() - q;
    let p4 = one_minus * one_minus * one_minus * one_minus;
    spec.normalization * p4 * (T::one() + T::from_f64_lossy(4.0) * q)
}

/// Radial derivative dW/d(dist).
pub fn kernel_deriv<T: Real>(spec: &KernelSpec<T>, dist: T) -> T {
    let q = dist / spec.support;
    if q >= T::one() {
        return T::zero();
    }
    let one_minus = T::one() - q;
    let p3 = one_minus * one_minus * one_minus;
    -spec.normalization * T::from_f64_lossy(20.0) * q * p3 / spec.support
}

/// Gradient of `W(|xb - xp|)` with respect to `xp`. Zero at `xb = xp`.
pub fn kernel_gradient<T: Real>(
    spec: &KernelSpec<T>,
    xp: Vector3<T>,
    xb: Vector3<T>,
) -> Vector3<T> {
    let d = xp - xb;
    let dist = d.norm();
    if dist <= T::zero() || dist >= spec.support {
        return Vector3::zero();
    }
    d.scale(kernel_deriv(spec, dist) / dist)
}

/// Kernel-gradient correction matrix
/// `L_p = (sum_b V_b grad W_b(x_p) (x_b - x_p)^T)^-1`.
///
/// The moment matrix is assembled in `f64` regardless of `T`; it is the most
/// conditioning-sensitive quantity in the method. Degenerate neighborhoods
/// (empty, coplanar) go through the pseudo-inverse, so the result is always
/// finite; an empty neighborhood yields the zero matrix.
pub fn correction_matrix<T: Real>(
    spec: &KernelSpec<T>,
    xp: Vector3<T>,
    neighbors: &[(Vector3<T>, T)],
) -> Matrix3<T> {
    let spec64 = KernelSpec::<f64>::new(spec.particle_radius.to_f64_lossy(), spec.dimension);
    let xp64 = to_f64(xp);
    let mut moment = Matrix3::<f64>::zero();
    for &(xb, volume) in neighbors {
        let xb64 = to_f64(xb);
        let grad = kernel_gradient(&spec64, xp64, xb64);
        moment += grad.outer(xb64 - xp64).scale(volume.to_f64_lossy());
    }
    let inv = pseudo_inverse(&moment, MOMENT_PINV_CUTOFF);
    let mut out = Matrix3::zero();
    for i in 0..3 {
        for j in 0..3 {
            out.m[i][j] = T::from_f64_lossy(inv.m[i][j]);
        }
    }
    out
}

fn to_f64<T: Real>(v: Vector3<T>) -> Vector3<f64> {
    Vector3::new(v.x.to_f64_lossy(), v.y.to_f64_lossy(), v.z.to_f64_lossy())
}
