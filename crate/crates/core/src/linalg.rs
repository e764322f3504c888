//! Dense 3-vector / 3x3-matrix algebra for deformation-gradient processing.
//!
//! Everything here is value-level and allocation-free. The SVD uses one-sided
//! Jacobi sweeps, which is accurate enough for the conditioning range a
//! deformation gradient can reach and keeps the rotation convention under our
//! control: `U` and `V` are always proper rotations, with any reflection
//! absorbed into the sign of the last singular value.

use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::real::Real;

/// 3-component column vector.
#[derive(Copy, Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[repr(C)]
pub struct Vector3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

/// 3x3 matrix, row-major storage.
#[derive(Copy, Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[repr(C)]
pub struct Matrix3<T> {
    pub m: [[T; 3]; 3],
}

/// Result of [`svd3`]: `M = U * diag(sigma) * V^T`.
///
/// `U` and `V` are proper rotations (`det = +1`); `sigma` is sorted in
/// descending order and only its last entry may be negative.
#[derive(Copy, Clone, Debug)]
pub struct SvdTriple<T> {
    pub u: Matrix3<T>,
    pub sigma: Vector3<T>,
    pub v: Matrix3<T>,
}

impl<T: Real> Vector3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::splat(T::zero())
    }

    pub fn splat(v: T) -> Self {
        Self { x: v, y: v, z: v }
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self / n
        } else {
            Self::zero()
        }
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    /// Componentwise map.
    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn sum(self) -> T {
        self.x + self.y + self.z
    }

    pub fn max_component(self) -> T {
        self.x.max(self.y).max(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Outer product `self * other^T`.
    pub fn outer(self, o: Self) -> Matrix3<T> {
        Matrix3::from_rows(o.scale(self.x), o.scale(self.y), o.scale(self.z))
    }
}

impl<T: Real> Index<usize> for Vector3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("vector index out of range: {i}"),
        }
    }
}

impl<T: Real> IndexMut<usize> for Vector3<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("vector index out of range: {i}"),
        }
    }
}

impl<T: Real> Add for Vector3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vector3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vector3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vector3<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vector3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vector3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T: Real> Div<T> for Vector3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Matrix3<T> {
    pub fn zero() -> Self {
        Self {
            m: [[T::zero(); 3]; 3],
        }
    }

    pub fn identity() -> Self {
        Self::from_diag(Vector3::splat(T::one()))
    }

    pub fn from_rows(r0: Vector3<T>, r1: Vector3<T>, r2: Vector3<T>) -> Self {
        Self {
            m: [
                [r0.x, r0.y, r0.z],
                [r1.x, r1.y, r1.z],
                [r2.x, r2.y, r2.z],
            ],
        }
    }

    pub fn from_cols(c0: Vector3<T>, c1: Vector3<T>, c2: Vector3<T>) -> Self {
        Self {
            m: [
                [c0.x, c1.x, c2.x],
                [c0.y, c1.y, c2.y],
                [c0.z, c1.z, c2.z],
            ],
        }
    }

    pub fn from_diag(d: Vector3<T>) -> Self {
        let mut out = Self::zero();
        out.m[0][0] = d.x;
        out.m[1][1] = d.y;
        out.m[2][2] = d.z;
        out
    }

    pub fn row(&self, i: usize) -> Vector3<T> {
        Vector3::new(self.m[i][0], self.m[i][1], self.m[i][2])
    }

    pub fn col(&self, j: usize) -> Vector3<T> {
        Vector3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn set_col(&mut self, j: usize, c: Vector3<T>) {
        self.m[0][j] = c.x;
        self.m[1][j] = c.y;
        self.m[2][j] = c.z;
    }

    pub fn transpose(&self) -> Self {
        Self::from_cols(self.row(0), self.row(1), self.row(2))
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn determinant(&self) -> T {
        self.row(0).dot(self.row(1).cross(self.row(2)))
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        for r in out.m.iter_mut() {
            for v in r.iter_mut() {
                *v = *v * s;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        self.m
            .iter()
            .flatten()
            .map(|v| *v * *v)
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, v: Vector3<T>) -> Vector3<T> {
        Vector3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    /// Double contraction `A : B = sum_ij A_ij B_ij`.
    pub fn double_dot(&self, o: &Self) -> T {
        let mut acc = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                acc = acc + self.m[i][j] * o.m[i][j];
            }
        }
        acc
    }
}

impl<T: Real> Add for Matrix3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = out.m[i][j] + o.m[i][j];
            }
        }
        out
    }
}

impl<T: Real> AddAssign for Matrix3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Matrix3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = out.m[i][j] - o.m[i][j];
            }
        }
        out
    }
}

impl<T: Real> Mul for Matrix3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = T::zero();
                for k in 0..3 {
                    acc = acc + self.m[i][k] * o.m[k][j];
                }
                out.m[i][j] = acc;
            }
        }
        out
    }
}

/// One-sided Jacobi SVD of a 3x3 matrix.
///
/// Always defined; degenerate inputs yield repeated or zero singular values.
/// The convention is rotation-variant: if the input has negative determinant
/// the reflection is pushed into `sigma.z`.
pub fn svd3<T: Real>(a: &Matrix3<T>) -> SvdTriple<T> {
    let mut b = *a;
    let mut v = Matrix3::identity();
    let tol = T::epsilon() * T::from_f64_lossy(4.0);

    // Orthogonalize the columns of `b`; accumulate the rotations in `v`.
    for _ in 0..60 {
        let mut converged = true;
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let cp = b.col(p);
            let cq = b.col(q);
            let app = cp.norm_squared();
            let aqq = cq.norm_squared();
            let apq = cp.dot(cq);
            if apq.abs() <= tol * (app * aqq).sqrt() || apq == T::zero() {
                continue;
            }
            converged = false;
            let zeta = (aqq - app) / (apq + apq);
            let t = {
                let s = if zeta >= T::zero() { T::one() } else { -T::one() };
                s / (zeta.abs() + (T::one() + zeta * zeta).sqrt())
            };
            let c = T::one() / (T::one() + t * t).sqrt();
            let s = c * t;
            for mat in [&mut b, &mut v] {
                let colp = mat.col(p);
                let colq = mat.col(q);
                mat.set_col(p, colp.scale(c) - colq.scale(s));
                mat.set_col(q, colp.scale(s) + colq.scale(c));
            }
        }
        if converged {
            break;
        }
    }

    let mut sigma = Vector3::new(b.col(0).norm(), b.col(1).norm(), b.col(2).norm());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());

    let sorted_sigma = Vector3::new(sigma[order[0]], sigma[order[1]], sigma[order[2]]);
    let mut u = Matrix3::from_cols(b.col(order[0]), b.col(order[1]), b.col(order[2]));
    let v = Matrix3::from_cols(v.col(order[0]), v.col(order[1]), v.col(order[2]));
    sigma = sorted_sigma;

    // Normalize the left singular vectors; rebuild columns whose singular
    // value is too small to carry a direction.
    let cutoff = sigma.x * T::epsilon() * T::from_f64_lossy(64.0);
    let mut valid = [false; 3];
    for j in 0..3 {
        if sigma[j] > cutoff && sigma[j] > T::zero() {
            u.set_col(j, u.col(j) / sigma[j]);
            valid[j] = true;
        }
    }
    complete_basis(&mut u, &valid);

    let mut u = u;
    let mut v = v;
    if u.determinant() < T::zero() {
        u.set_col(2, -u.col(2));
        sigma.z = -sigma.z;
    }
    if v.determinant() < T::zero() {
        v.set_col(2, -v.col(2));
        sigma.z = -sigma.z;
    }

    SvdTriple { u, sigma, v }
}

/// Fill the columns of `m` flagged invalid with unit vectors orthogonal to
/// the valid ones.
fn complete_basis<T: Real>(m: &mut Matrix3<T>, valid: &[bool; 3]) {
    let axes = [
        Vector3::new(T::one(), T::zero(), T::zero()),
        Vector3::new(T::zero(), T::one(), T::zero()),
        Vector3::new(T::zero(), T::zero(), T::one()),
    ];
    let mut have: Vec<Vector3<T>> = (0..3).filter(|&j| valid[j]).map(|j| m.col(j)).collect();
    for j in 0..3 {
        if valid[j] {
            continue;
        }
        // Gram-Schmidt the candidate axis with the largest residual.
        let mut best = Vector3::zero();
        let mut best_norm = T::zero();
        for axis in axes {
            let mut r = axis;
            for h in &have {
                r -= h.scale(h.dot(r));
            }
            let n = r.norm();
            if n > best_norm {
                best_norm = n;
                best = r / n;
            }
        }
        m.set_col(j, best);
        have.push(best);
    }
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
///
/// Singular values with `|s| < cutoff * s_max` contribute zero; the all-zero
/// matrix maps to the zero matrix.
pub fn pseudo_inverse<T: Real>(m: &Matrix3<T>, cutoff: T) -> Matrix3<T> {
    let svd = svd3(m);
    let s_max = svd.sigma.map(|s| s.abs()).max_component();
    let inv = svd.sigma.map(|s| {
        if s.abs() < cutoff * s_max || s == T::zero() {
            T::zero()
        } else {
            T::one() / s
        }
    });
    svd.v * Matrix3::from_diag(inv) * svd.u.transpose()
}

/// Componentwise `ln(max(s, floor))`.
///
/// Negative or collapsed singular values hit the floor, keeping Hencky
/// strains finite under total degeneration.
pub fn log_clamped<T: Real>(sigma: Vector3<T>, floor: T) -> Vector3<T> {
    sigma.map(|s| s.max(floor).ln())
}

/// Reconstruct `U * diag(sigma) * V^T`.
pub fn svd_reconstruct<T: Real>(svd: &SvdTriple<T>) -> Matrix3<T> {
    svd.u * Matrix3::from_diag(svd.sigma) * svd.v.transpose()
}
