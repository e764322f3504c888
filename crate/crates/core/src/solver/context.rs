//! Per-step frozen kernel data.
//!
//! Neighborhoods, kernel weights, current volumes, and the gradient
//! correction matrices are all evaluated once at the step-start positions and
//! reused by every solver iteration. Velocities are the only quantity that
//! changes inside the iteration loop.

use rayon::prelude::*;

use crate::kernels::{correction_matrix, kernel_gradient, kernel_value, KernelSpec};
use crate::particles::{build_neighbor_table, NeighborTable, ParticleSet};
use crate::{Mat3, Scalar, Vec3};

/// Frozen data for one neighbor `b` of a particle `p`.
#[derive(Copy, Clone, Debug)]
pub struct NeighborWeight {
    pub index: usize,
    /// Current volume `V0_b * det(F^n_b)`.
    pub volume: Scalar,
    /// Kernel value `W(|x_b - x_p|)`.
    pub w: Scalar,
    /// Corrected gradient `L_p grad W_b(x_p)`.
    pub corrected_grad: Vec3,
}

/// Everything the iteration loop needs that is fixed at step start.
pub struct StepContext {
    pub table: NeighborTable,
    pub kernel: KernelSpec<Scalar>,
    /// Step-start positions, the kernel anchor for the whole step.
    pub positions: Vec<Vec3>,
    /// Step-start deformation gradients.
    pub def_grad_n: Vec<Mat3>,
    pub correction: Vec<Mat3>,
    pub weights: Vec<Vec<NeighborWeight>>,
    /// Current volumes `V0 det(F^n)` at step start.
    pub volumes: Vec<Scalar>,
}

impl StepContext {
    pub fn build(
        particles: &ParticleSet,
        particle_radius: Scalar,
        dimension: u32,
        pool: Option<&rayon::ThreadPool>,
    ) -> Self {
        let kernel = KernelSpec::new(particle_radius, dimension);
        let positions = particles.positions.clone();
        let def_grad_n = particles.def_grad.clone();
        let table = build_neighbor_table(&positions, kernel.support, dimension);

        let volumes: Vec<Scalar> = (0..particles.len())
            .map(|i| particles.current_volume(i))
            .collect();

        let per_particle = |p: usize| -> (Mat3, Vec<NeighborWeight>) {
            let xp = positions[p];
            let moment_samples: Vec<(Vec3, Scalar)> = table.neighbors[p]
                .iter()
                .map(|&b| (positions[b], volumes[b]))
                .collect();
            let lp = correction_matrix(&kernel, xp, &moment_samples);
            let weights = table.neighbors[p]
                .iter()
                .map(|&b| {
                    let xb = positions[b];
                    let grad = kernel_gradient(&kernel, xp, xb);
                    NeighborWeight {
                        index: b,
                        volume: volumes[b],
                        w: kernel_value(&kernel, (xb - xp).norm()),
                        corrected_grad: lp.mul_vec(grad),
                    }
                })
                .collect();
            (lp, weights)
        };

        let built: Vec<(Mat3, Vec<NeighborWeight>)> = match pool {
            Some(pool) => pool.install(|| (0..particles.len()).into_par_iter().map(per_particle).collect()),
            None => (0..particles.len()).map(per_particle).collect(),
        };
        let mut correction = Vec::with_capacity(built.len());
        let mut weights = Vec::with_capacity(built.len());
        for (lp, w) in built {
            correction.push(lp);
            weights.push(w);
        }

        Self {
            table,
            kernel,
            positions,
            def_grad_n,
            correction,
            weights,
            volumes,
        }
    }

    /// Discrete corrected velocity gradient
    /// `sum_b V_b (v_b - v_p) (L_p grad W_b)^T`; zero for isolated particles.
    pub fn velocity_gradient(&self, p: usize, velocities: &[Vec3]) -> Mat3 {
        let vp = velocities[p];
        let mut grad = Mat3::zero();
        for nw in &self.weights[p] {
            let dv = velocities[nw.index] - vp;
            grad += dv.outer(nw.corrected_grad).scale(nw.volume);
        }
        grad
    }
}

/// Trial deformation gradient update `(I + dt grad_v) F_n`.
pub fn trial_deformation(f_n: &Mat3, grad_v: &Mat3, dt: Scalar) -> Mat3 {
    (Mat3::identity() + grad_v.scale(dt)) * *f_n
}

/// Gradients of particle `p`'s inelastic constraint with respect to neighbor
/// positions: `grad_b = V_b (dC/dF F_n^T) (L_p grad W_b)` for each neighbor,
/// and the self gradient as the exact negative sum, so the full gradient set
/// sums to zero by construction.
pub fn constraint_gradients(
    weights: &[NeighborWeight],
    f_n: &Mat3,
    dcdf: &Mat3,
) -> (Vec3, Vec<(usize, Vec3)>) {
    let a = *dcdf * f_n.transpose();
    let mut self_grad = Vec3::zero();
    let mut grads = Vec::with_capacity(weights.len());
    for nw in weights {
        let g = a.mul_vec(nw.corrected_grad).scale(nw.volume);
        self_grad -= g;
        grads.push((nw.index, g));
    }
    (self_grad, grads)
}
