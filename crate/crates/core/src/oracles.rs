//! Independent validation oracles.
//!
//! Each oracle recomputes a solver quantity by brute force or finite
//! differences, sharing nothing with the code under test beyond the linear
//! algebra layer. Tolerances are committed constants; loosening one is a
//! reviewed change, not a knob.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constitutive::{
    constraint_and_gradient, constraint_value, ElasticParams, MaterialModel,
};
use crate::particles::ParticleSet;
use crate::solver::{
    constraint_gradients, trial_deformation, PlasticityMode, SimState, Simulation, SolverConfig,
    StepContext, StepError,
};
use crate::{Mat3, Scalar, Vec3};

/// Finite-difference step applied to velocity components.
pub const FD_STEP: Scalar = 1e-6;
/// Timestep used inside the v -> grad v -> F -> C chain.
pub const FD_DT: Scalar = 1e-3;
/// Maximum relative error for the constraint-gradient check.
pub const FD_GRADIENT_TOL: Scalar = 1e-4;
/// Maximum relative error for the corrected velocity-gradient check.
pub const LINEAR_CONSISTENCY_TOL: Scalar = 1e-9;

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub name: String,
    pub max_error: Scalar,
    pub tolerance: Scalar,
    pub samples: usize,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.name,
            self.max_error,
            self.tolerance,
            self.samples,
            if self.passed() { "pass" } else { "fail" }
        )
    }

    pub fn text_line(&self) -> String {
        format!(
            "{:<28} {:>5}  max error {:.3e}  tolerance {:.3e}  ({} samples)",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_error,
            self.tolerance,
            self.samples
        )
    }
}

pub const ORACLE_CSV_HEADER: &str = "oracle,max_error,tolerance,samples,status";

/// Random cloud with deformation state away from the energy minimum.
fn random_cloud(size: usize, radius: Scalar, rng: &mut impl Rng) -> ParticleSet {
    let extent = 1.6 * radius;
    let mut set = ParticleSet::default();
    let points: Vec<Vec3> = (0..size)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-extent..extent),
                rng.gen_range(-extent..extent),
                rng.gen_range(-extent..extent),
            )
        })
        .collect();
    set.seed(&points, Vec3::zero(), radius, 3, 1000.0, 0, 0.0);
    for f in &mut set.def_grad {
        for i in 0..3 {
            for j in 0..3 {
                f.m[i][j] += rng.gen_range(-0.08..0.08);
            }
        }
    }
    for v in &mut set.velocities {
        *v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
    }
    set
}

/// Constraint value of particle `p` as a pure function of the velocity
/// field, through the frozen kernel weights.
fn constraint_of_velocities(
    ctx: &StepContext,
    set: &ParticleSet,
    elastic: &ElasticParams<Scalar>,
    p: usize,
    velocities: &[Vec3],
    dt: Scalar,
) -> Scalar {
    let grad_v = ctx.velocity_gradient(p, velocities);
    let f = trial_deformation(&ctx.def_grad_n[p], &grad_v, dt);
    constraint_value(elastic, &f, set.rest_volume[p]).0
}

/// Central-difference check of the analytic constraint gradients under
/// velocity perturbations. Reports the max relative error across all trials,
/// particles, neighbors, and components.
pub fn fd_gradient_check(cloud_size: usize, trials: usize, h_fd: Scalar, seed: u64) -> OracleReport {
    assert!(cloud_size >= 5, "cloud size must be at least 5");
    let elastic = ElasticParams::new(1e5, 0.3).unwrap();
    let radius = 0.05;
    let dt = FD_DT;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: Scalar = 0.0;
    let mut samples = 0;
    for _ in 0..trials {
        let set = random_cloud(cloud_size, radius, &mut rng);
        let ctx = StepContext::build(&set, radius, 3, None);
        for p in 0..set.len() {
            if ctx.weights[p].is_empty() {
                continue;
            }
            let grad_v = ctx.velocity_gradient(p, &set.velocities);
            let f = trial_deformation(&ctx.def_grad_n[p], &grad_v, dt);
            let (_, _, dcdf) = constraint_and_gradient(&elastic, &f, set.rest_volume[p]);
            let (self_grad, grads) =
                constraint_gradients(&ctx.weights[p], &ctx.def_grad_n[p], &dcdf);
            let mut targets: Vec<(usize, Vec3)> = grads;
            targets.push((p, self_grad));
            // dC/d(v_b) = dt * position gradient; normalize by the largest
            // analytic component of this constraint.
            let denom = targets
                .iter()
                .map(|(_, g)| g.norm())
                .fold(0.0, Scalar::max)
                * dt;
            if denom < 1e-12 {
                continue;
            }
            for &(b, g) in &targets {
                for k in 0..3 {
                    let mut vp = set.velocities.clone();
                    vp[b][k] += h_fd;
                    let c_plus = constraint_of_velocities(&ctx, &set, &elastic, p, &vp, dt);
                    vp[b][k] -= 2.0 * h_fd;
                    let c_minus = constraint_of_velocities(&ctx, &set, &elastic, p, &vp, dt);
                    let fd = (c_plus - c_minus) / (2.0 * h_fd);
                    let err = (dt * g[k] - fd).abs() / denom;
                    max_error = max_error.max(err);
                    samples += 1;
                }
            }
        }
    }
    OracleReport {
        name: "fd_gradient_check".into(),
        max_error,
        tolerance: FD_GRADIENT_TOL,
        samples,
    }
}

/// Corrected velocity gradients of random affine fields versus the exact
/// Jacobian. Returns the report plus the worst UNcorrected error on the same
/// samples for contrast.
pub fn linear_field_consistency(
    cloud_size: usize,
    trials: usize,
    seed: u64,
) -> (OracleReport, Scalar) {
    let radius = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: Scalar = 0.0;
    let mut max_uncorrected: Scalar = 0.0;
    let mut samples = 0;
    for _ in 0..trials {
        let set = random_cloud(120, radius, &mut rng);
        let _ = cloud_size;
        let ctx = StepContext::build(&set, radius, 3, None);
        let mut a = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                a.m[i][j] = rng.gen_range(-1.0..1.0);
            }
        }
        let field: Vec<Vec3> = set.positions.iter().map(|&x| a.mul_vec(x)).collect();
        let scale = a.frobenius_norm();
        for p in 0..set.len() {
            // Well-posed neighborhoods only; one-sided boundary particles of
            // the cloud qualify, near-isolated ones do not.
            if ctx.weights[p].len() < 10 {
                continue;
            }
            let corrected = ctx.velocity_gradient(p, &field);
            max_error = max_error.max((corrected - a).frobenius_norm() / scale);

            let mut raw = Mat3::zero();
            for nw in &ctx.weights[p] {
                let grad_w = crate::kernels::kernel_gradient(
                    &ctx.kernel,
                    ctx.positions[p],
                    ctx.positions[nw.index],
                );
                raw += (field[nw.index] - field[p]).outer(grad_w).scale(nw.volume);
            }
            max_uncorrected = max_uncorrected.max((raw - a).frobenius_norm() / scale);
            samples += 1;
        }
    }
    (
        OracleReport {
            name: "linear_field_consistency".into(),
            max_error,
            tolerance: LINEAR_CONSISTENCY_TOL,
            samples,
        },
        max_uncorrected,
    )
}

/// Exact O(n^2) neighbor lists, inclusive boundary `|xi - xj| <= k`.
pub fn brute_force_neighbors(positions: &[Vec3], k: Scalar) -> Vec<Vec<usize>> {
    let k2 = k * k;
    (0..positions.len())
        .map(|i| {
            (0..positions.len())
                .filter(|&j| j != i && (positions[j] - positions[i]).norm_squared() <= k2)
                .collect()
        })
        .collect()
}

/// Positions after every step.
pub fn run_trajectory(
    state: SimState,
    config: SolverConfig,
    steps: usize,
) -> Result<Vec<Vec<Vec3>>, StepError> {
    let mut sim = Simulation::new(state, config)?;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        sim.step()?;
        out.push(sim.state.particles.positions.clone());
    }
    Ok(out)
}

/// The same pipeline with the in-loop return map disabled: projections run
/// only at step end, the classic operator split.
pub fn semi_implicit_comparator(
    state: SimState,
    mut config: SolverConfig,
    steps: usize,
) -> Result<Vec<Vec<Vec3>>, StepError> {
    config.plasticity = PlasticityMode::SemiImplicit;
    run_trajectory(state, config, steps)
}

/// Total elastic energy `sum_p V0_p psi(F_p)` with hardening-scaled moduli.
pub fn elastic_energy(state: &SimState) -> Scalar {
    let particles = &state.particles;
    (0..particles.len())
        .map(|p| {
            let material: &MaterialModel<Scalar> = &state.materials[particles.material_id[p]];
            let elastic = material
                .elastic
                .scaled(material.stiffness_factor(particles.plastic_state[p]));
            particles.rest_volume[p]
                * crate::constitutive::energy_density(&elastic, &particles.def_grad[p])
        })
        .sum()
}

/// RMS of per-particle position differences, normalized by `length_scale`.
pub fn position_rms(a: &[Vec3], b: &[Vec3], length_scale: Scalar) -> Scalar {
    assert_eq!(a.len(), b.len());
    assert!(length_scale > 0.0);
    if a.is_empty() {
        return 0.0;
    }
    let sum: Scalar = a.iter().zip(b).map(|(x, y)| (*x - *y).norm_squared()).sum();
    (sum / a.len() as Scalar).sqrt() / length_scale
}
