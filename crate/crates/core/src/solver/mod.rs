//! Velocity-space constrained time stepper.
//!
//! Each step freezes neighborhoods and kernel weights at the step-start
//! positions, predicts velocities with external forces, then relaxes the
//! per-particle inelastic constraints (with the plastic return map applied
//! inside every iteration) together with auxiliary distance and boundary
//! constraints. Velocity smoothing and a consistent deformation-gradient
//! update close the step; positions move only once, at the end, with the
//! final velocity field.

pub mod atomics;
pub mod collider;
pub mod context;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constitutive::{
    advance_plastic_state, constraint_and_gradient, constraint_value, return_map, MaterialModel,
};
use crate::particles::ParticleSet;
use crate::{Mat3, Scalar, Vec3};

pub use atomics::{AtomicScalars, AtomicVelocities};
pub use collider::{Collider, ColliderShape, STICKY};
pub use context::{constraint_gradients, trial_deformation, NeighborWeight, StepContext};

/// Constraint relaxation backend.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverBackend {
    /// Cell-colored Gauss-Seidel sweeps; reads see in-flight updates.
    #[serde(rename = "gs")]
    ColoredGaussSeidel,
    /// All updates computed from the iteration-start state, applied in one
    /// ordered batch. Bitwise reproducible regardless of thread count.
    #[serde(rename = "jacobi")]
    Jacobi,
}

/// Where the plastic projection runs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlasticityMode {
    /// Return map inside every solver iteration; constraints see the
    /// projected deformation gradient.
    Implicit,
    /// Classic operator split: constraints see the elastic trial state and
    /// the projection runs once at step end.
    SemiImplicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Substep length in seconds.
    pub dt: Scalar,
    pub iterations: usize,
    pub backend: SolverBackend,
    pub plasticity: PlasticityMode,
    /// Velocity smoothing strength, dimensionless.
    pub xsph_c: Scalar,
    /// Distance-constraint slack as a fraction of the particle radius:
    /// pairs are kept at least `(1 - gap_factor) * particle_radius` apart.
    pub gap_factor: Scalar,
    pub gravity: Vec3,
    /// Kernel particle radius `r`; support is `2r`.
    pub particle_radius: Scalar,
    /// 2 or 3. In 2D the z velocity is zeroed and the z block of F pinned.
    pub dimension: u32,
    /// 1 = strictly serial, 0 = all cores, n = fixed pool size.
    pub threads: usize,
    /// Enable the pairwise distance correction sweep.
    pub position_correction: bool,
    /// Stop iterating early once the relative residual drops below this.
    pub residual_target: Option<Scalar>,
    /// Under-relaxation factor for the Jacobi backend, in (0, 1]. All
    /// constraints fire from the same snapshot, so overlapping corrections
    /// add up; scaling them back keeps the sweep stable.
    pub jacobi_relaxation: Scalar,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            iterations: 10,
            backend: SolverBackend::ColoredGaussSeidel,
            plasticity: PlasticityMode::Implicit,
            xsph_c: 0.01,
            gap_factor: 0.25,
            gravity: Vec3::new(0.0, -9.81, 0.0),
            particle_radius: 0.05,
            dimension: 3,
            threads: 1,
            position_correction: true,
            residual_target: None,
            jacobi_relaxation: 0.8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.dt > 0.0) {
            return Err(StepError::Config("dt must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(StepError::Config("iterations must be at least 1".into()));
        }
        if !(self.xsph_c >= 0.0) {
            return Err(StepError::Config("xsph_c must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.gap_factor) {
            return Err(StepError::Config("gap_factor must be in [0, 1)".into()));
        }
        if !(self.particle_radius > 0.0) {
            return Err(StepError::Config("particle_radius must be positive".into()));
        }
        if self.dimension != 2 && self.dimension != 3 {
            return Err(StepError::Config("dimension must be 2 or 3".into()));
        }
        if !(self.jacobi_relaxation > 0.0 && self.jacobi_relaxation <= 1.0) {
            return Err(StepError::Config(
                "jacobi_relaxation must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Minimum pair distance enforced by the position correction.
    pub fn min_pair_distance(&self) -> Scalar {
        (1.0 - self.gap_factor) * self.particle_radius
    }
}

/// Full mutable simulation state.
#[derive(Clone, Debug, Default)]
pub struct SimState {
    pub particles: ParticleSet,
    pub materials: Vec<MaterialModel<Scalar>>,
    pub colliders: Vec<Collider>,
    pub time: Scalar,
    pub step_index: u64,
}

#[derive(Clone, Debug, Default)]
pub struct PhaseTimings {
    pub neighbor_us: u64,
    pub predict_us: u64,
    pub iterate_us: u64,
    pub xsph_us: u64,
    pub finalize_us: u64,
}

#[derive(Clone, Debug, Default)]
pub struct StepDiagnostics {
    pub step: u64,
    pub iterations_run: usize,
    pub constraint_count: usize,
    /// Initial residual norm, absolute.
    pub residual_initial: Scalar,
    /// Residual norm after each iteration, relative to the initial value.
    pub residuals: Vec<Scalar>,
    /// Coincident-pair events resolved along the fallback axis.
    pub fallback_axis_count: usize,
    pub timings: PhaseTimings,
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("material id {id} out of range ({count} materials)")]
    BadMaterialId { id: usize, count: usize },
    #[error("non-finite particle state at step {step}")]
    NonFinite {
        step: u64,
        diagnostics: Box<StepDiagnostics>,
    },
}

/// Per-particle external force hook, evaluated at step start.
pub type ExternalForce = dyn Fn(usize, &ParticleSet) -> Vec3 + Send + Sync;

/// User-supplied velocity constraint, run after the built-in auxiliary
/// sweep in every iteration. Positions are the step-start anchors.
pub trait VelocityConstraint: Send + Sync {
    fn project(&self, dt: Scalar, positions: &[Vec3], velocities: &mut [Vec3]);
}

pub struct Simulation {
    pub state: SimState,
    pub config: SolverConfig,
    pool: Option<rayon::ThreadPool>,
    external_force: Option<Box<ExternalForce>>,
    extra_constraints: Vec<Box<dyn VelocityConstraint>>,
}

/// Symmetric velocity correction for one overlapping pair.
#[derive(Copy, Clone, Debug)]
pub struct PairCorrection {
    pub dv_a: Vec3,
    pub dv_b: Vec3,
    /// Coincident points, resolved along the +x fallback axis.
    pub fallback: bool,
}

/// Hard inequality projection of the pair distance constraint at the
/// candidate positions `x + dt v`. `None` when already satisfied.
pub fn solve_distance_constraint(
    xa: Vec3,
    xb: Vec3,
    va: Vec3,
    vb: Vec3,
    ma: Scalar,
    mb: Scalar,
    min_dist: Scalar,
    dt: Scalar,
) -> Option<PairCorrection> {
    let ya = xa + va.scale(dt);
    let yb = xb + vb.scale(dt);
    let sep = ya - yb;
    let dist = sep.norm();
    if dist >= min_dist {
        return None;
    }
    let (axis, fallback) = if dist > 1e-12 {
        (sep.scale(1.0 / dist), false)
    } else {
        (Vec3::new(1.0, 0.0, 0.0), true)
    };
    let wa = 1.0 / ma;
    let wb = 1.0 / mb;
    let push = (min_dist - dist) / (wa + wb);
    Some(PairCorrection {
        dv_a: axis.scale(wa * push / dt),
        dv_b: axis.scale(-wb * push / dt),
        fallback,
    })
}

/// Velocity smoothing `v_p + c sum_b V_b (v_b - v_p) W_b`, reading the
/// unsmoothed field throughout.
pub fn xsph_smooth(
    ctx: &StepContext,
    velocities: &[Vec3],
    c: Scalar,
    pool: Option<&rayon::ThreadPool>,
) -> Vec<Vec3> {
    par_map(pool, velocities.len(), |p| {
        let vp = velocities[p];
        let mut blended = Vec3::zero();
        for nw in &ctx.weights[p] {
            // Symmetrized pair volume keeps the exchange antisymmetric, so
            // equal-mass particle pairs conserve linear momentum exactly.
            let pair_volume = 0.5 * (ctx.volumes[p] + nw.volume);
            blended += (velocities[nw.index] - vp).scale(pair_volume * nw.w);
        }
        vp + blended.scale(c)
    })
}

/// Residual `h_p = C_p(v) + alpha_tilde_p lambda_p` for every particle,
/// returned as the l2 norm. `C_p` is evaluated exactly as the solver sees it:
/// through the velocity gradient, trial update, and (in implicit mode) the
/// return map.
pub fn residual_norm(
    ctx: &StepContext,
    particles: &ParticleSet,
    materials: &[MaterialModel<Scalar>],
    velocities: &[Vec3],
    lambdas: &[Scalar],
    dt: Scalar,
    mode: PlasticityMode,
    pool: Option<&rayon::ThreadPool>,
) -> Scalar {
    let h = par_map(pool, particles.len(), |p| {
        let material = &materials[particles.material_id[p]];
        let ps = particles.plastic_state[p];
        let elastic = material.elastic.scaled(material.stiffness_factor(ps));
        let grad = ctx.velocity_gradient(p, velocities);
        let f_trial = trial_deformation(&ctx.def_grad_n[p], &grad, dt);
        let f = match mode {
            PlasticityMode::Implicit => return_map(material, &f_trial, dt, ps),
            PlasticityMode::SemiImplicit => f_trial,
        };
        let (c, alpha) = constraint_value(&elastic, &f, particles.rest_volume[p]);
        c + alpha / (dt * dt) * lambdas[p]
    });
    h.iter().map(|x| x * x).sum::<Scalar>().sqrt()
}

pub(crate) fn par_map<T, F>(pool: Option<&rayon::ThreadPool>, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    match pool {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        None => (0..n).map(f).collect(),
    }
}

/// One particle's contribution computed by the Jacobi backend.
struct JacobiUpdate {
    delta_lambda: Scalar,
    self_dv: Vec3,
    neighbor_dv: Vec<(usize, Vec3)>,
}

impl Simulation {
    pub fn new(state: SimState, config: SolverConfig) -> Result<Self, StepError> {
        config.validate()?;
        let count = state.materials.len();
        for &id in &state.particles.material_id {
            if id >= count {
                return Err(StepError::BadMaterialId { id, count });
            }
        }
        let pool = match config.threads {
            1 => None,
            n => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| StepError::Config(e.to_string()))?,
            ),
        };
        Ok(Self {
            state,
            config,
            pool,
            external_force: None,
            extra_constraints: Vec::new(),
        })
    }

    pub fn set_external_force(&mut self, hook: Box<ExternalForce>) {
        self.external_force = Some(hook);
    }

    pub fn add_constraint(&mut self, constraint: Box<dyn VelocityConstraint>) {
        self.extra_constraints.push(constraint);
    }

    /// Advance one substep. On a non-finite state the step aborts and the
    /// partial diagnostics ride along in the error.
    pub fn step(&mut self) -> Result<StepDiagnostics, StepError> {
        let cfg = self.config.clone();
        let dt = cfg.dt;
        let n = self.state.particles.len();
        let mut diag = StepDiagnostics {
            step: self.state.step_index,
            ..Default::default()
        };
        // Catch poisoned input up front; NaN positions would corrupt the
        // neighbor grid and NaN gradients panic inside the SVD.
        if !self.state.particles.all_finite() {
            return Err(StepError::NonFinite {
                step: diag.step,
                diagnostics: Box::new(diag),
            });
        }

        let t = Instant::now();
        let ctx = StepContext::build(
            &self.state.particles,
            cfg.particle_radius,
            cfg.dimension,
            self.pool.as_ref(),
        );
        diag.timings.neighbor_us = t.elapsed().as_micros() as u64;

        let t = Instant::now();
        {
            let particles = &mut self.state.particles;
            for p in 0..n {
                let mut accel = cfg.gravity;
                if let Some(hook) = &self.external_force {
                    accel += hook(p, particles).scale(1.0 / particles.mass[p]);
                }
                particles.velocities[p] += accel.scale(dt);
                if cfg.dimension == 2 {
                    particles.velocities[p].z = 0.0;
                }
            }
        }
        diag.timings.predict_us = t.elapsed().as_micros() as u64;

        let t = Instant::now();
        let vel = AtomicVelocities::from_slice(&self.state.particles.velocities);
        let lambdas = AtomicScalars::zeros(n);
        let fallback_events = AtomicUsize::new(0);

        diag.constraint_count = n
            + if cfg.position_correction {
                ctx.table
                    .neighbors
                    .iter()
                    .enumerate()
                    .map(|(p, nb)| nb.iter().filter(|&&b| b > p).count())
                    .sum::<usize>()
            } else {
                0
            };

        let r0 = residual_norm(
            &ctx,
            &self.state.particles,
            &self.state.materials,
            &self.state.particles.velocities,
            &vec![0.0; n],
            dt,
            cfg.plasticity,
            self.pool.as_ref(),
        );
        diag.residual_initial = r0;
        let r0_denom = if r0 > 0.0 { r0 } else { 1.0 };

        for _ in 0..cfg.iterations {
            match cfg.backend {
                SolverBackend::ColoredGaussSeidel => {
                    self.gauss_seidel_iteration(&ctx, &vel, &lambdas, &fallback_events, &cfg);
                }
                SolverBackend::Jacobi => {
                    self.jacobi_iteration(&ctx, &vel, &lambdas, &fallback_events, &cfg);
                }
            }

            if !self.extra_constraints.is_empty() {
                let mut v = vel.to_vec();
                for constraint in &self.extra_constraints {
                    constraint.project(dt, &ctx.positions, &mut v);
                }
                for (p, &vp) in v.iter().enumerate() {
                    vel.store(p, vp);
                }
            }

            let r = residual_norm(
                &ctx,
                &self.state.particles,
                &self.state.materials,
                &vel.to_vec(),
                &lambdas.to_vec(),
                dt,
                cfg.plasticity,
                self.pool.as_ref(),
            );
            diag.residuals.push(r / r0_denom);
            diag.iterations_run += 1;
            if let Some(target) = cfg.residual_target {
                if r / r0_denom <= target {
                    break;
                }
            }
        }
        diag.fallback_axis_count = fallback_events.load(Ordering::Relaxed);
        diag.timings.iterate_us = t.elapsed().as_micros() as u64;

        let t = Instant::now();
        let smoothed = if cfg.xsph_c > 0.0 {
            xsph_smooth(&ctx, &vel.to_vec(), cfg.xsph_c, self.pool.as_ref())
        } else {
            vel.to_vec()
        };
        diag.timings.xsph_us = t.elapsed().as_micros() as u64;

        let t = Instant::now();
        {
            let particles = &self.state.particles;
            let materials = &self.state.materials;
            let updated = par_map(self.pool.as_ref(), n, |p| {
                let material = &materials[particles.material_id[p]];
                let ps = particles.plastic_state[p];
                let grad = ctx.velocity_gradient(p, &smoothed);
                let f_trial = trial_deformation(&ctx.def_grad_n[p], &grad, dt);
                let mut f = return_map(material, &f_trial, dt, ps);
                if cfg.dimension == 2 {
                    pin_2d(&mut f);
                }
                let new_state = advance_plastic_state(material, &f_trial, &f, ps);
                (f, new_state)
            });
            let particles = &mut self.state.particles;
            for (p, (f, ps)) in updated.into_iter().enumerate() {
                particles.def_grad[p] = f;
                particles.plastic_state[p] = ps;
                particles.velocities[p] = smoothed[p];
                particles.positions[p] += smoothed[p].scale(dt);
                particles.multiplier[p] = lambdas.load(p);
            }
        }
        self.state.time += dt;
        self.state.step_index += 1;
        diag.timings.finalize_us = t.elapsed().as_micros() as u64;

        if !self.state.particles.all_finite() {
            return Err(StepError::NonFinite {
                step: diag.step,
                diagnostics: Box::new(diag),
            });
        }
        Ok(diag)
    }

    /// Relax the inelastic constraint of particle `p` against the shared
    /// velocity buffer. Writes to `lambdas[p]` are owned by the caller's
    /// sweep partition; velocity updates scatter atomically.
    fn project_particle(
        &self,
        ctx: &StepContext,
        p: usize,
        vel: &AtomicVelocities,
        lambda_p: Scalar,
        cfg: &SolverConfig,
    ) -> Option<JacobiUpdate> {
        let particles = &self.state.particles;
        let material = &self.state.materials[particles.material_id[p]];
        let ps = particles.plastic_state[p];
        let elastic = material.elastic.scaled(material.stiffness_factor(ps));
        let dt = cfg.dt;

        let vp = vel.load(p);
        let mut grad = Mat3::zero();
        for nw in &ctx.weights[p] {
            grad += (vel.load(nw.index) - vp)
                .outer(nw.corrected_grad)
                .scale(nw.volume);
        }
        let f_trial = trial_deformation(&ctx.def_grad_n[p], &grad, dt);
        let f = match cfg.plasticity {
            PlasticityMode::Implicit => return_map(material, &f_trial, dt, ps),
            PlasticityMode::SemiImplicit => f_trial,
        };
        let (c, alpha, dcdf) = constraint_and_gradient(&elastic, &f, particles.rest_volume[p]);
        if c == 0.0 && lambda_p == 0.0 {
            return None;
        }
        let alpha_tilde = alpha / (dt * dt);
        let (self_grad, grads) = constraint_gradients(&ctx.weights[p], &ctx.def_grad_n[p], &dcdf);

        let mut denom = self_grad.norm_squared() / particles.mass[p] + alpha_tilde;
        for &(b, g) in &grads {
            denom += g.norm_squared() / particles.mass[b];
        }
        let delta_lambda = (-c - alpha_tilde * lambda_p) / denom;
        let scale = delta_lambda / dt;
        Some(JacobiUpdate {
            delta_lambda,
            self_dv: self_grad.scale(scale / particles.mass[p]),
            neighbor_dv: grads
                .into_iter()
                .map(|(b, g)| (b, g.scale(scale / particles.mass[b])))
                .collect(),
        })
    }

    /// Distance pairs owned by the lower index, then boundary projection.
    fn project_auxiliary(
        &self,
        ctx: &StepContext,
        p: usize,
        vel: &AtomicVelocities,
        fallback_events: &AtomicUsize,
        cfg: &SolverConfig,
    ) {
        let particles = &self.state.particles;
        let dt = cfg.dt;
        if cfg.position_correction {
            let min_dist = cfg.min_pair_distance();
            for &b in &ctx.table.neighbors[p] {
                if b <= p {
                    continue;
                }
                if let Some(corr) = solve_distance_constraint(
                    ctx.positions[p],
                    ctx.positions[b],
                    vel.load(p),
                    vel.load(b),
                    particles.mass[p],
                    particles.mass[b],
                    min_dist,
                    dt,
                ) {
                    vel.add(p, corr.dv_a);
                    vel.add(b, corr.dv_b);
                    if corr.fallback {
                        fallback_events.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
        }
        for collider in &self.state.colliders {
            let v = vel.load(p);
            if let Some(corrected) = collider.resolve(ctx.positions[p], v, dt) {
                vel.store(p, corrected);
            }
        }
    }

    fn gauss_seidel_iteration(
        &self,
        ctx: &StepContext,
        vel: &AtomicVelocities,
        lambdas: &AtomicScalars,
        fallback_events: &AtomicUsize,
        cfg: &SolverConfig,
    ) {
        let sweep = |cell: &crate::particles::CellIndex| {
            for &p in &ctx.table.buckets[cell] {
                let lambda_p = lambdas.load(p);
                if let Some(update) = self.project_particle(ctx, p, vel, lambda_p, cfg) {
                    lambdas.store(p, lambda_p + update.delta_lambda);
                    vel.add(p, update.self_dv);
                    for (b, dv) in update.neighbor_dv {
                        vel.add(b, dv);
                    }
                }
            }
        };
        let aux_sweep = |cell: &crate::particles::CellIndex| {
            for &p in &ctx.table.buckets[cell] {
                self.project_auxiliary(ctx, p, vel, fallback_events, cfg);
            }
        };
        // Cells of one color are farther apart than the support radius, so
        // their particle sets and lambda writes are disjoint; only the
        // velocity scatter overlaps, which the atomic adds absorb.
        for cells in &ctx.table.cells_by_color {
            match self.pool.as_ref() {
                Some(pool) => pool.install(|| cells.par_iter().for_each(sweep)),
                None => cells.iter().for_each(sweep),
            }
        }
        for cells in &ctx.table.cells_by_color {
            match self.pool.as_ref() {
                Some(pool) => pool.install(|| cells.par_iter().for_each(aux_sweep)),
                None => cells.iter().for_each(aux_sweep),
            }
        }
    }

    fn jacobi_iteration(
        &self,
        ctx: &StepContext,
        vel: &AtomicVelocities,
        lambdas: &AtomicScalars,
        fallback_events: &AtomicUsize,
        cfg: &SolverConfig,
    ) {
        let n = vel.len();
        let dt = cfg.dt;
        let snapshot = AtomicVelocities::from_slice(&vel.to_vec());
        let updates = par_map(self.pool.as_ref(), n, |p| {
            self.project_particle(ctx, p, &snapshot, lambdas.load(p), cfg)
        });
        // Ordered serial application keeps the result independent of the
        // thread count, bit for bit.
        let omega = cfg.jacobi_relaxation;
        for (p, update) in updates.into_iter().enumerate() {
            if let Some(update) = update {
                lambdas.store(p, lambdas.load(p) + omega * update.delta_lambda);
                vel.add(p, update.self_dv.scale(omega));
                for (b, dv) in update.neighbor_dv {
                    vel.add(b, dv.scale(omega));
                }
            }
        }

        if cfg.position_correction {
            let particles = &self.state.particles;
            let min_dist = cfg.min_pair_distance();
            let v_aux = vel.to_vec();
            let pair_updates: Vec<Vec<(usize, PairCorrection)>> =
                par_map(self.pool.as_ref(), n, |p| {
                    ctx.table.neighbors[p]
                        .iter()
                        .filter(|&&b| b > p)
                        .filter_map(|&b| {
                            solve_distance_constraint(
                                ctx.positions[p],
                                ctx.positions[b],
                                v_aux[p],
                                v_aux[b],
                                particles.mass[p],
                                particles.mass[b],
                                min_dist,
                                dt,
                            )
                            .map(|corr| (b, corr))
                        })
                        .collect()
                });
            for (p, pairs) in pair_updates.into_iter().enumerate() {
                for (b, corr) in pairs {
                    vel.add(p, corr.dv_a);
                    vel.add(b, corr.dv_b);
                    if corr.fallback {
                        fallback_events.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
        }
        for p in 0..n {
            for collider in &self.state.colliders {
                let v = vel.load(p);
                if let Some(corrected) = collider.resolve(ctx.positions[p], v, dt) {
                    vel.store(p, corrected);
                }
            }
        }
    }
}

fn pin_2d(f: &mut Mat3) {
    f.m[0][2] = 0.0;
    f.m[1][2] = 0.0;
    f.m[2][0] = 0.0;
    f.m[2][1] = 0.0;
    f.m[2][2] = 1.0;
}
