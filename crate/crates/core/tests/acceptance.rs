//! Acceptance gate: one test per release criterion, each printing a single
//! PASS/FAIL line with its pinned tolerance. Run with `--nocapture` to see
//! the lines for passing tests as well.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xpbi::constitutive::{
    return_map, yield_value, ElasticParams, MaterialModel, PlasticModel,
};
use xpbi::kernels::{correction_matrix, kernel_gradient, KernelSpec};
use xpbi::oracles;
use xpbi::particles::{build_neighbor_table, ParticleSet};
use xpbi::scene_io::{bundled_scene, compute_metrics, parse_scene_str, SceneSpec};
use xpbi::solver::{
    PlasticityMode, SimState, Simulation, SolverBackend, SolverConfig, StepDiagnostics,
};
use xpbi::{Mat3, Scalar, Vec3};

fn report(id: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {id}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn scene(name: &str) -> SceneSpec {
    let text = bundled_scene(name).expect("bundled scene");
    parse_scene_str(text, Path::new(name)).expect("valid scene")
}

fn lattice(n: usize, spacing: Scalar, velocity: Vec3) -> ParticleSet {
    let mut points = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                points.push(Vec3::new(i as Scalar, j as Scalar, k as Scalar).scale(spacing));
            }
        }
    }
    let mut set = ParticleSet::default();
    set.seed(&points, velocity, spacing, 3, 1000.0, 0, 0.0);
    set
}

fn elastic_material(youngs: Scalar) -> MaterialModel<Scalar> {
    MaterialModel {
        density: 1000.0,
        elastic: ElasticParams::new(youngs, 0.3).unwrap(),
        plastic: PlasticModel::None,
    }
}

fn rotation(axis: Vec3, angle: Scalar) -> Mat3 {
    let a = axis.scale(1.0 / axis.norm());
    let (s, c) = angle.sin_cos();
    let k = Mat3::from_rows(
        Vec3::new(0.0, -a.z, a.y),
        Vec3::new(a.z, 0.0, -a.x),
        Vec3::new(-a.y, a.x, 0.0),
    );
    Mat3::identity() + k.scale(s) + (k * k).scale(1.0 - c)
}

fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let axis = Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-6 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        axis
    };
    rotation(axis, rng.gen_range(0.0..std::f64::consts::TAU))
}

fn random_f(rng: &mut impl Rng, min_sigma: Scalar, max_sigma: Scalar) -> Mat3 {
    let lo = min_sigma.ln();
    let hi = max_sigma.ln();
    let sigma = Vec3::new(
        rng.gen_range(lo..hi).exp(),
        rng.gen_range(lo..hi).exp(),
        rng.gen_range(lo..hi).exp(),
    );
    random_rotation(rng) * Mat3::from_diag(sigma) * random_rotation(rng).transpose()
}

/// Criterion 1: analytic constraint gradients against central differences.
#[test]
fn criterion_1_fd_gradient_check() {
    let start = Instant::now();
    let r = oracles::fd_gradient_check(10, 100, oracles::FD_STEP, 99);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = r.passed() && elapsed < 10.0;
    report(
        "1 fd_gradient_check",
        pass,
        &format!(
            "max rel error {:.3e} <= 1e-4, {} samples, {elapsed:.1}s < 10s",
            r.max_error, r.samples
        ),
    );
    assert!(pass, "max error {:.3e}, {elapsed:.1}s", r.max_error);
}

/// Criterion 2: corrected velocity gradients reproduce affine Jacobians,
/// including one-sided boundary neighborhoods.
#[test]
fn criterion_2_linear_field_consistency() {
    let start = Instant::now();
    let (r, uncorrected) = oracles::linear_field_consistency(120, 10, 7);

    // Explicit one-sided case: a half-space lattice, probed at the surface.
    let spacing = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut points = Vec::new();
    for i in 0..7 {
        for j in 0..4 {
            for k in 0..7 {
                points.push(Vec3::new(
                    i as Scalar * spacing + rng.gen_range(-0.01..0.01),
                    j as Scalar * spacing + if j == 0 { 0.0 } else { rng.gen_range(-0.01..0.01) },
                    k as Scalar * spacing + rng.gen_range(-0.01..0.01),
                ));
            }
        }
    }
    let probe = points
        .iter()
        .position(|p| p.y == 0.0 && (p.x - 3.0 * spacing).abs() < spacing && (p.z - 3.0 * spacing).abs() < spacing)
        .unwrap();
    let mut set = ParticleSet::default();
    set.seed(&points, Vec3::zero(), spacing, 3, 1000.0, 0, 0.0);
    let kernel = KernelSpec::new(spacing, 3);
    let table = build_neighbor_table(&points, kernel.support, 3);
    let samples: Vec<(Vec3, Scalar)> = table.neighbors[probe]
        .iter()
        .map(|&b| (points[b], set.rest_volume[b]))
        .collect();
    let lp = correction_matrix(&kernel, points[probe], &samples);
    let a = Mat3::from_rows(
        Vec3::new(0.4, -0.2, 0.7),
        Vec3::new(0.1, 0.9, -0.3),
        Vec3::new(-0.6, 0.2, 0.5),
    );
    let mut grad = Mat3::zero();
    for &b in &table.neighbors[probe] {
        let dv = a.mul_vec(points[b]) - a.mul_vec(points[probe]);
        grad += dv
            .outer(lp.mul_vec(kernel_gradient(&kernel, points[probe], points[b])))
            .scale(set.rest_volume[b]);
    }
    let one_sided_err = (grad - a).frobenius_norm() / a.frobenius_norm();

    let elapsed = start.elapsed().as_secs_f64();
    let pass = r.passed() && one_sided_err <= 1e-9 && elapsed < 5.0;
    report(
        "2 linear_field_consistency",
        pass,
        &format!(
            "interior {:.3e}, one-sided {:.3e} <= 1e-9 (uncorrected {:.1e}), {elapsed:.1}s < 5s",
            r.max_error, one_sided_err, uncorrected
        ),
    );
    assert!(pass, "interior {:.3e}, one-sided {one_sided_err:.3e}", r.max_error);
}

/// Criterion 3: return-map consistency over 1e4 random trials per model,
/// plus the rate-dependent limits of Herschel-Bulkley.
#[test]
fn criterion_3_return_map_suite() {
    let start = Instant::now();
    let trials = 10_000;
    let elastic = ElasticParams::new(1e5, 0.3).unwrap();
    let material = |plastic| MaterialModel {
        density: 1000.0,
        elastic,
        plastic,
    };
    let models: Vec<(&str, MaterialModel<Scalar>, Scalar, Scalar, Scalar)> = vec![
        ("vm", material(PlasticModel::VonMises { yield_stress: 1e3 }), 0.0, 1e-2, 1e2),
        (
            "dp",
            material(PlasticModel::DruckerPrager {
                friction_angle_deg: 30.0,
                cohesion: 0.0,
            }),
            0.0,
            1e-2,
            1e2,
        ),
        (
            "nacc",
            material(PlasticModel::Nacc {
                alpha0: -0.01,
                beta: 0.5,
                xi: 1.0,
                m: 2.36,
            }),
            -0.01,
            1e-1,
            1e1,
        ),
        (
            "snow",
            material(PlasticModel::SnowClamp {
                crit_compression: 0.025,
                crit_stretch: 0.0075,
                hardening: 10.0,
            }),
            1.0,
            0.5,
            2.0,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let mut worst_idem: Scalar = 0.0;
    let mut worst_yield: Scalar = 0.0;
    let mut worst_equiv: Scalar = 0.0;
    let mut worst_det: Scalar = 0.0;
    for (name, model, state, lo, hi) in &models {
        for _ in 0..trials {
            let f = random_f(&mut rng, *lo, *hi);
            let z = return_map(model, &f, 1e-3, *state);
            let scale = z.frobenius_norm().max(1.0);
            let z2 = return_map(model, &z, 1e-3, *state);
            worst_idem = worst_idem.max((z2 - z).frobenius_norm() / scale);
            worst_yield = worst_yield.max(yield_value(model, &z, *state).unwrap().max(0.0));
            let r = random_rotation(&mut rng);
            let zr = return_map(model, &(r * f), 1e-3, *state);
            worst_equiv = worst_equiv.max((zr - r * z).frobenius_norm() / scale);
            if *name == "vm" {
                worst_det =
                    worst_det.max((z.determinant() - f.determinant()).abs() / f.determinant().abs());
            }
        }
    }
    // Herschel-Bulkley is checked through its dt limits instead of
    // idempotence: elastic at dt -> 0, Von Mises at dt -> inf.
    let hb = material(PlasticModel::HerschelBulkley {
        yield_stress: 200.0,
        power: 1.7,
        viscosity: 10.0,
    });
    let vm = material(PlasticModel::VonMises { yield_stress: 200.0 });
    let mut worst_hb: Scalar = 0.0;
    for _ in 0..trials {
        let f = random_f(&mut rng, 0.5, 2.0);
        let z0 = return_map(&hb, &f, 1e-8, 0.0);
        worst_hb = worst_hb.max((z0 - f).frobenius_norm() / f.frobenius_norm() / 1e-4);
        let zinf = return_map(&hb, &f, 1e8, 0.0);
        let zvm = return_map(&vm, &f, 1e8, 0.0);
        worst_hb =
            worst_hb.max((zinf - zvm).frobenius_norm() / zvm.frobenius_norm().max(1.0) / 1e-6);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_idem <= 1e-10
        && worst_yield <= 1e-8
        && worst_equiv <= 1e-8
        && worst_det <= 1e-8
        && worst_hb <= 1.0
        && elapsed < 30.0;
    report(
        "3 return_map_suite",
        pass,
        &format!(
            "idempotence {worst_idem:.1e} <= 1e-10, yield {worst_yield:.1e} <= 1e-8, \
             equivariance {worst_equiv:.1e} <= 1e-8, vm det {worst_det:.1e} <= 1e-8, \
             hb limits ratio {worst_hb:.2} <= 1, {elapsed:.1}s < 30s"
        ),
    );
    assert!(pass);
}

/// Criterion 4: rigid translation leaves the deformation gradient at
/// identity and the constraint residual at zero.
#[test]
fn criterion_4_rigid_translation() {
    let particles = lattice(4, 0.05, Vec3::new(0.3, -0.2, 0.1));
    let state = SimState {
        particles,
        materials: vec![elastic_material(1e5)],
        ..Default::default()
    };
    let config = SolverConfig {
        dt: 1e-4,
        particle_radius: 0.05,
        gravity: Vec3::zero(),
        ..Default::default()
    };
    let mut sim = Simulation::new(state, config).unwrap();
    let mut last: Option<StepDiagnostics> = None;
    for _ in 0..100 {
        last = Some(sim.step().unwrap());
    }
    let max_f_dev = sim
        .state
        .particles
        .def_grad
        .iter()
        .map(|f| (*f - Mat3::identity()).frobenius_norm())
        .fold(0.0, Scalar::max);
    let residual = last.unwrap().residual_initial;
    let pass = max_f_dev <= 1e-10 && residual <= 1e-10;
    report(
        "4 rigid_translation",
        pass,
        &format!("max |F - I| {max_f_dev:.1e} <= 1e-10, residual {residual:.1e} <= 1e-10"),
    );
    assert!(pass);
}

/// Residuals of the first non-trivial step: step 0 starts from the rest
/// state (F = I, zero velocities) where every residual is identically zero,
/// so the bend developed by step 1 is the first real solve.
fn bend_step_residuals(name: &str, backend: SolverBackend) -> Vec<Scalar> {
    let mut spec = scene(name);
    spec.solver.backend = backend;
    spec.solver.iterations = 50;
    let state = spec.build_state();
    let mut sim = Simulation::new(state, spec.solver).unwrap();
    if sim.step().is_err() {
        return Vec::new();
    }
    sim.step().map(|d| d.residuals).unwrap_or_default()
}

fn final_and_peak(r: &[Scalar]) -> (Scalar, Scalar) {
    if r.is_empty() {
        return (Scalar::INFINITY, Scalar::INFINITY);
    }
    (*r.last().unwrap(), r.iter().copied().fold(0.0, Scalar::max))
}

/// Criterion 5: stiffness-dependent convergence of the two backends on the
/// clamped cantilever. A backend fails when it leaves the relative residual
/// at or above 1e-2 after 50 iterations, amplifies it past 10x the initial
/// value mid-solve, or produces a non-finite state.
#[test]
fn criterion_5_cantilever_convergence() {
    let start = Instant::now();
    let gs4 = bend_step_residuals("cantilever-e1e4", SolverBackend::ColoredGaussSeidel);
    let monotone =
        !gs4.is_empty() && gs4.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    let (gs4_final, _) = final_and_peak(&gs4);
    let j4 = bend_step_residuals("cantilever-e1e4", SolverBackend::Jacobi);
    let (j4_final, j4_peak) = final_and_peak(&j4);
    let j6 = bend_step_residuals("cantilever-e1e6", SolverBackend::Jacobi);
    let (j6_final, j6_peak) = final_and_peak(&j6);
    let elapsed = start.elapsed().as_secs_f64();
    let jacobi_ok = |final_r: Scalar, peak: Scalar| final_r < 1e-2 && peak <= 10.0;
    let pass = monotone
        && gs4_final < 1e-2
        && jacobi_ok(j4_final, j4_peak)
        && !jacobi_ok(j6_final, j6_peak)
        && elapsed < 120.0;
    report(
        "5 cantilever_convergence",
        pass,
        &format!(
            "gs E=1e4 monotone={monotone} final {gs4_final:.2e} < 1e-2; \
             jacobi E=1e4 final {j4_final:.2e} peak {j4_peak:.1e}; \
             jacobi E=1e6 diverges (peak {j6_peak:.1e}, final {j6_final:.1e}); {elapsed:.1}s < 120s"
        ),
    );
    assert!(pass);
}

/// Criterion 6: Drucker-Prager sand column (friction angle 30 deg, zero
/// cohesion) settles with a free-surface slope of 30 +- 5 deg.
#[test]
fn criterion_6_sand_friction_angle() {
    let start = Instant::now();
    let spec = scene("sand-column");
    let state = spec.build_state();
    let count = state.particles.len();
    let steps = (spec.duration / spec.solver.dt).round() as usize;
    let mut sim = Simulation::new(state, spec.solver).unwrap();
    for _ in 0..steps {
        sim.step().unwrap();
    }
    let positions = &sim.state.particles.positions;
    let speeds: Scalar = sim
        .state
        .particles
        .velocities
        .iter()
        .map(|v| v.norm())
        .sum::<Scalar>()
        / count as Scalar;

    // Surface profile: highest particle per radial bin, fit over the flank
    // (between two particle diameters above the floor and 85% of the peak).
    let (cx, cz) = positions
        .iter()
        .fold((0.0, 0.0), |(x, z), p| (x + p.x, z + p.z));
    let (cx, cz) = (cx / count as Scalar, cz / count as Scalar);
    let radial: Vec<(Scalar, Scalar)> = positions
        .iter()
        .map(|p| (((p.x - cx).powi(2) + (p.z - cz).powi(2)).sqrt(), p.y))
        .collect();
    let r_max = radial.iter().map(|&(r, _)| r).fold(0.0, Scalar::max);
    let y_max = radial.iter().map(|&(_, y)| y).fold(0.0, Scalar::max);
    let bins = 26;
    let mut surface = Vec::new();
    for i in 0..bins {
        let lo = r_max * i as Scalar / bins as Scalar;
        let hi = r_max * (i + 1) as Scalar / bins as Scalar;
        let members: Vec<Scalar> = radial
            .iter()
            .filter(|&&(r, _)| r >= lo && r < hi)
            .map(|&(_, y)| y)
            .collect();
        if members.len() >= 4 {
            let top = members.iter().fold(0.0, |a: Scalar, &b| a.max(b));
            surface.push(((lo + hi) / 2.0, top));
        }
    }
    let flank: Vec<(Scalar, Scalar)> = surface
        .iter()
        .copied()
        .filter(|&(_, y)| y >= 0.006 && y <= 0.85 * y_max)
        .collect();
    let n = flank.len() as Scalar;
    let (sx, sy): (Scalar, Scalar) = flank.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (sxx, sxy): (Scalar, Scalar) = flank
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x * x, b + x * y));
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let angle = (-slope).atan().to_degrees();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = count >= 4000 && speeds < 1e-3 && (angle - 30.0).abs() <= 5.0 && elapsed < 300.0;
    report(
        "6 sand_friction_angle",
        pass,
        &format!(
            "{count} particles, settled (mean speed {speeds:.1e}), slope {angle:.1} deg vs 30 +- 5, \
             {elapsed:.0}s < 300s{}",
            if (angle - 30.0).abs() > 5.0 {
                "; known model limit: the zero-dilatancy cone arrests dynamic deposition \
                 near atan(sin(phi)) ~ 26.6 deg, minus toe resolution effects"
            } else {
                ""
            }
        ),
    );
    assert!(pass, "slope {angle:.1} deg (tolerance 25..35), settled speed {speeds:.1e}");
}

fn run_frames_with(
    mut spec: SceneSpec,
    tweak: impl Fn(&mut SolverConfig),
) -> (Vec<Vec<Vec3>>, Scalar) {
    tweak(&mut spec.solver);
    let state = spec.build_state();
    let spacing0 = {
        let table = build_neighbor_table(&state.particles.positions, 4.0 * spec.solver.particle_radius, 3);
        compute_metrics(&state.particles, &table).nn_mean
    };
    let steps_per_frame = spec.steps_per_frame();
    let frames = spec.total_frames();
    let mut sim = Simulation::new(state, spec.solver.clone()).unwrap();
    let mut out = vec![sim.state.particles.positions.clone()];
    for _ in 0..frames {
        for _ in 0..steps_per_frame {
            sim.step().unwrap();
        }
        out.push(sim.state.particles.positions.clone());
    }
    (out, spacing0)
}

/// Criterion 7: the pair-distance correction keeps the two-block collision
/// uniformly sampled; without it the distribution degrades.
#[test]
fn criterion_7_distribution_bounds() {
    let start = Instant::now();
    let spec = scene("two-block-collision");
    let radius = spec.solver.particle_radius;
    let stats = |frames: &[Vec<Vec3>], spacing0: Scalar| -> (bool, Scalar, Scalar) {
        let mut worst_mean: Scalar = 0.0;
        let mut worst_std: Scalar = 0.0;
        let mut ok = true;
        for frame in frames {
            let mut set = ParticleSet::default();
            set.seed(frame, Vec3::zero(), radius, 3, 1000.0, 0, 0.0);
            let table = build_neighbor_table(frame, 4.0 * radius, 3);
            let m = compute_metrics(&set, &table);
            worst_mean = worst_mean.max((m.nn_mean - spacing0).abs() / spacing0);
            worst_std = worst_std.max(m.nn_std / spacing0);
            if (m.nn_mean - spacing0).abs() > 0.25 * spacing0 || m.nn_std > 0.15 * spacing0 {
                ok = false;
            }
        }
        (ok, worst_mean, worst_std)
    };
    let (frames_on, spacing0) = run_frames_with(spec.clone(), |_| {});
    let (ok_on, mean_on, std_on) = stats(&frames_on, spacing0);
    let (frames_off, spacing0_off) = run_frames_with(spec, |c| c.position_correction = false);
    let (ok_off, mean_off, std_off) = stats(&frames_off, spacing0_off);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = ok_on && !ok_off && elapsed < 300.0;
    report(
        "7 distribution_bounds",
        pass,
        &format!(
            "with correction: |mean drift| {:.0}% <= 25%, std {:.2} <= 0.15 spacing; \
             without: violated={} (drift {:.0}%, std {:.2}); {elapsed:.0}s < 300s",
            100.0 * mean_on,
            std_on,
            !ok_off,
            100.0 * mean_off,
            std_off
        ),
    );
    assert!(pass);
}

/// Criterion 8a: on the notched block, the operator-split comparator stores
/// visibly more peak elastic energy than the in-loop return map.
#[test]
fn criterion_8a_energy_overshoot() {
    let start = Instant::now();
    let spec = scene("notched-block");
    let peak = |mode: PlasticityMode| -> Scalar {
        let mut spec = spec.clone();
        spec.solver.plasticity = mode;
        let state = spec.build_state();
        let steps = (spec.duration / spec.solver.dt).round() as usize;
        let mut sim = Simulation::new(state, spec.solver).unwrap();
        let mut peak: Scalar = 0.0;
        for _ in 0..steps {
            sim.step().unwrap();
            peak = peak.max(oracles::elastic_energy(&sim.state));
        }
        peak
    };
    let implicit = peak(PlasticityMode::Implicit);
    let semi = peak(PlasticityMode::SemiImplicit);
    let ratio = semi / implicit;
    let elapsed = start.elapsed().as_secs_f64();
    let pass = ratio >= 1.2;
    report(
        "8a energy_overshoot",
        pass,
        &format!(
            "peak elastic energy semi {semi:.3e} vs implicit {implicit:.3e}, ratio {ratio:.2} >= 1.2, \
             {elapsed:.0}s"
        ),
    );
    assert!(pass, "ratio {ratio:.2}");
}

/// Criterion 8b: timestep sensitivity of the snow impact. In-loop
/// plasticity tracks its own fine-dt solution more closely than the
/// operator split tracks its own.
#[test]
fn criterion_8b_snow_dt_study() {
    let start = Instant::now();
    let base = scene("snow-dt-study");
    let run = |mode: PlasticityMode, dt: Scalar| -> Vec<Vec<Vec3>> {
        let mut spec = base.clone();
        spec.solver.plasticity = mode;
        spec.solver.dt = dt;
        let (frames, _) = run_frames_with(spec, |_| {});
        frames
    };
    let diag = {
        let state = base.build_state();
        let mut lo = Vec3::splat(Scalar::INFINITY);
        let mut hi = Vec3::splat(Scalar::NEG_INFINITY);
        for p in &state.particles.positions {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (hi - lo).norm()
    };
    let cross_dt = |mode: PlasticityMode| -> Scalar {
        let fine = run(mode, 1e-4);
        let coarse = run(mode, 1e-3);
        let frames = fine.len().min(coarse.len());
        // Skip frame 0 (identical initial states).
        (1..frames)
            .map(|i| oracles::position_rms(&fine[i], &coarse[i], diag))
            .sum::<Scalar>()
            / (frames - 1) as Scalar
    };
    let implicit = cross_dt(PlasticityMode::Implicit);
    let semi = cross_dt(PlasticityMode::SemiImplicit);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = implicit < semi && elapsed < 600.0;
    report(
        "8b snow_dt_study",
        pass,
        &format!(
            "cross-dt rms implicit {implicit:.3e} < semi-implicit {semi:.3e}, {elapsed:.0}s < 600s"
        ),
    );
    assert!(pass, "implicit {implicit:.3e} vs semi {semi:.3e}");
}

/// Criterion 9: serial determinism, multithreaded robustness, and bounded
/// serial/parallel divergence.
#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let run_steps = |threads: usize, steps: usize| -> Vec<Vec3> {
        let mut spec = scene("snow-dt-study");
        spec.solver.threads = threads;
        let state = spec.build_state();
        let mut sim = Simulation::new(state, spec.solver).unwrap();
        for _ in 0..steps {
            sim.step().unwrap();
        }
        sim.state.particles.positions.clone()
    };
    let a = run_steps(1, 50);
    let b = run_steps(1, 50);
    let bitwise = a == b;

    let mut all_finite = true;
    for (name, _) in xpbi::scene_io::bundled_scenes() {
        let mut spec = scene(name);
        spec.solver.threads = 4;
        let state = spec.build_state();
        let mut sim = Simulation::new(state, spec.solver).unwrap();
        for _ in 0..5 {
            if sim.step().is_err() {
                all_finite = false;
            }
        }
        if !sim.state.particles.all_finite() {
            all_finite = false;
        }
    }

    let serial = run_steps(1, 100);
    let parallel = run_steps(4, 100);
    let rms = oracles::position_rms(&serial, &parallel, 1.0);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = bitwise && all_finite && rms <= 1e-6;
    report(
        "9 determinism",
        pass,
        &format!(
            "serial reruns bitwise={bitwise}; bundled scenes x5 steps at 4 threads finite={all_finite}; \
             serial-vs-parallel rms {rms:.1e} <= 1e-6; {elapsed:.0}s"
        ),
    );
    assert!(pass);
}

/// Criterion 10: linear momentum is conserved without gravity or colliders.
#[test]
fn criterion_10_momentum() {
    let spacing = 0.05;
    let mut particles = lattice(3, spacing, Vec3::new(0.5, 0.0, 0.0));
    let other = lattice(3, spacing, Vec3::new(-0.5, 0.0, 0.0));
    let offset = Vec3::new(3.5 * spacing, 0.0, 0.0);
    let extra: Vec<Vec3> = other.positions.iter().map(|&p| p + offset).collect();
    particles.seed(&extra, Vec3::new(-0.5, 0.0, 0.0), spacing, 3, 1000.0, 0, 0.0);
    let state = SimState {
        particles,
        materials: vec![elastic_material(1e5)],
        ..Default::default()
    };
    let config = SolverConfig {
        dt: 1e-3,
        particle_radius: spacing,
        gravity: Vec3::zero(),
        iterations: 6,
        ..Default::default()
    };
    let momentum = |s: &SimState| -> Vec3 {
        let mut total = Vec3::zero();
        for p in 0..s.particles.len() {
            total += s.particles.velocities[p].scale(s.particles.mass[p]);
        }
        total
    };
    let scale: Scalar = state
        .particles
        .velocities
        .iter()
        .zip(&state.particles.mass)
        .map(|(v, m)| m * v.norm())
        .sum();
    let mut sim = Simulation::new(state, config).unwrap();
    let mut prev = momentum(&sim.state);
    let mut worst: Scalar = 0.0;
    for _ in 0..100 {
        sim.step().unwrap();
        let now = momentum(&sim.state);
        worst = worst.max((now - prev).norm() / scale);
        prev = now;
    }
    let pass = worst <= 1e-10;
    report(
        "10 momentum_conservation",
        pass,
        &format!("max per-step relative drift {worst:.1e} <= 1e-10 over 100 steps"),
    );
    assert!(pass, "drift {worst:.1e}");
}
