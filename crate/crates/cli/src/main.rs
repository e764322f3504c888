//! Command-line front end: scene runs, validation oracles, frame metrics,
//! and timestep/iteration studies.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use xpbi::constitutive::{return_map, yield_value, PlasticModel};
use xpbi::oracles::{self, OracleReport, ORACLE_CSV_HEADER};
use xpbi::particles::build_neighbor_table;
use xpbi::scene_io::{
    self, bundled_scene, bundled_scenes, compute_metrics, diagnostics_csv_rows, metrics_csv_row,
    parse_scene, parse_scene_str, write_frame, Frame, FrameFormat, SceneSpec,
    DIAGNOSTICS_CSV_HEADER, METRICS_CSV_HEADER,
};
use xpbi::solver::{SimState, Simulation, SolverBackend, SolverConfig, StepDiagnostics};
use xpbi::{Mat3, Scalar, Vec3};

#[derive(Parser)]
#[command(name = "xpbi", version, about = "Meshless elastoplasticity solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene and write frames plus metrics.
    Run(RunArgs),
    /// Run the validation oracles; exits non-zero if any fail.
    Verify(VerifyArgs),
    /// Recompute particle metrics from the frames of a finished run.
    Metrics(MetricsArgs),
    /// Sweep timestep or iteration count and summarize convergence.
    Study(StudyArgs),
    /// List the bundled scenes.
    Scenes,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Gs,
    Jacobi,
}

#[derive(Args)]
struct SceneOverrides {
    /// Scene file path or bundled scene name.
    #[arg(long)]
    scene: String,
    /// Override the solver timestep (seconds).
    #[arg(long)]
    dt: Option<Scalar>,
    /// Override the solver iteration count.
    #[arg(long)]
    iters: Option<usize>,
    /// Override the constraint sweep backend.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Worker threads: 1 = serial, 0 = all cores. Defaults to the
    /// XPBI_THREADS environment variable, then the scene value.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the sampling seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scene: SceneOverrides,
    /// Parent directory for the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Cap the number of output frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Write frames as CSV instead of the binary format.
    #[arg(long)]
    csv_frames: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Also write the oracle report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Base seed for randomized oracles.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Args)]
struct MetricsArgs {
    /// Run directory produced by `xpbi run` (contains frames/).
    #[arg(long)]
    run: PathBuf,
    /// Output CSV path; defaults to <run>/metrics-recomputed.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Neighbor support radius; defaults to the mean nearest-neighbor
    /// distance of the first frame times 4.
    #[arg(long)]
    support: Option<Scalar>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    scene: SceneOverrides,
    /// Output CSV path.
    #[arg(long, default_value = "study.csv")]
    out: PathBuf,
    /// Comma-separated timesteps to sweep; the smallest is the reference.
    #[arg(long, value_delimiter = ',')]
    dts: Vec<Scalar>,
    /// Comma-separated iteration counts to sweep; the largest is the
    /// reference.
    #[arg(long, value_delimiter = ',')]
    iters_list: Vec<usize>,
    /// Cap the number of simulated frames per run.
    #[arg(long)]
    frames: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args).map(|_| true),
        Command::Verify(args) => cmd_verify(args),
        Command::Metrics(args) => cmd_metrics(args).map(|_| true),
        Command::Study(args) => cmd_study(args).map(|_| true),
        Command::Scenes => {
            for (name, _) in bundled_scenes() {
                println!("{name}");
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            // Scene and argument problems are usage errors (2); everything
            // that fails after a valid setup is a runtime error (1).
            if err.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(message.into()))
}

/// Resolve a `--scene` value to a parsed spec: file path first, bundled
/// scene name as fallback.
fn load_scene(name: &str) -> Result<SceneSpec> {
    let path = Path::new(name);
    if path.exists() {
        return parse_scene(path).map_err(|e| usage(e.to_string()));
    }
    if let Some(text) = bundled_scene(name) {
        return parse_scene_str(text, Path::new(name)).map_err(|e| usage(e.to_string()));
    }
    let known: Vec<&str> = bundled_scenes().iter().map(|(n, _)| *n).collect();
    Err(usage(format!(
        "scene '{name}' is neither a file nor a bundled scene; bundled: {}",
        known.join(", ")
    )))
}

fn apply_overrides(spec: &mut SceneSpec, over: &SceneOverrides) -> Result<()> {
    if let Some(dt) = over.dt {
        spec.solver.dt = dt;
    }
    if let Some(iters) = over.iters {
        spec.solver.iterations = iters;
    }
    if let Some(backend) = over.backend {
        spec.solver.backend = match backend {
            BackendArg::Gs => SolverBackend::ColoredGaussSeidel,
            BackendArg::Jacobi => SolverBackend::Jacobi,
        };
    }
    let env_threads = std::env::var("XPBI_THREADS")
        .ok()
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| usage(format!("XPBI_THREADS must be an integer, got '{v}'")))
        })
        .transpose()?;
    if let Some(threads) = over.threads.or(env_threads) {
        spec.solver.threads = threads;
    }
    if let Some(seed) = over.seed {
        spec.seed = seed;
    }
    spec.solver.validate().map_err(|e| usage(e.to_string()))?;
    Ok(())
}

/// Create `<parent>/<scene>-<unix-seconds>[-<n>]`, never reusing an
/// existing directory.
fn create_run_dir(parent: &Path, scene_name: &str) -> Result<PathBuf> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    for attempt in 0..1000 {
        let name = if attempt == 0 {
            format!("{scene_name}-{stamp}")
        } else {
            format!("{scene_name}-{stamp}-{attempt}")
        };
        let dir = parent.join(name);
        match fs::create_dir_all(parent).and_then(|_| fs::create_dir(&dir)) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).context(format!("creating run directory in {parent:?}")),
        }
    }
    bail!("could not find a free run directory name under {parent:?}");
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut spec = load_scene(&args.scene.scene)?;
    apply_overrides(&mut spec, &args.scene)?;
    let run_dir = create_run_dir(&args.out, &spec.name)?;
    let frames_dir = run_dir.join("frames");
    fs::create_dir(&frames_dir)?;

    let state = spec.build_state();
    let particle_count = state.particles.len();
    let format = if args.csv_frames {
        FrameFormat::Csv
    } else {
        FrameFormat::Binary
    };
    let ext = if args.csv_frames { "csv" } else { "bin" };
    let steps_per_frame = spec.steps_per_frame();
    let total_frames = args
        .frames
        .map(|n| n.min(spec.total_frames()))
        .unwrap_or_else(|| spec.total_frames());

    let mut sim = Simulation::new(state, spec.solver.clone())?;
    let mut metrics_csv = vec![METRICS_CSV_HEADER.to_string()];
    let mut diag_csv = vec![DIAGNOSTICS_CSV_HEADER.to_string()];
    let mut emitted = Vec::new();
    let start = Instant::now();

    let initial = Frame::from_state(&sim.state, true, true);
    let first_path = frames_dir.join(format!("frame_00000.{ext}"));
    write_frame(&initial, &first_path, format)?;
    emitted.push(rel_path(&run_dir, &first_path));
    append_metrics(&mut metrics_csv, &sim.state, None);

    for frame_index in 1..=total_frames {
        let mut last_diag: Option<StepDiagnostics> = None;
        for _ in 0..steps_per_frame {
            let diag = sim.step().map_err(|e| anyhow!("step failed: {e}"))?;
            diag_csv.push(diagnostics_csv_rows(&diag));
            last_diag = Some(diag);
        }
        let frame = Frame::from_state(&sim.state, true, true);
        let path = frames_dir.join(format!("frame_{frame_index:05}.{ext}"));
        write_frame(&frame, &path, format)?;
        emitted.push(rel_path(&run_dir, &path));
        append_metrics(&mut metrics_csv, &sim.state, last_diag.as_ref());
    }

    let metrics_path = run_dir.join("metrics.csv");
    fs::write(&metrics_path, metrics_csv.join("\n") + "\n")?;
    emitted.push(rel_path(&run_dir, &metrics_path));
    let diag_path = run_dir.join("diagnostics.csv");
    fs::write(&diag_path, diag_csv.join("\n") + "\n")?;
    emitted.push(rel_path(&run_dir, &diag_path));

    let manifest = serde_json::json!({
        "scene": args.scene.scene,
        "scene_name": spec.name,
        "seed": spec.seed,
        "solver": spec.solver,
        "particles": particle_count,
        "frames": total_frames,
        "steps_per_frame": steps_per_frame,
        "frame_format": ext,
        "wall_ms": start.elapsed().as_millis() as u64,
        "files": emitted,
    });
    let manifest_path = run_dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;

    println!(
        "{}: {} particles, {} frames ({} steps each) in {:.1}s -> {}",
        spec.name,
        particle_count,
        total_frames,
        steps_per_frame,
        start.elapsed().as_secs_f64(),
        run_dir.display()
    );
    Ok(())
}

fn rel_path(base: &Path, path: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

fn append_metrics(rows: &mut Vec<String>, state: &SimState, diag: Option<&StepDiagnostics>) {
    let support = 4.0 * mean_spacing(state);
    let table = build_neighbor_table(&state.particles.positions, support, 3);
    let metrics = compute_metrics(&state.particles, &table);
    let residual = diag
        .and_then(|d| d.residuals.last().copied())
        .unwrap_or(0.0);
    rows.push(metrics_csv_row(state.step_index, state.time, &metrics, residual));
}

fn mean_spacing(state: &SimState) -> Scalar {
    let n = state.particles.len();
    if n == 0 {
        return 1.0;
    }
    state
        .particles
        .rest_volume
        .iter()
        .map(|v| v.cbrt())
        .sum::<Scalar>()
        / n as Scalar
}

fn cmd_verify(args: VerifyArgs) -> Result<bool> {
    let mut reports = Vec::new();
    reports.push(oracles::fd_gradient_check(10, 100, oracles::FD_STEP, args.seed));
    let (linear, _uncorrected) = oracles::linear_field_consistency(120, 10, args.seed ^ 1);
    reports.push(linear);
    reports.push(neighbor_oracle(args.seed ^ 2));
    reports.push(return_map_oracle(args.seed ^ 3));
    reports.push(momentum_oracle());
    reports.push(comparator_oracle());

    for report in &reports {
        println!("{}", report.text_line());
    }
    let all_pass = reports.iter().all(OracleReport::passed);
    if let Some(csv) = &args.csv {
        let mut text = String::from(ORACLE_CSV_HEADER);
        for report in &reports {
            text.push('\n');
            text.push_str(&report.csv_row());
        }
        text.push('\n');
        fs::write(csv, text)?;
    }
    println!("verify: {}", if all_pass { "all pass" } else { "FAILURES" });
    Ok(all_pass)
}

/// Grid neighbor lists versus the O(n^2) reference on random clouds.
fn neighbor_oracle(seed: u64) -> OracleReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: Scalar = 0.0;
    let mut samples = 0;
    for _ in 0..5 {
        let positions: Vec<Vec3> = (0..500)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                )
            })
            .collect();
        let k = 0.1;
        let table = build_neighbor_table(&positions, k, 3);
        let brute = oracles::brute_force_neighbors(&positions, k);
        if table.neighbors != brute {
            max_error = 1.0;
        }
        samples += positions.len();
    }
    OracleReport {
        name: "neighbor_brute_force".into(),
        max_error,
        tolerance: 0.0,
        samples,
    }
}

/// Return-map idempotence and post-projection feasibility across all
/// plastic models on random trial states.
fn return_map_oracle(seed: u64) -> OracleReport {
    use rand::{Rng, SeedableRng};
    use xpbi::constitutive::{ElasticParams, MaterialModel};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let elastic = ElasticParams::new(1e5, 0.3).unwrap();
    let models: Vec<(PlasticModel<Scalar>, Scalar)> = vec![
        (PlasticModel::VonMises { yield_stress: 1e3 }, 0.0),
        (
            PlasticModel::DruckerPrager {
                friction_angle_deg: 30.0,
                cohesion: 0.0,
            },
            0.0,
        ),
        (
            PlasticModel::Nacc {
                alpha0: -0.01,
                beta: 0.5,
                xi: 3.0,
                m: 1.2,
            },
            -0.01,
        ),
        (
            PlasticModel::HerschelBulkley {
                yield_stress: 1e3,
                power: 0.5,
                viscosity: 1.0,
            },
            0.0,
        ),
        (
            PlasticModel::SnowClamp {
                crit_compression: 0.025,
                crit_stretch: 0.0075,
                hardening: 10.0,
            },
            1.0,
        ),
    ];
    let mut max_error: Scalar = 0.0;
    let mut samples = 0;
    for (plastic, state0) in models {
        let material = MaterialModel {
            density: 1000.0,
            elastic: elastic.clone(),
            plastic,
        };
        for _ in 0..1000 {
            let mut f = Mat3::identity();
            for i in 0..3 {
                for j in 0..3 {
                    f.m[i][j] += rng.gen_range(-0.2..0.2);
                }
            }
            let dt = 1e-3;
            let projected = return_map(&material, &f, dt, state0);
            if matches!(material.plastic, PlasticModel::HerschelBulkley { .. }) {
                // Viscoplastic flow relaxes further on each application;
                // require monotone non-increasing deviatoric strain instead
                // of idempotence.
                let dev = |m: &Mat3| {
                    let (_, eps) = xpbi::constitutive::hencky(m);
                    let tr = (eps.x + eps.y + eps.z) / 3.0;
                    (Vec3::new(eps.x - tr, eps.y - tr, eps.z - tr)).norm()
                };
                let again = return_map(&material, &projected, dt, state0);
                max_error = max_error.max((dev(&again) - dev(&projected)).max(0.0));
            } else {
                let again = return_map(&material, &projected, dt, state0);
                max_error = max_error.max((again - projected).frobenius_norm() / 3.0);
                let y = yield_value(&material, &projected, state0).unwrap();
                max_error = max_error.max(y.max(0.0));
            }
            samples += 1;
        }
    }
    OracleReport {
        name: "return_map_consistency".into(),
        max_error,
        tolerance: 1e-8,
        samples,
    }
}

/// Relative linear-momentum drift of a free elastic blob with gravity and
/// smoothing off.
fn momentum_oracle() -> OracleReport {
    let (state, config) = elastic_block();
    let momentum = |s: &SimState| -> Vec3 {
        let mut p = Vec3::zero();
        for i in 0..s.particles.len() {
            p += s.particles.velocities[i].scale(s.particles.mass[i]);
        }
        p
    };
    let reference = momentum(&state).norm().max(1e-12);
    let mut sim = Simulation::new(state, config).unwrap();
    let mut max_drift: Scalar = 0.0;
    let p0 = momentum(&sim.state);
    for _ in 0..20 {
        sim.step().unwrap();
        max_drift = max_drift.max((momentum(&sim.state) - p0).norm() / reference);
    }
    OracleReport {
        name: "momentum_conservation".into(),
        max_error: max_drift,
        tolerance: 1e-10,
        samples: 20,
    }
}

/// With a purely elastic material the semi-implicit comparator must be
/// bitwise identical to the implicit path.
fn comparator_oracle() -> OracleReport {
    let (state, config) = elastic_block();
    let implicit = oracles::run_trajectory(state.clone(), config.clone(), 5).unwrap();
    let semi = oracles::semi_implicit_comparator(state, config, 5).unwrap();
    let max_error = if implicit == semi { 0.0 } else { 1.0 };
    OracleReport {
        name: "semi_implicit_comparator".into(),
        max_error,
        tolerance: 0.0,
        samples: implicit.len(),
    }
}

/// Stretched 4x4x4 elastic block, gravity and smoothing off.
fn elastic_block() -> (SimState, SolverConfig) {
    use xpbi::constitutive::{ElasticParams, MaterialModel};
    use xpbi::particles::ParticleSet;
    let spacing = 0.05;
    let mut points = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                points.push(Vec3::new(i as Scalar, j as Scalar, k as Scalar).scale(spacing));
            }
        }
    }
    let mut particles = ParticleSet::default();
    particles.seed(&points, Vec3::new(0.3, 0.0, 0.0), spacing, 3, 1000.0, 0, 0.0);
    for f in &mut particles.def_grad {
        *f = Mat3::from_diag(Vec3::new(1.04, 0.99, 1.0));
    }
    let state = SimState {
        particles,
        materials: vec![MaterialModel {
            density: 1000.0,
            elastic: ElasticParams::new(1e5, 0.3).unwrap(),
            plastic: PlasticModel::None,
        }],
        ..Default::default()
    };
    let config = SolverConfig {
        particle_radius: spacing,
        gravity: Vec3::zero(),
        xsph_c: 0.01,
        iterations: 4,
        ..Default::default()
    };
    (state, config)
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let frames_dir = args.run.join("frames");
    if !frames_dir.is_dir() {
        return Err(usage(format!("{:?} has no frames/ directory", args.run)));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&frames_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(usage(format!("no binary frames under {frames_dir:?}")));
    }
    let mut rows = vec![METRICS_CSV_HEADER.to_string()];
    let mut support = args.support;
    for path in &paths {
        let frame = scene_io::read_frame(path).map_err(|e| anyhow!("{e}"))?;
        let particles = frame_particles(&frame);
        let support = *support.get_or_insert_with(|| {
            let probe = build_neighbor_table(&particles.positions, 0.1, 3);
            let m = compute_metrics(&particles, &probe);
            if m.valid && m.nn_mean > 0.0 {
                4.0 * m.nn_mean
            } else {
                0.1
            }
        });
        let table = build_neighbor_table(&particles.positions, support, 3);
        let metrics = compute_metrics(&particles, &table);
        rows.push(metrics_csv_row(frame.step, frame.time, &metrics, 0.0));
    }
    let out = args
        .out
        .unwrap_or_else(|| args.run.join("metrics-recomputed.csv"));
    fs::write(&out, rows.join("\n") + "\n")?;
    println!("{} frames -> {}", paths.len(), out.display());
    Ok(())
}

/// Rehydrate a minimal particle set from a stored frame; masses assume unit
/// density spheres when velocities or det F are absent.
fn frame_particles(frame: &Frame) -> xpbi::particles::ParticleSet {
    let mut set = xpbi::particles::ParticleSet::default();
    set.seed(&frame.positions, Vec3::zero(), 0.05, 3, 1000.0, 0, 0.0);
    if let Some(v) = &frame.velocities {
        set.velocities.clone_from(v);
    }
    set
}

fn cmd_study(args: StudyArgs) -> Result<()> {
    if args.dts.is_empty() == args.iters_list.is_empty() {
        return Err(usage(
            "study needs exactly one of --dts or --iters-list".to_string(),
        ));
    }
    let mut base = load_scene(&args.scene.scene)?;
    apply_overrides(&mut base, &args.scene)?;

    let sweep: Vec<(String, Scalar)> = if !args.dts.is_empty() {
        let mut dts = args.dts.clone();
        dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dts.iter().map(|&dt| ("dt".to_string(), dt)).collect()
    } else {
        let mut iters = args.iters_list.clone();
        iters.sort_unstable_by(|a, b| b.cmp(a));
        iters
            .iter()
            .map(|&n| ("iterations".to_string(), n as Scalar))
            .collect()
    };

    let mut rows = vec!["kind,value,steps,wall_ms,final_energy,residual_final,rms_vs_reference".to_string()];
    let mut reference: Option<Vec<Vec3>> = None;
    let mut length_scale = 1.0;
    for (kind, value) in &sweep {
        let mut spec = base.clone();
        if kind == "dt" {
            spec.solver.dt = *value;
        } else {
            spec.solver.iterations = *value as usize;
        }
        let state = spec.build_state();
        if reference.is_none() {
            length_scale = bbox_diagonal(&state.particles.positions).max(1e-12);
        }
        let steps_per_frame = spec.steps_per_frame();
        let frames = args
            .frames
            .map(|n| n.min(spec.total_frames()))
            .unwrap_or_else(|| spec.total_frames());
        let mut sim = Simulation::new(state, spec.solver.clone())?;
        let start = Instant::now();
        let mut residual_final = 0.0;
        for _ in 0..frames {
            for _ in 0..steps_per_frame {
                let diag = sim.step().map_err(|e| anyhow!("step failed: {e}"))?;
                residual_final = diag.residuals.last().copied().unwrap_or(0.0);
            }
        }
        let energy = oracles::elastic_energy(&sim.state);
        let positions = sim.state.particles.positions.clone();
        let rms = match &reference {
            Some(reference) => oracles::position_rms(reference, &positions, length_scale),
            None => 0.0,
        };
        rows.push(format!(
            "{kind},{value},{},{},{energy},{residual_final},{rms}",
            frames * steps_per_frame,
            start.elapsed().as_millis(),
        ));
        if reference.is_none() {
            reference = Some(positions);
        }
    }
    fs::write(&args.out, rows.join("\n") + "\n")?;
    println!("{} runs -> {}", sweep.len(), args.out.display());
    Ok(())
}

fn bbox_diagonal(positions: &[Vec3]) -> Scalar {
    let mut lo = Vec3::splat(Scalar::INFINITY);
    let mut hi = Vec3::splat(Scalar::NEG_INFINITY);
    for &p in positions {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (hi - lo).norm()
}
