//! Scene descriptions, frame output, and quantitative run metrics.
//!
//! Scenes are versioned JSON files: a material table keyed by name, a
//! geometry list sampled into particles at load time, optional colliders,
//! and the solver configuration. Frames have a canonical little-endian
//! binary form with a bit-exact round trip, plus a CSV export for plots.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constitutive::{yield_value, ElasticParams, MaterialModel, PlasticModel};
use crate::kernels::{kernel_value, KernelSpec};
use crate::particles::{poisson_disk_sample, NeighborTable, ParticleSet, Shape};
use crate::solver::{Collider, SimState, SolverConfig, StepDiagnostics};
use crate::{Scalar, Vec3};

pub const SCENE_VERSION: u32 = 1;
pub const FRAME_MAGIC: [u8; 4] = *b"XPBF";
pub const FRAME_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{path}: bad frame file: {message}")]
    Frame { path: PathBuf, message: String },
}

/// One Table-style material row: a model tag plus its flat parameter tuple.
///
/// Parameter orderings, all starting with (density, E, nu):
/// - `elastic`: (rho, E, nu)
/// - `von_mises`: (rho, E, nu, yield_stress)
/// - `drucker_prager`: (rho, E, nu, friction_angle_deg, cohesion)
/// - `nacc`: (rho, E, nu, alpha0, beta, xi, M)
/// - `herschel_bulkley`: (rho, E, nu, yield_stress, power, viscosity)
/// - `snow`: (rho, E, nu, crit_compression, crit_stretch, hardening)
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub model: String,
    pub params: Vec<Scalar>,
}

const MODEL_TAGS: &str = "elastic, von_mises, drucker_prager, nacc, herschel_bulkley, snow";

impl MaterialSpec {
    pub fn to_material(&self) -> Result<MaterialModel<Scalar>, String> {
        let p = &self.params;
        let need = |n: usize| -> Result<(), String> {
            if p.len() == n {
                Ok(())
            } else {
                Err(format!(
                    "model '{}' expects {} parameters, got {}",
                    self.model,
                    n,
                    p.len()
                ))
            }
        };
        let base = |p: &[Scalar]| -> Result<(Scalar, ElasticParams<Scalar>), String> {
            if !(p[0] > 0.0) {
                return Err(format!("density must be positive, got {}", p[0]));
            }
            let elastic = ElasticParams::new(p[1], p[2]).map_err(|e| e.to_string())?;
            Ok((p[0], elastic))
        };
        let positive = |value: Scalar, what: &str| -> Result<Scalar, String> {
            if value > 0.0 {
                Ok(value)
            } else {
                Err(format!("{what} must be positive, got {value}"))
            }
        };
        let plastic = match self.model.as_str() {
            "elastic" => {
                need(3)?;
                PlasticModel::None
            }
            "von_mises" => {
                need(4)?;
                PlasticModel::VonMises {
                    yield_stress: positive(p[3], "yield stress")?,
                }
            }
            "drucker_prager" => {
                need(5)?;
                if !(0.0..90.0).contains(&p[3]) || p[3] == 0.0 {
                    return Err(format!(
                        "friction angle must be in (0, 90) degrees, got {}",
                        p[3]
                    ));
                }
                if p[4] < 0.0 {
                    return Err(format!("cohesion must be nonnegative, got {}", p[4]));
                }
                PlasticModel::DruckerPrager {
                    friction_angle_deg: p[3],
                    cohesion: p[4],
                }
            }
            "nacc" => {
                need(7)?;
                if p[4] < 0.0 {
                    return Err(format!("beta must be nonnegative, got {}", p[4]));
                }
                PlasticModel::Nacc {
                    alpha0: p[3],
                    beta: p[4],
                    xi: positive(p[5], "xi")?,
                    m: positive(p[6], "M")?,
                }
            }
            "herschel_bulkley" => {
                need(6)?;
                PlasticModel::HerschelBulkley {
                    yield_stress: positive(p[3], "yield stress")?,
                    power: positive(p[4], "power")?,
                    viscosity: positive(p[5], "viscosity")?,
                }
            }
            "snow" => {
                need(6)?;
                if !(0.0..1.0).contains(&p[3]) || p[3] == 0.0 {
                    return Err(format!(
                        "critical compression must be in (0, 1), got {}",
                        p[3]
                    ));
                }
                if p[4] < 0.0 || p[5] < 0.0 {
                    return Err("critical stretch and hardening must be nonnegative".into());
                }
                PlasticModel::SnowClamp {
                    crit_compression: p[3],
                    crit_stretch: p[4],
                    hardening: p[5],
                }
            }
            other => {
                return Err(format!(
                    "unknown material model '{other}'; valid models: {MODEL_TAGS}"
                ))
            }
        };
        let (density, elastic) = base(p)?;
        Ok(MaterialModel {
            density,
            elastic,
            plastic,
        })
    }
}

fn zero_vec() -> Vec3 {
    Vec3::zero()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub shape: Shape,
    pub material: String,
    #[serde(default = "zero_vec")]
    pub velocity: Vec3,
    /// Sampling spacing; defaults to the solver particle radius.
    #[serde(default)]
    pub spacing: Option<Scalar>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub version: u32,
    pub name: String,
    /// Simulated duration in seconds.
    pub duration: Scalar,
    /// Output frames per second.
    pub frame_rate: Scalar,
    #[serde(default)]
    pub seed: u64,
    pub solver: SolverConfig,
    pub materials: BTreeMap<String, MaterialSpec>,
    pub geometry: Vec<GeometrySpec>,
    #[serde(default)]
    pub colliders: Vec<Collider>,
}

impl SceneSpec {
    fn validate_with(&self, path: &Path) -> Result<(), SceneError> {
        let fail = |message: String| SceneError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        if self.version != SCENE_VERSION {
            return Err(fail(format!(
                "unsupported scene version {} (expected {SCENE_VERSION})",
                self.version
            )));
        }
        if !(self.duration > 0.0) {
            return Err(fail("duration must be positive".into()));
        }
        if !(self.frame_rate > 0.0) {
            return Err(fail("frame_rate must be positive".into()));
        }
        self.solver
            .validate()
            .map_err(|e| fail(format!("solver: {e}")))?;
        for (name, spec) in &self.materials {
            spec.to_material()
                .map_err(|e| fail(format!("materials.{name}: {e}")))?;
        }
        for (i, geom) in self.geometry.iter().enumerate() {
            if !self.materials.contains_key(&geom.material) {
                let known: Vec<&str> = self.materials.keys().map(String::as_str).collect();
                return Err(fail(format!(
                    "geometry[{i}]: unknown material '{}'; defined materials: {}",
                    geom.material,
                    known.join(", ")
                )));
            }
            if let Some(spacing) = geom.spacing {
                if !(spacing > 0.0) {
                    return Err(fail(format!("geometry[{i}]: spacing must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Substeps per output frame, at least 1.
    pub fn steps_per_frame(&self) -> usize {
        ((1.0 / self.frame_rate) / self.solver.dt).ceil().max(1.0) as usize
    }

    pub fn total_frames(&self) -> usize {
        (self.duration * self.frame_rate).ceil().max(1.0) as usize
    }

    /// Material table in name order plus the name -> index map.
    pub fn material_table(&self) -> (Vec<MaterialModel<Scalar>>, BTreeMap<String, usize>) {
        let mut table = Vec::new();
        let mut index = BTreeMap::new();
        for (i, (name, spec)) in self.materials.iter().enumerate() {
            index.insert(name.clone(), i);
            table.push(spec.to_material().expect("validated material"));
        }
        (table, index)
    }

    /// Sample every geometry entry and assemble the initial state.
    pub fn build_state(&self) -> SimState {
        let (materials, index) = self.material_table();
        let mut particles = ParticleSet::default();
        for (gi, geom) in self.geometry.iter().enumerate() {
            let mat_id = index[&geom.material];
            let material = &materials[mat_id];
            let spacing = geom.spacing.unwrap_or(self.solver.particle_radius);
            let seed = self
                .seed
                .wrapping_add((gi as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let points = poisson_disk_sample(&geom.shape, spacing, seed);
            particles.seed(
                &points,
                geom.velocity,
                spacing,
                self.solver.dimension,
                material.density,
                mat_id,
                material.initial_plastic_state(),
            );
        }
        SimState {
            particles,
            materials,
            colliders: self.colliders.clone(),
            time: 0.0,
            step_index: 0,
        }
    }
}

pub fn parse_scene(path: impl AsRef<Path>) -> Result<SceneSpec, SceneError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scene_str(&text, path)
}

pub fn parse_scene_str(text: &str, path: &Path) -> Result<SceneSpec, SceneError> {
    let spec: SceneSpec = serde_json::from_str(text).map_err(|source| SceneError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    spec.validate_with(path)?;
    Ok(spec)
}

pub fn serialize_scene(spec: &SceneSpec) -> String {
    serde_json::to_string_pretty(spec).expect("scene serialization cannot fail")
}

/// Scenes shipped with the library, as (name, JSON text).
pub fn bundled_scenes() -> &'static [(&'static str, &'static str)] {
    &[
        (
            "notched-block",
            include_str!("../scenes/notched-block.json"),
        ),
        (
            "cantilever-e1e4",
            include_str!("../scenes/cantilever-e1e4.json"),
        ),
        (
            "cantilever-e1e5",
            include_str!("../scenes/cantilever-e1e5.json"),
        ),
        (
            "cantilever-e1e6",
            include_str!("../scenes/cantilever-e1e6.json"),
        ),
        ("sand-column", include_str!("../scenes/sand-column.json")),
        (
            "two-block-collision",
            include_str!("../scenes/two-block-collision.json"),
        ),
        (
            "hourglass-lite",
            include_str!("../scenes/hourglass-lite.json"),
        ),
        (
            "snow-dt-study",
            include_str!("../scenes/snow-dt-study.json"),
        ),
    ]
}

pub fn bundled_scene(name: &str) -> Option<&'static str> {
    bundled_scenes()
        .iter()
        .find(|(n, _)| *n == name)
        .map(|&(_, text)| text)
}

// Field mask bits for optional frame arrays.
pub const FIELD_VELOCITIES: u32 = 1;
pub const FIELD_DET_F: u32 = 2;
pub const FIELD_YIELD: u32 = 4;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Frame {
    pub step: u64,
    pub time: Scalar,
    pub positions: Vec<Vec3>,
    pub velocities: Option<Vec<Vec3>>,
    pub det_f: Option<Vec<Scalar>>,
    /// 1 when the particle sits on or outside its yield surface.
    pub yield_flags: Option<Vec<u8>>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFormat {
    Binary,
    Csv,
}

impl Frame {
    pub fn from_state(state: &SimState, include_velocities: bool, include_det_f: bool) -> Self {
        let particles = &state.particles;
        let det_f = include_det_f
            .then(|| particles.def_grad.iter().map(|f| f.determinant()).collect());
        let yield_flags = include_det_f.then(|| {
            (0..particles.len())
                .map(|p| {
                    let material = &state.materials[particles.material_id[p]];
                    match yield_value(material, &particles.def_grad[p], particles.plastic_state[p])
                    {
                        Ok(v) => u8::from(v >= -1e-8),
                        Err(_) => 0,
                    }
                })
                .collect()
        });
        Self {
            step: state.step_index,
            time: state.time,
            positions: particles.positions.clone(),
            velocities: include_velocities.then(|| particles.velocities.clone()),
            det_f,
            yield_flags,
        }
    }

    pub fn field_mask(&self) -> u32 {
        let mut mask = 0;
        if self.velocities.is_some() {
            mask |= FIELD_VELOCITIES;
        }
        if self.det_f.is_some() {
            mask |= FIELD_DET_F;
        }
        if self.yield_flags.is_some() {
            mask |= FIELD_YIELD;
        }
        mask
    }
}

struct FrameReader<'a> {
    bytes: &'a [u8],
    cursor: usize,
    path: &'a Path,
}

impl<'a> FrameReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SceneError> {
        if self.cursor + n > self.bytes.len() {
            return Err(frame_err(self.path, "truncated frame file"));
        }
        let slice = &self.bytes[self.cursor..self.cursor + n];
        self.cursor += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, SceneError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn scalar(&mut self) -> Result<Scalar, SceneError> {
        Ok(Scalar::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vecs(&mut self, count: usize) -> Result<Vec<Vec3>, SceneError> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = self.take(24)?;
            out.push(Vec3::new(
                Scalar::from_le_bytes(raw[0..8].try_into().unwrap()),
                Scalar::from_le_bytes(raw[8..16].try_into().unwrap()),
                Scalar::from_le_bytes(raw[16..24].try_into().unwrap()),
            ));
        }
        Ok(out)
    }
}

fn frame_err(path: &Path, message: impl Into<String>) -> SceneError {
    SceneError::Frame {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn write_frame(frame: &Frame, path: impl AsRef<Path>, format: FrameFormat) -> Result<(), SceneError> {
    let path = path.as_ref();
    let io_err = |source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    };
    let count = frame.positions.len();
    if let Some(v) = &frame.velocities {
        if v.len() != count {
            return Err(frame_err(path, "velocity array length mismatch"));
        }
    }
    if let Some(d) = &frame.det_f {
        if d.len() != count {
            return Err(frame_err(path, "det_f array length mismatch"));
        }
    }
    if let Some(y) = &frame.yield_flags {
        if y.len() != count {
            return Err(frame_err(path, "yield flag array length mismatch"));
        }
    }
    match format {
        FrameFormat::Binary => {
            let mut buf = Vec::with_capacity(36 + count * 24);
            buf.extend_from_slice(&FRAME_MAGIC);
            buf.extend_from_slice(&FRAME_VERSION.to_le_bytes());
            buf.extend_from_slice(&frame.step.to_le_bytes());
            buf.extend_from_slice(&frame.time.to_le_bytes());
            buf.extend_from_slice(&(count as u64).to_le_bytes());
            buf.extend_from_slice(&frame.field_mask().to_le_bytes());
            let push_vecs = |buf: &mut Vec<u8>, vecs: &[Vec3]| {
                for v in vecs {
                    buf.extend_from_slice(&v.x.to_le_bytes());
                    buf.extend_from_slice(&v.y.to_le_bytes());
                    buf.extend_from_slice(&v.z.to_le_bytes());
                }
            };
            push_vecs(&mut buf, &frame.positions);
            if let Some(v) = &frame.velocities {
                push_vecs(&mut buf, v);
            }
            if let Some(d) = &frame.det_f {
                for x in d {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            if let Some(y) = &frame.yield_flags {
                buf.extend_from_slice(y);
            }
            fs::write(path, buf).map_err(io_err)
        }
        FrameFormat::Csv => {
            let mut out = fs::File::create(path).map_err(io_err)?;
            let mut header = String::from("x,y,z");
            if frame.velocities.is_some() {
                header.push_str(",vx,vy,vz");
            }
            if frame.det_f.is_some() {
                header.push_str(",det_f");
            }
            if frame.yield_flags.is_some() {
                header.push_str(",yielded");
            }
            let mut text = header;
            text.push('\n');
            for i in 0..count {
                let p = frame.positions[i];
                text.push_str(&format!("{},{},{}", p.x, p.y, p.z));
                if let Some(v) = &frame.velocities {
                    text.push_str(&format!(",{},{},{}", v[i].x, v[i].y, v[i].z));
                }
                if let Some(d) = &frame.det_f {
                    text.push_str(&format!(",{}", d[i]));
                }
                if let Some(y) = &frame.yield_flags {
                    text.push_str(&format!(",{}", y[i]));
                }
                text.push('\n');
            }
            out.write_all(text.as_bytes()).map_err(io_err)
        }
    }
}

pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame, SceneError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let mut reader = FrameReader {
        bytes: &bytes,
        cursor: 0,
        path,
    };
    if reader.take(4)? != FRAME_MAGIC {
        return Err(frame_err(path, "bad magic"));
    }
    let version = reader.u32()?;
    if version != FRAME_VERSION {
        return Err(frame_err(path, format!("unsupported frame version {version}")));
    }
    let step = u64::from_le_bytes(reader.take(8)?.try_into().unwrap());
    let time = reader.scalar()?;
    let count = u64::from_le_bytes(reader.take(8)?.try_into().unwrap()) as usize;
    let mask = reader.u32()?;
    let positions = reader.vecs(count)?;
    let velocities = if mask & FIELD_VELOCITIES != 0 {
        Some(reader.vecs(count)?)
    } else {
        None
    };
    let det_f = if mask & FIELD_DET_F != 0 {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(reader.scalar()?);
        }
        Some(out)
    } else {
        None
    };
    let yield_flags = if mask & FIELD_YIELD != 0 {
        Some(reader.take(count)?.to_vec())
    } else {
        None
    };
    if reader.cursor != bytes.len() {
        return Err(frame_err(path, "trailing bytes after frame payload"));
    }
    Ok(Frame {
        step,
        time,
        positions,
        velocities,
        det_f,
        yield_flags,
    })
}

/// Point-cloud quality metrics for one state.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub nn_mean: Scalar,
    pub nn_std: Scalar,
    pub max_density: Scalar,
    /// False when fewer than 2 particles make the metrics undefined.
    pub valid: bool,
}

/// Smoothed density estimate `rho_p = sum_b m_b W(|x_p - x_b|)`, self term
/// included.
pub fn sph_density(particles: &ParticleSet, table: &NeighborTable, p: usize) -> Scalar {
    let kernel = KernelSpec::new(table.cell_size / 2.0, table.dimension);
    let xp = particles.positions[p];
    let mut density = particles.mass[p] * kernel_value(&kernel, 0.0);
    for &b in &table.neighbors[p] {
        density += particles.mass[b] * kernel_value(&kernel, (particles.positions[b] - xp).norm());
    }
    density
}

/// Nearest-neighbor statistics and the peak smoothed density estimate.
/// Read-only; the neighbor table must be built from the current positions.
pub fn compute_metrics(particles: &ParticleSet, table: &NeighborTable) -> MetricsRecord {
    if particles.len() < 2 {
        return MetricsRecord {
            nn_mean: 0.0,
            nn_std: 0.0,
            max_density: 0.0,
            valid: false,
        };
    }
    let mut nn = Vec::new();
    let mut max_density: Scalar = 0.0;
    for p in 0..particles.len() {
        let xp = particles.positions[p];
        let mut best = Scalar::INFINITY;
        for &b in &table.neighbors[p] {
            best = best.min((particles.positions[b] - xp).norm());
        }
        if best.is_finite() {
            nn.push(best);
        }
        max_density = max_density.max(sph_density(particles, table, p));
    }
    if nn.is_empty() {
        return MetricsRecord {
            nn_mean: 0.0,
            nn_std: 0.0,
            max_density,
            valid: false,
        };
    }
    let mean = nn.iter().sum::<Scalar>() / nn.len() as Scalar;
    let var = nn.iter().map(|d| (d - mean) * (d - mean)).sum::<Scalar>() / nn.len() as Scalar;
    MetricsRecord {
        nn_mean: mean,
        nn_std: var.sqrt(),
        max_density,
        valid: true,
    }
}

pub const METRICS_CSV_HEADER: &str = "step,time,nn_mean,nn_std,max_density,residual_final";

pub fn metrics_csv_row(
    step: u64,
    time: Scalar,
    metrics: &MetricsRecord,
    residual_final: Scalar,
) -> String {
    format!(
        "{},{},{},{},{},{}",
        step, time, metrics.nn_mean, metrics.nn_std, metrics.max_density, residual_final
    )
}

pub const DIAGNOSTICS_CSV_HEADER: &str =
    "step,iteration,residual,neighbor_us,predict_us,iterate_us,xsph_us,finalize_us";

/// One CSV row per solver iteration; phase timings repeat on each row.
pub fn diagnostics_csv_rows(diag: &StepDiagnostics) -> String {
    let t = &diag.timings;
    diag.residuals
        .iter()
        .enumerate()
        .map(|(i, r)| {
            format!(
                "{},{},{},{},{},{},{},{}\n",
                diag.step, i, r, t.neighbor_us, t.predict_us, t.iterate_us, t.xsph_us, t.finalize_us
            )
        })
        .collect()
}
