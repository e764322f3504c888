//! Particle state storage, Poisson-disk seeding, uniform-grid neighbor
//! search, and the cell coloring that drives parallel Gauss-Seidel sweeps.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Mat3, Scalar, Vec3};

/// Analytic seeding domain.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Box {
        min: [Scalar; 3],
        max: [Scalar; 3],
    },
    Sphere {
        center: [Scalar; 3],
        radius: Scalar,
    },
    /// Axis-aligned (y-up) cylinder.
    Cylinder {
        base: [Scalar; 3],
        radius: Scalar,
        height: Scalar,
    },
    Union {
        shapes: Vec<Shape>,
    },
}

impl Shape {
    pub fn contains(&self, p: Vec3) -> bool {
        match self {
            Shape::Box { min, max } => {
                p.x >= min[0]
                    && p.x <= max[0]
                    && p.y >= min[1]
                    && p.y <= max[1]
                    && p.z >= min[2]
                    && p.z <= max[2]
            }
            Shape::Sphere { center, radius } => {
                (p - Vec3::new(center[0], center[1], center[2])).norm_squared()
                    <= radius * radius
            }
            Shape::Cylinder {
                base,
                radius,
                height,
            } => {
                let dx = p.x - base[0];
                let dz = p.z - base[2];
                let dy = p.y - base[1];
                dy >= 0.0 && dy <= *height && dx * dx + dz * dz <= radius * radius
            }
            Shape::Union { shapes } => shapes.iter().any(|s| s.contains(p)),
        }
    }

    /// Axis-aligned bounds. Degenerate shapes yield inverted or flat bounds.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            Shape::Box { min, max } => (
                Vec3::new(min[0], min[1], min[2]),
                Vec3::new(max[0], max[1], max[2]),
            ),
            Shape::Sphere { center, radius } => {
                let c = Vec3::new(center[0], center[1], center[2]);
                (c - Vec3::splat(*radius), c + Vec3::splat(*radius))
            }
            Shape::Cylinder {
                base,
                radius,
                height,
            } => {
                let b = Vec3::new(base[0], base[1], base[2]);
                (
                    Vec3::new(b.x - radius, b.y, b.z - radius),
                    Vec3::new(b.x + radius, b.y + height, b.z + radius),
                )
            }
            Shape::Union { shapes } => {
                let mut min = Vec3::splat(Scalar::INFINITY);
                let mut max = Vec3::splat(Scalar::NEG_INFINITY);
                for s in shapes {
                    let (lo, hi) = s.bounds();
                    for i in 0..3 {
                        min[i] = min[i].min(lo[i]);
                        max[i] = max[i].max(hi[i]);
                    }
                }
                (min, max)
            }
        }
    }
}

/// Structure-of-arrays particle state.
#[derive(Clone, Debug, Default)]
pub struct ParticleSet {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub def_grad: Vec<Mat3>,
    pub rest_volume: Vec<Scalar>,
    pub mass: Vec<Scalar>,
    pub multiplier: Vec<Scalar>,
    pub material_id: Vec<usize>,
    /// Per-particle plastic state scalar (NACC hardening alpha, snow Jp).
    pub plastic_state: Vec<Scalar>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Append particles at the given positions with shared material data.
    ///
    /// Rest volume is `spacing^d` per particle (uniform Poisson-disk density
    /// approximation), mass is `density * V0`.
    pub fn seed(
        &mut self,
        points: &[Vec3],
        velocity: Vec3,
        spacing: Scalar,
        dimension: u32,
        density: Scalar,
        material_id: usize,
        initial_plastic_state: Scalar,
    ) {
        let v0 = spacing.powi(dimension as i32);
        for &p in points {
            self.positions.push(p);
            self.velocities.push(velocity);
            self.def_grad.push(Mat3::identity());
            self.rest_volume.push(v0);
            self.mass.push(density * v0);
            self.multiplier.push(0.0);
            self.material_id.push(material_id);
            self.plastic_state.push(initial_plastic_state);
        }
    }

    /// Current volume `V0 * det(F)` of particle `i`.
    pub fn current_volume(&self, i: usize) -> Scalar {
        self.rest_volume[i] * self.def_grad[i].determinant()
    }

    pub fn all_finite(&self) -> bool {
        self.positions.iter().all(|p| p.is_finite())
            && self.velocities.iter().all(|v| v.is_finite())
            && self.def_grad.iter().all(|f| f.is_finite())
            && self.multiplier.iter().all(|l| l.is_finite())
            && self.plastic_state.iter().all(|s| s.is_finite())
    }
}

/// Grid cell index.
pub type CellIndex = [i64; 3];

/// Color of a grid cell: `sum_i (cell_i mod 2) * 2^i`, in `[0, 2^d)`.
pub fn cell_color(cell: CellIndex, dimension: u32) -> u8 {
    let mut color = 0u8;
    for i in 0..dimension as usize {
        color |= ((cell[i].rem_euclid(2)) as u8) << i;
    }
    color
}

/// Sparse uniform grid with exact neighbor lists within the support radius.
#[derive(Clone, Debug)]
pub struct NeighborTable {
    /// Cell edge length, equal to the kernel support radius `k = 2r`.
    pub cell_size: Scalar,
    pub dimension: u32,
    pub buckets: HashMap<CellIndex, Vec<usize>>,
    /// Per-particle neighbor lists, symmetric and self-excluded.
    pub neighbors: Vec<Vec<usize>>,
    pub cell_of: Vec<CellIndex>,
    /// Occupied cells grouped by color, each list sorted for determinism.
    pub cells_by_color: Vec<Vec<CellIndex>>,
}

fn cell_of_point(p: Vec3, h: Scalar) -> CellIndex {
    [
        (p.x / h).floor() as i64,
        (p.y / h).floor() as i64,
        (p.z / h).floor() as i64,
    ]
}

/// Build the neighbor table from scratch. Neighborhood membership uses the
/// inclusive boundary `|x_p - x_b| <= k`.
pub fn build_neighbor_table(positions: &[Vec3], support: Scalar, dimension: u32) -> NeighborTable {
    assert!(support > 0.0, "support radius must be positive");
    let h = support;
    let mut buckets: HashMap<CellIndex, Vec<usize>> = HashMap::new();
    let mut cell_of = Vec::with_capacity(positions.len());
    for (i, &p) in positions.iter().enumerate() {
        let c = cell_of_point(p, h);
        buckets.entry(c).or_default().push(i);
        cell_of.push(c);
    }

    let k2 = support * support;
    let mut neighbors = vec![Vec::new(); positions.len()];
    for (i, &p) in positions.iter().enumerate() {
        let c = cell_of[i];
        let list = &mut neighbors[i];
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = [c[0] + dx, c[1] + dy, c[2] + dz];
                    if let Some(bucket) = buckets.get(&key) {
                        for &j in bucket {
                            if j != i && (positions[j] - p).norm_squared() <= k2 {
                                list.push(j);
                            }
                        }
                    }
                }
            }
        }
        list.sort_unstable();
    }

    let color_count = 1usize << dimension;
    let mut cells_by_color = vec![Vec::new(); color_count];
    for &cell in buckets.keys() {
        cells_by_color[cell_color(cell, dimension) as usize].push(cell);
    }
    for cells in &mut cells_by_color {
        cells.sort_unstable();
    }

    NeighborTable {
        cell_size: h,
        dimension,
        buckets,
        neighbors,
        cell_of,
        cells_by_color,
    }
}

/// Poisson-disk sample of the domain with the given minimum spacing.
///
/// Deterministic for a fixed seed. Maximal in the sense that every point
/// strictly inside the domain has a sample within `2 * spacing`; degenerate
/// (zero-extent) domains yield an empty list.
pub fn poisson_disk_sample(domain: &Shape, spacing: Scalar, seed: u64) -> Vec<Vec3> {
    assert!(spacing > 0.0, "spacing must be positive");
    let (lo, hi) = domain.bounds();
    let extent = hi - lo;
    if !(extent.x > 0.0 && extent.y > 0.0 && extent.z > 0.0) {
        return Vec::new();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Acceleration grid with at most one sample per cell.
    let cell = spacing / (3.0 as Scalar).sqrt();
    let nx = (extent.x / cell).ceil() as usize + 1;
    let ny = (extent.y / cell).ceil() as usize + 1;
    let nz = (extent.z / cell).ceil() as usize + 1;
    let mut grid: Vec<i64> = vec![-1; nx * ny * nz];
    let grid_index = |p: Vec3| -> usize {
        let ix = (((p.x - lo.x) / cell) as usize).min(nx - 1);
        let iy = (((p.y - lo.y) / cell) as usize).min(ny - 1);
        let iz = (((p.z - lo.z) / cell) as usize).min(nz - 1);
        (ix * ny + iy) * nz + iz
    };

    let mut samples: Vec<Vec3> = Vec::new();
    let mut active: Vec<usize> = Vec::new();

    let fits = |samples: &[Vec3], grid: &[i64], p: Vec3| -> bool {
        let ix = (((p.x - lo.x) / cell) as i64).min(nx as i64 - 1);
        let iy = (((p.y - lo.y) / cell) as i64).min(ny as i64 - 1);
        let iz = (((p.z - lo.z) / cell) as i64).min(nz as i64 - 1);
        for dx in -2..=2i64 {
            for dy in -2..=2i64 {
                for dz in -2..=2i64 {
                    let (jx, jy, jz) = (ix + dx, iy + dy, iz + dz);
                    if jx < 0 || jy < 0 || jz < 0 {
                        continue;
                    }
                    let (jx, jy, jz) = (jx as usize, jy as usize, jz as usize);
                    if jx >= nx || jy >= ny || jz >= nz {
                        continue;
                    }
                    let s = grid[(jx * ny + jy) * nz + jz];
                    if s >= 0 && (samples[s as usize] - p).norm() < spacing {
                        return false;
                    }
                }
            }
        }
        true
    };

    let push_sample = |samples: &mut Vec<Vec3>,
                           active: &mut Vec<usize>,
                           grid: &mut Vec<i64>,
                           p: Vec3| {
        grid[grid_index(p)] = samples.len() as i64;
        active.push(samples.len());
        samples.push(p);
    };

    // Initial sample: first interior draw.
    for _ in 0..10_000 {
        let p = Vec3::new(
            rng.gen_range(lo.x..hi.x),
            rng.gen_range(lo.y..hi.y),
            rng.gen_range(lo.z..hi.z),
        );
        if domain.contains(p) {
            push_sample(&mut samples, &mut active, &mut grid, p);
            break;
        }
    }

    let attempts = 30;
    let bridson = |samples: &mut Vec<Vec3>, active: &mut Vec<usize>, grid: &mut Vec<i64>,
                       rng: &mut ChaCha8Rng| {
        while let Some(&idx) = active.last() {
            let center = samples[idx];
            let mut placed = false;
            for _ in 0..attempts {
                // Uniform draw from the annulus [spacing, 2 spacing].
                let dir = loop {
                    let d = Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    );
                    let n = d.norm();
                    if n > 1e-6 && n <= 1.0 {
                        break d / n;
                    }
                };
                let radius = spacing * (1.0 + rng.gen_range(0.0..1.0));
                let p = center + dir.scale(radius);
                if domain.contains(p) && fits(samples, grid, p) {
                    push_sample(samples, active, grid, p);
                    placed = true;
                    break;
                }
            }
            if !placed {
                active.pop();
            }
        }
    };
    bridson(&mut samples, &mut active, &mut grid, &mut rng);

    // Coverage sweep: rescue disconnected regions the walk never reached.
    let probe_step = spacing;
    let cover = 2.0 * spacing;
    let mut ix = 0.0;
    while lo.x + ix * probe_step <= hi.x {
        let mut iy = 0.0;
        while lo.y + iy * probe_step <= hi.y {
            let mut iz = 0.0;
            while lo.z + iz * probe_step <= hi.z {
                let p = lo + Vec3::new(ix, iy, iz).scale(probe_step);
                iz += 1.0;
                if !domain.contains(p) {
                    continue;
                }
                let covered = samples.iter().rev().any(|&s| (s - p).norm() <= cover);
                if !covered && fits(&samples, &grid, p) {
                    push_sample(&mut samples, &mut active, &mut grid, p);
                    bridson(&mut samples, &mut active, &mut grid, &mut rng);
                }
            }
            iy += 1.0;
        }
        ix += 1.0;
    }

    samples
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn unit_box() -> Shape {
        Shape::Box {
            min: [0.0; 3],
            max: [1.0; 3],
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = poisson_disk_sample(&unit_box(), 0.08, 42);
        let b = poisson_disk_sample(&unit_box(), 0.08, 42);
        assert_eq!(a, b);
        let c = poisson_disk_sample(&unit_box(), 0.08, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_respects_min_distance() {
        let pts = poisson_disk_sample(&unit_box(), 0.05, 7);
        assert!(pts.len() > 100);
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let d = (pts[i] - pts[j]).norm();
                assert!(d >= 0.05 - 1e-12, "pair ({i},{j}) at distance {d}");
            }
        }
    }

    #[test]
    fn sampling_covers_interior() {
        let spacing = 0.06;
        let pts = poisson_disk_sample(&unit_box(), spacing, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..2000 {
            let probe = Vec3::new(
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.05..0.95),
            );
            let nearest = pts
                .iter()
                .map(|&p| (p - probe).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= 2.0 * spacing, "uncovered probe at {probe:?}");
        }
    }

    #[test]
    fn sampling_covers_disconnected_union() {
        let domain = Shape::Union {
            shapes: vec![
                Shape::Box {
                    min: [0.0; 3],
                    max: [0.3, 0.3, 0.3],
                },
                Shape::Box {
                    min: [2.0, 0.0, 0.0],
                    max: [2.3, 0.3, 0.3],
                },
            ],
        };
        let pts = poisson_disk_sample(&domain, 0.05, 1);
        let in_left = pts.iter().filter(|p| p.x < 1.0).count();
        let in_right = pts.iter().filter(|p| p.x > 1.0).count();
        assert!(in_left > 20 && in_right > 20);
    }

    #[test]
    fn degenerate_domain_is_empty() {
        let flat = Shape::Box {
            min: [0.0; 3],
            max: [1.0, 0.0, 1.0],
        };
        assert!(poisson_disk_sample(&flat, 0.05, 1).is_empty());
    }

    #[test]
    fn sphere_and_cylinder_membership() {
        let pts = poisson_disk_sample(
            &Shape::Sphere {
                center: [0.0; 3],
                radius: 0.5,
            },
            0.06,
            5,
        );
        assert!(pts.iter().all(|p| p.norm() <= 0.5 + 1e-12));
        assert!(pts.len() > 50);

        let cyl = Shape::Cylinder {
            base: [0.0, 0.0, 0.0],
            radius: 0.3,
            height: 0.6,
        };
        let pts = poisson_disk_sample(&cyl, 0.06, 5);
        assert!(pts.iter().all(|p| cyl.contains(*p)));
        assert!(pts.len() > 50);
    }

    fn brute_force_neighbors(positions: &[Vec3], k: f64) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); positions.len()];
        for i in 0..positions.len() {
            for j in 0..positions.len() {
                if i != j && (positions[i] - positions[j]).norm() <= k {
                    out[i].push(j);
                }
            }
        }
        out
    }

    #[test]
    fn neighbor_table_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for cloud in 0..10 {
            let positions: Vec<Vec3> = (0..1000)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let k = 0.15;
            let table = build_neighbor_table(&positions, k, 3);
            let brute = brute_force_neighbors(&positions, k);
            for i in 0..positions.len() {
                assert_eq!(table.neighbors[i], brute[i], "cloud {cloud} particle {i}");
            }
            // Symmetry.
            for i in 0..positions.len() {
                for &j in &table.neighbors[i] {
                    assert!(table.neighbors[j].contains(&i));
                }
            }
        }
    }

    #[test]
    fn neighbor_boundary_is_inclusive() {
        let k = 0.2;
        let positions = vec![Vec3::zero(), Vec3::new(k, 0.0, 0.0)];
        let table = build_neighbor_table(&positions, k, 3);
        assert_eq!(table.neighbors[0], vec![1]);
        assert_eq!(table.neighbors[1], vec![0]);
    }

    #[test]
    fn single_particle_has_no_neighbors() {
        let table = build_neighbor_table(&[Vec3::new(0.3, 0.4, 0.5)], 0.2, 3);
        assert!(table.neighbors[0].is_empty());
    }

    #[test]
    fn neighbors_lie_in_adjacent_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let positions: Vec<Vec3> = (0..500)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let table = build_neighbor_table(&positions, 0.25, 3);
        for i in 0..positions.len() {
            for &j in &table.neighbors[i] {
                for axis in 0..3 {
                    assert!((table.cell_of[i][axis] - table.cell_of[j][axis]).abs() <= 1);
                }
            }
        }
    }

    #[test]
    fn cell_color_formula() {
        assert_eq!(cell_color([0, 0, 0], 3), 0);
        assert_eq!(cell_color([1, 0, 0], 3), 1);
        assert_eq!(cell_color([0, 1, 0], 3), 2);
        assert_eq!(cell_color([1, 1, 1], 3), 7);
        assert_eq!(cell_color([2, 0, 0], 3), cell_color([0, 0, 0], 3));
        assert_eq!(cell_color([-1, 0, 0], 3), 1);
        assert_eq!(cell_color([1, 1, 5], 2), 3); // z ignored in 2d
    }

    #[test]
    fn adjacent_cells_never_share_a_color() {
        for x in 0..4i64 {
            for y in 0..4i64 {
                for z in 0..4i64 {
                    for dx in -1..=1i64 {
                        for dy in -1..=1i64 {
                            for dz in -1..=1i64 {
                                if dx == 0 && dy == 0 && dz == 0 {
                                    continue;
                                }
                                assert_ne!(
                                    cell_color([x, y, z], 3),
                                    cell_color([x + dx, y + dy, z + dz], 3),
                                    "cells ({x},{y},{z}) and offset ({dx},{dy},{dz})"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn same_color_cells_are_separated_beyond_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let positions: Vec<Vec3> = (0..2000)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let k = 0.3;
        let table = build_neighbor_table(&positions, k, 3);
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let ci = table.cell_of[i];
                let cj = table.cell_of[j];
                if ci != cj && cell_color(ci, 3) == cell_color(cj, 3) {
                    assert!(
                        (positions[i] - positions[j]).norm() > k,
                        "same-color cells too close: {ci:?} {cj:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn particle_seeding_sets_mass_and_volume() {
        let mut set = ParticleSet::default();
        let pts = vec![Vec3::zero(), Vec3::new(0.1, 0.0, 0.0)];
        set.seed(&pts, Vec3::new(0.0, -1.0, 0.0), 0.05, 3, 1000.0, 0, 0.0);
        assert_eq!(set.len(), 2);
        let v0 = 0.05f64.powi(3);
        assert!((set.rest_volume[0] - v0).abs() < 1e-18);
        assert!((set.mass[0] - 1000.0 * v0).abs() < 1e-12);
        assert_eq!(set.def_grad[0], Mat3::identity());
        assert!((set.current_volume(0) - v0).abs() < 1e-18);
        assert!(set.all_finite());
    }
}
