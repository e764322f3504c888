//! Atomic velocity buffer shared across color-parallel sweeps.
//!
//! Inelastic constraints scatter velocity corrections to every neighbor of a
//! particle, which can span cells of a different color than the one being
//! processed. Per-component compare-and-swap accumulation keeps those writes
//! race-free; concurrent readers may observe a partially updated vector,
//! which is the usual Gauss-Seidel relaxation of ordering.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::Vec3;

pub struct AtomicVelocities {
    data: Vec<[AtomicU64; 3]>,
}

impl AtomicVelocities {
    pub fn from_slice(v: &[Vec3]) -> Self {
        let data = v
            .iter()
            .map(|v| {
                [
                    AtomicU64::new(v.x.to_bits()),
                    AtomicU64::new(v.y.to_bits()),
                    AtomicU64::new(v.z.to_bits()),
                ]
            })
            .collect();
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn load(&self, i: usize) -> Vec3 {
        let c = &self.data[i];
        Vec3::new(
            f64::from_bits(c[0].load(Ordering::Relaxed)),
            f64::from_bits(c[1].load(Ordering::Relaxed)),
            f64::from_bits(c[2].load(Ordering::Relaxed)),
        )
    }

    pub fn store(&self, i: usize, v: Vec3) {
        let c = &self.data[i];
        c[0].store(v.x.to_bits(), Ordering::Relaxed);
        c[1].store(v.y.to_bits(), Ordering::Relaxed);
        c[2].store(v.z.to_bits(), Ordering::Relaxed);
    }

    pub fn add(&self, i: usize, dv: Vec3) {
        let c = &self.data[i];
        for (slot, d) in c.iter().zip([dv.x, dv.y, dv.z]) {
            if d == 0.0 {
                continue;
            }
            let mut cur = slot.load(Ordering::Relaxed);
            loop {
                let next = (f64::from_bits(cur) + d).to_bits();
                match slot.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
                    Ok(_) => break,
                    Err(actual) => cur = actual,
                }
            }
        }
    }

    pub fn to_vec(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}

/// Per-particle scalar storage with the same sharing contract; each entry is
/// only written by the thread owning the particle's cell.
pub struct AtomicScalars {
    data: Vec<AtomicU64>,
}

impl AtomicScalars {
    pub fn zeros(n: usize) -> Self {
        Self {
            data: (0..n).map(|_| AtomicU64::new(0f64.to_bits())).collect(),
        }
    }

    pub fn load(&self, i: usize) -> f64 {
        f64::from_bits(self.data[i].load(Ordering::Relaxed))
    }

    pub fn store(&self, i: usize, v: f64) {
        self.data[i].store(v.to_bits(), Ordering::Relaxed);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.data.len()).map(|i| self.load(i)).collect()
    }
}
