//! Analytic signed-distance colliders with Coulomb friction.
//!
//! The signed distance is negative inside the solid and 1-Lipschitz, so a
//! penetrating candidate position can be pushed to the surface by moving
//! `-distance` along the outward normal.

use serde::{Deserialize, Serialize};

use crate::{Scalar, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColliderShape {
    /// Solid fills the side the normal points away from: `sdf = n.x - offset`.
    HalfSpace { normal: Vec3, offset: Scalar },
    Sphere { center: Vec3, radius: Scalar },
    Box { min: Vec3, max: Vec3 },
    /// Axis-aligned with the y axis.
    Cylinder {
        center: Vec3,
        radius: Scalar,
        half_height: Scalar,
    },
}

impl ColliderShape {
    /// Signed distance and outward normal (direction of increasing distance)
    /// at `p`. Negative distance means `p` is inside the solid.
    pub fn signed_distance(&self, p: Vec3) -> (Scalar, Vec3) {
        match *self {
            ColliderShape::HalfSpace { normal, offset } => {
                let n = normal.normalized();
                (p.dot(n) - offset, n)
            }
            ColliderShape::Sphere { center, radius } => {
                let d = p - center;
                let dist = d.norm();
                if dist > 1e-12 {
                    (dist - radius, d.scale(1.0 / dist))
                } else {
                    (-radius, Vec3::new(0.0, 1.0, 0.0))
                }
            }
            ColliderShape::Box { min, max } => {
                let c = (min + max).scale(0.5);
                let half = (max - min).scale(0.5);
                let q = p - c;
                let excess = Vec3::new(
                    q.x.abs() - half.x,
                    q.y.abs() - half.y,
                    q.z.abs() - half.z,
                );
                if excess.x > 0.0 || excess.y > 0.0 || excess.z > 0.0 {
                    let outside = Vec3::new(
                        excess.x.max(0.0) * q.x.signum(),
                        excess.y.max(0.0) * q.y.signum(),
                        excess.z.max(0.0) * q.z.signum(),
                    );
                    (outside.norm(), outside.normalized())
                } else {
                    // Inside: nearest face along the least-deep axis.
                    let (mut axis, mut depth) = (0, excess.x);
                    if excess.y > depth {
                        axis = 1;
                        depth = excess.y;
                    }
                    if excess.z > depth {
                        axis = 2;
                        depth = excess.z;
                    }
                    let mut n = Vec3::zero();
                    n[axis] = if q[axis] >= 0.0 { 1.0 } else { -1.0 };
                    (depth, n)
                }
            }
            ColliderShape::Cylinder {
                center,
                radius,
                half_height,
            } => {
                let q = p - center;
                let radial = Vec3::new(q.x, 0.0, q.z);
                let rd = radial.norm() - radius;
                let yd = q.y.abs() - half_height;
                if rd > 0.0 || yd > 0.0 {
                    let rn = if radial.norm() > 1e-12 {
                        radial.normalized()
                    } else {
                        Vec3::new(1.0, 0.0, 0.0)
                    };
                    let out = rn.scale(rd.max(0.0))
                        + Vec3::new(0.0, yd.max(0.0) * q.y.signum(), 0.0);
                    (out.norm(), out.normalized())
                } else if rd > yd {
                    let rn = if radial.norm() > 1e-12 {
                        radial.normalized()
                    } else {
                        Vec3::new(1.0, 0.0, 0.0)
                    };
                    (rd, rn)
                } else {
                    (yd, Vec3::new(0.0, q.y.signum(), 0.0))
                }
            }
        }
    }
}

fn zero_vec() -> Vec3 {
    Vec3::zero()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Collider {
    pub shape: ColliderShape,
    /// Coulomb friction coefficient; `inf` or any value >= STICKY is sticky.
    #[serde(default)]
    pub friction: Scalar,
    /// Swap inside and outside, turning the shape into a container.
    #[serde(default)]
    pub inverted: bool,
    /// Constant kinematic velocity of the collider.
    #[serde(default = "zero_vec")]
    pub velocity: Vec3,
}

/// Friction values at or above this behave as fully sticky contact.
pub const STICKY: Scalar = 1e6;

impl Collider {
    pub fn fixed(shape: ColliderShape, friction: Scalar) -> Self {
        Self {
            shape,
            friction,
            inverted: false,
            velocity: Vec3::zero(),
        }
    }

    pub fn signed_distance(&self, p: Vec3) -> (Scalar, Vec3) {
        let (d, n) = self.shape.signed_distance(p);
        if self.inverted {
            (-d, -n)
        } else {
            (d, n)
        }
    }

    /// Resolve a penetrating candidate position `x + dt v`.
    ///
    /// Returns the corrected velocity, or `None` when the candidate is
    /// outside the solid. The normal component is adjusted so the candidate
    /// lands exactly on the surface (to first order in the SDF); the
    /// tangential component, relative to the collider motion, is reduced per
    /// Coulomb friction against the normal correction impulse.
    pub fn resolve(&self, x: Vec3, v: Vec3, dt: Scalar) -> Option<Vec3> {
        let candidate = x + v.scale(dt);
        // The collider surface itself advances by dt * velocity.
        let (d, n) = self.signed_distance(candidate - self.velocity.scale(dt));
        if d >= 0.0 {
            return None;
        }
        let v_rel = v - self.velocity;
        let vn = v_rel.dot(n);
        let push = -d / dt;
        let vn_new = vn + push;
        let vt = v_rel - n.scale(vn);
        let vt_new = if self.friction >= STICKY {
            Vec3::zero()
        } else {
            let speed = vt.norm();
            if speed > 1e-14 {
                vt.scale((1.0 - self.friction * push / speed).max(0.0))
            } else {
                vt
            }
        };
        Some(self.velocity + n.scale(vn_new) + vt_new)
    }
}
