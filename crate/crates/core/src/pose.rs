//! Camera poses and quaternion geometry.
//!
//! Quaternions are stored `(w, x, y, z)`. A pose's quaternion rotates
//! camera-frame vectors into the world frame; the camera looks along its
//! local `+z` axis with `+x` right and `+y` down.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Vec3 = [f64; 3];
pub type Quat = [f64; 4];

/// Camera position (meters, world frame) and unit orientation quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: Vec3,
    pub q: Quat,
}

impl Pose {
    /// Normalizes and sign-canonicalizes `q`.
    pub fn new(x: Vec3, q: Quat) -> Result<Self> {
        if !x.iter().chain(q.iter()).all(|v| v.is_finite()) {
            return Err(invalid!("pose has non-finite components"));
        }
        let n = norm4(&q);
        if n < 1e-12 {
            return Err(invalid!("pose quaternion has zero norm"));
        }
        Ok(Self {
            x,
            q: canonical(scale4(&q, 1.0 / n)),
        })
    }

    pub fn is_valid(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
            && (norm4(&self.q) - 1.0).abs() < 1e-6
            && canonical(self.q) == self.q
    }

    /// World point expressed in the camera frame: `R(q)^T (p - x)`.
    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        rotate(&conj(&self.q), &sub3(p, &self.x))
    }
}

pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn norm3(a: &Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot4(a: &Quat, b: &Quat) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm4(q: &Quat) -> f64 {
    dot4(q, q).sqrt()
}

fn scale4(q: &Quat, s: f64) -> Quat {
    [q[0] * s, q[1] * s, q[2] * s, q[3] * s]
}

/// Flips the sign so the first nonzero component is positive.
pub fn canonical(q: Quat) -> Quat {
    match q.iter().find(|v| **v != 0.0) {
        Some(v) if *v < 0.0 => scale4(&q, -1.0),
        _ => q,
    }
}

pub fn conj(q: &Quat) -> Quat {
    [q[0], -q[1], -q[2], -q[3]]
}

/// Hamilton product `a * b`.
pub fn quat_mul(a: &Quat, b: &Quat) -> Quat {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Rotates `v` by the unit quaternion `q`.
pub fn rotate(q: &Quat, v: &Vec3) -> Vec3 {
    let u = [q[1], q[2], q[3]];
    let t = cross3(&u, v);
    let t = [2.0 * t[0], 2.0 * t[1], 2.0 * t[2]];
    let c = cross3(&u, &t);
    [
        v[0] + q[0] * t[0] + c[0],
        v[1] + q[0] * t[1] + c[1],
        v[2] + q[0] * t[2] + c[2],
    ]
}

pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Quat {
    let n = norm3(axis);
    if n == 0.0 || angle == 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let (s, c) = (angle / 2.0).sin_cos();
    [c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n]
}

/// Quaternion whose rotation has the given camera axes as columns.
fn from_axes(right: &Vec3, down: &Vec3, forward: &Vec3) -> Quat {
    let m = [
        [right[0], down[0], forward[0]],
        [right[1], down[1], forward[1]],
        [right[2], down[2], forward[2]],
    ];
    let trace = m[0][0] + m[1][1] + m[2][2];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        ]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [
            (m[2][1] - m[1][2]) / s,
            0.25 * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        ]
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            0.25 * s,
            (m[1][2] + m[2][1]) / s,
        ]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            0.25 * s,
        ]
    };
    let n = norm4(&q);
    canonical(scale4(&q, 1.0 / n))
}

/// Orientation of a camera at `eye` looking at `target`, with world `+z` up.
pub fn look_at(eye: &Vec3, target: &Vec3) -> Result<Quat> {
    let f = sub3(target, eye);
    let fn_ = norm3(&f);
    if fn_ < 1e-12 {
        return Err(invalid!("look_at target coincides with eye"));
    }
    let f = [f[0] / fn_, f[1] / fn_, f[2] / fn_];
    let mut r = cross3(&f, &[0.0, 0.0, 1.0]);
    if norm3(&r) < 1e-9 {
        r = cross3(&f, &[0.0, 1.0, 0.0]);
    }
    let rn = norm3(&r);
    let r = [r[0] / rn, r[1] / rn, r[2] / rn];
    let d = cross3(&f, &r);
    Ok(from_axes(&r, &d, &f))
}

/// Euclidean distance between positions, meters.
pub fn position_loss(x: &Vec3, x0: &Vec3) -> f64 {
    norm3(&sub3(x, x0))
}

/// `|| q0 - q / ||q|| ||`. Sign-sensitive: `q` and `-q` differ by 2.
pub fn orientation_loss(q: &Quat, q0: &Quat) -> Result<f64> {
    let n = norm4(q);
    if n < 1e-12 {
        return Err(invalid!("orientation loss: quaternion norm {n:e} below 1e-12"));
    }
    Ok(q0
        .iter()
        .zip(q)
        .map(|(a, b)| (a - b / n).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Rotation angle between two unit quaternions, degrees; `q` and `-q` agree.
pub fn angular_error_deg(q1: &Quat, q2: &Quat) -> f64 {
    let d = dot4(q1, q2).abs().min(1.0);
    2.0 * d.acos().to_degrees()
}
