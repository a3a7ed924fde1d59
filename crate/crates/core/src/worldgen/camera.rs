//! Camera poses, unit quaternions, and the Gaussian pose perturbation.

use crate::rng::Rng;

/// Unit quaternion (w, x, y, z), Hamilton convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Quat {
        let n = self.norm();
        Quat {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    /// Hamilton product self ⊗ other.
    pub fn mul(&self, o: &Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Rotation quaternion from an axis-angle vector (angle = |v|, axis =
    /// v/|v|); the zero vector maps to the identity rotation.
    pub fn from_axis_angle(v: [f64; 3]) -> Quat {
        let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if angle < 1e-300 {
            return Quat::IDENTITY;
        }
        let half = 0.5 * angle;
        let s = half.sin() / angle;
        Quat {
            w: half.cos(),
            x: v[0] * s,
            y: v[1] * s,
            z: v[2] * s,
        }
    }

    /// Rotate a vector: q v q^{-1} for a unit quaternion.
    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        // t = 2 q_vec × v; v' = v + w t + q_vec × t
        let q = [self.x, self.y, self.z];
        let t = [
            2.0 * (q[1] * v[2] - q[2] * v[1]),
            2.0 * (q[2] * v[0] - q[0] * v[2]),
            2.0 * (q[0] * v[1] - q[1] * v[0]),
        ];
        [
            v[0] + self.w * t[0] + q[1] * t[2] - q[2] * t[1],
            v[1] + self.w * t[1] + q[2] * t[0] - q[0] * t[2],
            v[2] + self.w * t[2] + q[0] * t[1] - q[1] * t[0],
        ]
    }

    /// Inverse rotation (conjugate, for unit quaternions).
    pub fn rotate_inv(&self, v: [f64; 3]) -> [f64; 3] {
        Quat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
        .rotate(v)
    }

    /// Quaternion from a rotation matrix given as three orthonormal columns
    /// (Shepperd's method).
    pub fn from_columns(cx: [f64; 3], cy: [f64; 3], cz: [f64; 3]) -> Quat {
        let m = [
            [cx[0], cy[0], cz[0]],
            [cx[1], cy[1], cz[1]],
            [cx[2], cy[2], cz[2]],
        ];
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat {
                w: 0.25 * s,
                x: (m[2][1] - m[1][2]) / s,
                y: (m[0][2] - m[2][0]) / s,
                z: (m[1][0] - m[0][1]) / s,
            }
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat {
                w: (m[2][1] - m[1][2]) / s,
                x: 0.25 * s,
                y: (m[0][1] + m[1][0]) / s,
                z: (m[0][2] + m[2][0]) / s,
            }
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat {
                w: (m[0][2] - m[2][0]) / s,
                x: (m[0][1] + m[1][0]) / s,
                y: 0.25 * s,
                z: (m[1][2] + m[2][1]) / s,
            }
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat {
                w: (m[1][0] - m[0][1]) / s,
                x: (m[0][2] + m[2][0]) / s,
                y: (m[1][2] + m[2][1]) / s,
                z: 0.25 * s,
            }
        };
        q.normalized()
    }
}

/// Camera extrinsics: position in meters plus a unit orientation quaternion
/// mapping camera coordinates to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: [f64; 3],
    pub orientation: Quat,
}

impl CameraPose {
    /// Pose at `position` with the camera +z axis pointing at `target`.
    pub fn look_at(position: [f64; 3], target: [f64; 3]) -> CameraPose {
        let fwd = normalize([
            target[0] - position[0],
            target[1] - position[1],
            target[2] - position[2],
        ]);
        let world_up = [0.0, 0.0, 1.0];
        let mut right = cross(world_up, fwd);
        let rn = len(right);
        if rn < 1e-9 {
            // Looking straight up/down; pick an arbitrary right axis.
            right = [1.0, 0.0, 0.0];
        } else {
            right = [right[0] / rn, right[1] / rn, right[2] / rn];
        }
        let down = cross(fwd, right);
        CameraPose {
            position,
            orientation: Quat::from_columns(right, down, fwd),
        }
    }

    /// World point into camera coordinates.
    pub fn world_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        self.orientation.rotate_inv([
            p[0] - self.position[0],
            p[1] - self.position[1],
            p[2] - self.position[2],
        ])
    }

    pub fn to_f64s(&self) -> [f64; 7] {
        [
            self.position[0],
            self.position[1],
            self.position[2],
            self.orientation.w,
            self.orientation.x,
            self.orientation.y,
            self.orientation.z,
        ]
    }

    pub fn from_f64s(v: &[f64]) -> CameraPose {
        CameraPose {
            position: [v[0], v[1], v[2]],
            orientation: Quat {
                w: v[3],
                x: v[4],
                y: v[5],
                z: v[6],
            },
        }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn len(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = len(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Gaussian pose perturbation: an axis-angle rotation noise dtheta ~
/// N(0, sigma_theta^2 I) composed on the left of the original orientation,
/// and a translation noise dp ~ N(0, sigma_p^2 I) added to the position.
/// The returned quaternion is renormalized. Zero noise returns the pose
/// verbatim (bit-identical).
pub fn perturb_pose(pose: &CameraPose, sigma_theta: f64, sigma_p: f64, rng: &mut Rng) -> CameraPose {
    if sigma_theta == 0.0 && sigma_p == 0.0 {
        return *pose;
    }
    let dtheta = [
        sigma_theta * rng.normal(),
        sigma_theta * rng.normal(),
        sigma_theta * rng.normal(),
    ];
    let dp = [
        sigma_p * rng.normal(),
        sigma_p * rng.normal(),
        sigma_p * rng.normal(),
    ];
    let dq = Quat::from_axis_angle(dtheta);
    CameraPose {
        position: [
            pose.position[0] + dp[0],
            pose.position[1] + dp[1],
            pose.position[2] + dp[2],
        ],
        orientation: dq.mul(&pose.orientation).normalized(),
    }
}

/// Default perturbation scale for viewpoint stress evaluation (radians).
pub const DEFAULT_SIGMA_THETA: f64 = 0.075;
/// Default translation perturbation scale (meters).
pub const DEFAULT_SIGMA_P: f64 = 0.03;
