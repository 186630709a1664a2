use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::grid::GRID_EXTENT_M;
use crate::error::{invalid, Result};
use crate::rng::Rng;

/// Gripper position `r` (meters) and unit orientation `q = [w, x, y, z]`
/// relative to the target frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub r: [f64; 3],
    pub q: [f64; 4],
}

pub const POSE_DIM: usize = 7;

impl Pose {
    pub fn identity() -> Self {
        Self {
            r: [0.0; 3],
            q: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Builds a pose with a normalized, `q_w >= 0` quaternion.
    pub fn new(r: [f64; 3], q: [f64; 4]) -> Result<Self> {
        Ok(Self { r, q: canonical_quat(q)? })
    }

    pub fn quat_norm(&self) -> f64 {
        self.q.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::new_normalize(Quaternion::new(self.q[0], self.q[1], self.q[2], self.q[3]))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation().to_rotation_matrix().into_inner()
    }

    /// Network-facing vector: position divided by the grid extent, then the
    /// raw quaternion.
    pub fn to_normalized(&self) -> [f64; POSE_DIM] {
        [
            self.r[0] / GRID_EXTENT_M,
            self.r[1] / GRID_EXTENT_M,
            self.r[2] / GRID_EXTENT_M,
            self.q[0],
            self.q[1],
            self.q[2],
            self.q[3],
        ]
    }

    /// Inverse of [`Pose::to_normalized`]; the quaternion is renormalized.
    pub fn from_normalized(v: &[f64]) -> Result<Self> {
        if v.len() != POSE_DIM {
            return Err(invalid(format!("pose vector needs 7 values, got {}", v.len())));
        }
        Pose::new(
            [v[0] * GRID_EXTENT_M, v[1] * GRID_EXTENT_M, v[2] * GRID_EXTENT_M],
            [v[3], v[4], v[5], v[6]],
        )
    }

    pub fn to_array(&self) -> [f64; POSE_DIM] {
        [self.r[0], self.r[1], self.r[2], self.q[0], self.q[1], self.q[2], self.q[3]]
    }

    /// Rotation angle between two orientations in degrees.
    pub fn angle_to_deg(&self, other: &Pose) -> f64 {
        self.rotation().angle_to(&other.rotation()).to_degrees()
    }
}

/// Normalizes and flips the sign so that `q_w >= 0`.
pub fn canonical_quat(q: [f64; 4]) -> Result<[f64; 4]> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(invalid(format!("quaternion {q:?} cannot be normalized")));
    }
    let s = if q[0] < 0.0 { -1.0 / norm } else { 1.0 / norm };
    Ok([q[0] * s, q[1] * s, q[2] * s, q[3] * s])
}

pub fn quat_from_axis_angle(axis: [f64; 3], angle_rad: f64) -> [f64; 4] {
    let uq = UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), angle_rad);
    let q = uq.quaternion();
    canonical_quat([q.w, q.i, q.j, q.k]).expect("unit")
}

pub fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let qa = Quaternion::new(a[0], a[1], a[2], a[3]);
    let qb = Quaternion::new(b[0], b[1], b[2], b[3]);
    let p = qa * qb;
    canonical_quat([p.w, p.i, p.j, p.k]).expect("product of unit quaternions")
}

/// Rotation about a uniformly random axis by an angle uniform in
/// `[0, max_deg]`.
pub fn random_small_rotation(rng: &mut Rng, max_deg: f64) -> [f64; 4] {
    let axis: [f64; 3] = loop {
        let a = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n: f64 = a.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        if n > 1e-6 {
            break a;
        }
    };
    let angle = rng.random_range(0.0..=max_deg).to_radians();
    quat_from_axis_angle(axis, angle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_sign_and_norm() {
        let q = canonical_quat([-2.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(q, [1.0, 0.0, 0.0, 0.0]);
        let p = Pose::new([0.0; 3], [-0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(p.q[0] >= 0.0);
        assert!((p.quat_norm() - 1.0).abs() < 1e-12);
        assert!(canonical_quat([0.0; 4]).is_err());
    }

    #[test]
    fn normalized_round_trip() {
        let p = Pose::new([0.01, -0.02, 0.003], [0.9, 0.1, -0.3, 0.2]).unwrap();
        let back = Pose::from_normalized(&p.to_normalized()).unwrap();
        for i in 0..3 {
            assert!((back.r[i] - p.r[i]).abs() < 1e-15);
        }
        assert!(p.angle_to_deg(&back) < 1e-6);
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let q = quat_from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        let m = Pose { r: [0.0; 3], q }.rotation_matrix();
        let v = m * Vector3::new(1.0, 0.0, 0.0);
        assert!((v - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }
}
