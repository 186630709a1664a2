use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{invalid, Error, Result};
use crate::voxel::grid::{VoxelGrid, FACE_DIRS};
use crate::voxel::gripper::{finger_voxels, GripperSample, GRIPPER_MU};
use crate::voxel::pose::Pose;
use crate::voxel::props::inertia_tensor;
use crate::voxel::TargetSample;

/// A finger voxel this close to a target voxel centre (voxels) is touching.
pub const TOUCH_DISTANCE: f64 = 1.0;
/// Target surface voxels within one voxel gap of a closed finger (centre
/// distance) become contacts.
pub const CONTACT_RADIUS: f64 = 2.0;
/// Contacts must face the finger: outward normal within ~32° of the
/// direction the finger arrives from.
pub const FACING_COS: f64 = 0.85;
/// Each finger starts this far (voxels) behind its modelled position, so
/// the gripper opens wider than its fingertip grid before closing.
pub const FINGER_STROKE: f64 = 4.0;
/// Neighbourhood radius (voxels) used to estimate surface normals.
const NORMAL_RADIUS: i64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    /// Meters, target frame.
    pub position: [f64; 3],
    /// Unit vector pointing into the target.
    pub normal: [f64; 3],
    pub mu: f64,
}

pub type ContactSet = Vec<Contact>;

/// Target data reused across grasp evaluations.
#[derive(Clone, Debug)]
pub struct PreparedTarget {
    pub(crate) grid: VoxelGrid,
    /// Surface voxel centres, voxel units.
    pub(crate) surface: Vec<Vector3<f64>>,
    /// Outward unit normals per surface voxel.
    pub(crate) outward: Vec<Vector3<f64>>,
    /// Exposed face centres per surface voxel, voxel units.
    pub(crate) face: Vec<Vector3<f64>>,
    pub(crate) com: Vector3<f64>,
    pub(crate) principal_axes: [Vector3<f64>; 3],
    pub(crate) mass: f64,
    pub(crate) mu: f64,
}

impl PreparedTarget {
    pub fn new(target: &TargetSample) -> Result<Self> {
        let grid = target.grid.clone();
        let (_, tensor) = inertia_tensor(&grid, 1.0).ok_or_else(|| invalid("empty target"))?;
        let com = crate::voxel::props::center_of_mass_voxels(&grid).expect("nonempty");
        let mut surface = Vec::new();
        let mut outward = Vec::new();
        let mut face = Vec::new();
        for [x, y, z] in grid.occupied() {
            if !grid.is_surface(x, y, z) {
                continue;
            }
            let c = Vector3::from(grid.centered(x, y, z));
            let n = estimate_normal(&grid, x, y, z);
            let (xi, yi, zi) = (x as i64, y as i64, z as i64);
            let best_face = FACE_DIRS
                .iter()
                .filter(|d| !grid.get_signed(xi + d[0], yi + d[1], zi + d[2]))
                .map(|d| Vector3::new(d[0] as f64, d[1] as f64, d[2] as f64))
                .max_by(|a, b| a.dot(&n).total_cmp(&b.dot(&n)))
                .expect("surface voxel has an exposed face");
            surface.push(c);
            outward.push(n);
            face.push(c + best_face * 0.5);
        }
        let eig = SymmetricEigen::new(tensor);
        let principal_axes = [0, 1, 2].map(|i| eig.eigenvectors.column(i).normalize());
        Ok(Self {
            grid,
            surface,
            outward,
            face,
            com: Vector3::from(com),
            principal_axes,
            mass: target.props.mass,
            mu: target.props.friction_mu.min(GRIPPER_MU),
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Combined target/fingertip friction coefficient.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn occupied_at(&self, p: &Vector3<f64>) -> bool {
        let c = self.grid.resolution() as f64 / 2.0;
        self.grid
            .get_signed((p.x + c).floor() as i64, (p.y + c).floor() as i64, (p.z + c).floor() as i64)
    }
}

/// Outward normal from the empty cells in a small neighbourhood; falls back
/// to the sum of exposed face directions.
fn estimate_normal(grid: &VoxelGrid, x: usize, y: usize, z: usize) -> Vector3<f64> {
    let (xi, yi, zi) = (x as i64, y as i64, z as i64);
    let mut acc = Vector3::zeros();
    for dx in -NORMAL_RADIUS..=NORMAL_RADIUS {
        for dy in -NORMAL_RADIUS..=NORMAL_RADIUS {
            for dz in -NORMAL_RADIUS..=NORMAL_RADIUS {
                let r2 = dx * dx + dy * dy + dz * dz;
                if r2 == 0 || r2 > NORMAL_RADIUS * NORMAL_RADIUS {
                    continue;
                }
                if !grid.get_signed(xi + dx, yi + dy, zi + dz) {
                    acc += Vector3::new(dx as f64, dy as f64, dz as f64) / (r2 as f64).sqrt();
                }
            }
        }
    }
    if acc.norm() < 1e-9 {
        acc = FACE_DIRS
            .iter()
            .filter(|d| !grid.get_signed(xi + d[0], yi + d[1], zi + d[2]))
            .map(|d| Vector3::new(d[0] as f64, d[1] as f64, d[2] as f64))
            .sum();
    }
    if acc.norm() < 1e-9 {
        acc = Vector3::x();
    }
    acc.normalize()
}

/// Fingertip voxels in the gripper frame, voxel units.
#[derive(Clone, Debug)]
pub struct PreparedGripper {
    pub(crate) solid: [Vec<Vector3<f64>>; 2],
    pub(crate) surface: [Vec<Vector3<f64>>; 2],
}

impl PreparedGripper {
    pub fn new(gripper: &GripperSample) -> Self {
        let f = finger_voxels(&gripper.grid);
        let conv = |v: &Vec<[f64; 3]>| v.iter().map(|p| Vector3::from(*p)).collect::<Vec<_>>();
        Self {
            solid: [conv(&f.solid[0]), conv(&f.solid[1])],
            surface: [conv(&f.surface[0]), conv(&f.surface[1])],
        }
    }
}

/// Contacts after closing, with the finger each contact came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedGrasp {
    pub contacts: ContactSet,
    pub finger: Vec<u8>,
    /// Closing direction of the left finger, target frame.
    pub closing_axis: [f64; 3],
}

/// Smallest travel `s >= 0` along unit `d` bringing `f` within `radius` of
/// `t`, if any.
fn entry_travel(f: &Vector3<f64>, d: &Vector3<f64>, t: &Vector3<f64>, radius: f64) -> Option<f64> {
    let w = t - f;
    let b = w.dot(d);
    let c = w.norm_squared() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - c;
    if disc < 0.0 || b <= 0.0 {
        return None;
    }
    Some(b - disc.sqrt())
}

fn pose_transform(pose: &Pose, voxel_edge: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let rot = pose.rotation_matrix();
    let t = Vector3::from(pose.r) / voxel_edge;
    (rot, t)
}

/// Opens both fingers by [`FINGER_STROKE`], closes them along the gripper x
/// axis until each touches the target, then collects target surface voxels
/// near the closed fingertips that face them.
pub fn close_fingers(target: &PreparedTarget, gripper: &PreparedGripper, pose: &Pose) -> Result<ClosedGrasp> {
    if pose.r.iter().chain(pose.q.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("pose is not finite"));
    }
    let h = target.grid.voxel_edge();
    let n = target.grid.resolution() as f64;
    if pose.r.iter().any(|v| v.abs() > n * h) {
        return Err(invalid(format!("pose {:?} places the gripper outside the workspace", pose.r)));
    }
    let (rot, t) = pose_transform(pose, h);
    let axis = rot * Vector3::x();
    let open = [t - axis * FINGER_STROKE, t + axis * FINGER_STROKE];
    for (finger, offset) in gripper.solid.iter().zip(&open) {
        for p in finger {
            if target.occupied_at(&(rot * p + offset)) {
                return Err(Error::Penetration);
            }
        }
    }
    let max_travel = FINGER_STROKE + n / 2.0;
    let mut contacts = Vec::new();
    let mut labels = Vec::new();
    for (fi, surface) in gripper.surface.iter().enumerate() {
        let d = if fi == 0 { axis } else { -axis };
        let placed: Vec<Vector3<f64>> = surface.iter().map(|p| rot * p + open[fi]).collect();
        let mut travel = f64::INFINITY;
        for f in &placed {
            for s in &target.surface {
                if let Some(e) = entry_travel(f, &d, s, TOUCH_DISTANCE) {
                    travel = travel.min(e);
                }
            }
        }
        if travel > max_travel {
            continue;
        }
        let closed: Vec<Vector3<f64>> = placed.iter().map(|f| f + d * travel).collect();
        let r2 = CONTACT_RADIUS * CONTACT_RADIUS;
        for (i, s) in target.surface.iter().enumerate() {
            if target.outward[i].dot(&-d) < FACING_COS {
                continue;
            }
            if closed.iter().any(|f| (f - s).norm_squared() <= r2) {
                let inward = -target.outward[i];
                contacts.push(Contact {
                    position: (target.face[i] * h).into(),
                    normal: inward.into(),
                    mu: target.mu,
                });
                labels.push(fi as u8);
            }
        }
    }
    Ok(ClosedGrasp {
        contacts,
        finger: labels,
        closing_axis: axis.into(),
    })
}

pub fn extract_contacts(target: &TargetSample, gripper: &GripperSample, pose: &Pose) -> Result<ContactSet> {
    let t = PreparedTarget::new(target)?;
    let g = PreparedGripper::new(gripper);
    Ok(close_fingers(&t, &g, pose)?.contacts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::gripper::{generate_gripper, FingertipKind};
    use crate::voxel::target::{generate_target, ShapeFamily};

    fn flat_gripper() -> GripperSample {
        generate_gripper(FingertipKind::Flat, 0.0, 0).unwrap()
    }

    #[test]
    fn far_away_gripper_has_no_contacts() {
        let t = generate_target(ShapeFamily::Box, &[4.0, 6.0, 6.0], 0).unwrap();
        // Shifted 12 voxels along z: pads pass above the box.
        let pose = Pose::new([0.0, 0.0, 0.075], [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(extract_contacts(&t, &flat_gripper(), &pose).unwrap().is_empty());
    }

    #[test]
    fn flush_flat_fingers_touch_exactly_two_opposing_faces() {
        let t = generate_target(ShapeFamily::Box, &[4.0, 12.0, 12.0], 0).unwrap();
        let contacts = extract_contacts(&t, &flat_gripper(), &Pose::identity()).unwrap();
        let h = t.grid.voxel_edge();
        // Box spans voxels 6..=9 in x; faces at x = -2 and +2 voxels.
        let mut faces = std::collections::BTreeSet::new();
        for c in &contacts {
            let x = (c.position[0] / h * 2.0).round() as i64;
            faces.insert(x);
            assert!((c.position[0].abs() / h - 2.0).abs() < 1e-9);
        }
        assert_eq!(faces.into_iter().collect::<Vec<_>>(), vec![-4, 4]);
        // The 10 x 10 pads cover 100 voxels of each face.
        assert_eq!(contacts.len(), 200);
        for c in &contacts {
            let n = Vector3::from(c.normal);
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn penetrating_pose_rejected() {
        let t = generate_target(ShapeFamily::Box, &[12.0, 12.0, 12.0], 0).unwrap();
        // Shifted 6 voxels along x, the open left pad sits inside the box.
        let pose = Pose::new([0.0375, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            extract_contacts(&t, &flat_gripper(), &pose),
            Err(Error::Penetration)
        ));
    }

    #[test]
    fn entry_travel_geometry() {
        let f = Vector3::zeros();
        let d = Vector3::x();
        assert_eq!(entry_travel(&f, &d, &Vector3::new(3.0, 0.0, 0.0), 1.0), Some(2.0));
        assert_eq!(entry_travel(&f, &d, &Vector3::new(-3.0, 0.0, 0.0), 1.0), None);
        assert_eq!(entry_travel(&f, &d, &Vector3::new(3.0, 2.0, 0.0), 1.0), None);
        assert_eq!(entry_travel(&f, &d, &Vector3::new(0.5, 0.0, 0.0), 1.0), Some(0.0));
    }
}
