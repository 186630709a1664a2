//! Canonical pre-grasp: fingers straddle the centre of mass and close along
//! the target's thinnest principal direction.

use nalgebra::{SymmetricEigen, UnitQuaternion, Vector3};

use super::grid::VoxelGrid;
use super::pose::{canonical_quat, Pose};
use super::props::{center_of_mass_voxels, inertia_tensor};
use crate::error::{invalid, Result};

/// Relative tolerance under which two extents count as equal.
const TIE_TOLERANCE: f64 = 0.05;

/// Extent of the occupied voxel centres along `axis`, in voxels.
fn extent_along(grid: &VoxelGrid, axis: &Vector3<f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for [x, y, z] in grid.occupied() {
        let p = Vector3::from(grid.centered(x, y, z));
        let d = p.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    hi - lo + 1.0
}

/// Direction the fingers close along, with non-negative x component.
///
/// Candidates are the principal axes. When the thinnest extent is shared by
/// several axes the closing direction is the projection of the grid x axis
/// onto their span, so symmetric shapes get a stable answer.
pub fn closing_axis(grid: &VoxelGrid) -> Result<Vector3<f64>> {
    let (_, tensor) = inertia_tensor(grid, 1.0).ok_or_else(|| invalid("empty target has no pre-grasp"))?;
    let eig = SymmetricEigen::new(tensor);
    let axes: Vec<Vector3<f64>> = (0..3).map(|i| eig.eigenvectors.column(i).normalize()).collect();
    let extents: Vec<f64> = axes.iter().map(|a| extent_along(grid, a)).collect();
    let min = extents.iter().copied().fold(f64::INFINITY, f64::min);
    let tied: Vec<&Vector3<f64>> = axes
        .iter()
        .zip(&extents)
        .filter(|(_, &e)| e <= min * (1.0 + TIE_TOLERANCE))
        .map(|(a, _)| a)
        .collect();
    let ex = Vector3::x();
    let mut axis = match tied.len() {
        1 => *tied[0],
        2 => {
            let proj = tied[0] * tied[0].dot(&ex) + tied[1] * tied[1].dot(&ex);
            if proj.norm() > 1e-6 {
                proj.normalize()
            } else {
                *tied[0]
            }
        }
        _ => ex,
    };
    if axis.x < 0.0 || (axis.x == 0.0 && (axis.y < 0.0 || (axis.y == 0.0 && axis.z < 0.0))) {
        axis = -axis;
    }
    Ok(axis)
}

pub fn canonical_pregrasp(grid: &VoxelGrid) -> Result<Pose> {
    let com = center_of_mass_voxels(grid).ok_or_else(|| invalid("empty target has no pre-grasp"))?;
    let axis = closing_axis(grid)?;
    let h = grid.voxel_edge();
    let rot = UnitQuaternion::rotation_between(&Vector3::x(), &axis).unwrap_or_else(UnitQuaternion::identity);
    let q = rot.quaternion();
    Pose::new(com.map(|c| c * h), canonical_quat([q.w, q.i, q.j, q.k])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::pose::quat_from_axis_angle;
    use crate::voxel::target::{generate_target, perturb_sample, ShapeFamily};

    #[test]
    fn thin_box_closes_along_x() {
        let t = generate_target(ShapeFamily::Box, &[4.0, 10.0, 8.0], 0).unwrap();
        let p = canonical_pregrasp(&t.grid).unwrap();
        assert!(p.angle_to_deg(&Pose::identity()) < 1e-6);
        assert!(p.r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pregrasp_follows_yaw() {
        let t = generate_target(ShapeFamily::Box, &[4.0, 10.0, 8.0], 0).unwrap();
        let q = quat_from_axis_angle([0.0, 0.0, 1.0], 30f64.to_radians());
        let r = perturb_sample(&t, q, 1.0, [0.0; 3]).unwrap();
        let p = canonical_pregrasp(&r.grid).unwrap();
        let angle = p.angle_to_deg(&Pose { r: [0.0; 3], q });
        assert!(angle < 6.0, "{angle}");
    }

    #[test]
    fn sphere_uses_grid_x() {
        let t = generate_target(ShapeFamily::Sphere, &[3.0], 0).unwrap();
        let p = canonical_pregrasp(&t.grid).unwrap();
        let axis = p.rotation_matrix() * Vector3::x();
        assert!((axis - Vector3::x()).norm() < 1e-9);
    }
}
