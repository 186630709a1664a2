use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::grid::VoxelGrid;
use crate::error::{invalid, Result};

/// PLA density in kg/m³.
pub const PLA_DENSITY: f64 = 1250.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalProperties {
    /// kg
    pub mass: f64,
    /// Sorted ascending, kg·m².
    pub principal_moments: [f64; 3],
    pub friction_mu: f64,
}

pub const PROPERTY_DIM: usize = 5;

impl PhysicalProperties {
    /// `[mass, I1, I2, I3, mu]`
    pub fn to_array(&self) -> [f64; PROPERTY_DIM] {
        let [i1, i2, i3] = self.principal_moments;
        [self.mass, i1, i2, i3, self.friction_mu]
    }

    pub fn from_array(v: &[f64]) -> Result<Self> {
        if v.len() != PROPERTY_DIM {
            return Err(invalid(format!("property block needs 5 values, got {}", v.len())));
        }
        Ok(Self {
            mass: v[0],
            principal_moments: [v[1], v[2], v[3]],
            friction_mu: v[4],
        })
    }

    /// Rigid scaling of the body by `s`: mass grows with `s³`, moments with `s⁵`.
    pub fn scaled(&self, s: f64) -> Self {
        let k = s.powi(5);
        let mut m = self.principal_moments.map(|v| v * k);
        m.sort_by(f64::total_cmp);
        Self {
            mass: self.mass * s.powi(3),
            principal_moments: m,
            friction_mu: self.friction_mu,
        }
    }
}

/// Centre of mass in voxel units relative to the grid centre.
pub fn center_of_mass_voxels(grid: &VoxelGrid) -> Option<[f64; 3]> {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for [x, y, z] in grid.occupied() {
        let c = grid.centered(x, y, z);
        for a in 0..3 {
            sum[a] += c[a];
        }
        n += 1;
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

/// Inertia tensor about the centre of mass (kg·m²), each voxel a point mass
/// at its centre.
pub fn inertia_tensor(grid: &VoxelGrid, density: f64) -> Option<(f64, Matrix3<f64>)> {
    let com = center_of_mass_voxels(grid)?;
    let h = grid.voxel_edge();
    let m_voxel = density * h * h * h;
    let mut tensor = Matrix3::zeros();
    let mut count = 0usize;
    for [x, y, z] in grid.occupied() {
        let c = grid.centered(x, y, z);
        let r = Vector3::new((c[0] - com[0]) * h, (c[1] - com[1]) * h, (c[2] - com[2]) * h);
        tensor += (Matrix3::identity() * r.norm_squared() - r * r.transpose()) * m_voxel;
        count += 1;
    }
    Some((count as f64 * m_voxel, tensor))
}

pub fn compute_physical_properties(grid: &VoxelGrid, density: f64, friction_mu: f64) -> Result<PhysicalProperties> {
    if !(density > 0.0) {
        return Err(invalid(format!("density must be positive, got {density}")));
    }
    let (mass, tensor) = inertia_tensor(grid, density)
        .ok_or_else(|| invalid("cannot compute properties of an empty grid"))?;
    let mut eig: Vec<f64> = SymmetricEigen::new(tensor).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    eig.sort_by(f64::total_cmp);
    Ok(PhysicalProperties {
        mass,
        principal_moments: [eig[0], eig[1], eig[2]],
        friction_mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::grid::RESOLUTION;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn solid_cube_matches_closed_form() {
        let g = VoxelGrid::from_fn(RESOLUTION, |_, _, _| true);
        let p = compute_physical_properties(&g, PLA_DENSITY, 0.4).unwrap();
        assert!(rel(p.mass, 1.25) < 1e-12);
        // Solid cube of side a: I = m a² / 6.
        let expected = 1.25 * 0.1 * 0.1 / 6.0;
        for i in p.principal_moments {
            assert!(rel(i, expected) < 0.02, "{i} vs {expected}");
        }
    }

    #[test]
    fn single_voxel_has_no_moment() {
        let g = VoxelGrid::from_fn(RESOLUTION, |x, y, z| (x, y, z) == (3, 4, 5));
        let p = compute_physical_properties(&g, PLA_DENSITY, 0.4).unwrap();
        assert!(p.principal_moments.iter().all(|&v| v < 1e-9));
    }

    #[test]
    fn elongated_box_smallest_moment_about_long_axis() {
        // 14 x 8 x 6 voxel cuboid, long axis x.
        let (lx, ly, lz) = (14usize, 8usize, 6usize);
        let g = VoxelGrid::from_fn(RESOLUTION, |x, y, z| x < lx && y < ly && z < lz);
        let p = compute_physical_properties(&g, PLA_DENSITY, 0.4).unwrap();
        let h = g.voxel_edge();
        let (a, b, c) = (lx as f64 * h, ly as f64 * h, lz as f64 * h);
        let m = p.mass;
        let about_x = m * (b * b + c * c) / 12.0;
        let about_y = m * (a * a + c * c) / 12.0;
        let about_z = m * (a * a + b * b) / 12.0;
        let [i1, i2, i3] = p.principal_moments;
        assert!(rel(i1, about_x) < 0.05);
        assert!(rel(i2, about_y) < 0.05);
        assert!(rel(i3, about_z) < 0.05);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(compute_physical_properties(&VoxelGrid::empty(4), PLA_DENSITY, 0.4).is_err());
    }

    #[test]
    fn scaling_follows_cube_and_fifth_power_laws() {
        let p = PhysicalProperties {
            mass: 0.3,
            principal_moments: [1e-4, 2e-4, 2.5e-4],
            friction_mu: 0.5,
        };
        let s = p.scaled(2.0);
        assert_eq!(s.mass, 2.4);
        assert_eq!(s.principal_moments, [32e-4, 64e-4, 80e-4]);
    }
}
