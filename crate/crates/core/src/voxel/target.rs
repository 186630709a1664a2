//! Procedural target objects with machining-like features, and the
//! rotation/scale/translation perturbations applied to them.

use nalgebra::Vector3;
use rand::Rng as _;

use super::grid::{VoxelGrid, RESOLUTION};
use super::pose::{canonical_quat, quat_from_axis_angle, quat_mul, random_small_rotation, Pose};
use super::props::{compute_physical_properties, PhysicalProperties, PLA_DENSITY};
use crate::error::{invalid, Result};
use crate::rng::{rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ShapeFamily {
    Box = 0,
    Cylinder = 1,
    Sphere = 2,
    LBracket = 3,
    SlottedBlock = 4,
    ThroughHoleBlock = 5,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 6] = [
        ShapeFamily::Box,
        ShapeFamily::Cylinder,
        ShapeFamily::Sphere,
        ShapeFamily::LBracket,
        ShapeFamily::SlottedBlock,
        ShapeFamily::ThroughHoleBlock,
    ];

    pub fn from_u8(v: u8) -> Result<Self> {
        Self::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| invalid(format!("unknown shape family {v}")))
    }

    /// Parameter layout, all lengths in voxels:
    /// - box: `[ex, ey, ez]`
    /// - cylinder (axis x): `[radius, length]`
    /// - sphere: `[radius]`
    /// - l_bracket (extruded along x): `[thickness, leg_y, leg_z, web]`
    /// - slotted_block (slot across the +z face, along x): `[ex, ey, ez, slot_width, slot_depth]`
    /// - through_hole_block (hole along x): `[ex, ey, ez, hole_radius]`
    pub fn param_count(self) -> usize {
        match self {
            ShapeFamily::Box => 3,
            ShapeFamily::Cylinder => 2,
            ShapeFamily::Sphere => 1,
            ShapeFamily::LBracket => 4,
            ShapeFamily::SlottedBlock => 5,
            ShapeFamily::ThroughHoleBlock => 4,
        }
    }
}

/// Rotation about the grid centre, uniform scale, then translation (voxels).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub rotation: [f64; 4],
    pub scale: f64,
    pub translation: [f64; 3],
}

impl Perturbation {
    pub fn identity() -> Self {
        Self {
            rotation: [1.0, 0.0, 0.0, 0.0],
            scale: 1.0,
            translation: [0.0; 3],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.rotation.to_vec();
        v.push(self.scale);
        v.extend_from_slice(&self.translation);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 8 {
            return Err(invalid(format!("perturbation needs 8 values, got {}", v.len())));
        }
        Ok(Self {
            rotation: [v[0], v[1], v[2], v[3]],
            scale: v[4],
            translation: [v[5], v[6], v[7]],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetProvenance {
    pub family: ShapeFamily,
    pub params: Vec<f64>,
    pub seed: u64,
    pub perturbation: Option<Perturbation>,
}

impl TargetProvenance {
    /// Flat parameter list: shape params followed by the 8 perturbation
    /// values when present.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.params.clone();
        if let Some(p) = &self.perturbation {
            v.extend(p.to_vec());
        }
        v
    }

    pub fn from_flat(family: ShapeFamily, flat: &[f64], seed: u64) -> Result<Self> {
        let k = family.param_count();
        let perturbation = match flat.len() {
            n if n == k => None,
            n if n == k + 8 => Some(Perturbation::from_slice(&flat[k..])?),
            n => return Err(invalid(format!("{family:?} provenance with {n} params"))),
        };
        Ok(Self {
            family,
            params: flat[..k].to_vec(),
            seed,
            perturbation,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetSample {
    pub grid: VoxelGrid,
    pub props: PhysicalProperties,
    pub provenance: TargetProvenance,
}

impl TargetSample {
    pub fn regenerate(p: &TargetProvenance) -> Result<Self> {
        let base = generate_target(p.family, &p.params, p.seed)?;
        match &p.perturbation {
            None => Ok(base),
            Some(pt) => perturb_sample(&base, pt.rotation, pt.scale, pt.translation),
        }
    }
}

fn rasterize(family: ShapeFamily, params: &[f64]) -> Result<VoxelGrid> {
    if params.len() != family.param_count() {
        return Err(invalid(format!(
            "{family:?} takes {} params, got {}",
            family.param_count(),
            params.len()
        )));
    }
    if params.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(format!("{family:?} params must be finite and non-negative: {params:?}")));
    }
    let n = RESOLUTION;
    let nf = n as f64;
    let p = params;
    let inside_box = |c: [f64; 3], e: [f64; 3]| c[0].abs() < e[0] / 2.0 && c[1].abs() < e[1] / 2.0 && c[2].abs() < e[2] / 2.0;
    let fits = |extents: &[f64]| extents.iter().all(|&e| e > 0.0 && e <= nf);
    let degenerate = || invalid(format!("{family:?} params {params:?} give a degenerate or oversized shape"));
    let grid = match family {
        ShapeFamily::Box => {
            if !fits(&p[..3]) {
                return Err(degenerate());
            }
            let e = [p[0], p[1], p[2]];
            VoxelGrid::from_fn(n, |x, y, z| inside_box(centered(x, y, z), e))
        }
        ShapeFamily::Cylinder => {
            let (r, len) = (p[0], p[1]);
            if !fits(&[2.0 * r, len]) {
                return Err(degenerate());
            }
            VoxelGrid::from_fn(n, |x, y, z| {
                let c = centered(x, y, z);
                c[0].abs() < len / 2.0 && c[1] * c[1] + c[2] * c[2] <= r * r
            })
        }
        ShapeFamily::Sphere => {
            let r = p[0];
            if !fits(&[2.0 * r]) {
                return Err(degenerate());
            }
            VoxelGrid::from_fn(n, |x, y, z| {
                let c = centered(x, y, z);
                c[0] * c[0] + c[1] * c[1] + c[2] * c[2] <= r * r
            })
        }
        ShapeFamily::LBracket => {
            let (t, ly, lz, web) = (p[0], p[1], p[2], p[3]);
            if !fits(&[t, ly, lz, web]) || web >= ly.min(lz) {
                return Err(degenerate());
            }
            let (y0, z0) = (-ly / 2.0, -lz / 2.0);
            VoxelGrid::from_fn(n, |x, y, z| {
                let c = centered(x, y, z);
                let in_y = c[1] > y0 && c[1] < y0 + ly;
                let in_z = c[2] > z0 && c[2] < z0 + lz;
                let foot = in_y && c[2] > z0 && c[2] < z0 + web;
                let upright = in_z && c[1] > y0 && c[1] < y0 + web;
                c[0].abs() < t / 2.0 && (foot || upright)
            })
        }
        ShapeFamily::SlottedBlock => {
            let (e, sw, sd) = ([p[0], p[1], p[2]], p[3], p[4]);
            if !fits(&e) || sw <= 0.0 || sd <= 0.0 || sw >= e[1] || sd >= e[2] {
                return Err(degenerate());
            }
            VoxelGrid::from_fn(n, |x, y, z| {
                let c = centered(x, y, z);
                let slot = c[1].abs() < sw / 2.0 && c[2] > e[2] / 2.0 - sd;
                inside_box(c, e) && !slot
            })
        }
        ShapeFamily::ThroughHoleBlock => {
            let (e, hr) = ([p[0], p[1], p[2]], p[3]);
            if !fits(&e) || hr <= 0.0 || 2.0 * hr >= e[1].min(e[2]) {
                return Err(degenerate());
            }
            VoxelGrid::from_fn(n, |x, y, z| {
                let c = centered(x, y, z);
                inside_box(c, e) && c[1] * c[1] + c[2] * c[2] > hr * hr
            })
        }
    };
    if grid.count() == 0 {
        return Err(degenerate());
    }
    Ok(grid)
}

fn centered(x: usize, y: usize, z: usize) -> [f64; 3] {
    let c = RESOLUTION as f64 / 2.0;
    [x as f64 + 0.5 - c, y as f64 + 0.5 - c, z as f64 + 0.5 - c]
}

/// Friction coefficient range for generated PLA targets.
pub const TARGET_MU_RANGE: (f64, f64) = (0.3, 0.6);

/// Rasterizes a shape centred in the 16³ grid. The seed draws the surface
/// friction coefficient.
pub fn generate_target(family: ShapeFamily, params: &[f64], seed: u64) -> Result<TargetSample> {
    let grid = rasterize(family, params)?;
    let mut rng = rng_from_seed(seed);
    let mu = rng.random_range(TARGET_MU_RANGE.0..=TARGET_MU_RANGE.1);
    let props = compute_physical_properties(&grid, PLA_DENSITY, mu)?;
    Ok(TargetSample {
        grid,
        props,
        provenance: TargetProvenance {
            family,
            params: params.to_vec(),
            seed,
            perturbation: None,
        },
    })
}

/// Nearest-neighbour resampling of the occupancy under rotation about the
/// grid centre, scaling and translation. Mass follows `s³` and the principal
/// moments `s⁵`; rotation leaves the principal moments unchanged.
pub fn perturb_sample(
    sample: &TargetSample,
    rotation: [f64; 4],
    scale: f64,
    translation: [f64; 3],
) -> Result<TargetSample> {
    if !(0.7..=1.3).contains(&scale) {
        return Err(invalid(format!("scale {scale} outside [0.7, 1.3]")));
    }
    if sample.provenance.perturbation.is_some() {
        return Err(invalid("sample is already perturbed"));
    }
    let q = canonical_quat(rotation)?;
    let rot = Pose { r: [0.0; 3], q }.rotation_matrix();
    let t = Vector3::from(translation);
    let src = &sample.grid;
    let n = src.resolution();
    let nf = n as f64;
    let c = nf / 2.0;

    // Every occupied source voxel centre must land inside the grid.
    for [x, y, z] in src.occupied() {
        let p = Vector3::from(src.centered(x, y, z));
        let d = rot * p * scale + t;
        if d.iter().any(|&v| v + c < 0.0 || v + c >= nf) {
            return Err(invalid(format!(
                "perturbation moves voxel ({x},{y},{z}) outside the grid"
            )));
        }
    }

    let inv = rot.transpose();
    let grid = VoxelGrid::from_fn(n, |x, y, z| {
        let p = Vector3::from(src.centered(x, y, z));
        let s = inv * ((p - t) / scale);
        let (i, j, k) = ((s[0] + c).floor(), (s[1] + c).floor(), (s[2] + c).floor());
        src.get_signed(i as i64, j as i64, k as i64)
    });
    if grid.count() == 0 {
        return Err(invalid("perturbation leaves no occupied voxel"));
    }
    let mut provenance = sample.provenance.clone();
    provenance.perturbation = Some(Perturbation {
        rotation: q,
        scale,
        translation,
    });
    Ok(TargetSample {
        grid,
        props: sample.props.scaled(scale),
        provenance,
    })
}

/// Draws a family and parameters for the training distribution. Every shape
/// is thinnest along x and leaves room for rotations about z.
pub fn sample_shape(rng: &mut Rng) -> (ShapeFamily, Vec<f64>) {
    let family = ShapeFamily::ALL[rng.random_range(0..ShapeFamily::ALL.len())];
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..=hi);
    let params = match family {
        ShapeFamily::Box => vec![u(3.5, 6.0), u(6.0, 10.0), u(6.0, 10.0)],
        ShapeFamily::Cylinder => vec![u(3.5, 5.0), u(3.5, 6.0)],
        ShapeFamily::Sphere => vec![u(2.6, 3.4)],
        ShapeFamily::LBracket => {
            let ly = u(7.0, 10.0);
            let lz = u(7.0, 10.0);
            vec![u(3.5, 6.0), ly, lz, u(3.0, 4.0)]
        }
        ShapeFamily::SlottedBlock => vec![u(3.5, 6.0), u(7.5, 10.0), u(6.0, 10.0), u(2.0, 3.5), u(2.0, 3.0)],
        ShapeFamily::ThroughHoleBlock => vec![u(3.5, 6.0), u(7.5, 10.0), u(7.5, 10.0), u(1.5, 2.5)],
    };
    (family, params)
}

/// Bounds for [`sample_perturbation`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationRange {
    /// Rotation about the vertical z axis, degrees either way.
    pub max_yaw_deg: f64,
    /// Additional rotation about a random axis, degrees.
    pub max_tilt_deg: f64,
    pub scale: (f64, f64),
    /// Per-axis translation, voxels either way.
    pub max_shift: f64,
}

impl Default for PerturbationRange {
    fn default() -> Self {
        Self {
            max_yaw_deg: 45.0,
            max_tilt_deg: 10.0,
            scale: (0.85, 1.15),
            max_shift: 1.5,
        }
    }
}

pub fn sample_perturbation(rng: &mut Rng, range: &PerturbationRange) -> Perturbation {
    let yaw = rng.random_range(-range.max_yaw_deg..=range.max_yaw_deg).to_radians();
    let tilt = random_small_rotation(rng, range.max_tilt_deg);
    let rotation = quat_mul(tilt, quat_from_axis_angle([0.0, 0.0, 1.0], yaw));
    let scale = rng.random_range(range.scale.0..=range.scale.1);
    let s = range.max_shift;
    let translation = [
        rng.random_range(-s..=s),
        rng.random_range(-s..=s),
        rng.random_range(-s..=s),
    ];
    Perturbation {
        rotation,
        scale,
        translation,
    }
}

/// Draws perturbations until one keeps the shape inside the grid.
pub fn perturb_randomly(sample: &TargetSample, rng: &mut Rng, range: &PerturbationRange) -> Result<TargetSample> {
    const ATTEMPTS: usize = 64;
    for _ in 0..ATTEMPTS {
        let p = sample_perturbation(rng, range);
        if let Ok(out) = perturb_sample(sample, p.rotation, p.scale, p.translation) {
            return Ok(out);
        }
    }
    Err(invalid(format!("no admissible perturbation found in {ATTEMPTS} draws")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_box_fills_grid() {
        let s = generate_target(ShapeFamily::Box, &[16.0, 16.0, 16.0], 1).unwrap();
        assert_eq!(s.grid.count(), 4096);
    }

    #[test]
    fn sphere_count_near_analytic_volume() {
        let s = generate_target(ShapeFamily::Sphere, &[4.0], 1).unwrap();
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * 64.0;
        let count = s.grid.count() as f64;
        assert!((count - analytic).abs() / analytic < 0.10, "{count} vs {analytic}");
    }

    #[test]
    fn same_seed_same_sample() {
        let a = generate_target(ShapeFamily::LBracket, &[5.0, 10.0, 9.0, 3.5], 42).unwrap();
        let b = generate_target(ShapeFamily::LBracket, &[5.0, 10.0, 9.0, 3.5], 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_params_rejected() {
        assert!(generate_target(ShapeFamily::Box, &[0.0, 5.0, 5.0], 1).is_err());
        assert!(generate_target(ShapeFamily::Sphere, &[9.0], 1).is_err());
        assert!(generate_target(ShapeFamily::Box, &[5.0, 5.0], 1).is_err());
    }

    #[test]
    fn identity_perturbation_keeps_occupancy() {
        let s = generate_target(ShapeFamily::SlottedBlock, &[5.0, 10.0, 10.0, 3.0, 3.0], 3).unwrap();
        let p = perturb_sample(&s, [1.0, 0.0, 0.0, 0.0], 1.0, [0.0; 3]).unwrap();
        assert_eq!(p.grid, s.grid);
        assert_eq!(p.props, s.props);
    }

    #[test]
    fn quarter_turn_of_l_bracket_is_a_permutation() {
        let s = generate_target(ShapeFamily::LBracket, &[5.0, 11.0, 9.0, 3.0], 3).unwrap();
        let q = quat_from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        let p = perturb_sample(&s, q, 1.0, [0.0; 3]).unwrap();
        assert_eq!(p.grid.count(), s.grid.count());
        assert_ne!(p.grid, s.grid);
        // Each rotated voxel sits where the exact lattice rotation puts it.
        for [x, y, z] in s.grid.occupied() {
            assert!(p.grid.get(15 - y, x, z));
        }
    }

    #[test]
    fn clipping_rejected() {
        let s = generate_target(ShapeFamily::Box, &[6.0, 10.0, 10.0], 3).unwrap();
        assert!(perturb_sample(&s, [1.0, 0.0, 0.0, 0.0], 1.0, [0.0, 5.0, 0.0]).is_err());
        assert!(perturb_sample(&s, [1.0, 0.0, 0.0, 0.0], 1.5, [0.0; 3]).is_err());
    }

    #[test]
    fn provenance_regenerates_bit_identically() {
        let s = generate_target(ShapeFamily::ThroughHoleBlock, &[5.0, 10.0, 10.0, 2.0], 9).unwrap();
        let q = quat_from_axis_angle([0.3, 0.2, 1.0], 0.2);
        let p = perturb_sample(&s, q, 1.1, [0.5, -1.0, 1.5]).unwrap();
        let flat = p.provenance.flat_params();
        let prov = TargetProvenance::from_flat(p.provenance.family, &flat, p.provenance.seed).unwrap();
        assert_eq!(TargetSample::regenerate(&prov).unwrap(), p);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn sampled_targets_are_physical(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let (family, params) = sample_shape(&mut rng);
            let s = generate_target(family, &params, seed).unwrap();
            let [i1, i2, i3] = s.props.principal_moments;
            prop_assert!(s.props.mass > 0.0);
            prop_assert!(i1 + i2 >= i3 * (1.0 - 1e-12));
            let h = s.grid.voxel_edge();
            let expected = s.grid.count() as f64 * h * h * h * PLA_DENSITY;
            prop_assert!((s.props.mass - expected).abs() <= 1e-12 * expected);
        }

        #[test]
        fn arbitrary_rotation_preserves_count_within_15_percent(
            seed in any::<u64>(),
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in 0.1f64..1.0,
            angle in 0.0f64..std::f64::consts::PI,
        ) {
            let mut rng = rng_from_seed(seed);
            let (family, params) = sample_shape(&mut rng);
            let s = generate_target(family, &params, seed).unwrap();
            let q = quat_from_axis_angle([ax, ay, az], angle);
            if let Ok(p) = perturb_sample(&s, q, 1.0, [0.0; 3]) {
                let (a, b) = (s.grid.count() as f64, p.grid.count() as f64);
                prop_assert!((a - b).abs() <= 0.15 * a, "{} -> {}", a, b);
            }
        }
    }
}
