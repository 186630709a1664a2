//! `GGDS` dataset files.
//!
//! Layout (little-endian): magic `GGDS`, version `u32`, kind `u8`
//! (0 target, 1 gripper, 2 latent), resolution `u16`, sample count `u32`.
//! Each sample: occupancy bitset (`n³` bits padded to a byte, absent for
//! latent records), property block (`u16` length then `f64`s), provenance
//! (kind tag `u8`, `u16` parameter count, `f64` parameters, seed `u64`).
//!
//! Property blocks: targets store `[mass, I1, I2, I3, mu]`; grippers store the
//! pose `[r, q]` followed by both fingers' column offsets; latent records
//! store the latent vector followed by the normalized pose.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::grid::VoxelGrid;
use super::gripper::{FingertipKind, GripperProvenance, GripperSample, PAD_SPAN};
use super::pose::{Pose, POSE_DIM};
use super::props::{PhysicalProperties, PROPERTY_DIM};
use super::target::{ShapeFamily, TargetProvenance, TargetSample};
use crate::error::{invalid, Error, Result};
use crate::nn::checkpoint::Reader;

pub const MAGIC: &[u8; 4] = b"GGDS";
pub const VERSION: u32 = 1;

/// One row of the cached joint-latent dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentRecord {
    pub z: Vec<f64>,
    /// Normalized pose the gripper latent was encoded from.
    pub pose: [f64; POSE_DIM],
    pub target_index: u32,
    pub gripper_index: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Targets(Vec<TargetSample>),
    Grippers(Vec<GripperSample>),
    Latents(Vec<LatentRecord>),
}

impl Dataset {
    pub fn kind(&self) -> u8 {
        match self {
            Dataset::Targets(_) => 0,
            Dataset::Grippers(_) => 1,
            Dataset::Latents(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Targets(v) => v.len(),
            Dataset::Grippers(v) => v.len(),
            Dataset::Latents(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_targets(self) -> Result<Vec<TargetSample>> {
        match self {
            Dataset::Targets(v) => Ok(v),
            other => Err(invalid(format!("expected a target dataset, found kind {}", other.kind()))),
        }
    }

    pub fn into_grippers(self) -> Result<Vec<GripperSample>> {
        match self {
            Dataset::Grippers(v) => Ok(v),
            other => Err(invalid(format!("expected a gripper dataset, found kind {}", other.kind()))),
        }
    }

    pub fn into_latents(self) -> Result<Vec<LatentRecord>> {
        match self {
            Dataset::Latents(v) => Ok(v),
            other => Err(invalid(format!("expected a latent dataset, found kind {}", other.kind()))),
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) -> Result<()> {
        let len = u16::try_from(v.len()).map_err(|_| invalid(format!("block of {} values too long", v.len())))?;
        self.u16(len);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
        Ok(())
    }
    fn provenance(&mut self, tag: u8, params: &[f64], seed: u64) -> Result<()> {
        self.u8(tag);
        self.f64s(params)?;
        self.u64(seed);
        Ok(())
    }
}

fn read_f64s(r: &mut Reader<'_>) -> Result<Vec<f64>> {
    let n = r.u16()? as usize;
    (0..n).map(|_| r.f64()).collect()
}

fn resolution_of(data: &Dataset) -> Result<usize> {
    let grids: Vec<&VoxelGrid> = match data {
        Dataset::Targets(v) => v.iter().map(|s| &s.grid).collect(),
        Dataset::Grippers(v) => v.iter().map(|s| &s.grid).collect(),
        Dataset::Latents(_) => return Ok(0),
    };
    let n = grids[0].resolution();
    if grids.iter().any(|g| g.resolution() != n) {
        return Err(invalid("samples have mixed resolutions"));
    }
    Ok(n)
}

pub fn encode(data: &Dataset) -> Result<Vec<u8>> {
    if data.is_empty() {
        return Err(invalid("refusing to write an empty dataset"));
    }
    let n = resolution_of(data)?;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u8(data.kind());
    w.u16(u16::try_from(n).map_err(|_| invalid(format!("resolution {n} too large")))?);
    w.u32(u32::try_from(data.len()).map_err(|_| invalid("too many samples"))?);
    match data {
        Dataset::Targets(v) => {
            for s in v {
                w.0.extend_from_slice(&s.grid.to_bits());
                w.f64s(&s.props.to_array())?;
                let p = &s.provenance;
                w.provenance(p.family as u8, &p.flat_params(), p.seed)?;
            }
        }
        Dataset::Grippers(v) => {
            for s in v {
                w.0.extend_from_slice(&s.grid.to_bits());
                let mut block = s.pose.to_array().to_vec();
                for finger in &s.contact_profile {
                    block.extend(finger.iter().map(|&o| o as f64));
                }
                w.f64s(&block)?;
                let p = &s.provenance;
                w.provenance(p.kind as u8, &p.flat_params(), p.seed)?;
            }
        }
        Dataset::Latents(v) => {
            for s in v {
                let mut block = s.z.clone();
                block.extend_from_slice(&s.pose);
                w.f64s(&block)?;
                w.provenance(0, &[s.target_index as f64, s.gripper_index as f64], 0)?;
            }
        }
    }
    Ok(w.0)
}

fn corrupt(offset: u64, reason: impl Into<String>) -> Error {
    Error::Corrupt {
        offset,
        reason: reason.into(),
    }
}

pub fn decode(buf: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(buf);
    if r.bytes(4)? != MAGIC {
        return Err(corrupt(0, "bad magic, expected GGDS"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(4, format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    let n = r.u16()? as usize;
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(corrupt(11, "dataset declares zero samples"));
    }
    let bit_bytes = (n * n * n).div_ceil(8);
    let grid = |r: &mut Reader<'_>| -> Result<VoxelGrid> {
        let at = r.offset();
        VoxelGrid::from_bits(n, r.bytes(bit_bytes)?).map_err(|e| corrupt(at, e.to_string()))
    };
    let data = match kind {
        0 => {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let grid = grid(&mut r)?;
                let at = r.offset();
                let block = read_f64s(&mut r)?;
                if block.len() != PROPERTY_DIM {
                    return Err(corrupt(at, format!("target property block has {} values", block.len())));
                }
                let props = PhysicalProperties::from_array(&block)?;
                let at = r.offset();
                let tag = r.u8()?;
                let family = ShapeFamily::from_u8(tag).map_err(|e| corrupt(at, e.to_string()))?;
                let params = read_f64s(&mut r)?;
                let seed = r.u64()?;
                let provenance = TargetProvenance::from_flat(family, &params, seed).map_err(|e| corrupt(at, e.to_string()))?;
                out.push(TargetSample { grid, props, provenance });
            }
            Dataset::Targets(out)
        }
        1 => {
            let mut out = Vec::with_capacity(count);
            let cols = PAD_SPAN * PAD_SPAN;
            for _ in 0..count {
                let grid = grid(&mut r)?;
                let at = r.offset();
                let block = read_f64s(&mut r)?;
                if block.len() != POSE_DIM + 2 * cols {
                    return Err(corrupt(at, format!("gripper property block has {} values", block.len())));
                }
                let pose = Pose {
                    r: [block[0], block[1], block[2]],
                    q: [block[3], block[4], block[5], block[6]],
                };
                let finger = |i: usize| block[POSE_DIM + i * cols..POSE_DIM + (i + 1) * cols].iter().map(|&v| v as i32).collect();
                let contact_profile = [finger(0), finger(1)];
                let at = r.offset();
                let tag = r.u8()?;
                let kind = FingertipKind::from_u8(tag).map_err(|e| corrupt(at, e.to_string()))?;
                let params = read_f64s(&mut r)?;
                let seed = r.u64()?;
                let provenance = GripperProvenance::from_flat(kind, &params, seed).map_err(|e| corrupt(at, e.to_string()))?;
                out.push(GripperSample {
                    grid,
                    pose,
                    contact_profile,
                    provenance,
                });
            }
            Dataset::Grippers(out)
        }
        2 => {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let at = r.offset();
                let mut block = read_f64s(&mut r)?;
                if block.len() <= POSE_DIM {
                    return Err(corrupt(at, format!("latent block has {} values", block.len())));
                }
                let pose_part = block.split_off(block.len() - POSE_DIM);
                let at = r.offset();
                let _tag = r.u8()?;
                let params = read_f64s(&mut r)?;
                let _seed = r.u64()?;
                if params.len() != 2 {
                    return Err(corrupt(at, "latent provenance needs two indices"));
                }
                out.push(LatentRecord {
                    z: block,
                    pose: pose_part.try_into().expect("pose length"),
                    target_index: params[0] as u32,
                    gripper_index: params[1] as u32,
                });
            }
            Dataset::Latents(out)
        }
        k => return Err(corrupt(8, format!("unknown dataset kind {k}"))),
    };
    if !r.at_end() {
        return Err(r.fail("trailing bytes after last sample"));
    }
    Ok(data)
}

pub fn dataset_write(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(data)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn dataset_read(path: impl AsRef<Path>) -> Result<Dataset> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::voxel::gripper::generate_gripper;
    use crate::voxel::target::{generate_target, perturb_randomly, sample_shape, PerturbationRange};

    fn targets(count: usize) -> Vec<TargetSample> {
        let mut rng = rng_from_seed(4);
        (0..count)
            .map(|i| {
                let (family, params) = sample_shape(&mut rng);
                let base = generate_target(family, &params, i as u64).unwrap();
                if i % 2 == 0 {
                    base
                } else {
                    perturb_randomly(&base, &mut rng, &PerturbationRange::default()).unwrap()
                }
            })
            .collect()
    }

    #[test]
    fn hundred_targets_round_trip() {
        let data = Dataset::Targets(targets(100));
        let bytes = encode(&data).unwrap();
        assert_eq!(decode(&bytes).unwrap(), data);
    }

    #[test]
    fn grippers_and_latents_round_trip() {
        let g: Vec<_> = (0..12)
            .map(|i| generate_gripper(FingertipKind::ALL[i % 3], (i % 5) as f64 * 0.5, i as u64).unwrap())
            .collect();
        let data = Dataset::Grippers(g);
        assert_eq!(decode(&encode(&data).unwrap()).unwrap(), data);

        let l = Dataset::Latents(vec![LatentRecord {
            z: (0..80).map(|i| i as f64 * 0.25 - 3.0).collect(),
            pose: [0.1, -0.2, 0.0, 1.0, 0.0, 0.0, 0.0],
            target_index: 7,
            gripper_index: 3,
        }]);
        assert_eq!(decode(&encode(&l).unwrap()).unwrap(), l);
    }

    #[test]
    fn truncated_file_names_offset() {
        let bytes = encode(&Dataset::Targets(targets(3))).unwrap();
        let cut = bytes.len() - 5;
        match decode(&bytes[..cut]) {
            Err(Error::Corrupt { offset, reason }) => {
                assert_eq!(offset, (bytes.len() - 8) as u64);
                assert!(reason.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(decode(b"GGNN\x01\0\0\0"), Err(Error::Corrupt { offset: 0, .. })));
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(encode(&Dataset::Targets(Vec::new())).is_err());
    }
}
