use crate::error::{invalid, shape_err, Result};
use crate::nn::Tensor;

/// Default lattice resolution per side.
pub const RESOLUTION: usize = 16;
/// Physical side length of the grid cube in meters.
pub const GRID_EXTENT_M: f64 = 0.10;

/// Cubic binary occupancy lattice. Linear index is `(x·n + y)·n + z`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    n: usize,
    occupancy: Vec<f64>,
}

impl VoxelGrid {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            occupancy: vec![0.0; n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut g = Self::empty(n);
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    if f(x, y, z) {
                        g.set(x, y, z, true);
                    }
                }
            }
        }
        g
    }

    /// Binary grid from arbitrary values; entries `>= 0.5` become occupied.
    pub fn from_values(n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * n * n {
            return Err(shape_err(format!(
                "{} values for a {n}^3 grid",
                values.len()
            )));
        }
        Ok(Self {
            n,
            occupancy: values.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect(),
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Edge length of one voxel in meters.
    pub fn voxel_edge(&self) -> f64 {
        GRID_EXTENT_M / self.n as f64
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.n + y) * self.n + z
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[self.index(x, y, z)] >= 0.5
    }

    /// Occupancy at signed coordinates; outside the lattice is empty.
    pub fn get_signed(&self, x: i64, y: i64, z: i64) -> bool {
        let n = self.n as i64;
        if x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n {
            return false;
        }
        self.get(x as usize, y as usize, z as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        let i = self.index(x, y, z);
        self.occupancy[i] = if on { 1.0 } else { 0.0 };
    }

    pub fn values(&self) -> &[f64] {
        &self.occupancy
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn occupied(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let n = self.n;
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= 0.5)
            .map(move |(i, _)| [i / (n * n), (i / n) % n, i % n])
    }

    /// Voxel center relative to the grid center, in voxel units.
    pub fn centered(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        let c = self.n as f64 / 2.0;
        [x as f64 + 0.5 - c, y as f64 + 0.5 - c, z as f64 + 0.5 - c]
    }

    /// Occupied voxel with at least one empty (or out-of-lattice) face neighbour.
    pub fn is_surface(&self, x: usize, y: usize, z: usize) -> bool {
        if !self.get(x, y, z) {
            return false;
        }
        let (x, y, z) = (x as i64, y as i64, z as i64);
        FACE_DIRS
            .iter()
            .any(|d| !self.get_signed(x + d[0], y + d[1], z + d[2]))
    }

    /// Inclusive index bounds `[min, max]` per axis, `None` if empty.
    pub fn bounds(&self) -> Option<[[usize; 2]; 3]> {
        let mut b = [[usize::MAX, 0]; 3];
        let mut any = false;
        for p in self.occupied() {
            any = true;
            for a in 0..3 {
                b[a][0] = b[a][0].min(p[a]);
                b[a][1] = b[a][1].max(p[a]);
            }
        }
        any.then_some(b)
    }

    /// `[1, n, n, n]` network input.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.n, self.n, self.n], self.occupancy.clone()).expect("cubic")
    }

    pub fn to_bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.occupancy.len().div_ceil(8)];
        for (i, &v) in self.occupancy.iter().enumerate() {
            if v >= 0.5 {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    pub fn from_bits(n: usize, bits: &[u8]) -> Result<Self> {
        let total = n * n * n;
        if bits.len() != total.div_ceil(8) {
            return Err(invalid(format!("{} bytes for a {n}^3 bitset", bits.len())));
        }
        let occupancy = (0..total)
            .map(|i| if bits[i / 8] >> (i % 8) & 1 == 1 { 1.0 } else { 0.0 })
            .collect();
        Ok(Self { n, occupancy })
    }
}

pub const FACE_DIRS: [[i64; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];
