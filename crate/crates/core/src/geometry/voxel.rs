use std::io::{Read, Write};

use super::{GeometryError, Result, Vec3};

pub const VOXEL_MAGIC: &[u8; 4] = b"GFVX";
pub const VOXEL_VERSION: u32 = 1;

/// Cubic occupancy lattice. Values are stored x-fastest: `x + r·(y + r·z)`.
///
/// Voxel `(x, y, z)` covers `origin + [x, x+1)·voxel_size` on each axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    origin: Vec3,
    voxel_size: f64,
    occupancy: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(resolution: usize, origin: Vec3, voxel_size: f64) -> Result<Self> {
        Self::from_occupancy(
            resolution,
            origin,
            voxel_size,
            vec![0.0; resolution.pow(3)],
        )
    }

    /// Grid in voxel units: origin at zero, unit voxels.
    pub fn unit(resolution: usize) -> Self {
        Self::new(resolution, Vec3::zeros(), 1.0).expect("positive resolution")
    }

    pub fn from_occupancy(
        resolution: usize,
        origin: Vec3,
        voxel_size: f64,
        occupancy: Vec<f64>,
    ) -> Result<Self> {
        if resolution == 0 {
            return Err(GeometryError::InvalidArgument("resolution must be positive".into()));
        }
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(GeometryError::InvalidArgument(format!(
                "voxel size must be positive, got {voxel_size}"
            )));
        }
        if occupancy.len() != resolution.pow(3) {
            return Err(GeometryError::InvalidArgument(format!(
                "{} occupancy values for resolution {resolution}",
                occupancy.len()
            )));
        }
        if occupancy.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(GeometryError::InvalidArgument(
                "occupancy values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            resolution,
            origin,
            voxel_size,
            occupancy,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn occupancy(&self) -> &[f64] {
        &self.occupancy
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.resolution * (y + self.resolution * z)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let r = self.resolution;
        [index % r, (index / r) % r, index / (r * r)]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.occupancy[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        let i = self.index(x, y, z);
        self.occupancy[i] = value.clamp(0.0, 1.0);
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin + Vec3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * self.voxel_size
    }

    pub fn is_binary(&self) -> bool {
        self.occupancy.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Voxels with occupancy above one half.
    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v > 0.5).count()
    }

    /// Binary grid: 1 where occupancy exceeds `level`.
    pub fn thresholded(&self, level: f64) -> Self {
        Self {
            occupancy: self
                .occupancy
                .iter()
                .map(|&v| if v > level { 1.0 } else { 0.0 })
                .collect(),
            ..self.clone()
        }
    }

    /// Intersection over union of the two grids' occupied sets (threshold 0.5).
    pub fn iou(&self, other: &Self) -> Result<f64> {
        if self.resolution != other.resolution {
            return Err(GeometryError::InvalidArgument(format!(
                "IoU of resolutions {} and {}",
                self.resolution, other.resolution
            )));
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.occupancy.iter().zip(&other.occupancy) {
            let (a, b) = (a > 0.5, b > 0.5);
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
    }

    /// Adds `margin` empty voxels on every side, keeping world placement.
    pub fn padded(&self, margin: usize) -> Self {
        let r = self.resolution + 2 * margin;
        let mut out = vec![0.0; r * r * r];
        for z in 0..self.resolution {
            for y in 0..self.resolution {
                for x in 0..self.resolution {
                    let dst = (x + margin) + r * ((y + margin) + r * (z + margin));
                    out[dst] = self.get(x, y, z);
                }
            }
        }
        Self {
            resolution: r,
            origin: self.origin - Vec3::repeat(margin as f64 * self.voxel_size),
            voxel_size: self.voxel_size,
            occupancy: out,
        }
    }

    /// Whether any voxel on the outer layer is occupied.
    pub fn touches_boundary(&self) -> bool {
        let last = self.resolution - 1;
        self.occupancy.iter().enumerate().any(|(i, &v)| {
            v > 0.5 && self.coords(i).iter().any(|&c| c == 0 || c == last)
        })
    }

    /// Bit-packed binary file; the grid must be binary.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        if !self.is_binary() {
            return Err(GeometryError::InvalidArgument(
                "only binary grids can be written; threshold first".into(),
            ));
        }
        w.write_all(VOXEL_MAGIC)?;
        w.write_all(&VOXEL_VERSION.to_le_bytes())?;
        w.write_all(&(self.resolution as u32).to_le_bytes())?;
        for c in self.origin.iter() {
            w.write_all(&c.to_le_bytes())?;
        }
        w.write_all(&self.voxel_size.to_le_bytes())?;
        let mut bytes = vec![0u8; self.occupancy.len().div_ceil(8)];
        for (i, &v) in self.occupancy.iter().enumerate() {
            if v == 1.0 {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let fail = |m: &str| GeometryError::Format(m.to_string());
        if buf.len() < 44 {
            return Err(fail("file too short"));
        }
        if &buf[..4] != VOXEL_MAGIC {
            return Err(fail("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        if u32_at(4) != VOXEL_VERSION {
            return Err(fail("unsupported version"));
        }
        let resolution = u32_at(8) as usize;
        let origin = Vec3::new(f64_at(12), f64_at(20), f64_at(28));
        let voxel_size = f64_at(36);
        let n = resolution.pow(3);
        let bits = &buf[44..];
        if bits.len() != n.div_ceil(8) {
            return Err(fail("occupancy length does not match resolution"));
        }
        let occupancy = (0..n)
            .map(|i| ((bits[i / 8] >> (i % 8)) & 1) as f64)
            .collect();
        Self::from_occupancy(resolution, origin, voxel_size, occupancy)
    }
}
