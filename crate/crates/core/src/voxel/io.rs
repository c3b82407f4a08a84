//! Binary and JSON persistence for voxel grids.
//!
//! VOXF layout, all little-endian: magic `VOXF`, `u32` version, `u32`
//! channels, nx, ny, nz, six `f64` range bounds (x0 x1 y0 y1 z0 z1), then
//! `C·nx·ny·nz` `f64` features in row-major `[C, nx, ny, nz]` order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::{GridSpec, VoxelGrid};

pub const VOXF_MAGIC: [u8; 4] = *b"VOXF";
pub const VOXF_VERSION: u32 = 1;

pub fn write_voxf<T: Real>(grid: &VoxelGrid<T>, mut out: impl Write) -> Result<()> {
    let s = &grid.spec;
    let mut buf = Vec::with_capacity(4 + 20 + 48 + 8 * grid.features.numel());
    buf.extend_from_slice(&VOXF_MAGIC);
    buf.extend_from_slice(&VOXF_VERSION.to_le_bytes());
    for n in [s.channels, s.nx, s.ny, s.nz] {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("extent {n} does not fit in u32")))?;
        buf.extend_from_slice(&n.to_le_bytes());
    }
    for r in s.ranges() {
        buf.extend_from_slice(&r[0].to_le_bytes());
        buf.extend_from_slice(&r[1].to_le_bytes());
    }
    for v in grid.features.data() {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_voxf<T: Real>(mut input: impl Read) -> Result<VoxelGrid<T>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != VOXF_MAGIC {
        return Err(Error::Format("missing VOXF magic".into()));
    }
    let version = cur.u32()?;
    if version != VOXF_VERSION {
        return Err(Error::Format(format!("unsupported VOXF version {version}")));
    }
    let [c, nx, ny, nz] = [cur.u32()?, cur.u32()?, cur.u32()?, cur.u32()?].map(|n| n as usize);
    let mut ranges = [[0.0; 2]; 3];
    for r in &mut ranges {
        *r = [cur.f64()?, cur.f64()?];
    }
    let spec = GridSpec::new(ranges, [nx, ny, nz], c)?;
    let n = c
        .checked_mul(spec.voxels())
        .ok_or_else(|| Error::Format("grid extent overflows".into()))?;
    if cur.remaining() != n * 8 {
        return Err(Error::Format(format!("expected {} payload bytes, found {}", n * 8, cur.remaining())));
    }
    let data = (0..n).map(|_| cur.f64().map(T::lit)).collect::<Result<Vec<T>>>()?;
    VoxelGrid::new(spec, Tensor::new(&spec.feature_shape(), data)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated VOXF stream".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn write_grid_json<T: Real>(grid: &VoxelGrid<T>, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, grid)?;
    Ok(())
}

pub fn read_grid_json<T: Real>(path: &Path) -> Result<VoxelGrid<T>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let grid: VoxelGrid<T> = serde_json::from_reader(f)?;
    VoxelGrid::new(grid.spec, grid.features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> VoxelGrid<f64> {
        let spec = GridSpec::new([[-1.0, 1.0], [0.0, 3.0], [-0.5, 0.5]], [2, 3, 1], 2).unwrap();
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.25 - 1.0).collect();
        VoxelGrid::new(spec, Tensor::new(&spec.feature_shape(), data).unwrap()).unwrap()
    }

    #[test]
    fn voxf_round_trip_is_exact() {
        let g = sample();
        let mut buf = Vec::new();
        write_voxf(&g, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 16 + 48 + 12 * 8);
        assert_eq!(&buf[..4], b"VOXF");
        let back: VoxelGrid<f64> = read_voxf(buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn voxf_rejects_bad_streams() {
        let mut buf = Vec::new();
        write_voxf(&sample(), &mut buf).unwrap();
        assert!(matches!(read_voxf::<f64>(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_voxf::<f64>(bad.as_slice()), Err(Error::Format(_))));
        let mut bad = buf;
        bad[4] = 9;
        assert!(matches!(read_voxf::<f64>(bad.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        write_grid_json(&sample(), &path).unwrap();
        assert_eq!(read_grid_json::<f64>(&path).unwrap(), sample());
    }
}
