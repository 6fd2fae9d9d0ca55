//! Binary checkpoint format.
//!
//! ```text
//! "CFLD"                      magic
//! u32 LE                      format version
//! 3 x u32 LE                  resolution (nx, ny, nz)
//! 6 x f32 LE                  bounds min xyz, max xyz
//! 2 x u32 LE                  l_max, split_degree
//! f32 LE arrays               density_raw, c_vi_raw, gamma_raw, sh_c0, sh_vd
//! ```
//!
//! Each array covers every voxel in x-fastest order; multi-component entries keep their
//! components contiguous per voxel.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Bounds, ParamLayout, VoxelField};

pub const MAGIC: &[u8; 4] = b"CFLD";
pub const VERSION: u32 = 1;

pub fn to_bytes(field: &VoxelField) -> Vec<u8> {
    let layout = field.layout();
    let stride = layout.stride();
    let mut out = Vec::with_capacity(40 + field.params().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in field.resolution() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    let b = field.bounds();
    for v in b.min.iter().chain(&b.max) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(layout.l_max as u32).to_le_bytes());
    out.extend_from_slice(&(layout.split_degree as u32).to_le_bytes());
    for (_, offset, width) in layout.groups() {
        for block in field.params().chunks_exact(stride) {
            for v in &block[offset..offset + width] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<VoxelField> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let resolution = [cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize];
    let mut b = [0f32; 6];
    for v in &mut b {
        *v = cur.f32()?;
    }
    let bounds = Bounds::new([b[0], b[1], b[2]], [b[3], b[4], b[5]])?;
    let layout = ParamLayout::new(cur.u32()? as usize, cur.u32()? as usize)?;
    let count = resolution.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
    let expected = count
        .and_then(|c| c.checked_mul(layout.stride() * 4))
        .ok_or_else(|| Error::Format("checkpoint resolution overflows".into()))?;
    if bytes.len() - cur.pos != expected {
        return Err(Error::Format(format!(
            "checkpoint payload is {} bytes, expected {expected}",
            bytes.len() - cur.pos
        )));
    }
    let count = count.unwrap();
    let stride = layout.stride();
    let mut params = vec![0f32; count * stride];
    for (_, offset, width) in layout.groups() {
        for block in params.chunks_exact_mut(stride) {
            for v in &mut block[offset..offset + width] {
                *v = cur.f32()?;
            }
        }
    }
    VoxelField::from_parts(resolution, bounds, layout, params)
}

pub fn save(field: &VoxelField, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&to_bytes(field)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<VoxelField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
