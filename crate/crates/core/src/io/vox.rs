//! VOX1 volumes: a fixed little-endian header followed by a u8 (mask) or
//! f32 (signed distance) payload, x fastest.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{BoundingBox, Point3};

pub(crate) const MAGIC: &[u8; 8] = b"VOXSDF01";
pub(crate) const HEADER_LEN: usize = 8 + 4 + 12 + 12 + 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum VolumeKind {
    Mask = 0,
    Sdf = 1,
    Basis = 2,
}

impl VolumeKind {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            0 => Some(VolumeKind::Mask),
            1 => Some(VolumeKind::Sdf),
            2 => Some(VolumeKind::Basis),
            _ => None,
        }
    }
}

/// Lattice geometry shared by masks and distance volumes.
///
/// Voxel `(i, j, k)` has its center at `origin + (i, j, k) * spacing`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    pub origin: [f32; 3],
}

impl VolumeHeader {
    pub fn new(dims: [usize; 3], spacing: [f32; 3], origin: [f32; 3]) -> Result<Self> {
        let h = VolumeHeader { dims, spacing, origin };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Precondition(format!("volume dims must be >= 1, got {:?}", self.dims)));
        }
        if self.dims.iter().any(|&d| d > u32::MAX as usize) || self.checked_count().is_none() {
            return Err(Error::Precondition("volume dims overflow".into()));
        }
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Precondition(format!("spacing must be positive, got {:?}", self.spacing)));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Precondition("origin must be finite".into()));
        }
        Ok(())
    }

    fn checked_count(&self) -> Option<usize> {
        self.dims[0].checked_mul(self.dims[1])?.checked_mul(self.dims[2])
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, n: usize) -> [usize; 3] {
        [n % self.dims[0], (n / self.dims[0]) % self.dims[1], n / (self.dims[0] * self.dims[1])]
    }

    pub fn spacing(&self) -> Point3 {
        Point3::new(self.spacing[0] as f64, self.spacing[1] as f64, self.spacing[2] as f64)
    }

    pub fn origin(&self) -> Point3 {
        Point3::new(self.origin[0] as f64, self.origin[1] as f64, self.origin[2] as f64)
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Point3 {
        self.origin() + Point3::new(i as f64, j as f64, k as f64).mul_elem(self.spacing())
    }

    /// Box spanned by the voxel centers; needs at least two voxels per axis.
    pub fn bbox(&self) -> Result<BoundingBox> {
        let last = Point3::new(
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        );
        BoundingBox::new(self.origin(), self.origin() + last.mul_elem(self.spacing()))
    }

    /// Header whose voxel centers sample `bbox` on a `dims` lattice.
    pub fn spanning(bbox: &BoundingBox, dims: [usize; 3]) -> Result<Self> {
        let e = bbox.extent();
        let s = |a: usize| (e[a] / (dims[a].max(2) - 1) as f64) as f32;
        Self::new(
            dims,
            [s(0), s(1), s(2)],
            [bbox.min.x as f32, bbox.min.y as f32, bbox.min.z as f32],
        )
    }
}

/// Binary occupancy; `true` is inside.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    pub header: VolumeHeader,
    pub data: Vec<bool>,
}

impl VoxelMask {
    pub fn new(header: VolumeHeader, data: Vec<bool>) -> Result<Self> {
        header.validate()?;
        if data.len() != header.voxel_count() {
            return Err(Error::dim("mask payload", header.voxel_count(), data.len()));
        }
        Ok(VoxelMask { header, data })
    }

    /// Mask with voxel `(i, j, k)` set where `inside(center)` holds.
    pub fn from_fn(header: VolumeHeader, inside: impl Fn(Point3) -> bool) -> Result<Self> {
        header.validate()?;
        let data = (0..header.voxel_count())
            .map(|n| {
                let [i, j, k] = header.coords(n);
                inside(header.position(i, j, k))
            })
            .collect();
        Self::new(header, data)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.header.index(i, j, k)]
    }

    pub fn count_inside(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }
}

/// Signed distances in scene units, negative inside.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfVolume {
    pub header: VolumeHeader,
    pub data: Vec<f32>,
}

impl SdfVolume {
    pub fn new(header: VolumeHeader, data: Vec<f32>) -> Result<Self> {
        header.validate()?;
        if data.len() != header.voxel_count() {
            return Err(Error::dim("sdf payload", header.voxel_count(), data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("sdf values must be finite".into()));
        }
        Ok(SdfVolume { header, data })
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.header.index(i, j, k)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Mask(VoxelMask),
    Sdf(SdfVolume),
}

pub(crate) fn encode_header(out: &mut Vec<u8>, kind: VolumeKind, h: &VolumeHeader) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    for d in h.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in h.spacing.iter().chain(&h.origin) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_mask(m: &VoxelMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data.len());
    encode_header(&mut out, VolumeKind::Mask, &m.header);
    out.extend(m.data.iter().map(|&b| b as u8));
    out
}

pub fn encode_sdf(s: &SdfVolume) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * s.data.len());
    encode_header(&mut out, VolumeKind::Sdf, &s.header);
    for v in &s.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Cursor over a byte buffer that reports failures with their byte offset.
pub(crate) struct Reader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
    pub(crate) file: &'a str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], file: &'a str) -> Self {
        Reader { bytes, pos: 0, file }
    }

    pub(crate) fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            file: self.file.to_string(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            self.error(
                self.bytes.len(),
                format!("truncated {what}: need {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32_block(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n.checked_mul(4).ok_or_else(|| self.error(self.pos, "payload size overflow"))?;
        let start = self.pos;
        let raw = self.take(len, what)?;
        let out: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(self.error(start + 4 * i, format!("non-finite value in {what}")));
        }
        Ok(out)
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let found = self.take(8, "magic")?;
        if found != expected {
            return Err(self.error(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(found),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }
}

pub(crate) fn decode_header(r: &mut Reader<'_>) -> Result<(VolumeKind, VolumeHeader)> {
    r.magic(MAGIC)?;
    let kind_at = r.pos;
    let kind_raw = r.u32("kind")?;
    let kind = VolumeKind::from_u32(kind_raw).ok_or_else(|| r.error(kind_at, format!("unknown volume kind {kind_raw}")))?;
    let dims_at = r.pos;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.u32("dims")? as usize;
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(r.error(dims_at, format!("zero dimension in {dims:?}")));
    }
    let spacing_at = r.pos;
    let mut spacing = [0f32; 3];
    for s in &mut spacing {
        *s = r.f32("spacing")?;
    }
    let origin_at = r.pos;
    let mut origin = [0f32; 3];
    for o in &mut origin {
        *o = r.f32("origin")?;
    }
    let header = VolumeHeader { dims, spacing, origin };
    if header.checked_count().is_none() {
        return Err(r.error(dims_at, format!("dims {dims:?} overflow")));
    }
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(r.error(spacing_at, format!("invalid spacing {spacing:?}")));
    }
    if origin.iter().any(|o| !o.is_finite()) {
        return Err(r.error(origin_at, "non-finite origin"));
    }
    Ok((kind, header))
}

pub fn decode_vox(bytes: &[u8], file: &str) -> Result<Volume> {
    let mut r = Reader::new(bytes, file);
    let (kind, header) = decode_header(&mut r)?;
    let n = header.voxel_count();
    let v = match kind {
        VolumeKind::Mask => {
            let start = r.pos;
            let raw = r.take(n, "mask payload")?;
            if let Some(i) = raw.iter().position(|&b| b > 1) {
                return Err(r.error(start + i, format!("mask byte {} is not 0 or 1", raw[i])));
            }
            Volume::Mask(VoxelMask {
                header,
                data: raw.iter().map(|&b| b == 1).collect(),
            })
        }
        VolumeKind::Sdf => Volume::Sdf(SdfVolume {
            header,
            data: r.f32_block(n, "sdf payload")?,
        }),
        VolumeKind::Basis => return Err(r.error(8, "file holds a shape basis, not a single volume")),
    };
    r.finish()?;
    Ok(v)
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_vox(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    decode_vox(&read_bytes(path)?, &path.display().to_string())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<VoxelMask> {
    let path = path.as_ref();
    match read_vox(path)? {
        Volume::Mask(m) => Ok(m),
        Volume::Sdf(_) => Err(Error::Format {
            file: path.display().to_string(),
            offset: 8,
            message: "expected a mask volume, found an sdf volume".into(),
        }),
    }
}

pub fn read_sdf(path: impl AsRef<Path>) -> Result<SdfVolume> {
    let path = path.as_ref();
    match read_vox(path)? {
        Volume::Sdf(s) => Ok(s),
        Volume::Mask(_) => Err(Error::Format {
            file: path.display().to_string(),
            offset: 8,
            message: "expected an sdf volume, found a mask volume".into(),
        }),
    }
}

pub fn write_mask(path: impl AsRef<Path>, m: &VoxelMask) -> Result<()> {
    write_bytes(path.as_ref(), &encode_mask(m))
}

pub fn write_sdf(path: impl AsRef<Path>, s: &SdfVolume) -> Result<()> {
    write_bytes(path.as_ref(), &encode_sdf(s))
}
