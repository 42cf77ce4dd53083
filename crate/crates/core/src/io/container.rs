//! Shape-family containers.
//!
//! BASIS1: a VOX1 header with kind 2, then `u32 K`, then `K + 1` f32 grids
//! (the base grid first, then each basis grid).
//!
//! MLP1: magic `MLPSDF01`, `u32 latent_dim`, `u32 n_layers`, `n_layers + 1`
//! u32 widths, then per layer the row-major f64 weight block followed by the
//! f64 bias block, all little-endian.

use std::path::Path;

use super::vox::{decode_header, encode_header, read_bytes, write_bytes, Reader, VolumeHeader, VolumeKind};
use crate::error::{Error, Result};
use crate::field::{LatentGridField, MlpField};
use crate::geom::BoundingBox;

const MLP_MAGIC: &[u8; 8] = b"MLPSDF01";

/// Header describing the lattice of a grid field.
pub fn grid_header(field: &LatentGridField) -> Result<VolumeHeader> {
    VolumeHeader::spanning(field.bbox(), field.dims())
}

pub fn encode_basis(field: &LatentGridField) -> Result<Vec<u8>> {
    let h = grid_header(field)?;
    let mut out = Vec::with_capacity(64 + 4 * field.node_count() * (field.latent_dim() + 1));
    encode_header(&mut out, VolumeKind::Basis, &h);
    out.extend_from_slice(&(field.latent_dim() as u32).to_le_bytes());
    for grid in std::iter::once(field.base()).chain(field.basis().iter().map(Vec::as_slice)) {
        for v in grid {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_basis(bytes: &[u8], file: &str) -> Result<LatentGridField> {
    let mut r = Reader::new(bytes, file);
    let (kind, h) = decode_header(&mut r)?;
    if kind != VolumeKind::Basis {
        return Err(r.error(8, format!("expected a basis container, found volume kind {}", kind as u32)));
    }
    if h.dims.iter().any(|&d| d < 2) {
        return Err(r.error(12, format!("basis grids need at least 2 nodes per axis, got {:?}", h.dims)));
    }
    let k_at = r.pos;
    let k = r.u32("basis count")? as usize;
    let n = h.voxel_count();
    let need = n.checked_mul(4).and_then(|b| b.checked_mul(k + 1));
    if need.is_none_or(|b| b > bytes.len() - r.pos) {
        return Err(r.error(k_at, format!("basis count {k} exceeds the file size")));
    }
    let base = r.f32_block(n, "base grid")?;
    let basis = (0..k).map(|_| r.f32_block(n, "basis grid")).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let bbox: BoundingBox = h.bbox()?;
    LatentGridField::new(h.dims, bbox, base, basis)
}

pub fn write_basis(path: impl AsRef<Path>, field: &LatentGridField) -> Result<()> {
    write_bytes(path.as_ref(), &encode_basis(field)?)
}

pub fn read_basis(path: impl AsRef<Path>) -> Result<LatentGridField> {
    let path = path.as_ref();
    decode_basis(&read_bytes(path)?, &path.display().to_string())
}

pub fn encode_mlp(field: &MlpField) -> Vec<u8> {
    let widths = field.widths();
    let mut out = Vec::new();
    out.extend_from_slice(MLP_MAGIC);
    out.extend_from_slice(&(field.latent_dim() as u32).to_le_bytes());
    out.extend_from_slice(&((widths.len() - 1) as u32).to_le_bytes());
    for w in &widths {
        out.extend_from_slice(&(*w as u32).to_le_bytes());
    }
    for layer in field.layers() {
        for v in layer.weights.iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_mlp(bytes: &[u8], file: &str) -> Result<MlpField> {
    let mut r = Reader::new(bytes, file);
    r.magic(MLP_MAGIC)?;
    let latent_dim = r.u32("latent dim")? as usize;
    let layers_at = r.pos;
    let n_layers = r.u32("layer count")? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(r.error(layers_at, format!("implausible layer count {n_layers}")));
    }
    let widths = (0..=n_layers).map(|_| r.u32("widths").map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
    let mut params = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let at = r.pos;
        let count = widths[l]
            .checked_mul(widths[l + 1])
            .filter(|c| c.checked_mul(8).is_some_and(|b| b <= bytes.len() - r.pos))
            .ok_or_else(|| r.error(at, format!("layer {l} weight block exceeds the file size")))?;
        let weights = (0..count).map(|_| r.f64("weights")).collect::<Result<Vec<_>>>()?;
        let bias = (0..widths[l + 1]).map(|_| r.f64("bias")).collect::<Result<Vec<_>>>()?;
        params.push((weights, bias));
    }
    r.finish()?;
    MlpField::from_layers(latent_dim, &widths, params).map_err(|e| Error::Format {
        file: file.into(),
        offset: 12,
        message: e.to_string(),
    })
}

pub fn write_mlp(path: impl AsRef<Path>, field: &MlpField) -> Result<()> {
    write_bytes(path.as_ref(), &encode_mlp(field))
}

pub fn read_mlp(path: impl AsRef<Path>) -> Result<MlpField> {
    let path = path.as_ref();
    decode_mlp(&read_bytes(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;

    #[test]
    fn basis_round_trip() {
        // Box corners and spacing exactly representable in f32.
        let bbox = BoundingBox::new(Point3::new(-1.0, -0.5, 0.0), Point3::new(1.0, 0.5, 1.5)).unwrap();
        let g = LatentGridField::from_fn([5, 3, 4], bbox, 2, |p, k| match k {
            None => p.norm() - 0.5,
            Some(i) => p.x * i as f64 + 0.1,
        })
        .unwrap();
        let bytes = encode_basis(&g).unwrap();
        let back = decode_basis(&bytes, "b").unwrap();
        assert_eq!(back, g);
        assert_eq!(encode_basis(&back).unwrap(), bytes);
        let mut bad = bytes.clone();
        bad[48..52].copy_from_slice(&1000u32.to_le_bytes());
        assert!(matches!(decode_basis(&bad, "b"), Err(Error::Format { .. })));
    }

    #[test]
    fn mlp_round_trip() {
        let m = MlpField::random(3, &[8, 5], 4, 1.0).unwrap();
        let bytes = encode_mlp(&m);
        let back = decode_mlp(&bytes, "m").unwrap();
        assert_eq!(back, m);
        assert!(decode_mlp(&bytes[..bytes.len() - 3], "m").is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_mlp(&bad, "m").unwrap_err().to_string().contains("XLPSDF01"));
    }
}
