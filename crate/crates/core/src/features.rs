//! Precomputed visual features and the `.jexf` file format.
//!
//! A file holds the grid only, either as `[G, n_v]` or `[H, W, n_v]`; the
//! pooled vector is the mean of the grid rows.

use std::path::{Path, PathBuf};

use jex_tensor::Tensor;

use crate::binio::{put_len, put_u32, read_file, write_file, Reader};
use crate::error::{CoreError, Result};

const MAGIC: &[u8; 4] = b"JEXF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatures {
    grid: Tensor,
    pooled: Tensor,
}

impl VisualFeatures {
    /// Wraps a `G × n_v` grid and derives the pooled vector as its row mean.
    pub fn from_grid(grid: Tensor) -> Result<Self> {
        if grid.rank() != 2 || grid.rows() == 0 || grid.cols() == 0 {
            return Err(CoreError::DimensionMismatch(format!(
                "feature grid must be a non-empty matrix, got {:?}",
                grid.shape()
            )));
        }
        let (g, n) = (grid.rows(), grid.cols());
        let mut pooled = vec![0.0; n];
        for r in 0..g {
            for (p, x) in pooled.iter_mut().zip(grid.row(r)) {
                *p += x;
            }
        }
        pooled.iter_mut().for_each(|p| *p /= g as f64);
        Ok(Self {
            grid,
            pooled: Tensor::vector(pooled)?,
        })
    }

    pub fn new(grid: Tensor, pooled: Tensor) -> Result<Self> {
        if grid.rank() != 2 || pooled.rank() != 1 || pooled.len() != grid.cols() {
            return Err(CoreError::DimensionMismatch(format!(
                "grid {:?} and pooled {:?} disagree",
                grid.shape(),
                pooled.shape()
            )));
        }
        Ok(Self { grid, pooled })
    }

    pub fn grid(&self) -> &Tensor {
        &self.grid
    }

    pub fn pooled(&self) -> &Tensor {
        &self.pooled
    }

    /// Number of grid cells `G`.
    pub fn cells(&self) -> usize {
        self.grid.rows()
    }

    /// Channels per cell `n_v`.
    pub fn channels(&self) -> usize {
        self.grid.cols()
    }
}

pub fn feature_path(dir: &Path, image_id: u64) -> PathBuf {
    dir.join(format!("{image_id}.jexf"))
}

pub fn encode_features(f: &VisualFeatures) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20 + 4 * f.grid.len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, 2);
    put_len(&mut out, f.cells())?;
    put_len(&mut out, f.channels())?;
    for &x in f.grid.data() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<VisualFeatures> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let ndim = r.u32()? as usize;
    if !(2..=3).contains(&ndim) {
        return Err(CoreError::Corrupted(format!(
            "feature file has {ndim} dims (expected 2 or 3)"
        )));
    }
    let dims = (0..ndim)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let channels = dims[ndim - 1];
    let cells = dims[..ndim - 1]
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| CoreError::Corrupted("feature dims overflow".into()))?;
    let count = cells
        .checked_mul(channels)
        .ok_or_else(|| CoreError::Corrupted("feature dims overflow".into()))?;
    let payload = r.f32s(count)?;
    r.finish()?;
    let grid = Tensor::matrix(
        cells,
        channels,
        payload.into_iter().map(f64::from).collect(),
    )?;
    VisualFeatures::from_grid(grid)
}

pub fn save_features(path: &Path, f: &VisualFeatures) -> Result<()> {
    write_file(path, &encode_features(f)?)
}

pub fn load_features(path: &Path) -> Result<VisualFeatures> {
    decode_features(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_f32_grid(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[rows, cols], |_| f64::from(rng.random_range(-3.0f32..3.0))).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let f = VisualFeatures::from_grid(random_f32_grid(4, 8, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = feature_path(dir.path(), 42);
        save_features(&path, &f).unwrap();
        let back = load_features(&path).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.grid()), bits(f.grid()));
        assert_eq!(bits(back.pooled()), bits(f.pooled()));
        assert_eq!(back.pooled().len(), 8);
    }

    #[test]
    fn pooled_is_row_mean() {
        let grid = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let f = VisualFeatures::from_grid(grid).unwrap();
        assert_eq!(f.pooled().data(), &[2.0, 4.0]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes =
            encode_features(&VisualFeatures::from_grid(random_f32_grid(2, 2, 2)).unwrap()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        let err = decode_features(&bytes).unwrap_err();
        assert!(err.to_string().starts_with("bad magic"), "{err}");
    }

    #[test]
    fn version_mismatch() {
        let mut bytes =
            encode_features(&VisualFeatures::from_grid(random_f32_grid(2, 2, 2)).unwrap()).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            decode_features(&bytes),
            Err(CoreError::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn short_payload_is_truncated() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"JEXF");
        for v in [1u32, 2, 196, 2048] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&[0u8; 64]);
        let err = decode_features(&bytes).unwrap_err();
        assert!(err.to_string().starts_with("truncated payload"), "{err}");
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes =
            encode_features(&VisualFeatures::from_grid(random_f32_grid(2, 2, 3)).unwrap()).unwrap();
        bytes.push(0);
        assert!(matches!(
            decode_features(&bytes),
            Err(CoreError::Corrupted(_))
        ));
    }

    #[test]
    fn three_dim_grid_flattens_spatially() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"JEXF");
        for v in [1u32, 3, 2, 2, 1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for x in [1.0f32, 2.0, 3.0, 4.0] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let f = decode_features(&bytes).unwrap();
        assert_eq!(f.cells(), 4);
        assert_eq!(f.channels(), 1);
        assert_eq!(f.pooled().data(), &[2.5]);
    }
}
