//! `.jexs` store files. Header, ids and keys are read eagerly; `ξ` rows are
//! read by offset on demand.

use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{ExemplarStore, XiSource};
use crate::binio::{checked_bytes, put_len, put_u32, put_u64, write_file, Reader};
use crate::error::{CoreError, Result};

const MAGIC: &[u8; 4] = b"JEXS";
const VERSION: u32 = 1;
const HEADER: usize = 20;

#[derive(Debug)]
pub struct FileXi {
    path: PathBuf,
    file: Mutex<File>,
    offset: u64,
    rows: usize,
    dim: usize,
}

impl FileXi {
    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl XiSource for FileXi {
    fn rows(&self) -> usize {
        self.rows
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn read_row(&self, row: usize) -> Result<Vec<f32>> {
        if row >= self.rows {
            return Err(CoreError::DimensionMismatch(format!(
                "row {row} out of range"
            )));
        }
        let width = 4 * self.dim;
        let mut buf = vec![0u8; width];
        {
            let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
            f.seek(SeekFrom::Start(self.offset + (row * width) as u64))
                .and_then(|_| f.read_exact(&mut buf))
                .map_err(|e| CoreError::io(&self.path, e))?;
        }
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn save_store<X: XiSource>(store: &ExemplarStore<X>, path: &Path) -> Result<()> {
    let (n, d, rho) = (store.len(), store.dim(), store.rho());
    let mut out = Vec::with_capacity(HEADER + n * (8 + 4 * (rho + d)));
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_len(&mut out, n)?;
    put_len(&mut out, d)?;
    put_len(&mut out, rho)?;
    for &id in store.ids() {
        put_u64(&mut out, id);
    }
    for &k in store.kappa() {
        out.extend_from_slice(&k.to_le_bytes());
    }
    for row in 0..n {
        for x in store.xi().read_row(row)? {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_file(path, &out)
}

/// Opens a store file, keeping `ξ` on disk.
pub fn load_store(path: &Path) -> Result<ExemplarStore<FileXi>> {
    let io = |e| CoreError::io(path, e);
    let mut file = File::open(path).map_err(io)?;
    let len = file.metadata().map_err(io)?.len();

    let mut header = vec![0u8; HEADER.min(len as usize)];
    file.read_exact(&mut header).map_err(io)?;
    let mut r = Reader::new(&header);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let rho = r.u32()? as usize;

    let ids_bytes = checked_bytes(n, 8)?;
    let key_bytes = checked_bytes(checked_bytes(n, rho)?, 4)?;
    let xi_bytes = checked_bytes(checked_bytes(n, d)?, 4)?;
    let expected = [ids_bytes, key_bytes, xi_bytes]
        .iter()
        .try_fold(HEADER as u64, |a, &b| a.checked_add(b as u64))
        .ok_or_else(|| CoreError::Corrupted("store size overflows".into()))?;
    if len < expected {
        return Err(CoreError::TruncatedPayload {
            expected,
            found: len,
        });
    }
    if len > expected {
        return Err(CoreError::Corrupted(format!(
            "payload size mismatch: {} trailing bytes",
            len - expected
        )));
    }

    let mut eager = vec![0u8; ids_bytes + key_bytes];
    file.read_exact(&mut eager).map_err(io)?;
    let mut r = Reader::new(&eager);
    let ids = r.u64s(n)?;
    let kappa = r.f32s(n * rho)?;
    let xi = FileXi {
        path: path.to_path_buf(),
        file: Mutex::new(file),
        offset: (HEADER + ids_bytes + key_bytes) as u64,
        rows: n,
        dim: d,
    };
    ExemplarStore::from_parts(ids, kappa, xi, rho)
}

#[cfg(test)]
mod tests {
    use super::super::build_store;
    use super::*;
    use jex_tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_store(rows: usize, seed: u64) -> ExemplarStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embs: Vec<(u64, Tensor)> = (0..rows as u64)
            .map(|i| {
                (
                    i * 7 + 3,
                    Tensor::from_fn(&[4, 6], |_| rng.random_range(-1.0..1.0)).unwrap(),
                )
            })
            .collect();
        build_store(&embs, 1.0, 5, seed).unwrap()
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let store = random_store(10, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jexs");
        save_store(&store, &path).unwrap();
        let back = load_store(&path).unwrap();
        assert_eq!(back.ids(), store.ids());
        assert_eq!(back.kappa(), store.kappa());
        assert_eq!(back.to_memory().unwrap().xi(), store.xi());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let q: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(
                back.nearest(&q, None).unwrap(),
                store.nearest(&q, None).unwrap()
            );
        }
    }

    #[test]
    fn truncated_and_corrupted_files() {
        let store = random_store(10, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jexs");
        save_store(&store, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_store(&path),
            Err(CoreError::TruncatedPayload { .. })
        ));
        std::fs::write(&path, &bytes[..10]).unwrap();
        assert!(load_store(&path).is_err());

        let mut extra = bytes.clone();
        extra.push(1);
        std::fs::write(&path, &extra).unwrap();
        assert!(matches!(load_store(&path), Err(CoreError::Corrupted(_))));

        let mut magic = bytes;
        magic[0] = b'X';
        std::fs::write(&path, &magic).unwrap();
        let err = load_store(&path).unwrap_err();
        assert!(err.to_string().starts_with("bad magic"));
    }
}
