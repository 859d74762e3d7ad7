//! Exemplar store: sampled joint embeddings `ξ`, their max-pooled soft keys
//! `κ`, and exact nearest-neighbour lookup over the keys.

mod file;
mod kdtree;

use std::sync::atomic::{AtomicUsize, Ordering};

use jex_tensor::ops::maxpool1d;
use jex_tensor::Tensor;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use file::{load_store, save_store, FileXi};
pub use kdtree::{squared_distance, KdTree};

use crate::error::{CoreError, Result};

/// Max-pools the row-major flattening of `e` into `rho` buckets.
pub fn compact_key(e: &[f64], rho: usize) -> Result<Vec<f64>> {
    if rho == 0 || rho > e.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "key length {rho} does not fit an embedding of {} values",
            e.len()
        )));
    }
    Ok(maxpool1d(e, rho)?)
}

/// Row access to stored embeddings.
pub trait XiSource {
    fn rows(&self) -> usize;
    fn dim(&self) -> usize;
    fn read_row(&self, row: usize) -> Result<Vec<f32>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct InMemoryXi {
    data: Vec<f32>,
    dim: usize,
}

impl InMemoryXi {
    pub fn new(data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(CoreError::DimensionMismatch(format!(
                "{} values do not form rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { data, dim })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

impl XiSource for InMemoryXi {
    fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn read_row(&self, row: usize) -> Result<Vec<f32>> {
        self.data
            .get(row * self.dim..(row + 1) * self.dim)
            .map(<[f32]>::to_vec)
            .ok_or_else(|| CoreError::DimensionMismatch(format!("row {row} out of range")))
    }
}

/// Counts row reads on the wrapped source.
#[derive(Debug)]
pub struct CountingXi<X> {
    inner: X,
    reads: AtomicUsize,
}

impl<X> CountingXi<X> {
    pub fn new(inner: X) -> Self {
        Self {
            inner,
            reads: AtomicUsize::new(0),
        }
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.reads.store(0, Ordering::SeqCst);
    }
}

impl<X: XiSource> XiSource for CountingXi<X> {
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn read_row(&self, row: usize) -> Result<Vec<f32>> {
        self.reads.fetch_add(1, Ordering::SeqCst);
        self.inner.read_row(row)
    }
}

#[derive(Debug)]
pub struct ExemplarStore<X = InMemoryXi> {
    xi: X,
    kappa: Vec<f32>,
    ids: Vec<u64>,
    rho: usize,
    tree: KdTree,
}

impl<X: XiSource> ExemplarStore<X> {
    /// Assembles a store from its parts and rebuilds the tree.
    pub fn from_parts(ids: Vec<u64>, kappa: Vec<f32>, xi: X, rho: usize) -> Result<Self> {
        let n = ids.len();
        if xi.rows() != n || kappa.len() != n * rho || (n > 0 && (rho == 0 || rho > xi.dim())) {
            return Err(CoreError::Corrupted(format!(
                "store parts disagree: {n} ids, {} key values for rho={rho}, {} rows of {}",
                kappa.len(),
                xi.rows(),
                xi.dim()
            )));
        }
        if kappa.iter().any(|k| !k.is_finite()) {
            return Err(CoreError::NumericFailure("non-finite exemplar key".into()));
        }
        let tree = KdTree::build(&kappa, rho);
        Ok(Self {
            xi,
            kappa,
            ids,
            rho,
            tree,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    /// Stored embedding length `d = G·t_e`.
    pub fn dim(&self) -> usize {
        self.xi.dim()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn kappa(&self) -> &[f32] {
        &self.kappa
    }

    pub fn kappa_row(&self, row: usize) -> &[f32] {
        &self.kappa[row * self.rho..(row + 1) * self.rho]
    }

    pub fn xi(&self) -> &X {
        &self.xi
    }

    pub fn map_xi<Y: XiSource>(self, f: impl FnOnce(X) -> Y) -> ExemplarStore<Y> {
        ExemplarStore {
            xi: f(self.xi),
            kappa: self.kappa,
            ids: self.ids,
            rho: self.rho,
            tree: self.tree,
        }
    }

    /// Compact key of `e` as stored (`f32`).
    pub fn key(&self, e: &[f64]) -> Result<Vec<f32>> {
        if e.len() != self.dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "query embedding has {} values, store rows have {}",
                e.len(),
                self.dim()
            )));
        }
        Ok(compact_key(e, self.rho)?
            .into_iter()
            .map(|x| x as f32)
            .collect())
    }

    /// Row whose key is nearest to `key`, skipping rows with id `exclude`.
    /// Ties go to the lowest row.
    pub fn nearest_row(&self, key: &[f32], exclude: Option<u64>) -> Result<(usize, f64)> {
        if self.is_empty() {
            return Err(CoreError::EmptyStore);
        }
        if key.len() != self.rho {
            return Err(CoreError::DimensionMismatch(format!(
                "key of length {} against rho={}",
                key.len(),
                self.rho
            )));
        }
        self.tree
            .nearest(&self.kappa, key, |row| Some(self.ids[row]) == exclude)
            .map(|(d, row)| (row, d))
            .ok_or(CoreError::AllExcluded)
    }

    /// Full stored embedding nearest to `e` in key space, and its id.
    pub fn nearest(&self, e: &[f64], exclude: Option<u64>) -> Result<(Vec<f64>, u64)> {
        let key = self.key(e)?;
        let (row, _) = self.nearest_row(&key, exclude)?;
        let xi = self.xi.read_row(row)?;
        Ok((xi.into_iter().map(f64::from).collect(), self.ids[row]))
    }

    /// Copies every `ξ` row into memory.
    pub fn to_memory(&self) -> Result<ExemplarStore<InMemoryXi>> {
        let mut data = Vec::with_capacity(self.len() * self.dim());
        for row in 0..self.len() {
            data.extend(self.xi.read_row(row)?);
        }
        Ok(ExemplarStore {
            xi: InMemoryXi::new(data, self.dim().max(1))?,
            kappa: self.kappa.clone(),
            ids: self.ids.clone(),
            rho: self.rho,
            tree: self.tree.clone(),
        })
    }
}

/// Stores a seeded uniform sample of `ceil(rate·total)` embeddings, kept in
/// input order.
pub fn build_store(
    embeddings: &[(u64, Tensor)],
    sample_rate: f64,
    rho: usize,
    seed: u64,
) -> Result<ExemplarStore> {
    if embeddings.is_empty() {
        return Err(CoreError::EmptyInput("embeddings"));
    }
    if !(sample_rate > 0.0 && sample_rate <= 1.0) {
        return Err(CoreError::InvalidSampleRate(sample_rate));
    }
    let total = embeddings.len();
    let d = embeddings[0].1.len();
    let n = sample_size(total, sample_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = sample(&mut rng, total, n).into_vec();
    rows.sort_unstable();

    let mut ids = Vec::with_capacity(n);
    let mut xi = Vec::with_capacity(n * d);
    let mut kappa = Vec::with_capacity(n * rho);
    for r in rows {
        let (id, e) = &embeddings[r];
        if e.len() != d {
            return Err(CoreError::DimensionMismatch(format!(
                "embedding {id} has {} values, expected {d}",
                e.len()
            )));
        }
        if !e.is_finite() {
            return Err(CoreError::NumericFailure(format!(
                "embedding {id} is not finite"
            )));
        }
        let row: Vec<f32> = e.data().iter().map(|&x| x as f32).collect();
        let wide: Vec<f64> = row.iter().map(|&x| f64::from(x)).collect();
        kappa.extend(compact_key(&wide, rho)?.into_iter().map(|x| x as f32));
        xi.extend(row);
        ids.push(*id);
    }
    ExemplarStore::from_parts(ids, kappa, InMemoryXi::new(xi, d)?, rho)
}

/// `ceil(rate·total)`, at least one and at most `total`.
pub fn sample_size(total: usize, rate: f64) -> usize {
    ((rate * total as f64 - 1e-9).ceil() as usize).clamp(1, total.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn flat(rows: &[&[f64]]) -> Vec<(u64, Tensor)> {
        rows.iter()
            .enumerate()
            .map(|(i, r)| (100 + i as u64, Tensor::vector(r.to_vec()).unwrap()))
            .collect()
    }

    #[test]
    fn key_examples() {
        assert_eq!(compact_key(&[2.5; 12], 4).unwrap(), vec![2.5; 4]);
        assert_eq!(
            compact_key(&[3.0, 1.0, 4.0, 1.0], 2).unwrap(),
            vec![3.0, 4.0]
        );
        assert!(compact_key(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn key_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let e: Vec<f64> = (0..37).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bumped: Vec<f64> = e.iter().map(|x| x + rng.random_range(0.0..0.5)).collect();
            let (a, b) = (
                compact_key(&e, 7).unwrap(),
                compact_key(&bumped, 7).unwrap(),
            );
            assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
        }
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(sample_size(100, 0.1), 10);
        assert_eq!(sample_size(101, 0.1), 11);
        assert_eq!(sample_size(5, 0.01), 1);
        assert_eq!(sample_size(7, 1.0), 7);
    }

    #[test]
    fn build_samples_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let embs: Vec<(u64, Tensor)> = (0..100)
            .map(|i| {
                (
                    i,
                    Tensor::from_fn(&[2, 3], |_| rng.random_range(-1.0..1.0)).unwrap(),
                )
            })
            .collect();
        let a = build_store(&embs, 0.1, 4, 9).unwrap();
        let b = build_store(&embs, 0.1, 4, 9).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a.ids(), b.ids());
        assert_eq!(a.xi(), b.xi());
        assert!(a.ids().windows(2).all(|w| w[0] < w[1]));

        let full = build_store(&embs, 1.0, 4, 9).unwrap();
        assert_eq!(full.ids(), (0..100).collect::<Vec<_>>());
        for row in 0..full.len() {
            let xi: Vec<f64> = full
                .xi()
                .read_row(row)
                .unwrap()
                .into_iter()
                .map(f64::from)
                .collect();
            let key: Vec<f32> = compact_key(&xi, 4)
                .unwrap()
                .into_iter()
                .map(|x| x as f32)
                .collect();
            assert_eq!(full.kappa_row(row), key.as_slice());
        }
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            build_store(&[], 0.5, 1, 0),
            Err(CoreError::EmptyInput(_))
        ));
        let embs = flat(&[&[1.0, 2.0]]);
        assert!(matches!(
            build_store(&embs, 0.0, 1, 0),
            Err(CoreError::InvalidSampleRate(_))
        ));
        assert!(matches!(
            build_store(&embs, 1.5, 1, 0),
            Err(CoreError::InvalidSampleRate(_))
        ));
    }

    #[test]
    fn nearest_examples() {
        let single = build_store(&flat(&[&[7.0, 8.0]]), 1.0, 2, 0).unwrap();
        assert_eq!(
            single.nearest(&[0.0, 0.0], None).unwrap(),
            (vec![7.0, 8.0], 100)
        );

        let store =
            build_store(&flat(&[&[0.0, 0.0], &[3.0, 4.0], &[1.0, 1.0]]), 1.0, 2, 0).unwrap();
        assert_eq!(store.nearest(&[1.0, 2.0], None).unwrap().1, 102);
        assert_eq!(store.nearest(&[3.0, 4.0], None).unwrap().1, 101);
        assert_eq!(store.nearest(&[3.0, 4.0], Some(101)).unwrap().1, 102);
    }

    #[test]
    fn exclusion_errors() {
        let single = build_store(&flat(&[&[7.0]]), 1.0, 1, 0).unwrap();
        assert!(matches!(
            single.nearest(&[7.0], Some(100)),
            Err(CoreError::AllExcluded)
        ));
        assert!(matches!(
            single.nearest(&[7.0, 1.0], None),
            Err(CoreError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ties_go_to_lowest_row() {
        let store = build_store(&flat(&[&[1.0], &[-1.0], &[1.0]]), 1.0, 1, 0).unwrap();
        assert_eq!(store.nearest(&[0.0], None).unwrap().1, 100);
        assert_eq!(store.nearest(&[0.0], Some(100)).unwrap().1, 101);
    }

    #[test]
    fn one_xi_read_per_query() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let embs: Vec<(u64, Tensor)> = (0..50)
            .map(|i| {
                (
                    i,
                    Tensor::from_fn(&[20], |_| rng.random_range(-1.0..1.0)).unwrap(),
                )
            })
            .collect();
        let store = build_store(&embs, 1.0, 5, 0)
            .unwrap()
            .map_xi(CountingXi::new);
        for (id, e) in embs.iter().take(10) {
            store.xi().reset();
            let (_, got) = store.nearest(e.data(), None).unwrap();
            assert_eq!(got, *id);
            assert_eq!(store.xi().reads(), 1);
        }
    }
}
