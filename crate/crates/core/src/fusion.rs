//! Tucker-decomposed bilinear fusion.

use jex_tensor::{Tape, Tensor, Var};
use rand::Rng;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::init::uniform;

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerParams {
    /// ω, `t_q × t_v × t_e`
    pub core: Tensor,
    /// `n_q × t_q`
    pub tau_q: Tensor,
    /// `n_v × t_v`
    pub tau_v: Tensor,
    /// `n_e × t_e` output factor, present only when the fusion feeds a classifier.
    pub tau_e: Option<Tensor>,
    pub glimpses: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TuckerVars {
    pub core: Var,
    pub tau_q: Var,
    pub tau_v: Var,
}

impl TuckerParams {
    pub fn random(
        (n_q, n_v): (usize, usize),
        (t_q, t_v, t_e): (usize, usize, usize),
        glimpses: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let p = Self {
            core: uniform(&[t_q, t_v, t_e], t_q * t_v, rng)?,
            tau_q: uniform(&[n_q, t_q], n_q, rng)?,
            tau_v: uniform(&[n_v, t_v], n_v, rng)?,
            tau_e: None,
            glimpses,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_output(mut self, n_e: usize, rng: &mut impl Rng) -> Result<Self> {
        let t_e = self.t_e();
        self.tau_e = Some(uniform(&[n_e, t_e], t_e, rng)?);
        self.validate()?;
        Ok(self)
    }

    pub fn t_q(&self) -> usize {
        self.core.shape()[0]
    }

    pub fn t_v(&self) -> usize {
        self.core.shape()[1]
    }

    pub fn t_e(&self) -> usize {
        self.core.shape()[2]
    }

    pub fn n_q(&self) -> usize {
        self.tau_q.shape()[0]
    }

    pub fn n_v(&self) -> usize {
        self.tau_v.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidConfig(m));
        if self.core.rank() != 3 || self.tau_q.rank() != 2 || self.tau_v.rank() != 2 {
            return bad("fusion tensors have the wrong rank".into());
        }
        let (t_q, t_v, t_e) = (self.t_q(), self.t_v(), self.t_e());
        if self.tau_q.shape()[1] != t_q || self.tau_v.shape()[1] != t_v {
            return bad(format!(
                "factor shapes {:?}, {:?} disagree with core {:?}",
                self.tau_q.shape(),
                self.tau_v.shape(),
                self.core.shape()
            ));
        }
        if t_q > self.n_q() || t_v > self.n_v() {
            return bad(format!(
                "ranks (t_q={t_q}, t_v={t_v}) exceed inputs (n_q={}, n_v={})",
                self.n_q(),
                self.n_v()
            ));
        }
        if self.glimpses == 0 || t_e % self.glimpses != 0 {
            return bad(format!(
                "t_e={t_e} is not divisible by {} glimpses",
                self.glimpses
            ));
        }
        if let Some(e) = &self.tau_e {
            if e.rank() != 2 || e.shape()[1] != t_e || t_e > e.shape()[0] {
                return bad(format!(
                    "output factor {:?} does not fit t_e={t_e}",
                    e.shape()
                ));
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> TuckerVars {
        let mut leaf = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        TuckerVars {
            core: leaf(&self.core),
            tau_q: leaf(&self.tau_q),
            tau_v: leaf(&self.tau_v),
        }
    }

    /// Fuses `q` with either one visual vector or a `G × n_v` grid.
    pub fn fuse(&self, q: &Tensor, v: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let q = tape.constant(q.clone());
        let v = tape.constant(v.clone());
        let e = tucker_fuse(&mut tape, q, v, &vars)?;
        Ok(tape.value(e).clone())
    }
}

/// `z_k = Σ_ij ω[i,j,k] (τ_qᵀq)_i (τ_vᵀv)_j`, applied per row when `v` is a grid.
pub fn tucker_fuse(tape: &mut Tape, q: Var, v: Var, p: &TuckerVars) -> Result<Var> {
    let n_q = tape.value(p.tau_q).shape()[0];
    let n_v = tape.value(p.tau_v).shape()[0];
    let core = tape.value(p.core).shape().to_vec();
    let (t_q, t_v, t_e) = (core[0], core[1], core[2]);
    let qs = tape.value(q).shape();
    if qs != [n_q] {
        return Err(CoreError::DimensionMismatch(format!(
            "question embedding {qs:?}, fusion expects [{n_q}]"
        )));
    }
    let vs = tape.value(v).shape();
    if !(vs == [n_v] || (vs.len() == 2 && vs[1] == n_v)) {
        return Err(CoreError::DimensionMismatch(format!(
            "visual input {vs:?}, fusion expects [{n_v}] or [G, {n_v}]"
        )));
    }
    let q_t = tape.matmul(q, p.tau_q)?;
    let v_t = tape.matmul(v, p.tau_v)?;
    let q_col = tape.reshape(q_t, &[t_q, 1])?;
    let m = tape.n_mode(p.core, q_col, 1)?;
    let m = tape.reshape(m, &[t_v, t_e])?;
    Ok(tape.matmul(v_t, m)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub naive: u64,
    pub tucker: u64,
}

/// Parameter counts of a full bilinear map versus its Tucker factorization.
pub fn param_count(n_q: u64, n_v: u64, n_e: u64, t_q: u64, t_v: u64, t_e: u64) -> ParamCount {
    ParamCount {
        naive: n_q * n_v * n_e,
        tucker: t_q * t_v * t_e + n_q * t_q + n_v * t_v + n_e * t_e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use jex_tensor::gradcheck::check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent triple loop over the factored form.
    pub(crate) fn brute_force(p: &TuckerParams, q: &[f64], v: &[f64]) -> Vec<f64> {
        let (t_q, t_v, t_e) = (p.t_q(), p.t_v(), p.t_e());
        let qt: Vec<f64> = (0..t_q)
            .map(|i| (0..q.len()).map(|a| p.tau_q.at(&[a, i]) * q[a]).sum())
            .collect();
        let vt: Vec<f64> = (0..t_v)
            .map(|j| (0..v.len()).map(|b| p.tau_v.at(&[b, j]) * v[b]).sum())
            .collect();
        (0..t_e)
            .map(|k| {
                let mut z = 0.0;
                for (i, qi) in qt.iter().enumerate() {
                    for (j, vj) in vt.iter().enumerate() {
                        z += p.core.at(&[i, j, k]) * qi * vj;
                    }
                }
                z
            })
            .collect()
    }

    fn random_params(rng: &mut ChaCha8Rng, max: usize) -> TuckerParams {
        let n_q = rng.random_range(1..=max);
        let n_v = rng.random_range(1..=max);
        let t_q = rng.random_range(1..=n_q);
        let t_v = rng.random_range(1..=n_v);
        let t_e = rng.random_range(1..=max);
        TuckerParams::random((n_q, n_v), (t_q, t_v, t_e), 1, rng).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        Tensor::from_fn(&[n], |_| rng.random_range(-2.0..2.0)).unwrap()
    }

    #[test]
    fn unit_example() {
        let p = TuckerParams {
            core: Tensor::new(vec![1, 1, 1], vec![2.0]).unwrap(),
            tau_q: Tensor::matrix(1, 1, vec![1.0]).unwrap(),
            tau_v: Tensor::matrix(1, 1, vec![1.0]).unwrap(),
            tau_e: None,
            glimpses: 1,
        };
        let e = p.fuse(
            &Tensor::vector(vec![3.0]).unwrap(),
            &Tensor::vector(vec![5.0]).unwrap(),
        );
        assert_eq!(e.unwrap().data(), &[30.0]);
    }

    #[test]
    fn zero_question_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng, 6);
        let v = random_vec(&mut rng, p.n_v());
        let e = p.fuse(&Tensor::zeros(&[p.n_q()]).unwrap(), &v).unwrap();
        assert!(e.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = random_params(&mut rng, 8);
            let q = random_vec(&mut rng, p.n_q());
            let v = random_vec(&mut rng, p.n_v());
            let e = p.fuse(&q, &v).unwrap();
            let oracle = brute_force(&p, q.data(), v.data());
            for (a, b) in e.data().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn grid_mode_is_row_wise_vector_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(&mut rng, 7);
        let q = random_vec(&mut rng, p.n_q());
        let grid = Tensor::from_fn(&[5, p.n_v()], |_| rng.random_range(-1.0..1.0)).unwrap();
        let e = p.fuse(&q, &grid).unwrap();
        assert_eq!(e.shape(), &[5, p.t_e()]);
        for r in 0..5 {
            let row = Tensor::vector(grid.row(r).to_vec()).unwrap();
            assert_eq!(p.fuse(&q, &row).unwrap().data(), e.row(r));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = TuckerParams::random((3, 4), (2, 2, 2), 1, &mut rng).unwrap();
        let q = Tensor::zeros(&[2]).unwrap();
        let v = Tensor::zeros(&[4]).unwrap();
        assert!(matches!(
            p.fuse(&q, &v),
            Err(CoreError::DimensionMismatch(_))
        ));
        let q = Tensor::zeros(&[3]).unwrap();
        let v = Tensor::zeros(&[2, 5]).unwrap();
        assert!(matches!(
            p.fuse(&q, &v),
            Err(CoreError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn invariants_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(TuckerParams::random((2, 4), (3, 2, 2), 1, &mut rng).is_err());
        assert!(TuckerParams::random((4, 4), (2, 2, 3), 2, &mut rng).is_err());
        let p = TuckerParams::random((4, 4), (2, 2, 4), 2, &mut rng).unwrap();
        assert!(p.clone().with_output(3, &mut rng).is_err());
        assert!(p.with_output(5, &mut rng).is_ok());
    }

    #[test]
    fn counts() {
        let c = param_count(2400, 2048, 2000, 310, 310, 510);
        assert_eq!(c.naive, 9_830_400_000);
        assert_eq!(c.tucker, 51_409_880);
        assert!(c.tucker < c.naive);
        assert_eq!(
            param_count(1, 1, 1, 1, 1, 1),
            ParamCount {
                naive: 1,
                tucker: 4
            }
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for grid in [false, true] {
            let p = random_params(&mut rng, 5);
            let q = random_vec(&mut rng, p.n_q());
            let v = if grid {
                Tensor::from_fn(&[3, p.n_v()], |_| rng.random_range(-1.0..1.0)).unwrap()
            } else {
                random_vec(&mut rng, p.n_v())
            };
            let params = [p.core.clone(), p.tau_q.clone(), p.tau_v.clone(), q, v];
            let report = check(
                &params,
                |tape, x| {
                    let vars = TuckerVars {
                        core: x[0],
                        tau_q: x[1],
                        tau_v: x[2],
                    };
                    let e = tucker_fuse(tape, x[3], x[4], &vars)?;
                    let t = tape.tanh(e)?;
                    Ok::<_, CoreError>(tape.sum(t)?)
                },
                1e-4,
            )
            .unwrap();
            assert!(report.passes(1e-4), "{report:?}");
        }
    }

    proptest! {
        #[test]
        fn bilinear_in_each_argument(seed in any::<u64>(), alpha in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_params(&mut rng, 6);
            let q1 = random_vec(&mut rng, p.n_q());
            let q2 = random_vec(&mut rng, p.n_q());
            let v1 = random_vec(&mut rng, p.n_v());
            let v2 = random_vec(&mut rng, p.n_v());
            let add = |a: &Tensor, b: &Tensor| Tensor::from_fn(a.shape(), |i| a.data()[i] + b.data()[i]).unwrap();
            let sc = |a: &Tensor| Tensor::from_fn(a.shape(), |i| alpha * a.data()[i]).unwrap();
            let base = p.fuse(&q1, &v1).unwrap();
            let scaled = p.fuse(&sc(&q1), &v1).unwrap();
            let sum_q = p.fuse(&add(&q1, &q2), &v1).unwrap();
            let sum_v = p.fuse(&q1, &add(&v1, &v2)).unwrap();
            let q2v1 = p.fuse(&q2, &v1).unwrap();
            let q1v2 = p.fuse(&q1, &v2).unwrap();
            for k in 0..p.t_e() {
                prop_assert!((scaled.data()[k] - alpha * base.data()[k]).abs() < 1e-9);
                prop_assert!((sum_q.data()[k] - base.data()[k] - q2v1.data()[k]).abs() < 1e-9);
                prop_assert!((sum_v.data()[k] - base.data()[k] - q1v2.data()[k]).abs() < 1e-9);
            }
        }
    }
}
