use jex_tensor::gradcheck::check;
use jex_tensor::ops::{maxpool1d, maxpool_windows, softmax};
use jex_tensor::{Result, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
}

/// One randomly wired graph over a matrix `x[r×c]`, a matrix `w[c×k]`,
/// a vector `b[k]` and a core `t[r×k×c]`.
fn random_graph(kind: u64) -> impl Fn(&mut Tape, &[Var]) -> Result<Var> {
    move |tape: &mut Tape, p: &[Var]| {
        let (x, w, b, core) = (p[0], p[1], p[2], p[3]);
        let xw = tape.matmul(x, w)?;
        let h = tape.add(xw, b)?;
        let h = match kind % 3 {
            0 => tape.tanh(h)?,
            1 => tape.sigmoid(h)?,
            _ => tape.softmax(h)?,
        };
        let rows = tape.value(h).shape()[0];
        let k = tape.value(h).shape()[1];
        let mixed = match kind % 4 {
            0 => {
                let t = tape.n_mode(core, w, 3)?; // r×k×k
                let flat = tape.reshape(t, &[rows * k * k])?;
                let pooled = tape.maxpool(flat, k)?;
                let hrow = tape.slice(h, 0, 0, 1)?;
                let hrow = tape.reshape(hrow, &[k])?;
                tape.mul(pooled, hrow)?
            }
            1 => {
                let first = tape.slice(h, 1, 0, 1)?;
                let weights = tape.reshape(first, &[rows])?;
                let weights = tape.softmax(weights)?;
                let ws = tape.weighted_sum(weights, x)?;
                let both = tape.concat(&[ws, b])?;
                tape.tanh(both)?
            }
            2 => {
                let t = tape.n_mode(core, x, 1)?; // c×k×c
                let s = tape.sum(t)?;
                let hs = tape.sum(h)?;
                let prod = tape.mul(s, hs)?;
                tape.scale(prod, 0.3)?
            }
            _ => {
                let d = tape.sub(h, h)?;
                let e = tape.add(d, h)?;
                let sq = tape.mul(e, e)?;
                let logits = tape.slice(sq, 0, rows - 1, 1)?;
                let logits = tape.reshape(logits, &[k])?;
                let mut target = vec![0.0; k];
                target[0] = 0.75;
                target[k - 1] += 0.25;
                return tape.cross_entropy(logits, &target);
            }
        };
        tape.sum(mixed)
    }
}

#[test]
fn hundred_random_graphs_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for g in 0..100u64 {
        let r = rng.random_range(2..=4);
        let c = rng.random_range(2..=4);
        let k = rng.random_range(2..=4);
        let params = vec![
            random(&mut rng, &[r, c]),
            random(&mut rng, &[c, k]),
            random(&mut rng, &[k]),
            random(&mut rng, &[r, k, c]),
        ];
        let report = check(&params, random_graph(g), 1e-4).unwrap();
        assert!(
            report.passes(1e-4),
            "graph {g}: rel err {} at {:?}",
            report.max_rel_error,
            report.worst
        );
        worst = worst.max(report.max_rel_error);
    }
    eprintln!("max relative error over 100 graphs: {worst:.3e}");
}

#[test]
fn n_mode_gradients_on_every_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for mode in 1..=3 {
        let shape = [3, 4, 2];
        let t = random(&mut rng, &shape);
        let m = random(&mut rng, &[shape[mode - 1], 3]);
        let report = check(
            &[t, m],
            |tape, p| {
                let out = tape.n_mode(p[0], p[1], mode)?;
                let sq = tape.mul(out, out)?;
                tape.sum(sq)
            },
            1e-4,
        )
        .unwrap();
        assert!(report.passes(1e-4), "mode {mode}: {:?}", report);
    }
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(x in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let p = softmax(&x).unwrap();
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn maxpool_has_exact_length_and_window_maxima(
        x in prop::collection::vec(-10.0f64..10.0, 1..300),
        frac in 0.0f64..1.0,
    ) {
        let buckets = 1 + ((x.len() - 1) as f64 * frac) as usize;
        let out = maxpool1d(&x, buckets).unwrap();
        prop_assert_eq!(out.len(), buckets);
        for (w, v) in maxpool_windows(x.len(), buckets).unwrap().into_iter().zip(&out) {
            prop_assert!(!w.is_empty());
            let max = x[w].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(*v, max);
        }
    }
}
