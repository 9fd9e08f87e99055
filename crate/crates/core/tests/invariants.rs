mod common;

use common::{normalization_pass, rand_tensor, rng};
use ndr_core::ndr::dq_affinity;
use ndr_core::{Graph, Tensor};
use proptest::prelude::*;

#[test]
fn affinity_rows_sum_to_one_and_cp_is_open_unit() {
    let (mut dev, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..1000 {
        let (d, l, h) = normalization_pass(seed);
        dev = dev.max(d);
        lo = lo.min(l);
        hi = hi.max(h);
    }
    assert!(dev < 1e-6, "row-sum deviation {dev:e}");
    assert!(lo > 0.0 && hi < 1.0, "cp range [{lo}, {hi}]");
}

fn affinity(f: &Tensor, d: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let mut g = Graph::new();
    let (f, d, w, b) = (g.constant(f).unwrap(), g.constant(d).unwrap(), g.constant(w).unwrap(), g.constant(b).unwrap());
    let s = dq_affinity(&mut g, f, d, w, b).unwrap();
    g.value(s).to_vec()
}

fn instance(seed: u64, h: usize, w: usize, c: usize, m: usize, n: usize) -> (Tensor, Tensor, Tensor, Tensor) {
    let mut r = rng(seed);
    (
        rand_tensor(&mut r, &[h, w, c], 2.0),
        rand_tensor(&mut r, &[m, n], 2.0),
        rand_tensor(&mut r, &[c, m], 1.0),
        rand_tensor(&mut r, &[m], 1.0),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rows_are_distributions(seed in any::<u64>(), h in 1usize..6, w in 1usize..6, c in 1usize..5, m in 1usize..5, n in 1usize..6) {
        let (f, d, wt, b) = instance(seed, h, w, c, m, n);
        let s = affinity(&f, &d, &wt, &b);
        prop_assert_eq!(s.len(), h * w * n);
        for row in s.chunks(n) {
            prop_assert!(row.iter().all(|&v| v > 0.0 && v <= 1.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    /// Adding the same vector to every dictionary column shifts each pixel's
    /// logits by a per-pixel constant, which the row softmax removes.
    #[test]
    fn common_column_shift_is_invisible(seed in any::<u64>(), shift in prop::collection::vec(-3.0f64..3.0, 3)) {
        let (f, d, wt, b) = instance(seed, 3, 4, 2, 3, 4);
        let mut shifted = d.clone();
        for mi in 0..3 {
            for ni in 0..4 {
                let o = shifted.offset(&[mi, ni]);
                shifted.data_mut()[o] += shift[mi];
            }
        }
        let a = affinity(&f, &d, &wt, &b);
        let s = affinity(&f, &shifted, &wt, &b);
        for (x, y) in a.iter().zip(&s) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    /// The most probable slot of every row is the largest logit `P D`.
    #[test]
    fn argmax_follows_logits(seed in any::<u64>()) {
        let (f, d, wt, b) = instance(seed, 3, 3, 3, 4, 5);
        let s = affinity(&f, &d, &wt, &b);
        for (hw, row) in s.chunks(5).enumerate() {
            let (y, x) = (hw / 3, hw % 3);
            let logits: Vec<f64> = (0..5)
                .map(|n| (0..4).map(|m| (b.data()[m] + (0..3).map(|c| f.get(&[y, x, c]) * wt.get(&[c, m])).sum::<f64>()) * d.get(&[m, n])).sum())
                .collect();
            let best = |v: &[f64]| v.iter().enumerate().fold(0, |bi, (i, &x)| if x > v[bi] { i } else { bi });
            prop_assert_eq!(best(row), best(&logits));
        }
    }

    /// Scaling the dictionary up sharpens every row toward its argmax.
    #[test]
    fn scaling_dictionary_sharpens(seed in any::<u64>(), t in 1.5f64..4.0) {
        let (f, d, wt, b) = instance(seed, 2, 2, 2, 3, 4);
        let mut scaled = d.clone();
        scaled.data_mut().iter_mut().for_each(|v| *v *= t);
        let a = affinity(&f, &d, &wt, &b);
        let s = affinity(&f, &scaled, &wt, &b);
        for (ra, rs) in a.chunks(4).zip(s.chunks(4)) {
            let ma = ra.iter().cloned().fold(0.0, f64::max);
            let ms = rs.iter().cloned().fold(0.0, f64::max);
            prop_assert!(ms >= ma - 1e-12);
        }
    }
}
