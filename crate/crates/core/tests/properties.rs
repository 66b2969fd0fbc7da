use jagged_core::linalg::{array_jagged_bmm_jagged_out, jagged2_softmax, jagged_jagged_bmm_jagged_out, jagged_softmax};
use jagged_core::tensor::{add, dense_to_jagged, jagged_to_dense, map_unary, mul};
use jagged_core::{attention, make_jagged, Jagged2Tensor, JaggedTensor};
use proptest::prelude::*;

fn jagged_strategy(max_batch: usize, max_len: usize, max_dim: usize) -> impl Strategy<Value = JaggedTensor<f64>> {
    (prop::collection::vec(0..=max_len, 1..=max_batch), 1..=max_dim).prop_flat_map(|(lengths, dim)| {
        let n = lengths.iter().sum::<usize>() * dim;
        prop::collection::vec(-4.0f64..4.0, n)
            .prop_map(move |values| JaggedTensor::from_lengths(&lengths, values, dim).unwrap())
    })
}

/// Three tensors sharing one layout.
fn qkv_strategy() -> impl Strategy<Value = [JaggedTensor<f64>; 3]> {
    jagged_strategy(4, 9, 4).prop_flat_map(|q| {
        let n = q.values().len();
        (prop::collection::vec(-2.0f64..2.0, n), prop::collection::vec(-2.0f64..2.0, n))
            .prop_map(move |(k, v)| [q.clone(), q.with_values(k).unwrap(), q.with_values(v).unwrap()])
    })
}

proptest! {
    #[test]
    fn round_trip_is_exact(x in jagged_strategy(6, 12, 4), extra in 0usize..3, pad in -9.0f64..9.0) {
        let l = x.max_len() + extra;
        let back = dense_to_jagged(&jagged_to_dense(&x, l, pad), &x.lengths()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn pad_positions_hold_pad_value(x in jagged_strategy(6, 12, 3), l in 0usize..14, pad in -9.0f64..9.0) {
        let d = jagged_to_dense(&x, l, pad);
        prop_assert_eq!(d.shape(), &[x.batch(), l, x.dim()][..]);
        for i in 0..x.batch() {
            let valid = x.segment_len(i).min(l);
            let slab = d.slab(i);
            prop_assert_eq!(&slab[..valid * x.dim()], &x.segment(i)[..valid * x.dim()]);
            prop_assert!(slab[valid * x.dim()..].iter().all(|&v| v == pad));
        }
    }

    #[test]
    fn elementwise_commutes_with_padding(x in jagged_strategy(5, 8, 3)) {
        let y = map_unary(&x, |v| v * 0.5 - 1.0);
        let l = x.max_len();
        let lhs = jagged_to_dense(&add(&x, &y).unwrap(), l, 0.0);
        let (dx, dy) = (jagged_to_dense(&x, l, 0.0), jagged_to_dense(&y, l, 0.0));
        let rhs: Vec<f64> = dx.data().iter().zip(dy.data()).map(|(a, b)| a + b).collect();
        prop_assert_eq!(lhs.data(), &rhs[..]);
        let prod = jagged_to_dense(&mul(&x, &y).unwrap(), l, 0.0);
        let rhs: Vec<f64> = dx.data().iter().zip(dy.data()).map(|(a, b)| a * b).collect();
        prop_assert_eq!(prod.data(), &rhs[..]);
    }

    #[test]
    fn make_jagged_segments_recover_rows(lengths in prop::collection::vec(0usize..6, 1..6), dim in 1usize..4) {
        let n = lengths.iter().sum::<usize>() * dim;
        let values: Vec<f64> = (0..n).map(|v| v as f64).collect();
        let x = make_jagged(&lengths, values.clone(), dim).unwrap();
        let mut start = 0;
        for (i, &len) in lengths.iter().enumerate() {
            prop_assert_eq!(x.segment(i), &values[start..start + len * dim]);
            start += len * dim;
        }
    }

    #[test]
    fn softmax_columns_sum_to_one(x in jagged_strategy(5, 10, 4)) {
        let p = jagged_softmax(&x);
        for i in 0..p.batch() {
            if p.segment_len(i) == 0 { continue; }
            for c in 0..p.dim() {
                let s: f64 = p.segment(i).iter().skip(c).step_by(p.dim()).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rows_are_convex_combinations([q, k, v] in qkv_strategy()) {
        let out = attention::jagged_attention(&q, &k, &v).unwrap();
        let (flash, _) = attention::jagged_flash_attention_forward(&q, &k, &v, 3, 2).unwrap();
        let d = q.dim();
        for i in 0..q.batch() {
            let vs = v.segment(i);
            for c in 0..d {
                let col = vs.iter().skip(c).step_by(d);
                let lo = col.clone().copied().fold(f64::INFINITY, f64::min);
                let hi = col.copied().fold(f64::NEG_INFINITY, f64::max);
                for o in [out.segment(i), flash.segment(i)] {
                    for r in 0..q.segment_len(i) {
                        let x = o[r * d + c];
                        prop_assert!(x >= lo - 1e-9 && x <= hi + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn row_score_shift_leaves_output_unchanged([q, k, v] in qkv_strategy(), shift in -30.0f64..30.0) {
        let s = jagged_jagged_bmm_jagged_out(&q, &k).unwrap();
        let base = array_jagged_bmm_jagged_out(&jagged2_softmax(&s), &v).unwrap();
        // add a per-row constant that differs between rows
        let mut shifted = s.values().to_vec();
        let mut at = 0;
        for &n in s.seq_lengths() {
            for r in 0..n {
                for x in &mut shifted[at + r * n..at + (r + 1) * n] {
                    *x += shift * (r as f64 + 1.0);
                }
            }
            at += n * n;
        }
        let shifted = Jagged2Tensor::new(s.seq_lengths().to_vec(), shifted).unwrap();
        let out = array_jagged_bmm_jagged_out(&jagged2_softmax(&shifted), &v).unwrap();
        for (a, b) in out.values().iter().zip(base.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
