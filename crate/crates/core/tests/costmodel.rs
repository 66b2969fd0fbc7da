use jagged_core::costmodel::{cost_report, flops_of, sweep_cost, OpConfig};
use jagged_core::lengths::{random_index, seeded_rng};
use jagged_core::{LengthDistribution, LengthKind, OpId};

#[test]
fn padding_never_helps() {
    let mut rng = seeded_rng(31);
    for _ in 0..200 {
        let b = random_index(&mut rng, 1, 20);
        let lengths: Vec<usize> = (0..b).map(|_| random_index(&mut rng, 0, 50)).collect();
        let (d, t) = (random_index(&mut rng, 1, 32), random_index(&mut rng, 1, 32));
        for op in OpId::ALL {
            let r = cost_report(&OpConfig::new(op, d, t, lengths.clone())).unwrap();
            assert!(r.flops_jagged <= r.flops_padded, "{op} {lengths:?}");
            assert!(r.bytes_jagged <= r.bytes_padded, "{op} {lengths:?}");
        }
    }
}

#[test]
fn flop_ratios_are_padding_ratios() {
    let lengths = vec![3, 0, 7, 7, 1];
    let (b, l) = (5.0, 7.0);
    let sum_b = 18.0;
    let sum_sq = 9.0 + 49.0 + 49.0 + 1.0;
    for op in [OpId::JaggedDenseBmm, OpId::JaggedJaggedBmm] {
        let (j, p) = flops_of(&OpConfig::new(op, 4, 6, lengths.clone())).unwrap();
        assert_eq!(p as f64 / j as f64, b * l / sum_b);
    }
    for op in [OpId::JaggedJaggedBmmJaggedOut, OpId::ArrayJaggedBmmJaggedOut, OpId::Jagged2Softmax] {
        let (j, p) = flops_of(&OpConfig::new(op, 4, 6, lengths.clone())).unwrap();
        assert_eq!(p as f64 / j as f64, b * l * l / sum_sq);
    }
}

#[test]
fn fixed_lengths_give_unit_ratios() {
    let dist = LengthDistribution::new(LengthKind::Fixed, 1, 0);
    for op in OpId::KERNELS.into_iter().chain([OpId::JaggedMlp]) {
        for r in sweep_cost(op, 8, 16, 16, &dist, &[256, 512, 1024]).unwrap() {
            assert_eq!((r.ratio_flops, r.ratio_bytes), (1.0, 1.0), "{op}");
        }
    }
}

#[test]
fn naive_to_flash_bytes_ratio_grows_with_length() {
    let dist = LengthDistribution::new(LengthKind::HalfMean, 1, 41);
    let grid = [128, 256, 512, 1024, 2048, 4096];
    let naive = sweep_cost(OpId::DenseAttention, 256, 64, 1, &dist, &grid).unwrap();
    let flash = sweep_cost(OpId::JaggedFlashAttention, 256, 64, 1, &dist, &grid).unwrap();
    let ratios: Vec<f64> = naive
        .iter()
        .zip(&flash)
        .map(|(n, f)| n.bytes_padded as f64 / f.bytes_jagged as f64)
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
}
