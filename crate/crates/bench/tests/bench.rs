use jagged_bench::{render_report, run_bench, run_sweep, BenchConfig, OutputFormat, Precision};
use jagged_core::{LengthKind, OpId};

fn quick(op: OpId) -> BenchConfig {
    BenchConfig { op, iters: 1, warmup: 0, ..BenchConfig::default() }
}

#[test]
fn half_mean_bmm_flop_ratio_near_two() {
    let cfg = BenchConfig { batch: 256, dim: 64, t: 64, max_len: 512, dist: LengthKind::HalfMean, ..quick(OpId::JaggedDenseBmm) };
    let recs = run_bench(&cfg).unwrap();
    let ratio = recs[0].flops as f64 / recs[1].flops as f64;
    assert!((1.9..=2.1).contains(&ratio), "{ratio}");
    assert_eq!(recs[1].flops_ratio_vs_dense, ratio);
}

#[test]
fn fixed_lengths_match_padded_cost() {
    for op in OpId::KERNELS {
        let cfg = BenchConfig { batch: 8, dim: 8, t: 8, max_len: 32, dist: LengthKind::Fixed, ..quick(op) };
        let recs = run_bench(&cfg).unwrap();
        assert_eq!(recs[0].flops, recs[1].flops, "{op}");
        assert_eq!(recs[0].bytes, recs[1].bytes, "{op}");
    }
}

#[test]
fn same_config_same_checksums() {
    let cfg = BenchConfig { batch: 16, dim: 8, t: 8, max_len: 40, precision: Precision::F64, ..quick(OpId::JaggedFlashAttention) };
    let a: Vec<u64> = run_bench(&cfg).unwrap().iter().map(|r| r.checksum.to_bits()).collect();
    let b: Vec<u64> = run_bench(&cfg).unwrap().iter().map(|r| r.checksum.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn fixed_sweep_has_unit_jagged_bytes_ratio() {
    let cfg = BenchConfig { batch: 2, dim: 4, grid: vec![128, 256, 512], dist: LengthKind::Fixed, ..quick(OpId::JaggedAttention) };
    let recs = run_sweep(&cfg).unwrap();
    assert_eq!(recs.len(), 12);
    for r in recs.iter().filter(|r| r.variant == "jagged") {
        assert_eq!(r.bytes_ratio_vs_dense, 1.0);
        assert_eq!(r.flops_ratio_vs_dense, 1.0);
    }
    assert!(render_report(&recs, OutputFormat::Md).unwrap().contains("dense_flash"));
}

#[test]
fn half_mean_sweep_memory_growth() {
    let cfg = BenchConfig { batch: 128, dim: 16, grid: vec![64, 128, 256], dist: LengthKind::HalfMean, seed: 3, ..quick(OpId::JaggedFlashAttention) };
    let recs = run_sweep(&cfg).unwrap();
    let bytes = |variant: &str| -> Vec<f64> {
        recs.iter().filter(|r| r.variant == variant).map(|r| r.bytes as f64).collect()
    };
    let growth = |v: Vec<f64>| -> Vec<f64> { v.windows(2).map(|w| w[1] / w[0]).collect() };
    assert!(growth(bytes("dense")).iter().all(|g| (3.0..=4.0).contains(g)));
    for variant in ["dense_flash", "jagged_flash"] {
        assert!(growth(bytes(variant)).iter().all(|g| (1.5..=2.1).contains(g)), "{variant}");
    }
    let last = |variant: &str| *bytes(variant).last().unwrap();
    assert!(last("jagged_flash") <= 0.55 * last("dense_flash"));
}

#[test]
fn noisy_flag_follows_spread() {
    let recs = run_bench(&BenchConfig { batch: 4, dim: 2, t: 2, max_len: 4, iters: 5, ..quick(OpId::JaggedSoftmax) }).unwrap();
    for r in recs {
        assert_eq!(r.noisy, r.time_us_p90 / r.time_us_p10 > 3.0);
        assert!(r.time_us_p10 <= r.time_us_p50 && r.time_us_p50 <= r.time_us_p90);
    }
}
