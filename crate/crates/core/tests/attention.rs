use jagged_core::attention::{
    jagged_attention, jagged_attention_vjp, jagged_flash_attention_backward,
    jagged_flash_attention_backward_metered, jagged_flash_attention_forward,
    jagged_flash_attention_forward_metered,
};
use jagged_core::costmodel::{intermediate_bytes_of, OpConfig};
use jagged_core::lengths::{random_index, random_jagged, seeded_rng};
use jagged_core::verify::random_oracle_spec;
use jagged_core::{max_rel_diff, OpId, ScratchMeter};

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn block_sizes_agree() {
    let mut rng = seeded_rng(21);
    let lengths = [0, 1, 2, 17, 33];
    let q = random_jagged::<f64>(&mut rng, &lengths, 6);
    let k = random_jagged::<f64>(&mut rng, &lengths, 6);
    let v = random_jagged::<f64>(&mut rng, &lengths, 6);
    let go = random_jagged::<f64>(&mut rng, &lengths, 6);
    let (reference, ref_saved) = jagged_flash_attention_forward(&q, &k, &v, 64, 64).unwrap();
    let ref_grads = jagged_flash_attention_backward(&q, &k, &v, &go, &ref_saved).unwrap();
    for b in [1, 3] {
        let (out, saved) = jagged_flash_attention_forward(&q, &k, &v, b, b).unwrap();
        assert!(max_rel_diff(out.values(), reference.values()) < 1e-12);
        let g = jagged_flash_attention_backward(&q, &k, &v, &go, &saved).unwrap();
        assert!(max_rel_diff(g.dq.values(), ref_grads.dq.values()) < 1e-12);
        assert!(max_rel_diff(g.dk.values(), ref_grads.dk.values()) < 1e-12);
        assert!(max_rel_diff(g.dv.values(), ref_grads.dv.values()) < 1e-12);
    }
}

#[test]
fn flash_backward_matches_composed_vjp() {
    let mut rng = seeded_rng(22);
    let lengths = [3, 0, 11, 1];
    let [q, k, v, go] = [0; 4].map(|_| random_jagged::<f64>(&mut rng, &lengths, 4));
    let (_, saved) = jagged_flash_attention_forward(&q, &k, &v, 4, 4).unwrap();
    let flash = jagged_flash_attention_backward(&q, &k, &v, &go, &saved).unwrap();
    let composed = jagged_attention_vjp(&q, &k, &v, &go).unwrap();
    assert!(max_rel_diff(flash.dq.values(), composed.dq.values()) < 1e-10);
    assert!(max_rel_diff(flash.dk.values(), composed.dk.values()) < 1e-10);
    assert!(max_rel_diff(flash.dv.values(), composed.dv.values()) < 1e-10);
}

#[test]
fn bit_identical_across_thread_counts() {
    let mut rng = seeded_rng(23);
    let lengths: Vec<usize> = (0..24).map(|_| random_index(&mut rng, 0, 40)).collect();
    let [q, k, v, go] = [0; 4].map(|_| random_jagged::<f32>(&mut rng, &lengths, 8));
    let run = || {
        let (out, saved) = jagged_flash_attention_forward(&q, &k, &v, 8, 8).unwrap();
        let g = jagged_flash_attention_backward(&q, &k, &v, &go, &saved).unwrap();
        (out, g, jagged_attention(&q, &k, &v).unwrap())
    };
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    assert_eq!(one, four);
    assert_eq!(in_pool(4, run), four);
}

#[test]
fn peak_scratch_within_cost_model_intermediates() {
    let mut rng = seeded_rng(24);
    for _ in 0..30 {
        let spec = random_oracle_spec(&mut rng);
        let d = spec.dim;
        let q = random_jagged::<f32>(&mut rng, &spec.lengths, d);
        let (bq, bk) = (random_index(&mut rng, 1, 64), random_index(&mut rng, 1, 64));
        let meter = ScratchMeter::new();
        jagged_flash_attention_forward_metered(&q, &q, &q, bq, bk, &meter).unwrap();
        let cfg = OpConfig::new(OpId::JaggedFlashAttention, d, 1, spec.lengths.clone()).with_blocks(bq, bk);
        let (intermediate, _) = intermediate_bytes_of(&cfg).unwrap();
        let elements = intermediate / cfg.element_bytes as u64;
        assert!(meter.peak_elements() as f64 <= 1.25 * elements as f64);
        assert!(meter.peak_elements() <= bq * bk + 2 * q.total_rows() * d);
    }
}

#[test]
fn backward_scratch_is_linear_in_rows() {
    let mut rng = seeded_rng(25);
    let lengths = [64, 3, 40];
    let q = random_jagged::<f64>(&mut rng, &lengths, 4);
    let (_, saved) = jagged_flash_attention_forward(&q, &q, &q, 16, 16).unwrap();
    let meter = ScratchMeter::new();
    jagged_flash_attention_backward_metered(&q, &q, &q, &q, &saved, &meter).unwrap();
    // f64 accumulators for dq, dk, dv of the largest segment plus one tile
    assert_eq!(meter.peak_elements(), 3 * 64 * 4 + 16 + 16 * 16);
}
