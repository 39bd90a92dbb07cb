mod common;

use projtrack::attention::{c2f_forward, coord_attention_forward, coord_pool, ConvWeights};
use projtrack::rng::SplitMix64;
use proptest::prelude::*;

#[test]
fn attention_gradients_match_finite_differences() {
    let mut rng = SplitMix64::new(11);
    for _ in 0..20 {
        let e = common::attention_gradient_error(&mut rng, 1e-6);
        assert!(e < 1e-4, "relative error {e}");
    }
}

#[test]
fn split_block_gradients_match_finite_differences() {
    let mut rng = SplitMix64::new(12);
    for _ in 0..20 {
        let e = common::c2f_gradient_error(&mut rng, 1e-6);
        assert!(e < 1e-4, "relative error {e}");
    }
}

proptest! {
    #[test]
    fn attention_shrinks_and_keeps_shape(seed in any::<u64>(), c in 1usize..5, h in 1usize..7, w in 1usize..7) {
        let mut rng = SplitMix64::new(seed);
        let x = common::random_map(&mut rng, c, h, w);
        let weights = common::random_attn(&mut rng, c);
        let out = coord_attention_forward(&x, &weights).unwrap();
        prop_assert_eq!((out.channels(), out.height(), out.width()), (c, h, w));
        for (o, i) in out.values().iter().zip(x.values()) {
            prop_assert!(o.abs() <= i.abs());
        }
    }

    #[test]
    fn split_block_keeps_channels(seed in any::<u64>(), half in 1usize..3, h in 1usize..7, w in 1usize..7) {
        let mut rng = SplitMix64::new(seed);
        let x = common::random_map(&mut rng, 2 * half, h, w);
        let branch = common::random_conv(&mut rng, half, half);
        let attn = common::random_attn(&mut rng, 2 * half);
        let out = c2f_forward(&x, &branch, &attn).unwrap();
        prop_assert_eq!((out.channels(), out.height(), out.width()), (2 * half, h, w));
    }

    #[test]
    fn pooled_means_agree(seed in any::<u64>(), c in 1usize..5, h in 1usize..7, w in 1usize..7) {
        let mut rng = SplitMix64::new(seed);
        let x = common::random_map(&mut rng, c, h, w);
        let pool = coord_pool(&x);
        for q in 0..c {
            let rows: f64 = pool.rows[q * h..(q + 1) * h].iter().sum::<f64>() / h as f64;
            let cols: f64 = pool.cols[q * w..(q + 1) * w].iter().sum::<f64>() / w as f64;
            prop_assert!((rows - cols).abs() < 1e-12);
        }
    }
}

#[test]
fn mismatched_branch_is_rejected() {
    let mut rng = SplitMix64::new(1);
    let x = common::random_map(&mut rng, 4, 2, 2);
    let branch = ConvWeights::identity(3).unwrap();
    let attn = common::random_attn(&mut rng, 4);
    assert!(c2f_forward(&x, &branch, &attn).is_err());
}
