//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the code under test to produce expected values.
#![allow(dead_code)]

use projtrack::attention::{
    c2f_backward, c2f_forward, coord_attention_backward, coord_attention_forward, ConvWeights,
    CoordAttnWeights, FeatureMap,
};
use projtrack::cloud::Detection;
use projtrack::geometry::Quaternion;
use projtrack::metrics::{evaluate, Matcher, MotReport};
use projtrack::rng::SplitMix64;
use projtrack::synth::{gen_scene, SceneSpec};
use projtrack::tracker::{run_sequence, AssocParams, SequenceOptions};

pub const STEP_EXPECTED: [u8; 8] = [109, 91, 55, 0, 255, 255, 255, 255];

pub fn step_fixture() -> Vec<u8> {
    (0..64).map(|i| if i % 8 < 4 { 40 } else { 200 }).collect()
}

pub fn mixed_fixture() -> Vec<u8> {
    let mut px = Vec::with_capacity(64);
    for r in 0..8u32 {
        for c in 0..8u32 {
            px.push(if r + 2 * c < 9 {
                (30 + 7 * ((r * 5 + c * 3) % 4)) as u8
            } else {
                (180 + 11 * ((r * c) % 5)) as u8
            });
        }
    }
    px
}

/// Output of the straight-line oracle on [`mixed_fixture`].
pub const MIXED_EXPECTED: [[u8; 8]; 8] = [
    [121, 170, 122, 63, 0, 249, 244, 242],
    [126, 73, 121, 51, 255, 237, 245, 249],
    [137, 88, 23, 63, 255, 234, 245, 255],
    [147, 99, 24, 255, 248, 232, 253, 237],
    [55, 105, 48, 252, 243, 229, 255, 251],
    [71, 9, 243, 235, 233, 235, 234, 233],
    [80, 23, 248, 251, 255, 232, 241, 247],
    [80, 247, 255, 237, 254, 232, 245, 255],
];

/// Uniformly distributed unit quaternion (normalized 4D Gaussian).
pub fn random_quaternion(rng: &mut SplitMix64) -> Quaternion {
    loop {
        let v = [
            rng.gaussian(),
            rng.gaussian(),
            rng.gaussian(),
            rng.gaussian(),
        ];
        if let Ok(q) = Quaternion::new(v[0], v[1], v[2], v[3]) {
            return q;
        }
    }
}

/// Exhaustive search over all partial one-to-one matchings: the largest
/// matching, and among those the cheapest. Costs are summed in row order.
pub fn brute_force_matching(cost: &[Vec<Option<f64>>]) -> (usize, f64) {
    fn go(
        cost: &[Vec<Option<f64>>],
        row: usize,
        used: &mut Vec<bool>,
        count: usize,
        sum: f64,
        best: &mut (usize, f64),
    ) {
        if row == cost.len() {
            if count > best.0 || (count == best.0 && sum < best.1) {
                *best = (count, sum);
            }
            return;
        }
        go(cost, row + 1, used, count, sum, best);
        for c in 0..used.len() {
            if let (false, Some(v)) = (used[c], cost[row][c]) {
                used[c] = true;
                go(cost, row + 1, used, count + 1, sum + v, best);
                used[c] = false;
            }
        }
    }
    let cols = cost.first().map_or(0, Vec::len);
    let mut best = (0, 0.0);
    go(cost, 0, &mut vec![false; cols], 0, 0.0, &mut best);
    best
}

pub fn random_gated_costs(
    rng: &mut SplitMix64,
    max_side: u64,
    integer: bool,
) -> Vec<Vec<Option<f64>>> {
    let rows = rng.below(max_side + 1) as usize;
    let cols = rng.below(max_side + 1) as usize;
    let gate = rng.uniform(0.2, 1.0);
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    let u = rng.next_f64();
                    let allowed = u <= gate;
                    let c = if integer {
                        rng.below(100) as f64
                    } else {
                        rng.uniform(0.0, 100.0)
                    };
                    allowed.then_some(c)
                })
                .collect()
        })
        .collect()
}

pub fn random_map(rng: &mut SplitMix64, c: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::new(
        c,
        h,
        w,
        (0..c * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    )
    .unwrap()
}

pub fn random_conv(rng: &mut SplitMix64, out_ch: usize, in_ch: usize) -> ConvWeights {
    ConvWeights::new(
        out_ch,
        in_ch,
        (0..out_ch * in_ch)
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect(),
        (0..out_ch).map(|_| rng.uniform(-0.5, 0.5)).collect(),
    )
    .unwrap()
}

pub fn random_attn(rng: &mut SplitMix64, channels: usize) -> CoordAttnWeights {
    let mid = (channels / 2).max(1);
    CoordAttnWeights {
        reduce: random_conv(rng, mid, channels),
        expand_h: random_conv(rng, channels, mid),
        expand_w: random_conv(rng, channels, mid),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central difference of `loss` with respect to every entry of `params`,
/// compared with `analytic`. Returns the worst relative error.
fn fd_compare(
    params: &mut dyn FnMut(usize, Option<f64>) -> f64,
    n: usize,
    analytic: &[f64],
    loss: &mut dyn FnMut() -> f64,
    eps: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate().take(n) {
        let orig = params(i, None);
        params(i, Some(orig + eps));
        let up = loss();
        params(i, Some(orig - eps));
        let down = loss();
        params(i, Some(orig));
        worst = worst.max(rel_err(a, (up - down) / (2.0 * eps)));
    }
    worst
}

/// Reads (`None`) or overwrites (`Some`) entry `i` of a slice, returning the
/// previous value.
fn poke(v: &mut [f64], i: usize, set: Option<f64>) -> f64 {
    let old = v[i];
    if let Some(x) = set {
        v[i] = x;
    }
    old
}

/// Worst relative error between the analytic gradients of the
/// coordinate-attention block and central differences of
/// `L = sum(out * R)` for a random `R`, over the input and all weights.
pub fn attention_gradient_error(rng: &mut SplitMix64, eps: f64) -> f64 {
    let c = 1 + rng.below(4) as usize;
    let h = 1 + rng.below(6) as usize;
    let w = 1 + rng.below(6) as usize;
    let x = random_map(rng, c, h, w);
    let weights = random_attn(rng, c);
    let r = random_map(rng, c, h, w);
    let (gx, gw) = coord_attention_backward(&x, &weights, &r).unwrap();

    let mut worst = 0.0f64;
    {
        let mut xv = x.clone();
        let n = xv.values().len();
        let cell = std::cell::RefCell::new(&mut xv);
        let mut loss = || {
            dot(
                coord_attention_forward(&cell.borrow(), &weights)
                    .unwrap()
                    .values(),
                r.values(),
            )
        };
        let mut set = |i: usize, v: Option<f64>| poke(cell.borrow_mut().values_mut(), i, v);
        worst = worst.max(fd_compare(&mut set, n, gx.values(), &mut loss, eps));
    }
    for which in 0..6 {
        let mut wv = weights.clone();
        let analytic: Vec<f64> = match which {
            0 => gw.reduce.kernel().to_vec(),
            1 => gw.reduce.bias().to_vec(),
            2 => gw.expand_h.kernel().to_vec(),
            3 => gw.expand_h.bias().to_vec(),
            4 => gw.expand_w.kernel().to_vec(),
            _ => gw.expand_w.bias().to_vec(),
        };
        let cell = std::cell::RefCell::new(&mut wv);
        let mut loss = || {
            dot(
                coord_attention_forward(&x, &cell.borrow())
                    .unwrap()
                    .values(),
                r.values(),
            )
        };
        let mut set = |i: usize, v: Option<f64>| {
            let mut b = cell.borrow_mut();
            let slice = match which {
                0 => b.reduce.kernel_mut(),
                1 => b.reduce.bias_mut(),
                2 => b.expand_h.kernel_mut(),
                3 => b.expand_h.bias_mut(),
                4 => b.expand_w.kernel_mut(),
                _ => b.expand_w.bias_mut(),
            };
            poke(slice, i, v)
        };
        worst = worst.max(fd_compare(
            &mut set,
            analytic.len(),
            &analytic,
            &mut loss,
            eps,
        ));
    }
    worst
}

/// Same check for the split/branch/concat block, over the input and the
/// branch convolution.
pub fn c2f_gradient_error(rng: &mut SplitMix64, eps: f64) -> f64 {
    let c = 2 * (1 + rng.below(2) as usize);
    let h = 1 + rng.below(6) as usize;
    let w = 1 + rng.below(6) as usize;
    let x = random_map(rng, c, h, w);
    let branch = random_conv(rng, c / 2, c / 2);
    let attn = random_attn(rng, c);
    let r = random_map(rng, c, h, w);
    let (gx, gb, _) = c2f_backward(&x, &branch, &attn, &r).unwrap();

    let mut worst = 0.0f64;
    {
        let mut xv = x.clone();
        let n = xv.values().len();
        let cell = std::cell::RefCell::new(&mut xv);
        let mut loss = || {
            dot(
                c2f_forward(&cell.borrow(), &branch, &attn)
                    .unwrap()
                    .values(),
                r.values(),
            )
        };
        let mut set = |i: usize, v: Option<f64>| poke(cell.borrow_mut().values_mut(), i, v);
        worst = worst.max(fd_compare(&mut set, n, gx.values(), &mut loss, eps));
    }
    for which in 0..2 {
        let mut bv = branch.clone();
        let analytic: Vec<f64> = if which == 0 {
            gb.kernel().to_vec()
        } else {
            gb.bias().to_vec()
        };
        let cell = std::cell::RefCell::new(&mut bv);
        let mut loss = || {
            dot(
                c2f_forward(&x, &cell.borrow(), &attn).unwrap().values(),
                r.values(),
            )
        };
        let mut set = |i: usize, v: Option<f64>| {
            let mut b = cell.borrow_mut();
            poke(
                if which == 0 {
                    b.kernel_mut()
                } else {
                    b.bias_mut()
                },
                i,
                v,
            )
        };
        worst = worst.max(fd_compare(
            &mut set,
            analytic.len(),
            &analytic,
            &mut loss,
            eps,
        ));
    }
    worst
}

/// Generates a scene, tracks it in memory and scores the result against the
/// scene's ground truth (plane distance, 1000 mm).
pub fn pipeline_mota(spec: &SceneSpec, params: &AssocParams) -> MotReport {
    let scene = gen_scene(spec).unwrap();
    let detections: Vec<Detection> = scene
        .detections
        .iter()
        .map(|r| Detection {
            frame: r.frame,
            class: r.class,
            bbox: r.bbox,
            confidence: r.confidence,
        })
        .collect();
    let clouds = |f: u64| Ok(scene.clouds.get((f - 1) as usize).cloned());
    let result = run_sequence(
        &detections,
        clouds,
        &scene.camera,
        &Default::default(),
        params,
        &SequenceOptions::default(),
    )
    .unwrap();
    evaluate(
        &scene.gt,
        &result.rows,
        &Matcher::Plane { threshold: 1000.0 },
        &Default::default(),
    )
    .unwrap()
}
