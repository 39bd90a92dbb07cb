//! Coordinate attention and the C2f channel split at toy scale, with exact
//! backward passes.
//!
//! Tensors are plain row-major `f64` buffers. A [`FeatureMap`] is laid out as
//! `channels x height x width`; 1x1 convolutions are matrix products over the
//! channel axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Contract(format!(
                "feature map dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if values.len() != channels * height * width {
            return Err(Error::Contract(format!(
                "{channels}x{height}x{width} map needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("feature map values must be finite".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![0.0; channels * height * width],
        )
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.values[(c * self.height + h) * self.width + w]
    }

    fn same_shape(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Splits along the channel axis after `first` channels.
    fn split_channels(&self, first: usize) -> (FeatureMap, FeatureMap) {
        let plane = self.height * self.width;
        let (a, b) = self.values.split_at(first * plane);
        (
            FeatureMap {
                channels: first,
                height: self.height,
                width: self.width,
                values: a.to_vec(),
            },
            FeatureMap {
                channels: self.channels - first,
                height: self.height,
                width: self.width,
                values: b.to_vec(),
            },
        )
    }

    fn concat_channels(a: &FeatureMap, b: &FeatureMap) -> FeatureMap {
        let mut values = a.values.clone();
        values.extend_from_slice(&b.values);
        FeatureMap {
            channels: a.channels + b.channels,
            height: a.height,
            width: a.width,
            values,
        }
    }
}

/// 1x1 convolution: `kernel` is `out_ch x in_ch`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvWeightsJson", into = "ConvWeightsJson")]
pub struct ConvWeights {
    out_ch: usize,
    in_ch: usize,
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConvWeightsJson {
    kernel: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl TryFrom<ConvWeightsJson> for ConvWeights {
    type Error = Error;

    fn try_from(raw: ConvWeightsJson) -> Result<Self> {
        let in_ch = raw.kernel.first().map_or(0, Vec::len);
        if raw.kernel.iter().any(|row| row.len() != in_ch) {
            return Err(Error::Contract("kernel rows differ in length".into()));
        }
        ConvWeights::new(
            raw.kernel.len(),
            in_ch,
            raw.kernel.into_iter().flatten().collect(),
            raw.bias,
        )
    }
}

impl From<ConvWeights> for ConvWeightsJson {
    fn from(w: ConvWeights) -> Self {
        ConvWeightsJson {
            kernel: w.kernel.chunks(w.in_ch).map(<[f64]>::to_vec).collect(),
            bias: w.bias,
        }
    }
}

impl ConvWeights {
    pub fn new(out_ch: usize, in_ch: usize, kernel: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if out_ch == 0 || in_ch == 0 {
            return Err(Error::Contract(
                "convolution needs at least one channel each way".into(),
            ));
        }
        if kernel.len() != out_ch * in_ch || bias.len() != out_ch {
            return Err(Error::Contract(format!(
                "{out_ch}x{in_ch} convolution got {} kernel and {} bias values",
                kernel.len(),
                bias.len()
            )));
        }
        if kernel.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Contract("convolution weights must be finite".into()));
        }
        Ok(Self {
            out_ch,
            in_ch,
            kernel,
            bias,
        })
    }

    pub fn zeros(out_ch: usize, in_ch: usize) -> Result<Self> {
        Self::new(out_ch, in_ch, vec![0.0; out_ch * in_ch], vec![0.0; out_ch])
    }

    pub fn identity(channels: usize) -> Result<Self> {
        let mut kernel = vec![0.0; channels * channels];
        for i in 0..channels {
            kernel[i * channels + i] = 1.0;
        }
        Self::new(channels, channels, kernel, vec![0.0; channels])
    }

    pub fn out_ch(&self) -> usize {
        self.out_ch
    }

    pub fn in_ch(&self) -> usize {
        self.in_ch
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn kernel_mut(&mut self) -> &mut [f64] {
        &mut self.kernel
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `out (out_ch x len) = kernel * x (in_ch x len) + bias`.
    fn apply(&self, x: &[f64], len: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.out_ch * len];
        for o in 0..self.out_ch {
            let row = &mut out[o * len..(o + 1) * len];
            row.fill(self.bias[o]);
            for i in 0..self.in_ch {
                let k = self.kernel[o * self.in_ch + i];
                for (r, xv) in row.iter_mut().zip(&x[i * len..(i + 1) * len]) {
                    *r += k * xv;
                }
            }
        }
        out
    }

    /// Gradients of [`Self::apply`]: returns `(d_weights, d_x)`.
    fn apply_backward(&self, x: &[f64], grad_out: &[f64], len: usize) -> (ConvWeights, Vec<f64>) {
        let mut dk = vec![0.0; self.out_ch * self.in_ch];
        let mut db = vec![0.0; self.out_ch];
        let mut dx = vec![0.0; self.in_ch * len];
        for o in 0..self.out_ch {
            let g = &grad_out[o * len..(o + 1) * len];
            db[o] = g.iter().sum();
            for i in 0..self.in_ch {
                let xi = &x[i * len..(i + 1) * len];
                dk[o * self.in_ch + i] = g.iter().zip(xi).map(|(a, b)| a * b).sum();
                let k = self.kernel[o * self.in_ch + i];
                for (d, gv) in dx[i * len..(i + 1) * len].iter_mut().zip(g) {
                    *d += k * gv;
                }
            }
        }
        (
            ConvWeights {
                out_ch: self.out_ch,
                in_ch: self.in_ch,
                kernel: dk,
                bias: db,
            },
            dx,
        )
    }
}

/// Weights of the coordinate-attention block: a shared reduction over the
/// pooled strip and separate expansions for the row and column branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordAttnWeights {
    pub reduce: ConvWeights,
    pub expand_h: ConvWeights,
    pub expand_w: ConvWeights,
}

impl CoordAttnWeights {
    /// All-zero weights with reduced width `max(1, channels / 2)`.
    pub fn zeros(channels: usize) -> Result<Self> {
        let mid = (channels / 2).max(1);
        Ok(Self {
            reduce: ConvWeights::zeros(mid, channels)?,
            expand_h: ConvWeights::zeros(channels, mid)?,
            expand_w: ConvWeights::zeros(channels, mid)?,
        })
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        let mid = self.reduce.out_ch;
        if self.reduce.in_ch != channels
            || self.expand_h.in_ch != mid
            || self.expand_w.in_ch != mid
            || self.expand_h.out_ch != channels
            || self.expand_w.out_ch != channels
        {
            return Err(Error::Contract(format!(
                "attention weights ({}->{}, {}->{}, {}->{}) do not fit {channels} channels",
                self.reduce.in_ch,
                self.reduce.out_ch,
                self.expand_h.in_ch,
                self.expand_h.out_ch,
                self.expand_w.in_ch,
                self.expand_w.out_ch
            )));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn conv1x1_forward(x: &FeatureMap, w: &ConvWeights) -> Result<FeatureMap> {
    if x.channels != w.in_ch {
        return Err(Error::Contract(format!(
            "convolution expects {} input channels, map has {}",
            w.in_ch, x.channels
        )));
    }
    let len = x.height * x.width;
    Ok(FeatureMap {
        channels: w.out_ch,
        height: x.height,
        width: x.width,
        values: w.apply(&x.values, len),
    })
}

/// Gradients of [`conv1x1_forward`]: `(grad_x, grad_w)`.
pub fn conv1x1_backward(
    x: &FeatureMap,
    w: &ConvWeights,
    upstream: &FeatureMap,
) -> Result<(FeatureMap, ConvWeights)> {
    if x.channels != w.in_ch
        || upstream.channels != w.out_ch
        || upstream.height != x.height
        || upstream.width != x.width
    {
        return Err(Error::Contract(
            "convolution gradient shapes disagree".into(),
        ));
    }
    let len = x.height * x.width;
    let (dw, dx) = w.apply_backward(&x.values, &upstream.values, len);
    Ok((
        FeatureMap {
            channels: x.channels,
            height: x.height,
            width: x.width,
            values: dx,
        },
        dw,
    ))
}

/// Directional average pools: per channel, the mean of each row
/// (`channels x height`) and of each column (`channels x width`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoordPool {
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
}

pub fn coord_pool(x: &FeatureMap) -> CoordPool {
    let (c, h, w) = (x.channels, x.height, x.width);
    let mut rows = vec![0.0; c * h];
    let mut cols = vec![0.0; c * w];
    for q in 0..c {
        for p in 0..h {
            for u in 0..w {
                let v = x.get(q, p, u);
                rows[q * h + p] += v;
                cols[q * w + u] += v;
            }
        }
    }
    rows.iter_mut().for_each(|v| *v /= w as f64);
    cols.iter_mut().for_each(|v| *v /= h as f64);
    CoordPool { rows, cols }
}

/// Intermediate values of a coordinate-attention forward pass.
#[derive(Debug, Clone)]
struct AttnTrace {
    /// pooled strip, `channels x (height + width)`
    strip: Vec<f64>,
    /// reduction output before ReLU, `mid x (height + width)`
    pre: Vec<f64>,
    /// row branch input, `mid x height`
    mid_h: Vec<f64>,
    /// column branch input, `mid x width`
    mid_w: Vec<f64>,
    /// row weights, `channels x height`
    phi_h: Vec<f64>,
    /// column weights, `channels x width`
    phi_w: Vec<f64>,
}

fn attention_trace(x: &FeatureMap, w: &CoordAttnWeights) -> Result<AttnTrace> {
    w.validate(x.channels)?;
    let (c, h, wd) = (x.channels, x.height, x.width);
    let len = h + wd;
    let pool = coord_pool(x);
    let mut strip = Vec::with_capacity(c * len);
    for q in 0..c {
        strip.extend_from_slice(&pool.rows[q * h..(q + 1) * h]);
        strip.extend_from_slice(&pool.cols[q * wd..(q + 1) * wd]);
    }
    let pre = w.reduce.apply(&strip, len);
    let mid = w.reduce.out_ch;
    let mut mid_h = Vec::with_capacity(mid * h);
    let mut mid_w = Vec::with_capacity(mid * wd);
    for m in 0..mid {
        let row = &pre[m * len..(m + 1) * len];
        mid_h.extend(row[..h].iter().map(|v| v.max(0.0)));
        mid_w.extend(row[h..].iter().map(|v| v.max(0.0)));
    }
    let phi_h: Vec<f64> = w
        .expand_h
        .apply(&mid_h, h)
        .into_iter()
        .map(sigmoid)
        .collect();
    let phi_w: Vec<f64> = w
        .expand_w
        .apply(&mid_w, wd)
        .into_iter()
        .map(sigmoid)
        .collect();
    Ok(AttnTrace {
        strip,
        pre,
        mid_h,
        mid_w,
        phi_h,
        phi_w,
    })
}

/// `out[q][p][u] = x[q][p][u] * phi_h[q][p] * phi_w[q][u]`.
pub fn coord_attention_forward(x: &FeatureMap, w: &CoordAttnWeights) -> Result<FeatureMap> {
    let t = attention_trace(x, w)?;
    let (h, wd) = (x.height, x.width);
    let mut out = x.clone();
    for q in 0..x.channels {
        for p in 0..h {
            for u in 0..wd {
                out.values[(q * h + p) * wd + u] *= t.phi_h[q * h + p] * t.phi_w[q * wd + u];
            }
        }
    }
    Ok(out)
}

/// Exact gradients of [`coord_attention_forward`] given the gradient of the
/// loss with respect to its output. Weight gradients share the weights'
/// shapes.
pub fn coord_attention_backward(
    x: &FeatureMap,
    w: &CoordAttnWeights,
    upstream: &FeatureMap,
) -> Result<(FeatureMap, CoordAttnWeights)> {
    if !x.same_shape(upstream) {
        return Err(Error::Contract(format!(
            "upstream gradient is {}x{}x{}, input is {}x{}x{}",
            upstream.channels, upstream.height, upstream.width, x.channels, x.height, x.width
        )));
    }
    let t = attention_trace(x, w)?;
    let (c, h, wd) = (x.channels, x.height, x.width);
    let len = h + wd;
    let mid = w.reduce.out_ch;

    let mut grad_x = vec![0.0; x.values.len()];
    let mut d_phi_h = vec![0.0; c * h];
    let mut d_phi_w = vec![0.0; c * wd];
    for q in 0..c {
        for p in 0..h {
            for u in 0..wd {
                let i = (q * h + p) * wd + u;
                let g = upstream.values[i];
                let ph = t.phi_h[q * h + p];
                let pw = t.phi_w[q * wd + u];
                grad_x[i] = g * ph * pw;
                d_phi_h[q * h + p] += g * x.values[i] * pw;
                d_phi_w[q * wd + u] += g * x.values[i] * ph;
            }
        }
    }

    // through the sigmoids
    let dz_h: Vec<f64> = d_phi_h
        .iter()
        .zip(&t.phi_h)
        .map(|(d, s)| d * s * (1.0 - s))
        .collect();
    let dz_w: Vec<f64> = d_phi_w
        .iter()
        .zip(&t.phi_w)
        .map(|(d, s)| d * s * (1.0 - s))
        .collect();
    let (g_expand_h, d_mid_h) = w.expand_h.apply_backward(&t.mid_h, &dz_h, h);
    let (g_expand_w, d_mid_w) = w.expand_w.apply_backward(&t.mid_w, &dz_w, wd);

    // reassemble the strip gradient and apply the ReLU mask
    let mut d_pre = vec![0.0; mid * len];
    for m in 0..mid {
        for p in 0..h {
            d_pre[m * len + p] = d_mid_h[m * h + p];
        }
        for u in 0..wd {
            d_pre[m * len + h + u] = d_mid_w[m * wd + u];
        }
    }
    for (d, pre) in d_pre.iter_mut().zip(&t.pre) {
        if *pre <= 0.0 {
            *d = 0.0;
        }
    }
    let (g_reduce, d_strip) = w.reduce.apply_backward(&t.strip, &d_pre, len);

    // back through the average pools
    for q in 0..c {
        for p in 0..h {
            let dr = d_strip[q * len + p] / wd as f64;
            for u in 0..wd {
                grad_x[(q * h + p) * wd + u] += dr;
            }
        }
        for u in 0..wd {
            let dc = d_strip[q * len + h + u] / h as f64;
            for p in 0..h {
                grad_x[(q * h + p) * wd + u] += dc;
            }
        }
    }

    Ok((
        FeatureMap {
            channels: c,
            height: h,
            width: wd,
            values: grad_x,
        },
        CoordAttnWeights {
            reduce: g_reduce,
            expand_h: g_expand_h,
            expand_w: g_expand_w,
        },
    ))
}

fn check_c2f(x: &FeatureMap, branch: &ConvWeights) -> Result<usize> {
    if !x.channels.is_multiple_of(2) {
        return Err(Error::Contract(format!(
            "channel split needs an even channel count, got {}",
            x.channels
        )));
    }
    let half = x.channels / 2;
    if branch.in_ch != half || branch.out_ch != half {
        return Err(Error::Contract(format!(
            "branch convolution must map {half} channels to {half}, got {}->{}",
            branch.in_ch, branch.out_ch
        )));
    }
    Ok(half)
}

/// Split channels into halves, transform the second half with a 1x1
/// convolution and ReLU, concatenate, then apply coordinate attention.
pub fn c2f_forward(
    x: &FeatureMap,
    branch: &ConvWeights,
    attn: &CoordAttnWeights,
) -> Result<FeatureMap> {
    let half = check_c2f(x, branch)?;
    let (a, b) = x.split_channels(half);
    let mut b2 = conv1x1_forward(&b, branch)?;
    b2.values.iter_mut().for_each(|v| *v = v.max(0.0));
    coord_attention_forward(&FeatureMap::concat_channels(&a, &b2), attn)
}

/// Gradients of [`c2f_forward`]: `(grad_x, grad_branch, grad_attn)`.
pub fn c2f_backward(
    x: &FeatureMap,
    branch: &ConvWeights,
    attn: &CoordAttnWeights,
    upstream: &FeatureMap,
) -> Result<(FeatureMap, ConvWeights, CoordAttnWeights)> {
    let half = check_c2f(x, branch)?;
    let (a, b) = x.split_channels(half);
    let pre = conv1x1_forward(&b, branch)?;
    let mut b2 = pre.clone();
    b2.values.iter_mut().for_each(|v| *v = v.max(0.0));
    let joined = FeatureMap::concat_channels(&a, &b2);
    let (g_joined, g_attn) = coord_attention_backward(&joined, attn, upstream)?;
    let (g_a, mut g_b2) = g_joined.split_channels(half);
    for (g, p) in g_b2.values.iter_mut().zip(&pre.values) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
    let (g_b, g_branch) = conv1x1_backward(&b, branch, &g_b2)?;
    Ok((FeatureMap::concat_channels(&g_a, &g_b), g_branch, g_attn))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(c: usize, h: usize, w: usize, v: &[f64]) -> FeatureMap {
        FeatureMap::new(c, h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_and_bias() {
        let x = map(2, 1, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            conv1x1_forward(&x, &ConvWeights::identity(2).unwrap()).unwrap(),
            x
        );
        let w = ConvWeights::new(1, 2, vec![0.0, 0.0], vec![1.5]).unwrap();
        let out = conv1x1_forward(&x, &w).unwrap();
        assert_eq!(out.values(), &[1.5, 1.5]);
    }

    #[test]
    fn conv_hand_case() {
        let x = map(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let w = ConvWeights::new(1, 1, vec![2.0], vec![1.0]).unwrap();
        assert_eq!(
            conv1x1_forward(&x, &w).unwrap().values(),
            &[3.0, 5.0, 7.0, 9.0]
        );
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = map(1, 1, 1, &[1.0]);
        let w = ConvWeights::zeros(1, 2).unwrap();
        assert!(matches!(conv1x1_forward(&x, &w), Err(Error::Contract(_))));
    }

    #[test]
    fn pool_hand_case() {
        let p = coord_pool(&map(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(p.rows, vec![1.5, 3.5]);
        assert_eq!(p.cols, vec![2.0, 3.0]);
    }

    #[test]
    fn pool_of_constant_is_constant() {
        let p = coord_pool(&FeatureMap::new(2, 3, 4, vec![0.25; 24]).unwrap());
        assert!(p.rows.iter().chain(&p.cols).all(|&v| v == 0.25));
    }

    #[test]
    fn zero_weights_scale_by_a_quarter() {
        let x = map(
            2,
            2,
            3,
            &[1.0, -2.0, 3.0, 4.0, 5.0, -6.0, 0.5, 1.5, 2.5, 3.5, 4.5, 5.5],
        );
        let w = CoordAttnWeights::zeros(2).unwrap();
        let out = coord_attention_forward(&x, &w).unwrap();
        for (o, i) in out.values().iter().zip(x.values()) {
            assert_eq!(*o, i * 0.25);
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let x = FeatureMap::zeros(3, 2, 2).unwrap();
        let mut w = CoordAttnWeights::zeros(3).unwrap();
        w.expand_h.bias_mut().fill(3.0);
        let out = coord_attention_forward(&x, &w).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_rejects_bad_weights() {
        let x = FeatureMap::zeros(3, 2, 2).unwrap();
        let w = CoordAttnWeights::zeros(4).unwrap();
        assert!(matches!(
            coord_attention_forward(&x, &w),
            Err(Error::Contract(_))
        ));
        let up = FeatureMap::zeros(3, 2, 3).unwrap();
        let w = CoordAttnWeights::zeros(3).unwrap();
        assert!(matches!(
            coord_attention_backward(&x, &w, &up),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x = map(2, 1, 2, &[0.3, -0.7, 1.1, 0.2]);
        let mut w = CoordAttnWeights::zeros(2).unwrap();
        w.reduce.kernel_mut().copy_from_slice(&[0.5, -0.4]);
        w.expand_h.kernel_mut().copy_from_slice(&[0.9, 0.1]);
        w.expand_w.kernel_mut().copy_from_slice(&[-0.3, 0.8]);
        let up = FeatureMap::zeros(2, 1, 2).unwrap();
        let (gx, gw) = coord_attention_backward(&x, &w, &up).unwrap();
        assert!(gx.values().iter().all(|&v| v == 0.0));
        for cw in [&gw.reduce, &gw.expand_h, &gw.expand_w] {
            assert!(cw.kernel().iter().chain(cw.bias()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_weight_input_gradient_is_a_quarter_of_upstream() {
        let x = map(2, 2, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let w = CoordAttnWeights::zeros(2).unwrap();
        let up = map(2, 2, 2, &[1.0, -1.0, 2.0, 0.5, 3.0, 0.0, -2.0, 4.0]);
        let (gx, _) = coord_attention_backward(&x, &w, &up).unwrap();
        for (g, u) in gx.values().iter().zip(up.values()) {
            assert_eq!(*g, 0.25 * u);
        }
    }

    #[test]
    fn c2f_identity_branch_zero_attention() {
        let x = map(2, 2, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let out = c2f_forward(
            &x,
            &ConvWeights::identity(1).unwrap(),
            &CoordAttnWeights::zeros(2).unwrap(),
        )
        .unwrap();
        for (o, i) in out.values().iter().zip(x.values()) {
            assert!((o - i * 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn c2f_zero_branch_zeroes_second_half() {
        let x = map(2, 1, 2, &[1.0, 2.0, 3.0, 4.0]);
        let out = c2f_forward(
            &x,
            &ConvWeights::zeros(1, 1).unwrap(),
            &CoordAttnWeights::zeros(2).unwrap(),
        )
        .unwrap();
        assert_eq!(out.channels(), 2);
        assert_eq!(out.values(), &[0.25, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn c2f_rejects_odd_channels() {
        let x = FeatureMap::zeros(3, 1, 1).unwrap();
        let err = c2f_forward(
            &x,
            &ConvWeights::identity(1).unwrap(),
            &CoordAttnWeights::zeros(3).unwrap(),
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn weights_json_uses_nested_arrays() {
        let w = ConvWeights::new(2, 1, vec![1.0, 2.0], vec![0.5, -0.5]).unwrap();
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(json, r#"{"kernel":[[1.0],[2.0]],"bias":[0.5,-0.5]}"#);
        let back: ConvWeights = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);
        assert!(serde_json::from_str::<ConvWeights>(
            r#"{"kernel":[[1.0],[2.0,3.0]],"bias":[0,0]}"#
        )
        .is_err());
    }
}
