//! Raw slice kernels behind the tensor ops and the tape.
//!
//! Convolutions go through im2col + GEMM. A convolution and its transpose
//! share one [`ConvGeometry`]: the "big" side is the conv input (transposed
//! conv output) and the "small" side is the conv output (transposed conv
//! input). Both use a kernel laid out as `[small_ch, big_ch, k, k, k]`.

use super::{Result, TensorError};

pub const BCE_CLAMP: f64 = 1e-7;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub big_ch: usize,
    pub small_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub big: [usize; 3],
    pub small: [usize; 3],
}

impl ConvGeometry {
    /// `dims` is `[channels, d, h, w]` of the operation's input.
    pub fn from_shapes(
        dims: [usize; 4],
        kernel: &[usize],
        bias: &[usize],
        stride: usize,
        pad: usize,
        transposed: bool,
    ) -> Result<Self> {
        let [ch, d, h, w] = dims;
        if stride == 0 {
            return Err(TensorError::Dimension("stride must be positive".into()));
        }
        let (k0, k1, k) = match kernel {
            [a, b, k, k2, k3] if k == k2 && k == k3 => (*a, *b, *k),
            s => {
                return Err(TensorError::Dimension(format!(
                    "kernel must be [C_out, C_in, k, k, k], got {s:?}"
                )))
            }
        };
        let spatial = [d, h, w];
        if !transposed {
            if k1 != ch {
                return Err(TensorError::Dimension(format!(
                    "kernel expects {k1} input channels, input has {ch}"
                )));
            }
            if bias != [k0] {
                return Err(TensorError::Dimension(format!(
                    "bias shape {bias:?} does not match {k0} output channels"
                )));
            }
            let mut small = [0; 3];
            for (i, &s) in spatial.iter().enumerate() {
                if s + 2 * pad < k {
                    return Err(TensorError::Dimension(format!(
                        "spatial size {s} with padding {pad} is smaller than kernel {k}"
                    )));
                }
                small[i] = (s + 2 * pad - k) / stride + 1;
            }
            Ok(Self {
                big_ch: ch,
                small_ch: k0,
                k,
                stride,
                pad,
                big: spatial,
                small,
            })
        } else {
            if k0 != ch {
                return Err(TensorError::Dimension(format!(
                    "transposed kernel expects {k0} input channels, input has {ch}"
                )));
            }
            if bias != [k1] {
                return Err(TensorError::Dimension(format!(
                    "bias shape {bias:?} does not match {k1} output channels"
                )));
            }
            let mut big = [0; 3];
            for (i, &s) in spatial.iter().enumerate() {
                let full = (s - 1) * stride + k;
                if full <= 2 * pad {
                    return Err(TensorError::Dimension(format!(
                        "transposed conv output would be empty (in {s}, pad {pad})"
                    )));
                }
                big[i] = full - 2 * pad;
            }
            Ok(Self {
                big_ch: k1,
                small_ch: ch,
                k,
                stride,
                pad,
                big,
                small: spatial,
            })
        }
    }

    pub fn big_voxels(&self) -> usize {
        self.big.iter().product()
    }

    pub fn small_voxels(&self) -> usize {
        self.small.iter().product()
    }

    /// Rows of the im2col matrix.
    pub fn patch_len(&self) -> usize {
        self.big_ch * self.k * self.k * self.k
    }

    pub fn kernel_len(&self) -> usize {
        self.small_ch * self.patch_len()
    }
}

/// `C[m×n] = op(A) op(B)` (or `+=` when `accumulate`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: bounds asserted above; strides describe dense row-major storage.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds one big-side sample into `[patch_len, small_voxels]`.
pub fn im2col(x: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let [bd, bh, bw] = g.big;
    let [sd, sh, sw] = g.small;
    let p = g.small_voxels();
    let k = g.k;
    let pad = g.pad as isize;
    let stride = g.stride as isize;
    for c in 0..g.big_ch {
        let plane = &x[c * bd * bh * bw..(c + 1) * bd * bh * bw];
        for kd in 0..k {
            for kh in 0..k {
                for kw in 0..k {
                    let row = ((c * k + kd) * k + kh) * k + kw;
                    let out = &mut cols[row * p..(row + 1) * p];
                    for od in 0..sd {
                        let id = od as isize * stride + kd as isize - pad;
                        for oh in 0..sh {
                            let ih = oh as isize * stride + kh as isize - pad;
                            let base = (od * sh + oh) * sw;
                            if id < 0 || id >= bd as isize || ih < 0 || ih >= bh as isize {
                                out[base..base + sw].fill(0.0);
                                continue;
                            }
                            let src = (id as usize * bh + ih as usize) * bw;
                            for ow in 0..sw {
                                let iw = ow as isize * stride + kw as isize - pad;
                                out[base + ow] = if iw < 0 || iw >= bw as isize {
                                    0.0
                                } else {
                                    plane[src + iw as usize]
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Folds `[patch_len, small_voxels]` back onto a big-side sample, accumulating.
pub fn col2im(cols: &[f64], g: &ConvGeometry, x: &mut [f64]) {
    let [bd, bh, bw] = g.big;
    let [sd, sh, sw] = g.small;
    let p = g.small_voxels();
    let k = g.k;
    let pad = g.pad as isize;
    let stride = g.stride as isize;
    for c in 0..g.big_ch {
        let plane = &mut x[c * bd * bh * bw..(c + 1) * bd * bh * bw];
        for kd in 0..k {
            for kh in 0..k {
                for kw in 0..k {
                    let row = ((c * k + kd) * k + kh) * k + kw;
                    let src = &cols[row * p..(row + 1) * p];
                    for od in 0..sd {
                        let id = od as isize * stride + kd as isize - pad;
                        if id < 0 || id >= bd as isize {
                            continue;
                        }
                        for oh in 0..sh {
                            let ih = oh as isize * stride + kh as isize - pad;
                            if ih < 0 || ih >= bh as isize {
                                continue;
                            }
                            let base = (od * sh + oh) * sw;
                            let dst = (id as usize * bh + ih as usize) * bw;
                            for ow in 0..sw {
                                let iw = ow as isize * stride + kw as isize - pad;
                                if iw >= 0 && iw < bw as isize {
                                    plane[dst + iw as usize] += src[base + ow];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv3d(x: &[f64], w: &[f64], bias: &[f64], g: &ConvGeometry, batch: usize) -> Vec<f64> {
    let in_len = g.big_ch * g.big_voxels();
    let p = g.small_voxels();
    let out_len = g.small_ch * p;
    let mut cols = vec![0.0; g.patch_len() * p];
    let mut out = vec![0.0; batch * out_len];
    for b in 0..batch {
        im2col(&x[b * in_len..(b + 1) * in_len], g, &mut cols);
        let y = &mut out[b * out_len..(b + 1) * out_len];
        gemm(g.small_ch, g.patch_len(), p, w, false, &cols, false, y, false);
        add_channel_bias(y, bias, p);
    }
    out
}

pub struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub kernel: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

/// Gradients of [`conv3d`] given the upstream gradient `dy` on the small side.
pub fn conv3d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeometry,
    batch: usize,
    need: [bool; 3],
) -> ConvGrads {
    let in_len = g.big_ch * g.big_voxels();
    let p = g.small_voxels();
    let out_len = g.small_ch * p;
    let mut dx = need[0].then(|| vec![0.0; batch * in_len]);
    let mut dw = need[1].then(|| vec![0.0; g.kernel_len()]);
    let db = need[2].then(|| channel_sums(dy, g.small_ch, p, batch));
    let mut cols = vec![0.0; g.patch_len() * p];
    for b in 0..batch {
        let dy_b = &dy[b * out_len..(b + 1) * out_len];
        if let Some(dw) = dw.as_mut() {
            im2col(&x[b * in_len..(b + 1) * in_len], g, &mut cols);
            gemm(g.small_ch, p, g.patch_len(), dy_b, false, &cols, true, dw, true);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(g.patch_len(), g.small_ch, p, w, true, dy_b, false, &mut cols, false);
            col2im(&cols, g, &mut dx[b * in_len..(b + 1) * in_len]);
        }
    }
    ConvGrads {
        input: dx,
        kernel: dw,
        bias: db,
    }
}

pub fn conv3d_transposed(
    x: &[f64],
    w: &[f64],
    bias: &[f64],
    g: &ConvGeometry,
    batch: usize,
) -> Vec<f64> {
    let p = g.small_voxels();
    let in_len = g.small_ch * p;
    let out_len = g.big_ch * g.big_voxels();
    let mut cols = vec![0.0; g.patch_len() * p];
    let mut out = vec![0.0; batch * out_len];
    for b in 0..batch {
        gemm(
            g.patch_len(),
            g.small_ch,
            p,
            w,
            true,
            &x[b * in_len..(b + 1) * in_len],
            false,
            &mut cols,
            false,
        );
        let y = &mut out[b * out_len..(b + 1) * out_len];
        col2im(&cols, g, y);
        add_channel_bias(y, bias, g.big_voxels());
    }
    out
}

/// Gradients of [`conv3d_transposed`] given `dy` on the big side.
pub fn conv3d_transposed_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeometry,
    batch: usize,
    need: [bool; 3],
) -> ConvGrads {
    let p = g.small_voxels();
    let in_len = g.small_ch * p;
    let out_len = g.big_ch * g.big_voxels();
    let mut dx = need[0].then(|| vec![0.0; batch * in_len]);
    let mut dw = need[1].then(|| vec![0.0; g.kernel_len()]);
    let db = need[2].then(|| channel_sums(dy, g.big_ch, g.big_voxels(), batch));
    if dx.is_some() || dw.is_some() {
        let mut cols = vec![0.0; g.patch_len() * p];
        for b in 0..batch {
            im2col(&dy[b * out_len..(b + 1) * out_len], g, &mut cols);
            if let Some(dx) = dx.as_mut() {
                let dx_b = &mut dx[b * in_len..(b + 1) * in_len];
                gemm(g.small_ch, g.patch_len(), p, w, false, &cols, false, dx_b, false);
            }
            if let Some(dw) = dw.as_mut() {
                let x_b = &x[b * in_len..(b + 1) * in_len];
                gemm(g.small_ch, p, g.patch_len(), x_b, false, &cols, true, dw, true);
            }
        }
    }
    ConvGrads {
        input: dx,
        kernel: dw,
        bias: db,
    }
}

fn add_channel_bias(y: &mut [f64], bias: &[f64], per_channel: usize) {
    for (c, &b) in bias.iter().enumerate() {
        for v in &mut y[c * per_channel..(c + 1) * per_channel] {
            *v += b;
        }
    }
}

/// Per-channel sum over batch and spatial positions of `[B, C, P]` data.
pub fn channel_sums(data: &[f64], channels: usize, per_channel: usize, batch: usize) -> Vec<f64> {
    let mut sums = vec![0.0; channels];
    for b in 0..batch {
        for (c, s) in sums.iter_mut().enumerate() {
            let start = (b * channels + c) * per_channel;
            *s += data[start..start + per_channel].iter().sum::<f64>();
        }
    }
    sums
}

/// Layout of a tensor seen by batch norm: `[batch, channels, spatial]`.
#[derive(Clone, Copy, Debug)]
pub struct ChannelLayout {
    pub batch: usize,
    pub channels: usize,
    pub spatial: usize,
}

impl ChannelLayout {
    pub fn of(shape: &[usize]) -> Result<Self> {
        if shape.len() < 2 {
            return Err(TensorError::Dimension(format!(
                "batch norm needs [B, C, ...], got {shape:?}"
            )));
        }
        Ok(Self {
            batch: shape[0],
            channels: shape[1],
            spatial: shape[2..].iter().product(),
        })
    }

    fn count(&self) -> usize {
        self.batch * self.spatial
    }

    fn for_channel(&self, c: usize, mut f: impl FnMut(usize)) {
        for b in 0..self.batch {
            let start = (b * self.channels + c) * self.spatial;
            for i in start..start + self.spatial {
                f(i);
            }
        }
    }
}

pub struct BatchNormOutput {
    pub output: Vec<f64>,
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Biased (population) variance of the batch.
    pub var: Vec<f64>,
}

pub fn batchnorm_train(
    x: &[f64],
    layout: ChannelLayout,
    scale: &[f64],
    shift: &[f64],
) -> BatchNormOutput {
    let n = layout.count() as f64;
    let mut mean = vec![0.0; layout.channels];
    let mut var = vec![0.0; layout.channels];
    for c in 0..layout.channels {
        let mut s = 0.0;
        layout.for_channel(c, |i| s += x[i]);
        let m = s / n;
        let mut ss = 0.0;
        layout.for_channel(c, |i| ss += (x[i] - m) * (x[i] - m));
        mean[c] = m;
        var[c] = ss / n;
    }
    normalize_with(x, layout, scale, shift, mean, var)
}

pub fn batchnorm_eval(
    x: &[f64],
    layout: ChannelLayout,
    scale: &[f64],
    shift: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> BatchNormOutput {
    normalize_with(
        x,
        layout,
        scale,
        shift,
        running_mean.to_vec(),
        running_var.to_vec(),
    )
}

fn normalize_with(
    x: &[f64],
    layout: ChannelLayout,
    scale: &[f64],
    shift: &[f64],
    mean: Vec<f64>,
    var: Vec<f64>,
) -> BatchNormOutput {
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut normalized = vec![0.0; x.len()];
    let mut output = vec![0.0; x.len()];
    for c in 0..layout.channels {
        layout.for_channel(c, |i| {
            let h = (x[i] - mean[c]) * inv_std[c];
            normalized[i] = h;
            output[i] = scale[c] * h + shift[c];
        });
    }
    BatchNormOutput {
        output,
        normalized,
        inv_std,
        mean,
        var,
    }
}

/// Returns `(dx, dscale, dshift)`. With `batch_stats` the statistics depend
/// on `x` (train mode); otherwise they are constants (eval mode).
pub fn batchnorm_backward(
    dy: &[f64],
    normalized: &[f64],
    inv_std: &[f64],
    scale: &[f64],
    layout: ChannelLayout,
    batch_stats: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = layout.count() as f64;
    let mut dx = vec![0.0; dy.len()];
    let mut dscale = vec![0.0; layout.channels];
    let mut dshift = vec![0.0; layout.channels];
    for c in 0..layout.channels {
        let mut sum_dy = 0.0;
        let mut sum_dy_h = 0.0;
        layout.for_channel(c, |i| {
            sum_dy += dy[i];
            sum_dy_h += dy[i] * normalized[i];
        });
        dscale[c] = sum_dy_h;
        dshift[c] = sum_dy;
        let k = scale[c] * inv_std[c];
        if batch_stats {
            layout.for_channel(c, |i| {
                dx[i] = k * (dy[i] - sum_dy / n - normalized[i] * sum_dy_h / n);
            });
        } else {
            layout.for_channel(c, |i| dx[i] = k * dy[i]);
        }
    }
    (dx, dscale, dshift)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
}

pub fn bce(p: &[f64], t: &[f64]) -> f64 {
    let total: f64 = p
        .iter()
        .zip(t)
        .map(|(&p, &t)| {
            let p = clamp_prob(p);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    total / p.len() as f64
}

/// d(bce)/dp; zero where the clamp is active.
pub fn bce_grad(p: &[f64], t: &[f64], upstream: f64) -> Vec<f64> {
    let n = p.len() as f64;
    p.iter()
        .zip(t)
        .map(|(&p, &t)| {
            if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                return 0.0;
            }
            upstream * (p - t) / (p * (1.0 - p)) / n
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct six-loop cross-correlation, one sample.
    fn conv_oracle(
        x: &[f64],
        dims: [usize; 4],
        w: &[f64],
        cout: usize,
        k: usize,
        bias: &[f64],
        stride: usize,
        pad: usize,
    ) -> (Vec<f64>, [usize; 3]) {
        let [cin, d, h, wd] = dims;
        let o = |s: usize| (s + 2 * pad - k) / stride + 1;
        let (od, oh, ow) = (o(d), o(h), o(wd));
        let mut out = vec![0.0; cout * od * oh * ow];
        for co in 0..cout {
            for z in 0..od {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = bias[co];
                        for ci in 0..cin {
                            for a in 0..k {
                                for b in 0..k {
                                    for c in 0..k {
                                        let iz = (z * stride + a) as isize - pad as isize;
                                        let iy = (y * stride + b) as isize - pad as isize;
                                        let ix = (xx * stride + c) as isize - pad as isize;
                                        if iz < 0
                                            || iy < 0
                                            || ix < 0
                                            || iz >= d as isize
                                            || iy >= h as isize
                                            || ix >= wd as isize
                                        {
                                            continue;
                                        }
                                        let xi = ((ci * d + iz as usize) * h + iy as usize) * wd
                                            + ix as usize;
                                        let wi = (((co * cin + ci) * k + a) * k + b) * k + c;
                                        acc += x[xi] * w[wi];
                                    }
                                }
                            }
                        }
                        out[((co * od + z) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        (out, [od, oh, ow])
    }

    #[test]
    fn conv_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(cin, cout, s, k, stride, pad) in &[
            (1, 2, 4, 2, 2, 0),
            (2, 2, 8, 3, 1, 1),
            (2, 2, 8, 4, 2, 1),
            (1, 1, 5, 3, 2, 0),
            (2, 1, 7, 2, 3, 2),
        ] {
            let dims = [cin, s, s, s];
            let x = random(cin * s * s * s, &mut rng);
            let w = random(cout * cin * k * k * k, &mut rng);
            let bias = random(cout, &mut rng);
            let g = ConvGeometry::from_shapes(dims, &[cout, cin, k, k, k], &[cout], stride, pad, false)
                .unwrap();
            let got = conv3d(&x, &w, &bias, &g, 1);
            let (want, small) = conv_oracle(&x, dims, &w, cout, k, &bias, stride, pad);
            assert_eq!(g.small, small);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> with zero bias
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (cin, cout, s, k) = (2, 3, 8, 4);
        let g = ConvGeometry::from_shapes([cin, s, s, s], &[cout, cin, k, k, k], &[cout], 2, 1, false)
            .unwrap();
        let x = random(cin * s * s * s, &mut rng);
        let w = random(g.kernel_len(), &mut rng);
        let y = random(cout * g.small_voxels(), &mut rng);
        let cx = conv3d(&x, &w, &vec![0.0; cout], &g, 1);
        let ty = conv3d_transposed(&y, &w, &vec![0.0; cin], &g, 1);
        let lhs: f64 = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&ty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn batchnorm_train_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = ChannelLayout {
            batch: 3,
            channels: 2,
            spatial: 5,
        };
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(-3.0..5.0)).collect();
        let out = batchnorm_train(&x, layout, &[1.0, 2.0], &[0.0, -1.0]);
        for c in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| (0..5).map(move |i| (b * 2 + c) * 5 + i))
                .map(|i| x[i])
                .collect();
            let m = vals.iter().sum::<f64>() / 15.0;
            let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 15.0;
            assert!((out.mean[c] - m).abs() < 1e-12);
            assert!((out.var[c] - v).abs() < 1e-12);
        }
        // channel 0 has unit scale, zero shift: output mean 0, variance ~1
        let ch0: Vec<f64> = (0..3)
            .flat_map(|b| (0..5).map(move |i| b * 10 + i))
            .map(|i| out.output[i])
            .collect();
        let m = ch0.iter().sum::<f64>() / 15.0;
        let v = ch0.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 15.0;
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-4);
    }

    #[test]
    fn batchnorm_constant_channel_gives_shift() {
        let layout = ChannelLayout {
            batch: 2,
            channels: 1,
            spatial: 4,
        };
        let out = batchnorm_train(&[3.0; 8], layout, &[2.0], &[0.25]);
        assert!(out.output.iter().all(|&v| v == 0.25));
    }
}
