//! A small convolutional pair network with hand-written reverse mode.
//!
//! Feature extractor: `3x3` convolutions with padding 1 and ReLU, global
//! average pooling and a linear projection to `feature_dim`. Pair head: the
//! two feature vectors are concatenated and passed through `2D -> D/2`
//! (ReLU) and `D/2 -> 1`. All parameters live in one flat vector.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DisambigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Output channels of each convolution block.
    pub channels: Vec<usize>,
    pub stride: usize,
    pub feature_dim: usize,
    /// Side of the square input patches.
    pub input_size: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { channels: vec![8, 16, 16, 32], stride: 2, feature_dim: 128, input_size: 64 }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), DisambigError> {
        let bad = |m: &str| Err(DisambigError::Config(m.to_string()));
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("channels must be a non-empty list of positive counts");
        }
        if self.stride == 0 || self.feature_dim < 2 || self.input_size == 0 {
            return bad("stride, feature_dim and input_size must be positive (feature_dim >= 2)");
        }
        Ok(())
    }

    pub fn hidden_dim(&self) -> usize {
        self.feature_dim / 2
    }

    pub fn input_len(&self) -> usize {
        INPUT_CHANNELS * self.input_size * self.input_size
    }
}

pub const INPUT_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvSpec {
    pub w: usize,
    pub b: usize,
    pub cin: usize,
    pub cout: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub convs: Vec<ConvSpec>,
    pub proj_w: usize,
    pub proj_b: usize,
    pub fc1_w: usize,
    pub fc1_b: usize,
    pub fc2_w: usize,
    pub fc2_b: usize,
    pub stride: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &NetConfig) -> Self {
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let mut convs = Vec::new();
        let mut cin = INPUT_CHANNELS;
        for &cout in &cfg.channels {
            let w = take(cout * cin * 9);
            let b = take(cout);
            convs.push(ConvSpec { w, b, cin, cout });
            cin = cout;
        }
        let d = cfg.feature_dim;
        let h = cfg.hidden_dim();
        let proj_w = take(d * cin);
        let proj_b = take(d);
        let fc1_w = take(h * 2 * d);
        let fc1_b = take(h);
        let fc2_w = take(h);
        let fc2_b = take(1);
        Self {
            convs,
            proj_w,
            proj_b,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
            stride: cfg.stride,
            feature_dim: d,
            hidden: h,
            total: off,
        }
    }

    pub fn last_channels(&self) -> usize {
        self.convs.last().map_or(INPUT_CHANNELS, |c| c.cout)
    }

    /// Named tensors with their shapes, in storage order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, usize)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![c.cout, c.cin, 3, 3], c.w));
            out.push((format!("conv{i}.bias"), vec![c.cout], c.b));
        }
        let (d, h) = (self.feature_dim, self.hidden);
        out.push(("proj.weight".into(), vec![d, self.last_channels()], self.proj_w));
        out.push(("proj.bias".into(), vec![d], self.proj_b));
        out.push(("fc1.weight".into(), vec![h, 2 * d], self.fc1_w));
        out.push(("fc1.bias".into(), vec![h], self.fc1_b));
        out.push(("fc2.weight".into(), vec![1, h], self.fc2_w));
        out.push(("fc2.bias".into(), vec![1], self.fc2_b));
        out
    }

    /// He-normal weights for ReLU layers, `1/fan_in` variance for the linear
    /// ones, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.total];
        let mut fill = |p: &mut [f64], off: usize, n: usize, var: f64| {
            let dist = Normal::new(0.0, var.sqrt()).expect("positive variance");
            for v in &mut p[off..off + n] {
                *v = dist.sample(rng);
            }
        };
        for c in &self.convs {
            let fan_in = c.cin * 9;
            fill(&mut p, c.w, c.cout * fan_in, 2.0 / fan_in as f64);
        }
        let (d, h, cl) = (self.feature_dim, self.hidden, self.last_channels());
        fill(&mut p, self.proj_w, d * cl, 1.0 / cl as f64);
        fill(&mut p, self.fc1_w, h * 2 * d, 2.0 / (2 * d) as f64);
        fill(&mut p, self.fc2_w, h, 1.0 / h as f64);
        p
    }
}

/// `c = op(a) * op(b) + beta * c` for row-major matrices; `op(a)` is `m x k`
/// and `op(b)` is `k x n`. A transposed operand is stored in its
/// untransposed shape.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

fn out_side(side: usize, stride: usize) -> usize {
    (side - 1) / stride + 1
}

fn im2col(x: &[f64], cin: usize, h: usize, w: usize, stride: usize) -> (Vec<f64>, usize, usize) {
    let (ho, wo) = (out_side(h, stride), out_side(w, stride));
    let n = ho * wo;
    let mut cols = vec![0.0; cin * 9 * n];
    for ci in 0..cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 3 + ky) * 3 + kx) * n..][..n];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..][..w];
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            row[oy * wo + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    (cols, ho, wo)
}

#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], cin: usize, h: usize, w: usize, ho: usize, wo: usize, stride: usize) -> Vec<f64> {
    let n = ho * wo;
    let mut x = vec![0.0; cin * h * w];
    for ci in 0..cin {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 3 + ky) * 3 + kx) * n..][..n];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += row[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

struct ConvCache {
    cols: Vec<f64>,
    /// Post-activation output.
    out: Vec<f64>,
    h_in: usize,
    w_in: usize,
    h_out: usize,
    w_out: usize,
}

pub struct FeatureCache {
    layers: Vec<ConvCache>,
    pooled: Vec<f64>,
}

pub struct HeadCache {
    concat: Vec<f64>,
    hidden: Vec<f64>,
}

impl ParamLayout {
    /// Feature vector of one `3 x side x side` input.
    pub fn features(&self, p: &[f64], input: &[f64], side: usize) -> (Vec<f64>, FeatureCache) {
        assert_eq!(input.len(), INPUT_CHANNELS * side * side, "input size");
        let mut layers = Vec::with_capacity(self.convs.len());
        let (mut h, mut w) = (side, side);
        let mut x: Vec<f64> = input.to_vec();
        for c in &self.convs {
            let (cols, ho, wo) = im2col(&x, c.cin, h, w, self.stride);
            let n = ho * wo;
            let mut out = vec![0.0; c.cout * n];
            for (o, row) in out.chunks_mut(n).enumerate() {
                row.fill(p[c.b + o]);
            }
            gemm(c.cout, c.cin * 9, n, &p[c.w..], false, &cols, false, 1.0, &mut out);
            for v in &mut out {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            x = out.clone();
            layers.push(ConvCache { cols, out, h_in: h, w_in: w, h_out: ho, w_out: wo });
            h = ho;
            w = wo;
        }
        let cl = self.last_channels();
        let n = h * w;
        let pooled: Vec<f64> =
            (0..cl).map(|c| x[c * n..(c + 1) * n].iter().sum::<f64>() / n as f64).collect();
        let d = self.feature_dim;
        let mut feat = p[self.proj_b..self.proj_b + d].to_vec();
        for (i, f) in feat.iter_mut().enumerate() {
            let row = &p[self.proj_w + i * cl..][..cl];
            *f += row.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>();
        }
        (feat, FeatureCache { layers, pooled })
    }

    /// Accumulates parameter gradients given `d loss / d feature`.
    pub fn features_backward(&self, p: &[f64], cache: &FeatureCache, dfeat: &[f64], g: &mut [f64]) {
        let (d, cl) = (self.feature_dim, self.last_channels());
        let mut dpooled = vec![0.0; cl];
        for i in 0..d {
            let di = dfeat[i];
            if di == 0.0 {
                continue;
            }
            g[self.proj_b + i] += di;
            let row = self.proj_w + i * cl;
            for c in 0..cl {
                g[row + c] += di * cache.pooled[c];
                dpooled[c] += di * p[row + c];
            }
        }
        let last = cache.layers.last().expect("at least one conv layer");
        let n = last.h_out * last.w_out;
        let mut dout = vec![0.0; cl * n];
        for c in 0..cl {
            let v = dpooled[c] / n as f64;
            for (k, o) in dout[c * n..(c + 1) * n].iter_mut().enumerate() {
                if last.out[c * n + k] > 0.0 {
                    *o = v;
                }
            }
        }
        for li in (0..self.convs.len()).rev() {
            let c = self.convs[li];
            let lc = &cache.layers[li];
            let n = lc.h_out * lc.w_out;
            let k = c.cin * 9;
            gemm(c.cout, n, k, &dout, false, &lc.cols, true, 1.0, &mut g[c.w..c.w + c.cout * k]);
            for o in 0..c.cout {
                g[c.b + o] += dout[o * n..(o + 1) * n].iter().sum::<f64>();
            }
            if li == 0 {
                break;
            }
            let mut dcols = vec![0.0; k * n];
            gemm(k, c.cout, n, &p[c.w..], true, &dout, false, 0.0, &mut dcols);
            let mut dx = col2im(&dcols, c.cin, lc.h_in, lc.w_in, lc.h_out, lc.w_out, self.stride);
            let prev = &cache.layers[li - 1].out;
            for (v, &o) in dx.iter_mut().zip(prev) {
                if o <= 0.0 {
                    *v = 0.0;
                }
            }
            dout = dx;
        }
    }

    /// Logit of the pair head on concatenated features.
    pub fn pair_logit(&self, p: &[f64], fa: &[f64], fb: &[f64]) -> (f64, HeadCache) {
        let (d, h) = (self.feature_dim, self.hidden);
        let mut concat = Vec::with_capacity(2 * d);
        concat.extend_from_slice(fa);
        concat.extend_from_slice(fb);
        let mut hidden = vec![0.0; h];
        for (j, hv) in hidden.iter_mut().enumerate() {
            let row = &p[self.fc1_w + j * 2 * d..][..2 * d];
            let v = p[self.fc1_b + j] + row.iter().zip(&concat).map(|(a, b)| a * b).sum::<f64>();
            *hv = v.max(0.0);
        }
        let z = p[self.fc2_b]
            + p[self.fc2_w..self.fc2_w + h].iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>();
        (z, HeadCache { concat, hidden })
    }

    /// Accumulates head gradients for `d loss / d z` and returns the feature
    /// gradients of both inputs.
    pub fn pair_backward(&self, p: &[f64], cache: &HeadCache, dz: f64, g: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, h) = (self.feature_dim, self.hidden);
        g[self.fc2_b] += dz;
        let mut dconcat = vec![0.0; 2 * d];
        for j in 0..h {
            g[self.fc2_w + j] += dz * cache.hidden[j];
            if cache.hidden[j] <= 0.0 {
                continue;
            }
            let dh = dz * p[self.fc2_w + j];
            g[self.fc1_b + j] += dh;
            let row = self.fc1_w + j * 2 * d;
            for i in 0..2 * d {
                g[row + i] += dh * cache.concat[i];
                dconcat[i] += dh * p[row + i];
            }
        }
        let fb = dconcat.split_off(d);
        (dconcat, fb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(x: &[f64], w: &[f64], b: &[f64], cin: usize, cout: usize, side: usize, s: usize) -> Vec<f64> {
        let so = out_side(side, s);
        let mut out = vec![0.0; cout * so * so];
        for o in 0..cout {
            for oy in 0..so {
                for ox in 0..so {
                    let mut acc = b[o];
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * s + ky) as isize - 1;
                                let ix = (ox * s + kx) as isize - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < side && (ix as usize) < side {
                                    acc += w[((o * cin + ci) * 3 + ky) * 3 + kx]
                                        * x[(ci * side + iy as usize) * side + ix as usize];
                                }
                            }
                        }
                    }
                    out[(o * so + oy) * so + ox] = acc.max(0.0);
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let cfg = NetConfig { channels: vec![4, 5], stride: 2, feature_dim: 6, input_size: 9 };
        let layout = ParamLayout::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = layout.init(&mut rng);
        let x: Vec<f64> = (0..3 * 81).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, cache) = layout.features(&p, &x, 9);
        let c0 = layout.convs[0];
        let want = naive_conv(&x, &p[c0.w..], &p[c0.b..], 3, 4, 9, 2);
        for (a, b) in cache.layers[0].out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let c1 = layout.convs[1];
        let want1 = naive_conv(&want, &p[c1.w..], &p[c1.b..], 4, 5, 5, 2);
        for (a, b) in cache.layers[1].out.iter().zip(&want1) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let layout = ParamLayout::new(&NetConfig::default());
        let sum: usize = layout.tensors().iter().map(|(_, s, _)| s.iter().product::<usize>()).sum();
        assert_eq!(sum, layout.total);
        let mut offsets: Vec<usize> = layout.tensors().iter().map(|t| t.2).collect();
        let sorted = offsets.clone();
        offsets.sort_unstable();
        assert_eq!(offsets, sorted);
    }
}
