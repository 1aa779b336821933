//! Slice-level loops shared by the autograd tape and the inference path.
//!
//! All matrices are row-major. Functions ending in `_acc` add into their
//! output buffer.

use super::Scalar;

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let (x, y) = (&a[c * 4..c * 4 + 4], &b[c * 4..c * 4 + 4]);
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = S::zero();
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c[m,n] += a[m,k] · b[k,n]`
pub fn gemm_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            if aip != S::zero() {
                axpy(aip, &b[p * n..(p + 1) * n], crow);
            }
        }
    }
}

/// `c[m,n] += a[m,k] · b[n,k]ᵀ`
pub fn gemm_bt_acc<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `c[k,n] += a[m,k]ᵀ · g[m,n]`
pub fn gemm_at_acc<S: Scalar>(a: &[S], g: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip != S::zero() {
                axpy(aip, grow, &mut c[p * n..(p + 1) * n]);
            }
        }
    }
}

/// Geometry of a valid strided convolution over `[time, c_in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub time: usize,
    pub c_in: usize,
    pub width: usize,
    pub c_out: usize,
    pub stride: usize,
    pub time_out: usize,
}

/// The receptive window of output frame `t` is the contiguous slice
/// `input[t*stride*c_in ..][.. width*c_in]`, so the kernel acts as a
/// `[width*c_in, c_out]` matrix.
pub fn conv1d_forward<S: Scalar>(input: &[S], kernel: &[S], g: ConvGeom) -> Vec<S> {
    let span = g.width * g.c_in;
    let mut out = vec![S::zero(); g.time_out * g.c_out];
    for t in 0..g.time_out {
        let window = &input[t * g.stride * g.c_in..][..span];
        let orow = &mut out[t * g.c_out..(t + 1) * g.c_out];
        for (p, &x) in window.iter().enumerate() {
            if x != S::zero() {
                axpy(x, &kernel[p * g.c_out..(p + 1) * g.c_out], orow);
            }
        }
    }
    out
}

pub fn conv1d_backward<S: Scalar>(
    input: &[S],
    kernel: &[S],
    grad_out: &[S],
    g: ConvGeom,
    mut d_input: Option<&mut [S]>,
    mut d_kernel: Option<&mut [S]>,
) {
    let span = g.width * g.c_in;
    for t in 0..g.time_out {
        let base = t * g.stride * g.c_in;
        let gout = &grad_out[t * g.c_out..(t + 1) * g.c_out];
        if let Some(dk) = d_kernel.as_deref_mut() {
            let window = &input[base..base + span];
            for (p, &x) in window.iter().enumerate() {
                if x != S::zero() {
                    axpy(x, gout, &mut dk[p * g.c_out..(p + 1) * g.c_out]);
                }
            }
        }
        if let Some(di) = d_input.as_deref_mut() {
            for p in 0..span {
                di[base + p] += dot(&kernel[p * g.c_out..(p + 1) * g.c_out], gout);
            }
        }
    }
}

/// Row-wise RMS normalisation with a learned per-column gain.
/// Returns the output and the per-row inverse RMS.
pub fn rms_norm<S: Scalar>(x: &[S], gain: &[S], cols: usize, eps: S) -> (Vec<S>, Vec<S>) {
    let rows = x.len() / cols;
    let mut y = vec![S::zero(); x.len()];
    let mut inv = Vec::with_capacity(rows);
    let n = S::lit(cols as f64);
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let ms = dot(xr, xr) / n;
        let ir = S::one() / (ms + eps).sqrt();
        inv.push(ir);
        for ((yo, &xi), &gi) in y[r * cols..(r + 1) * cols].iter_mut().zip(xr).zip(gain) {
            *yo = xi * ir * gi;
        }
    }
    (y, inv)
}

pub fn rms_norm_backward<S: Scalar>(
    x: &[S],
    gain: &[S],
    inv: &[S],
    dy: &[S],
    cols: usize,
    mut dx: Option<&mut [S]>,
    mut dgain: Option<&mut [S]>,
) {
    let n = S::lit(cols as f64);
    for (r, &ir) in inv.iter().enumerate() {
        let xr = &x[r * cols..(r + 1) * cols];
        let dyr = &dy[r * cols..(r + 1) * cols];
        if let Some(dg) = dgain.as_deref_mut() {
            for j in 0..cols {
                dg[j] += dyr[j] * xr[j] * ir;
            }
        }
        if let Some(d) = dx.as_deref_mut() {
            let mut mean_uxhat = S::zero();
            for j in 0..cols {
                mean_uxhat += dyr[j] * gain[j] * xr[j] * ir;
            }
            mean_uxhat = mean_uxhat / n;
            let dr = &mut d[r * cols..(r + 1) * cols];
            for j in 0..cols {
                dr[j] += ir * (dyr[j] * gain[j] - xr[j] * ir * mean_uxhat);
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// tanh-form GELU.
#[inline]
pub fn gelu<S: Scalar>(x: S) -> S {
    let (c, a, half) = (S::lit(GELU_C), S::lit(GELU_A), S::lit(0.5));
    half * x * (S::one() + (c * (x + a * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let (c, a, half) = (S::lit(GELU_C), S::lit(GELU_A), S::lit(0.5));
    let t = (c * (x + a * x * x * x)).tanh();
    half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + S::lit(3.0) * a * x * x)
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

#[inline]
pub fn silu<S: Scalar>(x: S) -> S {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad<S: Scalar>(x: S) -> S {
    let s = sigmoid(x);
    s * (S::one() + x * (S::one() - s))
}

/// Max-subtracted softmax, in place.
pub fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Per-position rotation angles for rotary embeddings.
#[derive(Debug, Clone)]
pub struct RopeTable<S> {
    pub half: usize,
    pub cos: Vec<S>,
    pub sin: Vec<S>,
}

impl<S: Scalar> RopeTable<S> {
    /// Pair `i` at position `p` turns by `p * theta^(-2i/head_dim)`.
    pub fn new(positions: &[usize], head_dim: usize, theta: f64) -> Self {
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(positions.len() * half);
        let mut sin = Vec::with_capacity(positions.len() * half);
        for &p in positions {
            for i in 0..half {
                let freq = theta.powf(-2.0 * i as f64 / head_dim as f64);
                let angle = p as f64 * freq;
                cos.push(S::lit(angle.cos()));
                sin.push(S::lit(angle.sin()));
            }
        }
        RopeTable { half, cos, sin }
    }

    /// Rotates `x: [seq, heads * head_dim]` in place; `inverse` turns the other way.
    pub fn rotate(&self, x: &mut [S], heads: usize, inverse: bool) {
        let hd = self.half * 2;
        let seq = x.len() / (heads * hd);
        for s in 0..seq {
            let cs = &self.cos[s * self.half..(s + 1) * self.half];
            let sn = &self.sin[s * self.half..(s + 1) * self.half];
            for h in 0..heads {
                let base = (s * heads + h) * hd;
                for i in 0..self.half {
                    let (c, mut si) = (cs[i], sn[i]);
                    if inverse {
                        si = -si;
                    }
                    let (a, b) = (x[base + 2 * i], x[base + 2 * i + 1]);
                    x[base + 2 * i] = a * c - b * si;
                    x[base + 2 * i + 1] = a * si + b * c;
                }
            }
        }
    }
}

/// Shapes for multi-head scaled dot-product attention. Queries are the last
/// `lq` of `lk` positions when `causal` is set.
#[derive(Debug, Clone, Copy)]
pub struct AttnGeom {
    pub lq: usize,
    pub lk: usize,
    pub dim: usize,
    pub heads: usize,
    pub causal: bool,
}

impl AttnGeom {
    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Number of visible keys for query `i`.
    #[inline]
    fn visible(&self, i: usize) -> usize {
        if self.causal {
            (i + 1 + self.lk - self.lq).min(self.lk)
        } else {
            self.lk
        }
    }
}

/// Returns the attended output `[lq, dim]` and probabilities `[heads, lq, lk]`.
pub fn attention_forward<S: Scalar>(q: &[S], k: &[S], v: &[S], g: AttnGeom) -> (Vec<S>, Vec<S>) {
    let hd = g.head_dim();
    let scale = S::lit(1.0 / (hd as f64).sqrt());
    let mut out = vec![S::zero(); g.lq * g.dim];
    let mut probs = vec![S::zero(); g.heads * g.lq * g.lk];
    for h in 0..g.heads {
        let off = h * hd;
        for i in 0..g.lq {
            let qi = &q[i * g.dim + off..i * g.dim + off + hd];
            let vis = g.visible(i);
            let prow = &mut probs[(h * g.lq + i) * g.lk..][..vis];
            for (j, p) in prow.iter_mut().enumerate() {
                *p = dot(qi, &k[j * g.dim + off..j * g.dim + off + hd]) * scale;
            }
            softmax_in_place(prow);
            let orow = &mut out[i * g.dim + off..i * g.dim + off + hd];
            for (j, &p) in prow.iter().enumerate() {
                axpy(p, &v[j * g.dim + off..j * g.dim + off + hd], orow);
            }
        }
    }
    (out, probs)
}

#[allow(clippy::too_many_arguments)]
pub fn attention_backward<S: Scalar>(
    q: &[S],
    k: &[S],
    v: &[S],
    probs: &[S],
    dout: &[S],
    g: AttnGeom,
    dq: &mut [S],
    dk: &mut [S],
    dv: &mut [S],
) {
    let hd = g.head_dim();
    let scale = S::lit(1.0 / (hd as f64).sqrt());
    let mut dp = vec![S::zero(); g.lk];
    for h in 0..g.heads {
        let off = h * hd;
        for i in 0..g.lq {
            let vis = g.visible(i);
            let prow = &probs[(h * g.lq + i) * g.lk..][..vis];
            let di = &dout[i * g.dim + off..i * g.dim + off + hd];
            let mut weighted = S::zero();
            for j in 0..vis {
                let vj = &v[j * g.dim + off..j * g.dim + off + hd];
                dp[j] = dot(di, vj);
                weighted += prow[j] * dp[j];
                axpy(prow[j], di, &mut dv[j * g.dim + off..j * g.dim + off + hd]);
            }
            let qi = &q[i * g.dim + off..i * g.dim + off + hd];
            for j in 0..vis {
                let ds = prow[j] * (dp[j] - weighted) * scale;
                if ds == S::zero() {
                    continue;
                }
                axpy(ds, &k[j * g.dim + off..j * g.dim + off + hd], &mut dq[i * g.dim + off..i * g.dim + off + hd]);
                axpy(ds, qi, &mut dk[j * g.dim + off..j * g.dim + off + hd]);
            }
        }
    }
}
