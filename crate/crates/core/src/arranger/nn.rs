//! Dense layers with hand-written backward passes.
//!
//! Parameters live in one [`Params`] store and layers hold indices into it,
//! so optimizers, checkpoints and gradient checks can treat the model as a
//! flat list of matrices. Activations are row-major `tokens × width`.

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Array2<f64>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    pub tensors: Vec<Mat>,
    pub names: Vec<String>,
}

impl Params {
    pub fn add(&mut self, name: impl Into<String>, tensor: Mat) -> usize {
        self.tensors.push(tensor);
        self.names.push(name.into());
        self.tensors.len() - 1
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.tensors.iter().map(|t| Mat::zeros(t.raw_dim())).collect()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Mat::len).sum()
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, limit: f64) -> Mat {
    Mat::from_shape_simple_fn((rows, cols), || rng.gen_range(-limit..limit))
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new(p: &mut Params, name: &str, din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (din + dout) as f64).sqrt();
        let w = p.add(format!("{name}.w"), uniform(rng, din, dout, limit));
        let b = p.add(format!("{name}.b"), Mat::zeros((1, dout)));
        Linear { w, b }
    }

    pub fn forward(&self, p: &[Mat], x: &Mat) -> Mat {
        x.dot(&p[self.w]) + &p[self.b]
    }

    pub fn backward(&self, p: &[Mat], g: &mut [Mat], x: &Mat, dy: &Mat) -> Mat {
        g[self.w] += &x.t().dot(dy);
        g[self.b] += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&p[self.w].t())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: usize,
    pub bias: usize,
}

pub struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(p: &mut Params, name: &str, d: usize) -> Self {
        let gain = p.add(format!("{name}.gain"), Mat::ones((1, d)));
        let bias = p.add(format!("{name}.bias"), Mat::zeros((1, d)));
        LayerNorm { gain, bias }
    }

    pub fn forward(&self, p: &[Mat], x: &Mat) -> (Mat, LnCache) {
        let d = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in xhat.rows_mut() {
            let mu = row.sum() / d;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mu) * is);
            inv_std.push(is);
        }
        let y = &xhat * &p[self.gain] + &p[self.bias];
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, p: &[Mat], g: &mut [Mat], c: &LnCache, dy: &Mat) -> Mat {
        g[self.gain] += &(dy * &c.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        g[self.bias] += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = dy * &p[self.gain];
        let d = dy.ncols() as f64;
        let mut dx = Mat::zeros(dy.raw_dim());
        for r in 0..dy.nrows() {
            let dh = dxhat.row(r);
            let xh = c.xhat.row(r);
            let m1 = dh.sum() / d;
            let m2 = dh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
            for k in 0..dy.ncols() {
                dx[[r, k]] = c.inv_std[r] * (dh[k] - m1 - xh[k] * m2);
            }
        }
        dx
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

pub struct AttnCache {
    q_in: Mat,
    kv_in: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Attention weights per head, `queries × keys`.
    pub weights: Vec<Mat>,
    concat: Mat,
}

impl Attention {
    pub fn new(p: &mut Params, name: &str, d: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(d.is_multiple_of(heads), "width {d} is not divisible by {heads} heads");
        Attention {
            q: Linear::new(p, &format!("{name}.q"), d, d, rng),
            k: Linear::new(p, &format!("{name}.k"), d, d, rng),
            v: Linear::new(p, &format!("{name}.v"), d, d, rng),
            o: Linear::new(p, &format!("{name}.o"), d, d, rng),
            heads,
        }
    }

    /// Multi-head attention from `q_in` onto `kv_in`; with `causal`, query
    /// `i` only sees keys `0..=i`.
    pub fn forward(&self, p: &[Mat], q_in: &Mat, kv_in: &Mat, causal: bool) -> (Mat, AttnCache) {
        let q = self.q.forward(p, q_in);
        let k = self.k.forward(p, kv_in);
        let v = self.v.forward(p, kv_in);
        let d = q.ncols();
        let dk = d / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut concat = Mat::zeros((q.nrows(), d));
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
                if causal {
                    row.slice_mut(s![i + 1..]).fill(f64::NEG_INFINITY);
                }
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|x| (x - m).exp());
                let z = row.sum();
                row.mapv_inplace(|x| x / z);
            }
            concat.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            weights.push(scores);
        }
        let out = self.o.forward(p, &concat);
        let cache = AttnCache { q_in: q_in.clone(), kv_in: kv_in.clone(), q, k, v, weights, concat };
        (out, cache)
    }

    /// Returns gradients with respect to `q_in` and `kv_in`.
    pub fn backward(&self, p: &[Mat], g: &mut [Mat], c: &AttnCache, dy: &Mat) -> (Mat, Mat) {
        let dconcat = self.o.backward(p, g, &c.concat, dy);
        let d = c.q.ncols();
        let dk = d / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut dq = Mat::zeros(c.q.raw_dim());
        let mut dkm = Mat::zeros(c.k.raw_dim());
        let mut dv = Mat::zeros(c.v.raw_dim());
        for h in 0..self.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let a = &c.weights[h];
            let doh = dconcat.slice(cols);
            dv.slice_mut(cols).assign(&a.t().dot(&doh));
            let da = doh.dot(&c.v.slice(cols).t());
            let mut ds = Mat::zeros(a.raw_dim());
            for i in 0..a.nrows() {
                let dot: f64 = a.row(i).iter().zip(da.row(i).iter()).map(|(x, y)| x * y).sum();
                for j in 0..a.ncols() {
                    ds[[i, j]] = a[[i, j]] * (da[[i, j]] - dot) * scale;
                }
            }
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dkm.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let dq_in = self.q.backward(p, g, &c.q_in, &dq);
        let dkv_in = self.k.backward(p, g, &c.kv_in, &dkm) + self.v.backward(p, g, &c.kv_in, &dv);
        (dq_in, dkv_in)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

pub struct FfnCache {
    x: Mat,
    h: Mat,
}

impl FeedForward {
    pub fn new(p: &mut Params, name: &str, d: usize, ff: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            inner: Linear::new(p, &format!("{name}.inner"), d, ff, rng),
            outer: Linear::new(p, &format!("{name}.outer"), ff, d, rng),
        }
    }

    pub fn forward(&self, p: &[Mat], x: &Mat) -> (Mat, FfnCache) {
        let h = self.inner.forward(p, x).mapv(|v| v.max(0.0));
        let y = self.outer.forward(p, &h);
        (y, FfnCache { x: x.clone(), h })
    }

    pub fn backward(&self, p: &[Mat], g: &mut [Mat], c: &FfnCache, dy: &Mat) -> Mat {
        let mut dh = self.outer.backward(p, g, &c.h, dy);
        dh.zip_mut_with(&c.h, |d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });
        self.inner.backward(p, g, &c.x, &dh)
    }
}

/// Inverted dropout. Returns the scaled mask, or `None` when inactive.
pub fn dropout(x: &mut Mat, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Mat> {
    let rng = rng.filter(|_| rate > 0.0)?;
    let keep = 1.0 - rate;
    let mask = Mat::from_shape_simple_fn(x.raw_dim(), || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
    *x *= &mask;
    Some(mask)
}

pub fn dropout_backward(dy: Mat, mask: &Option<Mat>) -> Mat {
    match mask {
        Some(m) => dy * m,
        None => dy,
    }
}

/// Softmax cross-entropy of one logit row; returns (loss, dlogits).
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let lz = m + z.ln();
    let grad = logits
        .iter()
        .enumerate()
        .map(|(i, l)| (l - lz).exp() - if i == target { 1.0 } else { 0.0 })
        .collect();
    (lz - logits[target], grad)
}
