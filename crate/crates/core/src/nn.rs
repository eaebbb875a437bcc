//! Small feed-forward toolkit with explicit backpropagation.
//!
//! Everything here is f64 and single-threaded by construction so training is
//! bit-deterministic given a seed. Parameters live in one flat buffer
//! ([`ParamSet`]) addressed by named segments, which keeps the optimizer,
//! checkpointing and finite-difference checks trivial.
//!
//! The convolution layers in this codebase all have stride equal to kernel
//! size, i.e. they reduce disjoint patches. That turns convolution into
//! "gather patches, multiply" and transposed convolution into "multiply,
//! scatter patches", with [`gather_patches`] and [`scatter_patches`] exact
//! inverses of each other.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to one named parameter array inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

/// Flat storage for all trainable parameters of one model, plus a matching
/// gradient buffer.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    values: Vec<f64>,
    grads: Vec<f64>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    /// Registers a zero-initialized array. Names must be unique.
    pub fn add(&mut self, name: &str, shape: &[usize]) -> ParamId {
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        let len: usize = shape.iter().product();
        let offset = self.values.len();
        self.values.resize(offset + len, 0.0);
        self.grads.resize(offset + len, 0.0);
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
            len,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn total_len(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        let e = &self.entries[id.0];
        &self.values[e.offset..e.offset + e.len]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        let e = &self.entries[id.0];
        &mut self.values[e.offset..e.offset + e.len]
    }

    /// 2-D view of a parameter registered with a rank-2 shape.
    pub fn mat(&self, id: ParamId) -> ArrayView2<'_, f64> {
        let e = &self.entries[id.0];
        assert_eq!(e.shape.len(), 2, "parameter {} is not a matrix", e.name);
        ArrayView2::from_shape((e.shape[0], e.shape[1]), self.value(id)).unwrap()
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        let e = &self.entries[id.0];
        &self.grads[e.offset..e.offset + e.len]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        let e = &self.entries[id.0];
        &mut self.grads[e.offset..e.offset + e.len]
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    /// Split borrow for the optimizer step: mutable values, shared grads.
    pub fn values_and_grads_mut(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.values, &self.grads)
    }

    /// Iterates `(name, shape, values)` for serialization.
    pub fn named_arrays(&self) -> impl Iterator<Item = (&str, &[usize], &[f64])> {
        self.entries.iter().map(|e| {
            (
                e.name.as_str(),
                e.shape.as_slice(),
                &self.values[e.offset..e.offset + e.len],
            )
        })
    }

    /// Looks a parameter up by name, for loading checkpoints.
    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    /// Overwrites one named array from checkpoint data, validating shape.
    pub fn load_named(
        &mut self,
        name: &str,
        shape: &[usize],
        values: &[f64],
    ) -> Result<(), String> {
        let id = self
            .id_by_name(name)
            .ok_or_else(|| format!("model has no parameter named {name:?}"))?;
        if self.shape(id) != shape {
            return Err(format!(
                "parameter {name:?} has shape {:?}, checkpoint carries {shape:?}",
                self.shape(id)
            ));
        }
        let slot = self.value_mut(id);
        if slot.len() != values.len() {
            return Err(format!(
                "parameter {name:?} has {} values, checkpoint carries {}",
                slot.len(),
                values.len()
            ));
        }
        slot.copy_from_slice(values);
        Ok(())
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// He-style uniform init, `U(-sqrt(6/fan_in), +sqrt(6/fan_in))`, for layers
/// followed by a rectifier.
pub fn init_he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, out: &mut [f64]) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in out.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

/// Glorot uniform init for linear output heads.
pub fn init_xavier_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

/// `n` standard-normal draws (Box-Muller free: uses rand_distr).
pub fn standard_normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}

// ---------------------------------------------------------------------------
// Patch gather/scatter (stride == kernel convolutions)
// ---------------------------------------------------------------------------

/// Geometry of one non-overlapping patch reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kh: usize,
    pub kw: usize,
}

impl PatchGrid {
    pub fn patches_h(&self) -> usize {
        self.h / self.kh
    }

    pub fn patches_w(&self) -> usize {
        self.w / self.kw
    }

    pub fn patches(&self) -> usize {
        self.patches_h() * self.patches_w()
    }

    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.c
    }

    pub fn sample_len(&self) -> usize {
        self.h * self.w * self.c
    }
}

/// Rearranges a batch of row-major `(h, w, c)` samples, given as rows of
/// `x: (B, h*w*c)`, into patch rows `(B * patches, kh*kw*c)`. Patch rows are
/// ordered `(sample, patch_row, patch_col)`; columns `(dy, dx, channel)`.
pub fn gather_patches(x: ArrayView2<'_, f64>, g: PatchGrid) -> Array2<f64> {
    let b = x.nrows();
    assert_eq!(x.ncols(), g.sample_len());
    assert!(g.h % g.kh == 0 && g.w % g.kw == 0, "kernel must tile the input");
    let mut out = Array2::zeros((b * g.patches(), g.patch_len()));
    let xs = x.as_slice().expect("input must be standard layout");
    let os = out.as_slice_mut().unwrap();
    let row_len = g.w * g.c;
    let seg = g.kw * g.c;
    for s in 0..b {
        let x_base = s * g.sample_len();
        for ph in 0..g.patches_h() {
            for pw in 0..g.patches_w() {
                let o_base = ((s * g.patches_h() + ph) * g.patches_w() + pw) * g.patch_len();
                for dy in 0..g.kh {
                    let src = x_base + (ph * g.kh + dy) * row_len + pw * seg;
                    let dst = o_base + dy * seg;
                    os[dst..dst + seg].copy_from_slice(&xs[src..src + seg]);
                }
            }
        }
    }
    out
}

/// Exact inverse of [`gather_patches`]: scatters patch rows back into sample
/// rows. Because patches are disjoint this is a pure permutation.
pub fn scatter_patches(cols: ArrayView2<'_, f64>, b: usize, g: PatchGrid) -> Array2<f64> {
    assert_eq!(cols.nrows(), b * g.patches());
    assert_eq!(cols.ncols(), g.patch_len());
    let mut out = Array2::zeros((b, g.sample_len()));
    let cs = cols.as_slice().expect("input must be standard layout");
    let os = out.as_slice_mut().unwrap();
    let row_len = g.w * g.c;
    let seg = g.kw * g.c;
    for s in 0..b {
        let x_base = s * g.sample_len();
        for ph in 0..g.patches_h() {
            for pw in 0..g.patches_w() {
                let c_base = ((s * g.patches_h() + ph) * g.patches_w() + pw) * g.patch_len();
                for dy in 0..g.kh {
                    let dst = x_base + (ph * g.kh + dy) * row_len + pw * seg;
                    let src = c_base + dy * seg;
                    os[dst..dst + seg].copy_from_slice(&cs[src..src + seg]);
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

/// Fully connected layer `y = x W + b` with `W: (in, out)`, `b: (out,)`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    /// Registers parameters under `<name>/w` and `<name>/b`.
    pub fn new(ps: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize) -> Dense {
        let w = ps.add(&format!("{name}/w"), &[in_dim, out_dim]);
        let b = ps.add(&format!("{name}/b"), &[out_dim]);
        Dense {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn init_he(&self, ps: &mut ParamSet, rng: &mut ChaCha8Rng) {
        let fan_in = self.in_dim;
        init_he_uniform(rng, fan_in, ps.value_mut(self.w));
    }

    pub fn init_xavier(&self, ps: &mut ParamSet, rng: &mut ChaCha8Rng) {
        let (fan_in, fan_out) = (self.in_dim, self.out_dim);
        init_xavier_uniform(rng, fan_in, fan_out, ps.value_mut(self.w));
    }

    pub fn forward(&self, ps: &ParamSet, x: ArrayView2<'_, f64>) -> Array2<f64> {
        debug_assert_eq!(x.ncols(), self.in_dim);
        let mut y = x.dot(&ps.mat(self.w));
        let b = ps.value(self.b);
        for mut row in y.rows_mut() {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    /// `x` must be the forward input that produced `dy`.
    pub fn backward(
        &self,
        ps: &mut ParamSet,
        x: ArrayView2<'_, f64>,
        dy: ArrayView2<'_, f64>,
    ) -> Array2<f64> {
        let dx = dy.dot(&ps.mat(self.w).t());
        let dw = x.t().dot(&dy);
        {
            let gw = ps.grad_mut(self.w);
            for (g, d) in gw.iter_mut().zip(dw.iter()) {
                *g += d;
            }
        }
        {
            let gb = ps.grad_mut(self.b);
            for row in dy.rows() {
                for (g, d) in gb.iter_mut().zip(row.iter()) {
                    *g += d;
                }
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient through ReLU given the forward *output* (y > 0 iff x > 0).
pub fn relu_backward(dy: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &yv| {
        if yv <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// Numerically stable softplus `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, the softplus derivative.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Adam with the standard defaults (beta1 0.9, beta2 0.999, eps 1e-8) and
/// bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, n_params: usize) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, values: &mut [f64], grads: &[f64]) {
        assert_eq!(values.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..values.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            values[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Deterministic Fisher-Yates permutation of `0..n`.
pub fn shuffled_indices(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
