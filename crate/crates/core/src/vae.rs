//! Convolutional variational autoencoder over CSI spectrogram windows.
//!
//! The encoder is a stack of stride-equals-kernel convolutions (disjoint
//! patch reductions), a dense layer, and two linear heads producing the mean
//! and log-variance of a diagonal-Gaussian posterior over the latent
//! variables. The decoder mirrors it: dense back to the flattened feature
//! map, then transposed convolutions up to the input shape, last layer
//! linear. The prior is the centred isotropic Gaussian, so the KL term of
//! the ELBO is closed-form and only the reconstruction term is estimated by
//! sampling (`z = mu + sigma .* eps`).
//!
//! Everything trains in f64 on a single logical thread; given a seed, runs
//! are bit-reproducible.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{window_to_f64, CsiWindow};
use crate::nn::{
    gather_patches, relu, relu_backward, scatter_patches, shuffled_indices, standard_normal_vec,
    Adam, Dense, ParamSet, PatchGrid,
};

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("invalid VAE configuration: {0}")]
    Config(String),
    #[error("window shape {got:?} does not match the model input {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("latent vector has length {got}, expected {expected}")]
    LatentLength { expected: usize, got: usize },
    #[error("epsilon draw has length {got}, expected {expected}")]
    EpsilonLength { expected: usize, got: usize },
    #[error("at least one Monte-Carlo sample is required")]
    NoSamples,
    #[error("non-finite {0} encountered; model or input is numerically broken")]
    NonFinite(&'static str),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("latent code is invalid: {0}")]
    InvalidCode(String),
}

/// One convolution stage: kernel, stride and output filter count. All
/// layers in this model use stride equal to kernel size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub filters: usize,
}

impl ConvSpec {
    pub const fn new(kernel: (usize, usize), stride: (usize, usize), filters: usize) -> ConvSpec {
        ConvSpec {
            kernel,
            stride,
            filters,
        }
    }
}

/// Hyperparameters of one VAE.
///
/// `latent_dim` counts the latent-space *parameters* (means plus standard
/// deviations), so there are `latent_dim / 2` Gaussian variables: 4 for the
/// single-antenna and stacked models, 6 for the tri-variate stacked model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    /// `(frames, subcarriers, channels)` of the input window.
    pub input_shape: (usize, usize, usize),
    pub latent_dim: usize,
    pub conv_spec: Vec<ConvSpec>,
    pub dense_width: usize,
    /// Monte-Carlo samples per window for the reconstruction term.
    pub mc_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Variance of the isotropic Gaussian observation model; scales the
    /// squared reconstruction error by `1 / (2 * obs_variance)`.
    pub obs_variance: f64,
    pub seed: u64,
}

impl VaeConfig {
    /// Full-fidelity configuration: 450x2048 inputs reduced by
    /// (5,8)x32, (5,8)x32, (2,4)x32 to a 9x8x32 map (flatten 2304).
    pub fn paper_default(channels: usize) -> VaeConfig {
        VaeConfig {
            input_shape: (450, 2048, channels),
            latent_dim: 4,
            conv_spec: vec![
                ConvSpec::new((5, 8), (5, 8), 32),
                ConvSpec::new((5, 8), (5, 8), 32),
                ConvSpec::new((2, 4), (2, 4), 32),
            ],
            dense_width: 16,
            mc_samples: 1,
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            obs_variance: 1.0,
            seed: 0,
        }
    }

    /// Reduced-resolution configuration for fast runs: 40x64 inputs reduced
    /// by (5,8)x32, (4,4)x32, (2,2)x32 to a 1x1x32 map.
    pub fn desk_default(channels: usize) -> VaeConfig {
        VaeConfig {
            input_shape: (40, 64, channels),
            latent_dim: 4,
            conv_spec: vec![
                ConvSpec::new((5, 8), (5, 8), 32),
                ConvSpec::new((4, 4), (4, 4), 32),
                ConvSpec::new((2, 2), (2, 2), 32),
            ],
            dense_width: 16,
            mc_samples: 1,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            obs_variance: 1.0,
            seed: 0,
        }
    }

    /// Number of latent Gaussian variables (`latent_dim / 2`).
    pub fn latent_vars(&self) -> usize {
        self.latent_dim / 2
    }

    /// Checks the configuration and resolves the layer geometry.
    pub fn validate(&self) -> Result<ShapePlan, VaeError> {
        let (h0, w0, c0) = self.input_shape;
        if h0 == 0 || w0 == 0 || c0 == 0 {
            return Err(VaeError::Config("input dimensions must be >= 1".into()));
        }
        if self.latent_dim < 2 || self.latent_dim % 2 != 0 {
            return Err(VaeError::Config(format!(
                "latent_dim must be even and >= 2 (it counts mu and sigma), got {}",
                self.latent_dim
            )));
        }
        if self.conv_spec.is_empty() {
            return Err(VaeError::Config(
                "at least one convolution is required".into(),
            ));
        }
        if self.dense_width == 0 || self.mc_samples == 0 || self.epochs == 0 || self.batch_size == 0
        {
            return Err(VaeError::Config(
                "dense_width, mc_samples, epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.obs_variance > 0.0) {
            return Err(VaeError::Config(
                "learning_rate and obs_variance must be positive".into(),
            ));
        }
        let mut stages = vec![(h0, w0)];
        let (mut h, mut w) = (h0, w0);
        for (i, conv) in self.conv_spec.iter().enumerate() {
            if conv.kernel != conv.stride {
                return Err(VaeError::Config(format!(
                    "conv {i}: stride {:?} must equal kernel {:?} (non-overlapping patch reduction)",
                    conv.stride, conv.kernel
                )));
            }
            let (kh, kw) = conv.kernel;
            if kh == 0 || kw == 0 || conv.filters == 0 {
                return Err(VaeError::Config(format!(
                    "conv {i}: zero-sized kernel or filters"
                )));
            }
            if h % kh != 0 || w % kw != 0 {
                return Err(VaeError::Config(format!(
                    "conv {i}: stride ({kh},{kw}) does not divide the {h}x{w} input exactly"
                )));
            }
            h /= kh;
            w /= kw;
            stages.push((h, w));
        }
        let flatten_dim = h * w * self.conv_spec.last().unwrap().filters;
        Ok(ShapePlan {
            stages,
            flatten_dim,
        })
    }
}

/// Spatial sizes after each convolution plus the flattened feature length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapePlan {
    /// `(h, w)` per stage; `stages[0]` is the input, `stages.last()` the
    /// final feature map.
    pub stages: Vec<(usize, usize)>,
    pub flatten_dim: usize,
}

/// Diagonal-Gaussian posterior parameters produced by the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl LatentCode {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<LatentCode, VaeError> {
        if mu.len() != sigma.len() {
            return Err(VaeError::InvalidCode(format!(
                "mu has {} entries, sigma {}",
                mu.len(),
                sigma.len()
            )));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(VaeError::InvalidCode("non-finite mu entry".into()));
        }
        if sigma.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(VaeError::InvalidCode(
                "sigma entries must be finite and strictly positive".into(),
            ));
        }
        Ok(LatentCode { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Reparameterised draw `z = mu + sigma .* eps`.
pub fn sample_latent(code: &LatentCode, epsilon: &[f64]) -> Result<Vec<f64>, VaeError> {
    if epsilon.len() != code.dim() {
        return Err(VaeError::EpsilonLength {
            expected: code.dim(),
            got: epsilon.len(),
        });
    }
    Ok(code
        .mu
        .iter()
        .zip(&code.sigma)
        .zip(epsilon)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// KL divergence from the posterior `N(mu, diag sigma^2)` to the standard
/// normal prior: `-1/2 sum_j (1 + ln sigma_j^2 - mu_j^2 - sigma_j^2)`.
pub fn gaussian_kl(code: &LatentCode) -> f64 {
    let mut kl = 0.0;
    for (m, s) in code.mu.iter().zip(&code.sigma) {
        kl += -0.5 * (1.0 + (s * s).ln() - m * m - s * s);
    }
    kl.max(0.0)
}

// ---------------------------------------------------------------------------
// Network definition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct EncConv {
    grid: PatchGrid,
    dense: Dense,
}

#[derive(Debug, Clone)]
struct DecConv {
    dense: Dense,
    /// Output grid of the scatter: `(h_out, w_out, out_channels)` tiled by
    /// the kernel.
    grid: PatchGrid,
    /// Pixel count of the input feature map.
    in_pixels: usize,
    in_channels: usize,
    relu: bool,
}

#[derive(Debug, Clone)]
struct VaeNet {
    enc_convs: Vec<EncConv>,
    enc_dense: Dense,
    head_mu: Dense,
    head_logvar: Dense,
    dec_dense: Dense,
    dec_convs: Vec<DecConv>,
}

fn build_net(config: &VaeConfig, plan: &ShapePlan, ps: &mut ParamSet) -> VaeNet {
    let (_, _, c0) = config.input_shape;
    let mut enc_convs = Vec::new();
    let mut channels = c0;
    for (i, conv) in config.conv_spec.iter().enumerate() {
        let (h, w) = plan.stages[i];
        let grid = PatchGrid {
            h,
            w,
            c: channels,
            kh: conv.kernel.0,
            kw: conv.kernel.1,
        };
        let dense = Dense::new(ps, &format!("enc/conv{i}"), grid.patch_len(), conv.filters);
        enc_convs.push(EncConv { grid, dense });
        channels = conv.filters;
    }
    let latent = config.latent_vars();
    let enc_dense = Dense::new(ps, "enc/dense", plan.flatten_dim, config.dense_width);
    let head_mu = Dense::new(ps, "enc/mu", config.dense_width, latent);
    let head_logvar = Dense::new(ps, "enc/logvar", config.dense_width, latent);
    let dec_dense = Dense::new(ps, "dec/dense", latent, plan.flatten_dim);

    // Transposed convolutions mirror the encoder stack in reverse; the last
    // one lands on the input channel count and stays linear.
    let mut dec_convs = Vec::new();
    for (i, conv) in config.conv_spec.iter().enumerate().rev() {
        let (h_in, w_in) = plan.stages[i + 1];
        let (h_out, w_out) = plan.stages[i];
        let out_channels = if i == 0 {
            c0
        } else {
            config.conv_spec[i - 1].filters
        };
        let (kh, kw) = conv.kernel;
        let dense = Dense::new(
            ps,
            &format!("dec/convt{i}"),
            conv.filters,
            kh * kw * out_channels,
        );
        dec_convs.push(DecConv {
            dense,
            grid: PatchGrid {
                h: h_out,
                w: w_out,
                c: out_channels,
                kh,
                kw,
            },
            in_pixels: h_in * w_in,
            in_channels: conv.filters,
            relu: i != 0,
        });
    }
    VaeNet {
        enc_convs,
        enc_dense,
        head_mu,
        head_logvar,
        dec_dense,
        dec_convs,
    }
}

fn init_params(net: &VaeNet, ps: &mut ParamSet, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for conv in &net.enc_convs {
        conv.dense.init_he(ps, &mut rng);
    }
    net.enc_dense.init_he(ps, &mut rng);
    net.head_mu.init_xavier(ps, &mut rng);
    // the log-variance head stays at zero so sigma starts at 1
    net.dec_dense.init_he(ps, &mut rng);
    for conv in &net.dec_convs {
        conv.dense.init_he(ps, &mut rng);
    }
}

fn view_as(a: &Array2<f64>, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), a.as_slice().unwrap()).unwrap()
}

fn reshape_owned(a: Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    let (v, _) = a.into_raw_vec_and_offset();
    Array2::from_shape_vec((rows, cols), v).unwrap()
}

struct EncCache {
    /// Gathered patch matrices, the forward inputs of each conv dense.
    conv_cols: Vec<Array2<f64>>,
    /// Post-ReLU activation per conv, in `(B*patches, filters)` layout.
    conv_act: Vec<Array2<f64>>,
    dense_act: Array2<f64>,
    mu: Array2<f64>,
    sigma: Array2<f64>,
}

struct DecCache {
    dense_act: Array2<f64>,
    /// Forward input rows of each transposed conv, `(B*pixels, channels)`.
    conv_rows: Vec<Array2<f64>>,
    /// Pre-scatter activation per transposed conv.
    conv_act: Vec<Array2<f64>>,
    output: Array2<f64>,
}

fn forward_encoder(net: &VaeNet, plan: &ShapePlan, params: &ParamSet, x: &Array2<f64>) -> EncCache {
    let b = x.nrows();
    let mut conv_cols = Vec::with_capacity(net.enc_convs.len());
    let mut conv_act: Vec<Array2<f64>> = Vec::with_capacity(net.enc_convs.len());
    for (i, conv) in net.enc_convs.iter().enumerate() {
        let cols = if i == 0 {
            gather_patches(x.view(), conv.grid)
        } else {
            let prev = &conv_act[i - 1];
            gather_patches(view_as(prev, b, prev.len() / b), conv.grid)
        };
        let act = relu(&conv.dense.forward(params, cols.view()));
        conv_cols.push(cols);
        conv_act.push(act);
    }
    let last = conv_act.last().unwrap();
    let dense_act = relu(&net.enc_dense.forward(params, view_as(last, b, plan.flatten_dim)));
    let mu = net.head_mu.forward(params, dense_act.view());
    let logvar = net.head_logvar.forward(params, dense_act.view());
    let sigma = logvar.mapv(|v| (0.5 * v).exp());
    EncCache {
        conv_cols,
        conv_act,
        dense_act,
        mu,
        sigma,
    }
}

/// Backpropagates `(d_mu, d_logvar)` through the encoder, accumulating
/// parameter gradients. The gradient w.r.t. the input window is discarded.
fn backward_encoder(
    net: &VaeNet,
    plan: &ShapePlan,
    params: &mut ParamSet,
    cache: &EncCache,
    d_mu: &Array2<f64>,
    d_logvar: &Array2<f64>,
) {
    let b = d_mu.nrows();
    let mut d_dense = net
        .head_mu
        .backward(params, cache.dense_act.view(), d_mu.view());
    d_dense += &net
        .head_logvar
        .backward(params, cache.dense_act.view(), d_logvar.view());
    let d_dense_pre = relu_backward(&d_dense, &cache.dense_act);
    let last = cache.conv_act.last().unwrap();
    let d_flat = net.enc_dense.backward(
        params,
        view_as(last, b, plan.flatten_dim),
        d_dense_pre.view(),
    );
    let mut d_act = reshape_owned(d_flat, last.nrows(), last.ncols());
    for (i, conv) in net.enc_convs.iter().enumerate().rev() {
        let d_pre = relu_backward(&d_act, &cache.conv_act[i]);
        let d_cols = conv
            .dense
            .backward(params, cache.conv_cols[i].view(), d_pre.view());
        if i == 0 {
            break;
        }
        let d_prev = scatter_patches(d_cols.view(), b, conv.grid);
        let prev = &cache.conv_act[i - 1];
        d_act = reshape_owned(d_prev, prev.nrows(), prev.ncols());
    }
}

fn forward_decoder(net: &VaeNet, _plan: &ShapePlan, params: &ParamSet, z: &Array2<f64>) -> DecCache {
    let b = z.nrows();
    let dense_act = relu(&net.dec_dense.forward(params, z.view()));
    let mut conv_rows = Vec::with_capacity(net.dec_convs.len());
    let mut conv_act: Vec<Array2<f64>> = Vec::with_capacity(net.dec_convs.len());
    let mut current: Option<Array2<f64>> = None;
    for (i, conv) in net.dec_convs.iter().enumerate() {
        let source = if i == 0 {
            dense_act.clone()
        } else {
            current.take().unwrap()
        };
        let rows = reshape_owned(source, b * conv.in_pixels, conv.in_channels);
        let pre = conv.dense.forward(params, rows.view());
        let act = if conv.relu { relu(&pre) } else { pre };
        let out = scatter_patches(act.view(), b, conv.grid);
        conv_rows.push(rows);
        conv_act.push(act);
        current = Some(out);
    }
    DecCache {
        dense_act,
        conv_rows,
        conv_act,
        output: current.unwrap(),
    }
}

/// Backpropagates the output gradient through the decoder; accumulates
/// parameter gradients and returns the gradient with respect to `z`.
fn backward_decoder(
    net: &VaeNet,
    plan: &ShapePlan,
    params: &mut ParamSet,
    cache: &DecCache,
    z: &Array2<f64>,
    d_out: &Array2<f64>,
) -> Array2<f64> {
    let b = d_out.nrows();
    let mut d_scatter = d_out.clone();
    let mut d_first_rows: Option<Array2<f64>> = None;
    for (i, conv) in net.dec_convs.iter().enumerate().rev() {
        let d_act = {
            let g = gather_patches(d_scatter.view(), conv.grid);
            if conv.relu {
                relu_backward(&g, &cache.conv_act[i])
            } else {
                g
            }
        };
        let d_rows = conv
            .dense
            .backward(params, cache.conv_rows[i].view(), d_act.view());
        if i == 0 {
            d_first_rows = Some(d_rows);
        } else {
            d_scatter = reshape_owned(d_rows, b, conv.in_pixels * conv.in_channels);
        }
    }
    let d_dense = reshape_owned(d_first_rows.unwrap(), b, plan.flatten_dim);
    let d_dense_pre = relu_backward(&d_dense, &cache.dense_act);
    net.dec_dense.backward(params, z.view(), d_dense_pre.view())
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// A (possibly trained) VAE: configuration, parameters and the
/// normalization constant its training data was scaled with.
#[derive(Debug, Clone)]
pub struct VaeModel {
    config: VaeConfig,
    plan: ShapePlan,
    net: VaeNet,
    params: ParamSet,
    norm_constant: f64,
    loss_trace: Vec<f64>,
}

impl VaeModel {
    /// Builds an untrained model with seeded initialization.
    pub fn new(config: VaeConfig, norm_constant: f64) -> Result<VaeModel, VaeError> {
        let plan = config.validate()?;
        let mut params = ParamSet::new();
        let net = build_net(&config, &plan, &mut params);
        init_params(&net, &mut params, config.seed);
        Ok(VaeModel {
            config,
            plan,
            net,
            params,
            norm_constant,
            loss_trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn shape_plan(&self) -> &ShapePlan {
        &self.plan
    }

    pub fn norm_constant(&self) -> f64 {
        self.norm_constant
    }

    /// Mean training loss per epoch, filled in by [`train_vae`].
    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    /// Flat view of every parameter; layout is fixed by construction order.
    pub fn parameter_vector(&self) -> &[f64] {
        self.params.values()
    }

    /// Mutable flat parameter access, for checkpoint loading and
    /// finite-difference checks.
    pub fn parameter_vector_mut(&mut self) -> &mut [f64] {
        self.params.values_mut()
    }

    /// `(name, shape, values)` triples for serialization.
    pub fn named_parameters(&self) -> impl Iterator<Item = (&str, &[usize], &[f64])> {
        self.params.named_arrays()
    }

    /// Overwrites one named parameter array, for checkpoint loading.
    pub fn load_named_parameter(
        &mut self,
        name: &str,
        shape: &[usize],
        values: &[f64],
    ) -> Result<(), VaeError> {
        self.params
            .load_named(name, shape, values)
            .map_err(VaeError::Config)
    }

    pub(crate) fn set_loss_trace(&mut self, trace: Vec<f64>) {
        self.loss_trace = trace;
    }

    fn check_window(&self, window: &CsiWindow) -> Result<(), VaeError> {
        if window.shape() != self.config.input_shape {
            return Err(VaeError::ShapeMismatch {
                expected: self.config.input_shape,
                got: window.shape(),
            });
        }
        Ok(())
    }
}

fn windows_to_matrix(
    windows: &[CsiWindow],
    expected: (usize, usize, usize),
) -> Result<Array2<f64>, VaeError> {
    let len = expected.0 * expected.1 * expected.2;
    let mut data = Vec::with_capacity(windows.len() * len);
    for w in windows {
        if w.shape() != expected {
            return Err(VaeError::ShapeMismatch {
                expected,
                got: w.shape(),
            });
        }
        data.extend(window_to_f64(w));
    }
    Ok(Array2::from_shape_vec((windows.len(), len), data).unwrap())
}

/// Deterministic encoding of one window into its posterior parameters.
pub fn encode(model: &VaeModel, window: &CsiWindow) -> Result<LatentCode, VaeError> {
    model.check_window(window)?;
    let x = windows_to_matrix(std::slice::from_ref(window), model.config.input_shape)?;
    let cache = forward_encoder(&model.net, &model.plan, &model.params, &x);
    let mu: Vec<f64> = cache.mu.row(0).to_vec();
    let sigma: Vec<f64> = cache.sigma.row(0).to_vec();
    if mu.iter().chain(&sigma).any(|v| !v.is_finite()) {
        return Err(VaeError::NonFinite("encoder output"));
    }
    LatentCode::new(mu, sigma)
}

/// Decodes a latent vector back to a window-shaped array (the mean of the
/// Gaussian observation model; values are unconstrained reals).
pub fn decode(model: &VaeModel, z: &[f64]) -> Result<Array3<f64>, VaeError> {
    let latent = model.config.latent_vars();
    if z.len() != latent {
        return Err(VaeError::LatentLength {
            expected: latent,
            got: z.len(),
        });
    }
    let zmat = Array2::from_shape_vec((1, latent), z.to_vec()).unwrap();
    let cache = forward_decoder(&model.net, &model.plan, &model.params, &zmat);
    let (h, w, c) = model.config.input_shape;
    let (flat, _) = cache.output.into_raw_vec_and_offset();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(VaeError::NonFinite("decoder output"));
    }
    Ok(Array3::from_shape_vec((h, w, c), flat).unwrap())
}

/// Negated ELBO for one window under explicit epsilon draws:
/// `gaussian_kl(encode(x)) + mean_l SSE(decode(z_l), x) / (2 obs_variance)`.
pub fn elbo_loss(
    model: &VaeModel,
    window: &CsiWindow,
    epsilon_draws: &[Vec<f64>],
) -> Result<f64, VaeError> {
    if epsilon_draws.is_empty() {
        return Err(VaeError::NoSamples);
    }
    let code = encode(model, window)?;
    let kl = gaussian_kl(&code);
    let x = window_to_f64(window);
    let scale = 1.0 / (2.0 * model.config.obs_variance);
    let mut recon = 0.0;
    for eps in epsilon_draws {
        let z = sample_latent(&code, eps)?;
        let xhat = decode(model, &z)?;
        let sse: f64 = xhat
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        recon += scale * sse;
    }
    let loss = kl + recon / epsilon_draws.len() as f64;
    if !loss.is_finite() {
        return Err(VaeError::NonFinite("elbo loss"));
    }
    Ok(loss)
}

/// Forward + backward pass over a batch; accumulates parameter gradients of
/// the mean per-window loss and returns that loss. `eps` holds one
/// `(B, latent)` matrix per Monte-Carlo sample.
fn elbo_batch_grad(
    net: &VaeNet,
    plan: &ShapePlan,
    params: &mut ParamSet,
    config: &VaeConfig,
    x: &Array2<f64>,
    eps: &[Array2<f64>],
) -> f64 {
    let b = x.nrows();
    let l = eps.len();
    let inv_b = 1.0 / b as f64;
    let enc = forward_encoder(net, plan, params, x);

    // closed-form KL term and its gradients
    let mut kl_total = 0.0;
    for (m, s) in enc.mu.iter().zip(enc.sigma.iter()) {
        kl_total += -0.5 * (1.0 + (s * s).ln() - m * m - s * s);
    }
    let mut d_mu = enc.mu.mapv(|m| m * inv_b);
    let mut d_sigma = enc.sigma.mapv(|s| (s - 1.0 / s) * inv_b);

    // sampled reconstruction term
    let scale = 1.0 / (2.0 * config.obs_variance);
    let d_out_scale = inv_b / (config.obs_variance * l as f64);
    let mut recon_total = 0.0;
    for eps_l in eps {
        let z = &enc.mu + &(&enc.sigma * eps_l);
        let dec = forward_decoder(net, plan, params, &z);
        let diff = &dec.output - x;
        recon_total += scale * diff.iter().map(|d| d * d).sum::<f64>() / l as f64;
        let d_out = diff.mapv(|d| d * d_out_scale);
        let dz = backward_decoder(net, plan, params, &dec, &z, &d_out);
        d_mu += &dz;
        d_sigma += &(&dz * eps_l);
    }

    // sigma = exp(logvar / 2)  =>  d_logvar = d_sigma * sigma / 2
    let d_logvar = &d_sigma * &enc.sigma.mapv(|s| 0.5 * s);
    backward_encoder(net, plan, params, &enc, &d_mu, &d_logvar);

    (kl_total + recon_total) * inv_b
}

/// Trains a VAE on normalized windows by seeded minibatch Adam on the mean
/// negated ELBO. Returns the model with its per-epoch loss trace attached.
pub fn train_vae(
    windows: &[CsiWindow],
    config: &VaeConfig,
    norm_constant: f64,
) -> Result<VaeModel, VaeError> {
    if windows.is_empty() {
        return Err(VaeError::EmptyTrainingSet);
    }
    let mut model = VaeModel::new(config.clone(), norm_constant)?;
    let x_all = windows_to_matrix(windows, config.input_shape)?;
    let n = x_all.nrows();
    let latent = config.latent_vars();
    // separate stream from the init RNG so training noise does not depend on
    // the layer count
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut adam = Adam::new(config.learning_rate, model.params.total_len());
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = shuffled_indices(&mut rng, n);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = x_all.select(Axis(0), chunk);
            let eps: Vec<Array2<f64>> = (0..config.mc_samples)
                .map(|_| {
                    let draws = standard_normal_vec(&mut rng, chunk.len() * latent);
                    Array2::from_shape_vec((chunk.len(), latent), draws).unwrap()
                })
                .collect();
            model.params.zero_grads();
            let loss = elbo_batch_grad(
                &model.net,
                &model.plan,
                &mut model.params,
                &model.config,
                &xb,
                &eps,
            );
            if !loss.is_finite() {
                return Err(VaeError::Diverged { epoch, loss });
            }
            let (values, grads) = model.params.values_and_grads_mut();
            adam.step(values, grads);
            epoch_loss += loss * chunk.len() as f64;
        }
        let mean = epoch_loss / n as f64;
        if !mean.is_finite() {
            return Err(VaeError::Diverged { epoch, loss: mean });
        }
        log::debug!("vae epoch {epoch}: mean loss {mean:.6}");
        trace.push(mean);
    }
    model.loss_trace = trace;
    Ok(model)
}

/// Encodes a window sequence elementwise, preserving order.
pub fn encode_dataset(model: &VaeModel, windows: &[CsiWindow]) -> Result<Vec<LatentCode>, VaeError> {
    windows.iter().map(|w| encode(model, w)).collect()
}

/// Analytic gradient of [`elbo_loss`] with respect to every parameter,
/// aligned with [`VaeModel::parameter_vector`]. Exists for gradient
/// checking against finite differences.
pub fn elbo_grad_probe(
    model: &VaeModel,
    window: &CsiWindow,
    epsilon_draws: &[Vec<f64>],
) -> Result<Vec<f64>, VaeError> {
    if epsilon_draws.is_empty() {
        return Err(VaeError::NoSamples);
    }
    let latent = model.config.latent_vars();
    let x = windows_to_matrix(std::slice::from_ref(window), model.config.input_shape)?;
    let mut eps = Vec::with_capacity(epsilon_draws.len());
    for draw in epsilon_draws {
        if draw.len() != latent {
            return Err(VaeError::EpsilonLength {
                expected: latent,
                got: draw.len(),
            });
        }
        eps.push(Array2::from_shape_vec((1, latent), draw.clone()).unwrap());
    }
    let mut params = model.params.clone();
    params.zero_grads();
    let loss = elbo_batch_grad(&model.net, &model.plan, &mut params, &model.config, &x, &eps);
    if !loss.is_finite() {
        return Err(VaeError::NonFinite("elbo loss"));
    }
    Ok(params.grads().to_vec())
}
