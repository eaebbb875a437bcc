//! The end-to-end HAR architectures: per-antenna or stacked VAEs feeding an
//! evidential MLP classifier.
//!
//! Seven wirings are supported. `no-fusing-1..4` classify from a single
//! antenna's VAE; `early-fusing` (and its tri-variate `early-fusing-3d`
//! variant) encode all antennas stacked as image channels through one VAE;
//! `delayed-fusing` concatenates the latent codes of the four per-antenna
//! VAEs at the classifier input. The MLP consumes the posterior moments
//! `(mu, sigma)` directly — inference never samples, so predictions are
//! deterministic.
//!
//! Classifier training freezes the VAEs: windows are encoded once up front
//! and only the MLP parameters move.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ActivityLabel, CsiWindow, DataError, NUM_CLASSES};
use crate::evidential::{
    annealing_coefficient, dirichlet_from_evidence, edl_evidence_grad, edl_log_loss,
    kl_to_uniform, misleading_alpha, one_hot, DirichletOutput, EdlError, EdlLossConfig,
};
use crate::nn::{shuffled_indices, sigmoid, softplus, Adam, Dense, ParamSet};
use crate::vae::{encode, LatentCode, VaeError, VaeModel};

#[derive(Debug, Error)]
pub enum ArchError {
    #[error("architecture configuration error: {0}")]
    Config(String),
    #[error("{kind} needs {expected} VAE(s), got {got}")]
    WrongVaeCount {
        kind: String,
        expected: usize,
        got: usize,
    },
    #[error("attached VAE does not fit the architecture: {0}")]
    VaeMismatch(String),
    #[error("feature vector has length {got}, expected {expected}")]
    FeatureLength { expected: usize, got: usize },
    #[error("window labeled {0} is out of distribution; classifiers train on the 5 target classes")]
    OutOfDistribution(ActivityLabel),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("classifier training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Edl(#[from] EdlError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Which of the seven wirings a classifier uses. `NoFusing` carries the
/// zero-based antenna index (displayed one-based, as `no-fusing-1..4`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    NoFusing(usize),
    EarlyFusing,
    EarlyFusing3d,
    DelayedFusing,
}

impl ArchKind {
    /// All seven concrete architectures.
    pub fn all() -> [ArchKind; 7] {
        [
            ArchKind::NoFusing(0),
            ArchKind::NoFusing(1),
            ArchKind::NoFusing(2),
            ArchKind::NoFusing(3),
            ArchKind::EarlyFusing,
            ArchKind::EarlyFusing3d,
            ArchKind::DelayedFusing,
        ]
    }

    pub fn name(&self) -> String {
        match self {
            ArchKind::NoFusing(a) => format!("no-fusing-{}", a + 1),
            ArchKind::EarlyFusing => "early-fusing".to_string(),
            ArchKind::EarlyFusing3d => "early-fusing-3d".to_string(),
            ArchKind::DelayedFusing => "delayed-fusing".to_string(),
        }
    }

    pub fn parse(name: &str) -> Option<ArchKind> {
        match name {
            "early-fusing" => Some(ArchKind::EarlyFusing),
            "early-fusing-3d" => Some(ArchKind::EarlyFusing3d),
            "delayed-fusing" => Some(ArchKind::DelayedFusing),
            _ => {
                let idx = name.strip_prefix("no-fusing-")?.parse::<usize>().ok()?;
                if (1..=4).contains(&idx) {
                    Some(ArchKind::NoFusing(idx - 1))
                } else {
                    None
                }
            }
        }
    }

    /// Number of VAEs this wiring attaches.
    pub fn vae_count(&self) -> usize {
        match self {
            ArchKind::DelayedFusing => 4,
            _ => 1,
        }
    }
}

/// Resolved hyperparameters of one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    pub mlp_input_dim: usize,
    pub hidden_dims: (usize, usize),
    pub output_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub annealing_step: usize,
    pub seed: u64,
}

impl ArchitectureSpec {
    /// The fixed per-architecture hyperparameter table: input 4/6/16 with
    /// hidden (4,8) or (16,8); learning rate 0.01 except 0.001 for the
    /// early-fusing variants; annealing step 22 except 3 for delayed
    /// fusing (trained to be more responsive to out-of-distribution input
    /// at some cost in accuracy).
    pub fn for_kind(kind: ArchKind, seed: u64) -> ArchitectureSpec {
        let (mlp_input_dim, hidden_dims, learning_rate, annealing_step) = match kind {
            ArchKind::NoFusing(_) => (4, (4, 8), 0.01, 22),
            ArchKind::EarlyFusing => (4, (4, 8), 0.001, 22),
            ArchKind::EarlyFusing3d => (6, (4, 8), 0.001, 22),
            ArchKind::DelayedFusing => (16, (16, 8), 0.01, 3),
        };
        ArchitectureSpec {
            kind,
            mlp_input_dim,
            hidden_dims,
            output_dim: NUM_CLASSES,
            epochs: 50,
            batch_size: 128,
            learning_rate,
            annealing_step,
            seed,
        }
    }

    pub fn hidden_activation(&self) -> &'static str {
        "relu"
    }

    pub fn output_activation(&self) -> &'static str {
        "softplus"
    }

    pub fn loss_config(&self) -> EdlLossConfig {
        EdlLossConfig {
            annealing_step: self.annealing_step,
            num_classes: self.output_dim,
        }
    }
}

/// Concatenates per-antenna latent codes into the MLP feature vector:
/// `[mu_1, sigma_1, mu_2, sigma_2, ...]` in fixed antenna order.
pub fn latent_features(codes: &[LatentCode]) -> Vec<f64> {
    let mut features = Vec::with_capacity(codes.iter().map(|c| 2 * c.dim()).sum());
    for code in codes {
        features.extend_from_slice(&code.mu);
        features.extend_from_slice(&code.sigma);
    }
    features
}

/// Human-readable feature names matching [`latent_features`] order:
/// `mu_x^y` / `sigma_x^y` is marginal `x` (zero-based) of antenna `y`
/// (one-based).
pub fn feature_name(index: usize, latent_vars: usize) -> String {
    let per_code = 2 * latent_vars;
    let antenna = index / per_code + 1;
    let within = index % per_code;
    if within < latent_vars {
        format!("mu_{within}^{antenna}")
    } else {
        format!("sigma_{}^{antenna}", within - latent_vars)
    }
}

#[derive(Debug, Clone)]
struct Mlp {
    d0: Dense,
    d1: Dense,
    out: Dense,
}

fn build_mlp(spec: &ArchitectureSpec, ps: &mut ParamSet) -> Mlp {
    let d0 = Dense::new(ps, "mlp/dense0", spec.mlp_input_dim, spec.hidden_dims.0);
    let d1 = Dense::new(ps, "mlp/dense1", spec.hidden_dims.0, spec.hidden_dims.1);
    let out = Dense::new(ps, "mlp/out", spec.hidden_dims.1, spec.output_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    d0.init_he(ps, &mut rng);
    d1.init_he(ps, &mut rng);
    out.init_xavier(ps, &mut rng);
    Mlp { d0, d1, out }
}

struct MlpCache {
    a0: Array2<f64>,
    a1: Array2<f64>,
    preact: Array2<f64>,
    evidence: Array2<f64>,
}

fn mlp_forward(mlp: &Mlp, ps: &ParamSet, x: ArrayView2<'_, f64>) -> MlpCache {
    let a0 = crate::nn::relu(&mlp.d0.forward(ps, x));
    let a1 = crate::nn::relu(&mlp.d1.forward(ps, a0.view()));
    let preact = mlp.out.forward(ps, a1.view());
    let evidence = preact.mapv(softplus);
    MlpCache {
        a0,
        a1,
        preact,
        evidence,
    }
}

fn mlp_backward(
    mlp: &Mlp,
    ps: &mut ParamSet,
    x: ArrayView2<'_, f64>,
    cache: &MlpCache,
    d_evidence: &Array2<f64>,
) {
    let d_preact = {
        let mut d = d_evidence.clone();
        d.zip_mut_with(&cache.preact, |g, &p| *g *= sigmoid(p));
        d
    };
    let d_a1 = mlp.out.backward(ps, cache.a1.view(), d_preact.view());
    let d_a1 = crate::nn::relu_backward(&d_a1, &cache.a1);
    let d_a0 = mlp.d1.backward(ps, cache.a0.view(), d_a1.view());
    let d_a0 = crate::nn::relu_backward(&d_a0, &cache.a0);
    mlp.d0.backward(ps, x, d_a0.view());
}

/// An evidential classifier with its attached (frozen) VAEs.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    spec: ArchitectureSpec,
    mlp: Mlp,
    params: ParamSet,
    vaes: Vec<VaeModel>,
    loss_trace: Vec<f64>,
}

impl ClassifierModel {
    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn vaes(&self) -> &[VaeModel] {
        &self.vaes
    }

    pub(crate) fn vae_mut(&mut self, index: usize) -> Option<&mut VaeModel> {
        self.vaes.get_mut(index)
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    /// Flat MLP parameter vector (VAE parameters live in the VAEs).
    pub fn parameter_vector(&self) -> &[f64] {
        self.params.values()
    }

    pub fn parameter_vector_mut(&mut self) -> &mut [f64] {
        self.params.values_mut()
    }

    /// `(name, shape, values)` triples of the MLP parameters.
    pub fn named_parameters(&self) -> impl Iterator<Item = (&str, &[usize], &[f64])> {
        self.params.named_arrays()
    }

    /// Overwrites one named MLP parameter array, for checkpoint loading.
    pub fn load_named_parameter(
        &mut self,
        name: &str,
        shape: &[usize],
        values: &[f64],
    ) -> Result<(), ArchError> {
        self.params
            .load_named(name, shape, values)
            .map_err(ArchError::Config)
    }

    pub(crate) fn set_loss_trace(&mut self, trace: Vec<f64>) {
        self.loss_trace = trace;
    }

    pub(crate) fn set_spec(&mut self, spec: ArchitectureSpec) {
        self.spec = spec;
    }

    /// Builds the feature vector for one window by encoding it through the
    /// attached VAEs.
    pub fn features_for(&self, window: &CsiWindow) -> Result<Vec<f64>, ArchError> {
        let codes = self.encode_window(window)?;
        let features = latent_features(&codes);
        if features.len() != self.spec.mlp_input_dim {
            return Err(ArchError::FeatureLength {
                expected: self.spec.mlp_input_dim,
                got: features.len(),
            });
        }
        Ok(features)
    }

    fn encode_window(&self, window: &CsiWindow) -> Result<Vec<LatentCode>, ArchError> {
        match self.spec.kind {
            ArchKind::NoFusing(antenna) => {
                let (_, _, channels) = window.shape();
                let w = if channels == 1 {
                    window.clone()
                } else {
                    window.select_antenna(antenna)?
                };
                Ok(vec![encode(&self.vaes[0], &w)?])
            }
            ArchKind::EarlyFusing | ArchKind::EarlyFusing3d => {
                Ok(vec![encode(&self.vaes[0], window)?])
            }
            ArchKind::DelayedFusing => {
                let mut codes = Vec::with_capacity(4);
                for (a, vae) in self.vaes.iter().enumerate() {
                    codes.push(encode(vae, &window.select_antenna(a)?)?);
                }
                Ok(codes)
            }
        }
    }
}

/// Assembles an untrained classifier over already-trained VAEs, checking
/// that the attached models fit the wiring.
pub fn build_architecture(
    kind: ArchKind,
    vaes: Vec<VaeModel>,
    seed: u64,
) -> Result<ClassifierModel, ArchError> {
    let expected = kind.vae_count();
    if vaes.len() != expected {
        return Err(ArchError::WrongVaeCount {
            kind: kind.name(),
            expected,
            got: vaes.len(),
        });
    }
    let expected_latent = match kind {
        ArchKind::EarlyFusing3d => 6,
        _ => 4,
    };
    for (i, vae) in vaes.iter().enumerate() {
        let cfg = vae.config();
        if cfg.latent_dim != expected_latent {
            return Err(ArchError::VaeMismatch(format!(
                "VAE {i} has latent_dim {}, {} expects {expected_latent}",
                cfg.latent_dim,
                kind.name()
            )));
        }
        let channels = cfg.input_shape.2;
        match kind {
            ArchKind::NoFusing(_) | ArchKind::DelayedFusing => {
                if channels != 1 {
                    return Err(ArchError::VaeMismatch(format!(
                        "VAE {i} consumes {channels} channels; {} expects per-antenna (1-channel) VAEs",
                        kind.name()
                    )));
                }
            }
            ArchKind::EarlyFusing | ArchKind::EarlyFusing3d => {
                if channels < 2 {
                    return Err(ArchError::VaeMismatch(format!(
                        "VAE {i} consumes {channels} channel(s); {} expects the antenna-stacked VAE",
                        kind.name()
                    )));
                }
            }
        }
    }
    if kind == ArchKind::DelayedFusing {
        let shape = vaes[0].config().input_shape;
        if vaes.iter().any(|v| v.config().input_shape != shape) {
            return Err(ArchError::VaeMismatch(
                "per-antenna VAEs disagree on input shape".into(),
            ));
        }
    }
    let spec = ArchitectureSpec::for_kind(kind, seed);
    let feature_dim: usize = vaes.iter().map(|v| v.config().latent_dim).sum();
    debug_assert_eq!(feature_dim, spec.mlp_input_dim);
    let mut params = ParamSet::new();
    let mlp = build_mlp(&spec, &mut params);
    Ok(ClassifierModel {
        spec,
        mlp,
        params,
        vaes,
        loss_trace: Vec::new(),
    })
}

fn feature_matrix(model: &ClassifierModel, windows: &[CsiWindow]) -> Result<Array2<f64>, ArchError> {
    let dim = model.spec.mlp_input_dim;
    let mut data = Vec::with_capacity(windows.len() * dim);
    for w in windows {
        data.extend(model.features_for(w)?);
    }
    Ok(Array2::from_shape_vec((windows.len(), dim), data).unwrap())
}

/// Trains the MLP with the evidential loss; the VAEs stay frozen. Labels
/// come from the windows and must all be in-distribution. Deterministic
/// given the spec seed.
pub fn train_classifier(
    mut model: ClassifierModel,
    windows: &[CsiWindow],
) -> Result<ClassifierModel, ArchError> {
    if windows.is_empty() {
        return Err(ArchError::EmptyTrainingSet);
    }
    let mut labels = Vec::with_capacity(windows.len());
    for w in windows {
        match w.label().class_index() {
            Some(k) => labels.push(k),
            None => return Err(ArchError::OutOfDistribution(w.label())),
        }
    }
    // frozen VAEs: encode once, train on the latent features
    let features = feature_matrix(&model, windows)?;
    let n = features.nrows();
    let k = model.spec.output_dim;
    let loss_cfg = model.spec.loss_config();
    let one_hots: Vec<Vec<f64>> = labels.iter().map(|&c| one_hot(c, k)).collect();

    let mut rng =
        ChaCha8Rng::seed_from_u64(model.spec.seed.wrapping_add(0xD1B5_4A32_D192_ED03));
    let mut adam = Adam::new(model.spec.learning_rate, model.params.total_len());
    let mut trace = Vec::with_capacity(model.spec.epochs);
    for epoch in 0..model.spec.epochs {
        let lambda = annealing_coefficient(epoch, model.spec.annealing_step);
        let order = shuffled_indices(&mut rng, n);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(model.spec.batch_size) {
            let x = features.select(Axis(0), chunk);
            let cache = mlp_forward(&model.mlp, &model.params, x.view());
            let inv_b = 1.0 / chunk.len() as f64;
            let mut d_evidence = Array2::zeros((chunk.len(), k));
            let mut batch_loss = 0.0;
            for (row, &idx) in chunk.iter().enumerate() {
                let evidence: Vec<f64> = cache.evidence.row(row).to_vec();
                let out = dirichlet_from_evidence(&evidence)?;
                let y = &one_hots[idx];
                batch_loss += edl_log_loss(&out, y)?
                    + lambda * kl_to_uniform(&misleading_alpha(&out, y)?)?;
                let g = edl_evidence_grad(&out, y, lambda)?;
                for (col, gv) in g.into_iter().enumerate() {
                    d_evidence[[row, col]] = gv * inv_b;
                }
            }
            batch_loss *= inv_b;
            if !batch_loss.is_finite() {
                return Err(ArchError::Diverged {
                    epoch,
                    loss: batch_loss,
                });
            }
            model.params.zero_grads();
            mlp_backward(&model.mlp, &mut model.params, x.view(), &cache, &d_evidence);
            let (values, grads) = model.params.values_and_grads_mut();
            adam.step(values, grads);
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        let mean = epoch_loss / n as f64;
        log::debug!(
            "classifier {} epoch {epoch}: loss {mean:.6} (lambda {lambda:.3})",
            model.spec.kind.name()
        );
        trace.push(mean);
    }
    let _ = loss_cfg;
    model.loss_trace = trace;
    Ok(model)
}

/// Deterministic evidential prediction for one window: encode with the
/// posterior means (no sampling), run the MLP, softplus to evidence.
pub fn predict(model: &ClassifierModel, window: &CsiWindow) -> Result<DirichletOutput, ArchError> {
    let features = model.features_for(window)?;
    let x = Array2::from_shape_vec((1, features.len()), features).unwrap();
    let cache = mlp_forward(&model.mlp, &model.params, x.view());
    let evidence: Vec<f64> = cache.evidence.row(0).to_vec();
    Ok(dirichlet_from_evidence(&evidence)?)
}

/// [`predict`] over a window sequence, order preserving.
pub fn predict_batch(
    model: &ClassifierModel,
    windows: &[CsiWindow],
) -> Result<Vec<DirichletOutput>, ArchError> {
    windows.iter().map(|w| predict(model, w)).collect()
}
