//! Acceptance suite: one test per release criterion, each printing a
//! `[criterion N] PASS ...` line (visible with `--nocapture`).
//!
//! Criteria 5-7 and 9 share one deterministic desk-scale pipeline run
//! (synthetic data, reduced resolution) computed once; criterion 9 re-runs
//! the pipeline and demands byte-identical checkpoints and reports. The
//! full-resolution reproduction run (criterion 8) trains for hours on the
//! converted capture dataset and is `#[ignore]`d; see its doc comment.

use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use csi_har::analysis::{
    compute_metrics, fit_surrogate_tree, ood_report_from_outputs, PseudoCount,
};
use csi_har::arch::{
    build_architecture, predict_batch, train_classifier, ArchKind, ClassifierModel,
};
use csi_har::checkpoint::{classifier_to_bytes, vae_to_bytes};
use csi_har::data::{
    compute_norm_constant, normalize, sliding_windows, split_dataset, ActivityLabel, CsiWindow,
    SplitPolicy, NUM_CLASSES,
};
use csi_har::evidential::{dirichlet_from_evidence, edl_log_loss, kl_to_uniform, one_hot};
use csi_har::synth::{standard_suite, ChannelConfig};
use csi_har::vae::{
    elbo_loss, encode, gaussian_kl, train_vae, ConvSpec, LatentCode, VaeConfig, VaeModel,
};

// ---------------------------------------------------------------------------
// Criterion 1: evidential math suite
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_evidential_math_suite() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    for i in 0..10_000 {
        let k = 2 + (i % 9); // K in {2, ..., 10}
        let evidence: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..50.0)).collect();
        let out = dirichlet_from_evidence(&evidence).unwrap();
        let total: f64 = out.belief.iter().sum::<f64>() + out.uncertainty;
        assert!(
            (total - 1.0).abs() < 1e-9,
            "sum(b) + u = {total} for {evidence:?}"
        );
    }
    for k in 2..=10 {
        let kl = kl_to_uniform(&vec![1.0; k]).unwrap();
        assert!(kl.abs() < 1e-12, "kl(uniform) = {kl} for K={k}");
        let uniform = dirichlet_from_evidence(&vec![0.0; k]).unwrap();
        for j in 0..k {
            let loss = edl_log_loss(&uniform, &one_hot(j, k)).unwrap();
            assert!(
                (loss - (k as f64).ln()).abs() < 1e-9,
                "log loss {loss} != ln {k}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    println!(
        "[criterion 1] PASS evidential math suite (1e4 vectors, K=2..10) in {elapsed:.2?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: Dirichlet KL against a Monte-Carlo oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_dirichlet_kl_monte_carlo() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let samples = 300_000;
    for case in 0..20 {
        let k = 3 + (case % 3); // K in {3, 4, 5}
        // entries away from 1 so the reference value is not near zero and
        // relative error is meaningful
        let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(1.3..6.0)).collect();
        let closed = kl_to_uniform(&alpha).unwrap();

        // MC estimate of E_{pi ~ Dir(alpha)}[ln Dir(pi|alpha) - ln Dir(pi|1)]
        use csi_har::evidential::special::ln_gamma;
        let const_term: f64 = ln_gamma(alpha.iter().sum())
            - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
            - ln_gamma(k as f64);
        let gammas: Vec<Gamma<f64>> = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).unwrap())
            .collect();
        let mut acc = 0.0;
        for _ in 0..samples {
            let draws: Vec<f64> = gammas.iter().map(|g| g.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            let mut log_ratio = const_term;
            for (d, &a) in draws.iter().zip(&alpha) {
                log_ratio += (a - 1.0) * (d / total).ln();
            }
            acc += log_ratio;
        }
        let mc = acc / samples as f64;
        let rel = (mc - closed).abs() / closed;
        assert!(
            rel < 0.02,
            "case {case} (alpha {alpha:?}): closed {closed} vs MC {mc} (rel {rel:.4})"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 1 min");
    println!("[criterion 2] PASS Dirichlet KL matches MC on 20 cases (<2% rel) in {elapsed:.2?}");
}

// ---------------------------------------------------------------------------
// Criterion 3: Gaussian ELBO checks
// ---------------------------------------------------------------------------

fn miniature_vae_config() -> VaeConfig {
    VaeConfig {
        input_shape: (10, 16, 1),
        latent_dim: 4,
        conv_spec: vec![
            ConvSpec::new((5, 4), (5, 4), 6),
            ConvSpec::new((2, 4), (2, 4), 4),
        ],
        dense_width: 8,
        mc_samples: 1,
        epochs: 1,
        batch_size: 8,
        learning_rate: 1e-3,
        obs_variance: 1.0,
        seed: 0xC3,
    }
}

fn synthetic_window(shape: (usize, usize, usize), seed: u64) -> CsiWindow {
    use csi_har::data::CsiRecording;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values =
        ndarray::Array3::from_shape_fn(shape, |_| rng.random_range(0.0..1.0_f32));
    let rec = CsiRecording::new(values, 10.0, ActivityLabel::Walk).unwrap();
    let rec = normalize(rec, 1.0).unwrap().recording;
    let seconds = shape.0 as f64 / 10.0;
    sliding_windows(&rec, seconds, 1, None).unwrap().remove(0)
}

#[test]
fn criterion_3_gaussian_elbo_checks() {
    let start = std::time::Instant::now();

    // exact zero at the prior
    let prior = LatentCode::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    assert_eq!(gaussian_kl(&prior), 0.0);

    // analytic KL vs 1e5-sample MC estimate of E_q[ln q - ln p]
    let code = LatentCode::new(vec![0.8, -0.6], vec![0.5, 1.6]).unwrap();
    let analytic = gaussian_kl(&code);
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3A);
    let n = 100_000;
    let mut acc = 0.0;
    for _ in 0..n {
        for (m, s) in code.mu.iter().zip(&code.sigma) {
            let eps: f64 = rng.sample(StandardNormal);
            let z = m + s * eps;
            // ln q(z) - ln p(z) for the two scalar Gaussians
            acc += -s.ln() - (z - m).powi(2) / (2.0 * s * s) + z.powi(2) / 2.0;
        }
    }
    let mc = acc / n as f64;
    let rel = (mc - analytic).abs() / analytic;
    assert!(rel < 0.02, "analytic {analytic} vs MC {mc} (rel {rel:.4})");

    // analytic ELBO gradients vs central finite differences on a miniature
    // model at 10 random parameter coordinates
    let cfg = miniature_vae_config();
    let window = synthetic_window(cfg.input_shape, 0xC3B);
    let trained = {
        // a few steps away from init so gradients are generic
        let train_windows: Vec<CsiWindow> = (0..8)
            .map(|i| synthetic_window(cfg.input_shape, 0xC3C + i))
            .collect();
        let mut tc = cfg.clone();
        tc.epochs = 2;
        train_vae(&train_windows, &tc, 1.0).unwrap()
    };
    let eps_draws = vec![vec![0.41, -0.93]];
    let grad = csi_har::vae::elbo_grad_probe(&trained, &window, &eps_draws).unwrap();
    let mut model = trained;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3D);
    let total = model.parameter_vector().len();
    let mid = elbo_loss(&model, &window, &eps_draws).unwrap();
    let h = 1e-5;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 10 {
        attempts += 1;
        assert!(attempts < 200, "could not find 10 differentiable coordinates");
        let i = rng.random_range(0..total);
        let orig = model.parameter_vector()[i];
        model.parameter_vector_mut()[i] = orig + h;
        let up = elbo_loss(&model, &window, &eps_draws).unwrap();
        model.parameter_vector_mut()[i] = orig - h;
        let down = elbo_loss(&model, &window, &eps_draws).unwrap();
        model.parameter_vector_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        // a ReLU kink inside [orig-h, orig+h] makes the one-sided slopes
        // disagree; central differences are meaningless there, so resample
        let slope_jump = (up + down - 2.0 * mid).abs() / h;
        if slope_jump > 0.01 * fd.abs().max(1.0) {
            continue;
        }
        let denom = grad[i].abs().max(fd.abs()).max(1e-6);
        let rel = (grad[i] - fd).abs() / denom;
        assert!(
            rel < 1e-4,
            "param {i}: analytic {} vs fd {fd} (rel {rel:.2e})",
            grad[i]
        );
        checked += 1;
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}, budget 2 min");
    println!("[criterion 3] PASS Gaussian ELBO checks (KL exact/MC, gradient FD) in {elapsed:.2?}");
}

// ---------------------------------------------------------------------------
// Criterion 4: shape conformance
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_shape_conformance() {
    let start = std::time::Instant::now();

    let cfg = VaeConfig::paper_default(1);
    let plan = cfg.validate().unwrap();
    assert_eq!(plan.stages, vec![(450, 2048), (90, 256), (18, 32), (9, 8)]);
    assert_eq!(plan.flatten_dim, 2304);
    assert_eq!(cfg.latent_dim, 4);

    // shape round trips: paper default plus two custom configs
    let customs = [
        VaeConfig::desk_default(4),
        VaeConfig {
            input_shape: (24, 32, 2),
            latent_dim: 6,
            conv_spec: vec![
                ConvSpec::new((3, 4), (3, 4), 8),
                ConvSpec::new((4, 4), (4, 4), 16),
            ],
            dense_width: 12,
            ..VaeConfig::desk_default(2)
        },
    ];
    for cfg in std::iter::once(cfg).chain(customs) {
        let model = VaeModel::new(cfg.clone(), 1.0).unwrap();
        let window = synthetic_window(cfg.input_shape, 0xC4);
        let code = encode(&model, &window).unwrap();
        assert_eq!(code.dim(), cfg.latent_vars());
        let recon = csi_har::vae::decode(&model, &code.mu).unwrap();
        assert_eq!(recon.dim(), cfg.input_shape);
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}, budget 30 s");
    println!("[criterion 4] PASS shape conformance (450,2048)->(9,8), flatten 2304 in {elapsed:.2?}");
}

// ---------------------------------------------------------------------------
// Criteria 5-7 + 9: desk-scale end-to-end pipeline
// ---------------------------------------------------------------------------

const DESK_FPS: f64 = 16.0;
const DESK_DURATION_S: f64 = 18.0;
const DESK_WINDOW_S: f64 = 2.5;
const DESK_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
struct PipelineArtifacts {
    vae_bytes: Vec<Vec<u8>>,
    classifier_bytes: Vec<Vec<u8>>,
    nofusing_accuracy: [f64; 4],
    delayed_accuracy: f64,
    report_jsons: Vec<String>,
    mean_strength_in: f64,
    mean_strength_ood: f64,
    median_log_strength_in: f64,
    median_log_strength_ood: f64,
    tree_accuracy: f64,
    tree_depth: usize,
    tree_json: String,
}

fn eval_accuracy(model: &ClassifierModel, windows: &[CsiWindow]) -> (f64, String) {
    let outputs = predict_batch(model, windows).unwrap();
    let preds: Vec<usize> = outputs.iter().map(|o| o.predicted_class()).collect();
    let labels: Vec<usize> = windows
        .iter()
        .map(|w| w.label().class_index().unwrap())
        .collect();
    let report = compute_metrics(&preds, &labels, NUM_CLASSES).unwrap();
    let json = serde_json::to_string(&report).unwrap();
    (report.accuracy, json)
}

fn run_pipeline() -> PipelineArtifacts {
    let t0 = std::time::Instant::now();
    let channel = ChannelConfig::desk_default();
    let suite = standard_suite(&channel, DESK_DURATION_S, DESK_FPS).unwrap();
    let constant = compute_norm_constant(&suite).unwrap();

    let mut per_class: Vec<Vec<CsiWindow>> = vec![Vec::new(); NUM_CLASSES];
    let mut squat_windows = Vec::new();
    for rec in suite {
        let label = rec.activity();
        let rec = normalize(rec, constant).unwrap().recording;
        let windows = sliding_windows(&rec, DESK_WINDOW_S, 1, None).unwrap();
        match label.class_index() {
            Some(k) => per_class[k] = windows,
            None => squat_windows = windows,
        }
    }
    let split = split_dataset(
        per_class,
        DESK_TEST_FRACTION,
        SplitPolicy::ChronologicalTail,
        0,
    )
    .unwrap();
    println!(
        "[pipeline] {} train / {} test / {} ood windows ({:.2?})",
        split.train.len(),
        split.test.len(),
        squat_windows.len(),
        t0.elapsed()
    );

    // per-antenna VAEs, trained on in-distribution training windows only
    let mut vaes = Vec::with_capacity(4);
    for antenna in 0..4 {
        let t = std::time::Instant::now();
        let train_a: Vec<CsiWindow> = split
            .train
            .iter()
            .map(|w| w.select_antenna(antenna).unwrap())
            .collect();
        let mut cfg = VaeConfig::desk_default(1);
        cfg.seed = 100 + antenna as u64;
        let vae = train_vae(&train_a, &cfg, constant as f64).unwrap();
        println!(
            "[pipeline] vae antenna {antenna}: loss {:.4} -> {:.4} ({:.2?})",
            vae.loss_trace().first().unwrap(),
            vae.loss_trace().last().unwrap(),
            t.elapsed()
        );
        vaes.push(vae);
    }
    let vae_bytes: Vec<Vec<u8>> = vaes.iter().map(vae_to_bytes).collect();

    // classifiers: four single-antenna wirings plus delayed fusing
    let mut classifier_bytes = Vec::with_capacity(5);
    let mut report_jsons = Vec::with_capacity(5);
    let mut nofusing_accuracy = [0.0; 4];
    for antenna in 0..4 {
        let t = std::time::Instant::now();
        let model = build_architecture(
            ArchKind::NoFusing(antenna),
            vec![vaes[antenna].clone()],
            200 + antenna as u64,
        )
        .unwrap();
        let model = train_classifier(model, &split.train).unwrap();
        let (acc, json) = eval_accuracy(&model, &split.test);
        println!(
            "[pipeline] no-fusing-{}: accuracy {acc:.4} ({:.2?})",
            antenna + 1,
            t.elapsed()
        );
        nofusing_accuracy[antenna] = acc;
        report_jsons.push(json);
        classifier_bytes.push(classifier_to_bytes(&model));
    }
    let t = std::time::Instant::now();
    let delayed = build_architecture(ArchKind::DelayedFusing, vaes.clone(), 300).unwrap();
    let delayed = train_classifier(delayed, &split.train).unwrap();
    let (delayed_accuracy, delayed_json) = eval_accuracy(&delayed, &split.test);
    println!(
        "[pipeline] delayed-fusing: accuracy {delayed_accuracy:.4} ({:.2?})",
        t.elapsed()
    );
    report_jsons.push(delayed_json);
    classifier_bytes.push(classifier_to_bytes(&delayed));

    // out-of-distribution comparison on the delayed-fusing model
    let in_outputs = predict_batch(&delayed, &split.test).unwrap();
    let ood_outputs = predict_batch(&delayed, &squat_windows).unwrap();
    let ood = ood_report_from_outputs(&in_outputs, &ood_outputs, PseudoCount::Alpha).unwrap();
    println!(
        "[pipeline] strength in {:.2} vs ood {:.2}; median log total pseudocount in {:.3} vs ood {:.3}",
        ood.mean_strength_in,
        ood.mean_strength_ood,
        ood.median_log_strength_in,
        ood.median_log_strength_ood
    );

    // surrogate tree on the delayed-fusing latent features
    let features = |windows: &[CsiWindow]| -> Vec<Vec<f64>> {
        windows
            .iter()
            .map(|w| delayed.features_for(w).unwrap())
            .collect()
    };
    let labels = |windows: &[CsiWindow]| -> Vec<usize> {
        windows
            .iter()
            .map(|w| w.label().class_index().unwrap())
            .collect()
    };
    let tree = fit_surrogate_tree(&features(&split.train), &labels(&split.train), 3, 0).unwrap();
    let tree_accuracy = tree.accuracy(&features(&split.test), &labels(&split.test));
    println!(
        "[pipeline] surrogate tree: depth {} leaves {} accuracy {tree_accuracy:.4}",
        tree.depth(),
        tree.leaves()
    );
    println!("[pipeline] total {:.2?}", t0.elapsed());

    PipelineArtifacts {
        vae_bytes,
        classifier_bytes,
        nofusing_accuracy,
        delayed_accuracy,
        report_jsons,
        mean_strength_in: ood.mean_strength_in,
        mean_strength_ood: ood.mean_strength_ood,
        median_log_strength_in: ood.median_log_strength_in,
        median_log_strength_ood: ood.median_log_strength_ood,
        tree_accuracy,
        tree_depth: tree.depth(),
        tree_json: serde_json::to_string(&tree).unwrap(),
    }
}

static PIPELINE: LazyLock<PipelineArtifacts> = LazyLock::new(run_pipeline);

#[test]
fn criterion_5_desk_scale_end_to_end_accuracy() {
    let p = &*PIPELINE;
    let best_single = p
        .nofusing_accuracy
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max);
    assert!(
        p.delayed_accuracy >= 0.80,
        "delayed-fusing accuracy {:.4} < 0.80",
        p.delayed_accuracy
    );
    assert!(
        p.delayed_accuracy >= best_single - 0.05,
        "delayed-fusing {:.4} trails best single antenna {:.4} by more than 0.05",
        p.delayed_accuracy,
        best_single
    );
    println!(
        "[criterion 5] PASS delayed {:.4} >= 0.80 and >= best single {:.4} - 0.05 (no-fusing {:?})",
        p.delayed_accuracy, best_single, p.nofusing_accuracy
    );
}

#[test]
fn criterion_6_ood_separation() {
    let p = &*PIPELINE;
    assert!(
        p.mean_strength_ood < p.mean_strength_in,
        "mean strength ood {:.3} !< in {:.3}",
        p.mean_strength_ood,
        p.mean_strength_in
    );
    assert!(
        p.median_log_strength_ood < p.median_log_strength_in,
        "median log pseudo-count ood {:.4} !< in {:.4}",
        p.median_log_strength_ood,
        p.median_log_strength_in
    );
    println!(
        "[criterion 6] PASS strength in {:.2} > ood {:.2}; median log pseudo-count in {:.3} > ood {:.3}",
        p.mean_strength_in, p.mean_strength_ood, p.median_log_strength_in, p.median_log_strength_ood
    );
}

#[test]
fn criterion_7_surrogate_tree() {
    let p = &*PIPELINE;
    assert!(p.tree_depth <= 3, "tree depth {} > 3", p.tree_depth);
    assert!(
        p.tree_accuracy >= p.delayed_accuracy - 0.10,
        "tree {:.4} trails the MLP {:.4} by more than 0.10",
        p.tree_accuracy,
        p.delayed_accuracy
    );
    println!(
        "[criterion 7] PASS depth-{} tree {:.4} within 0.10 of MLP {:.4}",
        p.tree_depth, p.tree_accuracy, p.delayed_accuracy
    );
}

#[test]
fn criterion_9_determinism() {
    let first = &*PIPELINE;
    let second = run_pipeline();
    assert_eq!(
        first.vae_bytes, second.vae_bytes,
        "VAE checkpoints differ between runs"
    );
    assert_eq!(
        first.classifier_bytes, second.classifier_bytes,
        "classifier checkpoints differ between runs"
    );
    assert_eq!(
        first.report_jsons, second.report_jsons,
        "metric reports differ between runs"
    );
    assert_eq!(first.tree_json, second.tree_json, "trees differ");
    assert_eq!(first, &second);
    println!(
        "[criterion 9] PASS re-run is byte-identical ({} checkpoint files compared)",
        first.vae_bytes.len() + first.classifier_bytes.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 8 (extended, optional): full-resolution reproduction
// ---------------------------------------------------------------------------

/// Full-fidelity reproduction against the published capture dataset.
///
/// Requires `CSI_HAR_DATASET` to point at a dataset directory in the
/// manifest format (450-frame windows at 150 fps, 2048 subcarriers, 4
/// antennas) converted from the published captures. Trains all VAEs and
/// classifiers at paper-scale settings — multi-hour on a CPU — and checks
/// the reported accuracy table within +-0.03. Excluded from CI; run with
/// `cargo test -p csi-har --test acceptance -- --ignored criterion_8`.
#[test]
#[ignore = "multi-hour full-resolution run; needs CSI_HAR_DATASET"]
fn criterion_8_paper_reproduction() {
    let dir = std::env::var("CSI_HAR_DATASET")
        .expect("set CSI_HAR_DATASET to the converted dataset directory");
    let dir = std::path::PathBuf::from(dir);
    let recordings = csi_har::data::load_recordings(&dir).unwrap();
    let manifest = csi_har::data::DatasetManifest::read(&dir).unwrap();
    let constant = manifest
        .norm_constant
        .unwrap_or_else(|| compute_norm_constant(&recordings).unwrap());

    let mut per_class: Vec<Vec<CsiWindow>> = vec![Vec::new(); NUM_CLASSES];
    for rec in recordings {
        let label = rec.activity();
        let rec = normalize(rec, constant).unwrap().recording;
        if let Some(k) = label.class_index() {
            per_class[k] = sliding_windows(&rec, 3.0, 1, None).unwrap();
        }
    }
    let split = split_dataset(per_class, 0.2, SplitPolicy::ChronologicalTail, 0).unwrap();

    let mut vaes = Vec::new();
    for antenna in 0..4 {
        let train_a: Vec<CsiWindow> = split
            .train
            .iter()
            .map(|w| w.select_antenna(antenna).unwrap())
            .collect();
        let mut cfg = VaeConfig::paper_default(1);
        cfg.seed = 100 + antenna as u64;
        vaes.push(train_vae(&train_a, &cfg, constant as f64).unwrap());
    }
    let mut fused_cfg = VaeConfig::paper_default(4);
    fused_cfg.seed = 110;
    let vae_fused = train_vae(&split.train, &fused_cfg, constant as f64).unwrap();
    let mut fused3d_cfg = VaeConfig::paper_default(4);
    fused3d_cfg.latent_dim = 6;
    fused3d_cfg.seed = 111;
    let vae_fused3d = train_vae(&split.train, &fused3d_cfg, constant as f64).unwrap();

    let mut results = Vec::new();
    for kind in ArchKind::all() {
        let attached = match kind {
            ArchKind::NoFusing(a) => vec![vaes[a].clone()],
            ArchKind::EarlyFusing => vec![vae_fused.clone()],
            ArchKind::EarlyFusing3d => vec![vae_fused3d.clone()],
            ArchKind::DelayedFusing => vaes.clone(),
        };
        let model = build_architecture(kind, attached, 300).unwrap();
        let model = train_classifier(model, &split.train).unwrap();
        let (acc, _) = eval_accuracy(&model, &split.test);
        println!("[criterion 8] {}: accuracy {acc:.4}", kind.name());
        results.push((kind, acc));
    }
    let expectations = [
        (ArchKind::NoFusing(0), 0.93),
        (ArchKind::NoFusing(1), 0.92),
        (ArchKind::NoFusing(2), 0.93),
        (ArchKind::NoFusing(3), 0.88),
        (ArchKind::EarlyFusing, 0.85),
        (ArchKind::EarlyFusing3d, 0.88),
        (ArchKind::DelayedFusing, 0.95),
    ];
    for (kind, expected) in expectations {
        let (_, acc) = results.iter().find(|(k, _)| *k == kind).unwrap();
        assert!(
            (acc - expected).abs() <= 0.03,
            "{}: accuracy {acc:.4} not within 0.03 of {expected}",
            kind.name()
        );
    }
    println!("[criterion 8] PASS all seven architectures within +-0.03 of the reported table");
}
