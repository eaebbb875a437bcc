//! Evaluation and post-hoc analysis: classification metrics, Dirichlet
//! out-of-distribution reporting, the depth-limited surrogate decision tree
//! and latent-space exports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{feature_name, predict_batch, ArchError, ClassifierModel};
use crate::data::{ActivityLabel, CsiWindow};
use crate::evidential::DirichletOutput;
use crate::vae::LatentCode;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("prediction and label sequences differ in length ({predictions} vs {labels})")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("input is empty: {0}")]
    Empty(&'static str),
    #[error("class index {index} out of range for {num_classes} classes")]
    ClassIndex { index: usize, num_classes: usize },
    #[error("{0}")]
    LabelMismatch(String),
    #[error("latent codes need at least 2 dimensions for a scatter, got {0}")]
    DimensionTooSmall(usize),
    #[error("feature vectors must share length {expected}, found {got}")]
    FeatureLength { expected: usize, got: usize },
    #[error(transparent)]
    Arch(#[from] ArchError),
}

// ---------------------------------------------------------------------------
// Classification metrics
// ---------------------------------------------------------------------------

/// Per-class precision/recall/F1 with its support. `degenerate` marks a
/// zero-denominator metric that was reported as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub degenerate: bool,
}

/// Macro-averaged classification report with the full confusion matrix
/// (rows = true class, columns = predicted class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion_matrix: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    pub total: usize,
}

/// Computes accuracy, confusion matrix and macro-averaged metrics.
pub fn compute_metrics(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<MetricsReport, AnalysisError> {
    if predictions.len() != labels.len() {
        return Err(AnalysisError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(AnalysisError::Empty("predictions"));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        for &idx in [p, y].iter() {
            if idx >= num_classes {
                return Err(AnalysisError::ClassIndex {
                    index: idx,
                    num_classes,
                });
            }
        }
        confusion[y][p] += 1;
    }
    let total = predictions.len();
    let trace: usize = (0..num_classes).map(|k| confusion[k][k]).sum();
    let accuracy = trace as f64 / total as f64;

    let mut per_class = Vec::with_capacity(num_classes);
    for k in 0..num_classes {
        let support: usize = confusion[k].iter().sum();
        let predicted: usize = (0..num_classes).map(|r| confusion[r][k]).sum();
        let tp = confusion[k][k];
        let mut degenerate = false;
        let precision = if predicted > 0 {
            tp as f64 / predicted as f64
        } else {
            degenerate = true;
            0.0
        };
        let recall = if support > 0 {
            tp as f64 / support as f64
        } else {
            degenerate = true;
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            degenerate = true;
            0.0
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support,
            degenerate,
        });
    }
    let k = num_classes as f64;
    Ok(MetricsReport {
        accuracy,
        macro_precision: per_class.iter().map(|c| c.precision).sum::<f64>() / k,
        macro_recall: per_class.iter().map(|c| c.recall).sum::<f64>() / k,
        macro_f1: per_class.iter().map(|c| c.f1).sum::<f64>() / k,
        confusion_matrix: confusion,
        per_class,
        total,
    })
}

// ---------------------------------------------------------------------------
// Out-of-distribution reporting
// ---------------------------------------------------------------------------

/// Which pseudo-count enters the log histogram: the Dirichlet parameters
/// `alpha` (default) or the raw evidence (floored at 1e-12 before the log).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PseudoCount {
    Alpha,
    Evidence,
}

/// Dirichlet-strength comparison between in-distribution and OOD samples.
///
/// Log pseudo-counts are pooled over all classes per sample. The threshold
/// on strength maximizes balanced detection over the two provided sets;
/// `detection_rate_at_threshold` is the fraction of OOD samples below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub in_dist_log_pseudocounts: Vec<f64>,
    pub ood_log_pseudocounts: Vec<f64>,
    pub mean_strength_in: f64,
    pub mean_strength_ood: f64,
    /// Medians of the pooled per-class log pseudo-counts. Degenerate by
    /// construction when off-class evidence is near zero on both sides
    /// (both medians pin to ~log 1); kept for histogram summaries.
    pub median_log_in: f64,
    pub median_log_ood: f64,
    /// Medians of the per-window log total pseudo-count (log strength);
    /// the robust location statistic for the distribution shift.
    pub median_log_strength_in: f64,
    pub median_log_strength_ood: f64,
    pub threshold: Option<f64>,
    pub detection_rate_at_threshold: f64,
    pub balanced_accuracy_at_threshold: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Builds the OOD report from already-computed evidential outputs.
pub fn ood_report_from_outputs(
    in_dist: &[DirichletOutput],
    ood: &[DirichletOutput],
    pseudo: PseudoCount,
) -> Result<OodReport, AnalysisError> {
    if in_dist.is_empty() {
        return Err(AnalysisError::Empty("in-distribution outputs"));
    }
    if ood.is_empty() {
        return Err(AnalysisError::Empty("ood outputs"));
    }
    let pooled = |outs: &[DirichletOutput]| -> Vec<f64> {
        outs.iter()
            .flat_map(|o| match pseudo {
                PseudoCount::Alpha => o.alpha.iter().map(|a| a.ln()).collect::<Vec<_>>(),
                PseudoCount::Evidence => o
                    .evidence
                    .iter()
                    .map(|e| e.max(1e-12).ln())
                    .collect::<Vec<_>>(),
            })
            .collect()
    };
    let log_in = pooled(in_dist);
    let log_ood = pooled(ood);
    let mean_strength = |outs: &[DirichletOutput]| {
        outs.iter().map(|o| o.strength).sum::<f64>() / outs.len() as f64
    };
    let mut sorted_in = log_in.clone();
    sorted_in.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sorted_ood = log_ood.clone();
    sorted_ood.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let log_strengths = |outs: &[DirichletOutput]| -> Vec<f64> {
        let mut v: Vec<f64> = outs.iter().map(|o| o.strength.ln()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };
    let strength_in = log_strengths(in_dist);
    let strength_ood = log_strengths(ood);

    // threshold on Dirichlet strength: flag OOD when strength < t
    let mut strengths: Vec<f64> = in_dist
        .iter()
        .chain(ood.iter())
        .map(|o| o.strength)
        .collect();
    strengths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    strengths.dedup();
    let mut best: Option<(f64, f64, f64)> = None; // (balanced, threshold, detection)
    for pair in strengths.windows(2) {
        let t = 0.5 * (pair[0] + pair[1]);
        let detected = ood.iter().filter(|o| o.strength < t).count() as f64 / ood.len() as f64;
        let kept = in_dist.iter().filter(|o| o.strength >= t).count() as f64
            / in_dist.len() as f64;
        let balanced = 0.5 * (detected + kept);
        let better = match best {
            None => true,
            Some((b, _, _)) => balanced > b,
        };
        if better {
            best = Some((balanced, t, detected));
        }
    }
    let (balanced_accuracy_at_threshold, threshold, detection_rate_at_threshold) = match best {
        Some((b, t, d)) => (b, Some(t), d),
        // all strengths identical: no usable threshold, chance detection
        None => (0.5, None, 0.0),
    };
    Ok(OodReport {
        mean_strength_in: mean_strength(in_dist),
        mean_strength_ood: mean_strength(ood),
        median_log_in: median(&sorted_in),
        median_log_ood: median(&sorted_ood),
        median_log_strength_in: median(&strength_in),
        median_log_strength_ood: median(&strength_ood),
        in_dist_log_pseudocounts: log_in,
        ood_log_pseudocounts: log_ood,
        threshold,
        detection_rate_at_threshold,
        balanced_accuracy_at_threshold,
    })
}

/// Predicts both window sets with the classifier and compares their
/// Dirichlet strengths. The OOD windows must carry out-of-distribution
/// labels; the in-distribution set must not.
pub fn ood_report(
    model: &ClassifierModel,
    in_dist: &[CsiWindow],
    ood: &[CsiWindow],
) -> Result<OodReport, AnalysisError> {
    if let Some(w) = in_dist.iter().find(|w| !w.label().in_distribution()) {
        return Err(AnalysisError::LabelMismatch(format!(
            "window labeled {} passed as in-distribution",
            w.label()
        )));
    }
    if let Some(w) = ood.iter().find(|w| w.label().in_distribution()) {
        return Err(AnalysisError::LabelMismatch(format!(
            "window labeled {} passed as out-of-distribution",
            w.label()
        )));
    }
    let in_outputs = predict_batch(model, in_dist)?;
    let ood_outputs = predict_batch(model, ood)?;
    ood_report_from_outputs(&in_outputs, &ood_outputs, PseudoCount::Alpha)
}

// ---------------------------------------------------------------------------
// Surrogate decision tree
// ---------------------------------------------------------------------------

/// Binary decision tree node over latent features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        class: usize,
        /// Training sample count per class that reached this leaf.
        counts: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

/// Depth-limited Gini decision tree fitted on latent feature vectors; the
/// interpretable stand-in for the evidential MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTree {
    pub root: TreeNode,
    pub max_depth: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl SurrogateTree {
    pub fn predict(&self, features: &[f64]) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if features[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaves(&self) -> usize {
        self.root.leaves()
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> f64 {
        let correct = features
            .iter()
            .zip(labels)
            .filter(|(f, &y)| self.predict(f) == y)
            .count();
        correct as f64 / labels.len().max(1) as f64
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    impurity: f64,
    left_idx: Vec<usize>,
    right_idx: Vec<usize>,
}

fn best_split(
    features: &[Vec<f64>],
    labels: &[usize],
    indices: &[usize],
    num_classes: usize,
) -> Option<SplitChoice> {
    let n = indices.len();
    let num_features = features[indices[0]].len();
    let mut node_counts = vec![0usize; num_classes];
    for &i in indices {
        node_counts[labels[i]] += 1;
    }
    let node_impurity = gini(&node_counts, n);
    if node_impurity == 0.0 {
        return None;
    }
    let mut best: Option<SplitChoice> = None;
    for f in 0..num_features {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|&a, &b| features[a][f].partial_cmp(&features[b][f]).unwrap());
        let mut left_counts = vec![0usize; num_classes];
        for cut in 1..n {
            left_counts[labels[order[cut - 1]]] += 1;
            let lo = features[order[cut - 1]][f];
            let hi = features[order[cut]][f];
            if lo == hi {
                continue;
            }
            let threshold = 0.5 * (lo + hi);
            let right_counts: Vec<usize> = node_counts
                .iter()
                .zip(&left_counts)
                .map(|(t, l)| t - l)
                .collect();
            let weighted = (cut as f64 * gini(&left_counts, cut)
                + (n - cut) as f64 * gini(&right_counts, n - cut))
                / n as f64;
            // strict improvement required; ties broken by lowest feature
            // index then lowest threshold (enforced by scan order)
            let improves = weighted + 1e-12 < node_impurity;
            let better = improves
                && match &best {
                    None => true,
                    Some(b) => weighted < b.impurity - 1e-12,
                };
            if better {
                let (left_idx, right_idx) = order.split_at(cut);
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    impurity: weighted,
                    left_idx: left_idx.to_vec(),
                    right_idx: right_idx.to_vec(),
                });
            }
        }
    }
    best
}

fn grow_tree(
    features: &[Vec<f64>],
    labels: &[usize],
    indices: Vec<usize>,
    depth_left: usize,
    num_classes: usize,
) -> TreeNode {
    let mut counts = vec![0usize; num_classes];
    for &i in &indices {
        counts[labels[i]] += 1;
    }
    if depth_left == 0 || indices.len() < 2 {
        return TreeNode::Leaf {
            class: majority(&counts),
            counts,
        };
    }
    match best_split(features, labels, &indices, num_classes) {
        None => TreeNode::Leaf {
            class: majority(&counts),
            counts,
        },
        Some(split) => TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(grow_tree(
                features,
                labels,
                split.left_idx,
                depth_left - 1,
                num_classes,
            )),
            right: Box::new(grow_tree(
                features,
                labels,
                split.right_idx,
                depth_left - 1,
                num_classes,
            )),
        },
    }
}

/// Fits a greedy Gini-impurity tree of at most `max_depth` levels on latent
/// feature vectors. Deterministic: exhaustive splits with ties broken by
/// lowest feature index, then lowest threshold. Single-class input yields a
/// single leaf.
pub fn fit_surrogate_tree(
    features: &[Vec<f64>],
    labels: &[usize],
    max_depth: usize,
    seed: u64,
) -> Result<SurrogateTree, AnalysisError> {
    if features.is_empty() {
        return Err(AnalysisError::Empty("features"));
    }
    if features.len() != labels.len() {
        return Err(AnalysisError::LengthMismatch {
            predictions: features.len(),
            labels: labels.len(),
        });
    }
    let dim = features[0].len();
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(AnalysisError::FeatureLength {
            expected: dim,
            got: f.len(),
        });
    }
    let num_classes = labels.iter().max().unwrap() + 1;
    let root = grow_tree(
        features,
        labels,
        (0..features.len()).collect(),
        max_depth,
        num_classes,
    );
    Ok(SurrogateTree {
        root,
        max_depth,
        num_features: dim,
        num_classes,
        seed,
    })
}

/// Machine- and human-readable renderings of a fitted tree. Feature names
/// follow the `mu_x^y` / `sigma_x^y` convention with `latent_vars`
/// marginals per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeExport {
    pub json: String,
    pub text: String,
}

fn unicode_feature_name(index: usize, latent_vars: usize) -> String {
    const SUB: [char; 10] = ['₀', '₁', '₂', '₃', '₄', '₅', '₆', '₇', '₈', '₉'];
    const SUP: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    let per_code = 2 * latent_vars;
    let antenna = index / per_code + 1;
    let within = index % per_code;
    let (sym, marginal) = if within < latent_vars {
        ('μ', within)
    } else {
        ('σ', within - latent_vars)
    };
    format!("{sym}{}{}", SUB[marginal % 10], SUP[antenna % 10])
}

fn render_node(
    node: &TreeNode,
    latent_vars: usize,
    indent: usize,
    lines: &mut Vec<String>,
    class_names: &[&str],
) {
    let pad = "  ".repeat(indent);
    match node {
        TreeNode::Leaf { class, counts } => {
            let name = class_names.get(*class).copied().unwrap_or("?");
            lines.push(format!("{pad}-> {name} {counts:?}"));
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let fname = unicode_feature_name(*feature, latent_vars);
            lines.push(format!("{pad}{fname} ≤ {threshold:.4}"));
            render_node(left, latent_vars, indent + 1, lines, class_names);
            lines.push(format!("{pad}{fname} > {threshold:.4}"));
            render_node(right, latent_vars, indent + 1, lines, class_names);
        }
    }
}

/// Serializes the tree to JSON (round-trippable through [`parse_tree`]) and
/// an indented text rendering with the paper-style μ/σ node labels.
pub fn export_tree(tree: &SurrogateTree, latent_vars: usize) -> TreeExport {
    #[derive(Serialize)]
    struct Doc<'a> {
        #[serde(flatten)]
        tree: &'a SurrogateTree,
        feature_names: Vec<String>,
    }
    let feature_names = (0..tree.num_features)
        .map(|i| feature_name(i, latent_vars))
        .collect();
    let json = serde_json::to_string_pretty(&Doc {
        tree,
        feature_names,
    })
    .expect("tree serialization cannot fail");
    let class_names: Vec<&str> = ActivityLabel::IN_DISTRIBUTION
        .iter()
        .map(|l| l.name())
        .collect();
    let mut lines = Vec::new();
    render_node(&tree.root, latent_vars, 0, &mut lines, &class_names);
    TreeExport {
        json,
        text: lines.join("\n"),
    }
}

/// Parses a tree previously produced by [`export_tree`].
pub fn parse_tree(json: &str) -> Result<SurrogateTree, serde_json::Error> {
    serde_json::from_str(json)
}

// ---------------------------------------------------------------------------
// Latent scatter export
// ---------------------------------------------------------------------------

/// CSV plus optional SVG scatter of the first two posterior means.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterExport {
    pub csv: String,
    pub svg: Option<String>,
}

const SCATTER_COLORS: [(&str, &str); 6] = [
    ("walk", "#1f77b4"),
    ("run", "#ff7f0e"),
    ("jump", "#2ca02c"),
    ("sit", "#d62728"),
    ("empty", "#9467bd"),
    ("squat", "#8c564b"),
];

fn label_color(label: ActivityLabel) -> &'static str {
    SCATTER_COLORS
        .iter()
        .find(|(n, _)| *n == label.name())
        .map(|(_, c)| *c)
        .unwrap_or("#333333")
}

/// Exports `(mu_0, mu_1, label)` rows plus a rendered scatter. Codes need at
/// least two latent variables; an empty input yields a header-only CSV and
/// no plot.
pub fn export_latent_scatter(
    codes: &[LatentCode],
    labels: &[ActivityLabel],
) -> Result<ScatterExport, AnalysisError> {
    if codes.len() != labels.len() {
        return Err(AnalysisError::LengthMismatch {
            predictions: codes.len(),
            labels: labels.len(),
        });
    }
    let mut csv = String::from("mu0,mu1,label\n");
    if codes.is_empty() {
        return Ok(ScatterExport { csv, svg: None });
    }
    if let Some(code) = codes.iter().find(|c| c.dim() < 2) {
        return Err(AnalysisError::DimensionTooSmall(code.dim()));
    }
    for (code, label) in codes.iter().zip(labels) {
        csv.push_str(&format!("{},{},{}\n", code.mu[0], code.mu[1], label));
    }

    // bounding box with a margin
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for code in codes {
        x0 = x0.min(code.mu[0]);
        x1 = x1.max(code.mu[0]);
        y0 = y0.min(code.mu[1]);
        y1 = y1.max(code.mu[1]);
    }
    let pad_x = ((x1 - x0) * 0.05).max(1e-6);
    let pad_y = ((y1 - y0) * 0.05).max(1e-6);
    x0 -= pad_x;
    x1 += pad_x;
    y0 -= pad_y;
    y1 += pad_y;
    let (w, h) = (640.0, 480.0);
    let sx = |x: f64| (x - x0) / (x1 - x0) * (w - 60.0) + 50.0;
    let sy = |y: f64| h - 30.0 - (y - y0) / (y1 - y0) * (h - 60.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"12\">mu0</text>\n\
         <text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {})\">mu1</text>\n",
        w / 2.0,
        h - 8.0,
        h / 2.0,
        h / 2.0
    );
    for (code, label) in codes.iter().zip(labels) {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.2\" fill=\"{}\" fill-opacity=\"0.6\"/>\n",
            sx(code.mu[0]),
            sy(code.mu[1]),
            label_color(*label)
        ));
    }
    // legend
    let mut seen: Vec<ActivityLabel> = Vec::new();
    for &l in labels {
        if !seen.contains(&l) {
            seen.push(l);
        }
    }
    for (i, l) in seen.iter().enumerate() {
        let y = 20.0 + i as f64 * 16.0;
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{y}\" r=\"4\" fill=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            w - 110.0,
            label_color(*l),
            w - 100.0,
            y + 4.0,
            l
        ));
    }
    svg.push_str("</svg>\n");
    Ok(ScatterExport {
        csv,
        svg: Some(svg),
    })
}
