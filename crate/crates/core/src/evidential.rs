//! Evidential classification head mathematics.
//!
//! A classifier under this scheme emits a non-negative *evidence* vector
//! `e` over the `K` classes. Shifting by one gives the parameters of a
//! Dirichlet distribution, `alpha = e + 1`, whose normalization
//! `S = sum(alpha)` (the Dirichlet strength) measures how much total support
//! the input collected. Belief masses `b_k = e_k / S` and the uncertainty
//! mass `u = K / S` form a subjective-logic opinion with `sum(b) + u = 1`.
//!
//! Training minimizes a log loss on the Dirichlet plus an annealed KL
//! regularizer that pushes *misleading* evidence (evidence for the wrong
//! classes) toward the uniform Dirichlet.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod special {
    //! Digamma / trigamma / log-gamma used by the Dirichlet KL and its
    //! gradient. Log-gamma and digamma come from `statrs`; trigamma is the
    //! standard recurrence-plus-asymptotic-series evaluation.

    pub use statrs::function::gamma::{digamma, ln_gamma};

    /// First derivative of digamma. Recurrence below 8, Bernoulli series
    /// above; absolute error under 1e-12 for x >= 1.
    pub fn trigamma(x: f64) -> f64 {
        assert!(x > 0.0, "trigamma domain is x > 0, got {x}");
        let mut x = x;
        let mut acc = 0.0;
        while x < 8.0 {
            acc += 1.0 / (x * x);
            x += 1.0;
        }
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        // 1/x + 1/(2x^2) + 1/(6x^3) - 1/(30x^5) + 1/(42x^7) - 1/(30x^9) + 5/(66x^11)
        let series = inv
            * (1.0
                + inv
                    * (0.5
                        + inv
                            * (1.0 / 6.0
                                + inv2
                                    * (-1.0 / 30.0
                                        + inv2
                                            * (1.0 / 42.0
                                                + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0)))))));
        acc + series
    }
}

/// Errors from evidential operations.
#[derive(Debug, Error)]
pub enum EdlError {
    #[error("evidence must be non-negative and finite, found {0} at index {1}")]
    InvalidEvidence(f64, usize),
    #[error("evidence vector must be non-empty")]
    EmptyEvidence,
    #[error("label must be a one-hot vector of length {expected}, got {detail}")]
    MalformedLabel { expected: usize, detail: String },
    #[error("alpha-tilde entries must be >= 1 (found {0}); not a misleading-evidence vector")]
    AlphaBelowOne(f64),
    #[error("batch lengths differ: {outputs} outputs vs {labels} labels")]
    BatchMismatch { outputs: usize, labels: usize },
    #[error("annealing step must be >= 1")]
    InvalidAnnealingStep,
}

/// Evidence vector together with every derived Dirichlet quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletOutput {
    /// Non-negative evidence per class.
    pub evidence: Vec<f64>,
    /// Dirichlet parameters, `evidence + 1`.
    pub alpha: Vec<f64>,
    /// Belief masses `e_k / S`.
    pub belief: Vec<f64>,
    /// Uncertainty mass `K / S`.
    pub uncertainty: f64,
    /// Dirichlet strength `S = sum(alpha)`.
    pub strength: f64,
}

impl DirichletOutput {
    pub fn num_classes(&self) -> usize {
        self.evidence.len()
    }

    /// Class with the largest belief mass; ties go to the lowest index.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (k, &b) in self.belief.iter().enumerate() {
            if b > self.belief[best] {
                best = k;
            }
        }
        best
    }
}

/// Derives the full Dirichlet opinion from an evidence vector.
pub fn dirichlet_from_evidence(evidence: &[f64]) -> Result<DirichletOutput, EdlError> {
    if evidence.is_empty() {
        return Err(EdlError::EmptyEvidence);
    }
    for (i, &e) in evidence.iter().enumerate() {
        if !e.is_finite() || e < 0.0 {
            return Err(EdlError::InvalidEvidence(e, i));
        }
    }
    let k = evidence.len() as f64;
    let alpha: Vec<f64> = evidence.iter().map(|e| e + 1.0).collect();
    let strength: f64 = alpha.iter().sum();
    let belief: Vec<f64> = evidence.iter().map(|e| e / strength).collect();
    Ok(DirichletOutput {
        evidence: evidence.to_vec(),
        alpha,
        belief,
        uncertainty: k / strength,
        strength,
    })
}

fn one_hot_index(y: &[f64], expected: usize) -> Result<usize, EdlError> {
    if y.len() != expected {
        return Err(EdlError::MalformedLabel {
            expected,
            detail: format!("length {}", y.len()),
        });
    }
    let mut hot = None;
    for (i, &v) in y.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(EdlError::MalformedLabel {
                    expected,
                    detail: "more than one hot entry".to_string(),
                });
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(EdlError::MalformedLabel {
                expected,
                detail: format!("entry {v} is neither 0 nor 1"),
            });
        }
    }
    hot.ok_or(EdlError::MalformedLabel {
        expected,
        detail: "no hot entry".to_string(),
    })
}

/// One-hot encoding of `class` over `k` classes.
pub fn one_hot(class: usize, k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    y[class] = 1.0;
    y
}

/// Dirichlet log loss for one sample: `log S - log alpha_j` for the true
/// class `j`.
pub fn edl_log_loss(output: &DirichletOutput, y: &[f64]) -> Result<f64, EdlError> {
    let j = one_hot_index(y, output.num_classes())?;
    Ok(output.strength.ln() - output.alpha[j].ln())
}

/// Dirichlet parameters after removing the non-misleading (true-class)
/// evidence: the true-class coordinate becomes 1, others keep their alpha.
pub fn misleading_alpha(output: &DirichletOutput, y: &[f64]) -> Result<Vec<f64>, EdlError> {
    let j = one_hot_index(y, output.num_classes())?;
    let mut tilde = output.alpha.clone();
    tilde[j] = 1.0;
    Ok(tilde)
}

/// Closed-form KL divergence from `Dirichlet(alpha_tilde)` to the uniform
/// `Dirichlet(1, ..., 1)`.
///
/// Entries must be >= 1: that is guaranteed by the [`misleading_alpha`]
/// construction, and values below 1 are rejected rather than evaluated.
pub fn kl_to_uniform(alpha_tilde: &[f64]) -> Result<f64, EdlError> {
    use special::{digamma, ln_gamma};
    if alpha_tilde.is_empty() {
        return Err(EdlError::EmptyEvidence);
    }
    for &a in alpha_tilde {
        if !(a >= 1.0) || !a.is_finite() {
            return Err(EdlError::AlphaBelowOne(a));
        }
    }
    if alpha_tilde.iter().all(|&a| a == 1.0) {
        return Ok(0.0);
    }
    let k = alpha_tilde.len() as f64;
    let total: f64 = alpha_tilde.iter().sum();
    let mut kl = ln_gamma(total) - ln_gamma(k);
    let psi_total = digamma(total);
    for &a in alpha_tilde {
        kl -= ln_gamma(a);
        kl += (a - 1.0) * (digamma(a) - psi_total);
    }
    // clamp the tiny residue cancellation can leave near the uniform vector
    Ok(kl.max(0.0))
}

/// Epoch-indexed annealing coefficient `min(1, t / annealing_step)`.
pub fn annealing_coefficient(t: usize, annealing_step: usize) -> f64 {
    assert!(annealing_step >= 1, "annealing_step must be >= 1");
    (t as f64 / annealing_step as f64).min(1.0)
}

/// Loss configuration: number of classes and the KL annealing horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdlLossConfig {
    pub annealing_step: usize,
    pub num_classes: usize,
}

impl EdlLossConfig {
    pub fn new(annealing_step: usize, num_classes: usize) -> Result<Self, EdlError> {
        if annealing_step < 1 {
            return Err(EdlError::InvalidAnnealingStep);
        }
        Ok(EdlLossConfig {
            annealing_step,
            num_classes,
        })
    }
}

/// Batch loss: sum of per-sample log losses plus the annealed sum of KL
/// penalties on misleading evidence.
pub fn total_edl_loss(
    outputs: &[DirichletOutput],
    labels: &[Vec<f64>],
    t: usize,
    config: &EdlLossConfig,
) -> Result<f64, EdlError> {
    if outputs.len() != labels.len() {
        return Err(EdlError::BatchMismatch {
            outputs: outputs.len(),
            labels: labels.len(),
        });
    }
    let lambda = annealing_coefficient(t, config.annealing_step);
    let mut total = 0.0;
    for (out, y) in outputs.iter().zip(labels) {
        total += edl_log_loss(out, y)?;
        total += lambda * kl_to_uniform(&misleading_alpha(out, y)?)?;
    }
    Ok(total)
}

/// Gradient of one sample's `log loss + lambda * KL(misleading)` with
/// respect to the evidence vector. Used by classifier training and checked
/// against finite differences in tests.
pub fn edl_evidence_grad(
    output: &DirichletOutput,
    y: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, EdlError> {
    use special::trigamma;
    let j = one_hot_index(y, output.num_classes())?;
    let k = output.num_classes() as f64;
    let s = output.strength;
    let tilde = misleading_alpha(output, y)?;
    let tilde_sum: f64 = tilde.iter().sum();
    let psi1_sum = trigamma(tilde_sum);
    let mut grad = Vec::with_capacity(output.num_classes());
    for (idx, &a) in output.alpha.iter().enumerate() {
        // log-loss part
        let mut g = 1.0 / s;
        if idx == j {
            g -= 1.0 / a;
        } else {
            // KL part flows only through the off-class coordinates
            let at = tilde[idx];
            g += lambda * ((at - 1.0) * trigamma(at) - (tilde_sum - k) * psi1_sum);
        }
        grad.push(g);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_evidence_is_the_vacuous_opinion() {
        let out = dirichlet_from_evidence(&[0.0; 5]).unwrap();
        assert_eq!(out.alpha, vec![1.0; 5]);
        assert_eq!(out.strength, 5.0);
        assert!(out.belief.iter().all(|&b| b == 0.0));
        assert_eq!(out.uncertainty, 1.0);
    }

    #[test]
    fn single_class_evidence() {
        let out = dirichlet_from_evidence(&[4.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(out.strength, 9.0);
        assert_abs_diff_eq!(out.belief[0], 4.0 / 9.0, epsilon = 1e-15);
        assert!(out.belief[1..].iter().all(|&b| b == 0.0));
        assert_abs_diff_eq!(out.uncertainty, 5.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn uniform_positive_evidence() {
        let out = dirichlet_from_evidence(&[10.0; 5]).unwrap();
        for b in &out.belief {
            assert_abs_diff_eq!(*b, 10.0 / 55.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(out.uncertainty, 5.0 / 55.0, epsilon = 1e-15);
    }

    #[test]
    fn negative_evidence_rejected() {
        assert!(matches!(
            dirichlet_from_evidence(&[1.0, -0.1]),
            Err(EdlError::InvalidEvidence(_, 1))
        ));
        assert!(matches!(
            dirichlet_from_evidence(&[f64::NAN, 0.0]),
            Err(EdlError::InvalidEvidence(_, 0))
        ));
    }

    #[test]
    fn log_loss_examples() {
        let out = dirichlet_from_evidence(&[4.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let loss = edl_log_loss(&out, &one_hot(0, 5)).unwrap();
        assert_abs_diff_eq!(loss, (9.0_f64 / 5.0).ln(), epsilon = 1e-12);

        let uniform = dirichlet_from_evidence(&[0.0; 5]).unwrap();
        for j in 0..5 {
            let l = edl_log_loss(&uniform, &one_hot(j, 5)).unwrap();
            assert_abs_diff_eq!(l, (5.0_f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn log_loss_vanishes_with_overwhelming_evidence() {
        let mut prev = f64::INFINITY;
        for e in [1e2, 1e4, 1e6, 1e8] {
            let out = dirichlet_from_evidence(&[e, 0.0, 0.0, 0.0, 0.0]).unwrap();
            let loss = edl_log_loss(&out, &one_hot(0, 5)).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn malformed_labels_rejected() {
        let out = dirichlet_from_evidence(&[0.0; 3]).unwrap();
        assert!(edl_log_loss(&out, &[1.0, 1.0, 0.0]).is_err());
        assert!(edl_log_loss(&out, &[0.0, 0.0, 0.0]).is_err());
        assert!(edl_log_loss(&out, &[0.5, 0.5, 0.0]).is_err());
        assert!(edl_log_loss(&out, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn misleading_alpha_examples() {
        let out = dirichlet_from_evidence(&[4.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            misleading_alpha(&out, &one_hot(0, 5)).unwrap(),
            vec![1.0; 5]
        );

        let out = dirichlet_from_evidence(&[4.0, 2.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            misleading_alpha(&out, &one_hot(0, 5)).unwrap(),
            vec![1.0, 3.0, 1.0, 1.0, 1.0]
        );

        let uniform = dirichlet_from_evidence(&[0.0; 5]).unwrap();
        assert_eq!(
            misleading_alpha(&uniform, &one_hot(1, 5)).unwrap(),
            uniform.alpha
        );
    }

    #[test]
    fn kl_to_uniform_zero_iff_uniform() {
        assert_eq!(kl_to_uniform(&[1.0; 5]).unwrap(), 0.0);
        let v = kl_to_uniform(&[1.0, 3.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(v > 0.0);
    }

    #[test]
    fn kl_rejects_alpha_below_one() {
        assert!(matches!(
            kl_to_uniform(&[0.9, 1.0]),
            Err(EdlError::AlphaBelowOne(_))
        ));
    }

    #[test]
    fn kl_monotone_in_the_elevated_coordinate() {
        // Growing the single coordinate that carries misleading evidence
        // strictly increases the divergence. (Coordinate-wise monotonicity
        // does NOT hold in general: from alpha = (2, 5), raising the first
        // coordinate moves the distribution closer to uniform.)
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let k = rng.random_range(2..6);
            let j = rng.random_range(0..k);
            let mut alpha = vec![1.0; k];
            alpha[j] = 1.0 + rng.random_range(0.05..4.0);
            let base = kl_to_uniform(&alpha).unwrap();
            let mut bumped = alpha.clone();
            bumped[j] += 0.05;
            assert!(kl_to_uniform(&bumped).unwrap() > base);
        }
        // the general-case counterexample, pinned
        let base = kl_to_uniform(&[2.0, 5.0]).unwrap();
        let bumped = kl_to_uniform(&[2.05, 5.0]).unwrap();
        assert!(bumped < base);
    }

    #[test]
    fn kl_matches_monte_carlo_small() {
        // spot check against a sampled estimate of the divergence integral
        use rand_distr::{Distribution, Gamma};
        use special::ln_gamma;
        let alpha = [1.0, 3.0, 1.0, 1.0, 1.0];
        let closed = kl_to_uniform(&alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let k = alpha.len() as f64;
        // log D(pi|alpha) - log D(pi|1) = const + sum (a_k - 1) ln pi_k
        let const_term: f64 = ln_gamma(alpha.iter().sum())
            - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
            - ln_gamma(k);
        let mut acc = 0.0;
        for _ in 0..n {
            let gs: Vec<f64> = alpha
                .iter()
                .map(|&a| Gamma::new(a, 1.0).unwrap().sample(&mut rng))
                .collect();
            let total: f64 = gs.iter().sum();
            let mut log_ratio = const_term;
            for (g, &a) in gs.iter().zip(alpha.iter()) {
                log_ratio += (a - 1.0) * (g / total).ln();
            }
            acc += log_ratio;
        }
        let mc = acc / n as f64;
        assert!(
            (mc - closed).abs() / closed < 0.02,
            "closed {closed} vs MC {mc}"
        );
    }

    #[test]
    fn annealing_examples() {
        assert_eq!(annealing_coefficient(0, 22), 0.0);
        assert_abs_diff_eq!(annealing_coefficient(11, 22), 0.5, epsilon = 1e-15);
        assert_eq!(annealing_coefficient(30, 22), 1.0);
        assert_eq!(annealing_coefficient(3, 3), 1.0);
    }

    #[test]
    fn total_loss_composition() {
        let cfg = EdlLossConfig::new(22, 5).unwrap();
        let out = dirichlet_from_evidence(&[4.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let labels = vec![one_hot(0, 5)];
        // t = 0: the KL term contributes exactly zero
        let l0 = total_edl_loss(std::slice::from_ref(&out), &labels, 0, &cfg).unwrap();
        assert_abs_diff_eq!(l0, (9.0_f64 / 5.0).ln(), epsilon = 1e-12);
        // saturated lambda with zero misleading evidence: still just log loss
        let l_sat = total_edl_loss(std::slice::from_ref(&out), &labels, 30, &cfg).unwrap();
        assert_abs_diff_eq!(l_sat, (9.0_f64 / 5.0).ln(), epsilon = 1e-12);
        // wrong-class evidence picks up the KL penalty once annealed
        let noisy = dirichlet_from_evidence(&[4.0, 2.0, 0.0, 0.0, 0.0]).unwrap();
        let l_noisy = total_edl_loss(std::slice::from_ref(&noisy), &labels, 30, &cfg).unwrap();
        let expected = edl_log_loss(&noisy, &labels[0]).unwrap()
            + kl_to_uniform(&[1.0, 3.0, 1.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(l_noisy, expected, epsilon = 1e-12);
    }

    #[test]
    fn log_loss_permutation_invariant() {
        let e = [3.0, 0.5, 2.0, 0.0, 1.0];
        let out = dirichlet_from_evidence(&e).unwrap();
        let base = edl_log_loss(&out, &one_hot(2, 5)).unwrap();
        // swap classes 0 and 2 in both evidence and label
        let mut e2 = e;
        e2.swap(0, 2);
        let out2 = dirichlet_from_evidence(&e2).unwrap();
        let swapped = edl_log_loss(&out2, &one_hot(0, 5)).unwrap();
        assert_abs_diff_eq!(base, swapped, epsilon = 1e-15);
    }

    #[test]
    fn uncertainty_decreases_with_total_evidence() {
        let proportions = [0.5, 0.2, 0.1, 0.1, 0.1];
        let mut prev = 1.0;
        for scale in [1.0, 2.0, 5.0, 20.0, 100.0] {
            let e: Vec<f64> = proportions.iter().map(|p| p * scale).collect();
            let u = dirichlet_from_evidence(&e).unwrap().uncertainty;
            assert!(u < prev);
            prev = u;
        }
    }

    #[test]
    fn evidence_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = EdlLossConfig::new(10, 5).unwrap();
        for trial in 0..20 {
            let e: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..6.0)).collect();
            let j = rng.random_range(0..5);
            let y = one_hot(j, 5);
            let t = trial % 15;
            let lambda = annealing_coefficient(t, cfg.annealing_step);
            let out = dirichlet_from_evidence(&e).unwrap();
            let grad = edl_evidence_grad(&out, &y, lambda).unwrap();

            let loss_at = |e: &[f64]| -> f64 {
                let o = dirichlet_from_evidence(e).unwrap();
                total_edl_loss(
                    std::slice::from_ref(&o),
                    std::slice::from_ref(&y),
                    t,
                    &cfg,
                )
                .unwrap()
            };
            let h = 1e-6;
            for k in 0..5 {
                let mut up = e.clone();
                up[k] += h;
                let mut down = e.clone();
                down[k] -= h;
                let fd = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
                let denom = grad[k].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (grad[k] - fd).abs() / denom < 1e-4,
                    "trial {trial} coord {k}: analytic {} vs fd {fd}",
                    grad[k]
                );
            }
        }
    }

    #[test]
    fn special_function_anchors() {
        use special::{digamma, ln_gamma, trigamma};
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        assert_abs_diff_eq!(digamma(1.0), -EULER_GAMMA, epsilon = 1e-12);
        assert_abs_diff_eq!(digamma(2.0), 1.0 - EULER_GAMMA, epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(5.0), (24.0_f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            epsilon = 1e-12
        );
        // trigamma(1) = pi^2 / 6
        assert_abs_diff_eq!(
            trigamma(1.0),
            std::f64::consts::PI.powi(2) / 6.0,
            epsilon = 1e-12
        );
        // recurrence psi1(x) - psi1(x+1) = 1/x^2
        for x in [1.3, 2.7, 5.9, 17.0, 123.4] {
            assert_abs_diff_eq!(
                trigamma(x) - trigamma(x + 1.0),
                1.0 / (x * x),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn special_function_accuracy_on_target_range() {
        use special::{digamma, ln_gamma};
        // ln_gamma against the exact factorial ladder on [1, 170]
        let mut lg = 0.0; // ln Gamma(1)
        for n in 1..170_u32 {
            let x = n as f64;
            let rel = (ln_gamma(x) - lg).abs() / lg.abs().max(1.0);
            assert!(rel < 1e-12, "ln_gamma({x}) off by {rel}");
            lg += x.ln();
        }
        // ln_gamma against the Stirling series for x in [100, 1e4]
        let stirling = |x: f64| {
            (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
                - 1.0 / (360.0 * x.powi(3))
                + 1.0 / (1260.0 * x.powi(5))
        };
        for &x in &[100.0, 316.0, 1000.0, 3162.0, 10000.0] {
            let rel = (ln_gamma(x) - stirling(x)).abs() / stirling(x).abs();
            assert!(rel < 1e-10, "ln_gamma({x}) relative error {rel}");
        }
        // digamma against its asymptotic series for x in [100, 1e4], then
        // walked down to [1, 100) through the recurrence
        let psi_asymptotic = |x: f64| {
            x.ln() - 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x) + 1.0 / (120.0 * x.powi(4))
                - 1.0 / (252.0 * x.powi(6))
        };
        for &x in &[100.0, 1000.0, 10000.0] {
            let rel = (digamma(x) - psi_asymptotic(x)).abs() / psi_asymptotic(x).abs();
            assert!(rel < 1e-10, "digamma({x}) relative error {rel}");
        }
        for &x0 in &[1.0_f64, 1.5, 2.25, 7.75, 33.5, 99.0] {
            // psi(x0) = psi(x0 + n) - sum 1/(x0 + i), with x0 + n >= 128
            let n = (128.0 - x0).ceil() as usize;
            let mut reference = psi_asymptotic(x0 + n as f64);
            for i in 0..n {
                reference -= 1.0 / (x0 + i as f64);
            }
            let rel = (digamma(x0) - reference).abs() / reference.abs().max(1e-3);
            assert!(rel < 1e-10, "digamma({x0}) relative error {rel}");
        }
    }

    proptest! {
        #[test]
        fn belief_plus_uncertainty_is_one(
            evidence in proptest::collection::vec(0.0_f64..1e6, 2..10)
        ) {
            let out = dirichlet_from_evidence(&evidence).unwrap();
            let total: f64 = out.belief.iter().sum::<f64>() + out.uncertainty;
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(out.uncertainty > 0.0 && out.uncertainty <= 1.0);
            prop_assert!(out.strength >= out.num_classes() as f64);
        }

        #[test]
        fn kl_nonnegative_and_zero_only_at_uniform(
            alpha in proptest::collection::vec(1.0_f64..50.0, 2..8)
        ) {
            let kl = kl_to_uniform(&alpha).unwrap();
            prop_assert!(kl >= 0.0);
            let uniform = alpha.iter().all(|&a| a == 1.0);
            if !uniform && alpha.iter().any(|&a| a > 1.0 + 1e-9) {
                prop_assert!(kl > 0.0);
            }
        }
    }
}
