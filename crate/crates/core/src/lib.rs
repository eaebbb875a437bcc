//! Uncertainty-aware Wi-Fi passive-radar human activity recognition.
//!
//! CSI magnitude spectrograms are normalized, cut into sliding windows and
//! compressed by convolutional VAEs into small diagonal-Gaussian latent
//! codes ([`vae`]). An evidential MLP ([`arch`], [`evidential`]) fuses the
//! per-antenna codes into a Dirichlet opinion over five activities, which
//! exposes out-of-distribution behaviour through its strength; [`analysis`]
//! adds metrics, the OOD report and an interpretable depth-limited
//! surrogate tree over the same latent features.
//!
//! [`synth`] generates a physics-flavored synthetic dataset so the whole
//! pipeline runs and is testable without captures; [`data`] defines the
//! on-disk interchange format; [`checkpoint`] the model archive format.
//! Everything is seeded and single-threaded: equal seeds give bit-identical
//! models and reports.

pub mod analysis;
pub mod arch;
pub mod checkpoint;
pub mod data;
pub mod evidential;
pub mod nn;
pub mod synth;
pub mod vae;
