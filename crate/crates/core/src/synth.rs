//! Physics-flavored synthetic CSI generator.
//!
//! Models a small room with one transmitter, a receiver with several
//! antennas, a handful of static propagation paths (line of sight, two wall
//! reflections, optional configured echoes) and at most one moving scatterer
//! (the person). The channel at frame time `t` and subcarrier frequency
//! `f_k` is the coherent sum of path responses `g * exp(-j 2 pi f_k tau)`;
//! the recorded value is its magnitude in arbitrary units plus clipped
//! Gaussian measurement noise.
//!
//! The point is a learnable, class-distinct dataset with activity-dependent
//! time-frequency structure, not electromagnetic accuracy. Walking and
//! running trace a circuit (run twice as fast), jumping and squatting
//! oscillate in place at different cadences, sitting adds a nearly static
//! scatterer and the empty room has none.

use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ActivityLabel, CsiRecording, DataError};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Converts summed path amplitudes to "arbitrary chipset units".
const UNIT_SCALE: f64 = 80.0;
/// Amplitude budget of the direct transmitter paths.
const TX_GAIN: f64 = 18.0;
/// Amplitude budget of the body-scattered path. Deliberately strong
/// relative to the static paths so activity signatures dominate the
/// normalized dynamic range.
const BODY_GAIN: f64 = 20.0;
/// Reflection coefficient of the room walls.
const WALL_REFLECTION: f64 = -0.7;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid channel configuration: {0}")]
    Config(String),
    #[error("invalid synthesis request: {0}")]
    Domain(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Trajectory of the moving scatterer on the 2-D room plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PathModel {
    /// Stationary scatterer.
    Fixed { position: [f64; 2] },
    /// Circular circuit walked at constant speed.
    Circuit {
        center: [f64; 2],
        radius: f64,
        speed_mps: f64,
        phase: f64,
    },
    /// In-place oscillation along `axis`; `rectified` bounces like a jump
    /// (`|sin|`) instead of swinging symmetrically.
    Oscillation {
        center: [f64; 2],
        axis: [f64; 2],
        amplitude_m: f64,
        rate_hz: f64,
        rectified: bool,
    },
}

impl PathModel {
    /// Scatterer position at time `t` seconds.
    pub fn position_at(&self, t: f64) -> [f64; 2] {
        match *self {
            PathModel::Fixed { position } => position,
            PathModel::Circuit {
                center,
                radius,
                speed_mps,
                phase,
            } => {
                let omega = speed_mps / radius;
                let a = omega * t + phase;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
            PathModel::Oscillation {
                center,
                axis,
                amplitude_m,
                rate_hz,
                rectified,
            } => {
                let s = (2.0 * std::f64::consts::PI * rate_hz * t).sin();
                let s = if rectified { s.abs() } else { s };
                [
                    center[0] + axis[0] * amplitude_m * s,
                    center[1] + axis[1] * amplitude_m * s,
                ]
            }
        }
    }

    /// Peak speed of the trajectory, used to order the activity presets.
    pub fn max_speed(&self) -> f64 {
        match *self {
            PathModel::Fixed { .. } => 0.0,
            PathModel::Circuit { speed_mps, .. } => speed_mps,
            PathModel::Oscillation {
                amplitude_m,
                rate_hz,
                ..
            } => 2.0 * std::f64::consts::PI * rate_hz * amplitude_m,
        }
    }
}

/// What one activity looks like to the channel: a trajectory, a scattering
/// strength and a limb-motion cadence that modulates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub activity: ActivityLabel,
    pub path: PathModel,
    /// Relative scattering strength; 0 means no person in the room.
    pub body_cross_section: f64,
    /// Gait/bounce cadence; modulates the cross-section for circuit motion.
    pub periodicity_hz: f64,
}

impl MotionProfile {
    /// Preset profile per activity. Speeds are ordered run > walk > sit,
    /// and squat sits between sit and jump in both cadence and amplitude so
    /// it makes a plausible near-OOD class.
    pub fn preset(activity: ActivityLabel) -> MotionProfile {
        match activity {
            ActivityLabel::Walk => MotionProfile {
                activity,
                path: PathModel::Circuit {
                    center: [3.4, 2.6],
                    radius: 1.4,
                    speed_mps: 1.0,
                    phase: 0.0,
                },
                body_cross_section: 0.8,
                periodicity_hz: 1.8,
            },
            ActivityLabel::Run => MotionProfile {
                activity,
                path: PathModel::Circuit {
                    center: [3.6, 2.8],
                    radius: 1.5,
                    speed_mps: 2.0,
                    phase: std::f64::consts::FRAC_PI_3,
                },
                body_cross_section: 1.0,
                periodicity_hz: 2.8,
            },
            ActivityLabel::Jump => MotionProfile {
                activity,
                path: PathModel::Oscillation {
                    center: [5.5, 3.8],
                    axis: [0.0, 1.0],
                    amplitude_m: 0.35,
                    rate_hz: 1.2,
                    rectified: true,
                },
                body_cross_section: 0.9,
                periodicity_hz: 1.2,
            },
            ActivityLabel::Sit => MotionProfile {
                activity,
                path: PathModel::Oscillation {
                    center: [2.2, 4.6],
                    axis: [0.0, 1.0],
                    amplitude_m: 0.02,
                    rate_hz: 0.3,
                    rectified: false,
                },
                body_cross_section: 0.55,
                periodicity_hz: 0.3,
            },
            ActivityLabel::Empty => MotionProfile {
                activity,
                path: PathModel::Fixed {
                    position: [3.75, 3.0],
                },
                body_cross_section: 0.0,
                periodicity_hz: 0.0,
            },
            ActivityLabel::Squat => MotionProfile {
                activity,
                path: PathModel::Oscillation {
                    center: [4.3, 4.1],
                    axis: [0.0, 1.0],
                    amplitude_m: 0.22,
                    rate_hz: 0.45,
                    rectified: true,
                },
                body_cross_section: 0.8,
                periodicity_hz: 0.45,
            },
        }
    }
}

/// One static propagation path beyond the geometric ones: an echo with a
/// fixed delay and amplitude. Each such path is assigned a deterministic
/// arrival direction so different antennas see different phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticPath {
    pub delay_s: f64,
    pub gain: f64,
}

/// Room, radio and receiver geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Room extent in meters; the transmitter sits at 10% of each dimension.
    pub room_dims: [f64; 2],
    /// Extra static echoes on top of line-of-sight and wall reflections.
    pub static_paths: Vec<StaticPath>,
    pub antenna_positions: Vec<[f64; 2]>,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarriers: usize,
    /// Standard deviation of the additive measurement noise, in output
    /// (arbitrary) units.
    pub noise_std: f64,
    pub seed: u64,
}

impl ChannelConfig {
    /// Reduced-rate configuration for fast runs. The carrier is lowered so
    /// that body motion stays below the Nyquist rate of a ~16 fps frame
    /// clock while keeping the activity presets at human speeds.
    pub fn desk_default() -> ChannelConfig {
        ChannelConfig {
            room_dims: [7.5, 6.0],
            static_paths: vec![
                StaticPath {
                    delay_s: 35e-9,
                    gain: 1.2,
                },
                StaticPath {
                    delay_s: 60e-9,
                    gain: 0.8,
                },
            ],
            antenna_positions: vec![[6.8, 5.2], [6.3, 5.2], [5.8, 5.2], [5.3, 5.2]],
            carrier_hz: 4.0e8,
            bandwidth_hz: 1.6e8,
            subcarriers: 64,
            noise_std: 3.0,
            seed: 0,
        }
    }

    /// Full-fidelity configuration: 2048 subcarriers over a 160 MHz channel
    /// in the 5 GHz band, four antennas spaced 4 cm.
    pub fn paper_default() -> ChannelConfig {
        ChannelConfig {
            room_dims: [7.5, 6.0],
            static_paths: vec![
                StaticPath {
                    delay_s: 35e-9,
                    gain: 1.2,
                },
                StaticPath {
                    delay_s: 60e-9,
                    gain: 0.8,
                },
            ],
            antenna_positions: vec![[6.8, 5.2], [6.76, 5.2], [6.72, 5.2], [6.68, 5.2]],
            carrier_hz: 5.6e9,
            bandwidth_hz: 1.6e8,
            subcarriers: 2048,
            noise_std: 3.0,
            seed: 0,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn antennas(&self) -> usize {
        self.antenna_positions.len()
    }

    fn tx_position(&self) -> [f64; 2] {
        [0.1 * self.room_dims[0], 0.1 * self.room_dims[1]]
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.subcarriers < 8 {
            return Err(SynthError::Config(format!(
                "at least 8 subcarriers required, got {}",
                self.subcarriers
            )));
        }
        if self.antenna_positions.is_empty() {
            return Err(SynthError::Config("at least one antenna required".into()));
        }
        if !(self.carrier_hz > 0.0) || !(self.bandwidth_hz > 0.0) {
            return Err(SynthError::Config(
                "carrier and bandwidth must be positive".into(),
            ));
        }
        if self.room_dims.iter().any(|d| !(*d > 0.0)) {
            return Err(SynthError::Config("room dimensions must be positive".into()));
        }
        if self.noise_std < 0.0 {
            return Err(SynthError::Config("noise_std must be non-negative".into()));
        }
        // decorrelation premise: antennas further apart than half a wavelength
        let half_lambda = 0.5 * self.wavelength();
        for i in 0..self.antenna_positions.len() {
            for j in (i + 1)..self.antenna_positions.len() {
                if dist(self.antenna_positions[i], self.antenna_positions[j]) <= half_lambda {
                    return Err(SynthError::Config(format!(
                        "antennas {i} and {j} are closer than half a wavelength ({half_lambda:.3} m)"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Deterministic unit vector for the arrival direction of extra path `p`.
fn echo_direction(seed: u64, p: usize) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(p as u64));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    [angle.cos(), angle.sin()]
}

/// Static (person-independent) channel response per antenna and subcarrier.
fn static_response(config: &ChannelConfig, freqs: &[f64]) -> Vec<Vec<Complex64>> {
    let tx = config.tx_position();
    let ref_ant = config.antenna_positions[0];
    let mut out = Vec::with_capacity(config.antennas());
    for ant in &config.antenna_positions {
        // line of sight plus two wall images (mirrors across the x=0 and
        // y=0 walls)
        let mut paths: Vec<(f64, f64)> = Vec::new();
        let d_los = dist(tx, *ant);
        paths.push((d_los / SPEED_OF_LIGHT, TX_GAIN / d_los));
        for image in [[-tx[0], tx[1]], [tx[0], -tx[1]]] {
            let d = dist(image, *ant);
            paths.push((d / SPEED_OF_LIGHT, WALL_REFLECTION * TX_GAIN / d));
        }
        for (p, echo) in config.static_paths.iter().enumerate() {
            let u = echo_direction(config.seed, p);
            let extra = ((ant[0] - ref_ant[0]) * u[0] + (ant[1] - ref_ant[1]) * u[1])
                / SPEED_OF_LIGHT;
            paths.push((echo.delay_s + d_los / SPEED_OF_LIGHT + extra, echo.gain));
        }
        let per_subcarrier = freqs
            .iter()
            .map(|&f| {
                paths
                    .iter()
                    .map(|&(tau, g)| Complex64::from_polar(g, -std::f64::consts::TAU * f * tau))
                    .sum()
            })
            .collect();
        out.push(per_subcarrier);
    }
    out
}

fn subcarrier_freqs(config: &ChannelConfig) -> Vec<f64> {
    let k = config.subcarriers;
    let step = config.bandwidth_hz / (k - 1) as f64;
    let start = config.carrier_hz - 0.5 * config.bandwidth_hz;
    (0..k).map(|i| start + i as f64 * step).collect()
}

/// Synthesizes one activity recording: `round(duration * fps)` frames of
/// `subcarriers x antennas` magnitudes. Deterministic given
/// `(profile, config, duration, frame rate)`.
pub fn synthesize_recording(
    profile: &MotionProfile,
    config: &ChannelConfig,
    duration_s: f64,
    frame_rate_hz: f64,
) -> Result<CsiRecording, SynthError> {
    config.validate()?;
    if !(duration_s > 0.0) || !(frame_rate_hz > 0.0) {
        return Err(SynthError::Domain(
            "duration and frame rate must be positive".into(),
        ));
    }
    if profile.body_cross_section < 0.0 {
        return Err(SynthError::Domain("cross-section must be non-negative".into()));
    }
    let frames = (duration_s * frame_rate_hz).round() as usize;
    if frames == 0 {
        return Err(SynthError::Domain(
            "duration too short for one frame".into(),
        ));
    }
    let freqs = subcarrier_freqs(config);
    let statics = static_response(config, &freqs);
    let tx = config.tx_position();
    let n_ant = config.antennas();
    let n_sub = config.subcarriers;

    // per-recording noise stream, keyed by activity so suite members differ
    let label_salt = profile.activity.class_index().unwrap_or(5) as u64 + 1;
    let mut noise_rng =
        ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(label_salt.wrapping_mul(0xA247_9FD3)));

    let mut values = Array3::<f32>::zeros((frames, n_sub, n_ant));
    let moving = profile.body_cross_section > 0.0;
    for frame in 0..frames {
        let t = frame as f64 / frame_rate_hz;
        // limb-swing modulation of the scattering strength
        let cs = profile.body_cross_section
            * (1.0
                + 0.2
                    * (std::f64::consts::TAU * profile.periodicity_hz * t)
                        .sin());
        let pos = profile.path.position_at(t);
        let d1 = dist(tx, pos);
        for (a, ant) in config.antenna_positions.iter().enumerate() {
            let body = if moving {
                let d2 = dist(pos, *ant);
                let tau = (d1 + d2) / SPEED_OF_LIGHT;
                let gain = cs * BODY_GAIN / (d1 * d2).sqrt();
                Some((tau, gain))
            } else {
                None
            };
            for k in 0..n_sub {
                let mut h = statics[a][k];
                if let Some((tau, gain)) = body {
                    h += Complex64::from_polar(gain, -std::f64::consts::TAU * freqs[k] * tau);
                }
                let mut v = h.norm() * UNIT_SCALE;
                if config.noise_std > 0.0 {
                    let n: f64 = noise_rng.sample(StandardNormal);
                    v += config.noise_std * n;
                }
                values[[frame, k, a]] = v.max(0.0) as f32;
            }
        }
    }
    Ok(CsiRecording::new(values, frame_rate_hz, profile.activity)?)
}

/// The six preset recordings: five in-distribution activities plus squat.
pub fn standard_suite(
    config: &ChannelConfig,
    duration_s: f64,
    frame_rate_hz: f64,
) -> Result<Vec<CsiRecording>, SynthError> {
    ActivityLabel::ALL
        .iter()
        .map(|&label| {
            synthesize_recording(
                &MotionProfile::preset(label),
                config,
                duration_s,
                frame_rate_hz,
            )
        })
        .collect()
}
