//! CSI dataset representation: recordings, normalization, sliding windows and
//! train/test splitting.
//!
//! A [`CsiRecording`] is the magnitude of the channel frequency response over
//! time for one activity: a `frames x subcarriers x antennas` array of
//! non-negative reals in arbitrary chipset units. Recordings are normalized
//! once against a dataset-wide constant and then cut into overlapping
//! [`CsiWindow`]s which are the model input unit.
//!
//! The on-disk interchange format is one `<activity>.bin` file per activity
//! (row-major little-endian f32) plus a `manifest.json` sidecar, see
//! [`DatasetManifest`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from dataset loading, normalization, windowing and splitting.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt data file {path}: expected {expected} bytes, found {actual}")]
    Corruption {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate normalization: dataset maximum is not strictly positive")]
    DegenerateNormalization,
    #[error("recording for {0:?} is already normalized")]
    AlreadyNormalized(ActivityLabel),
    #[error("recording for {0:?} is not normalized")]
    NotNormalized(ActivityLabel),
    #[error("normalization constant must be positive, got {0}")]
    InvalidConstant(f32),
    #[error("window of {window} frames does not fit a recording of {frames} frames")]
    WindowOutOfRange { window: usize, frames: usize },
    #[error("antenna index {antenna} out of range (recording has {antennas})")]
    AntennaOutOfRange { antenna: usize, antennas: usize },
    #[error("class {label:?} has only {count} windows; at least 2 are required to split")]
    InsufficientData { label: ActivityLabel, count: usize },
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Ground-truth activity. The first five are the in-distribution classes
/// (`K = 5`); squat is held out as the out-of-distribution activity and never
/// enters training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityLabel {
    Walk,
    Run,
    Jump,
    Sit,
    Empty,
    Squat,
}

/// Number of in-distribution classes.
pub const NUM_CLASSES: usize = 5;

impl ActivityLabel {
    /// The five in-distribution classes, in canonical class-index order.
    pub const IN_DISTRIBUTION: [ActivityLabel; NUM_CLASSES] = [
        ActivityLabel::Walk,
        ActivityLabel::Run,
        ActivityLabel::Jump,
        ActivityLabel::Sit,
        ActivityLabel::Empty,
    ];

    /// All labels including the held-out OOD activity.
    pub const ALL: [ActivityLabel; 6] = [
        ActivityLabel::Walk,
        ActivityLabel::Run,
        ActivityLabel::Jump,
        ActivityLabel::Sit,
        ActivityLabel::Empty,
        ActivityLabel::Squat,
    ];

    pub fn in_distribution(self) -> bool {
        !matches!(self, ActivityLabel::Squat)
    }

    /// Canonical class index for in-distribution labels; `None` for squat.
    pub fn class_index(self) -> Option<usize> {
        match self {
            ActivityLabel::Walk => Some(0),
            ActivityLabel::Run => Some(1),
            ActivityLabel::Jump => Some(2),
            ActivityLabel::Sit => Some(3),
            ActivityLabel::Empty => Some(4),
            ActivityLabel::Squat => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityLabel::Walk => "walk",
            ActivityLabel::Run => "run",
            ActivityLabel::Jump => "jump",
            ActivityLabel::Sit => "sit",
            ActivityLabel::Empty => "empty",
            ActivityLabel::Squat => "squat",
        }
    }

    pub fn from_name(name: &str) -> Option<ActivityLabel> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One activity's magnitude CSI stream: `frames x subcarriers x antennas`.
#[derive(Debug, Clone)]
pub struct CsiRecording {
    values: Array3<f32>,
    frame_rate_hz: f64,
    activity: ActivityLabel,
    normalized: bool,
}

impl CsiRecording {
    /// Builds a raw (un-normalized) recording, validating the magnitude and
    /// shape invariants.
    pub fn new(
        values: Array3<f32>,
        frame_rate_hz: f64,
        activity: ActivityLabel,
    ) -> Result<Self, DataError> {
        let (frames, subcarriers, antennas) = values.dim();
        if frames == 0 || subcarriers == 0 || antennas == 0 {
            return Err(DataError::Shape(format!(
                "recording dimensions must all be >= 1, got {frames}x{subcarriers}x{antennas}"
            )));
        }
        if !(frame_rate_hz > 0.0) {
            return Err(DataError::Domain(format!(
                "frame rate must be positive, got {frame_rate_hz}"
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(DataError::Domain(format!(
                "magnitudes must be finite and non-negative, found {v}"
            )));
        }
        Ok(CsiRecording {
            values,
            frame_rate_hz,
            activity,
            normalized: false,
        })
    }

    pub fn values(&self) -> &Array3<f32> {
        &self.values
    }

    pub fn frames(&self) -> usize {
        self.values.dim().0
    }

    pub fn subcarriers(&self) -> usize {
        self.values.dim().1
    }

    pub fn antennas(&self) -> usize {
        self.values.dim().2
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn activity(&self) -> ActivityLabel {
        self.activity
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Maximum magnitude over the whole recording.
    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0_f32, f32::max)
    }
}

/// A normalized sliding-window slice: `win_frames x subcarriers x channels`
/// with channels either 1 (single antenna) or the full antenna count
/// (stacked along the third dimension).
#[derive(Debug, Clone)]
pub struct CsiWindow {
    values: Array3<f32>,
    label: ActivityLabel,
    source_offset: usize,
}

impl CsiWindow {
    pub fn values(&self) -> &Array3<f32> {
        &self.values
    }

    pub fn label(&self) -> ActivityLabel {
        self.label
    }

    /// Frame index in the source recording where this window starts.
    pub fn source_offset(&self) -> usize {
        self.source_offset
    }

    /// `(win_frames, subcarriers, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        self.values.dim()
    }

    /// Extracts the single-antenna view of a stacked window as a new
    /// 1-channel window. Useful when per-antenna encoders consume slices of
    /// a multi-antenna window.
    pub fn select_antenna(&self, antenna: usize) -> Result<CsiWindow, DataError> {
        let (_, _, channels) = self.values.dim();
        if antenna >= channels {
            return Err(DataError::AntennaOutOfRange {
                antenna,
                antennas: channels,
            });
        }
        let slice = self
            .values
            .index_axis(Axis(2), antenna)
            .insert_axis(Axis(2))
            .to_owned();
        Ok(CsiWindow {
            values: slice,
            label: self.label,
            source_offset: self.source_offset,
        })
    }
}

/// How windows are assigned to the train and test sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitPolicy {
    /// The last fraction of each class's windows (by source offset) goes to
    /// test. Conservative default: overlapping windows never straddle the
    /// boundary in both directions.
    ChronologicalTail,
    /// Seeded per-class shuffle. Retained for comparison runs; leaks
    /// near-duplicate frames across the boundary when windows overlap.
    Random,
}

impl SplitPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SplitPolicy::ChronologicalTail => "chronological-tail",
            SplitPolicy::Random => "random",
        }
    }
}

/// Label-stratified train/test partition of a window set.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<CsiWindow>,
    pub test: Vec<CsiWindow>,
    pub split_policy: SplitPolicy,
    pub test_fraction: f64,
    pub seed: u64,
}

/// Sidecar metadata for a dataset directory.
///
/// `activities` maps the activity name to its `[frames, subcarriers,
/// antennas]` shape. `norm_constant`, once computed, is persisted here so
/// that train-time and encode-time scaling are bit-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub frame_rate_hz: f64,
    pub magnitude_units: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_constant: Option<f32>,
    pub activities: BTreeMap<String, [usize; 3]>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

impl DatasetManifest {
    pub fn read(dir: &Path) -> Result<DatasetManifest, DataError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(DataError::Format(format!(
                "missing dataset sidecar {}",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(&path)?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(DataError::Format(format!(
                "unsupported manifest format_version {}",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }

    pub fn write(&self, dir: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

/// Loads every recording listed in the directory's manifest.
///
/// Each `<activity>.bin` holds row-major little-endian f32 magnitudes with
/// the shape declared in the sidecar. Byte-count mismatches are corruption
/// errors; negative or non-finite values are domain errors. Returned
/// recordings are un-normalized.
pub fn load_recordings(dir: &Path) -> Result<Vec<CsiRecording>, DataError> {
    let manifest = DatasetManifest::read(dir)?;
    if manifest.activities.is_empty() {
        return Err(DataError::Format(
            "dataset manifest lists no activities".to_string(),
        ));
    }
    let mut recordings = Vec::with_capacity(manifest.activities.len());
    for (name, &[frames, subcarriers, antennas]) in &manifest.activities {
        let label = ActivityLabel::from_name(name).ok_or_else(|| {
            DataError::Format(format!("unknown activity {name:?} in manifest"))
        })?;
        let path = dir.join(format!("{name}.bin"));
        let bytes = std::fs::read(&path).map_err(|e| {
            DataError::Format(format!("cannot read {}: {e}", path.display()))
        })?;
        let expected = (frames * subcarriers * antennas) as u64 * 4;
        if bytes.len() as u64 != expected {
            return Err(DataError::Corruption {
                path,
                expected,
                actual: bytes.len() as u64,
            });
        }
        let mut flat = Vec::with_capacity(frames * subcarriers * antennas);
        for chunk in bytes.chunks_exact(4) {
            flat.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        let values = Array3::from_shape_vec((frames, subcarriers, antennas), flat)
            .map_err(|e| DataError::Shape(e.to_string()))?;
        recordings.push(CsiRecording::new(values, manifest.frame_rate_hz, label)?);
    }
    Ok(recordings)
}

/// Writes recordings plus sidecar in the interchange format.
///
/// All recordings must share a frame rate. `norm_constant`, when given, is
/// persisted in the sidecar.
pub fn write_dataset(
    dir: &Path,
    recordings: &[CsiRecording],
    norm_constant: Option<f32>,
) -> Result<(), DataError> {
    if recordings.is_empty() {
        return Err(DataError::Format("no recordings to write".to_string()));
    }
    let frame_rate = recordings[0].frame_rate_hz();
    if recordings
        .iter()
        .any(|r| r.frame_rate_hz() != frame_rate)
    {
        return Err(DataError::Format(
            "recordings disagree on frame rate".to_string(),
        ));
    }
    std::fs::create_dir_all(dir)?;
    let mut activities = BTreeMap::new();
    for rec in recordings {
        let name = rec.activity().name().to_string();
        if activities
            .insert(
                name.clone(),
                [rec.frames(), rec.subcarriers(), rec.antennas()],
            )
            .is_some()
        {
            return Err(DataError::Format(format!(
                "duplicate recording for activity {name}"
            )));
        }
        let mut bytes = Vec::with_capacity(rec.values().len() * 4);
        for &v in rec.values().iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(dir.join(format!("{name}.bin")), bytes)?;
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        frame_rate_hz: frame_rate,
        magnitude_units: "arbitrary".to_string(),
        norm_constant,
        activities,
    };
    manifest.write(dir)
}

/// Global maximum magnitude over all values of all recordings; the
/// normalization constant for the dataset.
pub fn compute_norm_constant(recordings: &[CsiRecording]) -> Result<f32, DataError> {
    if recordings.is_empty() {
        return Err(DataError::Format(
            "cannot compute a normalization constant from zero recordings".to_string(),
        ));
    }
    let max = recordings
        .iter()
        .map(|r| r.max_value())
        .fold(0.0_f32, f32::max);
    if max > 0.0 {
        Ok(max)
    } else {
        Err(DataError::DegenerateNormalization)
    }
}

/// Result of [`normalize`]. `exceeds_unit` flags the contract case where a
/// constant from a different dataset leaves some values above 1.
#[derive(Debug, Clone)]
pub struct NormalizeOutcome {
    pub recording: CsiRecording,
    pub max_value: f32,
    pub exceeds_unit: bool,
}

/// Divides every magnitude by `constant` and marks the recording normalized.
///
/// Normalizing twice is an explicit error to prevent double scaling.
pub fn normalize(recording: CsiRecording, constant: f32) -> Result<NormalizeOutcome, DataError> {
    if !(constant > 0.0) || !constant.is_finite() {
        return Err(DataError::InvalidConstant(constant));
    }
    if recording.normalized {
        return Err(DataError::AlreadyNormalized(recording.activity));
    }
    let mut values = recording.values;
    values.mapv_inplace(|v| v / constant);
    let max_value = values.iter().copied().fold(0.0_f32, f32::max);
    Ok(NormalizeOutcome {
        recording: CsiRecording {
            values,
            frame_rate_hz: recording.frame_rate_hz,
            activity: recording.activity,
            normalized: true,
        },
        max_value,
        exceeds_unit: max_value > 1.0,
    })
}

/// Number of windows of length `win` a stream of `frames` frames yields at
/// the given stride: `floor((frames - win) / stride) + 1`.
pub fn sliding_window_count(frames: usize, win: usize, stride: usize) -> usize {
    if win == 0 || stride == 0 || frames < win {
        return 0;
    }
    (frames - win) / stride + 1
}

/// Cuts a normalized recording into overlapping windows.
///
/// With `antenna: Some(i)` each window is the single-antenna slice
/// (`channels = 1`); with `None` all antennas are stacked along the third
/// dimension (`channels = antennas`). Window values are verbatim sub-arrays
/// of the recording; no resampling.
pub fn sliding_windows(
    recording: &CsiRecording,
    window_seconds: f64,
    stride_frames: usize,
    antenna: Option<usize>,
) -> Result<Vec<CsiWindow>, DataError> {
    if !recording.normalized {
        return Err(DataError::NotNormalized(recording.activity));
    }
    if stride_frames == 0 {
        return Err(DataError::Domain("stride must be >= 1".to_string()));
    }
    let win_frames = (window_seconds * recording.frame_rate_hz).round() as usize;
    if win_frames == 0 {
        return Err(DataError::Domain(format!(
            "window of {window_seconds} s at {} fps is empty",
            recording.frame_rate_hz
        )));
    }
    let frames = recording.frames();
    if win_frames > frames {
        return Err(DataError::WindowOutOfRange {
            window: win_frames,
            frames,
        });
    }
    if let Some(a) = antenna {
        if a >= recording.antennas() {
            return Err(DataError::AntennaOutOfRange {
                antenna: a,
                antennas: recording.antennas(),
            });
        }
    }

    let count = sliding_window_count(frames, win_frames, stride_frames);
    let mut windows = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride_frames;
        let frame_slice = recording
            .values
            .slice(ndarray::s![start..start + win_frames, .., ..]);
        let values = match antenna {
            Some(a) => frame_slice
                .slice(ndarray::s![.., .., a..a + 1])
                .to_owned(),
            None => frame_slice.to_owned(),
        };
        windows.push(CsiWindow {
            values,
            label: recording.activity,
            source_offset: start,
        });
    }
    Ok(windows)
}

/// Splits per-class window sequences into a stratified train/test partition.
///
/// The per-class test size is `round(test_fraction * n)` clamped to
/// `[1, n-1]`, so the realized fraction is within one window of the target.
/// Deterministic given `seed`; the random policy derives one RNG per class
/// position so splits stay aligned across per-antenna views of the same
/// windows.
pub fn split_dataset(
    per_class: Vec<Vec<CsiWindow>>,
    test_fraction: f64,
    policy: SplitPolicy,
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class_pos, mut windows) in per_class.into_iter().enumerate() {
        let n = windows.len();
        if n < 2 {
            let label = windows
                .first()
                .map(|w| w.label)
                .unwrap_or(ActivityLabel::Empty);
            return Err(DataError::InsufficientData { label, count: n });
        }
        windows.sort_by_key(|w| w.source_offset);
        let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
        match policy {
            SplitPolicy::ChronologicalTail => {
                let boundary = n - n_test;
                test.extend(windows.split_off(boundary));
                train.extend(windows);
            }
            SplitPolicy::Random => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (class_pos as u64).wrapping_mul(0x9E3779B97F4A7C15));
                let mut indices: Vec<usize> = (0..n).collect();
                indices.shuffle(&mut rng);
                let test_idx: std::collections::BTreeSet<usize> =
                    indices[..n_test].iter().copied().collect();
                for (i, w) in windows.into_iter().enumerate() {
                    if test_idx.contains(&i) {
                        test.push(w);
                    } else {
                        train.push(w);
                    }
                }
            }
        }
    }
    Ok(DatasetSplit {
        train,
        test,
        split_policy: policy,
        test_fraction,
        seed,
    })
}

/// Groups windows by in-distribution class index, preserving order.
pub fn group_by_class(windows: Vec<CsiWindow>) -> Vec<Vec<CsiWindow>> {
    let mut per_class: Vec<Vec<CsiWindow>> = (0..NUM_CLASSES).map(|_| Vec::new()).collect();
    for w in windows {
        if let Some(k) = w.label.class_index() {
            per_class[k].push(w);
        }
    }
    per_class.retain(|c| !c.is_empty());
    per_class
}

/// Flattens a window's values to f64 in row-major `(frame, subcarrier,
/// channel)` order; the layout every model consumes.
pub fn window_to_f64(window: &CsiWindow) -> Vec<f64> {
    window.values.iter().map(|&v| v as f64).collect()
}
