//! Time-based sliding-window segmentation and the per-window feature set for
//! EMG and IMU channels, plus body-segment intensity summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{ChannelSeries, Modality, MovementLabel, Placement, ScenarioTag, Session};

pub const WINDOW_MS: f64 = 200.0;
pub const HOP_MS: f64 = 100.0;
pub const DEFAULT_SSC_THRESHOLD: f64 = 0.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("non-finite feature value for {0}")]
    NonFinite(String),
}

/// One fixed-length slice of a channel starting at `start_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<'a> {
    pub channel_id: &'a str,
    pub start_s: f64,
    pub samples: &'a [f64],
    pub rate_hz: f64,
}

/// Splits a gap-free channel into windows of `window_ms` advancing by
/// `hop_ms`, aligned to t = 0. Yields floor((L - W) / S) + 1 windows; an
/// input shorter than one window yields none.
pub fn segment_windows(c: &ChannelSeries, window_ms: f64, hop_ms: f64) -> Vec<Window<'_>> {
    let w = (window_ms * c.rate_hz / 1000.0).round() as usize;
    let s = (hop_ms * c.rate_hz / 1000.0).round() as usize;
    segment_slice(&c.samples, &c.channel_id, c.rate_hz, w, s)
}

pub fn segment_slice<'a>(samples: &'a [f64], channel_id: &'a str, rate_hz: f64, w: usize, s: usize) -> Vec<Window<'a>> {
    assert!(w >= 4 && s >= 1, "window must span at least 4 samples");
    if samples.len() < w {
        return Vec::new();
    }
    let count = (samples.len() - w) / s + 1;
    (0..count)
        .map(|k| Window {
            channel_id,
            start_s: (k * s) as f64 / rate_hz,
            samples: &samples[k * s..k * s + w],
            rate_hz,
        })
        .collect()
}

pub fn window_count(len: usize, w: usize, s: usize) -> usize {
    if len < w {
        0
    } else {
        (len - w) / s + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmgFeatures {
    pub rms: f64,
    pub variance: f64,
    pub mav: f64,
    pub ssc: f64,
}

/// Root mean square, population variance, mean absolute value, and slope sign
/// changes of one EMG window. SSC counts interior samples where both
/// neighboring slope products exceed the threshold.
pub fn extract_emg_features(w: &Window<'_>, ssc_threshold: f64) -> EmgFeatures {
    let x = w.samples;
    let n = x.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_abs = 0.0;
    for &v in x {
        sum += v;
        sum_sq += v * v;
        sum_abs += v.abs();
    }
    let mean = sum / n;
    let rms = (sum_sq / n).sqrt();
    let variance = sum_sq / n - mean * mean;
    let mav = sum_abs / n;
    let mut ssc = 0usize;
    for i in 1..x.len() - 1 {
        if (x[i] - x[i - 1]) * (x[i] - x[i + 1]) > ssc_threshold {
            ssc += 1;
        }
    }
    EmgFeatures { rms, variance: variance.max(0.0), mav, ssc: ssc as f64 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisFeatures {
    pub rms: f64,
    pub mean: f64,
    pub std: f64,
    pub jerk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuFeatures {
    pub x: AxisFeatures,
    pub y: AxisFeatures,
    pub z: AxisFeatures,
    /// Signal magnitude area over the 3-axis group.
    pub sma: f64,
}

/// Per-axis mean, population standard deviation, RMS and jerk (RMS of the
/// rate-scaled first difference), plus the signal magnitude area of the
/// three time-aligned axis windows.
pub fn extract_imu_features(axes: [&Window<'_>; 3], rate_hz: f64) -> Result<ImuFeatures, FeatureError> {
    let n = axes[0].samples.len();
    if axes.iter().any(|w| w.samples.len() != n) {
        return Err(FeatureError::Alignment(format!(
            "axis windows of {} have unequal lengths {:?}",
            axes[0].channel_id,
            axes.iter().map(|w| w.samples.len()).collect::<Vec<_>>()
        )));
    }
    let per_axis = |x: &[f64]| {
        let nf = x.len() as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for &v in x {
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / nf;
        let variance = (sum_sq / nf - mean * mean).max(0.0);
        let mut jerk_sq = 0.0;
        for i in 0..x.len() - 1 {
            let d = (x[i + 1] - x[i]) * rate_hz;
            jerk_sq += d * d;
        }
        AxisFeatures {
            rms: (sum_sq / nf).sqrt(),
            mean,
            std: variance.sqrt(),
            jerk: (jerk_sq / (nf - 1.0)).sqrt(),
        }
    };
    let mut sma = 0.0;
    for i in 0..n {
        sma += axes[0].samples[i].abs() + axes[1].samples[i].abs() + axes[2].samples[i].abs();
    }
    Ok(ImuFeatures {
        x: per_axis(axes[0].samples),
        y: per_axis(axes[1].samples),
        z: per_axis(axes[2].samples),
        sma: sma / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Suit,
    Rollator,
    Movement,
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "suit" => Ok(Task::Suit),
            "rollator" => Ok(Task::Rollator),
            "movement" => Ok(Task::Movement),
            other => Err(format!("unknown task `{other}` (expected suit, rollator, or movement)")),
        }
    }
}

/// Which channel modalities feed the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSelection {
    /// EMG for suit/rollator detection, IMU for movement classification.
    Auto,
    EmgOnly,
    ImuOnly,
    Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub values: Vec<f64>,
    pub subject_id: String,
    pub scenario: ScenarioTag,
    pub round_index: u32,
    pub movement_label: Option<MovementLabel>,
    pub window_start_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub schema: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn label(&self, row: &FeatureRow, task: Task) -> bool {
        match task {
            Task::Suit => row.scenario.suit,
            Task::Rollator => row.scenario.rollator,
            Task::Movement => row.movement_label == Some(MovementLabel::Turning),
        }
    }

    pub fn labels(&self, task: Task) -> Vec<bool> {
        self.rows.iter().map(|r| self.label(r, task)).collect()
    }

    pub fn subject_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.rows.iter().map(|r| r.subject_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Keeps only rows matching the predicate.
    pub fn filtered(&self, keep: impl Fn(&FeatureRow) -> bool) -> FeatureTable {
        FeatureTable {
            schema: self.schema.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn merged(&self, other: &FeatureTable) -> Result<FeatureTable, FeatureError> {
        if self.schema != other.schema {
            return Err(FeatureError::Schema("cannot merge feature tables with different schemas".into()));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(FeatureTable { schema: self.schema.clone(), rows })
    }

    /// CSV export: feature columns first, label columns last. Lines starting
    /// with `#` are treated as comments by the reader.
    pub fn to_csv(&self, header_comments: &[String]) -> String {
        let mut out = String::new();
        for c in header_comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str(&self.schema.join(","));
        out.push_str(",subject_id,scenario_id,round_index,window_start_s,movement_label\n");
        for r in &self.rows {
            for v in &r.values {
                out.push_str(&format!("{v},"));
            }
            let label = r.movement_label.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.subject_id,
                r.scenario.id(),
                r.round_index,
                r.window_start_s,
                label
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<FeatureTable, FeatureError> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
        let header = lines.next().ok_or_else(|| FeatureError::Schema("empty feature table".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let n_labels = 5;
        if cols.len() < n_labels {
            return Err(FeatureError::Schema("missing label columns".into()));
        }
        let n_features = cols.len() - n_labels;
        let schema: Vec<String> = cols[..n_features].iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != cols.len() {
                return Err(FeatureError::Schema(format!("row {i} has {} columns, expected {}", parts.len(), cols.len())));
            }
            let values: Vec<f64> = parts[..n_features]
                .iter()
                .map(|p| p.parse().map_err(|_| FeatureError::Schema(format!("bad value `{p}` in row {i}"))))
                .collect::<Result<_, _>>()?;
            let scenario = ScenarioTag::from_id(
                parts[n_features + 1].parse().map_err(|_| FeatureError::Schema("bad scenario id".into()))?,
            )
            .ok_or_else(|| FeatureError::Schema("scenario id out of range".into()))?;
            let movement_label = match parts[n_features + 4] {
                "" => None,
                "forward" => Some(MovementLabel::Forward),
                "turning" => Some(MovementLabel::Turning),
                other => return Err(FeatureError::Schema(format!("bad movement label `{other}`"))),
            };
            rows.push(FeatureRow {
                values,
                subject_id: parts[n_features].to_string(),
                scenario,
                round_index: parts[n_features + 2].parse().map_err(|_| FeatureError::Schema("bad round index".into()))?,
                movement_label,
                window_start_s: parts[n_features + 3].parse().map_err(|_| FeatureError::Schema("bad window start".into()))?,
            });
        }
        Ok(FeatureTable { schema, rows })
    }
}

#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    /// Movement-task windows overlapping no movement segment.
    pub dropped_windows: usize,
    /// Sessions skipped because they lack the required modality.
    pub skipped_sessions: usize,
}

struct ImuGroup<'a> {
    group_id: String,
    axes: [&'a ChannelSeries; 3],
}

fn imu_groups(s: &Session) -> Vec<ImuGroup<'_>> {
    let mut by_group: BTreeMap<String, Vec<&ChannelSeries>> = BTreeMap::new();
    for c in &s.channels {
        if matches!(c.modality, Modality::Acc | Modality::Gyro) {
            let group_id = format!("{}_{}", c.placement.name(), c.modality.to_string().to_lowercase());
            by_group.entry(group_id).or_default().push(c);
        }
    }
    by_group
        .into_iter()
        .filter_map(|(group_id, mut chans)| {
            if chans.len() != 3 {
                return None;
            }
            chans.sort_by_key(|c| c.axis as u8);
            Some(ImuGroup { group_id, axes: [chans[0], chans[1], chans[2]] })
        })
        .collect()
}

fn movement_label_for_window(s: &Session, start_s: f64, end_s: f64) -> Option<MovementLabel> {
    let mut forward = 0.0;
    let mut turning = 0.0;
    for seg in &s.movements {
        let overlap = (seg.end_s.min(end_s) - seg.start_s.max(start_s)).max(0.0);
        match seg.label {
            MovementLabel::Forward => forward += overlap,
            MovementLabel::Turning => turning += overlap,
        }
    }
    if forward + turning <= 0.0 {
        None
    } else if turning >= forward {
        // Exact ties resolve to turning (alerting-safe).
        Some(MovementLabel::Turning)
    } else {
        Some(MovementLabel::Forward)
    }
}

/// Builds one feature row per aligned 200 ms window across all selected
/// channels of every session. EMG windows at 2 kHz and IMU windows at 200 Hz
/// share start times through the common 100 ms hop.
pub fn build_dataset(
    sessions: &[Session],
    task: Task,
    selection: FeatureSelection,
    ssc_threshold: f64,
) -> Result<(FeatureTable, BuildReport), FeatureError> {
    let use_emg = match selection {
        FeatureSelection::Auto => task != Task::Movement,
        FeatureSelection::EmgOnly => true,
        FeatureSelection::ImuOnly => false,
        FeatureSelection::Fused => true,
    };
    let use_imu = match selection {
        FeatureSelection::Auto => task == Task::Movement,
        FeatureSelection::EmgOnly => false,
        FeatureSelection::ImuOnly | FeatureSelection::Fused => true,
    };

    let mut table = FeatureTable::default();
    let mut report = BuildReport::default();

    for s in sessions {
        if task == Task::Movement && s.movements.is_empty() {
            return Err(FeatureError::Label(format!(
                "session {}/scenario {}/round {} has no movement segments",
                s.subject.subject_id,
                s.scenario.id(),
                s.round_index
            )));
        }

        let mut emg: Vec<&ChannelSeries> = if use_emg { s.channels_of(Modality::Emg).collect() } else { Vec::new() };
        emg.sort_by(|a, b| a.channel_id.cmp(&b.channel_id));
        let imu = if use_imu { imu_groups(s) } else { Vec::new() };
        if emg.is_empty() && imu.is_empty() {
            report.skipped_sessions += 1;
            continue;
        }

        // Window every channel; rows stop at the shortest channel.
        let emg_windows: Vec<Vec<Window<'_>>> =
            emg.iter().map(|c| segment_windows(c, WINDOW_MS, HOP_MS)).collect();
        let imu_windows: Vec<[Vec<Window<'_>>; 3]> = imu
            .iter()
            .map(|g| g.axes.map(|c| segment_windows(c, WINDOW_MS, HOP_MS)))
            .collect();
        let mut n_rows = usize::MAX;
        for w in &emg_windows {
            n_rows = n_rows.min(w.len());
        }
        for g in &imu_windows {
            for w in g {
                n_rows = n_rows.min(w.len());
            }
        }
        if n_rows == usize::MAX {
            n_rows = 0;
        }

        let mut schema = Vec::new();
        for c in &emg {
            for f in ["rms", "variance", "mav", "ssc"] {
                schema.push(format!("{}.{f}", c.channel_id));
            }
        }
        for g in &imu {
            for c in &g.axes {
                for f in ["rms", "mean", "std", "jerk"] {
                    schema.push(format!("{}.{f}", c.channel_id));
                }
            }
            schema.push(format!("{}.sma", g.group_id));
        }
        if table.schema.is_empty() {
            table.schema = schema;
        } else if table.schema != schema {
            return Err(FeatureError::Schema(format!(
                "session {}/scenario {}/round {} produces a different feature schema",
                s.subject.subject_id,
                s.scenario.id(),
                s.round_index
            )));
        }

        for k in 0..n_rows {
            let start_s = k as f64 * HOP_MS / 1000.0;
            let end_s = start_s + WINDOW_MS / 1000.0;
            let movement_label = movement_label_for_window(s, start_s, end_s);
            if task == Task::Movement && movement_label.is_none() {
                report.dropped_windows += 1;
                continue;
            }
            let mut values = Vec::with_capacity(table.schema.len());
            for w in &emg_windows {
                let f = extract_emg_features(&w[k], ssc_threshold);
                values.extend([f.rms, f.variance, f.mav, f.ssc]);
            }
            for g in &imu_windows {
                let f = extract_imu_features([&g[0][k], &g[1][k], &g[2][k]], g[0][k].rate_hz)?;
                for a in [f.x, f.y, f.z] {
                    values.extend([a.rms, a.mean, a.std, a.jerk]);
                }
                values.push(f.sma);
            }
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(FeatureError::NonFinite(table.schema[i].clone()));
            }
            table.rows.push(FeatureRow {
                values,
                subject_id: s.subject.subject_id.clone(),
                scenario: s.scenario,
                round_index: s.round_index,
                movement_label,
                window_start_s: start_s,
            });
        }
    }
    Ok((table, report))
}

#[derive(Debug, Clone, Default)]
pub struct IntensityReport {
    /// Per body segment, the windowed RMS time series averaged over the
    /// channels at that placement.
    pub series: BTreeMap<Placement, Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Mean per-channel windowed RMS grouped by the five body segments.
pub fn segment_intensity(s: &Session, window_ms: f64, hop_ms: f64) -> IntensityReport {
    let mut report = IntensityReport::default();
    for placement in Placement::body_segments() {
        let chans: Vec<&ChannelSeries> = s
            .channels_of(Modality::Emg)
            .filter(|c| c.placement == placement)
            .collect();
        if chans.is_empty() {
            report.warnings.push(format!("placement {} has no EMG channels; omitted", placement.name()));
            continue;
        }
        let per_chan: Vec<Vec<f64>> = chans
            .iter()
            .map(|c| {
                segment_windows(c, window_ms, hop_ms)
                    .iter()
                    .map(|w| {
                        let n = w.samples.len() as f64;
                        (w.samples.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
                    })
                    .collect()
            })
            .collect();
        let n_windows = per_chan.iter().map(|v| v.len()).min().unwrap_or(0);
        let series = (0..n_windows)
            .map(|k| per_chan.iter().map(|v| v[k]).sum::<f64>() / per_chan.len() as f64)
            .collect();
        report.series.insert(placement, series);
    }
    report
}
