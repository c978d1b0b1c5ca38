//! Streaming service: newline-delimited JSON frames in, causal filtering,
//! sliding-window feature extraction, online classification, and
//! collision-risk alerts out.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{design_bandpass, FilterState};
use crate::features::{extract_emg_features, extract_imu_features, Window, DEFAULT_SSC_THRESHOLD, HOP_MS, WINDOW_MS};
use crate::learn::GbdtModel;
use crate::session::{Modality, Session};

pub const EMG_BAND_LOW_HZ: f64 = 20.0;
pub const EMG_BAND_HIGH_HZ: f64 = 450.0;
pub const EMG_FILTER_ORDER: u32 = 4;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One wire frame: a burst of samples for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamFrame {
    pub seq: u64,
    #[serde(rename = "t")]
    pub t_s: f64,
    #[serde(rename = "ch")]
    pub channel_id: String,
    #[serde(rename = "v")]
    pub values: Vec<f64>,
    #[serde(rename = "prox", default)]
    pub proximity_m: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelDecl {
    #[serde(rename = "ch")]
    pub channel_id: String,
    pub modality: Modality,
    pub rate_hz: f64,
}

/// First line of a stream: channel registry plus the model to serve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Handshake {
    pub channels: Vec<ChannelDecl>,
    pub model: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertPolicy {
    pub k_consecutive: usize,
    pub min_confidence: f64,
    pub proximity_threshold_m: f64,
}

impl Default for AlertPolicy {
    fn default() -> Self {
        AlertPolicy { k_consecutive: 5, min_confidence: 0.7, proximity_threshold_m: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    CollisionRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub t_s: f64,
    pub kind: AlertKind,
    pub confidence: f64,
    pub window_span: (f64, f64),
}

impl AlertEvent {
    /// Wire form: `{"t":...,"kind":"collision_risk","conf":...}`.
    pub fn to_wire(&self) -> String {
        format!(
            "{{\"t\":{},\"kind\":\"collision_risk\",\"conf\":{}}}",
            self.t_s, self.confidence
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub window_index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
    pub confidence: f64,
    /// Feature vector the prediction was made from, in model schema order.
    pub features: Vec<f64>,
}

/// A fully accumulated window of causally filtered samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedWindow {
    pub channel_id: String,
    pub index: usize,
    pub start_s: f64,
    pub samples: Vec<f64>,
}

struct ChannelState {
    decl: ChannelDecl,
    filter: Option<FilterState>,
    ring: VecDeque<f64>,
    window_len: usize,
    hop_len: usize,
    total: usize,
    emitted: usize,
    last_seq: Option<u64>,
    /// Completed windows awaiting classification, present only for channels
    /// the loaded model consumes.
    pending: Option<VecDeque<CompletedWindow>>,
}

impl ChannelState {
    fn reset_accumulator(&mut self) {
        self.ring.clear();
        self.total = 0;
        if let Some(f) = &mut self.filter {
            f.reset();
        }
        if let Some(p) = &mut self.pending {
            p.clear();
        }
    }
}

/// One block of model features computed from registered channels.
enum PlanStep {
    Emg { ch: String },
    Imu { axes: [String; 3] },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub frames: usize,
    pub rejected_frames: usize,
    pub windows: usize,
    pub predictions: usize,
    pub alerts: usize,
}

pub struct StreamState {
    channels: BTreeMap<String, ChannelState>,
    plan: Vec<PlanStep>,
    model: Option<GbdtModel>,
    ssc_threshold: f64,
    classified: usize,
    latest_proximity: Option<f64>,
    pub stats: StreamStats,
}

fn split_feature_name(name: &str) -> Result<(&str, &str), StreamError> {
    name.rsplit_once('.')
        .ok_or_else(|| StreamError::Config(format!("malformed feature name '{name}'")))
}

/// Maps the model's ordered feature names back onto channel blocks: four
/// features per EMG channel, thirteen per 3-axis IMU group, in schema order.
fn build_plan(model: &GbdtModel, channels: &BTreeMap<String, ChannelState>) -> Result<Vec<PlanStep>, StreamError> {
    let names = &model.feature_names;
    let mut plan = Vec::new();
    let mut i = 0;
    while i < names.len() {
        let (prefix, feat) = split_feature_name(&names[i])?;
        if feat != "rms" {
            return Err(StreamError::Config(format!("unexpected feature '{}' at block start", names[i])));
        }
        let next = names.get(i + 1).map(|n| split_feature_name(n)).transpose()?;
        match next {
            Some((p, "variance")) if p == prefix => {
                let expected = ["rms", "variance", "mav", "ssc"];
                for (k, f) in expected.iter().enumerate() {
                    let want = format!("{prefix}.{f}");
                    if names.get(i + k) != Some(&want) {
                        return Err(StreamError::Config(format!("expected feature '{want}'")));
                    }
                }
                let ch = channels
                    .get(prefix)
                    .ok_or_else(|| StreamError::Config(format!("model needs channel '{prefix}', not in stream")))?;
                if ch.decl.modality != Modality::Emg {
                    return Err(StreamError::Config(format!("channel '{prefix}' is not EMG")));
                }
                plan.push(PlanStep::Emg { ch: prefix.to_string() });
                i += 4;
            }
            Some((p, "mean")) if p == prefix => {
                let group = prefix
                    .strip_suffix("_x")
                    .ok_or_else(|| StreamError::Config(format!("expected x-axis channel, got '{prefix}'")))?
                    .to_string();
                let axes = ["x", "y", "z"].map(|a| format!("{group}_{a}"));
                let mut k = i;
                for ax in &axes {
                    for f in ["rms", "mean", "std", "jerk"] {
                        let want = format!("{ax}.{f}");
                        if names.get(k) != Some(&want) {
                            return Err(StreamError::Config(format!("expected feature '{want}'")));
                        }
                        k += 1;
                    }
                }
                let want = format!("{group}.sma");
                if names.get(k) != Some(&want) {
                    return Err(StreamError::Config(format!("expected feature '{want}'")));
                }
                for ax in &axes {
                    let ch = channels
                        .get(ax)
                        .ok_or_else(|| StreamError::Config(format!("model needs channel '{ax}', not in stream")))?;
                    if !matches!(ch.decl.modality, Modality::Acc | Modality::Gyro) {
                        return Err(StreamError::Config(format!("channel '{ax}' is not an IMU axis")));
                    }
                }
                plan.push(PlanStep::Imu { axes });
                i = k + 1;
            }
            _ => {
                return Err(StreamError::Config(format!("unrecognized feature block at '{}'", names[i])));
            }
        }
    }
    Ok(plan)
}

impl StreamState {
    /// Registers channels and validates the model's channel needs up front.
    pub fn new(decls: &[ChannelDecl], model: Option<GbdtModel>, ssc_threshold: f64) -> Result<StreamState, StreamError> {
        let mut channels = BTreeMap::new();
        for d in decls {
            if d.rate_hz <= 0.0 || !d.rate_hz.is_finite() {
                return Err(StreamError::Config(format!("channel '{}' has bad rate {}", d.channel_id, d.rate_hz)));
            }
            let window_len = (WINDOW_MS * d.rate_hz / 1000.0).round() as usize;
            let hop_len = (HOP_MS * d.rate_hz / 1000.0).round() as usize;
            if window_len < 4 || hop_len < 1 {
                return Err(StreamError::Config(format!(
                    "channel '{}' rate {} Hz is too low to window",
                    d.channel_id, d.rate_hz
                )));
            }
            let filter = if d.modality == Modality::Emg {
                let coefs = design_bandpass(EMG_BAND_LOW_HZ, EMG_BAND_HIGH_HZ, EMG_FILTER_ORDER, d.rate_hz)
                    .map_err(|e| StreamError::Config(format!("channel '{}': {e}", d.channel_id)))?;
                Some(FilterState::new(&coefs))
            } else {
                None
            };
            if channels
                .insert(
                    d.channel_id.clone(),
                    ChannelState {
                        decl: d.clone(),
                        filter,
                        ring: VecDeque::with_capacity(window_len),
                        window_len,
                        hop_len,
                        total: 0,
                        emitted: 0,
                        last_seq: None,
                        pending: None,
                    },
                )
                .is_some()
            {
                return Err(StreamError::Config(format!("duplicate channel '{}'", d.channel_id)));
            }
        }
        let plan = match &model {
            Some(m) => build_plan(m, &channels)?,
            None => Vec::new(),
        };
        for step in &plan {
            let ids: Vec<&str> = match step {
                PlanStep::Emg { ch } => vec![ch.as_str()],
                PlanStep::Imu { axes } => axes.iter().map(|s| s.as_str()).collect(),
            };
            for id in ids {
                channels.get_mut(id).unwrap().pending = Some(VecDeque::new());
            }
        }
        Ok(StreamState {
            channels,
            plan,
            model,
            ssc_threshold,
            classified: 0,
            latest_proximity: None,
            stats: StreamStats::default(),
        })
    }

    pub fn latest_proximity(&self) -> Option<f64> {
        self.latest_proximity
    }

    /// Feeds one frame through the causal pipeline; returns windows completed
    /// by it. Bad frames are counted and dropped, never fatal — except an
    /// unregistered channel, which is a protocol violation.
    pub fn ingest_frame(&mut self, f: &StreamFrame) -> Result<Vec<CompletedWindow>, StreamError> {
        self.stats.frames += 1;
        let ch = self
            .channels
            .get_mut(&f.channel_id)
            .ok_or_else(|| StreamError::Protocol(format!("unknown channel '{}'", f.channel_id)))?;
        if let Some(last) = ch.last_seq {
            if f.seq <= last {
                self.stats.rejected_frames += 1;
                return Ok(Vec::new());
            }
        }
        if f.values.is_empty() || f.values.iter().any(|v| !v.is_finite()) {
            // A gap: drop the frame and restart this channel's accumulator.
            ch.last_seq = Some(f.seq);
            ch.reset_accumulator();
            self.stats.rejected_frames += 1;
            return Ok(Vec::new());
        }
        ch.last_seq = Some(f.seq);
        if let Some(p) = f.proximity_m {
            if p.is_finite() {
                self.latest_proximity = Some(p);
            }
        }

        let mut out = Vec::new();
        for &raw in &f.values {
            let v = match &mut ch.filter {
                Some(filter) => filter.process_sample(raw),
                None => raw,
            };
            if ch.ring.len() == ch.window_len {
                ch.ring.pop_front();
            }
            ch.ring.push_back(v);
            ch.total += 1;
            if ch.total >= ch.window_len && (ch.total - ch.window_len) % ch.hop_len == 0 {
                let w = CompletedWindow {
                    channel_id: f.channel_id.clone(),
                    index: ch.emitted,
                    start_s: (ch.emitted as f64) * HOP_MS / 1000.0,
                    samples: ch.ring.iter().copied().collect(),
                };
                ch.emitted += 1;
                self.stats.windows += 1;
                if let Some(p) = &mut ch.pending {
                    p.push_back(w.clone());
                }
                out.push(w);
            }
        }
        Ok(out)
    }

    /// Classifies every window index for which all model channels have
    /// completed windows, in order. Feature assembly mirrors the offline
    /// dataset builder exactly.
    pub fn classify_online(&mut self) -> Result<Vec<Prediction>, StreamError> {
        let model = match &self.model {
            Some(m) => m,
            None => return Ok(Vec::new()),
        };
        let mut predictions = Vec::new();
        loop {
            let ready = self
                .plan
                .iter()
                .flat_map(|step| match step {
                    PlanStep::Emg { ch } => vec![ch.clone()],
                    PlanStep::Imu { axes } => axes.to_vec(),
                })
                .all(|id| {
                    self.channels[&id]
                        .pending
                        .as_ref()
                        .map(|p| p.iter().any(|w| w.index == self.classified))
                        .unwrap_or(false)
                });
            if !ready {
                break;
            }
            let k = self.classified;
            let mut values = Vec::with_capacity(model.feature_names.len());
            for step in &self.plan {
                match step {
                    PlanStep::Emg { ch } => {
                        let st = &self.channels[ch];
                        let w = st.pending.as_ref().unwrap().iter().find(|w| w.index == k).unwrap();
                        let win = Window {
                            channel_id: ch,
                            start_s: w.start_s,
                            samples: &w.samples,
                            rate_hz: st.decl.rate_hz,
                        };
                        let f = extract_emg_features(&win, self.ssc_threshold);
                        values.extend([f.rms, f.variance, f.mav, f.ssc]);
                    }
                    PlanStep::Imu { axes } => {
                        let states: Vec<&ChannelState> = axes.iter().map(|a| &self.channels[a]).collect();
                        let wins: Vec<&CompletedWindow> = states
                            .iter()
                            .map(|st| st.pending.as_ref().unwrap().iter().find(|w| w.index == k).unwrap())
                            .collect();
                        let windows: Vec<Window<'_>> = wins
                            .iter()
                            .zip(axes)
                            .map(|(w, id)| Window {
                                channel_id: id,
                                start_s: w.start_s,
                                samples: &w.samples,
                                rate_hz: states[0].decl.rate_hz,
                            })
                            .collect();
                        let f = extract_imu_features([&windows[0], &windows[1], &windows[2]], states[0].decl.rate_hz)
                            .map_err(|e| StreamError::Protocol(e.to_string()))?;
                        for a in [f.x, f.y, f.z] {
                            values.extend([a.rms, a.mean, a.std, a.jerk]);
                        }
                        values.push(f.sma);
                    }
                }
            }
            let (cls, conf) = model.predict(&values);
            let start_s = k as f64 * HOP_MS / 1000.0;
            predictions.push(Prediction {
                window_index: k,
                start_s,
                end_s: start_s + WINDOW_MS / 1000.0,
                label: model.classes[cls].clone(),
                confidence: conf,
                features: values,
            });
            self.classified += 1;
            for ch in self.channels.values_mut() {
                if let Some(p) = &mut ch.pending {
                    while p.front().map(|w| w.index < self.classified).unwrap_or(false) {
                        p.pop_front();
                    }
                }
            }
        }
        self.stats.predictions += predictions.len();
        Ok(predictions)
    }
}

/// Tracks the alert episode: a fired alert stays quiet until the episode ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlertState {
    consecutive_forward: usize,
    armed: bool,
}

impl Default for AlertState {
    fn default() -> Self {
        AlertState { consecutive_forward: 0, armed: true }
    }
}

/// Applies the alert policy to the newest prediction. Fires at most once per
/// risk episode; re-arms on a non-forward prediction or proximity recovery.
pub fn evaluate_alert(
    policy: &AlertPolicy,
    state: &mut AlertState,
    prediction: &Prediction,
    proximity_m: Option<f64>,
) -> Option<AlertEvent> {
    let confident_forward = prediction.label == "forward" && prediction.confidence >= policy.min_confidence;
    if prediction.label != "forward" {
        state.armed = true;
    }
    if let Some(p) = proximity_m {
        if p >= policy.proximity_threshold_m {
            state.armed = true;
        }
    }
    state.consecutive_forward = if confident_forward { state.consecutive_forward + 1 } else { 0 };

    let close = proximity_m.map(|p| p < policy.proximity_threshold_m).unwrap_or(false);
    if state.armed && close && state.consecutive_forward >= policy.k_consecutive {
        state.armed = false;
        return Some(AlertEvent {
            t_s: prediction.end_s,
            kind: AlertKind::CollisionRisk,
            confidence: prediction.confidence,
            window_span: (prediction.start_s, prediction.end_s),
        });
    }
    None
}

/// Runs the full service loop over a handshake line plus frame lines,
/// writing one alert per line to `out`. `load_model` resolves the handshake's
/// model path.
pub fn run_stream<R: BufRead, W: Write>(
    input: R,
    mut out: W,
    policy: &AlertPolicy,
    load_model: impl Fn(&str) -> Result<GbdtModel, StreamError>,
) -> Result<StreamStats, StreamError> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| StreamError::Protocol("empty stream: expected handshake line".into()))??;
    let hs: Handshake =
        serde_json::from_str(&first).map_err(|e| StreamError::Protocol(format!("bad handshake: {e}")))?;
    let model = load_model(&hs.model)?;
    let mut state = StreamState::new(&hs.channels, Some(model), DEFAULT_SSC_THRESHOLD)?;
    let mut alert_state = AlertState::default();

    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: StreamFrame =
            serde_json::from_str(&line).map_err(|e| StreamError::Protocol(format!("bad frame: {e}")))?;
        state.ingest_frame(&frame)?;
        for p in state.classify_online()? {
            if let Some(alert) = evaluate_alert(policy, &mut alert_state, &p, state.latest_proximity()) {
                state.stats.alerts += 1;
                writeln!(out, "{}", alert.to_wire())?;
            }
        }
    }
    Ok(state.stats)
}

/// Builds the handshake a stored session would announce.
pub fn session_handshake(s: &Session, model: &str) -> Handshake {
    Handshake {
        channels: s
            .channels
            .iter()
            .map(|c| ChannelDecl { channel_id: c.channel_id.clone(), modality: c.modality, rate_hz: c.rate_hz })
            .collect(),
        model: model.to_string(),
    }
}

/// Converts a stored session into time-ordered frames of about
/// `chunk_ms` of samples each, for replay over the wire protocol.
pub fn session_frames(s: &Session, chunk_ms: f64, proximity_m: Option<f64>) -> Vec<StreamFrame> {
    let mut frames: Vec<StreamFrame> = Vec::new();
    for c in &s.channels {
        let chunk = ((chunk_ms * c.rate_hz / 1000.0).round() as usize).max(1);
        let mut seq = 0u64;
        for (i, block) in c.samples.chunks(chunk).enumerate() {
            frames.push(StreamFrame {
                seq,
                t_s: (i * chunk) as f64 / c.rate_hz,
                channel_id: c.channel_id.clone(),
                values: block.to_vec(),
                proximity_m,
            });
            seq += 1;
        }
    }
    frames.sort_by(|a, b| a.t_s.partial_cmp(&b.t_s).unwrap().then_with(|| a.channel_id.cmp(&b.channel_id)));
    frames
}
