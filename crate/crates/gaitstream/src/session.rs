//! Canonical data model for recorded and synthetic gait sessions and their
//! on-disk directory format (manifest + one CSV per channel).

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("format error: {0}")]
    Format(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuitSide {
    Left,
    Right,
}

impl fmt::Display for SuitSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SuitSide::Left => write!(f, "left"),
            SuitSide::Right => write!(f, "right"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub height_m: f64,
    pub mass_kg: f64,
    /// Side the simulation suit restricts for this subject.
    pub suit_side: SuitSide,
}

/// One of the four data-collection scenarios: walking with/without a rollator,
/// with/without the hemiplegia simulation suit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioTag {
    pub rollator: bool,
    pub suit: bool,
}

impl ScenarioTag {
    /// Scenario ids 1..4: 1=(no,no), 2=(no,yes), 3=(yes,no), 4=(yes,yes).
    pub fn id(&self) -> u8 {
        match (self.rollator, self.suit) {
            (false, false) => 1,
            (false, true) => 2,
            (true, false) => 3,
            (true, true) => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<ScenarioTag> {
        match id {
            1 => Some(ScenarioTag { rollator: false, suit: false }),
            2 => Some(ScenarioTag { rollator: false, suit: true }),
            3 => Some(ScenarioTag { rollator: true, suit: false }),
            4 => Some(ScenarioTag { rollator: true, suit: true }),
            _ => None,
        }
    }

    pub fn all() -> [ScenarioTag; 4] {
        [1, 2, 3, 4].map(|i| ScenarioTag::from_id(i).unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modality {
    Emg,
    Acc,
    Gyro,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Emg => write!(f, "EMG"),
            Modality::Acc => write!(f, "ACC"),
            Modality::Gyro => write!(f, "GYRO"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Back,
    LeftWrist,
    RightWrist,
    LeftLeg,
    RightLeg,
    RollatorLeft,
    RollatorRight,
}

impl Placement {
    pub fn body_segments() -> [Placement; 5] {
        [
            Placement::Back,
            Placement::LeftWrist,
            Placement::RightWrist,
            Placement::LeftLeg,
            Placement::RightLeg,
        ]
    }

    pub fn is_rollator(&self) -> bool {
        matches!(self, Placement::RollatorLeft | Placement::RollatorRight)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Placement::Back => "back",
            Placement::LeftWrist => "left_wrist",
            Placement::RightWrist => "right_wrist",
            Placement::LeftLeg => "left_leg",
            Placement::RightLeg => "right_leg",
            Placement::RollatorLeft => "rollator_left",
            Placement::RollatorRight => "rollator_right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    None,
    X,
    Y,
    Z,
}

/// Uniformly sampled series of one modality. Units: mV for EMG, g for ACC,
/// deg/s for GYRO. Missing samples are flagged in `gap_mask`, never encoded
/// as sentinel values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries {
    pub channel_id: String,
    pub modality: Modality,
    pub placement: Placement,
    pub axis: Axis,
    pub rate_hz: f64,
    pub samples: Vec<f64>,
    pub gap_mask: Vec<bool>,
}

impl ChannelSeries {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovementLabel {
    Forward,
    Turning,
}

impl fmt::Display for MovementLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MovementLabel::Forward => write!(f, "forward"),
            MovementLabel::Turning => write!(f, "turning"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: MovementLabel,
}

/// One subject x scenario x round recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub subject: SubjectProfile,
    pub scenario: ScenarioTag,
    pub round_index: u32,
    pub channels: Vec<ChannelSeries>,
    pub movements: Vec<MovementSegment>,
    pub duration_s: f64,
}

impl Session {
    pub fn channels_of(&self, modality: Modality) -> impl Iterator<Item = &ChannelSeries> {
        self.channels.iter().filter(move |c| c.modality == modality)
    }

    pub fn channel(&self, id: &str) -> Option<&ChannelSeries> {
        self.channels.iter().find(|c| c.channel_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Channel id, segment index, or field name the violation refers to.
    pub target: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, target: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { target: target.into(), message: message.into() });
    }
}

/// Checks every structural invariant; never fails, returns the full list of
/// violations (empty means valid).
pub fn validate_session(s: &Session) -> ValidationReport {
    let mut report = ValidationReport::default();

    if s.subject.subject_id.is_empty() {
        report.push("subject_id", "subject_id must be non-empty");
    }
    if !(s.subject.height_m > 0.5 && s.subject.height_m < 2.5) {
        report.push("height_m", format!("height_m {} outside (0.5, 2.5)", s.subject.height_m));
    }
    if !(s.subject.mass_kg > 20.0 && s.subject.mass_kg < 250.0) {
        report.push("mass_kg", format!("mass_kg {} outside (20, 250)", s.subject.mass_kg));
    }
    if !(1..=10).contains(&s.round_index) {
        report.push("round_index", format!("round_index {} outside 1..10", s.round_index));
    }

    for c in &s.channels {
        match c.modality {
            Modality::Emg => {
                if c.rate_hz != 2000.0 {
                    report.push(&c.channel_id, "EMG rate must be 2000");
                }
                if c.axis != Axis::None {
                    report.push(&c.channel_id, "EMG axis must be none");
                }
            }
            Modality::Acc | Modality::Gyro => {
                if c.rate_hz != 200.0 {
                    report.push(&c.channel_id, format!("{} rate must be 200", c.modality));
                }
                if c.axis == Axis::None {
                    report.push(&c.channel_id, format!("{} axis must be x, y, or z", c.modality));
                }
            }
        }
        if c.samples.len() != c.gap_mask.len() {
            report.push(
                &c.channel_id,
                format!("samples ({}) and gap_mask ({}) lengths differ", c.samples.len(), c.gap_mask.len()),
            );
        }
        if c.rate_hz > 0.0 && (c.duration_s() - s.duration_s).abs() > 1.0 / c.rate_hz {
            report.push(
                &c.channel_id,
                format!(
                    "channel duration {:.6} s differs from session duration {:.6} s by more than one sample period",
                    c.duration_s(),
                    s.duration_s
                ),
            );
        }
        if c.rate_hz <= 0.0 {
            report.push(&c.channel_id, "rate_hz must be positive");
        }
    }

    let mut ids: Vec<&str> = s.channels.iter().map(|c| c.channel_id.as_str()).collect();
    ids.sort_unstable();
    for pair in ids.windows(2) {
        if pair[0] == pair[1] {
            report.push(pair[0], "duplicate channel_id");
        }
    }

    let n_emg = s.channels_of(Modality::Emg).count();
    if n_emg != 13 {
        report.push("channels", format!("expected exactly 13 EMG channels, found {n_emg}"));
    }
    let n_rollator = s.channels.iter().filter(|c| c.placement.is_rollator()).count();
    if s.scenario.rollator && n_rollator != 12 {
        report.push("channels", format!("rollator scenario requires 12 rollator IMU channels, found {n_rollator}"));
    }
    if !s.scenario.rollator && n_rollator != 0 {
        report.push("channels", format!("non-rollator scenario must have no rollator channels, found {n_rollator}"));
    }

    for (i, m) in s.movements.iter().enumerate() {
        if m.start_s >= m.end_s {
            report.push(format!("movement[{i}]"), format!("start_s {} must be < end_s {}", m.start_s, m.end_s));
        }
        if m.start_s < 0.0 || m.end_s > s.duration_s {
            report.push(format!("movement[{i}]"), format!("segment [{}, {}] outside [0, {}]", m.start_s, m.end_s, s.duration_s));
        }
    }
    for i in 1..s.movements.len() {
        let prev = &s.movements[i - 1];
        let cur = &s.movements[i];
        if cur.start_s < prev.end_s {
            report.push(
                format!("movement[{}]/movement[{}]", i - 1, i),
                format!("segments [{}, {}] and [{}, {}] overlap or are unsorted", prev.start_s, prev.end_s, cur.start_s, cur.end_s),
            );
        }
    }

    report
}

// ---------------------------------------------------------------------------
// On-disk format: manifest.json plus one `t,value,gap` CSV per channel.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ChannelEntry {
    channel_id: String,
    modality: Modality,
    placement: Placement,
    axis: Axis,
    rate_hz: f64,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    subject_id: String,
    height_m: f64,
    mass_kg: f64,
    suit_side: SuitSide,
    scenario: ScenarioTag,
    round_index: u32,
    duration_s: f64,
    channels: Vec<ChannelEntry>,
    movements: Vec<MovementSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

pub fn save_session(s: &Session, dir: &Path) -> Result<(), SessionError> {
    save_session_with_meta(s, dir, None)
}

/// Like [`save_session`], with an optional opaque metadata blob recorded in
/// the manifest (e.g. the generating tool's resolved config). Metadata is not
/// part of the Session value and is ignored on load.
pub fn save_session_with_meta(s: &Session, dir: &Path, meta: Option<serde_json::Value>) -> Result<(), SessionError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(s.channels.len());
    for c in &s.channels {
        let file = format!("{}.csv", c.channel_id);
        let mut out = String::with_capacity(24 * c.samples.len() + 16);
        out.push_str("t,value,gap\n");
        for (i, (&v, &gap)) in c.samples.iter().zip(&c.gap_mask).enumerate() {
            let t = i as f64 / c.rate_hz;
            // `{}` on f64 prints the shortest representation that parses back
            // bit-exactly, so the round trip is lossless.
            out.push_str(&format!("{},{},{}\n", t, v, gap as u8));
        }
        let mut f = fs::File::create(dir.join(&file))?;
        f.write_all(out.as_bytes())?;
        entries.push(ChannelEntry {
            channel_id: c.channel_id.clone(),
            modality: c.modality,
            placement: c.placement,
            axis: c.axis,
            rate_hz: c.rate_hz,
            file,
        });
    }
    let manifest = Manifest {
        subject_id: s.subject.subject_id.clone(),
        height_m: s.subject.height_m,
        mass_kg: s.subject.mass_kg,
        suit_side: s.subject.suit_side,
        scenario: s.scenario,
        round_index: s.round_index,
        duration_s: s.duration_s,
        channels: entries,
        movements: s.movements.clone(),
        meta,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| SessionError::Format(format!("manifest serialization failed: {e}")))?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_session(dir: &Path) -> Result<Session, SessionError> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| SessionError::Format(format!("missing or unreadable manifest {}: {e}", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| SessionError::Format(format!("malformed manifest {}: {e}", manifest_path.display())))?;

    let mut channels = Vec::with_capacity(manifest.channels.len());
    for entry in &manifest.channels {
        let path = dir.join(&entry.file);
        let csv = fs::read_to_string(&path)
            .map_err(|e| SessionError::Format(format!("channel file {} referenced by manifest is unreadable: {e}", path.display())))?;
        let (samples, gap_mask) = parse_channel_csv(&csv, &entry.channel_id)?;
        channels.push(ChannelSeries {
            channel_id: entry.channel_id.clone(),
            modality: entry.modality,
            placement: entry.placement,
            axis: entry.axis,
            rate_hz: entry.rate_hz,
            samples,
            gap_mask,
        });
    }

    let session = Session {
        subject: SubjectProfile {
            subject_id: manifest.subject_id,
            height_m: manifest.height_m,
            mass_kg: manifest.mass_kg,
            suit_side: manifest.suit_side,
        },
        scenario: manifest.scenario,
        round_index: manifest.round_index,
        channels,
        movements: manifest.movements,
        duration_s: manifest.duration_s,
    };

    let report = validate_session(&session);
    if !report.is_valid() {
        let msgs: Vec<String> =
            report.violations.iter().map(|v| format!("{}: {}", v.target, v.message)).collect();
        return Err(SessionError::Validation(msgs.join("; ")));
    }
    Ok(session)
}

fn parse_channel_csv(csv: &str, channel_id: &str) -> Result<(Vec<f64>, Vec<bool>), SessionError> {
    let mut samples = Vec::new();
    let mut gap_mask = Vec::new();
    for (lineno, line) in csv.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "t,value,gap" {
                return Err(SessionError::Format(format!("channel {channel_id}: expected header `t,value,gap`, got `{line}`")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let _t = parts.next();
        let value = parts
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| SessionError::Format(format!("channel {channel_id} line {}: bad value", lineno + 1)))?;
        let gap = match parts.next() {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(SessionError::Format(format!("channel {channel_id} line {}: gap must be 0 or 1", lineno + 1))),
        };
        samples.push(value);
        gap_mask.push(gap);
    }
    Ok((samples, gap_mask))
}
