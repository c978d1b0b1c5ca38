//! Deterministic synthetic gait-session generator. Encodes the effects the
//! downstream pipeline must recover as controllable ground truth: suit-induced
//! abrupt muscle activation, contralateral leg compensation, tonic wrist
//! loading on the rollator, and gyro yaw signatures during turns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{design_bandpass, FilterState};
use crate::session::{
    Axis, ChannelSeries, Modality, MovementLabel, MovementSegment, Placement, ScenarioTag, Session,
    SubjectProfile, SuitSide,
};

pub const EMG_RATE_HZ: f64 = 2000.0;
pub const IMU_RATE_HZ: f64 = 200.0;

/// The 13 EMG channel ids and placements used for every synthetic subject.
pub const EMG_LAYOUT: [(&str, Placement); 13] = [
    ("emg_back_erector_spinae", Placement::Back),
    ("emg_back_trapezius_left", Placement::Back),
    ("emg_back_trapezius_right", Placement::Back),
    ("emg_left_wrist_brachioradialis", Placement::LeftWrist),
    ("emg_left_wrist_flexor_digitorum", Placement::LeftWrist),
    ("emg_left_wrist_extensor_carpi", Placement::LeftWrist),
    ("emg_right_wrist_brachioradialis", Placement::RightWrist),
    ("emg_right_wrist_flexor_digitorum", Placement::RightWrist),
    ("emg_right_wrist_extensor_carpi", Placement::RightWrist),
    ("emg_left_leg_rectus_femoris", Placement::LeftLeg),
    ("emg_left_leg_biceps_femoris", Placement::LeftLeg),
    ("emg_right_leg_rectus_femoris", Placement::RightLeg),
    ("emg_right_leg_biceps_femoris", Placement::RightLeg),
];

fn placement_side(p: Placement) -> Option<SuitSide> {
    match p {
        Placement::LeftWrist | Placement::LeftLeg => Some(SuitSide::Left),
        Placement::RightWrist | Placement::RightLeg => Some(SuitSide::Right),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Forward,
    Turn90,
    Turn180,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    pub kind: SegmentKind,
    pub duration_s: f64,
    /// Signed yaw rate during the segment; 0 for forward.
    pub yaw_rate_dps: f64,
}

/// Walking route as a sequence of forward stretches and turns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    pub segments: Vec<PathSegment>,
}

impl PathPlan {
    /// An L-shaped path walked out and back: forward, 90 degree turn,
    /// forward, 180 degree turn-around, and the mirror on the way back.
    pub fn l_shaped(turn_yaw_dps: f64) -> PathPlan {
        let f = |d: f64| PathSegment { kind: SegmentKind::Forward, duration_s: d, yaw_rate_dps: 0.0 };
        PathPlan {
            segments: vec![
                f(1.2),
                PathSegment { kind: SegmentKind::Turn90, duration_s: 1.2, yaw_rate_dps: turn_yaw_dps },
                f(2.7),
                PathSegment { kind: SegmentKind::Turn180, duration_s: 1.8, yaw_rate_dps: turn_yaw_dps },
                f(2.7),
                PathSegment { kind: SegmentKind::Turn90, duration_s: 1.2, yaw_rate_dps: turn_yaw_dps },
                f(4.7),
            ],
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    pub fn movements(&self) -> Vec<MovementSegment> {
        let mut out = Vec::new();
        let mut t = 0.0;
        for seg in &self.segments {
            let label = match seg.kind {
                SegmentKind::Forward => MovementLabel::Forward,
                SegmentKind::Turn90 | SegmentKind::Turn180 => MovementLabel::Turning,
            };
            out.push(MovementSegment { start_s: t, end_s: t + seg.duration_s, label });
            t += seg.duration_s;
        }
        out
    }

    fn yaw_rate_at(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for seg in &self.segments {
            if t < acc + seg.duration_s {
                return seg.yaw_rate_dps;
            }
            acc += seg.duration_s;
        }
        0.0
    }
}

/// Everything that makes one synthetic subject unique, plus the effect knobs
/// the pipeline is expected to recover. Identical values produce identical
/// sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    pub seed: u64,
    pub subject_id: String,
    pub height_m: f64,
    pub mass_kg: f64,
    pub suit_side: SuitSide,
    /// Strides per second, typically 0.7 to 1.2.
    pub stride_hz: f64,
    /// Per-channel EMG amplitude scale, aligned with [`EMG_LAYOUT`].
    pub channel_amplitude: Vec<f64>,
    pub noise_floor_mv: f64,
    /// Multiplies the transient spike rate on restricted-side channels when
    /// wearing the suit.
    pub suit_abruptness_gain: f64,
    /// Amplitude multiplier on the leg contralateral to the suit.
    pub compensation_gain: f64,
    /// Amplitude factor on restricted-side channels when wearing the suit.
    pub restricted_amp_factor: f64,
    /// Extra tonic wrist activation while pushing the rollator.
    pub rollator_tonic_gain: f64,
    /// Baseline biphasic spike rate on every EMG channel.
    pub spike_rate_hz: f64,
    /// Spike amplitude relative to the local envelope.
    pub spike_amp: f64,
    pub turn_yaw_dps: f64,
    /// Peak yaw of brief heading corrections during forward walking. Half of
    /// a turn straddle window for a cautious walker looks exactly like a
    /// vigorous walker's swerve, so the two are told apart only by knowing
    /// which kind of walker produced them.
    pub swerve_yaw_dps: f64,
    /// Constant yaw-plane misalignment of the wrist sensors, evenly spaced
    /// across the population: it identifies the wearer but carries no
    /// movement information.
    pub mount_bias_dps: f64,
    pub gyro_bias_dps: f64,
    pub gyro_noise_dps: f64,
    /// Handlebar tremor amplitude while walking forward.
    pub forward_wobble_dps: f64,
    pub acc_amp_g: f64,
    pub imu_noise_g: f64,
    /// Per-round amplitude drift; 0 reproduces the no-trend finding.
    pub drift_per_round: f64,
}

impl SubjectParams {
    /// Deterministic subject drawn from `(master_seed, index)`. Subjects
    /// alternate suit side; index is 0-based.
    pub fn derive(master_seed: u64, index: usize, drift_per_round: f64) -> SubjectParams {
        let seed = mix(master_seed, &[0x5b6c_74a1, index as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let suit_side = if index % 2 == 0 { SuitSide::Left } else { SuitSide::Right };
        let forward_wobble_dps = 7.5;
        // Turning style alternates across the cohort: a cautious walker's
        // full turn matches a vigorous walker's swerve sample for sample, so
        // the mid-range yaw band reads differently per wearer.
        let swerve_yaw_dps = if index % 2 == 0 { 10.0 } else { 40.0 };
        SubjectParams {
            seed,
            subject_id: format!("s{:02}", index + 1),
            height_m: rng.gen_range(1.55..1.95),
            mass_kg: rng.gen_range(50.0..100.0),
            suit_side,
            stride_hz: rng.gen_range(0.7..1.2),
            channel_amplitude: (0..13).map(|_| rng.gen_range(0.7..1.4)).collect(),
            noise_floor_mv: rng.gen_range(0.02..0.05),
            suit_abruptness_gain: 2.0,
            compensation_gain: 1.3,
            restricted_amp_factor: 0.65,
            rollator_tonic_gain: 0.6,
            spike_rate_hz: 20.0,
            spike_amp: 3.0,
            turn_yaw_dps: 4.0 * swerve_yaw_dps,
            swerve_yaw_dps,
            mount_bias_dps: 3.0 * (index + 1) as f64 * rng.gen_range(-0.01..0.01f64).exp(),
            gyro_bias_dps: rng.gen_range(-0.1..0.1),
            gyro_noise_dps: 1.0,
            forward_wobble_dps,
            acc_amp_g: 0.06,
            imu_noise_g: 0.02,
            drift_per_round: drift_per_round,
        }
    }

    pub fn profile(&self) -> SubjectProfile {
        SubjectProfile {
            subject_id: self.subject_id.clone(),
            height_m: self.height_m,
            mass_kg: self.mass_kg,
            suit_side: self.suit_side,
        }
    }
}

/// SplitMix64-style mixing for deriving independent stream seeds.
fn mix(seed: u64, salts: &[u64]) -> u64 {
    let mut z = seed;
    for &s in salts {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(s.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one value per call keeps the draw count predictable.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Gaussian burst envelope over the stride cycle, period 1.
fn burst(phase: f64, centers: &[f64], width: f64) -> f64 {
    let mut v = 0.0;
    for &c in centers {
        let mut d = (phase - c).rem_euclid(1.0);
        if d > 0.5 {
            d -= 1.0;
        }
        v += (-0.5 * (d / width) * (d / width)).exp();
    }
    v
}

fn emg_channel(
    p: &SubjectParams,
    scenario: ScenarioTag,
    round_index: u32,
    chan_idx: usize,
    n: usize,
    coefs: &crate::dsp::FilterCoefficients,
) -> ChannelSeries {
    let (id, placement) = EMG_LAYOUT[chan_idx];
    let side = placement_side(placement);
    let is_leg = matches!(placement, Placement::LeftLeg | Placement::RightLeg);
    let is_wrist = matches!(placement, Placement::LeftWrist | Placement::RightWrist);

    let drift = 1.0 + p.drift_per_round * (round_index as f64 - 1.0);
    let mut amp = p.channel_amplitude[chan_idx] * drift;
    let mut spike_rate = p.spike_rate_hz;
    if scenario.suit {
        if side == Some(p.suit_side) {
            amp *= p.restricted_amp_factor;
            spike_rate *= p.suit_abruptness_gain;
        }
        if is_leg && side.is_some() && side != Some(p.suit_side) {
            amp *= p.compensation_gain;
        }
    }
    let tonic = if scenario.rollator && is_wrist { p.rollator_tonic_gain * amp } else { 0.0 };

    // Legs burst twice per stride (stance and swing); wrist and back once.
    let centers: Vec<f64> = if is_leg {
        let base = if side == Some(SuitSide::Left) { 0.0 } else { 0.5 };
        vec![(base + 0.08 + 0.03 * (chan_idx as f64)).rem_euclid(1.0), (base + 0.55 + 0.03 * (chan_idx as f64)).rem_euclid(1.0)]
    } else {
        vec![(0.25 + 0.07 * chan_idx as f64).rem_euclid(1.0)]
    };

    let mut noise_rng =
        ChaCha8Rng::seed_from_u64(mix(p.seed, &[1, scenario.id() as u64, round_index as u64, chan_idx as u64]));
    let mut spike_rng =
        ChaCha8Rng::seed_from_u64(mix(p.seed, &[2, scenario.id() as u64, round_index as u64, chan_idx as u64]));

    // Band-limited carrier: white noise through the 20-450 Hz band-pass.
    let mut state = FilterState::new(coefs);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / EMG_RATE_HZ;
        let phase = (t * p.stride_hz).rem_euclid(1.0);
        let envelope = p.noise_floor_mv + amp * burst(phase, &centers, 0.09) + tonic;
        let carrier = state.process_sample(normal(&mut noise_rng));
        samples.push(envelope * carrier);
    }
    // Biphasic transient spikes riding on the local envelope.
    let spike_prob = spike_rate / EMG_RATE_HZ;
    let mut i = 0;
    while i + 1 < n {
        if spike_rng.gen::<f64>() < spike_prob {
            let t = i as f64 / EMG_RATE_HZ;
            let phase = (t * p.stride_hz).rem_euclid(1.0);
            let envelope = p.noise_floor_mv + amp * burst(phase, &centers, 0.09) + tonic;
            let a = p.spike_amp * envelope * (1.0 + 0.3 * normal(&mut spike_rng));
            samples[i] += a;
            samples[i + 1] -= a;
            i += 2;
        } else {
            i += 1;
        }
    }

    ChannelSeries {
        channel_id: id.to_string(),
        modality: Modality::Emg,
        placement,
        axis: Axis::None,
        rate_hz: EMG_RATE_HZ,
        gap_mask: vec![false; samples.len()],
        samples,
    }
}

fn imu_channels(p: &SubjectParams, scenario: ScenarioTag, round_index: u32, plan: &PathPlan, n: usize) -> Vec<ChannelSeries> {
    let mut out = Vec::with_capacity(12);
    let tau = 2.0 * std::f64::consts::PI;
    // A slow intensity envelope shared by every gyro channel of the session:
    // the handlebar tremor wanders within the subject's own range, so each
    // session covers the space between its quietest and firmest windows.
    let env_seed = mix(p.seed, &[99, scenario.id() as u64, round_index as u64]);
    let mut env_rng = ChaCha8Rng::seed_from_u64(env_seed);
    let wobble_phase: f64 = env_rng.gen_range(0.0..tau);
    let wobble_env = move |t: f64| 0.95 + 0.05 * (tau * 0.23 * t + wobble_phase).sin();
    // Brief heading corrections during forward stretches: 0.5 s yaw bumps at
    // swerve amplitude, one per forward segment (the first one at a fixed
    // early offset so every session opens with one). They are labeled forward
    // by the path plan, so windows over them separate from real turns only by
    // the subject's own yaw scale.
    let mut swerves: Vec<(f64, f64)> = Vec::new(); // (start_s, peak dps)
    {
        let mut seg_start = 0.0;
        let mut first = true;
        for seg in &plan.segments {
            if seg.kind == SegmentKind::Forward && seg.duration_s >= 0.7 {
                if first {
                    swerves.push((seg_start + 0.2, p.swerve_yaw_dps));
                    first = false;
                } else if seg.duration_s >= 2.0 {
                    // Offset snapped to the window hop so swerve edges always
                    // bisect a window, never at arbitrary fractions.
                    let steps = ((seg.duration_s - 0.8) / 0.1) as u32;
                    let off = 0.1 * env_rng.gen_range(3..=steps) as f64;
                    swerves.push((seg_start + off, p.swerve_yaw_dps));
                }
            }
            seg_start += seg.duration_s;
        }
    }
    const SWERVE_DUR_S: f64 = 0.5;
    let swerve_yaw = move |t: f64| -> f64 {
        for &(start, peak) in &swerves {
            if t >= start && t < start + SWERVE_DUR_S {
                return peak;
            }
        }
        0.0
    };
    for (sensor_idx, placement) in [Placement::RollatorLeft, Placement::RollatorRight].into_iter().enumerate() {
        let phase_off = 0.15 * sensor_idx as f64;
        for modality in [Modality::Acc, Modality::Gyro] {
            for (axis_idx, axis) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
                let salt = 100 + sensor_idx as u64 * 10 + (modality == Modality::Gyro) as u64 * 5 + axis_idx as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(mix(p.seed, &[salt, scenario.id() as u64, round_index as u64]));
                let samples: Vec<f64> = (0..n)
                    .map(|i| {
                        let t = i as f64 / IMU_RATE_HZ;
                        // Handlebar tremor at 5 Hz: one full cycle per feature
                        // window, so it shapes rectified magnitude without
                        // biasing windowed means.
                        let tremor = tau * (5.0 * t + phase_off);
                        let v = match (modality, axis) {
                            (Modality::Acc, axis) => {
                                // Steady oscillation around gravity; deliberately
                                // carries neither turning nor wearer information.
                                let axis_phase = axis_idx as f64 * 2.0;
                                let gravity = if axis == Axis::Z { 1.0 } else { 0.0 };
                                gravity
                                    + p.acc_amp_g * (tremor + axis_phase).sin()
                                    + p.imu_noise_g * normal(&mut rng)
                            }
                            (Modality::Gyro, Axis::Z) => {
                                plan.yaw_rate_at(t)
                                    + swerve_yaw(t)
                                    + p.gyro_bias_dps
                                    + p.forward_wobble_dps * wobble_env(t) * tremor.sin()
                                    + p.gyro_noise_dps * normal(&mut rng)
                            }
                            (Modality::Gyro, Axis::X) => {
                                p.mount_bias_dps
                                    + 0.25 * p.forward_wobble_dps * wobble_env(t) * tremor.cos()
                                    + p.gyro_noise_dps * normal(&mut rng)
                            }
                            _ => {
                                0.25 * p.forward_wobble_dps * wobble_env(t) * (tremor + axis_idx as f64).cos()
                                    + p.gyro_noise_dps * normal(&mut rng)
                            }
                        };
                        v
                    })
                    .collect();
                let mod_name = if modality == Modality::Acc { "acc" } else { "gyro" };
                let axis_name = match axis {
                    Axis::X => "x",
                    Axis::Y => "y",
                    Axis::Z => "z",
                    Axis::None => unreachable!(),
                };
                out.push(ChannelSeries {
                    channel_id: format!("{}_{}_{}", placement.name(), mod_name, axis_name),
                    modality,
                    placement,
                    axis,
                    rate_hz: IMU_RATE_HZ,
                    gap_mask: vec![false; samples.len()],
                    samples,
                });
            }
        }
    }
    out
}

/// Generates one session, fully deterministic in `(params, scenario,
/// round_index, plan)`.
pub fn generate_session(p: &SubjectParams, scenario: ScenarioTag, round_index: u32, plan: &PathPlan) -> Session {
    let duration_s = plan.duration_s();
    let n_emg = (duration_s * EMG_RATE_HZ).round() as usize;
    let n_imu = (duration_s * IMU_RATE_HZ).round() as usize;
    let coefs = design_bandpass(20.0, 450.0, 4, EMG_RATE_HZ).expect("fixed EMG band-pass design");

    let mut channels: Vec<ChannelSeries> =
        (0..13).map(|i| emg_channel(p, scenario, round_index, i, n_emg, &coefs)).collect();
    if scenario.rollator {
        channels.extend(imu_channels(p, scenario, round_index, plan, n_imu));
    }

    Session {
        subject: p.profile(),
        scenario,
        round_index,
        channels,
        movements: plan.movements(),
        duration_s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_subjects: usize,
    pub rounds: u32,
    pub master_seed: u64,
    pub drift_per_round: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig { n_subjects: 11, rounds: 10, master_seed: 42, drift_per_round: 0.0 }
    }
}

/// Lightweight description of one study session; expand with
/// [`generate_from_spec`] on demand to keep memory bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSpec {
    pub params: SubjectParams,
    pub scenario: ScenarioTag,
    pub round_index: u32,
    pub plan: PathPlan,
}

pub fn generate_from_spec(spec: &SessionSpec) -> Session {
    generate_session(&spec.params, spec.scenario, spec.round_index, &spec.plan)
}

/// All `n_subjects x 4 scenarios x rounds` session specs for a study.
pub fn study_specs(cfg: &StudyConfig) -> Vec<SessionSpec> {
    assert!(cfg.n_subjects >= 2, "study needs at least 2 subjects");
    assert!(cfg.rounds >= 2, "study needs at least 2 rounds");
    let mut specs = Vec::with_capacity(cfg.n_subjects * 4 * cfg.rounds as usize);
    for i in 0..cfg.n_subjects {
        let params = SubjectParams::derive(cfg.master_seed, i, cfg.drift_per_round);
        let plan = PathPlan::l_shaped(params.turn_yaw_dps);
        for scenario in ScenarioTag::all() {
            for round_index in 1..=cfg.rounds {
                specs.push(SessionSpec { params: params.clone(), scenario, round_index, plan: plan.clone() });
            }
        }
    }
    specs
}

/// Materializes the whole study in memory. Prefer [`study_specs`] plus
/// [`generate_from_spec`] for large studies.
pub fn generate_study(cfg: &StudyConfig) -> Vec<Session> {
    study_specs(cfg).iter().map(generate_from_spec).collect()
}

/// Applies the standard offline preprocessing in place: causal 20-450 Hz
/// band-pass on every EMG channel. IMU channels pass through untouched, which
/// keeps offline features comparable to the streaming path.
pub fn preprocess_session(s: &mut Session) -> Result<(), crate::dsp::DspError> {
    use crate::dsp::{apply_filter, FilterMode};
    for c in &mut s.channels {
        if c.modality == Modality::Emg {
            let coefs = design_bandpass(20.0, 450.0, 4, c.rate_hz)?;
            c.samples = apply_filter(&c.samples, &coefs, FilterMode::Causal)?;
        }
    }
    Ok(())
}

/// Generates, preprocesses, and featurizes a whole study one session at a
/// time, so memory stays bounded by a single session.
pub fn featurize_study(
    cfg: &StudyConfig,
    task: crate::features::Task,
    selection: crate::features::FeatureSelection,
    ssc_threshold: f64,
) -> Result<crate::features::FeatureTable, String> {
    use crate::features::{build_dataset, FeatureTable};
    use rayon::prelude::*;
    let per_session: Vec<Result<FeatureTable, String>> = study_specs(cfg)
        .par_iter()
        .map(|spec| {
            let mut s = generate_from_spec(spec);
            preprocess_session(&mut s).map_err(|e| e.to_string())?;
            let (t, _) = build_dataset(std::slice::from_ref(&s), task, selection, ssc_threshold)
                .map_err(|e| e.to_string())?;
            Ok(t)
        })
        .collect();
    let mut table = FeatureTable::default();
    for t in per_session {
        let t = t?;
        if t.rows.is_empty() {
            continue;
        }
        if table.schema.is_empty() {
            table.schema = t.schema;
        } else if table.schema != t.schema {
            return Err("inconsistent feature schema across study sessions".into());
        }
        table.rows.extend(t.rows);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_emg_features, segment_windows};
    use crate::session::validate_session;

    fn test_params() -> SubjectParams {
        SubjectParams::derive(7, 0, 0.0)
    }

    fn short_plan(yaw: f64) -> PathPlan {
        PathPlan {
            segments: vec![
                PathSegment { kind: SegmentKind::Forward, duration_s: 2.0, yaw_rate_dps: 0.0 },
                PathSegment { kind: SegmentKind::Turn90, duration_s: 1.0, yaw_rate_dps: yaw },
                PathSegment { kind: SegmentKind::Forward, duration_s: 2.0, yaw_rate_dps: 0.0 },
            ],
        }
    }

    #[test]
    fn channel_counts_follow_scenario() {
        let p = test_params();
        let plan = short_plan(p.turn_yaw_dps);
        let s1 = generate_session(&p, ScenarioTag::from_id(1).unwrap(), 1, &plan);
        assert_eq!(s1.channels.len(), 13);
        let s3 = generate_session(&p, ScenarioTag::from_id(3).unwrap(), 1, &plan);
        assert_eq!(s3.channels.len(), 25);
    }

    #[test]
    fn generation_is_deterministic() {
        let p = test_params();
        let plan = short_plan(p.turn_yaw_dps);
        let a = generate_session(&p, ScenarioTag::from_id(4).unwrap(), 3, &plan);
        let b = generate_session(&p, ScenarioTag::from_id(4).unwrap(), 3, &plan);
        assert_eq!(a, b);
    }

    #[test]
    fn generated_sessions_validate() {
        let cfg = StudyConfig { n_subjects: 2, rounds: 2, master_seed: 9, drift_per_round: 0.0 };
        for s in generate_study(&cfg) {
            let report = validate_session(&s);
            assert!(report.is_valid(), "violations: {:?}", report.violations);
            let has_forward = s.movements.iter().any(|m| m.label == MovementLabel::Forward);
            let has_turning = s.movements.iter().any(|m| m.label == MovementLabel::Turning);
            assert!(has_forward && has_turning, "both movement classes present");
        }
    }

    #[test]
    fn study_counts_and_suit_side_alternation() {
        let cfg = StudyConfig { n_subjects: 2, rounds: 2, master_seed: 5, drift_per_round: 0.0 };
        let sessions = generate_study(&cfg);
        assert_eq!(sessions.len(), 16);
        let sides: Vec<SuitSide> = sessions.iter().map(|s| s.subject.suit_side).collect();
        assert!(sides.contains(&SuitSide::Left) && sides.contains(&SuitSide::Right));
    }

    #[test]
    fn turning_gyro_z_dominates_forward() {
        let p = test_params();
        let plan = PathPlan::l_shaped(p.turn_yaw_dps);
        let s = generate_session(&p, ScenarioTag::from_id(3).unwrap(), 1, &plan);
        let gyro_z = s.channel("rollator_left_gyro_z").unwrap();
        let mean_abs = |label: MovementLabel| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for seg in s.movements.iter().filter(|m| m.label == label) {
                let a = (seg.start_s * IMU_RATE_HZ) as usize;
                let b = ((seg.end_s * IMU_RATE_HZ) as usize).min(gyro_z.samples.len());
                for v in &gyro_z.samples[a..b] {
                    sum += v.abs();
                    count += 1;
                }
            }
            sum / count as f64
        };
        let turning = mean_abs(MovementLabel::Turning);
        let forward = mean_abs(MovementLabel::Forward);
        assert!(turning >= 3.0 * forward, "turning {turning} vs forward {forward}");
    }

    #[test]
    fn suit_raises_ssc_on_restricted_leg() {
        let p = test_params(); // suit_side = left
        let plan = PathPlan::l_shaped(p.turn_yaw_dps);
        let off = generate_session(&p, ScenarioTag::from_id(1).unwrap(), 1, &plan);
        let on = generate_session(&p, ScenarioTag::from_id(2).unwrap(), 1, &plan);
        let mean_ssc = |s: &Session| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for c in s.channels_of(Modality::Emg).filter(|c| c.placement == Placement::LeftLeg) {
                for w in segment_windows(c, 200.0, 100.0) {
                    sum += extract_emg_features(&w, 0.0).ssc;
                    count += 1;
                }
            }
            sum / count as f64
        };
        let ssc_on = mean_ssc(&on);
        let ssc_off = mean_ssc(&off);
        assert!(ssc_on > ssc_off, "suit SSC {ssc_on} vs no-suit {ssc_off}");
    }

    #[test]
    fn drift_raises_per_round_rms() {
        let mut p = test_params();
        p.drift_per_round = 0.05;
        let plan = short_plan(p.turn_yaw_dps);
        let rms_of_round = |round: u32| {
            let s = generate_session(&p, ScenarioTag::from_id(1).unwrap(), round, &plan);
            let c = s.channel("emg_left_leg_rectus_femoris").unwrap();
            (c.samples.iter().map(|v| v * v).sum::<f64>() / c.samples.len() as f64).sqrt()
        };
        let r1 = rms_of_round(1);
        let r5 = rms_of_round(5);
        let r10 = rms_of_round(10);
        assert!(r1 < r5 && r5 < r10, "rms not increasing: {r1} {r5} {r10}");
    }
}
