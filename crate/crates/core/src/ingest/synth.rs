//! Synthetic stand-ins for recorded rides and hand-posture sessions.
//!
//! Braking traces model the handle bar of a two-wheeled transporter: while
//! cruising the bar sways slightly; a normal stop is a moderate lean-back
//! excursion; a sudden stop is a deeper, shorter excursion with a shudder.
//! Consecutive stop segments share one excursion envelope whose depth
//! follows the current state, and states are joined by raised-cosine ramps. Gravity
//! and longitudinal deceleration are projected onto the device axes through
//! the scripted roll/pitch, so the accelerometer-angle formula recovers the
//! scripted attitude whenever the motion is quasi-static.
//!
//! Posture traces are piecewise-constant six-channel hand poses joined by
//! smooth transition trajectories that carry gesture labels.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ImuSample, LabeledTrace, SignalTrace};
use crate::error::{Error, Result};
use crate::signal_fusion::{motion_from_device, GRAVITY};

pub const BRAKING_CLASS_NAMES: [&str; 3] = ["cruise", "normal", "sudden"];

pub const POSTURE_COUNT: usize = 5;
pub const GESTURE_COUNT: usize = 8;
pub const POSTURE_CLASS_NAMES: [&str; POSTURE_COUNT + GESTURE_COUNT] = [
    "stop",
    "forward",
    "backward",
    "left",
    "right",
    "reach_forward",
    "reach_backward",
    "reach_left",
    "reach_right",
    "return_from_forward",
    "return_from_backward",
    "return_from_left",
    "return_from_right",
];
pub const POSTURE_CHANNEL_NAMES: [&str; 6] = [
    "palm_x",
    "palm_y",
    "palm_z",
    "palm_pitch",
    "palm_roll",
    "palm_yaw",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BrakingState {
    Cruise = 0,
    Normal = 1,
    Sudden = 2,
}

impl BrakingState {
    pub fn id(self) -> usize {
        self as usize
    }
}

impl FromStr for BrakingState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cruise" | "0" => Ok(BrakingState::Cruise),
            "normal" | "normal_brake" | "1" => Ok(BrakingState::Normal),
            "sudden" | "sudden_brake" | "2" => Ok(BrakingState::Sudden),
            other => Err(Error::Scenario(format!("unknown state `{other}`"))),
        }
    }
}

/// One `(state, duration)` entry of a maneuver script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSegment {
    pub state: String,
    pub duration_s: f64,
}

impl ScenarioSegment {
    pub fn new(state: &str, duration_s: f64) -> Self {
        Self {
            state: state.to_string(),
            duration_s,
        }
    }
}

/// Parses a JSON list of `{state, duration_s}` objects.
pub fn parse_scenario(json: &str) -> Result<Vec<ScenarioSegment>> {
    serde_json::from_str(json).map_err(|e| Error::Scenario(e.to_string()))
}

/// A cruise-dominant experiment alternating cruise with one kind of stop,
/// at least `min_duration_s` long. Stops are `Normal` or `Sudden`; a sudden
/// stop is entered and left through brief normal braking.
pub fn braking_experiment(stop: BrakingState, seed: u64, min_duration_s: f64) -> Vec<ScenarioSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_B4A4);
    let mut out = Vec::new();
    let mut total = 0.0;
    while total < min_duration_s {
        let cruise = rng.random_range(4.5..7.5);
        out.push(ScenarioSegment::new("cruise", cruise));
        total += cruise;
        if stop == BrakingState::Sudden {
            let lead = rng.random_range(0.6..1.0);
            let hard = rng.random_range(1.6..2.4);
            let trail = rng.random_range(0.6..1.0);
            out.push(ScenarioSegment::new("normal", lead));
            out.push(ScenarioSegment::new("sudden", hard));
            out.push(ScenarioSegment::new("normal", trail));
            total += lead + hard + trail;
        } else {
            let brake = rng.random_range(2.6..3.6);
            out.push(ScenarioSegment::new("normal", brake));
            total += brake;
        }
    }
    let tail = rng.random_range(3.0..5.0);
    out.push(ScenarioSegment::new("cruise", tail));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BrakingSynthParams {
    pub accel_noise: f64,
    pub gyro_noise: f64,
    /// Per-axis gyro bias is drawn once per trace from ±this, rad/s.
    pub gyro_bias_max: f64,
    /// Raised-cosine blend between adjacent segments, s.
    pub ramp_s: f64,
    /// Resting forward lean of the bar while cruising, rad.
    pub cruise_pitch: f64,
    pub sway_amplitude: f64,
    pub sway_hz: f64,
    pub roll_amplitude: f64,
    pub roll_hz: f64,
    /// Peak lean-back of a normal stop relative to cruising, rad.
    pub normal_depth: f64,
    /// Peak lean-back of a sudden stop relative to cruising, rad.
    pub sudden_depth: f64,
    pub jolt_amplitude: f64,
    pub jolt_hz: f64,
    /// Peak deceleration, m/s².
    pub normal_decel: f64,
    pub sudden_decel: f64,
    /// Per-segment amplitude multipliers are drawn from 1 ± this.
    pub amplitude_jitter: f64,
    /// Disables noise and bias entirely.
    pub noiseless: bool,
}

impl Default for BrakingSynthParams {
    fn default() -> Self {
        Self {
            accel_noise: 0.3,
            gyro_noise: 0.02,
            gyro_bias_max: 0.01,
            ramp_s: 0.25,
            cruise_pitch: 0.05,
            sway_amplitude: 0.007,
            sway_hz: 1.5,
            roll_amplitude: 0.015,
            roll_hz: 0.3,
            normal_depth: 0.105,
            sudden_depth: 0.26,
            jolt_amplitude: 0.025,
            jolt_hz: 3.0,
            normal_decel: 0.4,
            sudden_decel: 1.2,
            amplitude_jitter: 0.15,
            noiseless: false,
        }
    }
}

/// Generator output with the noise-free attitude it was built from.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub labeled: LabeledTrace,
    pub true_roll: Vec<f64>,
    pub true_pitch: Vec<f64>,
    pub gyro_bias: [f64; 3],
}

struct Segment {
    state: BrakingState,
    start: f64,
    duration: f64,
    gain: f64,
}

/// Raised-cosine step from 0 to 1 centred on `at`.
fn blend(t: f64, at: f64, ramp: f64) -> f64 {
    if ramp <= 0.0 {
        return if t >= at { 1.0 } else { 0.0 };
    }
    let u = (t - (at - ramp / 2.0)) / ramp;
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 - (PI * u).cos())
    }
}

/// Excursion envelope: 0 at both ends of the span, 1 in the middle.
fn hump(u: f64) -> f64 {
    if (0.0..=1.0).contains(&u) {
        0.5 * (1.0 - (2.0 * PI * u).cos())
    } else {
        0.0
    }
}

struct BrakingProfile<'a> {
    segments: &'a [Segment],
    /// Maximal runs of consecutive stop segments, `(start, end)` in seconds.
    maneuvers: Vec<(f64, f64)>,
    p: &'a BrakingSynthParams,
    sway_phase: f64,
    roll_phase: f64,
}

impl<'a> BrakingProfile<'a> {
    fn new(segments: &'a [Segment], p: &'a BrakingSynthParams, sway_phase: f64, roll_phase: f64) -> Self {
        let mut maneuvers: Vec<(f64, f64)> = Vec::new();
        let mut prev_stop = false;
        for seg in segments {
            let stop = seg.state != BrakingState::Cruise;
            if stop {
                let end = seg.start + seg.duration;
                match maneuvers.last_mut() {
                    Some(m) if prev_stop => m.1 = end,
                    _ => maneuvers.push((seg.start, end)),
                }
            }
            prev_stop = stop;
        }
        Self {
            segments,
            maneuvers,
            p,
            sway_phase,
            roll_phase,
        }
    }

    /// (lean-back depth, deceleration, oscillation) of one segment.
    fn segment_value(&self, seg: &Segment, t: f64) -> (f64, f64, f64) {
        let p = self.p;
        match seg.state {
            BrakingState::Cruise => (
                0.0,
                0.0,
                p.sway_amplitude * seg.gain * (2.0 * PI * p.sway_hz * t + self.sway_phase).sin(),
            ),
            BrakingState::Normal => (p.normal_depth * seg.gain, p.normal_decel * seg.gain, 0.0),
            BrakingState::Sudden => (
                p.sudden_depth * seg.gain,
                p.sudden_decel * seg.gain,
                p.jolt_amplitude * (2.0 * PI * p.jolt_hz * (t - seg.start)).sin(),
            ),
        }
    }

    fn envelope(&self, t: f64) -> f64 {
        self.maneuvers
            .iter()
            .find(|(a, b)| t >= *a && t <= *b)
            .map_or(0.0, |(a, b)| hump((t - a) / (b - a)))
    }

    /// (roll, pitch, longitudinal accel) at time `t`.
    fn at(&self, t: f64) -> (f64, f64, f64) {
        let mut v = [0.0; 3];
        let mut total = 0.0;
        let n = self.segments.len();
        for (k, seg) in self.segments.iter().enumerate() {
            let enter = if k == 0 {
                1.0
            } else {
                blend(t, seg.start, self.p.ramp_s)
            };
            let leave = if k + 1 == n {
                0.0
            } else {
                blend(t, self.segments[k + 1].start, self.p.ramp_s)
            };
            let w = enter * (1.0 - leave);
            if w > 0.0 {
                let (d, a, o) = self.segment_value(seg, t);
                v[0] += w * d;
                v[1] += w * a;
                v[2] += w * o;
                total += w;
            }
        }
        if total > 0.0 {
            v.iter_mut().for_each(|x| *x /= total);
        }
        let e = self.envelope(t);
        let roll = self.p.roll_amplitude * (2.0 * PI * self.p.roll_hz * t + self.roll_phase).sin();
        (roll, self.p.cruise_pitch - e * v[0] + v[2], -e * v[1])
    }
}

/// Braking trace with default generator settings.
pub fn synthesize_braking_trace(scenario: &[ScenarioSegment], seed: u64, fs: f64) -> Result<LabeledTrace> {
    synthesize_braking(scenario, seed, fs, &BrakingSynthParams::default()).map(|o| o.labeled)
}

/// Braking trace plus its ground-truth attitude.
pub fn synthesize_braking(
    scenario: &[ScenarioSegment],
    seed: u64,
    fs: f64,
    params: &BrakingSynthParams,
) -> Result<SynthOutput> {
    if scenario.is_empty() {
        return Err(Error::Scenario("scenario has no segments".into()));
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::Parameter(format!(
            "sampling rate must be positive, got {fs}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::with_capacity(scenario.len());
    let mut start = 0.0;
    for seg in scenario {
        let state: BrakingState = seg.state.parse()?;
        if !(seg.duration_s.is_finite() && seg.duration_s > 0.0) {
            return Err(Error::Scenario(format!(
                "segment `{}` has non-positive duration {}",
                seg.state, seg.duration_s
            )));
        }
        let gain = 1.0 + params.amplitude_jitter * rng.random_range(-1.0..=1.0);
        segments.push(Segment {
            state,
            start,
            duration: seg.duration_s,
            gain,
        });
        start += seg.duration_s;
    }
    let total = start;
    let sway_phase = rng.random_range(0.0..2.0 * PI);
    let roll_phase = rng.random_range(0.0..2.0 * PI);
    let profile = BrakingProfile::new(&segments, params, sway_phase, roll_phase);
    let bias: [f64; 3] = if params.noiseless {
        [0.0; 3]
    } else {
        std::array::from_fn(|_| rng.random_range(-params.gyro_bias_max..=params.gyro_bias_max))
    };
    let accel_noise =
        Normal::new(0.0, params.accel_noise.max(0.0)).map_err(|e| Error::Parameter(e.to_string()))?;
    let gyro_noise =
        Normal::new(0.0, params.gyro_noise.max(0.0)).map_err(|e| Error::Parameter(e.to_string()))?;

    let n = (total * fs).round() as usize;
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut true_roll = Vec::with_capacity(n);
    let mut true_pitch = Vec::with_capacity(n);
    let mut seg_idx = 0;
    let dt = 1e-4;
    for i in 0..n {
        let t = i as f64 / fs;
        while seg_idx + 1 < segments.len() && t >= segments[seg_idx + 1].start - 1e-12 {
            seg_idx += 1;
        }
        let (roll, pitch, along) = profile.at(t);
        let (r_plus, p_plus, _) = profile.at(t + dt);
        let (r_minus, p_minus, _) = profile.at(t - dt);
        let roll_rate = (r_plus - r_minus) / (2.0 * dt);
        let pitch_rate = (p_plus - p_minus) / (2.0 * dt);

        let specific = Vector3::new(along, 0.0, GRAVITY);
        let a = motion_from_device(roll, pitch).transpose() * specific;
        let mut accel = [a.x, a.y, a.z];
        let mut gyro = [roll_rate, pitch_rate * roll.cos(), -pitch_rate * roll.sin()];
        if !params.noiseless {
            for v in &mut accel {
                *v += accel_noise.sample(&mut rng);
            }
            for (k, v) in gyro.iter_mut().enumerate() {
                *v += bias[k] + gyro_noise.sample(&mut rng);
            }
        }
        samples.push(ImuSample::new(t, accel, gyro));
        labels.push(segments[seg_idx].state.id());
        true_roll.push(roll);
        true_pitch.push(pitch);
    }
    let trace = SignalTrace::imu(samples, fs)?;
    Ok(SynthOutput {
        labeled: LabeledTrace::new(trace, labels)?,
        true_roll,
        true_pitch,
        gyro_bias: bias,
    })
}

/// Class id of the gesture performed when moving between two postures.
///
/// Postures: 0 stop, 1 forward, 2 backward, 3 left, 4 right. Gestures are the
/// four reaches out of `stop` (ids 5..=8) and the four returns into it (ids
/// 9..=12). A move between two non-stop postures is labeled as the reach into
/// its target posture:
///
/// | from \ to | 0  | 1 | 2 | 3 | 4 |
/// |-----------|----|---|---|---|---|
/// | 0         | –  | 5 | 6 | 7 | 8 |
/// | 1         | 9  | – | 6 | 7 | 8 |
/// | 2         | 10 | 5 | – | 7 | 8 |
/// | 3         | 11 | 5 | 6 | – | 8 |
/// | 4         | 12 | 5 | 6 | 7 | – |
pub fn gesture_class(from: usize, to: usize) -> Result<usize> {
    if from >= POSTURE_COUNT || to >= POSTURE_COUNT {
        return Err(Error::Scenario(format!(
            "posture id out of range: {from} -> {to}"
        )));
    }
    if from == to {
        return Err(Error::Scenario(format!("posture {from} repeated")));
    }
    Ok(if to == 0 {
        POSTURE_COUNT + 3 + from
    } else {
        POSTURE_COUNT + to - 1
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostureSynthParams {
    pub fs: f64,
    /// Mean hold time of each posture, s.
    pub dwell_s: f64,
    /// Hold times are drawn from dwell_s·(1 ± this).
    pub dwell_jitter: f64,
    /// Duration of each transition, s.
    pub gesture_s: f64,
    /// Dip of the palm height during a gesture, same units as palm_y.
    pub gesture_dip: f64,
    pub position_noise: f64,
    pub angle_noise: f64,
    /// Overrides the per-posture hold times (one entry per script item).
    pub dwell_override: Option<Vec<f64>>,
}

impl Default for PostureSynthParams {
    fn default() -> Self {
        Self {
            fs: 20.0,
            dwell_s: 6.5,
            dwell_jitter: 0.1,
            gesture_s: 1.0,
            gesture_dip: 100.0,
            position_noise: 2.0,
            angle_noise: 0.01,
            dwell_override: None,
        }
    }
}

/// Palm pose per posture: position in mm, orientation in rad. After
/// per-channel centring no two poses are within 60° of collinear, so each
/// hold spans its own line.
const POSTURES: [[f64; 6]; POSTURE_COUNT] = [
    [0.0, 250.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 200.0, -70.0, -0.5, 0.0, 0.0],
    [0.0, 150.0, 40.0, 0.0, 0.0, 0.4],
    [-60.0, 180.0, 0.0, 0.0, -0.6, 0.0],
    [50.0, 210.0, 0.0, 0.4, 0.0, -0.4],
];

/// Posture trace with default settings.
pub fn synthesize_posture_trace(script: &[usize], seed: u64) -> Result<LabeledTrace> {
    synthesize_posture(script, seed, &PostureSynthParams::default())
}

pub fn synthesize_posture(script: &[usize], seed: u64, params: &PostureSynthParams) -> Result<LabeledTrace> {
    if script.is_empty() {
        return Err(Error::Scenario("posture script is empty".into()));
    }
    for pair in script.windows(2) {
        gesture_class(pair[0], pair[1])?;
    }
    if let Some(&bad) = script.iter().find(|&&p| p >= POSTURE_COUNT) {
        return Err(Error::Scenario(format!("posture id {bad} out of range")));
    }
    if let Some(d) = &params.dwell_override {
        if d.len() != script.len() {
            return Err(Error::Scenario(format!(
                "{} dwell overrides for {} postures",
                d.len(),
                script.len()
            )));
        }
    }
    let fs = params.fs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dwell: Vec<f64> = match &params.dwell_override {
        Some(d) => d.clone(),
        None => script
            .iter()
            .map(|_| params.dwell_s * (1.0 + params.dwell_jitter * rng.random_range(-1.0..=1.0)))
            .collect(),
    };

    // (start sample, end sample, from, to); from == to for holds.
    let mut spans = Vec::new();
    let mut cursor = 0usize;
    for (i, &p) in script.iter().enumerate() {
        let len = (dwell[i] * fs).round().max(1.0) as usize;
        spans.push((cursor, cursor + len, p, p));
        cursor += len;
        if let Some(&next) = script.get(i + 1) {
            let len = (params.gesture_s * fs).round().max(1.0) as usize;
            spans.push((cursor, cursor + len, p, next));
            cursor += len;
        }
    }
    let pos =
        Normal::new(0.0, params.position_noise.max(0.0)).map_err(|e| Error::Parameter(e.to_string()))?;
    let ang = Normal::new(0.0, params.angle_noise.max(0.0)).map_err(|e| Error::Parameter(e.to_string()))?;

    let mut samples = Vec::with_capacity(cursor);
    let mut labels = Vec::with_capacity(cursor);
    for &(start, end, from, to) in &spans {
        let len = (end - start) as f64;
        for i in start..end {
            let mut v = POSTURES[from];
            let label = if from == to {
                from
            } else {
                let u = (i - start) as f64 / len;
                let s = 0.5 * (1.0 - (PI * u).cos());
                for (k, x) in v.iter_mut().enumerate() {
                    *x += s * (POSTURES[to][k] - POSTURES[from][k]);
                }
                v[1] -= params.gesture_dip * (PI * u).sin();
                gesture_class(from, to)?
            };
            for (k, x) in v.iter_mut().enumerate() {
                *x += if k < 3 {
                    pos.sample(&mut rng)
                } else {
                    ang.sample(&mut rng)
                };
            }
            samples.push(ImuSample::new(
                i as f64 / fs,
                [v[0], v[1], v[2]],
                [v[3], v[4], v[5]],
            ));
            labels.push(label);
        }
    }
    let trace = SignalTrace::new(
        samples,
        fs,
        POSTURE_CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
    )?;
    LabeledTrace::new(trace, labels)
}

/// A posture script with `changes` transitions, each to a different posture.
pub fn random_posture_script(changes: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut script = vec![rng.random_range(0..POSTURE_COUNT)];
    for _ in 0..changes {
        let last = *script.last().unwrap();
        let mut next = rng.random_range(0..POSTURE_COUNT - 1);
        if next >= last {
            next += 1;
        }
        script.push(next);
    }
    script
}
