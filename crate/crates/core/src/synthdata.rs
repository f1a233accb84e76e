//! Deterministic generator of synthetic exercise sessions with controllable
//! impairments.
//!
//! Each repetition follows a per-exercise joint-angle template (E1 elbow
//! flexion toward the mouth, E2 forward shoulder flexion, E3 elbow-extension
//! push) driven through a rigid ten-joint body, so bone lengths stay constant
//! up to the sensor noise floor. Impairments act on the template: a range of
//! motion deficit scales the amplitude, tremor adds a two-tone angular
//! oscillation at the elbow and shoulder, and compensation adds shoulder
//! elevation and forward trunk lean.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{
    save_session, segment, Arm, Exercise, Frame, Group, Joint, Labels, MotionClip, Point,
    Repetition, Session, Side, Skeleton, Subject,
};

pub const GENERATOR_VERSION: u32 = 1;

/// Deficits above the first value score 0, above the second score 1.
pub const ROM_THRESHOLDS: (f64, f64) = (0.5, 0.2);
/// Tremor amplitude thresholds in meters.
pub const TREMOR_THRESHOLDS: (f64, f64) = (0.015, 0.005);
pub const COMPENSATION_THRESHOLDS: (f64, f64) = (0.5, 0.2);

/// Tremor frequency band in Hz.
pub const TREMOR_BAND: (f64, f64) = (3.0, 4.5);

/// Magnitude ranges sampled for scores 0, 1 and 2, kept clear of the
/// thresholds.
const ROM_LEVELS: [(f64, f64); 3] = [(0.6, 0.8), (0.3, 0.42), (0.0, 0.1)];
const TREMOR_LEVELS: [(f64, f64); 3] = [(0.022, 0.03), (0.008, 0.012), (0.0, 0.002)];
const COMPENSATION_LEVELS: [(f64, f64); 3] = [(0.65, 0.9), (0.3, 0.42), (0.0, 0.08)];

/// Score-level pattern shuffled per subject and component for affected sides.
const AFFECTED_LEVELS: [usize; 10] = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];

const MAX_SHRUG_DEGREES: f64 = 28.0;
const MAX_LEAN_DEGREES: f64 = 18.0;
const ABDUCTION_DEGREES: f64 = 8.0;
const REST_SECONDS: f64 = 0.5;

/// Maps a magnitude onto a 0/1/2 score.
pub fn score(value: f64, (severe, mild): (f64, f64)) -> u8 {
    if value > severe {
        0
    } else if value > mild {
        1
    } else {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompensationMode {
    None,
    ShoulderElevation,
    TrunkLean,
    Both,
}

impl CompensationMode {
    /// Weights of shoulder elevation and trunk lean.
    fn weights(self) -> (f64, f64) {
        match self {
            CompensationMode::None => (0.0, 0.0),
            CompensationMode::ShoulderElevation => (1.0, 0.5),
            CompensationMode::TrunkLean => (0.5, 1.0),
            CompensationMode::Both => (1.0, 1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CompensationMode::None => "none",
            CompensationMode::ShoulderElevation => "shoulder-elevation",
            CompensationMode::TrunkLean => "trunk-lean",
            CompensationMode::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impairment {
    /// Fraction of the template amplitude lost, in `[0, 1]`.
    pub rom_deficit: f64,
    /// Meters.
    pub tremor_amplitude: f64,
    /// Hz.
    pub tremor_frequency: f64,
    pub compensation: CompensationMode,
    pub compensation_magnitude: f64,
}

impl Impairment {
    pub fn none() -> Impairment {
        Impairment {
            rom_deficit: 0.0,
            tremor_amplitude: 0.0,
            tremor_frequency: 4.0,
            compensation: CompensationMode::None,
            compensation_magnitude: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &'static str, detail: String| Err(Error::Range { what, detail });
        if !(0.0..=1.0).contains(&self.rom_deficit) {
            return bad("rom_deficit", format!("{} outside [0, 1]", self.rom_deficit));
        }
        if !(self.tremor_amplitude >= 0.0 && self.tremor_amplitude.is_finite()) {
            return bad("tremor_amplitude", format!("{} is negative", self.tremor_amplitude));
        }
        if !(self.tremor_frequency > 0.0 && self.tremor_frequency.is_finite()) {
            return bad("tremor_frequency", format!("{} is not positive", self.tremor_frequency));
        }
        if !(self.compensation_magnitude >= 0.0 && self.compensation_magnitude.is_finite()) {
            return bad(
                "compensation_magnitude",
                format!("{} is negative", self.compensation_magnitude),
            );
        }
        Ok(())
    }

    /// Scores implied by the generating magnitudes.
    pub fn labels(&self) -> Labels {
        let compensation = match self.compensation {
            CompensationMode::None => 2,
            _ => score(self.compensation_magnitude, COMPENSATION_THRESHOLDS),
        };
        Labels {
            rom: score(self.rom_deficit, ROM_THRESHOLDS),
            smoothness: score(self.tremor_amplitude, TREMOR_THRESHOLDS),
            compensation,
        }
    }
}

/// Segment lengths and placement of one subject, in meters and degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Body {
    /// HipCenter to SpineShoulder.
    pub trunk: f64,
    /// SpineShoulder to Head.
    pub neck: f64,
    pub shoulder_half_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    /// HipCenter position in camera coordinates.
    pub hip: [f64; 3],
    /// Rotation about the vertical axis.
    pub yaw_degrees: f64,
    /// Personal scale of the movement template.
    pub amplitude: f64,
}

impl Body {
    pub fn average() -> Body {
        Body {
            trunk: 0.5,
            neck: 0.22,
            shoulder_half_width: 0.18,
            upper_arm: 0.3,
            forearm: 0.26,
            hip: [0.0, 0.9, 2.5],
            yaw_degrees: 0.0,
            amplitude: 1.0,
        }
    }

    fn sample(rng: &mut impl Rng) -> Body {
        Body {
            trunk: rng.random_range(0.45..0.55),
            neck: rng.random_range(0.2..0.25),
            shoulder_half_width: rng.random_range(0.16..0.2),
            upper_arm: rng.random_range(0.27..0.33),
            forearm: rng.random_range(0.23..0.28),
            hip: [
                rng.random_range(-0.1..0.1),
                rng.random_range(0.85..1.0),
                rng.random_range(2.2..2.8),
            ],
            yaw_degrees: rng.random_range(-5.0..5.0),
            amplitude: rng.random_range(0.93..1.07),
        }
    }
}

/// One subject performing with one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub seed: u64,
    pub subject: Subject,
    pub side: Side,
    pub arm: Arm,
    pub body: Body,
    /// Seconds per repetition.
    pub tempo: f64,
    pub impairment: Impairment,
    /// Standard deviation of per-coordinate sensor noise in meters.
    pub noise: f64,
    pub fps: f64,
}

impl SubjectProfile {
    /// Unimpaired, noise-free profile with average body dimensions.
    pub fn healthy(id: &str, seed: u64) -> SubjectProfile {
        SubjectProfile {
            seed,
            subject: Subject {
                id: id.to_string(),
                group: Group::Healthy,
                fugl_meyer: None,
            },
            side: Side::Dominant,
            arm: Arm::Right,
            body: Body::average(),
            tempo: 3.0,
            impairment: Impairment::none(),
            noise: 0.0,
            fps: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.impairment.validate()?;
        let b = &self.body;
        let lengths = [b.trunk, b.neck, b.shoulder_half_width, b.upper_arm, b.forearm];
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Range {
                what: "body",
                detail: "segment lengths must be positive".into(),
            });
        }
        if !(self.tempo > 0.0 && self.fps > 0.0 && self.noise >= 0.0 && b.amplitude > 0.0) {
            return Err(Error::Range {
                what: "profile",
                detail: "tempo, fps and amplitude must be positive and noise nonnegative".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub healthy_subjects: usize,
    pub healthy_repetitions: usize,
    pub stroke_subjects: usize,
    pub stroke_repetitions: usize,
    pub exercises: Vec<Exercise>,
    /// Sensor noise standard deviation in meters.
    pub noise: f64,
    pub fps: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            healthy_subjects: 11,
            healthy_repetitions: 15,
            stroke_subjects: 15,
            stroke_repetitions: 10,
            exercises: Exercise::ALL.to_vec(),
            noise: 0.001,
            fps: 30.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.healthy_subjects,
            self.healthy_repetitions,
            self.stroke_subjects,
            self.stroke_repetitions,
            self.exercises.len(),
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidArgument(
                "subject, repetition and exercise counts must be at least 1".into(),
            ));
        }
        if !(self.fps > 0.0 && self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidArgument(
                "fps must be positive and noise nonnegative".into(),
            ));
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for a tuple of identifiers.
fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let key = parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ p));
    ChaCha8Rng::seed_from_u64(key)
}

/// Joint angles of one frame, in radians.
#[derive(Debug, Clone, Copy)]
struct Pose {
    shoulder_flexion: f64,
    elbow_flexion: f64,
    shrug: f64,
    lean: f64,
}

/// Template angles in degrees at movement phase `s` in `[0, 1]`.
fn template(exercise: Exercise, s: f64, reach: f64) -> (f64, f64) {
    match exercise {
        Exercise::E1 => (25.0 * reach * s, 10.0 + 125.0 * reach * s),
        Exercise::E2 => (5.0 + 85.0 * reach * s, 8.0 + 4.0 * s),
        Exercise::E3 => (20.0 + 60.0 * reach * s, 100.0 - 90.0 * reach * s),
    }
}

fn arm_direction(lateral: f64, angle: f64) -> Point {
    let phi = ABDUCTION_DEGREES.to_radians();
    Vector3::new(
        lateral * phi.sin(),
        -phi.cos() * angle.cos(),
        -phi.cos() * angle.sin(),
    )
}

fn lateral_sign(arm: Arm) -> f64 {
    match arm {
        Arm::Left => 1.0,
        Arm::Right => -1.0,
    }
}

/// Joint positions in camera coordinates.
fn place(body: &Body, arm: Arm, pose: Pose) -> [Point; Joint::COUNT] {
    let spine_shoulder = Vector3::new(0.0, body.trunk, 0.0);
    let w = body.shoulder_half_width;
    let mut p = [Vector3::zeros(); Joint::COUNT];
    p[Joint::HipCenter.index()] = Vector3::zeros();
    p[Joint::SpineMid.index()] = spine_shoulder / 2.0;
    p[Joint::SpineShoulder.index()] = spine_shoulder;
    p[Joint::Head.index()] = spine_shoulder + Vector3::new(0.0, body.neck, 0.0);
    for side in [Arm::Left, Arm::Right] {
        let lat = lateral_sign(side);
        let active = side == arm;
        let shrug = if active { pose.shrug } else { 0.0 };
        let shoulder = spine_shoulder + w * Vector3::new(lat * shrug.cos(), shrug.sin(), 0.0);
        let (upper, fore) = if active {
            (
                arm_direction(lat, pose.shoulder_flexion),
                arm_direction(lat, pose.shoulder_flexion + pose.elbow_flexion),
            )
        } else {
            (arm_direction(lat, 0.0), arm_direction(lat, 10f64.to_radians()))
        };
        let elbow = shoulder + body.upper_arm * upper;
        let wrist = elbow + body.forearm * fore;
        p[side.shoulder().index()] = shoulder;
        p[side.elbow().index()] = elbow;
        p[side.wrist().index()] = wrist;
    }
    let lean = Rotation3::from_axis_angle(&Vector3::x_axis(), -pose.lean);
    let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), body.yaw_degrees.to_radians());
    let hip = Vector3::from(body.hip);
    p.map(|q| yaw * (lean * q) + hip)
}

/// Per-repetition random draws.
#[derive(Debug, Clone, Copy)]
struct RepetitionDraw {
    duration: f64,
    amplitude: f64,
    phases: [f64; 2],
    gap: f64,
}

impl RepetitionDraw {
    fn sample(tempo: f64, rng: &mut impl Rng) -> RepetitionDraw {
        RepetitionDraw {
            duration: tempo * rng.random_range(0.9..1.1),
            amplitude: rng.random_range(0.96..1.04),
            phases: [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)],
            gap: rng.random_range(0.3..0.6),
        }
    }
}

/// Noise-free joint positions of one repetition, including both rest ends.
fn repetition_frames(
    profile: &SubjectProfile,
    exercise: Exercise,
    impairment: &Impairment,
    draw: &RepetitionDraw,
) -> Vec<[Point; Joint::COUNT]> {
    let body = &profile.body;
    let n = ((draw.duration * profile.fps).round() as usize).max(8) + 1;
    let reach = body.amplitude * draw.amplitude * (1.0 - impairment.rom_deficit);
    let (shrug_w, lean_w) = impairment.compensation.weights();
    let m = impairment.compensation_magnitude;
    let f = impairment.tremor_frequency;
    let a = impairment.tremor_amplitude;
    (0..n)
        .map(|k| {
            let tau = k as f64 / (n - 1) as f64;
            let s = (1.0 - (2.0 * PI * tau).cos()) / 2.0;
            let t = k as f64 / profile.fps;
            let envelope = (3.0 * (PI * tau).sin()).min(1.0);
            let wave = ((2.0 * PI * f * t + draw.phases[0]).sin()
                + 0.5 * (2.0 * PI * (f + 0.6) * t + draw.phases[1]).sin())
                / 1.5
                * envelope;
            let (shoulder, elbow) = template(exercise, s, reach);
            place(
                body,
                profile.arm,
                Pose {
                    shoulder_flexion: shoulder.to_radians() + 0.4 * a / body.upper_arm * wave,
                    elbow_flexion: elbow.to_radians() + a / body.forearm * wave,
                    shrug: (shrug_w * m * MAX_SHRUG_DEGREES * s).to_radians(),
                    lean: (lean_w * m * MAX_LEAN_DEGREES * s).to_radians(),
                },
            )
        })
        .collect()
}

fn rest_frames(profile: &SubjectProfile, exercise: Exercise, seconds: f64) -> Vec<[Point; Joint::COUNT]> {
    let n = (seconds * profile.fps).round() as usize;
    let (shoulder, elbow) = template(exercise, 0.0, 1.0);
    let pose = Pose {
        shoulder_flexion: shoulder.to_radians(),
        elbow_flexion: elbow.to_radians(),
        shrug: 0.0,
        lean: 0.0,
    };
    vec![place(&profile.body, profile.arm, pose); n]
}

fn round5(v: f64) -> f64 {
    (v * 1e5).round() / 1e5
}

/// Builds a session with one repetition per impairment.
pub fn generate_session(
    profile: &SubjectProfile,
    exercise: Exercise,
    impairments: &[Impairment],
) -> Result<Session> {
    profile.validate()?;
    for imp in impairments {
        imp.validate()?;
    }
    let exercise_key = Exercise::ALL.iter().position(|&e| e == exercise).unwrap_or(0) as u64;
    let mut rng = stream(profile.seed, &[exercise_key, 0x5e55]);
    let mut positions = rest_frames(profile, exercise, REST_SECONDS);
    let mut repetitions = Vec::with_capacity(impairments.len());
    for imp in impairments {
        let draw = RepetitionDraw::sample(profile.tempo, &mut rng);
        let rep = repetition_frames(profile, exercise, imp, &draw);
        let start = positions.len();
        positions.extend(rep);
        repetitions.push(Repetition {
            start,
            end: positions.len() - 1,
            labels: Some(imp.labels()),
        });
        positions.extend(rest_frames(profile, exercise, draw.gap));
    }
    positions.extend(rest_frames(profile, exercise, REST_SECONDS));

    let noise = Normal::new(0.0, profile.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let frames = positions
        .into_iter()
        .enumerate()
        .map(|(i, joints)| {
            let noisy = joints.map(|p| p.map(|c| round5(c + noise.sample(&mut rng))));
            Ok(Frame {
                t: i as f64 / profile.fps,
                skeleton: Skeleton::new(noisy)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Session {
        subject: profile.subject.clone(),
        exercise,
        side: profile.side,
        arm: profile.arm,
        fps: profile.fps,
        frames,
        repetitions,
    })
}

/// A single repetition of `profile` with its generating labels.
pub fn generate_clip(
    profile: &SubjectProfile,
    exercise: Exercise,
    repetition: usize,
) -> Result<(MotionClip, Labels)> {
    let mut p = profile.clone();
    p.seed = splitmix(profile.seed ^ repetition as u64);
    let session = generate_session(&p, exercise, &[profile.impairment])?;
    let mut clip = segment(&session)?.remove(0);
    clip.repetition = repetition;
    clip.id = format!("{}_r{repetition:02}", session.stem());
    Ok((clip, profile.impairment.labels()))
}

/// One generated repetition in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub motion_id: String,
    pub subject: String,
    pub group: Group,
    pub exercise: Exercise,
    pub side: Side,
    pub arm: Arm,
    pub repetition: usize,
    pub rom: u8,
    pub smoothness: u8,
    pub compensation: u8,
    pub rom_deficit: f64,
    pub tremor_amplitude: f64,
    pub tremor_frequency: f64,
    pub compensation_mode: CompensationMode,
    pub compensation_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GeneratorConfig,
    pub sessions: Vec<Session>,
    pub manifest: Vec<ManifestRow>,
}

fn level(range: (f64, f64), rng: &mut impl Rng) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

fn impairment_at(levels: [usize; 3], frequency: f64, mode: CompensationMode, rng: &mut impl Rng) -> Impairment {
    Impairment {
        rom_deficit: level(ROM_LEVELS[levels[0]], rng),
        tremor_amplitude: level(TREMOR_LEVELS[levels[1]], rng),
        tremor_frequency: frequency,
        compensation: mode,
        compensation_magnitude: level(COMPENSATION_LEVELS[levels[2]], rng),
    }
}

fn shuffled_levels(count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut levels: Vec<usize> = (0..count).map(|i| AFFECTED_LEVELS[i % AFFECTED_LEVELS.len()]).collect();
    for i in (1..levels.len()).rev() {
        levels.swap(i, rng.random_range(0..=i));
    }
    levels
}

/// Healthy subjects perform with the dominant arm; stroke subjects perform
/// with both arms, impaired on the affected side.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let mut sessions = Vec::new();
    let mut manifest = Vec::new();
    for (group, count) in [
        (Group::Healthy, config.healthy_subjects),
        (Group::Stroke, config.stroke_subjects),
    ] {
        for index in 0..count {
            let group_key = if group == Group::Healthy { 1 } else { 2 };
            let mut rng = stream(config.seed, &[group_key, index as u64]);
            let id = match group {
                Group::Healthy => format!("H{:02}", index + 1),
                Group::Stroke => format!("S{:02}", index + 1),
            };
            let body = Body::sample(&mut rng);
            let tempo = rng.random_range(2.6..3.4);
            let frequency = rng.random_range(TREMOR_BAND.0..TREMOR_BAND.1);
            let primary_arm = if rng.random_bool(if group == Group::Healthy { 0.1 } else { 0.5 }) {
                Arm::Left
            } else {
                Arm::Right
            };
            let mode = [
                CompensationMode::ShoulderElevation,
                CompensationMode::TrunkLean,
                CompensationMode::Both,
            ][index % 3];
            let subject = Subject {
                id,
                group,
                fugl_meyer: (group == Group::Stroke).then(|| rng.random_range(20..=60)),
            };
            let sides: &[Side] = match group {
                Group::Healthy => &[Side::Dominant],
                Group::Stroke => &[Side::Affected, Side::Unaffected],
            };
            let reps = match group {
                Group::Healthy => config.healthy_repetitions,
                Group::Stroke => config.stroke_repetitions,
            };
            for (side_key, &side) in sides.iter().enumerate() {
                let profile = SubjectProfile {
                    seed: splitmix(rng.random::<u64>()),
                    subject: subject.clone(),
                    side,
                    arm: if side == Side::Unaffected {
                        primary_arm.opposite()
                    } else {
                        primary_arm
                    },
                    body,
                    tempo: if side == Side::Affected { tempo * 1.2 } else { tempo },
                    impairment: Impairment::none(),
                    noise: config.noise,
                    fps: config.fps,
                };
                for &exercise in &config.exercises {
                    let exercise_key = Exercise::ALL.iter().position(|&e| e == exercise).unwrap_or(0);
                    let mut draws = stream(
                        config.seed,
                        &[group_key, index as u64, side_key as u64, exercise_key as u64],
                    );
                    let impairments: Vec<Impairment> = if side == Side::Affected {
                        let patterns: Vec<Vec<usize>> =
                            (0..3).map(|_| shuffled_levels(reps, &mut draws)).collect();
                        (0..reps)
                            .map(|r| {
                                impairment_at(
                                    [patterns[0][r], patterns[1][r], patterns[2][r]],
                                    frequency,
                                    mode,
                                    &mut draws,
                                )
                            })
                            .collect()
                    } else {
                        (0..reps)
                            .map(|_| impairment_at([2, 2, 2], frequency, CompensationMode::Both, &mut draws))
                            .collect()
                    };
                    let session = generate_session(&profile, exercise, &impairments)?;
                    manifest.extend(manifest_rows(&session, &impairments));
                    sessions.push(session);
                }
            }
        }
    }
    Ok(Dataset {
        config: config.clone(),
        sessions,
        manifest,
    })
}

fn manifest_rows(session: &Session, impairments: &[Impairment]) -> Vec<ManifestRow> {
    impairments
        .iter()
        .enumerate()
        .map(|(r, imp)| {
            let labels = imp.labels();
            ManifestRow {
                motion_id: format!("{}_r{r:02}", session.stem()),
                subject: session.subject.id.clone(),
                group: session.subject.group,
                exercise: session.exercise,
                side: session.side,
                arm: session.arm,
                repetition: r,
                rom: labels.rom,
                smoothness: labels.smoothness,
                compensation: labels.compensation,
                rom_deficit: imp.rom_deficit,
                tremor_amplitude: imp.tremor_amplitude,
                tremor_frequency: imp.tremor_frequency,
                compensation_mode: imp.compensation,
                compensation_magnitude: imp.compensation_magnitude,
            }
        })
        .collect()
}

/// Writes `sessions/<stem>.json`, `manifest.csv` and `generator.json` under
/// `dir`; returns the session paths.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let sessions_dir = dir.join("sessions");
    std::fs::create_dir_all(&sessions_dir).map_err(|e| Error::io(&sessions_dir, e))?;
    let mut paths = Vec::with_capacity(dataset.sessions.len());
    for session in &dataset.sessions {
        let path = sessions_dir.join(format!("{}.json", session.stem()));
        save_session(session, &path)?;
        paths.push(path);
    }
    let manifest_path = dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest_path)?;
    for row in &dataset.manifest {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(&manifest_path, e))?;
    let meta_path = dir.join("generator.json");
    let meta = serde_json::json!({
        "version": GENERATOR_VERSION,
        "config": dataset.config,
    });
    let mut file = std::fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    writeln!(file, "{}", serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;
    Ok(paths)
}
