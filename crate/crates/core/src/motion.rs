//! Skeletal motion recordings: session files, validation, smoothing and
//! segmentation into labeled repetition clips.
//!
//! Coordinates are meters in a right-handed, y-up camera frame. Every frame
//! carries exactly the ten joints of [`Joint::ALL`], in that order.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Moving-average window applied by [`segment`].
pub const SMOOTHING_WINDOW: usize = 5;

/// Minimum clip length; one full smoothing window.
pub const MIN_CLIP_FRAMES: usize = SMOOTHING_WINDOW;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Joint {
    Head,
    SpineShoulder,
    SpineMid,
    HipCenter,
    ShoulderLeft,
    ShoulderRight,
    ElbowLeft,
    ElbowRight,
    WristLeft,
    WristRight,
}

impl Joint {
    pub const ALL: [Joint; 10] = [
        Joint::Head,
        Joint::SpineShoulder,
        Joint::SpineMid,
        Joint::HipCenter,
        Joint::ShoulderLeft,
        Joint::ShoulderRight,
        Joint::ElbowLeft,
        Joint::ElbowRight,
        Joint::WristLeft,
        Joint::WristRight,
    ];

    pub const COUNT: usize = 10;

    /// Pairs of joints connected by a bone.
    pub const BONES: [(Joint, Joint); 9] = [
        (Joint::Head, Joint::SpineShoulder),
        (Joint::SpineShoulder, Joint::SpineMid),
        (Joint::SpineMid, Joint::HipCenter),
        (Joint::SpineShoulder, Joint::ShoulderLeft),
        (Joint::SpineShoulder, Joint::ShoulderRight),
        (Joint::ShoulderLeft, Joint::ElbowLeft),
        (Joint::ElbowLeft, Joint::WristLeft),
        (Joint::ShoulderRight, Joint::ElbowRight),
        (Joint::ElbowRight, Joint::WristRight),
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Head => "Head",
            Joint::SpineShoulder => "SpineShoulder",
            Joint::SpineMid => "SpineMid",
            Joint::HipCenter => "HipCenter",
            Joint::ShoulderLeft => "ShoulderLeft",
            Joint::ShoulderRight => "ShoulderRight",
            Joint::ElbowLeft => "ElbowLeft",
            Joint::ElbowRight => "ElbowRight",
            Joint::WristLeft => "WristLeft",
            Joint::WristRight => "WristRight",
        }
    }
}

/// Which arm performs the exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Left,
    Right,
}

impl Arm {
    pub fn shoulder(self) -> Joint {
        match self {
            Arm::Left => Joint::ShoulderLeft,
            Arm::Right => Joint::ShoulderRight,
        }
    }

    pub fn elbow(self) -> Joint {
        match self {
            Arm::Left => Joint::ElbowLeft,
            Arm::Right => Joint::ElbowRight,
        }
    }

    pub fn wrist(self) -> Joint {
        match self {
            Arm::Left => Joint::WristLeft,
            Arm::Right => Joint::WristRight,
        }
    }

    pub fn opposite(self) -> Arm {
        match self {
            Arm::Left => Arm::Right,
            Arm::Right => Arm::Left,
        }
    }
}

macro_rules! string_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"),
                        other
                    ))),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Exercise {
    E1,
    E2,
    E3,
}

impl Exercise {
    pub const ALL: [Exercise; 3] = [Exercise::E1, Exercise::E2, Exercise::E3];
}

string_enum!(Exercise { E1 => "E1", E2 => "E2", E3 => "E3" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Affected,
    Unaffected,
    Dominant,
}

string_enum!(Side { Affected => "affected", Unaffected => "unaffected", Dominant => "dominant" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Stroke,
    Healthy,
}

string_enum!(Group { Stroke => "stroke", Healthy => "healthy" });

/// The three performance components therapists score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Rom,
    Smoothness,
    Compensation,
}

impl Component {
    pub const ALL: [Component; 3] = [
        Component::Rom,
        Component::Smoothness,
        Component::Compensation,
    ];
}

string_enum!(Component { Rom => "rom", Smoothness => "smoothness", Compensation => "compensation" });

/// Binary motion quality. `Incorrect` is the positive class for F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Correct = 0,
    Incorrect = 1,
}

impl Quality {
    pub fn class_index(self) -> usize {
        self as usize
    }

    pub fn from_class_index(index: usize) -> Quality {
        if index == 0 {
            Quality::Correct
        } else {
            Quality::Incorrect
        }
    }
}

string_enum!(Quality { Correct => "correct", Incorrect => "incorrect" });

/// Score threshold used to binarize 0–2 clinical scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityThreshold {
    /// Only a score of 2 counts as correct.
    #[default]
    FullScore,
    /// Scores of 1 or 2 count as correct.
    AtLeastOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub rom: u8,
    pub smoothness: u8,
    pub compensation: u8,
}

impl Labels {
    pub fn new(rom: u8, smoothness: u8, compensation: u8) -> Result<Self> {
        let labels = Labels {
            rom,
            smoothness,
            compensation,
        };
        labels.validate("labels")?;
        Ok(labels)
    }

    fn validate(&self, path: &str) -> Result<()> {
        for component in Component::ALL {
            let score = self.score(component);
            if score > 2 {
                return Err(Error::schema(
                    format!("{path}.{component}"),
                    format!("score {score} not in {{0,1,2}}"),
                ));
            }
        }
        Ok(())
    }

    pub fn score(&self, component: Component) -> u8 {
        match component {
            Component::Rom => self.rom,
            Component::Smoothness => self.smoothness,
            Component::Compensation => self.compensation,
        }
    }

    pub fn quality(&self, component: Component, threshold: QualityThreshold) -> Quality {
        let score = self.score(component);
        let correct = match threshold {
            QualityThreshold::FullScore => score == 2,
            QualityThreshold::AtLeastOne => score >= 1,
        };
        if correct {
            Quality::Correct
        } else {
            Quality::Incorrect
        }
    }
}

/// One frame of the ten-joint skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    positions: [Point; Joint::COUNT],
}

impl Skeleton {
    pub fn new(positions: [Point; Joint::COUNT]) -> Result<Self> {
        let skeleton = Skeleton { positions };
        skeleton.validate("skeleton")?;
        Ok(skeleton)
    }

    pub(crate) fn new_unchecked(positions: [Point; Joint::COUNT]) -> Self {
        Skeleton { positions }
    }

    fn validate(&self, path: &str) -> Result<()> {
        for joint in Joint::ALL {
            let p = self.joint(joint);
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::schema(
                    format!("{path}.{}", joint.name()),
                    "non-finite coordinate",
                ));
            }
        }
        for (a, b) in Joint::BONES {
            if (self.joint(a) - self.joint(b)).norm() <= 0.0 {
                return Err(Error::schema(
                    path.to_string(),
                    format!("zero-length bone {}-{}", a.name(), b.name()),
                ));
            }
        }
        Ok(())
    }

    pub fn joint(&self, joint: Joint) -> Point {
        self.positions[joint.index()]
    }

    pub fn positions(&self) -> &[Point; Joint::COUNT] {
        &self.positions
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Skeleton {
        Skeleton {
            positions: self.positions.map(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub skeleton: Skeleton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub group: Group,
    pub fugl_meyer: Option<u8>,
}

/// Annotated repetition; `end` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
}

impl Repetition {
    pub fn frame_count(&self) -> usize {
        self.end - self.start + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub subject: Subject,
    pub exercise: Exercise,
    pub side: Side,
    pub arm: Arm,
    pub fps: f64,
    pub frames: Vec<Frame>,
    pub repetitions: Vec<Repetition>,
}

// Wire format.
#[derive(Serialize, Deserialize)]
struct SessionFile {
    subject: Subject,
    exercise: Exercise,
    side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arm: Option<Arm>,
    fps: f64,
    joints: Vec<String>,
    frames: Vec<FrameFile>,
    repetitions: Vec<Repetition>,
}

#[derive(Serialize, Deserialize)]
struct FrameFile {
    t: f64,
    pos: Vec<[f64; 3]>,
}

impl Session {
    pub fn from_json(text: &str) -> Result<Session> {
        let file: SessionFile = serde_json::from_str(text)?;
        Session::from_file(file)
    }

    fn from_file(file: SessionFile) -> Result<Session> {
        for (i, joint) in Joint::ALL.iter().enumerate() {
            match file.joints.get(i) {
                Some(name) if name == joint.name() => {}
                Some(name) => {
                    return Err(Error::schema(
                        format!("joints[{i}]"),
                        format!("expected joint `{}`, found `{name}`", joint.name()),
                    ))
                }
                None => {
                    return Err(Error::schema(
                        "joints",
                        format!("missing joint `{}`", joint.name()),
                    ))
                }
            }
        }
        if file.joints.len() > Joint::COUNT {
            return Err(Error::schema(
                format!("joints[{}]", Joint::COUNT),
                format!("unexpected joint `{}`", file.joints[Joint::COUNT]),
            ));
        }
        if !(file.fps.is_finite() && file.fps > 0.0) {
            return Err(Error::schema(
                "fps",
                format!("fps must be positive, got {}", file.fps),
            ));
        }
        if let Some(fm) = file.subject.fugl_meyer {
            if fm > 66 {
                return Err(Error::schema(
                    "subject.fugl_meyer",
                    format!("score {fm} exceeds 66"),
                ));
            }
        }
        if file.frames.is_empty() {
            return Err(Error::schema("frames", "empty frame list"));
        }

        let mut frames = Vec::with_capacity(file.frames.len());
        for (i, frame) in file.frames.into_iter().enumerate() {
            if frame.pos.len() != Joint::COUNT {
                let detail = match Joint::ALL.get(frame.pos.len()) {
                    Some(missing) if frame.pos.len() < Joint::COUNT => {
                        format!("missing joint `{}`", missing.name())
                    }
                    _ => format!(
                        "expected {} joints, found {}",
                        Joint::COUNT,
                        frame.pos.len()
                    ),
                };
                return Err(Error::schema(format!("frames[{i}].pos"), detail));
            }
            if !frame.t.is_finite() {
                return Err(Error::schema(format!("frames[{i}].t"), "non-finite time"));
            }
            if let Some(prev) = frames.last().map(|f: &Frame| f.t) {
                if frame.t <= prev {
                    return Err(Error::schema(
                        format!("frames[{i}].t"),
                        "frame times must be strictly increasing",
                    ));
                }
            }
            let mut positions = [Point::zeros(); Joint::COUNT];
            for (slot, xyz) in positions.iter_mut().zip(&frame.pos) {
                *slot = Point::from(*xyz);
            }
            let skeleton = Skeleton::new_unchecked(positions);
            skeleton.validate(&format!("frames[{i}].pos"))?;
            frames.push(Frame {
                t: frame.t,
                skeleton,
            });
        }

        let mut previous_end: Option<usize> = None;
        for (i, rep) in file.repetitions.iter().enumerate() {
            if rep.start >= rep.end || rep.end >= frames.len() {
                return Err(Error::Range {
                    what: "repetition",
                    detail: format!(
                        "repetitions[{i}]: need 0 <= start < end < {}, got start={} end={}",
                        frames.len(),
                        rep.start,
                        rep.end
                    ),
                });
            }
            if previous_end.is_some_and(|end| rep.start <= end) {
                return Err(Error::Range {
                    what: "repetition",
                    detail: format!("repetitions[{i}] overlaps the previous repetition"),
                });
            }
            previous_end = Some(rep.end);
            if let Some(labels) = &rep.labels {
                labels.validate(&format!("repetitions[{i}].labels"))?;
            }
        }

        let arm = file.arm.unwrap_or_else(|| detect_active_arm(&frames));
        Ok(Session {
            subject: file.subject,
            exercise: file.exercise,
            side: file.side,
            arm,
            fps: file.fps,
            frames,
            repetitions: file.repetitions,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SessionFile {
            subject: self.subject.clone(),
            exercise: self.exercise,
            side: self.side,
            arm: Some(self.arm),
            fps: self.fps,
            joints: Joint::ALL.iter().map(|j| j.name().to_string()).collect(),
            frames: self
                .frames
                .iter()
                .map(|f| FrameFile {
                    t: f.t,
                    pos: f
                        .skeleton
                        .positions
                        .iter()
                        .map(|p| [p.x, p.y, p.z])
                        .collect(),
                })
                .collect(),
            repetitions: self.repetitions.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Stable file stem, `{subject}_{exercise}_{side}`.
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", self.subject.id, self.exercise, self.side)
    }
}

/// The arm whose wrist travels further over the recording.
fn detect_active_arm(frames: &[Frame]) -> Arm {
    let path_length = |joint: Joint| -> f64 {
        frames
            .windows(2)
            .map(|w| (w[1].skeleton.joint(joint) - w[0].skeleton.joint(joint)).norm())
            .sum()
    };
    if path_length(Joint::WristLeft) > path_length(Joint::WristRight) {
        Arm::Left
    } else {
        Arm::Right
    }
}

pub fn load_session(path: impl AsRef<Path>) -> Result<Session> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Session::from_json(&text)
}

pub fn save_session(session: &Session, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, session.to_json()?).map_err(|e| Error::io(path, e))
}

/// Centered moving average. Frames near either end average over the part of
/// the window that falls inside the series.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "smoothing window must be odd and positive, got {window}"
        )));
    }
    if series.len() < window {
        return Err(Error::InvalidArgument(format!(
            "series of length {} is shorter than window {window}",
            series.len()
        )));
    }
    let half = window / 2;
    let n = series.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect())
}

/// Applies [`smooth`] to every joint coordinate independently.
pub fn smooth_skeletons(frames: &[Skeleton], window: usize) -> Result<Vec<Skeleton>> {
    let mut out: Vec<[Point; Joint::COUNT]> = vec![[Point::zeros(); Joint::COUNT]; frames.len()];
    let mut series = vec![0.0; frames.len()];
    for j in 0..Joint::COUNT {
        for axis in 0..3 {
            for (slot, frame) in series.iter_mut().zip(frames) {
                *slot = frame.positions[j][axis];
            }
            for (dst, value) in out.iter_mut().zip(smooth(&series, window)?) {
                dst[j][axis] = value;
            }
        }
    }
    Ok(out.into_iter().map(Skeleton::new_unchecked).collect())
}

/// One annotated repetition, cut from its session.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub id: String,
    pub subject: Subject,
    pub exercise: Exercise,
    pub side: Side,
    pub arm: Arm,
    pub fps: f64,
    pub repetition: usize,
    pub start: usize,
    pub end: usize,
    /// Raw frames `start..=end` of the session.
    pub frames: Vec<Frame>,
    /// Moving-average filtered skeletons, aligned with `frames`.
    pub smoothed: Vec<Skeleton>,
    pub labels: Option<Labels>,
}

impl MotionClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(first), Some(last)) => last.t - first.t,
            _ => 0.0,
        }
    }

    pub fn quality(&self, component: Component, threshold: QualityThreshold) -> Option<Quality> {
        self.labels.map(|l| l.quality(component, threshold))
    }
}

pub fn motion_id(session: &Session, repetition: usize) -> String {
    format!("{}_r{repetition:02}", session.stem())
}

/// Cuts a session into one smoothed clip per annotated repetition.
pub fn segment(session: &Session) -> Result<Vec<MotionClip>> {
    session
        .repetitions
        .iter()
        .enumerate()
        .map(|(index, rep)| {
            if rep.frame_count() < MIN_CLIP_FRAMES {
                return Err(Error::Range {
                    what: "repetition",
                    detail: format!(
                        "repetitions[{index}] has {} frames; clips need at least {MIN_CLIP_FRAMES}",
                        rep.frame_count()
                    ),
                });
            }
            let frames = session.frames[rep.start..=rep.end].to_vec();
            let raw: Vec<Skeleton> = frames.iter().map(|f| f.skeleton.clone()).collect();
            let smoothed = smooth_skeletons(&raw, SMOOTHING_WINDOW)?;
            Ok(MotionClip {
                id: motion_id(session, index),
                subject: session.subject.clone(),
                exercise: session.exercise,
                side: session.side,
                arm: session.arm,
                fps: session.fps,
                repetition: index,
                start: rep.start,
                end: rep.end,
                frames,
                smoothed,
                labels: rep.labels,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smooth_truncated_window() {
        let out = smooth(&[0.0, 1.0, 2.0, 3.0, 4.0], 3).unwrap();
        assert_eq!(out, vec![0.5, 1.0, 2.0, 3.0, 3.5]);
    }

    #[test]
    fn smooth_constant_is_constant() {
        let out = smooth(&[2.5; 12], 5).unwrap();
        assert!(out.iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn smooth_rejects_even_or_oversized_window() {
        assert!(smooth(&[0.0; 10], 4).is_err());
        assert!(smooth(&[0.0; 10], 0).is_err());
        assert!(smooth(&[0.0; 3], 5).is_err());
    }

    proptest! {
        #[test]
        fn smooth_is_shift_equivariant(
            xs in proptest::collection::vec(-10.0f64..10.0, 5..40),
            c in -100.0f64..100.0,
        ) {
            let base = smooth(&xs, 5).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let out = smooth(&shifted, 5).unwrap();
            prop_assert_eq!(out.len(), xs.len());
            for (a, b) in out.iter().zip(&base) {
                prop_assert!((a - (b + c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn labels_binarize() {
        let labels = Labels::new(2, 1, 0).unwrap();
        assert_eq!(
            labels.quality(Component::Rom, QualityThreshold::FullScore),
            Quality::Correct
        );
        assert_eq!(
            labels.quality(Component::Smoothness, QualityThreshold::FullScore),
            Quality::Incorrect
        );
        assert_eq!(
            labels.quality(Component::Smoothness, QualityThreshold::AtLeastOne),
            Quality::Correct
        );
        assert!(Labels::new(3, 0, 0).is_err());
    }
}
