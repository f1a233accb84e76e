//! Frame-level kinematic features and their per-clip summaries.
//!
//! Every clip is measured on its smoothed skeletons. Distances are divided by
//! the trunk length `|SpineShoulder - HipCenter|` at the first frame so that
//! subjects of different size are comparable. Derivatives use central
//! differences over the actual frame times, one-sided at the ends.

mod registry;

pub use registry::{
    registry, registry_len, write_registry_csv, ClipFeature, FeatureDescriptor, FeatureSource,
    FrameFeature, Statistic,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{
    Arm, Component, Exercise, Joint, MotionClip, Point, Skeleton, MIN_CLIP_FRAMES,
};

/// Fraction of peak speed above which a frame counts as moving.
pub const MAPR_THRESHOLD: f64 = 0.10;

/// Interior angle at `vertex` between the rays to `a` and `c`, in degrees.
pub fn joint_angle(a: &Point, vertex: &Point, c: &Point) -> Result<f64> {
    angle_between(&(a - vertex), &(c - vertex))
}

/// Angle between two vectors in degrees, in `[0, 180]`.
pub fn angle_between(u: &Point, v: &Point) -> Result<f64> {
    if u.norm() == 0.0 || v.norm() == 0.0 {
        return Err(Error::Degenerate("zero-length limb vector".into()));
    }
    // atan2 keeps full precision near 0 and 180 degrees, where acos does not.
    Ok(u.cross(v).norm().atan2(u.dot(v)).to_degrees())
}

/// Mean arrest period ratio: the share of frames whose speed exceeds 10% of
/// the peak speed. An all-zero profile scores 0.
pub fn mapr(speed: &[f64]) -> f64 {
    if speed.is_empty() {
        return 0.0;
    }
    let peak = speed.iter().copied().fold(0.0, f64::max);
    let moving = speed.iter().filter(|&&s| s > MAPR_THRESHOLD * peak).count();
    moving as f64 / speed.len() as f64
}

/// Time derivative of a vector series by central differences.
pub fn derivative(values: &[Point], times: &[f64]) -> Vec<Point> {
    let n = values.len();
    if n < 2 {
        return vec![Point::zeros(); n];
    }
    (0..n)
        .map(|i| {
            let (lo, hi) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            (values[hi] - values[lo]) / (times[hi] - times[lo])
        })
        .collect()
}

/// The `t x d` matrix of frame-level features for one component.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<FrameFeature>,
    pub values: Array2<f64>,
    pub times: Vec<f64>,
}

impl FeatureMatrix {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, feature: FrameFeature) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|&c| c == feature)?;
        Some(self.values.column(idx).to_vec())
    }
}

/// Summary measurements aligned with [`registry`] for one exercise and component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub exercise: Exercise,
    pub component: Component,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-clip quantities shared between columns.
struct ArmTrack<'a> {
    frames: &'a [Skeleton],
    times: &'a [f64],
    arm: Arm,
    trunk_length: f64,
}

impl<'a> ArmTrack<'a> {
    fn new(frames: &'a [Skeleton], times: &'a [f64], arm: Arm) -> Result<Self> {
        let first = &frames[0];
        let trunk_length =
            (first.joint(Joint::SpineShoulder) - first.joint(Joint::HipCenter)).norm();
        if trunk_length <= 0.0 {
            return Err(Error::Degenerate("zero trunk length".into()));
        }
        Ok(ArmTrack {
            frames,
            times,
            arm,
            trunk_length,
        })
    }

    fn series(&self, joint: Joint) -> Vec<Point> {
        self.frames.iter().map(|s| s.joint(joint)).collect()
    }

    fn per_frame(&self, f: impl Fn(&Skeleton) -> Result<f64>) -> Result<Vec<f64>> {
        self.frames.iter().map(f).collect()
    }

    fn pair_axis(&self, from: Joint, to: Joint, axis: usize) -> Vec<f64> {
        self.frames
            .iter()
            .map(|s| (s.joint(to)[axis] - s.joint(from)[axis]).abs() / self.trunk_length)
            .collect()
    }

    fn pair_distance(&self, from: Joint, to: Joint) -> Vec<f64> {
        self.frames
            .iter()
            .map(|s| (s.joint(to) - s.joint(from)).norm() / self.trunk_length)
            .collect()
    }

    fn drift_axis(&self, joint: Joint, axis: usize) -> Vec<f64> {
        let origin = self.frames[0].joint(joint)[axis];
        self.frames
            .iter()
            .map(|s| (s.joint(joint)[axis] - origin).abs() / self.trunk_length)
            .collect()
    }

    /// Magnitudes of the first three derivatives of a joint trajectory.
    fn derivative_norms(&self, joint: Joint) -> [Vec<f64>; 3] {
        let velocity = derivative(&self.series(joint), self.times);
        let acceleration = derivative(&velocity, self.times);
        let jerk = derivative(&acceleration, self.times);
        let norms = |v: &[Point]| v.iter().map(|p| p.norm()).collect::<Vec<f64>>();
        [norms(&velocity), norms(&acceleration), norms(&jerk)]
    }

    fn elbow_interior(&self) -> Result<Vec<f64>> {
        let arm = self.arm;
        self.per_frame(|s| {
            joint_angle(
                &s.joint(arm.shoulder()),
                &s.joint(arm.elbow()),
                &s.joint(arm.wrist()),
            )
        })
    }

    fn column(&self, feature: FrameFeature) -> Result<Vec<f64>> {
        use FrameFeature::*;
        let arm = self.arm;
        let (shoulder, elbow, wrist) = (arm.shoulder(), arm.elbow(), arm.wrist());
        let col = match feature {
            ElbowFlexion => self.elbow_interior()?,
            ElbowExtension => self
                .elbow_interior()?
                .into_iter()
                .map(|a| 180.0 - a)
                .collect(),
            ShoulderFlexion => self.per_frame(|s| {
                angle_between(
                    &(s.joint(elbow) - s.joint(shoulder)),
                    &(s.joint(Joint::HipCenter) - s.joint(Joint::SpineShoulder)),
                )
            })?,
            HeadWristDistance => self.pair_distance(Joint::Head, wrist),
            HeadElbowDistance => self.pair_distance(Joint::Head, elbow),
            HeadWristDx => self.pair_axis(Joint::Head, wrist, 0),
            HeadWristDy => self.pair_axis(Joint::Head, wrist, 1),
            HeadWristDz => self.pair_axis(Joint::Head, wrist, 2),
            ShoulderWristDx => self.pair_axis(shoulder, wrist, 0),
            ShoulderWristDy => self.pair_axis(shoulder, wrist, 1),
            ShoulderWristDz => self.pair_axis(shoulder, wrist, 2),

            WristSpeed | WristAcceleration | WristJerk => {
                let [v, a, j] = self.derivative_norms(wrist);
                match feature {
                    WristSpeed => v,
                    WristAcceleration => a,
                    _ => j,
                }
            }
            ElbowSpeed | ElbowAcceleration | ElbowJerk => {
                let [v, a, j] = self.derivative_norms(elbow);
                match feature {
                    ElbowSpeed => v,
                    ElbowAcceleration => a,
                    _ => j,
                }
            }
            WristNormSpeed => peak_normalized(self.derivative_norms(wrist)[0].clone()),
            WristNormAcceleration => peak_normalized(self.derivative_norms(wrist)[1].clone()),
            ElbowNormSpeed => peak_normalized(self.derivative_norms(elbow)[0].clone()),
            ElbowNormAcceleration => peak_normalized(self.derivative_norms(elbow)[1].clone()),

            ShoulderElevation => {
                // Vertical is the first-frame trunk axis, so the angle does not
                // depend on camera orientation.
                let first = &self.frames[0];
                let up =
                    (first.joint(Joint::SpineShoulder) - first.joint(Joint::HipCenter)).normalize();
                let origin = first.joint(shoulder);
                self.frames
                    .iter()
                    .map(|s| {
                        let rise = (s.joint(shoulder) - origin).dot(&up) / self.trunk_length;
                        rise.clamp(-1.0, 1.0).asin().to_degrees()
                    })
                    .collect()
            }
            SpineTilt => {
                let first = &self.frames[0];
                let initial = first.joint(Joint::SpineShoulder) - first.joint(Joint::HipCenter);
                self.per_frame(|s| {
                    angle_between(
                        &(s.joint(Joint::SpineShoulder) - s.joint(Joint::HipCenter)),
                        &initial,
                    )
                })?
            }
            ShoulderAbduction => self.per_frame(|s| {
                let upper_arm = s.joint(elbow) - s.joint(shoulder);
                let lateral = s.joint(shoulder) - s.joint(arm.opposite().shoulder());
                let (ua, lat) = (upper_arm.norm(), lateral.norm());
                if ua == 0.0 || lat == 0.0 {
                    return Err(Error::Degenerate(
                        "zero-length upper arm or shoulder line".into(),
                    ));
                }
                let outward = upper_arm.dot(&lateral) / (ua * lat);
                Ok(outward.clamp(-1.0, 1.0).asin().to_degrees())
            })?,
            HeadDx => self.drift_axis(Joint::Head, 0),
            HeadDy => self.drift_axis(Joint::Head, 1),
            HeadDz => self.drift_axis(Joint::Head, 2),
            SpineDx => self.drift_axis(Joint::SpineShoulder, 0),
            SpineDy => self.drift_axis(Joint::SpineShoulder, 1),
            SpineDz => self.drift_axis(Joint::SpineShoulder, 2),
            ShoulderDx => self.drift_axis(shoulder, 0),
            ShoulderDy => self.drift_axis(shoulder, 1),
            ShoulderDz => self.drift_axis(shoulder, 2),
        };
        Ok(col)
    }
}

fn peak_normalized(mut series: Vec<f64>) -> Vec<f64> {
    let peak = series.iter().copied().fold(0.0, |m: f64, v| m.max(v.abs()));
    if peak == 0.0 {
        series.iter_mut().for_each(|v| *v = 0.0);
    } else {
        series.iter_mut().for_each(|v| *v /= peak);
    }
    series
}

/// Frame-level feature matrix from raw skeleton frames (already smoothed).
pub fn frame_features_from(
    frames: &[Skeleton],
    times: &[f64],
    arm: Arm,
    component: Component,
) -> Result<FeatureMatrix> {
    if frames.len() < MIN_CLIP_FRAMES {
        return Err(Error::InvalidArgument(format!(
            "clip has {} frames; at least {MIN_CLIP_FRAMES} required",
            frames.len()
        )));
    }
    if times.len() != frames.len() {
        return Err(Error::shape(frames.len(), times.len()));
    }
    let track = ArmTrack::new(frames, times, arm)?;
    let columns = FrameFeature::for_component(component).to_vec();
    let mut values = Array2::zeros((frames.len(), columns.len()));
    for (j, &feature) in columns.iter().enumerate() {
        let col = track.column(feature)?;
        if let Some(bad) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!(
                "{} is not finite at frame {bad}",
                feature.id()
            )));
        }
        for (i, v) in col.into_iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    Ok(FeatureMatrix {
        columns,
        values,
        times: times.to_vec(),
    })
}

pub fn frame_features(clip: &MotionClip, component: Component) -> Result<FeatureMatrix> {
    frame_features_from(&clip.smoothed, &clip.times(), clip.arm, component)
}

/// Collapses a feature matrix into the registry-aligned summary vector.
pub fn summarize(
    matrix: &FeatureMatrix,
    exercise: Exercise,
    component: Component,
) -> Result<FeatureVector> {
    let descriptors = registry(exercise, component);
    let mut values = Vec::with_capacity(descriptors.len());
    for d in &descriptors {
        let value = match d.source {
            FeatureSource::Frame(feature) => {
                let column = matrix.column(feature).ok_or_else(|| {
                    Error::InvalidArgument(format!("matrix lacks column {}", feature.id()))
                })?;
                d.statistic.apply(&column)
            }
            FeatureSource::Clip(ClipFeature::Mapr) => {
                let speed = matrix
                    .column(FrameFeature::WristSpeed)
                    .ok_or_else(|| Error::InvalidArgument("matrix lacks wrist speed".into()))?;
                mapr(&speed)
            }
            FeatureSource::Clip(ClipFeature::Duration) => {
                match (matrix.times.first(), matrix.times.last()) {
                    (Some(a), Some(b)) => b - a,
                    _ => 0.0,
                }
            }
        };
        values.push(value);
    }
    Ok(FeatureVector {
        exercise,
        component,
        values,
    })
}

/// `summarize(frame_features(clip))` for one component.
pub fn extract(clip: &MotionClip, component: Component) -> Result<FeatureVector> {
    summarize(&frame_features(clip, component)?, clip.exercise, component)
}
