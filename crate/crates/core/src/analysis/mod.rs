//! Patient-specific explanation of a scored motion: salient features ranked
//! by information gain and compared with the patient's unaffected side,
//! the frames where they occur, and joint trajectories.

use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionEpisode, Agent};
use crate::error::{Error, Result};
use crate::kinematics::{
    extract, frame_features, registry, FeatureDescriptor, FeatureMatrix, FeatureSource, Statistic,
};
use crate::motion::{Component, Joint, MotionClip, Quality};
use crate::prediction::{LabeledDataset, Model};

pub const INFORMATION_BINS: usize = 10;
pub const MAX_SALIENT_FEATURES: usize = 3;
pub const TRAJECTORY_POINTS: usize = 101;
pub const PAYLOAD_VERSION: u32 = 1;

/// Shannon entropy in bits of a count vector.
pub fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

/// Equal-width bin of `v` over `[min, max]`.
fn bin_of(v: f64, min: f64, max: f64, bins: usize) -> usize {
    if max <= min {
        return 0;
    }
    (((v - min) / (max - min) * bins as f64).floor() as usize).min(bins - 1)
}

/// `H(Y) - H(Y | X binned)` in bits, with `bins` equal-width bins over the
/// range of `column`.
///
/// # Panics
/// If the lengths differ or `bins < 2`.
pub fn information_gain(column: &[f64], labels: &[Quality], bins: usize) -> f64 {
    assert_eq!(column.len(), labels.len(), "column and labels differ in length");
    assert!(bins >= 2, "need at least 2 bins");
    if column.is_empty() {
        return 0.0;
    }
    let min = column.iter().copied().fold(f64::INFINITY, f64::min);
    let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut table = vec![[0usize; 2]; bins];
    let mut totals = [0usize; 2];
    for (&v, &y) in column.iter().zip(labels) {
        table[bin_of(v, min, max, bins)][y.class_index()] += 1;
        totals[y.class_index()] += 1;
    }
    let n = column.len() as f64;
    let conditional: f64 = table
        .iter()
        .map(|cell| (cell[0] + cell[1]) as f64 / n * entropy(cell))
        .sum();
    (entropy(&totals) - conditional).max(0.0)
}

/// Linear-interpolation percentile, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Maps raw values onto `[0, 1]` between the 5th and 95th training percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarScale {
    pub p5: f64,
    pub p95: f64,
}

impl RadarScale {
    pub fn fit(values: &[f64]) -> Self {
        RadarScale {
            p5: percentile(values, 5.0),
            p95: percentile(values, 95.0),
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        if self.p95 > self.p5 {
            ((v - self.p5) / (self.p95 - self.p5)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }
}

/// Where the unaffected comparison values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// The patient's own unaffected-side clips.
    Patient,
    /// Correct-labeled training rows, used when the patient has none.
    Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientFeature {
    pub id: String,
    pub index: usize,
    pub clinical_name: String,
    pub statistic: Statistic,
    pub units: String,
    pub affected_value: f64,
    pub unaffected_mean: f64,
    pub unaffected_std: f64,
    pub radar_affected: f64,
    pub radar_unaffected: f64,
    /// Bits.
    pub information_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientFeatures {
    pub features: Vec<SalientFeature>,
    pub reference: ReferenceKind,
    pub warnings: Vec<String>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Ranks `candidates` (all features when `None`) by information gain on
/// `training`, keeps the top three, and compares the affected vector with
/// the patient's unaffected vectors. Ties keep candidate order.
pub fn salient_features(
    candidates: Option<&[usize]>,
    training: &LabeledDataset,
    affected: &[f64],
    unaffected: &[Vec<f64>],
) -> Result<SalientFeatures> {
    let width = training.width();
    if affected.len() != width {
        return Err(Error::shape(width, affected.len()));
    }
    if let Some(u) = unaffected.iter().find(|u| u.len() != width) {
        return Err(Error::shape(width, u.len()));
    }
    if training.is_empty() {
        return Err(Error::InvalidArgument("empty training data".into()));
    }
    let all: Vec<usize> = (0..width).collect();
    let candidates = candidates.unwrap_or(&all);
    if let Some(&bad) = candidates.iter().find(|&&c| c >= width) {
        return Err(Error::Range {
            what: "feature index",
            detail: format!("{bad} >= {width}"),
        });
    }
    let descriptors = registry_or_generic(training);
    let labels = training.labels();
    let column = |j: usize| -> Vec<f64> { training.rows.iter().map(|r| r.x[j]).collect() };

    let mut ranked: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&j| (j, information_gain(&column(j), &labels, INFORMATION_BINS)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(MAX_SALIENT_FEATURES);

    let mut warnings = Vec::new();
    let (reference, reference_rows): (ReferenceKind, Vec<Vec<f64>>) = if unaffected.is_empty() {
        warnings.push("no unaffected clips for this patient; using the population reference".into());
        (
            ReferenceKind::Population,
            training
                .rows
                .iter()
                .filter(|r| r.label == Quality::Correct)
                .map(|r| r.x.clone())
                .collect(),
        )
    } else {
        (ReferenceKind::Patient, unaffected.to_vec())
    };

    let features = ranked
        .into_iter()
        .map(|(j, gain)| {
            let scale = RadarScale::fit(&column(j));
            let refs: Vec<f64> = reference_rows.iter().map(|r| r[j]).collect();
            let (mean, std) = mean_std(&refs);
            let d = &descriptors[j];
            SalientFeature {
                id: d.id.clone(),
                index: j,
                clinical_name: d.clinical_name.clone(),
                statistic: d.statistic,
                units: d.units.clone(),
                affected_value: affected[j],
                unaffected_mean: mean,
                unaffected_std: std,
                radar_affected: scale.normalize(affected[j]),
                radar_unaffected: scale.normalize(mean),
                information_gain: gain,
            }
        })
        .collect();
    Ok(SalientFeatures {
        features,
        reference,
        warnings,
    })
}

/// Registry descriptors when the dataset uses the registry, otherwise
/// placeholders named after the dataset's feature ids.
fn registry_or_generic(dataset: &LabeledDataset) -> Vec<FeatureDescriptor> {
    let reg = registry(dataset.exercise, dataset.component);
    if reg.len() == dataset.width() && reg.iter().zip(&dataset.feature_ids).all(|(d, id)| &d.id == id) {
        return reg;
    }
    dataset
        .feature_ids
        .iter()
        .map(|id| FeatureDescriptor {
            id: id.clone(),
            component: dataset.component,
            clinical_name: id.clone(),
            source: FeatureSource::Clip(crate::kinematics::ClipFeature::Duration),
            statistic: Statistic::Clip,
            units: String::new(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientFrame {
    pub feature_id: String,
    /// Index into the clip's frames.
    pub frame: usize,
    /// Seconds from the clip start.
    pub time: f64,
    /// Smoothed joint positions in canonical joint order.
    pub pose: Vec<[f64; 3]>,
    pub value: f64,
    pub caption: String,
}

/// First index of the extreme value; `better(a, b)` is true when `a`
/// should replace the current best `b`.
fn extreme_index(column: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in column.iter().enumerate() {
        if better(v, column[best]) {
            best = i;
        }
    }
    best
}

/// Frames where max, min and range features attain their extremes. Mean,
/// std and clip-level features have no frame.
pub fn salient_frames(
    clip: &MotionClip,
    matrix: &FeatureMatrix,
    features: &[SalientFeature],
) -> Result<Vec<SalientFrame>> {
    if matrix.frames() != clip.smoothed.len() {
        return Err(Error::shape(clip.smoothed.len(), matrix.frames()));
    }
    let descriptors = registry(clip.exercise, matrix_component(matrix)?);
    let t0 = matrix.times.first().copied().unwrap_or(0.0);
    let mut out = Vec::new();
    for feature in features {
        let Some(d) = descriptors.iter().find(|d| d.id == feature.id) else {
            continue;
        };
        let FeatureSource::Frame(frame_feature) = d.source else {
            continue;
        };
        let column = matrix.column(frame_feature).ok_or_else(|| {
            Error::InvalidArgument(format!("matrix lacks column {}", frame_feature.id()))
        })?;
        let argmax = || extreme_index(&column, |a, b| a > b);
        let argmin = || extreme_index(&column, |a, b| a < b);
        let picks: Vec<(usize, &str)> = match d.statistic {
            Statistic::Max => vec![(argmax(), "maximum")],
            Statistic::Min => vec![(argmin(), "minimum")],
            Statistic::Range => vec![(argmax(), "maximum"), (argmin(), "minimum")],
            Statistic::Mean | Statistic::Std | Statistic::Clip => vec![],
        };
        for (frame, kind) in picks {
            let time = matrix.times[frame] - t0;
            let pose = clip.smoothed[frame]
                .positions()
                .iter()
                .map(|p| [p.x, p.y, p.z])
                .collect();
            out.push(SalientFrame {
                feature_id: d.id.clone(),
                frame,
                time,
                pose,
                value: column[frame],
                caption: format!(
                    "{} {kind} {:.3} {} at {time:.2} s",
                    frame_feature.clinical_name(),
                    column[frame],
                    frame_feature.units()
                ),
            });
        }
    }
    Ok(out)
}

fn matrix_component(matrix: &FeatureMatrix) -> Result<Component> {
    Component::ALL
        .into_iter()
        .find(|&c| {
            crate::kinematics::FrameFeature::for_component(c) == matrix.columns.as_slice()
        })
        .ok_or_else(|| Error::InvalidArgument("feature matrix matches no component".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrend {
    pub joint: Joint,
    /// Affected-side displacement over normalized time.
    pub affected: Vec<f64>,
    /// Pointwise mean of the unaffected clips.
    pub reference: Vec<f64>,
    /// Per-axis displacement (x, y, z), when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected_axes: Option<[Vec<f64>; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_axes: Option<[Vec<f64>; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTrends {
    /// Normalized time of every sample, `0..=1`.
    pub time: Vec<f64>,
    pub joints: Vec<JointTrend>,
    pub affected_duration: f64,
    pub unaffected_durations: Vec<f64>,
}

/// Linear resampling of `series` onto `points` evenly spaced positions.
pub fn resample(series: &[f64], points: usize) -> Vec<f64> {
    match series.len() {
        0 => vec![0.0; points],
        1 => vec![series[0]; points],
        len => (0..points)
            .map(|i| {
                let pos = i as f64 / (points - 1).max(1) as f64 * (len - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(len - 1);
                series[lo] + (series[hi] - series[lo]) * (pos - lo as f64)
            })
            .collect(),
    }
}

/// Head-relative displacement of `joint` from its first-frame offset,
/// divided by the first-frame trunk length. Returns the magnitude and the
/// per-axis components.
fn displacement(clip: &MotionClip, joint: Joint) -> Result<(Vec<f64>, [Vec<f64>; 3])> {
    let first = clip
        .smoothed
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty clip".into()))?;
    let trunk = (first.joint(Joint::SpineShoulder) - first.joint(Joint::HipCenter)).norm();
    if trunk <= 0.0 {
        return Err(Error::Degenerate("zero trunk length".into()));
    }
    let origin = first.joint(joint) - first.joint(Joint::Head);
    let mut magnitude = Vec::with_capacity(clip.smoothed.len());
    let mut axes: [Vec<f64>; 3] = Default::default();
    for s in &clip.smoothed {
        let d = (s.joint(joint) - s.joint(Joint::Head) - origin) / trunk;
        magnitude.push(d.norm());
        for (k, axis) in axes.iter_mut().enumerate() {
            axis.push(d[k]);
        }
    }
    Ok((magnitude, axes))
}

/// Shoulder, elbow and wrist trends of the affected clip against the mean of
/// the unaffected clips, each on its own arm.
pub fn trajectory_trends(
    affected: &MotionClip,
    unaffected: &[MotionClip],
    per_axis: bool,
) -> Result<TrajectoryTrends> {
    if unaffected.is_empty() {
        return Err(Error::InvalidArgument("need at least one unaffected clip".into()));
    }
    let points = TRAJECTORY_POINTS;
    let time: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let mut joints = Vec::with_capacity(3);
    for pick in [
        |a: crate::motion::Arm| a.shoulder(),
        |a: crate::motion::Arm| a.elbow(),
        |a: crate::motion::Arm| a.wrist(),
    ] {
        let joint = pick(affected.arm);
        let (mag, axes) = displacement(affected, joint)?;
        let mut ref_mag = vec![0.0; points];
        let mut ref_axes: [Vec<f64>; 3] = [vec![0.0; points], vec![0.0; points], vec![0.0; points]];
        for clip in unaffected {
            let (m, a) = displacement(clip, pick(clip.arm))?;
            for (acc, v) in ref_mag.iter_mut().zip(resample(&m, points)) {
                *acc += v / unaffected.len() as f64;
            }
            for k in 0..3 {
                for (acc, v) in ref_axes[k].iter_mut().zip(resample(&a[k], points)) {
                    *acc += v / unaffected.len() as f64;
                }
            }
        }
        joints.push(JointTrend {
            joint,
            affected: resample(&mag, points),
            reference: ref_mag,
            affected_axes: per_axis.then(|| axes.map(|a| resample(&a, points))),
            reference_axes: per_axis.then_some(ref_axes),
        });
    }
    Ok(TrajectoryTrends {
        time,
        joints,
        affected_duration: affected.duration(),
        unaffected_durations: unaffected.iter().map(|c| c.duration()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    pub predicted: Quality,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub queried: Vec<String>,
    pub count: usize,
    #[serde(rename = "return")]
    pub total_return: Option<f64>,
    pub prediction: Quality,
}

/// Everything the review interface shows for one motion and component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisPayload {
    pub version: u32,
    pub motion_id: String,
    pub component: Component,
    pub score: Option<ComponentScore>,
    pub reference: ReferenceKind,
    pub salient_features: Vec<SalientFeature>,
    pub salient_frames: Vec<SalientFrame>,
    pub trajectories: Option<TrajectoryTrends>,
    pub episode: Option<EpisodeSummary>,
    pub warnings: Vec<String>,
}

/// Inputs for one payload. `training` must exclude the patient's rows.
pub struct PayloadInputs<'a> {
    pub clip: &'a MotionClip,
    pub component: Component,
    pub unaffected: &'a [MotionClip],
    pub training: &'a LabeledDataset,
    pub model: Option<&'a Model>,
    pub agent: Option<&'a Agent>,
}

pub fn build_payload(inputs: &PayloadInputs) -> Result<AnalysisPayload> {
    let clip = inputs.clip;
    let component = inputs.component;
    let features = extract(clip, component)?;
    let score = inputs
        .model
        .map(|m| m.predict_vector(&features))
        .transpose()?
        .map(|(predicted, confidence)| ComponentScore {
            predicted,
            confidence,
        });
    let label = clip.labels.map(|l| l.quality(component, Default::default()));
    let episode: Option<AcquisitionEpisode> = inputs
        .agent
        .map(|a| a.assess(&features.values, label, &clip.id))
        .transpose()?;
    let unaffected_vectors: Vec<Vec<f64>> = inputs
        .unaffected
        .iter()
        .map(|c| extract(c, component).map(|v| v.values))
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let candidates = episode.as_ref().map(|e| e.queried.as_slice());
    if episode.is_none() {
        warnings.push("no agent available; ranking the full feature set".to_string());
    }
    let salient = salient_features(candidates, inputs.training, &features.values, &unaffected_vectors)?;
    warnings.extend(salient.warnings.iter().cloned());
    let matrix = frame_features(clip, component)?;
    let frames = salient_frames(clip, &matrix, &salient.features)?;
    let trajectories = if inputs.unaffected.is_empty() {
        None
    } else {
        Some(trajectory_trends(clip, inputs.unaffected, false)?)
    };
    let ids = &inputs.training.feature_ids;
    Ok(AnalysisPayload {
        version: PAYLOAD_VERSION,
        motion_id: clip.id.clone(),
        component,
        score,
        reference: salient.reference,
        salient_features: salient.features,
        salient_frames: frames,
        trajectories,
        episode: episode.map(|e| EpisodeSummary {
            queried: e.queried.iter().map(|&i| ids[i].clone()).collect(),
            count: e.queried.len(),
            total_return: e.total_return,
            prediction: e.prediction,
        }),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Quality::{Correct as C, Incorrect as I};

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy(&[4, 4]), 1.0);
        assert_eq!(entropy(&[8, 0]), 0.0);
        assert_eq!(entropy(&[]), 0.0);
    }

    #[test]
    fn perfect_predictor_gains_label_entropy() {
        let labels = [I, C, C, I, C, C];
        let column: Vec<f64> = labels.iter().map(|&l| l.class_index() as f64).collect();
        let h = entropy(&[4, 2]);
        assert!((information_gain(&column, &labels, 2) - h).abs() < 1e-15);
    }

    #[test]
    fn constant_feature_gains_nothing() {
        assert_eq!(information_gain(&[3.0; 5], &[I, C, I, C, C], 10), 0.0);
    }

    #[test]
    fn percentiles_interpolate() {
        let v: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0), 5.0);
        assert!((percentile(&v, 5.0) - 0.5).abs() < 1e-12);
        assert!((percentile(&v, 95.0) - 9.5).abs() < 1e-12);
    }

    #[test]
    fn radar_clamps_and_handles_constant() {
        let s = RadarScale { p5: 1.0, p95: 3.0 };
        assert_eq!(s.normalize(2.0), 0.5);
        assert_eq!(s.normalize(-5.0), 0.0);
        assert_eq!(s.normalize(9.0), 1.0);
        assert_eq!(RadarScale { p5: 2.0, p95: 2.0 }.normalize(7.0), 0.5);
    }

    #[test]
    fn resample_endpoints_and_constant() {
        let r = resample(&[0.0, 1.0, 2.0], 5);
        assert_eq!(r, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(resample(&[4.0], 3), vec![4.0; 3]);
    }
}
