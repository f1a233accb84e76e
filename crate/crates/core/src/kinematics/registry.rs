use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{Component, Exercise};

/// A per-frame kinematic measurement, one column of a [`super::FeatureMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFeature {
    ElbowFlexion,
    ShoulderFlexion,
    ElbowExtension,
    HeadWristDistance,
    HeadElbowDistance,
    HeadWristDx,
    HeadWristDy,
    HeadWristDz,
    ShoulderWristDx,
    ShoulderWristDy,
    ShoulderWristDz,

    WristSpeed,
    WristAcceleration,
    WristJerk,
    ElbowSpeed,
    ElbowAcceleration,
    ElbowJerk,
    WristNormSpeed,
    WristNormAcceleration,
    ElbowNormSpeed,
    ElbowNormAcceleration,

    ShoulderElevation,
    SpineTilt,
    ShoulderAbduction,
    HeadDx,
    HeadDy,
    HeadDz,
    SpineDx,
    SpineDy,
    SpineDz,
    ShoulderDx,
    ShoulderDy,
    ShoulderDz,
}

use FrameFeature::*;

const ROM_FEATURES: &[FrameFeature] = &[
    ElbowFlexion,
    ShoulderFlexion,
    ElbowExtension,
    HeadWristDistance,
    HeadElbowDistance,
    HeadWristDx,
    HeadWristDy,
    HeadWristDz,
    ShoulderWristDx,
    ShoulderWristDy,
    ShoulderWristDz,
];

const SMOOTHNESS_FEATURES: &[FrameFeature] = &[
    WristSpeed,
    WristAcceleration,
    WristJerk,
    ElbowSpeed,
    ElbowAcceleration,
    ElbowJerk,
    WristNormSpeed,
    WristNormAcceleration,
    ElbowNormSpeed,
    ElbowNormAcceleration,
];

const COMPENSATION_FEATURES: &[FrameFeature] = &[
    ShoulderElevation,
    SpineTilt,
    ShoulderAbduction,
    HeadDx,
    HeadDy,
    HeadDz,
    SpineDx,
    SpineDy,
    SpineDz,
    ShoulderDx,
    ShoulderDy,
    ShoulderDz,
];

impl FrameFeature {
    /// Frame-level columns computed for a component, in registry order.
    pub fn for_component(component: Component) -> &'static [FrameFeature] {
        match component {
            Component::Rom => ROM_FEATURES,
            Component::Smoothness => SMOOTHNESS_FEATURES,
            Component::Compensation => COMPENSATION_FEATURES,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            ElbowFlexion => "elbow_flexion",
            ShoulderFlexion => "shoulder_flexion",
            ElbowExtension => "elbow_extension",
            HeadWristDistance => "head_wrist_dist",
            HeadElbowDistance => "head_elbow_dist",
            HeadWristDx => "head_wrist_dx",
            HeadWristDy => "head_wrist_dy",
            HeadWristDz => "head_wrist_dz",
            ShoulderWristDx => "shoulder_wrist_dx",
            ShoulderWristDy => "shoulder_wrist_dy",
            ShoulderWristDz => "shoulder_wrist_dz",
            WristSpeed => "wrist_speed",
            WristAcceleration => "wrist_accel",
            WristJerk => "wrist_jerk",
            ElbowSpeed => "elbow_speed",
            ElbowAcceleration => "elbow_accel",
            ElbowJerk => "elbow_jerk",
            WristNormSpeed => "wrist_norm_speed",
            WristNormAcceleration => "wrist_norm_accel",
            ElbowNormSpeed => "elbow_norm_speed",
            ElbowNormAcceleration => "elbow_norm_accel",
            ShoulderElevation => "shoulder_elevation",
            SpineTilt => "spine_tilt",
            ShoulderAbduction => "shoulder_abduction",
            HeadDx => "head_dx",
            HeadDy => "head_dy",
            HeadDz => "head_dz",
            SpineDx => "spine_dx",
            SpineDy => "spine_dy",
            SpineDz => "spine_dz",
            ShoulderDx => "shoulder_dx",
            ShoulderDy => "shoulder_dy",
            ShoulderDz => "shoulder_dz",
        }
    }

    /// Terminology shown to therapists.
    pub fn clinical_name(self) -> &'static str {
        match self {
            ElbowFlexion => "Elbow flexion angle",
            ShoulderFlexion => "Shoulder flexion angle",
            ElbowExtension => "Elbow extension angle",
            HeadWristDistance => "Hand-to-head distance",
            HeadElbowDistance => "Elbow-to-head distance",
            HeadWristDx => "Hand-to-head distance, side-to-side",
            HeadWristDy => "Hand-to-head distance, vertical",
            HeadWristDz => "Hand-to-head distance, forward",
            ShoulderWristDx => "Reach from shoulder, side-to-side",
            ShoulderWristDy => "Reach from shoulder, vertical",
            ShoulderWristDz => "Reach from shoulder, forward",
            WristSpeed => "Hand speed",
            WristAcceleration => "Hand acceleration",
            WristJerk => "Hand jerk",
            ElbowSpeed => "Elbow speed",
            ElbowAcceleration => "Elbow acceleration",
            ElbowJerk => "Elbow jerk",
            WristNormSpeed => "Normalized hand speed",
            WristNormAcceleration => "Normalized hand acceleration",
            ElbowNormSpeed => "Normalized elbow speed",
            ElbowNormAcceleration => "Normalized elbow acceleration",
            ShoulderElevation => "Elevated shoulder angle",
            SpineTilt => "Tilted trunk angle",
            ShoulderAbduction => "Shoulder abduction angle",
            HeadDx => "Moving head to the side",
            HeadDy => "Moving head up or down",
            HeadDz => "Moving head forward",
            SpineDx => "Leaning trunk to the side",
            SpineDy => "Raising or slumping trunk",
            SpineDz => "Leaning trunk forward",
            ShoulderDx => "Moving shoulder to the side",
            ShoulderDy => "Raising shoulder",
            ShoulderDz => "Moving shoulder forward",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            ElbowFlexion | ShoulderFlexion | ElbowExtension | ShoulderElevation | SpineTilt
            | ShoulderAbduction => "deg",
            WristSpeed | ElbowSpeed => "m/s",
            WristAcceleration | ElbowAcceleration => "m/s^2",
            WristJerk | ElbowJerk => "m/s^3",
            _ => "ratio",
        }
    }

    pub fn is_angle(self) -> bool {
        self.units() == "deg"
    }
}

/// A per-clip measurement that is not a summary of a frame column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipFeature {
    /// Mean arrest period ratio of the wrist speed profile.
    Mapr,
    Duration,
}

impl ClipFeature {
    pub fn id(self) -> &'static str {
        match self {
            ClipFeature::Mapr => "mapr",
            ClipFeature::Duration => "duration",
        }
    }

    pub fn clinical_name(self) -> &'static str {
        match self {
            ClipFeature::Mapr => "Mean Arrest Period Ratio",
            ClipFeature::Duration => "Movement duration",
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            ClipFeature::Mapr => "ratio",
            ClipFeature::Duration => "s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Max,
    Min,
    Range,
    Mean,
    Std,
    /// Clip-level value, no frame statistic.
    Clip,
}

impl Statistic {
    pub const FRAME_STATS: [Statistic; 5] = [
        Statistic::Max,
        Statistic::Min,
        Statistic::Range,
        Statistic::Mean,
        Statistic::Std,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::Max => "max",
            Statistic::Min => "min",
            Statistic::Range => "range",
            Statistic::Mean => "mean",
            Statistic::Std => "std",
            Statistic::Clip => "clip",
        }
    }

    /// Applies the statistic to a column. Std is the population deviation.
    pub fn apply(self, column: &[f64]) -> f64 {
        if column.is_empty() {
            return 0.0;
        }
        let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = column.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        match self {
            Statistic::Max => max,
            Statistic::Min => min,
            Statistic::Range => max - min,
            Statistic::Mean => mean,
            Statistic::Std => {
                let var =
                    column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / column.len() as f64;
                var.sqrt()
            }
            Statistic::Clip => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "feature", rename_all = "lowercase")]
pub enum FeatureSource {
    Frame(FrameFeature),
    Clip(ClipFeature),
}

impl FeatureSource {
    pub fn id(self) -> &'static str {
        match self {
            FeatureSource::Frame(f) => f.id(),
            FeatureSource::Clip(c) => c.id(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub id: String,
    pub component: Component,
    pub clinical_name: String,
    pub source: FeatureSource,
    pub statistic: Statistic,
    pub units: String,
}

/// Summary feature registry for one exercise and component.
///
/// Order: each frame feature expanded into max, min, range, mean, std, then
/// clip-level features (smoothness only: MAPR, duration).
pub fn registry(_exercise: Exercise, component: Component) -> Vec<FeatureDescriptor> {
    let mut out = Vec::new();
    for &feature in FrameFeature::for_component(component) {
        for stat in Statistic::FRAME_STATS {
            out.push(FeatureDescriptor {
                id: format!("{}_{}", feature.id(), stat.as_str()),
                component,
                clinical_name: format!("{} ({})", feature.clinical_name(), stat.as_str()),
                source: FeatureSource::Frame(feature),
                statistic: stat,
                units: feature.units().to_string(),
            });
        }
    }
    if component == Component::Smoothness {
        for clip in [ClipFeature::Mapr, ClipFeature::Duration] {
            out.push(FeatureDescriptor {
                id: clip.id().to_string(),
                component,
                clinical_name: clip.clinical_name().to_string(),
                source: FeatureSource::Clip(clip),
                statistic: Statistic::Clip,
                units: clip.units().to_string(),
            });
        }
    }
    out
}

pub fn registry_len(exercise: Exercise, component: Component) -> usize {
    registry(exercise, component).len()
}

/// Writes the registry as CSV: `id,component,statistic,clinical_name,units`.
pub fn write_registry_csv<W: Write>(writer: W, descriptors: &[FeatureDescriptor]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::InvalidArgument(format!("csv write failed: {e}"));
    csv.write_record(["id", "component", "statistic", "clinical_name", "units"])
        .map_err(to_err)?;
    for d in descriptors {
        csv.write_record([
            d.id.as_str(),
            d.component.as_str(),
            d.statistic.as_str(),
            d.clinical_name.as_str(),
            d.units.as_str(),
        ])
        .map_err(to_err)?;
    }
    csv.flush()
        .map_err(|e| Error::InvalidArgument(format!("csv flush failed: {e}")))
}
