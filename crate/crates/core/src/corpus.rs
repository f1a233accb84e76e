//! A directory of sessions cut into clips, with the per-task training sets.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::motion::{
    load_session, segment, Component, Exercise, MotionClip, QualityThreshold, Session, Side,
    Subject,
};
use crate::prediction::LabeledDataset;

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub clips: Vec<MotionClip>,
}

/// Session files under `dir/sessions`, or `dir` itself when that folder is
/// absent, sorted by file name.
pub fn session_paths(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let nested = dir.join("sessions");
    let root = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let entries = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&root, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

impl Corpus {
    pub fn from_sessions<'a>(sessions: impl IntoIterator<Item = &'a Session>) -> Result<Corpus> {
        let mut clips = Vec::new();
        for session in sessions {
            clips.extend(segment(session)?);
        }
        Ok(Corpus { clips })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Corpus> {
        let sessions = session_paths(dir)?
            .into_iter()
            .map(load_session)
            .collect::<Result<Vec<_>>>()?;
        Corpus::from_sessions(&sessions)
    }

    pub fn clip(&self, id: &str) -> Option<&MotionClip> {
        self.clips.iter().find(|c| c.id == id)
    }

    /// Distinct subjects in first-appearance order.
    pub fn subjects(&self) -> Vec<Subject> {
        let mut out: Vec<Subject> = Vec::new();
        for clip in &self.clips {
            if !out.iter().any(|s| s.id == clip.subject.id) {
                out.push(clip.subject.clone());
            }
        }
        out
    }

    /// Healthy dominant-side and stroke affected-side clips of `exercise`.
    pub fn training_clips(&self, exercise: Exercise) -> impl Iterator<Item = &MotionClip> {
        self.clips
            .iter()
            .filter(move |c| c.exercise == exercise && c.side != Side::Unaffected)
    }

    /// The subject's own unaffected-side clips of `exercise`.
    pub fn unaffected_clips(&self, subject: &str, exercise: Exercise) -> Vec<MotionClip> {
        self.clips
            .iter()
            .filter(|c| {
                c.subject.id == subject && c.exercise == exercise && c.side == Side::Unaffected
            })
            .cloned()
            .collect()
    }

    pub fn dataset(
        &self,
        exercise: Exercise,
        component: Component,
        threshold: QualityThreshold,
    ) -> Result<LabeledDataset> {
        LabeledDataset::from_clips(self.training_clips(exercise), exercise, component, threshold)
    }
}
