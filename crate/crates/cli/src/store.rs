//! Append-only JSONL logs of assessments and interface events.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Interface condition of the review study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Motion playback only.
    Traditional,
    /// Playback and predicted scores.
    Scores,
    /// Playback, scores and analysis.
    Full,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Traditional, Condition::Scores, Condition::Full];

    pub fn parse(s: &str) -> Option<Condition> {
        match s {
            "traditional" => Some(Condition::Traditional),
            "scores" => Some(Condition::Scores),
            "full" => Some(Condition::Full),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Traditional => "traditional",
            Condition::Scores => "scores",
            Condition::Full => "full",
        }
    }

    pub fn allows_prediction(self) -> bool {
        self != Condition::Traditional
    }

    pub fn allows_analysis(self) -> bool {
        self == Condition::Full
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scores {
    pub rom: u8,
    pub smoothness: u8,
    pub compensation: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub assessor: String,
    pub motion_id: String,
    pub scores: Scores,
    pub condition: Condition,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Play,
    Pause,
    TabEnter,
    TabExit,
    Submit,
}

impl EventKind {
    pub fn is_video(self) -> bool {
        matches!(self, EventKind::Play | EventKind::Pause)
    }
}

/// Panels of the review interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tab {
    Video,
    Prediction,
    Features,
    Frames,
    Trajectories,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UiEvent {
    pub assessor: String,
    pub motion_id: String,
    pub condition: Condition,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tab: Option<Tab>,
    pub timestamp_ms: u64,
}

#[derive(Debug)]
pub enum StoreError {
    Duplicate,
    /// Timestamp earlier than the previous event of the same session.
    NonMonotonic { previous: u64 },
    Io(std::io::Error),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e)
    }
}

struct Log<T> {
    path: PathBuf,
    file: File,
    records: Vec<T>,
}

impl<T: Serialize + DeserializeOwned> Log<T> {
    /// Reads existing records. A torn final line from an interrupted write
    /// is cut off so later appends start on a fresh line.
    fn open(path: PathBuf) -> std::io::Result<Log<T>> {
        let mut records = Vec::new();
        if path.exists() {
            let mut bytes = std::fs::read(&path)?;
            let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if complete < bytes.len() {
                tracing::warn!(path = %path.display(), "dropping torn final line");
                OpenOptions::new().write(true).open(&path)?.set_len(complete as u64)?;
                bytes.truncate(complete);
            }
            for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
                if line.iter().all(u8::is_ascii_whitespace) {
                    continue;
                }
                let record = serde_json::from_slice(line).map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}:{}: {e}", path.display(), i + 1),
                    )
                })?;
                records.push(record);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Log {
            path,
            file,
            records,
        })
    }

    fn append(&mut self, record: T) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(&record).map_err(std::io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.records.push(record);
        Ok(())
    }
}

struct Inner {
    assessments: Log<Assessment>,
    events: Log<UiEvent>,
}

/// Single-writer store; every append holds the lock across the write.
pub struct Store {
    inner: Mutex<Inner>,
}

impl Store {
    /// Opens or creates `dir/assessments.jsonl` and `dir/events.jsonl`.
    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Store> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        Ok(Store {
            inner: Mutex::new(Inner {
                assessments: Log::open(dir.join("assessments.jsonl"))?,
                events: Log::open(dir.join("events.jsonl"))?,
            }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn add_assessment(&self, a: Assessment) -> Result<(), StoreError> {
        let mut inner = self.lock();
        if inner.assessments.records.iter().any(|x| {
            x.assessor == a.assessor && x.motion_id == a.motion_id && x.condition == a.condition
        }) {
            return Err(StoreError::Duplicate);
        }
        inner.assessments.append(a)?;
        Ok(())
    }

    pub fn add_event(&self, e: UiEvent) -> Result<(), StoreError> {
        let mut inner = self.lock();
        let previous = inner
            .events
            .records
            .iter()
            .rev()
            .find(|x| x.assessor == e.assessor && x.motion_id == e.motion_id && x.condition == e.condition)
            .map(|x| x.timestamp_ms);
        if let Some(previous) = previous {
            if e.timestamp_ms < previous {
                return Err(StoreError::NonMonotonic { previous });
            }
        }
        inner.events.append(e)?;
        Ok(())
    }

    pub fn assessments(&self, assessor: Option<&str>) -> Vec<Assessment> {
        self.lock()
            .assessments
            .records
            .iter()
            .filter(|a| assessor.is_none_or(|who| a.assessor == who))
            .cloned()
            .collect()
    }

    pub fn events(&self) -> Vec<UiEvent> {
        self.lock().events.records.clone()
    }

    pub fn paths(&self) -> (PathBuf, PathBuf) {
        let inner = self.lock();
        (inner.assessments.path.clone(), inner.events.path.clone())
    }
}

/// Aggregates for one (assessor, motion, condition) review session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub assessor: String,
    pub motion_id: String,
    pub condition: Condition,
    pub video_events: usize,
    /// Closed tab-enter to tab-exit intervals per tab.
    pub tab_time_ms: BTreeMap<Tab, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub sessions: usize,
    pub video_events: usize,
    pub mean_video_events: f64,
    pub tab_time_ms: BTreeMap<Tab, u64>,
    pub mean_tab_time_ms: BTreeMap<Tab, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub conditions: Vec<ConditionSummary>,
    pub sessions: Vec<SessionSummary>,
}

/// Per-session counts and tab times, then per-condition totals and means.
/// A tab-enter pairs with the next tab-exit of the same tab; unmatched
/// events contribute no time.
pub fn summarize(events: &[UiEvent]) -> LogSummary {
    let mut sessions: BTreeMap<(String, String, Condition), SessionSummary> = BTreeMap::new();
    let mut open: BTreeMap<(String, String, Condition, Tab), u64> = BTreeMap::new();
    for e in events {
        let key = (e.assessor.clone(), e.motion_id.clone(), e.condition);
        let session = sessions.entry(key).or_insert_with(|| SessionSummary {
            assessor: e.assessor.clone(),
            motion_id: e.motion_id.clone(),
            condition: e.condition,
            video_events: 0,
            tab_time_ms: BTreeMap::new(),
        });
        if e.kind.is_video() {
            session.video_events += 1;
        }
        let Some(tab) = e.tab else { continue };
        let tab_key = (e.assessor.clone(), e.motion_id.clone(), e.condition, tab);
        match e.kind {
            EventKind::TabEnter => {
                open.insert(tab_key, e.timestamp_ms);
            }
            EventKind::TabExit => {
                if let Some(start) = open.remove(&tab_key) {
                    *session.tab_time_ms.entry(tab).or_insert(0) +=
                        e.timestamp_ms.saturating_sub(start);
                }
            }
            _ => {}
        }
    }
    let sessions: Vec<SessionSummary> = sessions.into_values().collect();
    let conditions = Condition::ALL
        .into_iter()
        .map(|condition| {
            let own: Vec<&SessionSummary> =
                sessions.iter().filter(|s| s.condition == condition).collect();
            let video_events: usize = own.iter().map(|s| s.video_events).sum();
            let mut tab_time_ms: BTreeMap<Tab, u64> = BTreeMap::new();
            for s in &own {
                for (&tab, &ms) in &s.tab_time_ms {
                    *tab_time_ms.entry(tab).or_insert(0) += ms;
                }
            }
            let n = own.len().max(1) as f64;
            ConditionSummary {
                condition,
                sessions: own.len(),
                video_events,
                mean_video_events: video_events as f64 / n,
                mean_tab_time_ms: tab_time_ms.iter().map(|(&t, &ms)| (t, ms as f64 / n)).collect(),
                tab_time_ms,
            }
        })
        .collect();
    LogSummary {
        conditions,
        sessions,
    }
}
