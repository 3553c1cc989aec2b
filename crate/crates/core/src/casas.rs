//! CASAS multi-resident event logs.
//!
//! One event per line, whitespace separated:
//!
//! ```text
//! 2009-02-02 12:18:45.51 M13 ON 2 5
//! date       time        tag value resident activity
//! ```
//!
//! Resident and activity are 1-based in the file and 0-based in memory.
//! Lines carrying only the first four fields are unannotated and are counted
//! and skipped.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime, Timelike};
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::numerics::Tensor;
use crate::{seed, ACTIVITIES, RESIDENTS};

/// Sensor tags of the two-resident testbed, in embedding order.
pub const CASAS_TAGS: [&str; 37] = [
    "M01", "M02", "M03", "M04", "M05", "M06", "M07", "M08", "M09", "M10", "M11", "M12", "M13",
    "M14", "M15", "M16", "M17", "M18", "M19", "M20", "M21", "M22", "M23", "M24", "M25", "M26",
    "M51", "I04", "I06", "D07", "D09", "D10", "D11", "D12", "D13", "D14", "D15",
];

/// Activity names by 0-based id.
pub const ACTIVITY_NAMES: [&str; ACTIVITIES] = [
    "Filling medication dispenser",
    "Hanging up clothes",
    "Moving furniture",
    "Reading magazine (R2)",
    "Watering plants",
    "Sweeping floor",
    "Playing checkers",
    "Preparing dinner",
    "Setting table",
    "Reading magazine (R1)",
    "Paying bills",
    "Packing picnic food",
    "Retrieving dishes",
    "Packing picnic supplies",
    "Packing and bring supplies",
];

pub const ON: &str = "ON";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensorVocabulary {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl SensorVocabulary {
    /// The fixed 37-sensor vocabulary.
    pub fn casas() -> Self {
        Self::new(CASAS_TAGS.iter().map(|t| t.to_string()).collect())
            .expect("built-in tags are unique")
    }

    pub fn new(tags: Vec<String>) -> Result<Self, String> {
        let mut index = HashMap::with_capacity(tags.len());
        for (i, t) in tags.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(format!("duplicate sensor tag {t}"));
            }
        }
        Ok(Self { tags, index })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tag(&self, index: usize) -> &str {
        &self.tags[index]
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelPair {
    pub resident: usize,
    pub activity: usize,
}

impl LabelPair {
    pub fn new(resident: usize, activity: usize) -> Self {
        debug_assert!(resident < RESIDENTS && activity < ACTIVITIES);
        Self { resident, activity }
    }

    /// Joint class id in `0..RESIDENTS * ACTIVITIES`.
    pub fn composite(&self) -> usize {
        self.resident * ACTIVITIES + self.activity
    }

    pub fn from_composite(class: usize) -> Self {
        Self::new(class / ACTIVITIES, class % ACTIVITIES)
    }
}

impl fmt::Display for LabelPair {
    /// 1-based, as in the log files.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.resident + 1, self.activity + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensorEvent {
    pub date: NaiveDate,
    pub time: NaiveTime,
    /// Fractional-second digits in the source text, kept for re-serialization.
    pub frac_digits: u8,
    pub sensor: usize,
    pub value: String,
    pub label: LabelPair,
}

impl SensorEvent {
    pub fn time_text(&self) -> String {
        let base = self.time.format("%H:%M:%S").to_string();
        if self.frac_digits == 0 {
            return base;
        }
        let nanos = format!("{:09}", self.time.nanosecond() % 1_000_000_000);
        format!("{base}.{}", &nanos[..self.frac_digits as usize])
    }

    /// The six-field log line this event was parsed from.
    pub fn to_line(&self, vocab: &SensorVocabulary) -> String {
        format!(
            "{} {} {} {} {}",
            self.date.format("%Y-%m-%d"),
            self.time_text(),
            vocab.tag(self.sensor),
            self.value,
            self.label
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParsedLine {
    Event(SensorEvent),
    Blank,
    /// A valid reading without the two label fields.
    Unlabeled { sensor: usize, value: String },
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("expected 6 fields (or 4 for an unannotated event), found {found}")]
    FieldCount { found: usize },
    #[error("unparseable date {0:?}")]
    Date(String),
    #[error("unparseable time {0:?}")]
    Time(String),
    #[error("unknown sensor tag {0:?}")]
    UnknownSensor(String),
    #[error("{field} label {value:?} is not in 1..={max}")]
    LabelOutOfRange {
        field: &'static str,
        value: String,
        max: usize,
    },
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: {kind}")]
    Parse {
        file: String,
        line: usize,
        kind: ParseErrorKind,
    },
    #[error("{file}:{line}: event precedes the previous event")]
    OutOfOrder { file: String, line: usize },
    #[error("no log files found in {}", .0.display())]
    NoFiles(PathBuf),
    #[error("cannot split {0} file(s); need at least 2")]
    TooFewFiles(usize),
}

impl IngestError {
    pub fn parse_kind(&self) -> Option<&ParseErrorKind> {
        match self {
            IngestError::Parse { kind, .. } => Some(kind),
            _ => None,
        }
    }
}

fn parse_label(
    text: &str,
    field: &'static str,
    max: usize,
    line: usize,
) -> Result<usize, ParseError> {
    match text.parse::<usize>() {
        Ok(v) if (1..=max).contains(&v) => Ok(v - 1),
        _ => Err(ParseError {
            line,
            kind: ParseErrorKind::LabelOutOfRange {
                field,
                value: text.to_string(),
                max,
            },
        }),
    }
}

/// Parses one log line; `line_no` is 1-based and only used for diagnostics.
pub fn parse_line(
    line: &str,
    line_no: usize,
    vocab: &SensorVocabulary,
) -> Result<ParsedLine, ParseError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let err = |kind| ParseError {
        line: line_no,
        kind,
    };
    match fields.len() {
        0 => return Ok(ParsedLine::Blank),
        4 | 6 => {}
        found => return Err(err(ParseErrorKind::FieldCount { found })),
    }
    let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
        .map_err(|_| err(ParseErrorKind::Date(fields[0].into())))?;
    let time = NaiveTime::parse_from_str(fields[1], "%H:%M:%S%.f")
        .map_err(|_| err(ParseErrorKind::Time(fields[1].into())))?;
    let frac_digits = fields[1].split_once('.').map_or(0, |(_, f)| f.len());
    if frac_digits > 9 {
        return Err(err(ParseErrorKind::Time(fields[1].into())));
    }
    let sensor = vocab
        .index_of(fields[2])
        .ok_or_else(|| err(ParseErrorKind::UnknownSensor(fields[2].into())))?;
    if fields.len() == 4 {
        return Ok(ParsedLine::Unlabeled {
            sensor,
            value: fields[3].to_string(),
        });
    }
    let resident = parse_label(fields[4], "resident", RESIDENTS, line_no)?;
    let activity = parse_label(fields[5], "activity", ACTIVITIES, line_no)?;
    Ok(ParsedLine::Event(SensorEvent {
        date,
        time,
        frac_digits: frac_digits as u8,
        sensor,
        value: fields[3].to_string(),
        label: LabelPair::new(resident, activity),
    }))
}

/// All labeled events of one log file, plus what was skipped.
#[derive(Clone, Debug)]
pub struct LogFile {
    pub name: String,
    pub events: Vec<SensorEvent>,
    pub unlabeled: usize,
}

impl LogFile {
    pub fn on_events(&self, value: &str) -> Vec<SensorEvent> {
        filter_value(&self.events, value)
    }
}

pub fn parse_log(name: &str, text: &str, vocab: &SensorVocabulary) -> Result<LogFile, IngestError> {
    let mut events: Vec<SensorEvent> = Vec::new();
    let mut unlabeled = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        match parse_line(raw, line_no, vocab) {
            Ok(ParsedLine::Event(ev)) => {
                if let Some(prev) = events.last() {
                    if (ev.date, ev.time) < (prev.date, prev.time) {
                        return Err(IngestError::OutOfOrder {
                            file: name.to_string(),
                            line: line_no,
                        });
                    }
                }
                events.push(ev);
            }
            Ok(ParsedLine::Blank) => {}
            Ok(ParsedLine::Unlabeled { .. }) => unlabeled += 1,
            Err(e) => {
                return Err(IngestError::Parse {
                    file: name.to_string(),
                    line: e.line,
                    kind: e.kind,
                })
            }
        }
    }
    Ok(LogFile {
        name: name.to_string(),
        events,
        unlabeled,
    })
}

pub fn read_log(path: &Path, vocab: &SensorVocabulary) -> Result<LogFile, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_log(&name, &text, vocab)
}

/// Regular, non-hidden files in `dir`, sorted by name.
pub fn list_corpus(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let io_err = |source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if !hidden && entry.file_type().map_err(io_err)?.is_file() {
            files.push(entry.path());
        }
    }
    if files.is_empty() {
        return Err(IngestError::NoFiles(dir.to_path_buf()));
    }
    files.sort();
    Ok(files)
}

pub fn read_corpus(dir: &Path, vocab: &SensorVocabulary) -> Result<Vec<LogFile>, IngestError> {
    list_corpus(dir)?
        .iter()
        .map(|p| read_log(p, vocab))
        .collect()
}

/// Events whose value equals `value` exactly, in order.
pub fn filter_value(events: &[SensorEvent], value: &str) -> Vec<SensorEvent> {
    events.iter().filter(|e| e.value == value).cloned().collect()
}

pub fn filter_on(events: &[SensorEvent]) -> Vec<SensorEvent> {
    filter_value(events, ON)
}

/// `[1, vocab.len()]` indicator of the event's sensor.
pub fn one_hot(event: &SensorEvent, vocab: &SensorVocabulary) -> Tensor {
    one_hot_index(event.sensor, vocab.len())
}

pub fn one_hot_index(sensor: usize, vocab_size: usize) -> Tensor {
    let mut t = Tensor::zeros(&[1, vocab_size]);
    t.data_mut()[sensor] = 1.0;
    t
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_files: Vec<String>,
    pub test_files: Vec<String>,
    pub seed: u64,
}

/// Random file-level split with `round(ratio * n)` training files, clamped so
/// both sides are nonempty. The result depends only on the set of names.
pub fn split_files(files: &[String], ratio: f64, seed: u64) -> Result<DatasetSplit, IngestError> {
    if files.len() < 2 {
        return Err(IngestError::TooFewFiles(files.len()));
    }
    let mut names = files.to_vec();
    names.sort();
    names.shuffle(&mut seed::rng(seed, seed::STREAM_SPLIT));
    let n_train = ((ratio * names.len() as f64).round() as usize).clamp(1, names.len() - 1);
    let test_files = names.split_off(n_train);
    let mut train_files = names;
    train_files.sort();
    let mut test_files = test_files;
    test_files.sort();
    Ok(DatasetSplit {
        train_files,
        test_files,
        seed,
    })
}

/// File-level `n`-fold partition: names are shuffled as in [`split_files`]
/// and dealt round-robin, so fold sizes differ by at most one.
pub fn cv_folds(files: &[String], n: usize, seed: u64) -> Result<Vec<DatasetSplit>, IngestError> {
    if n < 2 || files.len() < n {
        return Err(IngestError::TooFewFiles(files.len()));
    }
    let mut names = files.to_vec();
    names.sort();
    names.shuffle(&mut seed::rng(seed, seed::STREAM_SPLIT));
    Ok((0..n)
        .map(|fold| {
            let mut train_files = Vec::new();
            let mut test_files = Vec::new();
            for (i, name) in names.iter().enumerate() {
                if i % n == fold {
                    test_files.push(name.clone());
                } else {
                    train_files.push(name.clone());
                }
            }
            train_files.sort();
            test_files.sort();
            DatasetSplit {
                train_files,
                test_files,
                seed,
            }
        })
        .collect())
}

pub const CSV_HEADER: &str = "date,time,sensor,value,resident,activity";

/// Canonical CSV; labels are written 1-based like the source logs.
pub fn write_events_csv<W: Write>(
    mut out: W,
    events: &[SensorEvent],
    vocab: &SensorVocabulary,
) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for e in events {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.date.format("%Y-%m-%d"),
            e.time_text(),
            vocab.tag(e.sensor),
            e.value,
            e.label.resident + 1,
            e.label.activity + 1
        )?;
    }
    Ok(())
}
