//! Synthetic corpora in the CASAS log format.
//!
//! Each activity owns a small set of "home" sensors and a primary resident.
//! A file is a sequence of activity episodes; each ON event fires one of the
//! episode's home sensors (or, with small probability, any sensor) and is
//! followed by an OFF of the same sensor. Labels therefore carry real signal
//! for the model while staying noisy.

use std::io;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::casas::CASAS_TAGS;
use crate::{seed, ACTIVITIES, RESIDENTS};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthProfile {
    pub sensors: usize,
    pub residents: usize,
    pub activities: usize,
    /// ON events per file; each is followed by an OFF line.
    pub events_per_file: usize,
    pub files: usize,
    /// Probability an ON event fires a random sensor instead of a home sensor.
    pub noise: f64,
    /// Probability an episode is performed by the activity's secondary resident.
    pub resident_swap: f64,
}

impl Default for SynthProfile {
    /// Shaped like the two-resident testbed: 37 sensors, 2 residents,
    /// 15 activities, 26 sessions of ~344 ON events.
    fn default() -> Self {
        Self {
            sensors: CASAS_TAGS.len(),
            residents: RESIDENTS,
            activities: ACTIVITIES,
            events_per_file: 344,
            files: 26,
            noise: 0.15,
            resident_swap: 0.15,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl SynthProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(SynthError::Profile(msg)) };
        check(
            (1..=CASAS_TAGS.len()).contains(&self.sensors),
            format!("sensors must be in 1..={}", CASAS_TAGS.len()),
        )?;
        check((1..=RESIDENTS).contains(&self.residents), format!("residents must be in 1..={RESIDENTS}"))?;
        check(
            (1..=ACTIVITIES).contains(&self.activities),
            format!("activities must be in 1..={ACTIVITIES}"),
        )?;
        check(self.files >= 1, "files must be at least 1".into())?;
        check((0.0..=1.0).contains(&self.noise), "noise must be a probability".into())?;
        check(
            (0.0..=1.0).contains(&self.resident_swap),
            "resident_swap must be a probability".into(),
        )
    }
}

/// Generated log files as `(name, contents)`, deterministic in `seed`.
pub fn generate(profile: &SynthProfile, seed: u64) -> Result<Vec<(String, String)>, SynthError> {
    profile.validate()?;
    let mut layout_rng = seed::rng(seed, 100);
    let sensors: Vec<usize> = (0..profile.sensors).collect();
    let home_size = profile.sensors.min(4);
    let homes: Vec<Vec<usize>> = (0..profile.activities)
        .map(|_| {
            sensors
                .choose_multiple(&mut layout_rng, home_size)
                .copied()
                .collect()
        })
        .collect();

    let base = NaiveDate::from_ymd_opt(2009, 2, 2)
        .unwrap()
        .and_hms_opt(9, 0, 0)
        .unwrap();
    let mut files = Vec::with_capacity(profile.files);
    for f in 0..profile.files {
        let mut rng = seed::rng(seed::derive(seed, 200), f as u64);
        let mut clock: NaiveDateTime = base + Duration::days(f as i64);
        let mut text = String::new();
        let mut emitted = 0;
        while emitted < profile.events_per_file {
            let activity = rng.gen_range(0..profile.activities);
            let primary = activity % profile.residents;
            let resident = if profile.residents > 1 && rng.gen_bool(profile.resident_swap) {
                (primary + 1) % profile.residents
            } else {
                primary
            };
            let length = rng.gen_range(4..=24).min(profile.events_per_file - emitted);
            for _ in 0..length {
                let sensor = if rng.gen_bool(profile.noise) {
                    rng.gen_range(0..profile.sensors)
                } else {
                    *homes[activity].choose(&mut rng).unwrap()
                };
                clock += Duration::microseconds(rng.gen_range(500_000..20_000_000));
                let off = clock + Duration::microseconds(rng.gen_range(100_000..400_000));
                for (stamp, value) in [(clock, "ON"), (off, "OFF")] {
                    text.push_str(&format!(
                        "{} {} {} {} {}\n",
                        stamp.format("%Y-%m-%d %H:%M:%S%.6f"),
                        CASAS_TAGS[sensor],
                        value,
                        resident + 1,
                        activity + 1
                    ));
                }
                clock = off;
            }
            emitted += length;
        }
        files.push((format!("P{:02}.txt", f + 1), text));
    }
    Ok(files)
}

/// Writes [`generate`]'s output into `dir`, creating it if needed.
pub fn write_corpus(dir: &Path, profile: &SynthProfile, seed: u64) -> Result<Vec<PathBuf>, SynthError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut paths = Vec::new();
    for (name, text) in generate(profile, seed)? {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(io_err(&path))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casas::{filter_on, parse_log, SensorVocabulary};

    fn small() -> SynthProfile {
        SynthProfile {
            events_per_file: 50,
            files: 3,
            ..SynthProfile::default()
        }
    }

    #[test]
    fn default_profile_shape() {
        let p = SynthProfile::default();
        assert_eq!((p.sensors, p.residents, p.activities, p.files), (37, 2, 15, 26));
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small(), 4).unwrap(), generate(&small(), 4).unwrap());
        assert_ne!(generate(&small(), 4).unwrap(), generate(&small(), 5).unwrap());
    }

    #[test]
    fn parses_cleanly_with_expected_counts() {
        let vocab = SensorVocabulary::casas();
        for (name, text) in generate(&small(), 1).unwrap() {
            let log = parse_log(&name, &text, &vocab).unwrap();
            assert_eq!(log.unlabeled, 0);
            assert_eq!(log.events.len(), 100);
            assert_eq!(filter_on(&log.events).len(), 50);
        }
    }

    #[test]
    fn rejects_oversized_profile() {
        let p = SynthProfile {
            sensors: 38,
            ..SynthProfile::default()
        };
        assert!(generate(&p, 0).is_err());
    }
}
