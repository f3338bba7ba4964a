//! Raw detector click records and their on-disk CSV form.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

/// Single-photon detector identifiers. D1 watches the write arm, D2 the
/// direct read arm, D3/D4 the two outputs of the Hanbury Brown–Twiss
/// splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
    D3,
    D4,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::D1, Detector::D2, Detector::D3, Detector::D4];
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Detector::D1 => "D1",
            Detector::D2 => "D2",
            Detector::D3 => "D3",
            Detector::D4 => "D4",
        };
        f.write_str(s)
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D1" => Ok(Detector::D1),
            "D2" => Ok(Detector::D2),
            "D3" => Ok(Detector::D3),
            "D4" => Ok(Detector::D4),
            other => Err(Error::Parse(format!("unknown detector `{other}`"))),
        }
    }
}

/// One detector click: which detector, in which trial, and when within the
/// trial (µs, quantised to 1 ps so that CSV round trips are exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeTag {
    pub detector: Detector,
    pub trial: u64,
    pub t_us: f64,
}

/// Ordered click record of a complete simulation run, reproducible
/// byte-for-byte from `(scenario, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    /// Tags sorted by `(trial, t_us, detector)`.
    pub tags: Vec<TimeTag>,
    pub trial_count: u64,
    pub trial_period_us: f64,
    pub seed: u64,
    pub scenario_id: String,
}

/// Sidecar metadata describing a serialized stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub scenario_id: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub trial_count: u64,
    pub trial_period_us: f64,
    pub tag_count: u64,
    pub counts_d1: u64,
    pub counts_d2: u64,
    pub counts_d3: u64,
    pub counts_d4: u64,
}

pub const STREAM_CSV_HEADER: &str = "detector,trial,t_us";

impl TimeTagStream {
    pub fn count(&self, det: Detector) -> u64 {
        self.tags.iter().filter(|t| t.detector == det).count() as u64
    }

    pub fn meta(&self, scenario_hash: &str) -> StreamMeta {
        StreamMeta {
            scenario_id: self.scenario_id.clone(),
            scenario_hash: scenario_hash.to_string(),
            seed: self.seed,
            trial_count: self.trial_count,
            trial_period_us: self.trial_period_us,
            tag_count: self.tags.len() as u64,
            counts_d1: self.count(Detector::D1),
            counts_d2: self.count(Detector::D2),
            counts_d3: self.count(Detector::D3),
            counts_d4: self.count(Detector::D4),
        }
    }

    /// Write the fixed-column CSV form (`detector,trial,t_us`, LF endings,
    /// times with six decimals).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{STREAM_CSV_HEADER}")?;
        for tag in &self.tags {
            writeln!(w, "{},{},{:.6}", tag.detector, tag.trial, tag.t_us)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii csv")
    }

    /// Read a stream back from CSV plus its sidecar metadata.
    pub fn read_csv<R: BufRead>(reader: R, meta: &StreamMeta) -> Result<Self> {
        let mut lines = reader.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim_end() == STREAM_CSV_HEADER => {}
            Some(Ok(h)) => {
                return Err(Error::Parse(format!(
                    "bad stream header `{h}`, expected `{STREAM_CSV_HEADER}`"
                )))
            }
            Some(Err(e)) => return Err(e.into()),
            None => return Err(Error::Parse("empty stream file".into())),
        }
        let mut tags = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (det, trial, t) = (parts.next(), parts.next(), parts.next());
            let (det, trial, t) = match (det, trial, t, parts.next()) {
                (Some(d), Some(tr), Some(t), None) => (d, tr, t),
                _ => return Err(Error::Parse(format!("line {}: expected 3 fields", i + 2))),
            };
            tags.push(TimeTag {
                detector: det.parse()?,
                trial: trial
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {}: trial: {e}", i + 2)))?,
                t_us: t
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {}: t_us: {e}", i + 2)))?,
            });
        }
        Ok(TimeTagStream {
            tags,
            trial_count: meta.trial_count,
            trial_period_us: meta.trial_period_us,
            seed: meta.seed,
            scenario_id: meta.scenario_id.clone(),
        })
    }

    /// Concatenate two runs of the same scenario (for independent-seed
    /// merging); trial indices of `other` are shifted past `self`.
    pub fn merged(&self, other: &TimeTagStream) -> TimeTagStream {
        let offset = self.trial_count;
        let mut tags = self.tags.clone();
        tags.extend(other.tags.iter().map(|t| TimeTag {
            detector: t.detector,
            trial: t.trial + offset,
            t_us: t.t_us,
        }));
        TimeTagStream {
            tags,
            trial_count: self.trial_count + other.trial_count,
            trial_period_us: self.trial_period_us,
            seed: self.seed,
            scenario_id: self.scenario_id.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let stream = TimeTagStream {
            tags: vec![
                TimeTag {
                    detector: Detector::D1,
                    trial: 0,
                    t_us: 0.512345,
                },
                TimeTag {
                    detector: Detector::D2,
                    trial: 3,
                    t_us: 2.000001,
                },
            ],
            trial_count: 10,
            trial_period_us: 20.0,
            seed: 7,
            scenario_id: "unit".into(),
        };
        let csv = stream.to_csv_string();
        assert!(csv.starts_with("detector,trial,t_us\nD1,0,0.512345\n"));
        let meta = stream.meta("hash");
        let back = TimeTagStream::read_csv(csv.as_bytes(), &meta).unwrap();
        assert_eq!(back, stream);
        assert_eq!(back.to_csv_string(), csv);
    }

    #[test]
    fn rejects_malformed_input() {
        let meta = StreamMeta {
            scenario_id: "x".into(),
            scenario_hash: "h".into(),
            seed: 0,
            trial_count: 1,
            trial_period_us: 1.0,
            tag_count: 0,
            counts_d1: 0,
            counts_d2: 0,
            counts_d3: 0,
            counts_d4: 0,
        };
        assert!(TimeTagStream::read_csv("wrong,header,row\n".as_bytes(), &meta).is_err());
        assert!(
            TimeTagStream::read_csv("detector,trial,t_us\nD9,0,0.1\n".as_bytes(), &meta).is_err()
        );
        assert!(TimeTagStream::read_csv("detector,trial,t_us\nD1,0\n".as_bytes(), &meta).is_err());
    }
}
