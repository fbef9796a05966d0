use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::time::Duration;

use super::{IngestError, Paced, ReadingBatch};
use crate::field::{Readings, SensorId, SensorSet};

pub const DEFAULT_CHANNEL: &str = "temperature";

/// A parsed readings log (`timestamp,sensor_id,value[,channel]`), grouped
/// by timestamp.
#[derive(Debug, Clone)]
pub struct CsvReplay {
    batches: Vec<ReadingBatch>,
    /// `(line, sensor id)` of rows naming sensors outside the layout.
    skipped: Vec<(u64, u16)>,
}

impl CsvReplay {
    pub fn open(path: &Path, sensors: &SensorSet, channel: &str) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        CsvReplay::from_reader(file, sensors, channel)
    }

    /// Parses a whole log. Rows whose optional `channel` column differs from
    /// `channel` are ignored; rows for unknown sensors are skipped and
    /// listed in [`CsvReplay::skipped`].
    pub fn from_reader<R: Read>(reader: R, sensors: &SensorSet, channel: &str) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| IngestError::Row {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        let channel_col = match cols.as_slice() {
            ["timestamp", "sensor_id", "value"] => None,
            ["timestamp", "sensor_id", "value", "channel"] => Some(3),
            _ => {
                return Err(IngestError::Row {
                    line: 1,
                    message: format!(
                        "expected header `timestamp,sensor_id,value[,channel]`, got `{}`",
                        cols.join(",")
                    ),
                })
            }
        };

        let mut grouped: BTreeMap<u64, Readings> = BTreeMap::new();
        let mut skipped = Vec::new();
        let mut rows = 0usize;
        for record in rdr.records() {
            let record = record.map_err(|e| IngestError::Row {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            rows += 1;
            if let Some(c) = channel_col {
                if record.get(c).unwrap_or("") != channel {
                    continue;
                }
            }
            let field = |idx: usize, name: &str| -> Result<&str, IngestError> {
                record.get(idx).ok_or_else(|| IngestError::Row {
                    line,
                    message: format!("missing {name}"),
                })
            };
            let bad = |name: &str, raw: &str| IngestError::Row {
                line,
                message: format!("cannot parse {name} from `{raw}`"),
            };
            let raw = field(0, "timestamp")?;
            let timestamp: u64 = raw.parse().map_err(|_| bad("timestamp", raw))?;
            let raw = field(1, "sensor_id")?;
            let id: u16 = raw.parse().map_err(|_| bad("sensor_id", raw))?;
            let raw = field(2, "value")?;
            let value: f64 = raw.parse().map_err(|_| bad("value", raw))?;
            if !value.is_finite() {
                return Err(bad("value", raw));
            }
            if !sensors.contains(SensorId(id)) {
                skipped.push((line, id));
                continue;
            }
            grouped.entry(timestamp).or_default().insert(SensorId(id), value);
        }
        if rows == 0 {
            return Err(IngestError::Empty);
        }
        let batches = grouped
            .into_iter()
            .enumerate()
            .map(|(i, (timestamp_ms, readings))| ReadingBatch {
                tick: i as u64,
                timestamp_ms,
                readings,
            })
            .collect();
        Ok(CsvReplay { batches, skipped })
    }

    pub fn batches(&self) -> &[ReadingBatch] {
        &self.batches
    }

    pub fn skipped(&self) -> &[(u64, u16)] {
        &self.skipped
    }

    /// Batches with their pacing delays: timestamp gaps divided by `speed`.
    /// Speed 0 releases everything immediately.
    pub fn paced(&self, speed: f64) -> Result<Vec<Paced>, IngestError> {
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(IngestError::InvalidArgument(format!(
                "speed must be finite and >= 0, got {speed}"
            )));
        }
        let mut prev = self.batches.first().map_or(0, |b| b.timestamp_ms);
        Ok(self
            .batches
            .iter()
            .map(|b| {
                let gap = b.timestamp_ms - prev;
                prev = b.timestamp_ms;
                let delay = if speed == 0.0 {
                    Duration::ZERO
                } else {
                    Duration::from_secs_f64(gap as f64 / 1000.0 / speed)
                };
                Paced {
                    delay,
                    batch: b.clone(),
                }
            })
            .collect())
    }
}
