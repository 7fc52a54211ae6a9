use std::path::Path;

use super::StylusSample;
use crate::error::{Error, Result};

/// Scripted stylus input: one sample per line, `time_s x y z applied`.
///
/// Fields are separated by whitespace or commas; `applied` is `0`/`1` or
/// `false`/`true`. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StylusTrace {
    pub samples: Vec<StylusSample>,
}

impl StylusTrace {
    pub fn parse(text: &str) -> Result<Self> {
        let mut samples: Vec<StylusSample> = Vec::new();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: Some(index + 1),
                message,
            };
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() != 5 {
                return Err(err(format!(
                    "expected 5 fields (time_s x y z applied), found {}",
                    fields.len()
                )));
            }
            let mut numbers = [0.0; 4];
            for (slot, field) in numbers.iter_mut().zip(&fields[..4]) {
                *slot = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("invalid number {field:?}")))?;
            }
            let applied = match fields[4] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(err(format!("invalid applied flag {other:?}"))),
            };
            if let Some(prev) = samples.last() {
                if numbers[0] < prev.timestamp {
                    return Err(err(format!("time {} precedes {}", numbers[0], prev.timestamp)));
                }
            }
            samples.push(StylusSample {
                position: [numbers[1], numbers[2], numbers[3]],
                applied,
                timestamp: numbers[0],
            });
        }
        Ok(Self { samples })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# time_s x y z applied\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                s.timestamp,
                s.position[0],
                s.position[1],
                s.position[2],
                u8::from(s.applied)
            ));
        }
        out
    }

    /// Samples paired with the tick they fall due at: a sample stamped
    /// `t` is delivered at the first tick `k` with `k · dt ≥ t`.
    pub fn schedule(&self, dt: f64) -> Vec<(u64, StylusSample)> {
        self.samples
            .iter()
            // tolerate decimal time stamps that land a hair past a tick
            .map(|s| (((s.timestamp / dt) - 1e-9).ceil().max(0.0) as u64, *s))
            .collect()
    }
}
