use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Summary of one training run, stored as `key = value` lines next to the
/// checkpoint. Per-step losses are written as `loss.<step> = <value>`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub seed: u64,
    pub loss_trace: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
    pub wall_clock_secs: f64,
    pub config: Vec<(String, String)>,
}

impl TrainReport {
    pub fn steps(&self) -> usize {
        self.loss_trace.len()
    }

    /// Mean loss over `range` of steps, clipped to the trace.
    pub fn mean_loss(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let end = range.end.min(self.loss_trace.len());
        let slice = self.loss_trace.get(range.start..end)?;
        (!slice.is_empty()).then(|| slice.iter().sum::<f64>() / slice.len() as f64)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("seed = {}\n", self.seed);
        out.push_str(&format!("steps_executed = {}\n", self.loss_trace.len()));
        if let Some(p) = &self.checkpoint {
            out.push_str(&format!("checkpoint = {}\n", p.display()));
        }
        out.push_str(&format!("wall_clock_secs = {:.3}\n", self.wall_clock_secs));
        for (k, v) in &self.config {
            out.push_str(&format!("config.{k} = {v}\n"));
        }
        for (i, l) in self.loss_trace.iter().enumerate() {
            out.push_str(&format!("loss.{i} = {l:?}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut report = TrainReport {
            seed: 0,
            loss_trace: Vec::new(),
            checkpoint: None,
            wall_clock_secs: 0.0,
            config: Vec::new(),
        };
        let mut steps = None;
        let mut seen_seed = false;
        let bad = |line: &str| Error::Parse(format!("bad report line {line:?}"));
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once(" = ").ok_or_else(|| bad(line))?;
            if let Some(i) = k.strip_prefix("loss.") {
                let i: usize = i.parse().map_err(|_| bad(line))?;
                if i != report.loss_trace.len() {
                    return Err(bad(line));
                }
                report.loss_trace.push(v.parse().map_err(|_| bad(line))?);
            } else if let Some(key) = k.strip_prefix("config.") {
                report.config.push((key.to_string(), v.to_string()));
            } else {
                match k {
                    "seed" => {
                        report.seed = v.parse().map_err(|_| bad(line))?;
                        seen_seed = true;
                    }
                    "steps_executed" => steps = Some(v.parse::<usize>().map_err(|_| bad(line))?),
                    "checkpoint" => report.checkpoint = Some(PathBuf::from(v)),
                    "wall_clock_secs" => report.wall_clock_secs = v.parse().map_err(|_| bad(line))?,
                    _ => return Err(bad(line)),
                }
            }
        }
        if !seen_seed || steps != Some(report.loss_trace.len()) {
            return Err(Error::Parse("report is missing its seed or has a truncated loss trace".into()));
        }
        Ok(report)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
