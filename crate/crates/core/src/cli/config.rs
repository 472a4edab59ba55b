//! Run configuration files: `key = value` lines, `#` comments. Relative
//! paths resolve against the file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{MixSpec, SnrRange};
use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_NUM_MIXTURES;
use crate::training::{TrainMode, DEFAULT_BATCH_SIZE, DEFAULT_LR, DEFAULT_STEPS};

pub const KNOWN_KEYS: &[&str] = &[
    "speaker_manifest",
    "speaker_manifests",
    "generalist_manifests",
    "premix_noise_manifest",
    "train_noise_manifest",
    "eval_speaker_manifest",
    "eval_noise_manifest",
    "eval_holdout",
    "steps",
    "batch_size",
    "lr",
    "hidden_dim",
    "hidden_dims",
    "num_layers",
    "predictor_hidden_dim",
    "predictor_num_layers",
    "predictor_steps",
    "segment_length",
    "premix_snr_low",
    "premix_snr_high",
    "mix_snr_low",
    "mix_snr_high",
    "num_mixtures",
    "modes",
];

pub const DEFAULT_EVAL_HOLDOUT: f64 = 0.2;
pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_PREDICTOR_HIDDEN_DIM: usize = 64;
pub const DEFAULT_PREDICTOR_LAYERS: usize = 2;

#[derive(Clone, Debug)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return Err(Error::config(format!("line {}: unknown key {k:?}", n + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key {k:?}", n + 1)));
            }
        }
        Ok(RunConfig {
            values,
            base: base.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = std::path::absolute(base).map_err(|e| Error::io(base, e))?;
        Self::parse(&text, &base)
    }

    /// Overrides or fills in a value, e.g. with an effective default.
    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("{key} = {v:?} is not a valid value"))),
        }
    }

    fn path(&self, raw: &str) -> PathBuf {
        let p = Path::new(raw);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// A path that must exist.
    pub fn existing_path(&self, key: &str) -> Result<Option<PathBuf>> {
        self.get(key).map(|v| self.checked(key, v)).transpose()
    }

    fn checked(&self, key: &str, raw: &str) -> Result<PathBuf> {
        let p = self.path(raw);
        if !p.is_file() {
            return Err(Error::config(format!("{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.existing_path(key)?
            .ok_or_else(|| Error::config(format!("config is missing {key}")))
    }

    pub fn path_list(&self, key: &str) -> Result<Vec<PathBuf>> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| self.checked(key, s))
                .collect(),
        }
    }

    fn usize_list(&self, key: &str, default: usize) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(vec![default]),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::config(format!("{key}: {s:?} is not an integer")))
                })
                .collect(),
        }
    }

    pub fn steps(&self) -> Result<usize> {
        self.parsed("steps", DEFAULT_STEPS)
    }

    pub fn batch_size(&self) -> Result<usize> {
        self.parsed("batch_size", DEFAULT_BATCH_SIZE)
    }

    pub fn lr(&self) -> Result<f64> {
        self.parsed("lr", DEFAULT_LR)
    }

    pub fn hidden_dim(&self) -> Result<usize> {
        self.parsed("hidden_dim", DEFAULT_HIDDEN_DIM)
    }

    pub fn hidden_dims(&self) -> Result<Vec<usize>> {
        if self.get("hidden_dims").is_some() {
            self.usize_list("hidden_dims", DEFAULT_HIDDEN_DIM)
        } else {
            Ok(vec![self.hidden_dim()?])
        }
    }

    pub fn num_layers(&self) -> Result<usize> {
        self.parsed("num_layers", 2)
    }

    pub fn predictor_hidden_dim(&self) -> Result<usize> {
        self.parsed("predictor_hidden_dim", DEFAULT_PREDICTOR_HIDDEN_DIM)
    }

    pub fn predictor_num_layers(&self) -> Result<usize> {
        self.parsed("predictor_num_layers", DEFAULT_PREDICTOR_LAYERS)
    }

    pub fn predictor_steps(&self) -> Result<usize> {
        let steps = self.steps()?;
        self.parsed("predictor_steps", steps)
    }

    pub fn num_mixtures(&self) -> Result<usize> {
        self.parsed("num_mixtures", DEFAULT_NUM_MIXTURES)
    }

    pub fn eval_holdout(&self) -> Result<f64> {
        let f = self.parsed("eval_holdout", DEFAULT_EVAL_HOLDOUT)?;
        if !(0.0..1.0).contains(&f) {
            return Err(Error::config(format!("eval_holdout {f} must be in [0, 1)")));
        }
        Ok(f)
    }

    pub fn mix_spec(&self) -> Result<MixSpec> {
        let d = MixSpec::default();
        let range = |lo: &str, hi: &str, def: SnrRange| -> Result<SnrRange> {
            SnrRange::new(self.parsed(lo, def.low)?, self.parsed(hi, def.high)?)
                .map_err(|e| Error::config(format!("{lo}/{hi}: {e}")))
        };
        let spec = MixSpec {
            segment_length: self.parsed("segment_length", d.segment_length)?,
            premix_snr: range("premix_snr_low", "premix_snr_high", d.premix_snr)?,
            mix_snr: range("mix_snr_low", "mix_snr_high", d.mix_snr)?,
        };
        spec.validate().map_err(|e| Error::config(e.to_string()))?;
        Ok(spec)
    }

    pub fn modes(&self) -> Result<Vec<TrainMode>> {
        match self.get("modes") {
            None => Ok(crate::training::SUITE_MODES.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| TrainMode::parse(s.trim()).map_err(|e| Error::config(e.to_string())))
                .collect(),
        }
    }

    /// All keys with paths made absolute, in `key = value` form.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let value = if k.ends_with("_manifest") {
                self.path(v).display().to_string()
            } else if k.ends_with("_manifests") {
                v.split(',')
                    .map(|s| self.path(s.trim()).display().to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            } else {
                v.clone()
            };
            out.push_str(&format!("{k} = {value}\n"));
        }
        out
    }
}
