//! Training loops for the enhancement configurations and the SNR predictor.

mod report;
mod run;
mod suite;

use std::fmt;
use std::path::PathBuf;

use crate::data::{Corpus, MixSpec};
use crate::error::{Error, Result};
use crate::neural::{GruConfig, HeadKind};

pub use report::TrainReport;
pub use run::{
    best_constant_baseline, frame_weights, initial_params, run_training, train, train_pse, train_pse_dp,
    train_pse_from_source, train_pse_weighted, train_se, train_snr_predictor, validate_snr_predictor, PredictorValidation, TrainOutcome,
    Weighting,
};
pub use suite::{run_configuration_suite, CellOutcome, SuiteCell, SuiteConfig, SuiteReport, SUITE_MODES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainMode {
    Se,
    Pse,
    PseDp,
    SeToPse,
    SeToPseDp,
    SnrPredictor,
}

impl TrainMode {
    pub const ALL: [TrainMode; 6] = [
        TrainMode::Se,
        TrainMode::Pse,
        TrainMode::PseDp,
        TrainMode::SeToPse,
        TrainMode::SeToPseDp,
        TrainMode::SnrPredictor,
    ];

    /// Command-line spelling.
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Se => "se",
            TrainMode::Pse => "pse",
            TrainMode::PseDp => "pse-dp",
            TrainMode::SeToPse => "se-pse",
            TrainMode::SeToPseDp => "se-pse-dp",
            TrainMode::SnrPredictor => "snr-predictor",
        }
    }

    /// Display label used in tables and CSVs.
    pub fn label(self) -> &'static str {
        match self {
            TrainMode::Se => "SE",
            TrainMode::Pse => "PSE",
            TrainMode::PseDp => "PSE+DP",
            TrainMode::SeToPse => "SE->PSE",
            TrainMode::SeToPseDp => "SE->PSE+DP",
            TrainMode::SnrPredictor => "SNR-PREDICTOR",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        TrainMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = TrainMode::ALL.iter().map(|m| m.name()).collect();
                Error::Parse(format!("unknown mode {s:?}; expected one of {}", names.join(", ")))
            })
    }

    pub fn uses_purification(self) -> bool {
        matches!(self, TrainMode::PseDp | TrainMode::SeToPseDp)
    }

    pub fn warm_starts_from_se(self) -> bool {
        matches!(self, TrainMode::SeToPse | TrainMode::SeToPseDp)
    }

    pub fn is_self_supervised(self) -> bool {
        matches!(
            self,
            TrainMode::Pse | TrainMode::PseDp | TrainMode::SeToPse | TrainMode::SeToPseDp
        )
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    Random,
    FromCheckpoint(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub model: GruConfig,
    pub mix: MixSpec,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub init: Init,
    pub snr_predictor_checkpoint: Option<PathBuf>,
}

pub const DEFAULT_STEPS: usize = 2000;
pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const DEFAULT_LR: f64 = 1e-3;

impl TrainConfig {
    /// Defaults for everything but the mode, model and seed.
    pub fn new(mode: TrainMode, model: GruConfig, seed: u64) -> Self {
        TrainConfig {
            mode,
            model,
            mix: MixSpec::default(),
            steps: DEFAULT_STEPS,
            lr: DEFAULT_LR,
            batch_size: DEFAULT_BATCH_SIZE,
            seed,
            init: Init::Random,
            snr_predictor_checkpoint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.mix.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!("learning rate {} must be positive", self.lr)));
        }
        let want = if self.mode == TrainMode::SnrPredictor {
            HeadKind::Regression
        } else {
            HeadKind::Mask
        };
        if self.model.head != want || (want == HeadKind::Regression && self.model.output_dim != 1) {
            return Err(Error::config(format!(
                "mode {} needs a {} model",
                self.mode,
                want.name()
            )));
        }
        if self.mode.uses_purification() && self.snr_predictor_checkpoint.is_none() {
            return Err(Error::config(format!(
                "mode {} requires an SNR predictor checkpoint",
                self.mode
            )));
        }
        if self.mode.warm_starts_from_se() && !matches!(self.init, Init::FromCheckpoint(_)) {
            return Err(Error::config(format!("mode {} requires an SE checkpoint", self.mode)));
        }
        Ok(())
    }

    /// `key = value` pairs describing this configuration.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("mode".to_string(), self.mode.name().to_string()),
            ("seed".into(), self.seed.to_string()),
            ("steps".into(), self.steps.to_string()),
            ("lr".into(), format!("{:?}", self.lr)),
            ("batch_size".into(), self.batch_size.to_string()),
            ("hidden_dim".into(), self.model.hidden_dim.to_string()),
            ("num_layers".into(), self.model.num_layers.to_string()),
            ("segment_length".into(), self.mix.segment_length.to_string()),
            (
                "premix_snr".into(),
                format!("{:?},{:?}", self.mix.premix_snr.low, self.mix.premix_snr.high),
            ),
            (
                "mix_snr".into(),
                format!("{:?},{:?}", self.mix.mix_snr.low, self.mix.mix_snr.high),
            ),
        ];
        match &self.init {
            Init::Random => out.push(("init".into(), "random".into())),
            Init::FromCheckpoint(p) => out.push(("init".into(), p.display().to_string())),
        }
        if let Some(p) = &self.snr_predictor_checkpoint {
            out.push(("snr_predictor".into(), p.display().to_string()));
        }
        out
    }
}

/// Corpora available to a training run. Which ones are required depends on
/// the mode.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainCorpora<'a> {
    pub generalist: Option<&'a Corpus>,
    pub speaker: Option<&'a Corpus>,
    pub premix_noise: Option<&'a Corpus>,
    pub train_noise: Option<&'a Corpus>,
}

pub(crate) fn require<'a>(c: Option<&'a Corpus>, what: &str, mode: TrainMode) -> Result<&'a Corpus> {
    c.ok_or_else(|| Error::config(format!("mode {mode} needs a {what} corpus")))
}
