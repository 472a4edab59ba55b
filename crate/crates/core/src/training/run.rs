use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;

use super::{require, Init, TrainConfig, TrainCorpora, TrainMode, TrainReport};
use crate::data::{derive_seed, Corpus, ExampleStream, MixSpec, PseExample, TrainingPair};
use crate::dsp::{SegmentalConfig, Waveform};
use crate::error::{Error, Result};
use crate::metrics::{logistic_weights, segmental_snr};
use crate::neural::{
    forward_snr, load_checkpoint, mask_loss_and_gradients, optimizer_step, regression_loss_and_gradients,
    save_checkpoint, AdamConfig, AdamState, Gradients, HeadKind, ModelParams, WaveformLoss,
};

const DATA_STREAM: u64 = 0x6461_7461;
const INIT_STREAM: u64 = 0x696e_6974;
const VALIDATION_STREAM: u64 = 0x7661_6c69;

pub const CHECKPOINT_FILE: &str = "model.psec";
pub const REPORT_FILE: &str = "report.txt";

/// Frame weighting of the self-supervised loss.
#[derive(Clone, Copy, Debug)]
pub enum Weighting<'a> {
    /// Plain time-domain MSE.
    TimeDomain,
    /// Segmental MSE with every frame weighted 1.
    Uniform,
    /// Segmental MSE weighted by the logistic of a frozen predictor's
    /// per-frame SNR estimate on the target.
    Predictor(&'a ModelParams),
    /// Segmental MSE with every frame weighted by `logistic(logit)`.
    ConstantLogit(f64),
    /// Segmental MSE weighted by the logistic of the target's true SegSNR
    /// against its clean source. Reads the hidden clean signal, so it is only
    /// for measuring how much a perfect predictor could help.
    Oracle,
}

impl Weighting<'_> {
    fn is_segmental(&self) -> bool {
        !matches!(self, Weighting::TimeDomain)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub report: TrainReport,
    /// For predictor runs: the mean training label at each frame index.
    pub frame_target_means: Option<Vec<f64>>,
}

/// Per-frame loss weights for one example, or `None` for time-domain MSE.
pub fn frame_weights(
    weighting: Weighting,
    example: &PseExample,
    framing: &SegmentalConfig,
) -> Result<Option<Vec<f64>>> {
    let frames = framing.frame_count(example.target().len())?;
    let p = match weighting {
        Weighting::TimeDomain => return Ok(None),
        Weighting::Uniform => vec![1.0; frames],
        Weighting::ConstantLogit(a) => logistic_weights(&vec![a; frames])?.p,
        Weighting::Predictor(h) => predictor_weights(h, example.pair())?,
        Weighting::Oracle => {
            let snr = segmental_snr(example.hidden_clean_for_evaluation(), example.target(), framing)?;
            logistic_weights(snr.values())?.p
        }
    };
    Ok(Some(p))
}

/// Weights from the premixture target only; the predictor never sees the input.
fn predictor_weights(h: &ModelParams, pair: &TrainingPair) -> Result<Vec<f64>> {
    Ok(logistic_weights(&forward_snr(h, pair.target())?)?.p)
}

pub(crate) fn data_seed(seed: u64) -> u64 {
    derive_seed(seed, &[DATA_STREAM])
}

/// Random initialization from the run seed, or a loaded warm-start checkpoint.
pub fn initial_params(config: &TrainConfig) -> Result<ModelParams> {
    match &config.init {
        Init::Random => ModelParams::init(config.model.clone(), derive_seed(config.seed, &[INIT_STREAM])),
        Init::FromCheckpoint(path) => {
            let p = load_checkpoint(path)?;
            let (a, b) = (p.config(), &config.model);
            if a.tensor_shapes() != b.tensor_shapes() || a.head != b.head {
                return Err(Error::config(format!(
                    "checkpoint {} has a different architecture than the configured model",
                    path.display()
                )));
            }
            Ok(p)
        }
    }
}

fn optimize<F>(config: &TrainConfig, mut params: ModelParams, mut batch: F) -> Result<(ModelParams, TrainReport)>
where
    F: FnMut(&ModelParams, u64) -> Result<(f64, Gradients)>,
{
    let started = Instant::now();
    let mut state = AdamState::new(
        &params,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let (loss, grads) = batch(&params, step as u64)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at step {step} is {loss}")));
        }
        optimizer_step(&mut params, &grads, &mut state)
            .map_err(|e| Error::NonFinite(format!("step {step}: {e}")))?;
        trace.push(loss);
        if (step + 1) % 100 == 0 {
            let recent = &trace[step + 1 - 100..];
            log::debug!(
                "{} step {}: mean loss {:.6}",
                config.mode,
                step + 1,
                recent.iter().sum::<f64>() / 100.0
            );
        }
    }
    let report = TrainReport {
        seed: config.seed,
        loss_trace: trace,
        checkpoint: None,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        config: config.echo(),
    };
    Ok((params, report))
}

fn check_mode(config: &TrainConfig, allowed: &[TrainMode]) -> Result<()> {
    if !allowed.contains(&config.mode) {
        return Err(Error::config(format!("this trainer does not run mode {}", config.mode)));
    }
    config.model.validate()?;
    config.mix.validate()?;
    if config.batch_size == 0 || !(config.lr.is_finite() && config.lr > 0.0) {
        return Err(Error::config("batch_size and lr must be positive"));
    }
    Ok(())
}

fn pair_loss(
    params: &ModelParams,
    pairs: &[TrainingPair],
    loss: &WaveformLoss,
    framing: &SegmentalConfig,
) -> Result<(f64, Gradients)> {
    let inputs: Vec<&Waveform> = pairs.iter().map(|p| p.input()).collect();
    let targets: Vec<&Waveform> = pairs.iter().map(|p| p.target()).collect();
    mask_loss_and_gradients(params, &inputs, &targets, loss, framing)
}

/// Supervised training on generalist speech: input `s + n'`, target `s`.
pub fn train_se(config: &TrainConfig, generalist: &Corpus, noise: &Corpus, init: ModelParams) -> Result<TrainOutcome> {
    check_mode(config, &[TrainMode::Se])?;
    let framing = SegmentalConfig::standard();
    let stream = ExampleStream::new(config.mix.clone(), data_seed(config.seed))?;
    let b = config.batch_size as u64;
    let (params, report) = optimize(config, init, |params, step| {
        let pairs = (0..b)
            .map(|i| stream.se_pair(generalist, noise, step * b + i))
            .collect::<Result<Vec<_>>>()?;
        pair_loss(params, &pairs, &WaveformLoss::TimeDomain, &framing)
    })?;
    Ok(TrainOutcome {
        params,
        report,
        frame_target_means: None,
    })
}

/// Self-supervised training with time-domain MSE against the premixture.
pub fn train_pse(
    config: &TrainConfig,
    speaker: &Corpus,
    premix_noise: &Corpus,
    noise: &Corpus,
    init: ModelParams,
) -> Result<TrainOutcome> {
    train_pse_weighted(config, speaker, premix_noise, noise, init, Weighting::TimeDomain)
}

/// Self-supervised training with the segmental loss weighted by a frozen
/// SNR predictor applied to each premixture.
pub fn train_pse_dp(
    config: &TrainConfig,
    speaker: &Corpus,
    premix_noise: &Corpus,
    noise: &Corpus,
    init: ModelParams,
    predictor: &ModelParams,
) -> Result<TrainOutcome> {
    train_pse_weighted(config, speaker, premix_noise, noise, init, Weighting::Predictor(predictor))
}

/// Self-supervised training with an explicit frame weighting.
pub fn train_pse_weighted(
    config: &TrainConfig,
    speaker: &Corpus,
    premix_noise: &Corpus,
    noise: &Corpus,
    init: ModelParams,
    weighting: Weighting,
) -> Result<TrainOutcome> {
    let stream = ExampleStream::new(config.mix.clone(), data_seed(config.seed))?;
    train_pse_from_source(config, init, weighting, |draw| {
        stream.pse_example(speaker, premix_noise, noise, draw)
    })
}

/// The self-supervised loop over an arbitrary example source. Examples are
/// reduced to `(input, target)` pairs before the loss is assembled; only the
/// oracle weighting looks at anything else.
pub fn train_pse_from_source<F>(
    config: &TrainConfig,
    init: ModelParams,
    weighting: Weighting,
    source: F,
) -> Result<TrainOutcome>
where
    F: Fn(u64) -> Result<PseExample>,
{
    check_mode(
        config,
        &[TrainMode::Pse, TrainMode::PseDp, TrainMode::SeToPse, TrainMode::SeToPseDp],
    )?;
    if let Weighting::Predictor(h) = weighting {
        if h.config().head != HeadKind::Regression || h.config().output_dim != 1 {
            return Err(Error::config("purification needs a scalar SNR predictor"));
        }
    }
    let framing = SegmentalConfig::standard();
    let frames = framing.frame_count(config.mix.segment_length)?;
    let b = config.batch_size;
    let (params, report) = optimize(config, init, |params, step| {
        let mut pairs = Vec::with_capacity(b);
        let mut weights = Array2::zeros((b, frames));
        for i in 0..b {
            let example = source(step * b as u64 + i as u64)?;
            if let Some(p) = frame_weights(weighting, &example, &framing)? {
                weights.row_mut(i).assign(&ndarray::ArrayView1::from(&p));
            }
            pairs.push(example.into_pair());
        }
        let loss = if weighting.is_segmental() {
            WaveformLoss::Segmental(weights)
        } else {
            WaveformLoss::TimeDomain
        };
        pair_loss(params, &pairs, &loss, &framing)
    })?;
    Ok(TrainOutcome {
        params,
        report,
        frame_target_means: None,
    })
}

/// Regression of clamped per-frame SegSNR of `s + n'` against `s`, on
/// generalist speech only.
pub fn train_snr_predictor(config: &TrainConfig, generalist: &Corpus, noise: &Corpus) -> Result<TrainOutcome> {
    check_mode(config, &[TrainMode::SnrPredictor])?;
    if config.model.head != HeadKind::Regression || config.model.output_dim != 1 {
        return Err(Error::config("the SNR predictor needs a scalar regression head"));
    }
    let framing = SegmentalConfig::standard();
    let frames = framing.frame_count(config.mix.segment_length)?;
    let stream = ExampleStream::new(config.mix.clone(), data_seed(config.seed))?;
    let init = initial_params(config)?;
    let b = config.batch_size as u64;
    let mut sums = vec![0.0; frames];
    let mut count = 0usize;
    let (params, report) = optimize(config, init, |params, step| {
        let examples = (0..b)
            .map(|i| stream.predictor_example(generalist, noise, step * b + i, &framing))
            .collect::<Result<Vec<_>>>()?;
        for e in &examples {
            for (s, v) in sums.iter_mut().zip(e.snr_labels.values()) {
                *s += v;
            }
        }
        count += examples.len();
        let inputs: Vec<&Waveform> = examples.iter().map(|e| &e.input).collect();
        let labels: Vec<&[f64]> = examples.iter().map(|e| e.snr_labels.values()).collect();
        regression_loss_and_gradients(params, &inputs, &labels, &framing)
    })?;
    let means = (count > 0).then(|| sums.iter().map(|s| s / count as f64).collect());
    Ok(TrainOutcome {
        params,
        report,
        frame_target_means: means,
    })
}

/// Per-frame-index mean of predictor targets over `num_examples` mixtures
/// drawn like the training data of a run seeded with `seed`.
pub fn best_constant_baseline(
    speech: &Corpus,
    noise: &Corpus,
    mix: &MixSpec,
    num_examples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let framing = SegmentalConfig::standard();
    let stream = ExampleStream::new(mix.clone(), data_seed(seed))?;
    let frames = framing.frame_count(mix.segment_length)?;
    let mut sums = vec![0.0; frames];
    for draw in 0..num_examples as u64 {
        let e = stream.predictor_example(speech, noise, draw, &framing)?;
        for (s, v) in sums.iter_mut().zip(e.snr_labels.values()) {
            *s += v;
        }
    }
    Ok(sums.into_iter().map(|s| s / num_examples.max(1) as f64).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictorValidation {
    pub mse: f64,
    pub baseline_mse: f64,
}

impl PredictorValidation {
    pub fn ratio(&self) -> f64 {
        self.mse / self.baseline_mse
    }
}

/// Compares the predictor with a per-frame constant on fresh mixtures.
pub fn validate_snr_predictor(
    params: &ModelParams,
    speech: &Corpus,
    noise: &Corpus,
    mix: &MixSpec,
    num_examples: usize,
    seed: u64,
    baseline: &[f64],
) -> Result<PredictorValidation> {
    let framing = SegmentalConfig::standard();
    let stream = ExampleStream::new(mix.clone(), derive_seed(seed, &[VALIDATION_STREAM]))?;
    let (mut err, mut base, mut n) = (0.0, 0.0, 0usize);
    for draw in 0..num_examples as u64 {
        let e = stream.predictor_example(speech, noise, draw, &framing)?;
        let pred = forward_snr(params, &e.input)?;
        let labels = e.snr_labels.values();
        if baseline.len() != labels.len() {
            return Err(Error::invalid(format!(
                "baseline has {} frames, labels have {}",
                baseline.len(),
                labels.len()
            )));
        }
        for ((p, c), y) in pred.iter().zip(baseline).zip(labels) {
            err += (p - y) * (p - y);
            base += (c - y) * (c - y);
        }
        n += labels.len();
    }
    if n == 0 {
        return Err(Error::invalid("validation needs at least one example"));
    }
    Ok(PredictorValidation {
        mse: err / n as f64,
        baseline_mse: base / n as f64,
    })
}

/// Validates `config`, loads its dependent checkpoints, and trains.
pub fn train(config: &TrainConfig, corpora: TrainCorpora) -> Result<TrainOutcome> {
    config.validate()?;
    let mode = config.mode;
    match mode {
        TrainMode::SnrPredictor => train_snr_predictor(
            config,
            require(corpora.generalist, "generalist speech", mode)?,
            require(corpora.train_noise, "training noise", mode)?,
        ),
        TrainMode::Se => {
            let generalist = require(corpora.generalist, "generalist speech", mode)?;
            let noise = require(corpora.train_noise, "training noise", mode)?;
            train_se(config, generalist, noise, initial_params(config)?)
        }
        _ => {
            let speaker = require(corpora.speaker, "speaker", mode)?;
            let premix = require(corpora.premix_noise, "premixture noise", mode)?;
            let noise = require(corpora.train_noise, "training noise", mode)?;
            let init = initial_params(config)?;
            if mode.uses_purification() {
                let path = config
                    .snr_predictor_checkpoint
                    .as_ref()
                    .ok_or_else(|| Error::config("missing SNR predictor checkpoint"))?;
                let predictor = load_checkpoint(path)?;
                train_pse_dp(config, speaker, premix, noise, init, &predictor)
            } else {
                train_pse(config, speaker, premix, noise, init)
            }
        }
    }
}

/// Trains and writes `model.psec` and `report.txt` into `out_dir`.
pub fn run_training(config: &TrainConfig, corpora: TrainCorpora, out_dir: &Path) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    log::info!("training {} (seed {}) into {}", config.mode, config.seed, out_dir.display());
    let mut outcome = train(config, corpora)?;
    let ckpt = out_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &outcome.params)?;
    outcome.report.checkpoint = Some(ckpt);
    outcome.report.write(out_dir.join(REPORT_FILE))?;
    log::info!(
        "finished {} in {:.1} s, final loss {:?}",
        config.mode,
        outcome.report.wall_clock_secs,
        outcome.report.loss_trace.last()
    );
    Ok(outcome)
}
