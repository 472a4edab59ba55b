//! SI-SDR improvement on held-out mixtures, aggregation, and CSV output.

mod csv;
mod stats;

use std::collections::BTreeSet;

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::{derive_seed, Corpus, EvalMixture, ExampleStream, MixSpec};
use crate::dsp::{stft, SegmentalConfig, Waveform};
use crate::error::{Error, Result};
use crate::metrics::si_sdr;
use crate::neural::{apply_mask_and_reconstruct, enhance, ModelParams};

pub use csv::{format_csv, parse_csv_improvements, CSV_HEADER};
pub use stats::{quantile, summarize, Summary};

const EVAL_STREAM: u64 = 0x6576_616c;

pub const DEFAULT_NUM_MIXTURES: usize = 64;

/// Anything that maps a noisy waveform to an estimate of its clean speech.
pub trait Enhancer: Sync {
    fn enhance(&self, noisy: &Waveform) -> Result<Waveform>;
}

impl Enhancer for ModelParams {
    fn enhance(&self, noisy: &Waveform) -> Result<Waveform> {
        enhance(self, noisy)
    }
}

/// Unit mask: STFT followed by inverse STFT.
pub struct IdentityEnhancer;

impl Enhancer for IdentityEnhancer {
    fn enhance(&self, noisy: &Waveform) -> Result<Waveform> {
        let spec = stft(noisy, &SegmentalConfig::standard())?;
        apply_mask_and_reconstruct(&spec, &Array2::ones(spec.bins().dim()), noisy.len())
    }
}

/// Magnitude-ratio mask `|S_s| / (|S_s| + |S_n| + eps)` built from the known
/// clean speech and scaled noise of a mixture.
pub fn oracle_mask_enhance(m: &EvalMixture) -> Result<Waveform> {
    const EPS: f64 = 1e-8;
    let framing = SegmentalConfig::standard();
    let s = stft(&m.clean, &framing)?;
    let n = stft(&m.noise, &framing)?;
    let x = stft(&m.noisy, &framing)?;
    let mut mask = Array2::zeros(x.bins().dim());
    ndarray::Zip::from(&mut mask)
        .and(s.bins())
        .and(n.bins())
        .for_each(|g, cs, cn| *g = cs.norm() / (cs.norm() + cn.norm() + EPS));
    apply_mask_and_reconstruct(&x, &mask, m.noisy.len())
}

/// Scores of a single evaluation mixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureScore {
    pub index: usize,
    pub snr_db: f64,
    pub input_sisdr: f64,
    pub output_sisdr: f64,
}

impl MixtureScore {
    pub fn improvement(&self) -> f64 {
        self.output_sisdr - self.input_sisdr
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub speaker_id: String,
    pub config: String,
    pub hidden_dim: usize,
    pub mixtures: Vec<MixtureScore>,
}

impl EvalResult {
    pub fn improvements(&self) -> Vec<f64> {
        self.mixtures.iter().map(MixtureScore::improvement).collect()
    }

    pub fn mean_improvement(&self) -> f64 {
        let v = self.improvements();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn summary(&self) -> Summary {
        summarize(&self.improvements()).expect("results hold at least one mixture")
    }
}

/// What to evaluate on and how to label the result.
#[derive(Clone, Debug)]
pub struct EvalSpec {
    pub num_mixtures: usize,
    pub mix: MixSpec,
    pub seed: u64,
    pub speaker_id: String,
    pub config: String,
    pub hidden_dim: usize,
}

impl EvalSpec {
    pub fn new(num_mixtures: usize, seed: u64) -> Self {
        EvalSpec {
            num_mixtures,
            mix: MixSpec::default(),
            seed,
            speaker_id: String::new(),
            config: String::new(),
            hidden_dim: 0,
        }
    }
}

/// Test mixture `index` for a given evaluation seed.
pub fn eval_mixture(speech: &Corpus, noise: &Corpus, mix: &MixSpec, seed: u64, index: usize) -> Result<EvalMixture> {
    ExampleStream::new(mix.clone(), derive_seed(seed, &[EVAL_STREAM]))?.eval_mixture(speech, noise, index as u64)
}

/// Scores `estimate` on `spec.num_mixtures` mixtures of `speech` and `noise`.
/// Mixtures are scored in parallel and collected in index order.
pub fn evaluate_with<F>(speech: &Corpus, noise: &Corpus, spec: &EvalSpec, estimate: F) -> Result<EvalResult>
where
    F: Fn(&EvalMixture) -> Result<Waveform> + Sync,
{
    if spec.num_mixtures == 0 {
        return Err(Error::invalid("num_mixtures must be positive"));
    }
    if !speech.role().is_speech() || noise.role().is_speech() {
        return Err(Error::config("evaluation needs a speech corpus and a noise corpus"));
    }
    let stream = ExampleStream::new(spec.mix.clone(), derive_seed(spec.seed, &[EVAL_STREAM]))?;
    let mixtures = (0..spec.num_mixtures)
        .into_par_iter()
        .map(|i| {
            let m = stream.eval_mixture(speech, noise, i as u64)?;
            let y = estimate(&m)?;
            Ok(MixtureScore {
                index: i,
                snr_db: m.snr_db,
                input_sisdr: si_sdr(&m.clean, &m.noisy)?,
                output_sisdr: si_sdr(&m.clean, &y)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult {
        speaker_id: spec.speaker_id.clone(),
        config: spec.config.clone(),
        hidden_dim: spec.hidden_dim,
        mixtures,
    })
}

pub fn evaluate<E: Enhancer + ?Sized>(
    enhancer: &E,
    speech: &Corpus,
    noise: &Corpus,
    spec: &EvalSpec,
) -> Result<EvalResult> {
    evaluate_with(speech, noise, spec, |m| enhancer.enhance(&m.noisy))
}

/// Fails with a configuration error naming every clip id that appears both
/// in a training corpus and an evaluation corpus.
pub fn check_disjoint(train: &[&Corpus], eval: &[&Corpus]) -> Result<()> {
    let seen: BTreeSet<&str> = train.iter().flat_map(|c| c.clip_ids()).collect();
    let overlap: BTreeSet<&str> = eval
        .iter()
        .flat_map(|c| c.clip_ids())
        .filter(|id| seen.contains(id))
        .collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(Error::config(format!(
            "evaluation clips overlap training clips: {}",
            overlap.into_iter().collect::<Vec<_>>().join(", ")
        )))
    }
}

/// Aggregate over one (configuration, model size) group.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub config: String,
    pub hidden_dim: usize,
    /// Statistics of the per-speaker mean improvements.
    pub per_speaker: Summary,
    /// Statistics of all per-mixture improvements pooled together.
    pub pooled: Summary,
}

/// Groups results by configuration and model size, in order of first
/// appearance.
pub fn aggregate_suite(results: &[EvalResult]) -> Result<Vec<AggregateRow>> {
    if results.is_empty() {
        return Err(Error::invalid("no results to aggregate"));
    }
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in results {
        let k = (r.config.clone(), r.hidden_dim);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(config, hidden_dim)| {
            let group: Vec<&EvalResult> = results
                .iter()
                .filter(|r| r.config == config && r.hidden_dim == hidden_dim)
                .collect();
            let means: Vec<f64> = group.iter().map(|r| r.mean_improvement()).collect();
            let pooled: Vec<f64> = group.iter().flat_map(|r| r.improvements()).collect();
            Ok(AggregateRow {
                per_speaker: summarize(&means)?,
                pooled: summarize(&pooled)?,
                config,
                hidden_dim,
            })
        })
        .collect()
}
