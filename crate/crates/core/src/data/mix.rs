//! SNR-controlled mixing and the online example streams.
//!
//! Every draw is a pure function of `(corpora, seed, draw index)`. Each
//! random component (speech clip, noise clip, SNR) has its own RNG stream, so
//! two configurations that share a seed see identical speech, noise, and
//! mixture SNRs wherever they overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{sample_segment, Corpus};
use crate::dsp::{SegmentalConfig, Waveform};
use crate::error::{Error, Result};
use crate::metrics::{segmental_snr, SegSnrVector};

/// Closed SNR interval in dB.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrRange {
    pub low: f64,
    pub high: f64,
}

impl SnrRange {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !low.is_finite() || !high.is_finite() || low > high {
            return Err(Error::invalid(format!("invalid SNR range [{low}, {high}]")));
        }
        Ok(SnrRange { low, high })
    }

    pub fn fixed(db: f64) -> Self {
        SnrRange { low: db, high: db }
    }

    pub fn contains(&self, db: f64) -> bool {
        db >= self.low && db <= self.high
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.low == self.high {
            self.low
        } else {
            rng.gen_range(self.low..=self.high)
        }
    }
}

/// Online augmentation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct MixSpec {
    pub segment_length: usize,
    pub premix_snr: SnrRange,
    pub mix_snr: SnrRange,
}

impl Default for MixSpec {
    fn default() -> Self {
        MixSpec {
            segment_length: 16_000,
            premix_snr: SnrRange { low: 0.0, high: 15.0 },
            mix_snr: SnrRange { low: -5.0, high: 5.0 },
        }
    }
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if self.segment_length == 0 {
            return Err(Error::invalid("segment length must be positive"));
        }
        SnrRange::new(self.premix_snr.low, self.premix_snr.high)?;
        SnrRange::new(self.mix_snr.low, self.mix_snr.high)?;
        Ok(())
    }
}

/// Returns `g * noise` with `g` chosen so that `signal` sits `target_snr` dB
/// above the scaled noise.
pub fn scale_to_snr(signal: &Waveform, noise: &Waveform, target_snr: f64) -> Result<Waveform> {
    signal.check_compatible(noise)?;
    if !target_snr.is_finite() {
        return Err(Error::invalid("target SNR must be finite"));
    }
    let es = signal.energy();
    let en = noise.energy();
    if es <= 0.0 {
        return Err(Error::invalid("reference signal has zero energy"));
    }
    if en <= 0.0 {
        return Err(Error::invalid("noise has zero energy"));
    }
    let gain = (es / (en * 10f64.powf(target_snr / 10.0))).sqrt();
    noise.scaled(gain)
}

/// A mixture together with the exact noise that went into it.
#[derive(Clone, Debug)]
pub struct Mixed {
    pub mixture: Waveform,
    pub scaled_noise: Waveform,
}

fn mix_at_snr(base: &Waveform, noise: &Waveform, snr: f64) -> Result<Mixed> {
    let scaled_noise = scale_to_snr(base, noise, snr)?;
    let mixture = base.add(&scaled_noise)?;
    Ok(Mixed {
        mixture,
        scaled_noise,
    })
}

/// `s + m'` where `m'` is `m` scaled to the premixture SNR.
pub fn make_premixture(clean: &Waveform, noise: &Waveform, snr: f64) -> Result<Mixed> {
    mix_at_snr(clean, noise, snr)
}

/// `base + n'` where `n'` is `n` scaled against `base`.
pub fn make_mixture(base: &Waveform, noise: &Waveform, snr: f64) -> Result<Mixed> {
    mix_at_snr(base, noise, snr)
}

/// The only view of an example the training losses get: an input and a target.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    input: Waveform,
    target: Waveform,
}

impl TrainingPair {
    pub fn new(input: Waveform, target: Waveform) -> Result<Self> {
        input.check_compatible(&target)?;
        Ok(TrainingPair { input, target })
    }

    pub fn input(&self) -> &Waveform {
        &self.input
    }

    pub fn target(&self) -> &Waveform {
        &self.target
    }
}

/// A self-supervised example: `input = premixture + n'`, `target = premixture`.
///
/// The clean utterance behind the premixture is kept for measurement only;
/// [`PseExample::into_pair`] drops it before anything reaches a loss.
#[derive(Clone, Debug)]
pub struct PseExample {
    pair: TrainingPair,
    injected_noise: Waveform,
    hidden_clean: Waveform,
}

impl PseExample {
    /// Assembles an example from its parts; all three must share a length.
    pub fn new(pair: TrainingPair, injected_noise: Waveform, hidden_clean: Waveform) -> Result<Self> {
        pair.input.check_compatible(&injected_noise)?;
        pair.input.check_compatible(&hidden_clean)?;
        Ok(PseExample {
            pair,
            injected_noise,
            hidden_clean,
        })
    }

    pub fn pair(&self) -> &TrainingPair {
        &self.pair
    }

    pub fn input(&self) -> &Waveform {
        &self.pair.input
    }

    pub fn target(&self) -> &Waveform {
        &self.pair.target
    }

    pub fn injected_noise(&self) -> &Waveform {
        &self.injected_noise
    }

    /// Evaluation-only access to the clean utterance.
    pub fn hidden_clean_for_evaluation(&self) -> &Waveform {
        &self.hidden_clean
    }

    pub fn into_pair(self) -> TrainingPair {
        self.pair
    }
}

/// A mixture and its clamped per-frame SNR labels.
#[derive(Clone, Debug)]
pub struct PredictorExample {
    pub input: Waveform,
    pub snr_labels: SegSnrVector,
}

/// A test mixture with all of its parts.
#[derive(Clone, Debug)]
pub struct EvalMixture {
    pub clean: Waveform,
    pub noise: Waveform,
    pub noisy: Waveform,
    pub snr_db: f64,
}

#[derive(Clone, Copy)]
enum Stream {
    Speech = 1,
    PremixNoise = 2,
    TrainNoise = 3,
    PremixSnr = 4,
    MixSnr = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with any number of words into a new seed.
pub fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix(seed), |acc, &w| splitmix(acc ^ splitmix(w)))
}

/// Seeded, index-addressable generator of training and test examples.
#[derive(Clone, Debug)]
pub struct ExampleStream {
    spec: MixSpec,
    seed: u64,
}

impl ExampleStream {
    pub fn new(spec: MixSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(ExampleStream { spec, seed })
    }

    pub fn spec(&self) -> &MixSpec {
        &self.spec
    }

    fn rng(&self, draw: u64, stream: Stream) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[draw, stream as u64]))
    }

    fn segment(&self, corpus: &Corpus, draw: u64, stream: Stream) -> Result<Waveform> {
        sample_segment(corpus, &mut self.rng(draw, stream), self.spec.segment_length)
    }

    fn mix_snr(&self, draw: u64) -> f64 {
        self.spec.mix_snr.draw(&mut self.rng(draw, Stream::MixSnr))
    }

    /// Fully supervised pair: `(s + n', s)`.
    pub fn se_pair(&self, speech: &Corpus, noise: &Corpus, draw: u64) -> Result<TrainingPair> {
        let s = self.segment(speech, draw, Stream::Speech)?;
        let n = self.segment(noise, draw, Stream::TrainNoise)?;
        let mixed = make_mixture(&s, &n, self.mix_snr(draw))?;
        TrainingPair::new(mixed.mixture, s)
    }

    /// Self-supervised example built from a speaker's utterance, a premixture
    /// noise, and a training noise.
    pub fn pse_example(
        &self,
        speaker: &Corpus,
        premix_noise: &Corpus,
        noise: &Corpus,
        draw: u64,
    ) -> Result<PseExample> {
        let s = self.segment(speaker, draw, Stream::Speech)?;
        let m = self.segment(premix_noise, draw, Stream::PremixNoise)?;
        let n = self.segment(noise, draw, Stream::TrainNoise)?;
        let premix_snr = self.spec.premix_snr.draw(&mut self.rng(draw, Stream::PremixSnr));
        let premix = make_premixture(&s, &m, premix_snr)?;
        let mixed = make_mixture(&premix.mixture, &n, self.mix_snr(draw))?;
        Ok(PseExample {
            pair: TrainingPair::new(mixed.mixture, premix.mixture)?,
            injected_noise: mixed.scaled_noise,
            hidden_clean: s,
        })
    }

    /// Mixture `s + n'` labelled with `SegSNR(s, s + n')`.
    pub fn predictor_example(
        &self,
        speech: &Corpus,
        noise: &Corpus,
        draw: u64,
        framing: &SegmentalConfig,
    ) -> Result<PredictorExample> {
        let pair = self.se_pair(speech, noise, draw)?;
        let snr_labels = segmental_snr(pair.target(), pair.input(), framing)?;
        Ok(PredictorExample {
            input: pair.input,
            snr_labels,
        })
    }

    /// Test mixture `s + n'` with the parts retained.
    pub fn eval_mixture(&self, speech: &Corpus, noise: &Corpus, draw: u64) -> Result<EvalMixture> {
        let clean = self.segment(speech, draw, Stream::Speech)?;
        let n = self.segment(noise, draw, Stream::TrainNoise)?;
        let snr_db = self.mix_snr(draw);
        let mixed = make_mixture(&clean, &n, snr_db)?;
        Ok(EvalMixture {
            clean,
            noise: mixed.scaled_noise,
            noisy: mixed.mixture,
            snr_db,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::{Clip, CorpusRole};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn measured_snr(signal: &Waveform, noise: &Waveform) -> f64 {
        10.0 * (signal.energy() / noise.energy()).log10()
    }

    fn corpus(role: CorpusRole, id: Option<&str>, seed: u64) -> Corpus {
        let clips = (0..3)
            .map(|k| Clip {
                id: format!("{seed}-{k}"),
                wave: random_wave(20000, seed * 10 + k),
            })
            .collect();
        Corpus::new(role, id.map(String::from), clips).unwrap()
    }

    #[test]
    fn scale_examples() {
        let s = Waveform::new(vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let n = Waveform::new(vec![1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(scale_to_snr(&s, &n, 0.0).unwrap(), n);
        let g = scale_to_snr(&s, &n, 20.0).unwrap();
        for (a, b) in g.samples().iter().zip(n.samples()) {
            assert!((a - 0.1 * b).abs() < 1e-15);
        }
        let s = random_wave(16000, 1);
        let n = random_wave(16000, 2);
        let out = scale_to_snr(&s, &n, 7.0).unwrap();
        assert!((measured_snr(&s, &out) - 7.0).abs() < 1e-9);
        assert!(scale_to_snr(&s, &Waveform::zeros(16000).unwrap(), 0.0).is_err());
        assert!(scale_to_snr(&Waveform::zeros(16000).unwrap(), &n, 0.0).is_err());
    }

    #[test]
    fn premixture_is_exact_sum() {
        let s = random_wave(16000, 3);
        let m = random_wave(16000, 4);
        assert!(make_premixture(&s, &Waveform::zeros(16000).unwrap(), 5.0).is_err());
        let p = make_premixture(&s, &m, 30.0).unwrap();
        let diff = p.mixture.sub(&s).unwrap();
        // exact up to the rounding of one addition and one subtraction
        for (a, b) in diff.samples().iter().zip(p.scaled_noise.samples()) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON);
        }
        let rel = (diff.energy() / s.energy()).sqrt();
        assert!((rel - 10f64.powf(-30.0 / 20.0)).abs() < 1e-12);
    }

    #[test]
    fn pse_example_composes_both_noises() {
        let stream = ExampleStream::new(MixSpec::default(), 17).unwrap();
        let spk = corpus(CorpusRole::SpeakerSpeech, Some("k"), 1);
        let m = corpus(CorpusRole::PremixtureNoise, None, 2);
        let n = corpus(CorpusRole::TrainingNoise, None, 3);
        for draw in 0..10 {
            let ex = stream.pse_example(&spk, &m, &n, draw).unwrap();
            let injected = ex.input().sub(ex.target()).unwrap();
            for (a, b) in injected.samples().iter().zip(ex.injected_noise().samples()) {
                assert!((a - b).abs() < 1e-15);
            }
            let snr = measured_snr(ex.target(), ex.injected_noise());
            assert!((-5.0 - 1e-9..=5.0 + 1e-9).contains(&snr));
            let premix_noise = ex.target().sub(ex.hidden_clean_for_evaluation()).unwrap();
            let psnr = measured_snr(ex.hidden_clean_for_evaluation(), &premix_noise);
            assert!((-1e-9..=15.0 + 1e-9).contains(&psnr));
        }
    }

    #[test]
    fn streams_are_reproducible_and_matched() {
        let spk = corpus(CorpusRole::SpeakerSpeech, Some("k"), 1);
        let m = corpus(CorpusRole::PremixtureNoise, None, 2);
        let n = corpus(CorpusRole::TrainingNoise, None, 3);
        let a = ExampleStream::new(MixSpec::default(), 5).unwrap();
        let b = ExampleStream::new(MixSpec::default(), 5).unwrap();
        let x = a.pse_example(&spk, &m, &n, 3).unwrap();
        let y = b.pse_example(&spk, &m, &n, 3).unwrap();
        assert_eq!(x.input(), y.input());
        assert_eq!(x.target(), y.target());
        // SE and PSE with the same seed draw the same utterance.
        let se = a.se_pair(&spk, &n, 3).unwrap();
        assert_eq!(se.target(), x.hidden_clean_for_evaluation());
    }

    proptest! {
        #[test]
        fn scaled_noise_hits_target(seed in 0u64..500, snr in -20.0f64..30.0) {
            let s = random_wave(512, seed);
            let n = random_wave(512, seed + 1000);
            let out = scale_to_snr(&s, &n, snr).unwrap();
            prop_assert!((measured_snr(&s, &out) - snr).abs() < 1e-9);
        }
    }
}
