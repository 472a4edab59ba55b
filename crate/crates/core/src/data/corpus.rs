use rand::Rng;

use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CorpusRole {
    /// Many training speakers; the generalist pool.
    GeneralistSpeech,
    /// Utterances of one test-time speaker.
    SpeakerSpeech,
    /// Noise that corrupts the speaker's own recordings.
    PremixtureNoise,
    /// Noise injected during training (and, held out, during evaluation).
    TrainingNoise,
}

impl CorpusRole {
    pub fn is_speech(self) -> bool {
        matches!(self, CorpusRole::GeneralistSpeech | CorpusRole::SpeakerSpeech)
    }
}

#[derive(Clone, Debug)]
pub struct Clip {
    pub id: String,
    pub wave: Waveform,
}

/// An immutable collection of 16 kHz clips with a role.
#[derive(Clone, Debug)]
pub struct Corpus {
    role: CorpusRole,
    speaker_id: Option<String>,
    clips: Vec<Clip>,
}

impl Corpus {
    pub fn new(role: CorpusRole, speaker_id: Option<String>, clips: Vec<Clip>) -> Result<Self> {
        if let Some(c) = clips.iter().find(|c| c.wave.sample_rate() != SAMPLE_RATE) {
            return Err(Error::UnsupportedFormat(format!(
                "clip {} is sampled at {} Hz, expected {SAMPLE_RATE}",
                c.id,
                c.wave.sample_rate()
            )));
        }
        if role == CorpusRole::SpeakerSpeech && speaker_id.is_none() {
            return Err(Error::invalid("a speaker corpus needs a speaker id"));
        }
        Ok(Corpus {
            role,
            speaker_id,
            clips,
        })
    }

    pub fn role(&self) -> CorpusRole {
        self.role
    }

    pub fn speaker_id(&self) -> Option<&str> {
        self.speaker_id.as_deref()
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn clip_ids(&self) -> impl Iterator<Item = &str> {
        self.clips.iter().map(|c| c.id.as_str())
    }

    /// Re-labels the corpus, e.g. to use a speaker's clips in a generalist pool.
    pub fn with_role(mut self, role: CorpusRole) -> Result<Self> {
        if role == CorpusRole::SpeakerSpeech && self.speaker_id.is_none() {
            return Err(Error::invalid("a speaker corpus needs a speaker id"));
        }
        self.role = role;
        Ok(self)
    }

    /// Concatenates the clips of several corpora under a new role.
    pub fn merge<'a>(role: CorpusRole, parts: impl IntoIterator<Item = &'a Corpus>) -> Result<Self> {
        let clips = parts
            .into_iter()
            .flat_map(|c| c.clips.iter().cloned())
            .collect();
        Corpus::new(role, None, clips)
    }

    /// Splits off the last `fraction` of clips (at least one, never all of
    /// them) as a held-out corpus.
    pub fn split_holdout(&self, fraction: f64) -> Result<(Corpus, Corpus)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::invalid(format!("holdout fraction {fraction} not in [0, 1)")));
        }
        if self.clips.len() < 2 {
            return Err(Error::invalid(format!(
                "cannot hold out clips from a corpus with {} clip(s)",
                self.clips.len()
            )));
        }
        let held = ((self.clips.len() as f64 * fraction).ceil() as usize).clamp(1, self.clips.len() - 1);
        let cut = self.clips.len() - held;
        let part = |clips: &[Clip]| Corpus {
            role: self.role,
            speaker_id: self.speaker_id.clone(),
            clips: clips.to_vec(),
        };
        Ok((part(&self.clips[..cut]), part(&self.clips[cut..])))
    }
}

/// Draws a uniformly chosen clip and a uniformly chosen window of
/// `segment_length` samples from it. Short clips are tiled cyclically.
pub fn sample_segment<R: Rng + ?Sized>(
    corpus: &Corpus,
    rng: &mut R,
    segment_length: usize,
) -> Result<Waveform> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot sample from an empty corpus"));
    }
    if segment_length == 0 {
        return Err(Error::invalid("segment length must be positive"));
    }
    let clip = &corpus.clips[rng.gen_range(0..corpus.clips.len())];
    let src = clip.wave.samples();
    let repeats = segment_length.div_ceil(src.len());
    let span = repeats * src.len();
    let offset = rng.gen_range(0..=span - segment_length);
    let samples = (offset..offset + segment_length)
        .map(|i| src[i % src.len()])
        .collect();
    Waveform::new(samples)
}
