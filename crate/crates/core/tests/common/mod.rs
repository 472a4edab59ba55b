//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use pse::data::{generate_synthetic_corpus, Corpus, CorpusRole};
use pse::dsp::Waveform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLIP_LENGTH: usize = 48_000;

/// Corpora for predictor training and personalization experiments.
pub struct DeskCorpora {
    pub generalist: Corpus,
    pub premix_noise: Corpus,
    pub train_noise: Corpus,
    pub eval_noise: Corpus,
    /// Speech from a speaker outside both the generalist pool and the test speakers.
    pub unseen_speech: Corpus,
}

pub fn desk_corpora() -> DeskCorpora {
    let parts: Vec<Corpus> = (3..8)
        .map(|i| generate_synthetic_corpus(CorpusRole::GeneralistSpeech, 8, CLIP_LENGTH, Some(i), 11).unwrap())
        .collect();
    let generalist = Corpus::merge(CorpusRole::GeneralistSpeech, parts.iter()).unwrap();
    let premix_noise = generate_synthetic_corpus(CorpusRole::PremixtureNoise, 12, CLIP_LENGTH, None, 12).unwrap();
    let all_noise = generate_synthetic_corpus(CorpusRole::TrainingNoise, 16, CLIP_LENGTH, None, 13).unwrap();
    let (train_noise, eval_noise) = all_noise.split_holdout(0.25).unwrap();
    let unseen_speech = generate_synthetic_corpus(CorpusRole::GeneralistSpeech, 8, CLIP_LENGTH, Some(9), 14).unwrap();
    DeskCorpora {
        generalist,
        premix_noise,
        train_noise,
        eval_noise,
        unseen_speech,
    }
}

/// A test speaker's recordings split into training and held-out test clips.
pub fn speaker_split(index: u32) -> (Corpus, Corpus) {
    generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 12, CLIP_LENGTH, Some(index), 21)
        .unwrap()
        .split_holdout(0.25)
        .unwrap()
}

/// Small corpora for fast loop tests.
pub fn tiny_corpora() -> (Corpus, Corpus, Corpus) {
    let speech = generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 4, 32_000, Some(0), 5).unwrap();
    let premix = generate_synthetic_corpus(CorpusRole::PremixtureNoise, 4, 32_000, None, 6).unwrap();
    let noise = generate_synthetic_corpus(CorpusRole::TrainingNoise, 4, 32_000, None, 7).unwrap();
    (speech, premix, noise)
}

pub fn random_wave(len: usize, seed: u64, amp: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| rng.gen_range(-amp..amp)).collect()).unwrap()
}

pub fn args(parts: &[&str]) -> Vec<OsString> {
    std::iter::once("pse")
        .chain(parts.iter().copied())
        .map(OsString::from)
        .collect()
}

pub fn run_cli(parts: &[&str]) -> i32 {
    pse::cli::run(args(parts))
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("temp paths are UTF-8")
}

/// Writes a two-speaker synthetic dataset under `dir` and returns the path of
/// a run config with small training settings appended.
pub fn cli_dataset(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let code = run_cli(&[
        "synth-data",
        "--speakers",
        "2",
        "--clips-per-speaker",
        "5",
        "--seed",
        "3",
        "--clip-length",
        "32000",
        "--noise-clips",
        "6",
        "--out",
        path_str(&data),
    ]);
    assert_eq!(code, 0, "synth-data failed");
    let cfg = data.join("pse.cfg");
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str(
        "steps = 12\nbatch_size = 2\nhidden_dim = 8\npredictor_hidden_dim = 8\nnum_mixtures = 3\n",
    );
    fs::write(&cfg, text).unwrap();
    cfg
}
