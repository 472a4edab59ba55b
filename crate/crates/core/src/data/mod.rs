//! Corpora, online mixture synthesis, and audio file I/O.

mod corpus;
mod manifest;
mod mix;
mod synth;
mod wav;

pub use corpus::{sample_segment, Clip, Corpus, CorpusRole};
pub use manifest::{
    format_manifest, load_manifest_corpus, manifest_clip_paths, parse_manifest, ManifestEntry,
};
pub use mix::{
    derive_seed, make_mixture, make_premixture, scale_to_snr, EvalMixture, ExampleStream, MixSpec,
    Mixed, PredictorExample, PseExample, SnrRange, TrainingPair,
};
pub use synth::{generate_synthetic_corpus, SpeakerProfile};
pub use wav::{decode_wav, encode_wav, load_wav, save_wav};
