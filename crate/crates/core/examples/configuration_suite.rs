//! Runs every training configuration for two speakers at a tiny step budget
//! and prints the summary table.
//!
//! cargo run --release --example configuration_suite -- [out_dir]

use std::path::PathBuf;

use pse::data::{generate_synthetic_corpus, CorpusRole, MixSpec};
use pse::neural::GruConfig;
use pse::training::{run_configuration_suite, SuiteCell, SuiteConfig, SUITE_MODES};

fn main() -> pse::Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pse-suite"));
    let mut cells = Vec::new();
    for speaker in 0..2u32 {
        let (train, eval) =
            generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 6, 32_000, Some(speaker), 4)?.split_holdout(0.34)?;
        let other = 1 - speaker;
        cells.push(SuiteCell {
            speaker_id: train.speaker_id().unwrap_or_default().to_string(),
            generalist: generate_synthetic_corpus(CorpusRole::GeneralistSpeech, 4, 32_000, Some(other + 5), 4)?,
            generalist_key: format!("without-spk{speaker:02}"),
            train,
            eval,
        });
    }
    let (train_noise, eval_noise) =
        generate_synthetic_corpus(CorpusRole::TrainingNoise, 8, 32_000, None, 4)?.split_holdout(0.25)?;
    let config = SuiteConfig {
        cells,
        premix_noise: generate_synthetic_corpus(CorpusRole::PremixtureNoise, 4, 32_000, None, 4)?,
        train_noise,
        eval_noise,
        hidden_dims: vec![8, 16],
        modes: SUITE_MODES.to_vec(),
        steps: 20,
        batch_size: 4,
        lr: 1e-3,
        mix: MixSpec::default(),
        predictor: GruConfig::snr_predictor(16, 2),
        predictor_steps: 20,
        num_mixtures: 4,
        seed: 1,
        out_dir,
        resume: false,
        jobs: 1,
    };
    let report = run_configuration_suite(&config)?;
    print!("{}", report.summary);
    println!("per-mixture results in {}", report.csv_path.display());
    Ok(())
}
