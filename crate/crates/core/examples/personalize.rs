//! Personalizes an enhancer to one speaker from noisy recordings only, with
//! and without data purification, and scores both on held-out mixtures.
//!
//! cargo run --release --example personalize -- [steps]

use pse::data::{generate_synthetic_corpus, Corpus, CorpusRole};
use pse::evaluation::{evaluate, evaluate_with, oracle_mask_enhance, EvalSpec, IdentityEnhancer};
use pse::neural::GruConfig;
use pse::training::{initial_params, train_pse_weighted, train_snr_predictor, TrainConfig, TrainMode, Weighting};

fn main() -> pse::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let parts = (3..7)
        .map(|i| generate_synthetic_corpus(CorpusRole::GeneralistSpeech, 6, 48_000, Some(i), 11))
        .collect::<pse::Result<Vec<_>>>()?;
    let generalist = Corpus::merge(CorpusRole::GeneralistSpeech, parts.iter())?;
    let premix = generate_synthetic_corpus(CorpusRole::PremixtureNoise, 8, 48_000, None, 12)?;
    let (noise, eval_noise) =
        generate_synthetic_corpus(CorpusRole::TrainingNoise, 12, 48_000, None, 13)?.split_holdout(0.25)?;
    let (train, test) =
        generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 12, 48_000, Some(0), 21)?.split_holdout(0.25)?;

    let mut pc = TrainConfig::new(TrainMode::SnrPredictor, GruConfig::snr_predictor(32, 2), 1);
    pc.steps = 2 * steps;
    pc.batch_size = 8;
    let predictor = train_snr_predictor(&pc, &generalist, &noise)?.params;

    let mut config = TrainConfig::new(TrainMode::Pse, GruConfig::mask_estimator(32), 2);
    config.steps = steps;
    config.batch_size = 8;
    let init = initial_params(&config)?;
    let spec = EvalSpec::new(16, 3);

    let noisy = evaluate(&IdentityEnhancer, &test, &eval_noise, &spec)?;
    println!("unprocessed      SI-SDRi {:>6.2} dB", noisy.mean_improvement());
    for (label, weighting) in [("PSE", Weighting::TimeDomain), ("PSE+DP", Weighting::Predictor(&predictor))] {
        let out = train_pse_weighted(&config, &train, &premix, &noise, init.clone(), weighting)?;
        let result = evaluate(&out.params, &test, &eval_noise, &spec)?;
        println!("{label:<16} SI-SDRi {:>6.2} dB", result.mean_improvement());
    }
    let ceiling = evaluate_with(&test, &eval_noise, &spec, oracle_mask_enhance)?;
    println!("oracle ratio mask SI-SDRi {:>5.2} dB", ceiling.mean_improvement());
    Ok(())
}
