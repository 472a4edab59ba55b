//! Trains a frame-level SNR predictor on several speakers and compares it with
//! the best constant predictor on an unseen speaker.
//!
//! cargo run --release --example snr_predictor -- [steps]

use pse::data::{generate_synthetic_corpus, Corpus, CorpusRole, MixSpec};
use pse::neural::GruConfig;
use pse::training::{train_snr_predictor, validate_snr_predictor, TrainConfig, TrainMode};

fn main() -> pse::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let parts = (3..7)
        .map(|i| generate_synthetic_corpus(CorpusRole::GeneralistSpeech, 6, 48_000, Some(i), 11))
        .collect::<pse::Result<Vec<_>>>()?;
    let generalist = Corpus::merge(CorpusRole::GeneralistSpeech, parts.iter())?;
    let (noise, held_noise) =
        generate_synthetic_corpus(CorpusRole::TrainingNoise, 12, 48_000, None, 13)?.split_holdout(0.25)?;
    let unseen = generate_synthetic_corpus(CorpusRole::GeneralistSpeech, 4, 48_000, Some(9), 14)?;

    let mut config = TrainConfig::new(TrainMode::SnrPredictor, GruConfig::snr_predictor(32, 2), 5);
    config.steps = steps;
    config.batch_size = 8;
    let out = train_snr_predictor(&config, &generalist, &noise)?;
    let baseline = out.frame_target_means.expect("predictor runs record target means");
    let v = validate_snr_predictor(&out.params, &unseen, &held_noise, &MixSpec::default(), 32, 1, &baseline)?;
    let n = out.report.steps();
    println!(
        "training loss {:.1} -> {:.1} over {n} steps ({:.0}s)",
        out.report.loss_trace[0],
        out.report.mean_loss(n.saturating_sub(50)..n).unwrap_or(f64::NAN),
        out.report.wall_clock_secs
    );
    println!(
        "held-out MSE {:.2} dB^2 vs best constant {:.2} dB^2 (ratio {:.3})",
        v.mse,
        v.baseline_mse,
        v.ratio()
    );
    Ok(())
}
