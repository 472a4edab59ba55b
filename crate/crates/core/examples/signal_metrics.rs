//! STFT analysis and resynthesis of a noisy utterance, with the frame-level
//! and utterance-level quality measures.
//!
//! cargo run --release --example signal_metrics

use pse::data::{generate_synthetic_corpus, make_mixture, CorpusRole};
use pse::dsp::{istft, stft, SegmentalConfig};
use pse::metrics::{logistic_weights, segmental_mse, segmental_snr, si_sdr};

fn main() -> pse::Result<()> {
    let framing = SegmentalConfig::standard();
    let speech = generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 1, 16_000, Some(0), 1)?;
    let noise = generate_synthetic_corpus(CorpusRole::TrainingNoise, 1, 16_000, None, 1)?;
    let clean = &speech.clips()[0].wave;
    let mixed = make_mixture(clean, &noise.clips()[0].wave, 5.0)?;

    let spec = stft(&mixed.mixture, &framing)?;
    let back = istft(&spec, mixed.mixture.len())?;
    println!("{} frames x {} bins", spec.frames(), spec.num_bins());
    println!("resynthesis SI-SDR {:.1} dB", si_sdr(&mixed.mixture, &back)?);

    let snr = segmental_snr(clean, &mixed.mixture, &framing)?;
    let weights = logistic_weights(snr.values())?;
    for (j, (a, p)) in snr.values().iter().zip(&weights.p).enumerate().step_by(8) {
        println!("frame {j:>2}: SegSNR {a:>6.1} dB  weight {p:.3}");
    }
    println!("mixture SI-SDR {:.2} dB", si_sdr(clean, &mixed.mixture)?);
    println!(
        "segmental MSE uniform {:.3e}, SNR-weighted {:.3e}",
        segmental_mse(clean, &mixed.mixture, &vec![1.0; snr.len()], &framing)?,
        segmental_mse(clean, &mixed.mixture, &weights.p, &framing)?
    );
    Ok(())
}
