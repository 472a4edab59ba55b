//! Generates a small synthetic speaker corpus and a noise corpus, writes them
//! as 16-bit WAV files, and reads one back.
//!
//! cargo run --release --example synth_corpus -- [out_dir]

use std::path::PathBuf;

use pse::data::{generate_synthetic_corpus, load_wav, save_wav, CorpusRole};

fn main() -> pse::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pse-synth-corpus"));
    std::fs::create_dir_all(&out).map_err(|e| pse::Error::io(&out, e))?;

    let speaker = generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 4, 32_000, Some(2), 7)?;
    let noise = generate_synthetic_corpus(CorpusRole::PremixtureNoise, 2, 32_000, None, 7)?;
    for clip in speaker.clips().iter().chain(noise.clips()) {
        let path = out.join(format!("{}.wav", clip.id));
        save_wav(&path, &clip.wave)?;
        let back = load_wav(&path)?;
        let worst = clip
            .wave
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        println!(
            "{:<14} rms {:.4}  peak {:.4}  max 16-bit error {:.1e}",
            clip.id,
            (clip.wave.energy() / clip.wave.len() as f64).sqrt(),
            clip.wave.peak(),
            worst
        );
    }
    println!("wrote {} files to {}", speaker.len() + noise.len(), out.display());
    Ok(())
}
