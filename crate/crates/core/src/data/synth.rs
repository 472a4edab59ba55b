//! Deterministic pseudo-speech and pseudo-noise corpora.
//!
//! Speech is a harmonic series on a per-speaker fundamental, shaped by
//! speaker-scaled formant resonances and a spectral tilt, cut into syllables
//! and words with silent gaps between them. Noise is a sequence of filtered
//! noise bursts and tonal events over a low floor; the two noise roles use the
//! same burst engine with different density and tilt.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{Clip, Corpus, CorpusRole};
use super::mix::derive_seed;
use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

const FS: f64 = SAMPLE_RATE as f64;

/// Reference vowel formants (F1, F2, F3) in Hz.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];

/// Voice parameters of one synthetic speaker.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerProfile {
    pub f0_hz: f64,
    pub formant_scale: f64,
    /// Harmonic amplitude roll-off exponent: amplitude ~ (f / 500 Hz)^-tilt.
    pub tilt: f64,
    /// Multiplier on syllable durations.
    pub tempo: f64,
}

impl SpeakerProfile {
    pub fn from_index(index: u32) -> Self {
        const F0: [f64; 8] = [105.0, 215.0, 150.0, 245.0, 125.0, 185.0, 95.0, 230.0];
        const FORMANT: [f64; 8] = [0.84, 1.22, 1.0, 1.3, 0.9, 1.12, 0.8, 1.18];
        const TILT: [f64; 8] = [1.5, 0.7, 1.1, 0.6, 1.35, 0.85, 1.6, 0.75];
        const TEMPO: [f64; 8] = [1.1, 0.85, 1.0, 0.9, 1.2, 0.95, 1.15, 0.8];
        let slot = (index % 8) as usize;
        // later cycles shift the voice slightly so every index is distinct
        let cycle = (index / 8) as f64;
        let shift = 1.0 + 0.045 * ((cycle * 2.3).sin());
        SpeakerProfile {
            f0_hz: F0[slot] * shift,
            formant_scale: FORMANT[slot] * (1.0 + 0.03 * (cycle * 1.7).cos() - 0.03),
            tilt: TILT[slot],
            tempo: TEMPO[slot] * shift,
        }
    }
}

/// Burst statistics of a noise family.
#[derive(Clone, Debug)]
struct NoiseFamily {
    burst_ms: (f64, f64),
    gap_ms: (f64, f64),
    floor_db: f64,
    tilt: (f64, f64),
    center_hz: (f64, f64),
    tonal_probability: f64,
}

impl NoiseFamily {
    fn for_role(role: CorpusRole) -> Self {
        match role {
            CorpusRole::PremixtureNoise => NoiseFamily {
                burst_ms: (80.0, 380.0),
                gap_ms: (120.0, 700.0),
                floor_db: -45.0,
                tilt: (-0.2, 0.6),
                center_hz: (300.0, 4000.0),
                tonal_probability: 0.25,
            },
            _ => NoiseFamily {
                burst_ms: (150.0, 900.0),
                gap_ms: (20.0, 300.0),
                floor_db: -24.0,
                tilt: (0.2, 0.85),
                center_hz: (200.0, 3500.0),
                tonal_probability: 0.2,
            },
        }
    }
}

/// Generates a corpus of `num_clips` clips of `clip_length` samples.
///
/// Speech roles require a speaker profile index; noise roles ignore it.
pub fn generate_synthetic_corpus(
    role: CorpusRole,
    num_clips: usize,
    clip_length: usize,
    speaker_profile: Option<u32>,
    seed: u64,
) -> Result<Corpus> {
    if num_clips == 0 {
        return Err(Error::invalid("num_clips must be positive"));
    }
    if clip_length < 1024 {
        return Err(Error::invalid("clip_length must be at least 1024 samples"));
    }
    let mut clips = Vec::with_capacity(num_clips);
    if role.is_speech() {
        let index = speaker_profile
            .ok_or_else(|| Error::invalid("speech corpora need a speaker profile"))?;
        let profile = SpeakerProfile::from_index(index);
        for c in 0..num_clips {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, index as u64, c as u64]));
            clips.push(Clip {
                id: format!("spk{index:02}_{c:03}"),
                wave: Waveform::new(speech_clip(&profile, clip_length, &mut rng))?,
            });
        }
        let speaker_id = format!("spk{index:02}");
        let role_id = (role == CorpusRole::SpeakerSpeech).then_some(speaker_id);
        Corpus::new(role, role_id, clips)
    } else {
        let family = NoiseFamily::for_role(role);
        let (prefix, tag) = match role {
            CorpusRole::PremixtureNoise => ("premix", 2),
            _ => ("noise", 3),
        };
        for c in 0..num_clips {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag, c as u64]));
            clips.push(Clip {
                id: format!("{prefix}_{c:03}"),
                wave: Waveform::new(noise_clip(&family, clip_length, &mut rng))?,
            });
        }
        Corpus::new(role, None, clips)
    }
}

fn ms(v: f64) -> usize {
    (v * FS / 1000.0) as usize
}

/// Raised-cosine attack/release envelope value at sample `i` of `len`.
fn envelope(i: usize, len: usize, attack: usize, release: usize) -> f64 {
    let rise = if i < attack {
        0.5 - 0.5 * (PI * i as f64 / attack as f64).cos()
    } else {
        1.0
    };
    let left = len - i;
    let fall = if left < release {
        0.5 - 0.5 * (PI * left as f64 / release as f64).cos()
    } else {
        1.0
    };
    rise * fall
}

fn resonance(f: f64, center: f64, bandwidth: f64) -> f64 {
    let d = (f - center) / bandwidth;
    1.0 / (1.0 + d * d)
}

fn speech_clip(profile: &SpeakerProfile, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let mut t = ms(rng.gen_range(40.0..200.0));
    while t < len {
        let syllables = rng.gen_range(1..=4);
        for _ in 0..syllables {
            if t >= len {
                break;
            }
            if rng.gen_bool(0.35) {
                let fric = ms(rng.gen_range(30.0..80.0)).min(len - t);
                fricative(&mut out[t..t + fric], profile, rng);
                t += fric;
                if t >= len {
                    break;
                }
            }
            let dur = ms(rng.gen_range(90.0..230.0) * profile.tempo).min(len - t);
            voiced(&mut out[t..t + dur], profile, rng);
            t += dur + ms(rng.gen_range(15.0..60.0));
        }
        t += if rng.gen_bool(0.4) {
            ms(rng.gen_range(150.0..420.0))
        } else {
            ms(rng.gen_range(40.0..110.0))
        };
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let gain = rng.gen_range(0.3..0.6) / peak;
        out.iter_mut().for_each(|v| *v *= gain);
    }
    out
}

fn voiced(buf: &mut [f64], profile: &SpeakerProfile, rng: &mut ChaCha8Rng) {
    let len = buf.len();
    if len < 16 {
        return;
    }
    let from = VOWELS[rng.gen_range(0..VOWELS.len())];
    let to = VOWELS[rng.gen_range(0..VOWELS.len())];
    let f0_start = profile.f0_hz * rng.gen_range(0.9..1.15);
    let f0_end = profile.f0_hz * rng.gen_range(0.85..1.1);
    let level = rng.gen_range(0.5..1.0);
    let harmonics = (7000.0 / (f0_start.min(f0_end) * 0.85)) as usize;
    let mut phase: Vec<f64> = (0..harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let attack = ms(15.0).min(len / 2);
    let release = ms(30.0).min(len / 2);
    const BLOCK: usize = 64;
    let mut amps = vec![0.0; harmonics];
    let mut start = 0;
    while start < len {
        let end = (start + BLOCK).min(len);
        let pos = start as f64 / len as f64;
        let f0 = f0_start + (f0_end - f0_start) * pos;
        let formants: Vec<f64> = (0..3)
            .map(|k| (from[k] + (to[k] - from[k]) * pos) * profile.formant_scale)
            .collect();
        for (h, a) in amps.iter_mut().enumerate() {
            let f = f0 * (h + 1) as f64;
            if f > 7500.0 {
                *a = 0.0;
                continue;
            }
            let shape: f64 = formants
                .iter()
                .enumerate()
                .map(|(k, &fc)| resonance(f, fc, 60.0 + 40.0 * k as f64) * [1.0, 0.6, 0.3][k])
                .sum();
            *a = shape * (f / 500.0).max(0.2).powf(-profile.tilt);
        }
        let step = 2.0 * PI * f0 / FS;
        for (i, slot) in buf[start..end].iter_mut().enumerate() {
            let mut v = 0.0;
            for (h, (a, p)) in amps.iter().zip(phase.iter()).enumerate() {
                if *a > 0.0 {
                    v += a * (p + step * (h + 1) as f64 * i as f64).sin();
                }
            }
            *slot += level * envelope(start + i, len, attack, release) * v;
        }
        for (h, p) in phase.iter_mut().enumerate() {
            *p = (*p + step * (h + 1) as f64 * (end - start) as f64) % (2.0 * PI);
        }
        start = end;
    }
}

/// RBJ band-pass biquad (constant 0 dB peak gain).
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn bandpass(center: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * center / FS;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Biquad {
            b: [alpha / a0, 0.0, -alpha / a0],
            a: [-2.0 * w0.cos() / a0, (1.0 - alpha) / a0],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn process(&mut self, v: f64) -> f64 {
        let out = self.b[0] * v + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [v, self.x[0]];
        self.y = [out, self.y[0]];
        out
    }
}

fn fricative(buf: &mut [f64], profile: &SpeakerProfile, rng: &mut ChaCha8Rng) {
    let len = buf.len();
    if len < 16 {
        return;
    }
    let center = (rng.gen_range(3500.0..5500.0) * profile.formant_scale).min(7200.0);
    let mut bp = Biquad::bandpass(center, 1.5);
    let level = rng.gen_range(0.08..0.2);
    let edge = len / 3;
    for (i, slot) in buf.iter_mut().enumerate() {
        let v = bp.process(rng.gen_range(-1.0..1.0));
        *slot += level * envelope(i, len, edge, edge) * v;
    }
}

/// Uniform white noise through `y[n] = x[n] + tilt * y[n-1]`, unit peak-ish.
fn tilted_noise(len: usize, tilt: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut y = 0.0;
    let gain = (1.0 - tilt * tilt).sqrt();
    (0..len)
        .map(|_| {
            y = rng.gen_range(-1.0..1.0) + tilt * y;
            gain * y
        })
        .collect()
}

fn noise_clip(family: &NoiseFamily, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let floor_gain = 10f64.powf(family.floor_db / 20.0);
    let floor_tilt = rng.gen_range(family.tilt.0..family.tilt.1);
    let mut out: Vec<f64> = tilted_noise(len, floor_tilt, rng)
        .into_iter()
        .map(|v| v * floor_gain)
        .collect();
    let mut t = ms(rng.gen_range(0.0..family.gap_ms.1));
    while t < len {
        let dur = ms(rng.gen_range(family.burst_ms.0..family.burst_ms.1)).min(len - t);
        if dur >= 32 {
            let level = rng.gen_range(0.35..1.0);
            let attack = ms(rng.gen_range(4.0..30.0)).min(dur / 2);
            let release = ms(rng.gen_range(15.0..100.0)).min(dur / 2);
            let burst = if rng.gen_bool(family.tonal_probability) {
                tonal_burst(dur, rng)
            } else {
                filtered_burst(dur, family, rng)
            };
            for (i, v) in burst.iter().enumerate() {
                out[t + i] += level * envelope(i, dur, attack, release) * v;
            }
        }
        t += dur + ms(rng.gen_range(family.gap_ms.0..family.gap_ms.1));
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = rng.gen_range(0.3..0.7) / peak;
    out.iter_mut().for_each(|v| *v *= gain);
    out
}

fn filtered_burst(len: usize, family: &NoiseFamily, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let tilt = rng.gen_range(family.tilt.0..family.tilt.1);
    let broadband = tilted_noise(len, tilt, rng);
    let center = rng.gen_range(family.center_hz.0.ln()..family.center_hz.1.ln()).exp();
    let mut bp = Biquad::bandpass(center, rng.gen_range(0.7..4.0));
    let band_share = rng.gen_range(0.3..0.9);
    broadband
        .iter()
        .map(|&v| {
            let banded = bp.process(v) * 2.0;
            band_share * banded + (1.0 - band_share) * v
        })
        .collect()
}

fn tonal_burst(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f = rng.gen_range(250.0..2500.0);
    let partials = rng.gen_range(1..=4);
    let vibrato_hz = rng.gen_range(0.0..7.0);
    let depth = rng.gen_range(0.0..0.03);
    let mut phase = 0.0;
    (0..len)
        .map(|i| {
            let inst = f * (1.0 + depth * (2.0 * PI * vibrato_hz * i as f64 / FS).sin());
            phase += 2.0 * PI * inst / FS;
            (1..=partials)
                .map(|k| (phase * k as f64).sin() / k as f64)
                .sum::<f64>()
                * 0.7
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, SegmentalConfig};

    fn mean_centroid(corpus: &Corpus) -> f64 {
        let cfg = SegmentalConfig::standard();
        let mut weighted = 0.0;
        let mut total = 0.0;
        for clip in corpus.clips() {
            let s = stft(&clip.wave, &cfg).unwrap();
            for row in s.bins().rows() {
                for (k, c) in row.iter().enumerate() {
                    let m = c.norm();
                    weighted += m * k as f64 * FS / 1024.0;
                    total += m;
                }
            }
        }
        weighted / total
    }

    #[test]
    fn same_seed_gives_identical_corpus() {
        let a = generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 2, 16000, Some(3), 9).unwrap();
        let b = generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 2, 16000, Some(3), 9).unwrap();
        for (x, y) in a.clips().iter().zip(b.clips()) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.wave, y.wave);
        }
        let n1 = generate_synthetic_corpus(CorpusRole::PremixtureNoise, 2, 16000, None, 9).unwrap();
        let n2 = generate_synthetic_corpus(CorpusRole::PremixtureNoise, 2, 16000, None, 9).unwrap();
        assert_eq!(n1.clips()[1].wave, n2.clips()[1].wave);
    }

    #[test]
    fn speech_has_silent_gaps() {
        let c = generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 4, 48000, Some(0), 1).unwrap();
        for clip in c.clips() {
            let peak = clip.wave.peak();
            let quiet = clip.wave.samples().iter().filter(|v| v.abs() < 0.01 * peak).count();
            assert!(quiet as f64 >= 0.1 * clip.wave.len() as f64, "quiet share {}", quiet);
            assert!(peak > 0.1 && peak <= 1.0);
        }
    }

    #[test]
    fn speaker_profiles_are_spectrally_distinct() {
        let a = generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 3, 32000, Some(0), 2).unwrap();
        let b = generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 3, 32000, Some(1), 2).unwrap();
        let (ca, cb) = (mean_centroid(&a), mean_centroid(&b));
        assert!((ca - cb).abs() / ca.min(cb) >= 0.1, "centroids {ca} {cb}");
    }

    #[test]
    fn noise_roles_differ_and_never_vanish() {
        for role in [CorpusRole::PremixtureNoise, CorpusRole::TrainingNoise] {
            let c = generate_synthetic_corpus(role, 3, 32000, None, 4).unwrap();
            for clip in c.clips() {
                for chunk in clip.wave.samples().chunks(16000) {
                    assert!(chunk.iter().map(|v| v * v).sum::<f64>() > 0.0);
                }
            }
        }
    }

    #[test]
    fn argument_validation() {
        assert!(generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 0, 16000, Some(0), 0).is_err());
        assert!(generate_synthetic_corpus(CorpusRole::SpeakerSpeech, 1, 16000, None, 0).is_err());
    }
}
