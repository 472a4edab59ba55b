//! Losses and quality measures.
//!
//! Argument order is always (reference, degraded): `segmental_snr(s, x)`
//! measures how much of `s` survives in `x`.

use crate::dsp::{frame_count, SegmentalConfig, Waveform};
use crate::error::{Error, Result};

/// Lower clamp for per-frame SNRs, in dB.
pub const SEG_SNR_MIN_DB: f64 = -30.0;
/// Upper clamp for per-frame SNRs, in dB.
pub const SEG_SNR_MAX_DB: f64 = 30.0;
/// Frames where both energies fall below this are scored 0 dB.
pub const SILENT_FRAME_ENERGY: f64 = 1e-12;
/// SI-SDR clamp, in dB.
pub const SI_SDR_LIMIT_DB: f64 = 60.0;

/// Mean squared error between two equal-length waveforms.
pub fn mse(target: &Waveform, estimate: &Waveform) -> Result<f64> {
    target.check_compatible(estimate)?;
    let sum: f64 = target
        .samples()
        .iter()
        .zip(estimate.samples())
        .map(|(s, y)| (s - y) * (s - y))
        .sum();
    Ok(sum / target.len() as f64)
}

/// Per-frame SNRs in dB, clamped to `[SEG_SNR_MIN_DB, SEG_SNR_MAX_DB]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegSnrVector {
    values: Vec<f64>,
}

impl SegSnrVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn frame_snr_db(signal_energy: f64, residual_energy: f64) -> f64 {
    if signal_energy < SILENT_FRAME_ENERGY && residual_energy < SILENT_FRAME_ENERGY {
        return 0.0;
    }
    if residual_energy < SILENT_FRAME_ENERGY {
        return SEG_SNR_MAX_DB;
    }
    let db = 10.0 * (signal_energy / residual_energy).log10();
    if db.is_nan() {
        0.0
    } else {
        db.clamp(SEG_SNR_MIN_DB, SEG_SNR_MAX_DB)
    }
}

/// Windowed per-frame SNR of `estimate` against `target`.
pub fn segmental_snr(
    target: &Waveform,
    estimate: &Waveform,
    config: &SegmentalConfig,
) -> Result<SegSnrVector> {
    target.check_compatible(estimate)?;
    Ok(SegSnrVector {
        values: segmental_snr_samples(target.samples(), estimate.samples(), config)?,
    })
}

pub(crate) fn segmental_snr_samples(
    target: &[f64],
    estimate: &[f64],
    config: &SegmentalConfig,
) -> Result<Vec<f64>> {
    let frames = frame_count(target.len(), config)?;
    let window = config.window();
    Ok((0..frames)
        .map(|j| {
            let start = j * config.hop();
            let end = (start + config.frame_size()).min(target.len());
            let mut sig = 0.0;
            let mut res = 0.0;
            for i in start..end {
                let w = window[i - start];
                let v = w * target[i];
                let r = w * (target[i] - estimate[i]);
                sig += v * v;
                res += r * r;
            }
            frame_snr_db(sig, res)
        })
        .collect())
}

/// Per-frame SNR estimates and the logistic weights derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct PurificationWeights {
    pub alpha_hat: Vec<f64>,
    pub p: Vec<f64>,
}

pub(crate) fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Elementwise logistic of per-frame dB logits.
pub fn logistic_weights(alpha_hat: &[f64]) -> Result<PurificationWeights> {
    if let Some(j) = alpha_hat.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("SNR estimate {j} is not finite")));
    }
    Ok(PurificationWeights {
        alpha_hat: alpha_hat.to_vec(),
        p: alpha_hat.iter().map(|&a| logistic(a)).collect(),
    })
}

/// Frame-weighted MSE between windowed segments.
pub fn segmental_mse(
    target: &Waveform,
    estimate: &Waveform,
    p: &[f64],
    config: &SegmentalConfig,
) -> Result<f64> {
    target.check_compatible(estimate)?;
    let frames = frame_count(target.len(), config)?;
    if p.len() != frames {
        return Err(Error::invalid(format!(
            "{} weights for {frames} frames",
            p.len()
        )));
    }
    Ok(segmental_mse_samples(target.samples(), estimate.samples(), p, config))
}

pub(crate) fn segmental_mse_samples(
    target: &[f64],
    estimate: &[f64],
    p: &[f64],
    config: &SegmentalConfig,
) -> f64 {
    let window = config.window();
    let n = config.frame_size() as f64;
    let total: f64 = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let start = j * config.hop();
            let end = (start + config.frame_size()).min(target.len());
            let frame: f64 = (start..end)
                .map(|i| {
                    let w = window[i - start];
                    let d = w * target[i] - w * estimate[i];
                    d * d
                })
                .sum();
            pj * frame / n
        })
        .sum();
    total / p.len() as f64
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to +/-60 dB.
pub fn si_sdr(target: &Waveform, estimate: &Waveform) -> Result<f64> {
    target.check_compatible(estimate)?;
    let s = target.samples();
    let y = estimate.samples();
    let ss: f64 = s.iter().map(|v| v * v).sum();
    if ss <= 0.0 {
        return Err(Error::invalid("SI-SDR target has zero energy"));
    }
    let ys: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
    let alpha = ys / ss;
    let mut proj = 0.0;
    let mut dist = 0.0;
    for (a, b) in s.iter().zip(y) {
        let t = alpha * a;
        proj += t * t;
        dist += (b - t) * (b - t);
    }
    let db = if dist == 0.0 {
        SI_SDR_LIMIT_DB
    } else if proj == 0.0 {
        -SI_SDR_LIMIT_DB
    } else {
        10.0 * (proj / dist).log10()
    };
    Ok(db.clamp(-SI_SDR_LIMIT_DB, SI_SDR_LIMIT_DB))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wave(v: Vec<f64>) -> Waveform {
        Waveform::new(v).unwrap()
    }

    fn random_wave(len: usize, rng: &mut ChaCha8Rng) -> Waveform {
        wave((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&wave(vec![1.0, 0.0]), &wave(vec![0.0, 0.0])).unwrap(), 0.5);
        let s = wave(vec![1.0, 2.0, 3.0]);
        assert_eq!(mse(&s, &s).unwrap(), 0.0);
        let y = wave(vec![1.0, 1.0, 1.0]);
        assert!((mse(&s, &y).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!(mse(&s, &wave(vec![1.0])).is_err());
    }

    #[test]
    fn segsnr_examples() {
        let cfg = SegmentalConfig::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_wave(16000, &mut rng);
        let zero = Waveform::zeros(16000).unwrap();
        let v = segmental_snr(&s, &zero, &cfg).unwrap();
        assert_eq!(v.len(), 63);
        assert!(v.values().iter().all(|&d| d.abs() < 1e-12));

        let scaled = s.scaled(0.9).unwrap();
        let v = segmental_snr(&s, &scaled, &cfg).unwrap();
        assert!(v.values().iter().all(|&d| (d - 20.0).abs() < 1e-9));

        let v = segmental_snr(&s, &s, &cfg).unwrap();
        assert!(v.values().iter().all(|&d| d == SEG_SNR_MAX_DB));

        let v = segmental_snr(&zero, &zero, &cfg).unwrap();
        assert!(v.values().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn logistic_examples() {
        let w = logistic_weights(&[0.0, 30.0, -30.0]).unwrap();
        assert_eq!(w.p[0], 0.5);
        let tail = 1.0 / (1.0 + 30f64.exp());
        assert!((tail - 9.357622968840175e-14).abs() < 1e-20);
        assert!(((1.0 - w.p[1]) - tail).abs() < 2e-16);
        assert!((w.p[2] - tail).abs() < 1e-26);
        assert!(logistic_weights(&[f64::NAN]).is_err());
    }

    #[test]
    fn segmental_mse_examples() {
        let cfg = SegmentalConfig::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_wave(16000, &mut rng);
        let y = random_wave(16000, &mut rng);
        assert_eq!(segmental_mse(&s, &y, &[0.0; 63], &cfg).unwrap(), 0.0);
        assert_eq!(segmental_mse(&s, &s, &[0.7; 63], &cfg).unwrap(), 0.0);
        assert!(segmental_mse(&s, &y, &[1.0; 62], &cfg).is_err());
    }

    #[test]
    fn si_sdr_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_wave(4000, &mut rng);
        assert_eq!(si_sdr(&s, &s.scaled(3.7).unwrap()).unwrap(), 60.0);

        // Gram-Schmidt an orthogonal direction with the target's energy.
        let r = random_wave(4000, &mut rng);
        let proj = r.samples().iter().zip(s.samples()).map(|(a, b)| a * b).sum::<f64>() / s.energy();
        let e: Vec<f64> = r.samples().iter().zip(s.samples()).map(|(a, b)| a - proj * b).collect();
        let norm = (s.energy() / e.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let e = wave(e.iter().map(|v| v * norm).collect());

        // An estimate orthogonal to the target keeps nothing of it.
        assert_eq!(si_sdr(&s, &e).unwrap(), -60.0);
        // Orthogonal distortion of equal energy: 0 dB.
        assert!(si_sdr(&s, &s.add(&e).unwrap()).unwrap().abs() < 1e-9);
        // Orthogonal distortion at a tenth of the energy: 10 dB.
        let tenth = e.scaled(0.1f64.sqrt()).unwrap();
        assert!((si_sdr(&s, &s.add(&tenth).unwrap()).unwrap() - 10.0).abs() < 1e-9);

        assert!(si_sdr(&Waveform::zeros(10).unwrap(), &s).is_err());
    }

    proptest! {
        #[test]
        fn logistic_is_monotone(a in -30.0f64..30.0, b in -30.0f64..30.0) {
            let w = logistic_weights(&[a, b]).unwrap();
            if a <= b {
                prop_assert!(w.p[0] <= w.p[1]);
            } else {
                prop_assert!(w.p[0] >= w.p[1]);
            }
            prop_assert!(w.p[0] > 0.0 && w.p[0] < 1.0);
        }

        #[test]
        fn segsnr_is_scale_free(seed in 0u64..1000, c in prop_oneof![-20.0f64..-0.05, 0.05f64..20.0]) {
            let cfg = SegmentalConfig::new(64, 16).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_wave(500, &mut rng);
            let y = random_wave(500, &mut rng);
            let a = segmental_snr(&s, &y, &cfg).unwrap();
            let b = segmental_snr(&s.scaled(c).unwrap(), &y.scaled(c).unwrap(), &cfg).unwrap();
            for (x, z) in a.values().iter().zip(b.values()) {
                prop_assert!((x - z).abs() < 1e-9);
            }
        }

        #[test]
        fn si_sdr_clamps_positive_scalings(seed in 0u64..1000, a in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_wave(256, &mut rng);
            prop_assert_eq!(si_sdr(&s, &s.scaled(a).unwrap()).unwrap(), 60.0);
        }

        #[test]
        fn mse_is_zero_only_for_identical(v in proptest::collection::vec(-1.0f64..1.0, 1..64), i in 0usize..64, d in 1e-6f64..1.0) {
            let s = wave(v.clone());
            prop_assert_eq!(mse(&s, &s).unwrap(), 0.0);
            let mut w = v;
            let idx = i % w.len();
            w[idx] += d;
            prop_assert!(mse(&s, &wave(w)).unwrap() > 0.0);
        }
    }
}
