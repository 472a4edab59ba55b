//! Waveforms, Hann framing, and the STFT / inverse STFT pair.
//!
//! Frames start at sample 0 (no centering) and the signal is zero-padded past
//! its end, so a signal of `L` samples always yields `ceil(L / H)` frames.
//!
//! DFT convention: the forward transform is unnormalized and keeps the
//! `N/2 + 1` non-negative bins; the inverse applies `1/N`. With this
//! convention a frame `f` and its half spectrum `X` satisfy
//! `sum |f|^2 = (|X_0|^2 + |X_{N/2}|^2 + 2 * sum_{0<k<N/2} |X_k|^2) / N`.
//!
//! The inverse STFT is a weighted overlap-add: every frame is multiplied by
//! the synthesis window and the sum is divided by the summed squared window.
//! Where that envelope falls below [`ENVELOPE_FLOOR_FRACTION`] of its peak
//! (only the first few hundred samples, since frame 0 starts at sample 0)
//! the floor is used instead, which keeps gradients bounded there.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Envelope values below this fraction of the peak are clamped up to it.
pub const ENVELOPE_FLOOR_FRACTION: f64 = 0.1;

/// A finite, non-empty, uniformly sampled mono signal.
#[derive(Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl fmt::Debug for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Waveform")
            .field("len", &self.samples.len())
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

impl Waveform {
    /// A waveform at the pipeline rate of 16 kHz.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        Self::with_sample_rate(samples, SAMPLE_RATE)
    }

    pub fn with_sample_rate(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform must contain at least one sample"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0.0; len])
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Result<Waveform> {
        Waveform::with_sample_rate(
            self.samples.iter().map(|v| v * gain).collect(),
            self.sample_rate,
        )
    }

    /// Checks that `other` has the same length and sample rate.
    pub fn check_compatible(&self, other: &Waveform) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::invalid(format!(
                "sample rate mismatch: {} vs {}",
                self.sample_rate, other.sample_rate
            )));
        }
        if self.len() != other.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Waveform) -> Result<Waveform> {
        self.check_compatible(other)?;
        Waveform::with_sample_rate(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            self.sample_rate,
        )
    }

    pub fn sub(&self, other: &Waveform) -> Result<Waveform> {
        self.check_compatible(other)?;
        Waveform::with_sample_rate(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
            self.sample_rate,
        )
    }
}

/// Frame size, hop, and the shared Hann window (plus cached FFT plans).
#[derive(Clone)]
pub struct SegmentalConfig {
    frame_size: usize,
    hop: usize,
    window: Arc<[f64]>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SegmentalConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SegmentalConfig")
            .field("frame_size", &self.frame_size)
            .field("hop", &self.hop)
            .finish()
    }
}

impl PartialEq for SegmentalConfig {
    fn eq(&self, other: &Self) -> bool {
        self.frame_size == other.frame_size && self.hop == other.hop
    }
}

impl SegmentalConfig {
    pub fn new(frame_size: usize, hop: usize) -> Result<Self> {
        if frame_size < 2 || frame_size % 2 != 0 {
            return Err(Error::invalid(format!(
                "frame size must be even and at least 2, got {frame_size}"
            )));
        }
        if hop == 0 || hop > frame_size {
            return Err(Error::invalid(format!(
                "hop must satisfy 0 < hop <= frame size, got {hop}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(SegmentalConfig {
            frame_size,
            hop,
            window: hann(frame_size).into(),
            forward: planner.plan_fft_forward(frame_size),
            inverse: planner.plan_fft_inverse(frame_size),
        })
    }

    /// N = 1024, H = 256: 63 frames per one-second segment.
    pub fn standard() -> Self {
        Self::new(1024, 256).expect("standard framing is valid")
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn num_bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    pub fn frame_count(&self, len: usize) -> Result<usize> {
        frame_count(len, self)
    }

    /// Summed squared synthesis window at each output sample, floored.
    pub fn ola_envelope(&self, len: usize) -> Vec<f64> {
        let frames = len.div_ceil(self.hop);
        let mut env = vec![0.0; len];
        for j in 0..frames {
            let start = j * self.hop;
            for (n, w) in self.window.iter().enumerate() {
                let i = start + n;
                if i >= len {
                    break;
                }
                env[i] += w * w;
            }
        }
        let peak = env.iter().fold(0.0f64, |m, &v| m.max(v));
        let floor = ENVELOPE_FLOOR_FRACTION * peak;
        for v in &mut env {
            *v = v.max(floor);
        }
        env
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let s = (std::f64::consts::PI * i as f64 / n as f64).sin();
            s * s
        })
        .collect()
}

/// Number of frames for a signal of `len` samples: `ceil(len / hop)`.
pub fn frame_count(len: usize, config: &SegmentalConfig) -> Result<usize> {
    if len == 0 {
        return Err(Error::invalid("frame count of an empty signal"));
    }
    Ok(len.div_ceil(config.hop))
}

/// Windowed frame `j`, reading samples past the end of the signal as zero.
pub fn extract_frame(x: &Waveform, j: usize, config: &SegmentalConfig) -> Result<Vec<f64>> {
    let frames = frame_count(x.len(), config)?;
    if j >= frames {
        return Err(Error::invalid(format!(
            "frame index {j} out of range for {frames} frames"
        )));
    }
    Ok(windowed_frame(x.samples(), j, config))
}

pub(crate) fn windowed_frame(x: &[f64], j: usize, config: &SegmentalConfig) -> Vec<f64> {
    let start = j * config.hop;
    config
        .window
        .iter()
        .enumerate()
        .map(|(n, w)| x.get(start + n).map_or(0.0, |v| w * v))
        .collect()
}

/// Complex STFT of a waveform: one row per frame, `N/2 + 1` columns.
#[derive(Clone, Debug)]
pub struct Spectrogram {
    bins: Array2<Complex64>,
    config: SegmentalConfig,
}

impl Spectrogram {
    pub fn from_bins(bins: Array2<Complex64>, config: SegmentalConfig) -> Result<Self> {
        if bins.ncols() != config.num_bins() {
            return Err(Error::invalid(format!(
                "spectrogram has {} bins, framing expects {}",
                bins.ncols(),
                config.num_bins()
            )));
        }
        if bins.nrows() == 0 {
            return Err(Error::invalid("spectrogram has no frames"));
        }
        if bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("spectrogram contains non-finite bins"));
        }
        Ok(Spectrogram { bins, config })
    }

    pub fn bins(&self) -> &Array2<Complex64> {
        &self.bins
    }

    pub fn config(&self) -> &SegmentalConfig {
        &self.config
    }

    pub fn frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.bins.ncols()
    }

    /// Time-domain energy of all windowed frames, recovered from the bins.
    pub fn frame_energy(&self) -> f64 {
        let n = self.config.frame_size;
        let last = n / 2;
        let mut total = 0.0;
        for row in self.bins.rows() {
            for (k, c) in row.iter().enumerate() {
                let weight = if k == 0 || k == last { 1.0 } else { 2.0 };
                total += weight * c.norm_sqr();
            }
        }
        total / n as f64
    }
}

pub fn stft(x: &Waveform, config: &SegmentalConfig) -> Result<Spectrogram> {
    let bins = stft_samples(x.samples(), config)?;
    Ok(Spectrogram {
        bins,
        config: config.clone(),
    })
}

pub(crate) fn stft_samples(x: &[f64], config: &SegmentalConfig) -> Result<Array2<Complex64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("stft input contains non-finite samples"));
    }
    let frames = frame_count(x.len(), config)?;
    let n = config.frame_size;
    let bins = config.num_bins();
    let mut out = Array2::zeros((frames, bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); config.forward.get_inplace_scratch_len()];
    for j in 0..frames {
        let start = j * config.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = x.get(start + i).copied().unwrap_or(0.0);
            *slot = Complex64::new(config.window[i] * v, 0.0);
        }
        config.forward.process_with_scratch(&mut buf, &mut scratch);
        for (dst, src) in out.row_mut(j).iter_mut().zip(&buf[..bins]) {
            *dst = *src;
        }
    }
    Ok(out)
}

/// Weighted overlap-add inverse, truncated or zero-padded to `len` samples.
pub fn istft(s: &Spectrogram, len: usize) -> Result<Waveform> {
    let frames = frame_count(len, &s.config)?;
    if frames != s.frames() {
        return Err(Error::invalid(format!(
            "spectrogram has {} frames but a length of {len} implies {frames}",
            s.frames()
        )));
    }
    Waveform::new(overlap_add(s.bins.view(), &s.config, len))
}

/// Real inverse DFT of a half spectrum; imaginary parts of the DC and
/// Nyquist bins are ignored.
fn inverse_frame(
    half: impl Iterator<Item = Complex64>,
    config: &SegmentalConfig,
    buf: &mut [Complex64],
    scratch: &mut [Complex64],
) {
    let n = config.frame_size;
    for (k, c) in half.enumerate() {
        buf[k] = c;
        if k > 0 && k < n / 2 {
            buf[n - k] = c.conj();
        }
    }
    config.inverse.process_with_scratch(buf, scratch);
}

pub(crate) fn overlap_add(
    bins: ArrayView2<Complex64>,
    config: &SegmentalConfig,
    len: usize,
) -> Vec<f64> {
    let n = config.frame_size;
    let scale = 1.0 / n as f64;
    let env = config.ola_envelope(len);
    let mut out = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); config.inverse.get_inplace_scratch_len()];
    for (j, row) in bins.rows().into_iter().enumerate() {
        inverse_frame(row.iter().copied(), config, &mut buf, &mut scratch);
        let start = j * config.hop;
        for (i, c) in buf.iter().enumerate() {
            let t = start + i;
            if t >= len {
                break;
            }
            out[t] += config.window[i] * c.re * scale;
        }
    }
    for (v, e) in out.iter_mut().zip(&env) {
        *v /= e;
    }
    out
}

/// Vector-Jacobian product of [`overlap_add`] with respect to its bins.
///
/// Given `d loss / d y` for the reconstructed samples, returns the gradient
/// with respect to each bin as a complex number `d/d re + i * d/d im`.
pub(crate) fn overlap_add_vjp(
    grad: &[f64],
    config: &SegmentalConfig,
    frames: usize,
) -> Array2<Complex64> {
    let n = config.frame_size;
    let len = grad.len();
    let env = config.ola_envelope(len);
    let bins = config.num_bins();
    let mut out = Array2::zeros((frames, bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); config.forward.get_inplace_scratch_len()];
    for j in 0..frames {
        let start = j * config.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let t = start + i;
            let g = if t < len { grad[t] / env[t] } else { 0.0 };
            *slot = Complex64::new(config.window[i] * g, 0.0);
        }
        config.forward.process_with_scratch(&mut buf, &mut scratch);
        for (k, dst) in out.row_mut(j).iter_mut().enumerate() {
            let c = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            *dst = buf[k] * (c / n as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn frame_counts() {
        let cfg = SegmentalConfig::standard();
        assert_eq!(frame_count(16000, &cfg).unwrap(), 63);
        assert_eq!(frame_count(256, &cfg).unwrap(), 1);
        assert_eq!(frame_count(257, &cfg).unwrap(), 2);
        assert!(frame_count(0, &cfg).is_err());
    }

    #[test]
    fn rejects_bad_framing() {
        assert!(SegmentalConfig::new(1024, 0).is_err());
        assert!(SegmentalConfig::new(1024, 2048).is_err());
        assert!(SegmentalConfig::new(1023, 256).is_err());
    }

    #[test]
    fn waveform_rejects_non_finite_and_empty() {
        assert!(Waveform::new(vec![]).is_err());
        assert!(Waveform::new(vec![0.0, f64::NAN]).is_err());
        assert!(Waveform::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn frame_of_ones_is_the_window() {
        let cfg = SegmentalConfig::standard();
        let x = Waveform::new(vec![1.0; 4096]).unwrap();
        assert_eq!(extract_frame(&x, 0, &cfg).unwrap(), cfg.window());
        let zeros = Waveform::zeros(4096).unwrap();
        assert!(extract_frame(&zeros, 7, &cfg).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tail_frame_matches_explicit_padding() {
        let cfg = SegmentalConfig::standard();
        let x = random_wave(16000, 3);
        let mut padded = x.samples().to_vec();
        padded.extend(std::iter::repeat(0.0).take(1024));
        let frame = extract_frame(&x, 62, &cfg).unwrap();
        let start = 62 * 256;
        assert_eq!(start, 15872);
        for (i, v) in frame.iter().enumerate() {
            assert_eq!(*v, cfg.window()[i] * padded[start + i]);
        }
        assert!(frame[128..].iter().all(|&v| v == 0.0));
        assert!(extract_frame(&x, 63, &cfg).is_err());
    }

    #[test]
    fn zero_signal_has_zero_spectrum() {
        let cfg = SegmentalConfig::standard();
        let s = stft(&Waveform::zeros(16000).unwrap(), &cfg).unwrap();
        assert_eq!(s.bins().dim(), (63, 513));
        assert!(s.bins().iter().all(|c| c.norm() == 0.0));
        let y = istft(&s, 16000).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_centered_sinusoid_peaks_at_its_bin() {
        let cfg = SegmentalConfig::standard();
        let k = 40;
        let f = k as f64 * 16000.0 / 1024.0;
        let x: Vec<f64> = (0..16000)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).sin())
            .collect();
        let wave = Waveform::new(x.clone()).unwrap();
        let s = stft(&wave, &cfg).unwrap();
        for j in 0..59 {
            let frame = windowed_frame(&x, j, &cfg);
            // direct DFT of the windowed frame at a few bins
            for bin in [k - 2, k - 1, k, k + 1, k + 2, 100] {
                let mut acc = Complex64::new(0.0, 0.0);
                for (n, v) in frame.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (bin * n) as f64 / 1024.0;
                    acc += Complex64::new(ang.cos(), ang.sin()) * v;
                }
                assert!((acc - s.bins()[[j, bin]]).norm() < 1e-8);
            }
            let row = s.bins().row(j);
            let argmax = (0..513)
                .max_by(|&a, &b| row[a].norm().total_cmp(&row[b].norm()))
                .unwrap();
            assert_eq!(argmax, k);
        }
    }

    #[test]
    fn parseval_matches_frame_energy() {
        let cfg = SegmentalConfig::standard();
        let x = random_wave(16000, 11);
        let s = stft(&x, &cfg).unwrap();
        let direct: f64 = (0..63)
            .map(|j| windowed_frame(x.samples(), j, &cfg).iter().map(|v| v * v).sum::<f64>())
            .sum();
        assert!((s.frame_energy() - direct).abs() / direct < 1e-9);
    }

    #[test]
    fn istft_rejects_inconsistent_length() {
        let cfg = SegmentalConfig::standard();
        let s = stft(&random_wave(16000, 1), &cfg).unwrap();
        assert!(istft(&s, 8000).is_err());
        assert!(istft(&s, 15900).is_ok());
    }

    #[test]
    fn envelope_is_floored_and_flat_inside() {
        let cfg = SegmentalConfig::standard();
        let env = cfg.ola_envelope(16000);
        assert!(env.iter().all(|&v| v >= 0.15 - 1e-12));
        for v in &env[1024..15000] {
            assert!((v - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn vjp_matches_inner_product_identity() {
        // <grad, istft(Z)> must equal <vjp(grad), Z> (real inner product).
        let cfg = SegmentalConfig::new(32, 8).unwrap();
        let len = 90;
        let frames = frame_count(len, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut z = Array2::<Complex64>::zeros((frames, cfg.num_bins()));
        for (idx, c) in z.iter_mut().enumerate() {
            let k = idx % cfg.num_bins();
            let im = if k == 0 || k == 16 { 0.0 } else { rng.gen_range(-1.0..1.0) };
            *c = Complex64::new(rng.gen_range(-1.0..1.0), im);
        }
        let grad: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = overlap_add(z.view(), &cfg, len);
        let lhs: f64 = y.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let g = overlap_add_vjp(&grad, &cfg, frames);
        let rhs: f64 = g.iter().zip(z.iter()).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}
