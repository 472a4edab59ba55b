//! Unidirectional multi-layer GRU over log-magnitude frames with a dense
//! per-frame head.
//!
//! Gate layout follows the common `(r, z, n)` convention:
//!
//! ```text
//! r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
//! z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
//! n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
//! h' = (1 - z) * n + z * h
//! ```
//!
//! The first layer reads the normalized features directly; there is no
//! separate input projection.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::tape::{SynthesisContext, Tape, Var};
use crate::dsp::{overlap_add, stft_samples, SegmentalConfig, Spectrogram, Waveform};
use crate::error::{Error, Result};

/// Magnitudes are floored here before taking the log.
pub const LOG_MAGNITUDE_FLOOR: f64 = 1e-5;

/// Default affine feature normalization, `(log|S| - shift) / scale`. Chosen
/// so typical log-magnitudes of 16 kHz speech mixtures land near zero mean
/// and unit spread.
pub const DEFAULT_FEATURE_SHIFT: f64 = -3.0;
pub const DEFAULT_FEATURE_SCALE: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    /// Sigmoid output in `(0, 1)`, one gain per frequency bin.
    Mask,
    /// Unbounded linear output.
    Regression,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Mask => "mask",
            HeadKind::Regression => "regression",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(HeadKind::Mask),
            "regression" => Ok(HeadKind::Regression),
            other => Err(Error::Parse(format!("unknown head kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub output_dim: usize,
    pub head: HeadKind,
    pub feature_shift: f64,
    pub feature_scale: f64,
}

impl GruConfig {
    /// Two-layer mask estimator for the standard 1024-point framing.
    pub fn mask_estimator(hidden_dim: usize) -> Self {
        let bins = SegmentalConfig::standard().num_bins();
        GruConfig {
            input_dim: bins,
            hidden_dim,
            num_layers: 2,
            output_dim: bins,
            head: HeadKind::Mask,
            feature_shift: DEFAULT_FEATURE_SHIFT,
            feature_scale: DEFAULT_FEATURE_SCALE,
        }
    }

    /// Per-frame scalar regressor for the standard framing.
    pub fn snr_predictor(hidden_dim: usize, num_layers: usize) -> Self {
        GruConfig {
            output_dim: 1,
            num_layers,
            head: HeadKind::Regression,
            ..Self::mask_estimator(hidden_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 || self.output_dim == 0 {
            return Err(Error::invalid(format!("degenerate model dimensions {self:?}")));
        }
        if !self.feature_shift.is_finite() || !(self.feature_scale.is_finite() && self.feature_scale > 0.0) {
            return Err(Error::invalid("feature normalization must be finite with a positive scale"));
        }
        Ok(())
    }

    /// Tensor names and shapes, in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, (usize, usize))> {
        let h = self.hidden_dim;
        let mut out = Vec::new();
        for l in 0..self.num_layers {
            let input = if l == 0 { self.input_dim } else { h };
            out.push((format!("gru{l}.w_ih"), (input, 3 * h)));
            out.push((format!("gru{l}.w_hh"), (h, 3 * h)));
            out.push((format!("gru{l}.b_ih"), (1, 3 * h)));
            out.push((format!("gru{l}.b_hh"), (1, 3 * h)));
        }
        out.push(("head.w".into(), (h, self.output_dim)));
        out.push(("head.b".into(), (1, self.output_dim)));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_shapes().iter().map(|(_, (r, c))| r * c).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: GruConfig,
    tensors: Vec<Array2<f64>>,
}

impl ModelParams {
    /// Uniform `[-1/sqrt(h), 1/sqrt(h)]` initialization, deterministic in `seed`.
    pub fn init(config: GruConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let bound = 1.0 / (config.hidden_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .tensor_shapes()
            .into_iter()
            .map(|(_, dim)| Array2::from_shape_simple_fn(dim, || rng.gen_range(-bound..=bound)))
            .collect();
        Ok(ModelParams { config, tensors })
    }

    pub fn from_tensors(config: GruConfig, tensors: Vec<Array2<f64>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.tensor_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, dim), t) in shapes.iter().zip(&tensors) {
            if t.dim() != *dim {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {dim:?}",
                    t.dim()
                )));
            }
        }
        Ok(ModelParams { config, tensors })
    }

    pub fn config(&self) -> &GruConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Array2<f64>] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Array2<f64>> {
        self.config
            .tensor_shapes()
            .iter()
            .position(|(n, _)| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// `log(max(|S|, 1e-5))`, `frames x bins`.
pub fn log_magnitude_features(spec: &Spectrogram) -> Array2<f64> {
    log_magnitude(spec.bins())
}

pub(crate) fn log_magnitude(bins: &Array2<Complex64>) -> Array2<f64> {
    bins.mapv(|c| c.norm().max(LOG_MAGNITUDE_FLOOR).ln())
}

/// Records the forward pass for a batch of equal-length feature sequences.
/// Returns the head output in time-major row order (`frame * batch + example`).
pub(crate) fn record_forward(
    tape: &mut Tape,
    params: &ModelParams,
    param_vars: &[Var],
    features: &[&Array2<f64>],
) -> Result<Var> {
    let cfg = &params.config;
    let batch = features.len();
    let frames = features.first().map_or(0, |f| f.nrows());
    if batch == 0 || frames == 0 {
        return Err(Error::invalid("empty feature batch"));
    }
    for f in features {
        if f.dim() != (frames, cfg.input_dim) {
            return Err(Error::invalid(format!(
                "feature matrix {:?}, expected ({frames}, {})",
                f.dim(),
                cfg.input_dim
            )));
        }
    }
    let mut stacked = Array2::zeros((frames * batch, cfg.input_dim));
    for t in 0..frames {
        for (b, f) in features.iter().enumerate() {
            stacked
                .row_mut(t * batch + b)
                .zip_mut_with(&f.row(t), |d, &v| *d = (v - cfg.feature_shift) / cfg.feature_scale);
        }
    }
    let h = cfg.hidden_dim;
    let mut x = tape.constant(stacked);
    for l in 0..cfg.num_layers {
        let [w_ih, w_hh, b_ih, b_hh] = [0, 1, 2, 3].map(|k| param_vars[4 * l + k]);
        let xw = tape.matmul(x, w_ih);
        let gx_all = tape.add_bias(xw, b_ih);
        let mut state = tape.constant(Array2::zeros((batch, h)));
        let mut outputs = Vec::with_capacity(frames);
        for t in 0..frames {
            let gx = tape.rows(gx_all, t * batch, batch);
            let hw = tape.matmul(state, w_hh);
            let gh = tape.add_bias(hw, b_hh);
            let [xr, xz, xn] = [0, 1, 2].map(|k| tape.columns(gx, k * h, h));
            let [hr, hz, hn] = [0, 1, 2].map(|k| tape.columns(gh, k * h, h));
            let r_in = tape.add(xr, hr);
            let r = tape.sigmoid(r_in);
            let z_in = tape.add(xz, hz);
            let z = tape.sigmoid(z_in);
            let gated = tape.mul(r, hn);
            let n_in = tape.add(xn, gated);
            let n = tape.tanh(n_in);
            let diff = tape.sub(state, n);
            let carry = tape.mul(z, diff);
            state = tape.add(n, carry);
            outputs.push(state);
        }
        x = tape.stack_rows(&outputs);
    }
    let k = 4 * cfg.num_layers;
    let hw = tape.matmul(x, param_vars[k]);
    let out = tape.add_bias(hw, param_vars[k + 1]);
    Ok(match cfg.head {
        HeadKind::Mask => tape.sigmoid(out),
        HeadKind::Regression => out,
    })
}

pub(crate) fn register_params(tape: &mut Tape, params: &ModelParams) -> Vec<Var> {
    params
        .tensors
        .iter()
        .enumerate()
        .map(|(slot, t)| tape.parameter(slot, t.clone()))
        .collect()
}

/// Head output for a single sequence, `frames x output_dim`.
pub fn forward(params: &ModelParams, features: &Array2<f64>) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
    let out = record_forward(&mut tape, params, &vars, &[features])?;
    Ok(tape.value(out).clone())
}

fn checked_framing(params: &ModelParams) -> Result<SegmentalConfig> {
    let framing = SegmentalConfig::standard();
    if params.config.input_dim != framing.num_bins() {
        return Err(Error::invalid(format!(
            "model expects {} input bins, framing gives {}",
            params.config.input_dim,
            framing.num_bins()
        )));
    }
    Ok(framing)
}

/// Per-frame, per-bin mask in `(0, 1)` for a noisy waveform.
pub fn forward_mask(params: &ModelParams, noisy: &Waveform) -> Result<Array2<f64>> {
    if params.config.head != HeadKind::Mask {
        return Err(Error::invalid("model does not have a mask head"));
    }
    let framing = checked_framing(params)?;
    let spec = stft_samples(noisy.samples(), &framing)?;
    forward(params, &log_magnitude(&spec))
}

/// Per-frame predicted SegSNR (logits), one per analysis frame.
pub fn forward_snr(params: &ModelParams, x: &Waveform) -> Result<Vec<f64>> {
    if params.config.head != HeadKind::Regression || params.config.output_dim != 1 {
        return Err(Error::invalid("model is not a scalar regressor"));
    }
    let framing = checked_framing(params)?;
    let spec = stft_samples(x.samples(), &framing)?;
    Ok(forward(params, &log_magnitude(&spec))?.into_raw_vec_and_offset().0)
}

/// Scales each bin of `noisy` by `mask` and resynthesizes `len` samples.
pub fn apply_mask_and_reconstruct(noisy: &Spectrogram, mask: &Array2<f64>, len: usize) -> Result<Waveform> {
    if mask.dim() != noisy.bins().dim() {
        return Err(Error::invalid(format!(
            "mask {:?} does not match spectrogram {:?}",
            mask.dim(),
            noisy.bins().dim()
        )));
    }
    if mask.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mask contains non-finite values".into()));
    }
    let expected = noisy.config().frame_count(len)?;
    if expected != noisy.frames() {
        return Err(Error::invalid(format!(
            "{len} samples imply {expected} frames, spectrogram has {}",
            noisy.frames()
        )));
    }
    let mut z = noisy.bins().clone();
    z.zip_mut_with(mask, |c, &m| *c *= m);
    Waveform::with_sample_rate(overlap_add(z.view(), noisy.config(), len), crate::dsp::SAMPLE_RATE)
}

/// Runs the mask estimator on `noisy` and returns the enhanced waveform.
pub fn enhance(params: &ModelParams, noisy: &Waveform) -> Result<Waveform> {
    let framing = checked_framing(params)?;
    let bins = stft_samples(noisy.samples(), &framing)?;
    let mask = forward(params, &log_magnitude(&bins))?;
    let spec = Spectrogram::from_bins(bins, framing)?;
    let mut out = apply_mask_and_reconstruct(&spec, &mask, noisy.len())?;
    if out.sample_rate() != noisy.sample_rate() {
        out = Waveform::with_sample_rate(out.into_samples(), noisy.sample_rate())?;
    }
    Ok(out)
}

/// Spectra and synthesis context for a batch of equal-length inputs.
pub(crate) fn synthesis_context(inputs: &[&Waveform], framing: &SegmentalConfig) -> Result<Arc<SynthesisContext>> {
    let len = inputs.first().map_or(0, |w| w.len());
    let spectra = inputs
        .iter()
        .map(|w| {
            if w.len() != len {
                return Err(Error::invalid("batch waveforms differ in length"));
            }
            stft_samples(w.samples(), framing)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Arc::new(SynthesisContext {
        spectra,
        config: framing.clone(),
        len,
    }))
}
