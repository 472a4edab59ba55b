//! Batched losses and their parameter gradients.

use ndarray::Array2;

use super::model::{log_magnitude, record_forward, register_params, synthesis_context, HeadKind, ModelParams};
use super::tape::{Gradients, Tape};
use crate::dsp::{SegmentalConfig, Waveform};
use crate::error::{Error, Result};

/// How reconstructed waveforms are compared with their targets.
#[derive(Clone, Debug)]
pub enum WaveformLoss {
    /// Plain mean squared error over all samples.
    TimeDomain,
    /// Frame-weighted segmental MSE; one row of weights per batch example.
    Segmental(Array2<f64>),
}

fn check_batch(inputs: &[&Waveform], targets: usize) -> Result<usize> {
    if inputs.is_empty() || inputs.len() != targets {
        return Err(Error::invalid(format!(
            "batch of {} inputs and {targets} targets",
            inputs.len()
        )));
    }
    Ok(inputs[0].len())
}

/// Loss of the masked reconstruction against `targets`, and its gradient.
pub fn mask_loss_and_gradients(
    params: &ModelParams,
    inputs: &[&Waveform],
    targets: &[&Waveform],
    loss: &WaveformLoss,
    framing: &SegmentalConfig,
) -> Result<(f64, Gradients)> {
    if params.config().head != HeadKind::Mask {
        return Err(Error::invalid("model does not have a mask head"));
    }
    let len = check_batch(inputs, targets.len())?;
    let ctx = synthesis_context(inputs, framing)?;
    let features: Vec<Array2<f64>> = ctx.spectra.iter().map(log_magnitude).collect();
    let refs: Vec<&Array2<f64>> = features.iter().collect();
    let mut target = Array2::zeros((targets.len(), len));
    for (b, t) in targets.iter().enumerate() {
        if t.len() != len {
            return Err(Error::invalid("target length differs from input length"));
        }
        target.row_mut(b).assign(&ndarray::ArrayView1::from(t.samples()));
    }
    let mut tape = Tape::new();
    let vars = register_params(&mut tape, params);
    let mask = record_forward(&mut tape, params, &vars, &refs)?;
    let y = tape.mask_synthesis(mask, ctx)?;
    let root = match loss {
        WaveformLoss::TimeDomain => tape.mse_against(y, target)?,
        WaveformLoss::Segmental(w) => tape.segmental_mse(y, target, w.clone(), framing.clone())?,
    };
    let value = tape.value(root)[[0, 0]];
    let grads = tape.backward(root, vars.len())?;
    Ok((value, grads))
}

/// MSE of per-frame scalar predictions against `labels`, and its gradient.
pub fn regression_loss_and_gradients(
    params: &ModelParams,
    inputs: &[&Waveform],
    labels: &[&[f64]],
    framing: &SegmentalConfig,
) -> Result<(f64, Gradients)> {
    if params.config().head != HeadKind::Regression || params.config().output_dim != 1 {
        return Err(Error::invalid("model is not a scalar regressor"));
    }
    check_batch(inputs, labels.len())?;
    let features = inputs
        .iter()
        .map(|w| Ok(log_magnitude(&crate::dsp::stft_samples(w.samples(), framing)?)))
        .collect::<Result<Vec<_>>>()?;
    let frames = features[0].nrows();
    let batch = inputs.len();
    let mut target = Array2::zeros((frames * batch, 1));
    for (b, l) in labels.iter().enumerate() {
        if l.len() != frames {
            return Err(Error::invalid(format!("{} labels for {frames} frames", l.len())));
        }
        for (t, v) in l.iter().enumerate() {
            target[[t * batch + b, 0]] = *v;
        }
    }
    let refs: Vec<&Array2<f64>> = features.iter().collect();
    let mut tape = Tape::new();
    let vars = register_params(&mut tape, params);
    let out = record_forward(&mut tape, params, &vars, &refs)?;
    let root = tape.mse_against(out, target)?;
    let value = tape.value(root)[[0, 0]];
    let grads = tape.backward(root, vars.len())?;
    Ok((value, grads))
}
