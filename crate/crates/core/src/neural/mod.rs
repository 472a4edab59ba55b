//! GRU mask estimator and SNR predictor with reverse-mode gradients,
//! Adam, and a binary checkpoint format.

mod adam;
mod checkpoint;
mod loss;
mod model;
mod tape;

pub use adam::{optimizer_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use loss::{mask_loss_and_gradients, regression_loss_and_gradients, WaveformLoss};
pub use model::{
    apply_mask_and_reconstruct, enhance, forward, forward_mask, forward_snr, log_magnitude_features, GruConfig,
    HeadKind, ModelParams, DEFAULT_FEATURE_SCALE, DEFAULT_FEATURE_SHIFT, LOG_MAGNITUDE_FLOOR,
};
pub use tape::{Gradients, SynthesisContext, Tape, Var};
