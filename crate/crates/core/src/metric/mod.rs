//! Metric learning on time-aligned fragment groups: the group-contrastive
//! loss with its analytic gradient, feature/waveform augmentations, the
//! group batch sampler, and a small trainable linear encoder.

mod augment;
mod loss;
mod sampler;
mod train;

pub use augment::{
    augment_mix, augment_pitch_shift, augment_splice_out, augment_time_stretch, MAX_PITCH_SHIFT,
    STRETCH_RANGE,
};
pub use loss::{ntxent_grad, ntxent_loss, LossParams};
pub use sampler::{sample_batch, FragmentGroup, TrainingBatch};
pub use train::{
    load_toy_encoder, save_toy_encoder, synthetic_training_groups, train_toy_encoder,
    ToyLinearEncoder, TrainOptions,
};
