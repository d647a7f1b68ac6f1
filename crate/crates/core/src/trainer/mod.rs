//! Objectives, optimizer and the training loops for the base decoder and
//! the adapter/memory fine-tuning.

mod losses;
mod optim;
mod pretrain;
mod train;

pub use losses::{
    backward_loss, cycle_loss, forward_loss, nll_sum, total_loss, CycleTerm, EncodedPair, LossParts, LossWeights,
    CYCLE_DECODE_CAP,
};
pub use optim::{clip_global_norm, AdamW, LrSchedule};
pub use pretrain::{heldout_nll, lm_loss, pretrain_base, PretrainConfig, PretrainReport};
pub use train::{train, write_loss_log, StepLog, TrainConfig, TrainReport, LOSS_LOG_HEADER};
