//! Cropped training: crops, sampling, AdamW with cosine annealing,
//! checkpoints, warm-start transfer and discriminative fine-tuning.

pub mod checkpoint;
pub mod crops;
pub mod optim;
pub mod plan;
pub mod predict;
pub mod sampler;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use crops::{crop_offsets, make_crops, Crop};
pub use optim::{cosine_schedule, group_learning_rates, AdamW};
pub use plan::{Hyper, InitFrom, SamplerKind, TrainPlan};
pub use predict::{aggregate, predict_all, predict_recording, Prediction};
pub use sampler::{BalancedSampler, Bucket};
pub use trainer::{
    fine_tune, init_from, metrics_csv, train, train_observed, EpochMetrics, TrainOutcome,
};
