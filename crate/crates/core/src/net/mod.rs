//! From-scratch FCN: tensors, layers, loss, Adam, training, checkpoints
//! and gradient verification.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{compare_gradients, gradient_check, GradCheckConfig, GradCheckReport};
pub use loss::{loss, loss_map, OutputActivation};
pub use model::{image_to_tensor, ArchConfig, FcnModel, FcnParams};
pub use tensor::{Real, Tensor};
pub use train::{fine_tune, train, write_curve_csv, CurveRow, Sample, SnapshotSpec, TrainConfig, TrainReport};
