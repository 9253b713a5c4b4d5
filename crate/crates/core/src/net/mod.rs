//! Dense → Dense → BiLSTM → BiLSTM → Dense regression network, its
//! gradients, optimizer, training loop and checkpoint format.

mod adam;
mod backward;
mod checkpoint;
mod forward;
mod gradcheck;
mod params;
mod train;

pub use adam::{adam_step, AdamState};
pub use backward::model_backward;
pub use checkpoint::{array_row, row_array, Checkpoint, CHECKPOINT_MAGIC};
pub use forward::{model_forward, model_predict, mse_loss, ForwardCache};
pub use gradcheck::{grad_check, sample_problem, small_config, TARGET_OFFSET, GradCheckProblem, GradCheckReport, RELU_MARGIN};
pub use params::{init_params, Activation, BiLstm, Dense, LstmDir, ModelConfig, ModelParams};
pub use train::{dataset_mse, predict, train_model, train_model_with_schedule, SeqData, TrainConfig, TrainHistory};

#[cfg(test)]
mod tests;
