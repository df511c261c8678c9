//! Hand-differentiated networks: dense tanh MLPs, the point-set encoder,
//! the Gaussian policy, value and Q regressors, Adam, checkpoints and the
//! finite-difference gradient check.

pub mod checkpoint;
pub mod encoder;
pub mod gradcheck;
pub mod mlp;
pub mod optim;
pub mod policy;
pub mod value;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};
pub use encoder::{Encoder, EncoderCache};
pub use gradcheck::{finite_difference_check, max_relative_error, CheckTarget};
pub use mlp::{Mlp, MlpCache};
pub use optim::Adam;
pub use policy::{
    checksum, gaussian_log_prob, log_prob, log_prob_batch, policy_forward, sample_action, GradientVector, ObsBatch,
    PolicyArch, PolicyCache, PolicyParams, Segment, Subset, LN_2PI,
};
pub use value::{q_input, ValueParams};
