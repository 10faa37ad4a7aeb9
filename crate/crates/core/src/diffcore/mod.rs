//! Minimal reverse-mode differentiable core: tape, layers, optimizer,
//! schedules, and finite-difference gradient checking.

mod gradcheck;
mod nn;
mod optim;
mod tape;

pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport, FD_STEP};
pub use nn::{
    batchnorm, dense, init_batchnorm, init_dense, l2_normalize_rows, mse_to_target, BnUpdate,
    Checkpoint, Mode, Param, ParameterStore, BN_EPS, BN_MOMENTUM, CHECKPOINT_VERSION,
};
pub use optim::{adam_step, cosine_lr, Schedule, TrainConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tape::{Tape, Var};
