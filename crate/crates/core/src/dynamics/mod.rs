//! Gradient-descent dynamics and the closed-form predictions they are compared against.

mod asymptotic;
mod predict;
mod problem;
mod train;

pub use asymptotic::{
    algorithm_projectors, asymptotic_output, dqntk_asymptotic_output, AsymptoticOutput, Projectors, Tensor4,
};
pub use predict::{
    interaction_bound, predict_dqntk_learning, predict_dqntk_optimization, predict_frozen_learning,
    predict_frozen_optimization, prediction_csv, FrozenScalarPrediction, Prediction, PredictionKind, Validity,
};
pub use problem::{Evaluation, Orientation, Problem};
pub use train::{dynamical_kernel_trace, gd_step, train, DescentConfig, TrainingTrace};
