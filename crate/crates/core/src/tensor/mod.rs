//! Tensors, layers, parameter files, and differentiable evaluation.

mod container;
pub mod graph;
pub mod layers;
#[allow(clippy::module_inception)]
mod tensor;
mod weights;

pub use container::{decode, encode, load_container, save_container, MAGIC, VERSION};
pub use graph::{
    DiffOp, Evaluator, FrameRecorder, Gradients, LayerStates, Node, Recorder, Tape,
};
pub use layers::{layer_forward, Activation, LayerSpec, ParamShape};
pub use tensor::{DType, ParamStore, Tensor, TensorData};
pub use weights::{param_name, Description, LayerWeights, Weights};

/// Total trainable parameters of a description.
pub fn count_params(desc: &[(String, LayerSpec)]) -> usize {
    desc.iter().map(|(_, s)| s.param_count()).sum()
}

/// Multiply-accumulates per second at `frames_per_second`.
pub fn count_macs(desc: &[(String, LayerSpec)], frames_per_second: f64) -> f64 {
    let per_frame: usize = desc.iter().map(|(_, s)| s.macs_per_frame()).sum();
    per_frame as f64 * frames_per_second
}
