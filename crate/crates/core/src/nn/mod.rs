//! Tensors with hand-derived gradients, the two-branch segmentation network,
//! the masked cross-entropy loss and Adam.

mod adam;
mod checkpoint;
mod conv;
mod hrnet;
mod loss;
mod resize;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointManifest};
pub use conv::{conv2d, conv2d_backward, ConvGrads};
pub use hrnet::{
    architecture_hash, hrnet_backward, hrnet_forward, hrnet_forward_cached, Backward, ForwardCache, ModelParams,
    ParamSpec, ARCHITECTURE, NUM_CLASSES,
};
pub use loss::{cross_entropy_loss, masked_ce_loss, softmax, LossValue};
pub use resize::{bilinear_resize, bilinear_resize_backward, Scale};
pub use tensor::{relu, relu_backward, Tensor};
