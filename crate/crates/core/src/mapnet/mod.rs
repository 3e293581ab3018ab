//! Convolutional encoder-decoder that predicts a distortion map from the
//! luminance of a tone-mapped image, with hand-written backpropagation.

pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod tile;
pub mod train;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use model::{architecture, check_layers, ConvParams, Layer, Mode, RcNet, TrainMeta};
pub use tensor::{Real, Tensor};
pub use tile::{predict_image, predict_plane, ModelSet, TileConfig};
pub use train::{evaluate_mse, train, Patch, TrainConfig};
