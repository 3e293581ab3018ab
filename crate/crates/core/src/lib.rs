//! No-reference quality assessment for tone-mapped HDR images.
//!
//! The pipeline has two stages. A small convolutional encoder-decoder
//! ([`mapnet`]) predicts six contrast-distortion maps from a tone-mapped
//! image alone. The image and its maps are then summarized by
//! asymmetric generalized Gaussian statistics ([`features`]) and regressed
//! onto a quality score with an epsilon-SVR ([`svr`]).
//!
//! Training labels for the network come from a full-reference contrast
//! visibility model ([`oracle`]) that compares an HDR scene against its
//! tone-mapped rendition. [`tonemap`] and [`corpus`] produce such pairs,
//! and [`eval`] measures PLCC, SROCC and RMSE under repeated random splits.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod hdrio;
pub mod image;
pub mod mapnet;
pub mod oracle;
pub mod rng;
pub mod svr;
pub mod tonemap;

pub use error::{Error, Result};
pub use image::{HdrImage, LdrImage, Plane};
pub use oracle::{DistortionMapSet, MapKind};
