//! Two-stage clean-sample selection for learning with instance-dependent
//! label noise.
//!
//! The first stage ranks samples by the cosine similarity between their
//! feature and the center of their (noisy) label class, and splits each class
//! with a two-component 1D Gaussian mixture. Rare or ambiguous classes are
//! pooled before fitting. The second stage trains two classifier heads to
//! disagree on the first-stage clean set and keeps only the samples on which
//! they still agree. The resulting labeled/unlabeled split drives a
//! MixMatch-style semi-supervised training loop.
//!
//! The crate is `no_std` (it needs `alloc`). All transcendental functions go
//! through `libm`, so results are bit-reproducible across targets. File
//! formats and the command line live in the companion `cleansel` crate.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod mixmatch;
pub mod nn;
pub mod noise;
pub mod rng;
pub mod stage1;
pub mod stage2;
pub mod trainer;

pub use data::LabeledDataset;
pub use error::{Error, Result};
pub use gmm::{Gmm1DFit, PosteriorRow};
pub use linalg::DenseMatrix;
pub use nn::{ModelParams, OptimState, ParamGroups};
pub use stage1::Partition;
pub use trainer::{RunReport, TrainConfig};
