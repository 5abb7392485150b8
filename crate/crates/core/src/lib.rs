//! Word attribute transfer by learned reflections in a pre-trained embedding space.
//!
//! The crate is `no_std` (with `alloc`). It carries the numerical side only:
//! embedding tables and cosine retrieval, a small dense MLP with exact
//! backpropagation and Adam, the reflection models (single mirror and
//! input-parameterized mirrors), the analogy and MLP baselines, dataset
//! splitting, the training loop, evaluation metrics and a planted-mirror
//! synthetic generator. File formats and the command line live in the
//! `reflect` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
pub mod dataset;
pub mod embedding;
mod error;
pub mod eval;
pub mod neural;
pub mod reflection;
pub mod synth;
pub mod training;
pub mod vector;

pub use error::{Error, Result};

/// Common imports.
pub mod prelude {
    pub use crate::baselines::{
        AnalogyModel, DifferenceVector, FixedSign, KnowledgeTable, MlpTransfer, Side,
    };
    pub use crate::dataset::{AttributeDataset, NonAttributeSet, SplitCounts, Triplet, WordPair};
    pub use crate::embedding::{cosine, EmbeddingTable};
    pub use crate::eval::{evaluate, EvalReport, WordTransfer};
    pub use crate::neural::{AdamConfig, AdamState, Mlp, Parameters};
    pub use crate::reflection::{AttributeVector, Mirror, RefModel};
    pub use crate::training::{train, TrainConfig, Trainable};
    pub use crate::{Error, Result};
}
