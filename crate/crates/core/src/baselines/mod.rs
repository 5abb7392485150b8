//! Baselines: difference-vector analogies and a direct MLP transfer.

mod analogy;
mod mlp;

pub use analogy::{
    analogy_transfer, analogy_transfer_fixed, mean_diff, select_diff, AnalogyModel,
    DifferenceVector, FixedSign, KnowledgeTable, MeanDiff, Side,
};
pub use mlp::MlpTransfer;
