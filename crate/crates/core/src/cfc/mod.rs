//! Consensus fair clustering: a two-stage defense against protected-group
//! poisoning.
//!
//! Stage 1 clusters random row/feature subsamples into `r` basic partitions
//! and summarizes them in an n-by-n co-association matrix; attacked samples
//! are a small fraction of every subsample, which blunts their influence.
//! Stage 2 trains a small embedding network against a combined objective:
//! a neighborhood contrastive loss on the co-association graph, a fair
//! clustering loss that pulls each protected group toward the same soft
//! cluster usage, and a structural preservation loss anchored to a
//! reference fair clustering.

mod losses;
mod model;
mod partitions;
mod train;

pub use losses::{
    contrastive_loss, contrastive_loss_grad, fair_loss, fair_loss_grad, fair_target,
    neighborhood_weights, soft_assignments, structural_loss, structural_loss_grad, GammaMode,
    SoftAssignment,
};
pub use model::{load_checkpoint, save_checkpoint, CfcHyper, CfcModel};
pub use partitions::{
    co_association, generate_basic_partitions, load_coassociation, save_coassociation,
    BasicPartitionSet, CoAssociationMatrix, PartitionMeta, PartitionSpec,
};
pub use train::{
    grad_check, j_from_clustering, run_cfc, train_cfc, CfcLosses, CfcOutput, CfcPipelineConfig,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CfcError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Cluster(#[from] crate::clusterers::ClusterError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(
        "non-finite loss at epoch {epoch}: contrastive={contrastive} fair={fair} structural={structural}"
    )]
    NonFiniteLoss {
        epoch: usize,
        contrastive: f64,
        fair: f64,
        structural: f64,
    },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: String, reason: String },
}
