//! Semantic codes: a keyed synthetic oracle, the trainable hashing network
//! with its losses and two-stage trainer, and code-space metrics.

mod dataset;
mod losses;
mod metrics;
mod network;
mod oracle;
mod train;

pub use dataset::{pk_batches, synth_dataset, ClusterDataset};
pub use losses::{
    balance_loss, consistency_loss, decorrelation_loss, hash_loss, losses, quantization_loss, stage2_objective,
    sup_con_loss, LossComponents, LossOutput, LossWeights,
};
pub use metrics::{average_reports, bit_entropy, code_metrics, oracle_metrics, MetricProtocol, MetricReport};
pub use network::{
    binarize, gelu, FeatureCache, HashCache, HashNetworkParams, Linear, Mode, Output, Widths, FEATURE_LAYERS,
    HASH_LAYERS,
};
pub use oracle::{oracle_code, Oracle, OracleConfig};
pub use train::{code_separation, train_desk_masker, train_masker, DeskSetup, MaskerRun, TrainConfig, TrainLog};
