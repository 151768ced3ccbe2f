//! Graph-neural forecasters on a small reverse-mode differentiation core.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod layers;
pub mod networks;
pub mod tape;
pub mod train;

pub use config::{ModelConfig, ModelKind, TrainConfig};
pub use layers::{
    cheb_graph_conv, dcgru_step, diffusion_conv, random_walk_matrices, scaled_laplacian, temporal_gated_conv,
    DcgruParams,
};
pub use networks::{
    encoder_decoder_forward, model_forward, param_layout, scheduled_sampling_prob, stgcn_forward, GraphOperators,
    ParamSet, ParamSpec, Teacher,
};
pub use tape::{Gradients, Tape, Var};
pub use data::{toy_dataset, DaySplit, DenseSeries, Normalizer, Window};
pub use train::{train_model, Adam, EpochLog, TrainReport, TrainedModel};
pub use checkpoint::{load_model, save_model};
