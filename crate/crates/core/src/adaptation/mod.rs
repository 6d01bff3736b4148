//! Ways of obtaining receiver weights: joint (offline) training, online
//! retraining on pilots, and hypernetwork generation from a channel estimate.

mod dataset;
mod estimate;
mod hyper_train;
mod hypernet;
mod train;

pub use dataset::{generate_datasets, Dataset, DatasetBlock, DatasetConfig, Datasets};
pub use estimate::{
    build_user_embedding, embedding_layout, embeddings_graph, ls_estimate, Segment, UserEmbedding,
    MAX_CONDITION,
};
pub use hyper_train::{
    dataset_loss, hypernet_loss_and_grads, hypernet_train, HyperTrainConfig, HyperTrainReport,
};
pub use hypernet::{
    generate_receiver, hyper_network_size, hyper_output_dim, hypernet_adapt, hypernet_forward,
    hypernet_output, HypernetNodes, HypernetParams, HYPER_HIDDEN1, HYPER_HIDDEN2,
    OUTPUT_INIT_SCALE,
};
pub use train::{
    joint_train, online_adapt, receiver_loss, train_receiver, JointBank, TrainConfig,
    TrainingRegime,
};
