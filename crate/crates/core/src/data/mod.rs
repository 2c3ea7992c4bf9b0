//! Datasets, vertical partitioning and the plaintext reference trainers.

mod dataset;
pub mod idx;
pub mod oracle;
pub mod shadow;

pub use dataset::{
    encode_features, encode_labels, load_csv, save_csv, split_train_test, split_vertical, synth, synth_with, Dataset,
    Matrix, SynthOptions, VerticalPartition, FEATURE_CLAMP,
};
pub use idx::{load_idx, load_mnist_dir};
pub use oracle::{accuracy, gradient, loss, plaintext_train, predict, Activation, FloatRun};
pub use shadow::ShadowTrainer;
