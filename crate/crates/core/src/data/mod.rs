//! Datasets: synthetic regression, MNIST IDX files and text corpora.

mod bptt;
mod idx;
mod regression;
mod text;

pub use bptt::{batch_bptt, BpttConfig, BpttWindow};
pub use idx::{
    decode_mnist, load_mnist_idx, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels, Mnist,
    IMAGES_MAGIC, LABELS_MAGIC,
};
pub use regression::{gen_extreme_tail, sample_tail, tail_target, to_tensors, RegressionSample};
pub use text::{index_with, tokenize, tokenize_and_index, TokenMode, Vocabulary, EOS, UNK};
