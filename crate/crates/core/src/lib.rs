#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod error;
pub mod genmodel;
pub mod geometry;
pub mod gradients;
pub mod losses;
pub(crate) mod math;
pub mod rng;
pub mod trainkit;

pub use error::{Error, Result};
pub use geometry::{
    cosine_similarity_matrix, partition_for_anchor, renormalize_rows, EmbeddingMatrix, IndexPartition,
    LabelVector, Rows, SimilarityMatrix, Temperature,
};
pub use math::{log_add_exp, log_sum_exp};
