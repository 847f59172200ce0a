use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{project_row, LabelVector};
use crate::trainkit::dataset::Split;

/// Reshuffles allowed per epoch before a single-class batch becomes an error.
pub const MAX_BATCH_RETRIES: usize = 100;

/// Two augmented views of each sampled item.
///
/// Views are laid out as `[item_0 view A, item_0 view B, item_1 view A, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Training-set index of each view.
    pub items: Vec<usize>,
    pub views: Vec<f64>,
    pub labels: LabelVector,
}

/// One epoch of batches: `batch_size / 2` items per batch, each contributing two views.
///
/// A view is the item's feature plus isotropic Gaussian noise of scale
/// `augmentation_sigma`, projected back onto the sphere. The trailing partial
/// batch is dropped.
pub fn make_batches<R: Rng + ?Sized>(
    split: &Split,
    batch_size: usize,
    augmentation_sigma: f64,
    rng: &mut R,
) -> Result<Vec<Batch>> {
    if batch_size < 4 || batch_size % 2 != 0 {
        return Err(Error::invalid("batch_size", format!("{batch_size} must be even and >= 4")));
    }
    let per_batch = batch_size / 2;
    if split.len() < per_batch {
        return Err(Error::invalid(
            "batch_size",
            format!("needs {per_batch} items per batch but the split has {}", split.len()),
        ));
    }
    let mut order: Vec<usize> = (0..split.len()).collect();
    let mut attempts = 0;
    loop {
        order.shuffle(rng);
        let ok = order
            .chunks_exact(per_batch)
            .all(|chunk| chunk.iter().any(|&i| split.labels[i] != split.labels[chunk[0]]));
        if ok {
            break;
        }
        attempts += 1;
        if attempts >= MAX_BATCH_RETRIES {
            return Err(Error::invalid(
                "batch",
                format!("could not draw batches with two classes after {MAX_BATCH_RETRIES} reshuffles"),
            ));
        }
    }
    let d = split.d;
    let mut batches = Vec::with_capacity(split.len() / per_batch);
    for chunk in order.chunks_exact(per_batch) {
        let mut items = Vec::with_capacity(batch_size);
        let mut views = Vec::with_capacity(batch_size * d);
        let mut labels = Vec::with_capacity(batch_size);
        for &i in chunk {
            for _ in 0..2 {
                let start = views.len();
                views.extend_from_slice(split.row(i));
                if augmentation_sigma > 0.0 {
                    for v in &mut views[start..] {
                        let z: f64 = StandardNormal.sample(rng);
                        *v += augmentation_sigma * z;
                    }
                    if project_row(&mut views[start..]).is_err() {
                        views.truncate(start);
                        views.extend_from_slice(split.row(i));
                    }
                }
                items.push(i);
                labels.push(split.labels[i]);
            }
        }
        batches.push(Batch {
            items,
            views,
            labels: LabelVector::new(labels),
        });
    }
    Ok(batches)
}
