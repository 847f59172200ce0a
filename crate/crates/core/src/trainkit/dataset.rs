use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::project_row;
use crate::math::{dot, sqrt};
use crate::rng::seeded;

/// Clustered points on the unit sphere, one cluster per class.
///
/// Class mean directions are placed symmetrically: every pair of means is
/// at chord distance `class_separation`. The largest feasible separation is
/// that of a regular simplex, `sqrt(2 + 2/(k-1))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticDatasetSpec {
    pub k_classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    pub class_separation: f64,
    /// Standard deviation of the isotropic Gaussian added to the mean before renormalising.
    pub within_class_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            k_classes: 2,
            per_class: 200,
            feature_dim: 16,
            class_separation: 1.0,
            within_class_noise: 0.15,
            seed: 0,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_classes < 2 {
            return Err(Error::invalid("k_classes", "need at least 2 classes"));
        }
        if self.per_class < 2 {
            return Err(Error::invalid("per_class", "need at least 2 items per class"));
        }
        if !(self.within_class_noise >= 0.0 && self.within_class_noise.is_finite()) {
            return Err(Error::invalid("within_class_noise", "must be finite and >= 0"));
        }
        let k = self.k_classes as f64;
        let max_sep = sqrt(2.0 + 2.0 / (k - 1.0));
        let sep = self.class_separation;
        if !(sep >= 0.0 && sep <= max_sep + 1e-12) {
            return Err(Error::invalid(
                "class_separation",
                format!("{sep} infeasible for {} classes (max {max_sep})", self.k_classes),
            ));
        }
        // k orthonormal offsets plus an orthogonal base direction
        let needed = if sep >= max_sep - 1e-12 { self.k_classes } else { self.k_classes + 1 };
        if self.feature_dim < needed {
            return Err(Error::invalid(
                "feature_dim",
                format!("{} classes at separation {sep} need feature_dim >= {needed}", self.k_classes),
            ));
        }
        Ok(())
    }
}

/// Row-major unit feature vectors with their labels.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Split {
    pub d: usize,
    pub features: Vec<f64>,
    pub labels: Vec<u32>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    pub spec: SyntheticDatasetSpec,
    pub class_means: Vec<Vec<f64>>,
    pub train: Split,
    pub test: Split,
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// `count` orthonormal vectors in `R^d` by Gram-Schmidt on Gaussian draws.
fn orthonormal<R: Rng + ?Sized>(rng: &mut R, d: usize, count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian_vec(rng, d);
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        if project_row(&mut v).is_ok() {
            basis.push(v);
        }
    }
    basis
}

fn class_means<R: Rng + ?Sized>(spec: &SyntheticDatasetSpec, rng: &mut R) -> Vec<Vec<f64>> {
    let (k, d) = (spec.k_classes, spec.feature_dim);
    let kf = k as f64;
    let max_sep = sqrt(2.0 + 2.0 / (kf - 1.0));
    let simplex = spec.class_separation >= max_sep - 1e-12;
    let basis = orthonormal(rng, d, if simplex { k } else { k + 1 });
    let base = if simplex { None } else { Some(&basis[k]) };
    if spec.class_separation == 0.0 {
        return alloc::vec![basis[k].clone(); k];
    }
    // simplex directions v_c have pairwise cosine -1/(k-1); tilting them
    // towards a shared base by beta sets the pairwise cosine to c
    let c = 1.0 - spec.class_separation * spec.class_separation / 2.0;
    let beta = if simplex {
        0.0
    } else {
        sqrt(((c + 1.0 / (kf - 1.0)) / (1.0 - c)).max(0.0))
    };
    let centroid: Vec<f64> = (0..d).map(|j| basis[..k].iter().map(|u| u[j]).sum::<f64>() / kf).collect();
    (0..k)
        .map(|ci| {
            let mut v: Vec<f64> = basis[ci].iter().zip(&centroid).map(|(u, m)| u - m).collect();
            project_row(&mut v).expect("simplex vertex is non-zero");
            if let Some(b) = base {
                v.iter_mut().zip(b).for_each(|(x, y)| *x += beta * y);
                project_row(&mut v).expect("non-zero");
            }
            v
        })
        .collect()
}

/// Draws the dataset and splits each class 90/10 into train and test (at least one test item per class).
pub fn generate_dataset(spec: &SyntheticDatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let means = class_means(spec, &mut rng);
    let d = spec.feature_dim;
    let n_test = (spec.per_class / 10).max(1);
    let mut train = Split { d, features: Vec::new(), labels: Vec::new() };
    let mut test = Split { d, features: Vec::new(), labels: Vec::new() };
    for (c, mean) in means.iter().enumerate() {
        for i in 0..spec.per_class {
            let mut x: Vec<f64> = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + spec.within_class_noise * z
                })
                .collect();
            if project_row(&mut x).is_err() {
                x.clone_from(mean);
            }
            let split = if i < spec.per_class - n_test { &mut train } else { &mut test };
            split.features.extend_from_slice(&x);
            split.labels.push(c as u32);
        }
    }
    Ok(Dataset {
        spec: spec.clone(),
        class_means: means,
        train,
        test,
    })
}
