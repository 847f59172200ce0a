use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::Rows;
use crate::math::dot;

/// Bin count for nearest-neighbour similarity histograms over `[-1, 1]`.
pub const HISTOGRAM_BINS: usize = 40;

/// Fixed-width counts of target-NN and noise-NN similarities.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    /// `bins + 1` edges from -1 to 1.
    pub edges: Vec<f64>,
    pub target_counts: Vec<u64>,
    pub noise_counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bins: usize) -> Self {
        let edges = (0..=bins).map(|i| -1.0 + 2.0 * i as f64 / bins as f64).collect();
        Histogram {
            edges,
            target_counts: vec![0; bins],
            noise_counts: vec![0; bins],
        }
    }

    pub fn bins(&self) -> usize {
        self.target_counts.len()
    }

    fn bin_of(&self, value: f64) -> usize {
        let b = self.bins();
        let idx = ((value + 1.0) / 2.0 * b as f64) as isize;
        idx.clamp(0, b as isize - 1) as usize
    }

    fn add(&mut self, target: Option<f64>, noise: Option<f64>) {
        if let Some(t) = target {
            let i = self.bin_of(t);
            self.target_counts[i] += 1;
        }
        if let Some(n) = noise {
            let i = self.bin_of(n);
            self.noise_counts[i] += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassMargin {
    pub class: u32,
    pub test_count: usize,
    /// False when the class has no reference points of its own, or no other class exists.
    pub available: bool,
    pub median_target: Option<f64>,
    pub median_noise: Option<f64>,
    pub margin: Option<f64>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginReport {
    /// Per query point: largest similarity to a reference point of its own class.
    pub target_nn: Vec<Option<f64>>,
    /// Per query point: largest similarity to a reference point of any other class.
    pub noise_nn: Vec<Option<f64>>,
    pub median_target: f64,
    pub median_noise: f64,
    pub margin: f64,
    pub per_class: Vec<ClassMargin>,
    pub histogram: Histogram,
}

/// Median; the mean of the two middle values for even counts. NaN for empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn check_pair(reference: Rows<'_>, ref_labels: &[u32], queries: Rows<'_>, query_labels: Option<&[u32]>) -> Result<()> {
    if reference.n() == 0 || queries.n() == 0 {
        return Err(Error::invalid("embeddings", "reference and query sets must be non-empty"));
    }
    if reference.d() != queries.d() {
        return Err(Error::Shape {
            expected: format!("query dimension {}", reference.d()),
            found: format!("{}", queries.d()),
        });
    }
    if ref_labels.len() != reference.n() {
        return Err(Error::Shape {
            expected: format!("{} reference labels", reference.n()),
            found: format!("{}", ref_labels.len()),
        });
    }
    if let Some(q) = query_labels {
        if q.len() != queries.n() {
            return Err(Error::Shape {
                expected: format!("{} query labels", queries.n()),
                found: format!("{}", q.len()),
            });
        }
    }
    Ok(())
}

/// Nearest-neighbour similarities of each query to the reference set, split by class.
///
/// With `leave_one_out` the queries are the reference set itself and each
/// point ignores its own row.
pub fn margin_report(
    reference: Rows<'_>,
    ref_labels: &[u32],
    queries: Rows<'_>,
    query_labels: &[u32],
    leave_one_out: bool,
) -> Result<MarginReport> {
    check_pair(reference, ref_labels, queries, Some(query_labels))?;
    if leave_one_out && reference.n() != queries.n() {
        return Err(Error::invalid("leave_one_out", "queries must be the reference set"));
    }
    let mut target_nn = Vec::with_capacity(queries.n());
    let mut noise_nn = Vec::with_capacity(queries.n());
    for q in 0..queries.n() {
        let zq = queries.row(q);
        let (mut t, mut nn): (Option<f64>, Option<f64>) = (None, None);
        for r in 0..reference.n() {
            if leave_one_out && r == q {
                continue;
            }
            let s = dot(zq, reference.row(r));
            let slot = if ref_labels[r] == query_labels[q] { &mut t } else { &mut nn };
            if slot.map_or(true, |cur| s > cur) {
                *slot = Some(s);
            }
        }
        target_nn.push(t);
        noise_nn.push(nn);
    }

    let mut classes: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (q, &c) in query_labels.iter().enumerate() {
        classes.entry(c).or_default().push(q);
    }
    let bins = HISTOGRAM_BINS;
    let mut histogram = Histogram::new(bins);
    let mut per_class = Vec::with_capacity(classes.len());
    for (&class, members) in &classes {
        let mut h = Histogram::new(bins);
        let ts: Vec<f64> = members.iter().filter_map(|&q| target_nn[q]).collect();
        let ns: Vec<f64> = members.iter().filter_map(|&q| noise_nn[q]).collect();
        for &q in members {
            h.add(target_nn[q], noise_nn[q]);
            histogram.add(target_nn[q], noise_nn[q]);
        }
        let available = !ts.is_empty() && !ns.is_empty();
        let median_target = (!ts.is_empty()).then(|| median(&ts));
        let median_noise = (!ns.is_empty()).then(|| median(&ns));
        per_class.push(ClassMargin {
            class,
            test_count: members.len(),
            available,
            margin: if available { Some(median_target.unwrap() - median_noise.unwrap()) } else { None },
            median_target,
            median_noise,
            histogram: h,
        });
    }
    let all_t: Vec<f64> = target_nn.iter().flatten().copied().collect();
    let all_n: Vec<f64> = noise_nn.iter().flatten().copied().collect();
    let median_target = median(&all_t);
    let median_noise = median(&all_n);
    Ok(MarginReport {
        target_nn,
        noise_nn,
        median_target,
        median_noise,
        margin: median_target - median_noise,
        per_class,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KnnResult {
    pub k: usize,
    pub predictions: Vec<u32>,
    /// Fraction of correct predictions, when query labels were supplied.
    pub accuracy: Option<f64>,
}

/// Cosine-similarity kNN with votes weighted by the raw similarity.
///
/// Equal similarities are ordered by reference index; equal vote totals go
/// to the smallest class id. With `leave_one_out` each query skips its own row.
pub fn weighted_knn(
    reference: Rows<'_>,
    ref_labels: &[u32],
    queries: Rows<'_>,
    query_labels: Option<&[u32]>,
    k: usize,
    leave_one_out: bool,
) -> Result<KnnResult> {
    check_pair(reference, ref_labels, queries, query_labels)?;
    let available = reference.n() - usize::from(leave_one_out);
    if k == 0 || k > available {
        return Err(Error::invalid("k", format!("{k} must be in 1..={available}")));
    }
    let mut predictions = Vec::with_capacity(queries.n());
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(reference.n());
    for q in 0..queries.n() {
        let zq = queries.row(q);
        scored.clear();
        scored.extend(
            (0..reference.n())
                .filter(|&r| !(leave_one_out && r == q))
                .map(|r| (dot(zq, reference.row(r)), r)),
        );
        let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
        }
        let mut votes: BTreeMap<u32, f64> = BTreeMap::new();
        for &(s, r) in &scored[..k] {
            *votes.entry(ref_labels[r]).or_insert(0.0) += s;
        }
        let mut best: Option<(u32, f64)> = None;
        for (&c, &v) in &votes {
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((c, v));
            }
        }
        predictions.push(best.expect("k >= 1").0);
    }
    let accuracy = query_labels.map(|labels| {
        let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
        hits as f64 / labels.len() as f64
    });
    Ok(KnnResult { k, predictions, accuracy })
}
