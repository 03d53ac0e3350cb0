//! Adaptive cluster-weighted minority oversampling.
//!
//! A simplified take on A-SUWO (adaptive semi-unsupervised weighted
//! oversampling):
//!
//! 1. Minority rows are clustered by average-linkage agglomeration. Merging
//!    stops at a quantile of the pairwise minority distances, and a merge is
//!    refused when the midpoint of the two cluster centroids has a majority
//!    row as its nearest neighbour.
//! 2. Each cluster is weighted by the inverse of its members' mean distance
//!    to their nearest majority rows, so clusters close to the majority class
//!    receive more synthetics.
//! 3. Synthetics interpolate between a cluster member and one of its nearest
//!    same-cluster neighbours.
//!
//! Singleton clusters cannot be interpolated and receive no synthetics. If
//! every cluster is a singleton, the whole minority class is used as one
//! cluster.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{squared_distance, Matrix};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum OversampleError {
    #[error("the minority class needs at least two rows, found {0}")]
    DegenerateMinority(usize),
    #[error("both classes must be present")]
    SingleClass,
    #[error("{got} labels for {expected} rows")]
    LabelMismatch { expected: usize, got: usize },
    #[error("invalid oversampling configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OversampleConfig {
    /// Minority to majority ratio after oversampling.
    pub target_ratio: f64,
    pub k_majority: usize,
    pub k_intra: usize,
    pub linkage_threshold_quantile: f64,
    pub seed: u64,
}

impl Default for OversampleConfig {
    fn default() -> Self {
        Self {
            target_ratio: 1.0,
            k_majority: 5,
            k_intra: 5,
            linkage_threshold_quantile: 0.9,
            seed: 0,
        }
    }
}

impl OversampleConfig {
    pub fn validate(&self) -> Result<(), OversampleError> {
        if !(self.target_ratio > 0.0 && self.target_ratio.is_finite()) {
            return Err(OversampleError::InvalidConfig(format!(
                "target_ratio must be positive, got {}",
                self.target_ratio
            )));
        }
        if self.k_majority == 0 || self.k_intra == 0 {
            return Err(OversampleError::InvalidConfig(
                "k_majority and k_intra must be at least 1".into(),
            ));
        }
        let q = self.linkage_threshold_quantile;
        if !(q > 0.0 && q <= 1.0) {
            return Err(OversampleError::InvalidConfig(format!(
                "linkage_threshold_quantile must lie in (0, 1], got {q}"
            )));
        }
        Ok(())
    }
}

/// Original rows followed by synthetic minority rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedSet {
    pub x: Matrix,
    pub y: Vec<bool>,
    /// `true` for synthetic rows.
    pub synthetic: Vec<bool>,
    /// For each synthetic row (in order), the indices of its two parents in
    /// the input matrix.
    pub parents: Vec<(usize, usize)>,
    pub minority_label: bool,
    /// Minority row indices per cluster.
    pub clusters: Vec<Vec<usize>>,
    /// Sampling weight per cluster; sums to 1.
    pub cluster_weights: Vec<f64>,
    /// Synthetic rows drawn from each cluster.
    pub cluster_counts: Vec<usize>,
}

impl BalancedSet {
    pub fn n_original(&self) -> usize {
        self.synthetic.iter().filter(|s| !**s).count()
    }

    pub fn n_synthetic(&self) -> usize {
        self.parents.len()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let minority = self.y.iter().filter(|&&l| l == self.minority_label).count();
        (minority, self.y.len() - minority)
    }
}

pub fn oversample(
    x: &Matrix,
    y: &[bool],
    cfg: &OversampleConfig,
) -> Result<BalancedSet, OversampleError> {
    cfg.validate()?;
    if y.len() != x.n_rows() {
        return Err(OversampleError::LabelMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    let n_pos = y.iter().filter(|&&l| l).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(OversampleError::SingleClass);
    }
    let minority_label = n_pos <= n_neg;
    let minority: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority_label).collect();
    let majority: Vec<usize> = (0..y.len()).filter(|&i| y[i] != minority_label).collect();
    if minority.len() < 2 {
        return Err(OversampleError::DegenerateMinority(minority.len()));
    }

    let target = (cfg.target_ratio * majority.len() as f64).round() as usize;
    let needed = target.saturating_sub(minority.len());

    let mut clusters = cluster_minority(x, &minority, &majority, cfg.linkage_threshold_quantile);
    clusters.retain(|c| c.len() >= 2);
    if clusters.is_empty() {
        clusters.push(minority.clone());
    }
    let cluster_weights = cluster_weights(x, &clusters, &majority, cfg.k_majority);
    let cluster_counts = allocate(needed, &cluster_weights);

    let mut out_x = x.clone();
    let mut out_y = y.to_vec();
    let mut synthetic = vec![false; y.len()];
    let mut parents = Vec::with_capacity(needed);
    let mut rng = rng::stream(cfg.seed, 0);
    let mut buf = vec![0.0; x.n_cols()];
    for (members, &count) in clusters.iter().zip(&cluster_counts) {
        if count == 0 {
            continue;
        }
        let neighbours: Vec<Vec<usize>> = members
            .iter()
            .map(|&i| nearest_within(x, i, members, cfg.k_intra))
            .collect();
        for _ in 0..count {
            let a = rng.random_range(0..members.len());
            let nb = &neighbours[a];
            let j = nb[rng.random_range(0..nb.len())];
            let i = members[a];
            let u: f64 = rng.random();
            for ((b, &xi), &xj) in buf.iter_mut().zip(x.row(i)).zip(x.row(j)) {
                *b = (xi + u * (xj - xi)).clamp(xi.min(xj), xi.max(xj));
            }
            out_x.push_row(&buf);
            out_y.push(minority_label);
            synthetic.push(true);
            parents.push((i, j));
        }
    }
    Ok(BalancedSet {
        x: out_x,
        y: out_y,
        synthetic,
        parents,
        minority_label,
        clusters,
        cluster_weights,
        cluster_counts,
    })
}

/// `k` nearest other members of `members` to row `i`, by (distance, index).
fn nearest_within(x: &Matrix, i: usize, members: &[usize], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = members
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| (squared_distance(x.row(i), x.row(j)), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, j)| j).collect()
}

#[derive(PartialEq)]
struct Candidate {
    dist: f64,
    a: usize,
    b: usize,
    versions: (u32, u32),
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Average-linkage clustering of the minority rows with the majority
/// midpoint veto. Returns clusters as lists of row indices into `x`.
pub fn cluster_minority(
    x: &Matrix,
    minority: &[usize],
    majority: &[usize],
    quantile: f64,
) -> Vec<Vec<usize>> {
    let m = minority.len();
    let d = x.n_cols();
    let mut dist = vec![0.0; m * m];
    let mut pairwise = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in a + 1..m {
            let v = squared_distance(x.row(minority[a]), x.row(minority[b])).sqrt();
            dist[a * m + b] = v;
            dist[b * m + a] = v;
            pairwise.push(v);
        }
    }
    if pairwise.is_empty() {
        return minority.iter().map(|&i| vec![i]).collect();
    }
    pairwise.sort_by(f64::total_cmp);
    let rank = ((quantile * pairwise.len() as f64).ceil() as usize).clamp(1, pairwise.len());
    let cut = pairwise[rank - 1];

    let mut members: Vec<Vec<usize>> = (0..m).map(|a| vec![a]).collect();
    let mut sums: Vec<Vec<f64>> = minority.iter().map(|&i| x.row(i).to_vec()).collect();
    let mut active = vec![true; m];
    let mut version = vec![0u32; m];
    let mut heap = BinaryHeap::new();
    for a in 0..m {
        for b in a + 1..m {
            heap.push(Reverse(Candidate {
                dist: dist[a * m + b],
                a,
                b,
                versions: (0, 0),
            }));
        }
    }
    let mut midpoint = vec![0.0; d];
    while let Some(Reverse(c)) = heap.pop() {
        if !active[c.a] || !active[c.b] || c.versions != (version[c.a], version[c.b]) {
            continue;
        }
        if c.dist > cut {
            break;
        }
        let (na, nb) = (members[c.a].len() as f64, members[c.b].len() as f64);
        for ((mp, sa), sb) in midpoint.iter_mut().zip(&sums[c.a]).zip(&sums[c.b]) {
            *mp = 0.5 * (sa / na + sb / nb);
        }
        if nearest_is_majority(x, &midpoint, minority, majority) {
            continue;
        }
        // Merge b into a with the Lance-Williams average-linkage update.
        let (a, b) = (c.a, c.b);
        for k in 0..m {
            if active[k] && k != a && k != b {
                let v = (na * dist[a * m + k] + nb * dist[b * m + k]) / (na + nb);
                dist[a * m + k] = v;
                dist[k * m + a] = v;
            }
        }
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        let sb = std::mem::take(&mut sums[b]);
        for (sa, v) in sums[a].iter_mut().zip(sb) {
            *sa += v;
        }
        active[b] = false;
        version[a] += 1;
        for k in 0..m {
            if active[k] && k != a {
                let (lo, hi) = if k < a { (k, a) } else { (a, k) };
                heap.push(Reverse(Candidate {
                    dist: dist[a * m + k],
                    a: lo,
                    b: hi,
                    versions: (version[lo], version[hi]),
                }));
            }
        }
    }
    (0..m)
        .filter(|&a| active[a])
        .map(|a| {
            let mut c: Vec<usize> = members[a].iter().map(|&k| minority[k]).collect();
            c.sort_unstable();
            c
        })
        .collect()
}

/// Whether some majority row is strictly closer to `p` than every minority row.
fn nearest_is_majority(x: &Matrix, p: &[f64], minority: &[usize], majority: &[usize]) -> bool {
    let best_minority = minority
        .iter()
        .map(|&i| squared_distance(x.row(i), p))
        .fold(f64::INFINITY, f64::min);
    majority
        .iter()
        .any(|&i| squared_distance(x.row(i), p) < best_minority)
}

fn cluster_weights(x: &Matrix, clusters: &[Vec<usize>], majority: &[usize], k: usize) -> Vec<f64> {
    let k = k.min(majority.len());
    let raw: Vec<f64> = clusters
        .iter()
        .map(|members| {
            let mean: f64 = members
                .iter()
                .map(|&i| {
                    let mut d: Vec<f64> = majority
                        .iter()
                        .map(|&j| squared_distance(x.row(i), x.row(j)).sqrt())
                        .collect();
                    d.sort_by(f64::total_cmp);
                    d[..k].iter().sum::<f64>() / k as f64
                })
                .sum::<f64>()
                / members.len() as f64;
            if mean > 0.0 {
                1.0 / mean
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let n_inf = raw.iter().filter(|w| w.is_infinite()).count();
    if n_inf > 0 {
        // Clusters sitting on top of majority rows share all the weight.
        return raw
            .iter()
            .map(|w| {
                if w.is_infinite() {
                    1.0 / n_inf as f64
                } else {
                    0.0
                }
            })
            .collect();
    }
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Splits `total` into integer counts proportional to `weights` by the
/// largest-remainder rule; ties go to the earlier cluster.
pub fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (quotas[b] - quotas[b].floor())
            .total_cmp(&(quotas[a] - quotas[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> OversampleConfig {
        OversampleConfig {
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn balanced_input_needs_nothing() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [5.0], [6.0]]);
        let out = oversample(&x, &[true, true, false, false], &cfg()).unwrap();
        assert_eq!(out.n_synthetic(), 0);
        assert_eq!(out.x, x);
    }

    #[test]
    fn two_point_minority_stays_on_segment() {
        let mut rows = vec![[0.0, 0.0], [1.0, 1.0]];
        let mut y = vec![true, true];
        for i in 0..10 {
            rows.push([5.0 + i as f64, -3.0]);
            y.push(false);
        }
        let out = oversample(&Matrix::from_rows(&rows), &y, &cfg()).unwrap();
        assert_eq!(out.n_synthetic(), 8);
        for r in out.x.rows().skip(12) {
            assert!((r[0] - r[1]).abs() < 1e-15 && (0.0..=1.0).contains(&r[0]));
        }
    }

    #[test]
    fn errors() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        assert_eq!(
            oversample(&x, &[true, false, false], &cfg()),
            Err(OversampleError::DegenerateMinority(1))
        );
        assert_eq!(
            oversample(&x, &[false, false, false], &cfg()),
            Err(OversampleError::SingleClass)
        );
        let bad = OversampleConfig {
            target_ratio: 0.0,
            ..cfg()
        };
        assert!(matches!(
            oversample(&x, &[true, true, false], &bad),
            Err(OversampleError::InvalidConfig(_))
        ));
    }

    #[test]
    fn majority_veto_splits_clusters() {
        // Two minority pairs separated by a majority wall.
        let rows = [
            [0.0],
            [0.1],
            [10.0],
            [10.1],
            [5.0],
            [5.1],
            [4.9],
            [20.0],
            [21.0],
            [22.0],
        ];
        let y = [
            true, true, true, true, false, false, false, false, false, false,
        ];
        let x = Matrix::from_rows(&rows);
        let minority = [0, 1, 2, 3];
        let majority = [4, 5, 6, 7, 8, 9];
        let clusters = cluster_minority(&x, &minority, &majority, 1.0);
        assert_eq!(clusters, vec![vec![0, 1], vec![2, 3]]);
        let out = oversample(
            &x,
            &y,
            &OversampleConfig {
                linkage_threshold_quantile: 1.0,
                ..cfg()
            },
        )
        .unwrap();
        assert_eq!(out.class_counts(), (6, 6));
        for &(i, j) in &out.parents {
            assert_eq!(i < 2, j < 2);
        }
    }

    #[test]
    fn allocation_is_exact() {
        assert_eq!(allocate(10, &[0.5, 0.25, 0.25]), vec![5, 3, 2]);
        assert_eq!(allocate(0, &[1.0]), vec![0]);
        assert_eq!(allocate(7, &[1.0 / 3.0; 3]).iter().sum::<usize>(), 7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn invariants(
            pts in prop::collection::vec((-20i32..20, -20i32..20), 12..60),
            n_min in 2usize..6,
            seed in any::<u64>(),
        ) {
            let n_min = n_min.min(pts.len() / 2);
            let rows: Vec<[f64; 2]> = pts.iter().map(|p| [p.0 as f64, p.1 as f64]).collect();
            let y: Vec<bool> = (0..rows.len()).map(|i| i < n_min).collect();
            let x = Matrix::from_rows(&rows);
            let cfg = OversampleConfig { seed, ..Default::default() };
            let out = oversample(&x, &y, &cfg).unwrap();
            let (mi, ma) = out.class_counts();
            prop_assert_eq!(ma, rows.len() - n_min);
            prop_assert!((mi as f64 - ma as f64).abs() <= 1.0);
            for i in 0..rows.len() {
                prop_assert_eq!(out.x.row(i), x.row(i));
                prop_assert!(!out.synthetic[i]);
            }
            let wsum: f64 = out.cluster_weights.iter().sum();
            prop_assert!((wsum - 1.0).abs() < 1e-9);
            prop_assert!(out.cluster_weights.iter().all(|w| *w >= 0.0));
            for (s, &(i, j)) in out.x.rows().skip(rows.len()).zip(&out.parents) {
                prop_assert!(y[i] && y[j]);
                for (c, &v) in s.iter().enumerate() {
                    let (a, b) = (x.get(i, c), x.get(j, c));
                    prop_assert!(a.min(b) <= v && v <= a.max(b));
                }
            }
            prop_assert_eq!(&out, &oversample(&x, &y, &cfg).unwrap());
        }
    }
}
