//! Vanilla clusterers (k-means, k-median) and the fairlet-based fair
//! clustering algorithm used as the attack target.
//!
//! Both Lloyd-style clusterers use distance-weighted probabilistic seeding,
//! run a configurable number of restarts, and are bit-deterministic for a
//! given seed. The fair clusterer decomposes the samples into small
//! group-balanced fairlets, clusters the fairlet medoids with k-median, and
//! lets every member inherit its medoid's cluster.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use thiserror::Error;

use crate::data::Clustering;
use crate::rng::{derive_seed, prng, Prng};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("K={k} exceeds the number of points n={n}")]
    KTooLarge { k: usize, n: usize },
    #[error("fairlet decomposition requires exactly 2 protected groups, got {0}")]
    TwoGroupsRequired(usize),
    #[error("invalid parameters: {0}")]
    BadParams(String),
}

/// Configuration shared by all clusterers.
#[derive(Debug, Clone, Copy)]
pub struct ClustererConfig {
    pub k: usize,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Stop when no center moves more than this between iterations.
    pub tolerance: f64,
}

impl ClustererConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 100,
            restarts: 10,
            seed,
            tolerance: 1e-9,
        }
    }
}

/// A fitted clustering along with its centers and objective value.
#[derive(Debug, Clone)]
pub struct ClusterFit {
    pub clustering: Clustering,
    pub centers: Array2<f64>,
    pub objective: f64,
    /// Objective after each assignment step of the winning restart.
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Norm {
    /// Squared Euclidean assignment costs, mean center updates.
    SquaredEuclidean,
    /// L1 assignment costs, coordinate-wise median center updates.
    L1,
}

fn point_cost(a: ArrayView1<f64>, b: ArrayView1<f64>, norm: Norm) -> f64 {
    match norm {
        Norm::SquaredEuclidean => a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum(),
        Norm::L1 => a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum(),
    }
}

pub fn l1_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    point_cost(a, b, Norm::L1)
}

/// Distance-weighted probabilistic seeding: first center uniform, each
/// subsequent center drawn with probability proportional to its current
/// assignment cost.
fn seed_centers(x: ArrayView2<f64>, k: usize, norm: Norm, rng: &mut Prng) -> Array2<f64> {
    let n = x.nrows();
    let d = x.ncols();
    let mut centers = Array2::zeros((k, d));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut best_cost: Vec<f64> = (0..n)
        .map(|i| point_cost(x.row(i), centers.row(0), norm))
        .collect();
    for c in 1..k {
        let total: f64 = best_cost.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in best_cost.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        for i in 0..n {
            let cost = point_cost(x.row(i), centers.row(c), norm);
            if cost < best_cost[i] {
                best_cost[i] = cost;
            }
        }
    }
    centers
}

/// Nearest-center assignment; ties go to the lowest cluster index.
fn assign(x: ArrayView2<f64>, centers: &Array2<f64>, norm: Norm) -> (Vec<usize>, f64) {
    let n = x.nrows();
    let mut labels = vec![0usize; n];
    let mut objective = 0.0;
    for i in 0..n {
        let mut best = f64::INFINITY;
        let mut best_k = 0;
        for (k, center) in centers.rows().into_iter().enumerate() {
            let cost = point_cost(x.row(i), center, norm);
            if cost < best {
                best = cost;
                best_k = k;
            }
        }
        labels[i] = best_k;
        objective += best;
    }
    (labels, objective)
}

fn column_median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

fn update_centers(
    x: ArrayView2<f64>,
    labels: &[usize],
    k: usize,
    norm: Norm,
) -> (Array2<f64>, Vec<usize>) {
    let d = x.ncols();
    let mut centers = Array2::zeros((k, d));
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    match norm {
        Norm::SquaredEuclidean => {
            for (i, &l) in labels.iter().enumerate() {
                let row = x.row(i);
                for col in 0..d {
                    centers[[l, col]] += row[col];
                }
            }
            for l in 0..k {
                if sizes[l] > 0 {
                    for col in 0..d {
                        centers[[l, col]] /= sizes[l] as f64;
                    }
                }
            }
        }
        Norm::L1 => {
            for l in 0..k {
                if sizes[l] == 0 {
                    continue;
                }
                let members: Vec<usize> = labels
                    .iter()
                    .enumerate()
                    .filter(|&(_, &m)| m == l)
                    .map(|(i, _)| i)
                    .collect();
                for col in 0..d {
                    let mut vals: Vec<f64> = members.iter().map(|&i| x[[i, col]]).collect();
                    centers[[l, col]] = column_median(&mut vals);
                }
            }
        }
    }
    (centers, sizes)
}

fn lloyd_once(x: ArrayView2<f64>, config: &ClustererConfig, norm: Norm, seed: u64) -> ClusterFit {
    let mut rng = prng(seed);
    let mut centers = seed_centers(x, config.k, norm, &mut rng);
    let mut history = Vec::new();
    for _ in 0..config.max_iters {
        let (labels, obj) = assign(x, &centers, norm);
        history.push(obj);
        let (mut new_centers, sizes) = update_centers(x, &labels, config.k, norm);
        // Empty-cluster repair: reseed at the point farthest from its
        // assigned center; ties break to the lowest index.
        let mut taken: Vec<usize> = Vec::new();
        for l in 0..config.k {
            if sizes[l] > 0 {
                continue;
            }
            let mut far_idx = 0;
            let mut far_cost = f64::NEG_INFINITY;
            for i in 0..x.nrows() {
                if taken.contains(&i) {
                    continue;
                }
                let cost = point_cost(x.row(i), centers.row(labels[i]), norm);
                if cost > far_cost {
                    far_cost = cost;
                    far_idx = i;
                }
            }
            new_centers.row_mut(l).assign(&x.row(far_idx));
            taken.push(far_idx);
        }
        let moved = centers
            .rows()
            .into_iter()
            .zip(new_centers.rows())
            .map(|(a, b)| point_cost(a, b, Norm::L1))
            .fold(0.0, f64::max);
        centers = new_centers;
        if moved <= config.tolerance {
            break;
        }
    }
    let (labels, objective) = assign(x, &centers, norm);
    history.push(objective);
    let clustering = Clustering::new(labels, config.k).expect("labels bounded by K");
    ClusterFit {
        clustering,
        centers,
        objective,
        objective_history: history,
    }
}

fn lloyd(
    x: ArrayView2<f64>,
    config: &ClustererConfig,
    norm: Norm,
) -> Result<ClusterFit, ClusterError> {
    let n = x.nrows();
    if config.k == 0 || config.k > n {
        return Err(ClusterError::KTooLarge { k: config.k, n });
    }
    if config.restarts == 0 || config.max_iters == 0 {
        return Err(ClusterError::BadParams(
            "restarts and max_iters must be >= 1".to_string(),
        ));
    }
    let mut best: Option<ClusterFit> = None;
    for r in 0..config.restarts {
        let fit = lloyd_once(x, config, norm, derive_seed(config.seed, r as u64));
        let better = match &best {
            None => true,
            Some(b) => fit.objective < b.objective,
        };
        if better {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Lloyd's k-means: best of `config.restarts` seeded runs.
pub fn kmeans(x: ArrayView2<f64>, config: &ClustererConfig) -> Result<Clustering, ClusterError> {
    Ok(kmeans_fit(x, config)?.clustering)
}

/// [`kmeans`] returning centers and objective as well.
pub fn kmeans_fit(x: ArrayView2<f64>, config: &ClustererConfig) -> Result<ClusterFit, ClusterError> {
    lloyd(x, config, Norm::SquaredEuclidean)
}

/// Alternating k-median under L1 distance with coordinate-wise medians.
pub fn kmedian(x: ArrayView2<f64>, config: &ClustererConfig) -> Result<Clustering, ClusterError> {
    Ok(kmedian_fit(x, config)?.clustering)
}

/// [`kmedian`] returning centers and objective as well.
pub fn kmedian_fit(
    x: ArrayView2<f64>,
    config: &ClustererConfig,
) -> Result<ClusterFit, ClusterError> {
    lloyd(x, config, Norm::L1)
}

/// A small subset of points whose two-group count ratio lies in
/// `[p/q, q/p]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fairlet {
    pub members: Vec<usize>,
}

impl Fairlet {
    /// Checks the `(p, q)` ratio bound against the given group vector.
    pub fn satisfies_ratio(&self, groups: &[usize], p: usize, q: usize) -> bool {
        let c0 = self.members.iter().filter(|&&i| groups[i] == 0).count();
        let c1 = self.members.len() - c0;
        let (lo, hi) = (c0.min(c1), c0.max(c1));
        // min/max >= p/q, avoiding division: lo * q >= hi * p.
        lo * q >= hi * p && self.members.len() <= p + q
    }
}

/// Result of [`fairlet_decompose`]: balanced fairlets plus a flagged
/// remainder of samples that could not satisfy the ratio bound.
#[derive(Debug, Clone)]
pub struct FairletDecomposition {
    pub fairlets: Vec<Fairlet>,
    pub remainder: Vec<usize>,
    pub p: usize,
    pub q: usize,
}

struct Proto {
    members: Vec<usize>,
    minority: usize,
    majority: usize,
}

impl Proto {
    fn can_accept_majority(&self, p: usize, q: usize) -> bool {
        self.members.len() < p + q && self.minority * q >= (self.majority + 1) * p
    }
}

/// Greedy two-group fairlet decomposition.
///
/// Pairs each minority-group point with its nearest unused majority-group
/// point (L1 distance), then attaches leftover majority points to the
/// nearest fairlet that can take them; when none can, the two closest
/// fairlets are merged (the merged ratio stays within bounds) and the
/// attachment retried. Points that still cannot be placed form the
/// remainder. All ties break to the lowest index, so the decomposition is
/// deterministic.
pub fn fairlet_decompose(
    x: ArrayView2<f64>,
    groups: &[usize],
    p: usize,
    q: usize,
) -> Result<FairletDecomposition, ClusterError> {
    if x.nrows() != groups.len() {
        return Err(ClusterError::BadParams(format!(
            "features ({}) and groups ({}) misaligned",
            x.nrows(),
            groups.len()
        )));
    }
    let l = groups.iter().copied().max().map_or(1, |g| g + 1);
    if l != 2 {
        return Err(ClusterError::TwoGroupsRequired(l));
    }
    if p == 0 || p > q {
        return Err(ClusterError::BadParams(format!(
            "need 1 <= p <= q, got p={p} q={q}"
        )));
    }
    let count0 = groups.iter().filter(|&&g| g == 0).count();
    let count1 = groups.len() - count0;
    if count0 == 0 || count1 == 0 {
        return Err(ClusterError::TwoGroupsRequired(1));
    }
    let minority_group = if count0 <= count1 { 0 } else { 1 };

    let minority_idx: Vec<usize> = (0..groups.len())
        .filter(|&i| groups[i] == minority_group)
        .collect();
    let mut majority_left: Vec<usize> = (0..groups.len())
        .filter(|&i| groups[i] != minority_group)
        .collect();

    // Phase 1: one nearest-majority pair per minority point.
    let mut protos: Vec<Proto> = Vec::with_capacity(minority_idx.len());
    for &mi in &minority_idx {
        let (pos, _) = majority_left
            .iter()
            .enumerate()
            .map(|(pos, &mj)| (pos, l1_distance(x.row(mi), x.row(mj))))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("majority count >= minority count");
        let mj = majority_left.remove(pos);
        protos.push(Proto {
            members: vec![mi, mj],
            minority: 1,
            majority: 1,
        });
    }

    // Phase 2: place leftover majority points.
    let mut remainder: Vec<usize> = Vec::new();
    'outer: for &mj in majority_left.iter() {
        loop {
            let candidate = protos
                .iter()
                .enumerate()
                .filter(|(_, f)| f.can_accept_majority(p, q))
                .map(|(fi, f)| {
                    let dist = f
                        .members
                        .iter()
                        .map(|&m| l1_distance(x.row(mj), x.row(m)))
                        .fold(f64::INFINITY, f64::min);
                    (fi, dist)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if let Some((fi, _)) = candidate {
                protos[fi].members.push(mj);
                protos[fi].majority += 1;
                continue 'outer;
            }
            // Merge the closest mergeable pair of fairlets and retry.
            let mut best_pair: Option<(usize, usize, f64)> = None;
            for a in 0..protos.len() {
                for b in (a + 1)..protos.len() {
                    if protos[a].members.len() + protos[b].members.len() > p + q {
                        continue;
                    }
                    let dist = protos[a]
                        .members
                        .iter()
                        .flat_map(|&ma| {
                            protos[b]
                                .members
                                .iter()
                                .map(move |&mb| l1_distance(x.row(ma), x.row(mb)))
                        })
                        .fold(f64::INFINITY, f64::min);
                    if best_pair.is_none_or(|(_, _, d)| dist < d) {
                        best_pair = Some((a, b, dist));
                    }
                }
            }
            match best_pair {
                Some((a, b, _)) => {
                    let absorbed = protos.remove(b);
                    protos[a].members.extend(absorbed.members);
                    protos[a].minority += absorbed.minority;
                    protos[a].majority += absorbed.majority;
                }
                None => {
                    remainder.push(mj);
                    continue 'outer;
                }
            }
        }
    }

    let fairlets = protos
        .into_iter()
        .map(|mut f| {
            f.members.sort_unstable();
            Fairlet { members: f.members }
        })
        .collect();
    remainder.sort_unstable();
    Ok(FairletDecomposition {
        fairlets,
        remainder,
        p,
        q,
    })
}

/// L1 medoid of a member set: the member minimizing total L1 distance to
/// the others; ties break to the lowest index.
fn l1_medoid(x: ArrayView2<f64>, members: &[usize]) -> usize {
    members
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let cost =
                |m: usize| -> f64 { members.iter().map(|&o| l1_distance(x.row(m), x.row(o))).sum() };
            cost(a).total_cmp(&cost(b)).then(a.cmp(&b))
        })
        .expect("fairlets are non-empty")
}

/// Fairlet-based fair clustering: decompose into fairlets, cluster the
/// fairlet medoids with k-median, and let members inherit their medoid's
/// cluster. The flagged remainder (if any) participates as one extra
/// fairlet. K is clamped to the number of fairlets when there are fewer
/// fairlets than requested clusters.
pub fn fair_cluster(
    x: ArrayView2<f64>,
    groups: &[usize],
    config: &ClustererConfig,
    p: usize,
    q: usize,
) -> Result<Clustering, ClusterError> {
    let decomposition = fairlet_decompose(x, groups, p, q)?;
    let mut member_sets: Vec<&[usize]> = decomposition
        .fairlets
        .iter()
        .map(|f| f.members.as_slice())
        .collect();
    if !decomposition.remainder.is_empty() {
        member_sets.push(decomposition.remainder.as_slice());
    }
    let medoids: Vec<usize> = member_sets.iter().map(|m| l1_medoid(x, m)).collect();
    let mut medoid_features = Array2::zeros((medoids.len(), x.ncols()));
    for (row, &m) in medoids.iter().enumerate() {
        medoid_features.row_mut(row).assign(&x.row(m));
    }
    let mut medoid_config = *config;
    medoid_config.k = config.k.min(medoids.len());
    let medoid_clustering = kmedian(medoid_features.view(), &medoid_config)?;
    let mut labels = vec![0usize; x.nrows()];
    for (fi, members) in member_sets.iter().enumerate() {
        for &m in members.iter() {
            labels[m] = medoid_clustering.labels()[fi];
        }
    }
    Clustering::new(labels, config.k).map_err(|_| ClusterError::BadParams("empty input".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_gaussian_blobs, make_toy_dataset, BlobSpec, GroupRule};
    use crate::metrics::{acc, balance, nmi};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn two_blobs(seed: u64) -> crate::data::Dataset {
        make_gaussian_blobs(&BlobSpec {
            centers: vec![vec![0.0, 0.0], vec![10.0, 10.0]],
            std: 0.5,
            // Even per-blob counts keep the two groups globally equal.
            counts: vec![16, 14],
            group_rule: GroupRule::AlternatingWithinBlob,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn kmeans_k1_center_is_mean() {
        let x = array![[0.0, 0.0], [2.0, 4.0], [4.0, 2.0]];
        let fit = kmeans_fit(x.view(), &ClustererConfig::new(1, 0)).unwrap();
        assert_abs_diff_eq!(fit.centers[[0, 0]], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.centers[[0, 1]], 2.0, epsilon = 1e-12);
        assert!(fit.clustering.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let ds = two_blobs(3);
        let c = kmeans(ds.features().view(), &ClustererConfig::new(2, 1)).unwrap();
        // Oracle: nearest true center.
        let truth: Vec<usize> = (0..ds.n())
            .map(|i| {
                let row = ds.features().row(i);
                let d0 = row[0] * row[0] + row[1] * row[1];
                let d1 = (row[0] - 10.0).powi(2) + (row[1] - 10.0).powi(2);
                usize::from(d1 < d0)
            })
            .collect();
        assert_abs_diff_eq!(acc(&c, &truth).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kmeans_objective_non_increasing() {
        let ds = two_blobs(7);
        let fit = kmeans_fit(ds.features().view(), &ClustererConfig::new(3, 5)).unwrap();
        for w in fit.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective increased: {w:?}");
        }
    }

    #[test]
    fn kmedian_k1_center_is_median() {
        let x = array![[0.0], [1.0], [100.0]];
        let fit = kmedian_fit(x.view(), &ClustererConfig::new(1, 0)).unwrap();
        assert_abs_diff_eq!(fit.centers[[0, 0]], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kmedian_k_equals_n_zero_objective() {
        let x = array![[0.0], [5.0], [9.0]];
        let fit = kmedian_fit(x.view(), &ClustererConfig::new(3, 2)).unwrap();
        assert_abs_diff_eq!(fit.objective, 0.0, epsilon = 1e-12);
        let mut labels = fit.clustering.labels().to_vec();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn kmedian_objective_non_increasing() {
        let ds = two_blobs(11);
        let fit = kmedian_fit(ds.features().view(), &ClustererConfig::new(3, 9)).unwrap();
        for w in fit.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective increased: {w:?}");
        }
    }

    #[test]
    fn kmeans_rejects_k_larger_than_n() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            kmeans(x.view(), &ClustererConfig::new(3, 0)),
            Err(ClusterError::KTooLarge { k: 3, n: 2 })
        ));
    }

    #[test]
    fn clusterers_deterministic_per_seed() {
        let ds = two_blobs(13);
        let cfg = ClustererConfig::new(2, 21);
        assert_eq!(
            kmeans(ds.features().view(), &cfg).unwrap(),
            kmeans(ds.features().view(), &cfg).unwrap()
        );
        assert_eq!(
            kmedian(ds.features().view(), &cfg).unwrap(),
            kmedian(ds.features().view(), &cfg).unwrap()
        );
    }

    #[test]
    fn final_assignment_is_fixed_point() {
        let ds = two_blobs(17);
        let fit = kmeans_fit(ds.features().view(), &ClustererConfig::new(2, 3)).unwrap();
        let (labels, _) = super::assign(
            ds.features().view(),
            &fit.centers,
            Norm::SquaredEuclidean,
        );
        assert_eq!(labels, fit.clustering.labels());
    }

    #[test]
    fn fairlets_perfect_pairs_when_groups_equal() {
        let ds = two_blobs(19);
        let dec = fairlet_decompose(ds.features().view(), ds.groups(), 1, 1).unwrap();
        assert!(dec.remainder.is_empty());
        assert_eq!(dec.fairlets.len(), 15);
        for f in &dec.fairlets {
            assert_eq!(f.members.len(), 2);
            assert!(f.satisfies_ratio(ds.groups(), 1, 1));
        }
    }

    #[test]
    fn fairlets_single_fairlet_for_2_5_split() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0], [6.0]];
        let groups = [0, 0, 1, 1, 1, 1, 1];
        let dec = fairlet_decompose(x.view(), &groups, 2, 5).unwrap();
        assert!(dec.remainder.is_empty());
        assert_eq!(dec.fairlets.len(), 1);
        assert_eq!(dec.fairlets[0].members, vec![0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn fairlets_reject_single_group() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(
            fairlet_decompose(x.view(), &[0, 0], 1, 1),
            Err(ClusterError::TwoGroupsRequired(_))
        ));
    }

    #[test]
    fn fairlets_all_satisfy_ratio_bound() {
        use rand::Rng;
        let mut rng = crate::rng::prng(23);
        for trial in 0..50 {
            let n = rng.random_range(6..40usize);
            let ds = make_gaussian_blobs(&BlobSpec {
                centers: vec![vec![0.0, 0.0], vec![3.0, 3.0]],
                std: 1.0,
                counts: vec![n / 2, n - n / 2],
                group_rule: GroupRule::AlternatingWithinBlob,
                seed: trial,
            })
            .unwrap();
            let (p, q) = (2, 5);
            let dec = fairlet_decompose(ds.features().view(), ds.groups(), p, q).unwrap();
            for f in &dec.fairlets {
                assert!(
                    f.satisfies_ratio(ds.groups(), p, q),
                    "trial {trial}: fairlet {:?} violates ratio",
                    f.members
                );
            }
            let placed: usize =
                dec.fairlets.iter().map(|f| f.members.len()).sum::<usize>() + dec.remainder.len();
            assert_eq!(placed, ds.n());
        }
    }

    #[test]
    fn fair_cluster_toy_is_perfectly_balanced() {
        let (ds, _) = make_toy_dataset(0);
        let c = fair_cluster(
            ds.features().view(),
            ds.groups(),
            &ClustererConfig::new(2, 0),
            2,
            5,
        )
        .unwrap();
        assert_abs_diff_eq!(balance(&c, ds.groups()).unwrap(), 1.0, epsilon = 1e-12);
        let truth = ds.truth_labels().unwrap();
        assert!(nmi(&c, truth).unwrap() >= 0.6);
        assert!(acc(&c, truth).unwrap() >= 0.85);
    }

    #[test]
    fn fair_cluster_interleaved_pairs_balance_one() {
        let ds = two_blobs(29);
        let c = fair_cluster(
            ds.features().view(),
            ds.groups(),
            &ClustererConfig::new(2, 1),
            1,
            1,
        )
        .unwrap();
        // Equal group counts: every fairlet is one-of-each, so Balance is exact.
        assert_abs_diff_eq!(balance(&c, ds.groups()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fair_cluster_single_cluster_balance_one() {
        let ds = two_blobs(31);
        let c = fair_cluster(
            ds.features().view(),
            ds.groups(),
            &ClustererConfig::new(1, 1),
            2,
            5,
        )
        .unwrap();
        assert_abs_diff_eq!(balance(&c, ds.groups()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fair_cluster_balance_bounded_by_ratio_without_remainder() {
        let (p, q) = (2, 5);
        for seed in 0..10u64 {
            let ds = make_gaussian_blobs(&BlobSpec {
                centers: vec![vec![0.0, 0.0], vec![4.0, 0.0]],
                std: 0.8,
                counts: vec![12, 12],
                group_rule: GroupRule::AlternatingWithinBlob,
                seed,
            })
            .unwrap();
            let dec = fairlet_decompose(ds.features().view(), ds.groups(), p, q).unwrap();
            if !dec.remainder.is_empty() {
                continue;
            }
            let c = fair_cluster(
                ds.features().view(),
                ds.groups(),
                &ClustererConfig::new(2, seed),
                p,
                q,
            )
            .unwrap();
            let b = balance(&c, ds.groups()).unwrap();
            assert!(
                b >= p as f64 / q as f64 - 1e-12,
                "seed {seed}: balance {b} below p/q"
            );
        }
    }
}
