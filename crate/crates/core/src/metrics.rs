//! Fairness utility (Balance, Entropy) and clustering utility (NMI, ACC)
//! metrics, plus the two-sample Kolmogorov-Smirnov statistic.
//!
//! All entropies and logarithms use the natural log, with `0 * ln 0 := 0`.

use thiserror::Error;

use crate::data::Clustering;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("inputs have mismatched lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label count {0} exceeds the exact-matcher cap {1}; raise the cap")]
    CapExceeded(usize, usize),
    #[error("empty sample")]
    EmptySample,
}

/// Default size cap for the exact assignment matcher in [`acc`].
pub const DEFAULT_ACC_CAP: usize = 128;

/// Cluster-by-group contingency counts.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    /// `counts[k][g]` = number of samples in cluster `k` with group `g`.
    pub counts: Vec<Vec<usize>>,
    pub cluster_sizes: Vec<usize>,
    pub group_sizes: Vec<usize>,
    pub n: usize,
}

impl ContingencyTable {
    pub fn from_labels(clustering: &Clustering, groups: &[usize]) -> Result<Self, MetricError> {
        if clustering.n() != groups.len() {
            return Err(MetricError::LengthMismatch(clustering.n(), groups.len()));
        }
        let k = clustering.k();
        let l = groups.iter().copied().max().map_or(1, |g| g + 1);
        let mut counts = vec![vec![0usize; l]; k];
        let mut cluster_sizes = vec![0usize; k];
        let mut group_sizes = vec![0usize; l];
        for (&label, &g) in clustering.labels().iter().zip(groups) {
            counts[label][g] += 1;
            cluster_sizes[label] += 1;
            group_sizes[g] += 1;
        }
        Ok(Self {
            counts,
            cluster_sizes,
            group_sizes,
            n: groups.len(),
        })
    }
}

/// Balance: `min_{k,g} min(R, 1/R)` with `R = r^g / r_k`, where `r^g` is the
/// dataset-wide proportion of group `g` and `r_k` the proportion of group `g`
/// within cluster `k`. Returns 0 if any cluster misses any group or is empty.
pub fn balance(clustering: &Clustering, groups: &[usize]) -> Result<f64, MetricError> {
    let table = ContingencyTable::from_labels(clustering, groups)?;
    let n = table.n as f64;
    let mut best = f64::INFINITY;
    for k in 0..clustering.k() {
        let nk = table.cluster_sizes[k];
        for g in 0..table.group_sizes.len() {
            if nk == 0 || table.counts[k][g] == 0 {
                return Ok(0.0);
            }
            let r_g = table.group_sizes[g] as f64 / n;
            let r_k = table.counts[k][g] as f64 / nk as f64;
            let ratio = r_g / r_k;
            best = best.min(ratio.min(1.0 / ratio));
        }
    }
    Ok(best)
}

/// Mean over groups of the per-group fairness entropy
/// `-sum_k (|N_{k,g}| / n_k) ln(|N_{k,g}| / n_k)`.
///
/// Empty clusters contribute nothing (their terms are `0 * ln 0`).
pub fn entropy(clustering: &Clustering, groups: &[usize]) -> Result<f64, MetricError> {
    let table = ContingencyTable::from_labels(clustering, groups)?;
    let l = table.group_sizes.len();
    let mut total = 0.0;
    for g in 0..l {
        let mut e = 0.0;
        for k in 0..clustering.k() {
            let nk = table.cluster_sizes[k];
            if nk == 0 || table.counts[k][g] == 0 {
                continue;
            }
            let p = table.counts[k][g] as f64 / nk as f64;
            e -= p * p.ln();
        }
        total += e;
    }
    Ok(total / l as f64)
}

fn label_entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Whether two labelings induce the same partition of the samples.
fn same_partition(a: &[usize], b: &[usize]) -> bool {
    use std::collections::HashMap;
    let mut fwd: HashMap<usize, usize> = HashMap::new();
    let mut bwd: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Normalized mutual information: `I(Y, L) / ((E(Y) + E(L)) / 2)`.
///
/// If both labelings have zero entropy the ratio is indeterminate; we return
/// 1.0 when they are identical up to relabeling and 0.0 otherwise.
pub fn nmi(clustering: &Clustering, truth: &[usize]) -> Result<f64, MetricError> {
    let labels = clustering.labels();
    if labels.len() != truth.len() {
        return Err(MetricError::LengthMismatch(labels.len(), truth.len()));
    }
    let n = labels.len() as f64;
    let k = clustering.k();
    let c = truth.iter().copied().max().map_or(1, |t| t + 1);
    let mut joint = vec![vec![0usize; c]; k];
    let mut row = vec![0usize; k];
    let mut col = vec![0usize; c];
    for (&l, &t) in labels.iter().zip(truth) {
        joint[l][t] += 1;
        row[l] += 1;
        col[t] += 1;
    }
    let h_l = label_entropy(&row, n);
    let h_t = label_entropy(&col, n);
    let denom = 0.5 * (h_l + h_t);
    if denom == 0.0 {
        return Ok(if same_partition(labels, truth) { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (l, joint_row) in joint.iter().enumerate() {
        for (t, &cnt) in joint_row.iter().enumerate() {
            if cnt == 0 {
                continue;
            }
            let p = cnt as f64 / n;
            mi += p * (p * n * n / (row[l] as f64 * col[t] as f64)).ln();
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Unsupervised clustering accuracy with the optimal label-to-class mapping.
pub fn acc(clustering: &Clustering, truth: &[usize]) -> Result<f64, MetricError> {
    acc_with_cap(clustering, truth, DEFAULT_ACC_CAP)
}

/// [`acc`] with an explicit size cap for the exact matcher.
pub fn acc_with_cap(
    clustering: &Clustering,
    truth: &[usize],
    cap: usize,
) -> Result<f64, MetricError> {
    let labels = clustering.labels();
    if labels.len() != truth.len() {
        return Err(MetricError::LengthMismatch(labels.len(), truth.len()));
    }
    let k = clustering.k();
    let c = truth.iter().copied().max().map_or(1, |t| t + 1);
    if k > cap {
        return Err(MetricError::CapExceeded(k, cap));
    }
    if c > cap {
        return Err(MetricError::CapExceeded(c, cap));
    }
    let m = k.max(c);
    // Profit matrix on the padded square: joint counts.
    let mut profit = vec![vec![0i64; m]; m];
    for (&l, &t) in labels.iter().zip(truth) {
        profit[l][t] += 1;
    }
    let matched = max_assignment(&profit);
    Ok(matched as f64 / labels.len() as f64)
}

/// Maximum-profit perfect assignment on a square matrix, via the Hungarian
/// algorithm with potentials (O(m^3)) on the negated costs.
fn max_assignment(profit: &[Vec<i64>]) -> i64 {
    let m = profit.len();
    let max_entry = profit
        .iter()
        .flat_map(|r| r.iter().copied())
        .max()
        .unwrap_or(0);
    // cost[i][j] >= 0, minimizing cost maximizes profit.
    let cost: Vec<Vec<i64>> = profit
        .iter()
        .map(|r| r.iter().map(|&p| max_entry - p).collect())
        .collect();

    const INF: i64 = i64::MAX / 4;
    let mut u = vec![0i64; m + 1];
    let mut v = vec![0i64; m + 1];
    let mut assignment = vec![0usize; m + 1]; // assignment[j] = row assigned to column j (1-based)
    for i in 1..=m {
        assignment[0] = i;
        let mut j0 = 0usize;
        let mut min_v = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        let mut way = vec![0usize; m + 1];
        loop {
            used[j0] = true;
            let i0 = assignment[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[assignment[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if assignment[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assignment[j0] = assignment[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m)
        .map(|j| profit[assignment[j] - 1][j - 1])
        .sum()
}

/// Result of the two-sample KS test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov statistic: the supremum of the absolute
/// difference between the two empirical CDFs.
///
/// The p-value uses the asymptotic Kolmogorov distribution
/// `Q(lambda) = 2 * sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)` with the
/// small-sample correction `lambda = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * D`
/// for effective size `ne = n*m / (n+m)`.
pub fn ks_statistic(sample_a: &[f64], sample_b: &[f64]) -> Result<KsResult, MetricError> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(MetricError::EmptySample);
    }
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (n, m) = (a.len(), b.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        if diff > d {
            d = diff;
        }
    }
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let p_value = kolmogorov_survival(lambda);
    Ok(KsResult {
        statistic: d,
        p_value,
    })
}

fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn clustering(labels: &[usize], k: usize) -> Clustering {
        Clustering::new(labels.to_vec(), k).unwrap()
    }

    /// Brute-force ACC: maximize over all injective label-to-class mappings.
    fn acc_brute(labels: &[usize], k: usize, truth: &[usize]) -> f64 {
        let c = truth.iter().copied().max().unwrap_or(0) + 1;
        let m = k.max(c);
        let mut perm: Vec<usize> = (0..m).collect();
        let mut best = 0usize;
        permute(&mut perm, 0, &mut |p| {
            let hits = labels
                .iter()
                .zip(truth)
                .filter(|&(&l, &t)| p[l] == t)
                .count();
            best = best.max(hits);
        });
        best as f64 / labels.len() as f64
    }

    fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
        if start == items.len() {
            visit(items);
            return;
        }
        for i in start..items.len() {
            items.swap(start, i);
            permute(items, start + 1, visit);
            items.swap(start, i);
        }
    }

    /// Brute-force KS statistic: sup over every merged sample point.
    fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
        let mut points: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        points.sort_by(|x, y| x.total_cmp(y));
        points
            .iter()
            .map(|&x| {
                let fa = a.iter().filter(|&&v| v <= x).count() as f64 / a.len() as f64;
                let fb = b.iter().filter(|&&v| v <= x).count() as f64 / b.len() as f64;
                (fa - fb).abs()
            })
            .fold(0.0, f64::max)
    }

    // The defended-samples configuration behind the toy example: one cluster
    // with group-0 proportion 1/4 against a dataset proportion of 7/14.
    fn toy_post_attack() -> (Clustering, Vec<usize>) {
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        // Cluster 0: 1 sample of group 0, 3 of group 1.
        labels.extend([0; 4]);
        groups.extend([0, 1, 1, 1]);
        // Cluster 1: 6 of group 0, 4 of group 1.
        labels.extend([1; 10]);
        groups.extend([0, 0, 0, 0, 0, 0, 1, 1, 1, 1]);
        (clustering(&labels, 2), groups)
    }

    #[test]
    fn balance_quarter_vs_half() {
        let (c, groups) = toy_post_attack();
        assert_abs_diff_eq!(balance(&c, &groups).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn balance_perfect_when_proportions_match() {
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let groups = [0, 0, 1, 1, 0, 0, 1, 1];
        assert_abs_diff_eq!(
            balance(&clustering(&labels, 2), &groups).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn balance_zero_when_group_missing_from_cluster() {
        let labels = [0, 0, 1, 1];
        let groups = [0, 0, 0, 1];
        assert_eq!(balance(&clustering(&labels, 2), &groups).unwrap(), 0.0);
    }

    #[test]
    fn entropy_two_even_clusters_is_ln2() {
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        let groups: Vec<usize> = (0..20).map(|i| i % 2).collect();
        assert_abs_diff_eq!(
            entropy(&clustering(&labels, 2), &groups).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropy_pure_clusters_is_zero() {
        let labels = [0, 0, 1, 1];
        let groups = [0, 0, 1, 1];
        assert_eq!(entropy(&clustering(&labels, 2), &groups).unwrap(), 0.0);
    }

    #[test]
    fn entropy_toy_post_attack_value() {
        let (c, groups) = toy_post_attack();
        let e = entropy(&c, &groups).unwrap();
        // Exact value of the (1,3)/(6,4) configuration; reported as 0.617.
        assert_abs_diff_eq!(e, 0.6176734058140324, epsilon = 1e-12);
        assert!((e - 0.617).abs() < 1e-3);
    }

    #[test]
    fn nmi_relabel_invariance() {
        let c = clustering(&[0, 0, 1, 1], 2);
        assert_abs_diff_eq!(nmi(&c, &[1, 1, 0, 0]).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nmi_independent_labelings() {
        let c = clustering(&[0, 1, 0, 1], 2);
        assert_abs_diff_eq!(nmi(&c, &[0, 0, 1, 1]).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn nmi_degenerate_constant_labelings() {
        let c = clustering(&[0, 0, 0], 1);
        assert_eq!(nmi(&c, &[2, 2, 2]).unwrap(), 1.0);
        let c2 = clustering(&[0, 0, 0], 1);
        assert_eq!(nmi(&c2, &[0, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn acc_permutation_gives_one() {
        let c = clustering(&[0, 1, 1, 0], 2);
        assert_abs_diff_eq!(acc(&c, &[1, 0, 0, 1]).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn acc_three_quarters() {
        let c = clustering(&[0, 0, 1, 1], 2);
        assert_abs_diff_eq!(acc(&c, &[0, 1, 1, 1]).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn acc_cap_exceeded() {
        let c = clustering(&[0, 1], 2);
        assert!(matches!(
            acc_with_cap(&c, &[0, 1], 1),
            Err(MetricError::CapExceeded(2, 1))
        ));
    }

    #[test]
    fn acc_matches_brute_force_on_random_instances() {
        use rand::Rng;
        let mut rng = crate::rng::prng(404);
        for _ in 0..200 {
            let k = rng.random_range(2..=5usize);
            let c_classes = rng.random_range(2..=5usize);
            let n = rng.random_range(5..=30usize);
            let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            // Every label < k must be valid; ensure max label defines k.
            labels[0] = k - 1;
            let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..c_classes)).collect();
            let c = clustering(&labels, k);
            let exact = acc(&c, &truth).unwrap();
            let brute = acc_brute(&labels, k, &truth);
            assert_abs_diff_eq!(exact, brute, epsilon = 1e-12);
        }
    }

    #[test]
    fn ks_identical_samples() {
        let s = [1.0, 2.0, 3.0];
        let r = ks_statistic(&s, &s).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn ks_one_third() {
        let r = ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(r.statistic, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ks_disjoint_ranges() {
        let r = ks_statistic(&[0.0, 1.0, 2.0], &[10.0, 11.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 0.2);
    }

    #[test]
    fn ks_rejects_empty() {
        assert!(matches!(
            ks_statistic(&[], &[1.0]),
            Err(MetricError::EmptySample)
        ));
    }

    proptest! {
        #[test]
        fn balance_in_unit_interval(labels in proptest::collection::vec(0usize..3, 4..40),
                                    groups in proptest::collection::vec(0usize..3, 4..40)) {
            let n = labels.len().min(groups.len());
            let mut labels = labels[..n].to_vec();
            labels[0] = 2;
            let groups = groups[..n].to_vec();
            let c = Clustering::new(labels, 3).unwrap();
            let b = balance(&c, &groups).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
            let e = entropy(&c, &groups).unwrap();
            prop_assert!(e >= 0.0);
        }

        #[test]
        fn metrics_invariant_under_cluster_relabeling(
            labels in proptest::collection::vec(0usize..3, 6..30),
            groups in proptest::collection::vec(0usize..2, 6..30),
        ) {
            let n = labels.len().min(groups.len());
            let mut labels = labels[..n].to_vec();
            labels[0] = 2;
            let groups = groups[..n].to_vec();
            let relabeled: Vec<usize> = labels.iter().map(|&l| [2, 0, 1][l]).collect();
            let a = Clustering::new(labels.clone(), 3).unwrap();
            let b = Clustering::new(relabeled, 3).unwrap();
            prop_assert!((balance(&a, &groups).unwrap() - balance(&b, &groups).unwrap()).abs() < 1e-12);
            prop_assert!((entropy(&a, &groups).unwrap() - entropy(&b, &groups).unwrap()).abs() < 1e-12);
            prop_assert!((acc(&a, &groups).unwrap() - acc(&b, &groups).unwrap()).abs() < 1e-12);
            prop_assert!((nmi(&a, &groups).unwrap() - nmi(&b, &groups).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn nmi_symmetric_and_self_unit(labels in proptest::collection::vec(0usize..3, 4..30)) {
            let mut labels = labels;
            labels[0] = 0;
            let last = labels.len() - 1;
            labels[last] = 2;
            let k = 3;
            let c = Clustering::new(labels.clone(), k).unwrap();
            prop_assert!((nmi(&c, &labels).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn ks_matches_brute_force_and_symmetry(
            a in proptest::collection::vec(-5.0f64..5.0, 1..30),
            b in proptest::collection::vec(-5.0f64..5.0, 1..30),
        ) {
            let fwd = ks_statistic(&a, &b).unwrap();
            let rev = ks_statistic(&b, &a).unwrap();
            prop_assert!((fwd.statistic - rev.statistic).abs() < 1e-12);
            prop_assert!((fwd.statistic - ks_brute(&a, &b)).abs() < 1e-12);
        }
    }
}
