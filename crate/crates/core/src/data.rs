//! Datasets, clusterings, attack splits, and the index mappings between
//! attacked and defended samples.
//!
//! An attack partitions the sample indices into an adversary-controlled set
//! (`attacked`) and the remaining defended set. [`merge_groups`] rebuilds a
//! full group vector from per-side values, and [`restrict_labels`] extracts
//! the cluster labels of the defended samples; the attack objective is
//! composed from these two mappings.

use std::path::Path;

use ndarray::Array2;
use rand::distr::Distribution;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::prng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse failure in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("missing required column `{0}` in header")]
    MissingColumn(String),
    #[error("feature columns must be contiguous f0..f{{d-1}}; problem near `{0}`")]
    BadFeatureHeader(String),
    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: String },
    #[error("invalid value `{value}` at row {row}, column {column}")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset is empty")]
    Empty,
    #[error("group id {0} never appears in the dataset")]
    MissingGroup(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cluster label {label} out of range for K={k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("centers have inconsistent dimensions: {0} vs {1}")]
    CenterDimensionMismatch(usize, usize),
    #[error("invalid blob spec: {0}")]
    BadBlobSpec(String),
}

/// A tabular dataset with per-sample protected-group memberships and
/// optional ground-truth class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    groups: Vec<usize>,
    truth_labels: Option<Vec<usize>>,
    num_groups: usize,
}

impl Dataset {
    /// Validates and wraps raw fields. `num_groups` is inferred as
    /// `1 + max(groups)`; every id in `[0, L)` must appear at least once.
    pub fn new(
        features: Array2<f64>,
        groups: Vec<usize>,
        truth_labels: Option<Vec<usize>>,
    ) -> Result<Self, DataError> {
        let n = features.nrows();
        if n == 0 || features.ncols() == 0 {
            return Err(DataError::Empty);
        }
        if groups.len() != n {
            return Err(DataError::LengthMismatch {
                expected: n,
                got: groups.len(),
            });
        }
        if let Some(t) = &truth_labels {
            if t.len() != n {
                return Err(DataError::LengthMismatch {
                    expected: n,
                    got: t.len(),
                });
            }
        }
        for ((row, col), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(DataError::NonFiniteFeature {
                    row,
                    column: format!("f{col}"),
                });
            }
        }
        let num_groups = groups.iter().copied().max().unwrap_or(0) + 1;
        let mut seen = vec![false; num_groups];
        for &g in &groups {
            seen[g] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(DataError::MissingGroup(missing));
        }
        Ok(Self {
            features,
            groups,
            truth_labels,
            num_groups,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of protected groups L.
    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn truth_labels(&self) -> Option<&[usize]> {
        self.truth_labels.as_deref()
    }

    /// Same dataset with the group vector replaced (used when evaluating a
    /// perturbed group assignment).
    pub fn with_groups(&self, groups: Vec<usize>) -> Result<Self, DataError> {
        Dataset::new(self.features.clone(), groups, self.truth_labels.clone())
    }
}

/// An assignment of each of `n` samples to one of `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    labels: Vec<usize>,
    k: usize,
}

impl Clustering {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self, DataError> {
        if labels.is_empty() || k == 0 {
            return Err(DataError::Empty);
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(DataError::LabelOutOfRange { label, k });
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Empty clusters are permitted but callers may want to know.
    pub fn has_empty_cluster(&self) -> bool {
        let mut seen = vec![false; self.k];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.iter().any(|s| !s)
    }
}

/// Partition of `{0, .., n-1}` into adversary-controlled and defended
/// index sets. Both sides are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSplit {
    pub attacked: Vec<usize>,
    pub defended: Vec<usize>,
}

impl AttackSplit {
    pub fn n(&self) -> usize {
        self.attacked.len() + self.defended.len()
    }

    /// Checks the partition invariant: disjoint, sorted, covering `[0, n)`.
    pub fn is_valid(&self) -> bool {
        let mut seen = vec![0u8; self.n()];
        for &i in self.attacked.iter().chain(self.defended.iter()) {
            if i >= seen.len() {
                return false;
            }
            seen[i] += 1;
        }
        seen.iter().all(|&c| c == 1)
            && self.attacked.windows(2).all(|w| w[0] < w[1])
            && self.defended.windows(2).all(|w| w[0] < w[1])
    }
}

/// Candidate group ids aligned with one side of an [`AttackSplit`].
pub type GroupAssignment = Vec<usize>;

/// Column-role mapping for [`load_dataset`]: names of the group column and
/// the optional truth-label column. Feature columns are always `f0..f{d-1}`.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub group_column: String,
    pub label_column: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            group_column: "group".to_string(),
            label_column: Some("label".to_string()),
        }
    }
}

/// Reads a dataset CSV (`f0..f{d-1}`, `group`, optional `label`).
///
/// Sparse group ids are densified to `[0, L)`; the returned table maps each
/// dense id back to the original id found in the file.
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
) -> Result<(Dataset, Vec<u64>), DataError> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::Reader::from_path(path.as_ref()).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                DataError::Io {
                    path: path_str.clone(),
                    source: io,
                }
            } else {
                unreachable!()
            }
        }
        _ => DataError::Csv {
            path: path_str.clone(),
            source: e,
        },
    })?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv {
            path: path_str.clone(),
            source: e,
        })?
        .clone();

    let mut feature_cols = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        if let Some(rest) = name.strip_prefix('f') {
            if let Ok(fi) = rest.parse::<usize>() {
                feature_cols.push((fi, idx));
            }
        }
    }
    feature_cols.sort_unstable();
    for (expect, &(fi, _)) in feature_cols.iter().enumerate() {
        if fi != expect {
            return Err(DataError::BadFeatureHeader(format!("f{fi}")));
        }
    }
    if feature_cols.is_empty() {
        return Err(DataError::BadFeatureHeader("f0".to_string()));
    }
    let group_idx = headers
        .iter()
        .position(|h| h == schema.group_column)
        .ok_or_else(|| DataError::MissingColumn(schema.group_column.clone()))?;
    let label_idx = schema
        .label_column
        .as_ref()
        .and_then(|name| headers.iter().position(|h| h == name));

    let d = feature_cols.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut raw_groups: Vec<u64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv {
            path: path_str.clone(),
            source: e,
        })?;
        for &(fi, col) in &feature_cols {
            let cell = record.get(col).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| DataError::BadCell {
                row: row_no,
                column: format!("f{fi}"),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFiniteFeature {
                    row: row_no,
                    column: format!("f{fi}"),
                });
            }
            rows.push(v);
        }
        let gcell = record.get(group_idx).unwrap_or("");
        let g: u64 = gcell.parse().map_err(|_| DataError::BadCell {
            row: row_no,
            column: schema.group_column.clone(),
            value: gcell.to_string(),
        })?;
        raw_groups.push(g);
        if let Some(li) = label_idx {
            let lcell = record.get(li).unwrap_or("");
            let l: usize = lcell.parse().map_err(|_| DataError::BadCell {
                row: row_no,
                column: "label".to_string(),
                value: lcell.to_string(),
            })?;
            labels.push(l);
        }
    }
    let n = raw_groups.len();
    if n == 0 {
        return Err(DataError::Empty);
    }

    // Densify sparse group ids, remembering the original ids.
    let mut remap: Vec<u64> = raw_groups.clone();
    remap.sort_unstable();
    remap.dedup();
    let groups: Vec<usize> = raw_groups
        .iter()
        .map(|g| remap.binary_search(g).unwrap())
        .collect();

    let features = Array2::from_shape_vec((n, d), rows).expect("row-major shape");
    let truth = if label_idx.is_some() { Some(labels) } else { None };
    let dataset = Dataset::new(features, groups, truth)?;
    Ok((dataset, remap))
}

/// Writes a dataset in the CSV format accepted by [`load_dataset`].
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path_str = path.as_ref().display().to_string();
    let mut writer = csv::Writer::from_path(path.as_ref()).map_err(|e| DataError::Csv {
        path: path_str.clone(),
        source: e,
    })?;
    let mut header: Vec<String> = (0..dataset.dim()).map(|i| format!("f{i}")).collect();
    header.push("group".to_string());
    if dataset.truth_labels().is_some() {
        header.push("label".to_string());
    }
    let io_err = |e: csv::Error| DataError::Csv {
        path: path_str.clone(),
        source: e,
    };
    writer.write_record(&header).map_err(io_err)?;
    for i in 0..dataset.n() {
        let mut record: Vec<String> = dataset
            .features()
            .row(i)
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        record.push(dataset.groups()[i].to_string());
        if let Some(t) = dataset.truth_labels() {
            record.push(t[i].to_string());
        }
        writer.write_record(&record).map_err(io_err)?;
    }
    writer.flush().map_err(|e| DataError::Io {
        path: path_str,
        source: e,
    })?;
    Ok(())
}

/// Specification for [`make_gaussian_blobs`].
#[derive(Debug, Clone)]
pub struct BlobSpec {
    /// One center per blob; all centers must share a dimension.
    pub centers: Vec<Vec<f64>>,
    pub std: f64,
    /// Samples per blob, aligned with `centers`.
    pub counts: Vec<usize>,
    pub group_rule: GroupRule,
    pub seed: u64,
}

/// How protected groups are assigned to generated samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupRule {
    /// All samples in one group.
    Single,
    /// Groups alternate 0,1,0,1,.. within each blob, so the ideal
    /// per-blob clustering is perfectly balanced.
    AlternatingWithinBlob,
    /// Group id equals blob id.
    ByBlob,
}

/// Deterministic synthetic Gaussian mixture. Truth labels are blob ids.
pub fn make_gaussian_blobs(spec: &BlobSpec) -> Result<Dataset, DataError> {
    if spec.centers.is_empty() || spec.counts.len() != spec.centers.len() {
        return Err(DataError::BadBlobSpec(
            "centers and counts must be non-empty and aligned".to_string(),
        ));
    }
    if spec.counts.iter().any(|&c| c == 0) {
        return Err(DataError::BadBlobSpec("counts must be >= 1".to_string()));
    }
    if !(spec.std > 0.0) {
        return Err(DataError::BadBlobSpec("std must be > 0".to_string()));
    }
    let d = spec.centers[0].len();
    for c in &spec.centers {
        if c.len() != d {
            return Err(DataError::CenterDimensionMismatch(d, c.len()));
        }
    }
    let n: usize = spec.counts.iter().sum();
    let mut rng = prng(spec.seed);
    let normal = Normal::new(0.0, spec.std).expect("std checked above");
    let mut features = Array2::zeros((n, d));
    let mut groups = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut row = 0;
    for (blob, (center, &count)) in spec.centers.iter().zip(&spec.counts).enumerate() {
        for j in 0..count {
            for (col, &c) in center.iter().enumerate() {
                features[[row, col]] = c + normal.sample(&mut rng);
            }
            truth.push(blob);
            groups.push(match spec.group_rule {
                GroupRule::Single => 0,
                GroupRule::AlternatingWithinBlob => j % 2,
                GroupRule::ByBlob => blob,
            });
            row += 1;
        }
    }
    Dataset::new(features, groups, Some(truth))
}

/// The 20-sample two-blob toy instance: isotropic Gaussians with std 0.12
/// at (4,0) and (4.5,0), 10 samples each, two alternating protected groups.
///
/// 14 samples are defended and 6 attacked, chosen so that the defended side
/// carries 4+4 balanced samples in the first blob and 3+3 in the second;
/// the ideal 2-clustering therefore has Balance exactly 1.0 on the defended
/// samples. The intended cluster count is K=2.
pub fn make_toy_dataset(seed: u64) -> (Dataset, AttackSplit) {
    let spec = BlobSpec {
        centers: vec![vec![4.0, 0.0], vec![4.5, 0.0]],
        std: 0.12,
        counts: vec![10, 10],
        group_rule: GroupRule::AlternatingWithinBlob,
        seed,
    };
    let dataset = make_gaussian_blobs(&spec).expect("fixed toy spec is valid");
    // Last two samples of blob 1 (one per group) and last four of blob 2
    // (two per group) are adversary-controlled.
    let attacked = vec![8, 9, 16, 17, 18, 19];
    let defended = (0..20).filter(|i| !attacked.contains(i)).collect();
    (dataset, AttackSplit { attacked, defended })
}

/// Uniform random attack split with `|attacked| = round(fraction * n)`.
pub fn split_attack_set(dataset: &Dataset, fraction: f64, seed: u64) -> AttackSplit {
    let n = dataset.n();
    let m = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = prng(seed);
    let mut attacked: Vec<usize> = rand::seq::index::sample(&mut rng, n, m).into_vec();
    attacked.sort_unstable();
    let defended = (0..n).filter(|i| !attacked.contains(i)).collect();
    AttackSplit { attacked, defended }
}

/// Rebuilds a full group vector from the per-side values of a split.
pub fn merge_groups(
    attacked_values: &[usize],
    defended_values: &[usize],
    split: &AttackSplit,
) -> Result<Vec<usize>, DataError> {
    if attacked_values.len() != split.attacked.len() {
        return Err(DataError::LengthMismatch {
            expected: split.attacked.len(),
            got: attacked_values.len(),
        });
    }
    if defended_values.len() != split.defended.len() {
        return Err(DataError::LengthMismatch {
            expected: split.defended.len(),
            got: defended_values.len(),
        });
    }
    let mut full = vec![0usize; split.n()];
    for (&idx, &v) in split.attacked.iter().zip(attacked_values) {
        full[idx] = v;
    }
    for (&idx, &v) in split.defended.iter().zip(defended_values) {
        full[idx] = v;
    }
    Ok(full)
}

/// Extracts the values of a full vector at the given indices, in index order.
pub fn restrict(full: &[usize], indices: &[usize]) -> Vec<usize> {
    indices.iter().map(|&i| full[i]).collect()
}

/// Cluster labels of the defended samples, in index order.
pub fn restrict_labels(clustering: &Clustering, split: &AttackSplit) -> Vec<usize> {
    restrict(clustering.labels(), &split.defended)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn temp_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_four_rows_two_groups() {
        let f = temp_csv("f0,f1,group\n1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,0\n7.0,8.0,1\n");
        let (ds, remap) = load_dataset(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.num_groups(), 2);
        assert_eq!(remap, vec![0, 1]);
        assert!(ds.truth_labels().is_none());
    }

    #[test]
    fn load_densifies_sparse_group_ids() {
        let f = temp_csv("f0,group\n1.0,0\n2.0,2\n3.0,2\n");
        let (ds, remap) = load_dataset(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.num_groups(), 2);
        assert_eq!(ds.groups(), &[0, 1, 1]);
        assert_eq!(remap, vec![0, 2]);
    }

    #[test]
    fn load_rejects_nan_cell() {
        let f = temp_csv("f0,group\nNaN,0\n");
        let err = load_dataset(f.path(), &CsvSchema::default()).unwrap_err();
        match err {
            DataError::NonFiniteFeature { row, column } => {
                assert_eq!(row, 0);
                assert_eq!(column, "f0");
            }
            other => panic!("expected NonFiniteFeature, got {other:?}"),
        }
    }

    #[test]
    fn load_reports_missing_group_column() {
        let f = temp_csv("f0,grp\n1.0,0\n");
        assert!(matches!(
            load_dataset(f.path(), &CsvSchema::default()),
            Err(DataError::MissingColumn(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let (ds, _) = make_toy_dataset(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        save_dataset(&ds, &path).unwrap();
        let (back, _) = load_dataset(&path, &CsvSchema::default()).unwrap();
        assert_eq!(back.groups(), ds.groups());
        assert_eq!(back.truth_labels(), ds.truth_labels());
        assert_eq!(back.features(), ds.features());
    }

    #[test]
    fn toy_dataset_shape_and_split() {
        let (ds, split) = make_toy_dataset(11);
        assert_eq!(ds.n(), 20);
        assert_eq!(ds.dim(), 2);
        assert_eq!(split.attacked.len(), 6);
        assert_eq!(split.defended.len(), 14);
        assert!(split.is_valid());
        // Defended side is perfectly balanceable: 4+4 in blob 1, 3+3 in blob 2.
        let truth = ds.truth_labels().unwrap();
        for blob in 0..2 {
            let per_group: Vec<usize> = (0..2)
                .map(|g| {
                    split
                        .defended
                        .iter()
                        .filter(|&&i| truth[i] == blob && ds.groups()[i] == g)
                        .count()
                })
                .collect();
            assert_eq!(per_group[0], per_group[1]);
        }
    }

    #[test]
    fn toy_dataset_deterministic() {
        let (a, sa) = make_toy_dataset(5);
        let (b, sb) = make_toy_dataset(5);
        assert_eq!(a.features(), b.features());
        assert_eq!(sa, sb);
    }

    #[test]
    fn toy_blob_means_near_centers() {
        // Standard-error bound: each blob mean within 3 * 0.12 / sqrt(10)
        // of its center per coordinate.
        let bound = 3.0 * 0.12 / (10.0f64).sqrt();
        for seed in [0, 1, 2, 3, 4] {
            let (ds, _) = make_toy_dataset(seed);
            let centers = [[4.0, 0.0], [4.5, 0.0]];
            for blob in 0..2 {
                for col in 0..2 {
                    let mean: f64 = (0..10)
                        .map(|j| ds.features()[[blob * 10 + j, col]])
                        .sum::<f64>()
                        / 10.0;
                    assert!(
                        (mean - centers[blob][col]).abs() < bound,
                        "seed {seed} blob {blob} col {col}: mean {mean}"
                    );
                }
            }
        }
    }

    #[test]
    fn blobs_single_center() {
        let ds = make_gaussian_blobs(&BlobSpec {
            centers: vec![vec![1.0, -2.0]],
            std: 0.5,
            counts: vec![5],
            group_rule: GroupRule::Single,
            seed: 9,
        })
        .unwrap();
        assert_eq!(ds.n(), 5);
        assert_eq!(ds.num_groups(), 1);
        for row in ds.features().rows() {
            let dist = ((row[0] - 1.0).powi(2) + (row[1] + 2.0).powi(2)).sqrt();
            assert!(dist.is_finite() && dist < 10.0);
        }
    }

    #[test]
    fn blobs_reject_mismatched_centers() {
        let err = make_gaussian_blobs(&BlobSpec {
            centers: vec![vec![0.0], vec![0.0, 1.0]],
            std: 1.0,
            counts: vec![1, 1],
            group_rule: GroupRule::Single,
            seed: 0,
        })
        .unwrap_err();
        assert!(matches!(err, DataError::CenterDimensionMismatch(1, 2)));
    }

    #[test]
    fn blobs_deterministic() {
        let spec = BlobSpec {
            centers: vec![vec![0.0, 0.0], vec![5.0, 5.0]],
            std: 1.0,
            counts: vec![10, 10],
            group_rule: GroupRule::AlternatingWithinBlob,
            seed: 42,
        };
        let a = make_gaussian_blobs(&spec).unwrap();
        let b = make_gaussian_blobs(&spec).unwrap();
        assert_eq!(a.features(), b.features());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = make_gaussian_blobs(&BlobSpec {
            centers: vec![vec![0.0]],
            std: 1.0,
            counts: vec![100],
            group_rule: GroupRule::Single,
            seed: 1,
        })
        .unwrap();
        let s = split_attack_set(&ds, 0.15, 7);
        assert_eq!(s.attacked.len(), 15);
        assert_eq!(s.defended.len(), 85);
        assert!(s.is_valid());
        assert_eq!(s, split_attack_set(&ds, 0.15, 7));

        let empty = split_attack_set(&ds, 0.0, 7);
        assert!(empty.attacked.is_empty());
        assert_eq!(empty.defended.len(), 100);
    }

    #[test]
    fn merge_places_values_at_original_indices() {
        let split = AttackSplit {
            attacked: vec![2],
            defended: vec![0, 1, 3],
        };
        let merged = merge_groups(&[1], &[0, 0, 0], &split).unwrap();
        assert_eq!(merged, vec![0, 0, 1, 0]);
    }

    #[test]
    fn merge_empty_attacked_side() {
        let split = AttackSplit {
            attacked: vec![],
            defended: vec![0, 1, 2],
        };
        assert_eq!(merge_groups(&[], &[2, 0, 1], &split).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn merge_rejects_length_mismatch() {
        let split = AttackSplit {
            attacked: vec![0],
            defended: vec![1],
        };
        assert!(merge_groups(&[], &[0], &split).is_err());
    }

    #[test]
    fn restrict_labels_cases() {
        let c = Clustering::new(vec![0, 1, 1, 0], 2).unwrap();
        let split = AttackSplit {
            attacked: vec![1, 2],
            defended: vec![0, 3],
        };
        assert_eq!(restrict_labels(&c, &split), vec![0, 0]);
        let all = AttackSplit {
            attacked: vec![],
            defended: vec![0, 1, 2, 3],
        };
        assert_eq!(restrict_labels(&c, &all), c.labels());
        let none = AttackSplit {
            attacked: vec![0, 1, 2, 3],
            defended: vec![],
        };
        assert!(restrict_labels(&c, &none).is_empty());
    }

    #[test]
    fn clustering_flags_empty_cluster() {
        let c = Clustering::new(vec![0, 0, 2], 3).unwrap();
        assert!(c.has_empty_cluster());
        let full = Clustering::new(vec![0, 1, 2], 3).unwrap();
        assert!(!full.has_empty_cluster());
    }

    #[test]
    fn dataset_rejects_gap_in_group_ids() {
        let err = Dataset::new(array![[0.0], [1.0]], vec![0, 2], None).unwrap_err();
        assert!(matches!(err, DataError::MissingGroup(1)));
    }

    #[test]
    fn attack_split_json_shape() {
        let split = AttackSplit {
            attacked: vec![1],
            defended: vec![0, 2],
        };
        let json = serde_json::to_string(&split).unwrap();
        assert_eq!(json, r#"{"attacked":[1],"defended":[0,2]}"#);
        let back: AttackSplit = serde_json::from_str(&json).unwrap();
        assert_eq!(back, split);
    }
}
