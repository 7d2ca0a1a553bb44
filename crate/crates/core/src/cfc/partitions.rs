//! Stage 1 of the consensus defense: basic partitions on random
//! row/feature subsamples and the co-association matrix built from them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;

use super::CfcError;
use crate::clusterers::{kmeans_fit, ClustererConfig};
use crate::data::Clustering;
use crate::rng::{derive_seed, prng};

/// Controls for [`generate_basic_partitions`].
#[derive(Debug, Clone)]
pub struct PartitionSpec {
    /// Number of basic partitions `r`.
    pub partitions: usize,
    /// Fraction of rows sampled (without replacement) for each partition.
    pub row_fraction: f64,
    /// Fraction of feature columns sampled for each partition.
    pub col_fraction: f64,
    /// Inclusive range the per-partition cluster count is drawn from.
    pub k_range: (usize, usize),
    pub seed: u64,
}

impl PartitionSpec {
    pub fn new(partitions: usize, k: usize, seed: u64) -> Self {
        Self {
            partitions,
            row_fraction: 0.5,
            col_fraction: 0.8,
            k_range: (k, k + 2),
            seed,
        }
    }
}

/// Provenance of one basic partition.
#[derive(Debug, Clone)]
pub struct PartitionMeta {
    pub sampled_rows: Vec<usize>,
    pub sampled_cols: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

/// `r` clusterings of the full sample set, each fit on a row/column
/// subsample and extended to unsampled rows by nearest centroid.
#[derive(Debug, Clone)]
pub struct BasicPartitionSet {
    pub partitions: Vec<Clustering>,
    pub meta: Vec<PartitionMeta>,
}

fn fraction_count(total: usize, fraction: f64) -> usize {
    ((total as f64 * fraction).round() as usize).clamp(1, total)
}

/// Generates the basic partitions of stage 1.
///
/// Each partition fits k-means on `row_fraction` of the rows restricted to
/// `col_fraction` of the columns, with its own cluster count drawn from
/// `k_range`, then labels every remaining row by its nearest centroid over
/// the sampled columns (ties to the lowest cluster index). A cluster count
/// larger than the subsample is reduced to the subsample size. Every row is
/// guaranteed to appear in at least one subsample: rows missed by the random
/// draws are appended round-robin across partitions before fitting.
pub fn generate_basic_partitions(
    x: ArrayView2<f64>,
    spec: &PartitionSpec,
) -> Result<BasicPartitionSet, CfcError> {
    let n = x.nrows();
    let d = x.ncols();
    if n == 0 || d == 0 {
        return Err(CfcError::BadParams("empty feature matrix".into()));
    }
    if spec.partitions == 0 {
        return Err(CfcError::BadParams("need at least one partition".into()));
    }
    if !(spec.row_fraction > 0.0 && spec.row_fraction <= 1.0)
        || !(spec.col_fraction > 0.0 && spec.col_fraction <= 1.0)
    {
        return Err(CfcError::BadParams(
            "row/col fractions must lie in (0, 1]".into(),
        ));
    }
    let (k_lo, k_hi) = spec.k_range;
    if k_lo == 0 || k_hi < k_lo {
        return Err(CfcError::BadParams(format!(
            "invalid k_range ({k_lo}, {k_hi})"
        )));
    }

    let m_rows = fraction_count(n, spec.row_fraction);
    let m_cols = fraction_count(d, spec.col_fraction);

    // Draw all subsamples first so coverage can be repaired before fitting.
    let mut row_sets: Vec<Vec<usize>> = Vec::with_capacity(spec.partitions);
    let mut col_sets: Vec<Vec<usize>> = Vec::with_capacity(spec.partitions);
    let mut ks: Vec<usize> = Vec::with_capacity(spec.partitions);
    let mut seeds: Vec<u64> = Vec::with_capacity(spec.partitions);
    let mut covered = vec![false; n];
    for i in 0..spec.partitions {
        let part_seed = derive_seed(spec.seed, i as u64);
        let mut rng = prng(part_seed);
        let mut rows = sample(&mut rng, n, m_rows).into_vec();
        rows.sort_unstable();
        let mut cols = sample(&mut rng, d, m_cols).into_vec();
        cols.sort_unstable();
        let k = rng.random_range(k_lo..=k_hi);
        for &row in &rows {
            covered[row] = true;
        }
        row_sets.push(rows);
        col_sets.push(cols);
        ks.push(k);
        seeds.push(part_seed);
    }
    let uncovered: Vec<usize> = (0..n).filter(|&u| !covered[u]).collect();
    for (offset, row) in uncovered.into_iter().enumerate() {
        let target = offset % spec.partitions;
        let rows = &mut row_sets[target];
        if let Err(pos) = rows.binary_search(&row) {
            rows.insert(pos, row);
        }
    }

    let mut partitions = Vec::with_capacity(spec.partitions);
    let mut meta = Vec::with_capacity(spec.partitions);
    for i in 0..spec.partitions {
        let rows = &row_sets[i];
        let cols = &col_sets[i];
        let k = ks[i].min(rows.len());
        let sub = x.select(ndarray::Axis(0), rows).select(ndarray::Axis(1), cols);
        let mut config = ClustererConfig::new(k, derive_seed(seeds[i], 1));
        config.restarts = 3;
        let fit = kmeans_fit(sub.view(), &config)?;
        // Extend to all rows by nearest centroid over the sampled columns.
        let mut labels = vec![0usize; n];
        for u in 0..n {
            let mut best = 0usize;
            let mut best_cost = f64::INFINITY;
            for c in 0..k {
                let mut cost = 0.0;
                for (j, &col) in cols.iter().enumerate() {
                    let diff = x[[u, col]] - fit.centers[[c, j]];
                    cost += diff * diff;
                }
                if cost < best_cost {
                    best_cost = cost;
                    best = c;
                }
            }
            labels[u] = best;
        }
        // Sampled rows keep the labels they were fit with.
        for (pos, &row) in rows.iter().enumerate() {
            labels[row] = fit.clustering.labels()[pos];
        }
        partitions.push(Clustering::new(labels, k)?);
        meta.push(PartitionMeta {
            sampled_rows: rows.clone(),
            sampled_cols: cols.clone(),
            k,
            seed: seeds[i],
        });
    }
    Ok(BasicPartitionSet { partitions, meta })
}

/// Symmetric n-by-n matrix of co-clustering counts across `r` partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoAssociationMatrix {
    counts: Array2<u32>,
    r: u32,
}

impl CoAssociationMatrix {
    pub fn n(&self) -> usize {
        self.counts.nrows()
    }

    /// Number of partitions the counts were accumulated over.
    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn counts(&self) -> &Array2<u32> {
        &self.counts
    }

    /// Counts divided by `r`, so every entry lies in [0, 1].
    pub fn normalized(&self) -> Array2<f64> {
        self.counts.mapv(|v| f64::from(v) / f64::from(self.r))
    }
}

/// Accumulates the co-association matrix `S[u][v] = #{i : pi_i(u) = pi_i(v)}`.
pub fn co_association(partitions: &BasicPartitionSet) -> Result<CoAssociationMatrix, CfcError> {
    let Some(first) = partitions.partitions.first() else {
        return Err(CfcError::BadParams("no partitions".into()));
    };
    let n = first.n();
    if partitions.partitions.iter().any(|p| p.n() != n) {
        return Err(CfcError::BadParams(
            "partitions label different sample counts".into(),
        ));
    }
    let r = u32::try_from(partitions.partitions.len())
        .map_err(|_| CfcError::BadParams("too many partitions".into()))?;
    let mut counts = Array2::<u32>::zeros((n, n));
    for partition in &partitions.partitions {
        let labels = partition.labels();
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); partition.k()];
        for (u, &label) in labels.iter().enumerate() {
            buckets[label].push(u);
        }
        for bucket in &buckets {
            for &u in bucket {
                for &v in bucket {
                    counts[[u, v]] += 1;
                }
            }
        }
    }
    Ok(CoAssociationMatrix { counts, r })
}

const COASSOC_MAGIC: &[u8; 4] = b"COAS";

fn io_err(path: &Path, source: std::io::Error) -> CfcError {
    CfcError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `{magic, n, r}` followed by the row-major little-endian u32 counts.
pub fn save_coassociation(matrix: &CoAssociationMatrix, path: &Path) -> Result<(), CfcError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>, bytes: &[u8]| -> Result<(), CfcError> {
        out.write_all(bytes).map_err(|e| io_err(path, e))
    };
    write(&mut out, COASSOC_MAGIC)?;
    let n = u32::try_from(matrix.n())
        .map_err(|_| CfcError::BadParams("matrix too large to persist".into()))?;
    write(&mut out, &n.to_le_bytes())?;
    write(&mut out, &matrix.r.to_le_bytes())?;
    for &count in matrix.counts.iter() {
        write(&mut out, &count.to_le_bytes())?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

pub fn load_coassociation(path: &Path) -> Result<CoAssociationMatrix, CfcError> {
    let corrupt = |reason: &str| CfcError::Corrupt {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut input = BufReader::new(file);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != COASSOC_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(|e| io_err(path, e))?;
    let n = u32::from_le_bytes(word) as usize;
    input.read_exact(&mut word).map_err(|e| io_err(path, e))?;
    let r = u32::from_le_bytes(word);
    if n == 0 || r == 0 {
        return Err(corrupt("zero dimension"));
    }
    let mut raw = vec![0u8; n * n * 4];
    input.read_exact(&mut raw).map_err(|e| io_err(path, e))?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(corrupt("trailing bytes"));
    }
    let mut counts = Array2::<u32>::zeros((n, n));
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let value = u32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if value > r {
            return Err(corrupt("count exceeds partition total"));
        }
        counts[[i / n, i % n]] = value;
    }
    Ok(CoAssociationMatrix { counts, r })
}
