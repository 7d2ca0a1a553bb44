//! Stage-2 training loop, the end-to-end defense pipeline, and a finite
//! difference gradient checker for the full objective.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use super::losses::{
    contrastive_loss_grad, fair_loss, fair_loss_grad, fair_target, neighborhood_weights,
    soft_assignment_backward, soft_assignments, structural_loss, structural_loss_grad,
    SoftAssignment,
};
use super::model::{CfcHyper, CfcModel};
use super::partitions::{co_association, generate_basic_partitions, PartitionSpec};
use super::CfcError;
use crate::clusterers::{fair_cluster, kmeans_fit, ClustererConfig};
use crate::data::Clustering;
use crate::rng::{derive_seed, prng};

/// Unweighted loss components from one evaluation of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfcLosses {
    pub contrastive: f64,
    pub fair: f64,
    pub structural: f64,
}

impl CfcLosses {
    /// The trained objective: contrastive + alpha * fair + beta * structural.
    pub fn total(&self, alpha: f64, beta: f64) -> f64 {
        self.contrastive + alpha * self.fair + beta * self.structural
    }
}

struct Grads {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    centers: Array2<f64>,
}

impl Grads {
    fn global_norm(&self) -> f64 {
        let sq: f64 = self
            .w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .chain(self.centers.iter())
            .map(|g| g * g)
            .sum();
        sq.sqrt()
    }

    fn scale(&mut self, factor: f64) {
        self.w1.mapv_inplace(|g| g * factor);
        self.b1.mapv_inplace(|g| g * factor);
        self.w2.mapv_inplace(|g| g * factor);
        self.b2.mapv_inplace(|g| g * factor);
        self.centers.mapv_inplace(|g| g * factor);
    }
}

/// One-hot membership blocks of a reference clustering, one block per
/// protected group with rows ordered by ascending sample index.
pub fn j_from_clustering(clustering: &Clustering, groups: &[usize]) -> Vec<Array2<f64>> {
    let num_groups = groups.iter().map(|&g| g + 1).max().unwrap_or(0);
    let mut blocks = Vec::with_capacity(num_groups);
    for g in 0..num_groups {
        let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        let mut block = Array2::<f64>::zeros((members.len(), clustering.k()));
        for (row, &i) in members.iter().enumerate() {
            block[[row, clustering.labels()[i]]] = 1.0;
        }
        blocks.push(block);
    }
    blocks
}

/// Evaluates the full objective (and optionally its parameter gradients)
/// once. `fixed_q` pins the fair target; when absent the target is derived
/// from the soft assignments of this very pass.
fn objective(
    model: &CfcModel,
    x: ArrayView2<f64>,
    groups: &[usize],
    gamma: &Array2<f64>,
    reference: &[Array2<f64>],
    fixed_q: Option<&SoftAssignment>,
    mask: Option<&Array2<f64>>,
    want_grads: bool,
) -> Result<(CfcLosses, SoftAssignment, Option<Grads>), CfcError> {
    let hyper = &model.hyper;
    let cache = model.forward(x, mask);
    let p = soft_assignments(cache.z.view(), model.centers.view())?;
    let q = match fixed_q {
        Some(q) => q.clone(),
        None => fair_target(&p, groups)?,
    };
    if !want_grads {
        let losses = CfcLosses {
            contrastive: super::losses::contrastive_loss(cache.z.view(), gamma, hyper.tau)?,
            fair: fair_loss(&p, &q)?,
            structural: structural_loss(&p, groups, reference)?,
        };
        return Ok((losses, p, None));
    }
    let (l_c, grad_z_contrastive) = contrastive_loss_grad(cache.z.view(), gamma, hyper.tau)?;
    let (l_f, grad_p_fair) = fair_loss_grad(&p, &q)?;
    let (l_s, grad_p_structural) = structural_loss_grad(&p, groups, reference)?;
    let grad_p = grad_p_fair * hyper.alpha + grad_p_structural * hyper.beta;
    let (grad_z_assign, grad_centers) =
        soft_assignment_backward(cache.z.view(), model.centers.view(), &p, &grad_p);
    let grad_z = grad_z_contrastive + grad_z_assign;
    let (w1, b1, w2, b2) = model.backward(x, &cache, mask, &grad_z);
    let losses = CfcLosses {
        contrastive: l_c,
        fair: l_f,
        structural: l_s,
    };
    Ok((
        losses,
        p,
        Some(Grads {
            w1,
            b1,
            w2,
            b2,
            centers: grad_centers,
        }),
    ))
}

/// A trained stage-2 model with its final assignments.
#[derive(Debug, Clone)]
pub struct CfcOutput {
    pub model: CfcModel,
    pub clustering: Clustering,
    pub soft: SoftAssignment,
    /// Loss components recorded every epoch.
    pub loss_history: Vec<CfcLosses>,
}

/// Trains the stage-2 network by plain gradient descent.
///
/// `gamma` is the precomputed neighborhood weight matrix and `reference`
/// the per-group one-hot blocks of the reference fair clustering (see
/// [`j_from_clustering`]). Cluster centers are initialized by k-means on
/// the initial embeddings. The fair target is re-derived from the current
/// soft assignments each epoch but treated as a constant inside the
/// gradient. A fresh inverted dropout mask is drawn per epoch. Gradients
/// are clipped to a global norm of `hyper.grad_clip`. A non-finite
/// objective aborts with the epoch and the component values.
pub fn train_cfc(
    x: ArrayView2<f64>,
    groups: &[usize],
    gamma: &Array2<f64>,
    reference: &[Array2<f64>],
    hyper: &CfcHyper,
    seed: u64,
) -> Result<CfcOutput, CfcError> {
    hyper.validate()?;
    let n = x.nrows();
    if groups.len() != n {
        return Err(CfcError::BadParams(
            "group assignment length mismatch".into(),
        ));
    }
    let mut model = CfcModel::init(hyper.clone(), x.ncols(), derive_seed(seed, 0))?;
    model.seed = seed;
    let initial = model.embed(x);
    let mut center_config = ClustererConfig::new(hyper.k, derive_seed(seed, 1));
    center_config.restarts = 5;
    model.centers = kmeans_fit(initial.view(), &center_config)?.centers;

    let keep = 1.0 - hyper.dropout;
    let mut mask_rng = prng(derive_seed(seed, 2));
    let mut loss_history = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let mask = if hyper.dropout > 0.0 {
            Some(Array2::from_shape_simple_fn((n, hyper.hidden), || {
                if mask_rng.random_bool(keep) {
                    1.0 / keep
                } else {
                    0.0
                }
            }))
        } else {
            None
        };
        let (losses, _, grads) =
            objective(&model, x, groups, gamma, reference, None, mask.as_ref(), true)?;
        if !losses.total(hyper.alpha, hyper.beta).is_finite() {
            return Err(CfcError::NonFiniteLoss {
                epoch,
                contrastive: losses.contrastive,
                fair: losses.fair,
                structural: losses.structural,
            });
        }
        loss_history.push(losses);
        let mut grads = grads.expect("gradients requested");
        let norm = grads.global_norm();
        if !norm.is_finite() {
            return Err(CfcError::NonFiniteLoss {
                epoch,
                contrastive: losses.contrastive,
                fair: losses.fair,
                structural: losses.structural,
            });
        }
        if norm > hyper.grad_clip {
            grads.scale(hyper.grad_clip / norm);
        }
        let lr = hyper.learning_rate;
        model.w1.scaled_add(-lr, &grads.w1);
        model.b1.scaled_add(-lr, &grads.b1);
        model.w2.scaled_add(-lr, &grads.w2);
        model.b2.scaled_add(-lr, &grads.b2);
        model.centers.scaled_add(-lr, &grads.centers);
    }

    let z = model.embed(x);
    let soft = soft_assignments(z.view(), model.centers.view())?;
    let clustering = Clustering::new(soft.argmax_labels(), hyper.k)?;
    Ok(CfcOutput {
        model,
        clustering,
        soft,
        loss_history,
    })
}

/// End-to-end defense configuration: stage-1 subsampling plus the fairlet
/// reference and stage-2 hyperparameters.
#[derive(Debug, Clone)]
pub struct CfcPipelineConfig {
    pub hyper: CfcHyper,
    /// Number of basic partitions `r`.
    pub partitions: usize,
    pub row_fraction: f64,
    pub col_fraction: f64,
    /// Inclusive per-partition cluster-count range.
    pub k_range: (usize, usize),
    /// Fairlet ratio used for the structural reference clustering.
    pub fairlet_p: usize,
    pub fairlet_q: usize,
}

impl CfcPipelineConfig {
    pub fn new(k: usize) -> Self {
        Self {
            hyper: CfcHyper::new(k),
            partitions: 100,
            row_fraction: 0.5,
            col_fraction: 0.8,
            k_range: (k, k + 2),
            fairlet_p: 2,
            fairlet_q: 5,
        }
    }
}

/// Runs the whole defense: basic partitions, co-association, neighborhood
/// weights, the fairlet-based reference clustering, and stage-2 training.
pub fn run_cfc(
    x: ArrayView2<f64>,
    groups: &[usize],
    config: &CfcPipelineConfig,
    seed: u64,
) -> Result<CfcOutput, CfcError> {
    let spec = PartitionSpec {
        partitions: config.partitions,
        row_fraction: config.row_fraction,
        col_fraction: config.col_fraction,
        k_range: config.k_range,
        seed: derive_seed(seed, 0),
    };
    let partitions = generate_basic_partitions(x, &spec)?;
    let s = co_association(&partitions)?;
    let gamma = neighborhood_weights(&s, config.hyper.hops, config.hyper.gamma_mode)?;
    let reference_clustering = fair_cluster(
        x,
        groups,
        &ClustererConfig::new(config.hyper.k, derive_seed(seed, 1)),
        config.fairlet_p,
        config.fairlet_q,
    )?;
    let reference = j_from_clustering(&reference_clustering, groups);
    train_cfc(x, groups, &gamma, &reference, &config.hyper, derive_seed(seed, 2))
}

/// Maximum relative error between an analytic gradient and central finite
/// differences of `eval` (step `1e-5`).
///
/// Each coordinate's denominator is floored at a small fraction of the
/// gradient's infinity norm: coordinates whose true derivative is
/// essentially zero would otherwise divide finite-difference roundoff by
/// itself and report noise instead of a meaningful discrepancy.
pub(crate) fn max_relative_grad_error<F>(
    params: &mut [f64],
    analytic: &[f64],
    mut eval: F,
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let step = 1e-5;
    let scale = analytic.iter().fold(0.0f64, |acc, a| acc.max(a.abs()));
    let floor = (1e-3 * scale).max(1e-8);
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + step;
        let up = eval(params);
        params[i] = orig - step;
        let down = eval(params);
        params[i] = orig;
        let fd = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(fd.abs()).max(floor);
        worst = worst.max((analytic[i] - fd).abs() / denom);
    }
    worst
}

/// Verifies the analytic gradients of the full objective against central
/// finite differences, returning the maximum relative error over every
/// parameter. Dropout is disabled and the fair target is pinned so both
/// sides differentiate the same function.
pub fn grad_check(
    model: &CfcModel,
    x: ArrayView2<f64>,
    groups: &[usize],
    gamma: &Array2<f64>,
    reference: &[Array2<f64>],
) -> Result<f64, CfcError> {
    let hyper = &model.hyper;
    let base = model.forward(x, None);
    let p0 = soft_assignments(base.z.view(), model.centers.view())?;
    let q = fair_target(&p0, groups)?;

    let (_, _, grads) = objective(model, x, groups, gamma, reference, Some(&q), None, true)?;
    let grads = grads.expect("gradients requested");
    let analytic: Vec<f64> = grads
        .w1
        .iter()
        .chain(grads.b1.iter())
        .chain(grads.w2.iter())
        .chain(grads.b2.iter())
        .chain(grads.centers.iter())
        .copied()
        .collect();

    let mut params = model.params_flat();
    let mut probe = model.clone();
    let error = max_relative_grad_error(&mut params, &analytic, |flat| {
        probe.set_params_flat(flat).expect("same length");
        let (losses, _, _) = objective(&probe, x, groups, gamma, reference, Some(&q), None, false)
            .expect("objective evaluates");
        losses.total(hyper.alpha, hyper.beta)
    });
    Ok(error)
}
