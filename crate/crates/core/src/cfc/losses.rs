//! Stage-2 objective terms: neighborhood weights on the co-association
//! graph, the contrastive loss, Student-t soft assignments with the fair
//! KL target, and the structural preservation loss. Each loss ships with
//! its analytic gradient.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::partitions::CoAssociationMatrix;
use super::CfcError;

/// Numerical floor applied inside logarithms and divisions.
pub(crate) const EPS: f64 = 1e-12;

/// How the `R`-hop neighborhood weights are derived from the normalized
/// co-association matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum GammaMode {
    /// `R`-th matrix power of the degree-normalized affinity (default).
    #[default]
    MatrixPower,
    /// Entry-wise `R`-th power of the normalized affinity.
    Elementwise,
}

/// Neighborhood weights `gamma` used by the contrastive loss.
///
/// The normalized co-association `A = S/r` is symmetrically degree-normalized
/// (`D^{-1/2} A D^{-1/2}`) and raised to the `hops`-th matrix power, or raised
/// entry-wise under [`GammaMode::Elementwise`]. The diagonal is zeroed so a
/// sample is never its own positive. A row whose off-diagonal weights are all
/// zero simply stays zero; the contrastive loss clamps such rows.
pub fn neighborhood_weights(
    s: &CoAssociationMatrix,
    hops: usize,
    mode: GammaMode,
) -> Result<Array2<f64>, CfcError> {
    if hops == 0 {
        return Err(CfcError::BadParams("hops must be at least 1".into()));
    }
    let a = s.normalized();
    let mut gamma = match mode {
        GammaMode::Elementwise => a.mapv(|v| v.powi(hops as i32)),
        GammaMode::MatrixPower => {
            let degree = a.sum_axis(Axis(1));
            let inv_sqrt = degree.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
            let n = a.nrows();
            let mut normed = a;
            for u in 0..n {
                for v in 0..n {
                    normed[[u, v]] *= inv_sqrt[u] * inv_sqrt[v];
                }
            }
            let mut power = normed.clone();
            for _ in 1..hops {
                power = power.dot(&normed);
            }
            power
        }
    };
    for u in 0..gamma.nrows() {
        gamma[[u, u]] = 0.0;
    }
    Ok(gamma)
}

fn row_normalized(z: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = z.map_axis(Axis(1), |row| row.dot(&row).sqrt());
    let mut unit = z.to_owned();
    for (mut row, &norm) in unit.rows_mut().into_iter().zip(norms.iter()) {
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        } else {
            row.fill(0.0);
        }
    }
    (unit, norms)
}

fn contrastive_terms(
    z: ArrayView2<f64>,
    gamma: &Array2<f64>,
    tau: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>, Array1<f64>, Vec<bool>), CfcError> {
    let n = z.nrows();
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(CfcError::BadParams(
            "gamma shape does not match embeddings".into(),
        ));
    }
    if n < 2 {
        return Err(CfcError::BadParams(
            "contrastive loss needs at least two samples".into(),
        ));
    }
    if !(tau > 0.0) {
        return Err(CfcError::BadParams("temperature must be positive".into()));
    }
    let (unit, norms) = row_normalized(z);
    let sims = unit.dot(&unit.t());
    let exps = sims.mapv(|s| (s / tau).exp());
    let mut loss = 0.0;
    // For each anchor i: -ln( sum_a gamma_ia e_ia / sum_b e_ib ), a,b != i.
    // Ratios below EPS are clamped, and a clamped anchor contributes no
    // gradient (its loss is locally constant).
    let mut clamped = vec![false; n];
    let mut grad_sim = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            num += gamma[[i, j]] * exps[[i, j]];
            den += exps[[i, j]];
        }
        let ratio = num / den;
        if ratio < EPS {
            clamped[i] = true;
            loss -= EPS.ln();
            continue;
        }
        loss -= ratio.ln();
        for j in 0..n {
            if j == i {
                continue;
            }
            // d(-ln ratio)/d e_ij = -(gamma_ij / num - 1 / den), then the
            // softmax-style chain d e_ij / d sim_ij = e_ij / tau.
            grad_sim[[i, j]] = -(gamma[[i, j]] / num - 1.0 / den) * exps[[i, j]] / tau;
        }
    }
    loss /= n as f64;
    grad_sim.mapv_inplace(|g| g / n as f64);
    Ok((loss, grad_sim, unit, norms, clamped))
}

/// Mean neighborhood contrastive loss over all anchors.
pub fn contrastive_loss(
    z: ArrayView2<f64>,
    gamma: &Array2<f64>,
    tau: f64,
) -> Result<f64, CfcError> {
    contrastive_terms(z, gamma, tau).map(|(loss, ..)| loss)
}

/// [`contrastive_loss`] plus its gradient with respect to the embeddings.
pub fn contrastive_loss_grad(
    z: ArrayView2<f64>,
    gamma: &Array2<f64>,
    tau: f64,
) -> Result<(f64, Array2<f64>), CfcError> {
    let (loss, grad_sim, unit, norms, _) = contrastive_terms(z, gamma, tau)?;
    // sim_ij = unit_i . unit_j with sim appearing once per ordered pair, so
    // dL/d unit = (G + G^T) unit.
    let sym = &grad_sim + &grad_sim.t();
    let grad_unit = sym.dot(&unit);
    // Back through row normalization: for g = dL/d unit_i,
    // dL/d z_i = (g - (unit_i . g) unit_i) / ||z_i||; zero-norm rows get 0.
    let n = z.nrows();
    let mut grad_z = Array2::<f64>::zeros(z.raw_dim());
    for i in 0..n {
        if norms[i] == 0.0 {
            continue;
        }
        let g = grad_unit.row(i);
        let u = unit.row(i);
        let radial = u.dot(&g);
        for (d, slot) in grad_z.row_mut(i).iter_mut().enumerate() {
            *slot = (g[d] - radial * u[d]) / norms[i];
        }
    }
    Ok((loss, grad_z))
}

/// Row-stochastic soft cluster assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    /// `n x K`, each row sums to one.
    pub p: Array2<f64>,
}

impl SoftAssignment {
    /// Hard labels by row-wise argmax, ties to the lowest cluster index.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.p
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Student-t (one degree of freedom) soft assignments of embeddings to
/// cluster centers: `p_k = u_k / sum_j u_j` with `u_k = 1/(1+||z-c_k||^2)`.
pub fn soft_assignments(
    z: ArrayView2<f64>,
    centers: ArrayView2<f64>,
) -> Result<SoftAssignment, CfcError> {
    if centers.ncols() != z.ncols() {
        return Err(CfcError::BadParams(
            "centers and embeddings disagree on dimension".into(),
        ));
    }
    if centers.nrows() == 0 {
        return Err(CfcError::BadParams("need at least one center".into()));
    }
    let n = z.nrows();
    let k = centers.nrows();
    let mut p = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        let mut total = 0.0;
        for c in 0..k {
            let mut dist2 = 0.0;
            for d in 0..z.ncols() {
                let diff = z[[i, d]] - centers[[c, d]];
                dist2 += diff * diff;
            }
            let u = 1.0 / (1.0 + dist2);
            p[[i, c]] = u;
            total += u;
        }
        for c in 0..k {
            p[[i, c]] /= total;
        }
    }
    Ok(SoftAssignment { p })
}

/// Backpropagates a gradient on the soft assignments through the Student-t
/// kernel, returning gradients on the embeddings and the centers.
///
/// Derivation: with `u_k = 1/(1+||z-c_k||^2)`, `U = sum u`, `p_k = u_k/U`,
/// a downstream gradient `g` satisfies
/// `dL/d theta = (1/U) * sum_k (g_k - gbar) du_k/d theta` where
/// `gbar = sum_k g_k p_k`, `du_k/dz = -2 u_k^2 (z - c_k)` and
/// `du_k/dc_k = +2 u_k^2 (z - c_k)`.
pub(crate) fn soft_assignment_backward(
    z: ArrayView2<f64>,
    centers: ArrayView2<f64>,
    assignment: &SoftAssignment,
    grad_p: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let n = z.nrows();
    let dim = z.ncols();
    let k = centers.nrows();
    let mut grad_z = Array2::<f64>::zeros((n, dim));
    let mut grad_c = Array2::<f64>::zeros((k, dim));
    for i in 0..n {
        let p_row = assignment.p.row(i);
        let g_row = grad_p.row(i);
        let gbar = g_row.dot(&p_row);
        // Recover u_k and U: p_k = u_k/U and u_k = 1/(1+d2_k).
        let mut total = 0.0;
        let mut us = vec![0.0; k];
        for c in 0..k {
            let mut dist2 = 0.0;
            for d in 0..dim {
                let diff = z[[i, d]] - centers[[c, d]];
                dist2 += diff * diff;
            }
            us[c] = 1.0 / (1.0 + dist2);
            total += us[c];
        }
        for c in 0..k {
            let coeff = (g_row[c] - gbar) / total * 2.0 * us[c] * us[c];
            for d in 0..dim {
                let diff = z[[i, d]] - centers[[c, d]];
                grad_z[[i, d]] -= coeff * diff;
                grad_c[[c, d]] += coeff * diff;
            }
        }
    }
    (grad_z, grad_c)
}

/// Fairness-sharpened target distribution.
///
/// `q_k` for a sample in protected group `g` is proportional to
/// `p_k^2 / f_kg`, where `f_kg` sums `p_k` over the members of group `g`;
/// a zero frequency forces that cluster's target mass to zero.
pub fn fair_target(p: &SoftAssignment, groups: &[usize]) -> Result<SoftAssignment, CfcError> {
    let n = p.p.nrows();
    let k = p.p.ncols();
    if groups.len() != n {
        return Err(CfcError::BadParams(
            "group assignment length mismatch".into(),
        ));
    }
    let num_groups = groups.iter().map(|&g| g + 1).max().unwrap_or(0);
    let mut freq = Array2::<f64>::zeros((k, num_groups));
    for (i, &g) in groups.iter().enumerate() {
        for c in 0..k {
            freq[[c, g]] += p.p[[i, c]];
        }
    }
    let mut q = Array2::<f64>::zeros((n, k));
    for (i, &g) in groups.iter().enumerate() {
        let mut total = 0.0;
        for c in 0..k {
            let f = freq[[c, g]];
            let value = if f > 0.0 { p.p[[i, c]].powi(2) / f } else { 0.0 };
            q[[i, c]] = value;
            total += value;
        }
        if total > 0.0 {
            for c in 0..k {
                q[[i, c]] /= total;
            }
        }
    }
    Ok(SoftAssignment { p: q })
}

fn check_same_shape(p: &SoftAssignment, q: &SoftAssignment) -> Result<(), CfcError> {
    if p.p.raw_dim() != q.p.raw_dim() {
        return Err(CfcError::BadParams("P and Q shapes differ".into()));
    }
    Ok(())
}

/// Fair clustering loss: `KL(P || Q)` summed over samples and clusters,
/// with both operands clamped at `1e-12` inside the logarithm and `0 ln 0`
/// taken as zero.
pub fn fair_loss(p: &SoftAssignment, q: &SoftAssignment) -> Result<f64, CfcError> {
    check_same_shape(p, q)?;
    let mut loss = 0.0;
    for (&pv, &qv) in p.p.iter().zip(q.p.iter()) {
        if pv > 0.0 {
            loss += pv * (pv.max(EPS) / qv.max(EPS)).ln();
        }
    }
    Ok(loss)
}

/// [`fair_loss`] and its gradient in `P`, treating `Q` as a constant target:
/// `dL/dp = ln(p/q) + 1`.
pub fn fair_loss_grad(
    p: &SoftAssignment,
    q: &SoftAssignment,
) -> Result<(f64, Array2<f64>), CfcError> {
    let loss = fair_loss(p, q)?;
    let mut grad = Array2::<f64>::zeros(p.p.raw_dim());
    for ((gv, &pv), &qv) in grad.iter_mut().zip(p.p.iter()).zip(q.p.iter()) {
        *gv = (pv.max(EPS) / qv.max(EPS)).ln() + 1.0;
    }
    Ok((loss, grad))
}

fn group_rows(groups: &[usize]) -> Vec<Vec<usize>> {
    let num_groups = groups.iter().map(|&g| g + 1).max().unwrap_or(0);
    let mut members = vec![Vec::new(); num_groups];
    for (i, &g) in groups.iter().enumerate() {
        members[g].push(i);
    }
    members
}

fn structural_terms(
    p: &SoftAssignment,
    groups: &[usize],
    reference: &[Array2<f64>],
    want_grad: bool,
) -> Result<(f64, Array2<f64>), CfcError> {
    if groups.len() != p.p.nrows() {
        return Err(CfcError::BadParams(
            "group assignment length mismatch".into(),
        ));
    }
    let members = group_rows(groups);
    if reference.len() != members.len() {
        return Err(CfcError::BadParams(
            "one reference block per protected group required".into(),
        ));
    }
    let mut loss = 0.0;
    let mut grad = Array2::<f64>::zeros(p.p.raw_dim());
    for (g, rows) in members.iter().enumerate() {
        let j = &reference[g];
        if j.nrows() != rows.len() {
            return Err(CfcError::BadParams(format!(
                "reference block for group {g} has {} rows, expected {}",
                j.nrows(),
                rows.len()
            )));
        }
        let p_g = p.p.select(Axis(0), rows);
        // M = P P^T - J J^T restricted to the group; the loss is ||M||_F^2
        // and d||M||_F^2 / dP = 4 M P for symmetric M.
        let m = p_g.dot(&p_g.t()) - j.dot(&j.t());
        loss += m.iter().map(|v| v * v).sum::<f64>();
        if want_grad {
            let g_block = m.dot(&p_g) * 4.0;
            for (local, &row) in rows.iter().enumerate() {
                for c in 0..p.p.ncols() {
                    grad[[row, c]] += g_block[[local, c]];
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Structural preservation loss: squared Frobenius distance between the
/// per-group soft co-membership `P(g) P(g)^T` and the reference fair
/// clustering's hard co-membership `J(g) J(g)^T`, summed over groups.
pub fn structural_loss(
    p: &SoftAssignment,
    groups: &[usize],
    reference: &[Array2<f64>],
) -> Result<f64, CfcError> {
    structural_terms(p, groups, reference, false).map(|(loss, _)| loss)
}

/// [`structural_loss`] and its gradient in `P`.
pub fn structural_loss_grad(
    p: &SoftAssignment,
    groups: &[usize],
    reference: &[Array2<f64>],
) -> Result<(f64, Array2<f64>), CfcError> {
    structural_terms(p, groups, reference, true)
}
