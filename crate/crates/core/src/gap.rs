//! Duality gaps of modified problems evaluated from a trained model's cache.
//!
//! For instance modifications the candidate primal vector is the old
//! optimum and the candidate dual vector is the old dual restricted to the
//! kept instances (plus KKT-selected values for new ones). For feature
//! modifications the roles swap. The cost depends on the size of the
//! modification only, apart from one pass over the `d` (respectively `n`)
//! coordinates of the conjugate (respectively loss) term.

use serde::{Deserialize, Serialize};

use crate::bounds::GapCertificate;
use crate::convex::{ConvexFn, Loss, Regularizer};
use crate::data::{complement, Dataset, ModificationSpec, SparseVec};
use crate::erm::TrainedModel;
use crate::error::{Error, Result};

/// Work counters of one gap evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TouchCounter {
    /// Stored matrix entries read.
    pub matrix_entries_touched: usize,
    /// Dense vector coordinates read or written.
    pub vector_ops: usize,
}

#[derive(Debug, Clone)]
pub struct InstanceRemovalGap {
    pub certificate: GapCertificate,
    pub touches: TouchCounter,
    pub removed: Vec<usize>,
}

impl InstanceRemovalGap {
    /// The old dual vector restricted to the kept instances.
    pub fn alpha_hat(&self, model: &TrainedModel) -> Vec<f64> {
        complement(&self.removed, model.n())
            .into_iter()
            .map(|i| model.alpha[i])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct InstanceAdditionGap {
    pub certificate: GapCertificate,
    pub touches: TouchCounter,
    /// Dual values chosen for the added instances.
    pub new_alpha: Vec<f64>,
}

impl InstanceAdditionGap {
    pub fn alpha_hat(&self, model: &TrainedModel) -> Vec<f64> {
        let mut a = model.alpha.clone();
        a.extend_from_slice(&self.new_alpha);
        a
    }
}

#[derive(Debug, Clone)]
pub struct FeatureRemovalGap {
    pub certificate: GapCertificate,
    pub touches: TouchCounter,
    pub removed: Vec<usize>,
    /// Regularizer of the reduced problem.
    pub reg: Regularizer,
}

impl FeatureRemovalGap {
    /// The old primal vector restricted to the kept features.
    pub fn w_hat(&self, model: &TrainedModel) -> Vec<f64> {
        complement(&self.removed, model.d())
            .into_iter()
            .map(|j| model.w[j])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FeatureAdditionGap {
    pub certificate: GapCertificate,
    pub touches: TouchCounter,
    /// Primal values chosen for the added features.
    pub new_w: Vec<f64>,
    pub reg: Regularizer,
}

impl FeatureAdditionGap {
    pub fn w_hat(&self, model: &TrainedModel) -> Vec<f64> {
        let mut w = model.w.clone();
        w.extend_from_slice(&self.new_w);
        w
    }
}

fn check_model(model: &TrainedModel, ds: &Dataset) -> Result<()> {
    if model.n() != ds.n() || model.d() != ds.d() {
        return Err(Error::Dimension(format!(
            "model is {}x{} but the dataset is {}x{}",
            model.n(),
            model.d(),
            ds.n(),
            ds.d()
        )));
    }
    Ok(())
}

/// Gap after removing the listed instances.
pub fn gap_instance_removal(
    model: &TrainedModel,
    ds_old: &Dataset,
    removed: &[usize],
) -> Result<InstanceRemovalGap> {
    check_model(model, ds_old)?;
    ModificationSpec::RemoveInstances(removed.to_vec()).validate(ds_old)?;
    let loss = &model.loss;
    let reg = &model.reg;
    let cache = &model.cache;
    let n_old = ds_old.n();
    let n_new = n_old - removed.len();
    let mut touches = TouchCounter::default();

    let mut v = cache.xt_alpha.clone();
    let mut removed_terms = 0.0;
    for &i in removed {
        let a = model.alpha[i];
        let y = ds_old.y()[i];
        let c = loss.conj(y, -a);
        if c == f64::INFINITY {
            return Ok(infinite_removal(removed, n_new, loss, reg, touches));
        }
        removed_terms += loss.value(y, cache.xw[i]) + c;
        let row = ds_old.row(i);
        for (j, x) in row.iter() {
            v[j] -= a * x;
        }
        touches.matrix_entries_touched += row.nnz();
    }
    let nn = n_new as f64;
    let mut reg_conj = 0.0;
    for (j, vj) in v.iter().enumerate() {
        let c = reg.penalty(j).conj(vj / nn);
        if c == f64::INFINITY {
            reg_conj = f64::INFINITY;
            break;
        }
        reg_conj += c;
    }
    touches.vector_ops += 2 * ds_old.d();

    let ratio = n_old as f64 / nn;
    let gap = ratio * (cache.loss_sum + cache.loss_conj_sum) - removed_terms / nn + cache.reg_sum + reg_conj;
    Ok(InstanceRemovalGap {
        certificate: GapCertificate::for_problem(gap, n_new, loss, reg),
        touches,
        removed: removed.to_vec(),
    })
}

fn infinite_removal(
    removed: &[usize],
    n_new: usize,
    loss: &Loss,
    reg: &Regularizer,
    touches: TouchCounter,
) -> InstanceRemovalGap {
    InstanceRemovalGap {
        certificate: GapCertificate::for_problem(f64::INFINITY, n_new, loss, reg),
        touches,
        removed: removed.to_vec(),
    }
}

/// Gap after appending instances `rows` with outcomes `labels`.
pub fn gap_instance_addition(
    model: &TrainedModel,
    ds_old: &Dataset,
    rows: &[SparseVec],
    labels: &[f64],
) -> Result<InstanceAdditionGap> {
    check_model(model, ds_old)?;
    ModificationSpec::AddInstances {
        rows: rows.to_vec(),
        y: labels.to_vec(),
    }
    .validate(ds_old)?;
    let loss = &model.loss;
    let reg = &model.reg;
    let cache = &model.cache;
    let n_old = ds_old.n();
    let n_new = n_old + rows.len();
    let mut touches = TouchCounter::default();

    let mut v = cache.xt_alpha.clone();
    let mut added_terms = 0.0;
    let mut new_alpha = Vec::with_capacity(rows.len());
    for (row, &y) in rows.iter().zip(labels) {
        let r = row.view();
        let t = r.dot(&model.w);
        let a = -loss.subgrad(y, t).min_abs_element();
        added_terms += loss.value(y, t) + loss.conj(y, -a);
        for (j, x) in r.iter() {
            v[j] += a * x;
        }
        touches.matrix_entries_touched += 2 * r.nnz();
        new_alpha.push(a);
    }
    let nn = n_new as f64;
    let reg_conj = reg.conj_sum(&v.iter().map(|x| x / nn).collect::<Vec<_>>());
    touches.vector_ops += 2 * ds_old.d();

    let ratio = n_old as f64 / nn;
    let gap = ratio * (cache.loss_sum + cache.loss_conj_sum) + added_terms / nn + cache.reg_sum + reg_conj;
    Ok(InstanceAdditionGap {
        certificate: GapCertificate::for_problem(gap, n_new, loss, reg),
        touches,
        new_alpha,
    })
}

/// Gap after removing the listed features.
pub fn gap_feature_removal(
    model: &TrainedModel,
    ds_old: &Dataset,
    removed: &[usize],
) -> Result<FeatureRemovalGap> {
    check_model(model, ds_old)?;
    ModificationSpec::RemoveFeatures(removed.to_vec()).validate(ds_old)?;
    let loss = &model.loss;
    let reg = &model.reg;
    let cache = &model.cache;
    let n = ds_old.n() as f64;
    let mut touches = TouchCounter::default();

    let mut xw = cache.xw.clone();
    let mut removed_terms = 0.0;
    for &j in removed {
        let pen = reg.penalty(j);
        let wj = model.w[j];
        removed_terms += pen.value(wj) + pen.conj(cache.xt_alpha[j] / n);
        let col = ds_old.col(j);
        if wj != 0.0 {
            for (i, x) in col.iter() {
                xw[i] -= wj * x;
            }
        }
        touches.matrix_entries_touched += col.nnz();
    }
    let loss_new = crate::erm::mean_loss(ds_old, loss, &xw);
    touches.vector_ops += 2 * ds_old.n();
    let dual_old = cache.dual();
    let gap = -removed_terms + loss_new + cache.reg_sum - dual_old;
    let reg_new = reg.after_feature_removal(removed);
    Ok(FeatureRemovalGap {
        certificate: GapCertificate::for_problem(gap, ds_old.n(), loss, &reg_new),
        touches,
        removed: removed.to_vec(),
        reg: reg_new,
    })
}

/// Gap after appending feature columns `cols` (each of height `n`).
pub fn gap_feature_addition(
    model: &TrainedModel,
    ds_old: &Dataset,
    cols: &[SparseVec],
) -> Result<FeatureAdditionGap> {
    check_model(model, ds_old)?;
    ModificationSpec::AddFeatures { cols: cols.to_vec() }.validate(ds_old)?;
    let loss = &model.loss;
    let reg = &model.reg;
    let cache = &model.cache;
    let n = ds_old.n() as f64;
    let d_old = ds_old.d();
    let mut touches = TouchCounter::default();

    let mut xw = cache.xw.clone();
    let mut added_terms = 0.0;
    let mut new_w = Vec::with_capacity(cols.len());
    for (k, col) in cols.iter().enumerate() {
        let c = col.view();
        let pen = reg.penalty(d_old + k);
        let t = c.dot(&model.alpha) / n;
        let conj = pen.conj(t);
        let wk = pen.conj_subgrad(t).min_abs_element();
        if conj == f64::INFINITY || !wk.is_finite() {
            added_terms = f64::INFINITY;
            new_w.push(if wk.is_finite() { wk } else { 0.0 });
            touches.matrix_entries_touched += c.nnz();
            continue;
        }
        added_terms += pen.value(wk) + conj;
        if wk != 0.0 {
            for (i, x) in c.iter() {
                xw[i] += wk * x;
            }
        }
        touches.matrix_entries_touched += 2 * c.nnz();
        new_w.push(wk);
    }
    let gap = if added_terms == f64::INFINITY {
        f64::INFINITY
    } else {
        let loss_new = crate::erm::mean_loss(ds_old, loss, &xw);
        touches.vector_ops += 2 * ds_old.n();
        added_terms + loss_new + cache.reg_sum - cache.dual()
    };
    Ok(FeatureAdditionGap {
        certificate: GapCertificate::for_problem(gap, ds_old.n(), loss, reg),
        touches,
        new_w,
        reg: *reg,
    })
}

fn require_l2(reg: &Regularizer) -> Result<f64> {
    if reg.is_plain_l2() {
        Ok(reg.lambda())
    } else {
        Err(Error::Specialization(format!(
            "the L2 shortcut needs a plain L2 regularizer without intercept, got {}",
            reg.name()
        )))
    }
}

/// Single-instance removal for plain L2, using `‖Xᵀα‖²` from the cache so
/// that only row `i` is read.
pub fn gap_loocv_l2(model: &TrainedModel, ds: &Dataset, i: usize) -> Result<(GapCertificate, TouchCounter)> {
    let lambda = require_l2(&model.reg)?;
    check_model(model, ds)?;
    if i >= ds.n() {
        return Err(Error::Precondition(format!("instance {i} out of range")));
    }
    if ds.n() < 2 {
        return Err(Error::Domain("all instances removed".into()));
    }
    let loss = &model.loss;
    let cache = &model.cache;
    let n = ds.n() as f64;
    let nn = n - 1.0;
    let a = model.alpha[i];
    let y = ds.y()[i];
    let row = ds.row(i);
    let c = loss.conj(y, -a);
    if c == f64::INFINITY {
        let cert = GapCertificate::for_problem(f64::INFINITY, ds.n() - 1, loss, &model.reg);
        return Ok((cert, TouchCounter::default()));
    }
    let cross: f64 = row.iter().map(|(j, x)| x * cache.xt_alpha[j]).sum();
    let u2 = (cache.xt_alpha_norm_sq - 2.0 * a * cross + a * a * ds.instance_norm(i).powi(2)).max(0.0);
    let removed_term = loss.value(y, cache.xw[i]) + c;
    let ratio = n / nn;
    let gap = ratio * (cache.loss_sum + cache.loss_conj_sum) - removed_term / nn
        + cache.reg_sum
        + u2 / (2.0 * lambda * nn * nn);
    let touches = TouchCounter {
        matrix_entries_touched: row.nnz(),
        vector_ops: row.nnz(),
    };
    Ok((GapCertificate::for_problem(gap, ds.n() - 1, loss, &model.reg), touches))
}

/// Single-feature removal for plain L2.
pub fn gap_feature_removal_l2(
    model: &TrainedModel,
    ds: &Dataset,
    j: usize,
) -> Result<(GapCertificate, TouchCounter)> {
    let lambda = require_l2(&model.reg)?;
    check_model(model, ds)?;
    if j >= ds.d() {
        return Err(Error::Precondition(format!("feature {j} out of range")));
    }
    if ds.d() < 2 {
        return Err(Error::Domain("all features removed".into()));
    }
    let cache = &model.cache;
    let n = ds.n() as f64;
    let wj = model.w[j];
    let col = ds.col(j);
    let mut xw = cache.xw.clone();
    if wj != 0.0 {
        for (i, x) in col.iter() {
            xw[i] -= wj * x;
        }
    }
    let s = cache.xt_alpha[j];
    let removed = 0.5 * lambda * wj * wj + s * s / (2.0 * n * n * lambda);
    let gap = -removed + crate::erm::mean_loss(ds, &model.loss, &xw) + cache.reg_sum - cache.dual();
    let touches = TouchCounter {
        matrix_entries_touched: col.nnz(),
        vector_ops: 2 * ds.n(),
    };
    Ok((GapCertificate::for_problem(gap, ds.n(), &model.loss, &model.reg), touches))
}

/// Result of [`gap_for_modification`].
#[derive(Debug, Clone)]
pub enum ModificationGap {
    RemoveInstances(InstanceRemovalGap),
    AddInstances(InstanceAdditionGap),
    RemoveFeatures(FeatureRemovalGap),
    AddFeatures(FeatureAdditionGap),
}

impl ModificationGap {
    pub fn certificate(&self) -> &GapCertificate {
        match self {
            ModificationGap::RemoveInstances(g) => &g.certificate,
            ModificationGap::AddInstances(g) => &g.certificate,
            ModificationGap::RemoveFeatures(g) => &g.certificate,
            ModificationGap::AddFeatures(g) => &g.certificate,
        }
    }

    pub fn touches(&self) -> TouchCounter {
        match self {
            ModificationGap::RemoveInstances(g) => g.touches,
            ModificationGap::AddInstances(g) => g.touches,
            ModificationGap::RemoveFeatures(g) => g.touches,
            ModificationGap::AddFeatures(g) => g.touches,
        }
    }

    /// Candidate pair `(ŵ, α̂)` for the modified problem and its regularizer.
    pub fn candidate(&self, model: &TrainedModel) -> (Vec<f64>, Vec<f64>, Regularizer) {
        match self {
            ModificationGap::RemoveInstances(g) => (model.w.clone(), g.alpha_hat(model), model.reg),
            ModificationGap::AddInstances(g) => (model.w.clone(), g.alpha_hat(model), model.reg),
            ModificationGap::RemoveFeatures(g) => (g.w_hat(model), model.alpha.clone(), g.reg),
            ModificationGap::AddFeatures(g) => (g.w_hat(model), model.alpha.clone(), g.reg),
        }
    }
}

pub fn gap_for_modification(model: &TrainedModel, ds: &Dataset, spec: &ModificationSpec) -> Result<ModificationGap> {
    Ok(match spec {
        ModificationSpec::RemoveInstances(idx) => {
            ModificationGap::RemoveInstances(gap_instance_removal(model, ds, idx)?)
        }
        ModificationSpec::AddInstances { rows, y } => {
            ModificationGap::AddInstances(gap_instance_addition(model, ds, rows, y)?)
        }
        ModificationSpec::RemoveFeatures(idx) => {
            ModificationGap::RemoveFeatures(gap_feature_removal(model, ds, idx)?)
        }
        ModificationSpec::AddFeatures { cols } => {
            ModificationGap::AddFeatures(gap_feature_addition(model, ds, cols)?)
        }
    })
}
