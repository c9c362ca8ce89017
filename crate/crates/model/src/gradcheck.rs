//! Central-difference gradient oracle.

use serde::Serialize;

use crate::encode::Encoded;
use crate::heads::{calibration_loss, LossWeights};
use crate::params::ModelParams;
use crate::ModelError;

#[derive(Debug, Clone, Serialize)]
pub struct GroupError {
    pub name: String,
    /// `max_k |g_a - g_n| / max(|g_a|, |g_n|, 1e-8)` over the group's
    /// elements.
    pub elementwise: f64,
    /// `max_k |g_a - g_n| / max(max_k |g_a|, max_k |g_n|, 1e-8)`.
    pub group: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub groups: Vec<GroupError>,
}

impl GradCheck {
    pub fn max_elementwise(&self) -> f64 {
        self.groups.iter().map(|g| g.elementwise).fold(0.0, f64::max)
    }

    pub fn max_group(&self) -> f64 {
        self.groups.iter().map(|g| g.group).fold(0.0, f64::max)
    }
}

/// Compares the analytic gradient of `loss` against central differences for
/// every parameter. `loss(params, Some((grads, 1.0)))` must accumulate the
/// gradient of the value it returns.
pub fn grad_check_with<F>(params: &ModelParams, eps: f64, loss: F) -> Result<GradCheck, ModelError>
where
    F: Fn(&ModelParams, Option<(&mut ModelParams, f64)>) -> Result<f64, ModelError>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(ModelError::Epsilon(eps));
    }
    let mut analytic = params.zeros_like();
    if !loss(params, Some((&mut analytic, 1.0)))?.is_finite() {
        return Err(ModelError::NonFinite);
    }
    let mut probe = params.clone();
    let n_groups = params.tensors().len();
    let mut groups = Vec::with_capacity(n_groups);
    let analytic_views = analytic.tensors();
    for gi in 0..n_groups {
        let (name, ga) = &analytic_views[gi];
        let ga: Vec<f64> = ga.iter().copied().collect();
        let mut gn = vec![0.0; ga.len()];
        for (k, slot) in gn.iter_mut().enumerate() {
            let orig = element(&mut probe, gi, k, None);
            element(&mut probe, gi, k, Some(orig + eps));
            let up = loss(&probe, None)?;
            element(&mut probe, gi, k, Some(orig - eps));
            let down = loss(&probe, None)?;
            element(&mut probe, gi, k, Some(orig));
            if !(up.is_finite() && down.is_finite()) {
                return Err(ModelError::NonFinite);
            }
            *slot = (up - down) / (2.0 * eps);
        }
        let mut elementwise: f64 = 0.0;
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 1e-8;
        for (a, n) in ga.iter().zip(&gn) {
            let e = (a - n).abs();
            elementwise = elementwise.max(e / a.abs().max(n.abs()).max(1e-8));
            diff = diff.max(e);
            scale = scale.max(a.abs()).max(n.abs());
        }
        groups.push(GroupError {
            name: name.clone(),
            elementwise,
            group: diff / scale,
        });
    }
    Ok(GradCheck { groups })
}

/// Reads element `k` of tensor `gi`, writing `value` first when given.
fn element(p: &mut ModelParams, gi: usize, k: usize, value: Option<f64>) -> f64 {
    let mut views = p.tensors_mut();
    let slot = views[gi]
        .1
        .as_slice_memory_order_mut()
        .expect("parameter tensors are contiguous")
        .get_mut(k)
        .expect("element index in range");
    if let Some(v) = value {
        *slot = v;
    }
    *slot
}

/// Gradient check of the mean calibration loss over `batch`.
pub fn grad_check(params: &ModelParams, batch: &[Encoded], weights: &LossWeights, eps: f64) -> Result<GradCheck, ModelError> {
    let n = batch.len().max(1) as f64;
    grad_check_with(params, eps, |p, mut grads| {
        let mut total = 0.0;
        for enc in batch {
            let g = grads.as_mut().map(|(g, s)| (&mut **g, *s / n));
            total += calibration_loss(p, enc, weights, g)?.l_total;
        }
        Ok(total / n)
    })
}
