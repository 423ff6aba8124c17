//! Proximal and shrinkage operators, and the penalty values they belong to.
//!
//! Every operator works on plain slices so the solvers can apply it to one
//! abundance column at a time without copying. The `*_in_place` variants are
//! what the solvers call; the allocating versions are thin wrappers.

use nalgebra::DMatrix;

use crate::error::{HsiError, Result};
use crate::model::GroupStructure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    L1,
    GroupL21,
    ElitistL12,
    FractionalQ,
    Collaborative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyValue {
    pub value: f64,
    pub kind: PenaltyKind,
}

fn check_exponents(p: f64, q: f64) -> Result<()> {
    if !(p > 0.0 && q > 0.0) {
        return Err(HsiError::invalid(
            "mixed norm",
            format!("exponents must be positive, got p = {p}, q = {q}"),
        ));
    }
    Ok(())
}

fn group_p_norms(v: &[f64], groups: &GroupStructure, p: f64) -> Result<Vec<f64>> {
    groups.check_atoms("mixed norm", v.len())?;
    Ok((0..groups.groups())
        .map(|g| {
            let s: f64 = groups.members(g).iter().map(|&j| v[j].abs().powf(p)).sum();
            s.powf(1.0 / p)
        })
        .collect())
}

/// `(sum_i ||v_{G_i}||_p^q)^(1/q)`.
pub fn mixed_norm(v: &[f64], groups: &GroupStructure, p: f64, q: f64) -> Result<f64> {
    Ok(mixed_norm_pow_q(v, groups, p, q)?.powf(1.0 / q))
}

/// `sum_i ||v_{G_i}||_p^q`, the q-th power of [`mixed_norm`].
pub fn mixed_norm_pow_q(v: &[f64], groups: &GroupStructure, p: f64, q: f64) -> Result<f64> {
    check_exponents(p, q)?;
    Ok(group_p_norms(v, groups, p)?.iter().map(|n| n.powf(q)).sum())
}

/// `||A||_1` summed over all entries.
pub fn l1_penalty(a: &DMatrix<f64>) -> PenaltyValue {
    PenaltyValue {
        value: a.iter().map(|v| v.abs()).sum(),
        kind: PenaltyKind::L1,
    }
}

/// Group lasso value `sum_k ||a_k||_{G,2,1}`.
pub fn group_penalty(a: &DMatrix<f64>, groups: &GroupStructure) -> Result<PenaltyValue> {
    let mut value = 0.0;
    for col in a.column_iter() {
        value += mixed_norm_pow_q(col.as_slice(), groups, 2.0, 1.0)?;
    }
    Ok(PenaltyValue {
        value,
        kind: PenaltyKind::GroupL21,
    })
}

/// Elitist value `sum_k 1/2 ||a_k||_{G,1,2}^2`.
///
/// The half squared norm is the function whose proximal operator
/// [`prox_elitist`] computes (exactly so for single-atom groups).
pub fn elitist_penalty(a: &DMatrix<f64>, groups: &GroupStructure) -> Result<PenaltyValue> {
    let mut value = 0.0;
    for col in a.column_iter() {
        value += 0.5 * mixed_norm_pow_q(col.as_slice(), groups, 1.0, 2.0)?;
    }
    Ok(PenaltyValue {
        value,
        kind: PenaltyKind::ElitistL12,
    })
}

/// Fractional value `sum_k ||a_k||_{G,1,q}^q`.
pub fn fractional_penalty(a: &DMatrix<f64>, groups: &GroupStructure, q: f64) -> Result<PenaltyValue> {
    let mut value = 0.0;
    for col in a.column_iter() {
        value += mixed_norm_pow_q(col.as_slice(), groups, 1.0, q)?;
    }
    Ok(PenaltyValue {
        value,
        kind: PenaltyKind::FractionalQ,
    })
}

/// `sum_rows ||row||_2`.
pub fn collaborative_penalty(a: &DMatrix<f64>) -> PenaltyValue {
    PenaltyValue {
        value: a.row_iter().map(|r| r.norm()).sum(),
        kind: PenaltyKind::Collaborative,
    }
}

#[inline]
fn soft_scalar(u: f64, tau: f64) -> f64 {
    u.signum() * (u.abs() - tau).max(0.0)
}

pub fn soft_threshold_in_place(u: &mut [f64], tau: f64) {
    for x in u.iter_mut() {
        *x = soft_scalar(*x, tau);
    }
}

/// Componentwise `sign(u_i) (|u_i| - tau)_+`.
pub fn soft_threshold(u: &[f64], tau: f64) -> Vec<f64> {
    let mut out = u.to_vec();
    soft_threshold_in_place(&mut out, tau);
    out
}

pub fn block_soft_threshold_in_place(v: &mut [f64], tau: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = if norm > 0.0 {
        (1.0 - tau / norm).max(0.0)
    } else {
        0.0
    };
    for x in v.iter_mut() {
        *x *= scale;
    }
}

/// `(1 - tau / ||v||_2)_+ v`, mapping zero to zero.
pub fn block_soft_threshold(v: &[f64], tau: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    block_soft_threshold_in_place(&mut out, tau);
    out
}

/// Block soft thresholding of each group's subvector.
pub fn prox_group_in_place(v: &mut [f64], groups: &GroupStructure, tau: f64) {
    for g in 0..groups.groups() {
        let members = groups.members(g);
        let norm = members.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt();
        let scale = if norm > 0.0 {
            (1.0 - tau / norm).max(0.0)
        } else {
            0.0
        };
        for &j in members {
            v[j] *= scale;
        }
    }
}

/// Proximal operator of `tau ||.||_{G,2,1}`.
pub fn prox_group(v: &[f64], groups: &GroupStructure, tau: f64) -> Result<Vec<f64>> {
    groups.check_atoms("prox_group", v.len())?;
    let mut out = v.to_vec();
    prox_group_in_place(&mut out, groups, tau);
    Ok(out)
}

pub fn prox_elitist_in_place(v: &mut [f64], groups: &GroupStructure, tau: f64) {
    let shrink = tau / (1.0 + tau);
    for g in 0..groups.groups() {
        let members = groups.members(g);
        let gamma = shrink * members.iter().map(|&j| v[j].abs()).sum::<f64>();
        for &j in members {
            v[j] = soft_scalar(v[j], gamma);
        }
    }
}

/// Elitist shrinkage: per group, soft thresholding at
/// `gamma_i = tau / (1 + tau) * ||v_{G_i}||_1`.
pub fn prox_elitist(v: &[f64], groups: &GroupStructure, tau: f64) -> Result<Vec<f64>> {
    groups.check_atoms("prox_elitist", v.len())?;
    let mut out = v.to_vec();
    prox_elitist_in_place(&mut out, groups, tau);
    Ok(out)
}

#[inline]
fn q_shrink_scalar(u: f64, q: f64, tau: f64) -> f64 {
    let mag = u.abs();
    if mag == 0.0 {
        return 0.0;
    }
    // tau^(2-q) |u|^(q-1) written as tau (tau/|u|)^(1-q): the ratio is exactly 1
    // at |u| = tau, so the dead zone boundary is exact.
    let subtract = tau * (tau / mag).powf(1.0 - q);
    u.signum() * (mag - subtract).max(0.0)
}

pub fn q_shrink_in_place(u: &mut [f64], q: f64, tau: f64) {
    for x in u.iter_mut() {
        *x = q_shrink_scalar(*x, q, tau);
    }
}

/// Approximate q-shrinkage `sign(u_i) (|u_i| - tau^(2-q) |u_i|^(q-1))_+`.
///
/// Zero maps to zero. At `q = 1` this is soft thresholding, at `q = 0` hard
/// thresholding; for every `q` the output vanishes exactly when `|u_i| <= tau`.
pub fn q_shrink(u: &[f64], q: f64, tau: f64) -> Vec<f64> {
    let mut out = u.to_vec();
    q_shrink_in_place(&mut out, q, tau);
    out
}

/// Euclidean projection onto the unit simplex; `scratch` is working storage.
pub fn project_simplex_in_place(v: &mut [f64], scratch: &mut Vec<f64>) {
    let theta = simplex_threshold(v, scratch);
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// The shift `mu` such that `max(v_i - mu, 0)` sums to one.
///
/// Michelot's scheme: average the candidates, drop those at or below the
/// average, repeat until nothing drops. `buf` holds the candidates.
pub fn simplex_threshold(v: &[f64], buf: &mut Vec<f64>) -> f64 {
    let mut mu = (v.iter().sum::<f64>() - 1.0) / v.len() as f64;
    buf.clear();
    buf.extend(v.iter().copied().filter(|&y| y > mu));
    while buf.len() < v.len() {
        let before = buf.len();
        mu = (buf.iter().sum::<f64>() - 1.0) / before as f64;
        buf.retain(|&y| y > mu);
        if buf.len() == before {
            break;
        }
    }
    mu
}

/// `argmin_{x in simplex} ||x - v||_2`.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(HsiError::invalid("simplex projection", "empty vector"));
    }
    let mut out = v.to_vec();
    project_simplex_in_place(&mut out, &mut Vec::with_capacity(v.len()));
    Ok(out)
}

/// Block soft thresholding of every row: the prox of `tau sum_rows ||row||_2`.
pub fn prox_collaborative_rows(v: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut out = v.clone();
    prox_collaborative_rows_in_place(&mut out, tau);
    out
}

pub fn prox_collaborative_rows_in_place(v: &mut DMatrix<f64>, tau: f64) {
    for mut row in v.row_iter_mut() {
        let norm = row.norm();
        let scale = if norm > 0.0 {
            (1.0 - tau / norm).max(0.0)
        } else {
            0.0
        };
        row *= scale;
    }
}

pub fn project_nonneg_in_place(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = x.max(0.0);
    }
}

/// Componentwise `max(v_i, 0)`.
pub fn project_nonneg(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    project_nonneg_in_place(&mut out);
    out
}
