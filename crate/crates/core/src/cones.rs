//! Reflection-cone admissibility at boundary points.
//!
//! For a boundary point `x` with active faces `I(x)`, normals `n^i` and
//! reflection directions `g^i`, the checks here decide
//!
//! * (a) `<g^i, n^i> > 0` on every active face,
//! * (b) some unit `e` in the normal cone has `<g^i, e> > 0` for all active `i`,
//! * (c) for every realizable exterior subset `I`, the game value
//!   `min_{eta in simplex(I)} max_{j in I} <sum eta_i n^i, g^j>` is positive.
//!
//! Their minimum over subsets is the margin `beta` that drives the face
//! selection rule in the simulators.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, DomainSpec, LocalBoundaryData};
use crate::solvers::{ldp, max_min_value, min_max_value, nnls};

/// Positivity threshold applied to `beta`.
pub const BETA_TOL: f64 = 1e-10;
const MARGIN_TOL: f64 = 1e-12;
const CONE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionB {
    pub holds: bool,
    /// Unit witness direction in the normal cone.
    pub witness: Option<Vec<f64>>,
    /// `min_i <g^i, e>` for the witness, or the (nonpositive) best game value
    /// over normalized normal-cone weights when no witness exists.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetValue {
    pub subset: Vec<usize>,
    pub value: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionC {
    pub holds: bool,
    pub beta: f64,
    pub worst_subset: Vec<usize>,
    pub worst_weights: Vec<f64>,
    pub per_subset: Vec<SubsetValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub point: Vec<f64>,
    pub active: Vec<usize>,
    /// `min_i <g^i, n^i>` over active faces.
    pub min_normal_component: f64,
    pub condition_b: ConditionB,
    pub condition_c: ConditionC,
}

impl ConeReport {
    pub fn holds(&self) -> bool {
        self.min_normal_component > 0.0 && self.condition_b.holds && self.condition_c.holds
    }
}

fn to_matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let d = cols[0].len();
    DMatrix::from_fn(d, cols.len(), |r, c| cols[c][r])
}

/// Searches for a unit `e = sum alpha_i n^i`, `alpha >= 0`, maximizing
/// `min_j <g^j, e>`.
pub fn check_condition_b(local: &LocalBoundaryData) -> ConditionB {
    let p = local.active.len();
    if p == 0 {
        return ConditionB {
            holds: false,
            witness: None,
            margin: f64::NEG_INFINITY,
        };
    }
    // payoff[i][j] = <n^i, g^j>; rows are normal weights.
    let payoff = DMatrix::from_fn(p, p, |i, j| dot(&local.normals[i], &local.reflections[j]));
    let game = max_min_value(&payoff);
    if game.value <= MARGIN_TOL {
        return ConditionB {
            holds: false,
            witness: None,
            margin: game.value,
        };
    }

    let normals = to_matrix(&local.normals);
    let witness = min_norm_witness(&normals, &payoff).unwrap_or_else(|| {
        let alpha = DVector::from_vec(game.strategy.clone());
        &normals * alpha
    });
    let len = witness.norm();
    let e: Vec<f64> = witness.iter().map(|v| v / len).collect();
    let margin = local
        .reflections
        .iter()
        .map(|g| dot(g, &e))
        .fold(f64::INFINITY, f64::min);
    ConditionB {
        holds: margin > MARGIN_TOL,
        witness: Some(e),
        margin,
    }
}

/// `min |N alpha|` subject to `payoff^T alpha >= 1`, `alpha >= 0`.
///
/// The minimizer, scaled to unit length, is the max-margin witness. Rank
/// deficient normal sets get a vanishing ridge term so the reduction to a
/// least-distance program stays well posed.
fn min_norm_witness(normals: &DMatrix<f64>, payoff: &DMatrix<f64>) -> Option<DVector<f64>> {
    let (d, p) = normals.shape();
    let svd = normals.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let full_rank = p <= d && svd.singular_values.min() > 1e-10 * smax.max(1.0);
    let a = if full_rank {
        normals.clone()
    } else {
        let ridge = 1e-7;
        let mut a = DMatrix::<f64>::zeros(d + p, p);
        a.view_mut((0, 0), (d, p)).copy_from(normals);
        for i in 0..p {
            a[(d + i, i)] = ridge;
        }
        a
    };
    let r = a.qr().r();
    let r_inv = r.try_inverse()?;
    // Constraints on w = R alpha: payoff^T R^-1 w >= 1 and R^-1 w >= 0.
    let mut g = DMatrix::<f64>::zeros(2 * p, p);
    g.view_mut((0, 0), (p, p))
        .copy_from(&(payoff.transpose() * &r_inv));
    g.view_mut((p, 0), (p, p)).copy_from(&r_inv);
    let mut h = DVector::<f64>::zeros(2 * p);
    h.rows_mut(0, p).fill(1.0);
    let w = ldp(&g, &h)?;
    let alpha = (r_inv * w).map(|v| v.max(0.0));
    let e = normals * alpha;
    (e.norm() > 0.0 && e.iter().all(|v| v.is_finite())).then_some(e)
}

/// Game value of every realizable exterior subset and their minimum `beta`.
pub fn check_condition_c(local: &LocalBoundaryData) -> ConditionC {
    let mut per_subset = Vec::with_capacity(local.realizable.len());
    for subset in &local.realizable {
        let slots: Vec<usize> = subset
            .iter()
            .map(|&i| local.slot(i).expect("realizable subsets lie in I(x)"))
            .collect();
        let k = slots.len();
        let payoff = DMatrix::from_fn(k, k, |a, b| {
            dot(&local.normals[slots[a]], &local.reflections[slots[b]])
        });
        let sol = min_max_value(&payoff);
        per_subset.push(SubsetValue {
            subset: subset.clone(),
            value: sol.value,
            weights: sol.strategy,
        });
    }
    let worst = per_subset
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .cloned();
    match worst {
        Some(w) => ConditionC {
            holds: w.value > BETA_TOL,
            beta: w.value,
            worst_subset: w.subset,
            worst_weights: w.weights,
            per_subset,
        },
        None => ConditionC {
            holds: false,
            beta: f64::NEG_INFINITY,
            worst_subset: vec![],
            worst_weights: vec![],
            per_subset,
        },
    }
}

/// Full report at one boundary point.
pub fn check_point(domain: &DomainSpec, x: &[f64]) -> Result<ConeReport> {
    let local = domain.local_data(x)?;
    Ok(report_for(&local))
}

pub fn report_for(local: &LocalBoundaryData) -> ConeReport {
    let min_normal_component = local
        .normals
        .iter()
        .zip(&local.reflections)
        .map(|(n, g)| dot(n, g))
        .fold(f64::INFINITY, f64::min);
    ConeReport {
        point: local.point.clone(),
        active: local.active.clone(),
        min_normal_component,
        condition_b: check_condition_b(local),
        condition_c: check_condition_c(local),
    }
}

/// Writes `u` as a nonnegative combination of the active reflection
/// directions. Weights are aligned with `local.active`.
///
/// Among all nonnegative solutions the one of least Euclidean norm is
/// returned. The sum of weights is not normalized.
pub fn decompose_direction(local: &LocalBoundaryData, u: &[f64]) -> Result<Vec<f64>> {
    decompose(&local.reflections, u)
}

/// [`decompose_direction`] on an explicit generator list.
pub fn decompose(generators: &[Vec<f64>], u: &[f64]) -> Result<Vec<f64>> {
    if generators.is_empty() {
        return Err(Error::NotInCone { residual: norm(u) });
    }
    let g = to_matrix(generators);
    let target = DVector::from_column_slice(u);
    let (fit, residual) = nnls(&g, &target);
    if residual > CONE_RESIDUAL_TOL {
        return Err(Error::NotInCone { residual });
    }
    let p = generators.len();

    // Least-norm point of {eta >= 0, G eta = u}; the equality enters as a
    // pair of inequalities.
    let d = u.len();
    let mut cons = DMatrix::<f64>::zeros(2 * d + p, p);
    cons.view_mut((0, 0), (d, p)).copy_from(&g);
    cons.view_mut((d, 0), (d, p)).copy_from(&(-&g));
    for i in 0..p {
        cons[(2 * d + i, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(2 * d + p);
    rhs.rows_mut(0, d).copy_from(&target);
    rhs.rows_mut(d, d).copy_from(&(-&target));
    let start = ldp(&cons, &rhs)
        .map(|v| v.map(|x| x.max(0.0)))
        .unwrap_or(fit);

    // Pseudo-inverse refinement on the support.
    let top = start.amax();
    let support: Vec<usize> = (0..p)
        .filter(|&i| start[i] > 1e-9 * top.max(1e-300))
        .collect();
    let mut eta = start.clone();
    if !support.is_empty() {
        let sub = g.select_columns(&support);
        if let Ok(pinv) = sub.pseudo_inverse(1e-12) {
            let refined = pinv * &target;
            if refined.iter().all(|v| *v >= 0.0) {
                let mut candidate = DVector::<f64>::zeros(p);
                for (k, &i) in support.iter().enumerate() {
                    candidate[i] = refined[k];
                }
                let r_new = (&g * &candidate - &target).norm();
                let r_old = (&g * &eta - &target).norm();
                if r_new <= r_old.max(1e-14) {
                    eta = candidate;
                }
            }
        }
    }
    let final_res = (&g * &eta - &target).norm();
    if final_res > CONE_RESIDUAL_TOL {
        return Err(Error::NotInCone {
            residual: final_res,
        });
    }
    Ok(eta.iter().copied().collect())
}

/// Aggregate of [`boundary_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub reports: Vec<ConeReport>,
    pub min_margin: f64,
    pub min_beta: f64,
    pub failures: usize,
    pub all_hold: bool,
}

/// Samples boundary points and checks each one.
pub fn boundary_sweep(domain: &DomainSpec, n_samples: usize, seed: u64) -> Result<SweepReport> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be at least 1".into()));
    }
    let points = domain.sample_boundary(n_samples, seed);
    if points.is_empty() {
        return Err(Error::BoundarySamplingFailed);
    }
    sweep_points(domain, &points)
}

/// Checks an explicit list of boundary points.
pub fn sweep_points(domain: &DomainSpec, points: &[Vec<f64>]) -> Result<SweepReport> {
    let reports: Vec<ConeReport> = points
        .par_iter()
        .map(|x| check_point(domain, x))
        .collect::<Result<_>>()?;
    let min_margin = reports
        .iter()
        .map(|r| r.condition_b.margin)
        .fold(f64::INFINITY, f64::min);
    let min_beta = reports
        .iter()
        .map(|r| r.condition_c.beta)
        .fold(f64::INFINITY, f64::min);
    let failures = reports.iter().filter(|r| !r.holds()).count();
    Ok(SweepReport {
        all_hold: failures == 0,
        reports,
        min_margin,
        min_beta,
        failures,
    })
}
