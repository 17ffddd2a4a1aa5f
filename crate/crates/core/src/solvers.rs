//! Small dense solvers: a Bland-rule simplex, matrix-game values, NNLS
//! (Lawson–Hanson) and least-distance programming on top of it.
//!
//! Problem sizes here are tiny (at most 16 faces), so everything works on
//! dense `nalgebra` matrices and favours determinism over speed.

use nalgebra::{DMatrix, DVector};

const PIVOT_EPS: f64 = 1e-12;

/// Outcome of [`simplex_max`].
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Unbounded,
}

/// Maximizes `c^T x` subject to `A x <= b`, `x >= 0`, for `b >= 0`.
///
/// The origin is feasible, so a single phase suffices. Entering and leaving
/// variables follow Bland's rule, which rules out cycling.
pub fn simplex_max(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> LpOutcome {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);
    assert!(b.iter().all(|v| *v >= 0.0), "simplex_max requires b >= 0");

    let width = n + m + 1;
    // Row r < m: constraint rows; row m: objective (reduced costs, negated).
    let mut t = DMatrix::<f64>::zeros(m + 1, width);
    for r in 0..m {
        for j in 0..n {
            t[(r, j)] = a[(r, j)];
        }
        t[(r, n + r)] = 1.0;
        t[(r, width - 1)] = b[r];
    }
    for j in 0..n {
        t[(m, j)] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    while let Some(enter) = (0..n + m).find(|&j| t[(m, j)] < -PIVOT_EPS) {
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..m {
            let coef = t[(r, enter)];
            if coef > PIVOT_EPS {
                let ratio = t[(r, width - 1)] / coef;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best - 1e-14 || (ratio <= best + 1e-14 && basis[r] < basis[l])
                    }
                };
                if better {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(pr) = leave else {
            return LpOutcome::Unbounded;
        };
        let piv = t[(pr, enter)];
        for j in 0..width {
            t[(pr, j)] /= piv;
        }
        for r in 0..=m {
            if r != pr {
                let f = t[(r, enter)];
                if f != 0.0 {
                    for j in 0..width {
                        t[(r, j)] -= f * t[(pr, j)];
                    }
                }
            }
        }
        basis[pr] = enter;
    }

    let mut x = vec![0.0; n];
    for (r, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[(r, width - 1)];
        }
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, value }
}

/// Value of a zero-sum game and an optimal mixed strategy for the row player.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSolution {
    pub value: f64,
    pub strategy: Vec<f64>,
}

/// `min over eta in simplex(rows)` of `max_j (eta^T M)_j`.
pub fn min_max_value(m: &DMatrix<f64>) -> GameSolution {
    let (p, q) = m.shape();
    assert!(p > 0 && q > 0, "empty game");
    if p == 1 {
        let value = m.row(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return GameSolution {
            value,
            strategy: vec![1.0],
        };
    }
    if q == 1 {
        let (i, value) =
            m.column(0)
                .iter()
                .cloned()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
                );
        let mut strategy = vec![0.0; p];
        strategy[i] = 1.0;
        return GameSolution { value, strategy };
    }

    // Shift to a strictly positive payoff, then
    // 1 / v' = max { sum x : M'^T x <= 1, x >= 0 } and eta = v' x.
    let shift = 1.0 - m.min();
    let shifted = m.map(|v| v + shift);
    let a = shifted.transpose();
    let outcome = simplex_max(&a, &vec![1.0; q], &vec![1.0; p]);
    let LpOutcome::Optimal { x, value } = outcome else {
        unreachable!("positive game matrices give bounded programs");
    };
    let v_shifted = 1.0 / value;
    let strategy: Vec<f64> = x.iter().map(|xi| xi * v_shifted).collect();
    GameSolution {
        value: v_shifted - shift,
        strategy,
    }
}

/// `max over alpha in simplex(rows)` of `min_j (alpha^T M)_j`.
pub fn max_min_value(m: &DMatrix<f64>) -> GameSolution {
    let sol = min_max_value(&(-m));
    GameSolution {
        value: -sol.value,
        strategy: sol.strategy,
    }
}

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let eps = 1e-13 * svd.singular_values.max().max(1.0);
    svd.solve(b, eps).expect("svd with both factors")
}

/// Nonnegative least squares: `min |A x - b|` subject to `x >= 0`.
///
/// Returns the solution and the residual norm.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let (_, n) = a.shape();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.norm() * b.norm().max(1.0);
    let tol = 1e-13 * scale.max(1.0);
    let max_outer = 30 * n.max(1) + 10;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let enter = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = enter else { break };
        passive[t] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(&idx);
            let zs = lstsq(&sub, b);
            let mut z = DVector::<f64>::zeros(n);
            for (k, &j) in idx.iter().enumerate() {
                z[j] = zs[k];
            }
            if idx.iter().all(|&j| z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut blocking = idx[0];
            for &j in &idx {
                if z[j] <= 0.0 {
                    let denom = x[j] - z[j];
                    let step = if denom > 0.0 { x[j] / denom } else { 0.0 };
                    if step < alpha {
                        alpha = step;
                        blocking = j;
                    }
                }
            }
            x = &x + (z - &x) * alpha;
            x[blocking] = 0.0;
            let floor = 1e-15 * (1.0 + x.amax());
            for &j in &idx {
                if x[j] <= floor {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|p| *p) {
                break;
            }
        }
    }
    let res = (a * &x - b).norm();
    (x, res)
}

/// Least-distance programming: `min |x|` subject to `G x >= h`.
///
/// Solved through the dual NNLS problem. Returns `None` when the
/// constraints are infeasible.
pub fn ldp(g: &DMatrix<f64>, h: &DVector<f64>) -> Option<DVector<f64>> {
    let (m, n) = g.shape();
    let mut e = DMatrix::<f64>::zeros(n + 1, m);
    for i in 0..m {
        for j in 0..n {
            e[(j, i)] = g[(i, j)];
        }
        e[(n, i)] = h[i];
    }
    let mut f = DVector::<f64>::zeros(n + 1);
    f[n] = 1.0;
    let (u, _) = nnls(&e, &f);
    let r = &e * u - f;
    if r.norm() <= 1e-12 || r[n].abs() <= 1e-14 {
        return None;
    }
    Some(DVector::from_iterator(n, (0..n).map(|j| -r[j] / r[n])))
}
