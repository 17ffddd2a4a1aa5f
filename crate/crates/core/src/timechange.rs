//! Inverting the interior clock: `X(t) = Y(tau(t))` with
//! `tau(t) = inf{s : lambda0(s) > t}`.
//!
//! On a simulated path `lambda0` is piecewise linear with unit slope on
//! holding intervals that precede diffusion moves and flat elsewhere, so
//! `tau` is piecewise linear with unit slope and jumps over every flat
//! stretch. `X` is piecewise constant: on `[t_k, t_{k+1})` it equals the
//! state reached after the `k`-th diffusion move and the boundary pushes
//! that follow it.

use serde::{Deserialize, Serialize};

use crate::controlled::{BoundaryAtom, ControlledPath, StepKind};
use crate::error::{Error, Result};
use crate::geometry::{norm, Point};

/// `tau` on one unit-slope stretch: `tau(t) = s_start + (t - t_start)` for
/// `t` in `[t_start, t_start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSegment {
    pub t_start: f64,
    pub s_start: f64,
    pub len: f64,
}

/// Exact right-continuous inverse of `lambda0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tau {
    pub segments: Vec<TauSegment>,
    /// Terminal `lambda0`, the end of the physical horizon.
    pub horizon: f64,
    /// Terminal controlled time.
    pub s_end: f64,
}

impl Tau {
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t > self.horizon {
            return Err(Error::OutOfRange {
                at: t,
                end: self.horizon,
            });
        }
        let i = self.segments.partition_point(|g| g.t_start <= t);
        if i == self.segments.len() && t >= self.horizon {
            return Ok(self.s_end);
        }
        let g = &self.segments[i - 1];
        Ok(g.s_start + (t - g.t_start))
    }

    /// `tau(0)`, the controlled time spent before the first interior move.
    pub fn initial(&self) -> f64 {
        self.segments.first().map_or(0.0, |g| g.s_start)
    }

    /// `(t, size)` of every jump of `tau` inside the horizon.
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        self.segments
            .windows(2)
            .filter_map(|w| {
                let gap = w[1].s_start - (w[0].s_start + w[0].len);
                (gap > 0.0).then_some((w[1].t_start, gap))
            })
            .collect()
    }

    pub fn max_jump(&self) -> f64 {
        self.jumps().iter().map(|j| j.1).fold(0.0, f64::max)
    }
}

pub fn invert_clock(path: &ControlledPath) -> Result<Tau> {
    if !(path.lambda0 > 0.0) {
        return Err(Error::ZeroLambda0);
    }
    let mut segments = Vec::new();
    for w in path.records.windows(2) {
        if matches!(w[1].kind, StepKind::Diffusion) {
            segments.push(TauSegment {
                t_start: w[0].lambda0,
                s_start: w[0].s,
                len: w[1].lambda0 - w[0].lambda0,
            });
        }
    }
    Ok(Tau {
        segments,
        horizon: path.lambda0,
        s_end: path.s,
    })
}

/// A breakpoint of `X`: `X = x` on `[t, next t)`. `lambda` is the boundary
/// measure accumulated up to and including time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub t: f64,
    pub x: Point,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XSample {
    pub t: f64,
    pub x: Point,
    pub lambda: f64,
    /// Whether this sample is a breakpoint rather than a grid point.
    pub knot: bool,
}

/// An atom of `Lambda`: a `Lambda1` atom carried to the physical time at
/// which its flat stretch of `lambda0` collapses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaAtom {
    pub t: f64,
    /// Index of the knot whose boundary block contains the atom.
    pub knot: usize,
    pub source: BoundaryAtom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedPath {
    pub knots: Vec<Knot>,
    pub samples: Vec<XSample>,
    pub atoms: Vec<LambdaAtom>,
    pub tau: Tau,
    /// `Y(0)`, which differs from `X(0)` when the start is exterior.
    pub y0: Point,
    pub seed: u64,
    pub path_index: u64,
    pub delta: f64,
}

impl ConstrainedPath {
    pub fn horizon(&self) -> f64 {
        self.tau.horizon
    }

    pub fn knot_at(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || t > self.horizon() {
            return Err(Error::OutOfRange {
                at: t,
                end: self.horizon(),
            });
        }
        Ok(self.knots.partition_point(|k| k.t <= t) - 1)
    }

    /// `X(t)`.
    pub fn x_at(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.knots[self.knot_at(t)?].x)
    }

    /// `lambda(t) = Lambda([0, t] x Xi)`.
    pub fn lambda_at(&self, t: f64) -> Result<f64> {
        Ok(self.knots[self.knot_at(t)?].lambda)
    }

    /// Boundary measure at the horizon.
    pub fn total_lambda(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.lambda)
    }
}

/// Knot skeleton shared with the reflected-SDE conversion: knots plus, for
/// each atom, the index of the knot it belongs to.
pub(crate) fn knots_of(path: &ControlledPath) -> (Vec<Knot>, Vec<usize>) {
    let mut knots = vec![Knot {
        t: 0.0,
        x: path.records[0].y.clone(),
        lambda: 0.0,
    }];
    let mut owner = Vec::with_capacity(path.atoms.len());
    let mut lambda = 0.0;
    let mut atom = 0usize;
    for (k, r) in path.records.iter().enumerate().skip(1) {
        match r.kind {
            StepKind::Diffusion => {
                let last = knots.last_mut().expect("nonempty");
                last.x = path.records[k - 1].y.clone();
                last.lambda = lambda;
                knots.push(Knot {
                    t: r.lambda0,
                    x: r.y.clone(),
                    lambda,
                });
            }
            StepKind::Reflection { mass, .. } => {
                lambda += mass;
                owner.push(knots.len() - 1);
                atom += 1;
            }
            StepKind::Nonlocal { dl1, .. } => {
                lambda += dl1;
                owner.push(knots.len() - 1);
                atom += 1;
            }
            StepKind::Start => {}
        }
    }
    debug_assert_eq!(atom, path.atoms.len());
    let last = knots.last_mut().expect("nonempty");
    last.x = path.terminal().into();
    last.lambda = lambda;
    (knots, owner)
}

/// Builds `X` on its breakpoints plus a uniform grid of step `grid_dt`
/// (grid points closer than `1e-12` to a breakpoint are dropped).
pub fn time_change(path: &ControlledPath, grid_dt: f64) -> Result<ConstrainedPath> {
    let tau = invert_clock(path)?;
    let (knots, owner) = knots_of(path);
    let atoms: Vec<LambdaAtom> = path
        .atoms
        .iter()
        .zip(&owner)
        .map(|(a, &k)| LambdaAtom {
            t: knots[k].t,
            knot: k,
            source: a.clone(),
        })
        .collect();

    let mut samples = Vec::with_capacity(knots.len());
    let horizon = tau.horizon;
    let mut g = 0usize;
    let grid = |g: usize| g as f64 * grid_dt;
    let use_grid = grid_dt > 0.0 && grid_dt.is_finite();
    for (i, k) in knots.iter().enumerate() {
        let next_t = knots.get(i + 1).map_or(f64::INFINITY, |n| n.t);
        samples.push(XSample {
            t: k.t,
            x: k.x.clone(),
            lambda: k.lambda,
            knot: true,
        });
        if !use_grid {
            continue;
        }
        while grid(g) <= k.t + 1e-12 {
            g += 1;
        }
        while grid(g) < next_t - 1e-12 && grid(g) <= horizon {
            samples.push(XSample {
                t: grid(g),
                x: k.x.clone(),
                lambda: k.lambda,
                knot: false,
            });
            g += 1;
        }
    }

    Ok(ConstrainedPath {
        knots,
        samples,
        atoms,
        tau,
        y0: path.records[0].y.clone(),
        seed: path.seed,
        path_index: path.path_index,
        delta: path.delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NaturalityReport {
    /// Largest `|atom.x - X(atom.t)|`.
    pub max_atom_distance: f64,
    /// Largest increase of `lambda` at a single time.
    pub max_lambda_jump: f64,
    pub atoms: usize,
}

impl NaturalityReport {
    pub fn passes(&self, bound: f64) -> bool {
        self.max_atom_distance <= bound
    }
}

/// Measures how far `Lambda` is from being carried by the path. Nonlocal
/// atoms are included: their pre-jump point is compared with `X`.
pub fn check_natural(cp: &ConstrainedPath) -> NaturalityReport {
    let mut rep = NaturalityReport {
        atoms: cp.atoms.len(),
        ..Default::default()
    };
    for a in &cp.atoms {
        let x = match cp.x_at(a.t) {
            Ok(x) => x,
            Err(_) => {
                rep.max_atom_distance = f64::INFINITY;
                continue;
            }
        };
        let diff: Point = a.source.x.iter().zip(x).map(|(p, q)| p - q).collect();
        rep.max_atom_distance = rep.max_atom_distance.max(norm(&diff));
    }
    let mut prev = 0.0;
    for k in &cp.knots {
        rep.max_lambda_jump = rep.max_lambda_jump.max(k.lambda - prev);
        prev = k.lambda;
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{BoundaryBehavior, DiffusionCoefficients};
    use crate::controlled::{simulate_controlled, PathRecord, Stop};
    use crate::fixtures;
    use crate::kernel::{Kernel, StepConfig};
    use smallvec::smallvec;
    use std::f64::consts::FRAC_PI_4;

    fn rec(s: f64, y: f64, l0: f64, kind: StepKind) -> PathRecord {
        PathRecord {
            s,
            y: smallvec![y],
            lambda0: l0,
            lambda1: s - l0,
            kind,
        }
    }

    fn refl(mass: f64) -> StepKind {
        StepKind::Reflection {
            face: 0,
            direction: smallvec![1.0],
            mass,
        }
    }

    /// 0.3 -> -0.2 (diffusion, 0.1) -> two pushes of 0.1 -> 0.4 (diffusion, 0.1).
    fn handmade() -> ControlledPath {
        let records = vec![
            rec(0.0, 0.3, 0.0, StepKind::Start),
            rec(0.1, -0.2, 0.1, StepKind::Diffusion),
            rec(0.2, -0.1, 0.1, refl(0.1)),
            rec(0.3, 0.0, 0.1, refl(0.1)),
            rec(0.4, 0.4, 0.2, StepKind::Diffusion),
        ];
        let atom = |s: f64, x: f64| BoundaryAtom {
            s,
            x: smallvec![x],
            face: Some(0),
            direction: smallvec![1.0],
            mass: 0.1,
            target: None,
        };
        ControlledPath {
            records,
            atoms: vec![atom(0.1, -0.2), atom(0.2, -0.1)],
            increments: vec![],
            lambda0: 0.2,
            lambda1: 0.2,
            s: 0.4,
            seed: 0,
            path_index: 0,
            dt: 0.1,
            delta: 0.1,
        }
    }

    #[test]
    fn exterior_block_collapses_to_one_time() {
        let cp = time_change(&handmade(), 0.0).unwrap();
        assert_eq!(cp.knots.len(), 3);
        assert_eq!(cp.x_at(0.05).unwrap(), &[0.3]);
        assert_eq!(cp.x_at(0.1).unwrap(), &[0.0]);
        assert_eq!(cp.x_at(0.2).unwrap(), &[0.4]);
        assert!((cp.lambda_at(0.1).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(cp.lambda_at(0.05).unwrap(), 0.0);
        assert!(cp.atoms.iter().all(|a| a.t == 0.1));
        let jumps = cp.tau.jumps();
        assert_eq!(jumps.len(), 1);
        assert!((jumps[0].0 - 0.1).abs() < 1e-15 && (jumps[0].1 - 0.2).abs() < 1e-15);
        let rep = check_natural(&cp);
        assert!((rep.max_atom_distance - 0.2).abs() < 1e-15);
        assert!((rep.max_lambda_jump - 0.2).abs() < 1e-15);
    }

    #[test]
    fn tau_of_pure_interior_path_is_identity() {
        let dom = fixtures::unit_box();
        let co = DiffusionCoefficients::brownian(0.0);
        let bh = BoundaryBehavior::ObliqueReflection;
        let k = Kernel::new(&dom, &co, &bh, StepConfig::new(0.05, 0.01));
        let p = simulate_controlled(&k, &[0.5, 0.5], Stop::Lambda0(1.0), 0, 0).unwrap();
        let tau = invert_clock(&p).unwrap();
        for t in [0.0, 0.17, 0.5, 0.99, 1.0] {
            assert!((tau.eval(t).unwrap() - t).abs() < 1e-12);
        }
        let cp = time_change(&p, 0.01).unwrap();
        assert!(cp.atoms.is_empty());
        assert!(cp.samples.windows(2).all(|w| w[0].t < w[1].t));
        assert_eq!(check_natural(&cp), NaturalityReport::default());
    }

    #[test]
    fn zero_lambda0_is_rejected() {
        let mut p = handmade();
        p.records.truncate(1);
        p.lambda0 = 0.0;
        assert_eq!(invert_clock(&p), Err(Error::ZeroLambda0));
    }

    #[test]
    fn generalized_inverse_identities() {
        let dom = fixtures::lens(FRAC_PI_4);
        let co = DiffusionCoefficients::brownian(1.0);
        let bh = BoundaryBehavior::ObliqueReflection;
        let k = Kernel::new(&dom, &co, &bh, StepConfig::new(1e-3, 1e-3));
        let p = simulate_controlled(&k, &[0.0, 0.0], Stop::Lambda0(0.1), 4, 1).unwrap();
        let tau = invert_clock(&p).unwrap();
        for r in &p.records {
            if r.lambda0 < p.lambda0 {
                assert!(tau.eval(r.lambda0).unwrap() >= r.s - 1e-12);
            }
        }
        for a in time_change(&p, 1e-3).unwrap().atoms {
            let s = tau.eval(a.t).unwrap();
            let (l0, _) = p.clocks_at(s).unwrap();
            assert!((l0 - a.t).abs() < 1e-12);
        }
    }

    #[test]
    fn displaced_atom_is_flagged() {
        let mut cp = time_change(&handmade(), 0.0).unwrap();
        cp.atoms[0].source.x[0] += 2.0;
        assert!(check_natural(&cp).max_atom_distance > 1.0);
    }
}
