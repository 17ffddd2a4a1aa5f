//! Slow-clock simulation of the controlled process `(Y, lambda0, Lambda1)`.
//!
//! `Y` is a pure jump process. Between consecutive records it sits at the
//! earlier record's point while exactly one clock runs: `lambda0` when the
//! next record is a diffusion move, `lambda1` otherwise. Hence
//! `lambda0 + lambda1 = s` along the whole path.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::geometry::{Location, Point};
use crate::kernel::{Kernel, StepSink};
use crate::rng::path_rng;

/// When a simulation ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    /// Run until the interior clock reaches the target. The last step is
    /// shortened to land on it.
    Lambda0(f64),
    /// Run until the controlled clock reaches at least the budget; the last
    /// macro step may overshoot it.
    Budget(f64),
}

impl Stop {
    pub fn validate(&self) -> Result<()> {
        let v = match self {
            Stop::Lambda0(t) | Stop::Budget(t) => *t,
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput("stop target must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Start,
    Diffusion,
    Reflection {
        face: usize,
        direction: Point,
        mass: f64,
    },
    Nonlocal {
        dl1: f64,
        target: Point,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub s: f64,
    pub y: Point,
    pub lambda0: f64,
    pub lambda1: f64,
    pub kind: StepKind,
}

/// One atom of `Lambda1`: the process sat at `x` during
/// `[s, s + mass)` of controlled time while pushing along `direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryAtom {
    pub s: f64,
    pub x: Point,
    /// Face whose field produced the push; `None` for nonlocal jumps.
    pub face: Option<usize>,
    /// Unit push direction; empty for nonlocal jumps.
    pub direction: Point,
    pub mass: f64,
    /// Landing point of a nonlocal jump.
    pub target: Option<Point>,
}

/// Brownian increment of one macro step, starting at `records[record]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseIncrement {
    pub record: usize,
    pub dt: f64,
    pub dw: SmallVec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledPath {
    pub records: Vec<PathRecord>,
    pub atoms: Vec<BoundaryAtom>,
    pub increments: Vec<NoiseIncrement>,
    pub lambda0: f64,
    pub lambda1: f64,
    pub s: f64,
    pub seed: u64,
    pub path_index: u64,
    pub dt: f64,
    pub delta: f64,
}

impl ControlledPath {
    pub fn initial(&self) -> &[f64] {
        &self.records[0].y
    }

    pub fn terminal(&self) -> &[f64] {
        &self.records.last().expect("path has a start record").y
    }

    /// Largest `|lambda0 + lambda1 - s| / s` over all records.
    pub fn clock_residual(&self) -> f64 {
        self.records
            .iter()
            .map(|r| {
                let e = (r.lambda0 + r.lambda1 - r.s).abs();
                if r.s > 0.0 {
                    e / r.s
                } else {
                    e
                }
            })
            .fold(0.0, f64::max)
    }

    /// Index of the record in force at controlled time `s`.
    pub fn record_at(&self, s: f64) -> Result<usize> {
        if !(s >= 0.0) || s > self.s {
            return Err(Error::OutOfRange { at: s, end: self.s });
        }
        Ok(self.records.partition_point(|r| r.s <= s) - 1)
    }

    /// `Y(s)`.
    pub fn y_at(&self, s: f64) -> Result<&[f64]> {
        Ok(&self.records[self.record_at(s)?].y)
    }

    /// `(lambda0(s), lambda1(s))`, interpolated linearly inside the holding
    /// interval.
    pub fn clocks_at(&self, s: f64) -> Result<(f64, f64)> {
        let k = self.record_at(s)?;
        let r = &self.records[k];
        let ds = s - r.s;
        match self.records.get(k + 1) {
            Some(next) if matches!(next.kind, StepKind::Diffusion) => {
                Ok((r.lambda0 + ds, r.lambda1))
            }
            Some(_) => Ok((r.lambda0, r.lambda1 + ds)),
            None => Ok((r.lambda0, r.lambda1)),
        }
    }
}

/// Accumulates the three clocks; shared arithmetic for every sink.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Clocks {
    pub s: f64,
    pub lambda0: f64,
    pub lambda1: f64,
}

struct Tracked<'s, S> {
    inner: &'s mut S,
    clocks: Clocks,
}

impl<S: StepSink> StepSink for Tracked<'_, S> {
    fn noise(&mut self, dt: f64, dw: &[f64], start: &[f64]) {
        self.inner.noise(dt, dw, start);
    }
    fn diffuse(&mut self, dl0: f64, from: &[f64], to: &[f64]) {
        self.clocks.s += dl0;
        self.clocks.lambda0 += dl0;
        self.inner.diffuse(dl0, from, to);
    }
    fn reflect(&mut self, face: usize, dir: &[f64], mass: f64, from: &[f64], to: &[f64]) {
        self.clocks.s += mass;
        self.clocks.lambda1 += mass;
        self.inner.reflect(face, dir, mass, from, to);
    }
    fn jump(&mut self, dl1: f64, from: &[f64], to: &[f64]) {
        self.clocks.s += dl1;
        self.clocks.lambda1 += dl1;
        self.inner.jump(dl1, from, to);
    }
}

/// Runs the scheme from `y0` until `stop`, reporting every move to `sink`.
/// Returns the final state and clocks.
pub fn drive<S: StepSink>(
    kernel: &Kernel<'_>,
    y0: &[f64],
    stop: Stop,
    rng: &mut ChaCha8Rng,
    sink: &mut S,
) -> Result<(Point, Clocks)> {
    kernel.cfg.validate()?;
    stop.validate()?;
    let domain = kernel.domain;
    if y0.len() != domain.dim {
        return Err(Error::InvalidInput(format!(
            "start point has dimension {}, domain has {}",
            y0.len(),
            domain.dim
        )));
    }
    if matches!(domain.classify(y0), Location::OutsideWorkingRegion) {
        return Err(Error::EscapedWorkingRegion {
            state: y0.to_vec(),
            time: 0.0,
        });
    }
    let mut t = Tracked {
        inner: sink,
        clocks: Clocks::default(),
    };
    let mut y: Point = SmallVec::from_slice(y0);
    let stamp = |e: Error, s: f64| match e {
        Error::EscapedWorkingRegion { state, .. } => Error::EscapedWorkingRegion { state, time: s },
        other => other,
    };
    kernel
        .restore(&mut y, rng, &mut t)
        .map_err(|e| stamp(e, 0.0))?;
    loop {
        let dt = match stop {
            Stop::Lambda0(target) => {
                let left = target - t.clocks.lambda0;
                if left <= 1e-12 * target {
                    break;
                }
                kernel.cfg.dt.min(left)
            }
            Stop::Budget(budget) => {
                if t.clocks.s >= budget {
                    break;
                }
                kernel.cfg.dt
            }
        };
        let s = t.clocks.s;
        kernel
            .macro_step(&mut y, dt, rng, &mut t)
            .map_err(|e| stamp(e, s))?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(t.clocks.s));
        }
    }
    Ok((y, t.clocks))
}

/// Sink that records the full controlled path.
#[derive(Debug)]
pub struct PathBuilder {
    records: Vec<PathRecord>,
    atoms: Vec<BoundaryAtom>,
    increments: Vec<NoiseIncrement>,
    clocks: Clocks,
}

impl PathBuilder {
    pub fn new(y0: &[f64]) -> Self {
        Self {
            records: vec![PathRecord {
                s: 0.0,
                y: SmallVec::from_slice(y0),
                lambda0: 0.0,
                lambda1: 0.0,
                kind: StepKind::Start,
            }],
            atoms: Vec::new(),
            increments: Vec::new(),
            clocks: Clocks::default(),
        }
    }

    fn push(&mut self, y: &[f64], kind: StepKind) {
        self.records.push(PathRecord {
            s: self.clocks.s,
            y: SmallVec::from_slice(y),
            lambda0: self.clocks.lambda0,
            lambda1: self.clocks.lambda1,
            kind,
        });
    }
}

impl StepSink for PathBuilder {
    fn noise(&mut self, dt: f64, dw: &[f64], _start: &[f64]) {
        self.increments.push(NoiseIncrement {
            record: self.records.len() - 1,
            dt,
            dw: SmallVec::from_slice(dw),
        });
    }

    fn diffuse(&mut self, dl0: f64, _from: &[f64], to: &[f64]) {
        self.clocks.s += dl0;
        self.clocks.lambda0 += dl0;
        self.push(to, StepKind::Diffusion);
    }

    fn reflect(&mut self, face: usize, dir: &[f64], mass: f64, from: &[f64], to: &[f64]) {
        self.atoms.push(BoundaryAtom {
            s: self.clocks.s,
            x: SmallVec::from_slice(from),
            face: Some(face),
            direction: SmallVec::from_slice(dir),
            mass,
            target: None,
        });
        self.clocks.s += mass;
        self.clocks.lambda1 += mass;
        self.push(
            to,
            StepKind::Reflection {
                face,
                direction: SmallVec::from_slice(dir),
                mass,
            },
        );
    }

    fn jump(&mut self, dl1: f64, from: &[f64], to: &[f64]) {
        self.atoms.push(BoundaryAtom {
            s: self.clocks.s,
            x: SmallVec::from_slice(from),
            face: None,
            direction: SmallVec::new(),
            mass: dl1,
            target: Some(SmallVec::from_slice(to)),
        });
        self.clocks.s += dl1;
        self.clocks.lambda1 += dl1;
        self.push(
            to,
            StepKind::Nonlocal {
                dl1,
                target: SmallVec::from_slice(to),
            },
        );
    }
}

/// Simulates one controlled path on the stream `(seed, path_index)`.
pub fn simulate_controlled(
    kernel: &Kernel<'_>,
    y0: &[f64],
    stop: Stop,
    seed: u64,
    path_index: u64,
) -> Result<ControlledPath> {
    let mut rng = path_rng(seed, path_index);
    let mut b = PathBuilder::new(y0);
    drive(kernel, y0, stop, &mut rng, &mut b)?;
    Ok(ControlledPath {
        lambda0: b.clocks.lambda0,
        lambda1: b.clocks.lambda1,
        s: b.clocks.s,
        records: b.records,
        atoms: b.atoms,
        increments: b.increments,
        seed,
        path_index,
        dt: kernel.cfg.dt,
        delta: kernel.cfg.delta,
    })
}

/// The shifted path `Y(at + .)` with clocks rebased to zero at `at`.
///
/// An atom straddling `at` keeps only the part of its mass after `at`.
/// Increments of macro steps that began before `at` are dropped.
pub fn restart_path(path: &ControlledPath, at: f64) -> Result<ControlledPath> {
    let k = path.record_at(at)?;
    let (l0, l1) = path.clocks_at(at)?;
    let mut records = Vec::with_capacity(path.records.len() - k);
    records.push(PathRecord {
        s: 0.0,
        y: path.records[k].y.clone(),
        lambda0: 0.0,
        lambda1: 0.0,
        kind: StepKind::Start,
    });
    for r in &path.records[k + 1..] {
        records.push(PathRecord {
            s: r.s - at,
            y: r.y.clone(),
            lambda0: r.lambda0 - l0,
            lambda1: r.lambda1 - l1,
            kind: r.kind.clone(),
        });
    }
    let atoms = path
        .atoms
        .iter()
        .filter(|a| a.s + a.mass > at)
        .map(|a| {
            let mut a = a.clone();
            if a.s < at {
                a.mass = a.s + a.mass - at;
                a.s = 0.0;
            } else {
                a.s -= at;
            }
            a
        })
        .collect();
    let increments = path
        .increments
        .iter()
        .filter(|inc| inc.record >= k && path.records[inc.record].s >= at)
        .map(|inc| NoiseIncrement {
            record: inc.record - k,
            ..inc.clone()
        })
        .collect();
    Ok(ControlledPath {
        records,
        atoms,
        increments,
        lambda0: path.lambda0 - l0,
        lambda1: path.lambda1 - l1,
        s: path.s - at,
        seed: path.seed,
        path_index: path.path_index,
        dt: path.dt,
        delta: path.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{BoundaryBehavior, Diffusion, DiffusionCoefficients, Drift};
    use crate::fixtures;
    use crate::kernel::StepConfig;
    use std::f64::consts::FRAC_PI_4;

    fn still() -> DiffusionCoefficients {
        DiffusionCoefficients {
            drift: Drift::Zero,
            diffusion: Diffusion::Zero,
        }
    }

    #[test]
    fn frozen_interior_path_is_constant() {
        let dom = fixtures::lens(FRAC_PI_4);
        let co = still();
        let bh = BoundaryBehavior::ObliqueReflection;
        let k = Kernel::new(&dom, &co, &bh, StepConfig::new(0.1, 0.01));
        let p = simulate_controlled(&k, &[1.0, 0.5], Stop::Lambda0(1.0), 1, 0).unwrap();
        assert!(p.atoms.is_empty());
        assert!(p.records.iter().all(|r| r.y.as_slice() == [1.0, 0.5]));
        assert!(p.records.iter().all(|r| (r.lambda0 - r.s).abs() < 1e-15));
        assert!((p.lambda0 - 1.0).abs() < 1e-12);
        assert_eq!(p.lambda1, 0.0);
    }

    #[test]
    fn exterior_start_marches_back_in_ceil_l_over_delta_steps() {
        let dom = fixtures::half_line();
        let co = still();
        let bh = BoundaryBehavior::ObliqueReflection;
        let delta = 0.01;
        let len = 0.237;
        let k = Kernel::new(&dom, &co, &bh, StepConfig::new(0.01, delta));
        let p = simulate_controlled(&k, &[-len], Stop::Lambda0(0.05), 3, 0).unwrap();
        let expected = (len / delta).ceil() as usize;
        assert_eq!(p.atoms.len(), expected);
        let entry = p
            .records
            .iter()
            .find(|r| matches!(r.kind, StepKind::Diffusion))
            .unwrap();
        assert!((entry.lambda1 - expected as f64 * delta).abs() < 1e-12);
        assert!((entry.lambda1 - len).abs() <= delta);
        let first_diffusion = p
            .records
            .iter()
            .position(|r| matches!(r.kind, StepKind::Diffusion))
            .unwrap();
        assert!(p.records[..first_diffusion]
            .iter()
            .all(|r| r.lambda0 == 0.0));
    }

    #[test]
    fn half_line_stays_close_to_origin() {
        let dom = fixtures::half_line();
        let co = DiffusionCoefficients::brownian(1.0);
        let bh = BoundaryBehavior::ObliqueReflection;
        let k = Kernel::new(&dom, &co, &bh, StepConfig::new(1e-3, 1e-2));
        for i in 0..20 {
            let p = simulate_controlled(&k, &[0.0], Stop::Lambda0(1.0), 11, i).unwrap();
            let min = p
                .records
                .iter()
                .map(|r| r.y[0])
                .fold(f64::INFINITY, f64::min);
            assert!(min >= -0.01, "{min}");
            assert!(p.clock_residual() < 1e-12);
        }
    }

    #[test]
    fn restart_at_zero_is_identity_and_at_end_is_empty() {
        let dom = fixtures::lens(FRAC_PI_4);
        let co = DiffusionCoefficients::brownian(1.0);
        let bh = BoundaryBehavior::ObliqueReflection;
        let k = Kernel::new(&dom, &co, &bh, StepConfig::new(1e-3, 1e-3));
        let p = simulate_controlled(&k, &[0.0, 0.0], Stop::Lambda0(0.2), 5, 2).unwrap();
        assert_eq!(restart_path(&p, 0.0).unwrap(), p);
        let end = restart_path(&p, p.s).unwrap();
        assert_eq!(end.records.len(), 1);
        assert_eq!(end.initial(), p.terminal());
        assert!(end.atoms.is_empty() && end.increments.is_empty());
        assert!(matches!(
            restart_path(&p, p.s * 1.01),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn restart_mid_path_keeps_clock_identity() {
        let dom = fixtures::lens(FRAC_PI_4);
        let co = DiffusionCoefficients::brownian(1.0);
        let bh = BoundaryBehavior::ObliqueReflection;
        let k = Kernel::new(&dom, &co, &bh, StepConfig::new(1e-3, 1e-3));
        let p = simulate_controlled(&k, &[0.0, 0.0], Stop::Lambda0(0.2), 5, 3).unwrap();
        for frac in [0.13, 0.5, 0.77] {
            let at = frac * p.s;
            let q = restart_path(&p, at).unwrap();
            assert!(q.clock_residual() < 1e-9);
            assert!((q.lambda0 + q.lambda1 - q.s).abs() < 1e-9 * q.s);
            assert_eq!(q.initial(), p.y_at(at).unwrap());
            let mass: f64 = q.atoms.iter().map(|a| a.mass).sum();
            assert!((mass - q.lambda1).abs() < 1e-9);
        }
    }

    #[test]
    fn nonlocal_jumps_land_on_the_kernel_point() {
        let dom = fixtures::half_line();
        let co = DiffusionCoefficients::brownian(1.0);
        let bh = BoundaryBehavior::NonlocalJump {
            kernel: crate::coeffs::JumpKernel::Fixed(vec![0.5]),
        };
        let k = Kernel::new(&dom, &co, &bh, StepConfig::new(1e-2, 1e-2));
        let p = simulate_controlled(&k, &[0.1], Stop::Lambda0(2.0), 9, 0).unwrap();
        assert!(!p.atoms.is_empty());
        for a in &p.atoms {
            assert_eq!(a.target.as_deref(), Some(&[0.5][..]));
            assert!(a.mass >= 0.0);
        }
        assert!(p.clock_residual() < 1e-12);
    }
}
