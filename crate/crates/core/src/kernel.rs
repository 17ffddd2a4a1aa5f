//! The stepping kernel shared by the controlled-clock simulator and the
//! reflected-SDE scheme.
//!
//! One macro step draws a single Gaussian vector and applies the Euler
//! increment `b(y) dt + sigma(y) dW`. If the endpoint leaves the closed
//! domain, the increment is walked in straight pieces no longer than
//! `delta / 2`, and after each piece the state is pushed back by
//! micro-steps `y += delta * g^j(y)` until no face is violated. Each
//! micro-step carries boundary mass `delta`. Callers observe the walk
//! through a [`StepSink`]; the sink alone decides which clock is advanced.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::coeffs::{BoundaryBehavior, DiffusionCoefficients, JumpKernel};
use crate::error::{Error, Result};
use crate::geometry::{dot, norm, DomainSpec, Point};

/// Tie-breaking among violated faces that do not increase `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceRule {
    /// Smallest admissible index.
    #[default]
    FirstIndex,
    /// Admissible index with the most negative `<grad phi, g^j>`.
    SteepestDescent,
}

/// Quintic smoothstep: 0 below 0, 1 above 1, strictly increasing between.
pub fn smoothstep(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else if r >= 1.0 {
        1.0
    } else {
        r * r * r * (r * (6.0 * r - 15.0) + 10.0)
    }
}

pub fn smoothstep_deriv(r: f64) -> f64 {
    if r <= 0.0 || r >= 1.0 {
        0.0
    } else {
        30.0 * r * r * (1.0 - r) * (1.0 - r)
    }
}

/// `phi(y) = sum_i chi(-psi_i(y) / scale)` and its gradient.
pub fn violation_potential(domain: &DomainSpec, y: &[f64], scale: f64) -> (f64, Point) {
    let d = y.len();
    let mut grad: Point = SmallVec::from_elem(0.0, d);
    let mut g: Point = SmallVec::from_elem(0.0, d);
    let mut phi = 0.0;
    for f in &domain.faces {
        let v = f.eval_into(y, &mut g);
        let r = -v / scale;
        phi += smoothstep(r);
        let w = smoothstep_deriv(r);
        if w != 0.0 {
            for k in 0..d {
                grad[k] -= w * g[k] / scale;
            }
        }
    }
    (phi, grad)
}

/// Face along which an exterior point is pushed back.
///
/// The default rule returns the smallest `j` with `psi_j(y) <= 0` and
/// `<grad phi(y), g^j(y)> <= 0`; when none qualifies, the violated face with
/// the most negative inner product, and when `grad phi` vanishes, the most
/// violated face.
pub fn select_reflection_face(
    domain: &DomainSpec,
    y: &[f64],
    phi_scale: f64,
    rule: FaceRule,
) -> Result<usize> {
    let vals = domain.values(y);
    let candidates: SmallVec<[usize; 8]> = (0..vals.len()).filter(|&i| vals[i] <= 0.0).collect();
    if candidates.is_empty() {
        return Err(Error::NoViolatedFace(y.to_vec()));
    }
    let most_violated = || {
        candidates
            .iter()
            .copied()
            .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
            .expect("nonempty")
    };
    let (_, grad) = violation_potential(domain, y, phi_scale);
    if grad.iter().all(|v| *v == 0.0) {
        return Ok(most_violated());
    }
    let mut slopes: SmallVec<[(usize, f64); 8]> = SmallVec::new();
    for &j in &candidates {
        let g = domain.reflection(j, y)?;
        slopes.push((j, dot(&grad, &g)));
    }
    let steepest = slopes
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    match rule {
        FaceRule::FirstIndex => Ok(slopes
            .iter()
            .find(|(_, s)| *s <= 0.0)
            .map_or(steepest.0, |(j, _)| *j)),
        FaceRule::SteepestDescent => Ok(steepest.0),
    }
}

/// Observer of the kernel's moves.
pub trait StepSink {
    /// Called once per macro step, before any motion, with the state at the
    /// start of the step and the Brownian increment drawn for it.
    fn noise(&mut self, _dt: f64, _dw: &[f64], _start: &[f64]) {}
    /// Interior motion consuming `dl0` of interior clock.
    fn diffuse(&mut self, dl0: f64, from: &[f64], to: &[f64]);
    /// One reflection micro-step along `dir` with boundary mass `mass`.
    fn reflect(&mut self, face: usize, dir: &[f64], mass: f64, from: &[f64], to: &[f64]);
    /// A nonlocal jump after `dl1` of boundary clock.
    fn jump(&mut self, dl1: f64, from: &[f64], to: &[f64]);
}

/// Step sizes and tie-breaking of the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub delta: f64,
    #[serde(default)]
    pub rule: FaceRule,
}

impl StepConfig {
    pub fn new(dt: f64, delta: f64) -> Self {
        Self {
            dt,
            delta,
            rule: FaceRule::FirstIndex,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.delta > 0.0) {
            return Err(Error::InvalidInput("dt and delta must be positive".into()));
        }
        if self.delta > self.dt.sqrt() * (1.0 + 1e-12) {
            return Err(Error::InvalidInput("delta must not exceed sqrt(dt)".into()));
        }
        Ok(())
    }
}

/// Borrowed view of everything one simulation needs.
#[derive(Debug, Clone, Copy)]
pub struct Kernel<'a> {
    pub domain: &'a DomainSpec,
    pub coeffs: &'a DiffusionCoefficients,
    pub behavior: &'a BoundaryBehavior,
    pub cfg: StepConfig,
}

impl<'a> Kernel<'a> {
    pub fn new(
        domain: &'a DomainSpec,
        coeffs: &'a DiffusionCoefficients,
        behavior: &'a BoundaryBehavior,
        cfg: StepConfig,
    ) -> Self {
        Self {
            domain,
            coeffs,
            behavior,
            cfg,
        }
    }

    /// `phi` scale: violated-face depths of order `delta` land in the
    /// strictly increasing part of the smoothstep.
    pub fn phi_scale(&self) -> f64 {
        10.0 * self.cfg.delta
    }

    pub fn piece_len(&self) -> f64 {
        (0.5 * self.cfg.delta).min(0.5 * self.domain.working_margin)
    }

    fn max_micro_steps(&self) -> usize {
        (20.0 * self.domain.working_margin / self.cfg.delta).ceil() as usize + 1000
    }

    /// Some face strictly violated.
    pub fn violated(&self, y: &[f64]) -> bool {
        let mut g: Point = SmallVec::from_elem(0.0, y.len());
        self.domain
            .faces
            .iter()
            .any(|f| f.eval_into(y, &mut g) < 0.0)
    }

    fn escaped(&self, y: &[f64]) -> Error {
        Error::EscapedWorkingRegion {
            state: y.to_vec(),
            time: f64::NAN,
        }
    }

    /// Pushes an exterior state back into the closed domain.
    pub fn restore<S: StepSink>(
        &self,
        y: &mut Point,
        rng: &mut ChaCha8Rng,
        sink: &mut S,
    ) -> Result<()> {
        let mut steps = 0usize;
        let d = y.len();
        let mut next: Point = SmallVec::from_elem(0.0, d);
        while self.violated(y) {
            if self.domain.exterior_depth(y) > self.domain.working_margin {
                return Err(self.escaped(y));
            }
            steps += 1;
            if steps > self.max_micro_steps() {
                return Err(self.escaped(y));
            }
            match self.behavior {
                BoundaryBehavior::ObliqueReflection => {
                    let j =
                        select_reflection_face(self.domain, y, self.phi_scale(), self.cfg.rule)?;
                    let g = self.domain.reflection(j, y)?;
                    for k in 0..d {
                        next[k] = y[k] + self.cfg.delta * g[k];
                    }
                    sink.reflect(j, &g, self.cfg.delta, y, &next);
                    y.copy_from_slice(&next);
                }
                BoundaryBehavior::NonlocalJump { kernel } => {
                    let dl1: f64 = rng.sample(Exp1);
                    let target: &[f64] = match kernel {
                        JumpKernel::Fixed(p) => p,
                        JumpKernel::Uniform(ps) => &ps[rng.random_range(0..ps.len())],
                    };
                    sink.jump(dl1, y, target);
                    y.copy_from_slice(target);
                }
            }
        }
        Ok(())
    }

    /// One Euler increment of interior clock `dt`, with reflections.
    pub fn macro_step<S: StepSink>(
        &self,
        y: &mut Point,
        dt: f64,
        rng: &mut ChaCha8Rng,
        sink: &mut S,
    ) -> Result<()> {
        let d = y.len();
        let q = self.coeffs.noise_dim(d);
        let sq = dt.sqrt();
        let dw: SmallVec<[f64; 4]> = (0..q)
            .map(|_| sq * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut drift: Point = SmallVec::from_elem(0.0, d);
        let mut inc: Point = SmallVec::from_elem(0.0, d);
        self.coeffs.drift_into(y, &mut drift);
        self.coeffs.diffusion_apply(y, &dw, &mut inc);
        for k in 0..d {
            inc[k] += drift[k] * dt;
        }
        sink.noise(dt, &dw, y);

        let mut end: Point = y.clone();
        for k in 0..d {
            end[k] += inc[k];
        }
        if end.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(f64::NAN));
        }
        if !self.violated(&end) {
            sink.diffuse(dt, y, &end);
            *y = end;
            return Ok(());
        }

        let pieces = (norm(&inc) / self.piece_len()).ceil().max(1.0) as usize;
        let dl = dt / pieces as f64;
        let mut next: Point = SmallVec::from_elem(0.0, d);
        for _ in 0..pieces {
            for k in 0..d {
                next[k] = y[k] + inc[k] / pieces as f64;
            }
            sink.diffuse(dl, y, &next);
            y.copy_from_slice(&next);
            self.restore(y, rng, sink)?;
        }
        Ok(())
    }
}
