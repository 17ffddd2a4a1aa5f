//! Reflected SDE on the physical clock and the conversions from controlled
//! paths.
//!
//! The direct scheme runs the same kernel as the controlled simulator but
//! stops the clock during boundary pushes. All pushes between two interior
//! moves form one block; a block becomes one direction atom with
//! `gamma = sum(u * mass) / |sum(u * mass)|` and `dlambda = |sum(u * mass)|`.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::coeffs::BoundaryBehavior;
use crate::cones::decompose;
use crate::controlled::{drive, ControlledPath, StepKind, Stop};
use crate::error::{Error, Result};
use crate::geometry::{norm, DomainSpec, Point};
use crate::kernel::{Kernel, StepSink};
use crate::rng::path_rng;
use crate::timechange::knots_of;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SderSample {
    pub t: f64,
    pub x: Point,
    /// Local time accumulated up to and including `t`.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionAtom {
    pub t: f64,
    pub sample: usize,
    pub gamma: Point,
    pub dlambda: f64,
    /// Total path length of the pushes in the block.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SderIncrement {
    /// Sample at which the macro step starts.
    pub sample: usize,
    pub dt: f64,
    pub dw: SmallVec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SderPath {
    /// Starting point before any initial push.
    pub x_start: Point,
    pub samples: Vec<SderSample>,
    pub atoms: Vec<DirectionAtom>,
    pub increments: Vec<SderIncrement>,
    pub seed: u64,
    pub path_index: u64,
    pub dt: f64,
    pub delta: f64,
}

impl SderPath {
    pub fn local_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.lambda)
    }

    /// States at the end of each macro step, preceded by `X(0)`.
    pub fn macro_states(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self
            .increments
            .iter()
            .map(|inc| self.samples[inc.sample].x.as_slice())
            .collect();
        if let Some(last) = self.samples.last() {
            out.push(&last.x);
        }
        out
    }
}

/// Running vector sum of one push block.
#[derive(Debug, Clone, Default)]
struct Block {
    sum: Point,
    mass: f64,
    n: usize,
}

impl Block {
    fn push(&mut self, dir: &[f64], mass: f64) {
        if self.sum.len() != dir.len() {
            self.sum = SmallVec::from_elem(0.0, dir.len());
        }
        for (s, u) in self.sum.iter_mut().zip(dir) {
            *s += u * mass;
        }
        self.mass += mass;
        self.n += 1;
    }

    fn finish(&mut self, t: f64, sample: usize) -> Result<Option<DirectionAtom>> {
        if self.n == 0 {
            return Ok(None);
        }
        let len = norm(&self.sum);
        if !(len > 1e-12 * self.mass) {
            return Err(Error::DegenerateDirection(len));
        }
        let atom = DirectionAtom {
            t,
            sample,
            gamma: self.sum.iter().map(|v| v / len).collect(),
            dlambda: len,
            mass: self.mass,
        };
        *self = Block::default();
        Ok(Some(atom))
    }
}

/// Merges one block of `(direction, mass)` pushes.
pub fn merge_block(
    pushes: &[(&[f64], f64)],
    t: f64,
    sample: usize,
) -> Result<Option<DirectionAtom>> {
    let mut b = Block::default();
    for (u, m) in pushes {
        b.push(u, *m);
    }
    b.finish(t, sample)
}

struct SderBuilder {
    samples: Vec<SderSample>,
    atoms: Vec<DirectionAtom>,
    increments: Vec<SderIncrement>,
    block: Block,
    t: f64,
    lambda: f64,
    error: Option<Error>,
}

impl SderBuilder {
    fn close_block(&mut self) {
        let sample = self.samples.len() - 1;
        match self.block.finish(self.t, sample) {
            Ok(Some(a)) => {
                self.lambda += a.dlambda;
                self.atoms.push(a);
            }
            Ok(None) => {}
            Err(e) => {
                self.error.get_or_insert(e);
            }
        }
        self.samples[sample].lambda = self.lambda;
    }
}

impl StepSink for SderBuilder {
    fn noise(&mut self, dt: f64, dw: &[f64], _start: &[f64]) {
        self.increments.push(SderIncrement {
            sample: self.samples.len() - 1,
            dt,
            dw: SmallVec::from_slice(dw),
        });
    }

    fn diffuse(&mut self, dl0: f64, from: &[f64], to: &[f64]) {
        self.close_block();
        let last = self.samples.len() - 1;
        self.samples[last].x = SmallVec::from_slice(from);
        self.t += dl0;
        self.samples.push(SderSample {
            t: self.t,
            x: SmallVec::from_slice(to),
            lambda: self.lambda,
        });
    }

    fn reflect(&mut self, _face: usize, dir: &[f64], mass: f64, _from: &[f64], _to: &[f64]) {
        self.block.push(dir, mass);
    }

    fn jump(&mut self, _dl1: f64, _from: &[f64], _to: &[f64]) {
        self.error.get_or_insert(Error::InvalidInput(
            "the reflected SDE has no nonlocal jumps".into(),
        ));
    }
}

fn reject_nonlocal(behavior: &BoundaryBehavior) -> Result<()> {
    if matches!(behavior, BoundaryBehavior::NonlocalJump { .. }) {
        return Err(Error::InvalidInput(
            "the reflected SDE needs oblique reflection".into(),
        ));
    }
    Ok(())
}

/// Euler scheme for the reflected SDE on `[0, horizon]`.
pub fn simulate_sder(
    kernel: &Kernel<'_>,
    x0: &[f64],
    horizon: f64,
    seed: u64,
    path_index: u64,
) -> Result<SderPath> {
    reject_nonlocal(kernel.behavior)?;
    if x0.len() != kernel.domain.dim {
        return Err(Error::InvalidInput(
            "start point has wrong dimension".into(),
        ));
    }
    let tol = kernel.domain.tol();
    if kernel.domain.values(x0).iter().any(|v| *v < -tol) {
        return Err(Error::InvalidInput(format!(
            "start point {x0:?} is outside the closed domain"
        )));
    }
    let mut rng = path_rng(seed, path_index);
    let mut b = SderBuilder {
        samples: vec![SderSample {
            t: 0.0,
            x: SmallVec::from_slice(x0),
            lambda: 0.0,
        }],
        atoms: Vec::new(),
        increments: Vec::new(),
        block: Block::default(),
        t: 0.0,
        lambda: 0.0,
        error: None,
    };
    let (y, _) = drive(kernel, x0, Stop::Lambda0(horizon), &mut rng, &mut b)?;
    b.close_block();
    if let Some(e) = b.error {
        return Err(e);
    }
    let last = b.samples.len() - 1;
    b.samples[last].x = y;
    Ok(SderPath {
        x_start: SmallVec::from_slice(x0),
        samples: b.samples,
        atoms: b.atoms,
        increments: b.increments,
        seed,
        path_index,
        dt: kernel.cfg.dt,
        delta: kernel.cfg.delta,
    })
}

/// Time-changes a controlled path and merges each collapsed push block into
/// one direction atom.
pub fn controlled_to_sder(path: &ControlledPath) -> Result<SderPath> {
    if path.atoms.iter().any(|a| a.target.is_some()) {
        return Err(Error::InvalidInput(
            "nonlocal jumps have no reflected-SDE form".into(),
        ));
    }
    if !(path.lambda0 > 0.0) {
        return Err(Error::ZeroLambda0);
    }
    let (knots, owner) = knots_of(path);
    let mut samples = Vec::with_capacity(knots.len());
    let mut atoms = Vec::new();
    let mut lambda = 0.0;
    let mut a = 0usize;
    for (k, knot) in knots.iter().enumerate() {
        let mut block = Block::default();
        while a < owner.len() && owner[a] == k {
            let atom = &path.atoms[a];
            block.push(&atom.direction, atom.mass);
            a += 1;
        }
        if let Some(da) = block.finish(knot.t, k)? {
            lambda += da.dlambda;
            atoms.push(da);
        }
        samples.push(SderSample {
            t: knot.t,
            x: knot.x.clone(),
            lambda,
        });
    }

    // Sample index of a record: number of interior moves up to it.
    let mut sample_of = Vec::with_capacity(path.records.len());
    let mut count = 0usize;
    for r in &path.records {
        if matches!(r.kind, StepKind::Diffusion) {
            count += 1;
        }
        sample_of.push(count);
    }
    let increments = path
        .increments
        .iter()
        .map(|inc| SderIncrement {
            sample: sample_of[inc.record],
            dt: inc.dt,
            dw: inc.dw.clone(),
        })
        .collect();

    Ok(SderPath {
        x_start: path.records[0].y.clone(),
        samples,
        atoms,
        increments,
        seed: path.seed,
        path_index: path.path_index,
        dt: path.dt,
        delta: path.delta,
    })
}

/// Per-face local times on the controlled clock, stored as cumulative
/// values after each atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchworkLocalTimes {
    /// Controlled time at the end of each atom.
    pub times: Vec<f64>,
    /// `values[k][i]` is `l_i` after atom `k`.
    pub values: Vec<Vec<f64>>,
    pub terminal: Vec<f64>,
}

impl PatchworkLocalTimes {
    pub fn at(&self, s: f64) -> Vec<f64> {
        let k = self.times.partition_point(|t| *t <= s);
        if k == 0 {
            vec![0.0; self.terminal.len()]
        } else {
            self.values[k - 1].clone()
        }
    }

    pub fn total(&self) -> f64 {
        self.terminal.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PatchworkMode {
    /// Atoms produced by a known face go entirely to that face.
    #[default]
    FaceTagged,
    /// Decompose every atom's direction over the fields of the faces near it.
    Decompose,
}

/// Splits `Lambda1` over faces: `l_j += mass * eta_j`, where `eta` are the
/// cone weights of the atom's direction. Nonlocal atoms carry no direction
/// and are skipped.
pub fn controlled_to_patchwork(
    domain: &DomainSpec,
    path: &ControlledPath,
    mode: PatchworkMode,
) -> Result<PatchworkLocalTimes> {
    let m = domain.faces.len();
    let mut cur = vec![0.0; m];
    let mut times = Vec::with_capacity(path.atoms.len());
    let mut values = Vec::with_capacity(path.atoms.len());
    let near = 2.0 * path.delta;
    for a in &path.atoms {
        if a.target.is_some() {
            continue;
        }
        match (mode, a.face) {
            (PatchworkMode::FaceTagged, Some(j)) => cur[j] += a.mass,
            _ => {
                let vals = domain.normalized_values(&a.x);
                let faces: Vec<usize> = (0..m).filter(|&i| vals[i] <= near).collect();
                let gens = faces
                    .iter()
                    .map(|&i| domain.reflection(i, &a.x).map(|g| g.to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                let w = decompose(&gens, &a.direction)?;
                for (&i, wi) in faces.iter().zip(&w) {
                    cur[i] += a.mass * wi;
                }
            }
        }
        times.push(a.s + a.mass);
        values.push(cur.clone());
    }
    Ok(PatchworkLocalTimes {
        times,
        values,
        terminal: cur,
    })
}
