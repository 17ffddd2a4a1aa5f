//! Piecewise smooth domains described as intersections of level-set regions
//! `{x : psi_i(x) > 0}`, each carrying a reflection field on its face.
//!
//! All queries are pure functions of the immutable [`DomainSpec`].

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Inline storage for points in the low dimensions this crate targets.
pub type Point = SmallVec<[f64; 3]>;

pub const MAX_FACES: usize = 16;

/// One monomial `coef * prod_k f_k(x_k)` where `f_k(x) = x^p` or, for an odd
/// factor, `sign(x) |x|^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub pow: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odd: Option<Vec<bool>>,
}

/// Sparse multivariate (piecewise) polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

fn factor(x: f64, p: u32, odd: bool) -> (f64, f64) {
    if p == 0 {
        return (1.0, 0.0);
    }
    let pf = p as f64;
    if odd {
        let a = x.abs();
        (x.signum() * a.powi(p as i32), pf * a.powi(p as i32 - 1))
    } else {
        (x.powi(p as i32), pf * x.powi(p as i32 - 1))
    }
}

impl Polynomial {
    pub fn dim_ok(&self, d: usize) -> bool {
        self.terms
            .iter()
            .all(|t| t.pow.len() == d && t.odd.as_ref().is_none_or(|o| o.len() == d))
    }

    /// Value and gradient (written into `grad`, which is overwritten).
    pub fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = x.len();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        let mut vals: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, d);
        let mut ders: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, d);
        for term in &self.terms {
            for k in 0..d {
                let odd = term.odd.as_ref().is_some_and(|o| o[k]);
                let (v, dv) = factor(x[k], term.pow[k], odd);
                vals[k] = v;
                ders[k] = dv;
            }
            value += term.coef * vals.iter().product::<f64>();
            for k in 0..d {
                if term.pow[k] == 0 {
                    continue;
                }
                let mut p = term.coef * ders[k];
                for (l, v) in vals.iter().enumerate() {
                    if l != k {
                        p *= v;
                    }
                }
                grad[k] += p;
            }
        }
        value
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut g: Point = SmallVec::from_elem(0.0, x.len());
        self.eval_into(x, &mut g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Inside,
    Outside,
}

/// Level-set function of one face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceKind {
    /// `psi(x) = <normal, x> - offset`.
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    /// `psi(x) = r^2 - |x - c|^2` (inside) or its negation (outside).
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        orientation: Orientation,
    },
    Polynomial(Polynomial),
}

/// Reflection field attached to a face. Evaluations are normalized to unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reflection {
    Constant(Vec<f64>),
    /// `g = R(angle) n` with `R = [[cos, sin], [-sin, cos]]`; any nonzero
    /// angle requires `d = 2`.
    RotatedNormal {
        angle: f64,
    },
    Polynomial(Vec<Polynomial>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSpec {
    pub kind: FaceKind,
    pub reflection: Reflection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl FaceSpec {
    /// `psi(x)`, with the gradient written into `grad`.
    pub fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match &self.kind {
            FaceKind::Halfspace { normal, offset } => {
                grad.copy_from_slice(normal);
                dot(normal, x) - offset
            }
            FaceKind::Ball {
                center,
                radius,
                orientation,
            } => {
                let sign = match orientation {
                    Orientation::Inside => 1.0,
                    Orientation::Outside => -1.0,
                };
                let mut r2 = 0.0;
                for k in 0..x.len() {
                    let dx = x[k] - center[k];
                    r2 += dx * dx;
                    grad[k] = -2.0 * sign * dx;
                }
                sign * (radius * radius - r2)
            }
            FaceKind::Polynomial(p) => p.eval_into(x, grad),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut g: Point = SmallVec::from_elem(0.0, x.len());
        self.eval_into(x, &mut g)
    }

    /// Unit reflection direction at `x`, given the unit inward normal there.
    pub fn reflection_into(&self, x: &[f64], normal: &[f64], out: &mut [f64]) {
        match &self.reflection {
            Reflection::Constant(v) => out.copy_from_slice(v),
            Reflection::RotatedNormal { angle } => {
                if *angle == 0.0 || normal.len() != 2 {
                    out.copy_from_slice(normal);
                } else {
                    let (s, c) = angle.sin_cos();
                    out[0] = c * normal[0] + s * normal[1];
                    out[1] = -s * normal[0] + c * normal[1];
                }
            }
            Reflection::Polynomial(comps) => {
                for (o, p) in out.iter_mut().zip(comps) {
                    *o = p.value(x);
                }
            }
        }
        normalize(out);
    }

    fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        match &self.kind {
            FaceKind::Halfspace { normal, .. } => {
                if normal.len() != d {
                    return bad("halfspace normal has wrong dimension");
                }
                if (norm(normal) - 1.0).abs() > 1e-9 {
                    return bad("halfspace normal must be a unit vector");
                }
            }
            FaceKind::Ball { center, radius, .. } => {
                if center.len() != d {
                    return bad("ball center has wrong dimension");
                }
                if !(*radius > 0.0) {
                    return bad("ball radius must be positive");
                }
            }
            FaceKind::Polynomial(p) => {
                if p.terms.is_empty() || !p.dim_ok(d) {
                    return bad("polynomial face has malformed terms");
                }
            }
        }
        match &self.reflection {
            Reflection::Constant(v) => {
                if v.len() != d || norm(v) == 0.0 {
                    return bad("constant reflection must be a nonzero vector of dimension d");
                }
            }
            Reflection::RotatedNormal { angle } => {
                if *angle != 0.0 && d != 2 {
                    return bad("rotated-normal reflection with nonzero angle requires d = 2");
                }
                if angle.abs() >= std::f64::consts::FRAC_PI_2 {
                    return bad("rotation angle must lie in (-pi/2, pi/2)");
                }
            }
            Reflection::Polynomial(c) => {
                if c.len() != d || !c.iter().all(|p| p.dim_ok(d)) {
                    return bad("polynomial reflection field has malformed components");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// `E0 = intersection of {psi_i > 0}` together with the numerical knobs used
/// by local queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dim: usize,
    pub faces: Vec<FaceSpec>,
    /// Width of the exterior shell the simulators may visit.
    pub working_margin: f64,
    /// `|psi_i(x)| <= tol` marks face `i` active. Defaults to `1e-9 * diameter`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_tol: Option<f64>,
    /// Radius of the punctured ball probed for realizable exterior subsets.
    /// Defaults to `1e-3 * diameter`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_radius: Option<f64>,
    pub bbox: BoundingBox,
}

/// Where a point sits relative to the closed domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Interior,
    Boundary(Vec<usize>),
    Exterior(Vec<usize>),
    OutsideWorkingRegion,
}

/// Local geometry at a boundary point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBoundaryData {
    pub point: Vec<f64>,
    /// Active faces `I(x)`, ascending.
    pub active: Vec<usize>,
    /// Unit inward normals, aligned with `active`.
    pub normals: Vec<Vec<f64>>,
    /// Unit reflection directions, aligned with `active`.
    pub reflections: Vec<Vec<f64>>,
    /// Realizable exterior index sets, as global face indices.
    pub realizable: Vec<Vec<usize>>,
}

impl LocalBoundaryData {
    /// Position of global face `i` inside `active`.
    pub fn slot(&self, i: usize) -> Option<usize> {
        self.active.iter().position(|&a| a == i)
    }
}

impl DomainSpec {
    pub fn diameter(&self) -> f64 {
        self.bbox.diameter()
    }

    pub fn tol(&self) -> f64 {
        self.boundary_tol.unwrap_or(1e-9 * self.diameter())
    }

    pub fn probe_radius(&self) -> f64 {
        self.probe_radius.unwrap_or(1e-3 * self.diameter())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.dim == 0 {
            return bad("dimension must be at least 1");
        }
        if self.faces.is_empty() || self.faces.len() > MAX_FACES {
            return bad("a domain needs between 1 and 16 faces");
        }
        if self.bbox.lo.len() != self.dim || self.bbox.hi.len() != self.dim {
            return bad("bounding box has wrong dimension");
        }
        if self
            .bbox
            .lo
            .iter()
            .zip(&self.bbox.hi)
            .any(|(a, b)| !(a < b))
        {
            return bad("bounding box must have lo < hi");
        }
        if !(self.working_margin > 0.0) {
            return bad("working margin must be positive");
        }
        if !(self.tol() > 0.0) || self.tol() >= self.working_margin {
            return bad("boundary tolerance must be positive and below the working margin");
        }
        for f in &self.faces {
            f.validate(self.dim)?;
        }
        Ok(())
    }

    /// All face values at `x`.
    pub fn values(&self, x: &[f64]) -> SmallVec<[f64; 8]> {
        let mut g: Point = SmallVec::from_elem(0.0, x.len());
        self.faces.iter().map(|f| f.eval_into(x, &mut g)).collect()
    }

    /// Unit inward normal of face `i` at `x`.
    pub fn normal(&self, i: usize, x: &[f64]) -> Result<Point> {
        let mut g: Point = SmallVec::from_elem(0.0, x.len());
        self.faces[i].eval_into(x, &mut g);
        let n = norm(&g);
        if !n.is_finite() || n == 0.0 {
            return Err(Error::NonFiniteGeometry {
                face: i,
                point: x.to_vec(),
            });
        }
        g.iter_mut().for_each(|v| *v /= n);
        Ok(g)
    }

    /// Unit reflection direction `g^i(x)`.
    pub fn reflection(&self, i: usize, x: &[f64]) -> Result<Point> {
        let n = self.normal(i, x)?;
        let mut out: Point = SmallVec::from_elem(0.0, x.len());
        self.faces[i].reflection_into(x, &n, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGeometry {
                face: i,
                point: x.to_vec(),
            });
        }
        Ok(out)
    }

    /// Signed distance estimate `psi / |grad psi|` for each face.
    pub fn normalized_values(&self, x: &[f64]) -> SmallVec<[f64; 8]> {
        let mut g: Point = SmallVec::from_elem(0.0, x.len());
        self.faces
            .iter()
            .map(|f| {
                let v = f.eval_into(x, &mut g);
                let n = norm(&g);
                if n > 0.0 {
                    v / n
                } else {
                    v
                }
            })
            .collect()
    }

    /// Depth of `x` outside the closed domain (0 when inside), estimated
    /// face-wise through `psi / |grad psi|`.
    pub fn exterior_depth(&self, x: &[f64]) -> f64 {
        self.normalized_values(x)
            .iter()
            .fold(0.0_f64, |m, v| m.max(-v))
    }

    pub fn classify(&self, x: &[f64]) -> Location {
        let tol = self.tol();
        let vals = self.values(x);
        let active: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= tol).collect();
        if active.is_empty() {
            return Location::Interior;
        }
        if vals.iter().all(|v| *v >= -tol) {
            return Location::Boundary(active);
        }
        if self.exterior_depth(x) <= self.working_margin {
            Location::Exterior(active)
        } else {
            Location::OutsideWorkingRegion
        }
    }

    /// Active faces at a boundary point.
    pub fn active_set(&self, x: &[f64]) -> Result<Vec<usize>> {
        match self.classify(x) {
            Location::Boundary(a) => Ok(a),
            _ => Err(Error::NotOnBoundary(x.to_vec())),
        }
    }

    /// Generators `(i, g^i(x))` of the reflection cone at a boundary point.
    pub fn reflection_cone(&self, x: &[f64]) -> Result<Vec<(usize, Point)>> {
        self.active_set(x)?
            .into_iter()
            .map(|i| Ok((i, self.reflection(i, x)?)))
            .collect()
    }

    /// Index sets `I(z)` realized by exterior points `z` near the boundary
    /// point `x`.
    pub fn realizable_exterior_subsets(&self, x: &[f64]) -> Result<Vec<Vec<usize>>> {
        let active = self.active_set(x)?;
        let normals: Vec<Point> = active
            .iter()
            .map(|&i| self.normal(i, x))
            .collect::<Result<_>>()?;
        let r = self.probe_radius();
        let d = self.dim;
        let mut found: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut probe = |z: &[f64]| {
            let vals = self.values(z);
            if !vals.iter().any(|v| *v < 0.0) {
                return;
            }
            let set: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= 0.0).collect();
            if set.iter().all(|i| active.contains(i)) {
                found.insert(set);
            }
        };

        // Inward-normal combinations, pushed outward.
        let k = active.len();
        let mut z = vec![0.0; d];
        for mask in 1u32..(1u32 << k) {
            let mut dir = vec![0.0; d];
            for (slot, n) in normals.iter().enumerate() {
                if mask & (1 << slot) != 0 {
                    for c in 0..d {
                        dir[c] += n[c];
                    }
                }
            }
            let len = norm(&dir);
            if len < 1e-12 {
                continue;
            }
            for scale in [0.5, 0.1, 0.01] {
                let t = scale * r / len;
                for c in 0..d {
                    z[c] = x[c] - t * dir[c];
                }
                probe(&z);
            }
        }

        // Points where several faces are violated by the same amount. This
        // reaches thin exterior regions between tangent faces.
        for mask in 1u32..(1u32 << k) {
            if mask.count_ones() < 2 {
                continue;
            }
            let faces: Vec<usize> = (0..k)
                .filter(|s| mask & (1 << s) != 0)
                .map(|s| active[s])
                .collect();
            let mut starts: Vec<Vec<f64>> = Vec::new();
            for c in 0..d {
                let mut e = vec![0.0; d];
                e[c] = 1.0;
                starts.push(e.clone());
                e[c] = -1.0;
                starts.push(e);
            }
            for n in &normals {
                let l = norm(n).max(1e-300);
                starts.push(n.iter().map(|v| v / l).collect());
                starts.push(n.iter().map(|v| -v / l).collect());
            }
            for scale in [0.5, 0.1] {
                let rho = scale * r;
                for level in [-0.5 * rho, -0.5 * rho * rho] {
                    for dir in &starts {
                        let z0: Vec<f64> = (0..d).map(|c| x[c] + rho * dir[c]).collect();
                        if let Some(z) = self.solve_level(&faces, level, &z0, 30) {
                            let dist =
                                norm(&z.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>());
                            if dist <= r && dist > 0.0 {
                                probe(&z);
                            }
                        }
                    }
                }
            }
        }

        // Quasi-random fallback over the punctured ball.
        for p in halton_ball(d, 256) {
            for c in 0..d {
                z[c] = x[c] + r * p[c];
            }
            probe(&z);
        }

        if found.is_empty() {
            return Err(Error::EmptyScriptI(x.to_vec()));
        }
        Ok(found.into_iter().collect())
    }

    /// Everything the cone checks need at a boundary point.
    pub fn local_data(&self, x: &[f64]) -> Result<LocalBoundaryData> {
        let active = self.active_set(x)?;
        let mut normals = Vec::with_capacity(active.len());
        let mut reflections = Vec::with_capacity(active.len());
        for &i in &active {
            normals.push(self.normal(i, x)?.to_vec());
            reflections.push(self.reflection(i, x)?.to_vec());
        }
        let realizable = self.realizable_exterior_subsets(x)?;
        Ok(LocalBoundaryData {
            point: x.to_vec(),
            active,
            normals,
            reflections,
            realizable,
        })
    }

    /// Newton projection onto the common zero set of the listed faces.
    pub fn project_to_faces(&self, faces: &[usize], start: &[f64]) -> Option<Vec<f64>> {
        let x = self.solve_level(faces, 0.0, start, 60)?;
        let vals = self.values(&x);
        faces
            .iter()
            .all(|&i| vals[i].abs() <= 0.1 * self.tol())
            .then_some(x)
    }

    /// Gauss-Newton iterate towards `psi_i = level` for the listed faces.
    fn solve_level(
        &self,
        faces: &[usize],
        level: f64,
        start: &[f64],
        iters: usize,
    ) -> Option<Vec<f64>> {
        let d = self.dim;
        let k = faces.len();
        let mut x = start.to_vec();
        let mut g: Point = SmallVec::from_elem(0.0, d);
        for _ in 0..iters {
            let mut jac = nalgebra::DMatrix::<f64>::zeros(k, d);
            let mut res = nalgebra::DVector::<f64>::zeros(k);
            for (r, &i) in faces.iter().enumerate() {
                res[r] = self.faces[i].eval_into(&x, &mut g) - level;
                for c in 0..d {
                    jac[(r, c)] = g[c];
                }
            }
            if res
                .iter()
                .all(|v| v.abs() <= 1e-14 * (1.0 + self.diameter()))
            {
                return Some(x);
            }
            let pinv = jac.pseudo_inverse(1e-12).ok()?;
            let step = pinv * res;
            if step.iter().any(|v| !v.is_finite()) {
                return None;
            }
            for c in 0..d {
                x[c] -= step[c];
            }
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }

    /// Random points on `∂E0`, stratified over single faces and pairs of
    /// faces. Face-pair strata yield corner points.
    pub fn sample_boundary(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.faces.len();
        let mut strata: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
        if self.dim >= 2 {
            for i in 0..m {
                for j in (i + 1)..m {
                    strata.push(vec![i, j]);
                }
            }
        }
        let tol = self.tol();
        let mut out = Vec::with_capacity(n);
        let mut dead = vec![false; strata.len()];
        let mut misses = vec![0usize; strata.len()];
        let mut cursor = 0usize;
        let mut x0 = vec![0.0; self.dim];
        while out.len() < n && dead.iter().any(|d| !d) {
            let s = cursor % strata.len();
            cursor += 1;
            if dead[s] {
                continue;
            }
            for (c, v) in x0.iter_mut().enumerate() {
                *v = rng.random_range(self.bbox.lo[c]..self.bbox.hi[c]);
            }
            let accepted = self
                .project_to_faces(&strata[s], &x0)
                .filter(|x| self.bbox.contains(x) && self.values(x).iter().all(|v| *v >= -tol));
            match accepted {
                Some(x) => {
                    misses[s] = 0;
                    out.push(x);
                }
                None => {
                    misses[s] += 1;
                    if misses[s] >= 200 {
                        dead[s] = true;
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|v| *v /= n);
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Deterministic Halton points inside the punctured unit ball.
fn halton_ball(d: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count && i < 1_000_000 {
        let p: Vec<f64> = (0..d)
            .map(|k| 2.0 * radical_inverse(i, PRIMES[k % PRIMES.len()]) - 1.0)
            .collect();
        let r = norm(&p);
        if r > 0.0 && r < 1.0 {
            out.push(p);
        }
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    fn halfplane() -> FaceSpec {
        FaceSpec {
            kind: FaceKind::Halfspace {
                normal: vec![0.0, 1.0],
                offset: 0.0,
            },
            reflection: Reflection::RotatedNormal { angle: 0.0 },
            label: None,
        }
    }

    #[test]
    fn halfspace_value_and_gradient() {
        let f = halfplane();
        let mut g = [0.0; 2];
        let v = f.eval_into(&[3.0, 2.0], &mut g);
        assert_eq!(v, 2.0);
        assert_eq!(g, [0.0, 1.0]);
    }

    #[test]
    fn ball_value_and_gradient() {
        let f = FaceSpec {
            kind: FaceKind::Ball {
                center: vec![1.0, 0.0],
                radius: 1.0,
                orientation: Orientation::Inside,
            },
            reflection: Reflection::RotatedNormal { angle: 0.0 },
            label: None,
        };
        let mut g = [0.0; 2];
        let v = f.eval_into(&[0.0, 0.0], &mut g);
        assert_eq!(v, 0.0);
        assert_eq!(g, [2.0, 0.0]);
    }

    #[test]
    fn outside_ball_keeps_exterior() {
        let f = FaceSpec {
            kind: FaceKind::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
                orientation: Orientation::Outside,
            },
            reflection: Reflection::RotatedNormal { angle: 0.0 },
            label: None,
        };
        assert!(f.value(&[2.0, 0.0]) > 0.0);
        assert!(f.value(&[0.5, 0.0]) < 0.0);
    }

    #[test]
    fn cusp_face_at_origin() {
        let dom = fixtures::cusp();
        let mut g = [0.0; 2];
        let v = dom.faces[0].eval_into(&[0.0, 0.0], &mut g);
        assert_eq!(v, 0.0);
        assert_eq!(g, [0.0, 1.0]);
    }

    #[test]
    fn odd_factor_gradient_matches_piecewise_form() {
        // x2 + sign(x1)|x1|^4 differs from x2 + x1^4 for x1 < 0.
        let dom = fixtures::cusp_split();
        let mut g = [0.0; 2];
        let v = dom.faces[0].eval_into(&[-0.5, 0.1], &mut g);
        assert_abs_diff_eq!(v, 0.1 - 0.0625, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], 4.0 * 0.125, epsilon = 1e-15);
    }

    #[test]
    fn classify_lens_points() {
        let dom = fixtures::lens(std::f64::consts::FRAC_PI_4);
        assert_eq!(dom.classify(&[1.0, 0.5]), Location::Interior);
        assert_eq!(dom.classify(&[0.0, 0.0]), Location::Boundary(vec![0, 1]));
        assert_eq!(dom.classify(&[1.0, -0.01]), Location::Exterior(vec![1]));
        assert_eq!(dom.classify(&[1.0, -5.0]), Location::OutsideWorkingRegion);
    }

    #[test]
    fn classify_cusp_origin() {
        let dom = fixtures::cusp();
        assert_eq!(dom.classify(&[0.0, 0.0]), Location::Boundary(vec![0, 1, 3]));
    }

    #[test]
    fn cusp_realizable_subsets() {
        let dom = fixtures::cusp();
        let sets = dom.realizable_exterior_subsets(&[0.0, 0.0]).unwrap();
        let expect: Vec<Vec<usize>> = vec![vec![0], vec![0, 3], vec![1], vec![1, 3], vec![3]];
        assert_eq!(sets, expect);
    }

    #[test]
    fn cusp_split_realizable_subsets() {
        let dom = fixtures::cusp_split();
        let sets = dom.realizable_exterior_subsets(&[0.0, 0.0]).unwrap();
        assert_eq!(sets, vec![vec![0], vec![0, 1], vec![1]]);
    }

    #[test]
    fn smooth_point_has_single_realizable_subset() {
        let dom = fixtures::lens(std::f64::consts::FRAC_PI_4);
        let sets = dom.realizable_exterior_subsets(&[1.0, 0.0]).unwrap();
        assert_eq!(sets, vec![vec![1]]);
    }

    #[test]
    fn lens_corner_cone_generators() {
        let dom = fixtures::lens(std::f64::consts::FRAC_PI_4);
        let gens = dom.reflection_cone(&[0.0, 0.0]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(gens[0].0, 0);
        assert_abs_diff_eq!(gens[0].1[0], h, epsilon = 1e-15);
        assert_abs_diff_eq!(gens[0].1[1], -h, epsilon = 1e-15);
        assert_abs_diff_eq!(gens[1].1[0], h, epsilon = 1e-15);
        assert_abs_diff_eq!(gens[1].1[1], h, epsilon = 1e-15);
    }

    #[test]
    fn zero_rotation_reflects_along_normal() {
        let dom = fixtures::lens(0.0);
        let gens = dom.reflection_cone(&[1.0, 0.0]).unwrap();
        assert_eq!(gens.len(), 1);
        assert_eq!(gens[0].1.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn interior_point_is_not_on_boundary() {
        let dom = fixtures::lens(0.3);
        assert!(matches!(
            dom.reflection_cone(&[1.0, 0.5]),
            Err(Error::NotOnBoundary(_))
        ));
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut dom = fixtures::lens(0.3);
        dom.working_margin = 0.0;
        assert!(dom.validate().is_err());
        let mut dom = fixtures::lens(0.3);
        dom.faces.clear();
        assert!(dom.validate().is_err());
        let mut dom = fixtures::half_line();
        dom.faces[0].reflection = Reflection::RotatedNormal { angle: 0.2 };
        assert!(dom.validate().is_err());
        for d in [
            fixtures::lens(0.7),
            fixtures::cusp(),
            fixtures::cusp_split(),
            fixtures::half_line(),
            fixtures::unit_box(),
        ] {
            d.validate().unwrap();
        }
    }

    #[test]
    fn boundary_sampler_hits_lens_corners() {
        let dom = fixtures::lens(std::f64::consts::FRAC_PI_4);
        let pts = dom.sample_boundary(200, 3);
        assert_eq!(pts.len(), 200);
        let corners = pts
            .iter()
            .filter(|p| matches!(dom.classify(p), Location::Boundary(a) if a.len() == 2))
            .count();
        assert!(corners > 0);
        for p in &pts {
            assert!(matches!(dom.classify(p), Location::Boundary(_)));
        }
    }
}
