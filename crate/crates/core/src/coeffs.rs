//! Drift, diffusion and boundary behaviour of the simulated process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Drift {
    #[default]
    Zero,
    Constant(Vec<f64>),
    /// `b(x) = matrix x + offset`; only bounded on bounded regions.
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diffusion {
    Zero,
    /// `sigma = s * I`.
    Scalar(f64),
    /// Constant `d x d'` matrix, given row by row.
    Constant(Vec<Vec<f64>>),
}

impl Default for Diffusion {
    fn default() -> Self {
        Diffusion::Scalar(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DiffusionCoefficients {
    #[serde(default)]
    pub drift: Drift,
    #[serde(default)]
    pub diffusion: Diffusion,
}

impl DiffusionCoefficients {
    pub fn brownian(scale: f64) -> Self {
        Self {
            drift: Drift::Zero,
            diffusion: Diffusion::Scalar(scale),
        }
    }

    /// Number of driving Brownian components.
    pub fn noise_dim(&self, d: usize) -> usize {
        match &self.diffusion {
            Diffusion::Zero | Diffusion::Scalar(_) => d,
            Diffusion::Constant(m) => m.first().map_or(d, |r| r.len()),
        }
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Drift::Constant(b) => out.copy_from_slice(b),
            Drift::Affine { matrix, offset } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = offset[k] + matrix[k].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }

    /// `out = sigma(x) w`.
    pub fn diffusion_apply(&self, _x: &[f64], w: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Diffusion::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Diffusion::Scalar(s) => {
                for (o, wi) in out.iter_mut().zip(w) {
                    *o = s * wi;
                }
            }
            Diffusion::Constant(m) => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = m[k].iter().zip(w).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    /// `sigma sigma^T` at `x`, row-major `d x d`.
    pub fn covariance(&self, _x: &[f64], d: usize) -> Vec<f64> {
        let mut c = vec![0.0; d * d];
        match &self.diffusion {
            Diffusion::Zero => {}
            Diffusion::Scalar(s) => {
                for k in 0..d {
                    c[k * d + k] = s * s;
                }
            }
            Diffusion::Constant(m) => {
                for i in 0..d {
                    for j in 0..d {
                        c[i * d + j] = m[i].iter().zip(&m[j]).map(|(a, b)| a * b).sum();
                    }
                }
            }
        }
        c
    }

    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        let d = domain.dim;
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        match &self.drift {
            Drift::Zero => {}
            Drift::Constant(b) => {
                if b.len() != d {
                    return bad("drift has wrong dimension");
                }
            }
            Drift::Affine { matrix, offset } => {
                if offset.len() != d || matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return bad("affine drift has wrong shape");
                }
            }
        }
        match &self.diffusion {
            Diffusion::Zero => {}
            Diffusion::Scalar(s) => {
                if !s.is_finite() {
                    return bad("diffusion scale must be finite");
                }
            }
            Diffusion::Constant(m) => {
                let cols = m.first().map_or(0, |r| r.len());
                if m.len() != d || cols == 0 || m.iter().any(|r| r.len() != cols) {
                    return bad("diffusion matrix has wrong shape");
                }
            }
        }
        // Boundedness on the working region, checked at the box corners.
        let mut out = vec![0.0; d];
        for mask in 0..(1usize << d.min(10)) {
            let corner: Vec<f64> = (0..d)
                .map(|k| {
                    if mask & (1 << k) != 0 {
                        domain.bbox.hi[k]
                    } else {
                        domain.bbox.lo[k]
                    }
                })
                .collect();
            self.drift_into(&corner, &mut out);
            if out.iter().any(|v| !v.is_finite()) {
                return bad("drift is not finite on the working region");
            }
        }
        Ok(())
    }
}

/// Where a nonlocal boundary jump lands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKernel {
    Fixed(Vec<f64>),
    Uniform(Vec<Vec<f64>>),
}

/// What happens when the state leaves the closed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryBehavior {
    /// Micro-steps of length `delta` along the selected face's field.
    #[default]
    ObliqueReflection,
    /// After a unit-exponential amount of boundary time, jump into the
    /// interior according to the kernel.
    NonlocalJump { kernel: JumpKernel },
}

impl BoundaryBehavior {
    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        let targets: Vec<&Vec<f64>> = match self {
            BoundaryBehavior::ObliqueReflection => return Ok(()),
            BoundaryBehavior::NonlocalJump {
                kernel: JumpKernel::Fixed(p),
            } => vec![p],
            BoundaryBehavior::NonlocalJump {
                kernel: JumpKernel::Uniform(ps),
            } => ps.iter().collect(),
        };
        if targets.is_empty() {
            return Err(Error::InvalidInput("jump kernel has no targets".into()));
        }
        for t in targets {
            if t.len() != domain.dim || domain.values(t).iter().any(|v| *v <= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "jump target {t:?} is not in the open domain"
                )));
            }
        }
        Ok(())
    }
}
