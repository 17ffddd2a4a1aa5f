//! Smooth functions used as running rewards `h` and as viscosity test
//! functions `f`, with analytic gradients and Hessians.

use serde::{Deserialize, Serialize};

use crate::coeffs::DiffusionCoefficients;
use crate::geometry::{dot, BoundingBox, Polynomial};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    /// `coef * exp(<rate, x>)`.
    Exponential {
        coef: f64,
        rate: Vec<f64>,
    },
    Polynomial {
        poly: Polynomial,
    },
    /// `height * exp(1 - 1 / (1 - |x - center|^2 / radius^2))` inside the
    /// ball, zero outside. Smooth with compact support.
    Bump {
        center: Vec<f64>,
        radius: f64,
        height: f64,
    },
    Sum {
        terms: Vec<TestFunction>,
    },
    Scaled {
        factor: f64,
        inner: Box<TestFunction>,
    },
}

fn mono_factor(x: f64, p: u32, odd: bool) -> (f64, f64, f64) {
    let pf = p as f64;
    let a = if odd { x.abs() } else { x };
    let sgn = if odd { x.signum() } else { 1.0 };
    let v = match p {
        0 => return (1.0, 0.0, 0.0),
        _ => sgn * a.powi(p as i32),
    };
    let d1 = pf * a.powi(p as i32 - 1);
    let d2 = if p >= 2 {
        sgn * pf * (pf - 1.0) * a.powi(p as i32 - 2)
    } else {
        0.0
    };
    (v, d1, d2)
}

fn poly_all(poly: &Polynomial, x: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
    let d = x.len();
    let mut value = 0.0;
    let mut f = vec![(0.0, 0.0, 0.0); d];
    for t in &poly.terms {
        for k in 0..d {
            let odd = t.odd.as_ref().is_some_and(|o| o[k]);
            f[k] = mono_factor(x[k], t.pow[k], odd);
        }
        let prod_except = |skip: &[usize]| -> f64 {
            (0..d)
                .filter(|l| !skip.contains(l))
                .map(|l| f[l].0)
                .product::<f64>()
        };
        value += t.coef * prod_except(&[]);
        for i in 0..d {
            grad[i] += t.coef * f[i].1 * prod_except(&[i]);
            for j in 0..d {
                hess[i * d + j] += if i == j {
                    t.coef * f[i].2 * prod_except(&[i])
                } else {
                    t.coef * f[i].1 * f[j].1 * prod_except(&[i, j])
                };
            }
        }
    }
    value
}

impl TestFunction {
    pub fn constant(value: f64) -> Self {
        TestFunction::Constant { value }
    }

    pub fn exponential(coef: f64, rate: Vec<f64>) -> Self {
        TestFunction::Exponential { coef, rate }
    }

    /// Value, gradient and row-major Hessian, accumulated into `grad` and
    /// `hess` (which must start at zero).
    fn accumulate(&self, x: &[f64], scale: f64, grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let d = x.len();
        match self {
            TestFunction::Constant { value } => scale * value,
            TestFunction::Exponential { coef, rate } => {
                let v = scale * coef * dot(rate, x).exp();
                for i in 0..d {
                    grad[i] += v * rate[i];
                    for j in 0..d {
                        hess[i * d + j] += v * rate[i] * rate[j];
                    }
                }
                v
            }
            TestFunction::Polynomial { poly } => {
                let mut g = vec![0.0; d];
                let mut h = vec![0.0; d * d];
                let v = poly_all(poly, x, &mut g, &mut h);
                for i in 0..d {
                    grad[i] += scale * g[i];
                }
                for i in 0..d * d {
                    hess[i] += scale * h[i];
                }
                scale * v
            }
            TestFunction::Bump {
                center,
                radius,
                height,
            } => {
                let r2 = radius * radius;
                let q: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    / r2;
                if q >= 1.0 {
                    return 0.0;
                }
                let w = 1.0 / (1.0 - q);
                let phi = scale * height * (1.0 - w).exp();
                let d1 = -phi * w * w;
                let d2 = phi * w.powi(4) - 2.0 * phi * w.powi(3);
                for i in 0..d {
                    let qi = 2.0 * (x[i] - center[i]) / r2;
                    grad[i] += d1 * qi;
                    for j in 0..d {
                        let qj = 2.0 * (x[j] - center[j]) / r2;
                        hess[i * d + j] += d2 * qi * qj + if i == j { d1 * 2.0 / r2 } else { 0.0 };
                    }
                }
                phi
            }
            TestFunction::Sum { terms } => terms
                .iter()
                .map(|t| t.accumulate(x, scale, grad, hess))
                .sum(),
            TestFunction::Scaled { factor, inner } => {
                inner.accumulate(x, scale * factor, grad, hess)
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = x.len();
        self.accumulate(x, 1.0, &mut vec![0.0; d], &mut vec![0.0; d * d])
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut g = vec![0.0; d];
        self.accumulate(x, 1.0, &mut g, &mut vec![0.0; d * d]);
        g
    }

    /// Row-major `d x d` Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut h = vec![0.0; d * d];
        self.accumulate(x, 1.0, &mut vec![0.0; d], &mut h);
        h
    }

    /// `Af(x) = <grad f, b> + tr(sigma sigma^T D^2 f) / 2`.
    pub fn generator(&self, coeffs: &DiffusionCoefficients, x: &[f64]) -> f64 {
        let d = x.len();
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        self.accumulate(x, 1.0, &mut g, &mut h);
        let mut b = vec![0.0; d];
        coeffs.drift_into(x, &mut b);
        let c = coeffs.covariance(x, d);
        dot(&g, &b) + 0.5 * c.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Largest `|f|` over a `21^d` grid on the box (exact for constants,
    /// a lower estimate otherwise).
    pub fn sup_abs_on(&self, bbox: &BoundingBox) -> f64 {
        if let TestFunction::Constant { value } = self {
            return value.abs();
        }
        let d = bbox.lo.len();
        let n = 21usize;
        let total = n.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut best = 0.0_f64;
        for idx in 0..total {
            let mut r = idx;
            for (k, xk) in x.iter_mut().enumerate() {
                let i = r % n;
                r /= n;
                *xk = bbox.lo[k] + (bbox.hi[k] - bbox.lo[k]) * i as f64 / (n - 1) as f64;
            }
            best = best.max(self.eval(&x).abs());
        }
        best
    }

    pub fn dim_ok(&self, d: usize) -> bool {
        match self {
            TestFunction::Constant { .. } => true,
            TestFunction::Exponential { rate, .. } => rate.len() == d,
            TestFunction::Polynomial { poly } => poly.dim_ok(d),
            TestFunction::Bump { center, radius, .. } => center.len() == d && *radius > 0.0,
            TestFunction::Sum { terms } => terms.iter().all(|t| t.dim_ok(d)),
            TestFunction::Scaled { inner, .. } => inner.dim_ok(d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Monomial;

    fn samples() -> Vec<TestFunction> {
        vec![
            TestFunction::constant(2.0),
            TestFunction::exponential(1.5, vec![-1.0, 0.5]),
            TestFunction::Polynomial {
                poly: Polynomial {
                    terms: vec![
                        Monomial {
                            coef: 2.0,
                            pow: vec![3, 1],
                            odd: None,
                        },
                        Monomial {
                            coef: -1.0,
                            pow: vec![2, 0],
                            odd: Some(vec![true, false]),
                        },
                    ],
                },
            },
            TestFunction::Bump {
                center: vec![0.2, 0.1],
                radius: 0.8,
                height: 3.0,
            },
            TestFunction::Scaled {
                factor: -0.5,
                inner: Box::new(TestFunction::Sum {
                    terms: vec![
                        TestFunction::exponential(1.0, vec![0.3, 0.3]),
                        TestFunction::constant(1.0),
                    ],
                }),
            },
        ]
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for f in samples() {
            for x in [[0.3, -0.2], [-0.4, 0.5], [0.1, 0.05]] {
                let g = f.gradient(&x);
                let hs = f.hessian(&x);
                for k in 0..2 {
                    let mut p = x;
                    let mut m = x;
                    p[k] += h;
                    m[k] -= h;
                    let fd = (f.eval(&p) - f.eval(&m)) / (2.0 * h);
                    assert!(
                        (fd - g[k]).abs() <= 1e-6 * (1.0 + g[k].abs()),
                        "{f:?} {x:?}"
                    );
                    let gp = f.gradient(&p);
                    let gm = f.gradient(&m);
                    for j in 0..2 {
                        let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                        assert!((fd2 - hs[k * 2 + j]).abs() <= 1e-5 * (1.0 + fd2.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn bump_has_compact_support() {
        let f = TestFunction::Bump {
            center: vec![0.0],
            radius: 1.0,
            height: 2.0,
        };
        assert_eq!(f.eval(&[0.0]), 2.0);
        assert_eq!(f.eval(&[1.0]), 0.0);
        assert_eq!(f.gradient(&[1.5]), vec![0.0]);
    }

    #[test]
    fn generator_of_quadratic_under_brownian_motion() {
        // f = x1^2 + x2^2, A f = tr(I) = 2 for unit Brownian motion.
        let f = TestFunction::Polynomial {
            poly: Polynomial {
                terms: vec![
                    Monomial {
                        coef: 1.0,
                        pow: vec![2, 0],
                        odd: None,
                    },
                    Monomial {
                        coef: 1.0,
                        pow: vec![0, 2],
                        odd: None,
                    },
                ],
            },
        };
        let co = DiffusionCoefficients::brownian(1.0);
        assert!((f.generator(&co, &[0.3, 0.7]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        for f in samples() {
            let s = serde_json::to_string(&f).unwrap();
            assert_eq!(serde_json::from_str::<TestFunction>(&s).unwrap(), f);
        }
    }
}
