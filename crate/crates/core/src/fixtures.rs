//! Reference domains shipped with the crate.
//!
//! The same domains are available as scenario files under `fixtures/`.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

use crate::geometry::{
    BoundingBox, DomainSpec, FaceKind, FaceSpec, Monomial, Orientation, Polynomial, Reflection,
};

fn mono(coef: f64, pow: &[u32]) -> Monomial {
    Monomial {
        coef,
        pow: pow.to_vec(),
        odd: None,
    }
}

fn odd_mono(coef: f64, pow: &[u32], odd: &[bool]) -> Monomial {
    Monomial {
        coef,
        pow: pow.to_vec(),
        odd: Some(odd.to_vec()),
    }
}

fn face(kind: FaceKind, angle: f64, label: &str) -> FaceSpec {
    FaceSpec {
        kind,
        reflection: Reflection::RotatedNormal { angle },
        label: Some(label.to_string()),
    }
}

fn halfspace(normal: &[f64], offset: f64) -> FaceKind {
    FaceKind::Halfspace {
        normal: normal.to_vec(),
        offset,
    }
}

fn unit_disk(center: &[f64]) -> FaceKind {
    FaceKind::Ball {
        center: center.to_vec(),
        radius: 1.0,
        orientation: Orientation::Inside,
    }
}

/// Unit disk centred at `(1, 0)` cut by the upper half plane, both faces
/// reflecting along the inward normal rotated by `angle`.
pub fn lens(angle: f64) -> DomainSpec {
    DomainSpec {
        dim: 2,
        faces: vec![
            face(unit_disk(&[1.0, 0.0]), angle, "disk"),
            face(halfspace(&[0.0, 1.0], 0.0), angle, "upper half plane"),
        ],
        working_margin: 0.1,
        boundary_tol: None,
        probe_radius: None,
        bbox: BoundingBox {
            lo: vec![-0.1, -0.1],
            hi: vec![2.1, 1.1],
        },
    }
}

/// `{0 < x1, -x1^4 < x2 < x1^2, |x| < 1}` with reflection fields whose values
/// at the cusp are `(-1/2, √3/2)`, `(√2/2, -√2/2)`, and `(1, 0)` on the
/// faces meeting there.
pub fn cusp() -> DomainSpec {
    let psi1 = Polynomial {
        terms: vec![mono(1.0, &[0, 1]), mono(1.0, &[4, 0])],
    };
    let psi2 = Polynomial {
        terms: vec![mono(1.0, &[2, 0]), mono(-1.0, &[0, 1])],
    };
    DomainSpec {
        dim: 2,
        faces: vec![
            face(FaceKind::Polynomial(psi1), -FRAC_PI_6, "lower quartic"),
            face(FaceKind::Polynomial(psi2), -FRAC_PI_4, "upper parabola"),
            face(unit_disk(&[0.0, 0.0]), 0.0, "unit circle"),
            face(halfspace(&[1.0, 0.0], 0.0), 0.0, "right half plane"),
        ],
        working_margin: 0.05,
        boundary_tol: None,
        probe_radius: None,
        bbox: BoundingBox {
            lo: vec![-0.1, -1.1],
            hi: vec![1.1, 1.1],
        },
    }
}

/// The same cusp described by three faces whose level sets continue
/// through the cusp point as odd extensions.
pub fn cusp_split() -> DomainSpec {
    let psi1 = Polynomial {
        terms: vec![mono(1.0, &[0, 1]), odd_mono(1.0, &[4, 0], &[true, false])],
    };
    let psi2 = Polynomial {
        terms: vec![odd_mono(1.0, &[2, 0], &[true, false]), mono(-1.0, &[0, 1])],
    };
    DomainSpec {
        dim: 2,
        faces: vec![
            face(FaceKind::Polynomial(psi1), -FRAC_PI_6, "lower quartic"),
            face(FaceKind::Polynomial(psi2), -FRAC_PI_4, "upper parabola"),
            face(unit_disk(&[0.0, 0.0]), 0.0, "unit circle"),
        ],
        working_margin: 0.05,
        boundary_tol: None,
        probe_radius: None,
        bbox: BoundingBox {
            lo: vec![-0.1, -1.1],
            hi: vec![1.1, 1.1],
        },
    }
}

/// `[0, ∞)` with reflection `+1`. The box only bounds sampling.
pub fn half_line() -> DomainSpec {
    DomainSpec {
        dim: 1,
        faces: vec![FaceSpec {
            kind: halfspace(&[1.0], 0.0),
            reflection: Reflection::Constant(vec![1.0]),
            label: Some("origin".into()),
        }],
        working_margin: 0.5,
        boundary_tol: Some(1e-9),
        probe_radius: Some(1e-3),
        bbox: BoundingBox {
            lo: vec![0.0],
            hi: vec![1.0],
        },
    }
}

/// `[0, 1]^2` with normal reflection on every side.
pub fn unit_box() -> DomainSpec {
    DomainSpec {
        dim: 2,
        faces: vec![
            face(halfspace(&[1.0, 0.0], 0.0), 0.0, "left"),
            face(halfspace(&[-1.0, 0.0], -1.0), 0.0, "right"),
            face(halfspace(&[0.0, 1.0], 0.0), 0.0, "bottom"),
            face(halfspace(&[0.0, -1.0], -1.0), 0.0, "top"),
        ],
        working_margin: 0.1,
        boundary_tol: None,
        probe_radius: None,
        bbox: BoundingBox {
            lo: vec![-0.05, -0.05],
            hi: vec![1.05, 1.05],
        },
    }
}

/// Positive orthant of `R^3` (truncated by the sampling box) with constant
/// oblique reflections.
pub fn oblique_orthant() -> DomainSpec {
    let f = |n: [f64; 3], g: [f64; 3], label: &str| FaceSpec {
        kind: halfspace(&n, 0.0),
        reflection: Reflection::Constant(g.to_vec()),
        label: Some(label.into()),
    };
    DomainSpec {
        dim: 3,
        faces: vec![
            f([1.0, 0.0, 0.0], [1.0, 0.3, 0.2], "x"),
            f([0.0, 1.0, 0.0], [0.2, 1.0, -0.3], "y"),
            f([0.0, 0.0, 1.0], [-0.3, 0.2, 1.0], "z"),
        ],
        working_margin: 0.1,
        boundary_tol: None,
        probe_radius: None,
        bbox: BoundingBox {
            lo: vec![-0.05; 3],
            hi: vec![1.0; 3],
        },
    }
}
