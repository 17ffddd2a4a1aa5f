//! Scenario files: domain, coefficients, boundary behaviour and numerics in
//! one JSON document.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeffs::{BoundaryBehavior, DiffusionCoefficients};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::geometry::DomainSpec;
use crate::kernel::{FaceRule, Kernel, StepConfig};

fn default_t_trunc() -> f64 {
    20.0
}

fn default_lambda0_target() -> f64 {
    1.0
}

fn default_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    pub dt: f64,
    pub delta: f64,
    /// Discount horizon of the resolvent estimators.
    #[serde(default = "default_t_trunc")]
    pub t_trunc: f64,
    /// Interior-clock horizon of plain simulations.
    #[serde(default = "default_lambda0_target")]
    pub lambda0_target: f64,
    #[serde(default)]
    pub rule: FaceRule,
    /// Tolerance of the clock-identity check.
    #[serde(default = "default_tolerance")]
    pub clock_tolerance: f64,
}

impl Numerics {
    pub fn step(&self) -> StepConfig {
        StepConfig {
            dt: self.dt,
            delta: self.delta,
            rule: self.rule,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.step().validate()?;
        for (name, v) in [
            ("t_trunc", self.t_trunc),
            ("lambda0_target", self.lambda0_target),
            ("clock_tolerance", self.clock_tolerance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OutputOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Write full path dumps next to the summaries.
    #[serde(default)]
    pub dump_paths: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub domain: DomainSpec,
    #[serde(default)]
    pub coefficients: DiffusionCoefficients,
    #[serde(default)]
    pub behavior: BoundaryBehavior,
    pub numerics: Numerics,
    /// Default starting point.
    pub x0: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputOptions,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.coefficients.validate(&self.domain)?;
        self.behavior.validate(&self.domain)?;
        self.numerics.validate()?;
        if self.x0.len() != self.domain.dim {
            return Err(Error::InvalidInput("x0 has the wrong dimension".into()));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Kernel<'_> {
        Kernel::new(
            &self.domain,
            &self.coefficients,
            &self.behavior,
            self.numerics.step(),
        )
    }

    /// SHA-256 of the canonical JSON form (object keys sorted).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("scenario serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: ScenarioConfig = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Shipped scenarios by name.
    pub fn builtin(name: &str) -> Result<Self> {
        let bm = DiffusionCoefficients::brownian(1.0);
        let base = |domain: DomainSpec, x0: Vec<f64>, dt: f64, delta: f64| ScenarioConfig {
            name: name.to_string(),
            domain,
            coefficients: bm.clone(),
            behavior: BoundaryBehavior::ObliqueReflection,
            numerics: Numerics {
                dt,
                delta,
                t_trunc: default_t_trunc(),
                lambda0_target: default_lambda0_target(),
                rule: FaceRule::FirstIndex,
                clock_tolerance: default_tolerance(),
            },
            x0,
            seed: 1,
            output: OutputOptions::default(),
        };
        let s = match name {
            "lens" => base(fixtures::lens(FRAC_PI_4), vec![0.0, 0.0], 1e-3, 1e-2),
            "cusp" => base(fixtures::cusp(), vec![0.5, 0.1], 1e-3, 1e-2),
            "cusp_split" => base(fixtures::cusp_split(), vec![0.5, 0.1], 1e-3, 1e-2),
            "half_line" => base(fixtures::half_line(), vec![0.0], 1e-3, 1e-2),
            "unit_box" => base(fixtures::unit_box(), vec![0.5, 0.5], 1e-3, 1e-2),
            "oblique_orthant" => base(fixtures::oblique_orthant(), vec![0.2, 0.2, 0.2], 1e-3, 1e-2),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown builtin scenario {name:?}; known: {}",
                    BUILTIN_NAMES.join(", ")
                )))
            }
        };
        s.validate()?;
        Ok(s)
    }
}

pub const BUILTIN_NAMES: [&str; 6] = [
    "lens",
    "cusp",
    "cusp_split",
    "half_line",
    "unit_box",
    "oblique_orthant",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_round_trip() {
        for name in BUILTIN_NAMES {
            let s = ScenarioConfig::builtin(name).unwrap();
            let back = ScenarioConfig::from_json(&s.to_json_pretty()).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.hash(), s.hash());
        }
    }

    #[test]
    fn hash_ignores_key_order_and_tracks_content() {
        let s = ScenarioConfig::builtin("half_line").unwrap();
        let compact = serde_json::to_string(&s).unwrap();
        let pretty = s.to_json_pretty();
        assert_eq!(
            ScenarioConfig::from_json(&compact).unwrap().hash(),
            ScenarioConfig::from_json(&pretty).unwrap().hash()
        );
        let mut t = s.clone();
        t.seed += 1;
        assert_ne!(t.hash(), s.hash());
        assert_eq!(s.hash().len(), 64);
    }

    #[test]
    fn invalid_numerics_are_rejected() {
        let mut s = ScenarioConfig::builtin("half_line").unwrap();
        s.numerics.delta = 1.0;
        assert!(matches!(s.validate(), Err(Error::InvalidInput(_))));
        assert!(ScenarioConfig::builtin("nope").is_err());
    }
}
