//! Reruns one metric over a ladder of `(dt, delta)` resolutions with common
//! random numbers.

use serde::{Deserialize, Serialize};

use crate::controlled::{simulate_controlled, Stop};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, StepConfig};
use crate::parallel::map_paths;
use crate::resolvent::{estimate_vh_controlled, ResolventRun};
use crate::testfn::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub dt: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "metric")]
pub enum Metric {
    /// `|estimate - reference|` of the controlled-clock resolvent.
    ResolventError {
        h: TestFunction,
        reference: f64,
        t_trunc: f64,
    },
    /// Largest depth of `Y` outside the closed domain.
    MaxExcursion { lambda0_target: f64 },
    /// Largest relative violation of `lambda0 + lambda1 = s`.
    ClockResidual { lambda0_target: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungResult {
    pub dt: f64,
    pub delta: f64,
    pub value: f64,
    /// Monte Carlo standard error, where the metric has one.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<RungResult>,
    /// Each rung's value is at most the previous one (plus `slack`).
    pub non_increasing: bool,
    pub slack: f64,
}

pub struct StudyConfig<'a> {
    pub x0: &'a [f64],
    pub n_paths: usize,
    pub seed: u64,
    pub workers: usize,
    /// Allowed increase between rungs in the trend check.
    pub slack: f64,
}

pub fn convergence_study(
    kernel: &Kernel<'_>,
    ladder: &[Rung],
    metric: &Metric,
    cfg: &StudyConfig<'_>,
) -> Result<ConvergenceTable> {
    if ladder.len() < 2 {
        return Err(Error::InvalidInput(
            "a ladder needs at least two rungs".into(),
        ));
    }
    let mut rows = Vec::with_capacity(ladder.len());
    for rung in ladder {
        let k = Kernel {
            cfg: StepConfig {
                dt: rung.dt,
                delta: rung.delta,
                rule: kernel.cfg.rule,
            },
            ..*kernel
        };
        let (value, stderr) = match metric {
            Metric::ResolventError {
                h,
                reference,
                t_trunc,
            } => {
                let run = ResolventRun {
                    x0: cfg.x0.to_vec(),
                    n_paths: cfg.n_paths,
                    t_trunc: *t_trunc,
                    seed: cfg.seed,
                    workers: cfg.workers,
                    scenario_hash: None,
                };
                let e = estimate_vh_controlled(&k, h, &run)?;
                ((e.mean - reference).abs(), Some(e.stderr))
            }
            Metric::MaxExcursion { lambda0_target } => {
                let per = map_paths(cfg.n_paths, cfg.workers, |i| {
                    let p = simulate_controlled(
                        &k,
                        cfg.x0,
                        Stop::Lambda0(*lambda0_target),
                        cfg.seed,
                        i,
                    )?;
                    Ok(p.records
                        .iter()
                        .map(|r| k.domain.exterior_depth(&r.y))
                        .fold(0.0, f64::max))
                })?;
                (per.iter().copied().fold(0.0, f64::max), None)
            }
            Metric::ClockResidual { lambda0_target } => {
                let per = map_paths(cfg.n_paths, cfg.workers, |i| {
                    let p = simulate_controlled(
                        &k,
                        cfg.x0,
                        Stop::Lambda0(*lambda0_target),
                        cfg.seed,
                        i,
                    )?;
                    Ok(p.clock_residual())
                })?;
                (per.iter().copied().fold(0.0, f64::max), None)
            }
        };
        rows.push(RungResult {
            dt: rung.dt,
            delta: rung.delta,
            value,
            stderr,
        });
    }
    let non_increasing = rows
        .windows(2)
        .all(|w| w[1].value <= w[0].value + cfg.slack);
    Ok(ConvergenceTable {
        rows,
        non_increasing,
        slack: cfg.slack,
    })
}
