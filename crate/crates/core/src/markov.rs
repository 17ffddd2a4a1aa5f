//! Statistical restart test: after a stopping time `sigma`, the path should
//! evolve like a fresh path started from `X(sigma)`.
//!
//! The restart arm cuts each simulated path at `tau(sigma)` and time-changes
//! the suffix. Entry points `X(sigma)` are binned on a uniform grid of cells
//! over the bounding box. For each compared cell, the fresh arm starts new
//! paths from entry points drawn (with replacement) from that cell. The two
//! samples of `X(sigma + t)` are compared coordinate-wise with two-sample
//! KS tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controlled::{restart_path, simulate_controlled, Stop};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::parallel::map_paths;
use crate::stats::ks_two_sample;
use crate::timechange::{time_change, ConstrainedPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingRule {
    /// First time `X` has `x[coordinate] <= level`.
    FirstHit { coordinate: usize, level: f64 },
    /// First breakpoint of `X` at or after the given time, so that the
    /// restart happens where the discretized path actually moves.
    FixedTime(f64),
}

impl StoppingRule {
    pub fn describe(&self) -> String {
        match self {
            StoppingRule::FirstHit { coordinate, level } => {
                format!("first time x[{coordinate}] <= {level}")
            }
            StoppingRule::FixedTime(t) => format!("fixed time {t}"),
        }
    }

    /// `sigma` on a time-changed path, if it occurs before the horizon.
    pub fn apply(&self, cp: &ConstrainedPath) -> Option<f64> {
        match self {
            StoppingRule::FirstHit { coordinate, level } => cp
                .knots
                .iter()
                .find(|k| k.x[*coordinate] <= *level)
                .map(|k| k.t),
            StoppingRule::FixedTime(t) => cp.knots.iter().find(|k| k.t >= *t).map(|k| k.t),
        }
    }
}

/// Uniform cells over the bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub cells_per_axis: usize,
    /// Cells to compare; `None` compares every cell that reaches the
    /// minimum count.
    #[serde(default)]
    pub cells: Option<Vec<usize>>,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
}

fn default_min_count() -> usize {
    50
}

impl BinSpec {
    pub fn cell_of(&self, x: &[f64], lo: &[f64], hi: &[f64]) -> usize {
        let n = self.cells_per_axis.max(1);
        let mut idx = 0;
        for k in (0..x.len()).rev() {
            let w = (hi[k] - lo[k]) / n as f64;
            let c = (((x[k] - lo[k]) / w).floor().max(0.0) as usize).min(n - 1);
            idx = idx * n + c;
        }
        idx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartConfig {
    pub x0: Vec<f64>,
    pub rule: StoppingRule,
    pub lags: Vec<f64>,
    /// Paths in the restart arm, and in each fresh arm.
    pub n_paths: usize,
    /// Interior-clock horizon of the restart arm; `sigma + max lag` must fit.
    pub horizon: f64,
    pub bins: BinSpec,
    pub seed: u64,
    pub workers: usize,
    /// Start of a deliberately different fresh arm (negative control).
    #[serde(default)]
    pub control_start: Option<Vec<f64>>,
    /// Also compare two fresh arms with different seeds.
    #[serde(default)]
    pub calibrate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub cell: usize,
    pub lag: f64,
    pub coordinate: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub n_restart: usize,
    pub n_fresh: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTestReport {
    pub rule: String,
    pub bins: BinSpec,
    pub cell_counts: Vec<(usize, usize)>,
    pub stopped: usize,
    pub not_stopped: usize,
    pub entries: Vec<KsEntry>,
    pub control: Vec<KsEntry>,
    pub calibration: Vec<KsEntry>,
}

impl RestartTestReport {
    pub fn min_p(&self) -> f64 {
        self.entries.iter().map(|e| e.p_value).fold(1.0, f64::min)
    }

    pub fn max_control_p(&self) -> Option<f64> {
        (!self.control.is_empty())
            .then(|| self.control.iter().map(|e| e.p_value).fold(0.0, f64::max))
    }

    pub fn passes(&self, alpha: f64) -> bool {
        !self.entries.is_empty() && self.min_p() >= alpha
    }
}

/// `X(sigma)` and `X(sigma + lag)` for each lag, or `None` if `sigma` does
/// not occur in time.
type RestartSample = Option<(Vec<f64>, Vec<Vec<f64>>)>;

fn restart_sample(kernel: &Kernel<'_>, cfg: &RestartConfig, i: u64) -> Result<RestartSample> {
    let p = simulate_controlled(kernel, &cfg.x0, Stop::Lambda0(cfg.horizon), cfg.seed, i)?;
    let cp = time_change(&p, 0.0)?;
    let max_lag = cfg.lags.iter().copied().fold(0.0, f64::max);
    let Some(sigma) = cfg.rule.apply(&cp) else {
        return Ok(None);
    };
    if sigma + max_lag + kernel.cfg.dt > cp.horizon() {
        return Ok(None);
    }
    let entry = cp.x_at(sigma)?.to_vec();
    let cut = restart_path(&p, cp.tau.eval(sigma)?)?;
    let suffix = time_change(&cut, 0.0)?;
    let lagged = cfg
        .lags
        .iter()
        .map(|&l| suffix.x_at(l).map(|x| x.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some((entry, lagged)))
}

fn fresh_arm(
    kernel: &Kernel<'_>,
    starts: &[Vec<f64>],
    lags: &[f64],
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let chosen: Vec<usize> = (0..n).map(|_| pick.random_range(0..starts.len())).collect();
    let max_lag = lags.iter().copied().fold(0.0, f64::max);
    map_paths(n, workers, |i| {
        let x0 = &starts[chosen[i as usize]];
        // One extra step so that no lag falls on the shortened final step.
        let horizon = max_lag + kernel.cfg.dt;
        let p = simulate_controlled(kernel, x0, Stop::Lambda0(horizon), seed, i)?;
        let cp = time_change(&p, 0.0)?;
        lags.iter()
            .map(|&l| cp.x_at(l).map(|x| x.to_vec()))
            .collect()
    })
}

fn compare(cell: usize, lags: &[f64], a: &[&Vec<Vec<f64>>], b: &[Vec<Vec<f64>>]) -> Vec<KsEntry> {
    let mut out = Vec::new();
    let d = a.first().map_or(0, |s| s[0].len());
    for (li, &lag) in lags.iter().enumerate() {
        for c in 0..d {
            let xa: Vec<f64> = a.iter().map(|s| s[li][c]).collect();
            let xb: Vec<f64> = b.iter().map(|s| s[li][c]).collect();
            let ks = ks_two_sample(&xa, &xb);
            out.push(KsEntry {
                cell,
                lag,
                coordinate: c,
                statistic: ks.statistic,
                p_value: ks.p_value,
                n_restart: xa.len(),
                n_fresh: xb.len(),
            });
        }
    }
    out
}

pub fn run_restart_test(kernel: &Kernel<'_>, cfg: &RestartConfig) -> Result<RestartTestReport> {
    if cfg.lags.is_empty() || cfg.lags.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidInput("lags must be positive".into()));
    }
    if cfg.n_paths < 2 {
        return Err(Error::InvalidInput("need at least two paths".into()));
    }
    let samples = map_paths(cfg.n_paths, cfg.workers, |i| restart_sample(kernel, cfg, i))?;
    let bbox = &kernel.domain.bbox;
    type Pair<'a> = (&'a Vec<f64>, &'a Vec<Vec<f64>>);
    let mut by_cell: std::collections::BTreeMap<usize, Vec<Pair<'_>>> = Default::default();
    let mut not_stopped = 0;
    for s in &samples {
        match s {
            Some((entry, lagged)) => by_cell
                .entry(cfg.bins.cell_of(entry, &bbox.lo, &bbox.hi))
                .or_default()
                .push((entry, lagged)),
            None => not_stopped += 1,
        }
    }
    let cell_counts: Vec<(usize, usize)> = by_cell.iter().map(|(c, v)| (*c, v.len())).collect();
    let compared: Vec<usize> = match &cfg.bins.cells {
        Some(cells) => {
            for &c in cells {
                let count = by_cell.get(&c).map_or(0, |v| v.len());
                if count < cfg.bins.min_count {
                    return Err(Error::UnderpopulatedBins {
                        cell: c,
                        count,
                        required: cfg.bins.min_count,
                    });
                }
            }
            cells.clone()
        }
        None => cell_counts
            .iter()
            .filter(|(_, n)| *n >= cfg.bins.min_count)
            .map(|(c, _)| *c)
            .collect(),
    };
    if compared.is_empty() {
        let (cell, count) = cell_counts
            .iter()
            .copied()
            .max_by_key(|(_, n)| *n)
            .unwrap_or((0, 0));
        return Err(Error::UnderpopulatedBins {
            cell,
            count,
            required: cfg.bins.min_count,
        });
    }

    let mut entries = Vec::new();
    let mut control = Vec::new();
    let mut calibration = Vec::new();
    for (k, &cell) in compared.iter().enumerate() {
        let members = &by_cell[&cell];
        let starts: Vec<Vec<f64>> = members.iter().map(|(e, _)| (*e).clone()).collect();
        let restarted: Vec<&Vec<Vec<f64>>> = members.iter().map(|(_, l)| *l).collect();
        let arm_seed = cfg.seed.wrapping_add(1 + 3 * k as u64);
        let fresh = fresh_arm(
            kernel,
            &starts,
            &cfg.lags,
            cfg.n_paths,
            arm_seed,
            cfg.workers,
        )?;
        entries.extend(compare(cell, &cfg.lags, &restarted, &fresh));
        if let Some(c) = &cfg.control_start {
            let other = fresh_arm(
                kernel,
                std::slice::from_ref(c),
                &cfg.lags,
                cfg.n_paths,
                arm_seed + 1,
                cfg.workers,
            )?;
            control.extend(compare(cell, &cfg.lags, &restarted, &other));
        }
        if cfg.calibrate {
            let again = fresh_arm(
                kernel,
                &starts,
                &cfg.lags,
                cfg.n_paths,
                arm_seed + 2,
                cfg.workers,
            )?;
            let first: Vec<&Vec<Vec<f64>>> = fresh.iter().collect();
            calibration.extend(compare(cell, &cfg.lags, &first, &again));
        }
    }

    Ok(RestartTestReport {
        rule: cfg.rule.describe(),
        bins: cfg.bins.clone(),
        cell_counts,
        stopped: cfg.n_paths - not_stopped,
        not_stopped,
        entries,
        control,
        calibration,
    })
}
