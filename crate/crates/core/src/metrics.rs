//! Solution-quality metrics and the small-n equivalence checker.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CaimError, Result};
use crate::ising::{brute_force_ground, IsingProblem};
use crate::models::{decide, evaluate, AimModel, Family, Workspace};

/// Default calibration constant of the success estimate.
pub const SUCCESS_CONSTANT: f64 = 1.35;

/// Hamiltonians closer than this count as equal.
pub const HIT_TOLERANCE: f64 = 1e-9;

/// Largest problem the grid checker accepts.
pub const GRID_CAP: usize = 4;

/// Scale of `J` in the approximation-ratio denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingNorm {
    /// Largest absolute entry.
    #[default]
    MaxEntry,
    /// Largest absolute row sum (induced ∞-norm).
    MaxRowSum,
    /// `‖J‖_F / √n`.
    ScaledFrobenius,
}

impl CouplingNorm {
    pub fn eval(self, p: &IsingProblem) -> f64 {
        match self {
            CouplingNorm::MaxEntry => p.max_abs_coupling(),
            CouplingNorm::MaxRowSum => p.max_row_sum(),
            CouplingNorm::ScaledFrobenius => p.frobenius() / (p.n() as f64).sqrt(),
        }
    }
}

/// `r = 1/2 - H / (2 (√n ‖J‖ + ‖h‖₁))`.
pub fn approx_ratio(p: &IsingProblem, h: f64, norm: CouplingNorm) -> Result<f64> {
    let scale = (p.n() as f64).sqrt() * norm.eval(p) + p.bias_l1();
    if !(scale > 0.0) {
        return Err(CaimError::UndefinedMetric(
            "approximation ratio of the all-zero problem".into(),
        ));
    }
    Ok(0.5 - h / (2.0 * scale))
}

/// `exp(-√n (c - r))`, clamped to at most 1.
pub fn success_estimate_with(n: usize, r: f64, c: f64) -> f64 {
    let v = (-(n as f64).sqrt() * (c - r)).exp();
    if v > 1.0 {
        log::debug!("success estimate {v} clamped to 1 (r = {r} exceeds {c})");
        1.0
    } else {
        v
    }
}

pub fn success_estimate(n: usize, r: f64) -> f64 {
    success_estimate_with(n, r, SUCCESS_CONSTANT)
}

/// Time to reach 99% confidence: `t_run ln(0.01) / ln(1 - P)`, never less
/// than one run.
pub fn tts(t_run: f64, p_hat: f64) -> Result<f64> {
    if !(t_run >= 0.0) {
        return Err(CaimError::Contract(format!("t_run must be >= 0, got {t_run}")));
    }
    if p_hat >= 0.99 {
        return Ok(t_run);
    }
    if !(p_hat > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok((t_run * 0.01f64.ln() / (-p_hat).ln_1p()).max(t_run))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub norm: CouplingNorm,
    pub success_constant: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            norm: CouplingNorm::MaxEntry,
            success_constant: SUCCESS_CONSTANT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub best_h: f64,
    pub r: f64,
    pub p_hat: f64,
    pub t_run: f64,
    pub tts: f64,
    pub converged: bool,
}

impl RunMetrics {
    pub fn new(p: &IsingProblem, best_h: f64, t_run: f64, converged: bool, opts: &MetricOptions) -> Result<Self> {
        let r = approx_ratio(p, best_h, opts.norm)?;
        let p_hat = success_estimate_with(p.n(), r, opts.success_constant);
        Ok(RunMetrics {
            best_h,
            r,
            p_hat,
            t_run,
            tts: tts(t_run, p_hat)?,
            converged,
        })
    }
}

pub fn is_hit(best_h: f64, h0: f64) -> bool {
    (best_h - h0).abs() <= HIT_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub mean_r: f64,
    pub max_r: f64,
    pub min_best_h: f64,
    pub p_hat_mean: f64,
    pub t_run_mean: f64,
    pub tts_median: f64,
    pub converged_fraction: f64,
    /// Present when a ground energy was supplied.
    pub hits: Option<usize>,
    pub exact_success: Option<f64>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn aggregate(results: &[RunMetrics], h0: Option<f64>) -> Result<Summary> {
    if results.is_empty() {
        return Err(CaimError::Contract("aggregate of an empty result list".into()));
    }
    let n = results.len() as f64;
    let mean = |f: fn(&RunMetrics) -> f64| results.iter().map(f).sum::<f64>() / n;
    let mut tts: Vec<f64> = results.iter().map(|m| m.tts).collect();
    let hits = h0.map(|h0| results.iter().filter(|m| is_hit(m.best_h, h0)).count());
    Ok(Summary {
        runs: results.len(),
        mean_r: mean(|m| m.r),
        max_r: results.iter().map(|m| m.r).fold(f64::NEG_INFINITY, f64::max),
        min_best_h: results.iter().map(|m| m.best_h).fold(f64::INFINITY, f64::min),
        p_hat_mean: mean(|m| m.p_hat),
        t_run_mean: mean(|m| m.t_run),
        tts_median: median(&mut tts),
        converged_fraction: results.iter().filter(|m| m.converged).count() as f64 / n,
        hits,
        exact_success: hits.map(|h| h as f64 / n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub mu_tested: f64,
    /// Grid minimum of `E` over states that decide to a ground configuration.
    pub min_energy_ground: f64,
    /// Grid minimum of `E` over all other states.
    pub min_energy_excited: f64,
    pub equivalent: bool,
}

/// Per-coordinate grid: one open period for OIM, a closed interval otherwise.
pub fn grid_axis(family: Family, res: usize, bounds: Option<(f64, f64)>) -> Vec<f64> {
    match (family, bounds) {
        (Family::Oim, None) => (0..res).map(|k| k as f64 * TAU / res as f64).collect(),
        (_, b) => {
            let (lo, hi) = b.unwrap_or((-3.0, 3.0));
            (0..res)
                .map(|k| lo + (hi - lo) * k as f64 / (res - 1) as f64)
                .collect()
        }
    }
}

/// Dense-grid comparison of the lowest controlled energy inside and outside
/// the ground-state preimage, at uniform weight `mu`.
pub fn equivalence_check_grid(
    m: &AimModel,
    p: &IsingProblem,
    mu: f64,
    grid_res: usize,
    bounds: Option<(f64, f64)>,
) -> Result<EquivalenceReport> {
    let n = p.n();
    if n > GRID_CAP {
        return Err(CaimError::ResourceCap {
            what: "equivalence grid",
            cap: GRID_CAP,
            n,
        });
    }
    if n == 0 {
        return Err(CaimError::Contract("equivalence grid needs n >= 1".into()));
    }
    if grid_res < 11 {
        return Err(CaimError::Contract(format!("grid_res must be >= 11, got {grid_res}")));
    }
    let ground = brute_force_ground(p)?;
    let axis = grid_axis(m.family, grid_res, bounds);
    let cells = grid_res.pow(n as u32 - 1);
    let (g, x) = axis
        .par_iter()
        .map(|&first| {
            let mut ws = Workspace::new(n);
            let mut psi = vec![first; n];
            let (mut best_g, mut best_x) = (f64::INFINITY, f64::INFINITY);
            for cell in 0..cells {
                let mut c = cell;
                for slot in psi.iter_mut().skip(1) {
                    *slot = axis[c % grid_res];
                    c /= grid_res;
                }
                let (k, r) = evaluate(m, p, &psi, &mut ws).expect("grid state has the problem's size");
                let e = k + mu * r;
                if ground.is_ground(&decide(m, &psi)) {
                    best_g = best_g.min(e);
                } else {
                    best_x = best_x.min(e);
                }
            }
            (best_g, best_x)
        })
        .reduce(
            || (f64::INFINITY, f64::INFINITY),
            |a, b| (a.0.min(b.0), a.1.min(b.1)),
        );
    Ok(EquivalenceReport {
        mu_tested: mu,
        min_energy_ground: g,
        min_energy_excited: x,
        equivalent: g <= x,
    })
}
