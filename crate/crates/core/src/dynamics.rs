//! Explicit Euler–Maruyama integration of the gradient flow
//! `dψ/dt = -∇K - μ ⊙ ∇R` with optional Langevin noise.
//!
//! Time is phase time (gain fixed to 1). A run is strictly sequential; the
//! sample at step `s` is taken at `t = s * dt` before the update, so every
//! energy is evaluated exactly once per step.

use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CaimError, Result};
use crate::ising::{hamiltonian_unchecked, IsingProblem};
use crate::models::{decide, evaluate, wrap_phase, AimModel, Family, Workspace};
use crate::rng::{rng_from_seed, SimRng};
use crate::text::sig12;

/// How `Γ` enters one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// `Γ √dt ξ`, `ξ ~ N(0, 1)`.
    #[default]
    Wiener,
    /// `Γ u`, `u ~ U[-1, 1]`, independent of `dt`.
    PerStep,
}

fn default_dt() -> f64 {
    1e-2
}
fn default_max_time() -> f64 {
    20.0
}
fn default_record_every() -> usize {
    10
}
fn default_window() -> f64 {
    0.025
}
fn default_threshold() -> f64 {
    0.025
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default)]
    pub noise_gamma: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Store a full state snapshot with every recorded sample.
    #[serde(default)]
    pub record_psi: bool,
    #[serde(default = "default_true")]
    pub stop_at_convergence: bool,
    /// Sliding-window length for convergence detection (phase time).
    #[serde(default = "default_window")]
    pub convergence_window: f64,
    #[serde(default = "default_threshold")]
    pub convergence_threshold: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: default_dt(),
            max_time: default_max_time(),
            noise_gamma: 0.0,
            noise_mode: NoiseMode::Wiener,
            seed: 0,
            record_every: default_record_every(),
            record_psi: false,
            stop_at_convergence: true,
            convergence_window: default_window(),
            convergence_threshold: default_threshold(),
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push(format!("dt must be > 0 (got {})", self.dt));
        }
        if !(self.max_time >= self.dt) || !self.max_time.is_finite() {
            bad.push(format!("max_time must be finite and >= dt (got {})", self.max_time));
        }
        if !(self.noise_gamma >= 0.0 && self.noise_gamma.is_finite()) {
            bad.push(format!("noise_gamma must be >= 0 (got {})", self.noise_gamma));
        }
        if self.record_every == 0 {
            bad.push("record_every must be >= 1".into());
        }
        if !(self.convergence_window > 0.0) {
            bad.push(format!("convergence_window must be > 0 (got {})", self.convergence_window));
        }
        if !(self.convergence_threshold > 0.0) {
            bad.push(format!(
                "convergence_threshold must be > 0 (got {})",
                self.convergence_threshold
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CaimError::Validation(bad.join("; ")))
        }
    }

    pub fn max_steps(&self) -> usize {
        (self.max_time / self.dt).round() as usize
    }

    /// Number of per-step energies inside `[t_now - window, t_now]`.
    pub fn window_len(&self) -> usize {
        (self.convergence_window / self.dt + 1e-9).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub e: f64,
    pub k: f64,
    pub r: f64,
    pub h_decision: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub converged_at: Option<f64>,
    /// Time of the final state (the convergence time when detection fired).
    pub end_time: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| CaimError::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(["t", "E", "K", "R", "H_decision"])?;
        for s in &self.samples {
            w.write_record([sig12(s.t), sig12(s.e), sig12(s.k), sig12(s.r), sig12(s.h_decision)])?;
        }
        w.flush().map_err(|e| CaimError::io(path, e))
    }

    /// One JSON object `{"t": .., "psi": [..]}` per line, for samples that carry a snapshot.
    pub fn write_psi_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| CaimError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for s in &self.samples {
            if let Some(psi) = &s.psi {
                let line = serde_json::json!({ "t": s.t, "psi": psi });
                writeln!(w, "{line}").map_err(|e| CaimError::io(path, e))?;
            }
        }
        w.flush().map_err(|e| CaimError::io(path, e))
    }
}

/// Sliding-window stop rule: `(max E_win - min E_win) / (E_init - E_now) <= threshold`.
///
/// Returns false while there is no net descent.
pub fn detect_convergence(window: &[f64], e_init: f64, e_now: f64, threshold: f64) -> bool {
    if window.is_empty() || !(e_init > e_now) {
        return false;
    }
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    (hi - lo) / (e_init - e_now) <= threshold
}

/// Ring buffer of the most recent per-step energies.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    buf: VecDeque<f64>,
    len: usize,
    threshold: f64,
    e_init: Option<f64>,
}

impl ConvergenceMonitor {
    pub fn new(window_len: usize, threshold: f64) -> Self {
        ConvergenceMonitor {
            buf: VecDeque::with_capacity(window_len),
            len: window_len.max(1),
            threshold,
            e_init: None,
        }
    }

    /// Feeds the energy of the current step; true once the window is full and the rule holds.
    pub fn push(&mut self, e: f64) -> bool {
        let e_init = *self.e_init.get_or_insert(e);
        if self.buf.len() == self.len {
            self.buf.pop_front();
        }
        self.buf.push_back(e);
        if self.buf.len() < self.len {
            return false;
        }
        let (a, b) = self.buf.as_slices();
        let window: Vec<f64> = a.iter().chain(b).copied().collect();
        detect_convergence(&window, e_init, e, self.threshold)
    }
}

/// Uniform initial state: OIM `[0, 2π)`, BRIM `[-10, 10]`, ROSC and GO `[-1, 1]`.
pub fn sample_initial(m: &AimModel, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| match m.family {
            Family::Oim => rng.random_range(0.0..TAU),
            Family::Brim => rng.random_range(-10.0..=10.0),
            Family::Rosc | Family::Go => rng.random_range(-1.0..=1.0),
        })
        .collect()
}

/// Drift for one oscillator; BRIM passes it through the saturating map.
#[inline]
fn drift(m: &AimModel, grad_k: f64, grad_r: f64, mu: f64) -> f64 {
    let raw = grad_k + mu * grad_r;
    match m.family {
        Family::Brim => -m.brim_bound * (m.brim_scale * raw).tanh(),
        _ => -raw,
    }
}

/// Per-run integrator state: workspace and noise stream.
pub(crate) struct Stepper<'a> {
    pub m: &'a AimModel,
    pub p: &'a IsingProblem,
    pub cfg: &'a IntegratorConfig,
    pub ws: Workspace,
    rng: SimRng,
}

impl<'a> Stepper<'a> {
    pub fn new(m: &'a AimModel, p: &'a IsingProblem, cfg: &'a IntegratorConfig) -> Self {
        Stepper {
            m,
            p,
            cfg,
            ws: Workspace::new(p.n()),
            rng: rng_from_seed(cfg.seed),
        }
    }

    /// Evaluates `K`, `R` and both gradients at `psi` into the workspace.
    pub fn evaluate(&mut self, psi: &[f64]) -> Result<(f64, f64)> {
        evaluate(self.m, self.p, psi, &mut self.ws)
    }

    /// Advances `psi` by one step using the gradients already in the workspace.
    pub fn advance(&mut self, psi: &mut [f64], mu: &[f64], t: f64) -> Result<()> {
        let dt = self.cfg.dt;
        let gamma = self.cfg.noise_gamma;
        let sqrt_dt = dt.sqrt();
        for i in 0..psi.len() {
            let d = drift(self.m, self.ws.grad_k[i], self.ws.grad_r[i], mu[i]);
            if !d.is_finite() {
                return Err(CaimError::NonFiniteDrift { t, index: i });
            }
            let mut next = psi[i] + dt * d;
            if gamma > 0.0 {
                next += match self.cfg.noise_mode {
                    NoiseMode::Wiener => {
                        let xi: f64 = StandardNormal.sample(&mut self.rng);
                        gamma * sqrt_dt * xi
                    }
                    NoiseMode::PerStep => gamma * self.rng.random_range(-1.0..=1.0),
                };
            }
            if !next.is_finite() {
                return Err(CaimError::NonFiniteDrift { t, index: i });
            }
            if self.m.family == Family::Go && next.signum() != psi[i].signum() {
                log::trace!("GO oscillator {i} crossed zero at t = {t}");
            }
            psi[i] = if self.m.family == Family::Oim {
                wrap_phase(next)
            } else {
                next
            };
        }
        Ok(())
    }
}

/// One integration step with per-oscillator weights `mu`.
pub fn step(m: &AimModel, p: &IsingProblem, psi: &[f64], mu: &[f64], cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    let n = p.n();
    if mu.len() != n {
        return Err(CaimError::dim("mu vector", n, mu.len()));
    }
    if let Some(i) = mu.iter().position(|x| !x.is_finite()) {
        return Err(CaimError::Contract(format!("mu[{i}] is not finite")));
    }
    if let Some(i) = psi.iter().position(|x| !x.is_finite()) {
        return Err(CaimError::Contract(format!("psi[{i}] is not finite")));
    }
    let mut st = Stepper::new(m, p, cfg);
    st.evaluate(psi)?;
    let mut next = psi.to_vec();
    st.advance(&mut next, mu, 0.0)?;
    Ok(next)
}

/// Energy used by the stop rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum StopEnergy {
    /// `K + Σ μ_i R_i` with the weights in force.
    Held,
    /// `K + μ' R` with a fixed reference weight.
    Reference(f64),
}

/// Shared run loop. `schedule(step, t, psi, mu)` may rewrite `mu` before the
/// step at `t` is taken.
pub(crate) fn integrate<F>(
    m: &AimModel,
    p: &IsingProblem,
    psi0: &[f64],
    cfg: &IntegratorConfig,
    mu: &mut Vec<f64>,
    stop_energy: StopEnergy,
    mut schedule: F,
) -> Result<(Trajectory, Vec<f64>)>
where
    F: FnMut(usize, f64, &[f64], &mut Vec<f64>) -> Result<()>,
{
    cfg.validate()?;
    m.validate()?;
    let n = p.n();
    if psi0.len() != n {
        return Err(CaimError::dim("initial state", n, psi0.len()));
    }
    let mut psi: Vec<f64> = match m.family {
        Family::Oim => psi0.iter().map(|&x| wrap_phase(x)).collect(),
        _ => psi0.to_vec(),
    };
    let mut st = Stepper::new(m, p, cfg);
    let mut monitor = ConvergenceMonitor::new(cfg.window_len(), cfg.convergence_threshold);
    let max_steps = cfg.max_steps();
    let mut traj = Trajectory::default();
    for s in 0..=max_steps {
        let t = s as f64 * cfg.dt;
        schedule(s, t, &psi, mu)?;
        let (k, r) = st.evaluate(&psi)?;
        let e_held = k + st.ws.r_terms.iter().zip(mu.iter()).map(|(a, b)| a * b).sum::<f64>();
        let e_stop = match stop_energy {
            StopEnergy::Held => e_held,
            StopEnergy::Reference(w) => k + w * r,
        };
        let converged = monitor.push(e_stop);
        let last = s == max_steps || (converged && cfg.stop_at_convergence);
        if s % cfg.record_every == 0 || last {
            let spins = decide(m, &psi);
            traj.samples.push(Sample {
                t,
                e: e_held,
                k,
                r,
                h_decision: hamiltonian_unchecked(p, spins.spins()),
                psi: cfg.record_psi.then(|| psi.clone()),
            });
        }
        if converged && traj.converged_at.is_none() {
            traj.converged_at = Some(t);
        }
        if last {
            traj.end_time = t;
            traj.steps = s;
            break;
        }
        st.advance(&mut psi, mu, t)?;
    }
    Ok((traj, psi))
}

/// Autonomous run with uniform weight `mu`.
pub fn run_autonomous(
    m: &AimModel,
    p: &IsingProblem,
    psi0: &[f64],
    mu: f64,
    cfg: &IntegratorConfig,
) -> Result<(Trajectory, Vec<f64>)> {
    if !mu.is_finite() {
        return Err(CaimError::Contract(format!("mu must be finite, got {mu}")));
    }
    let mut weights = vec![mu; p.n()];
    integrate(m, p, psi0, cfg, &mut weights, StopEnergy::Held, |_, _, _, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::{brute_force_ground, generate_spinmodel};
    use crate::models::{energy_breakdown, Family};
    use std::f64::consts::PI;

    fn anti() -> IsingProblem {
        IsingProblem::from_couplings(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn quiet(dt: f64, max_time: f64) -> IntegratorConfig {
        IntegratorConfig {
            dt,
            max_time,
            stop_at_convergence: false,
            record_every: 1,
            ..Default::default()
        }
    }

    #[test]
    fn convergence_rule_examples() {
        assert!(detect_convergence(&[2.0, 2.1], 10.0, 2.0, 0.025));
        assert!(!detect_convergence(&[2.0, 2.3], 10.0, 2.0, 0.025));
        assert!(detect_convergence(&[2.0, 2.0], 10.0, 2.0, 0.025));
        assert!(!detect_convergence(&[2.0, 2.0], 2.0, 2.0, 0.025));
        assert!(!detect_convergence(&[2.0, 2.0], 1.0, 2.0, 0.025));
    }

    #[test]
    fn window_covers_epsilon() {
        let cfg = IntegratorConfig::default();
        assert_eq!(cfg.window_len(), 3);
        let cfg = IntegratorConfig { dt: 1e-3, ..cfg };
        assert_eq!(cfg.window_len(), 26);
    }

    #[test]
    fn fixed_point_is_kept() {
        let p = anti();
        let cfg = quiet(1e-2, 1.0);
        let m = AimModel::oim();
        let psi = vec![0.0, PI];
        assert_eq!(step(&m, &p, &psi, &[1.0, 1.0], &cfg).unwrap(), psi);
        let b = AimModel::brim();
        let psi = vec![1.0, -1.0];
        // BRIM ±1 is not stationary for K; only R vanishes there.
        let zero = IsingProblem::new(2, vec![0.0; 4], vec![0.0; 2]).unwrap();
        assert_eq!(step(&b, &zero, &psi, &[1.0, 1.0], &cfg).unwrap(), psi);
    }

    #[test]
    fn deterministic_with_noise() {
        let p = generate_spinmodel(6, 3).unwrap();
        let m = AimModel::oim();
        let cfg = IntegratorConfig {
            noise_gamma: 0.3,
            seed: 17,
            ..quiet(1e-2, 2.0)
        };
        let psi0 = sample_initial(&m, 6, 9);
        let a = run_autonomous(&m, &p, &psi0, 1.0, &cfg).unwrap();
        let b = run_autonomous(&m, &p, &psi0, 1.0, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(sample_initial(&m, 6, 9), psi0);
    }

    #[test]
    fn initial_ranges() {
        for f in Family::ALL {
            let m = AimModel::new(f);
            let (lo, hi) = match f {
                Family::Oim => (0.0, TAU),
                Family::Brim => (-10.0, 10.0),
                _ => (-1.0, 1.0),
            };
            for x in sample_initial(&m, 500, 4) {
                assert!(x >= lo && x <= hi);
                if f == Family::Oim {
                    assert!(x < TAU);
                }
            }
        }
    }

    #[test]
    fn single_oscillator_relaxes_to_zero() {
        let p = IsingProblem::new(1, vec![0.0], vec![0.0]).unwrap();
        let cfg = quiet(1e-2, 10.0);
        let (traj, fin) = run_autonomous(&AimModel::oim(), &p, &[PI / 4.0], 1.0, &cfg).unwrap();
        assert!(fin[0].min(TAU - fin[0]) < 1e-6);
        for w in traj.samples.windows(2) {
            assert!(w[1].e <= w[0].e);
        }
    }

    #[test]
    fn antiferro_pair_lands_in_ground() {
        let p = anti();
        let ground = brute_force_ground(&p).unwrap();
        let m = AimModel::oim();
        let cfg = IntegratorConfig {
            max_time: 20.0,
            stop_at_convergence: false,
            ..Default::default()
        };
        let hits = (0..50)
            .filter(|&seed| {
                let psi0 = sample_initial(&m, 2, seed);
                let (_, fin) = run_autonomous(&m, &p, &psi0, 0.5, &cfg).unwrap();
                ground.is_ground(&decide(&m, &fin))
            })
            .count();
        assert!(hits >= 45, "hits = {hits}");
    }

    #[test]
    fn antiferro_pair_has_flat_valley_at_unit_mu() {
        // With u = φ1 + φ2, v = φ1 - φ2: E = 2 cos v (1 - cos u), so u = 0 is a
        // stable non-ground valley for |v| < π/2 once μ = 1.
        let p = anti();
        let m = AimModel::oim();
        for v in [-1.2, -0.3, 0.0, 0.7, 1.4] {
            let psi = [v / 2.0, -v / 2.0];
            let e = energy_breakdown(&m, &p, &psi, &[1.0, 1.0]).unwrap().e;
            assert!(e.abs() < 1e-12);
            let bumped = [v / 2.0 + 1e-3, -v / 2.0 + 1e-3];
            assert!(energy_breakdown(&m, &p, &bumped, &[1.0, 1.0]).unwrap().e > 0.0);
            assert_eq!(decide(&m, &psi).spins(), &[1, 1]);
        }
    }

    #[test]
    fn lyapunov_per_step() {
        let p = generate_spinmodel(8, 11).unwrap();
        for f in Family::ALL {
            let m = AimModel::new(f);
            let cfg = quiet(1e-3, 2.0);
            let psi0 = sample_initial(&m, 8, 5);
            let (traj, _) = run_autonomous(&m, &p, &psi0, 1.0, &cfg).unwrap();
            for w in traj.samples.windows(2) {
                assert!(w[1].e - w[0].e <= 1e-6 * (1.0 + w[0].e.abs()), "{f}: {} -> {}", w[0].e, w[1].e);
            }
        }
    }

    #[test]
    fn wrapping_preserves_energy() {
        let p = generate_spinmodel(5, 2).unwrap();
        let m = AimModel::oim();
        let psi: Vec<f64> = vec![-1.0, 7.5, 3.0, 13.0, -20.0];
        let wrapped: Vec<f64> = psi.iter().map(|&x| wrap_phase(x)).collect();
        let a = energy_breakdown(&m, &p, &psi, &[1.0; 5]).unwrap();
        let b = energy_breakdown(&m, &p, &wrapped, &[1.0; 5]).unwrap();
        assert!((a.e - b.e).abs() < 1e-12);
    }

    #[test]
    fn wiener_increment_variance() {
        let p = IsingProblem::new(1, vec![0.0], vec![0.0]).unwrap();
        let m = AimModel::go();
        let cfg = IntegratorConfig {
            noise_gamma: 0.5,
            seed: 8,
            ..quiet(1e-2, 1.0)
        };
        let mut st = Stepper::new(&m, &p, &cfg);
        let mut psi = vec![0.3];
        let steps = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for s in 0..steps {
            let before = psi[0];
            st.evaluate(&psi).unwrap();
            st.advance(&mut psi, &[0.0], s as f64 * cfg.dt).unwrap();
            let d = psi[0] - before;
            sum += d;
            sum2 += d * d;
        }
        let mean = sum / steps as f64;
        let var = sum2 / steps as f64 - mean * mean;
        let target = 0.25 * cfg.dt;
        assert!((var / target - 1.0).abs() < 0.05, "var = {var}, target = {target}");
    }

    #[test]
    fn non_finite_drift_is_reported() {
        let p = IsingProblem::new(1, vec![0.0], vec![0.0]).unwrap();
        let cfg = quiet(1e-2, 1.0);
        let err = step(&AimModel::go(), &p, &[1e200], &[1e200], &cfg).unwrap_err();
        assert!(matches!(err, CaimError::NonFiniteDrift { index: 0, .. }));
    }
}
