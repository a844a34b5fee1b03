//! Sampled feedback control of per-oscillator binarization weights.
//!
//! Time is cut into slices of length `τ`. At the start of slice `k` the
//! controller reads the states sampled at the two previous boundaries and sets
//!
//! ```text
//! μ(k) = -β (ψ(k-1) - ψ(k-2)) / ∇R(ψ(k-1)) + η c(g) g,   g = ∇E'(ψ(k-1)) ⊙ ∇R(ψ(k-1))
//! ```
//!
//! with `∇E' = ∇K + μ'∇R`, `c(g) = √n / ‖g‖₂` (or `n / ‖g‖₁`), and holds it
//! for the whole slice. Slices 0 and 1 run at `μ'`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, IntegratorConfig, StopEnergy, Trajectory};
use crate::error::{CaimError, Result};
use crate::ising::IsingProblem;
use crate::models::{evaluate, AimModel, Family, Workspace};
use crate::sensor::{PhaseSensor, WaveformConfig};
use crate::text::sig12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    #[default]
    L2,
    L1,
}

fn default_beta() -> f64 {
    0.5
}
fn default_eta() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    0.2
}
fn default_mu_prime() -> f64 {
    1.0
}
fn default_grad_floor() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Slice period in phase time.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_mu_prime")]
    pub mu_prime: f64,
    /// Defaults to `4 μ'`.
    #[serde(default)]
    pub clip_bound: Option<f64>,
    #[serde(default)]
    pub norm_mode: NormMode,
    #[serde(default = "default_grad_floor")]
    pub grad_floor: f64,
    /// Index of a bias-carrying reference oscillator, if the problem was augmented.
    #[serde(default)]
    pub reference_node: Option<usize>,
    /// Defaults to `4 μ'`.
    #[serde(default)]
    pub reference_node_fixed_mu: Option<f64>,
    /// Normalize by `|E'| ‖∇R‖₂` instead of `‖∇E' ⊙ ∇R‖₂`.
    #[serde(default)]
    pub literal_energy_denominator: bool,
    /// Feed the controller with sensed phases instead of exact states (OIM only).
    #[serde(default)]
    pub sensor: Option<WaveformConfig>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            beta: default_beta(),
            eta: default_eta(),
            tau: default_tau(),
            mu_prime: default_mu_prime(),
            clip_bound: None,
            norm_mode: NormMode::L2,
            grad_floor: default_grad_floor(),
            reference_node: None,
            reference_node_fixed_mu: None,
            literal_energy_denominator: false,
            sensor: None,
        }
    }
}

impl ControllerConfig {
    pub fn clip(&self) -> f64 {
        self.clip_bound.unwrap_or(4.0 * self.mu_prime)
    }

    pub fn reference_mu(&self) -> f64 {
        self.reference_node_fixed_mu.unwrap_or(4.0 * self.mu_prime)
    }

    /// Integration steps per slice.
    pub fn slice_steps(&self, dt: f64) -> usize {
        (self.tau / dt).round() as usize
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        let mut bad = Vec::new();
        if !(0.0..1.0).contains(&self.beta) {
            bad.push(format!("beta must be in [0, 1), got {}", self.beta));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            bad.push(format!("eta must be >= 0, got {}", self.eta));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            bad.push(format!("tau must be > 0, got {}", self.tau));
        } else if self.tau < dt {
            bad.push(format!("tau = {} is shorter than dt = {dt}", self.tau));
        }
        if !(self.mu_prime > 0.0 && self.mu_prime.is_finite()) {
            bad.push(format!("mu_prime must be > 0, got {}", self.mu_prime));
        }
        if !(self.clip() > 0.0) {
            bad.push(format!("clip_bound must be > 0, got {}", self.clip()));
        }
        if !(self.grad_floor > 0.0) {
            bad.push(format!("grad_floor must be > 0, got {}", self.grad_floor));
        }
        if let Some(w) = &self.sensor {
            if let Err(e) = w.validate() {
                bad.push(format!("sensor: {e}"));
            } else if dt > w.sample_interval() * (1.0 + 1e-9) {
                bad.push(format!(
                    "sensor sampling interval {} is shorter than dt = {dt}",
                    w.sample_interval()
                ));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CaimError::Validation(bad.join("; ")))
        }
    }
}

/// Two-deep sample buffer plus the weights currently held.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceBuffer {
    pub psi_km1: Option<Vec<f64>>,
    pub psi_km2: Option<Vec<f64>>,
    pub k: usize,
    pub held_mu: Vec<f64>,
}

impl SliceBuffer {
    pub fn new(held_mu: Vec<f64>) -> Self {
        SliceBuffer {
            psi_km1: None,
            psi_km2: None,
            k: 0,
            held_mu,
        }
    }

    /// Stores the sample taken at the current boundary and moves to the next slice.
    pub fn push(&mut self, sample: Option<Vec<f64>>) {
        self.psi_km2 = self.psi_km1.take();
        self.psi_km1 = sample;
        self.k += 1;
    }

    pub fn ready(&self) -> bool {
        self.psi_km1.is_some() && self.psi_km2.is_some()
    }
}

/// `η c(g) g` with the chosen normalization; zero when `g` is zero.
pub fn gradient_term(g: &[f64], eta: f64, mode: NormMode) -> Vec<f64> {
    let n = g.len() as f64;
    let scale = match mode {
        NormMode::L2 => {
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                n.sqrt() / norm
            } else {
                0.0
            }
        }
        NormMode::L1 => {
            let norm: f64 = g.iter().map(|x| x.abs()).sum();
            if norm > 0.0 {
                n / norm
            } else {
                0.0
            }
        }
    };
    g.iter().map(|x| eta * scale * x).collect()
}

/// The update law evaluated on the buffered samples, clipped and with the
/// reference node overridden.
pub fn adaptive_mu(m: &AimModel, p: &IsingProblem, buf: &SliceBuffer, cfg: &ControllerConfig) -> Result<Vec<f64>> {
    let n = p.n();
    let (Some(prev), Some(prev2)) = (&buf.psi_km1, &buf.psi_km2) else {
        return Err(CaimError::Contract("adaptive_mu needs two buffered samples".into()));
    };
    if prev2.len() != n {
        return Err(CaimError::dim("buffered sample", n, prev2.len()));
    }
    if buf.held_mu.len() != n {
        return Err(CaimError::dim("held mu", n, buf.held_mu.len()));
    }
    let mut ws = Workspace::new(n);
    let (k, r) = evaluate(m, p, prev, &mut ws)?;

    let momentum: Vec<f64> = (0..n)
        .map(|i| {
            let gr = ws.grad_r[i];
            if gr.abs() < cfg.grad_floor {
                0.0
            } else {
                -cfg.beta * m.state_difference(prev[i], prev2[i]) / gr
            }
        })
        .collect();
    let g: Vec<f64> = (0..n)
        .map(|i| (ws.grad_k[i] + cfg.mu_prime * ws.grad_r[i]) * ws.grad_r[i])
        .collect();
    let drive = if cfg.literal_energy_denominator {
        let e = k + cfg.mu_prime * r;
        let gr_norm = ws.grad_r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = e.abs() * gr_norm;
        if denom > 0.0 {
            g.iter().map(|x| cfg.eta * (n as f64).sqrt() * x / denom).collect()
        } else {
            vec![0.0; n]
        }
    } else {
        gradient_term(&g, cfg.eta, cfg.norm_mode)
    };

    let mut mu: Vec<f64> = if momentum.iter().chain(&drive).all(|&x| x == 0.0) {
        log::debug!("controller stagnation at slice {}: holding previous weights", buf.k);
        buf.held_mu.clone()
    } else {
        momentum.iter().zip(&drive).map(|(a, b)| a + b).collect()
    };
    let clip = cfg.clip();
    for x in &mut mu {
        *x = x.clamp(-clip, clip);
    }
    if let Some(r) = cfg.reference_node {
        if r < n {
            mu[r] = cfg.reference_mu();
        }
    }
    Ok(mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClfDirection {
    /// Unit vector along `diag(∂R) ∇E'`; all zeros when degenerate.
    pub mu_parallel: Vec<f64>,
    /// `∇E' · ∂K`.
    pub alpha_star: f64,
    pub degenerate: bool,
}

/// Steepest-descent control direction for `E' = K + μ'R` at `psi`.
pub fn clf_direction(m: &AimModel, p: &IsingProblem, psi: &[f64], mu_prime: f64) -> Result<ClfDirection> {
    let n = p.n();
    let mut ws = Workspace::new(n);
    evaluate(m, p, psi, &mut ws)?;
    let grad_e: Vec<f64> = (0..n).map(|i| ws.grad_k[i] + mu_prime * ws.grad_r[i]).collect();
    let dir: Vec<f64> = (0..n).map(|i| ws.grad_r[i] * grad_e[i]).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let alpha_star = grad_e.iter().zip(&ws.grad_k).map(|(a, b)| a * b).sum();
    let degenerate = !(norm > 0.0);
    Ok(ClfDirection {
        mu_parallel: if degenerate {
            vec![0.0; n]
        } else {
            dir.iter().map(|x| x / norm).collect()
        },
        alpha_star,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEntry {
    pub k: usize,
    pub t_start: f64,
    pub mu: Vec<f64>,
    /// State sampled at this boundary (after `mu` was fixed); `None` when the
    /// sensor had no estimate yet.
    pub sample: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MuTrace {
    pub entries: Vec<MuEntry>,
}

impl MuTrace {
    /// CSV with header `k,t_start,mu_0,…,mu_{n-1}`.
    pub fn write_csv(&self, path: &Path, n: usize) -> Result<()> {
        let file = File::create(path).map_err(|e| CaimError::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = vec!["k".to_string(), "t_start".to_string()];
        header.extend((0..n).map(|i| format!("mu_{i}")));
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![e.k.to_string(), sig12(e.t_start)];
            row.extend(e.mu.iter().map(|&x| sig12(x)));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| CaimError::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledRun {
    pub trajectory: Trajectory,
    pub mu_trace: MuTrace,
    pub final_state: Vec<f64>,
}

/// Controlled run with zero-order hold. The stop rule watches `K + μ'R`.
pub fn run_controlled(
    m: &AimModel,
    p: &IsingProblem,
    psi0: &[f64],
    ctrl: &ControllerConfig,
    int: &IntegratorConfig,
) -> Result<ControlledRun> {
    ctrl.validate(int.dt)?;
    let n = p.n();
    if ctrl.sensor.is_some() && m.family != Family::Oim {
        return Err(CaimError::Validation(format!(
            "sensor-in-loop mode needs an OIM model, got {}",
            m.family
        )));
    }
    let per_slice = ctrl.slice_steps(int.dt).max(1);
    let mut bootstrap = vec![ctrl.mu_prime; n];
    if let Some(r) = ctrl.reference_node.filter(|&r| r < n) {
        bootstrap[r] = ctrl.reference_mu();
    }
    let mut buf = SliceBuffer::new(bootstrap.clone());
    let mut trace = MuTrace::default();
    let mut sensor = match &ctrl.sensor {
        Some(w) => Some(PhaseSensor::new(n, w)?),
        None => None,
    };
    let mut mu = bootstrap;
    let (trajectory, final_state) = integrate(
        m,
        p,
        psi0,
        int,
        &mut mu,
        StopEnergy::Reference(ctrl.mu_prime),
        |s, t, psi, mu| {
            if let Some(sensor) = sensor.as_mut() {
                sensor.feed(t, psi)?;
            }
            if s % per_slice != 0 {
                return Ok(());
            }
            let k = s / per_slice;
            debug_assert_eq!(k, buf.k);
            if buf.ready() {
                *mu = adaptive_mu(m, p, &buf, ctrl)?;
                buf.held_mu.clone_from(mu);
            }
            let sample = match sensor.as_ref() {
                Some(sensor) => sensor.relative_phases(t),
                None => Some(psi.to_vec()),
            };
            trace.entries.push(MuEntry {
                k,
                t_start: t,
                mu: mu.clone(),
                sample: sample.clone(),
            });
            buf.push(sample);
            Ok(())
        },
    )?;
    Ok(ControlledRun {
        trajectory,
        mu_trace: trace,
        final_state,
    })
}

/// `θ(t+1) = θ(t) + β (θ(t-1) - θ(t-2)) - η ∇J(θ(t-1))`.
pub fn async_momentum_step(
    theta: &[f64],
    theta_m1: &[f64],
    theta_m2: &[f64],
    grad_at_m1: &[f64],
    beta: f64,
    eta: f64,
) -> Vec<f64> {
    theta
        .iter()
        .zip(theta_m1)
        .zip(theta_m2)
        .zip(grad_at_m1)
        .map(|(((t, a), b), g)| t + beta * (a - b) - eta * g)
        .collect()
}
