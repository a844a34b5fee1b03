//! The four analog Ising machine families behind one interface.
//!
//! Each family supplies a representation energy `K` (continuous surrogate of
//! the Hamiltonian), a binarization energy `R` (pulls every coordinate to one
//! of two spin-encoding values), their gradients, and a decision map `F`.
//!
//! | family | `K`                                   | `R`              | `F`            |
//! |--------|---------------------------------------|------------------|----------------|
//! | OIM    | `Σ J_ij cos(φi−φj) + Σ h_i cos φi`     | `−Σ cos 2φi`     | `sgn(cos φi)`  |
//! | BRIM   | `Σ J_ij φi φj + Σ h_i φi`              | `Σ (φi² − 1)²`   | `sgn(φi)`      |
//! | ROSC   | `Σ J_ij u_i u_j + Σ h_i u_i`, `u = tanh(aφ)` | `−Σ |φi|`  | `sgn(φi)`      |
//! | GO     | `Σ J_ij g_i g_j + Σ h_i g_i`, `g = sgn(φ) e^{−φ²/2}` | `Σ φi²` | `sgn(φi)` |
//!
//! Coupling sums run over ordered pairs. Non-smooth points use these
//! conventions: `∂|φ|/∂φ = 0` at 0 (ROSC), `sgn(0) = 0` so `g(0) = 0` and
//! `g'(0) = 0` (GO), and the decision map sends an exact 0 to `+1`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CaimError, Result};
use crate::ising::{IsingProblem, SpinConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Oim,
    Brim,
    Rosc,
    Go,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Oim, Family::Brim, Family::Rosc, Family::Go];

    pub fn name(self) -> &'static str {
        match self {
            Family::Oim => "oim",
            Family::Brim => "brim",
            Family::Rosc => "rosc",
            Family::Go => "go",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = CaimError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oim" => Ok(Family::Oim),
            "brim" => Ok(Family::Brim),
            "rosc" => Ok(Family::Rosc),
            "go" => Ok(Family::Go),
            other => Err(CaimError::Validation(format!(
                "unknown model family {other:?} (expected oim, brim, rosc or go)"
            ))),
        }
    }
}

fn default_brim_bound() -> f64 {
    10.0
}
fn default_brim_scale() -> f64 {
    0.1
}
fn default_rosc_slope() -> f64 {
    1.0
}
fn default_rosc_rho() -> f64 {
    10.0
}
fn default_go_eps() -> f64 {
    1e-3
}

/// A machine family plus its shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AimModel {
    pub family: Family,
    /// BRIM drift saturation `B * tanh(c * x)`: the bound `B`.
    #[serde(default = "default_brim_bound")]
    pub brim_bound: f64,
    /// BRIM drift saturation: the scale `c`.
    #[serde(default = "default_brim_scale")]
    pub brim_scale: f64,
    /// ROSC `tanh` steepness.
    #[serde(default = "default_rosc_slope")]
    pub rosc_slope: f64,
    /// Finite stand-in for the ROSC binarization minimum at infinity.
    #[serde(default = "default_rosc_rho")]
    pub rosc_rho: f64,
    /// Magnitude of the GO binarized representative `s_i * eps`.
    #[serde(default = "default_go_eps")]
    pub go_eps: f64,
}

impl AimModel {
    pub fn new(family: Family) -> Self {
        AimModel {
            family,
            brim_bound: default_brim_bound(),
            brim_scale: default_brim_scale(),
            rosc_slope: default_rosc_slope(),
            rosc_rho: default_rosc_rho(),
            go_eps: default_go_eps(),
        }
    }

    pub fn oim() -> Self {
        Self::new(Family::Oim)
    }
    pub fn brim() -> Self {
        Self::new(Family::Brim)
    }
    pub fn rosc() -> Self {
        Self::new(Family::Rosc)
    }
    pub fn go() -> Self {
        Self::new(Family::Go)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("brim_bound", self.brim_bound),
            ("brim_scale", self.brim_scale),
            ("rosc_slope", self.rosc_slope),
            ("rosc_rho", self.rosc_rho),
            ("go_eps", self.go_eps),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CaimError::Validation(format!("model.{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Single-spin map `σ(φ)` and its derivative for the polynomial-coupled families.
    #[inline]
    fn sigma(&self, phi: f64) -> (f64, f64) {
        match self.family {
            Family::Brim => (phi, 1.0),
            Family::Rosc => {
                let u = (self.rosc_slope * phi).tanh();
                (u, self.rosc_slope * (1.0 - u * u))
            }
            Family::Go => {
                if phi == 0.0 {
                    (0.0, 0.0)
                } else {
                    let g = (-0.5 * phi * phi).exp();
                    (phi.signum() * g, -phi.abs() * g)
                }
            }
            Family::Oim => unreachable!("OIM uses the phase form"),
        }
    }

    /// Per-oscillator binarization term and its derivative.
    #[inline]
    pub fn binar_term(&self, phi: f64) -> (f64, f64) {
        match self.family {
            Family::Oim => (-(2.0 * phi).cos(), 2.0 * (2.0 * phi).sin()),
            Family::Brim => {
                let q = phi * phi - 1.0;
                (q * q, 4.0 * phi * q)
            }
            Family::Rosc => {
                let d = if phi == 0.0 { 0.0 } else { -phi.signum() };
                (-phi.abs(), d)
            }
            Family::Go => (phi * phi, 2.0 * phi),
        }
    }

    /// Signed state difference `a - b`; minimal angle for OIM phases.
    #[inline]
    pub fn state_difference(&self, a: f64, b: f64) -> f64 {
        match self.family {
            Family::Oim => wrap_signed(a - b),
            _ => a - b,
        }
    }
}

/// Wraps into `[0, 2π)`.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wraps into `(-π, π]`.
#[inline]
pub fn wrap_signed(x: f64) -> f64 {
    let r = wrap_phase(x);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Reusable buffers for repeated energy and gradient evaluation.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    pub grad_k: Vec<f64>,
    pub grad_r: Vec<f64>,
    pub r_terms: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    ja: Vec<f64>,
    jb: Vec<f64>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        let mut ws = Workspace::default();
        ws.resize(n);
        ws
    }

    fn resize(&mut self, n: usize) {
        for v in [
            &mut self.grad_k,
            &mut self.grad_r,
            &mut self.r_terms,
            &mut self.a,
            &mut self.b,
            &mut self.ja,
            &mut self.jb,
        ] {
            v.resize(n, 0.0);
        }
    }
}

/// `K` and `R` at `psi`, filling `ws.grad_k`, `ws.grad_r` and `ws.r_terms`.
pub fn evaluate(m: &AimModel, p: &IsingProblem, psi: &[f64], ws: &mut Workspace) -> Result<(f64, f64)> {
    let n = p.n();
    if psi.len() != n {
        return Err(CaimError::dim("model evaluation", n, psi.len()));
    }
    ws.resize(n);
    let h = p.bias();
    let k = match m.family {
        Family::Oim => {
            for i in 0..n {
                let (s, c) = psi[i].sin_cos();
                ws.a[i] = c;
                ws.b[i] = s;
            }
            p.mul_into(&ws.a, &mut ws.ja);
            p.mul_into(&ws.b, &mut ws.jb);
            let mut k = 0.0;
            for i in 0..n {
                let (c, s) = (ws.a[i], ws.b[i]);
                k += c * ws.ja[i] + s * ws.jb[i] + h[i] * c;
                ws.grad_k[i] = 2.0 * (c * ws.jb[i] - s * ws.ja[i]) - h[i] * s;
            }
            k
        }
        _ => {
            for i in 0..n {
                let (v, d) = m.sigma(psi[i]);
                ws.a[i] = v;
                ws.b[i] = d;
            }
            p.mul_into(&ws.a, &mut ws.ja);
            let mut k = 0.0;
            for i in 0..n {
                k += ws.a[i] * ws.ja[i] + h[i] * ws.a[i];
                ws.grad_k[i] = (2.0 * ws.ja[i] + h[i]) * ws.b[i];
            }
            k
        }
    };
    let mut r = 0.0;
    for i in 0..n {
        let (term, d) = m.binar_term(psi[i]);
        ws.r_terms[i] = term;
        ws.grad_r[i] = d;
        r += term;
    }
    Ok((k, r))
}

/// Representation energy `K(ψ)`.
pub fn repr_energy(m: &AimModel, p: &IsingProblem, psi: &[f64]) -> Result<f64> {
    let mut ws = Workspace::new(p.n());
    evaluate(m, p, psi, &mut ws).map(|(k, _)| k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarEnergy {
    pub total: f64,
    pub terms: Vec<f64>,
}

/// Binarization energy `R(ψ)` and its per-oscillator terms.
pub fn binar_energy(m: &AimModel, psi: &[f64]) -> BinarEnergy {
    let terms: Vec<f64> = psi.iter().map(|&x| m.binar_term(x).0).collect();
    BinarEnergy {
        total: terms.iter().sum(),
        terms,
    }
}

/// `(∇K, ∇R)`.
pub fn grad(m: &AimModel, p: &IsingProblem, psi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ws = Workspace::new(p.n());
    evaluate(m, p, psi, &mut ws)?;
    Ok((ws.grad_k, ws.grad_r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub k: f64,
    pub r: f64,
    /// `K + Σ μ_i R_i`.
    pub e: f64,
    pub mu_used: Vec<f64>,
}

/// Controlled energy with a per-oscillator weight vector.
pub fn energy_breakdown(m: &AimModel, p: &IsingProblem, psi: &[f64], mu: &[f64]) -> Result<EnergyBreakdown> {
    if mu.len() != p.n() {
        return Err(CaimError::dim("mu vector", p.n(), mu.len()));
    }
    let mut ws = Workspace::new(p.n());
    let (k, r) = evaluate(m, p, psi, &mut ws)?;
    let e = k + ws.r_terms.iter().zip(mu).map(|(t, w)| t * w).sum::<f64>();
    Ok(EnergyBreakdown {
        k,
        r,
        e,
        mu_used: mu.to_vec(),
    })
}

#[inline]
fn sign_spin(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

/// Decision map `F`.
pub fn decide(m: &AimModel, psi: &[f64]) -> SpinConfig {
    let spins = psi
        .iter()
        .map(|&x| match m.family {
            Family::Oim => sign_spin(x.cos()),
            _ => sign_spin(x),
        })
        .collect();
    SpinConfig::new(spins).expect("decide yields unit spins")
}

/// Canonical binarized state `ψ_s` for a spin configuration.
pub fn extremum_state(m: &AimModel, s: &SpinConfig) -> Vec<f64> {
    s.spins()
        .iter()
        .map(|&si| {
            let si = si as f64;
            match m.family {
                Family::Oim => {
                    if si > 0.0 {
                        0.0
                    } else {
                        PI
                    }
                }
                Family::Brim => si,
                Family::Rosc => si * m.rosc_rho,
                Family::Go => si * m.go_eps,
            }
        })
        .collect()
}

/// Upper bound on `|K(ψ_s) - H(s)|` for ROSC: every unit spin is replaced by
/// `tanh(a ρ)` in the coupling sum and the bias sum.
pub fn rosc_binarization_residual(m: &AimModel, p: &IsingProblem) -> f64 {
    let u = (m.rosc_slope * m.rosc_rho).tanh();
    let j_abs: f64 = p.couplings().iter().map(|x| x.abs()).sum();
    (1.0 - u * u) * j_abs + (1.0 - u) * p.bias_l1()
}
