//! Ising problems: representation, benchmark generation, exact small-n
//! enumeration and bias-node augmentation.
//!
//! Sums over couplings run over all ordered pairs, so for symmetric `J`
//! every unordered pair contributes `2 * J_ij * s_i * s_j`:
//!
//! ```text
//! H(s) = sum_i sum_j J_ij s_i s_j + sum_i h_i s_i = s^T J s + h^T s
//! ```

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CaimError, Result};
use crate::rng::rng_from_seed;

/// Largest `n` accepted by [`brute_force_ground`].
pub const BRUTE_FORCE_CAP: usize = 24;

/// Dense symmetric Ising instance with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingProblem {
    n: usize,
    /// Row-major `n * n`.
    j: Vec<f64>,
    h: Vec<f64>,
}

impl IsingProblem {
    /// Builds a problem from a row-major coupling matrix, checking symmetry,
    /// the zero diagonal and finiteness.
    pub fn new(n: usize, j: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(CaimError::Contract("problem needs at least one spin".into()));
        }
        if j.len() != n * n {
            return Err(CaimError::dim("coupling matrix", n * n, j.len()));
        }
        if h.len() != n {
            return Err(CaimError::dim("bias vector", n, h.len()));
        }
        let p = IsingProblem { n, j, h };
        p.validate()?;
        Ok(p)
    }

    pub fn from_rows(rows: &[Vec<f64>], h: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        let mut j = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(CaimError::Validation(format!(
                    "J row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            j.extend_from_slice(row);
        }
        Self::new(n, j, h)
    }

    /// Zero-bias problem from a list of `(i, j, J_ij)` with `i != j`.
    pub fn from_couplings(n: usize, couplings: &[(usize, usize, f64)]) -> Result<Self> {
        let mut j = vec![0.0; n * n];
        for &(a, b, w) in couplings {
            if a >= n || b >= n || a == b {
                return Err(CaimError::Contract(format!("bad coupling index ({a}, {b})")));
            }
            j[a * n + b] = w;
            j[b * n + a] = w;
        }
        Self::new(n, j, vec![0.0; n])
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if !self.h[i].is_finite() {
                return Err(CaimError::Validation(format!("h[{i}] is not finite")));
            }
            for k in 0..n {
                let v = self.j[i * n + k];
                if !v.is_finite() {
                    return Err(CaimError::Validation(format!("J[{i}][{k}] is not finite")));
                }
            }
            if self.j[i * n + i] != 0.0 {
                return Err(CaimError::Validation(format!(
                    "J[{i}][{i}] = {} but the diagonal must be zero",
                    self.j[i * n + i]
                )));
            }
            for k in (i + 1)..n {
                if self.j[i * n + k] != self.j[k * n + i] {
                    return Err(CaimError::Validation(format!(
                        "J is not symmetric: J[{i}][{k}] = {} but J[{k}][{i}] = {}",
                        self.j[i * n + k],
                        self.j[k * n + i]
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn coupling(&self, i: usize, k: usize) -> f64 {
        self.j[i * self.n + k]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.j[i * self.n..(i + 1) * self.n]
    }

    pub fn couplings(&self) -> &[f64] {
        &self.j
    }

    pub fn bias(&self) -> &[f64] {
        &self.h
    }

    pub fn has_bias(&self) -> bool {
        self.h.iter().any(|&x| x != 0.0)
    }

    /// Largest absolute coupling entry.
    pub fn max_abs_coupling(&self) -> f64 {
        self.j.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// Largest absolute row sum (induced infinity norm).
    pub fn max_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.j.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn bias_l1(&self) -> f64 {
        self.h.iter().map(|x| x.abs()).sum()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// `y = J x`.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self
                .row(i)
                .iter()
                .zip(x)
                .fold(0.0, |acc, (a, b)| acc + a * b);
        }
    }
}

/// Spin configuration with entries exactly `+1` or `-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(i) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(CaimError::Contract(format!(
                "spin {i} is {} but spins must be +1 or -1",
                spins[i]
            )));
        }
        Ok(SpinConfig(spins))
    }

    /// Configuration whose bit `i` of `index` set means `s_i = -1`.
    pub fn from_index(n: usize, index: u64) -> Self {
        SpinConfig((0..n).map(|i| if index >> i & 1 == 1 { -1 } else { 1 }).collect())
    }

    pub fn index(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &s)| if s < 0 { acc | 1 << i } else { acc })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&s| s as f64).collect()
    }

    pub fn flipped(&self) -> Self {
        SpinConfig(self.0.iter().map(|s| -s).collect())
    }
}

impl TryFrom<Vec<i8>> for SpinConfig {
    type Error = CaimError;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        SpinConfig::new(v)
    }
}

impl From<SpinConfig> for Vec<i8> {
    fn from(s: SpinConfig) -> Self {
        s.0
    }
}

/// `H(s) = s^T J s + h^T s`.
pub fn hamiltonian(p: &IsingProblem, s: &SpinConfig) -> Result<f64> {
    if s.len() != p.n() {
        return Err(CaimError::dim("hamiltonian", p.n(), s.len()));
    }
    Ok(hamiltonian_unchecked(p, s.spins()))
}

pub(crate) fn hamiltonian_unchecked(p: &IsingProblem, s: &[i8]) -> f64 {
    let n = p.n();
    let mut total = 0.0;
    for i in 0..n {
        let row = p.row(i);
        let mut field = 0.0;
        for k in 0..n {
            field += row[k] * s[k] as f64;
        }
        total += s[i] as f64 * field + p.bias()[i] * s[i] as f64;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinModelOptions {
    /// Draw from `{0, ±0.1, ..., ±1.0}` (true) or `{±0.1, ..., ±1.0}` (false).
    pub include_zero: bool,
}

impl Default for SpinModelOptions {
    fn default() -> Self {
        SpinModelOptions { include_zero: true }
    }
}

fn draw_grid_value<R: Rng>(rng: &mut R, include_zero: bool) -> f64 {
    if include_zero {
        rng.random_range(-10i32..=10) as f64 / 10.0
    } else {
        let k = rng.random_range(1i32..=10) as f64 / 10.0;
        if rng.random_bool(0.5) {
            k
        } else {
            -k
        }
    }
}

/// SpinModel benchmark: fully connected couplings `J_ij` (i < j) and biases
/// drawn uniformly from the 0.1-spaced grid on `[-1, 1]`.
pub fn generate_spinmodel(n: usize, seed: u64) -> Result<IsingProblem> {
    generate_spinmodel_with(n, seed, SpinModelOptions::default())
}

pub fn generate_spinmodel_with(n: usize, seed: u64, opts: SpinModelOptions) -> Result<IsingProblem> {
    if n == 0 {
        return Err(CaimError::Contract("SpinModel needs n >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut j = vec![0.0; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let w = draw_grid_value(&mut rng, opts.include_zero);
            j[a * n + b] = w;
            j[b * n + a] = w;
        }
    }
    let h = (0..n).map(|_| draw_grid_value(&mut rng, opts.include_zero)).collect();
    IsingProblem::new(n, j, h)
}

/// Distinct Hamiltonian values in ascending order with their multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLevels {
    pub levels: Vec<f64>,
    pub degeneracy: Vec<u64>,
}

impl EnergyLevels {
    /// `H_1 - H_0`, or `None` when every configuration is degenerate.
    pub fn gap(&self) -> Option<f64> {
        (self.levels.len() > 1).then(|| self.levels[1] - self.levels[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundReport {
    pub h0: f64,
    pub ground: Vec<SpinConfig>,
    pub levels: EnergyLevels,
}

impl GroundReport {
    pub fn is_ground(&self, s: &SpinConfig) -> bool {
        self.ground.binary_search(s).is_ok()
    }
}

/// Two energies are the same level when they agree to this tolerance
/// (scaled by magnitude above 1).
pub fn level_tolerance(e: f64) -> f64 {
    1e-9 * e.abs().max(1.0)
}

const LOW_BITS: usize = 16;

/// Exhaustive enumeration of all `2^n` configurations.
///
/// Chunks of the configuration space are walked in Gray-code order with
/// incremental local fields; each chunk restarts from freshly computed
/// fields so rounding does not accumulate across chunks. Ground-state
/// energies are recomputed exactly from the minimizers.
pub fn brute_force_ground(p: &IsingProblem) -> Result<GroundReport> {
    let n = p.n();
    if n > BRUTE_FORCE_CAP {
        return Err(CaimError::ResourceCap {
            what: "brute-force ground-state enumeration",
            cap: BRUTE_FORCE_CAP,
            n,
        });
    }
    let low = n.min(LOW_BITS);
    let high = n - low;
    let chunks: Vec<(Vec<f64>, Vec<u64>)> = (0..1u64 << high)
        .into_par_iter()
        .map(|prefix| enumerate_chunk(p, low, prefix))
        .collect();

    let mut energies = Vec::with_capacity(1usize << n);
    let mut candidates = Vec::new();
    let mut best = f64::INFINITY;
    for (chunk_e, chunk_min) in &chunks {
        energies.extend_from_slice(chunk_e);
        for &idx in chunk_min {
            let e = hamiltonian_unchecked(p, SpinConfig::from_index(n, idx).spins());
            best = best.min(e);
            candidates.push((idx, e));
        }
    }
    let tol = level_tolerance(best);
    let mut ground: Vec<SpinConfig> = candidates
        .iter()
        .filter(|(_, e)| *e <= best + tol)
        .map(|&(idx, _)| SpinConfig::from_index(n, idx))
        .collect();
    ground.sort();
    ground.dedup();

    energies.par_sort_unstable_by(|a, b| a.total_cmp(b));
    let mut levels = Vec::new();
    let mut degeneracy: Vec<u64> = Vec::new();
    let mut anchor = f64::NAN;
    for &e in &energies {
        if levels.is_empty() || e - anchor > level_tolerance(anchor) {
            anchor = e;
            levels.push(e);
            degeneracy.push(1);
        } else {
            *degeneracy.last_mut().unwrap() += 1;
        }
    }
    levels[0] = best;
    Ok(GroundReport {
        h0: best,
        ground,
        levels: EnergyLevels { levels, degeneracy },
    })
}

/// Returns all energies of the chunk plus the indices within tolerance of its minimum.
fn enumerate_chunk(p: &IsingProblem, low: usize, prefix: u64) -> (Vec<f64>, Vec<u64>) {
    let n = p.n();
    let h = p.bias();
    let base = prefix << low;
    let mut s: Vec<f64> = (0..n)
        .map(|i| if base >> i & 1 == 1 { -1.0 } else { 1.0 })
        .collect();
    let mut field = vec![0.0; n];
    p.mul_into(&s, &mut field);
    let mut e: f64 = (0..n).map(|i| s[i] * field[i] + h[i] * s[i]).sum();

    let count = 1usize << low;
    let mut energies = Vec::with_capacity(count);
    let mut min_idx = vec![base];
    let mut min_e = e;
    energies.push(e);
    for g in 1..count as u64 {
        let k = g.trailing_zeros() as usize;
        let sk = s[k];
        e -= 2.0 * sk * (2.0 * field[k] + h[k]);
        let row = p.row(k);
        for (f, &jk) in field.iter_mut().zip(row) {
            *f -= 2.0 * sk * jk;
        }
        s[k] = -sk;
        energies.push(e);
        let idx = base | (g ^ (g >> 1));
        if e < min_e - level_tolerance(min_e) {
            min_e = e;
            min_idx.clear();
            min_idx.push(idx);
        } else if e <= min_e + level_tolerance(min_e) {
            min_e = min_e.min(e);
            min_idx.push(idx);
        }
    }
    (energies, min_idx)
}

/// Moves the bias onto an extra reference spin 0 with couplings `h_i / 2`,
/// so that `H'(+1, s) = H(s)` under the ordered-pair sum and `h' = 0`.
pub fn augment_bias(p: &IsingProblem) -> IsingProblem {
    let n = p.n();
    let m = n + 1;
    let mut j = vec![0.0; m * m];
    for i in 0..n {
        let half = p.bias()[i] / 2.0;
        j[i + 1] = half;
        j[(i + 1) * m] = half;
        for k in 0..n {
            j[(i + 1) * m + k + 1] = p.coupling(i, k);
        }
    }
    IsingProblem {
        n: m,
        j,
        h: vec![0.0; m],
    }
}

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    n: usize,
    #[serde(rename = "J")]
    j: Vec<Vec<f64>>,
    h: Vec<f64>,
}

/// Writes `{"n", "J", "h"}` JSON with shortest round-trip decimal floats.
pub fn store_problem(p: &IsingProblem, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = ProblemFile {
        n: p.n(),
        j: p.rows(),
        h: p.bias().to_vec(),
    };
    let text = serde_json::to_string_pretty(&file).expect("problem serializes");
    fs::write(path, text).map_err(|e| CaimError::io(path, e))
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<IsingProblem> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CaimError::io(path, e))?;
    parse_problem(&text).map_err(|e| match e {
        CaimError::Parse { message, .. } => CaimError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_problem(text: &str) -> Result<IsingProblem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| CaimError::Parse {
        path: "<input>".into(),
        message: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    if file.j.len() != file.n {
        return Err(CaimError::Validation(format!(
            "field \"J\" has {} rows but n = {}",
            file.j.len(),
            file.n
        )));
    }
    if file.h.len() != file.n {
        return Err(CaimError::Validation(format!(
            "field \"h\" has {} entries but n = {}",
            file.h.len(),
            file.n
        )));
    }
    IsingProblem::from_rows(&file.j, file.h)
}
