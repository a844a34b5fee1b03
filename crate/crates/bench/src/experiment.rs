use std::collections::BTreeMap;

use caim_core::controller::{run_controlled, ControllerConfig};
use caim_core::dynamics::{run_autonomous, sample_initial, IntegratorConfig};
use caim_core::ising::{
    augment_bias, brute_force_ground, generate_spinmodel_with, hamiltonian, load_problem, IsingProblem,
    SpinModelOptions,
};
use caim_core::metrics::{aggregate, equivalence_check_grid, is_hit, RunMetrics};
use caim_core::models::{decide, AimModel};
use caim_core::rng::{mix_seed, tag};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ProblemSource, Scenario};
use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Machine {
    Aim,
    Caim,
}

impl Machine {
    pub fn name(self) -> &'static str {
        match self {
            Machine::Aim => "aim",
            Machine::Caim => "caim",
        }
    }
}

/// f64 fields that may legitimately be infinite are written as strings in JSON.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&caim_core::text::sig12(*x))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "NaN" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub point: usize,
    pub sweep_value: f64,
    pub machine: Machine,
    pub instance: usize,
    pub restart: usize,
    pub instance_seed: u64,
    pub init_seed: u64,
    pub noise_seed: u64,
    pub best_h: f64,
    pub h0: Option<f64>,
    pub hit: Option<bool>,
    pub r: f64,
    #[serde(rename = "pHat")]
    pub p_hat: f64,
    #[serde(rename = "tRun")]
    pub t_run: f64,
    #[serde(with = "lenient_f64")]
    pub tts: f64,
    pub converged: bool,
    pub end_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub sweep_value: f64,
    pub machine: Machine,
    pub instances: usize,
    pub restarts: usize,
    pub runs: usize,
    pub mean_r: f64,
    pub max_r: f64,
    pub min_best_h: f64,
    pub exact_success: Option<f64>,
    /// Fraction of instances where at least one restart reached the ground energy.
    pub best_of_success: Option<f64>,
    pub hits: Option<usize>,
    #[serde(rename = "pHat_mean")]
    pub p_hat_mean: f64,
    #[serde(rename = "tRun_mean")]
    pub t_run_mean: f64,
    #[serde(with = "lenient_f64")]
    pub tts_median: f64,
    pub converged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub instance: usize,
    pub instance_seed: u64,
    pub n: usize,
    pub gap: f64,
    pub mu: f64,
    pub min_energy_ground: f64,
    pub min_energy_excited: f64,
    pub equivalent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub t: f64,
    pub e: f64,
    pub k: f64,
    pub r: f64,
    pub h_decision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuStep {
    pub k: usize,
    pub t_start: f64,
    pub mu: Vec<f64>,
}

/// Time series of one recorded run (instance 0, restart 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeries {
    pub machine: Machine,
    pub n: usize,
    pub end_time: f64,
    pub energy: Vec<EnergyPoint>,
    pub mu_trace: Option<Vec<MuStep>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub software_version: String,
    /// SHA-256 of the effective config (output directory cleared) as compact JSON.
    pub config_hash: String,
    pub master_seed: u64,
    pub instance_seeds: Vec<u64>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub provenance: Provenance,
    pub runs: Vec<RunRow>,
    pub points: Vec<PointSummary>,
    #[serde(default)]
    pub equivalence: Vec<EquivalenceRow>,
    #[serde(default)]
    pub series: Vec<RunSeries>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn instance_seed(problem_seed: u64, instance: usize) -> u64 {
    mix_seed(&[problem_seed, tag("instance"), instance as u64])
}

/// Initial-state seed. The machine is deliberately not part of it, so paired
/// machines start from the same state.
pub fn init_seed(master: u64, instance: usize, restart: usize) -> u64 {
    mix_seed(&[master, tag("init"), instance as u64, restart as u64])
}

pub fn noise_seed(master: u64, instance: usize, restart: usize) -> u64 {
    mix_seed(&[master, tag("noise"), instance as u64, restart as u64])
}

struct Instance {
    seed: u64,
    problem: IsingProblem,
    h0: Option<f64>,
}

fn load_instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    let raw: Vec<(u64, IsingProblem)> = match &cfg.problem {
        ProblemSource::Generate {
            n,
            instances,
            seed,
            include_zero,
        } => (0..*instances)
            .map(|i| {
                let s = instance_seed(*seed, i);
                let opts = SpinModelOptions {
                    include_zero: *include_zero,
                };
                Ok((s, generate_spinmodel_with(*n, s, opts)?))
            })
            .collect::<Result<_>>()?,
        ProblemSource::File { paths } => paths
            .iter()
            .map(|p| Ok((0, load_problem(p)?)))
            .collect::<Result<_>>()?,
    };
    raw.into_iter()
        .map(|(seed, p)| {
            let problem = if cfg.augment_bias { augment_bias(&p) } else { p };
            let h0 = if problem.n() <= cfg.oracle_max_n {
                Some(brute_force_ground(&problem)?.h0)
            } else {
                None
            };
            Ok(Instance { seed, problem, h0 })
        })
        .collect()
}

/// One fully resolved machine setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct MachineSpec {
    machine: Machine,
    mu: f64,
    ctrl: Option<ControllerConfig>,
    int: IntegratorConfig,
}

struct Point {
    sweep_value: f64,
    spec: usize,
    restarts: usize,
}

struct Plan {
    specs: Vec<MachineSpec>,
    points: Vec<Point>,
    restarts: usize,
}

fn plan(cfg: &ExperimentConfig) -> Plan {
    let mut specs: Vec<MachineSpec> = Vec::new();
    let mut points = Vec::new();
    let mut add = |specs: &mut Vec<MachineSpec>, sweep_value: f64, spec: MachineSpec, restarts: usize| {
        let idx = match specs.iter().position(|s| *s == spec) {
            Some(i) => i,
            None => {
                specs.push(spec);
                specs.len() - 1
            }
        };
        points.push(Point {
            sweep_value,
            spec: idx,
            restarts,
        });
    };
    let aim = |mu: f64, int: &IntegratorConfig| MachineSpec {
        machine: Machine::Aim,
        mu,
        ctrl: None,
        int: int.clone(),
    };
    let caim = |ctrl: &ControllerConfig, int: &IntegratorConfig| MachineSpec {
        machine: Machine::Caim,
        mu: ctrl.mu_prime,
        ctrl: Some(ctrl.clone()),
        int: int.clone(),
    };
    let int = &cfg.integrator;
    let ctrl = cfg.controller.as_ref();
    let base_mu = ctrl.map_or(cfg.mu, |c| c.mu_prime);
    let mut restarts = cfg.restarts;
    match cfg.scenario {
        Scenario::Compare | Scenario::SingleRun => {
            add(&mut specs, base_mu, aim(base_mu, int), cfg.restarts);
            if let Some(c) = ctrl {
                add(&mut specs, base_mu, caim(c, int), cfg.restarts);
            }
        }
        Scenario::MuSweep => {
            for &v in &cfg.sweep {
                add(&mut specs, v, aim(v, int), cfg.restarts);
                if let Some(c) = ctrl {
                    let c = ControllerConfig { mu_prime: v, ..c.clone() };
                    add(&mut specs, v, caim(&c, int), cfg.restarts);
                }
            }
        }
        Scenario::TauSweep => {
            let c = ctrl.expect("validated");
            for &v in &cfg.sweep {
                add(&mut specs, v, aim(base_mu, int), cfg.restarts);
                let c = ControllerConfig { tau: v, ..c.clone() };
                add(&mut specs, v, caim(&c, int), cfg.restarts);
            }
        }
        Scenario::NoiseSweep => {
            for &v in &cfg.sweep {
                let int = IntegratorConfig {
                    noise_gamma: v,
                    ..int.clone()
                };
                add(&mut specs, v, aim(base_mu, &int), cfg.restarts);
                if let Some(c) = ctrl {
                    add(&mut specs, v, caim(c, &int), cfg.restarts);
                }
            }
        }
        Scenario::RestartSweep => {
            restarts = cfg.sweep.iter().map(|&v| v as usize).max().unwrap_or(1);
            for &v in &cfg.sweep {
                add(&mut specs, v, aim(base_mu, int), v as usize);
                if let Some(c) = ctrl {
                    add(&mut specs, v, caim(c, int), v as usize);
                }
            }
        }
        Scenario::TheoryCheck => {}
    }
    Plan {
        specs,
        points,
        restarts,
    }
}

struct Cell {
    metrics: RunMetrics,
    end_time: f64,
    series: Option<RunSeries>,
}

fn run_cell(
    model: &AimModel,
    inst: &Instance,
    spec: &MachineSpec,
    seeds: (u64, u64),
    opts: &caim_core::metrics::MetricOptions,
    record: bool,
) -> Result<Cell> {
    let p = &inst.problem;
    let psi0 = sample_initial(model, p.n(), seeds.0);
    let int = IntegratorConfig {
        seed: seeds.1,
        record_psi: false,
        ..spec.int.clone()
    };
    let (traj, final_state, mu_trace) = match &spec.ctrl {
        None => {
            let (traj, fin) = run_autonomous(model, p, &psi0, spec.mu, &int)?;
            (traj, fin, None)
        }
        Some(c) => {
            let run = run_controlled(model, p, &psi0, c, &int)?;
            (run.trajectory, run.final_state, Some(run.mu_trace))
        }
    };
    let best_h = hamiltonian(p, &decide(model, &final_state))?;
    // The readout time: the detection time when the stop rule fired, otherwise the horizon.
    let metrics = RunMetrics::new(p, best_h, traj.end_time, traj.converged_at.is_some(), opts)?;
    let series = record.then(|| RunSeries {
        machine: spec.machine,
        n: p.n(),
        end_time: traj.end_time,
        energy: traj
            .samples
            .iter()
            .map(|s| EnergyPoint {
                t: s.t,
                e: s.e,
                k: s.k,
                r: s.r,
                h_decision: s.h_decision,
            })
            .collect(),
        mu_trace: mu_trace.map(|tr| {
            tr.entries
                .into_iter()
                .map(|e| MuStep {
                    k: e.k,
                    t_start: e.t_start,
                    mu: e.mu,
                })
                .collect()
        }),
    });
    Ok(Cell {
        metrics,
        end_time: traj.end_time,
        series,
    })
}

fn run_theory(cfg: &ExperimentConfig) -> Result<(Vec<u64>, Vec<EquivalenceRow>)> {
    let ProblemSource::Generate {
        n,
        instances,
        seed,
        include_zero,
    } = &cfg.problem
    else {
        return Err(BenchError::Config("problem: theory_check generates its own instances".into()));
    };
    let opts = SpinModelOptions {
        include_zero: *include_zero,
    };
    let mut chosen = Vec::new();
    for draw in 0..cfg.theory.max_draws {
        if chosen.len() == *instances {
            break;
        }
        let s = instance_seed(*seed, draw);
        let p = generate_spinmodel_with(*n, s, opts)?;
        let p = if cfg.augment_bias { augment_bias(&p) } else { p };
        let report = brute_force_ground(&p)?;
        let Some(gap) = report.levels.gap() else { continue };
        if gap < cfg.theory.min_gap - 1e-9 {
            continue;
        }
        if cfg.theory.require_unique_ground && report.ground.len() != 1 {
            continue;
        }
        chosen.push((s, p, gap));
    }
    if chosen.len() < *instances {
        return Err(BenchError::Config(format!(
            "theory: only {} of {} admissible instances within {} draws",
            chosen.len(),
            instances,
            cfg.theory.max_draws
        )));
    }
    let mut rows = Vec::new();
    for (i, (s, p, gap)) in chosen.iter().enumerate() {
        for &mu in &cfg.sweep {
            let rep = equivalence_check_grid(&cfg.model, p, mu, cfg.theory.grid_res, None)?;
            rows.push(EquivalenceRow {
                instance: i,
                instance_seed: *s,
                n: p.n(),
                gap: *gap,
                mu,
                min_energy_ground: rep.min_energy_ground,
                min_energy_excited: rep.min_energy_excited,
                equivalent: rep.equivalent,
            });
        }
    }
    Ok((chosen.iter().map(|c| c.0).collect(), rows))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultBundle> {
    cfg.validate()?;
    // Where results are written is not part of the experiment.
    let recorded = ExperimentConfig {
        output_dir: None,
        ..cfg.clone()
    };
    let hash = config_hash(&recorded);
    info!("running {} (config {})", cfg.scenario.name(), &hash[..12]);
    let provenance = |instance_seeds| Provenance {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash.clone(),
        master_seed: cfg.master_seed,
        instance_seeds,
        config: recorded.clone(),
    };
    if cfg.scenario == Scenario::TheoryCheck {
        let (seeds, equivalence) = run_theory(cfg)?;
        return Ok(ResultBundle {
            provenance: provenance(seeds),
            runs: Vec::new(),
            points: Vec::new(),
            equivalence,
            series: Vec::new(),
        });
    }

    let instances = load_instances(cfg)?;
    let plan = plan(cfg);
    let (restarts, record_all) = match cfg.scenario {
        Scenario::SingleRun => (1, true),
        _ => (plan.restarts, false),
    };
    let n_inst = if cfg.scenario == Scenario::SingleRun { 1 } else { instances.len() };
    let jobs: Vec<(usize, usize, usize)> = (0..plan.specs.len())
        .flat_map(|s| (0..n_inst).flat_map(move |i| (0..restarts).map(move |r| (s, i, r))))
        .collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(s, i, r)| {
            let seeds = (init_seed(cfg.master_seed, i, r), noise_seed(cfg.master_seed, i, r));
            let record = record_all && i == 0 && r == 0;
            run_cell(&cfg.model, &instances[i], &plan.specs[s], seeds, &cfg.metrics, record)
        })
        .collect::<Result<_>>()?;
    let cell = |s: usize, i: usize, r: usize| &cells[(s * n_inst + i) * restarts + r];

    let mut runs = Vec::new();
    let mut points = Vec::new();
    for (pi, pt) in plan.points.iter().enumerate() {
        let spec = &plan.specs[pt.spec];
        let used = pt.restarts.min(restarts);
        let mut metrics = Vec::new();
        let mut any_hit: BTreeMap<usize, bool> = BTreeMap::new();
        let mut hit_count = 0;
        for (i, inst) in instances.iter().enumerate().take(n_inst) {
            for r in 0..used {
                let c = cell(pt.spec, i, r);
                let hit = inst.h0.map(|h0| is_hit(c.metrics.best_h, h0));
                if let Some(h) = hit {
                    *any_hit.entry(i).or_default() |= h;
                    hit_count += usize::from(h);
                }
                metrics.push(c.metrics);
                runs.push(RunRow {
                    point: pi,
                    sweep_value: pt.sweep_value,
                    machine: spec.machine,
                    instance: i,
                    restart: r,
                    instance_seed: inst.seed,
                    init_seed: init_seed(cfg.master_seed, i, r),
                    noise_seed: noise_seed(cfg.master_seed, i, r),
                    best_h: c.metrics.best_h,
                    h0: inst.h0,
                    hit,
                    r: c.metrics.r,
                    p_hat: c.metrics.p_hat,
                    t_run: c.metrics.t_run,
                    tts: c.metrics.tts,
                    converged: c.metrics.converged,
                    end_time: c.end_time,
                });
            }
        }
        let oracle_complete = instances.iter().take(n_inst).all(|inst| inst.h0.is_some());
        let summary = aggregate(&metrics, None)?;
        let hits = oracle_complete.then_some(hit_count);
        points.push(PointSummary {
            point: pi,
            sweep_value: pt.sweep_value,
            machine: spec.machine,
            instances: n_inst,
            restarts: used,
            runs: summary.runs,
            mean_r: summary.mean_r,
            max_r: summary.max_r,
            min_best_h: summary.min_best_h,
            exact_success: hits.map(|h| h as f64 / metrics.len() as f64),
            best_of_success: oracle_complete
                .then(|| any_hit.values().filter(|&&h| h).count() as f64 / n_inst as f64),
            hits,
            p_hat_mean: summary.p_hat_mean,
            t_run_mean: summary.t_run_mean,
            tts_median: summary.tts_median,
            converged_fraction: summary.converged_fraction,
        });
    }
    let series = if record_all {
        plan.points
            .iter()
            .filter_map(|pt| cell(pt.spec, 0, 0).series.clone())
            .collect()
    } else {
        Vec::new()
    };
    Ok(ResultBundle {
        provenance: provenance(instances.iter().map(|i| i.seed).collect()),
        runs,
        points,
        equivalence: Vec::new(),
        series,
    })
}
