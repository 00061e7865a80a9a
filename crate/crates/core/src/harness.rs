//! Experiment orchestration: theoretical schedules, convergence-rate
//! studies, slope fitting and the self-test suite.
//!
//! A rate study runs a grid of `(n, seed)` cells. Each cell generates a
//! dataset, sizes the network from the theoretical schedule at
//! `ε_n = n^{−α/(α+d0−1)}`, trains a restart pool, applies the localization
//! check at `β₀ = ε_n/β`, evaluates all risks of the selected net and
//! persists one CSV row. Cells execute in a work pool; every random draw
//! comes from a seed derived per cell, so reruns of the same configuration
//! are byte-identical.

pub mod selftest;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::contrastive::ContrastiveTarget;
use crate::erm::{train_pool, LocalizationSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::evaluation::{excess_misclassification, l2_risk, MisclassificationReport};
use crate::pairgen::{generate, GeneratorConfig};
use crate::par;
use crate::partition::{BaseDensity, SmoothPartition};
use crate::rng::derive_seed;

/// `ε_n = n^{−α/(α+d0−1)}`; the admissibility precondition is `ε_n < 1/2`.
pub fn theoretical_epsilon(n: usize, alpha: f64, d0: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::invalid(format!("n = {n} must be at least 3")));
    }
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    if d0 < 2 {
        return Err(Error::invalid("d0 must be at least 2"));
    }
    let eps = (n as f64).powf(-alpha / (alpha + d0 as f64 - 1.0));
    if eps >= 0.5 {
        return Err(Error::invalid(format!(
            "precondition violated: ε_n = {eps} ≥ 1/2 for n = {n}"
        )));
    }
    Ok(eps)
}

/// Multipliers in front of the theoretical size laws; the theory pins only
/// the growth rates, so the constants are configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConstants {
    pub c_l: f64,
    pub c_s: f64,
    pub c_m: f64,
    /// Optional fixed hidden width overriding the budget-derived one.
    pub width: Option<usize>,
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        ScheduleConstants {
            c_l: 1.0,
            c_s: 1.0,
            c_m: 1.0,
            width: None,
        }
    }
}

/// Concrete network sizes for one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkSchedule {
    /// Number of affine layers `L = ⌈c_L·(log₂ ε⁻¹ + 1)⌉` (at least 2).
    pub layers: usize,
    /// Hidden width: smallest `w` giving a dense net at least `s_budget`
    /// parameters, unless overridden.
    pub width: usize,
    /// Logit clamp `M = max(1, c_M·|ln(4·d1⁻²·ε)|)` (uniform density).
    pub logit_clamp: f64,
    /// Sparsity budget `S = ⌈c_S·ε^{−(d0−1)/α}·max(1, log₂ ε⁻¹)⌉`;
    /// reported, not enforced.
    pub s_budget: usize,
    /// `[d0, w, …, w, d1]` with `layers − 1` hidden entries.
    pub layer_dims: Vec<usize>,
}

fn dense_param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Sizes the network class for accuracy `eps` per the theoretical scalings.
pub fn network_size_schedule(
    eps: f64,
    alpha: f64,
    d0: usize,
    d1: usize,
    constants: &ScheduleConstants,
) -> Result<NetworkSchedule> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!(
            "precondition violated: eps = {eps} outside (0, 1/2)"
        )));
    }
    if !(alpha > 0.0) || d0 == 0 || d1 < 2 {
        return Err(Error::invalid("need alpha > 0, d0 ≥ 1, d1 ≥ 2"));
    }
    let log2_inv = (1.0 / eps).log2();
    let layers = ((constants.c_l * (log2_inv + 1.0)).ceil() as usize).max(2);
    let s_budget = (constants.c_s * eps.powf(-(d0 as f64 - 1.0) / alpha) * log2_inv.max(1.0))
        .ceil() as usize;
    let logit_clamp = (constants.c_m * (4.0 * eps / (d1 * d1) as f64).ln().abs()).max(1.0);

    let width = match constants.width {
        Some(w) if w >= 1 => w,
        _ => {
            let mut w = 1usize;
            loop {
                let mut dims = vec![d0];
                dims.extend(std::iter::repeat(w).take(layers - 1));
                dims.push(d1);
                if dense_param_count(&dims) >= s_budget || w >= 4096 {
                    break w;
                }
                w += 1;
            }
        }
    };
    let mut layer_dims = vec![d0];
    layer_dims.extend(std::iter::repeat(width).take(layers - 1));
    layer_dims.push(d1);

    Ok(NetworkSchedule {
        layers,
        width,
        logit_clamp,
        s_budget,
        layer_dims,
    })
}

/// Ordinary least squares on `(ln n, ln risk)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub std_error: f64,
    /// `slope ± 1.96·SE`.
    pub ci95: (f64, f64),
    /// Points used after filtering nonpositive risks.
    pub used: usize,
    pub filtered: usize,
}

/// Fits `ln risk = intercept + slope·ln n`. Nonpositive risks are filtered
/// (they have no logarithm); fewer than 3 usable points is an error.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, r)| *n > 0.0 && *r > 0.0)
        .map(|(n, r)| (n.ln(), r.ln()))
        .collect();
    let filtered = points.len() - usable.len();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "log-log fit needs ≥ 3 positive points, have {} ({filtered} filtered)",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mean_x = usable.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = usable.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = usable
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "all sample sizes coincide; slope is undefined".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = usable
        .iter()
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let std_error = if usable.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        std_error,
        ci95: (slope - 1.96 * std_error, slope + 1.96 * std_error),
        used: usable.len(),
        filtered,
    })
}

/// Optimizer settings of a study (shared across cells).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// Weight bound `J`; fixed across `n` (the theory leaves its exponent
    /// unspecified, and a generous constant never binds at desk scale).
    pub max_weight: f64,
    pub restarts: usize,
}

/// Node and sample counts for the evaluation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Quadrature nodes for L² and misclassification risks.
    pub l2_nodes: usize,
    /// Monte-Carlo pairs for the excess hinge risk.
    pub hinge_mc: usize,
    /// Monte-Carlo points for the localization membership check.
    pub eval_points: usize,
    /// Monte-Carlo points for estimating part probabilities.
    pub part_prob_mc: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            l2_nodes: 65_536,
            hinge_mc: 20_000,
            eval_points: 20_000,
            part_prob_mc: 200_000,
        }
    }
}

/// Full configuration of a rate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Path of the partition JSON document.
    pub partition_file: PathBuf,
    pub alpha: f64,
    pub d0: usize,
    pub d1: usize,
    /// Strictly increasing sample sizes.
    pub n_grid: Vec<usize>,
    /// Seeds per cell (seed indices `0..seeds`).
    pub seeds: u64,
    /// Similarity probability of the generator.
    pub c: f64,
    /// Localization radius; `β₀ = ε_n/β` per cell.
    pub beta: f64,
    #[serde(default)]
    pub schedule: ScheduleConstants,
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    /// Master seed; all per-cell seeds derive from it.
    pub seed: u64,
    /// Where to write `results.csv` and `summary.json`; nothing is written
    /// when absent.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Record wall-clock times in the CSV. Disable to make the whole
    /// artifact byte-reproducible (timing is the one nondeterministic
    /// column).
    #[serde(default = "default_true")]
    pub measure_wall_time: bool,
    /// Evaluate the oracle `f*` instead of training (smoke/reference mode:
    /// every risk is exactly zero).
    #[serde(default)]
    pub oracle_rows: bool,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::invalid("n_grid must be nonempty"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("n_grid must be strictly increasing"));
        }
        for &n in &self.n_grid {
            theoretical_epsilon(n, self.alpha, self.d0)?;
        }
        if self.seeds == 0 {
            return Err(Error::invalid("need at least one seed per cell"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::invalid("beta must be positive"));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

/// One `(n, seed)` cell of a study.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub n: usize,
    pub seed_index: u64,
    pub total_l2: f64,
    pub excess_hinge: f64,
    pub excess_hinge_se: f64,
    pub excess_misclass: f64,
    pub excess_misclass_se: f64,
    /// Whether the selected (global) net passed the localization check.
    pub local_member: bool,
    /// When the global net is a member: whether the local ERM selected the
    /// identical net from the same pool.
    pub local_matches_global: Option<bool>,
    pub layers: usize,
    pub width: usize,
    pub logit_clamp: f64,
    pub wall_ms: u64,
    /// Failure message when the cell did not complete; metric fields hold
    /// NaN in that case.
    pub error: Option<String>,
}

/// Study output: all cells, per-`n` medians of the L² risk and the fitted
/// slope.
#[derive(Debug, Clone, Serialize)]
pub struct RateStudyResult {
    pub cells: Vec<CellResult>,
    pub medians: Vec<(usize, f64)>,
    pub slope: Option<SlopeFit>,
}

impl RateStudyResult {
    /// CSV rendering with the documented column set, cells in `(n, seed)`
    /// order.
    pub fn to_csv_string(&self) -> String {
        let mut out =
            String::from("n,seed,total_l2,excess_hinge,excess_misclass,local_member,L,width,M,wall_ms\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.n,
                c.seed_index,
                c.total_l2,
                c.excess_hinge,
                c.excess_misclass,
                c.local_member,
                c.layers,
                c.width,
                c.logit_clamp,
                c.wall_ms
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "medians": self.medians,
            "slope": self.slope,
        }))
        .expect("summary serialization cannot fail")
    }
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs the full study for `cfg`, loading the partition from
/// `cfg.partition_file`.
pub fn run_rate_study(cfg: &ExperimentConfig) -> Result<RateStudyResult> {
    let json = std::fs::read_to_string(&cfg.partition_file)?;
    let partition = SmoothPartition::from_json(&json)?;
    run_rate_study_with(cfg, partition)
}

/// Runs the study with an already-loaded partition.
pub fn run_rate_study_with(
    cfg: &ExperimentConfig,
    partition: SmoothPartition,
) -> Result<RateStudyResult> {
    cfg.validate()?;
    if partition.d0() != cfg.d0 || partition.d1() != cfg.d1 {
        return Err(Error::DimensionMismatch(format!(
            "partition is ({}, {}), config says ({}, {})",
            partition.d0(),
            partition.d1(),
            cfg.d0,
            cfg.d1
        )));
    }
    let density = BaseDensity::uniform(cfg.d0);
    let probs = partition
        .part_probabilities(&density, cfg.eval.part_prob_mc, derive_seed(cfg.seed, "probs", 0))?
        .probs;
    let target = ContrastiveTarget::new(partition.clone())?;
    if !(cfg.beta < target.frame().dproj()) {
        return Err(Error::invalid(format!(
            "beta = {} must be below D_proj = {}",
            cfg.beta,
            target.frame().dproj()
        )));
    }

    let cells_plan: Vec<(usize, u64)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.seeds).map(move |s| (n, s)))
        .collect();

    let cells: Vec<CellResult> = par::map_indexed(cells_plan.len(), |idx| {
        let (n, seed_index) = cells_plan[idx];
        let started = std::time::Instant::now();
        let outcome = run_cell(cfg, &partition, &target, &density, &probs, n, seed_index);
        let wall_ms = if cfg.measure_wall_time {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        match outcome {
            Ok(mut cell) => {
                cell.wall_ms = wall_ms;
                cell
            }
            Err(e) => CellResult {
                n,
                seed_index,
                total_l2: f64::NAN,
                excess_hinge: f64::NAN,
                excess_hinge_se: f64::NAN,
                excess_misclass: f64::NAN,
                excess_misclass_se: f64::NAN,
                local_member: false,
                local_matches_global: None,
                layers: 0,
                width: 0,
                logit_clamp: f64::NAN,
                wall_ms,
                error: Some(e.to_string()),
            },
        }
    });

    if cells.iter().all(|c| c.error.is_some()) {
        return Err(Error::Numeric(format!(
            "every cell failed; first error: {}",
            cells[0].error.clone().unwrap_or_default()
        )));
    }

    let medians: Vec<(usize, f64)> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let mut risks: Vec<f64> = cells
                .iter()
                .filter(|c| c.n == n && c.error.is_none())
                .map(|c| c.total_l2)
                .collect();
            (n, if risks.is_empty() { f64::NAN } else { median(&mut risks) })
        })
        .collect();
    let slope_points: Vec<(f64, f64)> = medians
        .iter()
        .filter(|(_, m)| m.is_finite())
        .map(|(n, m)| (*n as f64, *m))
        .collect();
    let slope = fit_loglog_slope(&slope_points).ok();

    let result = RateStudyResult {
        cells,
        medians,
        slope,
    };

    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), result.to_csv_string())?;
        std::fs::write(dir.join("summary.json"), result.summary_json())?;
    }
    Ok(result)
}

fn run_cell(
    cfg: &ExperimentConfig,
    partition: &SmoothPartition,
    target: &ContrastiveTarget,
    density: &BaseDensity,
    probs: &[f64],
    n: usize,
    seed_index: u64,
) -> Result<CellResult> {
    let cell_seed = derive_seed(cfg.seed, "cell", ((n as u64) << 20) ^ seed_index);
    let eps = theoretical_epsilon(n, cfg.alpha, cfg.d0)?;
    let schedule = network_size_schedule(eps, cfg.alpha, cfg.d0, cfg.d1, &cfg.schedule)?;

    let gen_cfg = GeneratorConfig::new(
        partition.clone(),
        *density,
        cfg.c,
        probs.to_vec(),
        derive_seed(cell_seed, "data", 0),
    )?;

    let (net, local_member, local_matches_global): (
        Box<dyn crate::contrastive::SimplexMap>,
        bool,
        Option<bool>,
    ) = if cfg.oracle_rows {
        (Box::new(target.clone()), true, Some(true))
    } else {
        let ds = generate(&gen_cfg, n)?;
        let train_cfg = TrainConfig {
            epochs: cfg.optimizer.epochs,
            batch_size: cfg.optimizer.batch_size,
            learning_rate: cfg.optimizer.learning_rate,
            lr_decay: cfg.optimizer.lr_decay,
            seed: derive_seed(cell_seed, "train", 0),
            max_weight: cfg.optimizer.max_weight,
            logit_clamp: schedule.logit_clamp,
            layer_dims: schedule.layer_dims.clone(),
            restarts: cfg.optimizer.restarts,
        };
        let spec = LocalizationSpec {
            beta: cfg.beta,
            beta0: eps / cfg.beta,
            eval_points: cfg.eval.eval_points,
            seed: derive_seed(cell_seed, "localize", 0),
        };
        let pool = train_pool(&train_cfg, &ds, target.frame(), target, &spec)?;
        let member = pool.memberships[pool.global_index].is_member;
        let matches = if member {
            Some(
                pool.local_index == Some(pool.global_index)
                    && pool.runs[pool.local_index.unwrap()].net
                        == pool.runs[pool.global_index].net,
            )
        } else {
            None
        };
        (
            Box::new(pool.runs[pool.global_index].net.clone()),
            member,
            matches,
        )
    };

    let eval_seed = derive_seed(cell_seed, "eval", 0);
    let l2 = l2_risk(net.as_ref(), target, density, cfg.eval.l2_nodes, eval_seed)?;
    let hinge = crate::contrastive::excess_risk_mc(
        net.as_ref(),
        target,
        &gen_cfg,
        cfg.eval.hinge_mc,
        derive_seed(cell_seed, "hinge", 0),
    )?;
    let mis: MisclassificationReport =
        excess_misclassification(net.as_ref(), target, density, cfg.eval.l2_nodes, eval_seed)?;

    Ok(CellResult {
        n,
        seed_index,
        total_l2: l2.total_l2,
        excess_hinge: hinge.value,
        excess_hinge_se: hinge.std_error,
        excess_misclass: mis.excess,
        excess_misclass_se: mis.std_error,
        local_member,
        local_matches_global,
        layers: schedule.layers,
        width: schedule.width,
        logit_clamp: schedule.logit_clamp,
        wall_ms: 0,
        error: None,
    })
}
