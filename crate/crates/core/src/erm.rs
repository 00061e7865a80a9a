//! Global and localized empirical risk minimization.
//!
//! The global ERM is approximated by minibatch subgradient descent with step
//! decay, returning the best end-of-epoch snapshot (including the initial
//! net) rather than the last iterate. The local ERM restricts the argmin to
//! the localized subclass — maps within `β` of the oracle `f*` on all but
//! `β₀` probability mass — realized as a restart pool filtered by the
//! membership check: the ground-truth partition is known here, so
//! membership is directly measurable.

use serde::Serialize;

use crate::contrastive::{empirical_risk, rho_from_coefficients, ContrastiveTarget, SimplexMap};
use crate::error::{Error, Result};
use crate::pairgen::PairwiseDataset;
use crate::par;
use crate::partition::BaseDensity;
use crate::rng::{derive_seed, stream};
use crate::simplex::SimplexFrame;
use crate::simplexnet::{apply_update, loss_gradient, param_stats, MlpParams, SimplexNet};

/// Optimizer and pool settings for ERM training.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial step size; epoch `t` uses `lr / (1 + lr_decay · t)`.
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub seed: u64,
    /// Weight-magnitude bound `J`.
    pub max_weight: f64,
    /// Logit clamp `M`.
    pub logit_clamp: f64,
    /// `[d0, w_1, …, w_{L−1}, d1]`.
    pub layer_dims: Vec<usize>,
    /// Restart-pool size for the local ERM.
    pub restarts: usize,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.lr_decay < 0.0 {
            return Err(Error::invalid("lr_decay must be nonnegative"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate / (1.0 + self.lr_decay * epoch as f64)
    }
}

/// One row of a training trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub empirical_risk: f64,
    pub max_weight: f64,
    pub sparsity: usize,
}

/// Per-epoch empirical risks and parameter stats; row 0 is the initial net.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn min_risk(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.empirical_risk)
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV rendering with columns `epoch,empirical_risk,max_weight,sparsity`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,empirical_risk,max_weight,sparsity\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.empirical_risk, r.max_weight, r.sparsity
            ));
        }
        out
    }
}

/// A trained snapshot: the best end-of-epoch net and the full trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub net: SimplexNet,
    pub trace: TrainTrace,
    pub best_epoch: usize,
    pub best_risk: f64,
}

/// Minibatch subgradient descent on the empirical hinge risk. Returns the
/// snapshot minimizing the end-of-epoch empirical risk (epoch 0 counts, so
/// `epochs = 0` returns the initialized net with a single-row trace).
pub fn train_global_erm(
    cfg: &TrainConfig,
    ds: &PairwiseDataset,
    frame: &SimplexFrame,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::InsufficientData("empty training dataset".into()));
    }
    let d0 = ds.samples[0].x.len();
    if cfg.layer_dims.first() != Some(&d0) {
        return Err(Error::DimensionMismatch(format!(
            "layer_dims start at {:?}, dataset has d0 = {d0}",
            cfg.layer_dims.first()
        )));
    }
    if cfg.layer_dims.last() != Some(&frame.d1()) {
        return Err(Error::DimensionMismatch(format!(
            "layer_dims end at {:?}, frame has d1 = {}",
            cfg.layer_dims.last(),
            frame.d1()
        )));
    }

    let mlp = MlpParams::he_init(
        cfg.layer_dims.clone(),
        cfg.max_weight,
        cfg.logit_clamp,
        cfg.seed,
    )?;
    let mut net = SimplexNet::new(mlp, frame.clone())?;

    let mut trace = TrainTrace::default();
    let record = |net: &SimplexNet, epoch: usize, trace: &mut TrainTrace| -> Result<f64> {
        let risk = empirical_risk(frame, net, ds)?;
        if !risk.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
        }
        let stats = param_stats(net);
        trace.records.push(EpochRecord {
            epoch,
            empirical_risk: risk,
            max_weight: stats.max_magnitude,
            sparsity: stats.sparsity,
        });
        Ok(risk)
    };

    let mut best_risk = record(&net, 0, &mut trace)?;
    let mut best_epoch = 0usize;
    let mut best_net = net.clone();

    let mut indices: Vec<usize> = (0..ds.len()).collect();
    let mut batch: Vec<crate::pairgen::PairwiseSample> = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        use rand::seq::SliceRandom;
        let mut rng = stream(derive_seed(cfg.seed, "epoch-shuffle", epoch as u64), 0);
        indices.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch - 1);
        for chunk in indices.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| ds.samples[i].clone()));
            let (grads, loss) = loss_gradient(&net, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            apply_update(&mut net, &grads, lr)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
        }
        let risk = record(&net, epoch, &mut trace)?;
        if risk < best_risk {
            best_risk = risk;
            best_epoch = epoch;
            best_net = net.clone();
        }
    }

    Ok(TrainOutcome {
        net: best_net,
        trace,
        best_epoch,
        best_risk,
    })
}

/// Parameters of the localized-subclass membership check.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct LocalizationSpec {
    /// Localization radius; must satisfy `0 < β < D_proj`.
    pub beta: f64,
    /// Mass budget `β₀` (the studies use `β₀ = ε/β`).
    pub beta0: f64,
    /// Monte-Carlo points for estimating `P_X(‖f − f*‖₂ < β)`.
    pub eval_points: usize,
    pub seed: u64,
}

/// Measured localization probability and the membership decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizationResult {
    pub is_member: bool,
    pub measured_prob: f64,
    pub std_error: f64,
}

/// Estimates `P_X(‖f(x) − f*(x)‖₂ < β)` by Monte Carlo and decides
/// membership by `p̂ ≥ 1 − β₀` on the point estimate (the standard error is
/// reported, not folded into the decision). The same `spec.seed` always
/// evaluates the same draw, so candidates in one pool are compared on
/// common points.
pub fn check_localized<F: SimplexMap + ?Sized>(
    f: &F,
    target: &ContrastiveTarget,
    spec: &LocalizationSpec,
    density: &BaseDensity,
) -> Result<LocalizationResult> {
    let frame = target.frame();
    if !(spec.beta > 0.0) || spec.beta >= frame.dproj() {
        return Err(Error::invalid(format!(
            "beta = {} outside (0, D_proj = {})",
            spec.beta,
            frame.dproj()
        )));
    }
    if spec.beta0 < 0.0 {
        return Err(Error::invalid("beta0 must be nonnegative"));
    }
    if spec.eval_points == 0 {
        return Err(Error::invalid("eval_points must be positive"));
    }
    let beta_sq = spec.beta * spec.beta;
    let hits = par::sum_indexed(spec.eval_points, |i| {
        let mut rng = stream(spec.seed, i as u64);
        let x = density.sample(&mut rng);
        let dist_sq = rho_from_coefficients(frame, &f.coefficients(&x), &target.coefficients(&x));
        f64::from(dist_sq < beta_sq)
    });
    let n = spec.eval_points as f64;
    let measured_prob = hits / n;
    Ok(LocalizationResult {
        is_member: measured_prob >= 1.0 - spec.beta0,
        measured_prob,
        std_error: (measured_prob * (1.0 - measured_prob) / n).sqrt(),
    })
}

/// One candidate row of a pool report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateReport {
    pub restart: usize,
    pub empirical_risk: f64,
    pub is_member: bool,
    pub measured_prob: f64,
}

/// Summary of a restart pool: each candidate's risk and membership.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct PoolReport {
    pub candidates: Vec<CandidateReport>,
}

impl PoolReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pool report serialization cannot fail")
    }
}

/// A trained restart pool with both selections applied.
#[derive(Debug, Clone)]
pub struct PoolOutcome {
    pub runs: Vec<TrainOutcome>,
    pub memberships: Vec<LocalizationResult>,
    /// Unconstrained minimizer over the pool.
    pub global_index: usize,
    /// Minimizer among localized members; `None` when the pool has none.
    pub local_index: Option<usize>,
    pub report: PoolReport,
}

/// First index achieving the minimum risk.
fn select_min_risk(risks: &[f64]) -> usize {
    let mut best = 0;
    for (i, r) in risks.iter().enumerate() {
        if *r < risks[best] {
            best = i;
        }
    }
    best
}

/// Minimum-risk index among members; ties and near-ties are settled by the
/// membership filter first, then by pool order.
pub fn select_local_index(risks: &[f64], members: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (r, m)) in risks.iter().zip(members).enumerate() {
        if *m && best.is_none_or(|b| *r < risks[b]) {
            best = Some(i);
        }
    }
    best
}

/// Trains `cfg.restarts` independent global-ERM runs and applies both the
/// global and the localized selection to the shared pool. Restart 0 trains
/// with `cfg.seed` itself (so a single-restart pool reproduces
/// [`train_global_erm`] exactly); later restarts derive their seeds.
pub fn train_pool(
    cfg: &TrainConfig,
    ds: &PairwiseDataset,
    frame: &SimplexFrame,
    target: &ContrastiveTarget,
    spec: &LocalizationSpec,
) -> Result<PoolOutcome> {
    cfg.validate()?;
    let runs = par::map_indexed(cfg.restarts, |r| {
        let mut run_cfg = cfg.clone();
        if r > 0 {
            run_cfg.seed = derive_seed(cfg.seed, "restart", r as u64);
        }
        train_global_erm(&run_cfg, ds, frame)
    });
    let mut pool = Vec::with_capacity(cfg.restarts);
    for run in runs {
        pool.push(run?);
    }
    let density = BaseDensity::uniform(target.partition().d0());
    let mut memberships = Vec::with_capacity(pool.len());
    for run in &pool {
        memberships.push(check_localized(&run.net, target, spec, &density)?);
    }
    let risks: Vec<f64> = pool.iter().map(|r| r.best_risk).collect();
    let members: Vec<bool> = memberships.iter().map(|m| m.is_member).collect();
    let report = PoolReport {
        candidates: pool
            .iter()
            .zip(&memberships)
            .enumerate()
            .map(|(restart, (run, m))| CandidateReport {
                restart,
                empirical_risk: run.best_risk,
                is_member: m.is_member,
                measured_prob: m.measured_prob,
            })
            .collect(),
    };
    Ok(PoolOutcome {
        global_index: select_min_risk(&risks),
        local_index: select_local_index(&risks, &members),
        runs: pool,
        memberships,
        report,
    })
}

/// Local ERM: the minimum-risk member of the restart pool. Errors with the
/// full pool report when no candidate passes the membership check.
pub fn train_local_erm(
    cfg: &TrainConfig,
    ds: &PairwiseDataset,
    frame: &SimplexFrame,
    target: &ContrastiveTarget,
    spec: &LocalizationSpec,
) -> Result<(TrainOutcome, PoolReport)> {
    let outcome = train_pool(cfg, ds, frame, target, spec)?;
    match outcome.local_index {
        Some(i) => Ok((outcome.runs[i].clone(), outcome.report)),
        None => Err(Error::LocalErmInfeasible(Box::new(outcome.report))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::CentroidMap;
    use crate::pairgen::{generate, GeneratorConfig};
    use crate::partition::split_square;
    use crate::simplexnet::permute_logits;

    fn toy_setup(seed: u64) -> (GeneratorConfig, PairwiseDataset, ContrastiveTarget) {
        let partition = split_square(0.5).unwrap();
        let cfg = GeneratorConfig::new(
            partition.clone(),
            BaseDensity::uniform(2),
            0.95,
            vec![0.5, 0.5],
            seed,
        )
        .unwrap();
        let ds = generate(&cfg, 2000).unwrap();
        let target = ContrastiveTarget::new(partition).unwrap();
        (cfg, ds, target)
    }

    fn toy_train_config(seed: u64, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 32,
            learning_rate: 0.8,
            lr_decay: 0.05,
            seed,
            max_weight: 10.0,
            logit_clamp: 6.0,
            layer_dims: vec![2, 8, 8, 2],
            restarts: 1,
        }
    }

    #[test]
    fn zero_epochs_returns_the_initialized_net() {
        let (_, ds, target) = toy_setup(1);
        let cfg = toy_train_config(7, 0);
        let out = train_global_erm(&cfg, &ds, target.frame()).unwrap();
        assert_eq!(out.trace.records.len(), 1);
        assert_eq!(out.best_epoch, 0);
        assert_eq!(out.best_risk, out.trace.records[0].empirical_risk);
        let init = MlpParams::he_init(cfg.layer_dims.clone(), 10.0, 6.0, 7).unwrap();
        assert_eq!(out.net.mlp, init);
    }

    #[test]
    fn training_beats_the_centroid_baseline_on_a_separable_toy() {
        let (_, ds, target) = toy_setup(2);
        let cfg = toy_train_config(3, 40);
        let out = train_global_erm(&cfg, &ds, target.frame()).unwrap();
        let baseline =
            empirical_risk(target.frame(), &CentroidMap { d1: 2 }, &ds).unwrap();
        assert!(
            out.best_risk < baseline,
            "trained {} vs centroid {baseline}",
            out.best_risk
        );
    }

    #[test]
    fn reported_risk_is_the_trace_minimum_and_training_is_deterministic() {
        let (_, ds, target) = toy_setup(3);
        let cfg = toy_train_config(11, 12);
        let a = train_global_erm(&cfg, &ds, target.frame()).unwrap();
        assert_eq!(a.best_risk, a.trace.min_risk());
        assert_eq!(
            a.trace.records[a.best_epoch].empirical_risk,
            a.best_risk
        );
        let b = train_global_erm(&cfg, &ds, target.frame()).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn trace_serializes_with_the_documented_columns() {
        let (_, ds, target) = toy_setup(4);
        let out = train_global_erm(&toy_train_config(5, 2), &ds, target.frame()).unwrap();
        let csv = out.trace.to_csv_string();
        assert!(csv.starts_with("epoch,empirical_risk,max_weight,sparsity\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn membership_accepts_the_target_and_rejects_its_permutation() {
        let (_, _, target) = toy_setup(5);
        let density = BaseDensity::uniform(2);
        for beta_frac in [0.25, 0.5, 0.9] {
            let spec = LocalizationSpec {
                beta: beta_frac * target.frame().dproj(),
                beta0: 0.1,
                eval_points: 4000,
                seed: 17,
            };
            let own = check_localized(&target, &target, &spec, &density).unwrap();
            assert!(own.is_member);
            assert_eq!(own.measured_prob, 1.0);
            assert_eq!(own.std_error, 0.0);

            let permuted = target.permuted(1);
            let perm = check_localized(&permuted, &target, &spec, &density).unwrap();
            assert!(!perm.is_member);
            assert_eq!(perm.measured_prob, 0.0);
        }
    }

    #[test]
    fn membership_is_monotone_in_beta0_on_the_same_draw() {
        let (_, ds, target) = toy_setup(6);
        let out = train_global_erm(&toy_train_config(6, 8), &ds, target.frame()).unwrap();
        let density = BaseDensity::uniform(2);
        let base = LocalizationSpec {
            beta: 0.5 * target.frame().dproj(),
            beta0: 0.0,
            eval_points: 5000,
            seed: 23,
        };
        let mut prev_member = false;
        let mut prev_prob = None;
        for beta0 in [0.0, 0.05, 0.2, 0.5, 1.0] {
            let spec = LocalizationSpec { beta0, ..base.clone() };
            let res = check_localized(&out.net, &target, &spec, &density).unwrap();
            if let Some(p) = prev_prob {
                assert_eq!(res.measured_prob, p, "same seed, same draw");
            }
            prev_prob = Some(res.measured_prob);
            assert!(
                res.is_member || !prev_member,
                "membership must be monotone in beta0"
            );
            prev_member = res.is_member;
        }
        // beta0 = 1 admits everything.
        assert!(prev_member);
    }

    #[test]
    fn localization_spec_validation() {
        let (_, _, target) = toy_setup(7);
        let density = BaseDensity::uniform(2);
        let bad_beta = LocalizationSpec {
            beta: target.frame().dproj(),
            beta0: 0.0,
            eval_points: 100,
            seed: 0,
        };
        assert!(check_localized(&target, &target, &bad_beta, &density).is_err());
        let bad_beta0 = LocalizationSpec {
            beta: 0.5,
            beta0: -0.1,
            eval_points: 100,
            seed: 0,
        };
        assert!(check_localized(&target, &target, &bad_beta0, &density).is_err());
    }

    #[test]
    fn single_restart_pool_reproduces_the_global_erm() {
        let (_, ds, target) = toy_setup(8);
        let cfg = toy_train_config(9, 10);
        let spec = LocalizationSpec {
            beta: 0.6 * target.frame().dproj(),
            beta0: 0.6,
            eval_points: 3000,
            seed: 29,
        };
        let global = train_global_erm(&cfg, &ds, target.frame()).unwrap();
        let (local, report) =
            train_local_erm(&cfg, &ds, target.frame(), &target, &spec).unwrap();
        assert_eq!(report.candidates.len(), 1);
        assert!(report.candidates[0].is_member);
        assert_eq!(local.net, global.net);
    }

    #[test]
    fn local_risk_dominates_global_risk_over_the_same_pool() {
        let (_, ds, target) = toy_setup(9);
        let mut cfg = toy_train_config(10, 6);
        cfg.restarts = 3;
        let spec = LocalizationSpec {
            beta: 0.6 * target.frame().dproj(),
            beta0: 0.6,
            eval_points: 3000,
            seed: 31,
        };
        let pool = train_pool(&cfg, &ds, target.frame(), &target, &spec).unwrap();
        assert_eq!(pool.runs.len(), 3);
        if let Some(local) = pool.local_index {
            assert!(pool.runs[local].best_risk >= pool.runs[pool.global_index].best_risk);
        }
        // Determinism of the whole pool.
        let again = train_pool(&cfg, &ds, target.frame(), &target, &spec).unwrap();
        assert_eq!(pool.report, again.report);
        assert_eq!(pool.runs[pool.global_index].net, again.runs[again.global_index].net);
    }

    #[test]
    fn membership_filter_breaks_risk_ties_against_permuted_heads() {
        let (_, ds, target) = toy_setup(10);
        let cfg = toy_train_config(12, 50);
        let aligned = train_global_erm(&cfg, &ds, target.frame()).unwrap();
        // Head permutation leaves pairwise distances unchanged, so the
        // empirical risks agree up to roundoff while the map itself lands a
        // diameter away from f*.
        let permuted = permute_logits(&aligned.net, &[1, 0]).unwrap();
        let frame = target.frame();
        let risk_aligned = empirical_risk(frame, &aligned.net, &ds).unwrap();
        let risk_permuted = empirical_risk(frame, &permuted, &ds).unwrap();
        assert!((risk_aligned - risk_permuted).abs() <= 1e-12);

        let density = BaseDensity::uniform(2);
        let spec = LocalizationSpec {
            beta: 0.5 * frame.dproj(),
            beta0: 0.4,
            eval_points: 5000,
            seed: 37,
        };
        let m_aligned = check_localized(&aligned.net, &target, &spec, &density).unwrap();
        let m_permuted = check_localized(&permuted, &target, &spec, &density).unwrap();
        assert!(m_aligned.is_member, "{m_aligned:?}");
        assert!(!m_permuted.is_member, "{m_permuted:?}");

        // Pool order puts the permuted twin first: only membership, not
        // tie-breaking luck, can select the aligned net.
        let risks = vec![risk_permuted, risk_aligned];
        let members = vec![m_permuted.is_member, m_aligned.is_member];
        assert_eq!(select_local_index(&risks, &members), Some(1));
    }

    #[test]
    fn impossible_localization_yields_the_infeasible_error_with_report() {
        let (_, ds, target) = toy_setup(11);
        let cfg = toy_train_config(13, 0);
        let spec = LocalizationSpec {
            beta: 1e-6,
            beta0: 0.0,
            eval_points: 500,
            seed: 41,
        };
        match train_local_erm(&cfg, &ds, target.frame(), &target, &spec) {
            Err(Error::LocalErmInfeasible(report)) => {
                assert_eq!(report.candidates.len(), 1);
                assert!(!report.candidates[0].is_member);
                assert!(report.to_json().contains("measured_prob"));
            }
            other => panic!("expected infeasible error, got {other:?}"),
        }
    }
}
