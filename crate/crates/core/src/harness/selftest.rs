//! Runtime self-test: every module's invariant suite in one table.
//!
//! The suites replay the core identities on fresh fixtures: simplex
//! geometry, the norm identity, the Bayes-sign identity, analytic vs
//! empirical η, gradient correctness, localization discrimination, the
//! misclassification bound and schedule monotonicity. [`FaultInjection`]
//! exists for mutation testing: it corrupts an input of a chosen suite and
//! must flip that suite to FAIL.

use crate::contrastive::{
    bayes_sign_check, rho_from_coefficients, CentroidMap, ContrastiveTarget, SimplexMap,
};
use crate::erm::{check_localized, LocalizationSpec};
use crate::error::Result;
use crate::evaluation::excess_misclassification;
use crate::pairgen::{empirical_eta, generate, GeneratorConfig};
use crate::partition::{split_square, BaseDensity};
use crate::rng::stream;
use crate::simplex::{dist_sq, SimplexFrame};
use crate::simplexnet::{
    batch_is_smooth, finite_difference_gradient, loss_gradient, MlpParams, SimplexNet,
};

use super::{network_size_schedule, ScheduleConstants};

/// Deliberate input corruptions for mutation-testing the suites.
#[derive(Debug, Clone, Copy, Default)]
pub struct FaultInjection {
    /// Added to the first coordinate of the first vertex before the simplex
    /// suite runs; any nonzero value must fail the suite.
    pub vertex_perturbation: f64,
    /// Negates the label inside the analytic-gradient path of the gradient
    /// suite; must fail the comparison against finite differences.
    pub flip_hinge_sign: bool,
}

#[derive(Debug, Clone)]
pub struct SelftestEntry {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub entries: Vec<SelftestEntry>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    /// One aligned line per suite.
    pub fn render(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.name.len())
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{:<width$}  {}  {}\n",
                e.name,
                if e.passed { "PASS" } else { "FAIL" },
                e.detail,
            ));
        }
        out.push_str(&format!(
            "{}: {} of {} suites passed\n",
            if self.passed() { "OK" } else { "FAILURE" },
            self.entries.iter().filter(|e| e.passed).count(),
            self.entries.len()
        ));
        out
    }
}

/// Runs all suites with clean inputs.
pub fn selftest() -> Result<SelftestReport> {
    selftest_with(&FaultInjection::default())
}

/// Runs all suites, applying the given corruptions.
pub fn selftest_with(faults: &FaultInjection) -> Result<SelftestReport> {
    let mut entries = Vec::new();
    entries.push(simplex_suite(faults));
    entries.push(norm_identity_suite());
    entries.push(bayes_sign_suite()?);
    entries.push(eta_suite()?);
    entries.push(gradient_suite(faults));
    entries.push(localization_suite()?);
    entries.push(misclassification_bound_suite()?);
    entries.push(schedule_suite());
    Ok(SelftestReport { entries })
}

fn entry(name: &'static str, passed: bool, detail: String) -> SelftestEntry {
    SelftestEntry {
        name,
        passed,
        detail,
    }
}

fn simplex_suite(faults: &FaultInjection) -> SelftestEntry {
    const TOL: f64 = 1e-12;
    let mut worst = 0.0f64;
    for d1 in 2..=16 {
        let frame = match SimplexFrame::build(d1) {
            Ok(f) => f,
            Err(e) => return entry("simplex identities", false, e.to_string()),
        };
        let mut vertices: Vec<Vec<f64>> = frame.vertices().to_vec();
        vertices[0][0] += faults.vertex_perturbation;
        let d = frame.d();
        for k in 0..d {
            let s: f64 = vertices.iter().map(|v| v[k]).sum();
            worst = worst.max(s.abs());
        }
        for i in 0..d1 {
            let norm: f64 = vertices[i].iter().map(|x| x * x).sum();
            worst = worst.max((norm - 1.0).abs());
            for j in 0..d1 {
                if i == j {
                    continue;
                }
                let dot: f64 = vertices[i].iter().zip(&vertices[j]).map(|(a, b)| a * b).sum();
                worst = worst.max((dot + 1.0 / d as f64).abs());
                let dist = dist_sq(&vertices[i], &vertices[j]).sqrt();
                worst = worst.max((dist - frame.diameter()).abs());
            }
        }
    }
    entry(
        "simplex identities",
        worst <= TOL,
        format!("worst deviation {worst:.3e} (tol {TOL:.0e})"),
    )
}

fn norm_identity_suite() -> SelftestEntry {
    use rand::Rng;
    let mut worst = 0.0f64;
    let mut rng = stream(0x6e6f726d, 0);
    for &d1 in &[2usize, 3, 5, 9] {
        let frame = SimplexFrame::build(d1).unwrap();
        for _ in 0..250 {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                let raw: Vec<f64> = (0..d1).map(|_| -rng.random::<f64>().ln()).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|x| x / s).collect()
            };
            let g = draw(&mut rng);
            let h = draw(&mut rng);
            let lhs = dist_sq(
                &frame.embed_unchecked(&g),
                &frame.embed_unchecked(&h),
            );
            let rhs = rho_from_coefficients(&frame, &g, &h);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    entry(
        "norm identity",
        worst <= 1e-10,
        format!("worst gap {worst:.3e} over 1000 pairs (tol 1e-10)"),
    )
}

fn fixture() -> Result<(ContrastiveTarget, GeneratorConfig)> {
    let partition = split_square(0.5)?;
    let cfg = GeneratorConfig::new(
        partition.clone(),
        BaseDensity::uniform(2),
        0.9,
        vec![0.5, 0.5],
        0x5e1f,
    )?;
    Ok((ContrastiveTarget::new(partition)?, cfg))
}

fn bayes_sign_suite() -> Result<SelftestEntry> {
    let (target, cfg) = fixture()?;
    let report = bayes_sign_check(&target, &cfg, 10_000, 1)?;
    Ok(entry(
        "bayes sign identity",
        report.passed(),
        format!("{} violations in {} pairs", report.violations, report.checked),
    ))
}

fn eta_suite() -> Result<SelftestEntry> {
    let (_, cfg) = fixture()?;
    let ds = generate(&cfg, 20_000)?;
    let eta = empirical_eta(&ds, cfg.partition())?;
    let mut ok = eta.off_diagonal_positives == 0;
    let mut worst_z = 0.0f64;
    for (i, est) in eta.per_part.iter().enumerate() {
        match est {
            Some(est) => {
                let want = cfg.analytic_eta(i + 1);
                let z = (est.estimate - want).abs() / est.std_error().max(1e-12);
                worst_z = worst_z.max(z);
                ok &= z <= 3.0 && est.estimate > 0.5;
            }
            None => ok = false,
        }
    }
    Ok(entry(
        "analytic vs empirical eta",
        ok,
        format!(
            "worst z-score {worst_z:.2}, off-diagonal positives {}",
            eta.off_diagonal_positives
        ),
    ))
}

fn gradient_suite(faults: &FaultInjection) -> SelftestEntry {
    use rand::Rng;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (idx, dims) in [vec![2usize, 6, 3], vec![2, 5, 5, 3]].into_iter().enumerate() {
        let d1 = *dims.last().unwrap();
        let frame = SimplexFrame::build(d1).unwrap();
        let mut attempt = 0u64;
        let mut done = 0usize;
        while done < 5 && attempt < 200 {
            attempt += 1;
            let seed = 7000 + 100 * idx as u64 + attempt;
            let mlp = match MlpParams::he_init(dims.clone(), 10.0, 6.0, seed) {
                Ok(m) => m,
                Err(e) => return entry("gradient check", false, e.to_string()),
            };
            let net = SimplexNet::new(mlp, frame.clone()).unwrap();
            let mut rng = stream(0x67726164, seed);
            let batch: Vec<crate::pairgen::PairwiseSample> = (0..2)
                .map(|k| crate::pairgen::PairwiseSample {
                    x: (0..2).map(|_| rng.random()).collect(),
                    xp: (0..2).map(|_| rng.random()).collect(),
                    y: if k == 0 { 1 } else { -1 },
                })
                .collect();
            if !batch_is_smooth(&net, &batch, 1e-3) {
                continue;
            }
            let analytic_batch: Vec<crate::pairgen::PairwiseSample> = if faults.flip_hinge_sign {
                batch
                    .iter()
                    .map(|s| crate::pairgen::PairwiseSample {
                        x: s.x.clone(),
                        xp: s.xp.clone(),
                        y: -s.y,
                    })
                    .collect()
            } else {
                batch.clone()
            };
            let analytic = match loss_gradient(&net, &analytic_batch) {
                Ok((g, _)) => g.flatten(),
                Err(e) => return entry("gradient check", false, e.to_string()),
            };
            let numeric = match finite_difference_gradient(&net, &batch, 1e-5) {
                Ok(g) => g,
                Err(e) => return entry("gradient check", false, e.to_string()),
            };
            let norm: f64 = numeric.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm < 1e-8 {
                continue;
            }
            let err: f64 = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(err / norm);
            done += 1;
            checked += 1;
        }
    }
    entry(
        "gradient check",
        checked >= 10 && worst < 1e-4,
        format!("worst relative error {worst:.3e} over {checked} configurations (tol 1e-4)"),
    )
}

fn localization_suite() -> Result<SelftestEntry> {
    let (target, _) = fixture()?;
    let density = BaseDensity::uniform(2);
    let spec = LocalizationSpec {
        beta: 0.5 * target.frame().dproj(),
        beta0: 0.05,
        eval_points: 5_000,
        seed: 2,
    };
    let own = check_localized(&target, &target, &spec, &density)?;
    let permuted = check_localized(&target.permuted(1), &target, &spec, &density)?;
    let ok = own.is_member && own.measured_prob == 1.0 && !permuted.is_member
        && permuted.measured_prob == 0.0;
    Ok(entry(
        "localization discriminates",
        ok,
        format!(
            "oracle prob {}, permuted prob {}",
            own.measured_prob, permuted.measured_prob
        ),
    ))
}

fn misclassification_bound_suite() -> Result<SelftestEntry> {
    let (target, _) = fixture()?;
    let density = BaseDensity::uniform(2);
    let mut ok = true;
    let mut detail = String::new();
    for (name, map) in [
        ("oracle", Box::new(target.clone()) as Box<dyn SimplexMap>),
        ("centroid", Box::new(CentroidMap { d1: 2 })),
    ] {
        let rep = excess_misclassification(map.as_ref(), &target, &density, 16_384, 3)?;
        ok &= rep.bound_holds;
        detail.push_str(&format!("{name}: {:.4} ≤ {:.4}; ", rep.excess, rep.bound));
    }
    for seed in 0..5 {
        let mlp = MlpParams::he_init(vec![2, 6, 5, 2], 10.0, 4.0, 300 + seed)?;
        let net = SimplexNet::new(mlp, target.frame().clone())?;
        let rep = excess_misclassification(&net, &target, &density, 16_384, seed)?;
        ok &= rep.bound_holds;
    }
    detail.push_str("5 random nets checked");
    Ok(entry("misclassification bound", ok, detail))
}

fn schedule_suite() -> SelftestEntry {
    let constants = ScheduleConstants::default();
    let hand = network_size_schedule(1.0 / 32.0, 1.0, 2, 2, &constants);
    let ok_hand = matches!(&hand, Ok(s) if s.layers == 6 && s.s_budget == 160);
    let mut monotone = true;
    let mut prev = network_size_schedule(0.4, 2.0, 2, 3, &constants).ok();
    for eps in [0.1, 0.02, 0.004] {
        let s = network_size_schedule(eps, 2.0, 2, 3, &constants).ok();
        if let (Some(p), Some(s)) = (&prev, &s) {
            monotone &= s.layers >= p.layers && s.s_budget >= p.s_budget
                && s.logit_clamp >= p.logit_clamp;
        } else {
            monotone = false;
        }
        prev = s;
    }
    entry(
        "network size schedule",
        ok_hand && monotone,
        format!("hand example {}, monotone {monotone}", ok_hand),
    )
}
