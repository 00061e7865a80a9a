//! Risk functionals against the ground truth.
//!
//! The L²-risk is the sum over parts of the squared `L²(P_X)` distance
//! between estimated barycentric coordinates and the true part indicators.
//! It is computed by deterministic tensor-grid quadrature in low dimension
//! (midpoint rule, so nodes never sit on boundary surfaces) and by Monte
//! Carlo otherwise. The vector form `∫‖f − f*‖² dP_X` is evaluated through
//! the embedded points with plain Euclidean distances — an independent
//! route — and cross-checked against the coefficient form through the norm
//! identity on every call.

use serde::Serialize;

use crate::contrastive::{excess_risk_mc, ContrastiveTarget, McEstimate, SimplexMap};
use crate::error::{Error, Result};
use crate::pairgen::GeneratorConfig;
use crate::par;
use crate::partition::BaseDensity;
use crate::rng::stream;
use crate::simplex::{dist_sq, SimplexFrame};

/// Outputs with Euclidean norm at or below this are treated as the zero
/// vector by the plug-in classifier (a uniform softmax embeds to the origin
/// only up to roundoff).
pub const ZERO_NORM_TOL: f64 = 1e-12;

/// Absolute tolerance when comparing vertex scores for the min-index tie
/// rule; scores are computed on the normalized output, so they live in
/// `[−1, 1]`.
pub const TIE_TOL: f64 = 1e-9;

/// Relative tolerance of the norm-identity cross-check inside `l2_risk`.
pub const CROSS_CHECK_TOL: f64 = 1e-8;

/// How an integral was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureMethod {
    Grid,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureInfo {
    pub method: QuadratureMethod,
    pub nodes: usize,
    pub seed: u64,
}

/// L² risks plus optional excess-risk estimates for one estimator.
#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    /// `‖g_i − 1_{K_i}‖²_{L²(P_X)}` per part.
    pub per_part_l2: Vec<f64>,
    /// Sum of the per-part terms.
    pub total_l2: f64,
    /// `∫‖f − f*‖² dP_X`, evaluated through embedded points; equals
    /// `(d1/d) · total_l2` by the norm identity.
    pub l2_vector_form: f64,
    pub excess_hinge: Option<McEstimate>,
    pub excess_misclass: Option<MisclassificationReport>,
    pub quadrature: QuadratureInfo,
}

impl RiskReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("risk report serialization cannot fail")
    }

    /// Flat CSV row for experiment aggregation.
    pub fn csv_header() -> &'static str {
        "total_l2,l2_vector_form,excess_hinge,excess_hinge_se,excess_misclass,excess_misclass_se,quadrature,nodes,seed"
    }

    pub fn to_csv_row(&self) -> String {
        let (eh, eh_se) = self
            .excess_hinge
            .map_or((f64::NAN, f64::NAN), |e| (e.value, e.std_error));
        let (em, em_se) = self
            .excess_misclass
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |e| (e.excess, e.std_error));
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.total_l2,
            self.l2_vector_form,
            eh,
            eh_se,
            em,
            em_se,
            match self.quadrature.method {
                QuadratureMethod::Grid => "grid",
                QuadratureMethod::Mc => "mc",
            },
            self.quadrature.nodes,
            self.quadrature.seed
        )
    }
}

/// Excess misclassification of the plug-in classifier together with the
/// `4·D⁻²` upper bound evaluated on the same nodes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MisclassificationReport {
    /// `P_X(plug-in ≠ true part)` minus the (zero) Bayes risk.
    pub excess: f64,
    pub std_error: f64,
    /// `4·D⁻²·∫‖f − f*‖² dP_X`.
    pub bound: f64,
    pub bound_std_error: f64,
    /// Whether `excess ≤ bound + 3·SE` held (the inequality is pointwise,
    /// so it holds on every draw up to tie-tolerance effects).
    pub bound_holds: bool,
    pub quadrature: QuadratureInfo,
}

enum Nodes {
    Grid { per_axis: usize, d0: usize },
    Mc { count: usize, seed: u64 },
}

impl Nodes {
    fn plan(density: &BaseDensity, nodes: usize, seed: u64) -> Result<Self> {
        if nodes < 1000 {
            return Err(Error::invalid(format!(
                "quadrature needs at least 1000 nodes, got {nodes}"
            )));
        }
        let d0 = density.dim();
        if d0 <= 3 {
            let per_axis = ((nodes as f64).powf(1.0 / d0 as f64).floor() as usize).clamp(2, 256);
            Ok(Nodes::Grid { per_axis, d0 })
        } else {
            Ok(Nodes::Mc { count: nodes, seed })
        }
    }

    fn count(&self) -> usize {
        match self {
            Nodes::Grid { per_axis, d0 } => per_axis.pow(*d0 as u32),
            Nodes::Mc { count, .. } => *count,
        }
    }

    fn info(&self, seed: u64) -> QuadratureInfo {
        QuadratureInfo {
            method: match self {
                Nodes::Grid { .. } => QuadratureMethod::Grid,
                Nodes::Mc { .. } => QuadratureMethod::Mc,
            },
            nodes: self.count(),
            seed,
        }
    }

    /// Node `i` of the plan: a midpoint lattice point for grids, a density
    /// draw from the per-index stream for Monte Carlo.
    fn node(&self, i: usize, density: &BaseDensity) -> Vec<f64> {
        match self {
            Nodes::Grid { per_axis, d0 } => {
                let mut x = Vec::with_capacity(*d0);
                let mut rest = i;
                for _ in 0..*d0 {
                    let k = rest % per_axis;
                    rest /= per_axis;
                    x.push((k as f64 + 0.5) / *per_axis as f64);
                }
                x
            }
            Nodes::Mc { seed, .. } => {
                let mut rng = stream(*seed, i as u64);
                density.sample(&mut rng)
            }
        }
    }
}

/// Evaluates the L² fields of a [`RiskReport`]: per-part squared coordinate
/// errors, their total, and the Euclidean vector form, with the norm
/// identity asserted between the two routes.
pub fn l2_risk<F: SimplexMap + ?Sized>(
    f: &F,
    target: &ContrastiveTarget,
    density: &BaseDensity,
    nodes: usize,
    seed: u64,
) -> Result<RiskReport> {
    let frame = target.frame();
    let d1 = frame.d1();
    if f.d1() != d1 {
        return Err(Error::DimensionMismatch(format!(
            "map has d1 = {}, target has d1 = {d1}",
            f.d1()
        )));
    }
    let plan = Nodes::plan(density, nodes, seed)?;
    let n = plan.count();

    // Accumulate per-part squared errors plus the Euclidean vector form.
    let sums = par::sum_vectors(n, d1 + 1, |i, out| {
        let x = plan.node(i, density);
        let g = f.coefficients(&x);
        let g_star = target.coefficients(&x);
        for k in 0..d1 {
            let diff = g[k] - g_star[k];
            out[k] += diff * diff;
        }
        let zf = frame.embed_unchecked(&g);
        let zs = frame.embed_unchecked(&g_star);
        out[d1] += dist_sq(&zf, &zs);
    });
    let inv = 1.0 / n as f64;
    let per_part_l2: Vec<f64> = sums[..d1].iter().map(|s| s * inv).collect();
    let total_l2: f64 = per_part_l2.iter().sum();
    let l2_vector_form = sums[d1] * inv;

    // Norm identity: total·(d1/d) must reproduce the vector form.
    let lhs = total_l2 * frame.coeff_ratio();
    if (lhs - l2_vector_form).abs() > CROSS_CHECK_TOL * l2_vector_form.abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "norm-identity cross-check failed: (d1/d)·Σ = {lhs} vs ∫‖f−f*‖² = {l2_vector_form}"
        )));
    }

    Ok(RiskReport {
        per_part_l2,
        total_l2,
        l2_vector_form,
        excess_hinge: None,
        excess_misclass: None,
        quadrature: plan.info(seed),
    })
}

/// Plug-in label of a raw output point: index of the vertex with the
/// largest inner product against the normalized point, minimal index on
/// ties, label 1 for the zero vector. Labels are 1-based.
pub fn plugin_classify_point(frame: &SimplexFrame, point: &[f64]) -> usize {
    let norm = point.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= ZERO_NORM_TOL {
        return 1;
    }
    let mut scores = Vec::with_capacity(frame.d1());
    for v in frame.vertices() {
        let dot: f64 = point.iter().zip(v).map(|(a, b)| a * b).sum();
        scores.push(dot / norm);
    }
    let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .position(|s| *s >= top - TIE_TOL)
        .expect("max exists")
        + 1
}

/// Plug-in multiclass label of `f` at `x`.
pub fn plugin_classify<F: SimplexMap + ?Sized>(
    f: &F,
    frame: &SimplexFrame,
    x: &[f64],
) -> usize {
    plugin_classify_point(frame, &f.point(frame, x))
}

/// Excess misclassification of the plug-in classifier over the (zero)
/// Bayes risk, with the `4·D⁻²·E‖f − f*‖²` bound checked on the same nodes.
pub fn excess_misclassification<F: SimplexMap + ?Sized>(
    f: &F,
    target: &ContrastiveTarget,
    density: &BaseDensity,
    nodes: usize,
    seed: u64,
) -> Result<MisclassificationReport> {
    let frame = target.frame();
    let plan = Nodes::plan(density, nodes, seed)?;
    let n = plan.count();
    let four_inv_dsq = 4.0 / frame.diameter_sq();

    // Per node: misclassification flag, its bound term, and the moments
    // needed for standard errors of the means.
    let sums = par::sum_vectors(n, 4, |i, out| {
        let x = plan.node(i, density);
        let point = f.point(frame, &x);
        let mis = f64::from(plugin_classify_point(frame, &point) != target.classify(&x));
        let vertex = frame.vertex(target.classify(&x) - 1);
        let gap = four_inv_dsq * dist_sq(&point, vertex);
        out[0] += mis;
        out[1] += gap;
        let diff = gap - mis;
        out[2] += diff;
        out[3] += diff * diff;
    });
    let nf = n as f64;
    let excess = sums[0] / nf;
    let bound = sums[1] / nf;
    let mean_diff = sums[2] / nf;
    let (std_error, bound_std_error, diff_se) = match plan {
        Nodes::Grid { .. } => (0.0, 0.0, 0.0),
        Nodes::Mc { .. } => {
            let var_mis = (excess * (1.0 - excess)).max(0.0);
            let var_diff = ((sums[3] / nf - mean_diff * mean_diff) * nf / (nf - 1.0)).max(0.0);
            // Bound-side variance is dominated by the diff variance plus the
            // misclassification variance; report the diff-based SE for the
            // bound as well.
            (
                (var_mis / nf).sqrt(),
                (var_diff / nf).sqrt(),
                (var_diff / nf).sqrt(),
            )
        }
    };
    // The inequality is pointwise (a misclassified x forces ‖f − f*‖ ≥ D/2),
    // so the node-mean difference can only go negative through tie-tolerance
    // effects; allow them epsilon room on top of the Monte-Carlo slack.
    let bound_holds = mean_diff >= -(3.0 * diff_se + 1e-9);
    Ok(MisclassificationReport {
        excess,
        std_error,
        bound,
        bound_std_error,
        bound_holds,
        quadrature: plan.info(seed),
    })
}

/// Full report: L² fields plus both excess risks.
#[allow(clippy::too_many_arguments)]
pub fn risk_report<F: SimplexMap + ?Sized>(
    f: &F,
    target: &ContrastiveTarget,
    gen_cfg: &GeneratorConfig,
    density: &BaseDensity,
    nodes: usize,
    hinge_mc: usize,
    seed: u64,
) -> Result<RiskReport> {
    let mut report = l2_risk(f, target, density, nodes, seed)?;
    report.excess_hinge = Some(excess_risk_mc(
        f,
        target,
        gen_cfg,
        hinge_mc,
        crate::rng::derive_seed(seed, "hinge-mc", 0),
    )?);
    report.excess_misclass = Some(excess_misclassification(f, target, density, nodes, seed)?);
    Ok(report)
}
