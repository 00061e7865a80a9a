//! Smooth disjoint partitions of the unit cube.
//!
//! A partition is described by `d_*` Hölder-smooth boundary functions, each
//! thresholding one coordinate (`x_j ≥ h(x_{∖j})` counts as the `+1` side,
//! ties included), together with a total map from sign patterns to part
//! labels. Part labels are 1-based throughout, matching the usual class-label
//! convention; pattern maps and JSON documents use the same labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::stream;

/// Maximum number of boundary functions; partitions needing longer sign
/// patterns are out of scope.
pub const MAX_BOUNDARIES: usize = 8;

/// Closed-form boundary families with analytically known smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    /// `h ≡ c`; params `[c]`.
    Constant,
    /// `h(u) = b + Σ a_i u_i`; params `[b, a_1, …, a_{d0−1}]`.
    Affine,
    /// `h(u) = base + amp·sin(2π·freq·u_1 + phase)`; params
    /// `[base, amp, freq, phase]`.
    Sinusoid,
    /// `h(u) = Σ_k c_k u_1^k`; params `[c_0, …, c_k]`.
    Polynomial,
}

/// One boundary function `h : [0,1]^{d0−1} → ℝ` thresholding coordinate
/// `axis` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderBoundary {
    pub kind: BoundaryKind,
    pub params: Vec<f64>,
    /// 1-based coordinate index being thresholded.
    pub axis: usize,
    /// Nominal smoothness exponent; informational (the families here are
    /// analytic, so any finite `alpha` is valid).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

impl HolderBoundary {
    pub fn constant(axis: usize, c: f64) -> Self {
        HolderBoundary {
            kind: BoundaryKind::Constant,
            params: vec![c],
            axis,
            alpha: 1.0,
        }
    }

    pub fn sinusoid(axis: usize, base: f64, amp: f64, freq: f64, phase: f64) -> Self {
        HolderBoundary {
            kind: BoundaryKind::Sinusoid,
            params: vec![base, amp, freq, phase],
            axis,
            alpha: 2.0,
        }
    }

    fn validate(&self, d0: usize) -> Result<()> {
        if self.axis == 0 || self.axis > d0 {
            return Err(Error::invalid(format!(
                "boundary axis {} outside 1..={d0}",
                self.axis
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("boundary parameters must be finite"));
        }
        let ok = match self.kind {
            BoundaryKind::Constant => self.params.len() == 1,
            BoundaryKind::Affine => !self.params.is_empty() && self.params.len() <= d0,
            BoundaryKind::Sinusoid => self.params.len() == 4,
            BoundaryKind::Polynomial => !self.params.is_empty(),
        };
        if !ok {
            return Err(Error::invalid(format!(
                "{:?} boundary has {} parameters",
                self.kind,
                self.params.len()
            )));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::invalid("boundary alpha must be positive"));
        }
        Ok(())
    }

    /// Evaluates `h` at the reduced point `u = x_{∖axis}` (the full point
    /// minus the thresholded coordinate). Finite for every input.
    pub fn evaluate(&self, u: &[f64]) -> f64 {
        match self.kind {
            BoundaryKind::Constant => self.params[0],
            BoundaryKind::Affine => {
                let mut acc = self.params[0];
                for (a, ui) in self.params[1..].iter().zip(u) {
                    acc += a * ui;
                }
                acc
            }
            BoundaryKind::Sinusoid => {
                let (base, amp, freq, phase) =
                    (self.params[0], self.params[1], self.params[2], self.params[3]);
                let t = u.first().copied().unwrap_or(0.0);
                base + amp * (2.0 * std::f64::consts::PI * freq * t + phase).sin()
            }
            BoundaryKind::Polynomial => {
                let t = u.first().copied().unwrap_or(0.0);
                self.params.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
        }
    }

    /// Closed-form upper bound on the Hölder norm of `h` at exponent
    /// `alpha` over the unit cube: the sum of derivative sup-norms up to
    /// order `α_*` plus the Hölder seminorm of the top derivative, bounded
    /// through the next derivative.
    pub fn holder_norm_bound(&self, alpha: f64) -> f64 {
        let order = if alpha.fract() == 0.0 {
            alpha as usize - 1
        } else {
            alpha.ceil() as usize - 1
        };
        match self.kind {
            BoundaryKind::Constant => self.params[0].abs(),
            BoundaryKind::Affine => {
                let slope: f64 = self.params[1..].iter().map(|a| a.abs()).sum();
                self.params[0].abs() + slope + slope
            }
            BoundaryKind::Sinusoid => {
                let (base, amp, freq) = (self.params[0].abs(), self.params[1].abs(), self.params[2]);
                let omega = 2.0 * std::f64::consts::PI * freq.abs();
                let mut bound = base;
                let mut pow = 1.0;
                for _ in 0..=order {
                    bound += amp * pow;
                    pow *= omega;
                }
                bound + amp * pow
            }
            BoundaryKind::Polynomial => {
                // k-th derivative sup on [0,1] ≤ Σ_{j≥k} |c_j| j!/(j−k)!.
                let deriv_sup = |k: usize| -> f64 {
                    self.params
                        .iter()
                        .enumerate()
                        .skip(k)
                        .map(|(j, c)| {
                            let mut fall = 1.0;
                            for m in 0..k {
                                fall *= (j - m) as f64;
                            }
                            c.abs() * fall
                        })
                        .sum()
                };
                (0..=order).map(deriv_sup).sum::<f64>() + deriv_sup(order + 1)
            }
        }
    }
}

/// One pattern-to-part assignment in a partition document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternEntry {
    /// Sign pattern, entries in `{+1, −1}`, one per boundary.
    pub pattern: Vec<i8>,
    /// 1-based part label.
    pub part: usize,
}

/// Serializable partition document; validated into [`SmoothPartition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub d0: usize,
    pub d1: usize,
    pub boundaries: Vec<HolderBoundary>,
    pub pattern_map: Vec<PatternEntry>,
}

/// A disjoint cover of `[0,1]^{d0}` by `d1` parts, cut out by the sign
/// patterns of the boundary functions. Immutable; `classify` is pure and
/// reentrant.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothPartition {
    d0: usize,
    d1: usize,
    boundaries: Vec<HolderBoundary>,
    pattern_map: Vec<PatternEntry>,
    /// Part label for each of the `2^{d*}` patterns; index bit `k` is set
    /// when `s_k = +1`.
    lookup: Vec<usize>,
}

impl SmoothPartition {
    pub fn new(spec: PartitionSpec) -> Result<Self> {
        let PartitionSpec {
            d0,
            d1,
            boundaries,
            pattern_map,
        } = spec;
        if d0 == 0 {
            return Err(Error::invalid("d0 must be at least 1"));
        }
        if d1 == 0 {
            return Err(Error::invalid("d1 must be at least 1"));
        }
        if boundaries.is_empty() || boundaries.len() > MAX_BOUNDARIES {
            return Err(Error::invalid(format!(
                "need 1..={MAX_BOUNDARIES} boundaries, got {}",
                boundaries.len()
            )));
        }
        for b in &boundaries {
            b.validate(d0)?;
        }
        let d_star = boundaries.len();
        let n_patterns = 1usize << d_star;
        if d1 > n_patterns {
            return Err(Error::invalid(format!(
                "{d1} parts cannot be indexed by {d_star} boundaries (max {n_patterns})"
            )));
        }

        // Totality: every pattern appears exactly once.
        let mut lookup = vec![0usize; n_patterns];
        let mut seen = vec![false; n_patterns];
        for entry in &pattern_map {
            if entry.pattern.len() != d_star {
                return Err(Error::invalid(format!(
                    "pattern {:?} has length {}, expected {d_star}",
                    entry.pattern,
                    entry.pattern.len()
                )));
            }
            if entry.pattern.iter().any(|s| *s != 1 && *s != -1) {
                return Err(Error::invalid(format!(
                    "pattern {:?} has entries outside {{+1,-1}}",
                    entry.pattern
                )));
            }
            if entry.part == 0 || entry.part > d1 {
                return Err(Error::invalid(format!(
                    "part label {} outside 1..={d1}",
                    entry.part
                )));
            }
            let idx = pattern_index(&entry.pattern);
            if seen[idx] {
                return Err(Error::invalid(format!(
                    "duplicate pattern {:?}",
                    entry.pattern
                )));
            }
            seen[idx] = true;
            lookup[idx] = entry.part;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid(format!(
                "pattern map is not total: {} of {n_patterns} patterns assigned",
                seen.iter().filter(|s| **s).count()
            )));
        }
        // Surjectivity onto 1..=d1.
        let mut hit = vec![false; d1];
        for &part in &lookup {
            hit[part - 1] = true;
        }
        if let Some(miss) = hit.iter().position(|h| !h) {
            return Err(Error::invalid(format!(
                "part {} is not reachable from any pattern",
                miss + 1
            )));
        }

        Ok(SmoothPartition {
            d0,
            d1,
            boundaries,
            pattern_map,
            lookup,
        })
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn boundaries(&self) -> &[HolderBoundary] {
        &self.boundaries
    }

    pub fn spec(&self) -> PartitionSpec {
        PartitionSpec {
            d0: self.d0,
            d1: self.d1,
            boundaries: self.boundaries.clone(),
            pattern_map: self.pattern_map.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.spec())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: PartitionSpec = serde_json::from_str(json)?;
        SmoothPartition::new(spec)
    }

    /// Part label of `x`, in `1..=d1`. Total: every point gets exactly one
    /// label; boundary points resolve to the `≥` side.
    pub fn classify(&self, x: &[f64]) -> usize {
        assert_eq!(x.len(), self.d0, "point dimension mismatch");
        let mut idx = 0usize;
        let mut rest = Vec::with_capacity(self.d0.saturating_sub(1));
        for (k, b) in self.boundaries.iter().enumerate() {
            rest.clear();
            let j = b.axis - 1;
            rest.extend_from_slice(&x[..j]);
            rest.extend_from_slice(&x[j + 1..]);
            if x[j] >= b.evaluate(&rest) {
                idx |= 1 << k;
            }
        }
        self.lookup[idx]
    }

    /// Indicator of part `label` at `x`; errors on an out-of-range label.
    pub fn indicator(&self, label: usize, x: &[f64]) -> Result<u8> {
        if label == 0 || label > self.d1 {
            return Err(Error::invalid(format!(
                "part label {label} outside 1..={}",
                self.d1
            )));
        }
        Ok(u8::from(self.classify(x) == label))
    }

    /// True when some boundary surface passes within vertical distance
    /// `delta` of `x`.
    pub fn near_boundary(&self, x: &[f64], delta: f64) -> bool {
        let mut rest = Vec::with_capacity(self.d0.saturating_sub(1));
        for b in &self.boundaries {
            rest.clear();
            let j = b.axis - 1;
            rest.extend_from_slice(&x[..j]);
            rest.extend_from_slice(&x[j + 1..]);
            if (x[j] - b.evaluate(&rest)).abs() <= delta {
                return true;
            }
        }
        false
    }

    /// Monte-Carlo estimates of the part probabilities under `density`.
    /// The estimates sum to exactly 1; binomial standard errors come along.
    /// A part with zero hits is degenerate (it cannot be conditionally
    /// sampled) and is reported as an error.
    pub fn part_probabilities(
        &self,
        density: &BaseDensity,
        n_mc: usize,
        seed: u64,
    ) -> Result<PartProbabilities> {
        if n_mc < 1000 {
            return Err(Error::invalid(format!(
                "part probability estimation needs n_mc ≥ 1000, got {n_mc}"
            )));
        }
        if density.dim() != self.d0 {
            return Err(Error::DimensionMismatch(format!(
                "density dimension {} vs partition d0 {}",
                density.dim(),
                self.d0
            )));
        }
        let counts = par::sum_vectors(n_mc, self.d1, |i, out| {
            let mut rng = stream(seed, i as u64);
            let x = density.sample(&mut rng);
            out[self.classify(&x) - 1] += 1.0;
        });
        let n = n_mc as f64;
        let mut probs: Vec<f64> = counts.iter().map(|c| c / n).collect();
        if let Some(zero) = counts.iter().position(|c| *c == 0.0) {
            return Err(Error::DegeneratePartition(format!(
                "part {} received no samples out of {n_mc}",
                zero + 1
            )));
        }
        // Pin the exact-sum postcondition on the last coordinate.
        let head: f64 = probs[..self.d1 - 1].iter().sum();
        probs[self.d1 - 1] = 1.0 - head;
        let std_errors = probs.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
        Ok(PartProbabilities {
            probs,
            std_errors,
            n_mc,
        })
    }
}

fn pattern_index(pattern: &[i8]) -> usize {
    pattern
        .iter()
        .enumerate()
        .fold(0, |acc, (k, s)| if *s == 1 { acc | (1 << k) } else { acc })
}

/// Result of [`SmoothPartition::part_probabilities`].
#[derive(Debug, Clone)]
pub struct PartProbabilities {
    pub probs: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_mc: usize,
}

/// Base covariate density on `[0,1]^{d0}`. Positive and continuous with unit
/// total mass; currently only the uniform density, for which the sup-norm
/// constant is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseDensity {
    Uniform { d0: usize },
}

impl BaseDensity {
    pub fn uniform(d0: usize) -> Self {
        BaseDensity::Uniform { d0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseDensity::Uniform { d0 } => *d0,
        }
    }

    /// `‖p_X‖_{L∞}` in closed form.
    pub fn sup_norm(&self) -> f64 {
        match self {
            BaseDensity::Uniform { .. } => 1.0,
        }
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        match self {
            BaseDensity::Uniform { d0 } => {
                debug_assert_eq!(x.len(), *d0);
                if x.iter().all(|v| (0.0..=1.0).contains(v)) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        match self {
            BaseDensity::Uniform { d0 } => (0..*d0).map(|_| rng.random::<f64>()).collect(),
        }
    }
}

/// Two halves of the square split by `x_2 ≥ level`; the workhorse fixture.
pub fn split_square(level: f64) -> Result<SmoothPartition> {
    SmoothPartition::new(PartitionSpec {
        d0: 2,
        d1: 2,
        boundaries: vec![HolderBoundary::constant(2, level)],
        pattern_map: vec![
            PatternEntry {
                pattern: vec![1],
                part: 1,
            },
            PatternEntry {
                pattern: vec![-1],
                part: 2,
            },
        ],
    })
}

/// Three horizontal bands of the square cut by two sinusoidal boundaries on
/// `x_2`. The impossible sign pattern (below the lower boundary yet above
/// the upper) is mapped to the middle band; it carries no mass because the
/// boundaries never cross.
pub fn sinusoid_bands(lower: f64, upper: f64, amp: f64) -> Result<SmoothPartition> {
    SmoothPartition::new(PartitionSpec {
        d0: 2,
        d1: 3,
        boundaries: vec![
            HolderBoundary::sinusoid(2, lower, amp, 1.0, 0.0),
            HolderBoundary::sinusoid(2, upper, amp, 1.0, std::f64::consts::FRAC_PI_2),
        ],
        pattern_map: vec![
            PatternEntry {
                pattern: vec![-1, -1],
                part: 1,
            },
            PatternEntry {
                pattern: vec![1, -1],
                part: 2,
            },
            PatternEntry {
                pattern: vec![1, 1],
                part: 3,
            },
            PatternEntry {
                pattern: vec![-1, 1],
                part: 2,
            },
        ],
    })
}
