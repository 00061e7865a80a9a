//! Pairwise binary-classification data.
//!
//! The sampler draws i.i.d. triples `(x, x′, y)`: a Bernoulli(`c`) similarity
//! flag decides whether both covariates come from one common part (drawn
//! categorically by part probability) or from two independently chosen
//! parts; covariates are conditional draws from the base density restricted
//! to the chosen part. Under this construction the conditional positive
//! probability has the closed form `η_i = c / ((1−p_i)·c + p_i)` on the
//! diagonal block of part `i` and is identically zero off the diagonal,
//! which the estimators here validate empirically.
//!
//! Samples are generated from per-index RNG streams, so generation is
//! embarrassingly parallel and bit-reproducible.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::partition::{BaseDensity, SmoothPartition};
use crate::rng::{fingerprint, stream};

/// Rejection-sampling attempt cap; exceeding it means a part is far too
/// small to sample conditionally.
pub const MAX_REJECTIONS: usize = 1_000_000;

/// η off the diagonal blocks: dissimilar-part pairs are never labeled +1.
pub const OFF_DIAGONAL_ETA: f64 = 0.0;

/// Immutable configuration of the pair sampler.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    partition: SmoothPartition,
    density: BaseDensity,
    c: f64,
    part_probs: Vec<f64>,
    seed: u64,
}

impl GeneratorConfig {
    /// Validates the sampler parameters. Requires `c ∈ (0, 1]` with
    /// `c > max_i p_i/(1+p_i)` (so that η > 1/2 on every diagonal block)
    /// and strictly positive part probabilities. `c = 1` is the degenerate
    /// all-positive sampler used by some tests.
    pub fn new(
        partition: SmoothPartition,
        density: BaseDensity,
        c: f64,
        part_probs: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if density.dim() != partition.d0() {
            return Err(Error::DimensionMismatch(format!(
                "density dimension {} vs partition d0 {}",
                density.dim(),
                partition.d0()
            )));
        }
        if part_probs.len() != partition.d1() {
            return Err(Error::DimensionMismatch(format!(
                "{} part probabilities for {} parts",
                part_probs.len(),
                partition.d1()
            )));
        }
        if part_probs.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::invalid("part probabilities must be positive"));
        }
        let total: f64 = part_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "part probabilities sum to {total}, expected 1"
            )));
        }
        if !(0.0..=1.0).contains(&c) || c == 0.0 {
            return Err(Error::invalid(format!("c = {c} outside (0, 1]")));
        }
        let threshold = part_probs
            .iter()
            .map(|p| p / (1.0 + p))
            .fold(f64::NEG_INFINITY, f64::max);
        if c <= threshold {
            return Err(Error::invalid(format!(
                "c = {c} must exceed max_i p_i/(1+p_i) = {threshold} to keep η > 1/2"
            )));
        }
        Ok(GeneratorConfig {
            partition,
            density,
            c,
            part_probs,
            seed,
        })
    }

    pub fn partition(&self) -> &SmoothPartition {
        &self.partition
    }

    pub fn density(&self) -> &BaseDensity {
        &self.density
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn part_probs(&self) -> &[f64] {
        &self.part_probs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Conditional positive probability on the diagonal block of `part`
    /// (1-based): `c / ((1−p_i)·c + p_i)`, strictly above 1/2 under the
    /// validated `c` constraint. Off-diagonal η is [`OFF_DIAGONAL_ETA`].
    pub fn analytic_eta(&self, part: usize) -> f64 {
        let p = self.part_probs[part - 1];
        self.c / ((1.0 - p) * self.c + p)
    }

    /// Hard-margin constant of the induced binary problem:
    /// `min over blocks of |2η − 1|`, strictly positive for every valid
    /// configuration.
    pub fn massart_margin(&self) -> f64 {
        let diag = (1..=self.partition.d1())
            .map(|i| 2.0 * self.analytic_eta(i) - 1.0)
            .fold(f64::INFINITY, f64::min);
        diag.min((2.0 * OFF_DIAGONAL_ETA - 1.0).abs())
    }

    /// FNV-1a fingerprint of the full sampler configuration (partition,
    /// density, c, part probabilities, seed); recorded in dataset sidecars.
    pub fn fingerprint(&self) -> u64 {
        let doc = serde_json::json!({
            "partition": self.partition.spec(),
            "density": self.density,
            "c": self.c,
            "part_probs": self.part_probs,
            "seed": self.seed,
        });
        fingerprint(doc.to_string().as_bytes())
    }
}

/// One observation `(x, x′, y)` with `y ∈ {+1, −1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseSample {
    pub x: Vec<f64>,
    pub xp: Vec<f64>,
    pub y: i8,
}

/// An i.i.d. sample of pairs plus the provenance needed to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDataset {
    pub samples: Vec<PairwiseSample>,
    pub fingerprint: u64,
    pub seed: u64,
}

impl PairwiseDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV serialization: header `x_1,…,x_d0,xp_1,…,xp_d0,y`, one row per
    /// sample, shortest-roundtrip float formatting (parsing recovers the
    /// exact bits).
    pub fn to_csv_string(&self) -> String {
        let d0 = self.samples.first().map_or(0, |s| s.x.len());
        let mut out = String::new();
        for k in 1..=d0 {
            let _ = write!(out, "x_{k},");
        }
        for k in 1..=d0 {
            let _ = write!(out, "xp_{k},");
        }
        out.push_str("y\n");
        for s in &self.samples {
            for v in &s.x {
                let _ = write!(out, "{v},");
            }
            for v in &s.xp {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", s.y);
        }
        out
    }

    /// Sidecar document recording how the dataset was produced.
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&Sidecar {
            fingerprint: self.fingerprint,
            seed: self.seed,
            n: self.samples.len(),
        })
        .expect("sidecar serialization cannot fail")
    }

    /// Writes `<path>` as CSV and a `.json` sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        std::fs::write(path.with_extension("json"), self.sidecar_json())?;
        Ok(())
    }

    pub fn from_csv_string(csv: &str) -> Result<Self> {
        let mut lines = csv.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.last() != Some(&"y") || cols.len() < 3 || (cols.len() - 1) % 2 != 0 {
            return Err(Error::Parse(format!("unexpected header '{header}'")));
        }
        let d0 = (cols.len() - 1) / 2;
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 * d0 + 1 {
                return Err(Error::Parse(format!(
                    "row {}: {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    2 * d0 + 1
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 2)))
            };
            let x = fields[..d0].iter().map(|s| parse(s)).collect::<Result<_>>()?;
            let xp = fields[d0..2 * d0]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<_>>()?;
            let y: i8 = fields[2 * d0]
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 2)))?;
            if y != 1 && y != -1 {
                return Err(Error::Parse(format!("row {}: label {y}", lineno + 2)));
            }
            samples.push(PairwiseSample { x, xp, y });
        }
        Ok(PairwiseDataset {
            samples,
            fingerprint: 0,
            seed: 0,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let csv = std::fs::read_to_string(path)?;
        let mut ds = Self::from_csv_string(&csv)?;
        if let Ok(raw) = std::fs::read_to_string(path.with_extension("json")) {
            let sidecar: Sidecar = serde_json::from_str(&raw)?;
            ds.fingerprint = sidecar.fingerprint;
            ds.seed = sidecar.seed;
        }
        Ok(ds)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    fingerprint: u64,
    seed: u64,
    n: usize,
}

/// Draws from the base density conditioned on `classify(x) = part` by
/// rejection. Errors after [`MAX_REJECTIONS`] consecutive misses.
pub fn sample_conditional(
    partition: &SmoothPartition,
    part: usize,
    density: &BaseDensity,
    rng: &mut impl rand::Rng,
) -> Result<Vec<f64>> {
    sample_conditional_counting(partition, part, density, rng).map(|(x, _)| x)
}

/// As [`sample_conditional`], also reporting the number of draws used.
pub fn sample_conditional_counting(
    partition: &SmoothPartition,
    part: usize,
    density: &BaseDensity,
    rng: &mut impl rand::Rng,
) -> Result<(Vec<f64>, usize)> {
    for attempt in 1..=MAX_REJECTIONS {
        let x = density.sample(rng);
        if partition.classify(&x) == part {
            return Ok((x, attempt));
        }
    }
    Err(Error::DegeneratePartition(format!(
        "no sample landed in part {part} after {MAX_REJECTIONS} draws"
    )))
}

fn categorical(probs: &[f64], rng: &mut impl rand::Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i + 1;
        }
    }
    probs.len()
}

/// Draws one `(x, x′, y)` triple from the generator distribution.
pub fn sample_pair(cfg: &GeneratorConfig, rng: &mut impl rand::Rng) -> Result<PairwiseSample> {
    let positive = rng.random::<f64>() < cfg.c;
    let b = categorical(&cfg.part_probs, rng);
    let bp = if positive {
        b
    } else {
        categorical(&cfg.part_probs, rng)
    };
    let x = sample_conditional(&cfg.partition, b, &cfg.density, rng)?;
    let xp = sample_conditional(&cfg.partition, bp, &cfg.density, rng)?;
    Ok(PairwiseSample {
        x,
        xp,
        y: if positive { 1 } else { -1 },
    })
}

/// Generates `n` i.i.d. samples. Sample `i` is produced from the RNG stream
/// `(cfg.seed, i)`, so the output is independent of scheduling and identical
/// across worker counts.
pub fn generate(cfg: &GeneratorConfig, n: usize) -> Result<PairwiseDataset> {
    let drawn = par::map_indexed(n, |i| {
        let mut rng = stream(cfg.seed, i as u64);
        sample_pair(cfg, &mut rng)
    });
    let mut samples = Vec::with_capacity(n);
    for s in drawn {
        samples.push(s?);
    }
    Ok(PairwiseDataset {
        samples,
        fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
    })
}

/// Per-part estimate of `P(y = 1 | both covariates in part i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaEstimate {
    pub estimate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub positives: usize,
    pub total: usize,
}

impl EtaEstimate {
    /// Binomial standard error of the point estimate.
    pub fn std_error(&self) -> f64 {
        (self.estimate * (1.0 - self.estimate) / self.total as f64).sqrt()
    }
}

/// Empirical conditional positive probabilities per diagonal block, plus the
/// off-diagonal tally (which must contain no positives by construction).
#[derive(Debug, Clone)]
pub struct EtaEstimates {
    /// Index `i` holds the estimate for part `i+1`; `None` when the dataset
    /// contains no same-part pair for that part.
    pub per_part: Vec<Option<EtaEstimate>>,
    pub off_diagonal_positives: usize,
    pub off_diagonal_total: usize,
}

fn wilson_interval(positives: usize, total: usize, z: f64) -> (f64, f64) {
    let n = total as f64;
    let p = positives as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Estimates η per part from a dataset: the fraction of `y = +1` among the
/// pairs whose covariates both classify into that part. Wilson intervals at
/// z = 1.96 accompany each ratio.
pub fn empirical_eta(ds: &PairwiseDataset, partition: &SmoothPartition) -> Result<EtaEstimates> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    let d1 = partition.d1();
    let mut pos = vec![0usize; d1];
    let mut tot = vec![0usize; d1];
    let mut off_pos = 0usize;
    let mut off_tot = 0usize;
    for s in &ds.samples {
        let (i, j) = (partition.classify(&s.x), partition.classify(&s.xp));
        if i == j {
            tot[i - 1] += 1;
            if s.y == 1 {
                pos[i - 1] += 1;
            }
        } else {
            off_tot += 1;
            if s.y == 1 {
                off_pos += 1;
            }
        }
    }
    let per_part = (0..d1)
        .map(|i| {
            if tot[i] == 0 {
                None
            } else {
                let (lo, hi) = wilson_interval(pos[i], tot[i], 1.96);
                Some(EtaEstimate {
                    estimate: pos[i] as f64 / tot[i] as f64,
                    wilson_low: lo,
                    wilson_high: hi,
                    positives: pos[i],
                    total: tot[i],
                })
            }
        })
        .collect();
    Ok(EtaEstimates {
        per_part,
        off_diagonal_positives: off_pos,
        off_diagonal_total: off_tot,
    })
}
