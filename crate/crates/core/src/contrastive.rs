//! The contrastive loss stack.
//!
//! `ρ_f(x,x′) = ‖f(x) − f(x′)‖²` is rescaled by the affine `ψ` into a binary
//! classifier on pairs, and the hinge loss `ℓ_f = max{0, 1 − y·ψ∘ρ_f}`
//! scores it against the similarity label. The oracle map `f*` sends each
//! point to the vertex of its part; it minimizes the population risk, and
//! `ψ∘ρ_{f*}` is exactly the Bayes sign of the pair distribution.
//!
//! Distances are evaluated in coefficient space through the identity
//! `‖f(x) − f(x′)‖² = (d1/d)·Σ_i (g_i(x) − g_i(x′))²`, which holds pointwise
//! for simplex-valued maps. For one-hot coefficient vectors the coefficient
//! route is exact in floating point: same-part pairs give `ρ = 0` and
//! cross-part pairs give `ρ = D²` bitwise, so the Bayes-sign identity checks
//! below hold with zero tolerance. The point-space route stays available via
//! [`SimplexFrame::embed`] and is used as the independent cross-check in the
//! evaluation module.

use crate::error::{Error, Result};
use crate::pairgen::{sample_pair, GeneratorConfig, PairwiseDataset, PairwiseSample};
use crate::par;
use crate::partition::SmoothPartition;
use crate::rng::stream;
use crate::simplex::SimplexFrame;
use crate::simplexnet::SimplexNet;

/// A measurable map from covariates into the simplex, reported through its
/// barycentric coefficients (a probability vector of length `d1`).
pub trait SimplexMap: Sync {
    fn d1(&self) -> usize;

    /// Barycentric coefficients of `f(x)`.
    fn coefficients(&self, x: &[f64]) -> Vec<f64>;

    /// The embedded point `f(x) ∈ Δ^d`.
    fn point(&self, frame: &SimplexFrame, x: &[f64]) -> Vec<f64> {
        frame.embed_unchecked(&self.coefficients(x))
    }
}

impl<T: SimplexMap + ?Sized> SimplexMap for &T {
    fn d1(&self) -> usize {
        (**self).d1()
    }

    fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        (**self).coefficients(x)
    }
}

impl SimplexMap for SimplexNet {
    fn d1(&self) -> usize {
        self.frame.d1()
    }

    fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        SimplexNet::coefficients(self, x)
    }
}

/// The oracle contrastive map of a partition: `f*(x) = v_{classify(x)}`.
#[derive(Debug, Clone)]
pub struct ContrastiveTarget {
    partition: SmoothPartition,
    frame: SimplexFrame,
}

impl ContrastiveTarget {
    pub fn new(partition: SmoothPartition) -> Result<Self> {
        let frame = SimplexFrame::build(partition.d1())?;
        Ok(ContrastiveTarget { partition, frame })
    }

    pub fn partition(&self) -> &SmoothPartition {
        &self.partition
    }

    pub fn frame(&self) -> &SimplexFrame {
        &self.frame
    }

    pub fn classify(&self, x: &[f64]) -> usize {
        self.partition.classify(x)
    }

    /// The vertex-permuted variant `f̃* = T ∘ f*` with `T(v_j) = v_{j+shift}`
    /// (cyclically). For any `shift ≢ 0` it disagrees with `f*` everywhere
    /// in point space while inducing the identical pair classifier.
    pub fn permuted(&self, shift: usize) -> PermutedTarget {
        PermutedTarget {
            target: self.clone(),
            shift: shift % self.frame.d1(),
        }
    }
}

impl SimplexMap for ContrastiveTarget {
    fn d1(&self) -> usize {
        self.frame.d1()
    }

    fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.frame.d1()];
        g[self.partition.classify(x) - 1] = 1.0;
        g
    }
}

/// `f̃* = T ∘ f*` for the cyclic vertex permutation; see
/// [`ContrastiveTarget::permuted`].
#[derive(Debug, Clone)]
pub struct PermutedTarget {
    target: ContrastiveTarget,
    shift: usize,
}

impl SimplexMap for PermutedTarget {
    fn d1(&self) -> usize {
        self.target.d1()
    }

    fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        let d1 = self.target.d1();
        let mut g = vec![0.0; d1];
        let part = self.target.partition.classify(x) - 1;
        g[(part + self.shift) % d1] = 1.0;
        g
    }
}

/// The constant map to the simplex centroid (uniform coefficients; the
/// embedded point is the origin).
#[derive(Debug, Clone, Copy)]
pub struct CentroidMap {
    pub d1: usize,
}

impl SimplexMap for CentroidMap {
    fn d1(&self) -> usize {
        self.d1
    }

    fn coefficients(&self, _x: &[f64]) -> Vec<f64> {
        vec![1.0 / self.d1 as f64; self.d1]
    }
}

/// Pointwise convex combination `λ·a + (1−λ)·b` of two simplex maps; stays
/// in the simplex for `λ ∈ [0,1]`.
#[derive(Debug, Clone)]
pub struct BlendMap<A, B> {
    pub a: A,
    pub b: B,
    pub lambda: f64,
}

impl<A: SimplexMap, B: SimplexMap> SimplexMap for BlendMap<A, B> {
    fn d1(&self) -> usize {
        self.a.d1()
    }

    fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        let ga = self.a.coefficients(x);
        let gb = self.b.coefficients(x);
        ga.iter()
            .zip(&gb)
            .map(|(a, b)| self.lambda * a + (1.0 - self.lambda) * b)
            .collect()
    }
}

/// Squared distance `‖f(x) − f(x′)‖²`, computed in coefficient space.
/// Always in `[0, D²]` for simplex-valued maps.
pub fn rho<F: SimplexMap + ?Sized>(frame: &SimplexFrame, f: &F, x: &[f64], xp: &[f64]) -> f64 {
    let ga = f.coefficients(x);
    let gb = f.coefficients(xp);
    rho_from_coefficients(frame, &ga, &gb)
}

/// The coefficient form `(d1/d)·Σ (g_i − g_i′)²`.
pub fn rho_from_coefficients(frame: &SimplexFrame, ga: &[f64], gb: &[f64]) -> f64 {
    let sum: f64 = ga.iter().zip(gb).map(|(a, b)| (a - b) * (a - b)).sum();
    frame.coeff_ratio() * sum
}

/// The affine rescaling `ψ(s) = 1 − 2·D⁻²·s`, mapping `[0, D²]` onto
/// `[−1, +1]`.
pub fn psi(frame: &SimplexFrame, s: f64) -> f64 {
    1.0 - 2.0 * (s / frame.diameter_sq())
}

/// Hinge loss `ℓ_f(x, x′, y) = max{0, 1 − y·ψ∘ρ_f(x, x′)}`, with values in
/// `[0, 2]`.
pub fn hinge_loss<F: SimplexMap + ?Sized>(
    frame: &SimplexFrame,
    f: &F,
    sample: &PairwiseSample,
) -> f64 {
    let r = rho(frame, f, &sample.x, &sample.xp);
    hinge_from_rho(frame, r, sample.y)
}

/// Hinge loss as a function of the precomputed `ρ` value.
pub fn hinge_from_rho(frame: &SimplexFrame, rho: f64, y: i8) -> f64 {
    (1.0 - f64::from(y) * psi(frame, rho)).max(0.0)
}

/// Loss value together with `dℓ/dρ`, using the zero-subgradient convention
/// at the hinge kink.
pub(crate) fn hinge_grad_factor(frame: &SimplexFrame, rho: f64, y: i8) -> (f64, f64) {
    let margin = 1.0 - f64::from(y) * psi(frame, rho);
    if margin > 0.0 {
        (margin, f64::from(y) * 2.0 / frame.diameter_sq())
    } else {
        (0.0, 0.0)
    }
}

/// Mean hinge loss over a dataset.
pub fn empirical_risk<F: SimplexMap + ?Sized>(
    frame: &SimplexFrame,
    f: &F,
    ds: &PairwiseDataset,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    let total = par::sum_indexed(ds.len(), |i| hinge_loss(frame, f, &ds.samples[i]));
    Ok(total / ds.len() as f64)
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Paired Monte-Carlo estimate of the excess hinge risk
/// `E_P[ℓ_f] − E_P[ℓ_{f*}]`. Both losses are evaluated on the same sampled
/// pairs (common random numbers), so `f = f*` yields exactly zero and small
/// excesses are resolved without variance from the baseline.
pub fn excess_risk_mc<F: SimplexMap + ?Sized>(
    f: &F,
    target: &ContrastiveTarget,
    cfg: &GeneratorConfig,
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_mc < 10_000 {
        return Err(Error::invalid(format!(
            "excess risk estimation needs n_mc ≥ 10⁴, got {n_mc}"
        )));
    }
    let frame = target.frame();
    let moments = par::sum_vectors(n_mc, 2, |i, out| {
        let mut rng = stream(seed, i as u64);
        let sample = sample_pair(cfg, &mut rng).expect("validated generator cannot degenerate");
        let delta = hinge_loss(frame, f, &sample) - hinge_loss(frame, target, &sample);
        out[0] += delta;
        out[1] += delta * delta;
    });
    let n = n_mc as f64;
    let mean = moments[0] / n;
    let var = ((moments[1] / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
        n: n_mc,
    })
}

/// Outcome of the Bayes-sign identity check.
#[derive(Debug, Clone)]
pub struct BayesSignReport {
    pub checked: usize,
    pub violations: usize,
    /// First offending pair, with the computed `ψ∘ρ_{f*}` value.
    pub counterexample: Option<(Vec<f64>, Vec<f64>, f64)>,
}

impl BayesSignReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Verifies, over `n_pairs` draws from the generator, the three-way identity
/// `ψ∘ρ_{f*}(x,x′) = +1 ⟺ classify(x) = classify(x′) ⟺ sign(2η − 1) = +1`,
/// and that the classifier value is exactly `±1` (which the coefficient
/// route delivers bitwise). Every discrepancy counts as a violation.
pub fn bayes_sign_check(
    target: &ContrastiveTarget,
    cfg: &GeneratorConfig,
    n_pairs: usize,
    seed: u64,
) -> Result<BayesSignReport> {
    if n_pairs == 0 {
        return Err(Error::invalid("need at least one pair"));
    }
    let frame = target.frame();
    let flags = par::map_indexed(n_pairs, |i| {
        let mut rng = stream(seed, i as u64);
        let s = sample_pair(cfg, &mut rng).expect("validated generator cannot degenerate");
        let value = psi(frame, rho(frame, target, &s.x, &s.xp));
        let same = target.classify(&s.x) == target.classify(&s.xp);
        // Bayes sign from the analytic η: strictly above 1/2 on diagonal
        // blocks, zero elsewhere.
        let eta = if same {
            cfg.analytic_eta(target.classify(&s.x))
        } else {
            crate::pairgen::OFF_DIAGONAL_ETA
        };
        let bayes = if 2.0 * eta - 1.0 > 0.0 { 1.0 } else { -1.0 };
        let expected = if same { 1.0 } else { -1.0 };
        if value == expected && bayes == expected {
            None
        } else {
            Some((s.x, s.xp, value))
        }
    });
    let mut violations = 0;
    let mut counterexample = None;
    for flag in flags {
        if let Some(bad) = flag {
            violations += 1;
            counterexample.get_or_insert(bad);
        }
    }
    Ok(BayesSignReport {
        checked: n_pairs,
        violations,
        counterexample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairgen::generate;
    use crate::partition::{split_square, BaseDensity};
    use crate::simplexnet::MlpParams;
    use rand::Rng;

    fn halves_target() -> ContrastiveTarget {
        ContrastiveTarget::new(split_square(0.5).unwrap()).unwrap()
    }

    fn halves_config(c: f64, seed: u64) -> GeneratorConfig {
        GeneratorConfig::new(
            split_square(0.5).unwrap(),
            BaseDensity::uniform(2),
            c,
            vec![0.5, 0.5],
            seed,
        )
        .unwrap()
    }

    fn random_net(seed: u64) -> SimplexNet {
        let mlp = MlpParams::he_init(vec![2, 5, 4, 2], 10.0, 4.0, seed).unwrap();
        SimplexNet::new(mlp, SimplexFrame::build(2).unwrap()).unwrap()
    }

    #[test]
    fn target_sends_each_point_to_its_vertex() {
        let target = halves_target();
        let frame = target.frame();
        for x in [[0.2, 0.9], [0.7, 0.1]] {
            let g = target.coefficients(&x);
            assert_eq!(g.iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(g.iter().filter(|v| **v == 0.0).count(), 1);
            let point = target.point(frame, &x);
            let vertex = frame.vertex(target.classify(&x) - 1);
            assert_eq!(point, vertex.to_vec());
        }
    }

    #[test]
    fn rho_is_exact_on_the_target() {
        let target = halves_target();
        let frame = target.frame();
        let (above, below) = ([0.5, 0.9], [0.5, 0.1]);
        assert_eq!(rho(frame, &target, &above, &above), 0.0);
        assert_eq!(rho(frame, &target, &above, &below), frame.diameter_sq());
        let centroid = CentroidMap { d1: 2 };
        assert_eq!(rho(frame, &centroid, &above, &below), 0.0);
    }

    #[test]
    fn psi_hits_the_three_anchor_points() {
        let frame = SimplexFrame::build(4).unwrap();
        let dsq = frame.diameter_sq();
        assert_eq!(psi(&frame, 0.0), 1.0);
        assert_eq!(psi(&frame, dsq), -1.0);
        assert_eq!(psi(&frame, dsq / 2.0), 0.0);
    }

    #[test]
    fn hinge_on_the_target_takes_only_the_extreme_values() {
        let target = halves_target();
        let frame = target.frame();
        let same = PairwiseSample {
            x: vec![0.5, 0.9],
            xp: vec![0.2, 0.8],
            y: 1,
        };
        let cross = PairwiseSample {
            x: vec![0.5, 0.9],
            xp: vec![0.2, 0.2],
            y: 1,
        };
        assert_eq!(hinge_loss(frame, &target, &same), 0.0);
        assert_eq!(hinge_loss(frame, &target, &cross), 2.0);
        let mut neg = same;
        neg.y = -1;
        assert_eq!(hinge_loss(frame, &target, &neg), 2.0);
    }

    #[test]
    fn loss_stays_within_range_for_random_nets() {
        let mut rng = stream(21, 0);
        for trial in 0..200 {
            let net = random_net(trial);
            let sample = PairwiseSample {
                x: vec![rng.random(), rng.random()],
                xp: vec![rng.random(), rng.random()],
                y: if rng.random::<f64>() < 0.5 { 1 } else { -1 },
            };
            let frame = &net.frame;
            let r = rho(frame, &net, &sample.x, &sample.xp);
            assert!(r >= 0.0 && r <= frame.diameter_sq() + 1e-12);
            let l = hinge_loss(frame, &net, &sample);
            assert!(l >= 0.0 && l <= 2.0 + 1e-12, "loss {l}");
        }
    }

    #[test]
    fn empirical_risk_of_target_on_all_positive_data_is_zero() {
        let cfg = halves_config(1.0, 31);
        let ds = generate(&cfg, 3000).unwrap();
        let target = halves_target();
        assert_eq!(empirical_risk(target.frame(), &target, &ds).unwrap(), 0.0);
    }

    #[test]
    fn empirical_risk_of_centroid_counts_negatives() {
        let cfg = halves_config(0.7, 32);
        let ds = generate(&cfg, 20_000).unwrap();
        let target = halves_target();
        let centroid = CentroidMap { d1: 2 };
        let risk = empirical_risk(target.frame(), &centroid, &ds).unwrap();
        let frac_neg =
            ds.samples.iter().filter(|s| s.y == -1).count() as f64 / ds.len() as f64;
        assert!((risk - 2.0 * frac_neg).abs() <= 1e-12);
        assert!(risk >= 0.0 && risk <= 2.0);
    }

    #[test]
    fn paired_excess_risk_is_exactly_zero_for_the_target_and_its_permutations() {
        let cfg = halves_config(0.9, 33);
        let target = halves_target();
        let on_itself = excess_risk_mc(&target, &target, &cfg, 10_000, 5).unwrap();
        assert_eq!(on_itself.value, 0.0);
        assert_eq!(on_itself.std_error, 0.0);

        let permuted = target.permuted(1);
        let est = excess_risk_mc(&permuted, &target, &cfg, 10_000, 5).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn centroid_has_strictly_positive_excess_risk() {
        let cfg = halves_config(0.9, 34);
        let target = halves_target();
        let centroid = CentroidMap { d1: 2 };
        let est = excess_risk_mc(&centroid, &target, &cfg, 100_000, 6).unwrap();
        // Analytic value: the centroid classifier predicts +1 everywhere, so
        // it pays 2 on exactly the cross-part negatives: 2·(1−c)·(1−Σp²).
        let want = 2.0 * (1.0 - 0.9) * 0.5;
        assert!(est.value > 3.0 * est.std_error);
        assert!((est.value - want).abs() <= 4.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn random_perturbations_never_beat_the_population_minimizer() {
        let cfg = halves_config(0.85, 35);
        let target = halves_target();
        for trial in 0..8 {
            let net = random_net(500 + trial);
            let blend = BlendMap {
                a: &target,
                b: &net,
                lambda: 0.5 + 0.04 * trial as f64,
            };
            let est = excess_risk_mc(&blend, &target, &cfg, 20_000, 40 + trial).unwrap();
            assert!(
                est.value >= -3.0 * est.std_error,
                "trial {trial}: {est:?}"
            );
        }
    }

    #[test]
    fn bayes_sign_identity_has_zero_violations() {
        let cfg = halves_config(0.9, 36);
        let target = halves_target();
        let report = bayes_sign_check(&target, &cfg, 10_000, 7).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checked, 10_000);
    }

    #[test]
    fn lipschitz_chain_bounds_hold_on_random_pairs() {
        let target = halves_target();
        let frame = target.frame();
        let d = frame.diameter();
        let net_a = random_net(61);
        let net_b = random_net(62);
        let mut rng = stream(63, 0);
        for _ in 0..500 {
            let sample = PairwiseSample {
                x: vec![rng.random(), rng.random()],
                xp: vec![rng.random(), rng.random()],
                y: if rng.random::<f64>() < 0.5 { 1 } else { -1 },
            };
            let la = hinge_loss(frame, &net_a, &sample);
            let lb = hinge_loss(frame, &net_b, &sample);
            let ra = rho(frame, &net_a, &sample.x, &sample.xp);
            let rb = rho(frame, &net_b, &sample.x, &sample.xp);
            let gap_x = crate::simplex::dist_sq(
                &net_a.point(frame, &sample.x),
                &net_b.point(frame, &sample.x),
            )
            .sqrt();
            let gap_xp = crate::simplex::dist_sq(
                &net_a.point(frame, &sample.xp),
                &net_b.point(frame, &sample.xp),
            )
            .sqrt();
            let sup_gap = gap_x.max(gap_xp);
            let slack = 1e-12;
            assert!((la - lb).abs() <= 2.0 / frame.diameter_sq() * (ra - rb).abs() + slack);
            assert!((ra - rb).abs() <= 2.0 * d * (gap_x + gap_xp) + slack);
            assert!((la - lb).abs() <= 8.0 / d * sup_gap + slack);
        }
    }
}
