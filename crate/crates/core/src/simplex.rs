//! Regular simplex frames and barycentric coordinates.
//!
//! A frame holds the `d1` unit vertices of a regular simplex centered at the
//! origin of `ℝ^d` (`d = d1 − 1`), together with the derived constants used
//! by the loss stack: the diameter `D` (the common vertex-to-vertex
//! distance) and `D_proj` (the distance from a vertex to the opposite face).
//!
//! Orientation is free: every downstream quantity (distances, inner products
//! against vertices) is invariant under orthogonal transforms, so the
//! construction just has to be deterministic. We build the centered standard
//! simplex in `ℝ^{d1}` and express it in an orthonormal basis of the
//! zero-sum hyperplane obtained by Gram–Schmidt on the fixed difference
//! vectors `e_k − e_{k+1}`.

use crate::error::{Error, Result};

/// Tolerance for "is a probability vector" checks at the `embed` boundary.
pub const PROB_TOL: f64 = 1e-9;

/// The `d1` vertices of a regular simplex in `ℝ^{d1−1}` plus derived
/// constants. Immutable after construction; cheap to share across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexFrame {
    d1: usize,
    d: usize,
    /// Row i is vertex `v_i`, a unit vector in `ℝ^d`.
    vertices: Vec<Vec<f64>>,
    /// `d1 / d`, the factor in the coefficient form of squared distances.
    coeff_ratio: f64,
    diameter: f64,
    diameter_sq: f64,
    dproj: f64,
}

impl SimplexFrame {
    /// Builds the frame for `d1 ≥ 2` vertices. Deterministic: the same `d1`
    /// always yields bit-identical vertex coordinates.
    pub fn build(d1: usize) -> Result<Self> {
        if d1 < 2 {
            return Err(Error::invalid(format!(
                "simplex frame needs at least 2 vertices, got {d1}"
            )));
        }
        let d = d1 - 1;

        // Orthonormal basis of {x ∈ ℝ^{d1} : Σx = 0} from e_k − e_{k+1}.
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
        for k in 0..d {
            let mut w = vec![0.0; d1];
            w[k] = 1.0;
            w[k + 1] = -1.0;
            for q in &basis {
                let proj: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= proj * qi;
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            for wi in &mut w {
                *wi /= norm;
            }
            basis.push(w);
        }

        // Centered, normalized standard-simplex vertices, written in `basis`.
        let center = 1.0 / d1 as f64;
        let scale = 1.0 / (1.0 - center).sqrt();
        let mut vertices = Vec::with_capacity(d1);
        for i in 0..d1 {
            let mut u = vec![-center; d1];
            u[i] += 1.0;
            for ui in &mut u {
                *ui *= scale;
            }
            let v: Vec<f64> = basis
                .iter()
                .map(|q| u.iter().zip(q).map(|(a, b)| a * b).sum())
                .collect();
            vertices.push(v);
        }

        let coeff_ratio = d1 as f64 / d as f64;
        // ‖v_i − v_j‖² = 2 + 2/d for unit vertices at mutual inner product
        // −1/d; this equals coeff_ratio · 2 and is stored in exactly that
        // form so the coefficient route hits it bitwise.
        let diameter_sq = coeff_ratio * 2.0;
        let diameter = diameter_sq.sqrt();
        let dproj = (d as f64 + 1.0) / d as f64;

        Ok(SimplexFrame {
            d1,
            d,
            vertices,
            coeff_ratio,
            diameter,
            diameter_sq,
            dproj,
        })
    }

    /// Number of vertices (and of barycentric coefficients).
    pub fn d1(&self) -> usize {
        self.d1
    }

    /// Embedding dimension, `d1 − 1`.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    /// Vertex `v_i`, zero-based.
    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i]
    }

    /// Diameter `D`: the common distance between distinct vertices, which is
    /// also the diameter of the whole simplex.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// `D²`, stored as `(d1/d)·2` so that coefficient-route distances of
    /// disjoint one-hot vectors reproduce it exactly.
    pub fn diameter_sq(&self) -> f64 {
        self.diameter_sq
    }

    /// Distance from a vertex to the convex hull of the remaining vertices:
    /// `(d+1)/d`. Validated against a grid-minimization oracle in tests.
    pub fn dproj(&self) -> f64 {
        self.dproj
    }

    /// `d1/d`, the constant relating coefficient-space and point-space
    /// squared distances.
    pub fn coeff_ratio(&self) -> f64 {
        self.coeff_ratio
    }

    /// Barycentric coefficients of an arbitrary point `z ∈ ℝ^d`:
    /// `g_j = (d/d1)(⟨z, v_j⟩ + 1/d)`. The coefficients sum to 1 and
    /// `embed` inverts them exactly (up to roundoff) for any `z`.
    pub fn barycentric(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "point has dimension {}, frame embeds in ℝ^{}",
                z.len(),
                self.d
            )));
        }
        let inv_d = 1.0 / self.d as f64;
        let scale = self.d as f64 / self.d1 as f64;
        Ok(self
            .vertices
            .iter()
            .map(|v| {
                let dot: f64 = z.iter().zip(v).map(|(a, b)| a * b).sum();
                scale * (dot + inv_d)
            })
            .collect())
    }

    /// Embeds a probability vector: `Σ_i g_i v_i ∈ Δ^d`.
    pub fn embed(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_probability(g)?;
        Ok(self.embed_unchecked(g))
    }

    /// `Σ_i g_i v_i` without the probability-vector check; used on hot paths
    /// where the coefficients come straight out of a softmax.
    pub fn embed_unchecked(&self, g: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.d];
        for (gi, v) in g.iter().zip(&self.vertices) {
            for (zk, vk) in z.iter_mut().zip(v) {
                *zk += gi * vk;
            }
        }
        z
    }

    fn check_probability(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.d1 {
            return Err(Error::DimensionMismatch(format!(
                "coefficient vector has length {}, frame has {} vertices",
                g.len(),
                self.d1
            )));
        }
        if g.iter().any(|x| !x.is_finite() || *x < -PROB_TOL) {
            return Err(Error::invalid(
                "coefficients must be finite and nonnegative".to_string(),
            ));
        }
        let s: f64 = g.iter().sum();
        if (s - 1.0).abs() > PROB_TOL {
            return Err(Error::invalid(format!(
                "coefficients sum to {s}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Squared Euclidean distance between two points.
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    const GEOM_TOL: f64 = 1e-12;

    fn frame_invariants(frame: &SimplexFrame) {
        let d1 = frame.d1();
        let d = frame.d();
        // Σ_i v_i = 0 componentwise.
        for k in 0..d {
            let s: f64 = frame.vertices().iter().map(|v| v[k]).sum();
            assert!(s.abs() <= GEOM_TOL, "d1={d1}: centroid component {s}");
        }
        // Unit norms and equal mutual inner products −1/d.
        for i in 0..d1 {
            let n: f64 = frame.vertex(i).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() <= GEOM_TOL, "d1={d1}: ‖v_{i}‖²={n}");
            for j in 0..d1 {
                if i == j {
                    continue;
                }
                let dot: f64 = frame
                    .vertex(i)
                    .iter()
                    .zip(frame.vertex(j))
                    .map(|(a, b)| a * b)
                    .sum();
                assert!(
                    (dot + 1.0 / d as f64).abs() <= GEOM_TOL,
                    "d1={d1}: ⟨v_{i},v_{j}⟩={dot}"
                );
            }
        }
        // All pairwise distances equal the stored diameter.
        for i in 0..d1 {
            for j in (i + 1)..d1 {
                let dist = dist_sq(frame.vertex(i), frame.vertex(j)).sqrt();
                assert!(
                    (dist - frame.diameter()).abs() <= GEOM_TOL,
                    "d1={d1}: ‖v_{i}−v_{j}‖={dist} vs D={}",
                    frame.diameter()
                );
            }
        }
        assert!(frame.dproj() > 0.0 && frame.dproj() <= frame.diameter() + GEOM_TOL);
    }

    #[test]
    fn invariants_hold_for_d1_2_through_16() {
        for d1 in 2..=16 {
            frame_invariants(&SimplexFrame::build(d1).unwrap());
        }
    }

    #[test]
    fn rejects_degenerate_vertex_count() {
        assert!(matches!(
            SimplexFrame::build(1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            SimplexFrame::build(0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn two_vertices_is_the_symmetric_pair_on_the_line() {
        let frame = SimplexFrame::build(2).unwrap();
        assert!((frame.vertex(0)[0] - 1.0).abs() <= GEOM_TOL);
        assert!((frame.vertex(1)[0] + 1.0).abs() <= GEOM_TOL);
        assert_eq!(frame.diameter(), 2.0);
        assert_eq!(frame.dproj(), 2.0);
    }

    #[test]
    fn three_vertices_have_inner_product_minus_half() {
        let frame = SimplexFrame::build(3).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let dot: f64 = frame
                    .vertex(i)
                    .iter()
                    .zip(frame.vertex(j))
                    .map(|(a, b)| a * b)
                    .sum();
                assert!((dot + 0.5).abs() <= GEOM_TOL);
            }
        }
    }

    // Oracle for the d1=3 constants: pairwise squared distances from the
    // Gram matrix (1 on the diagonal, −1/d off it), and D_proj by direct
    // minimization of ‖c·v₂ + (1−c)·v₃ − v₁‖ over a fine grid on [0,1].
    #[test]
    fn three_vertex_constants_match_gram_and_grid_oracles() {
        let frame = SimplexFrame::build(3).unwrap();
        let gram_dist_sq: f64 = 2.0 + 2.0 / 2.0; // ‖v_i‖² + ‖v_j‖² − 2⟨v_i,v_j⟩
        assert!((frame.diameter() - gram_dist_sq.sqrt()).abs() <= GEOM_TOL);
        assert!((frame.diameter() - 3f64.sqrt()).abs() <= GEOM_TOL);

        let mut best = f64::INFINITY;
        let steps = 100_000;
        for k in 0..=steps {
            let c = k as f64 / steps as f64;
            let z: Vec<f64> = frame
                .vertex(1)
                .iter()
                .zip(frame.vertex(2))
                .map(|(a, b)| c * a + (1.0 - c) * b)
                .collect();
            best = best.min(dist_sq(&z, frame.vertex(0)).sqrt());
        }
        assert!((best - 1.5).abs() <= 1e-9, "grid min {best}");
        assert!((frame.dproj() - best).abs() <= 1e-9);
    }

    // Same oracle for d1=4: minimize over a 2-simplex grid of coefficients.
    #[test]
    fn four_vertex_dproj_matches_grid_oracle() {
        let frame = SimplexFrame::build(4).unwrap();
        let mut best = f64::INFINITY;
        let steps = 700;
        for a in 0..=steps {
            for b in 0..=(steps - a) {
                let (ca, cb) = (a as f64 / steps as f64, b as f64 / steps as f64);
                let cc = 1.0 - ca - cb;
                let z: Vec<f64> = (0..3)
                    .map(|k| {
                        ca * frame.vertex(1)[k] + cb * frame.vertex(2)[k] + cc * frame.vertex(3)[k]
                    })
                    .collect();
                best = best.min(dist_sq(&z, frame.vertex(0)).sqrt());
            }
        }
        assert!((frame.dproj() - 4.0 / 3.0).abs() <= GEOM_TOL);
        assert!((best - frame.dproj()).abs() <= 1e-5, "grid min {best}");
    }

    #[test]
    fn vertex_maps_to_one_hot_and_origin_to_uniform() {
        let frame = SimplexFrame::build(5).unwrap();
        let g = frame.barycentric(frame.vertex(2)).unwrap();
        for (i, gi) in g.iter().enumerate() {
            let want = if i == 2 { 1.0 } else { 0.0 };
            assert!((gi - want).abs() <= 1e-12);
        }
        let g0 = frame.barycentric(&vec![0.0; 4]).unwrap();
        for gi in &g0 {
            assert!((gi - 0.2).abs() <= 1e-12);
        }
    }

    #[test]
    fn embed_handles_one_hot_uniform_and_edge_midpoint() {
        let frame = SimplexFrame::build(4).unwrap();
        let mut one_hot = vec![0.0; 4];
        one_hot[1] = 1.0;
        let z = frame.embed(&one_hot).unwrap();
        assert!(dist_sq(&z, frame.vertex(1)) <= 1e-24);

        let uniform = vec![0.25; 4];
        let z0 = frame.embed(&uniform).unwrap();
        assert!(z0.iter().all(|x| x.abs() <= 1e-12));

        let mid = frame.embed(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        for k in 0..3 {
            let want = 0.5 * (frame.vertex(0)[k] + frame.vertex(1)[k]);
            assert!((mid[k] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn embed_rejects_non_probability_input() {
        let frame = SimplexFrame::build(3).unwrap();
        assert!(frame.embed(&[0.5, 0.5]).is_err()); // wrong length
        assert!(frame.embed(&[0.7, 0.7, -0.4]).is_err()); // negative entry
        assert!(frame.embed(&[0.5, 0.4, 0.2]).is_err()); // sums to 1.1
        assert!(frame.barycentric(&[0.0, 0.0, 0.0]).is_err()); // wrong dim
    }

    fn random_prob_vector(rng: &mut impl Rng, d1: usize) -> Vec<f64> {
        // Exponential spacings normalized to the simplex.
        let raw: Vec<f64> = (0..d1).map(|_| -rng.random::<f64>().ln()).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    }

    #[test]
    fn roundtrip_matches_linear_system_oracle() {
        // Oracle: solve [V^T; 1^T] g = [z; 1] by Gaussian elimination with
        // partial pivoting, independently of the closed-form inverse.
        fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
            let n = b.len();
            for col in 0..n {
                let piv = (col..n)
                    .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                    .unwrap();
                a.swap(col, piv);
                b.swap(col, piv);
                for row in (col + 1)..n {
                    let factor = a[row][col] / a[col][col];
                    for k in col..n {
                        a[row][k] -= factor * a[col][k];
                    }
                    b[row] -= factor * b[col];
                }
            }
            let mut x = vec![0.0; n];
            for row in (0..n).rev() {
                let mut acc = b[row];
                for k in (row + 1)..n {
                    acc -= a[row][k] * x[k];
                }
                x[row] = acc / a[row][row];
            }
            x
        }

        let mut rng = stream(2024, 0);
        for &d1 in &[2usize, 3, 5, 8] {
            let frame = SimplexFrame::build(d1).unwrap();
            for _ in 0..250 {
                let g = random_prob_vector(&mut rng, d1);
                let z = frame.embed(&g).unwrap();

                // Closed form.
                let back = frame.barycentric(&z).unwrap();
                let sum: f64 = back.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                for (a, b) in back.iter().zip(&g) {
                    assert!((a - b).abs() <= 1e-10, "d1={d1}: {a} vs {b}");
                }

                // Independent linear-system oracle.
                let mut a = vec![vec![0.0; d1]; d1];
                let mut rhs = vec![0.0; d1];
                for row in 0..d1 - 1 {
                    for col in 0..d1 {
                        a[row][col] = frame.vertex(col)[row];
                    }
                    rhs[row] = z[row];
                }
                a[d1 - 1] = vec![1.0; d1];
                rhs[d1 - 1] = 1.0;
                let oracle = solve(a, rhs);
                for (a, b) in back.iter().zip(&oracle) {
                    assert!((a - b).abs() <= 1e-9);
                }

                // Re-embedding returns the same point.
                let z2 = frame.embed(&back).unwrap();
                assert!(dist_sq(&z, &z2).sqrt() <= 1e-10);
            }
        }
    }

    #[test]
    fn norm_identity_relates_point_and_coefficient_distances() {
        let mut rng = stream(2024, 1);
        for &d1 in &[2usize, 3, 6] {
            let frame = SimplexFrame::build(d1).unwrap();
            for _ in 0..1000 {
                let g = random_prob_vector(&mut rng, d1);
                let h = random_prob_vector(&mut rng, d1);
                let zg = frame.embed(&g).unwrap();
                let zh = frame.embed(&h).unwrap();
                let lhs = dist_sq(&zg, &zh);
                let rhs: f64 =
                    frame.coeff_ratio() * g.iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                assert!((lhs - rhs).abs() <= 1e-10, "d1={d1}: {lhs} vs {rhs}");
            }
        }
    }
}
