/// Quadrature rule on the reference triangle `{ξ ≥ 0, η ≥ 0, ξ + η ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// `(ξ, η)` points.
    pub points: Vec<[f64; 2]>,
    /// Weights; they sum to the reference area 1/2.
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    /// Six-point symmetric rule, exact through degree 4 (Dunavant).
    pub fn degree4() -> Self {
        const A: f64 = 0.445_948_490_915_964_886;
        const WA: f64 = 0.223_381_589_678_011_466;
        const B: f64 = 0.091_576_213_509_770_743;
        const WB: f64 = 0.109_951_743_655_321_868;
        let points = vec![
            [A, A],
            [1.0 - 2.0 * A, A],
            [A, 1.0 - 2.0 * A],
            [B, B],
            [1.0 - 2.0 * B, B],
            [B, 1.0 - 2.0 * B],
        ];
        let weights = [WA, WA, WA, WB, WB, WB].iter().map(|w| 0.5 * w).collect();
        Self { points, weights, degree: 4 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Barycentric coordinates `(1 - ξ - η, ξ, η)` of point `q`.
    pub fn barycentric(&self, q: usize) -> [f64; 3] {
        let [xi, eta] = self.points[q];
        [1.0 - xi - eta, xi, eta]
    }
}

/// Number of points of the rule used by every assembly routine.
pub const POINTS_PER_ELEMENT: usize = 6;

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(k: u32) -> f64 {
        (1..=k).map(f64::from).product()
    }

    #[test]
    fn weights_positive_and_sum_to_area() {
        let r = QuadratureRule::degree4();
        assert_eq!(r.len(), POINTS_PER_ELEMENT);
        assert!(r.weights.iter().all(|&w| w > 0.0));
        assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn exact_for_monomials_through_degree_four() {
        let r = QuadratureRule::degree4();
        for i in 0..=4u32 {
            for j in 0..=(4 - i) {
                // ∫ ξ^i η^j over the reference triangle = i! j! / (i + j + 2)!
                let exact = factorial(i) * factorial(j) / factorial(i + j + 2);
                let approx: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(p, w)| w * p[0].powi(i as i32) * p[1].powi(j as i32))
                    .sum();
                assert!((approx - exact).abs() < 1e-14, "ξ^{i} η^{j}: {approx} vs {exact}");
            }
        }
    }

    #[test]
    fn not_exact_for_degree_six() {
        let r = QuadratureRule::degree4();
        let exact = factorial(6) / factorial(8);
        let approx: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(6)).sum();
        assert!((approx - exact).abs() > 1e-8);
    }
}
