use nalgebra::{DMatrix, SymmetricEigen};

/// Probabilists' Gauss–Hermite rule: `E[φ(G)] ≈ Σ_k w_k φ(x_k)` for
/// `G ~ N(0,1)`, exact for polynomials of degree `< 2n`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch: eigen-decomposition of the Jacobi matrix with
    /// off-diagonal `√k`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let jac = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let nodes = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1 / total).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Self {
            nodes,
            weights,
            log_weights,
        }
    }

    /// `E[φ(μ + s·G)]`.
    pub fn expect(&self, mu: f64, s: f64, phi: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * phi(mu + s * x)).sum()
    }

    /// `log E[exp(ψ(μ + s·G))]`, evaluated as a log-sum-exp.
    pub fn log_expect_exp(&self, mu: f64, s: f64, psi: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.log_weights)
            .map(|(x, lw)| lw + psi(mu + s * x))
            .collect();
        log_sum_exp(&terms)
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let gh = GaussHermite::new(20);
        assert!((gh.expect(0.0, 1.0, |_| 1.0) - 1.0).abs() < 1e-13);
        assert!(gh.expect(0.0, 1.0, |x| x).abs() < 1e-13);
        assert!((gh.expect(0.0, 1.0, |x| x * x) - 1.0).abs() < 1e-12);
        assert!((gh.expect(0.0, 1.0, |x| x.powi(4)) - 3.0).abs() < 1e-11);
        assert!((gh.expect(0.0, 1.0, |x| x.powi(10)) - 945.0).abs() < 1e-8);
    }

    #[test]
    fn lognormal_mean() {
        let gh = GaussHermite::new(48);
        let v = gh.log_expect_exp(0.3, 1.5, |x| x);
        assert!((v - (0.3 + 0.5 * 1.5 * 1.5)).abs() < 1e-12);
    }

    #[test]
    fn lse_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
