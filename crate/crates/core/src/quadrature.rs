//! Gauss rules for normal-weighted and finite-interval integrals.

use std::sync::OnceLock;

/// Nodes and weights with `∫ f(z) φ(z) dz ≈ Σ wᵢ f(zᵢ)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub-Welsch-free construction: Newton iteration on the orthonormal
    /// Hermite recurrence, then rescaled from weight e^{-x²} to φ.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
        let mut weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
        nodes.reverse();
        weights.reverse();
        GaussHermite { nodes, weights }
    }

    /// The 64-point rule shared by the selection-model integrals.
    pub fn standard() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(64))
    }

    /// `E f(Z)` for standard normal `Z`.
    #[inline]
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        GaussLegendre { nodes, weights }
    }

    pub fn standard() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(96))
    }

    /// `∫_a^b f(x) dx`.
    #[inline]
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let gh = GaussHermite::standard();
        assert_eq!(gh.nodes.len(), 64);
        assert!((gh.expect(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!(gh.expect(|z| z).abs() < 1e-13);
        assert!((gh.expect(|z| z * z) - 1.0).abs() < 1e-12);
        assert!((gh.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11);
        assert!((gh.expect(|z| z.powi(6)) - 15.0).abs() < 1e-10);
        // E cos(Z) = e^{-1/2}
        assert!((gh.expect(f64::cos) - (-0.5f64).exp()).abs() < 1e-13);
        assert!(gh.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn legendre_polynomials_and_gaussian() {
        let gl = GaussLegendre::standard();
        assert!((gl.integrate(0.0, 1.0, |x| x.powi(7)) - 0.125).abs() < 1e-14);
        let v = gl.integrate(-9.0, 9.0, crate::stats::phi);
        assert!((v - 1.0).abs() < 1e-13, "{v}");
    }
}
