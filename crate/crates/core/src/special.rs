//! Normal distribution functions with tail-safe variants, and Gauss–Hermite
//! quadrature rules.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use libm::erfc;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument `erfc` underflows; `ln_norm_cdf` switches to the
/// asymptotic series.
const LOG_CDF_ASYMPTOTIC: f64 = -37.0;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// `ln Φ(x)`, finite for every finite `x`.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 5.0 {
        return (-norm_sf(x)).ln_1p();
    }
    if x >= LOG_CDF_ASYMPTOTIC {
        return norm_cdf(x).ln();
    }
    // Mills-ratio expansion: Φ(x) ≈ φ(x)/|x| · (1 - 1/x² + 3/x⁴ - 15/x⁶)
    let x2 = x * x;
    let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + series.ln()
}

/// `Φ(hi) - Φ(lo)` for `lo <= hi`, evaluated on whichever side of zero
/// avoids cancellation.
pub fn norm_cdf_diff(lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan());
    let diff = if lo >= 0.0 {
        norm_sf(lo) - norm_sf(hi)
    } else if hi <= 0.0 {
        norm_cdf(hi) - norm_cdf(lo)
    } else {
        1.0 - norm_cdf(lo) - norm_sf(hi)
    };
    diff.max(0.0)
}

/// `ln(Φ(hi) - Φ(lo))`, stable even when both CDF values underflow.
pub fn ln_norm_cdf_diff(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    // Reflect so the interval sits in the lower tail, where ln Φ is exact.
    let (a, b) = if lo > 0.0 { (-hi, -lo) } else { (lo, hi) };
    if b > 0.0 {
        return norm_cdf_diff(a, b).ln();
    }
    let lb = ln_norm_cdf(b);
    let la = ln_norm_cdf(a);
    lb + (-(la - lb).exp()).ln_1p()
}

/// Quantile of the standard normal.
pub fn norm_ppf(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

/// Gauss–Hermite rule for `∫ e^{-x²} f(x) dx ≈ Σ wᵢ f(xᵢ)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots of the physicists' Hermite polynomial by Newton iteration on the
    /// orthonormal three-term recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        const EPS: f64 = 1e-14;
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= EPS {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        GaussHermite { nodes, weights }
    }

    /// The 32-node rule, built once.
    pub fn default_rule() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(32))
    }

    /// `E[g(u)]` for `u ~ N(0, std²)`.
    pub fn expect_normal<F: Fn(f64) -> f64>(&self, std: f64, g: F) -> f64 {
        let scale = std::f64::consts::SQRT_2 * std;
        let total: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(scale * x))
            .sum();
        total / PI.sqrt()
    }
}
