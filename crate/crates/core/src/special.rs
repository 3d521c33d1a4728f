//! Log-gamma, digamma and trigamma for positive real arguments.
//!
//! All three shift the argument upward with the standard recurrences until it
//! reaches `ASYMPTOTIC_FROM`, then sum the Bernoulli-number asymptotic series.
//! Non-positive arguments return NaN; the variational code never evaluates
//! them there.

const ASYMPTOTIC_FROM: f64 = 10.0;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut shift = 0.0;
    let mut z = x;
    while z < ASYMPTOTIC_FROM {
        shift += z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // B_{2k} / (2k (2k-1) z^{2k-1})
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2 * (-691.0 / 360_360.0 + inv2 / 156.0))))));
    (z - 0.5) * z.ln() - z + HALF_LN_TWO_PI + series - shift
}

/// Digamma ψ(x) = d/dx ln Γ(x) for x > 0.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    let mut z = x;
    while z < ASYMPTOTIC_FROM {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    // B_{2k} / (2k z^{2k})
    let series = inv2
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 120.0
                    + inv2
                        * (1.0 / 252.0
                            + inv2
                                * (-1.0 / 240.0
                                    + inv2
                                        * (1.0 / 132.0
                                            + inv2 * (-691.0 / 32_760.0 + inv2 / 12.0))))));
    acc + z.ln() - 0.5 / z - series
}

/// Trigamma ψ₁(x) = d²/dx² ln Γ(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    let mut z = x;
    while z < ASYMPTOTIC_FROM {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // B_{2k} / z^{2k+1}
    let series = inv
        * inv2
        * (1.0 / 6.0
            + inv2
                * (-1.0 / 30.0
                    + inv2
                        * (1.0 / 42.0
                            + inv2
                                * (-1.0 / 30.0
                                    + inv2
                                        * (5.0 / 66.0
                                            + inv2 * (-691.0 / 2730.0 + inv2 * 7.0 / 6.0))))));
    acc + inv + 0.5 * inv2 + series
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn known_values() {
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-14);
        assert!((digamma(2.0) - (1.0 - EULER_GAMMA)).abs() < 1e-14);
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!(rel(trigamma(1.0), pi2_6) < 1e-14);
        assert!(rel(trigamma(2.0), pi2_6 - 1.0) < 1e-14);
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!(rel(ln_gamma(0.5), 0.5 * std::f64::consts::PI.ln()) < 1e-14);
        assert!(rel(ln_gamma(10.0), 362_880f64.ln()) < 1e-14);
    }

    #[test]
    fn against_statrs() {
        let mut x = 1e-3;
        while x < 1e4 {
            assert!(
                rel(ln_gamma(x), statrs::function::gamma::ln_gamma(x)) < 1e-12
                    || (ln_gamma(x) - statrs::function::gamma::ln_gamma(x)).abs() < 1e-13,
                "ln_gamma({x})"
            );
            assert!(
                (digamma(x) - statrs::function::gamma::digamma(x)).abs()
                    < 1e-12 * digamma(x).abs().max(1.0),
                "digamma({x})"
            );
            x *= 1.37;
        }
    }

    #[test]
    fn trigamma_matches_series_oracle() {
        // ψ₁(x) = Σ_{k≥0} 1/(x+k)², tail replaced by its integral plus Euler-Maclaurin terms.
        for &x in &[0.1, 0.9, 1.001, 2.0, 3.7, 12.5, 80.0] {
            let n = 200_000usize;
            let mut s = 0.0;
            for k in (0..n).rev() {
                let z = x + k as f64;
                s += 1.0 / (z * z);
            }
            let z = x + n as f64;
            s += 1.0 / z + 0.5 / (z * z) + 1.0 / (6.0 * z * z * z);
            assert!(rel(trigamma(x), s) < 1e-12, "trigamma({x}) {} vs {}", trigamma(x), s);
        }
    }

    #[test]
    fn derivatives_are_consistent() {
        for &x in &[0.3, 1.2, 2.0, 5.5, 17.0] {
            let h = 1e-5 * x;
            let d_lng = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
            let d_psi = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!(rel(d_lng, digamma(x)) < 1e-7 || (d_lng - digamma(x)).abs() < 1e-8);
            assert!(rel(d_psi, trigamma(x)) < 1e-7);
        }
    }

    #[test]
    fn non_positive_is_nan() {
        assert!(digamma(0.0).is_nan());
        assert!(trigamma(-1.0).is_nan());
        assert!(ln_gamma(-0.5).is_nan());
    }
}
