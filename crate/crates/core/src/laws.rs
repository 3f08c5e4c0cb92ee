//! Limit laws for normalized return and hitting times.

use crate::error::{Error, Result};
use crate::special::mittag_leffler_neg;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// A limit law on `[0, inf]`. `DeltaInfinity` puts all mass at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitLaw {
    /// Law of `Exp^{1/alpha} * G_alpha`.
    Halpha { alpha: f64 },
    /// `G_0(t) = t / (1 + t)`, the limit for distorted statistics when `alpha = 0`.
    Gzero,
    Exponential,
    DeltaZero,
    DeltaInfinity,
}

impl LimitLaw {
    pub fn halpha(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::Halpha { alpha })
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Halpha { alpha } = self {
            check_alpha(*alpha)?;
        }
        Ok(())
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            Self::Halpha { alpha } => cdf_h_unchecked(alpha, t),
            Self::Gzero => cdf_g0(t),
            Self::Exponential => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-t).exp_m1()
                }
            }
            Self::DeltaZero => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::DeltaInfinity => 0.0,
        }
    }

    /// Draws one value; `None` stands for the atom at infinity.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        match *self {
            Self::Halpha { alpha } => Some(sample_h_unchecked(alpha, rng)),
            Self::Gzero => {
                // ratio of independent exponentials
                let u: f64 = Open01.sample(rng);
                Some(u / (1.0 - u))
            }
            Self::Exponential => Some(Exp1.sample(rng)),
            Self::DeltaZero => Some(0.0),
            Self::DeltaInfinity => None,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0, 1]")))
    }
}

/// Distribution function of `Exp^{1/alpha} * G_alpha`, equal to `1 - E_alpha(-t^alpha)`.
pub fn cdf_h(alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(cdf_h_unchecked(alpha, t))
}

fn cdf_h_unchecked(alpha: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if alpha == 1.0 {
        return -(-t).exp_m1();
    }
    1.0 - mittag_leffler_neg(alpha, t.powf(alpha))
}

/// `Gamma(1 + alpha)^{1/alpha}`.
///
/// The fixed point of the fractional transform is `t -> cdf_h(alpha, t * this)`,
/// the law of `(Exp / Gamma(1 + alpha))^{1/alpha} G_alpha`.
pub fn fixed_point_scale(alpha: f64) -> f64 {
    gamma(1.0 + alpha).powf(1.0 / alpha)
}

/// Distribution function of the fixed point of the fractional transform of order `alpha`.
pub fn cdf_fixed_point(alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(cdf_h_unchecked(alpha, t * fixed_point_scale(alpha)))
}

/// `G_0(t) = t / (1 + t)` for `t >= 0`.
pub fn cdf_g0(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t.is_infinite() {
        1.0
    } else {
        t / (1.0 + t)
    }
}

/// One-sided stable variable with `E exp(-s G) = exp(-s^alpha)`.
///
/// Uses the Kanter representation; `alpha = 1` is the constant 1.
pub fn sample_one_sided_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(stable_unchecked(alpha, rng))
}

fn stable_unchecked<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha == 1.0 {
        return 1.0;
    }
    let o: f64 = Open01.sample(rng);
    let u = PI * o;
    let w: f64 = Exp1.sample(rng);
    let lead = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let tail = (((1.0 - alpha) * u).sin() / w).powf((1.0 - alpha) / alpha);
    lead * tail
}

/// One draw from the law with distribution function `cdf_h(alpha, .)`.
pub fn sample_h<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(sample_h_unchecked(alpha, rng))
}

fn sample_h_unchecked<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e.powf(1.0 / alpha) * stable_unchecked(alpha, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn half_order_reference_value() {
        let v = cdf_h(0.5, 1.0).unwrap();
        // 1 - e erfc(1)
        assert!((v - 0.572_416_423_844_193).abs() < 1e-14);
        assert!((v - 0.5724).abs() < 1e-4);
    }

    #[test]
    fn order_one_is_exponential() {
        for &t in &[0.1, 1.0, 4.0] {
            assert!((cdf_h(1.0, t).unwrap() - (1.0 - (-t).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_orders() {
        assert!(cdf_h(0.0, 1.0).is_err());
        assert!(cdf_h(1.2, 1.0).is_err());
        assert!(LimitLaw::halpha(-0.1).is_err());
    }

    #[test]
    fn stable_half_laplace_and_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_one_sided_stable(0.5, &mut rng).unwrap())
            .collect();
        let lap: Vec<f64> = xs.iter().map(|x| (-x).exp()).collect();
        let mean = lap.iter().sum::<f64>() / n as f64;
        let var = lap.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - (-1f64).exp()).abs() < 4.0 * se, "{mean}");
        // G_{1/2} = 1 / (4 Z) with Z ~ Gamma(1/2, 1), so P(G <= 1) = erfc(1/2)
        let p = xs.iter().filter(|&&x| x <= 1.0).count() as f64 / n as f64;
        let pse = (p * (1.0 - p) / n as f64).sqrt();
        assert!((p - 0.479_500_122_186_953_5).abs() < 4.0 * pse, "{p}");
    }

    #[test]
    fn stable_order_one_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_one_sided_stable(1.0, &mut rng).unwrap(), 1.0);
    }

    #[test]
    fn fixed_point_law_rescales() {
        let a = 0.5;
        let s = fixed_point_scale(a);
        assert!((s - PI / 4.0).abs() < 1e-14);
        assert!(
            (cdf_fixed_point(a, 1.0).unwrap() - cdf_h(a, PI / 4.0).unwrap()).abs() < 1e-15
        );
    }

    #[test]
    fn g0_and_deltas() {
        assert_eq!(cdf_g0(0.0), 0.0);
        assert_eq!(LimitLaw::Gzero.cdf(1.0), 0.5);
        assert!((LimitLaw::Gzero.cdf(9.0) - 0.9).abs() < 1e-15);
        assert_eq!(LimitLaw::DeltaZero.cdf(0.0), 1.0);
        assert_eq!(LimitLaw::DeltaInfinity.cdf(1e300), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(LimitLaw::DeltaInfinity.sample(&mut rng), None);
    }

    proptest! {
        #[test]
        fn h_is_a_distribution_function(alpha in 0.05f64..=1.0, t in 0.0f64..50.0, d in 1e-3f64..5.0) {
            let a = cdf_h(alpha, t).unwrap();
            let b = cdf_h(alpha, t + d).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b >= a - 1e-13);
        }

        #[test]
        fn h_vanishes_at_origin(alpha in 0.05f64..=1.0) {
            prop_assert_eq!(cdf_h(alpha, 0.0).unwrap(), 0.0);
            prop_assert!(cdf_h(alpha, 1e-12).unwrap() < 1e-3_f64.max(2e-12f64.powf(alpha)));
        }
    }
}
