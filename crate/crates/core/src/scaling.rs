//! Regularly varying scaling functions `a(s) = c s^alpha ln(s + e)^beta`,
//! their inverses and the induced normalizer `gamma(s) = 1 / b(1 / s)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::E;

const INVERSE_RTOL: f64 = 1e-12;
const FIT_TOLERANCE: f64 = 0.1;
const MIN_FIT_LENGTH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScaling", into = "RawScaling")]
pub struct ScalingFunction {
    c: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScaling {
    c: f64,
    alpha: f64,
    #[serde(default)]
    beta: f64,
}

impl TryFrom<RawScaling> for ScalingFunction {
    type Error = Error;
    fn try_from(r: RawScaling) -> Result<Self> {
        ScalingFunction::new(r.c, r.alpha, r.beta)
    }
}

impl From<ScalingFunction> for RawScaling {
    fn from(s: ScalingFunction) -> Self {
        RawScaling {
            c: s.c,
            alpha: s.alpha,
            beta: s.beta,
        }
    }
}

/// Minimum over `s > 0` of `(s + e) ln(s + e) / s`.
///
/// `a` is increasing on `(0, inf)` exactly when `alpha * this + beta > 0`.
pub fn monotonicity_threshold() -> f64 {
    // minimiser solves s = e ln(s + e); the map is a contraction there
    let mut s = 5.0;
    for _ in 0..200 {
        s = E * (s + E).ln();
    }
    1.0 + s / E
}

impl ScalingFunction {
    pub fn new(c: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InadmissibleScaling(format!("c = {c} must be positive")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InadmissibleScaling(format!(
                "alpha = {alpha} outside [0, 1]"
            )));
        }
        if !beta.is_finite() {
            return Err(Error::InadmissibleScaling(format!("beta = {beta}")));
        }
        if alpha == 0.0 && beta <= 0.0 {
            return Err(Error::InadmissibleScaling(
                "alpha = 0 requires beta > 0".into(),
            ));
        }
        if beta < 0.0 && alpha * monotonicity_threshold() + beta <= 0.0 {
            return Err(Error::InadmissibleScaling(format!(
                "a(s) is not increasing for alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(Self { c, alpha, beta })
    }

    pub fn power(c: f64, alpha: f64) -> Result<Self> {
        Self::new(c, alpha, 0.0)
    }

    pub fn identity() -> Self {
        Self {
            c: 1.0,
            alpha: 1.0,
            beta: 0.0,
        }
    }

    pub fn coefficient(&self) -> f64 {
        self.c
    }

    pub fn index(&self) -> f64 {
        self.alpha
    }

    pub fn log_exponent(&self) -> f64 {
        self.beta
    }

    /// `a(s)`, with `a(0) = 0`.
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s.is_infinite() {
            return f64::INFINITY;
        }
        let mut v = self.c;
        if self.alpha != 0.0 {
            v *= s.powf(self.alpha);
        }
        if self.beta != 0.0 {
            v *= (s + E).ln().powf(self.beta);
        }
        v
    }

    /// `b = a^{-1}`. Returns 0 for `s` at or below the infimum of `a` on `(0, inf)`.
    pub fn inverse(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s.is_infinite() {
            return f64::INFINITY;
        }
        if self.beta == 0.0 {
            return (s / self.c).powf(1.0 / self.alpha);
        }
        if self.alpha == 0.0 {
            if s <= self.c {
                return 0.0;
            }
            return ((s / self.c).powf(1.0 / self.beta).exp() - E).max(0.0);
        }
        let (mut lo, mut hi) = (1e-18_f64, 1e18_f64);
        while self.eval(lo) > s {
            lo *= 1e-6;
            if lo < 1e-300 {
                return lo;
            }
        }
        while self.eval(hi) < s {
            hi *= 1e6;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        let (mut llo, mut lhi) = (lo.ln(), hi.ln());
        while lhi - llo > INVERSE_RTOL {
            let mid = 0.5 * (llo + lhi);
            if self.eval(mid.exp()) < s {
                llo = mid;
            } else {
                lhi = mid;
            }
        }
        (0.5 * (llo + lhi)).exp()
    }

    /// `gamma(s) = 1 / b(1 / s)`.
    pub fn gamma(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let b = self.inverse(1.0 / s);
        if b == 0.0 {
            f64::INFINITY
        } else {
            1.0 / b
        }
    }
}

/// `Gamma(2 - alpha) Gamma(1 + alpha)`, linking wandering rates to return sequences.
pub fn wandering_constant(alpha: f64) -> f64 {
    gamma(2.0 - alpha) * gamma(1.0 + alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub scaling: ScalingFunction,
    /// Slope of the log-log regression before clamping to `[0, 1]`.
    pub fitted_index: f64,
    /// Root-mean-square residual of the log-log regression.
    pub residual: f64,
    /// Index range `[start, end)` of the sequence used in the fit.
    pub window: (usize, usize),
}

/// Fits a return sequence from a wandering rate.
///
/// `w[i]` is `w_{i+1}`. The estimate `n / (Gamma(2-alpha) Gamma(1+alpha) w_n)` is
/// regressed on `n` in log-log coordinates over the upper half of the sequence.
pub fn estimate_return_sequence(w: &[f64], alpha: f64) -> Result<ScalingFit> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside [0, 1]")));
    }
    if w.len() < MIN_FIT_LENGTH {
        return Err(Error::InvalidParameter(format!(
            "wandering rate has {} terms, need at least {MIN_FIT_LENGTH}",
            w.len()
        )));
    }
    if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidParameter("wandering rate must be positive".into()));
    }
    if w.windows(2).any(|p| p[1] < p[0]) {
        return Err(Error::InvalidParameter(
            "wandering rate must be non-decreasing".into(),
        ));
    }
    let k = wandering_constant(alpha);
    let start = w.len() / 2;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (start..w.len())
        .map(|i| {
            let n = (i + 1) as f64;
            (n.ln(), (n / (k * w[i])).ln())
        })
        .unzip();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    if (slope - alpha).abs() > FIT_TOLERANCE {
        return Err(Error::InconsistentTail {
            fitted: slope,
            expected: alpha,
            tolerance: FIT_TOLERANCE,
        });
    }
    let scaling = ScalingFunction::power(intercept.exp(), slope.clamp(0.0, 1.0))?;
    Ok(ScalingFit {
        scaling,
        fitted_index: slope,
        residual,
        window: (start, w.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn threshold_value() {
        let t = monotonicity_threshold();
        let s = (t - 1.0) * E;
        assert!((s - E * (s + E).ln()).abs() < 1e-12);
        assert!((s - 5.8340).abs() < 1e-3, "{s}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ScalingFunction::new(0.0, 0.5, 0.0).is_err());
        assert!(ScalingFunction::new(1.0, 1.5, 0.0).is_err());
        assert!(ScalingFunction::new(1.0, 0.0, 0.0).is_err());
        assert!(ScalingFunction::new(1.0, 0.0, -1.0).is_err());
        assert!(ScalingFunction::new(1.0, 0.5, -2.0).is_err());
        assert!(ScalingFunction::new(1.0, 1.0, -1.0).is_ok());
        assert!(ScalingFunction::new(1.0, 0.0, 2.0).is_ok());
    }

    #[test]
    fn renewal_half_normalizer() {
        let a = ScalingFunction::power(2.0 / PI, 0.5).unwrap();
        for &s in &[1e-6, 1e-3, 0.01, 0.5, 3.0] {
            let want = 4.0 * s * s / (PI * PI);
            assert!((a.gamma(s) / want - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_scaling() {
        let a = ScalingFunction::identity();
        assert_eq!(a.eval(3.5), 3.5);
        assert_eq!(a.inverse(3.5), 3.5);
        assert!((a.gamma(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn slowly_varying_inverse() {
        let a = ScalingFunction::new(1.0, 0.0, 2.0).unwrap();
        assert_eq!(a.inverse(0.5), 0.0);
        let t = a.inverse(9.0);
        assert!((a.eval(t) / 9.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_exact_renewal_sequence() {
        // w_n = sum_{k<n} (1+k)^{-1/2}
        let n = 20_000;
        let mut w = Vec::with_capacity(n);
        let mut acc = 0.0;
        for k in 0..n {
            acc += (1.0 + k as f64).powf(-0.5);
            w.push(acc);
        }
        let fit = estimate_return_sequence(&w, 0.5).unwrap();
        assert!((fit.fitted_index - 0.5).abs() < 0.01);
        assert!((fit.scaling.coefficient() / (2.0 / PI) - 1.0).abs() < 0.05);
        assert!(fit.residual < 1e-2);
    }

    #[test]
    fn fit_flags_wrong_index() {
        let w: Vec<f64> = (1..=1000).map(|n| n as f64).collect();
        assert!(matches!(
            estimate_return_sequence(&w, 0.5),
            Err(Error::InconsistentTail { .. })
        ));
    }

    #[test]
    fn deserialization_validates() {
        let bad = ScalingFunction::try_from(RawScaling { c: 1.0, alpha: 0.0, beta: 0.0 });
        assert!(bad.is_err());
        let good = ScalingFunction::try_from(RawScaling { c: 1.0, alpha: 0.5, beta: 0.0 });
        assert_eq!(good.unwrap(), ScalingFunction::power(1.0, 0.5).unwrap());
    }

    fn admissible() -> impl Strategy<Value = ScalingFunction> {
        (0.05f64..5.0, 0.05f64..=1.0, -0.15f64..2.0).prop_filter_map("admissible", |(c, a, b)| {
            ScalingFunction::new(c, a, b).ok()
        })
    }

    proptest! {
        #[test]
        fn inverse_roundtrip(a in admissible(), s in 1e-3f64..1e6) {
            let t = a.inverse(s);
            prop_assume!(t > 0.0);
            prop_assert!((a.eval(t) / s - 1.0).abs() <= 1e-10);
        }

        #[test]
        fn eval_increasing(a in admissible(), s in 1e-4f64..1e8, f in 1.001f64..10.0) {
            prop_assert!(a.eval(s * f) > a.eval(s));
        }

        #[test]
        fn gamma_vanishes_at_zero(a in admissible()) {
            prop_assert!(a.gamma(1e-12) < a.gamma(1e-6));
            prop_assert!(a.gamma(1e-9) < 1e-3);
        }

        #[test]
        fn pure_powers_are_exactly_regular(c in 0.1f64..3.0, alpha in 0.05f64..=1.0,
                                           r in prop::sample::select(vec![0.5, 1.0, 2.0])) {
            let a = ScalingFunction::power(c, alpha).unwrap();
            let rho = 1e10;
            let ratio = a.eval(rho * r) / a.eval(rho);
            prop_assert!((ratio - r.powf(alpha)).abs() < 1e-6);
        }

        #[test]
        fn log_corrections_vary_regularly(alpha in 0.2f64..=1.0, beta in -0.1f64..1.0,
                                          r in prop::sample::select(vec![0.5, 2.0])) {
            let a = ScalingFunction::new(1.0, alpha, beta).unwrap();
            let err = |rho: f64| (a.eval(rho * r) / a.eval(rho) / r.powf(alpha) - 1.0).abs();
            prop_assert!(err(1e12) <= err(1e4) + 1e-15);
            prop_assert!(err(1e12) < 0.03);
        }
    }
}
