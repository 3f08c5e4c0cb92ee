//! Desk checks of the return/hitting relations on simulated systems.

use crate::error::{Error, Result};
use crate::laws::LimitLaw;
use crate::scaling::ScalingFunction;
use crate::simulate::{
    estimate_cdf, ks_distance_within, sample_entrance_times, CdfEstimate, Normalization,
    RunParams, StartLaw, Stepping, SubDistribution,
};
use crate::systems::{FiniteMarkovShift, SystemModel, TargetSpec};
use crate::transform::{forward, TransformKind, TransformSpec};
use serde::{Deserialize, Serialize};

/// Thresholds used by the checks. Defaults are the desk-scale values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Bound on the distance between the transformed return law and the hitting law.
    pub transform: f64,
    /// Bound on distances to the limit law and between return and hitting laws.
    pub law: f64,
    /// Largest censored fraction for a run to count.
    pub censored_mass: f64,
    pub robustness: f64,
    pub decomposition: f64,
    /// Allowed growth of the return/hitting distance along the schedule, in units
    /// of the two-sample Monte Carlo noise.
    pub noise_multiple: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            transform: 0.03,
            law: 0.03,
            censored_mass: 0.05,
            robustness: 0.03,
            decomposition: 1e-12,
            noise_multiple: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub n_samples: usize,
    pub cap: u64,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub stepping: Stepping,
    pub tolerances: Tolerances,
}

impl Settings {
    fn params(&self, stream: u64) -> RunParams {
        RunParams {
            n_samples: self.n_samples,
            cap: self.cap,
            seed: self.seed,
            stream,
            stepping: self.stepping,
        }
    }

    /// Sup distance two independent empirical laws of this size typically reach.
    pub fn two_sample_noise(&self) -> f64 {
        1.36 * (2.0 / self.n_samples as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    ReturnVsHitting,
    Convergence,
    Robustness,
    Decomposition,
    Tightness,
}

/// Distances measured for one target of a schedule.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Stage {
    pub k: usize,
    pub measure: f64,
    /// Normalized cap; comparisons are restricted to `[0, window]`.
    pub window: f64,
    pub transform_to_hitting: Option<f64>,
    pub return_to_law: Option<f64>,
    pub hitting_to_law: Option<f64>,
    pub return_to_hitting: Option<f64>,
    pub perturbed_return: Option<f64>,
    pub perturbed_hitting: Option<f64>,
    pub censored_return: f64,
    pub censored_hitting: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationOutcome {
    pub check: CheckKind,
    pub seed: u64,
    pub stages: Vec<Stage>,
    /// Named scalar results that do not fit the per-stage layout.
    pub metrics: Vec<(String, f64)>,
    /// Violated tolerances, each naming the quantity, its value and the bound.
    pub failures: Vec<String>,
    /// Reasons the run cannot be judged, such as excessive censoring.
    pub invalid: Vec<String>,
    #[serde(skip)]
    pub return_law: Option<SubDistribution>,
    #[serde(skip)]
    pub hitting_law: Option<SubDistribution>,
    #[serde(skip)]
    pub transformed: Option<SubDistribution>,
}

impl VerificationOutcome {
    fn new(check: CheckKind, seed: u64) -> Self {
        Self {
            check,
            seed,
            stages: Vec::new(),
            metrics: Vec::new(),
            failures: Vec::new(),
            invalid: Vec::new(),
            return_law: None,
            hitting_law: None,
            transformed: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.invalid.is_empty()
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    fn require(&mut self, what: String, value: f64, bound: f64) {
        if !(value <= bound) {
            self.failures.push(format!("{what} = {value:.6} exceeds {bound}"));
        }
    }

    fn check_censoring(&mut self, what: &str, k: usize, fraction: f64, ceiling: f64) {
        if fraction > ceiling {
            self.invalid.push(format!(
                "censored mass of {what} at k={k} is {fraction:.4}, above {ceiling}"
            ));
        }
    }
}

fn normalization(scaling: &ScalingFunction, distorted: bool) -> Normalization {
    if distorted {
        Normalization::Distorted(*scaling)
    } else {
        Normalization::Gamma(*scaling)
    }
}

/// Transform linking return and hitting laws under the given normalization.
pub fn transform_for(scaling: &ScalingFunction, distorted: bool) -> Result<TransformSpec> {
    let alpha = scaling.index();
    let kind = match (distorted, alpha) {
        (false, 1.0) => TransformKind::Hlv,
        (false, a) if a > 0.0 => TransformKind::Fractional { alpha: a },
        (true, a) if a > 0.0 => TransformKind::DistortedPositive { alpha: a },
        (true, _) => TransformKind::DistortedZero,
        (false, _) => {
            return Err(Error::InvalidParameter(
                "index 0 needs the distorted normalization".into(),
            ))
        }
    };
    TransformSpec::new(kind)
}

struct Pair {
    ret: CdfEstimate,
    hit: CdfEstimate,
    window: f64,
}

fn estimate_pair(
    sys: &SystemModel,
    target: &TargetSpec,
    norm: &Normalization,
    settings: &Settings,
    stream: u64,
) -> Result<Pair> {
    let p = settings.params(stream);
    let ret = estimate_cdf(sys, target, StartLaw::MuE, norm, settings.grid.clone(), &p)?;
    let hit = estimate_cdf(sys, target, StartLaw::MuY, norm, settings.grid.clone(), &p)?;
    let t_max = *settings.grid.last().expect("non-empty grid");
    let window = t_max.min(ret.window).min(hit.window);
    Ok(Pair { ret, hit, window })
}

fn check_schedule(targets: &[TargetSpec]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::InvalidParameter("empty target schedule".into()));
    }
    Ok(())
}

/// Compares the transformed empirical return law with the empirical hitting law
/// at the last target of the schedule.
pub fn check_return_vs_hitting(
    sys: &SystemModel,
    targets: &[TargetSpec],
    scaling: &ScalingFunction,
    distorted: bool,
    settings: &Settings,
) -> Result<VerificationOutcome> {
    check_schedule(targets)?;
    let spec = transform_for(scaling, distorted)?;
    let norm = normalization(scaling, distorted);
    let k = targets.len();
    let pair = estimate_pair(sys, &targets[k - 1], &norm, settings, k as u64)?;
    let transformed = forward(&spec, &pair.ret.cdf)?.law;
    let d = ks_distance_within(&transformed, &pair.hit.cdf, pair.window);
    let mut out = VerificationOutcome::new(CheckKind::ReturnVsHitting, settings.seed);
    let tol = settings.tolerances;
    out.stages.push(Stage {
        k,
        measure: pair.ret.measure,
        window: pair.window,
        transform_to_hitting: Some(d),
        return_to_hitting: Some(ks_distance_within(&pair.ret.cdf, &pair.hit.cdf, pair.window)),
        censored_return: pair.ret.cdf.censored_fraction(),
        censored_hitting: pair.hit.cdf.censored_fraction(),
        ..Stage::default()
    });
    out.require(format!("d(T(return), hitting) at k={k}"), d, tol.transform);
    out.check_censoring("return law", k, pair.ret.cdf.censored_fraction(), tol.censored_mass);
    out.check_censoring("hitting law", k, pair.hit.cdf.censored_fraction(), tol.censored_mass);
    out.return_law = Some(pair.ret.cdf);
    out.hitting_law = Some(pair.hit.cdf);
    out.transformed = Some(transformed);
    Ok(out)
}

/// Tracks the return and hitting laws along the schedule, against `law` if given.
pub fn check_convergence(
    sys: &SystemModel,
    targets: &[TargetSpec],
    law: Option<&LimitLaw>,
    scaling: &ScalingFunction,
    distorted: bool,
    settings: &Settings,
) -> Result<VerificationOutcome> {
    check_schedule(targets)?;
    if let Some(l) = law {
        l.validate()?;
    }
    let norm = normalization(scaling, distorted);
    let tol = settings.tolerances;
    let mut out = VerificationOutcome::new(CheckKind::Convergence, settings.seed);
    let mut last = None;
    for (i, target) in targets.iter().enumerate() {
        let k = i + 1;
        let pair = estimate_pair(sys, target, &norm, settings, k as u64)?;
        let w = pair.window;
        let stage = Stage {
            k,
            measure: pair.ret.measure,
            window: w,
            return_to_law: law.map(|l| ks_distance_within(&pair.ret.cdf, l, w)),
            hitting_to_law: law.map(|l| ks_distance_within(&pair.hit.cdf, l, w)),
            return_to_hitting: Some(ks_distance_within(&pair.ret.cdf, &pair.hit.cdf, w)),
            censored_return: pair.ret.cdf.censored_fraction(),
            censored_hitting: pair.hit.cdf.censored_fraction(),
            ..Stage::default()
        };
        out.stages.push(stage);
        last = Some(pair);
    }
    let fin = out.stages.last().expect("non-empty schedule").clone();
    let k = fin.k;
    if let Some(d) = fin.return_to_law {
        out.require(format!("d(return, law) at k={k}"), d, tol.law);
    }
    if let Some(d) = fin.hitting_to_law {
        out.require(format!("d(hitting, law) at k={k}"), d, tol.law);
    }
    out.require(
        format!("d(return, hitting) at k={k}"),
        fin.return_to_hitting.unwrap_or(1.0),
        tol.law,
    );
    let slack = tol.noise_multiple * settings.two_sample_noise();
    for w in out.stages.windows(2) {
        let (a, b) = (w[0].return_to_hitting.unwrap(), w[1].return_to_hitting.unwrap());
        if b > a + slack {
            out.failures.push(format!(
                "d(return, hitting) rose from {a:.6} at k={} to {b:.6} at k={}, more than {slack:.6}",
                w[0].k, w[1].k
            ));
        }
    }
    out.check_censoring("return law", k, fin.censored_return, tol.censored_mass);
    out.check_censoring("hitting law", k, fin.censored_hitting, tol.censored_mass);
    let pair = last.expect("non-empty schedule");
    out.return_law = Some(pair.ret.cdf);
    out.hitting_law = Some(pair.hit.cdf);
    Ok(out)
}

/// Checks that a perturbation sequence is small relative to the targets.
pub fn validate_perturbations(eps: &[f64]) -> Result<()> {
    let bad = |m: &str| Err(Error::InvalidParameter(format!("perturbations {eps:?}: {m}")));
    if eps.is_empty() {
        return bad("empty");
    }
    if eps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return bad("must be finite and non-negative");
    }
    if eps.windows(2).any(|w| w[1] > w[0]) {
        return bad("must be non-increasing");
    }
    let (first, last) = (eps[0], eps[eps.len() - 1]);
    if last > 0.0 && last >= first {
        return bad("must decrease towards 0, otherwise the symmetric difference is not small");
    }
    Ok(())
}

/// Shifts a target by `eps` times its own size.
pub fn perturb(target: &TargetSpec, eps: f64) -> Result<TargetSpec> {
    match *target {
        TargetSpec::LabelInterval { lo, hi } => {
            let s = eps * (hi - lo);
            Ok(TargetSpec::LabelInterval {
                lo: lo + s,
                hi: hi + s,
            })
        }
        TargetSpec::IntervalInY {
            center,
            half_width,
        } => Ok(TargetSpec::IntervalInY {
            center: center + 2.0 * eps * half_width,
            half_width,
        }),
        _ => Err(Error::InvalidParameter(
            "perturbations are defined for label intervals and intervals in Y".into(),
        )),
    }
}

/// Compares laws for `E_k` and a shifted copy `E_k'`, simulated with common random numbers.
pub fn check_robustness(
    sys: &SystemModel,
    targets: &[TargetSpec],
    eps: &[f64],
    scaling: &ScalingFunction,
    distorted: bool,
    settings: &Settings,
) -> Result<VerificationOutcome> {
    check_schedule(targets)?;
    validate_perturbations(eps)?;
    if eps.len() != targets.len() {
        return Err(Error::InvalidParameter(format!(
            "{} perturbations for {} targets",
            eps.len(),
            targets.len()
        )));
    }
    let norm = normalization(scaling, distorted);
    let mut out = VerificationOutcome::new(CheckKind::Robustness, settings.seed);
    for (i, (target, &e)) in targets.iter().zip(eps).enumerate() {
        let k = i + 1;
        let moved = perturb(target, e)?;
        sys.validate_target(&moved)?;
        let a = estimate_pair(sys, target, &norm, settings, k as u64)?;
        let b = estimate_pair(sys, &moved, &norm, settings, k as u64)?;
        let w = a.window.min(b.window);
        out.stages.push(Stage {
            k,
            measure: a.ret.measure,
            window: w,
            perturbed_return: Some(ks_distance_within(&a.ret.cdf, &b.ret.cdf, w)),
            perturbed_hitting: Some(ks_distance_within(&a.hit.cdf, &b.hit.cdf, w)),
            censored_return: a.ret.cdf.censored_fraction().max(b.ret.cdf.censored_fraction()),
            censored_hitting: a.hit.cdf.censored_fraction().max(b.hit.cdf.censored_fraction()),
            ..Stage::default()
        });
    }
    let fin = out.stages.last().expect("non-empty").clone();
    let tol = settings.tolerances;
    out.require(
        format!("d(return E, return E') at k={}", fin.k),
        fin.perturbed_return.unwrap(),
        tol.robustness,
    );
    out.require(
        format!("d(hitting E, hitting E') at k={}", fin.k),
        fin.perturbed_hitting.unwrap(),
        tol.robustness,
    );
    out.check_censoring("return law", fin.k, fin.censored_return, tol.censored_mass);
    out.check_censoring("hitting law", fin.k, fin.censored_hitting, tol.censored_mass);
    Ok(out)
}

pub const MAX_DECOMPOSITION_STEPS: usize = 12;
const MAX_CYLINDERS: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    /// `defects[n]` is the absolute defect of the last-visit identity at time `n`.
    pub defects: Vec<f64>,
    pub max_defect: f64,
}

/// Evaluates both sides of the last-visit decomposition
/// `mu(A) = mu(A, phi_B > n) + sum_{l=1}^n int_{B, phi_B > n-l} T^l 1_A dmu`
/// for `n = 0..=n_max`, with the transfer operator as the adjoint of the chain.
pub fn check_decomposition(
    chain: &FiniteMarkovShift,
    a: &[usize],
    b: &[usize],
    n_max: usize,
) -> Result<Decomposition> {
    let n = chain.len();
    for set in [a, b] {
        if set.is_empty() {
            return Err(Error::ZeroMeasureTarget);
        }
        if set.iter().any(|&i| i >= n) {
            return Err(Error::InvalidParameter("state out of range".into()));
        }
    }
    let paths = (n as f64).powi(n_max as i32);
    if n_max > MAX_DECOMPOSITION_STEPS || paths > MAX_CYLINDERS {
        return Err(Error::EnumerationTooLarge { paths });
    }
    let p = chain.transition();
    let pi = chain.stationary();
    let mass = chain.total_mass();
    let in_b: Vec<bool> = (0..n).map(|i| b.contains(&i)).collect();

    // probability that the next k states all avoid B, summed over explicit paths
    fn avoid(p: &[Vec<f64>], in_b: &[bool], s: usize, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        (0..p.len())
            .filter(|&t| !in_b[t] && p[s][t] > 0.0)
            .map(|t| p[s][t] * avoid(p, in_b, t, k - 1))
            .sum()
    }

    let adjoint = |f: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| (0..n).map(|i| pi[i] * p[i][j] * f[i]).sum::<f64>() / pi[j])
            .collect::<Vec<f64>>()
    };

    let lhs = chain.measure(a);
    let mut defects = Vec::with_capacity(n_max + 1);
    for steps in 0..=n_max {
        let mut rhs: f64 = a
            .iter()
            .map(|&i| mass * pi[i] * avoid(p, &in_b, i, steps))
            .sum();
        let mut h: Vec<f64> = (0..n).map(|i| if a.contains(&i) { 1.0 } else { 0.0 }).collect();
        for l in 1..=steps {
            h = adjoint(&h);
            rhs += b
                .iter()
                .map(|&j| mass * pi[j] * h[j] * avoid(p, &in_b, j, steps - l))
                .sum::<f64>();
        }
        defects.push((lhs - rhs).abs());
    }
    let max_defect = defects.iter().copied().fold(0.0, f64::max);
    Ok(Decomposition {
        defects,
        max_defect,
    })
}

/// Checks `mu_E(phi_E > m n) <= (mu(Y) / mu(E)) (1/m + m q_n)` within three combined
/// standard errors, for `E` inside `Y`.
pub fn check_tightness(
    sys: &SystemModel,
    target: &TargetSpec,
    pairs: &[(u64, u64)],
    settings: &Settings,
) -> Result<VerificationOutcome> {
    let mu_e = sys.measure_of_target(target)?;
    let mu_y = sys.measure_of_y();
    if matches!(target, TargetSpec::ShortReturnColumn { .. }) {
        return Err(Error::InvalidParameter("target must lie inside Y".into()));
    }
    let mut out = VerificationOutcome::new(CheckKind::Tightness, settings.seed);
    let n = settings.n_samples as f64;
    for (i, &(m, len)) in pairs.iter().enumerate() {
        if m == 0 || len == 0 {
            return Err(Error::InvalidParameter("m and n must be positive".into()));
        }
        let p = RunParams {
            cap: m.saturating_mul(len),
            ..settings.params(100 + i as u64)
        };
        let ret = sample_entrance_times(sys, target, StartLaw::MuE, &p)?;
        let lhs = ret.censored() as f64 / n;
        let q = RunParams { cap: len, ..p };
        let tail = sample_entrance_times(sys, &TargetSpec::Reference, StartLaw::MuE, &q)?;
        let q_n = tail.censored() as f64 / n;
        let ratio = mu_y / mu_e;
        let mf = m as f64;
        let bound = ratio * (1.0 / mf + mf * q_n);
        let se_lhs = (lhs * (1.0 - lhs) / n).sqrt();
        let se_rhs = ratio * mf * (q_n * (1.0 - q_n) / n).sqrt();
        let slack = 3.0 * (se_lhs * se_lhs + se_rhs * se_rhs).sqrt();
        out.metrics.push((format!("lhs(m={m},n={len})"), lhs));
        out.metrics.push((format!("bound(m={m},n={len})"), bound));
        out.metrics.push((format!("slack(m={m},n={len})"), slack));
        out.require(
            format!("mu_E(phi_E > {}) - bound(m={m},n={len})", m * len),
            lhs - bound,
            slack,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::uniform_grid;

    fn settings(n: usize) -> Settings {
        Settings {
            n_samples: n,
            cap: 1_000_000_000,
            grid: uniform_grid(10.0, 512),
            seed: 3,
            stepping: Stepping::Accelerated,
            tolerances: Tolerances::default(),
        }
    }

    #[test]
    fn decomposition_two_state_flip() {
        let c = FiniteMarkovShift::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0, 1], 1.0)
            .unwrap();
        let d = check_decomposition(&c, &[0], &[1], 5).unwrap();
        assert!(d.max_defect <= 1e-12);
        assert_eq!(d.defects[0], 0.0);
    }

    #[test]
    fn decomposition_guard() {
        let c = FiniteMarkovShift::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0], 1.0).unwrap();
        assert!(matches!(
            check_decomposition(&c, &[0], &[1], 13),
            Err(Error::EnumerationTooLarge { .. })
        ));
        assert!(check_decomposition(&c, &[], &[1], 3).is_err());
    }

    #[test]
    fn perturbation_validation() {
        assert!(validate_perturbations(&[1.0, 0.5, 1.0 / 3.0]).is_ok());
        assert!(validate_perturbations(&[0.0, 0.0]).is_ok());
        assert!(validate_perturbations(&[1.0, 1.0, 1.0]).is_err());
        assert!(validate_perturbations(&[0.1, 0.2]).is_err());
        assert!(validate_perturbations(&[-0.1]).is_err());
    }

    #[test]
    fn zero_perturbation_gives_identical_laws() {
        let sys = SystemModel::renewal_tower(0.5).unwrap();
        let targets = [TargetSpec::label_interval(0.1), TargetSpec::label_interval(0.05)];
        let out = check_robustness(
            &sys,
            &targets,
            &[0.0, 0.0],
            &sys.known_scaling().unwrap(),
            false,
            &settings(2000),
        )
        .unwrap();
        for s in &out.stages {
            assert_eq!(s.perturbed_return, Some(0.0));
            assert_eq!(s.perturbed_hitting, Some(0.0));
        }
    }

    #[test]
    fn transform_choice() {
        let half = ScalingFunction::power(1.0, 0.5).unwrap();
        assert_eq!(
            transform_for(&half, false).unwrap().kind,
            TransformKind::Fractional { alpha: 0.5 }
        );
        assert_eq!(
            transform_for(&ScalingFunction::identity(), false).unwrap().kind,
            TransformKind::Hlv
        );
        let slow = ScalingFunction::new(1.0, 0.0, 1.0).unwrap();
        assert_eq!(
            transform_for(&slow, true).unwrap().kind,
            TransformKind::DistortedZero
        );
        assert!(transform_for(&slow, false).is_err());
    }

    #[test]
    fn failures_cite_the_tolerance() {
        let sys = SystemModel::renewal_tower(0.5).unwrap();
        let mut s = settings(500);
        s.tolerances.transform = 0.0;
        let out = check_return_vs_hitting(
            &sys,
            &[TargetSpec::label_interval(0.1)],
            &sys.known_scaling().unwrap(),
            false,
            &s,
        )
        .unwrap();
        assert!(!out.passed());
        assert!(out.failures[0].contains("exceeds 0"));
    }
}
