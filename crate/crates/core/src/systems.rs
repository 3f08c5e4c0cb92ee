//! Reference systems: a renewal tower, the Boole map, the doubling map and
//! finite Markov shifts, together with the sets they can be asked to hit.

use crate::error::{Error, Result};
use crate::scaling::ScalingFunction;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;
/// Replacement for the Boole map's singular point.
pub const BOOLE_ORIGIN_NUDGE: f64 = 1e-300;

/// A measurable set of finite measure, expressed in the coordinates of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// The reference set `Y` of the system.
    Reference,
    /// Base-level states of the tower whose label lies in `[lo, hi)`.
    LabelInterval { lo: f64, hi: f64 },
    /// Tower states below level `depth` whose label lies in `[0, width)`.
    ShortReturnColumn { depth: u64, width: f64 },
    /// `[center - half_width, center + half_width]`.
    IntervalInY { center: f64, half_width: f64 },
    /// The dyadic cylinder `[index 2^-level, (index + 1) 2^-level)`.
    DyadicInterval { level: u32, index: u64 },
    StateSet { states: Vec<usize> },
}

impl TargetSpec {
    pub fn label_interval(p: f64) -> Self {
        Self::LabelInterval { lo: 0.0, hi: p }
    }

    /// Dyadic cylinder of the given level starting at 1/2, which avoids the
    /// fixed point at 0.
    pub fn dyadic(level: u32) -> Self {
        let index = if level == 0 { 0 } else { 1u64 << (level - 1) };
        Self::DyadicInterval { level, index }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Reference => "reference",
            Self::LabelInterval { .. } => "label_interval",
            Self::ShortReturnColumn { .. } => "short_return_column",
            Self::IntervalInY { .. } => "interval_in_y",
            Self::DyadicInterval { .. } => "dyadic_interval",
            Self::StateSet { .. } => "state_set",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerState {
    pub level: u64,
    /// Steps left until the next visit to level 0; zero on level 0.
    pub remaining: u64,
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum State {
    Tower(TowerState),
    Real(f64),
    /// Binary expansion of a point of `[0, 1)`, most significant digit first.
    Dyadic(u64),
    Site(usize),
}

impl State {
    pub fn dyadic_from_f64(x: f64) -> Self {
        State::Dyadic((x.clamp(0.0, 1.0 - f64::EPSILON) * TWO_POW_64) as u64)
    }

    /// Position on the real line, where that makes sense.
    pub fn coordinate(&self) -> Option<f64> {
        match *self {
            State::Real(x) => Some(x),
            State::Dyadic(b) => Some(b as f64 / TWO_POW_64),
            _ => None,
        }
    }
}

/// Tower over `[0, 1)` with excursion lengths `P(L > n) = (1 + n)^-alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTower", into = "RawTower")]
pub struct RenewalTower {
    alpha: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTower {
    alpha: f64,
}

impl TryFrom<RawTower> for RenewalTower {
    type Error = Error;
    fn try_from(r: RawTower) -> Result<Self> {
        RenewalTower::new(r.alpha)
    }
}

impl From<RenewalTower> for RawTower {
    fn from(t: RenewalTower) -> Self {
        RawTower { alpha: t.alpha }
    }
}

impl RenewalTower {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tower index {alpha} outside (0, 1]"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `P(L > j) = (1 + j)^-alpha`, the measure of level `j` per unit label.
    pub fn level_mass(&self, j: u64) -> f64 {
        (1.0 + j as f64).powf(-self.alpha)
    }

    pub fn draw_excursion<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = 1.0 - rng.random::<f64>();
        u.powf(-1.0 / self.alpha).floor() as u64
    }

    /// Excursion length conditioned on exceeding `j`.
    pub fn draw_excursion_beyond<R: Rng + ?Sized>(&self, j: u64, rng: &mut R) -> u64 {
        let u = 1.0 - rng.random::<f64>();
        let v = (self.level_mass(j) * u).powf(-1.0 / self.alpha).floor() as u64;
        v.max(j + 1)
    }

    pub fn step<R: Rng + ?Sized>(&self, s: TowerState, rng: &mut R) -> TowerState {
        let fresh = |rng: &mut R| TowerState {
            level: 0,
            remaining: 0,
            label: rng.random(),
        };
        if s.remaining == 0 {
            let l = self.draw_excursion(rng);
            if l >= 2 {
                TowerState {
                    level: 1,
                    remaining: l - 1,
                    label: s.label,
                }
            } else {
                fresh(rng)
            }
        } else if s.remaining > 1 {
            TowerState {
                level: s.level + 1,
                remaining: s.remaining - 1,
                label: s.label,
            }
        } else {
            fresh(rng)
        }
    }
}

/// Finite irreducible Markov chain with stationary measure scaled to `total_mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarkov", into = "RawMarkov")]
pub struct FiniteMarkovShift {
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    reference: Vec<usize>,
    total_mass: f64,
    cumulative: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarkov {
    transition: Vec<Vec<f64>>,
    reference: Vec<usize>,
    #[serde(default = "unit")]
    total_mass: f64,
}

fn unit() -> f64 {
    1.0
}

impl TryFrom<RawMarkov> for FiniteMarkovShift {
    type Error = Error;
    fn try_from(r: RawMarkov) -> Result<Self> {
        FiniteMarkovShift::new(r.transition, r.reference, r.total_mass)
    }
}

impl From<FiniteMarkovShift> for RawMarkov {
    fn from(m: FiniteMarkovShift) -> Self {
        RawMarkov {
            transition: m.transition,
            reference: m.reference,
            total_mass: m.total_mass,
        }
    }
}

impl FiniteMarkovShift {
    pub fn new(transition: Vec<Vec<f64>>, reference: Vec<usize>, total_mass: f64) -> Result<Self> {
        let n = transition.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty transition matrix".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParameter(format!("row {i} has wrong length")));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidParameter(format!("row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("row {i} sums to {s}")));
            }
        }
        if !(total_mass.is_finite() && total_mass > 0.0) {
            return Err(Error::InvalidParameter(format!("total mass {total_mass}")));
        }
        check_states(&reference, n)?;
        if !irreducible(&transition) {
            return Err(Error::InvalidParameter("transition matrix is reducible".into()));
        }
        let stationary = stationary_vector(&transition)?;
        let cumulative = transition
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            transition,
            stationary,
            reference,
            total_mass,
            cumulative,
        })
    }

    pub fn len(&self) -> usize {
        self.transition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transition.is_empty()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    /// Stationary probability vector (sums to 1).
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn reference(&self) -> &[usize] {
        &self.reference
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Invariant measure of a set of states.
    pub fn measure(&self, states: &[usize]) -> f64 {
        self.total_mass * states.iter().map(|&i| self.stationary[i]).sum::<f64>()
    }

    pub fn step<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let row = &self.cumulative[i];
        row.partition_point(|&c| c <= u).min(row.len() - 1)
    }

    fn sample_from<R: Rng + ?Sized>(&self, states: &[usize], rng: &mut R) -> usize {
        let total: f64 = states.iter().map(|&i| self.stationary[i]).sum();
        let mut u = rng.random::<f64>() * total;
        for &i in states {
            u -= self.stationary[i];
            if u < 0.0 {
                return i;
            }
        }
        *states.last().expect("non-empty state set")
    }
}

fn check_states(states: &[usize], n: usize) -> Result<()> {
    if states.is_empty() {
        return Err(Error::ZeroMeasureTarget);
    }
    if let Some(&bad) = states.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!("state {bad} out of range")));
    }
    Ok(())
}

fn irreducible(p: &[Vec<f64>]) -> bool {
    let n = p.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { p[i][j] } else { p[j][i] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

fn stationary_vector(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidParameter("singular stationary system".into()))?;
    if pi.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter("stationary vector not positive".into()));
    }
    Ok(pi.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemModel {
    RenewalTower(RenewalTower),
    /// `x -> x - 1/x` on the real line with Lebesgue measure and `Y = [-1, 1]`.
    BooleMap,
    /// `x -> 2x mod 1` on `[0, 1)`, a probability-preserving control.
    DoublingMap,
    FiniteMarkovShift(FiniteMarkovShift),
}

/// A target together with anything needed to sample from it quickly.
#[derive(Debug, Clone)]
pub struct PreparedTarget {
    pub target: TargetSpec,
    pub measure: f64,
    level_cdf: Vec<f64>,
}

impl SystemModel {
    pub fn renewal_tower(alpha: f64) -> Result<Self> {
        Ok(Self::RenewalTower(RenewalTower::new(alpha)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::RenewalTower(_) => "renewal_tower",
            Self::BooleMap => "boole_map",
            Self::DoublingMap => "doubling_map",
            Self::FiniteMarkovShift(_) => "finite_markov_shift",
        }
    }

    pub fn measure_of_y(&self) -> f64 {
        match self {
            Self::RenewalTower(_) => 1.0,
            Self::BooleMap => 2.0,
            Self::DoublingMap => 1.0,
            Self::FiniteMarkovShift(m) => m.measure(&m.reference),
        }
    }

    /// Total measure, if finite.
    pub fn total_measure(&self) -> Option<f64> {
        match self {
            Self::RenewalTower(t) if t.alpha < 1.0 => None,
            Self::RenewalTower(_) | Self::BooleMap => None,
            Self::DoublingMap => Some(1.0),
            Self::FiniteMarkovShift(m) => Some(m.total_mass),
        }
    }

    /// Regularly varying return sequence, where it is known in closed form.
    pub fn known_scaling(&self) -> Option<ScalingFunction> {
        match self {
            Self::RenewalTower(t) if t.alpha < 1.0 => {
                let c = 1.0 / (gamma(1.0 - t.alpha) * gamma(1.0 + t.alpha));
                ScalingFunction::power(c, t.alpha).ok()
            }
            Self::RenewalTower(_) => ScalingFunction::new(1.0, 1.0, -1.0).ok(),
            Self::BooleMap => ScalingFunction::power(2f64.sqrt() / PI, 0.5).ok(),
            Self::DoublingMap => Some(ScalingFunction::identity()),
            Self::FiniteMarkovShift(m) => ScalingFunction::power(1.0 / m.total_mass, 1.0).ok(),
        }
    }

    fn unsupported(&self, t: &TargetSpec) -> Error {
        Error::UnsupportedTarget {
            system: self.name().into(),
            target: t.name().into(),
        }
    }

    pub fn validate_target(&self, t: &TargetSpec) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match (self, t) {
            (_, TargetSpec::Reference) => Ok(()),
            (Self::RenewalTower(_), TargetSpec::LabelInterval { lo, hi }) => {
                if !(0.0..=1.0).contains(lo) || !(0.0..=1.0).contains(hi) || hi < lo {
                    return bad(format!("label interval [{lo}, {hi}) not inside [0, 1]"));
                }
                if hi == lo {
                    return Err(Error::ZeroMeasureTarget);
                }
                Ok(())
            }
            (Self::RenewalTower(_), TargetSpec::ShortReturnColumn { depth, width }) => {
                if !(0.0..=1.0).contains(width) {
                    return bad(format!("column width {width} outside [0, 1]"));
                }
                if *depth == 0 || *width == 0.0 {
                    return Err(Error::ZeroMeasureTarget);
                }
                Ok(())
            }
            (
                Self::BooleMap | Self::DoublingMap,
                TargetSpec::IntervalInY {
                    center,
                    half_width,
                },
            ) => {
                let (lo, hi) = if matches!(self, Self::BooleMap) {
                    (-1.0, 1.0)
                } else {
                    (0.0, 1.0)
                };
                if !half_width.is_finite() || *half_width < 0.0 {
                    return bad(format!("half width {half_width}"));
                }
                if *half_width == 0.0 {
                    return Err(Error::ZeroMeasureTarget);
                }
                if center - half_width < lo || center + half_width > hi {
                    return bad(format!(
                        "interval around {center} of half width {half_width} leaves [{lo}, {hi}]"
                    ));
                }
                Ok(())
            }
            (Self::DoublingMap, TargetSpec::DyadicInterval { level, index }) => {
                if *level > 64 {
                    return bad(format!("dyadic level {level} above 64"));
                }
                if *level < 64 && *index >> *level != 0 {
                    return bad(format!("dyadic index {index} too large for level {level}"));
                }
                Ok(())
            }
            (Self::FiniteMarkovShift(m), TargetSpec::StateSet { states }) => {
                check_states(states, m.len())
            }
            _ => Err(self.unsupported(t)),
        }
    }

    pub fn measure_of_target(&self, t: &TargetSpec) -> Result<f64> {
        self.validate_target(t)?;
        Ok(match (self, t) {
            (_, TargetSpec::Reference) => self.measure_of_y(),
            (_, TargetSpec::LabelInterval { lo, hi }) => hi - lo,
            (Self::RenewalTower(tw), TargetSpec::ShortReturnColumn { depth, width }) => {
                width * (0..*depth).map(|j| tw.level_mass(j)).sum::<f64>()
            }
            (_, TargetSpec::IntervalInY { half_width, .. }) => 2.0 * half_width,
            (_, TargetSpec::DyadicInterval { level, .. }) => 0.5f64.powi(*level as i32),
            (Self::FiniteMarkovShift(m), TargetSpec::StateSet { states }) => m.measure(states),
            _ => unreachable!("validated above"),
        })
    }

    pub fn contains(&self, t: &TargetSpec, s: &State) -> bool {
        match (self, t, s) {
            (Self::RenewalTower(_), TargetSpec::Reference, State::Tower(x)) => x.level == 0,
            (Self::RenewalTower(_), TargetSpec::LabelInterval { lo, hi }, State::Tower(x)) => {
                x.level == 0 && *lo <= x.label && x.label < *hi
            }
            (
                Self::RenewalTower(_),
                TargetSpec::ShortReturnColumn { depth, width },
                State::Tower(x),
            ) => x.level < *depth && x.label < *width,
            (Self::BooleMap, TargetSpec::Reference, State::Real(x)) => x.abs() <= 1.0,
            (Self::DoublingMap, TargetSpec::Reference, State::Dyadic(_)) => true,
            (
                Self::BooleMap | Self::DoublingMap,
                TargetSpec::IntervalInY {
                    center,
                    half_width,
                },
                s,
            ) => s
                .coordinate()
                .is_some_and(|x| (x - center).abs() <= *half_width),
            (Self::DoublingMap, TargetSpec::DyadicInterval { level, index }, State::Dyadic(b)) => {
                *level == 0 || b >> (64 - level) == *index
            }
            (Self::FiniteMarkovShift(m), TargetSpec::Reference, State::Site(i)) => {
                m.reference.contains(i)
            }
            (Self::FiniteMarkovShift(_), TargetSpec::StateSet { states }, State::Site(i)) => {
                states.contains(i)
            }
            _ => false,
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, s: &State, rng: &mut R) -> State {
        match (self, *s) {
            (Self::RenewalTower(t), State::Tower(x)) => State::Tower(t.step(x, rng)),
            (Self::BooleMap, State::Real(x)) => State::Real(boole(x)),
            (Self::DoublingMap, State::Dyadic(b)) => {
                // the digit shifted in is the next, not yet observed, binary digit
                State::Dyadic(b << 1 | rng.random::<bool>() as u64)
            }
            (Self::FiniteMarkovShift(m), State::Site(i)) => State::Site(m.step(i, rng)),
            _ => panic!("state {s:?} does not belong to {}", self.name()),
        }
    }

    pub fn sample_mu_y<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self {
            Self::RenewalTower(_) => State::Tower(TowerState {
                level: 0,
                remaining: 0,
                label: rng.random(),
            }),
            Self::BooleMap => State::Real(rng.random_range(-1.0..1.0)),
            Self::DoublingMap => State::Dyadic(rng.random()),
            Self::FiniteMarkovShift(m) => State::Site(m.sample_from(&m.reference, rng)),
        }
    }

    pub fn prepare(&self, t: &TargetSpec) -> Result<PreparedTarget> {
        let measure = self.measure_of_target(t)?;
        let mut level_cdf = Vec::new();
        if let (Self::RenewalTower(tw), TargetSpec::ShortReturnColumn { depth, .. }) = (self, t) {
            let mut acc = 0.0;
            level_cdf = (0..*depth)
                .map(|j| {
                    acc += tw.level_mass(j);
                    acc
                })
                .collect();
        }
        Ok(PreparedTarget {
            target: t.clone(),
            measure,
            level_cdf,
        })
    }

    /// Draws from the normalized restriction of the invariant measure to `t`.
    pub fn sample_mu_e<R: Rng + ?Sized>(&self, t: &TargetSpec, rng: &mut R) -> Result<State> {
        Ok(self.sample_prepared(&self.prepare(t)?, rng))
    }

    pub fn sample_prepared<R: Rng + ?Sized>(&self, p: &PreparedTarget, rng: &mut R) -> State {
        match (self, &p.target) {
            (_, TargetSpec::Reference) => self.sample_mu_y(rng),
            (Self::RenewalTower(_), TargetSpec::LabelInterval { lo, hi }) => {
                State::Tower(TowerState {
                    level: 0,
                    remaining: 0,
                    label: lo + (hi - lo) * rng.random::<f64>(),
                })
            }
            (Self::RenewalTower(tw), TargetSpec::ShortReturnColumn { width, .. }) => {
                let total = *p.level_cdf.last().expect("depth >= 1");
                let u = rng.random::<f64>() * total;
                let level = p.level_cdf.partition_point(|&c| c <= u).min(p.level_cdf.len() - 1)
                    as u64;
                let remaining = if level == 0 {
                    0
                } else {
                    tw.draw_excursion_beyond(level, rng) - level
                };
                State::Tower(TowerState {
                    level,
                    remaining,
                    label: width * rng.random::<f64>(),
                })
            }
            (
                Self::BooleMap,
                TargetSpec::IntervalInY {
                    center,
                    half_width,
                },
            ) => State::Real(center + half_width * rng.random_range(-1.0..=1.0)),
            (
                Self::DoublingMap,
                TargetSpec::IntervalInY {
                    center,
                    half_width,
                },
            ) => State::dyadic_from_f64(center + half_width * rng.random_range(-1.0..1.0)),
            (Self::DoublingMap, TargetSpec::DyadicInterval { level, index }) => {
                let low: u64 = rng.random();
                State::Dyadic(match *level {
                    0 => low,
                    64 => *index,
                    l => index << (64 - l) | low >> l,
                })
            }
            (Self::FiniteMarkovShift(m), TargetSpec::StateSet { states }) => {
                State::Site(m.sample_from(states, rng))
            }
            _ => unreachable!("prepared targets are validated"),
        }
    }
}

/// One step of the Boole map, nudging the singular point off zero.
pub fn boole(x: f64) -> f64 {
    let x = if x == 0.0 {
        log::debug!("boole map orbit landed on 0, nudged to {BOOLE_ORIGIN_NUDGE:e}");
        BOOLE_ORIGIN_NUDGE
    } else {
        x
    };
    x - 1.0 / x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn boole_maps_one_to_zero() {
        assert_eq!(boole(1.0), 0.0);
        assert_eq!(boole(2.0), 1.5);
        assert!(boole(0.0).is_finite() || boole(0.0) == f64::NEG_INFINITY);
    }

    #[test]
    fn doubling_step_example() {
        let sys = SystemModel::DoublingMap;
        let s = State::dyadic_from_f64(0.3);
        let next = sys.step(&s, &mut rng()).coordinate().unwrap();
        assert!((next - 0.6).abs() < 1e-15);
    }

    #[test]
    fn tower_level_zero_has_unit_mass() {
        let sys = SystemModel::renewal_tower(0.5).unwrap();
        assert_eq!(sys.measure_of_target(&TargetSpec::Reference).unwrap(), 1.0);
        let col = TargetSpec::ShortReturnColumn {
            depth: 3,
            width: 0.5,
        };
        let want = 0.5 * (1.0 + 2f64.powf(-0.5) + 3f64.powf(-0.5));
        assert!((sys.measure_of_target(&col).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn excursion_tail() {
        let t = RenewalTower::new(0.5).unwrap();
        let mut r = rng();
        let n = 200_000;
        let over3 = (0..n).filter(|_| t.draw_excursion(&mut r) > 3).count() as f64 / n as f64;
        assert!((over3 - 0.5).abs() < 0.005);
        let beyond: Vec<u64> = (0..1000).map(|_| t.draw_excursion_beyond(7, &mut r)).collect();
        assert!(beyond.iter().all(|&l| l > 7));
    }

    #[test]
    fn zero_measure_and_unsupported_targets() {
        let tower = SystemModel::renewal_tower(0.5).unwrap();
        assert_eq!(
            tower.measure_of_target(&TargetSpec::label_interval(0.0)),
            Err(Error::ZeroMeasureTarget)
        );
        assert!(matches!(
            SystemModel::BooleMap.measure_of_target(&TargetSpec::label_interval(0.1)),
            Err(Error::UnsupportedTarget { .. })
        ));
        assert!(SystemModel::BooleMap
            .measure_of_target(&TargetSpec::IntervalInY {
                center: 0.9,
                half_width: 0.2
            })
            .is_err());
    }

    #[test]
    fn dyadic_sampling_stays_in_cylinder() {
        let sys = SystemModel::DoublingMap;
        let t = TargetSpec::dyadic(10);
        let p = sys.prepare(&t).unwrap();
        assert_eq!(p.measure, 2f64.powi(-10));
        let mut r = rng();
        for _ in 0..1000 {
            let s = sys.sample_prepared(&p, &mut r);
            assert!(sys.contains(&t, &s));
            let x = s.coordinate().unwrap();
            assert!((0.5..0.5 + 2f64.powi(-10)).contains(&x));
        }
    }

    #[test]
    fn column_sampling_respects_levels() {
        let sys = SystemModel::renewal_tower(0.5).unwrap();
        let t = TargetSpec::ShortReturnColumn {
            depth: 50,
            width: 0.1,
        };
        let p = sys.prepare(&t).unwrap();
        let mut r = rng();
        for _ in 0..2000 {
            let s = sys.sample_prepared(&p, &mut r);
            assert!(sys.contains(&t, &s));
            if let State::Tower(x) = s {
                assert_eq!(x.remaining == 0, x.level == 0);
            }
        }
    }

    #[test]
    fn markov_stationary_vector() {
        let m = FiniteMarkovShift::new(
            vec![vec![0.5, 0.5, 0.0], vec![0.25, 0.5, 0.25], vec![0.0, 0.5, 0.5]],
            vec![0],
            1.0,
        )
        .unwrap();
        let pi = m.stationary();
        assert!((pi[0] - 0.25).abs() < 1e-14);
        assert!((pi[1] - 0.5).abs() < 1e-14);
        let periodic =
            FiniteMarkovShift::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0], 2.0).unwrap();
        assert!((periodic.stationary()[0] - 0.5).abs() < 1e-15);
        assert_eq!(periodic.measure(&[0]), 1.0);
        assert!(
            FiniteMarkovShift::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]], vec![0], 1.0).is_err()
        );
    }

    #[test]
    fn known_scalings() {
        let s = SystemModel::renewal_tower(0.5).unwrap().known_scaling().unwrap();
        assert!((s.coefficient() - 2.0 / PI).abs() < 1e-14);
        let b = SystemModel::BooleMap.known_scaling().unwrap();
        assert!((b.coefficient() - 2f64.sqrt() / PI).abs() < 1e-15);
        assert_eq!(
            SystemModel::DoublingMap.known_scaling(),
            Some(ScalingFunction::identity())
        );
    }
}
