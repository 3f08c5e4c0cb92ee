//! Monte Carlo estimation of normalized return- and hitting-time laws.
//!
//! Every sample draws from its own ChaCha8 stream keyed by `(seed, purpose)`
//! and indexed by the sample number, so results do not depend on the number
//! of worker threads, and runs that differ only in the cap share their
//! random numbers.

mod distribution;

pub use distribution::{
    ks_distance, ks_distance_within, ks_statistic, uniform_grid, Cdf, SubDistribution,
};

use crate::error::{Error, Result};
use crate::scaling::ScalingFunction;
use crate::systems::{boole, PreparedTarget, RenewalTower, State, SystemModel, TargetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Beyond this distance from the origin, Boole orbits are advanced with the
/// integrated drift of `x^2` instead of step by step.
pub const BOOLE_FAR_FIELD: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepping {
    /// Closed-form excursions for the tower, far-field jumps for the Boole map.
    #[default]
    Accelerated,
    /// Apply the map one step at a time.
    Exact,
}

/// Initial law of a first-entrance time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartLaw {
    /// Normalized restriction to the target; gives return times.
    MuE,
    /// Normalized restriction to the reference set; gives hitting times.
    MuY,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// `gamma(mu(E)) * phi`.
    Gamma(ScalingFunction),
    /// `mu(E) * a(phi)`.
    Distorted(ScalingFunction),
    Raw,
}

impl Normalization {
    pub fn apply(&self, measure: f64, phi: f64) -> f64 {
        match self {
            Self::Gamma(a) => a.gamma(measure) * phi,
            Self::Distorted(a) => measure * a.eval(phi),
            Self::Raw => phi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub n_samples: usize,
    pub cap: u64,
    pub seed: u64,
    /// Distinguishes independent estimates made with the same seed.
    pub stream: u64,
    pub stepping: Stepping,
}

impl RunParams {
    pub fn new(n_samples: usize, cap: u64, seed: u64) -> Self {
        Self {
            n_samples,
            cap,
            seed,
            stream: 0,
            stepping: Stepping::Accelerated,
        }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    fn check(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("sample count must be positive".into()));
        }
        if self.cap == 0 {
            return Err(Error::InvalidParameter("cap must be positive".into()));
        }
        Ok(())
    }
}

/// Generator for sample `index` of the estimate identified by `(seed, purpose)`.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// First `n` in `1..=cap` with `T^n(start)` in the target, or `None` if censored.
pub fn first_entrance<R: Rng + ?Sized>(
    sys: &SystemModel,
    target: &PreparedTarget,
    start: State,
    cap: u64,
    stepping: Stepping,
    rng: &mut R,
) -> Option<u64> {
    let accelerated = stepping == Stepping::Accelerated;
    match (sys, &target.target, start) {
        (SystemModel::RenewalTower(t), tgt, State::Tower(s)) if accelerated => {
            let (lo, hi, depth) = match *tgt {
                TargetSpec::Reference => (0.0, 1.0, 1),
                TargetSpec::LabelInterval { lo, hi } => (lo, hi, 1),
                TargetSpec::ShortReturnColumn { depth, width } => (0.0, width, depth),
                _ => unreachable!("validated target"),
            };
            tower_entrance(t, s, Band { lo, hi, depth }, cap, rng)
        }
        (SystemModel::BooleMap, tgt, State::Real(x)) => {
            let (lo, hi) = match *tgt {
                TargetSpec::Reference => (-1.0, 1.0),
                TargetSpec::IntervalInY {
                    center,
                    half_width,
                } => (center - half_width, center + half_width),
                _ => unreachable!("validated target"),
            };
            boole_entrance(x, lo, hi, cap, accelerated)
        }
        _ => {
            let mut s = start;
            for n in 1..=cap {
                s = sys.step(&s, rng);
                if sys.contains(&target.target, &s) {
                    return Some(n);
                }
            }
            None
        }
    }
}

struct Band {
    lo: f64,
    hi: f64,
    depth: u64,
}

/// Tower states below `depth` with label in `[lo, hi)`. Labels stay fixed along an
/// excursion, so only the first step of the current excursion and the fresh labels
/// drawn at each return to level 0 can enter the band.
fn tower_entrance<R: Rng + ?Sized>(
    t: &RenewalTower,
    s: crate::systems::TowerState,
    band: Band,
    cap: u64,
    rng: &mut R,
) -> Option<u64> {
    let inside = |u: f64| band.lo <= u && u < band.hi;
    let mut time = if s.remaining > 0 {
        if s.remaining >= 2 && inside(s.label) && s.level + 1 < band.depth {
            return Some(1);
        }
        s.remaining
    } else {
        let l = t.draw_excursion(rng);
        if l >= 2 && inside(s.label) && band.depth > 1 {
            return Some(1);
        }
        l
    };
    loop {
        if time > cap {
            return None;
        }
        if inside(rng.random::<f64>()) {
            return Some(time);
        }
        time = time.saturating_add(t.draw_excursion(rng));
    }
}

/// First entrance of a Boole orbit into `[lo, hi]`, a subset of `[-1, 1]`.
///
/// Outside `[-1, 1]` the square `u = x^2` decreases by less than 2 per step, which
/// gives an exact early exit once the cap cannot be met. With `accelerate`, stretches
/// far from the origin are skipped by inverting
/// `k = (u0 - u) / 2 + ln((2 u0 - 1) / (2 u - 1)) / 4`.
pub fn boole_entrance(x0: f64, lo: f64, hi: f64, cap: u64, accelerate: bool) -> Option<u64> {
    let mut x = x0;
    let mut n: u64 = 0;
    while n < cap {
        x = boole(x);
        n += 1;
        if lo <= x && x <= hi {
            return Some(n);
        }
        let u = x * x;
        if u > 1.0 {
            if (u - 1.0) / 2.0 >= (cap - n) as f64 {
                return None;
            }
            if accelerate && x.abs() > BOOLE_FAR_FIELD {
                let (k, v) = boole_jump(u, BOOLE_FAR_FIELD * BOOLE_FAR_FIELD);
                n += k;
                x = x.signum() * v.sqrt();
            }
        }
    }
    None
}

fn drift_time(u0: f64, u: f64) -> f64 {
    0.5 * (u0 - u) + 0.25 * ((2.0 * u0 - 1.0) / (2.0 * u - 1.0)).ln()
}

/// Whole number of steps taking `u0` towards `floor`, and the square reached.
fn boole_jump(u0: f64, floor: f64) -> (u64, f64) {
    let k = drift_time(u0, floor).floor();
    if k < 1.0 {
        return (0, u0);
    }
    let mut v = (u0 - 2.0 * k).max(floor);
    for _ in 0..8 {
        let f = drift_time(u0, v) - k;
        let next = v + f * (2.0 * v - 1.0) / v;
        if (next - v).abs() <= 1e-15 * v {
            v = next;
            break;
        }
        v = next;
    }
    (k as u64, v)
}

/// First-entrance times of one target under one initial law.
#[derive(Debug, Clone, PartialEq)]
pub struct EntranceSample {
    pub law: StartLaw,
    pub measure: f64,
    pub cap: u64,
    pub times: Vec<Option<u64>>,
}

impl EntranceSample {
    pub fn normalized(&self, norm: &Normalization) -> Vec<Option<f64>> {
        self.times
            .iter()
            .map(|t| t.map(|phi| norm.apply(self.measure, phi as f64)))
            .collect()
    }

    /// Normalized value of the cap; the empirical law is exact below it.
    pub fn window(&self, norm: &Normalization) -> f64 {
        norm.apply(self.measure, self.cap as f64)
    }

    pub fn censored(&self) -> usize {
        self.times.iter().filter(|t| t.is_none()).count()
    }
}

fn purpose(params: &RunParams, law: StartLaw) -> u64 {
    params.stream.wrapping_mul(4)
        + match law {
            StartLaw::MuE => 1,
            StartLaw::MuY => 2,
        }
}

pub fn sample_entrance_times(
    sys: &SystemModel,
    target: &TargetSpec,
    law: StartLaw,
    params: &RunParams,
) -> Result<EntranceSample> {
    params.check()?;
    let prepared = sys.prepare(target)?;
    let key = purpose(params, law);
    let times = (0..params.n_samples)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let mut rng = stream_rng(params.seed, key, i as u64);
            let start = match law {
                StartLaw::MuE => sys.sample_prepared(&prepared, &mut rng),
                StartLaw::MuY => sys.sample_mu_y(&mut rng),
            };
            first_entrance(sys, &prepared, start, params.cap, params.stepping, &mut rng)
        })
        .collect();
    Ok(EntranceSample {
        law,
        measure: prepared.measure,
        cap: params.cap,
        times,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfEstimate {
    pub cdf: SubDistribution,
    /// Normalized cap. Above it the estimate is a lower bound only.
    pub window: f64,
    pub measure: f64,
}

/// Empirical law of the normalized first-entrance time on `grid`.
pub fn estimate_cdf(
    sys: &SystemModel,
    target: &TargetSpec,
    law: StartLaw,
    norm: &Normalization,
    grid: Vec<f64>,
    params: &RunParams,
) -> Result<CdfEstimate> {
    let sample = sample_entrance_times(sys, target, law, params)?;
    let cdf = SubDistribution::from_samples(grid, &sample.normalized(norm))?;
    Ok(CdfEstimate {
        cdf,
        window: sample.window(norm),
        measure: sample.measure,
    })
}

/// Return-time tails of the reference set and the wandering rate they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    /// `q[n]` estimates `mu_Y(phi_Y > n)` for `n = 0..=n_max`.
    pub q: Vec<f64>,
    pub standard_error: Vec<f64>,
    /// `w[i]` estimates `w_{i+1} = mu(Y) sum_{n <= i} q[n]`.
    pub w: Vec<f64>,
}

pub fn estimate_tails_and_wandering(
    sys: &SystemModel,
    n_max: u64,
    params: &RunParams,
) -> Result<TailEstimate> {
    let params = RunParams {
        cap: n_max,
        ..*params
    };
    let sample = sample_entrance_times(sys, &TargetSpec::Reference, StartLaw::MuE, &params)?;
    let mut hist = vec![0u64; n_max as usize + 1];
    let mut beyond = 0u64;
    for t in &sample.times {
        match t {
            Some(k) => hist[*k as usize] += 1,
            None => beyond += 1,
        }
    }
    let n = sample.times.len() as f64;
    let mut q = vec![0.0; n_max as usize + 1];
    let mut above = beyond;
    for k in (0..=n_max as usize).rev() {
        q[k] = above as f64 / n;
        above += hist[k];
    }
    let standard_error = q.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    let mu_y = sys.measure_of_y();
    let mut acc = 0.0;
    let w = q[..n_max as usize]
        .iter()
        .map(|p| {
            acc += p;
            mu_y * acc
        })
        .collect();
    Ok(TailEstimate {
        q,
        standard_error,
        w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::TowerState;

    #[test]
    fn doubling_from_point_three_enters_left_half_at_two() {
        let sys = SystemModel::DoublingMap;
        let tgt = sys
            .prepare(&TargetSpec::DyadicInterval { level: 1, index: 0 })
            .unwrap();
        let mut rng = stream_rng(1, 0, 0);
        let phi = first_entrance(
            &sys,
            &tgt,
            State::dyadic_from_f64(0.3),
            10,
            Stepping::Exact,
            &mut rng,
        );
        assert_eq!(phi, Some(2));
    }

    #[test]
    fn boole_jump_matches_stepping() {
        for &x0 in &[150.0, 1000.0, 3.0e4] {
            let u0: f64 = x0 * x0;
            let (k, v) = boole_jump(u0, BOOLE_FAR_FIELD * BOOLE_FAR_FIELD);
            let mut x: f64 = x0;
            for _ in 0..k {
                x = boole(x);
            }
            assert!((x * x - v).abs() < 1e-3 * (1.0 + u0 * 1e-12), "x0={x0}: {} vs {v}", x * x);
        }
    }

    #[test]
    fn boole_acceleration_preserves_entrance_law() {
        let n = 3000;
        let cap = 200_000;
        let run = |accelerate| {
            let mut ts: Vec<f64> = (0..n)
                .map(|i| {
                    let mut rng = stream_rng(3, 0, i);
                    let x0 = 0.5 + 0.1 * rng.random_range(-1.0..1.0);
                    boole_entrance(x0, 0.4, 0.6, cap, accelerate).map_or(f64::INFINITY, |t| t as f64)
                })
                .collect();
            ts.sort_by(f64::total_cmp);
            ts
        };
        let (a, b) = (run(true), run(false));
        let grid: Vec<f64> = (0..=60).map(|i| 10f64.powf(i as f64 / 10.0)).collect();
        let frac = |v: &[f64], t: f64| v.partition_point(|&x| x <= t) as f64 / n as f64;
        let d = grid.iter().map(|&t| (frac(&a, t) - frac(&b, t)).abs()).fold(0.0, f64::max);
        // two-sample critical value at the 1% level
        assert!(d < 1.63 * (2.0 / n as f64).sqrt(), "{d}");
    }

    #[test]
    fn boole_censoring_is_exact() {
        // from x = 100 at least 4999.5 steps are needed to re-enter [-1, 1]
        assert_eq!(boole_entrance(100.0 + 1.0 / 100.0 - 1e-9, -1.0, 1.0, 4000, false), None);
    }

    #[test]
    fn tower_shortcut_agrees_with_stepping() {
        let sys = SystemModel::renewal_tower(0.6).unwrap();
        let tgt = TargetSpec::label_interval(0.2);
        let p = sys.prepare(&tgt).unwrap();
        let n = 40_000;
        let run = |stepping| {
            let mut hits = vec![0u64; 6];
            for i in 0..n {
                let mut rng = stream_rng(9, stepping as u64, i);
                let s = sys.sample_prepared(&p, &mut rng);
                if let Some(t) = first_entrance(&sys, &p, s, 5, stepping, &mut rng) {
                    hits[t as usize] += 1;
                }
            }
            hits
        };
        let a = run(Stepping::Accelerated);
        let b = run(Stepping::Exact);
        for k in 1..6 {
            let (pa, pb) = (a[k] as f64 / n as f64, b[k] as f64 / n as f64);
            let se = ((pa * (1.0 - pa) + pb * (1.0 - pb)) / n as f64).sqrt();
            assert!((pa - pb).abs() < 4.0 * se + 1e-4, "k={k}: {pa} vs {pb}");
        }
    }

    #[test]
    fn column_return_in_one_step() {
        let sys = SystemModel::renewal_tower(0.5).unwrap();
        let tgt = TargetSpec::ShortReturnColumn {
            depth: 10,
            width: 0.5,
        };
        let p = sys.prepare(&tgt).unwrap();
        let start = State::Tower(TowerState {
            level: 3,
            remaining: 5,
            label: 0.1,
        });
        let mut rng = stream_rng(0, 0, 0);
        assert_eq!(
            first_entrance(&sys, &p, start, 100, Stepping::Accelerated, &mut rng),
            Some(1)
        );
    }

    #[test]
    fn samples_do_not_depend_on_thread_count() {
        let sys = SystemModel::renewal_tower(0.5).unwrap();
        let params = RunParams::new(3000, 10_000, 77);
        let tgt = TargetSpec::label_interval(0.05);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sample_entrance_times(&sys, &tgt, StartLaw::MuE, &params).unwrap());
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| sample_entrance_times(&sys, &tgt, StartLaw::MuE, &params).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn raising_the_cap_only_uncensors() {
        let sys = SystemModel::renewal_tower(0.5).unwrap();
        let tgt = TargetSpec::label_interval(0.01);
        let lo = RunParams::new(2000, 1_000, 4);
        let hi = RunParams { cap: 100_000, ..lo };
        let a = sample_entrance_times(&sys, &tgt, StartLaw::MuY, &lo).unwrap();
        let b = sample_entrance_times(&sys, &tgt, StartLaw::MuY, &hi).unwrap();
        for (x, y) in a.times.iter().zip(&b.times) {
            if let Some(x) = x {
                assert_eq!(Some(*x), *y);
            }
        }
        assert!(b.censored() <= a.censored());
    }

    #[test]
    fn tower_tails() {
        let sys = SystemModel::renewal_tower(0.5).unwrap();
        let est = estimate_tails_and_wandering(&sys, 1000, &RunParams::new(100_000, 1, 12)).unwrap();
        assert_eq!(est.q[0], 1.0);
        for n in [1usize, 10, 100, 1000] {
            let want = (1.0 + n as f64).powf(-0.5);
            assert!((est.q[n] - want).abs() < 3.5 * est.standard_error[n], "n={n}");
        }
        assert_eq!(est.w.len(), 1000);
    }

    #[test]
    fn doubling_wandering_rate_is_total_mass() {
        let sys = SystemModel::DoublingMap;
        let est = estimate_tails_and_wandering(&sys, 50, &RunParams::new(1000, 1, 1)).unwrap();
        assert!(est.w.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn zero_samples_rejected() {
        let sys = SystemModel::DoublingMap;
        let r = sample_entrance_times(&sys, &TargetSpec::dyadic(3), StartLaw::MuE, &RunParams::new(0, 10, 1));
        assert!(r.is_err());
    }
}
