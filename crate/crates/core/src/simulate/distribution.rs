use crate::error::{Error, Result};
use crate::laws::LimitLaw;
use serde::Serialize;

/// Right-continuous step function on a grid `0 = t_0 < ... < t_m`, with values in `[0, 1]`.
///
/// Empirical estimates carry the number of samples and how many were censored.
/// Values are not required to be monotone: transform outputs need not be.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubDistribution {
    grid: Vec<f64>,
    values: Vec<f64>,
    sample_count: u64,
    censored_count: u64,
}

const RANGE_SLACK: f64 = 1e-12;

pub fn uniform_grid(t_max: f64, intervals: usize) -> Vec<f64> {
    let h = t_max / intervals as f64;
    (0..=intervals).map(|i| i as f64 * h).collect()
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::InvalidParameter(format!("grid starts at {}", grid[0])));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "grid must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

impl SubDistribution {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        if values
            .iter()
            .any(|v| !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(v))
        {
            return Err(Error::InvalidParameter("values outside [0, 1]".into()));
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self {
            grid,
            values,
            sample_count: 0,
            censored_count: 0,
        })
    }

    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn from_law(grid: Vec<f64>, law: &LimitLaw) -> Result<Self> {
        Self::from_fn(grid, |t| law.cdf(t))
    }

    /// Empirical distribution function; `None` entries are censored and count
    /// towards the sample size only.
    pub fn from_samples(grid: Vec<f64>, samples: &[Option<f64>]) -> Result<Self> {
        check_grid(&grid)?;
        if samples.is_empty() {
            return Err(Error::InvalidParameter("no samples".into()));
        }
        let mut seen: Vec<f64> = samples.iter().flatten().copied().collect();
        seen.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let values = grid
            .iter()
            .map(|&t| seen.partition_point(|&v| v <= t) as f64 / n)
            .collect();
        let mut d = Self::new(grid, values)?;
        d.sample_count = samples.len() as u64;
        d.censored_count = (samples.len() - seen.len()) as u64;
        Ok(d)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        *self.grid.last().expect("non-empty grid")
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn censored_count(&self) -> u64 {
        self.censored_count
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.sample_count == 0 {
            0.0
        } else {
            self.censored_count as f64 / self.sample_count as f64
        }
    }

    /// Mass assigned to `[0, t_max]`.
    pub fn total_mass(&self) -> f64 {
        *self.values.last().expect("non-empty grid")
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let i = self.grid.partition_point(|&g| g <= t);
        self.values[i.saturating_sub(1)]
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0] - tol)
    }

    /// Largest absolute difference on the union of both grids, up to the smaller `t_max`.
    pub fn sup_distance(&self, other: &SubDistribution) -> f64 {
        ks_distance_within(self, other, self.t_max().min(other.t_max()))
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            grid: self.grid.clone(),
            values,
            sample_count: 0,
            censored_count: 0,
        }
    }

    pub(crate) fn with_grid(&self, grid: Vec<f64>) -> Self {
        Self {
            grid,
            values: self.values.clone(),
            sample_count: self.sample_count,
            censored_count: self.censored_count,
        }
    }
}

/// Anything with a distribution function that can be compared against a [`SubDistribution`].
pub trait Cdf {
    fn cdf(&self, t: f64) -> f64;
    /// Points where the function jumps or changes definition.
    fn knots(&self) -> &[f64] {
        &[]
    }
}

impl Cdf for SubDistribution {
    fn cdf(&self, t: f64) -> f64 {
        self.eval(t)
    }
    fn knots(&self) -> &[f64] {
        &self.grid
    }
}

impl Cdf for LimitLaw {
    fn cdf(&self, t: f64) -> f64 {
        LimitLaw::cdf(self, t)
    }
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, t: f64) -> f64 {
        self(t)
    }
}

/// Sup distance between `f` and `g` over the union of their grids on `[0, t_max(f)]`.
pub fn ks_distance(f: &SubDistribution, g: &dyn Cdf) -> f64 {
    ks_distance_within(f, g, f.t_max())
}

/// As [`ks_distance`], restricted to `[0, t_hi]`.
pub fn ks_distance_within(f: &SubDistribution, g: &dyn Cdf, t_hi: f64) -> f64 {
    let points = f
        .grid
        .iter()
        .chain(g.knots())
        .copied()
        .filter(|&t| (0.0..=t_hi).contains(&t));
    points
        .map(|t| (f.eval(t) - g.cdf(t)).abs())
        .fold(0.0, f64::max)
}

/// Exact one-sample Kolmogorov-Smirnov statistic against a continuous distribution function.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}
