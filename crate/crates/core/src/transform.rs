//! Transforms taking the law of normalized return times to the law of
//! normalized hitting times.
//!
//! Inputs are node values of a distribution function. On each cell the
//! survival function `1 - F` is replaced by the average of its two end values
//! and the kernel is integrated exactly against that constant, so a cell
//! contributes `c_j [k(t_i - t_j) - k(t_i - t_{j+1})]` with `k(s) = s^alpha`.

use crate::error::{Error, Result};
use crate::simulate::SubDistribution;
use serde::{Deserialize, Serialize};

pub const MIN_GRID_POINTS: usize = 8;
/// Largest `|F(0)|` accepted by [`invert`].
pub const ORIGIN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformKind {
    /// `F(t) = int_0^t [1 - F~(s)] ds`.
    Hlv,
    /// `F(t) = int_0^t [1 - F~(s)] alpha (t - s)^(alpha - 1) ds`.
    Fractional { alpha: f64 },
    /// `G(t) = t int_0^1 [1 - G~(t (1 - r)^alpha)] alpha r^(alpha - 1) dr`.
    DistortedPositive { alpha: f64 },
    /// `G(t) = t [1 - G~(t)]`.
    DistortedZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub kind: TransformKind,
    /// Largest grid spacing accepted, if set.
    #[serde(default)]
    pub resolution: Option<f64>,
}

impl TransformSpec {
    pub fn new(kind: TransformKind) -> Result<Self> {
        let s = Self {
            kind,
            resolution: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_resolution(self, h: f64) -> Result<Self> {
        let s = Self {
            resolution: Some(h),
            ..self
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            TransformKind::Fractional { alpha } | TransformKind::DistortedPositive { alpha } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "transform order {alpha} outside (0, 1]"
                    )));
                }
            }
            TransformKind::Hlv | TransformKind::DistortedZero => {}
        }
        if let Some(h) = self.resolution {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidParameter(format!("resolution {h}")));
            }
        }
        Ok(())
    }

    fn check_grid(&self, grid: &[f64]) -> Result<()> {
        self.validate()?;
        if grid.len() < MIN_GRID_POINTS {
            return Err(Error::GridTooCoarse(grid.len()));
        }
        if let Some(h) = self.resolution {
            let widest = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            if widest > h * (1.0 + 1e-9) {
                return Err(Error::InvalidParameter(format!(
                    "grid spacing {widest} exceeds resolution {h}"
                )));
            }
        }
        Ok(())
    }

    /// Order of the power kernel, for the kinds that have one.
    fn power(&self) -> Option<f64> {
        match self.kind {
            TransformKind::Hlv => Some(1.0),
            TransformKind::Fractional { alpha } => Some(alpha),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformOutput {
    pub law: SubDistribution,
    /// Largest adjustment made when clipping to `[0, 1]`.
    pub clipped: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub law: SubDistribution,
    /// Largest adjustment made when clamping to `[0, 1]`.
    pub clamped: f64,
    /// Largest adjustment made by the running maximum.
    pub remonotonized: f64,
}

fn cell_values(f: &[f64]) -> Vec<f64> {
    f.windows(2).map(|w| 1.0 - 0.5 * (w[0] + w[1])).collect()
}

fn uniform_step(grid: &[f64]) -> Option<f64> {
    let h = grid[1] - grid[0];
    grid.iter()
        .enumerate()
        .all(|(i, &t)| (t - i as f64 * h).abs() <= 1e-9 * h)
        .then_some(h)
}

/// Cell weights of the power kernel, either as a Toeplitz sequence or computed per entry.
enum PowerWeights<'a> {
    Uniform(Vec<f64>),
    General { grid: &'a [f64], alpha: f64 },
}

impl<'a> PowerWeights<'a> {
    fn new(grid: &'a [f64], alpha: f64) -> Self {
        match uniform_step(grid) {
            Some(h) => {
                let m = grid.len() - 1;
                let k = (0..=m)
                    .map(|d| {
                        if d == 0 {
                            0.0
                        } else {
                            (d as f64 * h).powf(alpha) - ((d - 1) as f64 * h).powf(alpha)
                        }
                    })
                    .collect();
                Self::Uniform(k)
            }
            None => Self::General { grid, alpha },
        }
    }

    /// Weight of cell `j` at node `i > j`.
    fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Uniform(k) => k[i - j],
            Self::General { grid, alpha } => {
                (grid[i] - grid[j]).powf(*alpha) - (grid[i] - grid[j + 1]).powf(*alpha)
            }
        }
    }

    fn apply(&self, cells: &[f64]) -> Vec<f64> {
        let m = cells.len();
        let mut out = vec![0.0; m + 1];
        match self {
            Self::Uniform(k) => {
                for (i, o) in out.iter_mut().enumerate().skip(1) {
                    *o = cells[..i]
                        .iter()
                        .zip(k[1..=i].iter().rev())
                        .map(|(c, w)| c * w)
                        .sum();
                }
            }
            Self::General { .. } => {
                for (i, o) in out.iter_mut().enumerate().skip(1) {
                    *o = (0..i).map(|j| cells[j] * self.at(i, j)).sum();
                }
            }
        }
        out
    }
}

fn distorted_positive(grid: &[f64], cells: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for i in 1..grid.len() {
        let t = grid[i];
        // r at which t (1 - r)^alpha crosses grid[j]
        let r = |j: usize| 1.0 - (grid[j] / t).powf(1.0 / alpha);
        out[i] = t * (0..i)
            .map(|j| cells[j] * (r(j).powf(alpha) - r(j + 1).max(0.0).powf(alpha)))
            .sum::<f64>();
    }
    out
}

fn clip(values: Vec<f64>) -> (Vec<f64>, f64) {
    let mut worst: f64 = 0.0;
    let v = values
        .into_iter()
        .map(|x| {
            let y = x.clamp(0.0, 1.0);
            worst = worst.max((x - y).abs());
            y
        })
        .collect();
    (v, worst)
}

/// Applies the transform without clipping.
fn apply_raw(spec: &TransformSpec, input: &SubDistribution) -> Vec<f64> {
    let grid = input.grid();
    let f = input.values();
    match spec.kind {
        TransformKind::Hlv | TransformKind::Fractional { .. } => {
            let alpha = spec.power().expect("power kernel");
            PowerWeights::new(grid, alpha).apply(&cell_values(f))
        }
        TransformKind::DistortedPositive { alpha } => {
            distorted_positive(grid, &cell_values(f), alpha)
        }
        TransformKind::DistortedZero => grid.iter().zip(f).map(|(t, g)| t * (1.0 - g)).collect(),
    }
}

/// Law of normalized hitting times from the law of normalized return times.
pub fn forward(spec: &TransformSpec, input: &SubDistribution) -> Result<TransformOutput> {
    spec.check_grid(input.grid())?;
    let (values, clipped) = clip(apply_raw(spec, input));
    Ok(TransformOutput {
        law: input.with_values(values),
        clipped,
    })
}

/// Recovers the return-time law from a hitting-time law by solving the
/// lower-triangular system of [`forward`].
pub fn invert(spec: &TransformSpec, output: &SubDistribution) -> Result<Inversion> {
    let alpha = spec.power().ok_or_else(|| {
        Error::InvalidParameter("only the finite-measure and fractional transforms invert".into())
    })?;
    spec.check_grid(output.grid())?;
    let f = output.values();
    if f[0].abs() > ORIGIN_TOLERANCE {
        return Err(Error::NonzeroAtOrigin(f[0]));
    }
    let grid = output.grid();
    let m = grid.len() - 1;
    let w = PowerWeights::new(grid, alpha);
    let mut c = vec![0.0; m];
    for i in 1..=m {
        let diag = w.at(i, i - 1);
        assert!(diag > 0.0, "zero diagonal weight at node {i}");
        let known: f64 = (0..i - 1).map(|j| c[j] * w.at(i, j)).sum();
        c[i - 1] = (f[i] - known) / diag;
    }
    let survival = nodes_from_cells(&c);
    let raw: Vec<f64> = survival.iter().map(|g| 1.0 - g).collect();
    let (clamped_vals, clamped) = clip(raw);
    let mut remonotonized: f64 = 0.0;
    let mut running = f64::NEG_INFINITY;
    let values = clamped_vals
        .into_iter()
        .map(|v| {
            if v < running {
                remonotonized = remonotonized.max(running - v);
                running
            } else {
                running = v;
                v
            }
        })
        .collect();
    Ok(Inversion {
        law: output.with_values(values),
        clamped,
        remonotonized,
    })
}

/// Node values `g` with `(g_j + g_{j+1}) / 2 = c_j`.
///
/// Solutions differ by multiples of `(-1)^j`; the multiple is chosen to minimize
/// the squared fourth differences.
fn nodes_from_cells(c: &[f64]) -> Vec<f64> {
    let m = c.len();
    let mut g = vec![0.0; m + 1];
    for j in 0..m {
        g[j + 1] = 2.0 * c[j] - g[j];
    }
    debug_assert!(m + 1 >= MIN_GRID_POINTS);
    // the fourth difference of (-1)^j is 16 (-1)^j
    let mut acc = 0.0;
    for j in 0..=m - 4 {
        let d4 = g[j] - 4.0 * g[j + 1] + 6.0 * g[j + 2] - 4.0 * g[j + 3] + g[j + 4];
        acc += sign(j) * d4;
    }
    let lambda = -acc / (16.0 * (m - 3) as f64);
    g.iter().enumerate().map(|(j, v)| v + sign(j) * lambda).collect()
}

fn sign(j: usize) -> f64 {
    if j.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `t -> t^alpha`: return-time scale to distorted scale.
    ReturnToDistorted,
    /// `t -> t^(1/alpha)`: distorted scale to return-time scale.
    DistortedToReturn,
}

/// Moves a law between the return-time and distorted scales, keeping values and
/// reparametrizing the grid.
pub fn change_of_variables(
    law: &SubDistribution,
    alpha: f64,
    direction: Direction,
) -> Result<SubDistribution> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("order {alpha} outside (0, 1]")));
    }
    if alpha == 1.0 {
        return Ok(law.clone());
    }
    let p = match direction {
        Direction::ReturnToDistorted => alpha,
        Direction::DistortedToReturn => 1.0 / alpha,
    };
    let grid: Vec<f64> = law.grid().iter().map(|t| t.powf(p)).collect();
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(
            "reparametrized grid is not strictly increasing".into(),
        ));
    }
    Ok(law.with_grid(grid))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub law: SubDistribution,
    /// Sup residual `|T(F) - F|` over the working mesh.
    pub change: f64,
    /// Number of nodes in the working mesh.
    pub mesh_size: usize,
}

/// Relative width of working cells near the origin in [`fixed_point`].
const GRADING: f64 = 0.05;
const GRADING_FLOOR: f64 = 1e-13;

/// `grid` with cells near the origin split so each has width at most `GRADING * t`.
///
/// The fixed point behaves like `t^alpha` at the origin, which equal cells resolve poorly.
fn graded_mesh(grid: &[f64]) -> Vec<f64> {
    let mut mesh = vec![0.0];
    let mut t = grid[1] * GRADING_FLOOR;
    while t < grid[1] {
        mesh.push(t);
        t *= 1.0 + GRADING;
    }
    for w in grid[1..].windows(2) {
        mesh.push(w[0]);
        let parts = ((w[1] - w[0]) / (GRADING * w[0])).ceil().max(1.0) as usize;
        for k in 1..parts {
            mesh.push(w[0] + (w[1] - w[0]) * k as f64 / parts as f64);
        }
    }
    mesh.push(*grid.last().expect("grid checked"));
    mesh
}

/// Fixed point of the fractional transform of order `alpha` on `grid`.
///
/// The discrete equation is solved node by node, which gives the limit of
/// Picard iteration without its intermediate growth on long horizons. Fails
/// if the residual exceeds `tol`.
pub fn fixed_point(alpha: f64, grid: &[f64], tol: f64) -> Result<FixedPoint> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol}")));
    }
    let kind = if alpha == 1.0 {
        TransformKind::Hlv
    } else {
        TransformKind::Fractional { alpha }
    };
    let spec = TransformSpec::new(kind)?;
    spec.check_grid(grid)?;
    let mesh = if alpha < 1.0 {
        graded_mesh(grid)
    } else {
        grid.to_vec()
    };
    let w = PowerWeights::new(&mesh, alpha);
    let n = mesh.len();
    let mut f = vec![0.0; n];
    let mut c = vec![0.0; n - 1];
    for i in 1..n {
        let known: f64 = (0..i - 1).map(|j| c[j] * w.at(i, j)).sum();
        let d = w.at(i, i - 1);
        f[i] = (known + d * (1.0 - 0.5 * f[i - 1])) / (1.0 + 0.5 * d);
        c[i - 1] = 1.0 - 0.5 * (f[i - 1] + f[i]);
    }
    let change = w
        .apply(&c)
        .iter()
        .zip(&f)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !(change < tol) {
        return Err(Error::NoConvergence {
            iterations: 1,
            change,
        });
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut k = 0;
    for &t in grid {
        while mesh[k] < t {
            k += 1;
        }
        values.push(f[k].clamp(0.0, 1.0));
    }
    Ok(FixedPoint {
        law: SubDistribution::new(grid.to_vec(), values)?,
        change,
        mesh_size: n,
    })
}
