//! Lorenz, concentration, Murphy and Q curves on explicit grids, and
//! sign-change detection between two curves.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::losses::elementary_loss;
use crate::sample::{midrank_transform, tie_runs, EmpiricalDistribution, PairedSample};
use crate::scalar::{argsort, mean, sorted, Scalar};

/// What the abscissa of a curve means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    /// `p` in `[0, 1]`.
    Probability,
    /// `theta` in `[0, theta_max]`.
    Threshold,
}

/// Ordinates on a strictly increasing grid, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve<T> {
    pub axis: Axis,
    grid: Vec<T>,
    values: Vec<T>,
}

fn check_grid<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGrid);
    }
    Ok(())
}

fn check_probability_grid<T: Scalar>(grid: &[T]) -> Result<()> {
    check_grid(grid)?;
    if grid[0] < T::zero() || grid[grid.len() - 1] > T::one() {
        return Err(Error::ProbabilityOutOfRange(
            if grid[0] < T::zero() { grid[0] } else { grid[grid.len() - 1] }.to_f64_lossy(),
        ));
    }
    Ok(())
}

impl<T: Scalar> Curve<T> {
    pub fn new(axis: Axis, grid: Vec<T>, values: Vec<T>) -> Result<Self> {
        check_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                what: "curve values".into(),
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { column: "curve".into(), row });
        }
        Ok(Self { axis, grid, values })
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Linear interpolation, constant beyond the end points.
    pub fn eval(&self, t: T) -> T {
        let g = &self.grid;
        if t <= g[0] {
            return self.values[0];
        }
        if t >= g[g.len() - 1] {
            return self.values[g.len() - 1];
        }
        let i = g.partition_point(|&v| v <= t) - 1;
        let w = (t - g[i]) / (g[i + 1] - g[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// Pointwise `self - other` on a shared grid.
    pub fn minus(&self, other: &Curve<T>) -> Result<Curve<T>> {
        if self.grid != other.grid || self.axis != other.axis {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a - *b).collect();
        Ok(Curve { axis: self.axis, grid: self.grid.clone(), values })
    }

    pub fn map(&self, f: impl Fn(T, T) -> T) -> Curve<T> {
        let values = self.grid.iter().zip(&self.values).map(|(&g, &v)| f(g, v)).collect();
        Curve { axis: self.axis, grid: self.grid.clone(), values }
    }

    /// Integral of the interpolant over the grid range (trapezoid, exact).
    pub fn integral(&self) -> T {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(g, v)| (g[1] - g[0]) * (v[0] + v[1]) * T::half())
            .sum()
    }

    /// Integral of the squared interpolant, exact per linear segment.
    pub fn integral_of_square(&self) -> T {
        let third = T::one() / T::lit(3.0);
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(g, v)| (g[1] - g[0]) * (v[0] * v[0] + v[0] * v[1] + v[1] * v[1]) * third)
            .sum()
    }

    /// Running integral `u -> integral_{grid[0]}^{u}` at every grid point.
    pub fn cumulative_integral(&self) -> Curve<T> {
        let mut acc = T::zero();
        let mut values = Vec::with_capacity(self.len());
        values.push(acc);
        for (g, v) in self.grid.windows(2).zip(self.values.windows(2)) {
            acc = acc + (g[1] - g[0]) * (v[0] + v[1]) * T::half();
            values.push(acc);
        }
        Curve { axis: self.axis, grid: self.grid.clone(), values }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Writes headerless `abscissa,ordinate` records.
    pub fn write_records<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (g, v) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{g},{v}")?;
        }
        Ok(())
    }

    /// Reads records written by [`Curve::write_records`].
    pub fn read_records<R: BufRead>(axis: Axis, r: R) -> Result<Self> {
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (row, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidParameter(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = || -> Result<T> {
                parts
                    .next()
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .map(T::lit)
                    .ok_or(Error::NonFinite { column: "curve record".into(), row })
            };
            grid.push(next()?);
            values.push(next()?);
        }
        Self::new(axis, grid, values)
    }
}

/// `m` equally spaced points on `[0, 1]`.
pub fn probability_grid<T: Scalar>(m: usize) -> Vec<T> {
    let m = m.max(2);
    let last = T::from_count(m - 1);
    (0..m).map(|i| T::from_count(i) / last).collect()
}

/// Every distinct value of the given columns plus `m` equally spaced points
/// on `[0, 1.05 * max]`. Murphy curves are linear between sample values, so
/// this grid carries them exactly.
pub fn theta_grid<T: Scalar>(columns: &[&[T]], m: usize) -> Vec<T> {
    let mut all: Vec<T> = columns.iter().flat_map(|c| c.iter().copied()).collect();
    let top = all.iter().fold(T::zero(), |a, &b| a.max(b)) * T::lit(1.05);
    let m = m.max(2);
    let last = T::from_count(m - 1);
    all.extend((0..m).map(|i| top * T::from_count(i) / last));
    let mut g = sorted(&all);
    g.dedup();
    g
}

fn lorenz_from_sorted<T: Scalar>(d: &EmpiricalDistribution<T>, p: T) -> T {
    let n = d.len();
    let pos = p * T::from_count(n);
    let k = pos.floor().to_usize().unwrap_or(0).min(n);
    let frac = pos - T::from_count(k);
    let mut s = d.partial_sum(k);
    if k < n && frac > T::zero() {
        s = s + frac * d.values()[k];
    }
    s / d.total()
}

/// `LC_p`: share of the predictor total held by the smallest `p n` values,
/// linear between the knots `k / n`.
pub fn lorenz_curve<T: Scalar>(x: &[T], grid: &[T]) -> Result<Curve<T>> {
    check_probability_grid(grid)?;
    let d = EmpiricalDistribution::new(x)?;
    if !(d.total() > T::zero()) {
        return Err(Error::ZeroTotal("predictor"));
    }
    let values = grid.iter().map(|&p| lorenz_from_sorted(&d, p)).collect();
    Curve::new(Axis::Probability, grid.to_vec(), values)
}

/// Lorenz ordinate at a single `p`.
pub fn lorenz_at<T: Scalar>(x: &[T], p: T) -> Result<T> {
    let d = EmpiricalDistribution::new(x)?;
    if !(d.total() > T::zero()) {
        return Err(Error::ZeroTotal("predictor"));
    }
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::ProbabilityOutOfRange(p.to_f64_lossy()));
    }
    Ok(lorenz_from_sorted(&d, p))
}

/// Responses in ascending predictor order, averaged within tied predictions.
pub(crate) fn responses_by_rank<T: Scalar>(sample: &PairedSample<T>) -> Vec<T> {
    let order = argsort(sample.x());
    let mut out = vec![T::zero(); order.len()];
    for (s, e) in tie_runs(sample.x(), &order) {
        let avg = order[s..e].iter().map(|&i| sample.y()[i]).sum::<T>() / T::from_count(e - s);
        for slot in &mut out[s..e] {
            *slot = avg;
        }
    }
    out
}

/// `CC_p`: share of the response total over the `p n` smallest predictions.
pub fn concentration_curve<T: Scalar>(sample: &PairedSample<T>, grid: &[T]) -> Result<Curve<T>> {
    check_probability_grid(grid)?;
    let ranked = responses_by_rank(sample);
    let total: T = ranked.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::ZeroTotal("response"));
    }
    let n = ranked.len();
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = T::zero();
    prefix.push(acc);
    for &v in &ranked {
        acc = acc + v;
        prefix.push(acc);
    }
    let values = grid
        .iter()
        .map(|&p| {
            let pos = p * T::from_count(n);
            let k = pos.floor().to_usize().unwrap_or(0).min(n);
            let frac = pos - T::from_count(k);
            let mut s = prefix[k];
            if k < n && frac > T::zero() {
                s = s + frac * ranked[k];
            }
            s / total
        })
        .collect();
    Curve::new(Axis::Probability, grid.to_vec(), values)
}

/// `theta -> (1/n) sum L_theta(a_i, b_i)` for two aligned columns, computed
/// through stop-loss transforms in `O((n + m) log n)`.
///
/// The curve jumps at the values of `b` and is right-continuous there; see
/// [`murphy_curve_left_limits`] for the other side.
pub fn murphy_curve_columns<T: Scalar>(a: &[T], b: &[T], grid: &[T]) -> Result<Curve<T>> {
    murphy_columns_sided(a, b, grid, false)
}

/// Left limits `M_{theta-}` of [`murphy_curve_columns`] at each grid point.
pub fn murphy_curve_left_limits<T: Scalar>(a: &[T], b: &[T], grid: &[T]) -> Result<Curve<T>> {
    murphy_columns_sided(a, b, grid, true)
}

fn murphy_columns_sided<T: Scalar>(a: &[T], b: &[T], grid: &[T], left: bool) -> Result<Curve<T>> {
    check_grid(grid)?;
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { what: "murphy columns".into(), expected: a.len(), got: b.len() });
    }
    let da = EmpiricalDistribution::new(a)?;
    let db = EmpiricalDistribution::new(b)?;
    let n = a.len();
    // suffix sums of (a - b) in ascending order of b
    let order = argsort(b);
    let bs: Vec<T> = order.iter().map(|&i| b[i]).collect();
    let mut suffix = vec![T::zero(); n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + (a[order[k]] - b[order[k]]);
    }
    let nf = T::from_count(n);
    let values = grid
        .iter()
        .map(|&t| {
            let k = if left { bs.partition_point(|&v| v < t) } else { bs.partition_point(|&v| v <= t) };
            da.stop_loss(t) - db.stop_loss(t) - suffix[k] / nf
        })
        .collect();
    Curve::new(Axis::Threshold, grid.to_vec(), values)
}

/// Murphy curve `M_theta(Y, X) = (1/n) sum L_theta(y_i, x_i)`.
pub fn murphy_curve<T: Scalar>(sample: &PairedSample<T>, grid: &[T]) -> Result<Curve<T>> {
    murphy_curve_columns(sample.y(), sample.x(), grid)
}

/// `M_theta` by direct summation of elementary losses, `O(n m)`.
pub fn murphy_curve_direct<T: Scalar>(a: &[T], b: &[T], grid: &[T]) -> Result<Curve<T>> {
    check_grid(grid)?;
    let n = T::from_count(a.len().max(1));
    let values = grid
        .iter()
        .map(|&t| a.iter().zip(b).map(|(&y, &x)| elementary_loss(t, y, x)).sum::<T>() / n)
        .collect();
    Curve::new(Axis::Threshold, grid.to_vec(), values)
}

/// Calibrated form `(1/n) sum [(y_i - theta)^+ - (x_i - theta)^+]`.
pub fn murphy_curve_calibrated<T: Scalar>(sample: &PairedSample<T>, grid: &[T]) -> Result<Curve<T>> {
    if !sample.is_calibrated() {
        return Err(Error::NotCalibrated("calibrated Murphy curve"));
    }
    check_grid(grid)?;
    let dy = EmpiricalDistribution::new(sample.y())?;
    let dx = EmpiricalDistribution::new(sample.x())?;
    let values = grid.iter().map(|&t| dy.stop_loss(t) - dx.stop_loss(t)).collect();
    Curve::new(Axis::Threshold, grid.to_vec(), values)
}

/// `M_theta(X, ybar) = mean((x - theta)^+) - (ybar - theta)^+`.
pub fn discrimination_murphy_curve<T: Scalar>(x: &[T], ybar: T, grid: &[T]) -> Result<Curve<T>> {
    if !(ybar > T::zero()) {
        return Err(Error::InvalidParameter(format!("ybar = {ybar} must be positive")));
    }
    check_grid(grid)?;
    let dx = EmpiricalDistribution::new(x)?;
    let values = grid.iter().map(|&t| dx.stop_loss(t) - (ybar - t).pos()).collect();
    Curve::new(Axis::Threshold, grid.to_vec(), values)
}

/// Empirical CDF evaluated on a threshold grid.
pub fn cdf_curve<T: Scalar>(values: &[T], grid: &[T]) -> Result<Curve<T>> {
    check_grid(grid)?;
    let d = EmpiricalDistribution::new(values)?;
    Curve::new(Axis::Threshold, grid.to_vec(), grid.iter().map(|&t| d.cdf(t)).collect())
}

/// `Q(z) = (1/(n ybar)) sum (y_i - x_i)(1 - max(z, r_i))` with midranks `r_i`.
///
/// `Q(1) = 0` and, for a globally unbiased sample, `Q(0) = -ABC`. Callers
/// should check [`PairedSample::unbiasedness_gap`] first.
pub fn q_function<T: Scalar>(sample: &PairedSample<T>, grid: &[T]) -> Result<Curve<T>> {
    check_probability_grid(grid)?;
    let ybar = sample.mean_y();
    if !(ybar > T::zero()) {
        return Err(Error::ZeroTotal("response"));
    }
    let r = midrank_transform(sample.x());
    let order = argsort(&r);
    let n = r.len();
    let d: Vec<T> = order.iter().map(|&i| sample.y()[i] - sample.x()[i]).collect();
    let rs: Vec<T> = order.iter().map(|&i| r[i]).collect();
    // prefix of d, suffix of d (1 - r)
    let mut pre = vec![T::zero(); n + 1];
    for k in 0..n {
        pre[k + 1] = pre[k] + d[k];
    }
    let mut suf = vec![T::zero(); n + 1];
    for k in (0..n).rev() {
        suf[k] = suf[k + 1] + d[k] * (T::one() - rs[k]);
    }
    let norm = T::from_count(n) * ybar;
    let values = grid
        .iter()
        .map(|&z| {
            let k = rs.partition_point(|&v| v < z);
            ((T::one() - z) * pre[k] + suf[k]) / norm
        })
        .collect();
    Curve::new(Axis::Probability, grid.to_vec(), values)
}

/// Sign changes of the difference of two curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingReport<T> {
    pub sign_changes: usize,
    /// Zeros of the interpolated difference, one per sign change.
    pub locations: Vec<T>,
    pub tolerance: T,
    /// Sign of the first excursion beyond tolerance: `1` when the first curve
    /// starts above, `-1` below, `0` if there is none.
    pub first_sign: i8,
    /// Abscissae of excursions seen at a single grid point only; not counted.
    pub unresolved: Vec<T>,
    pub sup_norm: T,
}

/// `1e-9` times the larger sup-norm of the two curves.
pub fn default_tolerance<T: Scalar>(c1: &Curve<T>, c2: &Curve<T>) -> T {
    T::lit(1e-9) * c1.max_abs().max(c2.max_abs()).max(T::min_positive_value())
}

/// Counts sign changes of `c1 - c2`, ignoring excursions within `tol`.
pub fn sign_changes<T: Scalar>(c1: &Curve<T>, c2: &Curve<T>, tol: T) -> Result<CrossingReport<T>> {
    let d = c1.minus(c2)?;
    Ok(crossings(d.grid(), d.values(), |_| tol, tol))
}

/// Like [`sign_changes`] with a pointwise tolerance band, e.g. a sampling
/// error envelope.
pub fn sign_changes_banded<T: Scalar>(
    c1: &Curve<T>,
    c2: &Curve<T>,
    band: &[T],
) -> Result<CrossingReport<T>> {
    let d = c1.minus(c2)?;
    if band.len() != d.len() {
        return Err(Error::GridMismatch);
    }
    let widest = band.iter().fold(T::zero(), |a, &b| a.max(b));
    Ok(crossings(d.grid(), d.values(), |i| band[i], widest))
}

/// Sign changes of a difference sampled on `grid`.
///
/// An excursion beyond tolerance at a single grid point is treated as noise
/// and listed under `unresolved`; see [`crossings_exact`] for data where every
/// grid point is a knot of the underlying curves.
pub fn crossings<T: Scalar>(
    grid: &[T],
    d: &[T],
    tol: impl Fn(usize) -> T,
    reported_tol: T,
) -> CrossingReport<T> {
    crossings_impl(grid, d, tol, reported_tol, true)
}

/// Like [`crossings`] but counts single-point excursions. `grid` may repeat
/// an abscissa, e.g. to hold a left limit next to the value.
pub fn crossings_exact<T: Scalar>(grid: &[T], d: &[T], tol: T) -> CrossingReport<T> {
    crossings_impl(grid, d, |_| tol, tol, false)
}

fn crossings_impl<T: Scalar>(
    grid: &[T],
    d: &[T],
    tol: impl Fn(usize) -> T,
    reported_tol: T,
    drop_singles: bool,
) -> CrossingReport<T> {
    let sign: Vec<i8> = d
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let t = tol(i);
            if v > t {
                1
            } else if v < -t {
                -1
            } else {
                0
            }
        })
        .collect();
    // maximal runs of equal non-zero sign
    let mut runs: Vec<(usize, usize, i8)> = Vec::new();
    for (i, &s) in sign.iter().enumerate() {
        if s == 0 {
            continue;
        }
        match runs.last_mut() {
            Some(r) if r.2 == s && r.1 + 1 == i => r.1 = i,
            _ => runs.push((i, i, s)),
        }
    }
    // merge runs of the same sign separated only by zeros
    let mut merged: Vec<(usize, usize, i8)> = Vec::new();
    let mut unresolved = Vec::new();
    for r in runs {
        let single = drop_singles && r.0 == r.1 && grid.len() > 2;
        if single {
            unresolved.push(grid[r.0]);
            continue;
        }
        match merged.last_mut() {
            Some(m) if m.2 == r.2 => m.1 = r.1,
            _ => merged.push(r),
        }
    }
    let mut locations = Vec::new();
    for w in merged.windows(2) {
        let (a, b) = (w[0].1, w[1].0);
        // first bracket inside [a, b] where the raw difference changes sign
        let mut loc = grid[a];
        for i in a..b {
            let (u, v) = (d[i], d[i + 1]);
            if v == T::zero() {
                loc = grid[i + 1];
                break;
            }
            if (u > T::zero()) != (v > T::zero()) {
                let span = grid[i + 1] - grid[i];
                loc = if span > T::zero() { grid[i] - u * span / (v - u) } else { grid[i] };
                break;
            }
        }
        locations.push(loc);
    }
    CrossingReport {
        sign_changes: locations.len(),
        locations,
        tolerance: reported_tol,
        first_sign: merged.first().map_or(0, |r| r.2),
        unresolved,
        sup_norm: d.iter().fold(T::zero(), |m, v| m.max(v.abs())),
    }
}

/// Mean of a column (re-exported helper for callers building grids).
pub fn column_mean<T: Scalar>(v: &[T]) -> T {
    mean(v)
}
