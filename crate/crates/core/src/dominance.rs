//! Pairwise comparison of predictors: Lorenz and Murphy dominance, crossing
//! counts, second-degree dominance, third-degree integrals and the variance
//! criterion for the generator classes `U` and `V`.
//!
//! Every difference curve of empirical data is piecewise linear (Lorenz,
//! stop-loss) or piecewise constant (CDF) between known knots, so the default
//! comparisons evaluate exactly at those knots. A sampling band can replace
//! the fixed tolerance when two independent samples are compared.

use serde::Serialize;

use crate::curves::{
    crossings, crossings_exact, lorenz_curve, murphy_curve_columns, murphy_curve_left_limits,
    probability_grid, theta_grid, Axis, CrossingReport, Curve,
};
use crate::decomp::decompose;
use crate::error::{Error, Result};
use crate::losses::{ConvexGenerator, MixingMeasure};
use crate::sample::{EmpiricalDistribution, PairedSample, Recalibration};
use crate::scalar::{mean, Scalar};
use crate::stats::gini;

/// How a difference curve is thresholded before signs are read off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Tolerance<T> {
    /// Knot grid, `1e-9` times the larger sup-norm of the two curves.
    Default,
    /// Knot grid with a fixed absolute tolerance.
    Absolute(T),
    /// Regular grid of `grid_points` with a pointwise band of `z` standard
    /// errors, for two independent samples.
    Sampling { z: T, grid_points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Relation<T> {
    /// The first curve lies below the second everywhere.
    FirstDominates,
    SecondDominates,
    Cross { count: usize, locations: Vec<T> },
    EqualWithinTol,
}

/// Outcome of a pointwise comparison, with the evidence it was read from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceVerdict<T> {
    pub relation: Relation<T>,
    /// `first - second` on the evaluation grid.
    pub difference: Curve<T>,
    /// Left limits of the difference where the curves jump.
    pub left_limits: Option<Curve<T>>,
    /// Pointwise tolerance used on `difference`.
    pub band: Vec<T>,
    pub crossings: CrossingReport<T>,
}

impl<T: Scalar> DominanceVerdict<T> {
    /// Reads the relation off a difference curve, interleaving left limits
    /// before each value when present.
    pub fn from_difference(difference: Curve<T>, left_limits: Option<Curve<T>>, band: Vec<T>) -> Result<Self> {
        if band.len() != difference.len() {
            return Err(Error::GridMismatch);
        }
        let (grid, vals, tols) = interleave(&difference, left_limits.as_ref(), &band)?;
        let exact = band.windows(2).all(|w| w[0] == w[1]);
        let report = if exact {
            crossings_exact(&grid, &vals, band[0])
        } else {
            let widest = band.iter().fold(T::zero(), |a, &b| a.max(b));
            crossings(&grid, &vals, |i| tols[i], widest)
        };
        let above = vals.iter().zip(&tols).any(|(&v, &t)| v > t);
        let below = vals.iter().zip(&tols).any(|(&v, &t)| v < -t);
        let relation = match (above, below) {
            (false, false) => Relation::EqualWithinTol,
            (false, true) => Relation::FirstDominates,
            (true, false) => Relation::SecondDominates,
            (true, true) => Relation::Cross { count: report.sign_changes, locations: report.locations.clone() },
        };
        Ok(Self { relation, difference, left_limits, band, crossings: report })
    }

    /// Recomputes the verdict from the stored evidence.
    pub fn reproduce(&self) -> Result<Self> {
        Self::from_difference(self.difference.clone(), self.left_limits.clone(), self.band.clone())
    }

    pub fn crossing_count(&self) -> usize {
        match &self.relation {
            Relation::Cross { count, .. } => *count,
            _ => 0,
        }
    }

    /// `Some(true)` for exactly one crossing with the first curve starting above.
    pub fn single_crossing_from_above(&self) -> Option<bool> {
        match &self.relation {
            Relation::Cross { count: 1, .. } => Some(self.crossings.first_sign > 0),
            _ => None,
        }
    }
}

fn interleave<T: Scalar>(d: &Curve<T>, left: Option<&Curve<T>>, band: &[T]) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    match left {
        None => Ok((d.grid().to_vec(), d.values().to_vec(), band.to_vec())),
        Some(l) => {
            if l.grid() != d.grid() {
                return Err(Error::GridMismatch);
            }
            let n = d.len();
            let (mut g, mut v, mut t) = (Vec::with_capacity(2 * n), Vec::with_capacity(2 * n), Vec::with_capacity(2 * n));
            for i in 0..n {
                g.extend([d.grid()[i], d.grid()[i]]);
                v.extend([l.values()[i], d.values()[i]]);
                t.extend([band[i], band[i]]);
            }
            Ok((g, v, t))
        }
    }
}

fn scale_tol<T: Scalar>(a: &Curve<T>, b: &Curve<T>) -> T {
    T::lit(1e-9) * a.max_abs().max(b.max_abs()).max(T::min_positive_value())
}

/// `{k / n1} ∪ {k / n2}`, the knots of two empirical Lorenz curves.
pub fn lorenz_knots<T: Scalar>(n1: usize, n2: usize) -> Vec<T> {
    let mut g: Vec<T> = (0..=n1)
        .map(|k| T::from_count(k) / T::from_count(n1))
        .chain((0..=n2).map(|k| T::from_count(k) / T::from_count(n2)))
        .collect();
    g.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    g.dedup();
    g
}

/// Distinct values of the given columns together with 0.
pub fn value_knots<T: Scalar>(columns: &[&[T]]) -> Vec<T> {
    let mut g: Vec<T> = std::iter::once(T::zero()).chain(columns.iter().flat_map(|c| c.iter().copied())).collect();
    g.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    g.dedup();
    g
}

/// Prefix sums of a sorted column and of its squares.
struct Moments<T> {
    v: Vec<T>,
    s: Vec<T>,
    q: Vec<T>,
}

impl<T: Scalar> Moments<T> {
    fn new(x: &[T]) -> Result<Self> {
        let d = EmpiricalDistribution::new(x)?;
        let v = d.values().to_vec();
        let (mut s, mut q) = (vec![T::zero()], vec![T::zero()]);
        for &x in &v {
            s.push(*s.last().unwrap() + x);
            q.push(*q.last().unwrap() + x * x);
        }
        Ok(Self { v, s, q })
    }

    fn n(&self) -> usize {
        self.v.len()
    }

    fn nf(&self) -> T {
        T::from_count(self.n())
    }

    fn le(&self, u: T) -> usize {
        self.v.partition_point(|&x| x <= u)
    }

    fn mean(&self) -> T {
        self.s[self.n()] / self.nf()
    }

    fn var(&self) -> T {
        let m = self.mean();
        self.v.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / self.nf()
    }

    /// `E (u - X)^+`
    fn lp1(&self, u: T) -> T {
        let k = self.le(u);
        (T::from_count(k) * u - self.s[k]) / self.nf()
    }

    /// `E ((u - X)^+)^2`
    fn lp2(&self, u: T) -> T {
        let k = self.le(u);
        (T::from_count(k) * u * u - T::two() * u * self.s[k] + self.q[k]) / self.nf()
    }

    /// `E (X - u)^+`
    fn sp1(&self, u: T) -> T {
        let k = self.le(u);
        let n = self.n();
        ((self.s[n] - self.s[k]) - T::from_count(n - k) * u) / self.nf()
    }

    /// `E ((X - u)^+)^2`
    fn sp2(&self, u: T) -> T {
        let k = self.le(u);
        let n = self.n();
        (T::from_count(n - k) * u * u - T::two() * u * (self.s[n] - self.s[k]) + (self.q[n] - self.q[k])) / self.nf()
    }

    /// Standard error of the stop-loss estimate at `u`.
    fn stop_loss_se(&self, u: T) -> T {
        let m = self.sp1(u);
        ((self.sp2(u) - m * m).pos() / self.nf()).sqrt()
    }

    /// Standard error of the empirical Lorenz ordinate at `p`, from the
    /// influence function of a quantile-truncated mean divided by the mean.
    fn lorenz_se(&self, p: T) -> T {
        let n = self.n();
        let nf = self.nf();
        let k = (p * nf).floor().to_usize().unwrap_or(0).min(n);
        if k == 0 || k == n {
            return T::zero();
        }
        let q = self.v[k - 1];
        let mu = self.mean();
        let l = self.s[k] / self.s[n];
        let (kf, sk, qk) = (T::from_count(k), self.s[k], self.q[k]);
        let eh = (sk - q * kf) / nf - l * mu;
        let eh2 = (qk - T::two() * q * sk + q * q * kf) / nf - T::two() * l * (qk - q * sk) / nf
            + l * l * self.q[n] / nf;
        ((eh2 - eh * eh).pos() / nf).sqrt() / mu
    }
}

/// Lorenz comparison; `FirstDominates` means `LC(X1) <= LC(X2)` everywhere,
/// i.e. the first predictor is more dispersed.
pub fn lorenz_dominance<T: Scalar>(x1: &[T], x2: &[T], tol: Tolerance<T>) -> Result<DominanceVerdict<T>> {
    let grid = match tol {
        Tolerance::Sampling { grid_points, .. } => probability_grid(grid_points),
        _ => lorenz_knots(x1.len(), x2.len()),
    };
    let (c1, c2) = (lorenz_curve(x1, &grid)?, lorenz_curve(x2, &grid)?);
    let band = match tol {
        Tolerance::Default => vec![scale_tol(&c1, &c2); grid.len()],
        Tolerance::Absolute(t) => vec![t; grid.len()],
        Tolerance::Sampling { z, .. } => {
            let (m1, m2) = (Moments::new(x1)?, Moments::new(x2)?);
            grid.iter().map(|&p| z * m1.lorenz_se(p).hypot(m2.lorenz_se(p))).collect()
        }
    };
    DominanceVerdict::from_difference(c1.minus(&c2)?, None, band)
}

fn check_same_response<T: Scalar>(s1: &PairedSample<T>, s2: &PairedSample<T>) -> Result<()> {
    if s1.y() != s2.y() {
        return Err(Error::ResponseMismatch);
    }
    Ok(())
}

/// Murphy-curve comparison; `FirstDominates` means `M(Y, X1) <= M(Y, X2)`
/// everywhere, i.e. the first predictor wins under every Bregman loss.
///
/// For two calibrated samples the curves reduce to stop-loss transforms and
/// are continuous; otherwise they jump at the predictions and left limits are
/// compared as well.
pub fn murphy_dominance<T: Scalar>(
    s1: &PairedSample<T>,
    s2: &PairedSample<T>,
    tol: Tolerance<T>,
) -> Result<DominanceVerdict<T>> {
    check_same_response(s1, s2)?;
    let calibrated = s1.is_calibrated() && s2.is_calibrated();
    let grid = match tol {
        Tolerance::Sampling { grid_points, .. } => theta_grid(&[s1.y(), s1.x(), s2.x()], grid_points),
        _ if calibrated => value_knots(&[s1.x(), s2.x()]),
        _ => value_knots(&[s1.y(), s1.x(), s2.x()]),
    };
    if calibrated {
        let (d1, d2) = (EmpiricalDistribution::new(s1.x())?, EmpiricalDistribution::new(s2.x())?);
        // M1 - M2 = E(X2 - t)^+ - E(X1 - t)^+ for a common response
        let diff: Vec<T> = grid.iter().map(|&t| d2.stop_loss(t) - d1.stop_loss(t)).collect();
        let difference = Curve::new(Axis::Threshold, grid.clone(), diff)?;
        let band = match tol {
            Tolerance::Default => {
                let scale = grid.iter().map(|&t| d1.stop_loss(t).max(d2.stop_loss(t))).fold(T::zero(), T::max);
                vec![T::lit(1e-9) * scale.max(T::min_positive_value()); grid.len()]
            }
            Tolerance::Absolute(t) => vec![t; grid.len()],
            Tolerance::Sampling { z, .. } => {
                let (m1, m2) = (Moments::new(s1.x())?, Moments::new(s2.x())?);
                grid.iter().map(|&t| z * m1.stop_loss_se(t).hypot(m2.stop_loss_se(t))).collect()
            }
        };
        return DominanceVerdict::from_difference(difference, None, band);
    }
    if matches!(tol, Tolerance::Sampling { .. }) {
        return Err(Error::InvalidParameter("a sampling band needs two calibrated samples".into()));
    }
    let c1 = murphy_curve_columns(s1.y(), s1.x(), &grid)?;
    let c2 = murphy_curve_columns(s2.y(), s2.x(), &grid)?;
    let l1 = murphy_curve_left_limits(s1.y(), s1.x(), &grid)?;
    let l2 = murphy_curve_left_limits(s2.y(), s2.x(), &grid)?;
    let band = match tol {
        Tolerance::Absolute(t) => vec![t; grid.len()],
        _ => vec![scale_tol(&c1, &c2).max(scale_tol(&l1, &l2)); grid.len()],
    };
    DominanceVerdict::from_difference(c1.minus(&c2)?, Some(l1.minus(&l2)?), band)
}

/// Sign-change counts of the CDF, Lorenz and Murphy differences of two
/// calibrated predictors for a common response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingConsistency {
    pub cdf_changes: usize,
    pub lorenz_changes: usize,
    pub murphy_changes: usize,
    pub lorenz_first_sign: i8,
    pub murphy_first_sign: i8,
    /// Lorenz and Murphy counts agree and neither exceeds `cdf_changes - 1`.
    pub consistent: bool,
}

pub fn crossing_consistency<T: Scalar>(
    s1: &PairedSample<T>,
    s2: &PairedSample<T>,
    tol: Tolerance<T>,
) -> Result<CrossingConsistency> {
    if !(s1.is_calibrated() && s2.is_calibrated()) {
        return Err(Error::NotCalibrated("crossing consistency"));
    }
    check_same_response(s1, s2)?;
    let (x1, x2) = (s1.x(), s2.x());
    let (d1, d2) = (EmpiricalDistribution::new(x1)?, EmpiricalDistribution::new(x2)?);
    let (grid, band): (Vec<T>, Vec<T>) = match tol {
        Tolerance::Sampling { z, grid_points } => {
            let g = theta_grid(&[x1, x2], grid_points);
            let (n1, n2) = (T::from_count(d1.len()), T::from_count(d2.len()));
            let b = g
                .iter()
                .map(|&t| {
                    let (f1, f2) = (d1.cdf(t), d2.cdf(t));
                    z * (f1 * (T::one() - f1) / n1 + f2 * (T::one() - f2) / n2).sqrt()
                })
                .collect();
            (g, b)
        }
        Tolerance::Absolute(t) => {
            let g = value_knots(&[x1, x2]);
            let len = g.len();
            (g, vec![t; len])
        }
        Tolerance::Default => {
            let g = value_knots(&[x1, x2]);
            let len = g.len();
            (g, vec![T::lit(1e-9); len])
        }
    };
    let cdf = Curve::new(Axis::Threshold, grid.clone(), grid.iter().map(|&t| d1.cdf(t) - d2.cdf(t)).collect())?;
    let cdf_v = DominanceVerdict::from_difference(cdf, None, band)?;
    let lor = lorenz_dominance(x1, x2, tol)?;
    let mur = murphy_dominance(s1, s2, tol)?;
    let (lc, mc, cc) = (lor.crossing_count(), mur.crossing_count(), cdf_v.crossing_count());
    Ok(CrossingConsistency {
        cdf_changes: cc,
        lorenz_changes: lc,
        murphy_changes: mc,
        lorenz_first_sign: lor.crossings.first_sign,
        murphy_first_sign: mur.crossings.first_sign,
        consistent: lc == mc && (cc == 0 && lc == 0 || lc < cc.max(1)),
    })
}

/// Second-degree dominance for curves that cross once.
///
/// The pair is oriented so that the curve of the `upper` predictor starts
/// above: `up_holds` is the left-integrated inequality and `down_holds` the
/// right-integrated one, each expected to match the order of `measure`
/// (Gini for Lorenz curves, `DSC_H` for Murphy curves).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondDegree<T> {
    /// Whether the first argument's curve starts above.
    pub first_from_above: bool,
    pub crossing: T,
    pub up_holds: bool,
    pub down_holds: bool,
    /// Measure of the predictor whose curve starts above, then of the other.
    pub measure_upper: T,
    pub measure_lower: T,
    /// `up_holds <=> measure_upper <= measure_lower` and
    /// `down_holds <=> measure_upper >= measure_lower`.
    pub consistent: bool,
}

fn second_degree_from<T: Scalar>(
    left_min: T,
    right_max: T,
    first_from_above: bool,
    crossing: T,
    measure_upper: T,
    measure_lower: T,
    tol: T,
) -> SecondDegree<T> {
    let up_holds = left_min >= -tol;
    let down_holds = right_max <= tol;
    let consistent = up_holds == (measure_upper <= measure_lower + tol)
        && down_holds == (measure_upper >= measure_lower - tol);
    SecondDegree { first_from_above, crossing, up_holds, down_holds, measure_upper, measure_lower, consistent }
}

fn single_crossing<T: Scalar>(v: &DominanceVerdict<T>, what: &str) -> Result<(bool, T)> {
    match (&v.relation, v.single_crossing_from_above()) {
        (Relation::Cross { locations, .. }, Some(above)) => Ok((above, locations[0])),
        (r, _) => Err(Error::WrongCrossingPattern(format!("{what} curves show {r:?}"))),
    }
}

/// Exact minimum of `u -> integral_0^u f` and of `u -> integral_u^end f` for a
/// piecewise-linear `f`, including interior stationary points.
fn partial_integral_extremes<T: Scalar>(grid: &[T], f: &[T]) -> (T, T, T) {
    let mut cum = T::zero();
    let mut left_min = T::zero();
    let mut cums = vec![T::zero()];
    for i in 1..grid.len() {
        let (a, b, fa, fb) = (grid[i - 1], grid[i], f[i - 1], f[i]);
        if (fa < T::zero()) != (fb < T::zero()) && fa != fb {
            let z = a + fa * (b - a) / (fa - fb);
            left_min = left_min.min(cum + (z - a) * fa * T::half());
        }
        cum = cum + (b - a) * (fa + fb) * T::half();
        left_min = left_min.min(cum);
        cums.push(cum);
    }
    // integral_u^end = total - integral_0^u; its maximum is total - min
    let total = cum;
    let mut max_cum_complement = T::zero();
    for (i, &c) in cums.iter().enumerate() {
        max_cum_complement = max_cum_complement.max(total - c);
        if i + 1 < grid.len() {
            let (a, b, fa, fb) = (grid[i], grid[i + 1], f[i], f[i + 1]);
            if (fa < T::zero()) != (fb < T::zero()) && fa != fb {
                let z = a + fa * (b - a) / (fa - fb);
                max_cum_complement = max_cum_complement.max(total - (c + (z - a) * fa * T::half()));
            }
        }
    }
    (left_min, max_cum_complement, total)
}

/// Second-degree Lorenz dominance and its Gini equivalence.
pub fn second_degree_lorenz<T: Scalar>(x1: &[T], x2: &[T], tol: Tolerance<T>) -> Result<SecondDegree<T>> {
    let v = lorenz_dominance(x1, x2, tol)?;
    let (from_above, crossing) = single_crossing(&v, "Lorenz")?;
    let sign = if from_above { T::one() } else { -T::one() };
    // oriented difference LC(upper) - LC(lower)
    let f: Vec<T> = v.difference.values().iter().map(|&d| sign * d).collect();
    let (left_min, right_max, _) = partial_integral_extremes(v.difference.grid(), &f);
    let (g1, g2) = (gini(x1)?.value, gini(x2)?.value);
    let (gu, gl) = if from_above { (g1, g2) } else { (g2, g1) };
    let t = T::lit(1e-9).max(v.band.iter().fold(T::zero(), |a, &b| a.max(b)) * T::lit(1e-3));
    Ok(second_degree_from(left_min, right_max, from_above, crossing, gu, gl, t))
}

/// `(theta, H-mass)` decomposition of `H` over a knot grid: atoms plus, for a
/// density part, the slope on each grid interval.
fn h_atoms_and_slopes<T: Scalar>(h: &MixingMeasure<T>, grid: &[T]) -> (Vec<(T, T)>, Vec<T>) {
    match h {
        MixingMeasure::Atoms(a) => (a.pairs().collect(), vec![T::zero(); grid.len().saturating_sub(1)]),
        MixingMeasure::EmpiricalCdf(d) => {
            let w = T::one() / T::from_count(d.len());
            (d.values().iter().map(|&t| (t, w)).collect(), vec![T::zero(); grid.len().saturating_sub(1)])
        }
        MixingMeasure::PiecewiseLinear(_) => {
            let slopes = grid.windows(2).map(|w| (h.h(w[1]) - h.h(w[0])) / (w[1] - w[0])).collect();
            (Vec::new(), slopes)
        }
    }
}

/// Second-degree Murphy dominance under a mixing measure `H`, checked against
/// the `DSC_H` order.
pub fn second_degree_murphy<T: Scalar>(
    s1: &PairedSample<T>,
    s2: &PairedSample<T>,
    h: &MixingMeasure<T>,
    tol: Tolerance<T>,
) -> Result<SecondDegree<T>> {
    if !(s1.is_calibrated() && s2.is_calibrated()) {
        return Err(Error::NotCalibrated("second-degree Murphy dominance"));
    }
    let v = murphy_dominance(s1, s2, tol)?;
    let (d1, d2) = (EmpiricalDistribution::new(s1.x())?, EmpiricalDistribution::new(s2.x())?);
    let (dsc1, dsc2) = (
        decompose(s1, h, Recalibration::Identity)?.dsc,
        decompose(s2, h, Recalibration::Identity)?.dsc,
    );
    if let Relation::EqualWithinTol = v.relation {
        return Ok(SecondDegree {
            first_from_above: true,
            crossing: T::zero(),
            up_holds: true,
            down_holds: true,
            measure_upper: dsc1,
            measure_lower: dsc2,
            consistent: true,
        });
    }
    let (from_above, crossing) = single_crossing(&v, "Murphy")?;
    let sign = if from_above { T::one() } else { -T::one() };
    let diff = |t: T| sign * (d2.stop_loss(t) - d1.stop_loss(t));
    let size = |t: T| d2.stop_loss(t) + d1.stop_loss(t);

    // grid: data knots plus the locations of H's atoms or knots
    let mut grid: Vec<T> = v.difference.grid().to_vec();
    if let MixingMeasure::PiecewiseLinear(k) = h {
        grid.extend(k.iter().map(|&(t, _)| t));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    grid.dedup();
    let (atoms, slopes) = h_atoms_and_slopes(h, &grid);

    // running integral of the oriented difference against dH
    let (mut cum, mut left_min, mut abs_total) = (T::zero(), T::zero(), T::zero());
    let mut checkpoints = vec![T::zero()];
    let mut ai = 0;
    for i in 0..grid.len() {
        while ai < atoms.len() && atoms[ai].0 <= grid[i] {
            let c = atoms[ai].1 * diff(atoms[ai].0);
            cum = cum + c;
            abs_total = abs_total + atoms[ai].1 * size(atoms[ai].0);
            ai += 1;
            left_min = left_min.min(cum);
            checkpoints.push(cum);
        }
        if i + 1 < grid.len() && slopes[i] > T::zero() {
            let (a, b) = (grid[i], grid[i + 1]);
            let (fa, fb) = (diff(a) * slopes[i], diff(b) * slopes[i]);
            if (fa < T::zero()) != (fb < T::zero()) && fa != fb {
                let z = a + fa * (b - a) / (fa - fb);
                let at_z = cum + (z - a) * fa * T::half();
                left_min = left_min.min(at_z);
                checkpoints.push(at_z);
            }
            cum = cum + (b - a) * (fa + fb) * T::half();
            abs_total = abs_total + (b - a) * slopes[i] * (size(a) + size(b)) * T::half();
            left_min = left_min.min(cum);
            checkpoints.push(cum);
        }
    }
    // atoms beyond the last knot: the difference is zero there
    let total = cum;
    let right_max = checkpoints.iter().fold(T::zero(), |m, &c| m.max(total - c));
    let (du, dl) = if from_above { (dsc1, dsc2) } else { (dsc2, dsc1) };
    // rounding in the differences scales with the integrated stop-loss sizes
    let t = T::lit(1e-9) * abs_total.max(du.abs()).max(dl.abs()).max(T::min_positive_value());
    Ok(second_degree_from(left_min, right_max, from_above, crossing, du, dl, t))
}

/// Doubly integrated CDF differences of two columns with equal means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThirdDegreeReport<T> {
    /// `u -> integral_0^u integral_0^v (F2 - F1) dt dv`
    pub lower: Curve<T>,
    /// `u -> integral_u^inf integral_v^inf (F2 - F1) dt dv`
    pub upper: Curve<T>,
    /// `(Var2 - Var1) / 2`
    pub half_var_diff: T,
    /// `lower` at the top of the pooled support.
    pub lower_at_top: T,
    pub upper_at_zero: T,
    pub variance_formula_residual: T,
    /// `max |upper - (lower - lower_at_top)|` over the grid.
    pub complement_residual: T,
    /// `lower >= 0` for every `u` (exact, interior minima included).
    pub lower_nonneg: bool,
    pub upper_nonneg: bool,
    pub lower_min: T,
    pub upper_min: T,
}

/// The double integrals are evaluated in closed form,
/// `lower(u) = (E((u - X2)^+)^2 - E((u - X1)^+)^2) / 2` and
/// `upper(u) = (E((X1 - u)^+)^2 - E((X2 - u)^+)^2) / 2`.
pub fn third_degree_integrals<T: Scalar>(x1: &[T], x2: &[T], grid: &[T], mean_tol: T) -> Result<ThirdDegreeReport<T>> {
    let (m1, m2) = (Moments::new(x1)?, Moments::new(x2)?);
    if (m1.mean() - m2.mean()).abs() > mean_tol {
        return Err(Error::MeanMismatch(m1.mean().to_f64_lossy(), m2.mean().to_f64_lossy()));
    }
    let lower_at = |u: T| (m2.lp2(u) - m1.lp2(u)) * T::half();
    let upper_at = |u: T| (m1.sp2(u) - m2.sp2(u)) * T::half();
    let lower = Curve::new(Axis::Threshold, grid.to_vec(), grid.iter().map(|&u| lower_at(u)).collect())?;
    let upper = Curve::new(Axis::Threshold, grid.to_vec(), grid.iter().map(|&u| upper_at(u)).collect())?;
    let top = m1.v[m1.n() - 1].max(m2.v[m2.n() - 1]);
    let lower_at_top = lower_at(top);
    let half_var_diff = (m2.var() - m1.var()) * T::half();
    let complement_residual = lower
        .values()
        .iter()
        .zip(upper.values())
        .fold(T::zero(), |m, (&l, &u)| m.max((u - (l - lower_at_top)).abs()));

    // stationary points are zeros of the first integrals, which are
    // piecewise linear between the pooled knots
    let knots = value_knots(&[x1, x2]);
    let lower_min = piecewise_min(&knots, lower_at, |u| m2.lp1(u) - m1.lp1(u));
    let upper_min = piecewise_min(&knots, upper_at, |u| m2.sp1(u) - m1.sp1(u));
    let scale = half_var_diff.abs().max(m1.var()).max(m2.var()).max(T::min_positive_value());
    let t = T::lit(1e-9) * scale;
    Ok(ThirdDegreeReport {
        upper_at_zero: upper_at(T::zero()),
        variance_formula_residual: (lower_at_top - half_var_diff).abs(),
        lower,
        upper,
        half_var_diff,
        lower_at_top,
        complement_residual,
        lower_nonneg: lower_min >= -t,
        upper_nonneg: upper_min >= -t,
        lower_min,
        upper_min,
    })
}

/// Minimum over `[0, inf)` of a function whose derivative `g` is piecewise
/// linear between `knots`; both functions are constant past the last knot.
fn piecewise_min<T: Scalar>(knots: &[T], f: impl Fn(T) -> T, g: impl Fn(T) -> T) -> T {
    let mut lo = f(knots[0]);
    for w in knots.windows(2) {
        lo = lo.min(f(w[1]));
        let (ga, gb) = (g(w[0]), g(w[1]));
        if (ga < T::zero()) != (gb < T::zero()) && ga != gb {
            lo = lo.min(f(w[0] + ga * (w[1] - w[0]) / (ga - gb)));
        }
    }
    lo
}

/// Convex generators with `phi''' <= 0` (`U`) or `phi''' >= 0` (`V`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GeneratorClass {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TweedieClass {
    pub in_u: bool,
    pub in_v: bool,
    /// Finite-difference check that `phi'' >= 0` and that the sign of
    /// `phi'''` matches the classification on a positive grid.
    pub numerically_confirmed: bool,
}

pub fn tweedie_class(p: f64) -> TweedieClass {
    let (in_u, in_v) = (p >= 0.0, p <= 0.0);
    let g = ConvexGenerator::<f64>::tweedie(p);
    let mut ok = true;
    for i in 0..40 {
        let x = 0.25 + 0.125 * i as f64;
        let h = 1e-3 * x;
        let d2 = (g.dphi(x + h) - g.dphi(x - h)) / (2.0 * h);
        let d3 = (g.dphi(x + h) - 2.0 * g.dphi(x) + g.dphi(x - h)) / (h * h);
        let noise = 1e-4 * d2.abs() / x;
        ok &= d2 >= 0.0;
        ok &= if d3 > noise {
            in_v
        } else if d3 < -noise {
            in_u
        } else {
            in_u && in_v
        };
    }
    TweedieClass { in_u, in_v, numerically_confirmed: ok }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClassVerdict {
    /// `DSC(X1) >= DSC(X2)` for every generator in the class.
    FirstMoreDiscriminating,
    SecondMoreDiscriminating,
    /// The variance criterion is silent for this class.
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorCheck<T> {
    pub p: T,
    pub in_class: bool,
    pub dsc_first: T,
    pub dsc_second: T,
    /// `None` outside the class or when the verdict is undecided.
    pub agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BregmanClassReport<T> {
    pub class: GeneratorClass,
    pub first_from_above: bool,
    pub var_first: T,
    pub var_second: T,
    pub verdict: ClassVerdict,
    /// The matching third-degree condition (`lower >= 0` for `U`,
    /// `upper >= 0` for `V`, oriented so the upper Lorenz curve comes first).
    pub third_degree_holds: bool,
    pub checks: Vec<GeneratorCheck<T>>,
    pub all_agree: bool,
}

/// Variance criterion for calibrated predictors whose Lorenz curves cross
/// once, cross-checked with Tweedie generators `phi_p` for each `p` in
/// `powers` (those outside the class are recorded but not asserted).
pub fn bregman_dominance_class<T: Scalar>(
    s1: &PairedSample<T>,
    s2: &PairedSample<T>,
    class: GeneratorClass,
    powers: &[T],
    tol: Tolerance<T>,
) -> Result<BregmanClassReport<T>> {
    if !(s1.is_calibrated() && s2.is_calibrated()) {
        return Err(Error::NotCalibrated("Bregman class dominance"));
    }
    check_same_response(s1, s2)?;
    let lor = lorenz_dominance(s1.x(), s2.x(), tol)?;
    let (from_above, _) = single_crossing(&lor, "Lorenz")?;
    let (m1, m2) = (Moments::new(s1.x())?, Moments::new(s2.x())?);
    let (v1, v2) = (m1.var(), m2.var());
    // orient: a = upper Lorenz curve
    let (va, vb) = if from_above { (v1, v2) } else { (v2, v1) };
    let upper_first = match class {
        // Var_a <= Var_b  =>  DSC_a <= DSC_b on U
        GeneratorClass::U if va <= vb => Some(false),
        // Var_a >= Var_b  =>  DSC_a >= DSC_b on V
        GeneratorClass::V if va >= vb => Some(true),
        _ => None,
    };
    let verdict = match upper_first {
        None => ClassVerdict::Undecided,
        Some(a_more) => {
            if a_more == from_above {
                ClassVerdict::FirstMoreDiscriminating
            } else {
                ClassVerdict::SecondMoreDiscriminating
            }
        }
    };

    let (xa, xb) = if from_above { (s1.x(), s2.x()) } else { (s2.x(), s1.x()) };
    // X1 := upper Lorenz curve, X2 := lower; lower(inf) = (Var_b - Var_a) / 2
    let third = third_degree_integrals(xa, xb, &[T::zero()], T::infinity())?;
    let third_degree_holds = match class {
        GeneratorClass::U => third.lower_nonneg,
        GeneratorClass::V => third.upper_nonneg,
    };

    let mut checks = Vec::with_capacity(powers.len());
    for &p in powers {
        let in_class = match class {
            GeneratorClass::U => p >= T::zero(),
            GeneratorClass::V => p <= T::zero(),
        };
        let gen = ConvexGenerator::tweedie(p);
        let d1 = decompose(s1, &gen, Recalibration::Identity)?.dsc;
        let d2 = decompose(s2, &gen, Recalibration::Identity)?.dsc;
        let t = T::lit(1e-9) * d1.abs().max(d2.abs());
        let agrees = match (in_class, verdict) {
            (false, _) | (_, ClassVerdict::Undecided) => None,
            (true, ClassVerdict::FirstMoreDiscriminating) => Some(d1 >= d2 - t),
            (true, ClassVerdict::SecondMoreDiscriminating) => Some(d2 >= d1 - t),
        };
        checks.push(GeneratorCheck { p, in_class, dsc_first: d1, dsc_second: d2, agrees });
    }
    let all_agree = checks.iter().all(|c| c.agrees != Some(false));
    Ok(BregmanClassReport {
        class,
        first_from_above: from_above,
        var_first: v1,
        var_second: v2,
        verdict,
        third_degree_holds,
        checks,
        all_agree,
    })
}

/// Difference of sample means, exposed for callers that balance first.
pub fn mean_gap<T: Scalar>(x1: &[T], x2: &[T]) -> T {
    mean(x1) - mean(x2)
}
