//! Bregman divergences, elementary losses, mixture losses and scoring.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sample::{midrank_transform, EmpiricalDistribution, PairedSample};
use crate::scalar::Scalar;

type Fun<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
type Div<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// A loss `L(y, x)` for a response `y` and a prediction `x`.
pub trait Loss<T: Scalar>: Send + Sync {
    fn loss(&self, y: T, x: T) -> Result<T>;
    fn label(&self) -> String;
}

/// Convex function `phi` with derivative, inducing the Bregman divergence
/// `L(y, x) = phi(y) - phi(x) - phi'(x) (y - x)`.
#[derive(Clone)]
pub struct ConvexGenerator<T> {
    label: String,
    domain_floor: T,
    eval: Fun<T>,
    deriv: Fun<T>,
    divergence: Option<Div<T>>,
    tweedie: Option<T>,
}

impl<T: Scalar> fmt::Debug for ConvexGenerator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexGenerator")
            .field("label", &self.label)
            .field("domain_floor", &self.domain_floor)
            .finish_non_exhaustive()
    }
}

/// `phi(x)` together with a flag telling whether it is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiValue<T> {
    pub value: T,
    pub finite: bool,
}

impl<T: Scalar> ConvexGenerator<T> {
    pub fn new(
        label: impl Into<String>,
        domain_floor: T,
        eval: impl Fn(T) -> T + Send + Sync + 'static,
        deriv: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            domain_floor,
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            divergence: None,
            tweedie: None,
        }
    }

    /// Replaces the textbook formula by a numerically stable closed form.
    pub fn with_divergence(mut self, f: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        self.divergence = Some(Arc::new(f));
        self
    }

    pub fn tweedie(p: T) -> Self {
        tweedie_generator(TweedieSpec { p })
    }

    /// `phi(x) = x^2`, inducing `(y - x)^2`.
    pub fn squared() -> Self {
        Self::tweedie(T::zero())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Smallest admissible prediction.
    pub fn domain_floor(&self) -> T {
        self.domain_floor
    }

    /// Tweedie power if this generator came from [`tweedie_generator`].
    pub fn tweedie_power(&self) -> Option<T> {
        self.tweedie
    }

    pub fn phi(&self, x: T) -> T {
        (self.eval)(x)
    }

    pub fn dphi(&self, x: T) -> T {
        (self.deriv)(x)
    }

    /// `phi(x)` with its infinite limits flagged instead of raised.
    pub fn evaluate(&self, x: T) -> PhiValue<T> {
        let value = self.phi(x);
        PhiValue { value, finite: value.is_finite() }
    }

    /// Raw divergence value, possibly non-finite.
    pub fn divergence(&self, y: T, x: T) -> T {
        if y == x {
            return T::zero();
        }
        match &self.divergence {
            Some(d) => d(y, x),
            None => self.phi(y) - self.phi(x) - self.dphi(x) * (y - x),
        }
    }
}

/// Power parameter of the Tweedie generator family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TweedieSpec<T> {
    pub p: T,
}

/// Tweedie generator `phi_p`:
/// `x^2` for `p = 0`, `x ln x - x` for `p = 1`, `-ln x` for `p = 2`, and
/// `x^(2-p) / ((1-p)(2-p))` otherwise.
///
/// Values at `0` are the limits, possibly infinite; nothing panics.
pub fn tweedie_generator<T: Scalar>(spec: TweedieSpec<T>) -> ConvexGenerator<T> {
    let p = spec.p;
    let (zero, one, two) = (T::zero(), T::one(), T::two());
    let floor = if p < one { zero } else { T::min_positive_value() };
    let label = format!("tweedie:{p}");
    let gen = if p == zero {
        ConvexGenerator::new(label, floor, |x: T| x * x, move |x: T| two * x)
            .with_divergence(|y: T, x: T| (y - x) * (y - x))
    } else if p == one {
        ConvexGenerator::new(
            label,
            floor,
            |x: T| if x == T::zero() { T::zero() } else { x * x.ln() - x },
            |x: T| x.ln(),
        )
        .with_divergence(|y: T, x: T| {
            if y == T::zero() {
                x
            } else {
                (y * (y / x).ln() - y + x).pos()
            }
        })
    } else if p == two {
        ConvexGenerator::new(label, floor, |x: T| -x.ln(), |x: T| -x.recip())
            .with_divergence(|y: T, x: T| {
                let r = y / x;
                (r - r.ln() - T::one()).pos()
            })
    } else {
        let (a, b) = (one - p, two - p);
        ConvexGenerator::new(
            label,
            floor,
            move |x: T| x.powf(b) / (a * b),
            move |x: T| x.powf(a) / a,
        )
        .with_divergence(move |y: T, x: T| {
            let ty = if y == T::zero() && b > T::zero() { T::zero() } else { y.powf(b) / (a * b) };
            let cross = if y == T::zero() { T::zero() } else { y * x.powf(a) / a };
            (ty - cross + x.powf(b) / b).pos()
        })
    };
    ConvexGenerator { tweedie: Some(p), ..gen }
}

/// Bregman divergence `phi(y) - phi(x) - phi'(x)(y - x)`.
pub fn bregman_loss<T: Scalar>(gen: &ConvexGenerator<T>, y: T, x: T) -> Result<T> {
    let v = gen.divergence(y, x);
    if !v.is_finite() {
        return Err(Error::NonFiniteLoss {
            generator: gen.label.clone(),
            y: y.to_f64_lossy(),
            x: x.to_f64_lossy(),
        });
    }
    Ok(v.pos())
}

impl<T: Scalar> Loss<T> for ConvexGenerator<T> {
    fn loss(&self, y: T, x: T) -> Result<T> {
        bregman_loss(self, y, x)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Elementary loss `(y - theta)^+ - (x - theta)^+ - 1{x > theta}(y - x)`.
///
/// Evaluated casewise: it equals `y - theta` on `x <= theta < y`,
/// `theta - y` on `y <= theta < x`, and zero elsewhere.
pub fn elementary_loss<T: Scalar>(theta: T, y: T, x: T) -> T {
    if x <= theta && theta < y {
        y - theta
    } else if y <= theta && theta < x {
        theta - y
    } else {
        T::zero()
    }
}

/// Non-decreasing `H` on `[0, inf)` with `H(0-) = 0`, defining
/// `L_H(y, x) = integral of L_theta(y, x) dH(theta)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MixingMeasure<T> {
    /// Finitely many point masses.
    Atoms(AtomicMeasure<T>),
    /// Knots `(theta, H(theta))` starting at `(0, 0)`, linear in between and
    /// continued with the last slope beyond the final knot.
    PiecewiseLinear(Vec<(T, T)>),
    /// Empirical CDF of a column.
    EmpiricalCdf(EmpiricalDistribution<T>),
}

/// Point masses sorted by location, with prefix sums of mass and of
/// `mass * theta` so that every query is a binary search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomicMeasure<T> {
    theta: Vec<T>,
    mass: Vec<T>,
    cum_mass: Vec<T>,
    cum_moment: Vec<T>,
}

impl<T: Scalar> AtomicMeasure<T> {
    fn from_sorted(pairs: Vec<(T, T)>) -> Self {
        let mut cum_mass = vec![T::zero()];
        let mut cum_moment = vec![T::zero()];
        for &(t, m) in &pairs {
            cum_mass.push(*cum_mass.last().unwrap() + m);
            cum_moment.push(*cum_moment.last().unwrap() + m * t);
        }
        let (theta, mass) = pairs.into_iter().unzip();
        Self { theta, mass, cum_mass, cum_moment }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn total_mass(&self) -> T {
        self.cum_mass[self.len()]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.theta.iter().copied().zip(self.mass.iter().copied())
    }

    fn count_le(&self, t: T) -> usize {
        self.theta.partition_point(|&v| v <= t)
    }

    fn count_lt(&self, t: T) -> usize {
        self.theta.partition_point(|&v| v < t)
    }
}

impl<T: Scalar> MixingMeasure<T> {
    pub fn zero() -> Self {
        MixingMeasure::Atoms(AtomicMeasure::from_sorted(Vec::new()))
    }

    pub fn atom(theta: T, mass: T) -> Result<Self> {
        Self::atoms(vec![(theta, mass)])
    }

    pub fn atoms(mut atoms: Vec<(T, T)>) -> Result<Self> {
        for &(t, m) in &atoms {
            if !(t.is_finite() && t >= T::zero()) {
                return Err(Error::InvalidMeasure(format!("atom location {t}")));
            }
            if !(m.is_finite() && m > T::zero()) {
                return Err(Error::InvalidMeasure(format!("atom mass {m}")));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        Ok(MixingMeasure::Atoms(AtomicMeasure::from_sorted(atoms)))
    }

    pub fn piecewise_linear(knots: Vec<(T, T)>) -> Result<Self> {
        if knots.len() < 2 || knots[0] != (T::zero(), T::zero()) {
            return Err(Error::InvalidMeasure(
                "piecewise-linear H needs at least two knots starting at (0, 0)".into(),
            ));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) || !(w[1].1 >= w[0].1) || !w[1].1.is_finite() {
                return Err(Error::InvalidMeasure(
                    "knots must have increasing theta and non-decreasing H".into(),
                ));
            }
        }
        Ok(MixingMeasure::PiecewiseLinear(knots))
    }

    /// `H(theta) = slope * theta`.
    pub fn linear(slope: T) -> Result<Self> {
        Self::piecewise_linear(vec![(T::zero(), T::zero()), (T::one(), slope)])
    }

    pub fn empirical_cdf(values: &[T]) -> Result<Self> {
        let d = EmpiricalDistribution::new(values)?;
        if d.values()[0] < T::zero() {
            return Err(Error::InvalidMeasure("empirical CDF of negative values".into()));
        }
        Ok(MixingMeasure::EmpiricalCdf(d))
    }

    fn pl_slope(knots: &[(T, T)], i: usize) -> T {
        (knots[i + 1].1 - knots[i].1) / (knots[i + 1].0 - knots[i].0)
    }

    /// Right-continuous `H(theta)`.
    pub fn h(&self, theta: T) -> T {
        match self {
            MixingMeasure::Atoms(a) => a.cum_mass[a.count_le(theta)],
            MixingMeasure::PiecewiseLinear(k) => Self::pl_value(k, theta),
            MixingMeasure::EmpiricalCdf(d) => d.cdf(theta),
        }
    }

    /// Left limit `H(theta-)`, the derivative of `phi_H` used by `L_H`.
    pub fn h_left(&self, theta: T) -> T {
        match self {
            MixingMeasure::Atoms(a) => a.cum_mass[a.count_lt(theta)],
            MixingMeasure::PiecewiseLinear(k) => Self::pl_value(k, theta),
            MixingMeasure::EmpiricalCdf(d) => d.cdf_left(theta),
        }
    }

    fn pl_value(k: &[(T, T)], theta: T) -> T {
        if theta <= T::zero() {
            return T::zero();
        }
        let i = k.partition_point(|&(t, _)| t <= theta).saturating_sub(1).min(k.len() - 2);
        k[i].1 + Self::pl_slope(k, i) * (theta - k[i].0)
    }

    /// `phi_H(a) = integral_0^a H(t) dt`.
    pub fn integral_h(&self, a: T) -> T {
        match self {
            MixingMeasure::Atoms(at) => {
                let k = at.count_lt(a);
                (a * at.cum_mass[k] - at.cum_moment[k]).pos()
            }
            MixingMeasure::PiecewiseLinear(k) => {
                let mut acc = T::zero();
                for i in 0..k.len() - 1 {
                    let lo = k[i].0;
                    if a <= lo {
                        break;
                    }
                    let hi = if i == k.len() - 2 { a } else { k[i + 1].0.min(a) };
                    let (hl, hh) = (Self::pl_value(k, lo), Self::pl_value(k, hi));
                    acc = acc + (hi - lo) * (hl + hh) * T::half();
                }
                acc
            }
            MixingMeasure::EmpiricalCdf(d) => d.lower_partial(a),
        }
    }

    /// The convex generator `phi_H` with `phi_H' = H(.-)`.
    pub fn generator(&self) -> ConvexGenerator<T> {
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        ConvexGenerator::new(
            format!("mixture:{}", self.label()),
            T::zero(),
            move |v| a.integral_h(v),
            move |v| b.h_left(v),
        )
        .with_divergence(move |y, x| mixture_loss(&c, y, x))
    }

    pub fn label(&self) -> String {
        match self {
            MixingMeasure::Atoms(a) => format!("atoms({})", a.len()),
            MixingMeasure::PiecewiseLinear(k) => format!("piecewise-linear({})", k.len()),
            MixingMeasure::EmpiricalCdf(d) => format!("ecdf({})", d.len()),
        }
    }
}

/// `integral of L_theta(y, x) dH(theta)`, exact for every kind of `H`.
///
/// `L_theta(y, x) = |y - theta|` for `theta` in `[min(x,y), max(x,y))` and zero
/// elsewhere, so only that window contributes.
pub fn mixture_loss<T: Scalar>(h: &MixingMeasure<T>, y: T, x: T) -> T {
    if y == x {
        return T::zero();
    }
    let (lo, hi) = if x < y { (x, y) } else { (y, x) };
    match h {
        MixingMeasure::Atoms(a) => {
            let (i0, i1) = (a.count_lt(lo), a.count_lt(hi));
            let m = a.cum_mass[i1] - a.cum_mass[i0];
            let mom = a.cum_moment[i1] - a.cum_moment[i0];
            if x < y { y * m - mom } else { mom - y * m }.pos()
        }
        MixingMeasure::EmpiricalCdf(d) => {
            let (i0, i1) = (d.count_lt(lo), d.count_lt(hi));
            let k = T::from_count(i1 - i0);
            let s = d.partial_sum(i1) - d.partial_sum(i0);
            let total = if x < y { k * y - s } else { s - k * y };
            (total / T::from_count(d.len())).pos()
        }
        MixingMeasure::PiecewiseLinear(k) => {
            let mut acc = T::zero();
            let last = k.len() - 2;
            for i in 0..=last {
                let a = k[i].0.max(lo);
                let b = if i == last { hi } else { k[i + 1].0.min(hi) };
                if b <= a {
                    continue;
                }
                let s = MixingMeasure::pl_slope(k, i);
                // integral of |y - t| over [a, b], which lies on one side of y
                let mid = (a + b) * T::half();
                acc = acc + s * (b - a) * (y - mid).abs();
            }
            acc
        }
    }
}

impl<T: Scalar> Loss<T> for MixingMeasure<T> {
    fn loss(&self, y: T, x: T) -> Result<T> {
        Ok(mixture_loss(self, y, x))
    }

    fn label(&self) -> String {
        MixingMeasure::label(self)
    }
}

/// Empirical expected loss `(1/n) sum L(y_i, x_i)`.
pub fn score<T: Scalar, L: Loss<T> + ?Sized>(sample: &PairedSample<T>, loss: &L) -> Result<T> {
    mean_loss(sample.y(), sample.x(), loss)
}

/// `(1/n) sum L(a_i, b_i)` over two aligned columns.
pub(crate) fn mean_loss<T: Scalar, L: Loss<T> + ?Sized>(a: &[T], b: &[T], loss: &L) -> Result<T> {
    if a.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut acc = T::zero();
    for (&y, &x) in a.iter().zip(b) {
        acc = acc + loss.loss(y, x)?;
    }
    Ok(acc / T::from_count(a.len()))
}

/// `(1/n) sum L(y_i, x_i) W(r_i)` with `r_i` the midranks of the predictor.
///
/// Weighting by the predictor's own distribution breaks consistency: the
/// true conditional mean need not minimize this score.
pub fn weighted_score<T: Scalar, L: Loss<T> + ?Sized>(
    sample: &PairedSample<T>,
    loss: &L,
    weight: impl Fn(T) -> T,
) -> Result<T> {
    let r = midrank_transform(sample.x());
    let mut acc = T::zero();
    for i in 0..sample.len() {
        acc = acc + loss.loss(sample.y()[i], sample.x()[i])? * weight(r[i]);
    }
    Ok(acc / T::from_count(sample.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::simpson_pieces;
    use proptest::prelude::*;

    fn tw(p: f64) -> ConvexGenerator<f64> {
        ConvexGenerator::tweedie(p)
    }

    #[test]
    fn tweedie_values() {
        assert_eq!(tw(0.0).phi(3.0), 9.0);
        assert_eq!(tw(2.0).phi(1.0), 0.0);
        assert!((tw(1.0).phi(2.0) - (2.0 * 2f64.ln() - 2.0)).abs() < 1e-15);
        assert!((tw(1.0).phi(2.0) + 0.6137).abs() < 1e-4);
        assert!((tw(3.0).phi(2.0) - 0.25).abs() < 1e-15);
        assert_eq!(tw(0.0).domain_floor(), 0.0);
        assert_eq!(tw(0.5).domain_floor(), 0.0);
        assert!(tw(1.0).domain_floor() > 0.0 && tw(2.0).domain_floor() > 0.0);
        assert!(tw(-1.0).domain_floor() == 0.0 && tw(3.0).domain_floor() > 0.0);
    }

    #[test]
    fn tweedie_limits_at_zero_are_flagged() {
        assert_eq!(tw(1.0).evaluate(0.0), PhiValue { value: 0.0, finite: true });
        let g = tw(2.0).evaluate(0.0);
        assert!(!g.finite && g.value == f64::INFINITY);
        let g = tw(3.0).evaluate(0.0);
        assert!(!g.finite && g.value == f64::INFINITY);
        assert_eq!(tw(1.5).evaluate(0.0), PhiValue { value: 0.0, finite: true });
        assert_eq!(tw(1.0).dphi(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn bregman_examples() {
        assert_eq!(bregman_loss(&tw(0.0), 3.0, 1.0).unwrap(), 4.0);
        for p in [-1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
            assert_eq!(bregman_loss(&tw(p), 5.0, 5.0).unwrap(), 0.0);
        }
        let l = bregman_loss(&tw(1.0), 2.0, 1.0).unwrap();
        // phi(2) - phi(1) - phi'(1)(2 - 1) with phi(v) = v ln v - v
        let oracle = (2.0 * 2f64.ln() - 2.0) - (-1.0) - 0.0;
        assert!((l - oracle).abs() < 1e-15 && (l - 0.3863).abs() < 1e-4);
        assert_eq!(bregman_loss(&tw(1.0), 0.0, 2.0).unwrap(), 2.0);
        assert!(matches!(
            bregman_loss(&tw(2.0), 0.0, 1.0),
            Err(Error::NonFiniteLoss { .. })
        ));
        assert!(bregman_loss(&tw(1.0), 1.0, 0.0).is_err());
    }

    #[test]
    fn closed_forms_match_textbook_formula() {
        for p in [-2.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
            let g = tw(p);
            for &(y, x) in &[(0.3, 1.7), (2.0, 0.5), (4.0, 4.5), (1.0, 3.0)] {
                let naive = g.phi(y) - g.phi(x) - g.dphi(x) * (y - x);
                let stable = bregman_loss(&g, y, x).unwrap();
                assert!((naive - stable).abs() < 1e-12 * naive.abs().max(1.0), "p={p}");
            }
        }
    }

    #[test]
    fn elementary_examples() {
        assert_eq!(elementary_loss(1.0, 2.0, 0.0), 1.0);
        assert_eq!(elementary_loss(0.0, 2.0, 3.0), 0.0);
        for t in [0.0, 1.0, 2.5, 7.0] {
            assert_eq!(elementary_loss(t, 2.5, 2.5), 0.0);
        }
        // right-continuity at theta = x
        assert_eq!(elementary_loss(1.0, 3.0, 1.0), 2.0);
        assert_eq!(elementary_loss(3.0, 1.0, 3.0), 0.0);
    }

    #[test]
    fn mixture_examples() {
        let atom = MixingMeasure::atom(1.5, 1.0).unwrap();
        assert_eq!(mixture_loss(&atom, 3.0, 1.0), elementary_loss(1.5, 3.0, 1.0));
        let lin = MixingMeasure::linear(2.0f64).unwrap();
        assert!((mixture_loss(&lin, 3.0, 1.0) - 4.0).abs() < 1e-15);
        // quadrature oracle for the unit slope: (y - x)^2 / 2
        let q = simpson_pieces(|t| elementary_loss(t, 3.0, 1.0), &[0.0, 1.0, 3.0, 5.0], 1e-13);
        assert!((q - 2.0).abs() < 1e-12, "{q}");
        assert_eq!(mixture_loss(&MixingMeasure::zero(), 3.0, 1.0), 0.0);
    }

    #[test]
    fn mixture_generator_reproduces_mixture_loss() {
        let h = MixingMeasure::atoms(vec![(0.5f64, 1.0), (2.0, 0.25), (3.0, 2.0)]).unwrap();
        let g = h.generator();
        for &(y, x) in &[(0.1, 2.5), (3.5, 0.2), (2.0, 3.0), (0.5, 2.0)] {
            let naive = g.phi(y) - g.phi(x) - g.dphi(x) * (y - x);
            assert!((naive - mixture_loss(&h, y, x)).abs() < 1e-14);
        }
    }

    #[test]
    fn scores() {
        let s = PairedSample::new(vec![1.0, 3.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(score(&s, &tw(1.0)).unwrap(), 0.0);
        let s = PairedSample::new(vec![0.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(score(&s, &tw(0.0)).unwrap(), 1.0);
        assert_eq!(weighted_score(&s, &tw(0.0), |_| 1.0).unwrap(), 1.0);
        // weights see midranks 1/4 and 3/4 of the tied predictor: both 1/2
        assert_eq!(weighted_score(&s, &tw(0.0), |r| r).unwrap(), 0.5);
    }

    fn pos() -> impl Strategy<Value = f64> {
        0.01f64..50.0
    }

    fn power() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), Just(1.0), Just(2.0), Just(3.0), -3.0f64..4.0]
    }

    proptest! {
        #[test]
        fn losses_are_non_negative(p in power(), y in 0.0f64..50.0, x in pos(), t in 0.0f64..60.0) {
            if let Ok(l) = bregman_loss(&tw(p), y, x) {
                prop_assert!(l >= 0.0);
            }
            prop_assert!(elementary_loss(t, y, x) >= 0.0);
            let h = MixingMeasure::atoms(vec![(t, 1.0), (t * 0.5, 2.0)]).unwrap();
            prop_assert!(mixture_loss(&h, y, x) >= 0.0);
        }

        #[test]
        fn strict_generators_vanish_only_on_the_diagonal(p in power(), y in pos(), x in pos()) {
            let l = bregman_loss(&tw(p), y, x).unwrap();
            if (y - x).abs() > 1e-3 {
                prop_assert!(l > 1e-12, "p={} y={} x={} l={}", p, y, x, l);
            } else if y == x {
                prop_assert_eq!(l, 0.0);
            }
        }

        #[test]
        fn generators_are_convex(p in power(), a in pos(), b in pos(), t in 0.0f64..1.0) {
            let g = tw(p);
            let m = g.phi(t * a + (1.0 - t) * b);
            let chord = t * g.phi(a) + (1.0 - t) * g.phi(b);
            let scale = g.phi(a).abs().max(g.phi(b).abs()).max(1.0);
            prop_assert!(m <= chord + 1e-12 * scale);
        }

        #[test]
        fn derivative_matches_finite_difference(p in power(), x in 0.2f64..20.0) {
            let g = tw(p);
            let h = 1e-5 * x;
            let fd = (g.phi(x + h) - g.phi(x - h)) / (2.0 * h);
            let d = g.dphi(x);
            prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "p={} fd={} d={}", p, fd, d);
        }

        #[test]
        fn atomic_mixture_is_weighted_sum(
            atoms in prop::collection::vec((0.0f64..10.0, 0.01f64..3.0), 1..6),
            y in 0.0f64..10.0, x in 0.0f64..10.0,
        ) {
            let h = MixingMeasure::atoms(atoms.clone()).unwrap();
            let mut atoms = atoms;
            atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let direct: f64 = atoms.iter().map(|&(t, m)| m * elementary_loss(t, y, x)).sum();
            let scale: f64 = atoms.iter().map(|&(t, m)| m * (t + y)).sum::<f64>().max(1.0);
            prop_assert!((mixture_loss(&h, y, x) - direct).abs() <= 1e-13 * scale);
        }

        #[test]
        fn piecewise_linear_mixture_matches_quadrature(
            incs in prop::collection::vec((0.1f64..3.0, 0.0f64..2.0), 1..5),
            y in 0.0f64..12.0, x in 0.0f64..12.0,
        ) {
            let mut knots = vec![(0.0, 0.0)];
            for (dt, dh) in incs {
                let (t, v) = *knots.last().unwrap();
                knots.push((t + dt, v + dh));
            }
            let h = MixingMeasure::piecewise_linear(knots.clone()).unwrap();
            let exact = mixture_loss(&h, y, x);
            let mut br: Vec<f64> = knots.iter().map(|k| k.0).chain([x, y, 15.0]).collect();
            br.sort_by(|a, b| a.partial_cmp(b).unwrap());
            br.dedup();
            // slope is constant on each piece: read it off at the midpoint
            let quad: f64 = br
                .windows(2)
                .map(|w| {
                    let (a, b) = (w[0], w[1]);
                    let m = 0.5 * (a + b);
                    let slope = (h.h(m + 1e-3 * (b - a)) - h.h(m - 1e-3 * (b - a))) / (2e-3 * (b - a));
                    slope * simpson_pieces(|t| elementary_loss(t, y, x), &[a, b], 1e-13)
                })
                .sum();
            prop_assert!((exact - quad).abs() <= 1e-8 * exact.abs().max(1e-3), "{} vs {}", exact, quad);
        }

        #[test]
        fn ecdf_mixture_matches_atoms(
            v in prop::collection::vec(0.0f64..10.0, 1..30),
            y in 0.0f64..10.0, x in 0.0f64..10.0,
        ) {
            let h = MixingMeasure::empirical_cdf(&v).unwrap();
            let w = 1.0 / v.len() as f64;
            let direct: f64 = v.iter().map(|&t| w * elementary_loss(t, y, x)).sum();
            prop_assert!((mixture_loss(&h, y, x) - direct).abs() < 1e-12);
        }
    }
}
