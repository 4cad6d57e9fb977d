//! Paired response/predictor data, empirical distributions, midranks and
//! recalibration (the empirical conditional mean `E[Y|X]`).

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{argsort, mean, sorted, Scalar};

/// Aligned responses `y_i >= 0` and predictions `x_i >= 0`.
///
/// The `calibrated` flag is an assertion by the caller (or by
/// [`PairedSample::recalibrated`]) that `E[Y|X] = X`. Routines that are only
/// valid for calibrated predictors refuse unflagged samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedSample<T> {
    y: Vec<T>,
    x: Vec<T>,
    calibrated: bool,
}

fn check_column<T: Scalar>(column: &str, v: &[T]) -> Result<()> {
    for (row, &value) in v.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { column: column.to_string(), row });
        }
        if value < T::zero() {
            return Err(Error::NegativeValue {
                column: column.to_string(),
                row,
                value: value.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

impl<T: Scalar> PairedSample<T> {
    pub fn new(y: Vec<T>, x: Vec<T>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptySample);
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                what: "predictor".into(),
                expected: y.len(),
                got: x.len(),
            });
        }
        check_column("response", &y)?;
        check_column("predictor", &x)?;
        Ok(Self { y, x, calibrated: false })
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn mean_y(&self) -> T {
        mean(&self.y)
    }

    pub fn mean_x(&self) -> T {
        mean(&self.x)
    }

    /// Relative global bias `|mean(x) - mean(y)| / mean(y)`.
    pub fn unbiasedness_gap(&self) -> T {
        let (mx, my) = (self.mean_x(), self.mean_y());
        if my == T::zero() {
            return if mx == T::zero() { T::zero() } else { T::infinity() };
        }
        (mx - my).abs() / my
    }

    /// Flags the predictor as mean-calibrated for the response.
    pub fn assume_calibrated(mut self) -> Self {
        self.calibrated = true;
        self
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated
    }

    /// Same response, different predictor column. The flag is reset.
    pub fn with_predictor(&self, x: Vec<T>) -> Result<Self> {
        Self::new(self.y.clone(), x)
    }

    /// Rescales the predictor so that `mean(x) = mean(y)` (the balance
    /// property). Lorenz curves and the calibration flag are unaffected.
    pub fn balanced(&self) -> Result<Self> {
        let mx = self.mean_x();
        if mx == T::zero() {
            return Err(Error::ZeroTotal("predictor"));
        }
        let c = self.mean_y() / mx;
        Ok(Self {
            y: self.y.clone(),
            x: self.x.iter().map(|&v| v * c).collect(),
            calibrated: self.calibrated,
        })
    }

    /// Replaces the predictor by its recalibrated version, which is
    /// calibrated on its own level sets.
    pub fn recalibrated(&self, method: Recalibration) -> Result<Self> {
        let fit = recalibrate_with(self, method)?;
        Ok(Self { y: self.y.clone(), x: fit.fitted, calibrated: true })
    }
}

/// Validates a response column against several named predictor columns.
///
/// Each returned sample carries its unbiasedness gap via
/// [`PairedSample::unbiasedness_gap`].
pub fn validate<T: Scalar>(
    response: &[T],
    predictors: &[(&str, &[T])],
) -> Result<Vec<PairedSample<T>>> {
    if response.is_empty() {
        return Err(Error::EmptySample);
    }
    check_column("response", response)?;
    let mut out = Vec::with_capacity(predictors.len());
    for (name, col) in predictors {
        if col.len() != response.len() {
            return Err(Error::LengthMismatch {
                what: (*name).to_string(),
                expected: response.len(),
                got: col.len(),
            });
        }
        check_column(name, col)?;
        out.push(PairedSample { y: response.to_vec(), x: col.to_vec(), calibrated: false });
    }
    Ok(out)
}

/// Empirical distribution of a column: sorted values with prefix sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistribution<T> {
    values: Vec<T>,
    prefix: Vec<T>,
}

impl<T: Scalar> EmpiricalDistribution<T> {
    pub fn new(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { column: "values".into(), row });
        }
        let values = sorted(values);
        let mut prefix = Vec::with_capacity(values.len() + 1);
        let mut acc = T::zero();
        prefix.push(acc);
        for &v in &values {
            acc = acc + v;
            prefix.push(acc);
        }
        Ok(Self { values, prefix })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted support points (with multiplicity).
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn total(&self) -> T {
        self.prefix[self.values.len()]
    }

    pub fn mean(&self) -> T {
        self.total() / T::from_count(self.len())
    }

    /// Sum of the `k` smallest values.
    pub fn partial_sum(&self, k: usize) -> T {
        self.prefix[k]
    }

    /// Number of values `<= t`.
    pub fn count_le(&self, t: T) -> usize {
        self.values.partition_point(|&v| v <= t)
    }

    /// Number of values `< t`.
    pub fn count_lt(&self, t: T) -> usize {
        self.values.partition_point(|&v| v < t)
    }

    /// Right-continuous CDF `#{v <= t} / n`.
    pub fn cdf(&self, t: T) -> T {
        T::from_count(self.count_le(t)) / T::from_count(self.len())
    }

    /// Left limit `#{v < t} / n`.
    pub fn cdf_left(&self, t: T) -> T {
        T::from_count(self.count_lt(t)) / T::from_count(self.len())
    }

    /// Generalized inverse `inf{t : F(t) >= p}`; `p = 0` returns the minimum.
    pub fn quantile(&self, p: T) -> Result<T> {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::ProbabilityOutOfRange(p.to_f64_lossy()));
        }
        let n = self.len();
        let nf = T::from_count(n);
        let mut k = (p * nf).ceil().to_usize().unwrap_or(n).clamp(1, n);
        // guard against p*n landing a hair above an integer
        while k > 1 && T::from_count(k - 1) / nf >= p {
            k -= 1;
        }
        Ok(self.values[k - 1])
    }

    /// Stop-loss transform `mean((v - theta)^+)`.
    pub fn stop_loss(&self, theta: T) -> T {
        let k = self.count_le(theta);
        let upper = self.total() - self.prefix[k];
        (upper - theta * T::from_count(self.len() - k)) / T::from_count(self.len())
    }

    /// `mean((theta - v)^+)`.
    pub fn lower_partial(&self, theta: T) -> T {
        let k = self.count_le(theta);
        (theta * T::from_count(k) - self.prefix[k]) / T::from_count(self.len())
    }
}

/// Maximal runs of equal values in `v[order]`, as half-open position ranges.
pub(crate) fn tie_runs<T: Scalar>(v: &[T], order: &[usize]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || v[order[i]] != v[order[start]] {
            runs.push((start, i));
            start = i;
        }
    }
    runs
}

/// Midrank transform `(rank - 1/2) / n`, tied values sharing their average rank.
pub fn midrank_transform<T: Scalar>(x: &[T]) -> Vec<T> {
    let n = x.len();
    let mut out = vec![T::zero(); n];
    if n == 0 {
        return out;
    }
    let order = argsort(x);
    let nf = T::from_count(n);
    for (s, e) in tie_runs(x, &order) {
        // average of 1-based ranks s+1..=e, minus 1/2
        let r = T::from_count(s + e) * T::half() / nf;
        for &i in &order[s..e] {
            out[i] = r;
        }
    }
    out
}

/// Estimator of the conditional mean `E[Y|X]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Recalibration {
    /// Isotonic least squares by pool-adjacent-violators.
    Pav,
    /// Equal-frequency bins with bin means; tied predictions stay together.
    Bins(usize),
    /// Mean response on each level set of the predictor.
    LevelSets,
    /// Take the predictor as already calibrated.
    Identity,
}

impl fmt::Display for Recalibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recalibration::Pav => write!(f, "pav"),
            Recalibration::Bins(k) => write!(f, "bins:{k}"),
            Recalibration::LevelSets => write!(f, "levels"),
            Recalibration::Identity => write!(f, "none"),
        }
    }
}

impl FromStr for Recalibration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pav" => Ok(Recalibration::Pav),
            "levels" => Ok(Recalibration::LevelSets),
            "none" => Ok(Recalibration::Identity),
            other => {
                let k = other
                    .strip_prefix("bins:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k > 0)
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "recalibration `{other}` (expected pav, bins:<k>, levels or none)"
                        ))
                    })?;
                Ok(Recalibration::Bins(k))
            }
        }
    }
}

/// One constant piece of a recalibration fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Block<T> {
    pub x_lo: T,
    pub x_hi: T,
    pub value: T,
    pub len: usize,
}

/// Fitted conditional means aligned with the input rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecalibratedSample<T> {
    pub blocks: Vec<Block<T>>,
    pub fitted: Vec<T>,
    pub method: Recalibration,
}

/// Isotonic recalibration (PAV).
pub fn recalibrate<T: Scalar>(sample: &PairedSample<T>) -> RecalibratedSample<T> {
    pav(sample)
}

pub fn recalibrate_with<T: Scalar>(
    sample: &PairedSample<T>,
    method: Recalibration,
) -> Result<RecalibratedSample<T>> {
    match method {
        Recalibration::Pav => Ok(pav(sample)),
        Recalibration::Bins(k) => {
            if k == 0 {
                return Err(Error::InvalidParameter("bins:0".into()));
            }
            Ok(grouped(sample, method, |runs, n| bin_runs(runs, n, k)))
        }
        Recalibration::LevelSets => Ok(grouped(sample, method, |runs, _| {
            (0..runs.len()).map(|i| (i, i + 1)).collect()
        })),
        Recalibration::Identity => {
            let order = argsort(sample.x());
            let blocks = tie_runs(sample.x(), &order)
                .into_iter()
                .map(|(s, e)| {
                    let v = sample.x()[order[s]];
                    Block { x_lo: v, x_hi: v, value: v, len: e - s }
                })
                .collect();
            Ok(RecalibratedSample { blocks, fitted: sample.x().to_vec(), method })
        }
    }
}

/// Level sets of x in ascending order, each with its response sum.
struct Level<T> {
    start: usize,
    end: usize,
    sum: T,
}

fn levels<T: Scalar>(sample: &PairedSample<T>) -> (Vec<usize>, Vec<Level<T>>) {
    let order = argsort(sample.x());
    let lv = tie_runs(sample.x(), &order)
        .into_iter()
        .map(|(start, end)| Level {
            start,
            end,
            sum: order[start..end].iter().map(|&i| sample.y()[i]).sum(),
        })
        .collect();
    (order, lv)
}

/// Groups consecutive level sets into equal-frequency bins.
fn bin_runs<T>(runs: &[Level<T>], n: usize, k: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut current = usize::MAX;
    for (i, r) in runs.iter().enumerate() {
        let b = r.start * k / n;
        if b != current {
            out.push((i, i + 1));
            current = b;
        } else if let Some(last) = out.last_mut() {
            last.1 = i + 1;
        }
    }
    out
}

/// Fit that assigns each group of level sets its response mean.
fn grouped<T: Scalar>(
    sample: &PairedSample<T>,
    method: Recalibration,
    group: impl Fn(&[Level<T>], usize) -> Vec<(usize, usize)>,
) -> RecalibratedSample<T> {
    let (order, lv) = levels(sample);
    let n = sample.len();
    let mut fitted = vec![T::zero(); n];
    let mut blocks = Vec::new();
    for (a, b) in group(&lv, n) {
        let (s, e) = (lv[a].start, lv[b - 1].end);
        let sum: T = lv[a..b].iter().map(|l| l.sum).sum();
        let value = sum / T::from_count(e - s);
        for &i in &order[s..e] {
            fitted[i] = value;
        }
        blocks.push(Block {
            x_lo: sample.x()[order[s]],
            x_hi: sample.x()[order[e - 1]],
            value,
            len: e - s,
        });
    }
    RecalibratedSample { blocks, fitted, method }
}

fn pav<T: Scalar>(sample: &PairedSample<T>) -> RecalibratedSample<T> {
    let (order, lv) = levels(sample);
    // stack of pooled blocks: (first level, last level exclusive, sum, count)
    let mut stack: Vec<(usize, usize, T, usize)> = Vec::with_capacity(lv.len());
    for (i, l) in lv.iter().enumerate() {
        let mut cur = (i, i + 1, l.sum, l.end - l.start);
        while let Some(&prev) = stack.last() {
            // prev.mean > cur.mean, cross-multiplied to avoid a division
            if prev.2 * T::from_count(cur.3) > cur.2 * T::from_count(prev.3) {
                stack.pop();
                cur = (prev.0, cur.1, prev.2 + cur.2, prev.3 + cur.3);
            } else {
                break;
            }
        }
        stack.push(cur);
    }
    let mut fitted = vec![T::zero(); sample.len()];
    let mut blocks = Vec::with_capacity(stack.len());
    for (a, b, sum, count) in stack {
        let value = sum / T::from_count(count);
        let (s, e) = (lv[a].start, lv[b - 1].end);
        for &i in &order[s..e] {
            fitted[i] = value;
        }
        blocks.push(Block {
            x_lo: sample.x()[order[s]],
            x_hi: sample.x()[order[e - 1]],
            value,
            len: count,
        });
    }
    RecalibratedSample { blocks, fitted, method: Recalibration::Pav }
}

/// Isotonic least squares by exhaustive search over contiguous partitions of
/// the level sets. Exponential; only for cross-checking on tiny inputs.
pub fn isotonic_brute_force<T: Scalar>(sample: &PairedSample<T>) -> Vec<T> {
    let (order, lv) = levels(sample);
    let m = lv.len();
    assert!(m <= 20, "brute force is limited to 20 level sets");
    let mut best: Option<(T, Vec<T>)> = None;
    for mask in 0u32..(1u32 << (m - 1)) {
        // bit j set: cut between level j and j+1
        let mut values = Vec::with_capacity(m);
        let mut start = 0;
        for j in 0..m {
            if j == m - 1 || mask & (1 << j) != 0 {
                let sum: T = lv[start..=j].iter().map(|l| l.sum).sum();
                let cnt = lv[j].end - lv[start].start;
                let v = sum / T::from_count(cnt);
                values.extend(std::iter::repeat(v).take(j + 1 - start));
                start = j + 1;
            }
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let mut sse = T::zero();
        for (j, l) in lv.iter().enumerate() {
            for &i in &order[l.start..l.end] {
                let d = sample.y()[i] - values[j];
                sse = sse + d * d;
            }
        }
        if best.as_ref().map_or(true, |(b, _)| sse < *b) {
            best = Some((sse, values));
        }
    }
    let values = best.expect("at least one partition is monotone").1;
    let mut out = vec![T::zero(); sample.len()];
    for (j, l) in lv.iter().enumerate() {
        for &i in &order[l.start..l.end] {
            out[i] = values[j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(y: &[f64], x: &[f64]) -> PairedSample<f64> {
        PairedSample::new(y.to_vec(), x.to_vec()).unwrap()
    }

    #[test]
    fn validation_errors_are_distinct() {
        let ok = validate(&[1.0, 2.0], &[("a", &[2.0, 1.0][..])]).unwrap();
        assert_eq!(ok[0].unbiasedness_gap(), 0.0);
        assert!(matches!(
            validate(&[1.0, -2.0], &[("a", &[1.0, 1.0][..])]),
            Err(Error::NegativeValue { row: 1, .. })
        ));
        assert!(matches!(
            validate(&[1.0, 2.0, 3.0], &[("a", &[1.0, 2.0][..])]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            validate(&[1.0, f64::NAN], &[("a", &[1.0, 2.0][..])]),
            Err(Error::NonFinite { .. })
        ));
        assert_eq!(validate::<f64>(&[], &[]), Err(Error::EmptySample));
    }

    #[test]
    fn ecdf_and_quantile() {
        let d = EmpiricalDistribution::new(&[3.0f64, 1.0, 2.0]).unwrap();
        assert!((d.cdf(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.quantile(0.0).unwrap(), 1.0);
        assert_eq!(d.quantile(1.0 / 3.0).unwrap(), 1.0);
        assert_eq!(d.quantile(0.34).unwrap(), 2.0);
        assert_eq!(d.quantile(1.0).unwrap(), 3.0);
        assert!(d.quantile(1.5).is_err());
        let one = EmpiricalDistribution::new(&[5.0]).unwrap();
        for p in [0.1, 0.5, 1.0] {
            assert_eq!(one.quantile(p).unwrap(), 5.0);
        }
        assert!((d.stop_loss(1.5) - (0.5 + 1.5) / 3.0).abs() < 1e-15);
        assert!((d.lower_partial(2.5) - (1.5 + 0.5) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn midranks() {
        let r = midrank_transform(&[10.0, 20.0, 30.0]);
        assert_eq!(r, vec![1.0 / 6.0, 0.5, 5.0 / 6.0]);
        assert_eq!(midrank_transform(&[7.0, 7.0]), vec![0.5, 0.5]);
        assert_eq!(midrank_transform(&[3.0, 1.0, 2.0]), vec![5.0 / 6.0, 1.0 / 6.0, 0.5]);
        let r = midrank_transform(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(r, vec![0.125, 0.5, 0.5, 0.875]);
    }

    #[test]
    fn pav_small_cases() {
        assert_eq!(recalibrate(&s(&[3.0, 1.0], &[1.0, 2.0])).fitted, vec![2.0, 2.0]);
        assert_eq!(recalibrate(&s(&[1.0, 2.0, 5.0], &[1.0, 2.0, 3.0])).fitted, vec![1.0, 2.0, 5.0]);
        let fit = recalibrate(&s(&[1.0, 2.0, 6.0], &[4.0, 4.0, 4.0]));
        assert_eq!(fit.fitted, vec![3.0; 3]);
        assert_eq!(fit.blocks.len(), 1);
    }

    #[test]
    fn bins_and_levels() {
        let smp = s(&[1.0, 3.0, 5.0, 7.0], &[1.0, 2.0, 3.0, 4.0]);
        let b = recalibrate_with(&smp, Recalibration::Bins(2)).unwrap();
        assert_eq!(b.fitted, vec![2.0, 2.0, 6.0, 6.0]);
        let l = recalibrate_with(&s(&[1.0, 3.0, 4.0], &[2.0, 2.0, 1.0]), Recalibration::LevelSets)
            .unwrap();
        assert_eq!(l.fitted, vec![2.0, 2.0, 4.0]);
        assert_eq!("bins:7".parse::<Recalibration>().unwrap(), Recalibration::Bins(7));
        assert!("bins:0".parse::<Recalibration>().is_err());
        assert!("kernel".parse::<Recalibration>().is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let smp = PairedSample::new(vec![3.0f32, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(recalibrate(&smp).fitted, vec![2.0f32, 2.0]);
    }

    fn small_sample() -> impl Strategy<Value = PairedSample<f64>> {
        (1usize..=8).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..10.0, n),
                prop::collection::vec(0u8..5, n),
            )
                .prop_map(|(y, x)| {
                    PairedSample::new(y, x.into_iter().map(f64::from).collect()).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn pav_matches_brute_force(smp in small_sample()) {
            let fit = recalibrate(&smp);
            let bf = isotonic_brute_force(&smp);
            for (a, b) in fit.fitted.iter().zip(&bf) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn pav_is_monotone_and_conserves_mass(
            y in prop::collection::vec(0.0f64..100.0, 1..200),
            seed in 0u64..1000,
        ) {
            let x: Vec<f64> = (0..y.len()).map(|i| ((i as u64 * 7919 + seed) % 97) as f64).collect();
            let smp = PairedSample::new(y.clone(), x.clone()).unwrap();
            let fit = recalibrate(&smp);
            let order = argsort(&x);
            for w in order.windows(2) {
                prop_assert!(fit.fitted[w[0]] <= fit.fitted[w[1]]);
            }
            let sy: f64 = y.iter().sum();
            let sf: f64 = fit.fitted.iter().sum();
            prop_assert!((sy - sf).abs() <= 1e-12 * sy.max(1.0));
            for blk in &fit.blocks {
                let members: Vec<f64> = (0..y.len())
                    .filter(|&i| x[i] >= blk.x_lo && x[i] <= blk.x_hi)
                    .map(|i| y[i])
                    .collect();
                let m = members.iter().sum::<f64>() / members.len() as f64;
                prop_assert!((m - blk.value).abs() <= 1e-12 * m.abs().max(1.0));
            }
        }

        #[test]
        fn midranks_invariant_under_increasing_maps(x in prop::collection::vec(0.0f64..50.0, 1..60)) {
            let a = midrank_transform(&x);
            let tx: Vec<f64> = x.iter().map(|v| (v + 1.0).ln() * 3.0 + v.powi(3)).collect();
            prop_assert_eq!(a, midrank_transform(&tx));
        }
    }
}
