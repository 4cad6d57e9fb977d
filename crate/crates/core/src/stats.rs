//! Scalar statistics built on Lorenz and concentration curves: Gini, ABC,
//! ABC², the Gini/DSC split and the binary AUC.
//!
//! Every curve integral here is taken exactly over the knots `k / n` of the
//! empirical curves, so the curve forms and the covariance forms agree to
//! rounding whenever the sample is globally unbiased.

use serde::Serialize;

use crate::curves::{responses_by_rank, Curve};
use crate::error::{Error, Result};
use crate::losses::{mixture_loss, MixingMeasure};
use crate::sample::{midrank_transform, recalibrate_with, EmpiricalDistribution, PairedSample, Recalibration};
use crate::scalar::{argsort, mean, sorted, Scalar};

/// Gini index of one column in four algebraically equal forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GiniReport<T> {
    /// `2 Cov(X, r) / mean(X)` with midranks `r`.
    pub gini_cov: T,
    /// `mean |x_i - x_j| / (2 mean(X))` over all ordered pairs.
    pub gini_mad: T,
    /// `integral F (1 - F) / mean(X)`.
    pub gini_integral: T,
    /// `1 - 2 integral LC`.
    pub gini_lorenz: T,
    pub value: T,
    pub max_discrepancy: T,
}

pub fn gini<T: Scalar>(x: &[T]) -> Result<GiniReport<T>> {
    let d = EmpiricalDistribution::new(x)?;
    if !(d.total() > T::zero()) {
        return Err(Error::ZeroTotal("predictor"));
    }
    let n = d.len();
    let nf = T::from_count(n);
    let xs = d.values();
    let xbar = d.mean();

    // sum_{i,j} |x_i - x_j| = 2 sum_k (2k - n - 1) x_(k), 1-based k
    let weighted: T = xs
        .iter()
        .enumerate()
        .map(|(k, &v)| (T::from_count(2 * k + 1) - nf) * v)
        .sum();
    let gini_mad = weighted / (nf * nf * xbar);

    let r = midrank_transform(x);
    let cov = x.iter().zip(&r).map(|(&v, &ri)| (v - xbar) * (ri - T::half())).sum::<T>() / nf;
    let gini_cov = T::two() * cov / xbar;

    let mut area = T::zero();
    for k in 1..n {
        let f = T::from_count(k) / nf;
        area = area + f * (T::one() - f) * (xs[k] - xs[k - 1]);
    }
    let gini_integral = area / xbar;

    let total = d.total();
    let mut lc_area = T::zero();
    for k in 1..=n {
        lc_area = lc_area + (d.partial_sum(k - 1) + d.partial_sum(k)) / total;
    }
    let gini_lorenz = T::one() - lc_area / nf;

    let forms = [gini_cov, gini_mad, gini_integral, gini_lorenz];
    let mut max_discrepancy = T::zero();
    for a in forms {
        for b in forms {
            max_discrepancy = max_discrepancy.max((a - b).abs());
        }
    }
    Ok(GiniReport {
        gini_cov,
        gini_mad,
        gini_integral,
        gini_lorenz,
        value: forms.iter().copied().sum::<T>() / T::lit(4.0),
        max_discrepancy,
    })
}

/// ABC and ABC² with their curve and covariance forms.
///
/// Sign convention: `abc = integral (LC - CC) dp = Cov(Y - X, F_X(X)) / E[Y]`,
/// positive when the predictor is too flat (under-dispersed), and
/// `Q(0) = -abc`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbcReport<T> {
    pub abc: T,
    pub abc_from_curves: T,
    pub abc_from_cov: T,
    pub abc2: T,
    pub abc2_from_curves: T,
    pub abc2_from_q: T,
    /// `mean(x) - mean(y)`; the forms only agree when this is zero.
    pub unbiasedness_gap: T,
}

/// Per-position columns shared by the ABC computations: predictions sorted
/// ascending and the tie-averaged responses in the same order.
fn ranked_columns<T: Scalar>(sample: &PairedSample<T>) -> Result<(Vec<T>, Vec<T>)> {
    let ybar = sample.mean_y();
    if !(ybar > T::zero()) {
        return Err(Error::ZeroTotal("response"));
    }
    if !(sample.mean_x() > T::zero()) {
        return Err(Error::ZeroTotal("predictor"));
    }
    Ok((sorted(sample.x()), responses_by_rank(sample)))
}

pub fn abc<T: Scalar>(sample: &PairedSample<T>) -> Result<AbcReport<T>> {
    let (xs, ys) = ranked_columns(sample)?;
    let n = xs.len();
    let nf = T::from_count(n);
    let ybar = sample.mean_y();
    let (sx, sy) = (xs.iter().copied().sum::<T>(), ys.iter().copied().sum::<T>());

    // D_k = LC(k/n) - CC(k/n), piecewise linear between knots
    let mut d_prev = T::zero();
    let (mut lin, mut quad) = (T::zero(), T::zero());
    let (mut cx, mut cy) = (T::zero(), T::zero());
    for k in 0..n {
        cx = cx + xs[k];
        cy = cy + ys[k];
        let d = cx / sx - cy / sy;
        lin = lin + (d_prev + d) * T::half();
        quad = quad + (d_prev * d_prev + d_prev * d + d * d) / T::lit(3.0);
        d_prev = d;
    }
    let abc_from_curves = lin / nf;
    let abc2_from_curves = quad / nf;

    let r = midrank_transform(sample.x());
    let abc_from_cov = sample
        .x()
        .iter()
        .zip(sample.y())
        .zip(&r)
        .map(|((&x, &y), &ri)| (y - x) * (ri - T::half()))
        .sum::<T>()
        / (nf * ybar);

    // Q averaged over each rank cell ((i-1)/n, i/n]
    let delta: Vec<T> = ys.iter().zip(&xs).map(|(&y, &x)| y - x).collect();
    let pos_rank = |i: usize| (T::from_count(i) + T::half()) / nf;
    let mut suffix = vec![T::zero(); n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] + delta[j] * (T::one() - pos_rank(j));
    }
    let mut prefix = T::zero();
    let mut qbar = Vec::with_capacity(n);
    for i in 0..n {
        let diag = T::one() - T::from_count(i + 1) / nf + T::one() / (T::lit(3.0) * nf);
        qbar.push(((T::one() - pos_rank(i)) * prefix + suffix[i + 1] + delta[i] * diag) / (nf * ybar));
        prefix = prefix + delta[i];
    }
    let (md, mq) = (mean(&delta), mean(&qbar));
    let abc2_from_q = delta.iter().zip(&qbar).map(|(&a, &b)| (a - md) * (b - mq)).sum::<T>() / (nf * ybar);

    Ok(AbcReport {
        abc: abc_from_cov,
        abc_from_curves,
        abc_from_cov,
        abc2: abc2_from_curves,
        abc2_from_curves,
        abc2_from_q,
        unbiasedness_gap: sample.unbiasedness_gap(),
    })
}

/// Same report as [`abc`]; kept as a separate entry point for callers that
/// only care about the squared statistic.
pub fn abc_squared<T: Scalar>(sample: &PairedSample<T>) -> Result<AbcReport<T>> {
    abc(sample)
}

/// Gini of a calibrated predictor split into a discrimination term and a
/// mean-absolute-deviation term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GiniDsc<T> {
    pub gini: T,
    /// `DSC_{L_H}(Y, X) / ybar` with `H` the empirical CDF of the predictor.
    pub dsc_term: T,
    /// `mean |x - ybar| / (2 ybar)`.
    pub mad_term: T,
    /// `F(ybar) - LC(F(ybar))`, equal to `mad_term` when `mean(x) = ybar`.
    pub mad_term_lorenz: T,
    pub residual: T,
    pub unbiasedness_gap: T,
}

/// Requires a sample flagged calibrated; the identity only holds under
/// `mean(x) = mean(y)`, so balance first when that matters.
pub fn gini_dsc_decomposition<T: Scalar>(sample: &PairedSample<T>) -> Result<GiniDsc<T>> {
    if !sample.is_calibrated() {
        return Err(Error::NotCalibrated("Gini/DSC decomposition"));
    }
    let ybar = sample.mean_y();
    if !(ybar > T::zero()) {
        return Err(Error::ZeroTotal("response"));
    }
    let g = gini(sample.x())?.gini_mad;
    let d = EmpiricalDistribution::new(sample.x())?;
    let nf = T::from_count(d.len());
    // calibrated stop-loss form: integral [E(X - t)^+ - (ybar - t)^+] dF_X(t)
    let dsc = d.values().iter().map(|&t| d.stop_loss(t) - (ybar - t).pos()).sum::<T>() / nf;
    let mad = sample.x().iter().map(|&x| (x - ybar).abs()).sum::<T>() / nf / (T::two() * ybar);
    let k = d.count_le(ybar);
    let mad_lorenz = T::from_count(k) / nf - d.partial_sum(k) / d.total();
    let dsc_term = dsc / ybar;
    Ok(GiniDsc {
        gini: g,
        dsc_term,
        mad_term: mad,
        mad_term_lorenz: mad_lorenz,
        residual: (g - dsc_term - mad).abs(),
        unbiasedness_gap: sample.unbiasedness_gap(),
    })
}

/// Rank AUC for binary responses, with the Gini and score relations it
/// enters for calibrated scores.
///
/// For a calibrated score `Gini = pi0 (2 AUC - 1)` and
/// `S_{L_H} = -pi1 Gini + pi0 pi1 = 2 pi0 pi1 (1 - AUC)` with `H = F_X`.
/// The unweighted relations `Gini = 2 AUC - 1` and
/// `S = -2 pi1 AUC + (1 + pi0) pi1` are reported too; they are off by the
/// class prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucReport<T> {
    pub auc: T,
    pub pi0: T,
    pub pi1: T,
    pub gini: T,
    pub gini_relation_residual: T,
    pub gini_relation_residual_unweighted: T,
    /// `mean L_H(y_i, x_i)` with `H` the empirical CDF of the scores.
    pub score_lh: T,
    pub score_relation_residual: T,
    pub score_relation_residual_unweighted: T,
}

pub fn auc_binary<T: Scalar>(sample: &PairedSample<T>) -> Result<AucReport<T>> {
    for (row, &y) in sample.y().iter().enumerate() {
        if y != T::zero() && y != T::one() {
            return Err(Error::NonBinaryResponse { row, value: y.to_f64_lossy() });
        }
    }
    let n = sample.len();
    let n1 = sample.y().iter().filter(|&&y| y == T::one()).count();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass);
    }
    // Mann-Whitney with midranks: ties count one half
    let r = midrank_transform(sample.x());
    let rank_sum: T = r
        .iter()
        .zip(sample.y())
        .filter(|(_, &y)| y == T::one())
        .map(|(&ri, _)| ri * T::from_count(n) + T::half())
        .sum();
    let (n0f, n1f) = (T::from_count(n0), T::from_count(n1));
    let auc = (rank_sum - n1f * (n1f + T::one()) * T::half()) / (n0f * n1f);
    let nf = T::from_count(n);
    let (pi0, pi1) = (n0f / nf, n1f / nf);

    let g = gini(sample.x())?.gini_mad;
    let h = MixingMeasure::empirical_cdf(sample.x())?;
    let score_lh = sample.y().iter().zip(sample.x()).map(|(&y, &x)| mixture_loss(&h, y, x)).sum::<T>() / nf;
    let two = T::two();
    Ok(AucReport {
        auc,
        pi0,
        pi1,
        gini: g,
        gini_relation_residual: (g - pi0 * (two * auc - T::one())).abs(),
        gini_relation_residual_unweighted: (g - (two * auc - T::one())).abs(),
        score_lh,
        score_relation_residual: (score_lh - two * pi0 * pi1 * (T::one() - auc)).abs(),
        score_relation_residual_unweighted: (score_lh - (-two * pi1 * auc + (T::one() + pi0) * pi1)).abs(),
    })
}

/// Closed forms when `E[Y|X] = (1 - b) E[Y] + b X`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearMiscalibration<T> {
    pub cc: Curve<T>,
    pub abc: T,
    pub abc2: T,
    pub mcb_mse: T,
}

/// `CC = (1 - b) p + b LC`, `ABC = -(1 - b) Gini / 2`,
/// `ABC² = (1 - b)² integral (p - LC)²`, `MCB = (1 - b)² Var(X)`.
///
/// The ABC² integral is exact for the piecewise-linear `lorenz` passed in.
pub fn linear_miscalibration_oracle<T: Scalar>(
    b: T,
    lorenz: &Curve<T>,
    var_x: T,
    gini_x: T,
) -> LinearMiscalibration<T> {
    let c = T::one() - b;
    LinearMiscalibration {
        cc: lorenz.map(|p, lc| c * p + b * lc),
        abc: -c * gini_x * T::half(),
        abc2: c * c * lorenz.map(|p, lc| p - lc).integral_of_square(),
        mcb_mse: c * c * var_x,
    }
}

/// Which form of the ABC²/MCB link to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QDirection {
    /// `H = Q(F_X) + ABC`, valid when `Q` is nondecreasing.
    Increasing,
    /// `H = -Q(F_X) - ABC`, valid when `Q` is nonincreasing.
    Decreasing,
    /// `H = H1 - H2` from the positive and negative variation of `Q(F_X)`.
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Monotonicity {
    Constant,
    Increasing,
    Decreasing,
    NonMonotone,
}

/// ABC and ABC² rebuilt from miscalibration terms of mixture losses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbcMcbReconciliation<T> {
    pub abc: T,
    pub abc_reconstructed: T,
    pub abc_residual: T,
    pub abc2: T,
    pub abc2_reconstructed: T,
    pub abc2_residual: T,
    pub q_shape: Monotonicity,
    pub direction: QDirection,
    /// False when the requested direction does not match `q_shape`; the
    /// reconstruction then uses a signed `H` and is only formal.
    pub direction_consistent: bool,
    /// `MCB_{L_{H1}}` and `MCB_{L_{H2}}`.
    pub mcb_h1: T,
    pub mcb_h2: T,
}

/// Values of `Q` at the right and left ends of each distinct prediction.
fn q_steps<T: Scalar>(sample: &PairedSample<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
    let x = sample.x();
    let n = x.len();
    let nf = T::from_count(n);
    let ybar = sample.mean_y();
    let r = midrank_transform(x);
    let order = argsort(x);
    let d: Vec<T> = order.iter().map(|&i| sample.y()[i] - x[i]).collect();
    let rs: Vec<T> = order.iter().map(|&i| r[i]).collect();
    let mut suf = vec![T::zero(); n + 1];
    for k in (0..n).rev() {
        suf[k] = suf[k + 1] + d[k] * (T::one() - rs[k]);
    }
    let mut pre = vec![T::zero(); n + 1];
    for k in 0..n {
        pre[k + 1] = pre[k] + d[k];
    }
    // Q(k/n): ranks below k/n are exactly the first k positions
    let q_at = |k: usize| ((T::one() - T::from_count(k) / nf) * pre[k] + suf[k]) / (nf * ybar);
    let (mut levels, mut right, mut left) = (Vec::new(), Vec::new(), Vec::new());
    let mut s = 0;
    while s < n {
        let mut e = s + 1;
        while e < n && x[order[e]] == x[order[s]] {
            e += 1;
        }
        levels.push(x[order[s]]);
        left.push(q_at(s));
        right.push(q_at(e));
        s = e;
    }
    (levels, left, right)
}

/// Rebuilds ABC (with `H = F_X`) and ABC² (with `H = Q(F_X) + ABC`) from the
/// covariance and mean terms of [`crate::decomp::mixture_split`].
///
/// ABC² needs a globally unbiased sample for `Q(0) = -ABC`.
pub fn abc_via_mcb<T: Scalar>(
    sample: &PairedSample<T>,
    direction: QDirection,
    method: Recalibration,
) -> Result<AbcMcbReconciliation<T>> {
    let report = abc(sample)?;
    let ybar = sample.mean_y();
    let fit = recalibrate_with(sample, method)?;
    let x = sample.x();

    let hf = MixingMeasure::empirical_cdf(x)?;
    let split = crate::decomp::mixture_split(&fit.fitted, x, &hf);
    let abc_reconstructed = -(split.mcb - split.integral_term) / ybar;

    let (levels, left, right) = q_steps(sample);
    let scale = left.iter().chain(&right).fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = T::lit(1e-12) * scale.max(T::epsilon());
    let (mut up, mut down) = (Vec::new(), Vec::new());
    for ((&t, &l), &r) in levels.iter().zip(&left).zip(&right) {
        let jump = r - l;
        if jump > T::zero() {
            up.push((t, jump));
        } else if jump < T::zero() {
            down.push((t, -jump));
        }
    }
    let significant = |v: &[(T, T)]| v.iter().any(|&(_, m)| m > tol);
    let q_shape = match (significant(&up), significant(&down)) {
        (false, false) => Monotonicity::Constant,
        (true, false) => Monotonicity::Increasing,
        (false, true) => Monotonicity::Decreasing,
        (true, true) => Monotonicity::NonMonotone,
    };
    let direction_consistent = match direction {
        QDirection::Increasing => matches!(q_shape, Monotonicity::Increasing | Monotonicity::Constant),
        QDirection::Decreasing => matches!(q_shape, Monotonicity::Decreasing | Monotonicity::Constant),
        QDirection::Split => true,
    };
    let h1 = MixingMeasure::atoms(up)?;
    let h2 = MixingMeasure::atoms(down)?;
    let s1 = crate::decomp::mixture_split(&fit.fitted, x, &h1);
    let s2 = crate::decomp::mixture_split(&fit.fitted, x, &h2);
    // MCB_H + integral (F_Yhat - F_X) H = cov_term + mean_term, linear in H
    let signed = (s1.mcb - s1.integral_term) - (s2.mcb - s2.integral_term);
    let abc2_reconstructed = -signed / ybar;

    Ok(AbcMcbReconciliation {
        abc: report.abc,
        abc_reconstructed,
        abc_residual: (report.abc - abc_reconstructed).abs(),
        abc2: report.abc2,
        abc2_reconstructed,
        abc2_residual: (report.abc2 - abc2_reconstructed).abs(),
        q_shape,
        direction,
        direction_consistent,
        mcb_h1: s1.mcb,
        mcb_h2: s2.mcb,
    })
}
