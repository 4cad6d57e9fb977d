//! Murphy's decomposition `S = UNC - DSC + MCB` of an expected Bregman loss.

use serde::Serialize;

use crate::curves::{murphy_curve_columns, Curve};
use crate::error::Result;
use crate::losses::{mean_loss, score, ConvexGenerator, Loss, MixingMeasure};
use crate::sample::{recalibrate_with, PairedSample, Recalibration};
use crate::scalar::{mean, Scalar};

/// Uncertainty, discrimination and miscalibration of one predictor.
///
/// `dsc` is the predictor-only form `mean L(yhat_i, ybar)`; `mcb` is the
/// difference `S(Y, X) - S(Y, Yhat)`. The predictor-only miscalibration
/// `mean L(yhat_i, x_i)` is reported alongside. Both pairs coincide when the
/// recalibration is the exact level-set mean; isotonic blocks that pool
/// several distinct predictions leave a gap in the miscalibration pair, which
/// `mcb_gap` makes visible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionResult<T> {
    pub s: T,
    pub unc: T,
    pub dsc: T,
    pub mcb: T,
    pub s_alt: T,
    pub identity_residual: T,
    pub dsc_classic: T,
    pub mcb_predictor_form: T,
    pub mcb_gap: T,
    pub generator: String,
    pub recalibration: Recalibration,
}

impl<T: Scalar> DecompositionResult<T> {
    /// `UNC - S = DSC - MCB`; positive when the predictor beats the mean.
    pub fn skill(&self) -> T {
        self.unc - self.s
    }
}

/// Decomposition under isotonic recalibration.
pub fn murphy_decomposition<T: Scalar>(
    sample: &PairedSample<T>,
    gen: &ConvexGenerator<T>,
) -> Result<DecompositionResult<T>> {
    decompose(sample, gen, Recalibration::Pav)
}

/// Decomposition for any loss and recalibration method.
pub fn decompose<T: Scalar, L: Loss<T> + ?Sized>(
    sample: &PairedSample<T>,
    loss: &L,
    method: Recalibration,
) -> Result<DecompositionResult<T>> {
    let fit = recalibrate_with(sample, method)?;
    let yhat = &fit.fitted;
    let n = sample.len();
    let ybar = sample.mean_y();
    let ybar_col = vec![ybar; n];

    let s = score(sample, loss)?;
    let unc = mean_loss(sample.y(), &ybar_col, loss)?;
    let s_fit = mean_loss(sample.y(), yhat, loss)?;
    let dsc = mean_loss(yhat, &ybar_col, loss)?;
    let mcb_predictor_form = mean_loss(yhat, sample.x(), loss)?;
    let dsc_classic = unc - s_fit;
    let mcb = s - s_fit;
    let s_alt = unc - dsc + mcb;
    Ok(DecompositionResult {
        s,
        unc,
        dsc,
        mcb,
        s_alt,
        identity_residual: (s - s_alt).abs(),
        dsc_classic,
        mcb_predictor_form,
        mcb_gap: mcb - mcb_predictor_form,
        generator: loss.label(),
        recalibration: method,
    })
}

/// `UNC - S`, equal to `DSC - MCB`.
pub fn skill_score<T: Scalar>(sample: &PairedSample<T>, gen: &ConvexGenerator<T>) -> Result<T> {
    let ybar = vec![sample.mean_y(); sample.len()];
    Ok(mean_loss(sample.y(), &ybar, gen)? - score(sample, gen)?)
}

/// Squared-loss miscalibration `mean (yhat_i - x_i)^2` under isotonic recalibration.
pub fn mcb_mse<T: Scalar>(sample: &PairedSample<T>) -> T {
    mcb_mse_with(sample, Recalibration::Pav).expect("isotonic recalibration cannot fail")
}

pub fn mcb_mse_with<T: Scalar>(sample: &PairedSample<T>, method: Recalibration) -> Result<T> {
    let fit = recalibrate_with(sample, method)?;
    Ok(mean(
        &fit.fitted.iter().zip(sample.x()).map(|(&a, &b)| (a - b) * (a - b)).collect::<Vec<_>>(),
    ))
}

/// Squared-loss discrimination: empirical variance of the recalibrated predictor.
pub fn dsc_mse<T: Scalar>(sample: &PairedSample<T>) -> T {
    let fit = recalibrate_with(sample, Recalibration::Pav).expect("isotonic recalibration cannot fail");
    let m = sample.mean_y();
    mean(&fit.fitted.iter().map(|&a| (a - m) * (a - m)).collect::<Vec<_>>())
}

/// Miscalibration for a mixture loss `L_H` and its split into a covariance
/// term and an integrated CDF difference.
///
/// `mcb = cov_term + integral_term + mean_term` holds exactly, where
/// `cov_term = Cov(X - Yhat, H(X-))`,
/// `integral_term = integral of (F_X - F_Yhat) H dtheta` and
/// `mean_term = mean(x - yhat) * mean(H(X-))`, which vanishes for a globally
/// unbiased predictor. The left limit `H(X-)` only matters when `H` has atoms
/// at sample values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureMcb<T> {
    pub mcb: T,
    pub cov_term: T,
    pub integral_term: T,
    pub mean_term: T,
}

impl<T: Scalar> MixtureMcb<T> {
    pub fn residual(&self) -> T {
        (self.mcb - self.cov_term - self.integral_term - self.mean_term).abs()
    }
}

pub fn mcb_via_mixture<T: Scalar>(sample: &PairedSample<T>, h: &MixingMeasure<T>) -> Result<MixtureMcb<T>> {
    mcb_via_mixture_with(sample, h, Recalibration::Pav)
}

pub fn mcb_via_mixture_with<T: Scalar>(
    sample: &PairedSample<T>,
    h: &MixingMeasure<T>,
    method: Recalibration,
) -> Result<MixtureMcb<T>> {
    let fit = recalibrate_with(sample, method)?;
    Ok(mixture_split(&fit.fitted, sample.x(), h))
}

/// The split of `mean L_H(yhat_i, x_i)` for explicit columns.
pub fn mixture_split<T: Scalar>(yhat: &[T], x: &[T], h: &MixingMeasure<T>) -> MixtureMcb<T> {
    let n = T::from_count(x.len());
    let mcb = yhat.iter().zip(x).map(|(&a, &b)| crate::losses::mixture_loss(h, a, b)).sum::<T>() / n;
    let hx: Vec<T> = x.iter().map(|&v| h.h_left(v)).collect();
    let diff: Vec<T> = x.iter().zip(yhat).map(|(&a, &b)| a - b).collect();
    let (md, mh) = (mean(&diff), mean(&hx));
    let cov_term = diff.iter().zip(&hx).map(|(&d, &g)| (d - md) * (g - mh)).sum::<T>() / n;
    let integral_term = yhat.iter().map(|&v| h.integral_h(v)).sum::<T>() / n
        - x.iter().map(|&v| h.integral_h(v)).sum::<T>() / n;
    MixtureMcb { mcb, cov_term, integral_term, mean_term: md * mh }
}

/// Murphy curves of the three components and of the total loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MurphyDecompositionCurves<T> {
    pub score: Curve<T>,
    pub unc: Curve<T>,
    pub dsc: Curve<T>,
    pub mcb: Curve<T>,
    /// `max |score - (unc - dsc + mcb)|` over the grid.
    pub max_residual: T,
}

pub fn murphy_decomposition_curves<T: Scalar>(
    sample: &PairedSample<T>,
    grid: &[T],
    method: Recalibration,
) -> Result<MurphyDecompositionCurves<T>> {
    let fit = recalibrate_with(sample, method)?;
    let ybar = vec![sample.mean_y(); sample.len()];
    let score = murphy_curve_columns(sample.y(), sample.x(), grid)?;
    let unc = murphy_curve_columns(sample.y(), &ybar, grid)?;
    let dsc = murphy_curve_columns(&fit.fitted, &ybar, grid)?;
    let mcb = murphy_curve_columns(&fit.fitted, sample.x(), grid)?;
    let max_residual = (0..grid.len())
        .map(|i| (score.values()[i] - (unc.values()[i] - dsc.values()[i] + mcb.values()[i])).abs())
        .fold(T::zero(), |a, b| a.max(b));
    Ok(MurphyDecompositionCurves { score, unc, dsc, mcb, max_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::theta_grid;
    use crate::integrate::simpson_pieces;
    use crate::losses::elementary_loss;
    use crate::sample::recalibrate;
    use proptest::prelude::*;

    fn sq() -> ConvexGenerator<f64> {
        ConvexGenerator::squared()
    }

    #[test]
    fn constant_predictor_has_no_dsc_or_mcb() {
        let y: Vec<f64> = vec![1.0, 4.0, 2.0, 5.0];
        let s = PairedSample::new(y, vec![3.0; 4]).unwrap();
        for p in [0.0, 1.0, 2.0, 3.0] {
            let d = murphy_decomposition(&s, &ConvexGenerator::tweedie(p)).unwrap();
            assert!(d.dsc.abs() < 1e-15 && d.mcb.abs() < 1e-15);
            assert!((d.s - d.unc).abs() < 1e-15);
        }
    }

    #[test]
    fn calibrated_predictor_has_no_mcb() {
        let s = PairedSample::<f64>::new(vec![1.0, 3.0, 2.0, 6.0, 5.0], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let cal = s.recalibrated(Recalibration::Pav).unwrap();
        let d = murphy_decomposition(&cal, &sq()).unwrap();
        assert!(d.mcb.abs() < 1e-15 && d.mcb_predictor_form.abs() < 1e-15);
        assert!((d.skill() - d.dsc).abs() < 1e-15 && d.dsc > 0.0);
    }

    #[test]
    fn squared_loss_variance_identity() {
        let y = vec![0.5, 2.0, 1.0, 4.0, 3.5, 2.5];
        let x = vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
        let s = PairedSample::new(y.clone(), x.clone()).unwrap();
        let d = murphy_decomposition(&s, &sq()).unwrap();
        let yhat = recalibrate(&s).fitted;
        let m = mean(&y);
        let var_y = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 6.0;
        let var_hat = yhat.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 6.0;
        let mse_hat = yhat.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 6.0;
        assert!((d.unc - var_y).abs() < 1e-14);
        assert!((d.dsc - var_hat).abs() < 1e-14 && (dsc_mse(&s) - var_hat).abs() < 1e-14);
        assert!((mcb_mse(&s) - mse_hat).abs() < 1e-14);
        // x is strictly increasing and each PAV block here is level-pure after pooling
        assert!((d.s - (var_y - var_hat + d.mcb)).abs() < 1e-14);
        assert!(d.identity_residual < 1e-14);
        assert!((skill_score(&s, &sq()).unwrap() - (d.dsc - d.mcb)).abs() < 1e-14);
    }

    #[test]
    fn level_set_recalibration_makes_both_forms_agree() {
        let s = PairedSample::<f64>::new(
            vec![1.0, 3.0, 2.0, 6.0, 5.0, 0.5, 2.5],
            vec![2.0, 2.0, 3.0, 3.0, 1.0, 1.0, 3.0],
        )
        .unwrap();
        for p in [0.0, 1.0, 2.0, 3.0] {
            let d = decompose(&s, &ConvexGenerator::tweedie(p), Recalibration::LevelSets).unwrap();
            assert!(d.mcb_gap.abs() < 1e-13, "p={p}: {}", d.mcb_gap);
            assert!((d.dsc - d.dsc_classic).abs() < 1e-13);
        }
    }

    #[test]
    fn pooled_blocks_leave_a_gap_in_the_predictor_form() {
        let s = PairedSample::<f64>::new(vec![3.0, 1.0], vec![1.0, 2.0]).unwrap();
        let d = murphy_decomposition(&s, &sq()).unwrap();
        // yhat = (2, 2): S = 2.5, S(Y, Yhat) = 1, mean (yhat - x)^2 = 0.5
        assert!((d.mcb - 1.5).abs() < 1e-15);
        assert!((d.mcb_predictor_form - 0.5).abs() < 1e-15);
        assert!(d.identity_residual < 1e-15);
    }

    #[test]
    fn mixture_split_examples() {
        let s = PairedSample::<f64>::new(vec![1.0, 3.0, 2.0, 6.0, 5.0], vec![1.2, 2.0, 3.1, 4.0, 4.7]).unwrap();
        let lin = MixingMeasure::linear(2.0).unwrap();
        let m = mcb_via_mixture(&s, &lin).unwrap();
        assert!((m.mcb - mcb_mse(&s)).abs() < 1e-12);
        assert!(m.residual() < 1e-12);
        let cal = s.recalibrated(Recalibration::Pav).unwrap();
        let m = mcb_via_mixture(&cal, &MixingMeasure::empirical_cdf(cal.x()).unwrap()).unwrap();
        assert!(m.mcb.abs() < 1e-15 && m.cov_term.abs() < 1e-15 && m.integral_term.abs() < 1e-15);
    }

    #[test]
    fn integral_term_matches_quadrature() {
        let s = PairedSample::<f64>::new(vec![1.0, 3.0, 2.0, 6.0, 5.0, 0.2], vec![1.2, 2.0, 3.1, 4.0, 4.7, 0.5]).unwrap();
        let fit = recalibrate(&s).fitted;
        let h = MixingMeasure::<f64>::piecewise_linear(vec![(0.0, 0.0), (2.0, 1.0), (3.0, 3.0), (5.0, 3.5)]).unwrap();
        let m = mixture_split(&fit, s.x(), &h);
        let fx = crate::sample::EmpiricalDistribution::new(s.x()).unwrap();
        let fy = crate::sample::EmpiricalDistribution::new(&fit).unwrap();
        let mut br: Vec<f64> = s.x().iter().chain(&fit).copied().chain([0.0, 2.0, 3.0, 5.0, 8.0]).collect();
        br.sort_by(|a, b| a.partial_cmp(b).unwrap());
        br.dedup();
        let quad = simpson_pieces(|t| (fx.cdf(t) - fy.cdf(t)) * h.h(t), &br, 1e-13);
        assert!((m.integral_term - quad).abs() < 1e-9);
    }

    fn positive_sample() -> impl Strategy<Value = PairedSample<f64>> {
        (2usize..60).prop_flat_map(|n| {
            (prop::collection::vec(0.05f64..20.0, n), prop::collection::vec(0.05f64..20.0, n))
                .prop_map(|(y, x)| PairedSample::new(y, x).unwrap())
        })
    }

    fn discrete_sample() -> impl Strategy<Value = PairedSample<f64>> {
        (2usize..60).prop_flat_map(|n| {
            (prop::collection::vec(0.05f64..20.0, n), prop::collection::vec(1u8..8, n))
                .prop_map(|(y, x)| PairedSample::new(y, x.into_iter().map(f64::from).collect()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn identity_and_signs(s in positive_sample(), atoms in prop::collection::vec((0.0f64..20.0, 0.1f64..2.0), 1..5)) {
            let h = MixingMeasure::atoms(atoms).unwrap();
            let mut losses: Vec<Box<dyn Loss<f64>>> =
                [0.0, 1.0, 2.0, 3.0].iter().map(|&p| Box::new(ConvexGenerator::tweedie(p)) as Box<dyn Loss<f64>>).collect();
            losses.push(Box::new(h));
            for l in &losses {
                let d = decompose(&s, l.as_ref(), Recalibration::Pav).unwrap();
                prop_assert!(d.identity_residual <= 1e-10 * d.s.abs().max(1.0));
                prop_assert!(d.dsc >= -1e-12 && d.mcb >= -1e-12);
                prop_assert!((d.dsc - d.dsc_classic).abs() <= 1e-10 * d.s.abs().max(1.0));
            }
        }

        #[test]
        fn curve_decomposition_exact_on_level_sets(s in discrete_sample()) {
            let g = theta_grid(&[s.y(), s.x()], 32);
            let c = murphy_decomposition_curves(&s, &g, Recalibration::LevelSets).unwrap();
            prop_assert!(c.max_residual < 1e-10);
        }

        #[test]
        fn curve_decomposition_exact_off_pooled_blocks(s in positive_sample()) {
            let g = theta_grid(&[s.y(), s.x()], 32);
            let fit = recalibrate(&s);
            let c = murphy_decomposition_curves(&s, &g, Recalibration::Pav).unwrap();
            for (i, &t) in g.iter().enumerate() {
                let inside = fit.blocks.iter().any(|b| b.x_lo <= t && t < b.x_hi);
                if !inside {
                    let r = c.score.values()[i] - (c.unc.values()[i] - c.dsc.values()[i] + c.mcb.values()[i]);
                    prop_assert!(r.abs() < 1e-10);
                }
            }
        }

        #[test]
        fn curves_integrate_to_scalar_components(s in discrete_sample(), atoms in prop::collection::vec((0.0f64..20.0, 0.1f64..2.0), 1..5)) {
            let h = MixingMeasure::atoms(atoms.clone()).unwrap();
            let thetas: Vec<f64> = {
                let mut t: Vec<f64> = atoms.iter().map(|a| a.0).collect();
                t.sort_by(|a, b| a.partial_cmp(b).unwrap());
                t.dedup();
                t
            };
            let c = murphy_decomposition_curves(&s, &thetas, Recalibration::LevelSets).unwrap();
            let mass = |t: f64| atoms.iter().filter(|a| a.0 == t).map(|a| a.1).sum::<f64>();
            let integrate = |cv: &Curve<f64>| thetas.iter().zip(cv.values()).map(|(&t, &v)| mass(t) * v).sum::<f64>();
            let d = decompose(&s, &h, Recalibration::LevelSets).unwrap();
            prop_assert!((integrate(&c.unc) - d.unc).abs() < 1e-10);
            prop_assert!((integrate(&c.dsc) - d.dsc).abs() < 1e-10);
            prop_assert!((integrate(&c.mcb) - d.mcb_predictor_form).abs() < 1e-10);
            prop_assert!((integrate(&c.score) - d.s).abs() < 1e-10);
        }

        #[test]
        fn murphy_order_implies_score_order(
            s in positive_sample(),
            hs in prop::collection::vec(prop::collection::vec((0.0f64..22.0, 0.01f64..2.0), 1..6), 100),
        ) {
            // the isotonic fit beats every other monotone function of x at each theta
            let s1 = s.with_predictor(recalibrate(&s).fitted).unwrap();
            let s2 = s.with_predictor(s.x().iter().map(|v| v.sqrt() * 3.0).collect()).unwrap();
            let g = theta_grid(&[s1.y(), s1.x(), s2.x()], 8);
            let m1 = crate::curves::murphy_curve(&s1, &g).unwrap();
            let m2 = crate::curves::murphy_curve(&s2, &g).unwrap();
            let l1 = crate::curves::murphy_curve_left_limits(s1.y(), s1.x(), &g).unwrap();
            let l2 = crate::curves::murphy_curve_left_limits(s2.y(), s2.x(), &g).unwrap();
            // curves are linear between knots, so knots and their left limits decide
            let dominated = m1.values().iter().zip(m2.values()).all(|(a, b)| *a <= *b + 1e-12)
                && l1.values().iter().zip(l2.values()).all(|(a, b)| *a <= *b + 1e-12);
            prop_assert!(dominated);
            for atoms in hs {
                let h = MixingMeasure::atoms(atoms).unwrap();
                prop_assert!(score(&s1, &h).unwrap() <= score(&s2, &h).unwrap() + 1e-10);
            }
        }
    }

    #[test]
    fn elementary_loss_is_right_continuous_in_theta() {
        assert_eq!(elementary_loss(2.0, 5.0, 2.0), 3.0);
    }
}
