use murphy_core::curves::{lorenz_curve, murphy_curve, probability_grid, theta_grid};
use murphy_core::stats::{abc, gini};
use murphy_core::{decompose, mixture_loss, score, ConvexGenerator, MixingMeasure, PairedSample, Recalibration};
use proptest::prelude::*;

fn column(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..10.0, 0.01f64..10.0), 2..len)
}

#[test]
fn single_precision_decomposition() {
    let y: Vec<f32> = vec![0.0, 1.0, 2.5, 0.5, 3.0, 1.5, 2.0, 0.25];
    let x: Vec<f32> = vec![0.5, 1.2, 2.0, 0.7, 2.2, 1.0, 2.4, 0.4];
    let s = PairedSample::new(y, x).unwrap();
    let d = decompose(&s, &ConvexGenerator::<f32>::squared(), Recalibration::Pav).unwrap();
    assert!(d.identity_residual <= 1e-5, "{d:?}");
    assert!(d.dsc >= -1e-6 && d.mcb >= -1e-6);
    let g = gini(s.x()).unwrap();
    assert!(g.max_discrepancy <= 1e-5);
    let r = abc(&s.balanced().unwrap()).unwrap();
    assert!((r.abc - r.abc_from_curves).abs() <= 1e-5);
}

#[test]
fn single_and_double_precision_agree() {
    let y64 = [0.3, 1.9, 0.1, 4.2, 2.2, 0.8];
    let x64 = [0.6, 1.5, 0.2, 3.1, 2.8, 0.9];
    let s64 = PairedSample::new(y64.to_vec(), x64.to_vec()).unwrap();
    let s32 = PairedSample::new(y64.map(|v| v as f32).to_vec(), x64.map(|v| v as f32).to_vec()).unwrap();
    for p in [0.0, 1.0, 1.5, 2.0] {
        let a = score(&s64, &ConvexGenerator::tweedie(p)).unwrap();
        let b = score(&s32, &ConvexGenerator::tweedie(p as f32)).unwrap();
        assert!((a - f64::from(b)).abs() <= 1e-5 * a.max(1.0), "p={p}: {a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // elementary scores are non-negative and vanish above every y and x
    #[test]
    fn murphy_curve_is_nonnegative_with_bounded_support(rows in column(40)) {
        let (y, x): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let s = PairedSample::new(y, x).unwrap();
        let grid = theta_grid(&[s.y(), s.x()], 16);
        let top = s.y().iter().chain(s.x()).fold(0.0f64, |a, &b| a.max(b));
        let m = murphy_curve(&s, &grid).unwrap();
        for (t, v) in m.grid().iter().zip(m.values()) {
            prop_assert!(*v >= -1e-12);
            if *t >= top {
                prop_assert!(v.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn linear_measure_is_half_squared_loss(y in 0.0f64..10.0, x in 0.0f64..10.0, c in 0.1f64..5.0) {
        let h = MixingMeasure::linear(c).unwrap();
        let l = mixture_loss(&h, y, x);
        prop_assert!((l - 0.5 * c * (y - x) * (y - x)).abs() <= 1e-9 * (1.0 + l));
    }

    #[test]
    fn lorenz_curve_is_convex_and_below_diagonal(rows in column(60)) {
        let x: Vec<f64> = rows.into_iter().map(|r| r.1).collect();
        let grid: Vec<f64> = probability_grid(33);
        let lc = lorenz_curve(&x, &grid).unwrap();
        for (p, v) in lc.grid().iter().zip(lc.values()) {
            prop_assert!(*v <= p + 1e-12);
        }
        for w in lc.values().windows(3) {
            prop_assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-12);
        }
    }
}
