//! Adaptive quadrature used to cross-check closed forms.
//!
//! Everything else in the crate integrates step and piecewise-linear
//! functions exactly on their knots; this module is for smooth analytic
//! integrands (scenario oracles) and for tests.

const MAX_DEPTH: u32 = 32;
/// Forced subdivisions before the error estimate is trusted; a coarse
/// five-point rule can agree with itself by accident on oscillating integrands.
const MIN_DEPTH: u32 = 4;

fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || (depth >= MIN_DEPTH && delta.abs() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 0)
}

/// Integrates over consecutive pieces `[breaks[i], breaks[i+1]]`, so that
/// kinks and jumps placed at break points cost nothing. Endpoint values are
/// taken from just inside each piece, so a jump at a break is never sampled
/// from the wrong side.
pub fn simpson_pieces<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: f64) -> f64 {
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    breaks
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            if a == b {
                return 0.0;
            }
            let h = (b - a) * 4.0 * f64::EPSILON;
            let m = 0.5 * (a + b);
            let (fa, fm, fb) = (f(a + h), f(m), f(b - h));
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(&f, a, b, fa, fm, fb, whole, tol / pieces, 0)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_exponentials() {
        assert!((simpson(|x| x * x, 0.0, 3.0, 1e-12) - 9.0).abs() < 1e-12);
        let e = simpson(f64::exp, 0.0, 1.0, 1e-13);
        assert!((e - (std::f64::consts::E - 1.0)).abs() < 1e-12);
        let kink = simpson_pieces(|x: f64| (x - 1.0).abs(), &[0.0, 1.0, 3.0], 1e-12);
        assert!((kink - 2.5).abs() < 1e-12);
        // right-continuous step: 0 on [0, 1), 2 on [1, 3)
        let step = simpson_pieces(|x: f64| if (1.0..3.0).contains(&x) { 2.0 } else { 0.0 }, &[0.0, 1.0, 3.0, 4.0], 1e-12);
        assert!((step - 4.0).abs() < 1e-12, "{step}");
    }
}
