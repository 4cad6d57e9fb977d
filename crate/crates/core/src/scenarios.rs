//! Closed-form models with known answers: latent-uniform predictors, shifted
//! log-normal predictors and a weighted-score counterexample.
//!
//! Each model comes with analytic oracles, a quadrature path over the
//! generating density for cross-checking them, and a seeded sampler. Samplers
//! draw in fixed shards of [`SHARD`] rows, each shard on its own ChaCha
//! stream, so the output depends only on `(seed, n)`.

use std::f64::consts::PI;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::curves::{crossings_exact, Axis, CrossingReport, Curve};
use crate::error::{Error, Result};
use crate::integrate::{simpson, simpson_pieces};
use crate::losses::ConvexGenerator;
use crate::sample::PairedSample;

/// Rows per sampling shard.
pub const SHARD: usize = 1 << 16;

/// Fills `n` rows shard by shard; `draw` produces one row from the shard's RNG.
fn sharded<R>(n: usize, seed: u64, mut draw: impl FnMut(&mut ChaCha8Rng) -> R) -> Vec<R> {
    let mut out = Vec::with_capacity(n);
    let mut shard = 0u64;
    while out.len() < n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(shard);
        let take = SHARD.min(n - out.len());
        out.extend((0..take).map(|_| draw(&mut rng)));
        shard += 1;
    }
    out
}

fn std_normal() -> Normal {
    Normal::standard()
}

fn phi_density(w: f64) -> f64 {
    (-0.5 * w * w).exp() / (2.0 * PI).sqrt()
}

// ---------------------------------------------------------------------------
// latent uniform

/// `Z ~ Unif(0, 1)`, `E[Y | Z] = Z`, with predictors
/// `X1 = (1 - b) / 2 + b Z` and `X2 = Z + q cos(2 pi Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatentUniformScenario {
    pub b: f64,
    pub q: f64,
}

/// Closed-form miscalibration statistics of the two latent predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatentOracles {
    pub abc1: f64,
    pub abc2: f64,
    pub abc_sq1: f64,
    pub abc_sq2: f64,
    pub mcb1: f64,
    pub mcb2: f64,
}

impl LatentOracles {
    pub fn max_relative_gap(&self, other: &Self) -> f64 {
        let pairs = [
            (self.abc1, other.abc1),
            (self.abc2, other.abc2),
            (self.abc_sq1, other.abc_sq1),
            (self.abc_sq2, other.abc_sq2),
            (self.mcb1, other.mcb1),
            (self.mcb2, other.mcb2),
        ];
        pairs
            .iter()
            .map(|&(a, b)| {
                let s = a.abs().max(b.abs());
                if s < 1e-300 {
                    0.0
                } else if a.abs() < 1e-14 || b.abs() < 1e-14 {
                    // a zero oracle has no relative scale
                    (a - b).abs()
                } else {
                    (a - b).abs() / s
                }
            })
            .fold(0.0, f64::max)
    }
}

/// How the response scatters around `E[Y | Z] = Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoiseLaw {
    /// `Y = Z + e`, `e ~ Unif(-m, m)` with `m = min(Z, 1 - Z)`.
    UniformBand,
    /// `Y ~ Bernoulli(Z)`.
    Bernoulli,
}

/// Rows drawn from a latent scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDraw {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl LatentDraw {
    pub fn first(&self) -> Result<PairedSample<f64>> {
        PairedSample::new(self.y.clone(), self.x1.clone())
    }

    pub fn second(&self) -> Result<PairedSample<f64>> {
        PairedSample::new(self.y.clone(), self.x2.clone())
    }
}

impl LatentUniformScenario {
    pub fn new(b: f64, q: f64) -> Result<Self> {
        if !(b > 0.0 && b <= 1.0) {
            return Err(Error::InvalidParameter(format!("slope b = {b} outside (0, 1]")));
        }
        if !(q > 0.0 && q < 1.0 / (2.0 * PI)) {
            return Err(Error::InvalidParameter(format!("amplitude q = {q} outside (0, 1/(2 pi))")));
        }
        Ok(Self { b, q })
    }

    /// The pair used for the ranking counterexample.
    pub fn reference() -> Self {
        Self { b: 0.9, q: 0.07 }
    }

    pub fn x1(&self, z: f64) -> f64 {
        0.5 * (1.0 - self.b) + self.b * z
    }

    pub fn x2(&self, z: f64) -> f64 {
        z + self.q * (2.0 * PI * z).cos()
    }

    /// `E[Y | X1] - X1` as a function of `Z`.
    pub fn bias1(&self, z: f64) -> f64 {
        (1.0 - self.b) * (z - 0.5)
    }

    pub fn bias2(&self, z: f64) -> f64 {
        -self.q * (2.0 * PI * z).cos()
    }

    pub fn lorenz1(&self, p: f64) -> f64 {
        (1.0 - self.b) * p + self.b * p * p
    }

    pub fn lorenz2(&self, p: f64) -> f64 {
        p * p + self.q * (2.0 * PI * p).sin() / PI
    }

    /// Concentration curve, the same for both predictors.
    pub fn concentration(&self, p: f64) -> f64 {
        p * p
    }

    pub fn q1(&self, z: f64) -> f64 {
        2.0 * (1.0 - self.b) * (-1.0 / 12.0 + z * z / 4.0 - z * z * z / 6.0)
    }

    pub fn q2(&self, z: f64) -> f64 {
        -2.0 * self.q * ((2.0 * PI * z).cos() - 1.0) / (4.0 * PI * PI)
    }

    /// Both curves of one predictor on `grid`.
    pub fn curves(&self, which: usize, grid: &[f64]) -> Result<(Curve<f64>, Curve<f64>)> {
        let lc: Vec<f64> = match which {
            1 => grid.iter().map(|&p| self.lorenz1(p)).collect(),
            2 => grid.iter().map(|&p| self.lorenz2(p)).collect(),
            _ => return Err(Error::InvalidParameter(format!("predictor {which} does not exist"))),
        };
        let cc = grid.iter().map(|&p| self.concentration(p)).collect();
        Ok((Curve::new(Axis::Probability, grid.to_vec(), lc)?, Curve::new(Axis::Probability, grid.to_vec(), cc)?))
    }

    pub fn sample(&self, n: usize, seed: u64, noise: NoiseLaw) -> LatentDraw {
        let rows = sharded(n, seed, |rng| {
            let z: f64 = rng.random();
            let y = match noise {
                NoiseLaw::UniformBand => {
                    let m = z.min(1.0 - z);
                    z + m * (2.0 * rng.random::<f64>() - 1.0)
                }
                NoiseLaw::Bernoulli => f64::from(u8::from(rng.random::<f64>() < z)),
            };
            (z, y)
        });
        let (z, y): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let x1 = z.iter().map(|&v| self.x1(v)).collect();
        let x2 = z.iter().map(|&v| self.x2(v)).collect();
        LatentDraw { z, y, x1, x2 }
    }
}

pub fn latent_oracles(s: &LatentUniformScenario) -> LatentOracles {
    let (b, q) = (s.b, s.q);
    LatentOracles {
        abc1: (1.0 - b) / 6.0,
        abc2: 0.0,
        abc_sq1: (1.0 - b).powi(2) / 30.0,
        abc_sq2: q * q / (2.0 * PI * PI),
        mcb1: (1.0 - b).powi(2) / 12.0,
        mcb2: q * q / 2.0,
    }
}

/// The same statistics by quadrature of their defining integrals: Lorenz
/// curves from the quantile function, ABC and ABC² as integrals of the curve
/// gap, MCB as the mean squared bias.
pub fn latent_quadrature(s: &LatentUniformScenario) -> LatentOracles {
    let tol = 1e-14;
    // E[X] = E[Z] = 1/2
    let lc = |x: &dyn Fn(f64) -> f64, p: f64| 2.0 * simpson(x, 0.0, p, tol);
    let cc = |p: f64| 2.0 * simpson(|z| z, 0.0, p, tol);
    let x1 = |z: f64| s.x1(z);
    let x2 = |z: f64| s.x2(z);
    let gap1 = |p: f64| lc(&x1, p) - cc(p);
    let gap2 = |p: f64| lc(&x2, p) - cc(p);
    let halves = [0.0, 0.25, 0.5, 0.75, 1.0];
    LatentOracles {
        abc1: simpson_pieces(gap1, &halves, tol),
        abc2: simpson_pieces(gap2, &halves, tol),
        abc_sq1: simpson_pieces(|p| gap1(p).powi(2), &halves, tol),
        abc_sq2: simpson_pieces(|p| gap2(p).powi(2), &halves, tol),
        mcb1: simpson(|z| s.bias1(z).powi(2), 0.0, 1.0, tol),
        mcb2: simpson_pieces(|z| s.bias2(z).powi(2), &halves, tol),
    }
}

/// `Q(z) = E[(E[Y|X] - X)(1 - max(F(X), z))] / E[Y]` by quadrature, for
/// checking the closed forms [`LatentUniformScenario::q1`] and `q2`.
pub fn latent_q_quadrature(bias: impl Fn(f64) -> f64, z: f64) -> f64 {
    let f = |u: f64| bias(u) * (1.0 - u.max(z));
    2.0 * simpson_pieces(f, &[0.0, z, 1.0], 1e-14)
}

// ---------------------------------------------------------------------------
// shifted log-normal

/// `X = a + exp(mu + sigma W)` with `W` standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftedLogNormalSpec {
    pub a: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogNormalOracles {
    pub mean: f64,
    pub var: f64,
    pub gini: f64,
}

impl ShiftedLogNormalSpec {
    pub fn new(a: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !(a >= 0.0 && sigma > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("log-normal a = {a}, mu = {mu}, sigma = {sigma}")));
        }
        Ok(Self { a, mu, sigma })
    }

    /// Solves `mu` so that the mean equals `mean`.
    pub fn with_mean(a: f64, sigma: f64, mean: f64) -> Result<Self> {
        if !(mean > a) {
            return Err(Error::InvalidParameter(format!("mean {mean} must exceed the shift {a}")));
        }
        Self::new(a, (mean - a).ln() - 0.5 * sigma * sigma, sigma)
    }

    /// `E exp(mu + sigma W)`.
    fn scale(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    pub fn mean(&self) -> f64 {
        self.a + self.scale()
    }

    pub fn var(&self) -> f64 {
        self.scale().powi(2) * ((self.sigma * self.sigma).exp() - 1.0)
    }

    pub fn gini(&self) -> f64 {
        let n = std_normal();
        self.scale() / self.mean() * (2.0 * n.cdf(self.sigma / 2f64.sqrt()) - 1.0)
    }

    pub fn oracles(&self) -> LogNormalOracles {
        LogNormalOracles { mean: self.mean(), var: self.var(), gini: self.gini() }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= self.a {
            return 0.0;
        }
        std_normal().cdf(((t - self.a).ln() - self.mu) / self.sigma)
    }

    pub fn lorenz(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        let n = std_normal();
        (self.a * p + self.scale() * n.cdf(n.inverse_cdf(p) - self.sigma)) / self.mean()
    }

    /// `E (X - t)^+`.
    pub fn stop_loss(&self, t: f64) -> f64 {
        let c = t - self.a;
        if c <= 0.0 {
            return self.mean() - t;
        }
        let n = std_normal();
        let d = (self.mu - c.ln()) / self.sigma;
        self.scale() * n.cdf(d + self.sigma) - c * n.cdf(d)
    }

    /// `E ((X - t)^+)^2`.
    pub fn second_stop_loss(&self, t: f64) -> f64 {
        let c = t - self.a;
        if c <= 0.0 {
            return self.var() + (self.mean() - t).powi(2);
        }
        let n = std_normal();
        let s = self.sigma;
        let d = (self.mu - c.ln()) / s;
        (2.0 * self.mu + 2.0 * s * s).exp() * n.cdf(d + 2.0 * s) - 2.0 * c * self.scale() * n.cdf(d + s)
            + c * c * n.cdf(d)
    }

    /// Murphy curve of the predictor against its own mean,
    /// `E(X - t)^+ - (E X - t)^+`; zero below the shift.
    pub fn murphy_disc(&self, t: f64) -> f64 {
        (self.stop_loss(t) - (self.mean() - t).max(0.0)).max(0.0)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        self.a + (self.mu + self.sigma * std_normal().inverse_cdf(u)).exp()
    }

    /// Integration window for `W` carrying all but a negligible share of
    /// `E X^2`.
    fn w_window(&self) -> (f64, f64) {
        (-12.0, 12.0 + 2.0 * self.sigma)
    }

    fn x_of_w(&self, w: f64) -> f64 {
        self.a + (self.mu + self.sigma * w).exp()
    }

    /// `E g(X)` by quadrature over the normal density.
    pub fn expect(&self, g: impl Fn(f64) -> f64, tol: f64) -> f64 {
        let (lo, hi) = self.w_window();
        let peak = 2.0 * self.sigma;
        let breaks = [lo, -4.0, 0.0, self.sigma, peak, peak + 4.0, hi];
        let mut b: Vec<f64> = breaks.to_vec();
        b.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
        b.dedup();
        simpson_pieces(|w| g(self.x_of_w(w)) * phi_density(w), &b, tol)
    }

    /// Mean, variance and Gini by quadrature.
    pub fn quadrature(&self) -> LogNormalOracles {
        let tol = 1e-12;
        let mean = self.expect(|x| x, tol);
        let var = self.expect(|x| (x - mean).powi(2), tol * self.var().max(1.0));
        let (lo, hi) = self.w_window();
        let n = std_normal();
        // Gini = int F (1 - F) dx / mean, with x = a + exp(mu + sigma w)
        let g = simpson_pieces(
            |w| {
                let f = n.cdf(w);
                f * (1.0 - f) * self.sigma * (self.mu + self.sigma * w).exp()
            },
            &[lo, -4.0, 0.0, 4.0, hi],
            tol,
        ) / mean;
        LogNormalOracles { mean, var, gini: g }
    }

    pub fn lorenz_quadrature(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let top = std_normal().inverse_cdf(p.min(1.0 - 1e-16));
        let (lo, _) = self.w_window();
        simpson(|w| self.x_of_w(w) * phi_density(w), lo, top.max(lo), 1e-14) / self.mean()
    }

    pub fn stop_loss_quadrature(&self, t: f64) -> f64 {
        self.expect(|x| (x - t).max(0.0), 1e-12)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        sharded(n, seed, |rng| {
            let w: f64 = StandardNormal.sample(rng);
            self.x_of_w(w)
        })
    }
}

/// The pair `a = 7.5, sigma = 2` and `a = 5, sigma = 1`, both with mean 10:
/// the first has the larger variance but the smaller Gini index.
pub fn example5() -> (ShiftedLogNormalSpec, ShiftedLogNormalSpec) {
    (
        ShiftedLogNormalSpec::with_mean(7.5, 2.0, 10.0).expect("valid constants"),
        ShiftedLogNormalSpec::with_mean(5.0, 1.0, 10.0).expect("valid constants"),
    )
}

/// Two independent log-normal predictors with a common response
/// `Y = X1 + X2 - mean`, so that `E[Y | X1] = X1` and `E[Y | X2] = X2`.
/// Both samples carry the calibration flag.
pub fn sample_lognormal_pair(
    s1: &ShiftedLogNormalSpec,
    s2: &ShiftedLogNormalSpec,
    n: usize,
    seed: u64,
) -> Result<(PairedSample<f64>, PairedSample<f64>)> {
    let m = s1.mean();
    if (m - s2.mean()).abs() > 1e-9 * m.abs().max(1.0) {
        return Err(Error::MeanMismatch(m, s2.mean()));
    }
    let x1 = s1.sample(n, seed);
    let x2 = s2.sample(n, seed ^ 0x9e37_79b9_7f4a_7c15);
    // min Y = a1 + a2 - m may be negative; clamp keeps the column valid and
    // is inactive whenever a1 + a2 >= m
    let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| (a + b - m).max(0.0)).collect();
    Ok((
        PairedSample::new(y.clone(), x1)?.assume_calibrated(),
        PairedSample::new(y, x2)?.assume_calibrated(),
    ))
}

/// Analytic doubly integrated CDF differences of two log-normal predictors:
/// `lower(u) = (E((u - X2)^+)^2 - E((u - X1)^+)^2) / 2` and
/// `upper(u) = (E((X1 - u)^+)^2 - E((X2 - u)^+)^2) / 2`.
pub fn lognormal_third_degree(s1: &ShiftedLogNormalSpec, s2: &ShiftedLogNormalSpec, u: f64) -> (f64, f64) {
    let upper = 0.5 * (s1.second_stop_loss(u) - s2.second_stop_loss(u));
    // E(u - X)^2 = Var + (u - mean)^2 splits into the two one-sided parts
    let low = |s: &ShiftedLogNormalSpec| s.var() + (u - s.mean()).powi(2) - s.second_stop_loss(u);
    let lower = 0.5 * (low(s2) - low(s1));
    (lower, upper)
}

/// Sign-change counts of the analytic CDF, Lorenz and Murphy differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticCrossings {
    pub cdf: CrossingReport<f64>,
    pub lorenz: CrossingReport<f64>,
    /// `M(Y, X1) - M(Y, X2) = E(X2 - t)^+ - E(X1 - t)^+` for a common response.
    pub murphy: CrossingReport<f64>,
}

pub fn lognormal_crossings(s1: &ShiftedLogNormalSpec, s2: &ShiftedLogNormalSpec, points: usize) -> Result<AnalyticCrossings> {
    let points = points.max(3);
    let top = s1.quantile(1.0 - 1e-6).max(s2.quantile(1.0 - 1e-6));
    let theta: Vec<f64> = (0..points).map(|i| top * i as f64 / (points - 1) as f64).collect();
    let probs: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let tol = 1e-12;
    let cdf: Vec<f64> = theta.iter().map(|&t| s1.cdf(t) - s2.cdf(t)).collect();
    let lor: Vec<f64> = probs.iter().map(|&p| s1.lorenz(p) - s2.lorenz(p)).collect();
    let mur: Vec<f64> = theta.iter().map(|&t| s2.stop_loss(t) - s1.stop_loss(t)).collect();
    Ok(AnalyticCrossings {
        cdf: crossings_exact(&theta, &cdf, tol),
        lorenz: crossings_exact(&probs, &lor, tol),
        murphy: crossings_exact(&theta, &mur, tol * s1.mean()),
    })
}

/// One point of the discrimination ratio across Tweedie powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DscRatioPoint {
    pub p: f64,
    pub dsc1: f64,
    pub dsc2: f64,
    pub ratio: f64,
    /// Ratio from quadrature over the log-normal densities.
    pub oracle_ratio: f64,
    /// `ratio > 1` is expected here (`p < 2`); reported only otherwise.
    pub asserted: bool,
}

/// `DSC_phi(Y, X) = mean phi(x) - phi(mean x)` for a calibrated predictor.
pub fn dsc_calibrated(gen: &ConvexGenerator<f64>, x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|&v| gen.phi(v)).sum::<f64>() / x.len() as f64 - gen.phi(m)
}

/// Monte Carlo ratio `DSC(X1) / DSC(X2)` for the log-normal pair over the
/// Tweedie powers in `p_grid`, with quadrature oracles.
pub fn example7_dsc_ratio(p_grid: &[f64], n: usize, seed: u64) -> Vec<DscRatioPoint> {
    let (s1, s2) = example5();
    let x1 = s1.sample(n, seed);
    let x2 = s2.sample(n, seed ^ 0x9e37_79b9_7f4a_7c15);
    p_grid
        .iter()
        .map(|&p| {
            let g = ConvexGenerator::tweedie(p);
            let (d1, d2) = (dsc_calibrated(&g, &x1), dsc_calibrated(&g, &x2));
            let oracle = |s: &ShiftedLogNormalSpec| {
                let m = s.mean();
                // phi(x) - phi(m) - phi'(m)(x - m) is non-negative, so a rough
                // pass sets the scale for a relative tolerance
                let f = |x: f64| g.phi(x) - g.phi(m) - g.dphi(m) * (x - m);
                let rough = s.expect(f, 1e-3 * g.phi(m).abs().max(1.0));
                s.expect(f, 1e-10 * rough.abs())
            };
            DscRatioPoint { p, dsc1: d1, dsc2: d2, ratio: d1 / d2, oracle_ratio: oracle(&s1) / oracle(&s2), asserted: p < 2.0 }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// weighted counterexample

/// `Z ~ Unif(0, 1)`, `E[Y | Z] = Z`, `Var[Y | Z] = phi Z^p`, predictors
/// `X1 = Z` and `X2 = 1 - Z`, scored by `E[(Y - X)^2 F_X(X)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedCounterexampleSpec {
    pub phi: Ratio<i64>,
    pub p: u32,
}

/// Exact weighted scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedScores {
    pub first: Ratio<i64>,
    pub second: Ratio<i64>,
}

impl WeightedCounterexampleSpec {
    pub fn new(phi: Ratio<i64>, p: u32) -> Result<Self> {
        if phi <= Ratio::from_integer(0) {
            return Err(Error::InvalidParameter(format!("dispersion {phi} must be positive")));
        }
        Ok(Self { phi, p })
    }

    pub fn reference() -> Self {
        Self { phi: Ratio::from_integer(4), p: 1 }
    }

    /// `E[phi Z^p Z] = phi / (p + 2)` and
    /// `E[phi Z^p (1 - Z)] + E[(2Z - 1)^2 (1 - Z)] = phi / ((p + 1)(p + 2)) + 1/6`.
    pub fn scores(&self) -> WeightedScores {
        let p = i64::from(self.p);
        let first = self.phi / Ratio::from_integer(p + 2);
        let second = self.phi * Ratio::new(1, (p + 1) * (p + 2)) + Ratio::new(1, 6);
        WeightedScores { first, second }
    }

    /// Quadrature of the same two expectations.
    pub fn scores_quadrature(&self) -> (f64, f64) {
        let phi = *self.phi.numer() as f64 / *self.phi.denom() as f64;
        let p = f64::from(self.p);
        let v = |z: f64| phi * z.powf(p);
        let first = simpson(|z| v(z) * z, 0.0, 1.0, 1e-14);
        let second = simpson(|z| (v(z) + (2.0 * z - 1.0).powi(2)) * (1.0 - z), 0.0, 1.0, 1e-14);
        (first, second)
    }

    /// Draws `Y | Z` from the Gamma law with mean `Z` and variance
    /// `phi Z^p`, returning the samples for `X1` and `X2`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(PairedSample<f64>, PairedSample<f64>)> {
        let phi = *self.phi.numer() as f64 / *self.phi.denom() as f64;
        let p = f64::from(self.p);
        let rows = sharded(n, seed, |rng| {
            // avoid Z = 0, where the Gamma law degenerates
            let z: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let shape = z.powf(2.0 - p) / phi;
            let scale = phi * z.powf(p - 1.0);
            let y = Gamma::new(shape, scale).map(|g| g.sample(rng)).unwrap_or(z);
            (z, y)
        });
        let (z, y): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let x2 = z.iter().map(|&v| 1.0 - v).collect();
        Ok((PairedSample::new(y.clone(), z)?, PairedSample::new(y, x2)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::sign_changes;
    use crate::decomp::mcb_mse;
    use crate::stats::abc;

    #[test]
    fn latent_closed_forms_match_quadrature() {
        for (b, q) in [(0.9, 0.07), (0.5, 0.1), (0.2, 0.15), (0.99, 0.01)] {
            let s = LatentUniformScenario::new(b, q).unwrap();
            let gap = latent_oracles(&s).max_relative_gap(&latent_quadrature(&s));
            assert!(gap < 1e-8, "b = {b}, q = {q}: {gap}");
        }
    }

    #[test]
    fn latent_reference_values() {
        let o = latent_oracles(&LatentUniformScenario::reference());
        assert!((o.abc1 - 0.0166).abs() < 1e-4);
        assert!((o.abc_sq1 - 0.00033).abs() < 1e-5);
        assert!((o.abc_sq2 - 0.000248).abs() < 1e-6);
        assert!((o.mcb1 - 0.00083).abs() < 1e-5);
        assert!((o.mcb2 - 0.00245).abs() < 1e-12);
    }

    #[test]
    fn q_closed_forms_match_quadrature() {
        let s = LatentUniformScenario::reference();
        for i in 0..=20 {
            let z = i as f64 / 20.0;
            assert!((s.q1(z) - latent_q_quadrature(|u| s.bias1(u), z)).abs() < 1e-12);
            assert!((s.q2(z) - latent_q_quadrature(|u| s.bias2(u), z)).abs() < 1e-12);
        }
        // Q(0) = -ABC
        assert!((s.q1(0.0) + latent_oracles(&s).abc1).abs() < 1e-15);
    }

    #[test]
    fn lorenz_and_concentration_of_the_oscillating_predictor_cross_at_half() {
        let s = LatentUniformScenario::reference();
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let (lc, cc) = s.curves(2, &grid).unwrap();
        let r = sign_changes(&lc, &cc, 1e-12).unwrap();
        assert_eq!(r.sign_changes, 1);
        assert!((r.locations[0] - 0.5).abs() <= 1e-3);
        assert!(lc.minus(&cc).unwrap().integral().abs() < 1e-9);
    }

    #[test]
    fn ranking_flip() {
        let o = latent_oracles(&LatentUniformScenario::reference());
        assert!(o.abc1 > o.abc2.abs());
        assert!(o.abc_sq1 > o.abc_sq2);
        assert!(o.mcb1 < o.mcb2);
    }

    #[test]
    fn sampling_is_deterministic_and_sharded() {
        let s = LatentUniformScenario::reference();
        let a = s.sample(SHARD + 10, 5, NoiseLaw::UniformBand);
        let b = s.sample(SHARD + 10, 5, NoiseLaw::UniformBand);
        assert_eq!(a, b);
        // a longer draw extends a shorter one
        let c = s.sample(10, 5, NoiseLaw::UniformBand);
        assert_eq!(&a.z[..10], &c.z[..]);
        assert!(a.y.iter().all(|&v| v >= 0.0));
        assert_ne!(s.sample(10, 6, NoiseLaw::UniformBand).z, c.z);
    }

    #[test]
    fn noise_law_does_not_move_statistics() {
        let s = LatentUniformScenario::reference();
        let o = latent_oracles(&s);
        for noise in [NoiseLaw::UniformBand, NoiseLaw::Bernoulli] {
            let d = s.sample(200_000, 2, noise);
            let r = abc(&d.first().unwrap()).unwrap();
            assert!((r.abc - o.abc1).abs() < 3e-3, "{noise:?}: {}", r.abc);
            let m = mcb_mse(&d.second().unwrap());
            assert!((m - o.mcb2).abs() < 5e-4, "{noise:?}: {m}");
        }
    }

    #[test]
    fn lognormal_reference_values() {
        let (s1, s2) = example5();
        assert!((s1.mean() - 10.0).abs() < 1e-12);
        assert!((s1.gini() - 0.2107).abs() < 5e-5);
        // 0.26024994 to eight places
        assert!((s2.gini() - 0.2603).abs() < 1e-4);
        assert!((s1.var() - 334.9884).abs() < 1e-4);
        assert!((s2.var() - 42.9570).abs() < 1e-4);
    }

    #[test]
    fn lognormal_closed_forms_match_quadrature() {
        let (s1, s2) = example5();
        for s in [s1, s2, ShiftedLogNormalSpec::new(0.0, 0.3, 0.5).unwrap()] {
            let (o, q) = (s.oracles(), s.quadrature());
            assert!(((o.mean - q.mean) / o.mean).abs() < 1e-8);
            assert!(((o.var - q.var) / o.var).abs() < 1e-8, "{} vs {}", o.var, q.var);
            assert!(((o.gini - q.gini) / o.gini).abs() < 1e-8);
            for p in [0.01, 0.2, 0.5, 0.9, 0.999] {
                assert!((s.lorenz(p) - s.lorenz_quadrature(p)).abs() < 1e-8 * s.lorenz(p));
            }
            for t in [0.0, 5.0, 9.0, 10.0, 12.0, 40.0] {
                let (a, b) = (s.stop_loss(t), s.stop_loss_quadrature(t));
                assert!((a - b).abs() < 1e-8 * a.max(1e-3), "t = {t}: {a} vs {b}");
                let sq = s.expect(|x| (x - t).max(0.0).powi(2), 1e-10);
                assert!((s.second_stop_loss(t) - sq).abs() < 1e-8 * sq.max(1.0));
            }
        }
    }

    #[test]
    fn gini_and_variance_agree_without_shift() {
        let a = ShiftedLogNormalSpec::with_mean(0.0, 1.5, 10.0).unwrap();
        let b = ShiftedLogNormalSpec::with_mean(0.0, 0.8, 10.0).unwrap();
        assert_eq!(a.var() > b.var(), a.gini() > b.gini());
        let (s1, s2) = example5();
        assert_ne!(s1.var() > s2.var(), s1.gini() > s2.gini());
    }

    #[test]
    fn murphy_disc_vanishes_below_the_shift_and_equals_stop_loss_gap() {
        let (s1, _) = example5();
        assert_eq!(s1.murphy_disc(7.0), 0.0);
        let t = 12.0;
        assert!((s1.murphy_disc(t) - s1.stop_loss(t)).abs() < 1e-15);
    }

    #[test]
    fn example5_crossing_counts() {
        let (s1, s2) = example5();
        let c = lognormal_crossings(&s1, &s2, 20_001).unwrap();
        assert_eq!(c.cdf.sign_changes, 2);
        assert_eq!(c.lorenz.sign_changes, 1);
        assert_eq!(c.lorenz.first_sign, 1);
        assert_eq!(c.murphy.sign_changes, 1);
        assert_eq!(c.murphy.first_sign, 1);
    }

    #[test]
    fn third_degree_variance_formula() {
        let (s1, s2) = example5();
        let (lower, upper) = lognormal_third_degree(&s1, &s2, 0.0);
        assert!(lower.abs() < 1e-12);
        assert!((upper - 0.5 * (s1.var() - s2.var())).abs() < 1e-9);
        assert!((upper - 146.02).abs() < 0.01);
        // upper decays towards 0 through positive values, slowly in the heavy tail
        let ups: Vec<f64> = [10.0, 1e2, 1e3, 1e4, 1e5].iter().map(|&u| lognormal_third_degree(&s1, &s2, u).1).collect();
        assert!(ups.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0), "{ups:?}");
        assert!(ups[4] < 1.0);
    }

    #[test]
    fn weighted_counterexample_scores() {
        let w = WeightedCounterexampleSpec::reference().scores();
        assert_eq!(w.first, Ratio::new(4, 3));
        assert_eq!(w.second, Ratio::new(5, 6));
        assert!(w.second < w.first);
        for spec in [WeightedCounterexampleSpec::reference(), WeightedCounterexampleSpec::new(Ratio::new(3, 2), 2).unwrap()] {
            let e = spec.scores();
            let (a, b) = spec.scores_quadrature();
            let f = |r: Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
            assert!((f(e.first) - a).abs() < 1e-12);
            assert!((f(e.second) - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_response_has_the_right_moments() {
        let (s1, _) = WeightedCounterexampleSpec::reference().sample(200_000, 4).unwrap();
        let resid: Vec<f64> = s1.y().iter().zip(s1.x()).map(|(y, x)| y - x).collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        // Var[Y | Z] = 4 Z, so E (Y - Z)^2 = 2
        let msq = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((msq - 2.0).abs() < 0.03, "{msq}");
    }
}
