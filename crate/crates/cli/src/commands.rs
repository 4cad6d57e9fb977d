//! `score`, `decompose` and `dominance`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use murphy_core::curves::{concentration_curve, lorenz_curve, murphy_curve, probability_grid, q_function};
use murphy_core::dominance::{
    bregman_dominance_class, crossing_consistency, lorenz_dominance, murphy_dominance, second_degree_lorenz,
    second_degree_murphy, third_degree_integrals, BregmanClassReport, CrossingConsistency, SecondDegree,
};
use murphy_core::losses::weighted_score;
use murphy_core::sample::validate;
use murphy_core::stats::{abc, gini, gini_dsc_decomposition, AbcReport, GiniDsc, GiniReport};
use murphy_core::{
    decompose as decompose_sample, score as score_sample, Curve, DecompositionResult, DominanceVerdict,
    GeneratorClass, MixingMeasure, PairedSample, Recalibration, Relation,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::grammar::{bind, ecdf_columns, LossSpec, NamedLoss, TolSpec};
use crate::table::{located, write_curve, Table};

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_POWERS: [f64; 9] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0];

pub struct RunConfig {
    pub input: PathBuf,
    pub response: String,
    pub predictors: Vec<String>,
    pub losses: Vec<LossSpec>,
    pub grid: usize,
    pub tol: TolSpec,
    pub out: Option<PathBuf>,
}

struct Loaded {
    rows: usize,
    samples: Vec<PairedSample<f64>>,
    losses: Vec<NamedLoss>,
}

impl RunConfig {
    fn load(&self) -> Result<Loaded> {
        if self.predictors.is_empty() || self.predictors.iter().any(|p| p.trim().is_empty()) {
            bail!("at least one non-empty predictor name is required");
        }
        let mut seen = BTreeSet::new();
        for p in &self.predictors {
            if !seen.insert(p.as_str()) {
                bail!("predictor `{p}` listed twice");
            }
        }
        if self.grid < 2 {
            bail!("--grid must be at least 2");
        }
        let mut wanted = vec![self.response.clone()];
        wanted.extend(self.predictors.iter().cloned());
        for c in ecdf_columns(&self.losses) {
            if !wanted.contains(&c) {
                wanted.push(c);
            }
        }
        let table = Table::read(&self.input, &wanted)?;
        let y = table.column(&self.response)?;
        let cols = self
            .predictors
            .iter()
            .map(|p| Ok((p.as_str(), table.column(p)?)))
            .collect::<Result<Vec<_>>>()?;
        let samples = validate(y, &cols).map_err(|e| located(e, &self.input))?;
        let losses = bind(&self.losses, &table)?;
        Ok(Loaded { rows: table.rows(), samples, losses })
    }

    fn header(&self, command: &'static str, rows: usize) -> Header {
        Header {
            schema_version: SCHEMA_VERSION,
            command,
            input: self.input.display().to_string(),
            response: self.response.clone(),
            rows,
        }
    }
}

#[derive(Serialize)]
struct Header {
    schema_version: u32,
    command: &'static str,
    input: String,
    response: String,
    rows: usize,
}

/// Writes `report.json` under `out`, or prints the report.
fn emit<R: Serialize>(out: Option<&Path>, report: &R) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    match out {
        Some(dir) => {
            let path = dir.join("report.json");
            std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn prepare_out(out: Option<&Path>) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}

/// File-name-safe version of a column name.
fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

// ---------------------------------------------------------------------------
// score

#[derive(Serialize)]
struct ScoreReport {
    #[serde(flatten)]
    header: Header,
    weighted: bool,
    losses: Vec<String>,
    predictors: Vec<String>,
    scores: Vec<ScoreRow>,
    rankings: Vec<Ranking>,
}

#[derive(Serialize)]
struct ScoreRow {
    loss: String,
    predictor: String,
    score: f64,
    /// `mean L(y, x) F_X(x)` with midranks for `F_X`.
    weighted_score: Option<f64>,
}

#[derive(Serialize)]
struct Ranking {
    loss: String,
    by: &'static str,
    /// Best (smallest) first; ties keep the input order.
    order: Vec<String>,
}

pub fn score(cfg: &RunConfig, weighted: bool) -> Result<()> {
    let data = cfg.load()?;
    let cells: Vec<(usize, usize)> =
        (0..data.losses.len()).flat_map(|l| (0..data.samples.len()).map(move |p| (l, p))).collect();
    let scores = cells
        .par_iter()
        .map(|&(l, p)| {
            let loss = data.losses[l].as_loss();
            let s = &data.samples[p];
            let plain = score_sample(s, loss)?;
            let w = if weighted { Some(weighted_score(s, loss, |r| r)?) } else { None };
            Ok(ScoreRow {
                loss: data.losses[l].name.clone(),
                predictor: cfg.predictors[p].clone(),
                score: plain,
                weighted_score: w,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let k = data.samples.len();
    let rankings = data
        .losses
        .iter()
        .enumerate()
        .map(|(l, loss)| {
            let rows = &scores[l * k..(l + 1) * k];
            let key = |r: &ScoreRow| if weighted { r.weighted_score.unwrap_or(f64::NAN) } else { r.score };
            let mut idx: Vec<usize> = (0..k).collect();
            idx.sort_by(|&a, &b| key(&rows[a]).total_cmp(&key(&rows[b])));
            Ranking {
                loss: loss.name.clone(),
                by: if weighted { "weighted_score" } else { "score" },
                order: idx.into_iter().map(|i| rows[i].predictor.clone()).collect(),
            }
        })
        .collect();

    let report = ScoreReport {
        header: cfg.header("score", data.rows),
        weighted,
        losses: data.losses.iter().map(|l| l.name.clone()).collect(),
        predictors: cfg.predictors.clone(),
        scores,
        rankings,
    };
    prepare_out(cfg.out.as_deref())?;
    emit(cfg.out.as_deref(), &report)
}

// ---------------------------------------------------------------------------
// decompose

#[derive(Serialize)]
struct DecomposeReport {
    #[serde(flatten)]
    header: Header,
    response_mean: f64,
    recalibration: Recalibration,
    grid: usize,
    predictors: Vec<PredictorBlock>,
}

#[derive(Serialize)]
struct PredictorBlock {
    name: String,
    mean: f64,
    unbiasedness_gap: f64,
    decompositions: Vec<DecompositionResult<f64>>,
    /// Largest `|S - (UNC - DSC + MCB)|` over the losses.
    max_identity_residual: f64,
    gini: GiniReport<f64>,
    abc: AbcReport<f64>,
    /// Gini split into the DSC and MAD terms of the recalibrated predictor.
    gini_dsc: Option<GiniDsc<f64>>,
    curves: Vec<CurveExport>,
}

#[derive(Serialize)]
struct CurveExport {
    kind: &'static str,
    /// Relative to the output directory; absent without `--out`.
    file: Option<String>,
    points: usize,
    /// Trapezoidal integral of the exported records.
    integral: f64,
}

/// `m` equally spaced thresholds from 0 to just past the largest value.
fn regular_theta_grid(columns: &[&[f64]], m: usize) -> Vec<f64> {
    let top = columns.iter().flat_map(|c| c.iter()).fold(0.0f64, |a, &b| a.max(b)) * 1.05;
    let top = if top > 0.0 { top } else { 1.0 };
    (0..m).map(|i| top * i as f64 / (m - 1) as f64).collect()
}

pub fn decompose(cfg: &RunConfig, method: Recalibration) -> Result<()> {
    let data = cfg.load()?;
    prepare_out(cfg.out.as_deref())?;
    let pgrid: Vec<f64> = probability_grid(cfg.grid);
    let blocks = data
        .samples
        .par_iter()
        .zip(cfg.predictors.par_iter())
        .map(|(s, name)| -> Result<PredictorBlock> {
            let decompositions = data
                .losses
                .iter()
                .map(|l| decompose_sample(s, l.as_loss(), method))
                .collect::<murphy_core::Result<Vec<_>>>()
                .with_context(|| format!("decomposing `{name}`"))?;
            let max_identity_residual = decompositions.iter().map(|d| d.identity_residual).fold(0.0, f64::max);
            let gini_dsc = match method {
                Recalibration::Identity => None,
                m => Some(gini_dsc_decomposition(&s.recalibrated(m)?)?),
            };
            let theta = regular_theta_grid(&[s.y(), s.x()], cfg.grid);
            let curves: Vec<(&'static str, Curve<f64>)> = vec![
                ("lorenz", lorenz_curve(s.x(), &pgrid)?),
                ("concentration", concentration_curve(s, &pgrid)?),
                ("murphy", murphy_curve(s, &theta)?),
                ("q", q_function(s, &pgrid)?),
            ];
            let curves = curves
                .into_iter()
                .map(|(kind, c)| {
                    let file = match cfg.out.as_deref() {
                        Some(dir) => Some(write_curve(dir, &format!("{}_{kind}", slug(name)), &c)?),
                        None => None,
                    };
                    Ok(CurveExport { kind, file, points: c.len(), integral: c.integral() })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PredictorBlock {
                name: name.clone(),
                mean: s.mean_x(),
                unbiasedness_gap: s.unbiasedness_gap(),
                decompositions,
                max_identity_residual,
                gini: gini(s.x())?,
                abc: abc(s).with_context(|| format!("ABC of `{name}`"))?,
                gini_dsc,
                curves,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let report = DecomposeReport {
        header: cfg.header("decompose", data.rows),
        response_mean: data.samples[0].mean_y(),
        recalibration: method,
        grid: cfg.grid,
        predictors: blocks,
    };
    emit(cfg.out.as_deref(), &report)
}

// ---------------------------------------------------------------------------
// dominance

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    /// Calibrated-only analyses are skipped.
    Skip,
    Recalibrate(Recalibration),
    Assume,
}

#[derive(Serialize)]
struct DominanceReport {
    #[serde(flatten)]
    header: Header,
    tolerance: String,
    calibration: String,
    powers: Vec<f64>,
    measures: Vec<String>,
    notices: Vec<String>,
    pairs: Vec<PairBlock>,
}

#[derive(Serialize)]
struct PairBlock {
    first: String,
    second: String,
    /// `LC(first) - LC(second)`.
    lorenz: Option<VerdictSummary>,
    /// `M(Y, first) - M(Y, second)` on the raw predictors.
    murphy: Option<VerdictSummary>,
    calibrated: Option<CalibratedBlock>,
    notices: Vec<String>,
}

#[derive(Serialize)]
struct VerdictSummary {
    relation: Relation<f64>,
    crossings: usize,
    single_crossing_from_above: Option<bool>,
    max_abs_difference: f64,
}

impl From<&DominanceVerdict<f64>> for VerdictSummary {
    fn from(v: &DominanceVerdict<f64>) -> Self {
        VerdictSummary {
            relation: v.relation.clone(),
            crossings: v.crossing_count(),
            single_crossing_from_above: v.single_crossing_from_above(),
            max_abs_difference: v.difference.max_abs(),
        }
    }
}

#[derive(Serialize)]
struct CalibratedBlock {
    lorenz: Option<VerdictSummary>,
    murphy: Option<VerdictSummary>,
    crossing_consistency: Option<CrossingConsistency>,
    second_degree_lorenz: Option<SecondDegree<f64>>,
    second_degree_murphy: Vec<MeasureVerdict>,
    third_degree: Option<ThirdDegreeSummary>,
    class_u: Option<BregmanClassReport<f64>>,
    class_v: Option<BregmanClassReport<f64>>,
}

#[derive(Serialize)]
struct MeasureVerdict {
    measure: String,
    report: SecondDegree<f64>,
}

#[derive(Serialize)]
struct ThirdDegreeSummary {
    half_var_diff: f64,
    lower_at_top: f64,
    upper_at_zero: f64,
    variance_formula_residual: f64,
    complement_residual: f64,
    lower_nonneg: bool,
    upper_nonneg: bool,
    lower_min: f64,
    upper_min: f64,
    files: Vec<String>,
}

/// Keeps the value, or records why it is missing.
fn noted<T>(notices: &mut Vec<String>, what: &str, r: murphy_core::Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            notices.push(format!("{what}: {e}"));
            None
        }
    }
}

struct PairContext<'a> {
    cfg: &'a RunConfig,
    powers: &'a [f64],
    measures: &'a [(String, MixingMeasure<f64>)],
}

impl PairContext<'_> {
    fn pair(&self, names: (&str, &str), raw: (&PairedSample<f64>, &PairedSample<f64>), cal: Option<(PairedSample<f64>, PairedSample<f64>)>) -> Result<PairBlock> {
        let tol = self.cfg.tol.tolerance(self.cfg.grid);
        let mut notices = Vec::new();
        let lorenz = noted(&mut notices, "Lorenz", lorenz_dominance(raw.0.x(), raw.1.x(), tol)).map(|v| (&v).into());
        let murphy = noted(&mut notices, "Murphy", murphy_dominance(raw.0, raw.1, tol)).map(|v| (&v).into());
        let calibrated = match cal {
            None => None,
            Some((a, b)) => Some(self.calibrated(names, &a, &b, &mut notices)?),
        };
        Ok(PairBlock { first: names.0.to_string(), second: names.1.to_string(), lorenz, murphy, calibrated, notices })
    }

    fn calibrated(&self, names: (&str, &str), a: &PairedSample<f64>, b: &PairedSample<f64>, notices: &mut Vec<String>) -> Result<CalibratedBlock> {
        let tol = self.cfg.tol.tolerance(self.cfg.grid);
        let lorenz = noted(notices, "calibrated Lorenz", lorenz_dominance(a.x(), b.x(), tol)).map(|v| (&v).into());
        let murphy = noted(notices, "calibrated Murphy", murphy_dominance(a, b, tol)).map(|v| (&v).into());
        let crossing = noted(notices, "crossing consistency", crossing_consistency(a, b, tol));
        let second_lorenz = noted(notices, "second-degree Lorenz", second_degree_lorenz(a.x(), b.x(), tol));
        let mut second_murphy = Vec::new();
        for (name, h) in self.measures {
            if let Some(report) = noted(notices, &format!("second-degree Murphy ({name})"), second_degree_murphy(a, b, h, tol)) {
                second_murphy.push(MeasureVerdict { measure: name.clone(), report });
            }
        }

        let theta = regular_theta_grid(&[a.x(), b.x()], self.cfg.grid);
        let ybar = a.mean_y();
        let third = noted(notices, "third degree", third_degree_integrals(a.x(), b.x(), &theta, 1e-9 * ybar.abs().max(1.0)));
        let third = match third {
            None => None,
            Some(t) => {
                let mut files = Vec::new();
                if let Some(dir) = self.cfg.out.as_deref() {
                    let stem = format!("{}_vs_{}", slug(names.0), slug(names.1));
                    files.push(write_curve(dir, &format!("{stem}_third_lower"), &t.lower)?);
                    files.push(write_curve(dir, &format!("{stem}_third_upper"), &t.upper)?);
                }
                Some(ThirdDegreeSummary {
                    half_var_diff: t.half_var_diff,
                    lower_at_top: t.lower_at_top,
                    upper_at_zero: t.upper_at_zero,
                    variance_formula_residual: t.variance_formula_residual,
                    complement_residual: t.complement_residual,
                    lower_nonneg: t.lower_nonneg,
                    upper_nonneg: t.upper_nonneg,
                    lower_min: t.lower_min,
                    upper_min: t.upper_min,
                    files,
                })
            }
        };
        let class_u = noted(notices, "class U", bregman_dominance_class(a, b, GeneratorClass::U, self.powers, tol));
        let class_v = noted(notices, "class V", bregman_dominance_class(a, b, GeneratorClass::V, self.powers, tol));
        Ok(CalibratedBlock {
            lorenz,
            murphy,
            crossing_consistency: crossing,
            second_degree_lorenz: second_lorenz,
            second_degree_murphy: second_murphy,
            third_degree: third,
            class_u,
            class_v,
        })
    }
}

pub fn dominance(cfg: &RunConfig, mode: CalibrationMode, powers: &[f64]) -> Result<()> {
    let data = cfg.load()?;
    if data.samples.len() < 2 {
        bail!("dominance needs at least two predictors");
    }
    prepare_out(cfg.out.as_deref())?;
    let powers: Vec<f64> = if !powers.is_empty() {
        powers.to_vec()
    } else {
        let given: Vec<f64> = data.losses.iter().filter_map(NamedLoss::tweedie_power).collect();
        if given.is_empty() { DEFAULT_POWERS.to_vec() } else { given }
    };
    let mut measures: Vec<(String, MixingMeasure<f64>)> =
        data.losses.iter().filter_map(|l| l.measure().map(|h| (l.name.clone(), h.clone()))).collect();
    if measures.is_empty() {
        measures.push(("linear:1".into(), MixingMeasure::linear(1.0)?));
    }

    let mut notices = Vec::new();
    let calibrated: Option<Vec<PairedSample<f64>>> = match mode {
        CalibrationMode::Skip => {
            notices.push(
                "predictors are not known to be calibrated: calibrated-only analyses skipped \
                 (pass --recalibrate or --assume-calibrated)"
                    .to_string(),
            );
            None
        }
        CalibrationMode::Assume => Some(data.samples.iter().map(|s| s.clone().assume_calibrated()).collect()),
        CalibrationMode::Recalibrate(m) => {
            Some(data.samples.par_iter().map(|s| s.recalibrated(m)).collect::<murphy_core::Result<Vec<_>>>()?)
        }
    };

    // flagged samples let the raw comparisons use the calibrated forms too
    let raw: Vec<PairedSample<f64>> = match mode {
        CalibrationMode::Assume => calibrated.clone().unwrap_or_default(),
        _ => data.samples.clone(),
    };
    let k = raw.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let ctx = PairContext { cfg, powers: &powers, measures: &measures };
    let blocks = pairs
        .par_iter()
        .map(|&(i, j)| {
            ctx.pair(
                (&cfg.predictors[i], &cfg.predictors[j]),
                (&raw[i], &raw[j]),
                calibrated.as_ref().map(|c| (c[i].clone(), c[j].clone())),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let report = DominanceReport {
        header: cfg.header("dominance", data.rows),
        tolerance: cfg.tol.to_string(),
        calibration: match mode {
            CalibrationMode::Skip => "skipped".to_string(),
            CalibrationMode::Assume => "assumed".to_string(),
            CalibrationMode::Recalibrate(m) => m.to_string(),
        },
        powers,
        measures: measures.into_iter().map(|(n, _)| n).collect(),
        notices,
        pairs: blocks,
    };
    emit(cfg.out.as_deref(), &report)
}
