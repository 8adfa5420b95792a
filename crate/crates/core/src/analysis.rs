//! Critical-point extraction from latent scans: weighted polynomial fits,
//! curvature on normalized axes, extremum search with bootstrap errors,
//! finite-size extrapolation and an order-parameter power law.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{par, CoreError, Result};

/// Relative singular-value floor below which a design matrix counts as rank deficient.
const RANK_TOL: f64 = 1e-12;
/// Points in the dense grid used to find the value range of a curve.
const RANGE_GRID: usize = 4001;
/// Below this the curvature field is treated as identically zero.
const FLAT_CURVATURE: f64 = 1e-9;

fn fit_err(msg: impl Into<String>) -> CoreError {
    CoreError::Fit(msg.into())
}

/// Weighted least-squares polynomial. Internally the abscissa is mapped to
/// `t in [-1, 1]`; `coefficients` are in the original variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub domain: (f64, f64),
    pub residual_rms: f64,
    scaled: Vec<f64>,
}

impl FitResult {
    fn to_t(&self, g: f64) -> (f64, f64) {
        let (a, b) = self.domain;
        let half = 0.5 * (b - a);
        if half > 0.0 {
            ((g - 0.5 * (a + b)) / half, 1.0 / half)
        } else {
            (0.0, 1.0)
        }
    }

    pub fn value(&self, g: f64) -> f64 {
        let (t, _) = self.to_t(g);
        self.scaled.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self, g: f64) -> f64 {
        let (t, s) = self.to_t(g);
        let mut acc = 0.0;
        for (k, c) in self.scaled.iter().enumerate().skip(1).rev() {
            acc = acc * t + k as f64 * c;
        }
        acc * s
    }

    pub fn second_derivative(&self, g: f64) -> f64 {
        let (t, s) = self.to_t(g);
        let mut acc = 0.0;
        for (k, c) in self.scaled.iter().enumerate().skip(2).rev() {
            acc = acc * t + (k * (k - 1)) as f64 * c;
        }
        acc * s * s
    }
}

/// A smooth curve on a closed interval with its first two derivatives.
pub trait Curve {
    fn domain(&self) -> (f64, f64);
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
}

impl Curve for FitResult {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
    fn value(&self, x: f64) -> f64 {
        FitResult::value(self, x)
    }
    fn d1(&self, x: f64) -> f64 {
        self.derivative(x)
    }
    fn d2(&self, x: f64) -> f64 {
        self.second_derivative(x)
    }
}

/// `(g, value, weight)` triples.
pub fn polyfit(points: &[(f64, f64, f64)], degree: usize) -> Result<FitResult> {
    let n = points.len();
    if n <= degree {
        return Err(fit_err(format!("{n} points cannot determine a degree-{degree} polynomial")));
    }
    if let Some(p) = points.iter().find(|p| !(p.2 > 0.0 && p.2.is_finite())) {
        return Err(fit_err(format!("weights must be positive, got {}", p.2)));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(fit_err("non-finite point"));
    }
    let a = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let b = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut fit = FitResult {
        degree,
        coefficients: Vec::new(),
        domain: (a, b),
        residual_rms: 0.0,
        scaled: Vec::new(),
    };
    let cols = degree + 1;
    let mut design = DMatrix::zeros(n, cols);
    let mut rhs = DVector::zeros(n);
    for (i, &(g, y, w)) in points.iter().enumerate() {
        let sw = w.sqrt();
        let (t, _) = fit.to_t(g);
        let mut tp = 1.0;
        for k in 0..cols {
            design[(i, k)] = sw * tp;
            tp *= t;
        }
        rhs[i] = sw * y;
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax.is_nan() || smax <= 0.0 || smin <= RANK_TOL * smax {
        return Err(fit_err(format!("rank-deficient design for degree {degree}")));
    }
    let sol = svd.solve(&rhs, 0.0).map_err(fit_err)?;
    fit.scaled = sol.iter().copied().collect();
    fit.coefficients = to_original_basis(&fit.scaled, a, b);
    let ss: f64 = points.iter().map(|&(g, y, _)| (fit.value(g) - y).powi(2)).sum();
    fit.residual_rms = (ss / n as f64).sqrt();
    Ok(fit)
}

/// Expand `sum_k c_k t^k` with `t = alpha g + beta` into powers of `g`.
fn to_original_basis(scaled: &[f64], a: f64, b: f64) -> Vec<f64> {
    let half = 0.5 * (b - a);
    let (alpha, beta) = if half > 0.0 { (1.0 / half, -0.5 * (a + b) / half) } else { (0.0, 0.0) };
    let mut out = vec![0.0; scaled.len()];
    // Horner in polynomial arithmetic: acc = acc * (alpha g + beta) + c_k
    for &c in scaled.iter().rev() {
        let mut next = vec![0.0; scaled.len()];
        for (k, &v) in out.iter().enumerate() {
            next[k] += beta * v;
            if k + 1 < next.len() {
                next[k + 1] += alpha * v;
            }
        }
        next[0] += c;
        out = next;
    }
    out
}

/// Polynomial degree in `candidates` minimizing the small-sample corrected AIC.
pub fn select_degree(points: &[(f64, f64, f64)], candidates: std::ops::RangeInclusive<usize>) -> Result<usize> {
    let n = points.len() as f64;
    let mut best: Option<(f64, usize)> = None;
    for d in candidates {
        let k = (d + 1) as f64;
        if n - k - 1.0 <= 0.0 {
            continue;
        }
        let Ok(fit) = polyfit(points, d) else { continue };
        let rss = (fit.residual_rms.powi(2) * n).max(f64::MIN_POSITIVE);
        let aicc = n * (rss / n).ln() + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0);
        if best.is_none_or(|(b, _)| aicc < b) {
            best = Some((aicc, d));
        }
    }
    best.map(|(_, d)| d).ok_or_else(|| fit_err("no candidate degree can be fitted"))
}

/// Signed curvature of a curve after mapping both axes affinely onto `[0, 1]`
/// over its domain (`x = (g - g_min) / dg`, `y = (f - f_min) / df`).
pub struct NormalizedCurvature<'a, C: Curve + ?Sized> {
    curve: &'a C,
    dg: f64,
    df: f64,
}

impl<'a, C: Curve + ?Sized> NormalizedCurvature<'a, C> {
    pub fn new(curve: &'a C) -> Self {
        let (a, b) = curve.domain();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..RANGE_GRID {
            let v = curve.value(a + (b - a) * i as f64 / (RANGE_GRID - 1) as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        NormalizedCurvature {
            curve,
            dg: b - a,
            df: hi - lo,
        }
    }

    pub fn at(&self, g: f64) -> f64 {
        if self.df.is_nan() || self.df <= 0.0 || self.dg <= 0.0 {
            return 0.0;
        }
        let y1 = self.curve.d1(g) * self.dg / self.df;
        let y2 = self.curve.d2(g) * self.dg * self.dg / self.df;
        y2 / (1.0 + y1 * y1).powf(1.5)
    }
}

pub fn curvature<C: Curve + ?Sized>(curve: &C, g: f64) -> f64 {
    NormalizedCurvature::new(curve).at(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    MaxCurvature,
    MinCurvature,
}

impl ExtremumKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExtremumKind::MaxCurvature => "max_curvature",
            ExtremumKind::MinCurvature => "min_curvature",
        }
    }

    /// Increasing curves bend at a curvature minimum, decreasing ones at a maximum.
    pub fn for_curve<C: Curve + ?Sized>(curve: &C) -> Self {
        let (a, b) = curve.domain();
        if curve.value(b) >= curve.value(a) {
            ExtremumKind::MinCurvature
        } else {
            ExtremumKind::MaxCurvature
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremumSearch {
    pub grid_step: f64,
    /// Fraction of the domain searched, centered.
    pub interior: f64,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for ExtremumSearch {
    fn default() -> Self {
        ExtremumSearch {
            grid_step: 1e-4,
            interior: 0.9,
            bootstrap: 200,
            seed: 0,
        }
    }
}

/// Arg-extremum of the normalized curvature on the interior grid, and
/// whether it sits on the grid boundary (or the field is flat).
pub fn curvature_extremum<C: Curve + ?Sized>(curve: &C, kind: ExtremumKind, search: &ExtremumSearch) -> (f64, bool) {
    let (a, b) = curve.domain();
    let margin = 0.5 * (1.0 - search.interior) * (b - a);
    let (lo, hi) = (a + margin, b - margin);
    let steps = (((hi - lo) / search.grid_step).round() as usize).max(1);
    let field = NormalizedCurvature::new(curve);
    let mut best = (lo, f64::NEG_INFINITY, 0usize);
    let mut peak = 0.0f64;
    for i in 0..=steps {
        let g = lo + (hi - lo) * i as f64 / steps as f64;
        let k = field.at(g);
        peak = peak.max(k.abs());
        let score = match kind {
            ExtremumKind::MaxCurvature => k,
            ExtremumKind::MinCurvature => -k,
        };
        if score > best.1 {
            best = (g, score, i);
        }
    }
    let edge = best.2 == 0 || best.2 == steps || peak < FLAT_CURVATURE;
    (best.0, edge)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalEstimate {
    #[serde(rename = "L")]
    pub l: usize,
    pub g_c: f64,
    pub uncertainty: f64,
    pub kind: ExtremumKind,
    pub low_confidence: bool,
}

/// One averaged latent value per coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentScanRow {
    pub g: f64,
    pub lv_mean: f64,
    pub lv_stderr: f64,
    pub n_test: usize,
}

/// Fit the scan, locate the curvature extremum and bootstrap its spread.
/// `kind = None` selects the extremum from the fitted curve's monotonicity.
pub fn locate_gc(
    l: usize,
    scan: &[LatentScanRow],
    degree: usize,
    kind: Option<ExtremumKind>,
    search: &ExtremumSearch,
) -> Result<(CriticalEstimate, FitResult)> {
    if scan.len() < degree + 2 {
        return Err(fit_err(format!(
            "{} scan points; degree {degree} needs at least {}",
            scan.len(),
            degree + 2
        )));
    }
    let points: Vec<(f64, f64, f64)> = scan.iter().map(|r| (r.g, r.lv_mean, 1.0)).collect();
    let fit = polyfit(&points, degree)?;
    let kind = kind.unwrap_or_else(|| ExtremumKind::for_curve(&fit));
    let (g_c, edge) = curvature_extremum(&fit, kind, search);
    let uncertainty = bootstrap_spread(&points, degree, kind, search);
    Ok((
        CriticalEstimate {
            l,
            g_c,
            uncertainty,
            kind,
            low_confidence: edge,
        },
        fit,
    ))
}

fn bootstrap_spread(points: &[(f64, f64, f64)], degree: usize, kind: ExtremumKind, search: &ExtremumSearch) -> f64 {
    let n = points.len();
    let locations: Vec<Option<f64>> = par::map_range(search.bootstrap, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
        rng.set_stream(r as u64);
        let sample: Vec<_> = (0..n).map(|_| points[rng.random_range(0..n)]).collect();
        let fit = polyfit(&sample, degree).ok()?;
        Some(curvature_extremum(&fit, kind, search).0)
    });
    let ok: Vec<f64> = locations.into_iter().flatten().collect();
    if ok.len() < 2 {
        return 0.0;
    }
    let m = ok.iter().sum::<f64>() / ok.len() as f64;
    (ok.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressor {
    InverseL,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    pub slope: f64,
    pub intercept: f64,
    /// NaN when the data cannot determine it (two points, no uncertainties).
    pub intercept_uncertainty: f64,
    pub regressor: Regressor,
}

/// Linear regression of `g_c` on `1 / L`. Uses weights `1 / sigma^2` when
/// every estimate carries a positive uncertainty, equal weights otherwise.
pub fn extrapolate(estimates: &[CriticalEstimate]) -> Result<ExtrapolationResult> {
    let mut sizes: Vec<usize> = estimates.iter().map(|e| e.l).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(fit_err("extrapolation needs estimates at two or more distinct sizes"));
    }
    let weighted = estimates.iter().all(|e| e.uncertainty > 0.0 && e.uncertainty.is_finite());
    let rows: Vec<(f64, f64, f64)> = estimates
        .iter()
        .map(|e| {
            let w = if weighted { e.uncertainty.powi(-2) } else { 1.0 };
            (1.0 / e.l as f64, e.g_c, w)
        })
        .collect();
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    let sx: f64 = rows.iter().map(|r| r.2 * r.0).sum();
    let sy: f64 = rows.iter().map(|r| r.2 * r.1).sum();
    let sxx: f64 = rows.iter().map(|r| r.2 * r.0 * r.0).sum();
    let sxy: f64 = rows.iter().map(|r| r.2 * r.0 * r.1).sum();
    let det = sw * sxx - sx * sx;
    if det.is_nan() || det == 0.0 {
        return Err(fit_err("singular design"));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    // covariance of the intercept: sxx / det, scaled by the residual variance
    // when the weights are not absolute
    let scale = if weighted {
        1.0
    } else if rows.len() > 2 {
        let rss: f64 = rows.iter().map(|r| (r.1 - intercept - slope * r.0).powi(2)).sum();
        rss / (rows.len() - 2) as f64
    } else {
        f64::NAN
    };
    Ok(ExtrapolationResult {
        slope,
        intercept,
        intercept_uncertainty: (scale * sxx / det).sqrt(),
        regressor: Regressor::InverseL,
    })
}

/// Slope `beta` of `ln M` against `ln(g_c - g)`.
pub fn power_law_fit(points: &[(f64, f64)], g_c: f64) -> Result<f64> {
    if points.len() < 3 {
        return Err(fit_err("power-law fit needs at least 3 points"));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 < g_c && p.1 > 0.0)) {
        return Err(fit_err(format!("point ({}, {}) needs g < g_c and M > 0", p.0, p.1)));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(g, m)| ((g_c - g).ln(), m.ln())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(fit_err("all points share one distance to g_c"));
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

pub fn read_latent_scan<R: Read>(input: R) -> Result<Vec<LatentScanRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn write_latent_scan<W: Write>(out: W, rows: &[LatentScanRow]) -> Result<()> {
    write_rows(out, rows)
}

#[derive(Serialize)]
struct CriticalRow {
    #[serde(rename = "L")]
    l: usize,
    g_c: f64,
    uncertainty: f64,
    kind: &'static str,
    low_confidence: bool,
}

pub fn write_critical_points<W: Write>(out: W, estimates: &[CriticalEstimate]) -> Result<()> {
    let rows: Vec<CriticalRow> = estimates
        .iter()
        .map(|e| CriticalRow {
            l: e.l,
            g_c: e.g_c,
            uncertainty: e.uncertainty,
            kind: e.kind.as_str(),
            low_confidence: e.low_confidence,
        })
        .collect();
    write_rows(out, &rows)
}

#[derive(Serialize)]
struct ExtrapolationRow {
    slope: f64,
    intercept: f64,
    intercept_uncertainty: f64,
}

pub fn write_extrapolation<W: Write>(out: W, result: &ExtrapolationResult) -> Result<()> {
    write_rows(
        out,
        &[ExtrapolationRow {
            slope: result.slope,
            intercept: result.intercept,
            intercept_uncertainty: result.intercept_uncertainty,
        }],
    )
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
