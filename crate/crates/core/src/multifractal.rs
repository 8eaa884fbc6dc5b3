//! Generalized Hurst exponents.
//!
//! Three variants share one fluctuation pipeline:
//!
//! * `mf-dfa`: profile, per-window polynomial detrending.
//! * `mf-dhv`: profile, historical-volatility-weighted trend, detrended
//!   residual cut into non-overlapping windows.
//! * `fs-mfa`: Fourier denoising followed by `mf-dhv`.
//!
//! `F_q(s)` is the order-`q` generalized mean of the window root-variances and
//! `H(q)` the least-squares slope of `ln F_q(s)` against `ln s`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::fourier::{self, DenoiseDiagnostics, FourierError};
use crate::series::Series;
use crate::FORMAT_VERSION;

/// Minimum number of usable scales behind each fitted exponent.
pub const MIN_FIT_SCALES: usize = 4;

#[derive(Debug, Error)]
pub enum MfaError {
    #[error("series of length {n} is too short: {reason}")]
    TooShort { n: usize, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("too few valid scales (need {MIN_FIT_SCALES}) for q = {}", fmt_failures(.0))]
    TooFewScales(Vec<(f64, usize)>),
    #[error("denoising failed: {0}")]
    Denoise(#[from] FourierError),
}

fn fmt_failures(f: &[(f64, usize)]) -> String {
    f.iter()
        .map(|(q, k)| format!("{q} ({k} valid)"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "fs-mfa")]
    FsMfa,
    #[serde(rename = "mf-dhv")]
    MfDhv,
    #[serde(rename = "mf-dfa")]
    MfDfa,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FsMfa, Method::MfDhv, Method::MfDfa];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FsMfa => "fs-mfa",
            Method::MfDhv => "mf-dhv",
            Method::MfDfa => "mf-dfa",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?} (expected fs-mfa, mf-dhv or mf-dfa)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSpec {
    /// 20 log-spaced integers in `[16, ⌊N/4⌋]`.
    Auto,
    Range {
        min: usize,
        max: usize,
        count: usize,
    },
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfaConfig {
    pub method: Method,
    pub q_grid: Vec<f64>,
    pub scales: ScaleSpec,
    pub vol_window: usize,
    pub dfa_poly_order: usize,
}

impl Default for MfaConfig {
    fn default() -> Self {
        MfaConfig {
            method: Method::FsMfa,
            q_grid: default_q_grid(),
            scales: ScaleSpec::Auto,
            vol_window: 16,
            dfa_poly_order: 1,
        }
    }
}

impl MfaConfig {
    pub fn with_method(method: Method) -> Self {
        MfaConfig {
            method,
            ..Default::default()
        }
    }

    pub fn resolve_scales(&self, n: usize) -> Vec<usize> {
        match &self.scales {
            ScaleSpec::Auto => log_spaced_scales(16, n / 4, 20),
            ScaleSpec::Range { min, max, count } => log_spaced_scales(*min, *max, *count),
            ScaleSpec::Explicit(s) => s.clone(),
        }
    }

    /// Check the configuration against a series length and return the scales.
    pub fn validate(&self, n: usize) -> Result<Vec<usize>, MfaError> {
        if self.q_grid.is_empty() {
            return Err(MfaError::Config("q grid is empty".into()));
        }
        if let Some(q) = self.q_grid.iter().find(|q| !q.is_finite()) {
            return Err(MfaError::Config(format!("non-finite q {q}")));
        }
        let scales = self.resolve_scales(n);
        if scales.is_empty() {
            return Err(MfaError::TooShort {
                n,
                reason: "no admissible scales".into(),
            });
        }
        if scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MfaError::Config(format!(
                "scales {scales:?} not strictly increasing"
            )));
        }
        if scales[0] < 4 {
            return Err(MfaError::Config(format!(
                "scale {} below the minimum of 4",
                scales[0]
            )));
        }
        let max = *scales.last().unwrap_or(&0);
        if n < 4 * max {
            return Err(MfaError::TooShort {
                n,
                reason: format!("need at least 4 x {max} samples"),
            });
        }
        match self.method {
            Method::MfDfa => {
                if scales[0] <= self.dfa_poly_order + 1 {
                    return Err(MfaError::Config(format!(
                        "scale {} too small for polynomial order {}",
                        scales[0], self.dfa_poly_order
                    )));
                }
            }
            Method::FsMfa | Method::MfDhv => {
                if self.vol_window < 2 || n <= self.vol_window {
                    return Err(MfaError::Config(format!(
                        "volatility window {} needs 2 <= window < {n}",
                        self.vol_window
                    )));
                }
            }
        }
        Ok(scales)
    }
}

/// −10 to 10 in steps of 0.5.
pub fn default_q_grid() -> Vec<f64> {
    (0..41).map(|i| -10.0 + 0.5 * i as f64).collect()
}

/// `count` log-spaced integers in `[min, max]`, rounded and deduplicated.
pub fn log_spaced_scales(min: usize, max: usize, count: usize) -> Vec<usize> {
    if min == 0 || max < min || count == 0 {
        return Vec::new();
    }
    if count == 1 || min == max {
        return vec![min];
    }
    let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| {
            (lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .exp()
                .round() as usize
        })
        .map(|s| s.clamp(min, max))
        .collect();
    out.dedup();
    out
}

/// Cumulative sum of mean-centred samples.
pub fn profile_series(values: &[f64]) -> Vec<f64> {
    let n = values.len().max(1) as f64;
    let rough = values.iter().sum::<f64>() / n;
    // Second pass removes the rounding in the first, so constants profile to exactly zero.
    let mean = rough + values.iter().map(|v| v - rough).sum::<f64>() / n;
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v - mean;
            Some(*acc)
        })
        .collect()
}

/// Trailing population standard deviation of first differences.
///
/// Position `i` (1-based) uses the `window` differences ending at `i`, so it
/// is defined from `window + 1` on; earlier positions repeat that first value.
pub fn historical_volatility(y: &[f64], window: usize) -> Result<Vec<f64>, MfaError> {
    let n = y.len();
    if window < 2 {
        return Err(MfaError::Config("volatility window must be >= 2".into()));
    }
    if n <= window {
        return Err(MfaError::TooShort {
            n,
            reason: format!("volatility window {window}"),
        });
    }
    let diffs: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let w = window as f64;
    let mut theta = vec![0.0; n];
    for i in window..n {
        // diffs[j] = y[j + 1] - y[j]; the window ending at y[i] is diffs[i - window..i].
        let chunk = &diffs[i - window..i];
        let mean = chunk.iter().sum::<f64>() / w;
        theta[i] = (chunk.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / w).sqrt();
    }
    let first = theta[window];
    theta[..window].iter_mut().for_each(|t| *t = first);
    Ok(theta)
}

/// Volatility-weighted moving trend with memory `s`.
///
/// `y'_1` is the mean of `Y_s..Y_{2s-1}`; afterwards
/// `y'_i = (A/B)·y'_{i-1} + (θ_i/B)·Y_i` with `A = Σ_{t=1..s} θ_{i-t}` and
/// `B = A + θ_i`, evaluated as the convex step `y'_{i-1} + (θ_i/B)(Y_i − y'_{i-1})`.
/// Positions before the start reuse `θ_1`. A zero denominator holds the trend.
pub fn weighted_trend(y: &[f64], theta: &[f64], s: usize) -> Result<Vec<f64>, MfaError> {
    let n = y.len();
    if theta.len() != n {
        return Err(MfaError::Config(format!(
            "θ has length {}, series {n}",
            theta.len()
        )));
    }
    if s == 0 || n < 4 * s {
        return Err(MfaError::TooShort {
            n,
            reason: format!("trend scale {s} needs 4s samples"),
        });
    }
    // prefix[k] sums the first k entries of θ left-padded with s copies of θ_1.
    let mut prefix = Vec::with_capacity(n + s + 1);
    prefix.push(0.0);
    for k in 0..n + s {
        let t = if k < s { theta[0] } else { theta[k - s] };
        prefix.push(prefix[k] + t);
    }
    let mut trend = vec![0.0; n];
    trend[0] = y[s - 1..2 * s - 1].iter().sum::<f64>() / s as f64;
    for i in 1..n {
        let prev = trend[i - 1];
        let lagged = (prefix[i + s] - prefix[i]).max(0.0);
        let denom = lagged + theta[i];
        trend[i] = if denom > 0.0 {
            prev + theta[i] / denom * (y[i] - prev)
        } else {
            prev
        };
    }
    Ok(trend)
}

/// `D(k) = y'_k − Y_k` for `2s ≤ k ≤ N` (1-based); length `N − 2s + 1`.
pub fn detrend(y: &[f64], trend: &[f64], s: usize) -> Result<Vec<f64>, MfaError> {
    let n = y.len();
    if trend.len() != n {
        return Err(MfaError::Config(format!(
            "trend has length {}, series {n}",
            trend.len()
        )));
    }
    if s == 0 || 2 * s > n {
        return Err(MfaError::TooShort {
            n,
            reason: format!("detrending from k = 2s = {}", 2 * s),
        });
    }
    Ok((2 * s - 1..n).map(|i| trend[i] - y[i]).collect())
}

/// Mean square of each of the `⌊|d|/s⌋` consecutive windows; the tail is dropped.
pub fn window_variances(d: &[f64], s: usize) -> Result<Vec<f64>, MfaError> {
    if s == 0 || d.len() < s {
        return Err(MfaError::TooShort {
            n: d.len(),
            reason: format!("window scale {s}"),
        });
    }
    Ok(d.chunks_exact(s)
        .map(|w| w.iter().map(|x| x * x).sum::<f64>() / s as f64)
        .collect())
}

/// `ln F_q` from window variances; `None` marks a degenerate entry (a zero
/// variance with `q ≤ 0`, or no positive variance at all).
pub fn log_fluctuation(variances: &[f64], q: f64) -> Option<f64> {
    let w = variances.len();
    if w == 0 {
        return None;
    }
    let has_zero = variances.iter().any(|&v| v <= 0.0);
    if has_zero && q <= 0.0 {
        return None;
    }
    if q == 0.0 {
        return Some(0.5 * variances.iter().map(|v| v.ln()).sum::<f64>() / w as f64);
    }
    let terms: Vec<f64> = variances
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|v| 0.5 * q * v.ln())
        .collect();
    if terms.is_empty() {
        return None;
    }
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln();
    Some((lse - (w as f64).ln()) / q)
}

/// `F_q(s) = [mean(σ²^{q/2})]^{1/q}`, or the geometric form at `q = 0`.
pub fn fluctuation(variances: &[f64], q: f64) -> Option<f64> {
    log_fluctuation(variances, q).map(f64::exp)
}

/// Orthonormal polynomial basis of the given order on `s` equispaced points.
fn polynomial_basis(s: usize, order: usize) -> Vec<Vec<f64>> {
    let xs: Vec<f64> = (0..s)
        .map(|j| {
            if s > 1 {
                2.0 * j as f64 / (s - 1) as f64 - 1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
    for p in 0..=order {
        let mut v: Vec<f64> = xs.iter().map(|x| x.powi(p as i32)).collect();
        // Two Gram-Schmidt passes keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    basis
}

/// Per-window mean squared residual of a least-squares polynomial fit.
pub fn polynomial_detrend_variances(
    y: &[f64],
    s: usize,
    order: usize,
) -> Result<Vec<f64>, MfaError> {
    if s <= order + 1 {
        return Err(MfaError::Config(format!(
            "scale {s} too small for polynomial order {order}"
        )));
    }
    if y.len() < s {
        return Err(MfaError::TooShort {
            n: y.len(),
            reason: format!("window scale {s}"),
        });
    }
    let basis = polynomial_basis(s, order);
    let mut resid = vec![0.0; s];
    Ok(y.chunks_exact(s)
        .map(|w| {
            // Remove the mean directly so constant windows leave an exact zero.
            let mean = w.iter().sum::<f64>() / s as f64;
            resid.iter_mut().zip(w).for_each(|(r, v)| *r = v - mean);
            for b in &basis[1..] {
                let dot: f64 = resid.iter().zip(b).map(|(a, c)| a * c).sum();
                resid.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
            }
            resid.iter().map(|r| r * r).sum::<f64>() / s as f64
        })
        .collect())
}

/// `ln F_q(s)` over the `(q, s)` grid plus per-scale degeneracy bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationTable {
    pub q: Vec<f64>,
    pub scales: Vec<usize>,
    /// `log_f[qi][si]`; `None` where the entry is degenerate.
    pub log_f: Vec<Vec<Option<f64>>>,
    pub windows: Vec<usize>,
    pub zero_windows: Vec<usize>,
    /// Scales with more than half their windows at zero variance.
    pub dropped: Vec<bool>,
}

impl FluctuationTable {
    /// Scales with at least one zero-variance window.
    pub fn degenerate_scales(&self) -> Vec<usize> {
        self.scales
            .iter()
            .zip(&self.zero_windows)
            .filter(|(_, &z)| z > 0)
            .map(|(&s, _)| s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstRecord {
    pub q: f64,
    pub h: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_scales: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstProfile {
    pub method: Method,
    pub records: Vec<HurstRecord>,
    pub table: FluctuationTable,
    pub config: MfaConfig,
    pub denoise: Option<DenoiseDiagnostics>,
}

/// Plot-ready JSON shape of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstReport {
    pub format_version: u32,
    pub method: Method,
    pub q: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    pub r2: Vec<f64>,
    pub scales: Vec<usize>,
    #[serde(rename = "logF")]
    pub log_f: Vec<Vec<Option<f64>>>,
    pub degenerate_scales: Vec<usize>,
    pub dropped_scales: Vec<usize>,
    pub config: MfaConfig,
}

impl HurstProfile {
    pub fn h(&self, q: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| (r.q - q).abs() < 1e-12)
            .map(|r| r.h)
    }

    pub fn h_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.h).collect()
    }

    pub fn report(&self) -> HurstReport {
        HurstReport {
            format_version: FORMAT_VERSION,
            method: self.method,
            q: self.records.iter().map(|r| r.q).collect(),
            h: self.h_values(),
            r2: self.records.iter().map(|r| r.r_squared).collect(),
            scales: self.table.scales.clone(),
            log_f: self.table.log_f.clone(),
            degenerate_scales: self.table.degenerate_scales(),
            dropped_scales: self
                .table
                .scales
                .iter()
                .zip(&self.table.dropped)
                .filter(|(_, &d)| d)
                .map(|(&s, _)| s)
                .collect(),
            config: self.config.clone(),
        }
    }
}

/// Ordinary least squares of `ln F` on `ln s`.
fn fit_line(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

/// Fit every row of the table; `Err(valid_scales)` where a row has too few points.
pub fn fit_table(table: &FluctuationTable) -> Vec<Result<HurstRecord, usize>> {
    table
        .q
        .iter()
        .zip(&table.log_f)
        .map(|(&q, row)| {
            let points: Vec<(f64, f64)> = table
                .scales
                .iter()
                .zip(row)
                .filter_map(|(&s, lf)| lf.map(|v| ((s as f64).ln(), v)))
                .collect();
            if points.len() < MIN_FIT_SCALES {
                return Err(points.len());
            }
            let (h, intercept, r_squared) = fit_line(&points);
            Ok(HurstRecord {
                q,
                h,
                intercept,
                r_squared,
                n_scales: points.len(),
            })
        })
        .collect()
}

/// Window variances for every scale, following the configured method. The
/// input is the raw (or already denoised) series.
fn scale_variances(
    values: &[f64],
    cfg: &MfaConfig,
    scales: &[usize],
    exec: Execution,
) -> Result<Vec<Vec<f64>>, MfaError> {
    let y = profile_series(values);
    let per_scale: Vec<Result<Vec<f64>, MfaError>> = match cfg.method {
        Method::MfDfa => exec.map(scales, |&s| {
            polynomial_detrend_variances(&y, s, cfg.dfa_poly_order)
        }),
        Method::FsMfa | Method::MfDhv => {
            let theta = historical_volatility(&y, cfg.vol_window)?;
            exec.map(scales, |&s| {
                let trend = weighted_trend(&y, &theta, s)?;
                window_variances(&detrend(&y, &trend, s)?, s)
            })
        }
    };
    let mut out: Vec<Vec<f64>> = per_scale.into_iter().collect::<Result<_, _>>()?;

    // Variances at round-off level of the profile scale count as zero.
    let scale = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let tol = 1e-20 * scale;
    for v in out.iter_mut().flatten() {
        if *v <= tol {
            *v = 0.0;
        }
    }
    Ok(out)
}

/// Build the fluctuation table; also returns the denoising diagnostics for
/// `fs-mfa`.
pub fn fluctuation_table(
    s: &Series,
    cfg: &MfaConfig,
    exec: Execution,
) -> Result<(FluctuationTable, Option<DenoiseDiagnostics>), MfaError> {
    let scales = cfg.validate(s.len())?;
    let (values, diag) = match cfg.method {
        Method::FsMfa => {
            let d = fourier::denoise(s)?;
            (d.series.into_inner(), Some(d.diagnostics))
        }
        _ => (s.values().to_vec(), None),
    };
    let variances = scale_variances(&values, cfg, &scales, exec)?;
    let windows: Vec<usize> = variances.iter().map(Vec::len).collect();
    let zero_windows: Vec<usize> = variances
        .iter()
        .map(|v| v.iter().filter(|&&x| x == 0.0).count())
        .collect();
    let dropped: Vec<bool> = windows
        .iter()
        .zip(&zero_windows)
        .map(|(&w, &z)| 2 * z > w)
        .collect();

    let log_f = exec.map(&cfg.q_grid, |&q| {
        variances
            .iter()
            .zip(&dropped)
            .map(|(v, &drop)| if drop { None } else { log_fluctuation(v, q) })
            .collect()
    });
    let table = FluctuationTable {
        q: cfg.q_grid.clone(),
        scales,
        log_f,
        windows,
        zero_windows,
        dropped,
    };
    Ok((table, diag))
}

pub fn hurst_profile(s: &Series, cfg: &MfaConfig) -> Result<HurstProfile, MfaError> {
    hurst_profile_with(s, cfg, Execution::default())
}

pub fn hurst_profile_with(
    s: &Series,
    cfg: &MfaConfig,
    exec: Execution,
) -> Result<HurstProfile, MfaError> {
    let (table, denoise) = fluctuation_table(s, cfg, exec)?;
    let fits = fit_table(&table);
    let failures: Vec<(f64, usize)> = table
        .q
        .iter()
        .zip(&fits)
        .filter_map(|(&q, f)| f.as_ref().err().map(|&k| (q, k)))
        .collect();
    if !failures.is_empty() {
        return Err(MfaError::TooFewScales(failures));
    }
    let records = fits.into_iter().filter_map(Result::ok).collect();
    let mut config = cfg.clone();
    config.scales = ScaleSpec::Explicit(table.scales.clone());
    Ok(HurstProfile {
        method: cfg.method,
        records,
        table,
        config,
        denoise,
    })
}
