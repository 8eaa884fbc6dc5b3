//! Truncated Fourier-series denoising.
//!
//! A series is fitted by least squares against `{1, cos(uωk), sin(uωk)}` at
//! sample positions `k = 1..N`, where `ω = 2π/T` and `T` counts sign changes.
//! Terms are ranked by spectral energy; the retained order is the first point
//! where the per-term entropy gain turns down. The reconstruction from the
//! retained terms is the denoised series.
//!
//! Readings that go beyond the literal formulas are echoed in
//! [`DenoiseDiagnostics::notes`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{Series, SeriesError};

/// Upper bound on the fitted order used by [`denoise`].
pub const DEFAULT_TERM_CAP: usize = 64;

#[derive(Debug, Error)]
pub enum FourierError {
    #[error("need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("max_terms must be at least 1")]
    NoTerms,
    #[error("rank-deficient design: degenerate terms {0:?}")]
    RankDeficient(Vec<String>),
    #[error("order {r} outside [0, {max}]")]
    OrderOutOfRange { r: usize, max: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierModel {
    pub eta0: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub omega: f64,
    /// Number of samples the model was fitted on.
    pub len: usize,
    /// Normalised per-term energy `(α² + β²) / Σ(α² + β²)`.
    pub energy: Vec<f64>,
}

/// One row of the cumulative entropy table, in energy-rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyStep {
    pub rank: usize,
    /// Harmonic index `u` (1-based).
    pub term: usize,
    pub p: f64,
    pub cumulative: f64,
    pub gain: f64,
}

impl FourierModel {
    pub fn max_terms(&self) -> usize {
        self.alpha.len()
    }

    /// Zero-based term indices by descending energy (ties keep harmonic order).
    pub fn energy_ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.energy.len()).collect();
        idx.sort_by(|&a, &b| self.energy[b].total_cmp(&self.energy[a]).then(a.cmp(&b)));
        idx
    }

    pub fn entropy_table(&self) -> Vec<EntropyStep> {
        let mut cumulative = 0.0;
        self.energy_ranking()
            .into_iter()
            .enumerate()
            .map(|(rank, i)| {
                let p = self.energy[i];
                let gain = if p > 0.0 { -p * p.log2() } else { 0.0 };
                cumulative += gain;
                EntropyStep {
                    rank: rank + 1,
                    term: i + 1,
                    p,
                    cumulative,
                    gain,
                }
            })
            .collect()
    }

    /// `η₀ + Σ_{terms} (α_u cos(uωk) + β_u sin(uωk))` for `k = 1..N`.
    pub fn evaluate_terms(&self, terms: &[usize]) -> Vec<f64> {
        (1..=self.len)
            .map(|k| {
                let k = k as f64;
                terms.iter().fold(self.eta0, |acc, &i| {
                    let arg = (i + 1) as f64 * self.omega * k;
                    acc + self.alpha[i] * arg.cos() + self.beta[i] * arg.sin()
                })
            })
            .collect()
    }
}

/// Adjacent sign changes, zeros counted as positive.
pub fn sign_changes(values: &[f64]) -> usize {
    values
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count()
}

/// `2π/T` from the sign-change count, or `2π/N` when the series never changes sign.
pub fn angular_frequency(s: &Series) -> Result<f64, FourierError> {
    let n = s.len();
    if n < 2 {
        return Err(FourierError::TooShort { need: 2, got: n });
    }
    let t = sign_changes(s.values());
    Ok(2.0 * PI / if t == 0 { n } else { t } as f64)
}

pub fn fit_fourier(s: &Series, max_terms: usize) -> Result<FourierModel, FourierError> {
    let omega = angular_frequency(s)?;
    fit_fourier_at(s, omega, max_terms)
}

/// Least-squares fit of `max_terms` harmonics of a given `omega`.
pub fn fit_fourier_at(
    s: &Series,
    omega: f64,
    max_terms: usize,
) -> Result<FourierModel, FourierError> {
    if max_terms == 0 {
        return Err(FourierError::NoTerms);
    }
    let n = s.len();
    let cols = 2 * max_terms + 1;
    if n < cols {
        return Err(FourierError::TooShort { need: cols, got: n });
    }
    let design = DMatrix::from_fn(n, cols, |row, col| {
        if col == 0 {
            return 1.0;
        }
        let u = col.div_ceil(2) as f64;
        let arg = u * omega * (row + 1) as f64;
        if col % 2 == 1 {
            arg.cos()
        } else {
            arg.sin()
        }
    });
    // Every column is bounded by 1, so √N is the natural column scale. A sine
    // sampled only at its zeros has a norm of round-off size and must count
    // as degenerate.
    let tol = 1e-9 * (n as f64).sqrt();
    let qr = design.qr();
    let r = qr.r();

    let degenerate: Vec<String> = (0..cols)
        .filter(|&j| r[(j, j)].abs() <= tol)
        .map(|j| match j {
            0 => "1".to_string(),
            _ if j % 2 == 1 => format!("cos({}ωk)", j.div_ceil(2)),
            _ => format!("sin({}ωk)", j / 2),
        })
        .collect();
    if !degenerate.is_empty() {
        return Err(FourierError::RankDeficient(degenerate));
    }

    let mut rhs = DVector::from_column_slice(s.values());
    qr.q_tr_mul(&mut rhs);
    let rhs = rhs.rows(0, cols).into_owned();
    let coef = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| FourierError::RankDeficient(vec!["triangular solve failed".into()]))?;

    let mut alpha: Vec<f64> = (0..max_terms).map(|u| coef[2 * u + 1]).collect();
    let mut beta: Vec<f64> = (0..max_terms).map(|u| coef[2 * u + 2]).collect();
    let raw: Vec<f64> = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| a * a + b * b)
        .collect();
    let total: f64 = raw.iter().sum();
    // Energy below round-off of the input scale is treated as none at all.
    let scale = s.values().iter().map(|v| v * v).sum::<f64>() / n as f64;
    let energy = if total > 1e-20 * scale && total > 0.0 {
        raw.iter().map(|e| e / total).collect()
    } else {
        alpha.fill(0.0);
        beta.fill(0.0);
        vec![1.0 / max_terms as f64; max_terms]
    };
    Ok(FourierModel {
        eta0: coef[0],
        alpha,
        beta,
        omega,
        len: n,
        energy,
    })
}

/// First rank `u` whose successor's entropy gain is smaller; `r_max` when the
/// gain never turns down.
pub fn select_order(m: &FourierModel) -> usize {
    let table = m.entropy_table();
    table
        .windows(2)
        .find(|w| w[1].gain < w[0].gain - 1e-12)
        .map_or(table.len(), |w| w[0].rank)
}

/// Evaluate the mean level plus the `r` highest-energy terms.
pub fn reconstruct(m: &FourierModel, r: usize) -> Result<Series, FourierError> {
    if r > m.max_terms() {
        return Err(FourierError::OrderOutOfRange {
            r,
            max: m.max_terms(),
        });
    }
    let ranking = m.energy_ranking();
    Ok(Series::new(m.evaluate_terms(&ranking[..r]))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseDiagnostics {
    pub omega: f64,
    pub sign_changes: usize,
    pub max_terms: usize,
    pub r_selected: usize,
    pub entropy_table: Vec<EntropyStep>,
    pub energy: Vec<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Denoised {
    pub series: Series,
    pub model: FourierModel,
    pub r: usize,
    pub diagnostics: DenoiseDiagnostics,
}

pub fn denoise(s: &Series) -> Result<Denoised, FourierError> {
    denoise_with_cap(s, DEFAULT_TERM_CAP)
}

/// Sign-change frequency → fit → entropy order → reconstruction.
///
/// The fitted order is `min(⌊N/4⌋, cap, u*)` where `u*` is the number of
/// harmonics strictly below the Nyquist frequency; harmonics at or above it
/// alias onto lower ones and make the design singular. When `T ≤ 2` no
/// harmonic of `2π/T` survives and the `2π/N` fallback frequency is used.
pub fn denoise_with_cap(s: &Series, cap: usize) -> Result<Denoised, FourierError> {
    let n = s.len();
    if n < 16 {
        return Err(FourierError::TooShort { need: 16, got: n });
    }
    let t = sign_changes(s.values());
    let mut notes = vec![
        "p_i read as normalised spectral energy (α_u² + β_u²) of each harmonic".to_string(),
        "order chosen at the first downturn of the ranked entropy gain I(u) - I(u-1)".to_string(),
    ];
    let period = if t <= 2 {
        notes.push(format!("{t} sign changes: fallback ω = 2π/N"));
        n
    } else {
        t
    };
    let omega = 2.0 * PI / period as f64;
    let below_nyquist = (period - 1) / 2;
    let max_terms = (n / 4).min(cap.max(1)).min(below_nyquist);
    if max_terms == below_nyquist && below_nyquist < (n / 4).min(cap) {
        notes.push(format!(
            "order capped at {max_terms} harmonics below Nyquist"
        ));
    }

    let model = fit_fourier_at(s, omega, max_terms)?;
    let r = select_order(&model);
    let series = reconstruct(&model, r)?;
    let diagnostics = DenoiseDiagnostics {
        omega,
        sign_changes: t,
        max_terms,
        r_selected: r,
        entropy_table: model.entropy_table(),
        energy: model.energy.clone(),
        notes,
    };
    Ok(Denoised {
        series,
        model,
        r,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(v: Vec<f64>) -> Series {
        Series::new(v).unwrap()
    }

    fn rmse(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    fn model_with_energy(energy: Vec<f64>) -> FourierModel {
        let r = energy.len();
        FourierModel {
            eta0: 0.0,
            alpha: vec![0.0; r],
            beta: vec![0.0; r],
            omega: 1.0,
            len: 8,
            energy,
        }
    }

    #[test]
    fn angular_frequency_examples() {
        let w = angular_frequency(&series(vec![1.0, -1.0, 1.0, -1.0])).unwrap();
        assert!((w - 2.0 * PI / 3.0).abs() < 1e-15);
        let w = angular_frequency(&series(vec![1.0, 2.0, 3.0])).unwrap();
        assert!((w - 2.0 * PI / 3.0).abs() < 1e-15);
        assert!(angular_frequency(&series(vec![1.0])).is_err());
        // Zeros count as positive.
        assert_eq!(sign_changes(&[0.0, 1.0, 0.0, -1.0]), 1);
    }

    #[test]
    fn sine_with_ten_crossings() {
        // Phase φ_k = πk/10 + 0.05 runs from 0.36 to 10π + 0.05, so it passes
        // exactly the multiples π, 2π, …, 10π.
        let phase = |k: usize| PI * k as f64 / 10.0 + 0.05;
        let s = series((1..=100).map(|k| phase(k).sin()).collect());
        let oracle = (phase(100) / PI).floor() as usize - (phase(1) / PI).floor() as usize;
        assert_eq!(oracle, 10);
        assert_eq!(sign_changes(s.values()), oracle);
        assert!((angular_frequency(&s).unwrap() - PI / 5.0).abs() < 1e-15);
    }

    #[test]
    fn constant_fit() {
        let m = fit_fourier_at(&series(vec![2.5; 40]), 2.0 * PI / 40.0, 5).unwrap();
        assert!((m.eta0 - 2.5).abs() < 1e-9);
        assert!(m.alpha.iter().chain(&m.beta).all(|c| c.abs() < 1e-9));
        assert!(m.energy.iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn cosine_at_its_own_frequency() {
        // cos(πk/5) over 50 samples changes sign 10 times, so ω = π/5.
        let s = series((1..=50).map(|k| (PI * k as f64 / 5.0).cos()).collect());
        let m = fit_fourier(&s, 4).unwrap();
        assert!((m.omega - PI / 5.0).abs() < 1e-15);
        assert!((m.alpha[0] - 1.0).abs() < 1e-6);
        assert!(m.eta0.abs() < 1e-6);
        assert!(m.alpha[1..].iter().chain(&m.beta).all(|c| c.abs() < 1e-6));
    }

    #[test]
    fn nyquist_harmonic_is_reported_degenerate() {
        let s = series((1..=50).map(|k| (PI * k as f64 / 5.0).cos()).collect());
        match fit_fourier(&s, 5) {
            Err(FourierError::RankDeficient(terms)) => assert_eq!(terms, vec!["sin(5ωk)"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            fit_fourier(&s, 30),
            Err(FourierError::TooShort { .. })
        ));
    }

    #[test]
    fn residual_is_orthogonal_to_basis() {
        let s = crate::series::synth_gaussian_noise(300, 11).unwrap();
        let omega = 2.0 * PI / 150.0;
        let m = fit_fourier_at(&s, omega, 12).unwrap();
        let all: Vec<usize> = (0..12).collect();
        let fit = m.evaluate_terms(&all);
        let resid: Vec<f64> = s.values().iter().zip(&fit).map(|(a, b)| a - b).collect();
        assert!(resid.iter().sum::<f64>().abs() < 1e-6);
        for u in 1..=12 {
            let dot = |f: fn(f64) -> f64| -> f64 {
                resid
                    .iter()
                    .enumerate()
                    .map(|(i, r)| r * f(u as f64 * omega * (i + 1) as f64))
                    .sum()
            };
            assert!(dot(f64::cos).abs() < 1e-6);
            assert!(dot(f64::sin).abs() < 1e-6);
        }
    }

    #[test]
    fn select_order_examples() {
        let m = model_with_energy(vec![0.5, 0.5, 0.0, 0.0]);
        let cum: Vec<f64> = m.entropy_table().iter().map(|s| s.cumulative).collect();
        assert_eq!(cum, vec![0.5, 1.0, 1.0, 1.0]);
        assert_eq!(select_order(&m), 2);

        assert_eq!(select_order(&model_with_energy(vec![0.125; 8])), 8);

        // Hand tabulation: -p log2 p for 0.7, 0.2, 0.05 is 0.3602, 0.4644, 0.2161.
        let m = model_with_energy(vec![0.05, 0.7, 0.05, 0.2]);
        let gains: Vec<f64> = m.entropy_table().iter().map(|s| s.gain).collect();
        for (g, want) in gains.iter().zip([0.360201, 0.464386, 0.216096, 0.216096]) {
            assert!((g - want).abs() < 1e-5, "{g} vs {want}");
        }
        assert_eq!(select_order(&m), 2);
        assert_eq!(m.entropy_table()[0].term, 2);
    }

    #[test]
    fn reconstruct_examples() {
        let omega = PI / 5.0;
        let exact: Vec<f64> = (1..=50)
            .map(|k| {
                let k = k as f64;
                0.3 + (omega * k).cos() + 0.5 * (2.0 * omega * k).sin()
                    - 0.2 * (3.0 * omega * k).cos()
            })
            .collect();
        let m = fit_fourier_at(&series(exact.clone()), omega, 4).unwrap();
        let full = reconstruct(&m, 4).unwrap();
        assert!(rmse(full.values(), &exact) < 1e-8);
        let flat = reconstruct(&m, 0).unwrap();
        assert!(flat.values().iter().all(|&v| v == m.eta0));
        assert!(matches!(
            reconstruct(&m, 5),
            Err(FourierError::OrderOutOfRange { .. })
        ));
    }

    #[test]
    fn denoise_examples() {
        // cos(πk/10 + 0.3) over 200 samples has 20 crossings: ω matches the
        // signal and every retained term is signal.
        let clean: Vec<f64> = (1..=200)
            .map(|k| (PI * k as f64 / 10.0 + 0.3).cos())
            .collect();
        let d = denoise(&series(clean.clone())).unwrap();
        assert_eq!(d.diagnostics.sign_changes, 20);
        assert!(pearson(d.series.values(), &clean) > 0.99);

        let c = denoise(&series(vec![-1.25; 64])).unwrap();
        assert!(c.series.values().iter().all(|v| (v + 1.25).abs() < 1e-9));
        let level = c.series.values()[0];
        assert!(c.series.values().iter().all(|&v| v == level));

        assert!(matches!(
            denoise(&series(vec![1.0; 15])),
            Err(FourierError::TooShort { .. })
        ));
    }

    #[test]
    fn denoise_few_crossings_uses_fallback() {
        let s = series(
            (0..64)
                .map(|k| if k < 30 { 1.0 + k as f64 } else { -2.0 })
                .collect(),
        );
        let d = denoise(&s).unwrap();
        assert_eq!(d.diagnostics.sign_changes, 1);
        assert!((d.diagnostics.omega - 2.0 * PI / 64.0).abs() < 1e-15);
        assert!(d.diagnostics.notes.iter().any(|n| n.contains("fallback")));
    }

    pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    proptest! {
        #[test]
        fn energy_is_a_distribution_and_residual_monotone(seed in 0u64..500, n in 40usize..120) {
            let s = crate::series::synth_gaussian_noise(n, seed).unwrap();
            let d = denoise(&s).unwrap();
            let m = &d.model;
            prop_assert!(m.energy.iter().all(|&p| p >= 0.0));
            prop_assert!((m.energy.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((1..=m.max_terms()).contains(&d.r));
            let table = m.entropy_table();
            prop_assert!(table.windows(2).all(|w| w[1].cumulative >= w[0].cumulative));
            let mut prev = f64::INFINITY;
            for r in 0..=m.max_terms() {
                let e = rmse(reconstruct(m, r).unwrap().values(), s.values());
                prop_assert!(e <= prev + 1e-9, "r={} rmse {} > {}", r, e, prev);
                prev = e;
            }
            let again = denoise(&s).unwrap();
            prop_assert_eq!(again.series.values(), d.series.values());
        }
    }
}
