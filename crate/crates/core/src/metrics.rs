//! Scalar evaluations of trials: error, effort, signal quality, delay,
//! muscle coactivation and paired significance tests.
//!
//! Time integrals are rectangle-rule sums over the samples, so `1/T ∫ x² dt`
//! becomes the plain mean of the squared samples.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::units::rad_to_deg;
use crate::{Error, Result};

fn check_nonempty(x: &[f64], what: &str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Contract(format!("{what} series is empty")));
    }
    Ok(())
}

fn check_same_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!(
            "series lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Contract(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// RMS of `q* − q` in degrees, with both series in radians.
pub fn rms_tracking_error(q: &[f64], q_star: &[f64], dt: f64) -> Result<f64> {
    check_same_len(q, q_star)?;
    check_nonempty(q, "position")?;
    check_dt(dt)?;
    let ms = q.iter().zip(q_star).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / q.len() as f64;
    Ok(rad_to_deg(ms.sqrt()))
}

/// RMS torque (Nm).
pub fn rms_effort(tau: &[f64], dt: f64) -> Result<f64> {
    check_nonempty(tau, "torque")?;
    check_dt(dt)?;
    Ok(mean_square(tau).sqrt())
}

/// `10·log10(P_signal / P_noise)` with mean-square powers.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> Result<f64> {
    check_nonempty(signal, "signal")?;
    check_nonempty(noise, "noise")?;
    let ps = mean_square(signal);
    let pn = mean_square(noise);
    if pn == 0.0 {
        return Err(Error::DivisionByZero("noise power is zero".into()));
    }
    if ps == pn {
        return Ok(0.0);
    }
    Ok(10.0 * (ps / pn).log10())
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_len(x, y)?;
    if x.len() < 2 {
        return Err(Error::Contract("correlation needs at least two samples".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DivisionByZero("correlation of a constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Maximum lag searched by [`xcorr_delay`] (s).
pub const XCORR_WINDOW_S: f64 = 2.0;

/// Normalised cross-correlation at integer lags.
///
/// Lag `L > 0` pairs `predicted[i + L]` with `truth[i]`, so a positive lag
/// means the prediction trails the truth. Both series are centred on their
/// full-length means; each lag is normalised by the energy of its overlap.
pub fn xcorr(predicted: &[f64], truth: &[f64], max_lag: usize) -> Result<Vec<(isize, f64)>> {
    check_same_len(predicted, truth)?;
    let n = predicted.len();
    let (mp, mt) = (mean(predicted), mean(truth));
    let a: Vec<f64> = predicted.iter().map(|v| v - mp).collect();
    let b: Vec<f64> = truth.iter().map(|v| v - mt).collect();
    let max_lag = max_lag.min(n - 2) as isize;
    let corr = |x: &[f64], y: &[f64]| -> f64 {
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (u, v) in x.iter().zip(y) {
            sxy += u * v;
            sxx += u * u;
            syy += v * v;
        }
        let den = (sxx * syy).sqrt();
        if den > 0.0 {
            sxy / den
        } else {
            f64::NEG_INFINITY
        }
    };
    let out: Vec<(isize, f64)> = (-max_lag..=max_lag)
        .map(|lag| {
            let l = lag.unsigned_abs();
            let c = if lag >= 0 {
                corr(&a[l..], &b[..n - l])
            } else {
                corr(&a[..n - l], &b[l..])
            };
            (lag, c)
        })
        .collect();
    if out.iter().all(|(_, c)| *c == f64::NEG_INFINITY) {
        return Err(Error::DivisionByZero("cross-correlation of a constant series".into()));
    }
    Ok(out)
}

/// Lag (s) maximising the normalised cross-correlation within ±2 s.
pub fn xcorr_delay(predicted: &[f64], truth: &[f64], dt: f64) -> Result<f64> {
    check_dt(dt)?;
    if predicted.len() < 16 {
        return Err(Error::Contract("delay estimation needs at least 16 samples".into()));
    }
    let max_lag = (XCORR_WINDOW_S / dt).round() as usize;
    let c = xcorr(predicted, truth, max_lag)?;
    // Ties resolve towards the smallest absolute lag.
    let best = c
        .iter()
        .copied()
        .reduce(|best, cur| {
            if cur.1 > best.1 || (cur.1 == best.1 && cur.0.abs() < best.0.abs()) {
                cur
            } else {
                best
            }
        })
        .expect("at least one lag");
    Ok(best.0 as f64 * dt)
}

/// Mean of `τ_f + |τ_e|` (Nm).
pub fn coactivation_effort(tau_f: &[f64], tau_e: &[f64], dt: f64) -> Result<f64> {
    check_same_len(tau_f, tau_e)?;
    check_nonempty(tau_f, "flexor torque")?;
    check_dt(dt)?;
    Ok(tau_f.iter().zip(tau_e).map(|(f, e)| f + e.abs()).sum::<f64>() / tau_f.len() as f64)
}

/// Least-squares `τ = a·u + b` with `a, b ≥ 0`.
pub fn fit_torque_regression(envelope: &[f64], torque: &[f64]) -> Result<(f64, f64)> {
    check_same_len(envelope, torque)?;
    if envelope.len() < 2 {
        return Err(Error::Contract("regression needs at least two samples".into()));
    }
    let n = envelope.len() as f64;
    let (mu, mt) = (mean(envelope), mean(torque));
    let suu: f64 = envelope.iter().map(|u| (u - mu) * (u - mu)).sum();
    if suu <= 1e-12 * envelope.iter().map(|u| u * u).sum::<f64>().max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient("envelope is constant".into()));
    }
    let sut: f64 = envelope.iter().zip(torque).map(|(u, t)| (u - mu) * (t - mt)).sum();
    let sse = |a: f64, b: f64| -> f64 { envelope.iter().zip(torque).map(|(u, t)| (t - a * u - b).powi(2)).sum() };
    let a = sut / suu;
    let b = mt - a * mu;
    if a >= 0.0 && b >= 0.0 {
        return Ok((a, b));
    }
    // Active set: the optimum lies on a face of the feasible quadrant.
    let uu: f64 = envelope.iter().map(|u| u * u).sum();
    let ut: f64 = envelope.iter().zip(torque).map(|(u, t)| u * t).sum();
    let mut candidates = vec![(0.0, 0.0)];
    if uu > 0.0 && ut > 0.0 {
        candidates.push((ut / uu, 0.0));
    }
    if mt > 0.0 {
        candidates.push((0.0, torque.iter().sum::<f64>() / n));
    }
    Ok(candidates
        .into_iter()
        .min_by(|x, y| sse(x.0, x.1).total_cmp(&sse(y.0, y.1)))
        .expect("nonempty"))
}

/// Min-max normalisation of `value` against a participant's values.
pub fn normalize_metric(values: &[f64], value: f64) -> Result<f64> {
    check_nonempty(values, "normalisation")?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Err(Error::DivisionByZero("all values are equal".into()));
    }
    if value < lo || value > hi {
        return Err(Error::Domain(format!("{value} outside [{lo}, {hi}]")));
    }
    Ok((value - lo) / (hi - lo))
}

/// Error weight in the human cost.
pub const HUMAN_ERROR_WEIGHT: f64 = 0.70;
/// Effort weight in the human cost.
pub const HUMAN_EFFORT_WEIGHT: f64 = 0.30;

pub fn human_cost(e_n: f64, tau_n: f64) -> f64 {
    HUMAN_ERROR_WEIGHT * e_n + HUMAN_EFFORT_WEIGHT * tau_n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    T,
    Wilcoxon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// t statistic, or the positive-rank sum W+ for the signed-rank test.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p: f64,
    /// Pairs entering the test (nonzero differences for the signed-rank test).
    pub n: usize,
    /// The differences had zero spread; the p-value is a limit, not a test.
    pub zero_variance: bool,
}

/// Largest number of nonzero differences evaluated by exact enumeration.
pub const WILCOXON_EXACT_MAX: usize = 25;

pub fn paired_test(x: &[f64], y: &[f64], kind: TestKind) -> Result<TestResult> {
    check_same_len(x, y)?;
    if x.len() < 5 {
        return Err(Error::Contract("paired tests need at least 5 pairs".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    match kind {
        TestKind::T => paired_t(&d),
        TestKind::Wilcoxon => wilcoxon(&d),
    }
}

fn paired_t(d: &[f64]) -> Result<TestResult> {
    let n = d.len();
    let m = mean(d);
    let var = d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        let (statistic, p) = if m == 0.0 {
            (0.0, 1.0)
        } else {
            (m.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TestResult {
            statistic,
            p,
            n,
            zero_variance: m != 0.0,
        });
    }
    let t = m / (var / n as f64).sqrt();
    let nu = (n - 1) as f64;
    let p = beta_reg(nu / 2.0, 0.5, nu / (nu + t * t)).clamp(0.0, 1.0);
    Ok(TestResult {
        statistic: t,
        p,
        n,
        zero_variance: false,
    })
}

/// Average ranks (1-based) of `v`, ties sharing the mean rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn wilcoxon(d: &[f64]) -> Result<TestResult> {
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return Err(Error::NoNonzeroDifferences);
    }
    let abs: Vec<f64> = nz.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    let p = if n <= WILCOXON_EXACT_MAX {
        // Doubled ranks are integers even with ties.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0.0_f64; total + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let w2 = (2.0 * w_plus).round() as usize;
        let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
        let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
        (2.0 * lower.min(upper)).min(1.0)
    } else {
        let nf = n as f64;
        let mut tie_term = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let z = (w_plus - mu) / var.sqrt();
            erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
        }
    };
    Ok(TestResult {
        statistic: w_plus,
        p,
        n,
        zero_variance: false,
    })
}

/// Per-trial values of one metric with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MetricSummary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        let (mean, std) = match n {
            0 => (f64::NAN, 0.0),
            1 => (values[0], 0.0),
            _ => {
                let m = mean(&values);
                let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
                (m, v.sqrt())
            }
        };
        Self { values, mean, std, n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::deg_to_rad;

    #[test]
    fn rms_error_examples() {
        let q = vec![0.1, 0.2, -0.3];
        assert_eq!(rms_tracking_error(&q, &q, 0.01).unwrap(), 0.0);
        let off: Vec<f64> = q.iter().map(|v| v + deg_to_rad(2.0)).collect();
        assert!((rms_tracking_error(&q, &off, 0.01).unwrap() - 2.0).abs() < 1e-12);
        // Whole periods of a sinusoid.
        let n = 1000;
        let amp = deg_to_rad(3.0);
        let star: Vec<f64> = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let zero = vec![0.0; n];
        let r = rms_tracking_error(&zero, &star, 0.01).unwrap();
        assert!((r - 3.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(rms_tracking_error(&zero, &star[1..], 0.01).is_err());
    }

    #[test]
    fn effort_examples() {
        assert_eq!(rms_effort(&[0.0; 5], 0.01).unwrap(), 0.0);
        assert_eq!(rms_effort(&[3.0; 5], 0.01).unwrap(), 3.0);
    }

    #[test]
    fn snr_examples() {
        let s = vec![1.0, -2.0, 0.5];
        assert_eq!(snr_db(&s, &s).unwrap(), 0.0);
        let r = snr_db(&[2.0, -2.0], &[1.0, 1.0]).unwrap();
        assert!((r - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!((r - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn correlation_examples() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let y2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let yn: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &y2).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_r(&x, &yn).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn delay_of_a_constructed_shift() {
        let truth: Vec<f64> = (0..1000)
            .map(|i| (i as f64 * 0.013).sin() + (i as f64 * 0.031).cos())
            .collect();
        assert_eq!(xcorr_delay(&truth, &truth, 0.01).unwrap(), 0.0);
        let mut shifted = vec![truth[0]; 5];
        shifted.extend_from_slice(&truth[..995]);
        assert!((xcorr_delay(&shifted, &truth, 0.01).unwrap() - 0.05).abs() < 1e-12);
        assert!(xcorr_delay(&truth[..10], &truth[..10], 0.01).is_err());
    }

    #[test]
    fn coactivation_examples() {
        assert_eq!(coactivation_effort(&[1.0; 4], &[-1.0; 4], 0.01).unwrap(), 2.0);
        assert_eq!(coactivation_effort(&[0.0; 4], &[0.0; 4], 0.01).unwrap(), 0.0);
    }

    #[test]
    fn regression_examples() {
        let u = [0.5, 1.0, 1.5, 2.0];
        let t: Vec<f64> = u.iter().map(|x| 2.0 * x + 1.0).collect();
        let (a, b) = fit_torque_regression(&u, &t).unwrap();
        assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        // A negative intercept is clamped; the slope is refit through the origin.
        let t: Vec<f64> = u.iter().map(|x| 2.0 * x - 0.5).collect();
        let (a, b) = fit_torque_regression(&u, &t).unwrap();
        let ut: f64 = u.iter().zip(&t).map(|(x, y)| x * y).sum();
        let uu: f64 = u.iter().map(|x| x * x).sum();
        assert_eq!(b, 0.0);
        assert!((a - ut / uu).abs() < 1e-12);
        assert!(matches!(
            fit_torque_regression(&[1.0; 4], &t),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn calibration_ramp_is_reproduced() {
        let (a0, b0) = (0.8, 0.35);
        let torque: Vec<f64> = (0..400).map(|i| 1.0 + 3.0 * i as f64 / 399.0).collect();
        let env: Vec<f64> = torque.iter().map(|t| (t - b0) / a0).collect();
        let (a, b) = fit_torque_regression(&env, &torque).unwrap();
        assert!((a - a0).abs() < 1e-9 && (b - b0).abs() < 1e-9);
    }

    #[test]
    fn normalisation_examples() {
        let v = [2.0, 3.0, 6.0];
        assert_eq!(normalize_metric(&v, 2.0).unwrap(), 0.0);
        assert_eq!(normalize_metric(&v, 6.0).unwrap(), 1.0);
        assert_eq!(normalize_metric(&v, 4.0).unwrap(), 0.5);
    }

    #[test]
    fn human_cost_weights() {
        assert_eq!(human_cost(1.0, 0.0), 0.70);
        assert_eq!(human_cost(0.0, 1.0), 0.30);
        assert_eq!(human_cost(0.0, 0.0), 0.0);
    }

    #[test]
    fn identical_samples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = paired_test(&x, &x, TestKind::T).unwrap();
        assert_eq!(r.p, 1.0);
        assert!(matches!(
            paired_test(&x, &x, TestKind::Wilcoxon),
            Err(Error::NoNonzeroDifferences)
        ));
        let y: Vec<f64> = x.iter().map(|v| v - 1.0).collect();
        let r = paired_test(&x, &y, TestKind::T).unwrap();
        assert!(r.zero_variance && r.p == 0.0);
    }

    #[test]
    fn t_test_matches_reference_value() {
        // Differences 1..=6 with one negative: t = 1.7693 on 5 degrees of freedom.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 0.0];
        let y = [0.0, 0.0, 0.0, 0.0, 0.0, 6.0];
        let r = paired_test(&x, &y, TestKind::T).unwrap();
        let d = [1.0, 2.0, 3.0, 4.0, 5.0, -6.0];
        let m = mean(&d);
        let s = (d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 5.0).sqrt();
        assert!((r.statistic - m / (s / 6f64.sqrt())).abs() < 1e-12);
        // Two-sided tail of t(5) at |t| = 0.6455 from the closed-form CDF via numerical integration.
        let density = |t: f64| {
            let nu = 5.0_f64;
            let c = statrs::function::gamma::gamma((nu + 1.0) / 2.0)
                / ((nu * std::f64::consts::PI).sqrt() * statrs::function::gamma::gamma(nu / 2.0));
            c * (1.0 + t * t / nu).powf(-(nu + 1.0) / 2.0)
        };
        let t = r.statistic.abs();
        let steps = 200_000;
        let h = t / steps as f64;
        let inner: f64 = (0..steps).map(|i| density((i as f64 + 0.5) * h) * h).sum();
        let p = 1.0 - 2.0 * inner;
        assert!((r.p - p).abs() < 1e-8, "{} vs {}", r.p, p);
    }

    #[test]
    fn signed_rank_matches_enumeration() {
        let x = [125.0, 115.0, 130.0, 140.0, 140.0, 115.0, 140.0, 125.0, 140.0, 135.0];
        let y = [110.0, 122.0, 125.0, 120.0, 140.0, 124.0, 123.0, 137.0, 135.0, 145.0];
        let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
        let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let n = d.len();
        let (mut le, mut ge) = (0usize, 0usize);
        for mask in 0u32..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            if w <= observed + 1e-9 {
                le += 1;
            }
            if w >= observed - 1e-9 {
                ge += 1;
            }
        }
        let p = (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0);
        let r = paired_test(&x, &y, TestKind::Wilcoxon).unwrap();
        assert_eq!(r.n, 9);
        assert_eq!(r.statistic, observed);
        assert!((r.p - p).abs() < 1e-12);
    }

    #[test]
    fn signed_rank_normal_approximation_for_large_samples() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() + 0.4).collect();
        let y = vec![0.0; 40];
        let r = paired_test(&x, &y, TestKind::Wilcoxon).unwrap();
        assert_eq!(r.n, 40);
        assert!(r.p > 0.0 && r.p < 0.05);
    }

    #[test]
    fn summary_statistics() {
        let s = MetricSummary::from_values(vec![1.0, 2.0, 3.0]);
        assert_eq!((s.n, s.mean, s.std), (3, 2.0, 1.0));
    }
}
