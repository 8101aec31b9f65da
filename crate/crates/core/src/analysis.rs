//! Post-processing of survival curves: exponential tail fits, effective decay
//! rates and the short-time power law.

use crate::error::{Error, Result};
use crate::experiment::SurvivalCurve;
use crate::units::LatticeParams;

/// Result of a log-linear least-squares fit `S(t) ≈ A e^{-γ t}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    /// Decay rate, 1/s. Clamped at zero for growing tails.
    pub rate: f64,
    pub amplitude: f64,
    pub t_min_fit: f64,
    /// RMS residual of `ln S` about the fitted line.
    pub residual_rms: f64,
    pub points_used: usize,
    /// Points at or beyond `t_min_fit` dropped for non-positive survival.
    pub excluded: usize,
}

/// Decay rate over a whole curve, or a flag that nothing survived.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveRate {
    pub rate: f64,
    pub depleted: bool,
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, rms residual)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let ss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    (a, b, (ss / n).sqrt())
}

fn check_lengths(t: &[f64], s: &[f64]) -> Result<()> {
    if t.len() != s.len() {
        return Err(Error::Dimension { expected: t.len(), got: s.len() });
    }
    Ok(())
}

/// Fit `ln S` against `t` for all points with `t >= t_min_fit`.
pub fn fit_exponential_tail_points(t: &[f64], s: &[f64], t_min_fit: f64) -> Result<DecayFit> {
    check_lengths(t, s)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = 0;
    for (&ti, &si) in t.iter().zip(s) {
        if ti < t_min_fit {
            continue;
        }
        if si > 0.0 {
            xs.push(ti);
            ys.push(si.ln());
        } else {
            excluded += 1;
        }
    }
    if excluded > 0 {
        log::warn!("{excluded} non-positive survival values excluded from the tail fit");
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 positive points beyond t = {t_min_fit:e} s, found {}",
            xs.len()
        )));
    }
    let (a, b, rms) = linear_fit(&xs, &ys);
    Ok(DecayFit {
        rate: (-b).max(0.0),
        amplitude: a.exp(),
        t_min_fit,
        residual_rms: rms,
        points_used: xs.len(),
        excluded,
    })
}

pub fn fit_exponential_tail(curve: &SurvivalCurve, t_min_fit: f64) -> Result<DecayFit> {
    fit_exponential_tail_points(&curve.t_tunnel, &curve.survival, t_min_fit)
}

/// Default start of the tail window: three Bloch periods at the tunnelling
/// acceleration.
pub fn default_t_min_fit(params: &LatticeParams, a_tunnel: f64) -> Result<f64> {
    Ok(3.0 * params.bloch_period(a_tunnel)?)
}

/// `-ln(S_last / S_first) / (t_last - t_first)`.
pub fn effective_rate_points(t: &[f64], s: &[f64]) -> Result<EffectiveRate> {
    check_lengths(t, s)?;
    if t.len() < 2 {
        return Err(Error::Fit("effective rate needs at least two points".into()));
    }
    let (t0, s0) = (t[0], s[0]);
    let (t1, s1) = (t[t.len() - 1], s[s.len() - 1]);
    if !(t1 > t0) || !(s0 > 0.0) {
        return Err(Error::Fit("effective rate needs increasing times and positive initial survival".into()));
    }
    if s1 <= 0.0 {
        return Ok(EffectiveRate { rate: f64::INFINITY, depleted: true });
    }
    Ok(EffectiveRate {
        rate: -(s1 / s0).ln() / (t1 - t0),
        depleted: false,
    })
}

pub fn effective_rate(curve: &SurvivalCurve) -> Result<EffectiveRate> {
    effective_rate_points(&curve.t_tunnel, &curve.survival)
}

/// Log-log slope of `1 - S` against `t` over the points with
/// `1 - S ∈ (1e-6, 0.2)` and `0 < t <= t_max`.
pub fn short_time_exponent_points(t: &[f64], s: &[f64], t_max: f64) -> Result<f64> {
    check_lengths(t, s)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(s)
        .filter(|(&ti, &si)| ti > 0.0 && ti <= t_max && (1.0 - si) > 1e-6 && (1.0 - si) < 0.2)
        .map(|(&ti, &si)| (ti.ln(), (1.0 - si).ln()))
        .unzip();
    if xs.len() < 4 {
        return Err(Error::Fit(format!(
            "short-time window holds {} usable points, need 4",
            xs.len()
        )));
    }
    Ok(linear_fit(&xs, &ys).1)
}

pub fn short_time_exponent(curve: &SurvivalCurve, t_max: f64) -> Result<f64> {
    short_time_exponent_points(&curve.t_tunnel, &curve.survival, t_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(n: usize, t_end: f64) -> Vec<f64> {
        (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn pure_exponential_rate() {
        let g = 5e4;
        let t = grid(41, 100e-6);
        let s: Vec<f64> = t.iter().map(|t| (-g * t).exp()).collect();
        let fit = fit_exponential_tail_points(&t, &s, 0.0).unwrap();
        assert_relative_eq!(fit.rate, g, max_relative = 1e-3);
        assert_relative_eq!(fit.amplitude, 1.0, max_relative = 1e-9);
        assert!(fit.residual_rms < 1e-12);
        let eff = effective_rate_points(&t, &s).unwrap();
        assert!(!eff.depleted);
        assert_relative_eq!(eff.rate, fit.rate, max_relative = 5e-3);
    }

    #[test]
    fn shoulder_then_exponential() {
        // Quadratic shoulder joined smoothly onto an exponential at t_c.
        let g = 3e4;
        let t_c = 20e-6;
        let s_c = 0.8;
        let t = grid(101, 150e-6);
        let s: Vec<f64> = t
            .iter()
            .map(|&t| {
                if t < t_c {
                    1.0 - (1.0 - s_c) * (t / t_c).powi(2)
                } else {
                    s_c * (-g * (t - t_c)).exp()
                }
            })
            .collect();
        let fit = fit_exponential_tail_points(&t, &s, 2.0 * t_c).unwrap();
        assert_relative_eq!(fit.rate, g, max_relative = 0.02);
    }

    #[test]
    fn constant_curve_has_zero_rate() {
        let t = grid(10, 1e-4);
        let s = vec![0.7; 10];
        let fit = fit_exponential_tail_points(&t, &s, 0.0).unwrap();
        assert!(fit.rate.abs() < 1e-9);
        assert_eq!(effective_rate_points(&t, &s).unwrap().rate, 0.0);
    }

    #[test]
    fn too_few_points_is_fit_error() {
        let t = [0.0, 1e-6, 2e-6, 3e-6];
        let s = [1.0, 0.9, 0.0, -0.1];
        match fit_exponential_tail_points(&t, &s, 0.0) {
            Err(Error::Fit(_)) => {}
            other => panic!("expected a fit error, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_points_are_counted() {
        let t = grid(6, 5e-6);
        let s = [1.0, 0.5, 0.25, 0.125, 0.0, 0.0625 / 2.0];
        let fit = fit_exponential_tail_points(&t, &s, 0.0).unwrap();
        assert_eq!(fit.excluded, 1);
        assert_eq!(fit.points_used, 5);
    }

    #[test]
    fn depleted_curve_flags_infinite_rate() {
        let eff = effective_rate_points(&[0.0, 1e-6], &[1.0, 0.0]).unwrap();
        assert!(eff.depleted);
        assert!(eff.rate.is_infinite());
    }

    #[test]
    fn exponent_of_exponential_is_one() {
        let g = 1e3;
        let t = grid(50, 100e-6);
        let s: Vec<f64> = t.iter().map(|t| (-g * t).exp()).collect();
        let k = short_time_exponent_points(&t, &s, 1.0).unwrap();
        assert!((k - 1.0).abs() < 0.05, "{k}");
    }

    #[test]
    fn exponent_of_quadratic_is_two() {
        let tau = 10e-6;
        let t = grid(30, 4e-6);
        let s: Vec<f64> = t.iter().map(|t| 1.0 - (t / tau).powi(2)).collect();
        let k = short_time_exponent_points(&t, &s, 1.0).unwrap();
        assert!((k - 2.0).abs() < 0.01, "{k}");
    }

    #[test]
    fn exponent_window_too_small() {
        let t = [0.0, 1e-6, 2e-6];
        let s = [1.0, 0.99, 0.96];
        assert!(short_time_exponent_points(&t, &s, 1.0).is_err());
    }

    #[test]
    fn default_window_is_three_bloch_periods() {
        let p = LatticeParams::sodium(91e3).unwrap();
        let t = default_t_min_fit(&p, 15000.0).unwrap();
        assert_relative_eq!(t, 3.0 * p.bloch_period(15000.0).unwrap());
        assert!((t - 11.8e-6).abs() < 0.2e-6);
    }

    proptest! {
        #[test]
        fn fit_is_renormalization_invariant(
            g in 1e3f64..1e5,
            c in 0.05f64..20.0,
            wiggle in 0.0f64..0.05,
        ) {
            let t = grid(25, 60e-6);
            let s: Vec<f64> = t
                .iter()
                .enumerate()
                .map(|(i, t)| (-g * t).exp() * (1.0 + wiggle * ((i * 7 % 5) as f64 - 2.0) / 2.0))
                .collect();
            let scaled: Vec<f64> = s.iter().map(|v| c * v).collect();
            let a = fit_exponential_tail_points(&t, &s, 10e-6).unwrap();
            let b = fit_exponential_tail_points(&t, &scaled, 10e-6).unwrap();
            prop_assert!((a.rate - b.rate).abs() <= 1e-9 * a.rate.max(1.0));
            prop_assert!((b.amplitude / a.amplitude - c).abs() <= 1e-9 * c);
            prop_assert!((a.residual_rms - b.residual_rms).abs() < 1e-9);
        }
    }
}
