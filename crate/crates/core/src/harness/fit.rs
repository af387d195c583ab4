use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Least-squares fit of `log y = slope·log x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub x_name: String,
    pub y_name: String,
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residual variance.
    pub std_error: f64,
    pub points: usize,
}

impl SlopeFit {
    /// Whether `|slope − expected| ≤ tol`.
    pub fn within(&self, expected: f64, tol: f64) -> bool {
        (self.slope - expected).abs() <= tol
    }
}

/// Fits a log-log slope; needs at least three points with positive, finite coordinates.
pub fn fit_loglog(x_name: &str, y_name: &str, xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return config(format!("fit needs equal lengths, got {} and {}", xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return config(format!("fit needs at least 3 points, got {}", xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return config("log-log fit needs positive finite values");
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return config("log-log fit needs at least two distinct x values");
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let std_error = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        x_name: x_name.to_string(),
        y_name: y_name.to_string(),
        slope,
        intercept,
        std_error,
        points: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let xs = [1.0, 2.0, 5.0, 10.0, 40.0];
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let fit = fit_loglog("x", "y", &xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-9);
        assert!(fit.intercept.abs() < 1e-9);
        assert!(fit.std_error < 1e-9);
        assert_eq!(fit.points, 5);
    }

    #[test]
    fn standard_error_matches_hand_computation() {
        // log-space points (0,0), (1,1), (2,1.5) after exponentiation.
        let e = std::f64::consts::E;
        let fit = fit_loglog("x", "y", &[1.0, e, e * e], &[1.0, e, e.powf(1.5)]).unwrap();
        assert!((fit.slope - 0.75).abs() < 1e-12);
        // Residuals: 1/12·(1, −2, 1) → SSR = 6/144, Sxx = 2, se = sqrt(SSR/1/2).
        assert!((fit.std_error - (6.0f64 / 144.0 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(fit_loglog("x", "y", &[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_loglog("x", "y", &[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).is_err());
        assert!(fit_loglog("x", "y", &[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
