//! Error statistics over simulation records.

use crate::error::{Error, Result};
use crate::geometry::Vec2;

fn enough(xs: &[f64]) -> Result<()> {
    if xs.len() < 2 {
        return Err(Error::InsufficientData(xs.len()));
    }
    Ok(())
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    enough(xs)?;
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Root mean square.
pub fn rms(xs: &[f64]) -> Result<f64> {
    enough(xs)?;
    Ok((xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt())
}

/// Population standard deviation.
pub fn std_pop(xs: &[f64]) -> Result<f64> {
    let m = mean(xs)?;
    Ok((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt())
}

/// Pearson correlation; zero when either series is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let (ma, mb) = (mean(a)?, mean(b)?);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Least-squares line through `ln e_k` against `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFit {
    /// Slope of `ln e` per sample (`ln rho` for `e_k = e_0 rho^k`).
    pub rate: f64,
    pub intercept: f64,
    pub r2: f64,
    /// First index of the fitted window.
    pub start: usize,
    pub points: usize,
}

/// Fits the decay of a non-negative error series over the window starting
/// where it first drops below 80% of its initial value. Zero samples are
/// skipped.
pub fn exp_fit(errors: &[f64]) -> Result<ExpFit> {
    enough(errors)?;
    let start = errors
        .iter()
        .position(|e| *e < 0.8 * errors[0])
        .ok_or(Error::InsufficientData(0))?;
    let pts: Vec<(f64, f64)> = errors[start..]
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > 0.0)
        .map(|(i, e)| ((start + i) as f64, e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let rate = sxy / sxx;
    let intercept = my - rate * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - rate * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(ExpFit {
        rate,
        intercept,
        r2,
        start,
        points: pts.len(),
    })
}

/// Largest distance of `track` from the segment joining `from` and `to`.
pub fn chord_deviation(track: &[Vec2], from: &Vec2, to: &Vec2) -> f64 {
    let ab = to - from;
    let len2 = ab.norm_squared();
    track
        .iter()
        .map(|p| {
            let t = if len2 > 0.0 { ((p - from).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (p - (from + ab * t)).norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_series() {
        let xs = [-2.5; 7];
        assert_eq!(rms(&xs).unwrap(), 2.5);
        assert_eq!(std_pop(&xs).unwrap(), 0.0);
    }

    #[test]
    fn hand_values() {
        assert_abs_diff_eq!(rms(&[3.0, 4.0]).unwrap(), 12.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(rms(&[3.0, 4.0]).unwrap(), 3.5355339059327378, epsilon = 1e-15);
        assert_eq!(std_pop(&[3.0, 4.0]).unwrap(), 0.5);
        assert_eq!(rms(&[1.0]), Err(Error::InsufficientData(1)));
        assert_eq!(rms(&[]), Err(Error::InsufficientData(0)));
    }

    #[test]
    fn rms_mean_std_identity() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0 + 0.4).collect();
        let (r, m, s) = (rms(&xs).unwrap(), mean(&xs).unwrap(), std_pop(&xs).unwrap());
        assert_abs_diff_eq!(r * r, m * m + s * s, epsilon = 1e-12);
    }

    #[test]
    fn pure_exponential() {
        let rho: f64 = 0.95;
        let e: Vec<f64> = (0..200).map(|k| 50.0 * rho.powi(k)).collect();
        let fit = exp_fit(&e).unwrap();
        assert_abs_diff_eq!(fit.rate, rho.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
        assert_eq!(fit.start, 5);
        assert!(exp_fit(&[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn correlation_and_chord() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(correlation(&a, &[2.0, 4.0, 6.0, 8.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(correlation(&a, &[-1.0, -2.0, -3.0, -4.0]).unwrap(), -1.0, epsilon = 1e-15);
        let track = [Vec2::new(0.0, 0.0), Vec2::new(5.0, 0.3), Vec2::new(10.0, 0.0)];
        assert_abs_diff_eq!(chord_deviation(&track, &Vec2::zeros(), &Vec2::new(10.0, 0.0)), 0.3, epsilon = 1e-15);
    }
}
