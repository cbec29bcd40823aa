//! Order-fixed ensemble statistics.

use serde::{Deserialize, Serialize};

/// Welford accumulator. Merging and pushing in a fixed order gives
/// bit-identical results independent of how the work was scheduled.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct MeanAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (`n − 1` denominator); zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// `(mean, standard error)` of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let mut acc = MeanAccumulator::default();
    xs.iter().for_each(|&x| acc.push(x));
    (acc.mean(), acc.stderr())
}

/// Ordinary least squares `y = slope·x + intercept`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "linear fit needs two points");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let syy: f64 = y.iter().map(|yi| (yi - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - slope * xi - intercept).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let (m, se) = mean_stderr(&xs);
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m - mean).abs() < 1e-14);
        assert!((se - (var / 5.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn single_sample_has_zero_stderr() {
        assert_eq!(mean_stderr(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn exact_line() {
        let x = [0.2, 0.4, 0.6, 0.8];
        let y: Vec<f64> = x.iter().map(|v| 0.1 * v + 0.02).collect();
        let fit = linear_fit(&x, &y);
        assert!((fit.slope - 0.1).abs() < 1e-14);
        assert!((fit.intercept - 0.02).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }
}
