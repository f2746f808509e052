//! Small statistics helpers shared by the estimators.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_counts(hits: usize, n: usize) -> Estimate {
        let p = if n == 0 { f64::NAN } else { hits as f64 / n as f64 };
        let se = if n < 2 { f64::NAN } else { (p * (1.0 - p) / (n - 1) as f64).sqrt() };
        Estimate { mean: p, stderr: se, n }
    }

    pub fn from_samples(xs: &[f64]) -> Estimate {
        let mut acc = Moments::default();
        xs.iter().for_each(|&x| acc.push(x));
        acc.estimate()
    }

    /// 95% normal interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)
    }

    /// Standardized distance to a target value.
    pub fn z(&self, target: f64) -> f64 {
        (self.mean - target) / self.stderr
    }
}

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate { mean: self.mean, stderr: (self.variance() / self.n as f64).sqrt(), n: self.n }
    }
}

/// Least-squares line `y = slope * x + intercept` with coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit { slope, intercept: my - slope * mx, r2 })
}

/// Pearson goodness-of-fit of observed counts against expected
/// probabilities. Cells with expected count below `min_expected` are pooled.
/// Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> (f64, usize, f64) {
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * n as f64;
        if e < min_expected {
            pool_o += o as f64;
            pool_e += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    }
    let df = cells.saturating_sub(1).max(1);
    let p = 1.0 - ChiSquared::new(df as f64).map(|c| c.cdf(stat)).unwrap_or(0.0);
    (stat, df, p)
}

/// Two-sample chi-square test of homogeneity between count vectors over
/// the same bins. Bins whose smaller expected count is below `min_expected`
/// are pooled. Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64], min_expected: f64) -> (f64, usize, f64) {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pool = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let t = (x + y) as f64;
        if t * na.min(nb) / n < min_expected {
            pool.0 += x as f64;
            pool.1 += y as f64;
        } else {
            bins.push((x as f64, y as f64));
        }
    }
    if pool.0 + pool.1 > 0.0 {
        bins.push(pool);
    }
    let mut stat = 0.0;
    for (x, y) in &bins {
        let t = x + y;
        let (ea, eb) = (t * na / n, t * nb / n);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let df = bins.len().saturating_sub(1).max(1);
    let p = 1.0 - ChiSquared::new(df as f64).map(|c| c.cdf(stat)).unwrap_or(0.0);
    (stat, df, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moments_match_direct() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let e = Estimate::from_samples(&xs);
        assert!((e.mean - 3.5).abs() < 1e-12);
        let var = xs.iter().map(|x| (x - 3.5f64).powi(2)).sum::<f64>() / 3.0;
        assert!((e.stderr - (var / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let (s, df, p) = chi_square_gof(&[25, 25, 50], &[0.25, 0.25, 0.5], 5.0);
        assert_eq!(s, 0.0);
        assert_eq!(df, 2);
        assert!((p - 1.0).abs() < 1e-12);
    }
}
