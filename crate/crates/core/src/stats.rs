//! Small statistics helpers: moments, normal-approximation confidence
//! intervals, and a one-sample Kolmogorov–Smirnov test.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n−1 denominator); 0 for fewer than 2 points.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Normal-approximation 95% confidence interval for the mean.
pub fn ci95(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let half = 1.96 * std_dev(xs) / (xs.len().max(1) as f64).sqrt();
    (m - half, m + half)
}

#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub passes: bool,
}

/// Asymptotic critical value c(α)/√n with c(α) = √(−ln(α/2)/2).
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Two-sided one-sample KS test of `samples` against the closed-form `cdf`.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F, alpha: f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        let upper = (i + 1) as f64 / n - f;
        let lower = f - i as f64 / n;
        d = d.max(upper).max(lower);
    }
    let critical = ks_critical(xs.len(), alpha);
    KsResult { statistic: d, critical, passes: d < critical }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn moments_of_known_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((std_dev(&xs) - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ci_width_halves_when_sample_count_quadruples() {
        let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (lo1, hi1) = ci95(&xs);
        let xs4: Vec<f64> = (0..400).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (lo4, hi4) = ci95(&xs4);
        let w1 = hi1 - lo1;
        let w4 = hi4 - lo4;
        // 1/√n scaling, up to the small-sample bias of the sample std
        assert!((w4 - 0.5 * w1).abs() < 1e-2 * w1, "w1={w1} w4={w4}");
    }

    #[test]
    fn ks_accepts_true_uniform_and_rejects_shifted() {
        let mut rng = stream(10, "ks", &[]);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        assert!(ks_test(&xs, |x| x.clamp(0.0, 1.0), 0.01).passes);
        // squared uniforms are not uniform
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!(!ks_test(&ys, |x| x.clamp(0.0, 1.0), 0.01).passes);
    }
}
