//! Aggregation of scores over several seeds.

/// Mean and sample standard deviation (`n - 1` denominator). The deviation
/// is 0 for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// `"mean (std)"` with one decimal each, e.g. `86.2 (0.5)`.
pub fn format_mean_std(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.1} ({s:.1})")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_seeds() {
        let (m, s) = mean_std(&[60.0, 70.0]);
        assert_eq!(m, 65.0);
        assert!((s - 50f64.sqrt()).abs() < 1e-12);
        assert_eq!(format_mean_std(&[60.0, 70.0]), "65.0 (7.1)");
    }

    #[test]
    fn constant_scores_have_zero_deviation() {
        assert_eq!(format_mean_std(&[42.0; 10]), "42.0 (0.0)");
    }
}
