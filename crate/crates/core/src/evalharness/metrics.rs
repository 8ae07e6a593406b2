//! Error rates and correlations between score columns.

use super::{EvalError, Result};
use serde::{Deserialize, Serialize};

/// Human score minus estimated score, both in percent. A negative value means
/// the estimator scored the subject above the human annotators.
pub fn error_rate(fs_human: f64, fs_estimated: f64) -> f64 {
    fs_human - fs_estimated
}

/// Sum of absolute error rates.
pub fn cumulative_error_rate(ers: &[f64]) -> Result<f64> {
    if ers.is_empty() {
        return Err(EvalError::Empty("error rates"));
    }
    Ok(ers.iter().map(|e| e.abs()).sum())
}

/// Scores for a set of labeled items (e.g. models), aligned by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl ScoreVector {
    pub fn new<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Self {
        let (labels, values) = pairs.into_iter().map(|(l, v)| (l.into(), v)).unzip();
        Self { labels, values }
    }

    /// Unlabeled vector; items are named by position.
    pub fn from_values(values: &[f64]) -> Self {
        Self::new(values.iter().enumerate().map(|(i, &v)| (i.to_string(), v)))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Restricted to `labels`, in that order. `None` if any label is missing.
    pub fn select(&self, labels: &[String]) -> Option<Self> {
        let values = labels
            .iter()
            .map(|l| self.labels.iter().position(|x| x == l).map(|i| self.values[i]))
            .collect::<Option<Vec<_>>>()?;
        Some(Self {
            labels: labels.to_vec(),
            values,
        })
    }
}

fn check_pair(x: &ScoreVector, y: &ScoreVector) -> Result<()> {
    if x.labels.len() != x.values.len() || y.labels.len() != y.values.len() || x.labels != y.labels {
        return Err(EvalError::Misaligned);
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort(x.len()));
    }
    if x.values.iter().chain(&y.values).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

fn pearson_values(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation.
pub fn pearson(x: &ScoreVector, y: &ScoreVector) -> Result<f64> {
    check_pair(x, y)?;
    pearson_values(&x.values, &y.values)
}

/// 1-based ranks, ties sharing the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman_rank(x: &ScoreVector, y: &ScoreVector) -> Result<f64> {
    check_pair(x, y)?;
    pearson_values(&average_ranks(&x.values), &average_ranks(&y.values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> ScoreVector {
        ScoreVector::from_values(xs)
    }

    #[test]
    fn error_rates() {
        assert!((error_rate(42.5, 45.3) - -2.8).abs() < 1e-9);
        assert!((error_rate(58.3, 60.0) - -1.7).abs() < 1e-9);
        assert_eq!(error_rate(3.0, 3.0), 0.0);
        assert!((cumulative_error_rate(&[-2.8, 1.6, 9.0]).unwrap() - 13.4).abs() < 1e-9);
        assert!((cumulative_error_rate(&[-24.6, -20.1, -10.9]).unwrap() - 55.6).abs() < 1e-9);
        assert_eq!(cumulative_error_rate(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(cumulative_error_rate(&[]).is_err());
    }

    #[test]
    fn correlation_edges() {
        let x = v(&[1.0, 2.0, 4.0, 7.0]);
        let affine = v(&[5.0, 7.0, 11.0, 17.0]);
        assert!((pearson(&x, &affine).unwrap() - 1.0).abs() < 1e-12);
        let neg = v(&[-1.0, -2.0, -4.0, -7.0]);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman_rank(&x, &v(&[1.0, 8.0, 64.0, 343.0])).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman_rank(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&x, &v(&[2.0; 4])), Err(EvalError::ZeroVariance)));
        assert!(matches!(pearson(&v(&[1.0]), &v(&[1.0])), Err(EvalError::TooShort(1))));
        assert!(matches!(pearson(&x, &v(&[1.0, 2.0])), Err(EvalError::Misaligned)));
    }

    #[test]
    fn tied_ranks_average() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn select_by_label() {
        let s = ScoreVector::new([("a", 1.0), ("b", 2.0)]);
        let picked = s.select(&["b".to_string(), "a".to_string()]).unwrap();
        assert_eq!(picked.values, vec![2.0, 1.0]);
        assert!(s.select(&["z".to_string()]).is_none());
    }
}
