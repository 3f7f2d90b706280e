//! Agreement and correlation statistics.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} observations")]
    TooFew(usize),
    #[error("degenerate data: zero variance")]
    Degenerate,
    #[error("non-finite input")]
    NonFinite,
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min {
        return Err(StatsError::TooFew(min));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Pearson correlation; `Degenerate` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let (vx, vy) = (variance(x), variance(y));
    if vx == 0.0 || vy == 0.0 {
        return Err(StatsError::Degenerate);
    }
    Ok((covariance(x, y) / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Concordance correlation coefficient,
/// `2 cov / (var_x + var_y + (mean_x - mean_y)^2)` with population moments.
///
/// A zero denominator means both sequences are the same constant; that
/// case is reported as perfect agreement.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let denom = variance(x) + variance(y) + (mx - my) * (mx - my);
    if denom == 0.0 {
        return if x == y { Ok(1.0) } else { Err(StatsError::Degenerate) };
    }
    Ok((2.0 * covariance(x, y) / denom).clamp(-1.0, 1.0))
}

/// ICC(2,k): two-way random effects, average measures.
///
/// `ratings[i][j]` is rater `j` on item `i`.
/// `(MS_R - MS_E) / (MS_R + (MS_C - MS_E) / n)`.
pub fn icc2k(ratings: &[Vec<f64>]) -> Result<f64, StatsError> {
    let n = ratings.len();
    if n < 2 {
        return Err(StatsError::TooFew(2));
    }
    let k = ratings[0].len();
    if k < 2 {
        return Err(StatsError::TooFew(2));
    }
    if let Some(bad) = ratings.iter().find(|r| r.len() != k) {
        return Err(StatsError::LengthMismatch(bad.len(), k));
    }
    if ratings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = ratings.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = ratings.iter().map(|r| mean(r)).collect();
    let col_means: Vec<f64> = (0..k).map(|j| ratings.iter().map(|r| r[j]).sum::<f64>() / nf).collect();

    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_total = ratings.iter().flatten().map(|v| (v - grand).powi(2)).sum::<f64>();
    let ss_err = (ss_total - ss_rows - ss_cols).max(0.0);

    let ms_r = ss_rows / (nf - 1.0);
    let ms_c = ss_cols / (kf - 1.0);
    let ms_e = ss_err / ((nf - 1.0) * (kf - 1.0));
    if ms_r <= 1e-300 {
        return Err(StatsError::Degenerate);
    }
    let denom = ms_r + (ms_c - ms_e) / nf;
    if denom == 0.0 {
        return Err(StatsError::Degenerate);
    }
    Ok((ms_r - ms_e) / denom)
}
