use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PassAtKError {
    #[error("no samples")]
    NoSamples,
    #[error("k = {k} must be between 1 and n = {n}")]
    BadK { n: u64, k: u64 },
    #[error("c = {c} correct samples exceeds n = {n}")]
    TooManyCorrect { n: u64, c: u64 },
}

/// Unbiased pass@k estimate from `n` samples of which `c` passed.
///
/// Evaluated as `1 - prod_{i=n-c+1}^{n} (1 - k/i)` to avoid large binomials.
pub fn compute_pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, PassAtKError> {
    if n == 0 {
        return Err(PassAtKError::NoSamples);
    }
    if k == 0 || k > n {
        return Err(PassAtKError::BadK { n, k });
    }
    if c > n {
        return Err(PassAtKError::TooManyCorrect { n, c });
    }
    if c == 0 {
        return Ok(0.0);
    }
    if n - c < k {
        return Ok(1.0);
    }
    let miss: f64 = (n - c + 1..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - miss)
}
