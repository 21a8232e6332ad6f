use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimplexError {
    #[error("cannot project an empty vector onto the simplex")]
    Empty,
    #[error("non-finite entry {0}")]
    NonFinite(f64),
}

/// Euclidean projection onto the probability simplex `{w >= 0, sum w = 1}`.
///
/// Sort-based: with `u` sorted in decreasing order, the threshold is
/// `theta = (sum_{i<=rho} u_i - 1) / rho` where `rho` is the largest index
/// such that `u_rho - (sum_{i<=rho} u_i - 1)/rho > 0`.
pub fn project_simplex(w: &[f64]) -> Result<Vec<f64>, SimplexError> {
    if w.is_empty() {
        return Err(SimplexError::Empty);
    }
    if let Some(&bad) = w.iter().find(|v| !v.is_finite()) {
        return Err(SimplexError::NonFinite(bad));
    }
    let mut u = w.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = w.iter().map(|&v| (v - theta).max(0.0)).collect();
    // Remove the last bit of rounding drift from the sum.
    let s: f64 = out.iter().sum();
    if s > 0.0 && s != 1.0 {
        let imax = out
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        out[imax] += 1.0 - s;
        out[imax] = out[imax].max(0.0);
    }
    Ok(out)
}
