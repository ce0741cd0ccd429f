//! Ordinary least squares through an orthogonal factorization.

use super::qr::tsqr_r;
use crate::error::{Error, Result};
use crate::exec::{self, Exec};

/// Pivots smaller than this fraction of the largest pivot mark a column as
/// linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Residual variance `SSR / (n − k)`.
    pub sigma2: f64,
    /// `1 − SSR/SST` with centered SST; 0 when SST = 0.
    pub r_squared: f64,
    pub ssr: f64,
    pub sst: f64,
}

/// Row-major design matrix with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Self { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `X v` for a coefficient vector.
    pub fn mul_vec(&self, exec: Exec, v: &[f64]) -> Vec<f64> {
        let chunks = exec::map_chunks(exec, &self.data, 4096 * self.cols, |chunk| {
            chunk
                .chunks_exact(self.cols)
                .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
                .collect::<Vec<f64>>()
        });
        chunks.concat()
    }

    /// `Xᵀ v`.
    pub fn t_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += x * vi;
            }
        }
        out
    }
}

/// Fits each response in `ys` against the same design in a single
/// factorization pass.
pub fn fit_ols_many(exec: Exec, x: &Matrix, names: &[String], ys: &[&[f64]]) -> Result<Vec<OlsFit>> {
    let (n, k) = (x.rows, x.cols);
    if n <= k {
        return Err(Error::TooFewObservations { n, k });
    }
    for y in ys {
        if y.len() != n {
            return Err(Error::Validation(format!(
                "response has {} rows, design has {n}",
                y.len()
            )));
        }
    }
    let c = k + ys.len();
    let mut augmented = Vec::with_capacity(n * c);
    for i in 0..n {
        augmented.extend_from_slice(x.row(i));
        augmented.extend(ys.iter().map(|y| y[i]));
    }
    let r = tsqr_r(exec, &augmented, n, c);
    drop(augmented);

    let max_pivot = (0..k).map(|j| r.at(j, j).abs()).fold(0.0, f64::max);
    let dependent: Vec<String> = (0..k)
        .filter(|&j| r.at(j, j).abs() <= RANK_TOLERANCE * max_pivot)
        .map(|j| names.get(j).cloned().unwrap_or_else(|| format!("#{j}")))
        .collect();
    if !dependent.is_empty() {
        return Err(Error::RankDeficient { columns: dependent });
    }

    // Inverse of the k×k triangle, row by row from the bottom.
    let mut rinv = vec![0.0; k * k];
    for i in (0..k).rev() {
        rinv[i * k + i] = 1.0 / r.at(i, i);
        for j in i + 1..k {
            let s: f64 = (i + 1..=j).map(|l| r.at(i, l) * rinv[l * k + j]).sum();
            rinv[i * k + j] = -s / r.at(i, i);
        }
    }
    // diag((XᵀX)⁻¹) = row norms² of R⁻¹
    let xtx_inv_diag: Vec<f64> = (0..k)
        .map(|i| (i..k).map(|j| rinv[i * k + j].powi(2)).sum())
        .collect();

    let mut fits = Vec::with_capacity(ys.len());
    for (t, y) in ys.iter().enumerate() {
        let col = k + t;
        let mut beta = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| r.at(i, j) * beta[j]).sum();
            beta[i] = (r.at(i, col) - s) / r.at(i, i);
        }
        let fitted = x.mul_vec(exec, &beta);
        let ssr: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
        let mean = y.iter().sum::<f64>() / n as f64;
        let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let sigma2 = ssr / (n - k) as f64;
        let stderr = xtx_inv_diag.iter().map(|d| (sigma2 * d).sqrt()).collect();
        let r_squared = if sst == 0.0 {
            0.0
        } else {
            (1.0 - ssr / sst).clamp(0.0, 1.0)
        };
        fits.push(OlsFit {
            beta,
            stderr,
            sigma2,
            r_squared,
            ssr,
            sst,
        });
    }
    Ok(fits)
}

pub fn fit_ols(exec: Exec, x: &Matrix, names: &[String], y: &[f64]) -> Result<OlsFit> {
    Ok(fit_ols_many(exec, x, names, &[y])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_design(xs: &[f64]) -> Matrix {
        Matrix::new(xs.len(), 2, xs.iter().flat_map(|&x| [1.0, x]).collect())
    }

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.5, 4.0, 7.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let fit = fit_ols(Exec::Sequential, &line_design(&xs), &names(2), &y).unwrap();
        assert_relative_eq!(fit.beta[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.beta[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert!(fit.sigma2 < 1e-24);
    }

    #[test]
    fn constant_response() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let fit = fit_ols(Exec::Sequential, &line_design(&xs), &names(2), &[0.4; 4]).unwrap();
        assert_relative_eq!(fit.beta[0], 0.4, epsilon = 1e-12);
        assert!(fit.beta[1].abs() < 1e-12);
        assert_eq!(fit.r_squared, 0.0);
    }

    #[test]
    fn textbook_regression_matches_normal_equations() {
        // y = 1 + 2x + noise-ish; compare with the closed-form simple regression.
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 7.0).collect();
        let y: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| 1.0 + 2.0 * x + ((i * 37 % 11) as f64 - 5.0) / 10.0)
            .collect();
        let fit = fit_ols(Exec::Parallel, &line_design(&xs), &names(2), &y).unwrap();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&y).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        assert_relative_eq!(fit.beta[1], slope, max_relative = 1e-12);
        assert_relative_eq!(fit.beta[0], my - slope * mx, max_relative = 1e-12);
        let se_slope = (fit.sigma2 / sxx).sqrt();
        assert_relative_eq!(fit.stderr[1], se_slope, max_relative = 1e-10);
        let se_int = (fit.sigma2 * (1.0 / n + mx * mx / sxx)).sqrt();
        assert_relative_eq!(fit.stderr[0], se_int, max_relative = 1e-10);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let data: Vec<f64> = (0..20).flat_map(|i| [1.0, i as f64, 2.0 * i as f64]).collect();
        let x = Matrix::new(20, 3, data);
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        match fit_ols(Exec::Sequential, &x, &names(3), &y) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, ["c2"]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let x = line_design(&[1.0, 2.0]);
        assert!(matches!(
            fit_ols(Exec::Sequential, &x, &names(2), &[1.0, 2.0]),
            Err(Error::TooFewObservations { n: 2, k: 2 })
        ));
    }
}
