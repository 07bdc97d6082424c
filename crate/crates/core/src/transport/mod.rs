//! Exact discrete optimal transport between uniformly weighted point sets.

mod network_simplex;

pub use network_simplex::min_cost_flow;

use crate::error::{Error, Result};

/// Dense row-major matrix of finite, nonnegative transport costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::input("cost matrix must be non-empty"));
        }
        if entries.len() != rows * cols {
            return Err(Error::input(format!(
                "expected {} cost entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if let Some(k) = entries.iter().position(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::input(format!(
                "cost entry ({}, {}) = {} is not a finite nonnegative number",
                k / cols,
                k % cols,
                entries[k]
            )));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let entries = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self::new(rows, cols, entries)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::input("ragged cost matrix"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[cfg(feature = "cli")]
    pub(crate) fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Optimal transport value between the uniform measures on the rows and on
/// the columns of `cost`, i.e. `min_pi sum_ij pi_ij cost_ij` with
/// `pi_i. = 1/rows` and `pi_.j = 1/cols`.
pub fn uniform_transport(cost: &CostMatrix) -> Result<f64> {
    let (n, m) = (cost.rows() as u64, cost.cols() as u64);
    let g = gcd(n, m);
    // Integer marginals m/g per row and n/g per column; total mass n*m/g.
    let supply = vec![m / g; cost.rows()];
    let demand = vec![n / g; cost.cols()];
    let total = (n * m / g) as f64;
    Ok(min_cost_flow(cost, &supply, &demand)? / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_nan() {
        assert!(CostMatrix::new(1, 2, vec![0.0, -1.0]).is_err());
        assert!(CostMatrix::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(CostMatrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn uniform_line_transport() {
        // Two points {0, 1} against four points {0, 1/3, 2/3, 1}: each source
        // keeps its nearest pair, mean cost (0 + 1/3 + 1/3 + 0) / 4.
        let a = [0.0_f64, 1.0];
        let b = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let c = CostMatrix::from_fn(2, 4, |i, j| (a[i] - b[j]).abs()).unwrap();
        let v = uniform_transport(&c).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-12, "{v}");
    }
}
