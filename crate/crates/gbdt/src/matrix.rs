use crate::{GbdtError, Result};

/// Dense row-major feature matrix. Missing values are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    pub fn new(values: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(GbdtError::Shape(format!("{} values for {n_rows}x{n_cols}", values.len())));
        }
        Ok(Self { values, n_rows, n_cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(GbdtError::Shape(format!("row {i} has {} columns, expected {n_cols}", row.len())));
            }
            values.extend_from_slice(row);
        }
        Ok(Self { values, n_rows: rows.len(), n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows).map(move |r| self.get(r, col))
    }

    /// Copies the given rows (in order) into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self { values, n_rows: rows.len(), n_cols: self.n_cols }
    }

    /// Copies the given columns (in order) into a new matrix.
    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        for r in 0..self.n_rows {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        Self { values, n_rows: self.n_rows, n_cols: cols.len() }
    }
}
