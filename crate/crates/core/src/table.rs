use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-group by K-category count table. Row 0 is group 1, row 1 is group 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    rows: [Vec<u64>; 2],
}

impl ContingencyTable {
    pub fn new(group1: Vec<u64>, group2: Vec<u64>) -> Result<Self> {
        if group1.len() != group2.len() {
            return Err(Error::input(format!(
                "group rows differ in length ({} vs {})",
                group1.len(),
                group2.len()
            )));
        }
        if group1.is_empty() {
            return Err(Error::input("table has no categories"));
        }
        Ok(Self {
            rows: [group1, group2],
        })
    }

    /// Tabulates 1-based categories `y` by group labels `x` in {1, 2}.
    pub fn from_observations(y: &[usize], x: &[u8], k: usize) -> Result<Self> {
        if y.len() != x.len() {
            return Err(Error::input("outcome and group vectors differ in length"));
        }
        let mut rows = [vec![0u64; k], vec![0u64; k]];
        for (&yi, &xi) in y.iter().zip(x) {
            if yi == 0 || yi > k {
                return Err(Error::input(format!("category {yi} outside 1..={k}")));
            }
            match xi {
                1 | 2 => rows[xi as usize - 1][yi - 1] += 1,
                other => return Err(Error::input(format!("group label {other} not in {{1,2}}"))),
            }
        }
        Ok(Self { rows })
    }

    pub fn categories(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, g: usize) -> &[u64] {
        &self.rows[g]
    }

    pub fn row_sum(&self, g: usize) -> u64 {
        self.rows[g].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        self.rows[0][k] + self.rows[1][k]
    }

    pub fn total(&self) -> u64 {
        self.row_sum(0) + self.row_sum(1)
    }

    /// Indices of columns with a non-zero pooled count.
    pub fn nonzero_columns(&self) -> Vec<usize> {
        (0..self.categories())
            .filter(|&k| self.col_sum(k) > 0)
            .collect()
    }

    /// Table restricted to the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            rows: [
                cols.iter().map(|&k| self.rows[0][k]).collect(),
                cols.iter().map(|&k| self.rows[1][k]).collect(),
            ],
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            rows: [self.rows[1].clone(), self.rows[0].clone()],
        }
    }
}
