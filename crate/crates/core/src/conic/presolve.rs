//! Detection of linearly dependent equality rows.
//!
//! Rows are reduced one at a time against the pivots accepted so far
//! (sparse Gaussian elimination). A row that reduces to zero is dropped; if
//! its right-hand side does not also reduce to zero the system is
//! inconsistent.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::sparse::CscMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum RowReduction {
    Independent {
        keep: Vec<usize>,
        dropped: Vec<usize>,
    },
    Inconsistent {
        row: usize,
    },
}

struct Pivot {
    col: usize,
    // entries other than the pivot, pivot coefficient normalized to 1
    rest: Vec<(usize, f64)>,
    rhs: f64,
}

pub fn reduce_rows(a: &CscMatrix, b: &[f64], tol: f64) -> RowReduction {
    let rows = a.rows();
    let ncols = a.ncols;
    let mut col_count = vec![0usize; ncols];
    for r in &rows {
        for &(j, _) in r {
            col_count[j] += 1;
        }
    }

    let mut pivot_of_col = vec![usize::MAX; ncols];
    let mut pivots: Vec<Pivot> = Vec::new();
    let mut dense = vec![0.0; ncols];
    let mut in_row = vec![false; ncols];
    let mut touched: Vec<usize> = Vec::new();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();

    for (ri, row) in rows.iter().enumerate() {
        let scale = row.iter().fold(0.0f64, |m, &(_, v)| m.max(v.abs()));
        if scale == 0.0 {
            if b[ri].abs() > tol * (1.0 + b[ri].abs()) {
                return RowReduction::Inconsistent { row: ri };
            }
            dropped.push(ri);
            continue;
        }
        touched.clear();
        let mut heap = BinaryHeap::new();
        for &(j, v) in row {
            dense[j] = v;
            in_row[j] = true;
            touched.push(j);
            if pivot_of_col[j] != usize::MAX {
                heap.push(Reverse(pivot_of_col[j]));
            }
        }
        let mut rhs = b[ri];
        let mut last = usize::MAX;
        while let Some(Reverse(p)) = heap.pop() {
            if p == last {
                continue;
            }
            last = p;
            let piv = &pivots[p];
            let f = dense[piv.col];
            if f == 0.0 {
                continue;
            }
            dense[piv.col] = 0.0;
            rhs -= f * piv.rhs;
            for &(j, v) in &piv.rest {
                if !in_row[j] {
                    in_row[j] = true;
                    touched.push(j);
                }
                dense[j] -= f * v;
                if pivot_of_col[j] != usize::MAX && pivot_of_col[j] > p {
                    heap.push(Reverse(pivot_of_col[j]));
                }
            }
        }

        let mut best = 0.0f64;
        for &j in &touched {
            if pivot_of_col[j] == usize::MAX {
                best = best.max(dense[j].abs());
            }
        }
        if best <= tol * scale {
            if rhs.abs() > tol * (1.0 + b[ri].abs()).max(scale) {
                return RowReduction::Inconsistent { row: ri };
            }
            dropped.push(ri);
        } else {
            // among numerically acceptable entries prefer the sparsest column
            let mut choice = usize::MAX;
            for &j in &touched {
                if pivot_of_col[j] == usize::MAX
                    && dense[j].abs() >= 0.1 * best
                    && (choice == usize::MAX || col_count[j] < col_count[choice])
                {
                    choice = j;
                }
            }
            let pv = dense[choice];
            let mut rest = Vec::new();
            for &j in &touched {
                if j != choice && dense[j].abs() > 1e-15 * scale && pivot_of_col[j] == usize::MAX {
                    rest.push((j, dense[j] / pv));
                }
            }
            rest.sort_by_key(|&(j, _)| j);
            pivot_of_col[choice] = pivots.len();
            pivots.push(Pivot {
                col: choice,
                rest,
                rhs: rhs / pv,
            });
            keep.push(ri);
        }
        for &j in &touched {
            dense[j] = 0.0;
            in_row[j] = false;
        }
    }
    RowReduction::Independent { keep, dropped }
}
