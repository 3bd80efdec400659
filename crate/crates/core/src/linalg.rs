//! Dense linear solve, sized for tabular problems (tens to a few thousand
//! states). Gaussian elimination with partial pivoting is plenty: the systems
//! we solve are I - gamma * P with gamma < 1, which is strictly diagonally
//! dominant and very well conditioned.

use crate::error::Error;
use crate::Result;
use ndarray::{Array1, Array2};

/// Solve `a * x = b` for a square `a`, consuming both.
pub fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Result<Array1<f64>> {
    let n = b.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::invalid("linear system dimensions do not match"));
    }
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[[row, col]].abs() > a[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if a[[pivot, col]].abs() < 1e-300 {
            return Err(Error::Solver("singular linear system".into()));
        }
        if pivot != col {
            for k in 0..n {
                let tmp = a[[col, k]];
                a[[col, k]] = a[[pivot, k]];
                a[[pivot, k]] = tmp;
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[[row, col]] / a[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[[row, k]] -= factor * a[[col, k]];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[[row, k]] * x[k];
        }
        x[row] = acc / a[[row, row]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_system() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let b = array![5.0, 10.0];
        let x = solve(a.clone(), b.clone()).unwrap();
        let r0 = 2.0 * x[0] + x[1] - 5.0;
        let r1 = x[0] + 3.0 * x[1] - 10.0;
        assert!(r0.abs() < 1e-12 && r1.abs() < 1e-12);
    }

    #[test]
    fn rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let b = array![1.0, 2.0];
        assert!(solve(a, b).is_err());
    }

    #[test]
    fn pivoting_handles_zero_on_diagonal() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let b = array![3.0, 4.0];
        let x = solve(a, b).unwrap();
        assert!((x[0] - 4.0).abs() < 1e-14 && (x[1] - 3.0).abs() < 1e-14);
    }
}
