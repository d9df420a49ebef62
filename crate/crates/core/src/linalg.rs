//! Shared linear-solve kernel for the Bellman-style systems `(I − γ T) x = b`
//! with `T` substochastic and `0 ≤ γ < 1`.
//!
//! Dense LU with partial pivoting (via nalgebra) up to [`DENSE_LIMIT`]
//! unknowns; beyond that a Richardson iteration `x ← b + γ T x`, which
//! converges geometrically at rate γ and needs no factorization storage.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest system handed to the dense LU path. Above this we fall back to the
/// matrix-free iteration to keep memory bounded.
pub(crate) const DENSE_LIMIT: usize = 4096;

/// Iteration cap for the Richardson fallback; generous even for γ = 0.999.
const RICHARDSON_CAP: u64 = 5_000_000;

/// Solve `(I − γ T) x = b` where `rows[s]` is the s-th row of `T`.
///
/// Every row must be a (sub)probability vector; γ < 1 then makes the system
/// nonsingular, so a singular LU factorization signals corrupted input.
pub(crate) fn solve_discounted(rows: &[Vec<f64>], gamma: f64, b: &[f64], context: &'static str) -> Result<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(rows.len(), n);
    if gamma == 0.0 {
        return Ok(b.to_vec());
    }
    if n <= DENSE_LIMIT {
        let a = DMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - gamma * rows[i][j]
        });
        let rhs = DVector::from_column_slice(b);
        match a.lu().solve(&rhs) {
            Some(x) => Ok(x.iter().copied().collect()),
            None => Err(Error::Singular(context)),
        }
    } else {
        richardson(rows, gamma, b, context)
    }
}

fn richardson(rows: &[Vec<f64>], gamma: f64, b: &[f64], context: &'static str) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = b.to_vec();
    let mut next = vec![0.0; n];
    // Successive-difference target chosen so the final fixed-point error
    // γΔ/(1−γ) stays near machine precision relative to the value scale.
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs())) / (1.0 - gamma);
    let tol = 1e-13 * scale.max(1.0) * (1.0 - gamma) / gamma;
    let mut iters = 0u64;
    loop {
        let mut diff = 0.0f64;
        for s in 0..n {
            let mut acc = 0.0;
            let row = &rows[s];
            for (sp, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    acc += p * x[sp];
                }
            }
            next[s] = b[s] + gamma * acc;
            diff = diff.max((next[s] - x[s]).abs());
        }
        std::mem::swap(&mut x, &mut next);
        iters += 1;
        if diff <= tol {
            return Ok(x);
        }
        if iters >= RICHARDSON_CAP {
            return Err(Error::IterationCap {
                context,
                cap: RICHARDSON_CAP,
                achieved: diff,
            });
        }
    }
}

/// Solve a small dense system `A x = b` (used by the Newton steps of the
/// regularized saddle solver).
pub(crate) fn solve_dense(a: DMatrix<f64>, b: DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    a.lu().solve(&b).ok_or(Error::Singular(context))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_gamma_zero() {
        let rows = vec![vec![1.0]];
        let x = solve_discounted(&rows, 0.0, &[3.5], "test").unwrap();
        assert_eq!(x, vec![3.5]);
    }

    #[test]
    fn geometric_series_self_loop() {
        // (1 − γ) x = 1  →  x = 1/(1−γ)
        let rows = vec![vec![1.0]];
        let x = solve_discounted(&rows, 0.5, &[1.0], "test").unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn richardson_matches_lu() {
        // Small chain solved both ways.
        let rows = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let b = vec![0.0, 1.0];
        let lu = solve_discounted(&rows, 0.9, &b, "test").unwrap();
        let rich = richardson(&rows, 0.9, &b, "test").unwrap();
        for s in 0..2 {
            assert!((lu[s] - rich[s]).abs() < 1e-9, "state {s}: {} vs {}", lu[s], rich[s]);
        }
        assert!((lu[0] - 9.0).abs() < 1e-10);
        assert!((lu[1] - 10.0).abs() < 1e-10);
    }
}
