//! Normalized-cut bipartition from the generalized eigenproblem
//! `(D - W) x = λ D x`.
//!
//! The problem is solved through its symmetric form: with `y = D^{1/2} x`,
//! `D^{-1/2} (D - W) D^{-1/2} y = λ y`, a dense symmetric eigenproblem. The
//! eigenvector of the second-smallest eigenvalue is mapped back to `x`,
//! scaled to unit length, and split at its mean.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::affinity::AffinityMatrix;
use crate::mask::PatchMask;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("node {index} has zero degree; the normalized Laplacian is singular")]
    ZeroDegree { index: usize },
    #[error("need at least 2 nodes for a bipartition, got {0}")]
    TooSmall(usize),
    #[error(
        "eigensolver failed on a {n}x{n} problem (degree range [{min_degree:e}, {max_degree:e}], ratio {ratio:e})"
    )]
    NonConvergence {
        n: usize,
        min_degree: f64,
        max_degree: f64,
        ratio: f64,
    },
    #[error("eigenvector has {len} entries, grid is {rows}x{cols}")]
    GridMismatch { len: usize, rows: usize, cols: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    /// Smallest generalized eigenvalue (0 up to round-off).
    pub lambda1: f64,
    /// Second-smallest generalized eigenvalue.
    pub lambda2: f64,
    /// Unit-norm generalized eigenvector for `lambda2`; its largest-magnitude
    /// entry is positive.
    pub fiedler: Vec<f64>,
    /// `‖(D - W) x - λ₂ D x‖∞`.
    pub residual: f64,
}

/// Which side of the mean split is reported as foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForegroundRule {
    /// The side holding the entry of largest magnitude (lowest index on ties).
    #[default]
    MaxMagnitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bipartition {
    pub foreground: PatchMask,
    pub background: PatchMask,
    /// One side is empty.
    pub degenerate: bool,
}

/// Second generalized eigenpair of the affinity's normalized-cut problem.
pub fn solve_fiedler(a: &AffinityMatrix) -> Result<EigenSolution, SpectralError> {
    let n = a.n();
    if n < 2 {
        return Err(SpectralError::TooSmall(n));
    }
    let degree = a.degree();
    if let Some(index) = degree.iter().position(|&d| d <= 0.0 || !d.is_finite()) {
        return Err(SpectralError::ZeroDegree { index });
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let w = a.weights();

    let mut lap = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s = inv_sqrt[i] * w[(i, j)] * inv_sqrt[j];
            let v = if i == j { 1.0 - s } else { -s };
            lap[(i, j)] = v;
            lap[(j, i)] = v;
        }
    }

    let diagnostics = || {
        let min_degree = degree.iter().copied().fold(f64::INFINITY, f64::min);
        let max_degree = degree.iter().copied().fold(0.0, f64::max);
        SpectralError::NonConvergence {
            n,
            min_degree,
            max_degree,
            ratio: max_degree / min_degree,
        }
    };

    let eig = SymmetricEigen::try_new(lap, f64::EPSILON, 100 * n.max(10)).ok_or_else(diagnostics)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));

    let y = eig.eigenvectors.column(order[1]);
    let mut x: Vec<f64> = (0..n).map(|i| inv_sqrt[i] * y[i]).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(diagnostics());
    }
    x.iter_mut().for_each(|v| *v /= norm);
    let pivot = argmax_abs(&x);
    if x[pivot] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }

    let xv = DVector::from_column_slice(&x);
    let wx = w * &xv;
    let lx: Vec<f64> = (0..n).map(|i| degree[i] * x[i] - wx[i]).collect();
    let num: f64 = lx.iter().zip(&x).map(|(a, b)| a * b).sum();
    let den: f64 = (0..n).map(|i| degree[i] * x[i] * x[i]).sum();
    let lambda2 = num / den;
    let residual = (0..n)
        .map(|i| (lx[i] - lambda2 * degree[i] * x[i]).abs())
        .fold(0.0, f64::max);
    if !residual.is_finite() {
        return Err(diagnostics());
    }

    Ok(EigenSolution {
        lambda1: eig.eigenvalues[order[0]],
        lambda2,
        fiedler: x,
        residual,
    })
}

pub(crate) fn argmax_abs(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

/// Splits `x` at its mean and returns the foreground indicator plus the
/// degenerate flag. Entries equal to the mean fall on the lower side.
pub(crate) fn split_at_mean(x: &[f64], rule: ForegroundRule) -> (Vec<bool>, bool) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let upper: Vec<bool> = x.iter().map(|&v| v > mean).collect();
    let n_upper = upper.iter().filter(|&&b| b).count();
    let degenerate = n_upper == 0 || n_upper == x.len();
    let fg = match rule {
        ForegroundRule::MaxMagnitude => {
            if upper[argmax_abs(x)] {
                upper
            } else {
                upper.into_iter().map(|b| !b).collect()
            }
        }
    };
    (fg, degenerate)
}

/// `cut(A, B) / assoc(A, V) + cut(A, B) / assoc(B, V)` for the split `side`
/// (true = A). 0 for a perfect cut; an all-ones graph scores 1 for any split.
/// Infinite when a side is empty.
pub fn ncut_value(a: &AffinityMatrix, side: &[bool]) -> f64 {
    assert_eq!(side.len(), a.n());
    let w = a.weights();
    let (mut cut, mut assoc_a, mut assoc_b) = (0.0, 0.0, 0.0);
    for i in 0..a.n() {
        if side[i] {
            assoc_a += a.degree()[i];
        } else {
            assoc_b += a.degree()[i];
        }
        for j in 0..a.n() {
            if side[i] && !side[j] {
                cut += w[(i, j)];
            }
        }
    }
    if assoc_a <= 0.0 || assoc_b <= 0.0 {
        return f64::INFINITY;
    }
    cut / assoc_a + cut / assoc_b
}

/// Mean-thresholded bipartition of the eigenvector over a `rows × cols` grid.
pub fn binarize(
    sol: &EigenSolution,
    rows: usize,
    cols: usize,
    rule: ForegroundRule,
) -> Result<Bipartition, SpectralError> {
    let len = sol.fiedler.len();
    if len != rows * cols || len == 0 {
        return Err(SpectralError::GridMismatch { len, rows, cols });
    }
    let (fg, degenerate) = split_at_mean(&sol.fiedler, rule);
    let foreground =
        PatchMask::from_bits(rows, cols, fg).map_err(|_| SpectralError::GridMismatch { len, rows, cols })?;
    let background = foreground.complement();
    Ok(Bipartition {
        foreground,
        background,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affinity(n: usize, f: impl Fn(usize, usize) -> f64) -> AffinityMatrix {
        AffinityMatrix::from_weights(DMatrix::from_fn(n, n, f)).unwrap()
    }

    fn blocks() -> AffinityMatrix {
        affinity(4, |i, j| if (i < 2) == (j < 2) { 1.0 } else { 1e-5 })
    }

    #[test]
    fn two_blocks_split_by_sign() {
        let sol = solve_fiedler(&blocks()).unwrap();
        assert!(sol.lambda2 < 1e-4, "{}", sol.lambda2);
        assert!(sol.residual < 1e-8);
        assert!(sol.fiedler[0] * sol.fiedler[1] > 0.0);
        assert!(sol.fiedler[0] * sol.fiedler[2] < 0.0);
        let part = binarize(&sol, 2, 2, ForegroundRule::default()).unwrap();
        assert!(!part.degenerate);
        let fg: Vec<bool> = part.foreground.bits().to_vec();
        assert!(fg == [true, true, false, false] || fg == [false, false, true, true]);
    }

    #[test]
    fn ncut_of_blocks_and_complete_graph() {
        let b = blocks();
        assert!(ncut_value(&b, &[true, true, false, false]) < 1e-4);
        let k = affinity(6, |_, _| 1.0);
        assert!((ncut_value(&k, &[true, false, true, false, false, false]) - 1.0).abs() < 1e-12);
        assert_eq!(ncut_value(&k, &[false; 6]), f64::INFINITY);
    }

    #[test]
    fn complete_graph_eigenvalue() {
        // no self-loops: the normalized Laplacian of K_n has λ₂ = n / (n - 1)
        let sol = solve_fiedler(&affinity(4, |i, j| if i == j { 0.0 } else { 1.0 })).unwrap();
        assert!((sol.lambda2 - 4.0 / 3.0).abs() < 1e-9, "{}", sol.lambda2);
        assert!(sol.lambda1.abs() < 1e-10);
    }

    #[test]
    fn unit_norm_and_sign_convention() {
        let a = affinity(5, |i, j| if i == j || (i + j) % 3 == 0 { 1.0 } else { 0.01 });
        let sol = solve_fiedler(&a).unwrap();
        let norm: f64 = sol.fiedler.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(sol.fiedler[argmax_abs(&sol.fiedler)] > 0.0);
        assert!(sol.lambda2 >= -1e-10);
    }

    #[test]
    fn binarize_tie_break_picks_lowest_index() {
        let sol = EigenSolution {
            lambda1: 0.0,
            lambda2: 0.1,
            fiedler: vec![-0.5, -0.5, 0.5, 0.5],
            residual: 0.0,
        };
        let part = binarize(&sol, 1, 4, ForegroundRule::MaxMagnitude).unwrap();
        assert_eq!(part.foreground.bits(), &[true, true, false, false]);
        assert_eq!(part.background.bits(), &[false, false, true, true]);
        assert!(!part.degenerate);
    }

    #[test]
    fn constant_vector_is_degenerate() {
        let sol = EigenSolution {
            lambda1: 0.0,
            lambda2: 0.0,
            fiedler: vec![0.5; 4],
            residual: 0.0,
        };
        assert!(binarize(&sol, 2, 2, ForegroundRule::default()).unwrap().degenerate);
        assert!(binarize(&sol, 3, 2, ForegroundRule::default()).is_err());
    }

    #[test]
    fn rejects_zero_degree_and_tiny_graphs() {
        let a = AffinityMatrix::from_weights(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(solve_fiedler(&a), Err(SpectralError::ZeroDegree { index: 1 }));
        let one = AffinityMatrix::from_weights(DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_eq!(solve_fiedler(&one), Err(SpectralError::TooSmall(1)));
    }

    #[test]
    fn scaling_weights_keeps_partition() {
        let base = |i: usize, j: usize| if i == j || (i * j) % 4 == 1 { 1.0 } else { 1e-3 };
        let a = affinity(7, base);
        let b = affinity(7, |i, j| 3.5 * base(i, j));
        let pa = binarize(&solve_fiedler(&a).unwrap(), 1, 7, ForegroundRule::default()).unwrap();
        let pb = binarize(&solve_fiedler(&b).unwrap(), 1, 7, ForegroundRule::default()).unwrap();
        assert_eq!(pa, pb);
    }
}
