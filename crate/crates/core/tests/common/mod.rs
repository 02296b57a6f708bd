//! Independent oracles shared by the integration tests. Nothing here calls
//! into the solver paths under test.

#![allow(dead_code)]

use flowcut::mask::BinaryMask;
use nalgebra::DMatrix;
use rand::Rng;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues ascending and the matching eigenvectors as columns.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i][i].total_cmp(&m[j][j]));
    let vals = order.iter().map(|&i| m[i][i]).collect();
    let vecs = order.iter().map(|&k| (0..n).map(|i| v[i][k]).collect()).collect();
    (vals, vecs)
}

pub struct OracleSolution {
    pub lambdas: Vec<f64>,
    /// Generalized eigenvector `x` for the second-smallest eigenvalue.
    pub x: Vec<f64>,
    /// Symmetric-form eigenvector `y = D^{1/2} x`.
    pub y: Vec<f64>,
}

/// Second generalized eigenpair of `(D - W) x = λ D x` by Jacobi on the
/// normalized Laplacian.
pub fn oracle_fiedler(w: &[Vec<f64>]) -> OracleSolution {
    let n = w.len();
    let d: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    let lap: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| f64::from(u8::from(i == j)) - w[i][j] / (d[i] * d[j]).sqrt())
                .collect()
        })
        .collect();
    let (lambdas, vecs) = jacobi_eigen(&lap);
    let y = vecs[1].clone();
    let x = (0..n).map(|i| y[i] / d[i].sqrt()).collect();
    OracleSolution { lambdas, x, y }
}

/// Strictly-above-mean split; the side holding the largest-magnitude entry
/// (first one on ties) is the foreground.
pub fn oracle_partition(v: &[f64]) -> Vec<bool> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let mut pivot = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    let upper: Vec<bool> = v.iter().map(|&x| x > mean).collect();
    if upper[pivot] {
        upper
    } else {
        upper.iter().map(|b| !b).collect()
    }
}

/// Symmetric {ε, 1} matrix with unit diagonal, each off-diagonal pair 1 with
/// probability `p`.
pub fn random_binary_affinity(rng: &mut impl Rng, n: usize, p: f64, eps: f64) -> Vec<Vec<f64>> {
    let mut w = vec![vec![eps; n]; n];
    for i in 0..n {
        w[i][i] = 1.0;
        for j in i + 1..n {
            if rng.random_bool(p) {
                w[i][j] = 1.0;
                w[j][i] = 1.0;
            }
        }
    }
    w
}

/// Two planted groups: dense inside, sparse across. Needs `n >= 4`.
pub fn planted_affinity(rng: &mut impl Rng, n: usize, eps: f64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let n_a = rng.random_range(2..=n / 2);
    let group: Vec<bool> = (0..n).map(|i| i < n_a).collect();
    let p_in = rng.random_range(0.7..0.95);
    let p_out = rng.random_range(0.0..0.08);
    let mut w = vec![vec![eps; n]; n];
    for i in 0..n {
        w[i][i] = 1.0;
        for j in i + 1..n {
            let p = if group[i] == group[j] { p_in } else { p_out };
            if rng.random_bool(p) {
                w[i][j] = 1.0;
                w[j][i] = 1.0;
            }
        }
    }
    (w, group)
}

pub fn to_dmatrix(w: &[Vec<f64>]) -> DMatrix<f64> {
    let n = w.len();
    DMatrix::from_fn(n, n, |i, j| w[i][j])
}

/// Pixel IoU by direct counting.
pub fn count_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    assert_eq!((a.height(), a.width()), (b.height(), b.width()));
    let (mut i, mut u) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        i += usize::from(x && y);
        u += usize::from(x || y);
    }
    if u == 0 {
        0.0
    } else {
        i as f64 / u as f64
    }
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k - 1 {
            heap(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        heap(k - 1, a, out);
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

/// Minimum assignment cost by exhaustive search over injections of the
/// smaller side.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return 0.0;
    }
    let (small, large, get): (usize, usize, Box<dyn Fn(usize, usize) -> f64>) = if n <= m {
        (n, m, Box::new(|i, j| cost[i][j]))
    } else {
        (m, n, Box::new(|i, j| cost[j][i]))
    };
    let mut best = f64::INFINITY;
    for perm in permutations(large) {
        let c: f64 = (0..small).map(|i| get(i, perm[i])).sum();
        best = best.min(c);
    }
    best
}
