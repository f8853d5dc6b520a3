//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::DMatrix;

/// AUROC by comparing every (positive, negative) pair; ties count one half.
pub fn pairwise_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Cyclic Jacobi eigenvalue solver for symmetric matrices. Returns
/// eigenvalues in descending order with matching unit eigenvectors as
/// columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Gaussian NLL in nats written out from the density formula, with the
/// inverse and determinant from an LU decomposition.
pub fn gaussian_nll(z: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let d = z.len();
    let lu = cov.clone().lu();
    let inv = lu.try_inverse().expect("invertible");
    let det = cov.determinant();
    let mut quad = 0.0;
    for i in 0..d {
        for j in 0..d {
            quad += (z[i] - mean[i]) * inv[(i, j)] * (z[j] - mean[j]);
        }
    }
    0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad)
}

/// Central finite-difference gradient.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[i] += eps;
            lo[i] -= eps;
            (f(&hi) - f(&lo)) / (2.0 * eps)
        })
        .collect()
}

/// All non-empty proper subsets of `0..k`, as sorted index lists.
pub fn proper_subsets(k: usize) -> Vec<Vec<usize>> {
    (1..(1u64 << k) - 1)
        .map(|mask| (0..k).filter(|i| mask >> i & 1 == 1).collect())
        .collect()
}

/// Deterministic pseudo-random stream for building fixtures without
/// sharing code with the library's sampler.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Approximately standard normal (sum of 12 uniforms).
    pub fn normal(&mut self) -> f64 {
        (0..12).map(|_| self.next_f64()).sum::<f64>() - 6.0
    }
}
