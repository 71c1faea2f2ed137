//! Shared helpers and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use num_complex::Complex64;

use serde::{Deserialize, Serialize};

use resochain::edge::{EdgeModeCandidate, SearchParams};

pub const FIXTURE_PARAMS: SearchParams = SearchParams {
    budget: 0.5,
    attempts: 1000,
    seed: 0,
    probe_blocks: 400,
    scan_grid: 400,
    gap_grid: 200,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub params: SearchParams,
    pub candidate: EdgeModeCandidate,
}

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/edge_mode_library.json")
}

pub fn load_fixture() -> Fixture {
    let text = std::fs::read_to_string(fixture_path())
        .expect("fixture exists; bless with RESOCHAIN_BLESS=1");
    serde_json::from_str(&text).expect("fixture parses")
}

/// Dense row-major matrix.
pub type Dense = Vec<Vec<f64>>;

pub fn dense_tridiagonal(diag: &[f64], offdiag: &[f64]) -> Dense {
    let n = diag.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = diag[i];
        if i + 1 < n {
            a[i][i + 1] = offdiag[i];
            a[i + 1][i] = offdiag[i];
        }
    }
    a
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] != 0.0 {
                for j in 0..n {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    c
}

/// Characteristic polynomial `det(λI − A)` by Faddeev–LeVerrier; `c[k]` is
/// the coefficient of `λ^k`.
pub fn charpoly(a: &Dense) -> Vec<f64> {
    let n = a.len();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = vec![vec![0.0; n]; n];
    for k in 1..=n {
        let mut next = matmul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += c[n - k + 1];
        }
        let am = matmul(a, &next);
        let tr: f64 = (0..n).map(|i| am[i][i]).sum();
        c[n - k] = -tr / k as f64;
        m = next;
    }
    c
}

/// Roots of a monic polynomial by Durand–Kerner iteration.
pub fn poly_roots(c: &[f64]) -> Vec<(f64, f64)> {
    let n = c.len() - 1;
    let bound = 1.0 + c[..n].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = Vec::with_capacity(n);
    let mut p = Complex64::new(bound, 0.0);
    for _ in 0..n {
        p *= seed;
        z.push(p);
    }
    let eval = |x: Complex64| {
        c.iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &k| acc * x + k)
    };
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / den;
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 * bound {
            break;
        }
    }
    z.into_iter().map(|x| (x.re, x.im)).collect()
}

/// `(det(A − λI), tr((A − λI)^{-1}))` by Gaussian elimination with partial pivoting.
fn det_and_trace_inverse(a: &Dense, lambda: f64) -> (f64, f64) {
    let n = a.len();
    let mut m: Dense = a.clone();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= lambda;
    }
    let mut inv: Dense = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut det = 1.0;
    for col in 0..n {
        let p = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        if m[p][col] == 0.0 {
            return (0.0, f64::INFINITY);
        }
        if p != col {
            m.swap(p, col);
            inv.swap(p, col);
            det = -det;
        }
        let piv = m[col][col];
        det *= piv;
        for j in 0..n {
            m[col][j] /= piv;
            inv[col][j] /= piv;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r][j] -= f * m[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    (det, (0..n).map(|i| inv[i][i]).sum())
}

/// Real eigenvalues of a dense matrix with real spectrum, sorted: roots of
/// the characteristic polynomial, polished by Newton steps on `det(A − λI)`.
pub fn dense_eigenvalues(a: &Dense) -> Vec<f64> {
    let scale = a.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut ev: Vec<f64> = poly_roots(&charpoly(a))
        .into_iter()
        .map(|(re, _)| {
            let mut l = re;
            for _ in 0..8 {
                let (_, tr) = det_and_trace_inverse(a, l);
                if !tr.is_finite() || tr == 0.0 {
                    break;
                }
                // d/dλ ln det(A − λI) = −tr((A − λI)^{-1})
                let step = 1.0 / tr;
                if step.abs() > 1e-3 * scale {
                    break;
                }
                l += step;
                if step.abs() < 1e-16 * scale {
                    break;
                }
            }
            l
        })
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}
