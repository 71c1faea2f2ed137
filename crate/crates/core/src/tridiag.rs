//! Symmetric tridiagonal matrices and their eigenproblem.
//!
//! Eigenvalues come from bisection on Sturm counts, eigenvectors from inverse
//! iteration using an LU factorisation with partial pivoting (the classic
//! `gttrf`/`gtts2` scheme). Both work in `O(N)` per evaluation, so interval
//! queries like "how many eigenvalues lie below λ" stay cheap for large `N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivot substituted for an exactly vanishing Sturm pivot.
const PIVMIN: f64 = 1e-300;

const INVERSE_ITERATION_STEPS: usize = 12;

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tridiagonal {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::UnsupportedSize { got: 0, min: 1 });
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(Error::Validation(format!(
                "off-diagonal has length {}, expected {}",
                offdiag.len(),
                diag.len() - 1
            )));
        }
        if diag.iter().chain(&offdiag).any(|x| !x.is_finite()) {
            return Err(Error::Validation("matrix entries must be finite".into()));
        }
        Ok(Self { diag, offdiag })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.offdiag[i - 1].abs();
                }
                if i < self.offdiag.len() {
                    s += self.offdiag[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// Interval `[lo, hi]` containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.offdiag[i - 1].abs();
            }
            if i + 1 < n {
                r += self.offdiag[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.offdiag[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.offdiag[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Euclidean norm of `(M − λ) x`.
    pub fn residual(&self, lambda: f64, x: &[f64]) -> f64 {
        self.matvec(x)
            .iter()
            .zip(x)
            .map(|(y, xi)| (y - lambda * xi).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Sorted eigenvalues, each within `tolerance` of a true eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub tolerance: f64,
}

impl Spectrum {
    /// Distance from `lambda` to the nearest eigenvalue.
    pub fn distance(&self, lambda: f64) -> f64 {
        let k = self.eigenvalues.partition_point(|&e| e < lambda);
        let mut d = f64::INFINITY;
        if k < self.eigenvalues.len() {
            d = d.min(self.eigenvalues[k] - lambda);
        }
        if k > 0 {
            d = d.min(lambda - self.eigenvalues[k - 1]);
        }
        d
    }
}

/// Number of eigenvalues strictly less than `lambda`.
pub fn sturm_count(m: &Tridiagonal, lambda: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..m.len() {
        let coupling = if i > 0 {
            m.offdiag[i - 1] * m.offdiag[i - 1] / q
        } else {
            0.0
        };
        q = m.diag[i] - lambda - coupling;
        if q == 0.0 || (q.abs() < PIVMIN && q.is_sign_positive()) {
            q = PIVMIN;
        } else if q.abs() < PIVMIN {
            q = -PIVMIN;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Number of eigenvalues in `[lo, hi)`.
pub fn count_in(m: &Tridiagonal, lo: f64, hi: f64) -> usize {
    sturm_count(m, hi).saturating_sub(sturm_count(m, lo))
}

/// All eigenvalues, bracketed by bisection to width `tol`.
pub fn eigenvalues(m: &Tridiagonal, tol: f64) -> Result<Spectrum> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (lo, hi) = m.gershgorin();
    let pad = tol.max(f64::EPSILON * lo.abs().max(hi.abs()).max(1.0));
    let (lo, hi) = (lo - pad, hi + pad);
    let eigenvalues = (0..m.len())
        .into_par_iter()
        .map(|k| bisect_kth(m, k, lo, hi, tol))
        .collect();
    Ok(Spectrum {
        eigenvalues,
        tolerance: tol,
    })
}

/// The `k`-th smallest eigenvalue (0-based), bracketed to width `tol`.
pub fn kth_eigenvalue(m: &Tridiagonal, k: usize, tol: f64) -> Result<f64> {
    if k >= m.len() {
        return Err(Error::Domain(format!(
            "eigenvalue index {k} out of range for N = {}",
            m.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (lo, hi) = m.gershgorin();
    let pad = tol.max(f64::EPSILON * lo.abs().max(hi.abs()).max(1.0));
    Ok(bisect_kth(m, k, lo - pad, hi + pad, tol))
}

/// Distance from `lambda` to the nearest eigenvalue, to within `tol`.
///
/// Needs only two bisections, so it is much cheaper than a full solve.
pub fn distance_to_spectrum(m: &Tridiagonal, lambda: f64, tol: f64) -> Result<f64> {
    let below = sturm_count(m, lambda);
    let mut d = f64::INFINITY;
    if below > 0 {
        d = d.min(lambda - kth_eigenvalue(m, below - 1, tol)?);
    }
    if below < m.len() {
        d = d.min(kth_eigenvalue(m, below, tol)? - lambda);
    }
    Ok(d.max(0.0))
}

fn bisect_kth(m: &Tridiagonal, k: usize, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(m, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// LU factors of `M − λ` with partial pivoting.
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(m: &Tridiagonal, lambda: f64, pivot_floor: f64) -> Self {
        let n = m.len();
        let mut dl = m.offdiag.clone();
        let mut du = m.offdiag.clone();
        let mut d: Vec<f64> = m.diag.iter().map(|x| x - lambda).collect();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        for x in &mut d {
            if x.abs() < pivot_floor {
                *x = if *x < 0.0 { -pivot_floor } else { pivot_floor };
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i] - self.dl[i] * b[i + 1];
                b[i] = b[i + 1];
                b[i + 1] = temp;
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

fn orthogonalize(x: &mut [f64], against: &[Vec<f64>]) {
    for q in against {
        let dot: f64 = x.iter().zip(q).map(|(a, b)| a * b).sum();
        x.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
    }
}

/// Unit eigenvector for an eigenvalue approximation `lambda`.
pub fn eigenvector(m: &Tridiagonal, lambda: f64) -> Result<Vec<f64>> {
    inverse_iteration(m, lambda, &[], 0)
}

fn inverse_iteration(
    m: &Tridiagonal,
    lambda: f64,
    against: &[Vec<f64>],
    salt: u64,
) -> Result<Vec<f64>> {
    let n = m.len();
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let threshold = 1e-8 * scale;
    let lu = TridiagLu::factor(m, lambda, f64::EPSILON * scale);
    let mut rng = ChaCha8Rng::seed_from_u64(0x7269_6469_6167 ^ salt);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    orthogonalize(&mut x, against);
    normalize(&mut x);
    let mut best = f64::INFINITY;
    for _ in 0..INVERSE_ITERATION_STEPS {
        lu.solve(&mut x);
        orthogonalize(&mut x, against);
        let norm = normalize(&mut x);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numerical(format!(
                "inverse iteration broke down at lambda = {lambda} (N = {n})"
            )));
        }
        best = m.residual(lambda, &x);
        if best <= threshold {
            return Ok(x);
        }
    }
    Err(Error::Numerical(format!(
        "inverse iteration did not converge at lambda = {lambda}: residual {best:.3e} > {threshold:.3e} after {INVERSE_ITERATION_STEPS} steps (N = {n})"
    )))
}

/// Unit eigenvectors for every entry of `spectrum`.
///
/// Eigenvalues closer than `1e-8·‖M‖` form a cluster; vectors within a
/// cluster are orthogonalised against each other.
pub fn eigenvectors(m: &Tridiagonal, spectrum: &Spectrum) -> Result<Vec<Vec<f64>>> {
    let gap = 1e-8 * m.norm();
    let ev = &spectrum.eigenvalues;
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for k in 1..=ev.len() {
        if k == ev.len() || ev[k] - ev[k - 1] > gap {
            clusters.push((start, k));
            start = k;
        }
    }
    let per_cluster: Result<Vec<Vec<Vec<f64>>>> = clusters
        .par_iter()
        .map(|&(a, b)| {
            let mut vs: Vec<Vec<f64>> = Vec::with_capacity(b - a);
            for k in a..b {
                let v = inverse_iteration(m, ev[k], &vs, k as u64)?;
                vs.push(v);
            }
            Ok(vs)
        })
        .collect();
    Ok(per_cluster?.into_iter().flatten().collect())
}
