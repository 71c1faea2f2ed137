//! Capacitance matrix, material matrix and the symmetric Jacobi form.

use serde::{Deserialize, Serialize};

use crate::blocks::{Resonator, ResonatorSequence};
use crate::error::{Error, Result};
use crate::tridiag::Tridiagonal;

/// `V` (as its diagonal) together with `C`.
///
/// The generalised problem `VC u = λ u` is similar to the symmetric
/// `V^{1/2} C V^{1/2}`, which is what [`assemble_jacobi_finite`] returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedCapacitance {
    pub v_diag: Vec<f64>,
    pub c: Tridiagonal,
}

impl GeneralizedCapacitance {
    pub fn assemble(chain: &ResonatorSequence) -> Result<Self> {
        let n = chain.len();
        if n < 2 {
            return Err(Error::UnsupportedSize { got: n, min: 2 });
        }
        let spacings: Vec<f64> = chain.resonators()[..n - 1]
            .iter()
            .map(Resonator::spacing)
            .collect();
        Ok(Self {
            v_diag: assemble_material(chain),
            c: assemble_capacitance(&spacings)?,
        })
    }

    /// `V^{1/2} C V^{1/2}` computed entrywise from the two factors.
    pub fn symmetrized(&self) -> Tridiagonal {
        let sq: Vec<f64> = self.v_diag.iter().map(|v| v.sqrt()).collect();
        let diag = self
            .c
            .diag()
            .iter()
            .zip(&self.v_diag)
            .map(|(c, v)| c * v)
            .collect();
        let offdiag = self
            .c
            .offdiag()
            .iter()
            .enumerate()
            .map(|(i, c)| sq[i] * c * sq[i + 1])
            .collect();
        Tridiagonal::new(diag, offdiag).expect("shapes agree")
    }
}

/// The capacitance matrix of a chain with the given `N−1` gaps.
pub fn assemble_capacitance(spacings: &[f64]) -> Result<Tridiagonal> {
    if spacings.is_empty() {
        return Err(Error::UnsupportedSize {
            got: spacings.len() + 1,
            min: 2,
        });
    }
    if let Some(s) = spacings.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::Validation(format!(
            "spacing must be positive, got {s}"
        )));
    }
    let n = spacings.len() + 1;
    let inv: Vec<f64> = spacings.iter().map(|s| 1.0 / s).collect();
    let diag = (0..n)
        .map(|i| {
            let left = if i > 0 { inv[i - 1] } else { 0.0 };
            let right = if i < n - 1 { inv[i] } else { 0.0 };
            left + right
        })
        .collect();
    let offdiag = inv.iter().map(|x| -x).collect();
    Tridiagonal::new(diag, offdiag)
}

/// Diagonal of `V`: `v_i²/ℓ_i`.
pub fn assemble_material(chain: &ResonatorSequence) -> Vec<f64> {
    chain.resonators().iter().map(Resonator::material).collect()
}

/// Off-diagonal band entry coupling `r` to the resonator `next` after it.
pub fn band_offdiag(r: &Resonator, next: &Resonator) -> f64 {
    -r.wave_speed() * next.wave_speed() / (r.spacing() * (r.length() * next.length()).sqrt())
}

/// Interior diagonal band entry of `r` given its predecessor `prev`.
pub fn band_diag(prev: &Resonator, r: &Resonator) -> f64 {
    r.material() * (1.0 / prev.spacing() + 1.0 / r.spacing())
}

/// Edge value of the first resonator of a chain: only the gap to its right counts.
pub fn edge_diag(r: &Resonator) -> f64 {
    r.material() / r.spacing()
}

/// The finite Jacobi matrix `J_N = V^{1/2} C V^{1/2}` with physical edges.
pub fn assemble_jacobi_finite(chain: &ResonatorSequence) -> Result<Tridiagonal> {
    let rs = chain.resonators();
    let n = rs.len();
    if n < 2 {
        return Err(Error::UnsupportedSize { got: n, min: 2 });
    }
    let offdiag = rs.windows(2).map(|w| band_offdiag(&w[0], &w[1])).collect();
    let mut diag = Vec::with_capacity(n);
    diag.push(edge_diag(&rs[0]));
    diag.extend(rs.windows(3).map(|w| band_diag(&w[0], &w[1])));
    diag.push(rs[n - 1].material() / rs[n - 2].spacing());
    Tridiagonal::new(diag, offdiag)
}

/// Leading-order resonant frequency `√(δλ)`.
pub fn subwavelength_frequency(lambda: f64, delta: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!(
            "eigenvalue must be nonnegative, got {lambda}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "contrast must lie in (0, 1), got {delta}"
        )));
    }
    Ok((delta * lambda).sqrt())
}
