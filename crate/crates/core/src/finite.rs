//! Finite chains: spectra, the inclusion of finite spectra in the
//! semi-infinite spectra, and densities of states.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blocks::{expand_blocks, BlockLibrary, BlockSequence, ResonatorSequence};
use crate::capacitance::assemble_jacobi_finite;
use crate::classify::{BandReport, Verdict};
use crate::cocycle::propagation_matrix;
use crate::edge::EdgeMode;
use crate::error::{Error, Result};
use crate::tridiag::{eigenvalues, Spectrum};

/// Bisection width for finite spectra.
pub const SPECTRUM_TOL: f64 = 1e-12;

/// Default inclusion tolerance.
pub const INCLUSION_TOL: f64 = 1e-8;

/// Stable identifier of a library: SHA-256 of its JSON form.
pub fn library_id(library: &BlockLibrary) -> String {
    let json = serde_json::to_vec(library).expect("library serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSpectrumResult {
    pub library_id: String,
    pub sequence: BlockSequence,
    pub resonators: usize,
    pub eigenvalues: Spectrum,
}

/// Eigenvalues of `VC` for the chain `seq`, computed from the similar
/// symmetric matrix `J_N = V^{1/2} C V^{1/2}`.
pub fn finite_spectrum(
    library: &BlockLibrary,
    seq: &BlockSequence,
) -> Result<FiniteSpectrumResult> {
    let chain = expand_blocks(library, seq)?;
    let j = assemble_jacobi_finite(&chain)?;
    Ok(FiniteSpectrumResult {
        library_id: library_id(library),
        sequence: seq.clone(),
        resonators: chain.len(),
        eigenvalues: eigenvalues(&j, SPECTRUM_TOL)?,
    })
}

/// Which way an inclusion flag can be wrong.
///
/// Gaps are only reported where certified, so the bulk part of the target set
/// is an over-approximation. Edge-mode frequencies are only those that were
/// detected, so that part is an under-approximation. A flag can therefore be a
/// false alarm caused by an undetected edge mode; an unflagged eigenvalue in an
/// Indeterminate interval is not evidence of anything.
pub const FLAG_BIAS: &str = "flags may be false alarms caused by undetected edge modes; \
     unflagged eigenvalues inside Indeterminate intervals are unverified";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionEntry {
    pub index: usize,
    pub lambda: f64,
    /// Distance to the non-gap intervals and detected edge-mode frequencies.
    pub distance: f64,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub tol: f64,
    pub entries: Vec<InclusionEntry>,
    pub flagged: usize,
    pub flag_bias: String,
}

/// Distance from `lambda` to the union of non-gap intervals and edge frequencies.
pub fn distance_to_sigma(report: &BandReport, edge_lambdas: &[f64], lambda: f64) -> f64 {
    let mut d = f64::INFINITY;
    for iv in report
        .intervals
        .iter()
        .filter(|iv| iv.verdict != Verdict::CertifiedGap)
    {
        let di = if lambda < iv.lo {
            iv.lo - lambda
        } else if lambda > iv.hi {
            lambda - iv.hi
        } else {
            0.0
        };
        d = d.min(di);
    }
    for &e in edge_lambdas {
        d = d.min((lambda - e).abs());
    }
    d
}

/// Compare a finite spectrum with the certified spectrum plus edge modes.
pub fn inclusion_check(
    result: &FiniteSpectrumResult,
    band_report: &BandReport,
    edge_modes: &[EdgeMode],
    tol: f64,
) -> Result<InclusionReport> {
    let ev = &result.eigenvalues.eigenvalues;
    if let (Some(&lo), Some(&hi)) = (ev.first(), ev.last()) {
        let slack = result.eigenvalues.tolerance;
        if !band_report.covers(lo + slack, hi - slack) {
            return Err(Error::Precondition(format!(
                "band report [{}, {}] does not cover the eigenvalues [{lo}, {hi}]",
                band_report.lambda_min, band_report.lambda_max
            )));
        }
    }
    let edge_lambdas: Vec<f64> = edge_modes.iter().map(|m| m.lambda).collect();
    let entries: Vec<InclusionEntry> = ev
        .iter()
        .enumerate()
        .map(|(index, &lambda)| {
            let distance = distance_to_sigma(band_report, &edge_lambdas, lambda);
            InclusionEntry {
                index,
                lambda,
                distance,
                flag: distance > tol,
            }
        })
        .collect();
    let flagged = entries.iter().filter(|e| e.flag).count();
    Ok(InclusionReport {
        tol,
        entries,
        flagged,
        flag_bias: FLAG_BIAS.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    /// Fraction of all eigenvalues in each bin.
    pub mass: Vec<f64>,
    /// Eigenvalues outside `[lo, hi]`.
    pub outside: usize,
}

impl Histogram {
    pub fn bin_edges(&self) -> Vec<f64> {
        let n = self.mass.len();
        (0..=n)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / n as f64)
            .collect()
    }
}

/// Normalized eigenvalue histogram over the range of the spectrum.
pub fn density_of_states(result: &FiniteSpectrumResult, bins: usize) -> Result<Histogram> {
    let ev = &result.eigenvalues.eigenvalues;
    let lo = ev.first().copied().unwrap_or(0.0);
    let mut hi = ev.last().copied().unwrap_or(1.0);
    if hi <= lo {
        hi = lo + 1.0;
    }
    density_of_states_in(result, bins, lo, hi)
}

/// Normalized eigenvalue histogram over `[lo, hi]`; the last bin is closed.
pub fn density_of_states_in(
    result: &FiniteSpectrumResult,
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Validation("histogram needs at least one bin".into()));
    }
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Validation(format!(
            "histogram range must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    let ev = &result.eigenvalues.eigenvalues;
    let mut counts = vec![0usize; bins];
    let mut outside = 0;
    for &e in ev {
        if e < lo || e > hi {
            outside += 1;
            continue;
        }
        let k = (((e - lo) / (hi - lo)) * bins as f64) as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let total = ev.len().max(1) as f64;
    Ok(Histogram {
        lo,
        hi,
        mass: counts.into_iter().map(|c| c as f64 / total).collect(),
        outside,
    })
}

/// `ln|p₂₁(λ)|` where `p₂₁` is the lower-left entry of the total propagation
/// matrix of the chain, together with its sign.
///
/// A finite chain has `λ` as an eigenvalue exactly when `p₂₁(λ) = 0`.
pub fn total_propagation_p21(chain: &ResonatorSequence, lambda: f64) -> (f64, f64) {
    let mut w = [1.0, 0.0];
    let mut log = 0.0;
    for r in chain.resonators() {
        w = propagation_matrix(r, lambda).apply(w);
        let s = w[0].abs().max(w[1].abs());
        if s > 0.0 {
            w = [w[0] / s, w[1] / s];
            log += s.ln();
        }
    }
    (log + w[1].abs().ln(), w[1].signum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    /// Points at which the comparison was made.
    pub points: usize,
    /// `max − min` of `ln|p₂₁(λ)/Π(λ − λ_k)|` over the points; zero when
    /// `p₂₁` is a constant multiple of the characteristic polynomial.
    pub log_ratio_spread: f64,
    /// Whether `p₂₁(λ)/Π(λ − λ_k)` kept one sign.
    pub sign_consistent: bool,
}

/// Compare the lower-left entry of the total propagation matrix with the
/// characteristic polynomial built from the computed eigenvalues.
pub fn factorization_diagnostic(
    chain: &ResonatorSequence,
    spectrum: &Spectrum,
    lambdas: &[f64],
) -> FactorizationReport {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut signs = Vec::new();
    for &l in lambdas {
        let (lp, sp) = total_propagation_p21(chain, l);
        let mut lq = 0.0;
        let mut sq = 1.0;
        for &e in &spectrum.eigenvalues {
            lq += (l - e).abs().ln();
            if l < e {
                sq = -sq;
            }
        }
        let r = lp - lq;
        if r.is_finite() {
            lo = lo.min(r);
            hi = hi.max(r);
            signs.push(sp * sq);
        }
    }
    FactorizationReport {
        points: signs.len(),
        log_ratio_spread: if signs.is_empty() { f64::NAN } else { hi - lo },
        sign_consistent: signs.windows(2).all(|w| w[0] == w[1]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::sample_iid;
    use crate::classify::scan;

    #[test]
    fn two_monomers() {
        let lib = BlockLibrary::standard();
        let r = finite_spectrum(&lib, &BlockSequence::explicit(vec![0, 0])).unwrap();
        let ev = &r.eigenvalues.eigenvalues;
        assert!(ev[0].abs() < 1e-10 && (ev[1] - 0.5).abs() < 1e-10);
        assert_eq!(r.resonators, 2);
    }

    #[test]
    fn kernel_and_bands() {
        let lib = BlockLibrary::standard();
        for seed in 0..4 {
            let r = finite_spectrum(&lib, &sample_iid(&lib, 60, seed)).unwrap();
            let ev = &r.eigenvalues.eigenvalues;
            assert!(ev[0].abs() < 1e-10);
            assert!(ev.windows(2).all(|w| w[0] <= w[1]));
            assert!(ev
                .iter()
                .all(|&e| (e <= 1.0 + 1e-8) || (2.0 - 1e-8..=3.0 + 1e-8).contains(&e)));
        }
    }

    #[test]
    fn single_resonator_is_unsupported() {
        let lib = BlockLibrary::standard();
        assert!(matches!(
            finite_spectrum(&lib, &BlockSequence::explicit(vec![0])),
            Err(Error::UnsupportedSize { got: 1, min: 2 })
        ));
    }

    #[test]
    fn inclusion_standard() {
        let lib = BlockLibrary::standard();
        let report = scan(&lib, 0.0, 4.0, 401).unwrap();
        let r = finite_spectrum(&lib, &sample_iid(&lib, 100, 3)).unwrap();
        let inc = inclusion_check(&r, &report, &[], INCLUSION_TOL).unwrap();
        assert_eq!(inc.flagged, 0);
        assert!(inc.entries[0].distance <= 1e-12);
        assert_eq!(distance_to_sigma(&report, &[], 0.0), 0.0);

        let narrow = scan(&lib, 0.0, 1.5, 50).unwrap();
        assert!(matches!(
            inclusion_check(&r, &narrow, &[], 1e-8),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn distance_with_edges() {
        let lib = BlockLibrary::standard();
        let report = scan(&lib, 0.0, 4.0, 101).unwrap();
        // Indeterminate slivers at the band edge (width < 1e-8) count as possible spectrum.
        assert!((distance_to_sigma(&report, &[], 1.25) - 0.25).abs() < 1e-8);
        assert!((distance_to_sigma(&report, &[1.3], 1.25) - 0.05).abs() < 1e-12);
        assert_eq!(distance_to_sigma(&report, &[], 2.5), 0.0);
    }

    #[test]
    fn histogram_mass() {
        let lib = BlockLibrary::standard();
        let r = finite_spectrum(&lib, &sample_iid(&lib, 80, 1)).unwrap();
        let h = density_of_states(&r, 37).unwrap();
        assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h.outside, 0);
        assert_eq!(h.bin_edges().len(), 38);
        assert!(density_of_states(&r, 0).is_err());
        let h = density_of_states_in(&r, 4, 0.0, 1.0).unwrap();
        assert!(h.outside > 0);
    }

    #[test]
    fn p21_vanishes_on_the_spectrum() {
        let lib = BlockLibrary::standard();
        let seq = sample_iid(&lib, 15, 2);
        let chain = expand_blocks(&lib, &seq).unwrap();
        let r = finite_spectrum(&lib, &seq).unwrap();
        let grid: Vec<f64> = (0..200).map(|k| 0.013 + k as f64 * 0.0199).collect();
        let f = factorization_diagnostic(&chain, &r.eigenvalues, &grid);
        assert_eq!(f.points, 200);
        assert!(f.sign_consistent);
        assert!(f.log_ratio_spread < 1e-8, "{}", f.log_ratio_spread);
    }

    #[test]
    fn id_is_stable() {
        let a = library_id(&BlockLibrary::standard());
        assert_eq!(a.len(), 64);
        assert_eq!(a, library_id(&BlockLibrary::standard()));
    }
}
