//! Per-frequency spectral verdicts for a block library and band scans.
//!
//! For a library of blocks with propagation matrices `𝒫_d(λ)`:
//!
//! - if some `|tr 𝒫_d(λ)| ≤ 2`, `λ` lies in the spectrum of every chain in
//!   which block `d` occurs arbitrarily often in long runs (in particular
//!   every pseudo-ergodic chain);
//! - if every `𝒫_d(λ)` is hyperbolic, all sinks lie in one component of the
//!   complement of the sources, and an invariant cone is found, then `λ` is
//!   in a gap for every block sequence;
//! - otherwise nothing is claimed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{expand_blocks, sample_iid, BlockLibrary};
use crate::capacitance::assemble_jacobi_finite;
use crate::cocycle::{block_propagation, Mat2};
use crate::error::{Error, Result};
use crate::projective::{
    cone_in_component, fixed_points, source_sink_from, Arc, FixedPoints, SinkComponent,
};
use crate::tridiag::distance_to_spectrum;

/// Default bisection tolerance for band edges.
pub const EDGE_TOL: f64 = 1e-10;

/// Default number of grid points of a scan.
pub const DEFAULT_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    InSpectrum,
    CertifiedGap,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::InSpectrum => "InSpectrum",
            Verdict::CertifiedGap => "CertifiedGap",
            Verdict::Indeterminate => "Indeterminate",
        }
    }
}

/// What the verdict rests on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    /// Blocks whose propagation matrix has `|trace| ≤ 2`.
    NonHyperbolic { blocks: Vec<usize> },
    /// A verified invariant cone inside the sink component.
    Cone {
        sink_component: SinkComponent,
        cone: Arc,
    },
    /// All blocks hyperbolic but the sinks are separated by sources.
    SourceSinkFails,
    /// The source-sink condition holds but no cone passed verification.
    NoConeFound { sink_component: SinkComponent },
    /// A trace is too close to ±2 for reliable fixed points.
    IllConditioned { block: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralVerdict {
    pub lambda: f64,
    pub verdict: Verdict,
    pub traces: Vec<f64>,
    pub evidence: Evidence,
    /// Source and sink of every block, when all are hyperbolic.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_points: Option<Vec<FixedPoints>>,
}

impl SpectralVerdict {
    pub fn non_hyperbolic(&self) -> Vec<usize> {
        match &self.evidence {
            Evidence::NonHyperbolic { blocks } => blocks.clone(),
            _ => Vec::new(),
        }
    }

    pub fn sink_component(&self) -> Option<SinkComponent> {
        match &self.evidence {
            Evidence::Cone { sink_component, .. } | Evidence::NoConeFound { sink_component } => {
                Some(*sink_component)
            }
            _ => None,
        }
    }
}

/// Block propagation matrices of the whole library at `lambda`.
pub fn block_matrices(library: &BlockLibrary, lambda: f64) -> Vec<Mat2> {
    library
        .blocks()
        .iter()
        .map(|b| block_propagation(b, lambda))
        .collect()
}

pub fn classify_frequency(library: &BlockLibrary, lambda: f64) -> Result<SpectralVerdict> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "frequency parameter must be nonnegative, got {lambda}"
        )));
    }
    let mats = block_matrices(library, lambda);
    let traces: Vec<f64> = mats.iter().map(Mat2::trace).collect();
    let verdict = |verdict, evidence, fixed_points| SpectralVerdict {
        lambda,
        verdict,
        traces: traces.clone(),
        evidence,
        fixed_points,
    };

    let non_hyperbolic: Vec<usize> = (0..traces.len())
        .filter(|&d| traces[d].abs() <= 2.0)
        .collect();
    if !non_hyperbolic.is_empty() {
        return Ok(verdict(
            Verdict::InSpectrum,
            Evidence::NonHyperbolic {
                blocks: non_hyperbolic,
            },
            None,
        ));
    }

    let mut fps = Vec::with_capacity(mats.len());
    for (d, m) in mats.iter().enumerate() {
        match fixed_points(m) {
            Ok(f) => fps.push(f),
            Err(Error::IllConditioned(_)) => {
                return Ok(verdict(
                    Verdict::Indeterminate,
                    Evidence::IllConditioned { block: d },
                    None,
                ))
            }
            Err(e) => return Err(e),
        }
    }
    let ss = source_sink_from(&fps);
    let Some(component) = ss.sink_component else {
        return Ok(verdict(
            Verdict::Indeterminate,
            Evidence::SourceSinkFails,
            Some(fps),
        ));
    };
    match cone_in_component(&mats, &fps, &component)? {
        Some(cone) => Ok(verdict(
            Verdict::CertifiedGap,
            Evidence::Cone {
                sink_component: component,
                cone,
            },
            Some(fps),
        )),
        None => Ok(verdict(
            Verdict::Indeterminate,
            Evidence::NoConeFound {
                sink_component: component,
            },
            Some(fps),
        )),
    }
}

/// A maximal run of frequencies sharing a verdict and the same set of
/// non-hyperbolic blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandInterval {
    pub lo: f64,
    pub hi: f64,
    pub verdict: Verdict,
    pub non_hyperbolic: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub grid: usize,
    pub tol: f64,
    /// Consecutive intervals covering `[lambda_min, lambda_max]`.
    pub intervals: Vec<BandInterval>,
    /// Interior interval boundaries.
    pub endpoints: Vec<f64>,
}

impl BandReport {
    /// Intervals with the given verdict, merging neighbours that differ only
    /// in their non-hyperbolic block sets.
    pub fn merged(&self, verdict: Verdict) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for iv in self.intervals.iter().filter(|iv| iv.verdict == verdict) {
            match out.last_mut() {
                Some(last) if last.1 == iv.lo => last.1 = iv.hi,
                _ => out.push((iv.lo, iv.hi)),
            }
        }
        out
    }

    /// Verdict of the interval containing `lambda` (closed on both sides;
    /// at a shared endpoint the non-gap verdict wins).
    pub fn verdict_at(&self, lambda: f64) -> Option<Verdict> {
        let hits: Vec<Verdict> = self
            .intervals
            .iter()
            .filter(|iv| iv.lo <= lambda && lambda <= iv.hi)
            .map(|iv| iv.verdict)
            .collect();
        if hits.is_empty() {
            None
        } else if hits.iter().all(|v| *v == Verdict::CertifiedGap) {
            Some(Verdict::CertifiedGap)
        } else {
            hits.into_iter().find(|v| *v != Verdict::CertifiedGap)
        }
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.lambda_min <= lo && hi <= self.lambda_max
    }
}

type Label = (Verdict, Vec<usize>);

fn label(library: &BlockLibrary, lambda: f64) -> Result<Label> {
    let v = classify_frequency(library, lambda)?;
    let nh = v.non_hyperbolic();
    Ok((v.verdict, nh))
}

fn hyperbolic(library: &BlockLibrary, d: usize, lambda: f64) -> bool {
    block_propagation(&library.blocks()[d], lambda)
        .trace()
        .abs()
        > 2.0
}

/// Boundary of `pred` inside `[a, b]`, given `pred(a) != pred(b)`.
fn bisect<F: FnMut(f64) -> Result<bool>>(
    mut a: f64,
    mut b: f64,
    tol: f64,
    mut pred: F,
) -> Result<f64> {
    let left = pred(a)?;
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if pred(mid)? == left {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Classify a grid of frequencies and refine where the verdict changes.
pub fn scan(
    library: &BlockLibrary,
    lambda_min: f64,
    lambda_max: f64,
    grid: usize,
) -> Result<BandReport> {
    scan_with_tol(library, lambda_min, lambda_max, grid, EDGE_TOL)
}

pub fn scan_with_tol(
    library: &BlockLibrary,
    lambda_min: f64,
    lambda_max: f64,
    grid: usize,
    tol: f64,
) -> Result<BandReport> {
    if !(lambda_min >= 0.0 && lambda_min < lambda_max && lambda_max.is_finite()) {
        return Err(Error::Validation(format!(
            "scan range must satisfy 0 <= min < max, got [{lambda_min}, {lambda_max}]"
        )));
    }
    if grid < 2 {
        return Err(Error::Validation(format!(
            "scan grid needs at least 2 points, got {grid}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Validation(format!(
            "scan tolerance must be positive, got {tol}"
        )));
    }
    let step = (lambda_max - lambda_min) / (grid - 1) as f64;
    let points: Vec<f64> = (0..grid)
        .map(|k| {
            if k + 1 == grid {
                lambda_max
            } else {
                lambda_min + k as f64 * step
            }
        })
        .collect();
    let labels: Vec<Label> = points
        .par_iter()
        .map(|&l| label(library, l))
        .collect::<Result<_>>()?;

    // Each changing cell contributes its block roots and, where the verdict
    // flips without a hyperbolicity change, a bisected boundary.
    let cells: Vec<usize> = (0..grid - 1)
        .filter(|&k| labels[k] != labels[k + 1])
        .collect();
    let fine_tol = tol * 1e-2;
    let per_cell: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&k| -> Result<Vec<f64>> {
            let (a, b) = (points[k], points[k + 1]);
            let mut roots = Vec::new();
            for d in 0..library.size() {
                if hyperbolic(library, d, a) != hyperbolic(library, d, b) {
                    roots.push(bisect(a, b, fine_tol, |l| Ok(hyperbolic(library, d, l)))?);
                }
            }
            roots.sort_by(f64::total_cmp);
            let mut knots = vec![a];
            knots.extend(&roots);
            knots.push(b);
            // Verdict changes between consecutive samples with no root in between.
            let mut samples: Vec<(f64, Label)> = vec![(a, labels[k].clone())];
            for w in knots.windows(2) {
                if w[1] - w[0] > 4.0 * fine_tol {
                    let mid = 0.5 * (w[0] + w[1]);
                    samples.push((mid, label(library, mid)?));
                }
            }
            samples.push((b, labels[k + 1].clone()));
            let mut extra = Vec::new();
            for w in samples.windows(2) {
                let ((x, lx), (y, ly)) = (&w[0], &w[1]);
                let root_between = roots.iter().any(|r| r > x && r < y);
                if lx != ly && !root_between {
                    extra.push(bisect(*x, *y, fine_tol, |l| Ok(label(library, l)? == *lx))?);
                }
            }
            roots.extend(extra);
            Ok(roots)
        })
        .collect::<Result<_>>()?;

    let mut cuts: Vec<f64> = per_cell.into_iter().flatten().collect();
    cuts.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::new();
    for c in cuts {
        match merged.last_mut() {
            Some(last) if c - *last <= 10.0 * fine_tol => *last = 0.5 * (*last + c),
            _ => merged.push(c),
        }
    }
    merged.retain(|&c| c > lambda_min && c < lambda_max);

    let mut bounds = vec![lambda_min];
    bounds.extend(&merged);
    bounds.push(lambda_max);
    let segment_labels: Vec<Label> = bounds
        .par_windows(2)
        .map(|w| label(library, 0.5 * (w[0] + w[1])))
        .collect::<Result<_>>()?;

    // A gap label at a segment midpoint says nothing about thin uncertified
    // slivers next to the segment ends (the cone search fails very close to a
    // band edge), so probe one tolerance inside each end of every gap segment.
    let mut segments: Vec<(f64, f64, Label)> = Vec::new();
    for (w, lab) in bounds.windows(2).zip(segment_labels) {
        if lab.0 != Verdict::CertifiedGap || w[1] - w[0] <= 4.0 * tol {
            segments.push((w[0], w[1], lab));
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let mut lo = w[0];
        let mut hi = w[1];
        let left = label(library, lo + tol)?;
        if left != lab {
            let cut = bisect(lo + tol, mid, fine_tol, |l| Ok(label(library, l)? == left))?;
            segments.push((lo, cut, left));
            lo = cut;
        }
        let right = label(library, hi - tol)?;
        let mut tail = None;
        if right != lab {
            let cut = bisect(mid, hi - tol, fine_tol, |l| Ok(label(library, l)? == lab))?;
            tail = Some((cut, hi, right));
            hi = cut;
        }
        segments.push((lo, hi, lab));
        segments.extend(tail);
    }

    let mut intervals: Vec<BandInterval> = Vec::new();
    for (lo, hi, (verdict, nh)) in segments {
        match intervals.last_mut() {
            Some(last) if last.verdict == verdict && last.non_hyperbolic == nh => last.hi = hi,
            _ => intervals.push(BandInterval {
                lo,
                hi,
                verdict,
                non_hyperbolic: nh,
            }),
        }
    }
    let endpoints = intervals.iter().skip(1).map(|iv| iv.lo).collect();
    Ok(BandReport {
        lambda_min,
        lambda_max,
        grid,
        tol,
        intervals,
        endpoints,
    })
}

/// Upper bound on the spectrum of any chain built from `library`.
///
/// Each row of the Jacobi matrix has absolute row sum at most
/// `4·max(v²/ℓ)/min(s)`, by Gershgorin.
pub fn spectral_upper_bound(library: &BlockLibrary) -> f64 {
    let rs = library.blocks().iter().flat_map(|b| b.resonators());
    let (mut max_m, mut min_s) = (0.0f64, f64::INFINITY);
    for r in rs {
        max_m = max_m.max(r.material());
        min_s = min_s.min(r.spacing());
    }
    4.0 * max_m / min_s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub blocks: usize,
    pub seed: u64,
    pub resonators: usize,
    pub distance: f64,
}

/// `dist(λ, σ(J_N))` for i.i.d. samples of each size and seed.
pub fn finite_size_probe(
    library: &BlockLibrary,
    lambda: f64,
    sizes: &[usize],
    seeds: &[u64],
) -> Result<Vec<ProbeResult>> {
    let jobs: Vec<(usize, u64)> = sizes
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    jobs.par_iter()
        .map(|&(m, seed)| {
            let chain = expand_blocks(library, &sample_iid(library, m, seed))?;
            let j = assemble_jacobi_finite(&chain)?;
            Ok(ProbeResult {
                blocks: m,
                seed,
                resonators: chain.len(),
                distance: distance_to_spectrum(&j, lambda, 1e-13)?,
            })
        })
        .collect()
}
