//! Semi-infinite chains: stable directions, edge modes, and the one-sidedness
//! of edge modes.
//!
//! A semi-infinite chain `J_+` starts at resonator 0 with the physical edge
//! value `b_0 = v_0²/(ℓ_0 s_0)`. At a certified gap frequency the propagation
//! cocycle has a stable direction `s(0)`, and `λ` is an eigenvalue of `J_+`
//! exactly when `s(0)` is the line through `(1, 0)`. The eigenvector is then
//! recovered by propagating `(1, 0)` along the chain and converting
//! `(u, u')` pairs back to Jacobi coordinates.
//!
//! Finite block sequences are repeated periodically to make them infinite.
//! The right edge of a chain is handled by mirroring it (see
//! [`ResonatorSequence::mirrored`]); the negative half-line operator `J_−`
//! built from a sequence `χ` is the mirrored chain of the reversed sequence.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{
    expand_blocks, sample_iid, Block, BlockLibrary, BlockSequence, Resonator, ResonatorSequence,
};
use crate::capacitance::assemble_jacobi_finite;
use crate::classify::{classify_frequency, scan, spectral_upper_bound, Verdict};
use crate::cocycle::{
    conjugacy, propagation_matrix, Cocycle, IteratedProduct, Mat2, PropagationCocycle,
};
use crate::error::{Error, Result};
use crate::projective::{proj_distance, ProjectivePoint};

/// Singular-value ratio a forward product must exceed before its most
/// contracted direction is trusted.
pub const SINGULAR_RATIO: f64 = 1e8;

/// Extra steps over which the direction must be stationary.
pub const STATIONARITY_STEPS: usize = 20;

/// Default stationarity tolerance (projective distance).
pub const STATIONARITY_TOL: f64 = 1e-12;

/// Resonators after which a stable-direction computation gives up.
pub const MAX_DEPTH: usize = 200_000;

/// Bisection width for edge-mode frequencies.
pub const ROOT_TOL: f64 = 1e-10;

/// Largest accepted `|indicator|` at a reported root.
pub const INDICATOR_TOL: f64 = 1e-10;

/// Blocks kept when reconstructing an edge eigenvector.
pub const DEFAULT_TRUNCATION_BLOCKS: usize = 400;

/// Relative size of the last eigenvector entry that counts as decayed.
const TAIL_TOL: f64 = 1e-8;

const MAX_DOUBLINGS: usize = 4;

/// Which end of a chain is the edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// The chain as seen from the given edge, first resonator at the edge.
pub fn edge_chain(
    library: &BlockLibrary,
    seq: &BlockSequence,
    side: Side,
) -> Result<ResonatorSequence> {
    let chain = expand_blocks(library, seq)?;
    if chain.is_empty() {
        return Err(Error::Validation(
            "edge analysis needs a nonempty sequence".into(),
        ));
    }
    Ok(match side {
        Side::Left => chain,
        Side::Right => chain.mirrored(),
    })
}

/// The negative half-line operator's chain: blocks `χ(0), χ(1), …` placed
/// leftwards from the edge, seen from the edge.
pub fn negative_half_chain(
    library: &BlockLibrary,
    seq: &BlockSequence,
) -> Result<ResonatorSequence> {
    edge_chain(library, &seq.reversed(), Side::Right)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableDirection {
    pub point: ProjectivePoint,
    /// Per-resonator contraction factor of the stable direction.
    pub contraction_estimate: f64,
    /// Resonators multiplied before the direction settled.
    pub depth_used: usize,
}

/// `(ln σ_max, angle of the least-stretched right singular vector)`.
fn singular_data(m: &Mat2) -> (f64, f64) {
    let p = m.a * m.a + m.c * m.c;
    let r = m.b * m.b + m.d * m.d;
    let q = m.a * m.b + m.c * m.d;
    let half = 0.5 * (p - r);
    let s1sq = 0.5 * (p + r) + half.hypot(q);
    let phi = 0.5 * (2.0 * q).atan2(p - r);
    (0.5 * s1sq.ln(), phi + FRAC_PI_2)
}

/// Stable direction at index `start` of the periodic propagation cocycle of
/// `chain`, from the forward product `P(start+n−1)···P(start)`.
pub fn stable_direction_chain(
    chain: &ResonatorSequence,
    start: usize,
    lambda: f64,
    tol: f64,
) -> Result<StableDirection> {
    let cocycle = PropagationCocycle::new(chain, lambda)?;
    let threshold = SINGULAR_RATIO.ln();
    let mut prod = IteratedProduct::identity();
    let mut history: VecDeque<Option<f64>> = VecDeque::with_capacity(STATIONARITY_STEPS + 1);
    let mut last_ratio = 0.0;
    for n in 1..=MAX_DEPTH {
        prod.push(cocycle.at((start + n - 1) as i64));
        let (ln_s1, angle) = singular_data(&prod.matrix);
        // every factor has determinant one, so σ_max σ_min = 1
        let ln_ratio = 2.0 * (ln_s1 + prod.log_scale);
        last_ratio = ln_ratio;
        history.push_back((ln_ratio > threshold).then_some(angle));
        if history.len() > STATIONARITY_STEPS + 1 {
            history.pop_front();
        }
        if let (Some(Some(old)), Some(Some(new))) = (history.front(), history.back()) {
            if history.len() == STATIONARITY_STEPS + 1
                && proj_distance(ProjectivePoint::new(*old), ProjectivePoint::new(*new)) < tol
            {
                return Ok(StableDirection {
                    point: ProjectivePoint::new(*new),
                    contraction_estimate: (-ln_ratio / (2.0 * n as f64)).exp(),
                    depth_used: n,
                });
            }
        }
    }
    Err(Error::Numerical(format!(
        "stable direction at lambda = {lambda} did not settle within {MAX_DEPTH} resonators (log singular ratio {last_ratio:.3})"
    )))
}

fn require_gap(library: &BlockLibrary, lambda: f64) -> Result<()> {
    let v = classify_frequency(library, lambda)?;
    if v.verdict != Verdict::CertifiedGap {
        return Err(Error::Precondition(format!(
            "lambda = {lambda} is not in a certified gap ({:?})",
            v.verdict
        )));
    }
    Ok(())
}

/// Stable direction `s(0)` for the left edge of `seq` (repeated periodically).
pub fn stable_direction(
    library: &BlockLibrary,
    seq: &BlockSequence,
    lambda: f64,
    tol: f64,
) -> Result<StableDirection> {
    require_gap(library, lambda)?;
    stable_direction_chain(&edge_chain(library, seq, Side::Left)?, 0, lambda, tol)
}

/// Signed sine of the angle between a line and the line through `(1, 0)`.
///
/// Continuous through zero; jumps from `+1` to `−1` at the vertical line.
pub fn indicator_of(p: ProjectivePoint) -> f64 {
    let t = p.angle();
    if t <= FRAC_PI_2 {
        t.sin()
    } else {
        (t - PI).sin()
    }
}

pub fn chain_indicator(chain: &ResonatorSequence, lambda: f64) -> Result<f64> {
    Ok(indicator_of(
        stable_direction_chain(chain, 0, lambda, STATIONARITY_TOL)?.point,
    ))
}

/// Zero exactly at frequencies where the left edge of `seq` carries an edge mode.
pub fn edge_mode_indicator(
    library: &BlockLibrary,
    seq: &BlockSequence,
    lambda: f64,
) -> Result<f64> {
    require_gap(library, lambda)?;
    chain_indicator(&edge_chain(library, seq, Side::Left)?, lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMode {
    pub lambda: f64,
    pub side: Side,
    /// `|indicator|` at `lambda`.
    pub indicator_residual: f64,
    /// `‖(J − λ)v‖/‖v‖` on the truncated chain, last two rows excluded.
    pub eigen_residual: f64,
    /// Per-resonator decay factor of the pair norms `‖(v_i, v_{i−1})‖`.
    pub decay_rate: f64,
    /// `1 − R²` of the log-linear decay fit.
    pub fit_residual: f64,
    pub truncation_blocks: usize,
    /// Unit eigenvector on the truncated chain, starting at the edge.
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
}

/// Open-interval grid: `grid` interior points of `(lo, hi)`.
pub fn interior_grid(lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    let h = (hi - lo) / (grid + 1) as f64;
    (1..=grid).map(|k| lo + k as f64 * h).collect()
}

fn validate_gap(gap: (f64, f64), grid: usize) -> Result<()> {
    if !(gap.0 >= 0.0 && gap.0 < gap.1 && gap.1.is_finite()) {
        return Err(Error::Validation(format!(
            "gap must satisfy 0 <= lo < hi, got {gap:?}"
        )));
    }
    if grid == 0 {
        return Err(Error::Validation(
            "gap grid needs at least one point".into(),
        ));
    }
    Ok(())
}

/// Bisect a sign change of `f` on `[a, b]`; returns the midpoint of the final bracket.
fn bisect_sign<F: Fn(f64) -> Result<f64>>(mut a: f64, mut b: f64, fa: f64, f: F) -> Result<f64> {
    let left_neg = fa < 0.0;
    let width = ROOT_TOL * 1e-4;
    while b - a > width {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == left_neg {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Roots of the indicator of `chain` on a grid over `(lo, hi)`.
///
/// Sign changes across the jump at the vertical line are discarded by
/// requiring `|indicator| ≤ INDICATOR_TOL` at the refined point.
pub fn indicator_roots(chain: &ResonatorSequence, points: &[f64]) -> Result<Vec<(f64, f64)>> {
    let values: Vec<f64> = points
        .par_iter()
        .map(|&l| chain_indicator(chain, l))
        .collect::<Result<_>>()?;
    let mut brackets = Vec::new();
    for k in 0..points.len() {
        if values[k] == 0.0 {
            brackets.push((points[k], points[k], values[k]));
        } else if k + 1 < points.len()
            && values[k + 1] != 0.0
            && (values[k] < 0.0) != (values[k + 1] < 0.0)
        {
            brackets.push((points[k], points[k + 1], values[k]));
        }
    }
    let refined: Vec<Option<(f64, f64)>> = brackets
        .par_iter()
        .map(|&(a, b, fa)| {
            let root = if a == b {
                a
            } else {
                bisect_sign(a, b, fa, |l| chain_indicator(chain, l))?
            };
            let value = chain_indicator(chain, root)?;
            Ok((value.abs() <= INDICATOR_TOL).then_some((root, value.abs())))
        })
        .collect::<Result<_>>()?;
    Ok(refined.into_iter().flatten().collect())
}

/// Edge eigenvector of the semi-infinite chain at a root `lambda`, truncated
/// after `blocks` blocks.
pub fn reconstruct_edge_mode(
    chain: &ResonatorSequence,
    lambda: f64,
    blocks: usize,
) -> Result<EdgeMode> {
    let mut blocks = blocks.max(1);
    let mut mode = reconstruct_once(chain, lambda, blocks)?;
    for _ in 0..MAX_DOUBLINGS {
        let max = mode.eigenvector.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tail = mode.eigenvector.last().map_or(0.0, |x| x.abs());
        if tail <= TAIL_TOL * max {
            break;
        }
        blocks *= 2;
        log::debug!(
            "edge mode at {lambda}: tail not decayed, doubling truncation to {blocks} blocks"
        );
        mode = reconstruct_once(chain, lambda, blocks)?;
    }
    Ok(mode)
}

fn reconstruct_once(chain: &ResonatorSequence, lambda: f64, blocks: usize) -> Result<EdgeMode> {
    let k = chain.resonators_in_blocks(blocks).max(2);
    let trunc = chain.periodic_prefix(k);
    let rs = trunc.resonators();
    let props: Vec<Mat2> = rs.iter().map(|r| propagation_matrix(r, lambda)).collect();

    // Stable directions s(i), pulled back from the far end where they attract.
    let mut dirs = vec![[0.0; 2]; k + 1];
    dirs[k] = stable_direction_chain(chain, k % chain.len(), lambda, STATIONARITY_TOL)?
        .point
        .vector();
    for i in (0..k).rev() {
        let v = props[i].inverse()?.apply(dirs[i + 1]);
        let n = v[0].hypot(v[1]);
        dirs[i] = [v[0] / n, v[1] / n];
    }

    // (u, u') at the left end of each resonator, starting from (1, 0).
    let mut units = vec![[1.0, 0.0]; k];
    let mut logs = vec![0.0; k];
    for i in 0..k - 1 {
        let w = props[i].apply(units[i]);
        let s = dirs[i + 1];
        let c = w[0] * s[0] + w[1] * s[1];
        units[i + 1] = if c < 0.0 { [-s[0], -s[1]] } else { s };
        logs[i + 1] = logs[i] + c.abs().ln();
    }

    // (v_i, v_{i−1}) = Q(i)^{-1} (u, u')_i.
    let mut v = vec![0.0; k];
    let mut pair_logs = Vec::with_capacity(k - 1);
    for i in 1..k {
        let p = conjugacy(&rs[i], &rs[i - 1]).inverse()?.apply(units[i]);
        let scale = logs[i].exp();
        v[i] = p[0] * scale;
        if i == 1 {
            v[0] = p[1] * scale;
        }
        pair_logs.push(logs[i] + p[0].hypot(p[1]).ln());
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Numerical(format!(
            "edge eigenvector at {lambda} has norm {norm}"
        )));
    }
    v.iter_mut().for_each(|x| *x /= norm);

    let j = assemble_jacobi_finite(&trunc)?;
    let r = j.matvec(&v);
    let eigen_residual = r[..k - 2]
        .iter()
        .zip(&v[..k - 2])
        .map(|(y, x)| (y - lambda * x).powi(2))
        .sum::<f64>()
        .sqrt();

    let (slope, r2) = linear_fit(&pair_logs);
    Ok(EdgeMode {
        lambda,
        side: Side::Left,
        indicator_residual: indicator_of(ProjectivePoint::from_vector(dirs[0])).abs(),
        eigen_residual,
        decay_rate: slope.exp(),
        fit_residual: 1.0 - r2,
        truncation_blocks: blocks,
        eigenvector: v,
    })
}

/// Least-squares slope of `y` against its index, and `R²`.
fn linear_fit(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    if y.len() < 2 {
        return (0.0, 1.0);
    }
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, yi) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    (slope, r2)
}

/// Edge modes of one side of `seq` (repeated periodically) in the open gap.
pub fn find_edge_modes_on(
    library: &BlockLibrary,
    chain: &ResonatorSequence,
    side: Side,
    gap: (f64, f64),
    grid: usize,
    truncation_blocks: usize,
) -> Result<Vec<EdgeMode>> {
    validate_gap(gap, grid)?;
    let points = interior_grid(gap.0, gap.1, grid);
    points
        .par_iter()
        .try_for_each(|&l| require_gap(library, l))?;
    let roots = indicator_roots(chain, &points)?;
    roots
        .into_iter()
        .map(|(l, _)| {
            let mut mode = reconstruct_edge_mode(chain, l, truncation_blocks)?;
            mode.side = side;
            Ok(mode)
        })
        .collect()
}

/// Edge modes at the left end of `seq` inside the open interval `gap`.
pub fn find_edge_modes(
    library: &BlockLibrary,
    seq: &BlockSequence,
    gap: (f64, f64),
    grid: usize,
) -> Result<Vec<EdgeMode>> {
    let chain = edge_chain(library, seq, Side::Left)?;
    find_edge_modes_on(
        library,
        &chain,
        Side::Left,
        gap,
        grid,
        DEFAULT_TRUNCATION_BLOCKS,
    )
}

/// Edge modes at both ends of the finite chain `seq`, ordered by `lambda`.
pub fn finite_chain_edge_modes(
    library: &BlockLibrary,
    seq: &BlockSequence,
    gap: (f64, f64),
    grid: usize,
) -> Result<Vec<EdgeMode>> {
    let mut modes = Vec::new();
    for side in [Side::Left, Side::Right] {
        let chain = edge_chain(library, seq, side)?;
        modes.extend(find_edge_modes_on(
            library,
            &chain,
            side,
            gap,
            grid,
            DEFAULT_TRUNCATION_BLOCKS,
        )?);
    }
    modes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(modes)
}

/// `(1, 0)` lies in the component of the sinks, which rules out edge modes at
/// `lambda` for every block sequence.
pub fn exclusion_check(library: &BlockLibrary, lambda: f64) -> Result<bool> {
    let v = classify_frequency(library, lambda)?;
    let Some(component) = v.sink_component() else {
        return Err(Error::Precondition(format!(
            "exclusion test needs hyperbolic blocks satisfying the source-sink condition at lambda = {lambda}"
        )));
    };
    Ok(component.contains(ProjectivePoint::new(0.0)))
}

/// Threshold below which both indicators count as vanishing together.
pub const COBURN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoburnReport {
    pub holds: bool,
    pub left_roots: Vec<f64>,
    pub right_roots: Vec<f64>,
    /// Smallest `max(|left|, |right|)` over the grid and all roots.
    pub min_joint: f64,
}

/// For every frequency of the gap grid, at most one of `J_+(χ)` and `J_−(χ)`
/// has an edge mode.
pub fn coburn_check(
    library: &BlockLibrary,
    seq_plus: &BlockSequence,
    gap: (f64, f64),
    grid: usize,
) -> Result<CoburnReport> {
    validate_gap(gap, grid)?;
    let points = interior_grid(gap.0, gap.1, grid);
    points
        .par_iter()
        .try_for_each(|&l| require_gap(library, l))?;
    let left = edge_chain(library, seq_plus, Side::Left)?;
    let right = negative_half_chain(library, seq_plus)?;
    let joint: Vec<f64> = points
        .par_iter()
        .map(|&l| {
            Ok(chain_indicator(&left, l)?
                .abs()
                .max(chain_indicator(&right, l)?.abs()))
        })
        .collect::<Result<_>>()?;
    let left_roots: Vec<f64> = indicator_roots(&left, &points)?
        .into_iter()
        .map(|r| r.0)
        .collect();
    let right_roots: Vec<f64> = indicator_roots(&right, &points)?
        .into_iter()
        .map(|r| r.0)
        .collect();
    let mut min_joint = joint.iter().copied().fold(f64::INFINITY, f64::min);
    for &l in &left_roots {
        min_joint = min_joint.min(chain_indicator(&right, l)?.abs());
    }
    for &l in &right_roots {
        min_joint = min_joint.min(chain_indicator(&left, l)?.abs());
    }
    Ok(CoburnReport {
        holds: min_joint >= COBURN_TOL,
        left_roots,
        right_roots,
        min_joint,
    })
}

/// A library with an edge mode, as produced by [`search_edge_mode_library`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeModeCandidate {
    pub library: BlockLibrary,
    pub sequence: BlockSequence,
    pub lambda: f64,
    /// The certified gap interval containing `lambda`.
    pub gap: (f64, f64),
    pub attempt: usize,
    pub seed: u64,
    pub budget: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Relative perturbation of lengths and spacings, in `[0, 1)`.
    pub budget: f64,
    pub attempts: usize,
    pub seed: u64,
    /// Blocks in each probe sequence.
    pub probe_blocks: usize,
    /// Scan grid used to find certified gaps.
    pub scan_grid: usize,
    /// Indicator grid per gap.
    pub gap_grid: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            budget: 0.5,
            attempts: 1000,
            seed: 0,
            probe_blocks: 400,
            scan_grid: 400,
            gap_grid: 200,
        }
    }
}

fn perturb(library: &BlockLibrary, budget: f64, rng: &mut ChaCha8Rng) -> Result<BlockLibrary> {
    let factor = |rng: &mut ChaCha8Rng| {
        if budget > 0.0 {
            1.0 + rng.gen_range(-budget..budget)
        } else {
            1.0
        }
    };
    let blocks = library
        .blocks()
        .iter()
        .map(|b| {
            let rs = b
                .resonators()
                .iter()
                .map(|r| {
                    Resonator::new(
                        r.length() * factor(rng),
                        r.spacing() * factor(rng),
                        r.wave_speed(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Block::new(rs)
        })
        .collect::<Result<Vec<_>>>()?;
    BlockLibrary::new(blocks, library.probabilities().to_vec())
}

/// Randomly perturb the lengths and spacings of `seed_library` until some
/// i.i.d. probe sequence has a left edge mode inside a certified gap.
///
/// Each attempt draws its own perturbation and probe sequence from a
/// generator seeded with `params.seed + attempt`, so results are
/// reproducible and attempts are independent.
pub fn search_edge_mode_library(
    seed_library: &BlockLibrary,
    params: &SearchParams,
) -> Result<Option<EdgeModeCandidate>> {
    if !(params.budget >= 0.0 && params.budget < 1.0) {
        return Err(Error::Validation(format!(
            "perturbation budget must lie in [0, 1), got {}",
            params.budget
        )));
    }
    for attempt in 0..params.attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(attempt as u64));
        let library = perturb(seed_library, params.budget, &mut rng)?;
        let sequence = sample_iid(&library, params.probe_blocks, rng.gen());
        if let Some((lambda, gap)) = probe_attempt(&library, &sequence, params)? {
            log::info!("edge mode found on attempt {attempt} at lambda = {lambda}");
            return Ok(Some(EdgeModeCandidate {
                library,
                sequence,
                lambda,
                gap,
                attempt,
                seed: params.seed,
                budget: params.budget,
            }));
        }
    }
    Ok(None)
}

fn probe_attempt(
    library: &BlockLibrary,
    seq: &BlockSequence,
    params: &SearchParams,
) -> Result<Option<(f64, (f64, f64))>> {
    if seq.is_empty() {
        return Ok(None);
    }
    let upper = spectral_upper_bound(library);
    let report = scan(library, 0.0, upper, params.scan_grid)?;
    let chain = edge_chain(library, seq, Side::Left)?;
    for gap in report.merged(Verdict::CertifiedGap) {
        let points = interior_grid(gap.0, gap.1, params.gap_grid);
        // Frequencies right at a band edge converge too slowly to be useful.
        match indicator_roots(&chain, &points) {
            Ok(roots) => {
                if let Some(&(lambda, _)) = roots.first() {
                    if classify_frequency(library, lambda)?.verdict == Verdict::CertifiedGap {
                        return Ok(Some((lambda, gap)));
                    }
                }
            }
            Err(Error::Numerical(msg)) => log::debug!("skipping gap {gap:?}: {msg}"),
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}
