mod common;

use resochain::blocks::{expand_blocks, sample_iid};
use resochain::classify::{block_matrices, scan, spectral_upper_bound, Verdict};
use resochain::cocycle::Mat2;
use resochain::edge::{
    coburn_check, edge_chain, edge_mode_indicator, exclusion_check, find_edge_modes,
    reconstruct_edge_mode, Side,
};
use resochain::projective::fixed_points;
use resochain::{BlockLibrary, BlockSequence};

use common::load_fixture;

#[test]
fn fixture_root_properties() {
    let fx = load_fixture().candidate;
    let modes = find_edge_modes(&fx.library, &fx.sequence, fx.gap, 400).unwrap();
    assert!(!modes.is_empty());
    for m in &modes {
        assert!(!exclusion_check(&fx.library, m.lambda).unwrap());
        let below = edge_mode_indicator(&fx.library, &fx.sequence, m.lambda - 1e-6).unwrap();
        let above = edge_mode_indicator(&fx.library, &fx.sequence, m.lambda + 1e-6).unwrap();
        assert!(below * above < 0.0, "{below} {above}");
        assert!(
            edge_mode_indicator(&fx.library, &fx.sequence, m.lambda)
                .unwrap()
                .abs()
                <= 1e-10
        );
    }
}

#[test]
fn truncation_doubling_is_stable() {
    let fx = load_fixture().candidate;
    let chain = edge_chain(&fx.library, &fx.sequence, Side::Left).unwrap();
    let a = reconstruct_edge_mode(&chain, fx.lambda, 400).unwrap();
    let b = reconstruct_edge_mode(&chain, fx.lambda, 800).unwrap();
    let n = a.eigenvector.len() / 2;
    let diff = a.eigenvector[..n]
        .iter()
        .zip(&b.eigenvector[..n])
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-10, "{diff}");
    assert!(b.eigen_residual <= 1e-6);
    assert!((a.decay_rate - b.decay_rate).abs() < 0.05 * a.decay_rate);
}

/// Periodic words whose left edge carries a mode: the decay per resonator is
/// the contracting multiplier of one period, spread over its resonators.
#[test]
fn periodic_decay_matches_multiplier() {
    let fx = load_fixture().candidate;
    let lib = &fx.library;
    let gaps = scan(lib, 0.0, spectral_upper_bound(lib), 400)
        .unwrap()
        .merged(Verdict::CertifiedGap);
    let words: Vec<Vec<usize>> = vec![
        vec![0],
        vec![1],
        vec![0, 1],
        vec![1, 0],
        vec![0, 0, 1],
        vec![1, 1, 0],
        vec![0, 1, 1],
    ];
    let mut checked = 0;
    for w in &words {
        let seq = BlockSequence::explicit(w.clone());
        let chain = expand_blocks(lib, &seq).unwrap();
        for &gap in &gaps {
            for m in find_edge_modes(lib, &seq, gap, 200).unwrap() {
                let mats = block_matrices(lib, m.lambda);
                let period = w.iter().fold(Mat2::IDENTITY, |acc, &d| mats[d] * acc);
                let xi = fixed_points(&period).unwrap().multipliers.0.abs();
                let want = xi.powf(1.0 / chain.len() as f64);
                assert!(
                    (m.decay_rate - want).abs() <= 0.1 * want,
                    "{w:?} {}: {} vs {want}",
                    m.lambda,
                    m.decay_rate
                );
                assert!(m.fit_residual <= 0.1);
                checked += 1;
            }
        }
    }
    assert!(checked > 0, "no periodic word had an edge mode");
}

#[test]
fn exclusion_implies_no_nearby_roots() {
    let fx = load_fixture().candidate;
    let lib = &fx.library;
    let gaps = scan(lib, 0.0, spectral_upper_bound(lib), 400)
        .unwrap()
        .merged(Verdict::CertifiedGap);
    let seqs: Vec<BlockSequence> = (1..=3)
        .map(|s| sample_iid(lib, 300, s))
        .chain([fx.sequence.clone()])
        .collect();
    let mut tested = 0;
    for &(lo, hi) in &gaps {
        for k in 1..10 {
            let l = lo + (hi - lo) * k as f64 / 10.0;
            if !exclusion_check(lib, l).unwrap() {
                continue;
            }
            let h = 0.01 * (hi - lo);
            for seq in &seqs {
                assert!(find_edge_modes(lib, seq, (l - h, l + h), 20)
                    .unwrap()
                    .is_empty());
            }
            tested += 1;
        }
    }
    assert!(tested > 0);
}

#[test]
fn coburn_palindrome_and_standard() {
    let fx = load_fixture().candidate;
    let lib = &fx.library;
    let gaps = scan(lib, 0.0, spectral_upper_bound(lib), 400)
        .unwrap()
        .merged(Verdict::CertifiedGap);
    let mut word = sample_iid(lib, 150, 11).indices;
    let mut back = word.clone();
    back.reverse();
    word.extend(back);
    let palindrome = BlockSequence::explicit(word);
    for &gap in &gaps {
        assert!(coburn_check(lib, &palindrome, gap, 300).unwrap().holds);
    }
    let std_lib = BlockLibrary::standard();
    let r = coburn_check(&std_lib, &sample_iid(&std_lib, 200, 5), (1.0, 2.0), 300).unwrap();
    assert!(r.holds && r.left_roots.is_empty() && r.right_roots.is_empty());
}
