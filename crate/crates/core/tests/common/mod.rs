//! Brute-force reference implementations shared by the integration tests.

#![allow(dead_code)]

use rand::Rng;
use rjca::metrics::{ScoreSet, TrialLabel};

/// `(FAR, FRR)` at threshold `tau`, accepting when `score >= tau`.
pub fn rates_at(targets: &[f64], nontargets: &[f64], tau: f64) -> (f64, f64) {
    let t_below = targets.partition_point(|&x| x < tau);
    let n_below = nontargets.partition_point(|&x| x < tau);
    (
        (nontargets.len() - n_below) as f64 / nontargets.len() as f64,
        t_below as f64 / targets.len() as f64,
    )
}

fn split_sorted(scores: &ScoreSet<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut t = Vec::new();
    let mut n = Vec::new();
    for &(s, l) in scores.entries() {
        match l {
            TrialLabel::Target => t.push(s),
            TrialLabel::Nontarget => n.push(s),
        }
    }
    t.sort_by(f64::total_cmp);
    n.sort_by(f64::total_cmp);
    let mut taus: Vec<f64> = t.iter().chain(&n).copied().collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus.insert(0, f64::NEG_INFINITY);
    taus.push(f64::INFINITY);
    (t, n, taus)
}

/// EER where the piecewise-linear DET path first meets FAR = FRR.
pub fn oracle_eer(scores: &ScoreSet<f64>) -> f64 {
    let (t, n, taus) = split_sorted(scores);
    let path: Vec<(f64, f64)> = taus.iter().map(|&tau| rates_at(&t, &n, tau)).collect();
    for k in 0..path.len() {
        let (far, frr) = path[k];
        if frr >= far {
            if k == 0 || frr == far {
                return far;
            }
            let (far0, frr0) = path[k - 1];
            let d0 = far0 - frr0;
            let d1 = far - frr;
            let w = d0 / (d0 - d1);
            return far0 + w * (far - far0);
        }
    }
    unreachable!("path ends at FRR = 1, FAR = 0")
}

pub fn oracle_min_dcf(scores: &ScoreSet<f64>, p: f64, c_miss: f64, c_fa: f64) -> f64 {
    let (t, n, taus) = split_sorted(scores);
    let norm = (c_miss * p).min(c_fa * (1.0 - p));
    taus.iter()
        .map(|&tau| {
            let (far, frr) = rates_at(&t, &n, tau);
            (c_miss * p * frr + c_fa * (1.0 - p) * far) / norm
        })
        .fold(f64::INFINITY, f64::min)
}

/// Random scores with a class-dependent shift; `grid` rounds scores to force ties.
pub fn random_scores<R: Rng>(rng: &mut R, max_trials: usize, shift: f64, grid: Option<f64>) -> ScoreSet<f64> {
    let n = rng.random_range(2..=max_trials);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        // First two entries pin both classes.
        let target = match i {
            0 => true,
            1 => false,
            _ => rng.random::<bool>(),
        };
        let mut s: f64 = rng.random_range(-1.0..1.0) + if target { shift } else { 0.0 };
        if let Some(g) = grid {
            s = (s / g).round() * g;
        }
        let label = if target { TrialLabel::Target } else { TrialLabel::Nontarget };
        entries.push((s, label));
    }
    ScoreSet::new(entries).expect("both classes present")
}
