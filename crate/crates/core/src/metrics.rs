//! Verification metrics over labelled trial scores: DET sweep, equal error rate
//! and normalised minimum detection cost.
//!
//! A trial is accepted when `score >= threshold`. Rates are evaluated at every
//! distinct score plus the `-inf`/`+inf` sentinels.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialLabel {
    Target,
    Nontarget,
}

impl TrialLabel {
    pub fn from_digit(s: &str) -> Option<Self> {
        match s {
            "1" => Some(TrialLabel::Target),
            "0" => Some(TrialLabel::Nontarget),
            _ => None,
        }
    }

    pub fn digit(self) -> char {
        match self {
            TrialLabel::Target => '1',
            TrialLabel::Nontarget => '0',
        }
    }

    pub fn is_target(self) -> bool {
        self == TrialLabel::Target
    }
}

/// Labelled trial scores with at least one trial of each class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet<S> {
    entries: Vec<(S, TrialLabel)>,
}

impl<S: Scalar> ScoreSet<S> {
    pub fn new(entries: Vec<(S, TrialLabel)>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|(s, _)| !s.is_finite()) {
            return Err(Error::Input(format!("score {i} is not finite")));
        }
        let targets = entries.iter().filter(|(_, l)| l.is_target()).count();
        if targets == 0 {
            return Err(Error::Input("score set has no target trials".into()));
        }
        if targets == entries.len() {
            return Err(Error::Input("score set has no nontarget trials".into()));
        }
        Ok(ScoreSet { entries })
    }

    pub fn from_split(targets: &[S], nontargets: &[S]) -> Result<Self> {
        let entries = targets
            .iter()
            .map(|&s| (s, TrialLabel::Target))
            .chain(nontargets.iter().map(|&s| (s, TrialLabel::Nontarget)))
            .collect();
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(S, TrialLabel)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> (usize, usize) {
        let t = self.entries.iter().filter(|(_, l)| l.is_target()).count();
        (t, self.entries.len() - t)
    }

    /// Applies `f` to every score, keeping labels.
    pub fn map_scores(&self, f: impl Fn(S) -> S) -> Result<Self> {
        Self::new(self.entries.iter().map(|&(s, l)| (f(s), l)).collect())
    }
}

/// Detection cost parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        DcfParams {
            p_target: 0.05,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::Config(format!("p_target must be in (0, 1), got {}", self.p_target)));
        }
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) {
            return Err(Error::Config("detection costs must be positive".into()));
        }
        Ok(())
    }

    /// Cost of the better of the two trivial systems (accept all, reject all).
    pub fn normalizer(&self) -> f64 {
        (self.c_miss * self.p_target).min(self.c_fa * (1.0 - self.p_target))
    }

    pub fn normalized_cost(&self, far: f64, frr: f64) -> f64 {
        (self.c_miss * frr * self.p_target + self.c_fa * far * (1.0 - self.p_target)) / self.normalizer()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint<S> {
    pub threshold: S,
    pub far: f64,
    pub frr: f64,
}

/// Rates at `-inf`, every distinct score in ascending order, and `+inf`.
///
/// FAR is non-increasing and FRR non-decreasing along the returned sweep.
pub fn det_points<S: Scalar>(scores: &ScoreSet<S>) -> Vec<DetPoint<S>> {
    let (n_target, n_nontarget) = scores.counts();
    let mut sorted: Vec<(S, TrialLabel)> = scores.entries.clone();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    let rates = |targets_below: usize, nontargets_below: usize| {
        (
            (n_nontarget - nontargets_below) as f64 / n_nontarget as f64,
            targets_below as f64 / n_target as f64,
        )
    };

    let mut points = Vec::with_capacity(sorted.len() + 2);
    points.push(DetPoint {
        threshold: S::neg_infinity(),
        far: 1.0,
        frr: 0.0,
    });
    let (mut t_below, mut n_below) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let value = sorted[i].0;
        let (far, frr) = rates(t_below, n_below);
        points.push(DetPoint { threshold: value, far, frr });
        while i < sorted.len() && sorted[i].0 == value {
            match sorted[i].1 {
                TrialLabel::Target => t_below += 1,
                TrialLabel::Nontarget => n_below += 1,
            }
            i += 1;
        }
    }
    points.push(DetPoint {
        threshold: S::infinity(),
        far: 0.0,
        frr: 1.0,
    });
    points
}

fn interpolate_threshold<S: Scalar>(lo: S, hi: S, w: f64) -> S {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => lo + S::of(w) * (hi - lo),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => S::zero(),
    }
}

/// Equal error rate and the threshold where FAR meets FRR.
///
/// When no sweep point has FAR = FRR exactly, the crossing is interpolated
/// linearly between the adjacent points that bracket it.
pub fn eer<S: Scalar>(scores: &ScoreSet<S>) -> (f64, S) {
    eer_from_points(&det_points(scores))
}

fn eer_from_points<S: Scalar>(points: &[DetPoint<S>]) -> (f64, S) {
    // frr - far rises from -1 at -inf to +1 at +inf.
    let j = points
        .iter()
        .position(|p| p.frr - p.far >= 0.0)
        .expect("+inf sentinel has frr - far = 1");
    let hi = points[j];
    let gap_hi = hi.frr - hi.far;
    if gap_hi == 0.0 || j == 0 {
        return (hi.far, hi.threshold);
    }
    let lo = points[j - 1];
    let gap_lo = lo.frr - lo.far;
    let w = -gap_lo / (gap_hi - gap_lo);
    let rate = lo.far + w * (hi.far - lo.far);
    (rate, interpolate_threshold(lo.threshold, hi.threshold, w))
}

/// Minimum normalised detection cost over the sweep, and the threshold attaining it.
pub fn min_dcf<S: Scalar>(scores: &ScoreSet<S>, params: &DcfParams) -> Result<(f64, S)> {
    params.validate()?;
    Ok(min_dcf_from_points(&det_points(scores), params))
}

fn min_dcf_from_points<S: Scalar>(points: &[DetPoint<S>], params: &DcfParams) -> (f64, S) {
    let mut best = (f64::INFINITY, S::zero());
    for p in points {
        let cost = params.normalized_cost(p.far, p.frr);
        if cost < best.0 {
            best = (cost, p.threshold);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub eer: f64,
    pub eer_threshold: f64,
    pub min_dcf: f64,
    pub dcf_threshold: f64,
    pub dcf_params: DcfParams,
    pub trials: (usize, usize),
    /// `(FAR, FRR)` along the sweep.
    pub det_points: Vec<(f64, f64)>,
}

pub fn evaluate_scores<S: Scalar>(scores: &ScoreSet<S>, params: &DcfParams) -> Result<MetricsReport> {
    params.validate()?;
    let points = det_points(scores);
    let (eer, eer_threshold) = eer_from_points(&points);
    let (min_dcf, dcf_threshold) = min_dcf_from_points(&points, params);
    Ok(MetricsReport {
        eer,
        eer_threshold: eer_threshold.as_f64(),
        min_dcf,
        dcf_threshold: dcf_threshold.as_f64(),
        dcf_params: *params,
        trials: scores.counts(),
        det_points: points.iter().map(|p| (p.far, p.frr)).collect(),
    })
}

impl MetricsReport {
    /// Machine-readable `key = value` block.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "eer = {}", self.eer);
        let _ = writeln!(out, "eer_threshold = {}", self.eer_threshold);
        let _ = writeln!(out, "min_dcf = {}", self.min_dcf);
        let _ = writeln!(out, "dcf_threshold = {}", self.dcf_threshold);
        let _ = writeln!(out, "p_target = {}", self.dcf_params.p_target);
        let _ = writeln!(out, "c_miss = {}", self.dcf_params.c_miss);
        let _ = writeln!(out, "c_fa = {}", self.dcf_params.c_fa);
        let _ = writeln!(out, "target_trials = {}", self.trials.0);
        let _ = writeln!(out, "nontarget_trials = {}", self.trials.1);
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "+------------+------------+")?;
        writeln!(f, "| EER (%)    | minDCF     |")?;
        writeln!(f, "+------------+------------+")?;
        writeln!(f, "| {:>10.3} | {:>10.4} |", self.eer * 100.0, self.min_dcf)?;
        writeln!(f, "+------------+------------+")?;
        writeln!(f)?;
        f.write_str(&self.key_values())
    }
}

/// Parses a `label score` scores file, label in `{0, 1}`.
pub fn read_scores_file(path: &Path) -> Result<ScoreSet<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let mut fields = line.split_whitespace();
        let (Some(label), Some(score), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected `label score`, got `{line}`")));
        };
        let label = TrialLabel::from_digit(label).ok_or_else(|| parse_err(format!("bad label `{label}`")))?;
        let score: f64 = score.parse().map_err(|_| parse_err(format!("bad score `{score}`")))?;
        entries.push((score, label));
    }
    ScoreSet::new(entries)
}

/// Writes `label score` lines; scores round-trip exactly through [`read_scores_file`].
pub fn write_scores_file(path: &Path, scores: &ScoreSet<f64>) -> Result<()> {
    let mut out = String::with_capacity(scores.len() * 24);
    for (s, l) in scores.entries() {
        let _ = writeln!(out, "{} {s:?}", l.digit());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> ScoreSet<f64> {
        ScoreSet::from_split(&[0.8, 0.6, 0.4], &[0.7, 0.3, 0.1]).unwrap()
    }

    #[test]
    fn sentinels_and_counting() {
        let pts = det_points(&example());
        let first = pts.first().unwrap();
        let last = pts.last().unwrap();
        assert_eq!((first.far, first.frr), (1.0, 0.0));
        assert_eq!((last.far, last.frr), (0.0, 1.0));
        // tau = 0.6 accepts {0.8, 0.6} and {0.7}: same rates as any tau in (0.4, 0.6].
        let at = pts.iter().find(|p| p.threshold == 0.6).unwrap();
        assert_eq!((at.far, at.frr), (1.0 / 3.0, 1.0 / 3.0));
        for w in pts.windows(2) {
            assert!(w[1].far <= w[0].far && w[1].frr >= w[0].frr);
        }
    }

    #[test]
    fn separated_and_inverted() {
        let good = ScoreSet::from_split(&[0.9, 0.8], &[0.1, 0.2, 0.3]).unwrap();
        assert!(det_points(&good).iter().any(|p| p.far == 0.0 && p.frr == 0.0));
        assert_eq!(eer(&good).0, 0.0);
        assert_eq!(min_dcf(&good, &DcfParams::default()).unwrap().0, 0.0);

        let bad = ScoreSet::from_split(&[0.1, 0.2], &[0.8, 0.9, 0.7]).unwrap();
        assert_eq!(eer(&bad).0, 1.0);
    }

    #[test]
    fn eer_of_worked_example() {
        let (rate, threshold) = eer(&example());
        assert!((rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(threshold, 0.6);
    }

    #[test]
    fn eer_interpolates_between_points() {
        let s = ScoreSet::from_split(&[0.5, 0.9], &[0.6]).unwrap();
        // Points: -inf (1,0); 0.5 (1,0); 0.6 (1,0.5); 0.9 (0,0.5); +inf (0,1).
        let (rate, threshold): (f64, f64) = eer(&s);
        // Crossing between (1, 0.5) and (0, 0.5) at FAR = FRR = 0.5.
        assert!((rate - 0.5).abs() < 1e-15);
        assert!((threshold - 0.75).abs() < 1e-12);
    }

    #[test]
    fn min_dcf_of_worked_example() {
        // Normalized cost = FRR + 19 FAR at the default operating point. (FAR, FRR)
        // over the seven threshold intervals: (1,0) (2/3,0) (1/3,0) (1/3,1/3)
        // (1/3,2/3) (0,2/3) (0,1) -> minimum 2/3 at tau in (0.7, 0.8].
        let (cost, threshold) = min_dcf(&example(), &DcfParams::default()).unwrap();
        assert!((cost - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(threshold, 0.8);
    }

    #[test]
    fn rejects_degenerate_sets() {
        assert!(ScoreSet::<f64>::from_split(&[0.1], &[]).is_err());
        assert!(ScoreSet::<f64>::from_split(&[], &[0.1]).is_err());
        assert!(ScoreSet::<f64>::from_split(&[f64::NAN], &[0.1]).is_err());
        let bad = DcfParams { p_target: 1.0, ..DcfParams::default() };
        assert!(min_dcf(&example(), &bad).is_err());
    }

    #[test]
    fn tie_convention_and_order_independence() {
        let a = ScoreSet::from_split(&[0.5, 0.5, 0.7], &[0.5, 0.2]).unwrap();
        let mut rev = a.entries().to_vec();
        rev.reverse();
        let b = ScoreSet::new(rev).unwrap();
        assert_eq!(det_points(&a), det_points(&b));
        assert_eq!(eer(&a), eer(&b));
        let at = det_points(&a).into_iter().find(|p| p.threshold == 0.5).unwrap();
        // Ties at tau are accepted.
        assert_eq!((at.far, at.frr), (0.5, 0.0));
    }

    #[test]
    fn scores_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.txt");
        let s = ScoreSet::from_split(&[0.123456789012345, -0.5], &[1.0 / 3.0]).unwrap();
        write_scores_file(&path, &s).unwrap();
        assert_eq!(read_scores_file(&path).unwrap(), s);

        fs::write(&path, "1 0.5\n2 0.1\n").unwrap();
        match read_scores_file(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
