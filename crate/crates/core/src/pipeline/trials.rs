//! Trial lists: one `label enroll_id test_id` line per trial, label in `{0, 1}`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::TrialLabel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialPair {
    pub label: TrialLabel,
    pub enroll: String,
    pub test: String,
}

impl TrialPair {
    pub fn new(label: TrialLabel, enroll: impl Into<String>, test: impl Into<String>) -> Self {
        TrialPair {
            label,
            enroll: enroll.into(),
            test: test.into(),
        }
    }
}

pub fn parse_trials(text: &str, path: &Path) -> Result<Vec<TrialPair>> {
    let mut trials = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [label, enroll, test] = fields[..] else {
            return Err(err(format!("expected `label enroll_id test_id`, got `{line}`")));
        };
        let label = TrialLabel::from_digit(label).ok_or_else(|| err(format!("label must be 0 or 1, got `{label}`")))?;
        trials.push(TrialPair::new(label, enroll, test));
    }
    Ok(trials)
}

pub fn parse_trial_list(path: &Path) -> Result<Vec<TrialPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trials(&text, path)
}

pub fn format_trials(trials: &[TrialPair]) -> String {
    let mut out = String::with_capacity(trials.len() * 32);
    for t in trials {
        let _ = writeln!(out, "{} {} {}", t.label.digit(), t.enroll, t.test);
    }
    out
}

pub fn write_trial_list(path: &Path, trials: &[TrialPair]) -> Result<()> {
    fs::write(path, format_trials(trials)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<TrialPair>> {
        parse_trials(text, Path::new("trials.txt"))
    }

    #[test]
    fn labels() {
        let t = parse("1 a b\n0 a c\n").unwrap();
        assert_eq!(t[0], TrialPair::new(TrialLabel::Target, "a", "b"));
        assert_eq!(t[1], TrialPair::new(TrialLabel::Nontarget, "a", "c"));
    }

    #[test]
    fn bad_label_reports_line() {
        match parse("1 a b\n\n2 a b\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse("1 a\n").is_err());
        assert!(parse("1 a b c\n").is_err());
    }

    #[test]
    fn format_round_trip() {
        let t = vec![
            TrialPair::new(TrialLabel::Target, "x1", "x2"),
            TrialPair::new(TrialLabel::Nontarget, "x1", "y3"),
        ];
        assert_eq!(parse(&format_trials(&t)).unwrap(), t);
    }
}
