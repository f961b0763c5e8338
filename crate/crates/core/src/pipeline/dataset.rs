//! Utterances, dataset manifests and on-disk layout.
//!
//! ```text
//! <root>/manifest.tsv              id <TAB> speaker <TAB> split
//! <root>/features/<id>.audio.avf
//! <root>/features/<id>.visual.avf
//! <root>/trials.txt                optional evaluation trials
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pipeline::features::{fit_segments, load_features, save_features};
use crate::FeatureMatrix;

pub const MANIFEST: &str = "manifest.tsv";
pub const FEATURE_DIR: &str = "features";
pub const TRIALS: &str = "trials.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Input(format!("unknown split `{other}`"))),
        }
    }
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub split: Split,
    /// `d_a x L`
    pub audio: FeatureMatrix,
    /// `d_v x L`
    pub visual: FeatureMatrix,
}

fn path_safe(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Utterance {
    pub fn validate(&self) -> Result<()> {
        if !path_safe(&self.id) {
            return Err(Error::Input(format!("utterance id `{}` is not path-safe", self.id)));
        }
        if self.audio.cols() != self.visual.cols() {
            return Err(Error::Dimension(format!(
                "utterance {}: audio has {} segments, visual has {}",
                self.id,
                self.audio.cols(),
                self.visual.cols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        let mut seen = HashMap::new();
        let mut dims = None;
        for u in &utterances {
            u.validate()?;
            if seen.insert(u.id.as_str(), ()).is_some() {
                return Err(Error::Input(format!("duplicate utterance id `{}`", u.id)));
            }
            let d = (u.audio.rows(), u.visual.rows(), u.audio.cols());
            match dims {
                None => dims = Some(d),
                Some(first) if first != d => {
                    return Err(Error::Dimension(format!(
                        "utterance {} has dims {d:?}, expected {first:?}",
                        u.id
                    )))
                }
                _ => {}
            }
        }
        Ok(Dataset { utterances })
    }

    /// `(d_a, d_v, L)` of the first utterance.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.utterances
            .first()
            .map(|u| (u.audio.rows(), u.visual.rows(), u.audio.cols()))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    pub fn index(&self) -> HashMap<&str, &Utterance> {
        self.utterances.iter().map(|u| (u.id.as_str(), u)).collect()
    }

    /// Speakers of a split in sorted order; position is the class index.
    pub fn speakers(&self, split: Split) -> Vec<String> {
        let set: BTreeMap<&str, ()> = self.split(split).map(|u| (u.speaker.as_str(), ())).collect();
        set.into_keys().map(str::to_string).collect()
    }
}

pub fn feature_paths(root: &Path, id: &str) -> (PathBuf, PathBuf) {
    let dir = root.join(FEATURE_DIR);
    (dir.join(format!("{id}.audio.avf")), dir.join(format!("{id}.visual.avf")))
}

pub fn format_manifest(dataset: &Dataset) -> String {
    let mut out = String::new();
    for u in &dataset.utterances {
        let _ = writeln!(out, "{}\t{}\t{}", u.id, u.speaker, u.split.as_str());
    }
    out
}

pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<()> {
    let dir = root.join(FEATURE_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for u in &dataset.utterances {
        let (a, v) = feature_paths(root, &u.id);
        save_features(&u.audio, &a)?;
        save_features(&u.visual, &v)?;
    }
    let manifest = root.join(MANIFEST);
    fs::write(&manifest, format_manifest(dataset)).map_err(|e| Error::io(&manifest, e))
}

/// Loads every utterance in the manifest. With `segments`, features are padded or
/// truncated to that many columns.
pub fn load_dataset(root: &Path, segments: Option<usize>) -> Result<Dataset> {
    let manifest = root.join(MANIFEST);
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut utterances = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [id, speaker, split] = fields[..] else {
            return Err(Error::Parse {
                path: manifest.clone(),
                line: i + 1,
                reason: format!("expected `id speaker split`, got `{line}`"),
            });
        };
        let split = split.parse().map_err(|e: Error| Error::Parse {
            path: manifest.clone(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if !path_safe(id) {
            return Err(Error::Parse {
                path: manifest.clone(),
                line: i + 1,
                reason: format!("utterance id `{id}` is not path-safe"),
            });
        }
        let (ap, vp) = feature_paths(root, id);
        let mut audio = load_features(&ap)?;
        let mut visual = load_features(&vp)?;
        if let Some(l) = segments {
            audio = fit_segments(&audio, l)?;
            visual = fit_segments(&visual, l)?;
        }
        utterances.push(Utterance {
            id: id.to_string(),
            speaker: speaker.to_string(),
            split,
            audio,
            visual,
        });
    }
    Dataset::new(utterances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn utt(id: &str, spk: &str, l: usize) -> Utterance {
        Utterance {
            id: id.into(),
            speaker: spk.into(),
            split: Split::Train,
            audio: Tensor::filled(&[2, l], 0.5),
            visual: Tensor::filled(&[3, l], -0.25),
        }
    }

    #[test]
    fn rejects_duplicates_and_mismatched_dims() {
        assert!(Dataset::new(vec![utt("a", "s", 4), utt("a", "s", 4)]).is_err());
        assert!(Dataset::new(vec![utt("a", "s", 4), utt("b", "s", 5)]).is_err());
        assert!(Dataset::new(vec![utt("../x", "s", 4)]).is_err());
        let mut bad = utt("c", "s", 4);
        bad.visual = Tensor::zeros(&[3, 2]);
        assert!(Dataset::new(vec![bad]).is_err());
    }

    #[test]
    fn disk_round_trip_with_resampling() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new(vec![utt("a", "s1", 4), utt("b", "s2", 4)]).unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        assert_eq!(load_dataset(dir.path(), None).unwrap(), ds);
        let padded = load_dataset(dir.path(), Some(6)).unwrap();
        assert_eq!(padded.dims(), Some((2, 3, 6)));
        assert_eq!(ds.speakers(Split::Train), vec!["s1".to_string(), "s2".to_string()]);
    }
}
