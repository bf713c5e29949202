//! Corpus layout, clip file names and submission files.
//!
//! A corpus is a directory tree `<root>/<machine_type>/{train,test}/*.wav`.
//! Clip identity is carried by the file name:
//!
//! ```text
//! section_<NN>_<domain>_<split>_<label>_<index>[_<key>_<value>]*.wav
//! section_<NN>_<index>.wav                      (unlabeled evaluation clips)
//! ```
//!
//! Attribute pairs are taken two tokens at a time; a single trailing token is
//! kept as a key with an empty value (e.g. `noAttribute`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::scoring::Decision;

/// Canonical per-section partition sizes of the challenge development set.
pub const CANONICAL_TRAIN_SOURCE: usize = 990;
pub const CANONICAL_TRAIN_TARGET: usize = 10;
pub const CANONICAL_TEST: usize = 200;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed clip name {name:?}: {reason}")]
    MalformedName { name: String, reason: String },
    #[error("unknown domain token {token:?} in {name:?}")]
    UnknownDomainToken { name: String, token: String },
    #[error("unknown label token {token:?} in {name:?}")]
    UnknownLabelToken { name: String, token: String },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<DatasetError>,
    },
    #[error("missing directory {0}")]
    MissingDirectory(PathBuf),
    #[error("no clips found under {0}")]
    EmptyCorpus(PathBuf),
    #[error("{machine_type} section {section:02} has test clips but no training clips")]
    EmptyTrainPartition { machine_type: String, section: u32 },
    #[error("{path}: clip name says split {named} but it lives in {dir}/")]
    SplitMismatch {
        path: PathBuf,
        named: Split,
        dir: Split,
    },
    #[error("duplicate clip path {0}")]
    DuplicateClip(PathBuf),
    #[error("no score records to write")]
    EmptyRecords,
    #[error("score for {0} is not finite")]
    NonFiniteScore(String),
    #[error("record {0} has no decision")]
    MissingDecision(String),
    #[error("{path}:{line}: cannot parse {content:?}")]
    BadCsvLine {
        path: PathBuf,
        line: usize,
        content: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomaly,
    Unknown,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
            Domain::Unknown => "unknown",
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

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomaly => "anomaly",
            Label::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything encoded in a clip's file name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClipName {
    pub section: u32,
    pub domain: Domain,
    pub split: Split,
    pub label: Label,
    pub clip_index: u32,
    /// Number of digits the index was written with (leading zeros included).
    pub index_width: usize,
    pub attributes: Vec<(String, String)>,
}

impl ClipName {
    /// Labeled development-style name with a four-digit index.
    pub fn labeled(section: u32, domain: Domain, split: Split, label: Label, clip_index: u32) -> Self {
        Self {
            section,
            domain,
            split,
            label,
            clip_index,
            index_width: 4,
            attributes: Vec::new(),
        }
    }

    pub fn is_evaluation_form(&self) -> bool {
        self.domain == Domain::Unknown && self.label == Label::Unknown
    }

    pub fn file_name(&self) -> String {
        let mut s = format!("section_{:02}_", self.section);
        if !self.is_evaluation_form() {
            s.push_str(&format!("{}_{}_{}_", self.domain, self.split, self.label));
        }
        s.push_str(&format!("{:0width$}", self.clip_index, width = self.index_width));
        for (k, v) in &self.attributes {
            s.push('_');
            s.push_str(k);
            if !v.is_empty() {
                s.push('_');
                s.push_str(v);
            }
        }
        s.push_str(".wav");
        s
    }
}

impl fmt::Display for ClipName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.file_name())
    }
}

pub fn parse_filename(name: &str) -> Result<ClipName, DatasetError> {
    let malformed = |reason: &str| DatasetError::MalformedName {
        name: name.to_string(),
        reason: reason.to_string(),
    };
    let stem = name
        .strip_suffix(".wav")
        .ok_or_else(|| malformed("missing .wav extension"))?;
    let tokens: Vec<&str> = stem.split('_').collect();
    if tokens.iter().any(|t| t.is_empty()) {
        return Err(malformed("empty token"));
    }
    if tokens.len() < 3 || tokens[0] != "section" {
        return Err(malformed("expected section_<NN>_..."));
    }
    let section_tok = tokens[1];
    if section_tok.len() != 2 || !is_digits(section_tok) {
        return Err(malformed("section must be two digits"));
    }
    let section: u32 = section_tok.parse().map_err(|_| malformed("bad section"))?;

    let (domain, split, label, index_tok, rest) = if is_digits(tokens[2]) {
        (Domain::Unknown, Split::Test, Label::Unknown, tokens[2], &tokens[3..])
    } else {
        if tokens.len() < 6 {
            return Err(malformed("expected <domain>_<split>_<label>_<index>"));
        }
        let domain = match tokens[2] {
            "source" => Domain::Source,
            "target" => Domain::Target,
            other => {
                return Err(DatasetError::UnknownDomainToken {
                    name: name.to_string(),
                    token: other.to_string(),
                })
            }
        };
        let split = match tokens[3] {
            "train" => Split::Train,
            "test" => Split::Test,
            _ => return Err(malformed("split must be train or test")),
        };
        let label = match tokens[4] {
            "normal" => Label::Normal,
            "anomaly" => Label::Anomaly,
            other => {
                return Err(DatasetError::UnknownLabelToken {
                    name: name.to_string(),
                    token: other.to_string(),
                })
            }
        };
        if split == Split::Train && label != Label::Normal {
            return Err(malformed("training clips must be normal"));
        }
        if !is_digits(tokens[5]) {
            return Err(malformed("clip index must be digits"));
        }
        (domain, split, label, tokens[5], &tokens[6..])
    };
    let clip_index: u32 = index_tok.parse().map_err(|_| malformed("clip index overflow"))?;
    let attributes = rest
        .chunks(2)
        .map(|pair| {
            (
                pair[0].to_string(),
                pair.get(1).map(|v| v.to_string()).unwrap_or_default(),
            )
        })
        .collect();
    Ok(ClipName {
        section,
        domain,
        split,
        label,
        clip_index,
        index_width: index_tok.len(),
        attributes,
    })
}

fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClipMetadata {
    pub machine_type: String,
    pub name: ClipName,
    pub path: PathBuf,
}

impl ClipMetadata {
    pub fn file_name(&self) -> String {
        self.name.file_name()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroupKey {
    pub machine_type: String,
    pub section: u32,
}

impl GroupKey {
    pub fn new(machine_type: impl Into<String>, section: u32) -> Self {
        Self {
            machine_type: machine_type.into(),
            section,
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} section {:02}", self.machine_type, self.section)
    }
}

/// Clip counts of one (machine type, section) group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PartitionCounts {
    pub train_source: usize,
    pub train_target: usize,
    pub test_source_normal: usize,
    pub test_source_anomaly: usize,
    pub test_target_normal: usize,
    pub test_target_anomaly: usize,
    pub test_unlabeled: usize,
}

impl PartitionCounts {
    pub fn test_total(&self) -> usize {
        self.test_source_normal
            + self.test_source_anomaly
            + self.test_target_normal
            + self.test_target_anomaly
            + self.test_unlabeled
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClipGroup {
    pub key: GroupKey,
    /// Sorted by path.
    pub train: Vec<ClipMetadata>,
    /// Sorted by path.
    pub test: Vec<ClipMetadata>,
}

impl ClipGroup {
    pub fn counts(&self) -> PartitionCounts {
        let mut c = PartitionCounts::default();
        for clip in &self.train {
            match clip.name.domain {
                Domain::Source => c.train_source += 1,
                Domain::Target => c.train_target += 1,
                Domain::Unknown => {}
            }
        }
        for clip in &self.test {
            match (clip.name.domain, clip.name.label) {
                (Domain::Source, Label::Normal) => c.test_source_normal += 1,
                (Domain::Source, Label::Anomaly) => c.test_source_anomaly += 1,
                (Domain::Target, Label::Normal) => c.test_target_normal += 1,
                (Domain::Target, Label::Anomaly) => c.test_target_anomaly += 1,
                _ => c.test_unlabeled += 1,
            }
        }
        c
    }

    pub fn train_in(&self, domain: Domain) -> impl Iterator<Item = &ClipMetadata> {
        self.train.iter().filter(move |c| c.name.domain == domain)
    }

    pub fn is_labeled(&self) -> bool {
        self.test.iter().all(|c| c.name.label != Label::Unknown)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusManifest {
    pub root: PathBuf,
    /// Sorted by (machine type, section).
    pub groups: Vec<ClipGroup>,
    pub warnings: Vec<String>,
}

impl CorpusManifest {
    pub fn group(&self, key: &GroupKey) -> Option<&ClipGroup> {
        self.groups.iter().find(|g| &g.key == key)
    }

    pub fn clip_count(&self) -> usize {
        self.groups.iter().map(|g| g.train.len() + g.test.len()).sum()
    }
}

pub fn scan_corpus(root: &Path) -> Result<CorpusManifest, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::MissingDirectory(root.to_path_buf()));
    }
    let mut machine_dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(root))?;
    machine_dirs.retain(|p| p.is_dir());
    machine_dirs.sort();

    let mut groups: BTreeMap<GroupKey, ClipGroup> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut warnings = Vec::new();

    for dir in &machine_dirs {
        let machine_type = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for split in [Split::Train, Split::Test] {
            let sub = dir.join(split.as_str());
            if !sub.is_dir() {
                return Err(DatasetError::MissingDirectory(sub));
            }
            for path in wav_files(&sub)? {
                let file_name = path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let name = parse_filename(&file_name).map_err(|e| DatasetError::InFile {
                    path: path.clone(),
                    source: Box::new(e),
                })?;
                if name.split != split {
                    return Err(DatasetError::SplitMismatch {
                        path,
                        named: name.split,
                        dir: split,
                    });
                }
                if !seen.insert(path.clone()) {
                    return Err(DatasetError::DuplicateClip(path));
                }
                let key = GroupKey::new(machine_type.clone(), name.section);
                let group = groups.entry(key.clone()).or_insert_with(|| ClipGroup {
                    key,
                    train: Vec::new(),
                    test: Vec::new(),
                });
                let clip = ClipMetadata {
                    machine_type: machine_type.clone(),
                    name,
                    path,
                };
                match split {
                    Split::Train => group.train.push(clip),
                    Split::Test => group.test.push(clip),
                }
            }
        }
    }

    if groups.is_empty() {
        return Err(DatasetError::EmptyCorpus(root.to_path_buf()));
    }
    let mut groups: Vec<ClipGroup> = groups.into_values().collect();
    for group in &mut groups {
        if group.train.is_empty() {
            return Err(DatasetError::EmptyTrainPartition {
                machine_type: group.key.machine_type.clone(),
                section: group.key.section,
            });
        }
        group.train.sort_by(|a, b| a.path.cmp(&b.path));
        group.test.sort_by(|a, b| a.path.cmp(&b.path));
        let c = group.counts();
        if c.train_source != CANONICAL_TRAIN_SOURCE
            || c.train_target != CANONICAL_TRAIN_TARGET
            || c.test_total() != CANONICAL_TEST
        {
            warnings.push(format!(
                "{}: counts train source={} target={} test={} differ from canonical {}/{}/{}",
                group.key,
                c.train_source,
                c.train_target,
                c.test_total(),
                CANONICAL_TRAIN_SOURCE,
                CANONICAL_TRAIN_TARGET,
                CANONICAL_TEST
            ));
        }
        let csv = root
            .join(&group.key.machine_type)
            .join(format!("attributes_{:02}.csv", group.key.section));
        if csv.is_file() {
            cross_check_attributes(&csv, group, &mut warnings)?;
        }
    }

    Ok(CorpusManifest {
        root: root.to_path_buf(),
        groups,
        warnings,
    })
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if path.is_file() && is_wav {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Compares `attributes_<NN>.csv` rows against the attributes parsed from file
/// names. File names win; disagreements only produce warnings.
fn cross_check_attributes(
    csv: &Path,
    group: &ClipGroup,
    warnings: &mut Vec<String>,
) -> Result<(), DatasetError> {
    let text = fs::read_to_string(csv).map_err(io_err(csv))?;
    let by_name: BTreeMap<String, &ClipMetadata> = group
        .train
        .iter()
        .chain(&group.test)
        .map(|c| (c.file_name(), c))
        .collect();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let cells: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        let Some(file) = cells.first().filter(|c| !c.is_empty()) else {
            continue;
        };
        let base = file.rsplit('/').next().unwrap_or(file);
        let Some(clip) = by_name.get(base) else {
            warnings.push(format!(
                "{}:{}: {} not present in corpus",
                csv.display(),
                lineno + 1,
                base
            ));
            continue;
        };
        let listed: Vec<(String, String)> = cells[1..]
            .chunks(2)
            .filter(|p| !p[0].is_empty())
            .map(|p| (p[0].to_string(), p.get(1).copied().unwrap_or("").to_string()))
            .collect();
        if listed != clip.name.attributes {
            warnings.push(format!(
                "{}:{}: attributes for {} disagree with file name; using file name",
                csv.display(),
                lineno + 1,
                base
            ));
        }
    }
    Ok(())
}

/// One line of a submission: a clip file name, its anomaly score and,
/// optionally, the thresholded decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRecord {
    pub file_name: String,
    pub score: f64,
    pub decision: Option<Decision>,
}

impl ScoreRecord {
    pub fn new(file_name: impl Into<String>, score: f64, decision: Option<Decision>) -> Self {
        Self {
            file_name: file_name.into(),
            score,
            decision,
        }
    }
}

pub fn score_file_name(machine_type: &str, section: u32) -> String {
    format!("anomaly_score_{machine_type}_section_{section:02}.csv")
}

pub fn decision_file_name(machine_type: &str, section: u32) -> String {
    format!("decision_result_{machine_type}_section_{section:02}.csv")
}

/// Writes the anomaly-score and decision CSVs for one section.
///
/// All records are validated before either file is touched. Scores use the
/// shortest representation that parses back to the same `f64`.
pub fn write_submission(
    records: &[ScoreRecord],
    machine_type: &str,
    section: u32,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf), DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyRecords);
    }
    let mut decisions = Vec::with_capacity(records.len());
    for r in records {
        if !r.score.is_finite() {
            return Err(DatasetError::NonFiniteScore(r.file_name.clone()));
        }
        decisions.push(
            r.decision
                .ok_or_else(|| DatasetError::MissingDecision(r.file_name.clone()))?,
        );
    }
    let mut scores = String::new();
    let mut verdicts = String::new();
    for (r, d) in records.iter().zip(&decisions) {
        scores.push_str(&format!("{},{}\n", r.file_name, r.score));
        verdicts.push_str(&format!("{},{}\n", r.file_name, d.as_digit()));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let score_path = out_dir.join(score_file_name(machine_type, section));
    let decision_path = out_dir.join(decision_file_name(machine_type, section));
    write_file(&score_path, scores.as_bytes())?;
    write_file(&decision_path, verdicts.as_bytes())?;
    Ok((score_path, decision_path))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

/// Reads a headerless `<filename>,<value>` CSV.
pub fn read_value_csv(path: &Path) -> Result<Vec<(String, f64)>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let bad = || DatasetError::BadCsvLine {
                path: path.to_path_buf(),
                line: i + 1,
                content: line.to_string(),
            };
            let (name, value) = line.rsplit_once(',').ok_or_else(bad)?;
            let value: f64 = value.trim().parse().map_err(|_| bad())?;
            Ok((name.to_string(), value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_labeled_train_name_with_attribute() {
        let n = parse_filename("section_00_source_train_normal_0001_spd_28V.wav").unwrap();
        assert_eq!(n.section, 0);
        assert_eq!(n.domain, Domain::Source);
        assert_eq!(n.split, Split::Train);
        assert_eq!(n.label, Label::Normal);
        assert_eq!(n.clip_index, 1);
        assert_eq!(n.attributes, vec![("spd".to_string(), "28V".to_string())]);
    }

    #[test]
    fn parses_labeled_test_name_without_attributes() {
        let n = parse_filename("section_00_target_test_anomaly_0042.wav").unwrap();
        assert_eq!(n.domain, Domain::Target);
        assert_eq!(n.split, Split::Test);
        assert_eq!(n.label, Label::Anomaly);
        assert_eq!(n.clip_index, 42);
        assert!(n.attributes.is_empty());
    }

    #[test]
    fn parses_evaluation_form() {
        let n = parse_filename("section_00_0123.wav").unwrap();
        assert_eq!(n.domain, Domain::Unknown);
        assert_eq!(n.split, Split::Test);
        assert_eq!(n.label, Label::Unknown);
        assert_eq!(n.clip_index, 123);
        assert_eq!(n.file_name(), "section_00_0123.wav");
    }

    #[test]
    fn lone_trailing_attribute_round_trips() {
        let s = "section_00_source_train_normal_0000_noAttribute.wav";
        let n = parse_filename(s).unwrap();
        assert_eq!(n.attributes, vec![("noAttribute".into(), String::new())]);
        assert_eq!(n.file_name(), s);
    }

    #[test]
    fn grammar_violations() {
        for bad in [
            "section_00_source_train_normal_0001.flac",
            "sect_00_source_train_normal_0001.wav",
            "section_0_source_train_normal_0001.wav",
            "section_00_source_valid_normal_0001.wav",
            "section_00_source_train_normal_abc.wav",
            "section_00_source_train_anomaly_0001.wav",
            "section_00__0001.wav",
            "section_00.wav",
        ] {
            assert!(
                matches!(parse_filename(bad), Err(DatasetError::MalformedName { .. })),
                "{bad}"
            );
        }
        assert!(matches!(
            parse_filename("section_00_other_test_normal_0001.wav"),
            Err(DatasetError::UnknownDomainToken { .. })
        ));
        assert!(matches!(
            parse_filename("section_00_source_test_broken_0001.wav"),
            Err(DatasetError::UnknownLabelToken { .. })
        ));
    }

    fn token() -> impl Strategy<Value = String> {
        "[A-Za-z0-9.]{1,6}"
    }

    fn clip_name() -> impl Strategy<Value = ClipName> {
        let labeled = (
            0u32..100,
            prop_oneof![Just(Domain::Source), Just(Domain::Target)],
            prop_oneof![
                Just((Split::Train, Label::Normal)),
                Just((Split::Test, Label::Normal)),
                Just((Split::Test, Label::Anomaly)),
            ],
            0u32..100_000,
            1usize..7,
            proptest::collection::vec((token(), token()), 0..4),
        )
            .prop_map(|(section, domain, (split, label), idx, width, attributes)| ClipName {
                section,
                domain,
                split,
                label,
                clip_index: idx,
                index_width: width.max(idx.to_string().len()),
                attributes,
            });
        let eval = (0u32..100, 0u32..10_000).prop_map(|(section, idx)| ClipName {
            section,
            domain: Domain::Unknown,
            split: Split::Test,
            label: Label::Unknown,
            clip_index: idx,
            index_width: 4.max(idx.to_string().len()),
            attributes: Vec::new(),
        });
        prop_oneof![labeled, eval]
    }

    proptest! {
        #[test]
        fn format_then_parse_round_trips(name in clip_name()) {
            let s = name.file_name();
            let parsed = parse_filename(&s).unwrap();
            prop_assert_eq!(parsed.file_name(), s);
            prop_assert_eq!(parsed, name);
        }
    }

    fn touch_wav(path: &Path) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        crate::audio::write_wav(path, &[0.0; 4]).unwrap();
    }

    fn mini_tree(root: &Path, source: usize, target: usize) {
        for i in 0..source {
            touch_wav(&root.join(format!("fan/train/section_00_source_train_normal_{i:04}.wav")));
        }
        for i in 0..target {
            touch_wav(&root.join(format!("fan/train/section_00_target_train_normal_{i:04}.wav")));
        }
        touch_wav(&root.join("fan/test/section_00_source_test_normal_0000.wav"));
        touch_wav(&root.join("fan/test/section_00_source_test_anomaly_0000.wav"));
    }

    #[test]
    fn scan_mini_fixture_warns_but_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        mini_tree(dir.path(), 20, 2);
        let m = scan_corpus(dir.path()).unwrap();
        assert_eq!(m.groups.len(), 1);
        let c = m.groups[0].counts();
        assert_eq!((c.train_source, c.train_target), (20, 2));
        assert_eq!((c.test_source_normal, c.test_source_anomaly), (1, 1));
        assert_eq!(m.warnings.len(), 1);
        let paths: Vec<_> = m.groups[0].train.iter().map(|c| c.path.clone()).collect();
        let mut sorted = paths.clone();
        sorted.sort();
        assert_eq!(paths, sorted);
    }

    #[test]
    fn scan_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        mini_tree(dir.path(), 5, 2);
        let a = serde_json::to_string(&scan_corpus(dir.path()).unwrap()).unwrap();
        let b = serde_json::to_string(&scan_corpus(dir.path()).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scan_requires_train_directory() {
        let dir = tempfile::tempdir().unwrap();
        touch_wav(&dir.path().join("fan/test/section_00_source_test_normal_0000.wav"));
        assert!(matches!(
            scan_corpus(dir.path()),
            Err(DatasetError::MissingDirectory(p)) if p.ends_with("train")
        ));
    }

    #[test]
    fn scan_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            scan_corpus(&dir.path().join("nope")),
            Err(DatasetError::MissingDirectory(_))
        ));
        assert!(matches!(
            scan_corpus(dir.path()),
            Err(DatasetError::EmptyCorpus(_))
        ));
        touch_wav(&dir.path().join("fan/train/section_00_source_train_normal_x.wav"));
        fs::create_dir_all(dir.path().join("fan/test")).unwrap();
        let err = scan_corpus(dir.path()).unwrap_err();
        assert!(matches!(err, DatasetError::InFile { .. }));
        assert!(err.to_string().contains("normal_x.wav"));
    }

    #[test]
    fn scan_rejects_split_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        mini_tree(dir.path(), 2, 1);
        touch_wav(&dir.path().join("fan/train/section_00_source_test_normal_0009.wav"));
        assert!(matches!(
            scan_corpus(dir.path()),
            Err(DatasetError::SplitMismatch { .. })
        ));
    }

    #[test]
    fn attribute_csv_disagreement_is_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        mini_tree(dir.path(), 2, 1);
        fs::write(
            dir.path().join("fan/attributes_00.csv"),
            "file_name,d1p,d1v\n\
             fan/train/section_00_source_train_normal_0000.wav,spd,28V\n\
             fan/train/section_00_source_train_normal_0001.wav\n",
        )
        .unwrap();
        let m = scan_corpus(dir.path()).unwrap();
        let attr_warnings: Vec<_> = m.warnings.iter().filter(|w| w.contains("attributes")).collect();
        assert_eq!(attr_warnings.len(), 1, "{:?}", m.warnings);
        assert!(attr_warnings[0].contains("normal_0000"));
    }

    #[test]
    fn submission_single_record() {
        let dir = tempfile::tempdir().unwrap();
        let recs = [ScoreRecord::new("a.wav", 2.5, Some(Decision::Anomaly))];
        let (s, d) = write_submission(&recs, "fan", 0, dir.path()).unwrap();
        assert!(s.ends_with("anomaly_score_fan_section_00.csv"));
        assert!(d.ends_with("decision_result_fan_section_00.csv"));
        assert_eq!(fs::read_to_string(s).unwrap(), "a.wav,2.5\n");
        assert_eq!(fs::read_to_string(d).unwrap(), "a.wav,1\n");
    }

    #[test]
    fn submission_preserves_order_and_cardinality() {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = (0..200)
            .map(|i| {
                let score = (i as f64 * 0.37).sin() * 1e3 + 1.0 / 3.0;
                let decision = if i % 3 == 0 { Decision::Anomaly } else { Decision::Normal };
                ScoreRecord::new(format!("c{i}.wav"), score, Some(decision))
            })
            .collect();
        let (s, d) = write_submission(&recs, "fan", 3, dir.path()).unwrap();
        let scores = read_value_csv(&s).unwrap();
        let decisions = read_value_csv(&d).unwrap();
        assert_eq!(scores.len(), 200);
        assert_eq!(decisions.len(), 200);
        for ((r, (n, v)), (_, dv)) in recs.iter().zip(&scores).zip(&decisions) {
            assert_eq!(&r.file_name, n);
            assert_eq!(r.score.to_bits(), v.to_bits());
            assert_eq!(r.decision.unwrap().as_digit() as f64, *dv);
        }
    }

    #[test]
    fn submission_rejects_bad_records_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let recs = [
            ScoreRecord::new("a.wav", 1.0, Some(Decision::Normal)),
            ScoreRecord::new("b.wav", f64::NAN, Some(Decision::Normal)),
        ];
        assert!(matches!(
            write_submission(&recs, "fan", 0, dir.path()),
            Err(DatasetError::NonFiniteScore(_))
        ));
        let recs = [ScoreRecord::new("a.wav", 1.0, None)];
        assert!(matches!(
            write_submission(&recs, "fan", 0, dir.path()),
            Err(DatasetError::MissingDecision(_))
        ));
        assert!(matches!(
            write_submission(&[], "fan", 0, dir.path()),
            Err(DatasetError::EmptyRecords)
        ));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
