//! Dataset manifest files.
//!
//! ```text
//! v1<TAB>classes=almond,shell
//! train<TAB>almond<TAB>images/almond_00000.pgm
//! test<TAB>shell<TAB>images/shell_00003.pgm
//! ```
//!
//! One header line, then one record per sample. Relative paths resolve
//! against the manifest's own directory.

use std::fs;
use std::path::{Path, PathBuf};

use almond_core::dataset::{DatasetManifest, Sample, SampleSource, SplitOutput, SplitTag};

use crate::error::{Error, IoContext, Result};
use crate::imageio::write_atomic;

pub const MANIFEST_VERSION: &str = "v1";

/// Every record of a manifest file, each with its own split tag.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ManifestFile {
    pub class_names: Vec<String>,
    pub records: Vec<(SplitTag, Sample)>,
}

impl ManifestFile {
    pub fn from_manifest(m: &DatasetManifest) -> Self {
        Self { class_names: m.class_names.clone(), records: m.samples.iter().map(|s| (m.split, s.clone())).collect() }
    }

    pub fn from_split(split: &SplitOutput) -> Self {
        let mut file = Self::from_manifest(&split.train);
        for part in [&split.val, &split.test] {
            file.records.extend(part.samples.iter().map(|s| (part.split, s.clone())));
        }
        file
    }

    /// Records carrying `tag`, as a manifest of that split.
    pub fn select(&self, tag: SplitTag) -> DatasetManifest {
        let samples = self.records.iter().filter(|(t, _)| *t == tag).map(|(_, s)| s.clone()).collect();
        DatasetManifest { class_names: self.class_names.clone(), samples, split: tag }
    }

    pub fn count(&self, tag: SplitTag) -> usize {
        self.records.iter().filter(|(t, _)| *t == tag).count()
    }

    pub fn to_text(&self) -> Result<String> {
        for name in &self.class_names {
            if name.is_empty() || name.contains([',', '\t', '\n', '\r']) {
                return Err(Error::Config(format!("class name {name:?} cannot be stored in a manifest")));
            }
        }
        let mut out = format!("{MANIFEST_VERSION}\tclasses={}\n", self.class_names.join(","));
        for (tag, s) in &self.records {
            let path = match &s.source {
                SampleSource::Path(p) => p,
                SampleSource::Image(_) => return Err(Error::Config("in-memory samples must be written to disk before saving a manifest".into())),
            };
            if path.contains(['\t', '\n', '\r']) {
                return Err(Error::Config(format!("path {path:?} cannot be stored in a manifest")));
            }
            out += &format!("{}\t{}\t{}\n", tag.as_str(), s.label_name, path);
        }
        Ok(out)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse { path: origin.into(), line, message };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::SchemaMismatch(String::new()))?;
        let mut fields = header.split('\t');
        let version = fields.next().unwrap_or_default();
        if version != MANIFEST_VERSION {
            return Err(Error::SchemaMismatch(version.to_string()));
        }
        let classes = fields
            .next()
            .and_then(|f| f.strip_prefix("classes="))
            .ok_or_else(|| bad(1, "header needs `classes=`".into()))?;
        let class_names: Vec<String> = classes.split(',').filter(|c| !c.is_empty()).map(String::from).collect();
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.splitn(3, '\t').collect();
            let [tag, label, path] = parts[..] else {
                return Err(bad(i + 1, "expected `split<TAB>label<TAB>path`".into()));
            };
            let tag = SplitTag::parse(tag).ok_or_else(|| bad(i + 1, format!("unknown split {tag:?}")))?;
            let label_index = class_names
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| bad(i + 1, format!("label {label:?} is not among the declared classes")))?;
            let sample = Sample { source: SampleSource::Path(path.to_string()), label_index, label_name: label.to_string() };
            records.push((tag, sample));
        }
        let file = Self { class_names, records };
        // Duplicate class names are the one structural error left to catch.
        DatasetManifest::new(file.class_names.clone(), Vec::new(), SplitTag::Train)?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).at(path)?, path)
    }
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    ManifestFile::from_manifest(manifest).save(path)
}

/// Loads a manifest file that holds a single split (the first record's tag).
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = ManifestFile::load(path)?;
    let tag = file.records.first().map(|(t, _)| *t).unwrap_or_default();
    if file.records.iter().any(|(t, _)| *t != tag) {
        return Err(Error::Config(format!("{} mixes splits; select one", path.display())));
    }
    Ok(file.select(tag))
}

/// Resolves a sample path against the manifest directory.
pub fn resolve(base: &Path, sample_path: &str) -> PathBuf {
    let p = Path::new(sample_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(i: usize, label: usize) -> Sample {
        let names = ["almond", "shell"];
        Sample { source: SampleSource::Path(format!("img/{i} x.pgm")), label_index: label, label_name: names[label].into() }
    }

    #[test]
    fn round_trip_and_line_count() {
        let samples: Vec<Sample> = (0..736).map(|i| sample(i, i % 2)).collect();
        let m = DatasetManifest::new(vec!["almond".into(), "shell".into()], samples, SplitTag::Val).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        save_manifest(&m, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 737);
        assert_eq!(load_manifest(&path).unwrap(), m);
    }

    #[test]
    fn empty_round_trip() {
        let m = DatasetManifest::new(vec!["almond".into(), "shell".into()], Vec::new(), SplitTag::Train).unwrap();
        let text = ManifestFile::from_manifest(&m).to_text().unwrap();
        let back = ManifestFile::parse(&text, Path::new("m")).unwrap();
        assert_eq!(back.select(SplitTag::Train), m);
    }

    #[test]
    fn schema_and_record_errors() {
        assert!(matches!(ManifestFile::parse("v2\tclasses=a\n", Path::new("m")), Err(Error::SchemaMismatch(v)) if v == "v2"));
        assert!(matches!(ManifestFile::parse("", Path::new("m")), Err(Error::SchemaMismatch(_))));
        let unknown = "v1\tclasses=almond,shell\ntrain\tpeanut\ta.pgm\n";
        assert!(matches!(ManifestFile::parse(unknown, Path::new("m")), Err(Error::Parse { line: 2, .. })));
        let bad_split = "v1\tclasses=almond,shell\nholdout\talmond\ta.pgm\n";
        assert!(matches!(ManifestFile::parse(bad_split, Path::new("m")), Err(Error::Parse { .. })));
        let dup = "v1\tclasses=almond,almond\n";
        assert!(ManifestFile::parse(dup, Path::new("m")).is_err());
    }

    #[test]
    fn mixed_splits_select() {
        let text = "v1\tclasses=almond,shell\ntrain\talmond\ta.pgm\ntest\tshell\tb.pgm\ntrain\tshell\tc.pgm\n";
        let file = ManifestFile::parse(text, Path::new("m")).unwrap();
        assert_eq!(file.count(SplitTag::Train), 2);
        assert_eq!(file.select(SplitTag::Test).class_counts(), vec![0, 1]);
        assert_eq!(ManifestFile::parse(&file.to_text().unwrap(), Path::new("m")).unwrap(), file);
    }
}
