//! CSV dataset manifests with header `path,label,device,fold,split`.
//!
//! `device` and `fold` may be absent or empty. Relative paths are resolved
//! against the manifest's directory.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
    Eval,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" => Some(Split::Train),
            "test" | "testing" => Some(Split::Test),
            "eval" | "evaluation" | "evaluate" => Some(Split::Eval),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// As written in the manifest; doubles as the segment id.
    pub path: String,
    pub audio_path: PathBuf,
    pub label: String,
    pub class: usize,
    pub device_id: Option<String>,
    pub fold: Option<u32>,
    pub split: Split,
    /// 1-based line in the CSV file.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Sorted distinct labels; `class` indexes into this list.
    pub classes: Vec<String>,
}

impl Manifest {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Entries of one split, restricted to `fold` when given.
    pub fn select(&self, split: Split, fold: Option<u32>) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| e.split == split && (fold.is_none() || e.fold == fold))
            .collect()
    }

    /// Distinct fold ids, ascending.
    pub fn folds(&self) -> Vec<u32> {
        let f: BTreeSet<u32> = self.entries.iter().filter_map(|e| e.fold).collect();
        f.into_iter().collect()
    }
}

struct Columns {
    path: usize,
    label: usize,
    device: Option<usize>,
    fold: Option<usize>,
    split: usize,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let err = |line: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let need = |name: &str| find(name).ok_or_else(|| err(1, format!("missing column '{name}'")));
    let cols = Columns {
        path: need("path")?,
        label: need("label")?,
        device: find("device"),
        fold: find("fold"),
        split: need("split")?,
    };

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| err(line, e.to_string()))?;
        let field = |c: usize| rec.get(c).unwrap_or("").to_string();
        let optional = |c: Option<usize>| c.map(field).filter(|s| !s.is_empty());
        let rel = field(cols.path);
        if rel.is_empty() {
            return Err(err(line, "empty path".into()));
        }
        let label = field(cols.label);
        if label.is_empty() {
            return Err(err(line, "empty label".into()));
        }
        let split_tok = field(cols.split);
        let split = Split::parse(&split_tok).ok_or_else(|| err(line, format!("unknown split '{split_tok}'")))?;
        let fold = match optional(cols.fold) {
            Some(f) => Some(f.parse::<u32>().map_err(|_| err(line, format!("bad fold '{f}'")))?),
            None => None,
        };
        if !seen.insert((rel.clone(), split, fold)) {
            log::warn!("{}: line {line}: duplicate row for {rel} ({split}), skipped", path.display());
            continue;
        }
        let audio_path = base.join(&rel);
        if !audio_path.is_file() {
            return Err(err(line, format!("audio file {} not found", audio_path.display())));
        }
        rows.push(ManifestEntry {
            path: rel,
            audio_path,
            label,
            class: 0,
            device_id: optional(cols.device),
            fold,
            split,
            line,
        });
    }
    if rows.is_empty() {
        return Err(err(1, "manifest has no entries".into()));
    }

    let mut by_fold: HashSet<(&str, Option<u32>, Split)> = HashSet::new();
    for e in &rows {
        by_fold.insert((&e.path, e.fold, e.split));
    }
    for e in rows.iter().filter(|e| e.split == Split::Train) {
        if by_fold.contains(&(e.path.as_str(), e.fold, Split::Test)) {
            return Err(err(e.line, format!("{} is in both train and test", e.path)));
        }
    }

    let classes: Vec<String> = rows.iter().map(|e| e.label.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    for e in &mut rows {
        e.class = classes.binary_search(&e.label).expect("label collected above");
    }
    Ok(Manifest { entries: rows, classes })
}

/// Writes rows in manifest order with all five columns.
pub fn write_manifest(path: impl AsRef<Path>, rows: &[(String, String, Option<String>, Option<u32>, Split)]) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(["path", "label", "device", "fold", "split"]).map_err(to_err)?;
    for (p, label, device, fold, split) in rows {
        let fold = fold.map(|f| f.to_string()).unwrap_or_default();
        w.write_record([p.as_str(), label, device.as_deref().unwrap_or(""), &fold, split.name()])
            .map_err(to_err)?;
    }
    w.flush().map_err(Error::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(csv: &str, files: &[&str]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        for f in files {
            std::fs::write(dir.path().join(f), b"").unwrap();
        }
        let p = dir.path().join("m.csv");
        std::fs::write(&p, csv).unwrap();
        (dir, p)
    }

    #[test]
    fn two_rows_two_classes() {
        let (_d, p) = setup("path,label,device,fold,split\na.wav,park,A,,train\nb.wav,bus,B,,test\n", &["a.wav", "b.wav"]);
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.classes, ["bus", "park"]);
        assert_eq!(m.entries[0].class, 1);
        assert_eq!(m.entries[1].device_id.as_deref(), Some("B"));
        assert_eq!(m.select(Split::Test, None).len(), 1);
    }

    #[test]
    fn device_column_optional() {
        let (_d, p) = setup("path,label,split\na.wav,park,train\n", &["a.wav"]);
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.entries[0].device_id, None);
        assert_eq!(m.entries[0].fold, None);
    }

    #[test]
    fn duplicates_dropped() {
        let (_d, p) = setup("path,label,split\na.wav,park,train\na.wav,park,train\n", &["a.wav"]);
        assert_eq!(load_manifest(&p).unwrap().entries.len(), 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let (_d, p) = setup("path,label,split\na.wav,park,train\na.wav,park,dev\n", &["a.wav"]);
        let e = load_manifest(&p).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("dev"), "{e}");

        let (_d, p) = setup("path,label,split\n", &[]);
        assert!(load_manifest(&p).is_err());

        let (_d, p) = setup("path,label,split\nmissing.wav,park,train\n", &[]);
        assert!(load_manifest(&p).unwrap_err().to_string().contains("line 2"));

        let (_d, p) = setup("path,label,split\na.wav,park,train\na.wav,park,test\n", &["a.wav"]);
        assert!(load_manifest(&p).is_err());
    }

    #[test]
    fn folds_allow_rotation() {
        let csv = "path,label,fold,split\na.wav,x,1,train\nb.wav,y,1,test\na.wav,x,2,test\nb.wav,y,2,train\n";
        let (_d, p) = setup(csv, &["a.wav", "b.wav"]);
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.folds(), [1, 2]);
        assert_eq!(m.select(Split::Train, Some(2))[0].path, "b.wav");
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.wav"), b"").unwrap();
        let p = dir.path().join("m.csv");
        write_manifest(&p, &[("a.wav".into(), "tones".into(), None, Some(3), Split::Eval)]).unwrap();
        let m = load_manifest(&p).unwrap();
        assert_eq!((m.entries[0].fold, m.entries[0].split), (Some(3), Split::Eval));
    }
}
