//! Dataset manifests for the UrbanSound8K and ESC-50 metadata layouts and
//! for plain folder-per-class trees.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::wav::probe_wav;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Urbansound8k,
    Esc50,
    FolderPerClass,
}

impl SourceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "urbansound8k" => Ok(SourceKind::Urbansound8k),
            "esc50" => Ok(SourceKind::Esc50),
            "folder_per_class" => Ok(SourceKind::FolderPerClass),
            other => Err(Error::Config(format!(
                "unknown source kind `{other}` (expected urbansound8k, esc50 or folder_per_class)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Urbansound8k => "urbansound8k",
            SourceKind::Esc50 => "esc50",
            SourceKind::FolderPerClass => "folder_per_class",
        }
    }

    fn class_count(self) -> Option<usize> {
        match self {
            SourceKind::Urbansound8k => Some(10),
            SourceKind::Esc50 => Some(50),
            SourceKind::FolderPerClass => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub path: PathBuf,
    pub label: usize,
    pub class_name: String,
    pub fold: Option<u32>,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<ClipRecord>,
    pub class_names: Vec<String>,
    pub source: SourceKind,
}

/// Anything with a class label and an optional fold, so splits work on
/// manifests and on preprocessed stores alike.
pub trait Labeled {
    fn label(&self) -> usize;
    fn fold(&self) -> Option<u32>;
}

impl Labeled for ClipRecord {
    fn label(&self) -> usize {
        self.label
    }

    fn fold(&self) -> Option<u32> {
        self.fold
    }
}

impl DatasetManifest {
    pub fn new(
        records: Vec<ClipRecord>,
        class_names: Vec<String>,
        source: SourceKind,
    ) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Data("manifest has no classes".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &class_names {
            if name.is_empty() || !seen.insert(name) {
                return Err(Error::Data(format!(
                    "class name `{name}` is empty or repeated"
                )));
            }
        }
        for r in &records {
            if r.label >= class_names.len() {
                return Err(Error::Data(format!(
                    "{}: label {} outside {} classes",
                    r.path.display(),
                    r.label,
                    class_names.len()
                )));
            }
        }
        Ok(DatasetManifest {
            records,
            class_names,
            source,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records per class, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    /// Same classes, different records.
    pub fn with_records(&self, records: Vec<ClipRecord>) -> DatasetManifest {
        DatasetManifest {
            records,
            class_names: self.class_names.clone(),
            source: self.source,
        }
    }
}

/// Load a dataset rooted at `root`.
///
/// * `urbansound8k`: `metadata/UrbanSound8K.csv`, clips at `audio/fold<k>/<slice_file_name>`.
/// * `esc50`: `meta/esc50.csv`, clips at `audio/<filename>`.
/// * `folder_per_class`: every subdirectory is a class (sorted by name) holding `.wav` files.
///
/// Records are sorted by path; class names are ordered by class id.
pub fn load_manifest(root: &Path, source: SourceKind) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "dataset root is not a directory",
            ),
        ));
    }
    let mut manifest = match source {
        SourceKind::Urbansound8k => load_csv(
            root,
            &root.join("metadata").join("UrbanSound8K.csv"),
            source,
            CsvColumns {
                file: "slice_file_name",
                fold: "fold",
                class_id: "classID",
                class_name: "class",
            },
            |file, fold| root.join("audio").join(format!("fold{fold}")).join(file),
        )?,
        SourceKind::Esc50 => load_csv(
            root,
            &root.join("meta").join("esc50.csv"),
            source,
            CsvColumns {
                file: "filename",
                fold: "fold",
                class_id: "target",
                class_name: "category",
            },
            |file, _| root.join("audio").join(file),
        )?,
        SourceKind::FolderPerClass => load_folders(root)?,
    };
    manifest.records.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(manifest)
}

struct CsvColumns {
    file: &'static str,
    fold: &'static str,
    class_id: &'static str,
    class_name: &'static str,
}

fn load_csv(
    _root: &Path,
    csv_path: &Path,
    source: SourceKind,
    cols: CsvColumns,
    clip_path: impl Fn(&str, u32) -> PathBuf,
) -> Result<DatasetManifest> {
    let row_err = |row: usize, reason: String| Error::Manifest {
        path: csv_path.to_path_buf(),
        row,
        reason,
    };
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(csv_path, io),
        other => Error::Data(format!("{}: {other:?}", csv_path.display())),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| row_err(1, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| row_err(1, format!("missing column `{name}`")))
    };
    let (file_col, fold_col, id_col, name_col) = (
        column(cols.file)?,
        column(cols.fold)?,
        column(cols.class_id)?,
        column(cols.class_name)?,
    );
    let num_classes = source
        .class_count()
        .expect("csv sources have fixed class counts");
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        // Row numbers count the header as row 1.
        let row_no = i + 2;
        let row = row.map_err(|e| row_err(row_no, e.to_string()))?;
        let cell = |c: usize| row.get(c).map(str::trim).unwrap_or("");
        let file = cell(file_col);
        let fold: u32 = cell(fold_col)
            .parse()
            .ok()
            .filter(|&f| f >= 1)
            .ok_or_else(|| row_err(row_no, format!("bad fold `{}`", cell(fold_col))))?;
        let label: usize = cell(id_col)
            .parse()
            .map_err(|_| row_err(row_no, format!("bad class id `{}`", cell(id_col))))?;
        if label >= num_classes {
            return Err(row_err(
                row_no,
                format!("class id {label} outside 0..{}", num_classes - 1),
            ));
        }
        let class_name = cell(name_col).to_string();
        match names.get(&label) {
            Some(existing) if *existing != class_name => {
                return Err(row_err(
                    row_no,
                    format!("class id {label} named both `{existing}` and `{class_name}`"),
                ))
            }
            _ => {
                names.insert(label, class_name.clone());
            }
        }
        let path = clip_path(file, fold);
        let info =
            probe_wav(&path).map_err(|e| row_err(row_no, format!("{}: {e}", path.display())))?;
        records.push(ClipRecord {
            path,
            label,
            class_name,
            fold: Some(fold),
            duration_s: info.duration_s(),
        });
    }
    let class_names = (0..num_classes)
        .map(|id| {
            names
                .get(&id)
                .cloned()
                .unwrap_or_else(|| format!("class_{id}"))
        })
        .collect();
    DatasetManifest::new(records, class_names, source)
}

fn load_folders(root: &Path) -> Result<DatasetManifest> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut class_names = Vec::new();
    let mut records = Vec::new();
    for dir in dirs {
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        if files.is_empty() {
            continue;
        }
        files.sort();
        let label = class_names.len();
        let class_name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for path in files {
            let info = probe_wav(&path)?;
            records.push(ClipRecord {
                path,
                label,
                class_name: class_name.clone(),
                fold: None,
                duration_s: info.duration_s(),
            });
        }
        class_names.push(class_name);
    }
    if class_names.is_empty() {
        return Err(Error::Data(format!(
            "{}: no class directories containing .wav files",
            root.display()
        )));
    }
    DatasetManifest::new(records, class_names, SourceKind::FolderPerClass)
}
