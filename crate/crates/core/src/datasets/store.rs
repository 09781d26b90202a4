//! On-disk store of preprocessed images: one raw little-endian `f32` file
//! per clip under `arrays/`, a `file,label,fold` index, a skip report and a
//! JSON metadata file whose fingerprint detects stale stores.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::{ClipRecord, DatasetManifest, Labeled, SourceKind};
use super::pipeline::{clip_image, PipelineConfig};
use super::wav::decode_wav;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::{Example, Tensor};

pub const ARRAY_DIR: &str = "arrays";
pub const INDEX_FILE: &str = "index.csv";
pub const SKIP_FILE: &str = "skipped.txt";
pub const META_FILE: &str = "store.json";

/// Clips rendered concurrently before their arrays are written out.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreEntry {
    /// Relative to the store directory.
    pub file: String,
    pub label: usize,
    pub fold: Option<u32>,
}

impl Labeled for StoreEntry {
    fn label(&self) -> usize {
        self.label
    }

    fn fold(&self) -> Option<u32> {
        self.fold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub pipeline: PipelineConfig,
    pub class_names: Vec<String>,
    pub source: SourceKind,
    pub fingerprint: String,
    /// Source clip of each index row, in index order.
    pub sources: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessReport {
    pub written: usize,
    pub skipped: Vec<(PathBuf, String)>,
    /// The existing store already matched the inputs and was left untouched.
    pub up_to_date: bool,
}

/// Render every clip of `manifest` into `out_dir`.
///
/// Clips that fail to decode or render are listed in the skip report rather
/// than aborting the run. A store whose fingerprint matches the manifest,
/// the audio bytes and `cfg` is left as is unless `force` is set.
pub fn preprocess_dataset(
    manifest: &DatasetManifest,
    cfg: &PipelineConfig,
    out_dir: &Path,
    force: bool,
) -> Result<PreprocessReport> {
    cfg.validate()?;
    let audio: Vec<std::result::Result<Vec<u8>, String>> = manifest
        .records
        .iter()
        .map(|r| fs::read(&r.path).map_err(|e| e.to_string()))
        .collect();
    let fingerprint = fingerprint(manifest, cfg, &audio);
    if !force {
        if let Ok(store) = ArrayStore::open(out_dir) {
            if store.meta.fingerprint == fingerprint {
                let skipped = read_skips(out_dir);
                return Ok(PreprocessReport {
                    written: store.entries.len(),
                    skipped,
                    up_to_date: true,
                });
            }
        }
    }

    let array_dir = out_dir.join(ARRAY_DIR);
    if array_dir.exists() {
        fs::remove_dir_all(&array_dir).map_err(|e| Error::io(&array_dir, e))?;
    }
    fs::create_dir_all(&array_dir).map_err(|e| Error::io(&array_dir, e))?;
    // A half-rebuilt store must not look valid.
    let meta_path = out_dir.join(META_FILE);
    if meta_path.exists() {
        fs::remove_file(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    }

    let mut entries = Vec::new();
    let mut sources = Vec::new();
    let mut skipped = Vec::new();
    let jobs: Vec<_> = manifest
        .records
        .iter()
        .zip(&audio)
        .enumerate()
        .map(|(i, (r, a))| (i, r, a))
        .collect();
    for chunk in jobs.chunks(CHUNK) {
        let render =
            |&(_, _, bytes): &(usize, &ClipRecord, &std::result::Result<Vec<u8>, String>)| {
                let bytes = bytes.as_ref().map_err(Clone::clone)?;
                let channels = decode_wav(bytes).map_err(|e| e.to_string())?;
                let image = clip_image(&channels, cfg).map_err(|e| e.to_string())?;
                Ok::<_, String>(image_bytes(image.values()))
            };
        #[cfg(feature = "parallel")]
        let rendered: Vec<_> = {
            use rayon::prelude::*;
            chunk.par_iter().map(render).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rendered: Vec<_> = chunk.iter().map(render).collect();

        for (&(i, record, _), result) in chunk.iter().zip(rendered) {
            match result {
                Ok(bytes) => {
                    let file = format!("{ARRAY_DIR}/{i:06}.f32");
                    write_atomic(&out_dir.join(&file), &bytes)?;
                    entries.push(StoreEntry {
                        file,
                        label: record.label,
                        fold: record.fold,
                    });
                    sources.push(record.path.clone());
                }
                Err(reason) => skipped.push((record.path.clone(), reason)),
            }
        }
    }

    write_atomic(&out_dir.join(INDEX_FILE), index_csv(&entries).as_bytes())?;
    let mut report = String::new();
    for (path, reason) in &skipped {
        let _ = writeln!(
            report,
            "{}\t{}",
            path.display(),
            reason.replace(['\n', '\t'], " ")
        );
    }
    write_atomic(&out_dir.join(SKIP_FILE), report.as_bytes())?;
    let meta = StoreMeta {
        pipeline: cfg.clone(),
        class_names: manifest.class_names.clone(),
        source: manifest.source,
        fingerprint,
        sources,
    };
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(&meta_path, &json)?;
    Ok(PreprocessReport {
        written: entries.len(),
        skipped,
        up_to_date: false,
    })
}

fn image_bytes(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

fn fingerprint(
    manifest: &DatasetManifest,
    cfg: &PipelineConfig,
    audio: &[std::result::Result<Vec<u8>, String>],
) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("pipeline config serializes"));
    h.update(manifest.class_names.join("\n").as_bytes());
    for (r, a) in manifest.records.iter().zip(audio) {
        h.update(format!("\n{}\t{}\t{:?}\t", r.path.display(), r.label, r.fold).as_bytes());
        match a {
            Ok(bytes) => h.update(Sha256::digest(bytes)),
            Err(e) => h.update(e.as_bytes()),
        }
    }
    hex::encode(h.finalize())
}

fn index_csv(entries: &[StoreEntry]) -> String {
    let mut out = String::from("file,label,fold\n");
    for e in entries {
        let fold = e.fold.map(|f| f.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", e.file, e.label, fold);
    }
    out
}

fn read_skips(dir: &Path) -> Vec<(PathBuf, String)> {
    fs::read_to_string(dir.join(SKIP_FILE))
        .unwrap_or_default()
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(p, r)| (PathBuf::from(p), r.to_string()))
        .collect()
}

/// A preprocessed store opened for reading.
#[derive(Debug, Clone)]
pub struct ArrayStore {
    dir: PathBuf,
    meta: StoreMeta,
    entries: Vec<StoreEntry>,
}

impl ArrayStore {
    pub fn open(dir: &Path) -> Result<ArrayStore> {
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: StoreMeta = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", meta_path.display())))?;
        let index_path = dir.join(INDEX_FILE);
        let entries = parse_index(&index_path, meta.class_names.len())?;
        if entries.len() != meta.sources.len() {
            return Err(Error::Data(format!(
                "{}: {} rows but metadata lists {} clips",
                index_path.display(),
                entries.len(),
                meta.sources.len()
            )));
        }
        Ok(ArrayStore {
            dir: dir.to_path_buf(),
            meta,
            entries,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn class_names(&self) -> &[String] {
        &self.meta.class_names
    }

    /// Image of one entry as a `[1, rows, cols]` tensor.
    pub fn load(&self, entry: &StoreEntry) -> Result<Tensor<f32>> {
        let path = self.dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let [rows, cols] = self.meta.pipeline.image_shape();
        if bytes.len() != rows * cols * 4 {
            return Err(Error::Data(format!(
                "{}: {} bytes, expected {rows}x{cols} f32 values",
                path.display(),
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Tensor::new(vec![1, rows, cols], data)
    }

    pub fn examples(&self, entries: &[StoreEntry]) -> Result<Vec<Example<f32>>> {
        entries
            .iter()
            .map(|e| {
                Ok(Example {
                    input: self.load(e)?,
                    label: e.label,
                })
            })
            .collect()
    }
}

fn parse_index(path: &Path, num_classes: usize) -> Result<Vec<StoreEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |row: usize, reason: String| Error::Manifest {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let mut lines = text.lines();
    if lines.next() != Some("file,label,fold") {
        return Err(err(1, "expected header `file,label,fold`".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let row = i + 2;
            let cells: Vec<&str> = line.split(',').collect();
            let [file, label, fold] = cells[..] else {
                return Err(err(row, format!("expected 3 fields, got {}", cells.len())));
            };
            let label: usize = label
                .parse()
                .ok()
                .filter(|&l| l < num_classes)
                .ok_or_else(|| err(row, format!("bad label `{label}`")))?;
            let fold = match fold {
                "" => None,
                f => Some(f.parse().map_err(|_| err(row, format!("bad fold `{f}`")))?),
            };
            Ok(StoreEntry {
                file: file.to_string(),
                label,
                fold,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::manifest::load_manifest;
    use crate::datasets::wav::encode_wav_pcm16;
    use std::f64::consts::PI;

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            clip_seconds: 0.25,
            image_rows: 16,
            image_cols: 12,
            n_freq_bins: 64,
            ..PipelineConfig::default()
        }
    }

    fn dataset(dir: &Path) -> DatasetManifest {
        for (class, freq) in [("high", 1200.0), ("low", 300.0)] {
            for i in 0..3 {
                let x: Vec<f64> = (0..1000)
                    .map(|n| 0.5 * (2.0 * PI * (freq + 10.0 * i as f64) * n as f64 / 4000.0).sin())
                    .collect();
                let path = dir.join(class).join(format!("{i}.wav"));
                fs::create_dir_all(path.parent().unwrap()).unwrap();
                fs::write(path, encode_wav_pcm16(&[&x], 4000).unwrap()).unwrap();
            }
        }
        fs::write(dir.join("low/broken.wav"), b"RIFF....WAVEjunk").unwrap();
        load_manifest(dir, SourceKind::FolderPerClass).unwrap_err();
        fs::remove_file(dir.join("low/broken.wav")).unwrap();
        load_manifest(dir, SourceKind::FolderPerClass).unwrap()
    }

    fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push((
                        p.strip_prefix(dir).unwrap().to_path_buf(),
                        fs::read(&p).unwrap(),
                    ));
                }
            }
        }
        files.sort();
        files
    }

    #[test]
    fn empty_manifest_gives_empty_store() {
        let out = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(vec![], vec!["a".into()], SourceKind::FolderPerClass).unwrap();
        let report = preprocess_dataset(&m, &small_cfg(), out.path(), false).unwrap();
        assert_eq!(report.written, 0);
        assert_eq!(
            fs::read_to_string(out.path().join(INDEX_FILE)).unwrap(),
            "file,label,fold\n"
        );
        assert!(ArrayStore::open(out.path()).unwrap().entries().is_empty());
    }

    #[test]
    fn store_round_trip_and_rebuild_is_byte_identical() {
        let data = tempfile::tempdir().unwrap();
        let m = dataset(data.path());
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = small_cfg();
        let report = preprocess_dataset(&m, &cfg, a.path(), false).unwrap();
        assert_eq!((report.written, report.up_to_date), (6, false));
        preprocess_dataset(&m, &cfg, b.path(), true).unwrap();
        assert_eq!(snapshot(a.path()), snapshot(b.path()));

        let again = preprocess_dataset(&m, &cfg, a.path(), false).unwrap();
        assert!(again.up_to_date);
        let changed = PipelineConfig {
            image_rows: 8,
            ..cfg
        };
        assert!(
            !preprocess_dataset(&m, &changed, a.path(), false)
                .unwrap()
                .up_to_date
        );

        let store = ArrayStore::open(b.path()).unwrap();
        assert_eq!(store.class_names(), ["high", "low"]);
        let examples = store.examples(store.entries()).unwrap();
        assert_eq!(examples[0].input.shape(), &[1, 16, 12]);
        assert!(examples
            .iter()
            .all(|e| e.input.data().iter().all(|v| (0.0..=1.0).contains(v))));
        assert_eq!(examples.iter().filter(|e| e.label == 1).count(), 3);
    }

    #[test]
    fn undecodable_clips_are_reported_not_fatal() {
        let data = tempfile::tempdir().unwrap();
        let mut m = dataset(data.path());
        let bad = data.path().join("low/zz.wav");
        fs::write(&bad, b"RIFF\x04\x00\x00\x00WAVE").unwrap();
        m.records.push(ClipRecord {
            path: bad.clone(),
            label: 1,
            class_name: "low".into(),
            fold: None,
            duration_s: 0.0,
        });
        let out = tempfile::tempdir().unwrap();
        let report = preprocess_dataset(&m, &small_cfg(), out.path(), false).unwrap();
        assert_eq!(report.written, 6);
        assert_eq!(report.skipped.len(), 1);
        let text = fs::read_to_string(out.path().join(SKIP_FILE)).unwrap();
        assert!(text.starts_with(&bad.display().to_string()), "{text}");
        assert_eq!(read_skips(out.path()), report.skipped);
    }

    #[test]
    fn index_parsing_errors_name_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(INDEX_FILE);
        fs::write(&path, "file,label,fold\na.f32,0,1\nb.f32,7,\n").unwrap();
        let err = parse_index(&path, 2).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        fs::write(&path, "file,label,fold\na.f32,0,1\nb.f32,1,\n").unwrap();
        let entries = parse_index(&path, 2).unwrap();
        assert_eq!(entries[1].fold, None);
        assert_eq!(index_csv(&entries), fs::read_to_string(&path).unwrap());
    }
}
