//! Watermark-backed image store.
//!
//! The index file is a plain TSV (`image_id \t locator \t class_label`,
//! `#` comment lines). It only maps ids to files: descriptors and patient
//! records are read back out of the watermarked images at query time, so a
//! lost index can be rebuilt from the store with [`relink`].

use crate::descriptor::{chlbp, distance, ChlbpDescriptor, DescriptorError};
use crate::image_io::{read_pgm, write_pgm, GrayImage, PgmError};
use crate::payload::{
    parse_payload_prefix, serialize_payload, PatientRecord, PayloadError, WatermarkPayload,
};
use crate::watermark::{self, WatermarkError};
use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

const INDEX_HEADER: &str = "# image_id\tlocator\tclass_label\n";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("DuplicateId: {0:?} is already in the index or the store")]
    DuplicateId(String),
    #[error("InvalidField: {0}")]
    InvalidField(String),
    #[error("EmptyIndex: nothing to search")]
    EmptyIndex,
    #[error("IndexLocked: {0} exists, another writer holds the index")]
    IndexLocked(PathBuf),
    #[error("CorruptIndex: {path}:{line}: {reason}")]
    CorruptIndex {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("UnknownId: {0:?} is not in the index")]
    UnknownId(String),
    #[error("IoFailure: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Watermark(#[from] WatermarkError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
}

impl RetrievalError {
    pub fn name(&self) -> &'static str {
        match self {
            RetrievalError::DuplicateId(_) => "DuplicateId",
            RetrievalError::InvalidField(_) => "InvalidField",
            RetrievalError::EmptyIndex => "EmptyIndex",
            RetrievalError::IndexLocked(_) => "IndexLocked",
            RetrievalError::CorruptIndex { .. } => "CorruptIndex",
            RetrievalError::UnknownId(_) => "UnknownId",
            RetrievalError::Io { .. } => "IoFailure",
            RetrievalError::Pgm(e) => e.name(),
            RetrievalError::Descriptor(e) => e.name(),
            RetrievalError::Watermark(e) => e.name(),
            RetrievalError::Payload(e) => e.name(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexEntry {
    pub image_id: String,
    pub locator: String,
    pub class_label: Option<String>,
}

impl IndexEntry {
    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\n",
            self.image_id,
            self.locator,
            self.class_label.as_deref().unwrap_or("")
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub image_id: String,
    pub distance: f64,
}

/// An index entry that could not be read during a scan.
#[derive(Debug)]
pub struct EntryFailure {
    pub image_id: String,
    pub error: RetrievalError,
}

#[derive(Debug)]
pub struct QueryOutcome<T> {
    pub results: Vec<T>,
    pub failures: Vec<EntryFailure>,
}

impl<T> Default for QueryOutcome<T> {
    fn default() -> Self {
        QueryOutcome {
            results: Vec::new(),
            failures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientHit {
    pub entry: IndexEntry,
    pub patient: PatientRecord,
}

/// Everything recovered from one watermarked file.
#[derive(Debug, Clone)]
pub struct StoredImage {
    pub payload: WatermarkPayload,
    pub original: GrayImage,
}

/// Reads a watermarked PGM, extracts and validates its payload, and
/// restores the original pixels.
pub fn open_stored(path: &Path) -> Result<StoredImage, RetrievalError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let img = read_pgm(&bytes)?;
    let (data, original) = watermark::extract_parts(&img)?;
    // payload integrity first: a tampered file reports ChecksumMismatch
    let (payload, _) = parse_payload_prefix(&data)?;
    Ok(StoredImage {
        payload,
        original: original?,
    })
}

fn check_field(what: &str, value: &str) -> Result<(), RetrievalError> {
    if value.contains(['\t', '\n', '\r']) {
        return Err(RetrievalError::InvalidField(format!(
            "{what} {value:?} contains a tab or line break"
        )));
    }
    Ok(())
}

fn check_image_id(id: &str) -> Result<(), RetrievalError> {
    check_field("image id", id)?;
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\', '\0']) {
        return Err(RetrievalError::InvalidField(format!(
            "image id {id:?} is not usable as a file name"
        )));
    }
    Ok(())
}

/// Where `index_add` stores image `image_id`.
pub fn locator_for(store_dir: &Path, image_id: &str) -> PathBuf {
    store_dir.join(format!("{image_id}.pgm"))
}

/// Ascending distance, ties by ascending id; at most `k` results.
pub fn rank(
    query: &ChlbpDescriptor,
    candidates: &[(String, ChlbpDescriptor)],
    k: usize,
) -> Result<Vec<RankedResult>, DescriptorError> {
    let mut out = candidates
        .iter()
        .map(|(id, d)| {
            Ok(RankedResult {
                image_id: id.clone(),
                distance: distance(query, d)?,
            })
        })
        .collect::<Result<Vec<_>, DescriptorError>>()?;
    out.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.image_id.cmp(&b.image_id))
    });
    out.truncate(k);
    Ok(out)
}

/// Exclusive writer lock: a sibling `<index>.lock` file created with
/// `O_EXCL`, removed on drop.
struct IndexLock {
    path: PathBuf,
}

impl IndexLock {
    fn acquire(index_path: &Path) -> Result<Self, RetrievalError> {
        let mut name = index_path.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(IndexLock { path }),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(RetrievalError::IndexLocked(path))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for IndexLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), RetrievalError> {
    let file_name = path.file_name().ok_or_else(|| {
        RetrievalError::InvalidField(format!("{} has no file name", path.display()))
    })?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Index {
    path: PathBuf,
    entries: Vec<IndexEntry>,
}

impl Index {
    /// Loads the index at `path`; a missing file is an empty index.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, RetrievalError> {
        let path = path.into();
        let entries = match fs::read_to_string(&path) {
            Ok(text) => parse_index(&path, &text)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&path)(e)),
        };
        Ok(Index { path, entries })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    /// Watermarks `original` with its descriptor, locator and patient
    /// record, writes it into `store_dir` and appends the index row.
    pub fn add(
        &mut self,
        original: &GrayImage,
        image_id: &str,
        patient: &PatientRecord,
        store_dir: &Path,
        class_label: Option<&str>,
    ) -> Result<IndexEntry, RetrievalError> {
        check_image_id(image_id)?;
        if let Some(label) = class_label {
            check_field("class label", label)?;
        }
        let locator_path = locator_for(store_dir, image_id);
        let locator = locator_path
            .to_str()
            .ok_or_else(|| RetrievalError::InvalidField("store path is not UTF-8".into()))?
            .to_string();
        check_field("locator", &locator)?;

        let _lock = IndexLock::acquire(&self.path)?;
        // another writer may have appended since we loaded
        *self = Index::open(self.path.clone())?;
        if self.get(image_id).is_some() || locator_path.exists() {
            return Err(RetrievalError::DuplicateId(image_id.to_string()));
        }

        let payload = WatermarkPayload {
            descriptor: chlbp(original)?,
            locator: locator.clone(),
            patient: patient.clone(),
        };
        let marked = watermark::embed(original, &serialize_payload(&payload)?)?;
        fs::create_dir_all(store_dir).map_err(io_err(store_dir))?;
        write_atomically(&locator_path, &write_pgm(&marked))?;

        let entry = IndexEntry {
            image_id: image_id.to_string(),
            locator,
            class_label: class_label.filter(|l| !l.is_empty()).map(str::to_string),
        };
        let fresh = !self.path.exists();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err(&self.path))?;
        let mut line = String::new();
        if fresh {
            line.push_str(INDEX_HEADER);
        }
        line.push_str(&entry.to_line());
        f.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.entries.push(entry.clone());
        Ok(entry)
    }

    /// Reads every stored payload, returning the entry with its payload and
    /// restored original, or the failure.
    pub fn scan(&self) -> Vec<(&IndexEntry, Result<StoredImage, RetrievalError>)> {
        self.entries
            .iter()
            .map(|e| (e, open_stored(Path::new(&e.locator))))
            .collect()
    }

    /// Stored descriptors in index order, with per-entry failures.
    pub fn load_descriptors(&self) -> QueryOutcome<(String, ChlbpDescriptor)> {
        let mut out = QueryOutcome::default();
        for (entry, stored) in self.scan() {
            match stored.and_then(|s| {
                // a zero-mass descriptor can never be ranked
                if s.payload.descriptor.total() == 0 {
                    Err(DescriptorError::EmptyDescriptor.into())
                } else {
                    Ok(s.payload.descriptor)
                }
            }) {
                Ok(d) => out.results.push((entry.image_id.clone(), d)),
                Err(error) => out.failures.push(EntryFailure {
                    image_id: entry.image_id.clone(),
                    error,
                }),
            }
        }
        out
    }

    pub fn query_by_image(
        &self,
        query: &GrayImage,
        k: usize,
    ) -> Result<QueryOutcome<RankedResult>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidField("k must be at least 1".into()));
        }
        if self.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let descriptor = chlbp(query)?;
        let loaded = self.load_descriptors();
        Ok(QueryOutcome {
            results: rank(&descriptor, &loaded.results, k)?,
            failures: loaded.failures,
        })
    }

    /// Entries whose embedded patient id equals `patient_id`, by image id.
    pub fn query_by_patient_id(&self, patient_id: &str) -> QueryOutcome<PatientHit> {
        let mut out = QueryOutcome::default();
        for (entry, stored) in self.scan() {
            match stored {
                Ok(s) if s.payload.patient.patient_id == patient_id => {
                    out.results.push(PatientHit {
                        entry: entry.clone(),
                        patient: s.payload.patient,
                    })
                }
                Ok(_) => {}
                Err(error) => out.failures.push(EntryFailure {
                    image_id: entry.image_id.clone(),
                    error,
                }),
            }
        }
        out.results
            .sort_by(|a, b| a.entry.image_id.cmp(&b.entry.image_id));
        out
    }

    /// Payload and original of one indexed image.
    pub fn open_entry(&self, image_id: &str) -> Result<StoredImage, RetrievalError> {
        let entry = self
            .get(image_id)
            .ok_or_else(|| RetrievalError::UnknownId(image_id.to_string()))?;
        open_stored(Path::new(&entry.locator))
    }

    fn save(&self) -> Result<(), RetrievalError> {
        let mut text = String::from(INDEX_HEADER);
        for e in &self.entries {
            text.push_str(&e.to_line());
        }
        write_atomically(&self.path, text.as_bytes())
    }
}

fn parse_index(path: &Path, text: &str) -> Result<Vec<IndexEntry>, RetrievalError> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let corrupt = |reason: String| RetrievalError::CorruptIndex {
            path: path.to_path_buf(),
            line: n + 1,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let (id, locator, label) = match fields.as_slice() {
            [id, locator] => (*id, *locator, ""),
            [id, locator, label] => (*id, *locator, *label),
            _ => {
                return Err(corrupt(format!(
                    "expected 2 or 3 fields, found {}",
                    fields.len()
                )))
            }
        };
        if id.is_empty() || locator.is_empty() {
            return Err(corrupt("empty image id or locator".into()));
        }
        if !seen.insert(id.to_string()) {
            return Err(corrupt(format!("duplicate image id {id:?}")));
        }
        entries.push(IndexEntry {
            image_id: id.to_string(),
            locator: locator.to_string(),
            class_label: (!label.is_empty()).then(|| label.to_string()),
        });
    }
    Ok(entries)
}

#[derive(Debug, Default)]
pub struct RelinkReport {
    /// Ids whose rows were added or had their locator corrected.
    pub repaired: Vec<String>,
    /// Files that do not carry a readable payload.
    pub unreadable: Vec<(PathBuf, RetrievalError)>,
    /// Files whose payload points at a different file, or that claim an id
    /// already taken by another file.
    pub conflicting: Vec<(PathBuf, String)>,
    /// Index rows with no matching file in the store; kept as they were.
    pub dangling: Vec<String>,
}

fn same_file(a: &Path, b: &Path) -> bool {
    a == b || matches!((fs::canonicalize(a), fs::canonicalize(b)), (Ok(x), Ok(y)) if x == y)
}

/// Rebuilds the index at `index_path` from the payloads of the PGM files in
/// `store_dir`, keeping class labels of rows that survive.
pub fn relink(
    store_dir: &Path,
    index_path: &Path,
) -> Result<(Index, RelinkReport), RetrievalError> {
    let mut files: Vec<PathBuf> = fs::read_dir(store_dir)
        .map_err(io_err(store_dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(store_dir)))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|x| x == "pgm"));
    files.sort();

    let _lock = IndexLock::acquire(index_path)?;
    let mut index = Index::open(index_path)?;
    let mut report = RelinkReport::default();
    let mut found: BTreeMap<String, String> = BTreeMap::new();

    for file in files {
        let stored = match open_stored(&file) {
            Ok(s) => s,
            Err(e) => {
                report.unreadable.push((file, e));
                continue;
            }
        };
        let locator = stored.payload.locator;
        let loc_path = Path::new(&locator);
        let id = match (
            loc_path.file_stem(),
            loc_path.file_name() == file.file_name(),
        ) {
            (Some(stem), true) if same_file(loc_path, &file) => stem.to_string_lossy().into_owned(),
            _ => {
                report
                    .conflicting
                    .push((file, format!("embedded locator is {locator:?}")));
                continue;
            }
        };
        if found.contains_key(&id) {
            report
                .conflicting
                .push((file, format!("image id {id:?} already claimed")));
            continue;
        }
        found.insert(id, locator);
    }

    for entry in &mut index.entries {
        match found.remove(&entry.image_id) {
            Some(locator) if locator != entry.locator => {
                entry.locator = locator;
                report.repaired.push(entry.image_id.clone());
            }
            Some(_) => {}
            None => report.dangling.push(entry.image_id.clone()),
        }
    }
    for (image_id, locator) in found {
        report.repaired.push(image_id.clone());
        index.entries.push(IndexEntry {
            image_id,
            locator,
            class_label: None,
        });
    }
    if !(report.repaired.is_empty() && index_path.exists()) {
        index.save()?;
    }
    Ok((index, report))
}
