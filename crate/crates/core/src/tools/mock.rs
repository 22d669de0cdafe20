//! In-process stand-ins for the external services, backed by a fixture
//! bundle on disk:
//!
//! ```text
//! drive/...                 Google Drive files
//! adma/...                  data platform tree; `<file>.meta.json` sidecars
//! realm5/<YYYY-MM-DD>.csv   weather series: timestamp,temperature,humidity,wind_speed
//! fields/<name>.json        optional field boundaries for the map tool
//! ```
//!
//! Reads never mutate state. State sits behind a mutex so adapters can be
//! shared across sessions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::graph::{Date, FileRef, GeoField, PlotSpec, Table};

pub const DEFAULT_BASE_URL: &str = "http://adma.local";
pub const REALM5_COLUMNS: [&str; 4] = ["timestamp", "temperature", "humidity", "wind_speed"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MockError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("keyword {keyword:?} matches several files: {}", matches.join(", "))]
    AmbiguousMatch {
        keyword: String,
        matches: Vec<String>,
    },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmaFile {
    pub content: Vec<u8>,
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct MockState {
    drive: BTreeMap<String, Vec<u8>>,
    adma_files: BTreeMap<String, AdmaFile>,
    adma_dirs: BTreeSet<String>,
    realm5: BTreeMap<Date, Table>,
    fields: BTreeMap<String, Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
struct FieldFixture {
    name: String,
    boundary: Vec<[f64; 2]>,
}

/// Normalizes a data-platform path to `/a/b` form.
pub fn adma_path(raw: &str) -> String {
    let parts: Vec<&str> = raw
        .split('/')
        .filter(|p| !p.is_empty() && *p != ".")
        .collect();
    format!("/{}", parts.join("/"))
}

fn drive_path(raw: &str) -> String {
    raw.split('/')
        .filter(|p| !p.is_empty() && *p != ".")
        .collect::<Vec<_>>()
        .join("/")
}

fn parent_dirs(path: &str) -> impl Iterator<Item = String> + '_ {
    let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
    (0..segments.len()).map(move |i| adma_path(&segments[..i].join("/")))
}

fn walk(root: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(root)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn fixture_err(path: &Path, e: impl std::fmt::Display) -> MockError {
    MockError::Fixture(format!("{}: {e}", path.display()))
}

/// Parses a sensor CSV, keeping every cell byte-for-byte.
pub fn parse_realm5_csv(text: &str) -> Result<Table, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let columns: Vec<String> = headers.iter().map(str::to_string).collect();
    if columns != REALM5_COLUMNS {
        return Err(format!(
            "expected columns {REALM5_COLUMNS:?}, found {columns:?}"
        ));
    }
    let mut table = Table::new(columns);
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        table.push_row(record.iter());
    }
    Ok(table)
}

impl MockState {
    fn load(root: &Path) -> Result<Self, MockError> {
        let mut state = MockState::default();
        state.adma_dirs.insert("/".into());

        let dir = root.join("drive");
        let mut files = Vec::new();
        walk(&dir, &mut files).map_err(|e| fixture_err(&dir, e))?;
        for f in files {
            let bytes = std::fs::read(&f).map_err(|e| fixture_err(&f, e))?;
            state.drive.insert(relative(&dir, &f), bytes);
        }

        let dir = root.join("adma");
        let mut files = Vec::new();
        walk(&dir, &mut files).map_err(|e| fixture_err(&dir, e))?;
        let mut sidecars = BTreeMap::new();
        for f in files {
            let rel = adma_path(&relative(&dir, &f));
            let bytes = std::fs::read(&f).map_err(|e| fixture_err(&f, e))?;
            if let Some(target) = rel.strip_suffix(".meta.json") {
                let raw: BTreeMap<String, serde_json::Value> =
                    serde_json::from_slice(&bytes).map_err(|e| fixture_err(&f, e))?;
                let meta = raw
                    .into_iter()
                    .map(|(k, v)| match v {
                        serde_json::Value::String(s) => (k, s),
                        other => (k, other.to_string()),
                    })
                    .collect::<BTreeMap<_, _>>();
                sidecars.insert(target.to_string(), meta);
            } else {
                state.adma_dirs.extend(parent_dirs(&rel));
                state.adma_files.insert(
                    rel,
                    AdmaFile {
                        content: bytes,
                        meta: BTreeMap::new(),
                    },
                );
            }
        }
        for (target, meta) in sidecars {
            match state.adma_files.get_mut(&target) {
                Some(file) => file.meta = meta,
                None => {
                    return Err(MockError::Fixture(format!(
                        "sidecar for missing file {target}"
                    )))
                }
            }
        }

        let dir = root.join("realm5");
        let mut files = Vec::new();
        walk(&dir, &mut files).map_err(|e| fixture_err(&dir, e))?;
        for f in files {
            let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            if f.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            let date: Date = stem.parse().map_err(|e| fixture_err(&f, e))?;
            let text = std::fs::read_to_string(&f).map_err(|e| fixture_err(&f, e))?;
            state.realm5.insert(
                date,
                parse_realm5_csv(&text).map_err(|e| fixture_err(&f, e))?,
            );
        }

        let dir = root.join("fields");
        if dir.is_dir() {
            let mut files = Vec::new();
            walk(&dir, &mut files).map_err(|e| fixture_err(&dir, e))?;
            for f in files {
                let bytes = std::fs::read(&f).map_err(|e| fixture_err(&f, e))?;
                let field: FieldFixture =
                    serde_json::from_slice(&bytes).map_err(|e| fixture_err(&f, e))?;
                state.fields.insert(field.name, field.boundary);
            }
        }
        Ok(state)
    }
}

/// The mocked Google Drive, ADMA data platform, Realm5 sensor API and
/// field map service.
#[derive(Debug)]
pub struct MockServices {
    state: Mutex<MockState>,
    initial: MockState,
    base_url: String,
}

impl MockServices {
    pub fn load(root: &Path) -> Result<Self, MockError> {
        if !root.is_dir() {
            return Err(MockError::Fixture(format!(
                "{} is not a directory",
                root.display()
            )));
        }
        let state = MockState::load(root)?;
        Ok(MockServices {
            state: Mutex::new(state.clone()),
            initial: state,
            base_url: DEFAULT_BASE_URL.to_string(),
        })
    }

    pub fn with_base_url(mut self, base_url: &str) -> Self {
        self.base_url = base_url.trim_end_matches('/').to_string();
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Restores the state as loaded from disk.
    pub fn reset(&self) {
        *self.lock() = self.initial.clone();
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, MockState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn drive_download(&self, path: &str) -> Result<FileRef, MockError> {
        let key = drive_path(path);
        let state = self.lock();
        let bytes = state
            .drive
            .get(&key)
            .ok_or_else(|| MockError::NotFound(format!("google drive file {key}")))?;
        Ok(FileRef::for_content("google", &key, bytes))
    }

    /// Lists the immediate children of a drive folder (`/` is the root).
    pub fn drive_list(&self, folder: &str) -> Result<Table, MockError> {
        let prefix = drive_path(folder);
        let state = self.lock();
        let mut files = BTreeMap::new();
        let mut folders = BTreeSet::new();
        for (path, bytes) in &state.drive {
            let rest = if prefix.is_empty() {
                path.as_str()
            } else if let Some(r) = path.strip_prefix(&format!("{prefix}/")) {
                r
            } else {
                continue;
            };
            match rest.split_once('/') {
                Some((dir, _)) => {
                    folders.insert(dir.to_string());
                }
                None => {
                    files.insert(rest.to_string(), bytes.len());
                }
            }
        }
        if files.is_empty() && folders.is_empty() && !prefix.is_empty() {
            return Err(MockError::NotFound(format!("google drive folder {prefix}")));
        }
        let mut table = Table::new(["name", "kind", "size"]);
        for f in folders {
            table.push_row([f, "folder".to_string(), String::new()]);
        }
        for (f, size) in files {
            table.push_row([f, "file".to_string(), size.to_string()]);
        }
        Ok(table)
    }

    fn source_bytes(state: &MockState, file: &FileRef) -> Result<Vec<u8>, MockError> {
        let bytes = match file.service.as_str() {
            "google" => state.drive.get(&drive_path(&file.path)),
            "adma" => state
                .adma_files
                .get(&adma_path(&file.path))
                .map(|f| &f.content),
            other => return Err(MockError::Invalid(format!("unknown file service {other}"))),
        }
        .ok_or_else(|| MockError::NotFound(format!("{}:{}", file.service, file.path)))?;
        if FileRef::for_content(&file.service, &file.path, bytes).sha256 != file.sha256 {
            return Err(MockError::Invalid(format!(
                "{}:{} changed since it was read",
                file.service, file.path
            )));
        }
        Ok(bytes.clone())
    }

    /// Raw bytes behind a file handle.
    pub fn file_content(&self, file: &FileRef) -> Result<Vec<u8>, MockError> {
        Self::source_bytes(&self.lock(), file)
    }

    /// Copies `file` into the folder `dest`. An existing file of the same
    /// name is replaced.
    pub fn adma_upload(&self, file: &FileRef, dest: &str) -> Result<String, MockError> {
        let mut state = self.lock();
        let dest = adma_path(dest);
        if !state.adma_dirs.contains(&dest) {
            return Err(MockError::NotFound(format!("ADMA folder {dest}")));
        }
        let content = Self::source_bytes(&state, file)?;
        let path = adma_path(&format!("{dest}/{}", file.file_name()));
        let meta = BTreeMap::from([
            (
                "source".to_string(),
                format!("{}:{}", file.service, file.path),
            ),
            ("sha256".to_string(), file.sha256.clone()),
        ]);
        state
            .adma_files
            .insert(path.clone(), AdmaFile { content, meta });
        Ok(path)
    }

    pub fn adma_page_url(&self, path: &str) -> Result<String, MockError> {
        let path = adma_path(path);
        let state = self.lock();
        if !state.adma_files.contains_key(&path) && !state.adma_dirs.contains(&path) {
            return Err(MockError::NotFound(format!("ADMA path {path}")));
        }
        Ok(format!(
            "{}/files{}",
            self.base_url,
            if path == "/" { "/" } else { &path }
        ))
    }

    pub fn adma_home_url(&self) -> String {
        format!("{}/", self.base_url)
    }

    pub fn adma_docs_url(&self) -> String {
        format!("{}/docs", self.base_url)
    }

    pub fn adma_metadata(&self, path: &str) -> Result<Table, MockError> {
        let path = adma_path(path);
        let state = self.lock();
        let file = state
            .adma_files
            .get(&path)
            .ok_or_else(|| MockError::NotFound(format!("ADMA file {path}")))?;
        let mut table = Table::new(["key", "value"]);
        table.push_row(["path".to_string(), path.clone()]);
        table.push_row(["size".to_string(), file.content.len().to_string()]);
        for (k, v) in &file.meta {
            table.push_row([k.clone(), v.clone()]);
        }
        Ok(table)
    }

    /// The unique file whose name contains `keyword` (case-insensitive).
    pub fn adma_search(&self, keyword: &str) -> Result<String, MockError> {
        let needle = keyword.trim().to_lowercase();
        if needle.is_empty() {
            return Err(MockError::Invalid("empty keyword".into()));
        }
        let state = self.lock();
        let matches: Vec<String> = state
            .adma_files
            .keys()
            .filter(|p| {
                p.rsplit('/')
                    .next()
                    .is_some_and(|name| name.to_lowercase().contains(&needle))
            })
            .cloned()
            .collect();
        match matches.len() {
            0 => Err(MockError::NotFound(format!(
                "no ADMA file name contains {keyword:?}"
            ))),
            1 => Ok(matches.into_iter().next().unwrap_or_default()),
            _ => Err(MockError::AmbiguousMatch {
                keyword: keyword.to_string(),
                matches,
            }),
        }
    }

    pub fn adma_download(&self, path: &str) -> Result<FileRef, MockError> {
        let path = adma_path(path);
        let state = self.lock();
        let file = state
            .adma_files
            .get(&path)
            .ok_or_else(|| MockError::NotFound(format!("ADMA file {path}")))?;
        Ok(FileRef::for_content("adma", &path, &file.content))
    }

    /// Immediate children of an ADMA folder, folders first.
    pub fn adma_list(&self, folder: &str) -> Result<Table, MockError> {
        let folder = adma_path(folder);
        let state = self.lock();
        if !state.adma_dirs.contains(&folder) {
            return Err(MockError::NotFound(format!("ADMA folder {folder}")));
        }
        let prefix = if folder == "/" {
            "/".to_string()
        } else {
            format!("{folder}/")
        };
        let child = |p: &String| {
            p.strip_prefix(&prefix)
                .filter(|r| !r.is_empty() && !r.contains('/'))
                .map(str::to_string)
        };
        let mut table = Table::new(["name", "kind", "size"]);
        for name in state.adma_dirs.iter().filter_map(child) {
            table.push_row([name, "folder".to_string(), String::new()]);
        }
        for (path, file) in &state.adma_files {
            if let Some(name) = child(path) {
                table.push_row([name, "file".to_string(), file.content.len().to_string()]);
            }
        }
        Ok(table)
    }

    pub fn adma_entry_count(&self) -> usize {
        self.lock().adma_files.len()
    }

    pub fn realm5_fetch(&self, date: &Date) -> Result<Table, MockError> {
        self.lock()
            .realm5
            .get(date)
            .cloned()
            .ok_or_else(|| MockError::NotFound(format!("Realm5 data for {date}")))
    }

    pub fn plot(&self, table: &Table, metrics: &str) -> Result<PlotSpec, MockError> {
        PlotSpec::from_table(table, metrics).map_err(MockError::Invalid)
    }

    pub fn field_boundary(&self, name: &str) -> Result<GeoField, MockError> {
        let state = self.lock();
        let boundary = state
            .fields
            .get(name.trim())
            .ok_or_else(|| MockError::NotFound(format!("field {name}")))?;
        Ok(GeoField {
            name: name.trim().to_string(),
            boundary: Some(boundary.clone()),
        })
    }

    /// John Deere field operations. No behavior is modeled; the stub
    /// returns an empty operations table.
    pub fn deere_operations(&self, _date: &Date) -> Result<Table, MockError> {
        Ok(Table::new(["timestamp", "field", "operation"]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn adma_folders_list_children() {
        let (_d, s) = services();
        let root = s.adma_list("/").unwrap();
        let names = root.column("name").unwrap();
        assert!(names.contains(&"1".to_string()) && names.contains(&"Realm5".to_string()));
        assert_eq!(
            s.adma_list("/1").unwrap().rows,
            vec![vec![
                "readme.txt".to_string(),
                "file".into(),
                s.adma_download("/1/readme.txt").unwrap().size.to_string()
            ]]
        );
        assert!(matches!(s.adma_list("/nope"), Err(MockError::NotFound(_))));
    }

    fn services() -> (tempfile::TempDir, MockServices) {
        let dir = tempfile::tempdir().unwrap();
        fixtures::write_bundle(dir.path()).unwrap();
        let s = MockServices::load(dir.path()).unwrap();
        (dir, s)
    }

    #[test]
    fn search_finds_the_unique_soil_file() {
        let (_d, s) = services();
        assert_eq!(
            s.adma_search("soil").unwrap(),
            "/soil/soil_moisture_2024.csv"
        );
        assert!(matches!(s.adma_search("zzz"), Err(MockError::NotFound(_))));
        assert!(matches!(
            s.adma_search("csv"),
            Err(MockError::AmbiguousMatch { .. })
        ));
    }

    #[test]
    fn drive_download_returns_file_ref() {
        let (_d, s) = services();
        let f = s.drive_download("adma_test/test.txt").unwrap();
        assert_eq!(f.service, "google");
        assert_eq!(f.path, "adma_test/test.txt");
        assert_eq!(
            s.file_content(&f).unwrap(),
            fixtures::DRIVE_TEST_TXT.as_bytes()
        );
    }

    #[test]
    fn absent_realm5_date_is_not_found() {
        let (_d, s) = services();
        let d: Date = "1900/1/1".parse().unwrap();
        assert!(matches!(s.realm5_fetch(&d), Err(MockError::NotFound(_))));
        let d: Date = "2024/5/1".parse().unwrap();
        assert_eq!(s.realm5_fetch(&d).unwrap().columns, REALM5_COLUMNS);
    }

    #[test]
    fn upload_creates_exactly_one_entry_and_reads_do_not_mutate() {
        let (_d, s) = services();
        let before = s.adma_entry_count();
        s.adma_search("soil").unwrap();
        s.adma_metadata("/scripts/calculate_ndvi.py").unwrap();
        s.drive_list("/").unwrap();
        assert_eq!(s.adma_entry_count(), before);
        let f = s.drive_download("adma_test/test.txt").unwrap();
        assert_eq!(s.adma_upload(&f, "/").unwrap(), "/test.txt");
        assert_eq!(s.adma_entry_count(), before + 1);
        assert_eq!(
            s.adma_page_url("/test.txt").unwrap(),
            "http://adma.local/files/test.txt"
        );
        s.reset();
        assert_eq!(s.adma_entry_count(), before);
    }

    #[test]
    fn upload_rejects_unknown_folder_and_stale_handle() {
        let (_d, s) = services();
        let f = s.drive_download("adma_test/test.txt").unwrap();
        assert!(matches!(
            s.adma_upload(&f, "/nowhere"),
            Err(MockError::NotFound(_))
        ));
        let mut stale = f.clone();
        stale.sha256 = "00".into();
        assert!(matches!(
            s.adma_upload(&stale, "/"),
            Err(MockError::Invalid(_))
        ));
    }

    #[test]
    fn drive_listing_and_page_urls() {
        let (_d, s) = services();
        let root = s.drive_list("/").unwrap();
        assert!(root
            .rows
            .iter()
            .any(|r| r[0] == "adma_test" && r[1] == "folder"));
        assert_eq!(s.adma_page_url("/1").unwrap(), "http://adma.local/files/1");
        assert!(s.adma_page_url("/missing").is_err());
        let meta = s.adma_metadata("/scripts/calculate_ndvi.py").unwrap();
        assert_eq!(meta.columns, vec!["key", "value"]);
        assert!(meta.rows.iter().any(|r| r[0] == "language"));
    }

    #[test]
    fn missing_fixture_root_fails() {
        assert!(matches!(
            MockServices::load(Path::new("/definitely/not/here")),
            Err(MockError::Fixture(_))
        ));
    }

    #[test]
    fn csv_cells_stay_verbatim() {
        let t = parse_realm5_csv("timestamp,temperature,humidity,wind_speed\n00:00,12.50,81,3.0\n")
            .unwrap();
        assert_eq!(t.rows, vec![vec!["00:00", "12.50", "81", "3.0"]]);
        assert!(parse_realm5_csv("a,b\n1,2\n").is_err());
    }
}
