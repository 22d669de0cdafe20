//! Data & tool registry: file-backed descriptors, relevance retrieval and
//! per-task graph construction.
//!
//! On disk every entry is one JSON document:
//!
//! ```text
//! tools/<id>.json      tool descriptor plus its variables, tags and doc
//! data/<id>.json       data record
//! sessions/<id>.json   session record
//! ```

mod scoring;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

pub use scoring::{tokenize, LexicalScorer, RelevanceScorer};

use crate::graph::{
    is_valid_id, validate_graph, GraphError, MetaProgramGraph, SemanticType, ToolKind, ToolSpec,
    VariableSpec,
};

/// Tool descriptor as stored: the graph tool object plus the variables it
/// touches and retrieval metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolEntry {
    #[serde(flatten)]
    pub spec: ToolSpec,
    #[serde(default)]
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub doc: String,
}

/// A dataset known to the copilot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRecord {
    pub id: String,
    pub name: String,
    pub semantic_type: SemanticType,
    /// Where the data lives, e.g. `adma:/Realm5`.
    pub location: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub doc: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum RegistryEntry {
    Tool(ToolEntry),
    Data(DataRecord),
}

impl RegistryEntry {
    pub fn id(&self) -> &str {
        match self {
            RegistryEntry::Tool(t) => &t.spec.id,
            RegistryEntry::Data(d) => &d.id,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            RegistryEntry::Tool(t) => &t.spec.name,
            RegistryEntry::Data(d) => &d.name,
        }
    }

    pub fn tags(&self) -> &[String] {
        match self {
            RegistryEntry::Tool(t) => &t.tags,
            RegistryEntry::Data(d) => &d.tags,
        }
    }

    pub fn doc(&self) -> &str {
        match self {
            RegistryEntry::Tool(t) => &t.doc,
            RegistryEntry::Data(d) => &d.doc,
        }
    }

    /// The entry node and output sinks go into every graph.
    pub fn is_mandatory(&self) -> bool {
        match self {
            RegistryEntry::Tool(t) => t.spec.kind == ToolKind::UserInput || t.spec.is_sink(),
            RegistryEntry::Data(_) => false,
        }
    }

    /// Text the scorer sees: name, tags and doc.
    pub fn search_text(&self) -> String {
        format!("{} {} {}", self.name(), self.tags().join(" "), self.doc())
    }

    fn dir(&self) -> &'static str {
        match self {
            RegistryEntry::Tool(_) => "tools",
            RegistryEntry::Data(_) => "data",
        }
    }

    fn to_document(&self) -> String {
        let mut text = match self {
            RegistryEntry::Tool(t) => serde_json::to_string_pretty(t),
            RegistryEntry::Data(d) => serde_json::to_string_pretty(d),
        }
        .expect("registry entries serialize");
        text.push('\n');
        text
    }
}

/// One instruction and what came of it. Never holds credential material.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub instructions: Vec<String>,
    pub outcomes: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("no entry {0:?}")]
    NotFound(String),
    #[error("invalid id {0:?}")]
    InvalidId(String),
    #[error("registry is empty")]
    Empty,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RegistryError {
    RegistryError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// An entry with its retrieval score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranked {
    pub entry: RegistryEntry,
    pub score: usize,
}

#[derive(Debug, Default)]
struct Inner {
    entries: BTreeMap<String, RegistryEntry>,
    sessions: BTreeMap<String, SessionRecord>,
}

/// Registry shared across sessions. Writes go through an exclusive lock
/// and, when the registry is directory-backed, straight to disk.
pub struct Registry {
    inner: RwLock<Inner>,
    root: Option<PathBuf>,
    scorer: Arc<dyn RelevanceScorer>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("root", &self.root)
            .field("entries", &self.read().entries.len())
            .finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::in_memory()
    }
}

fn read_json_dir<T: for<'de> Deserialize<'de>>(dir: &Path) -> Result<Vec<T>, RegistryError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            serde_json::from_str(&text).map_err(|e| io_err(&p, e))
        })
        .collect()
}

fn write_atomic(path: &Path, text: &str) -> Result<(), RegistryError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

impl Registry {
    pub fn in_memory() -> Self {
        Registry {
            inner: RwLock::new(Inner::default()),
            root: None,
            scorer: Arc::new(LexicalScorer),
        }
    }

    /// Opens (or creates) a registry directory and loads every entry.
    pub fn open(root: &Path) -> Result<Self, RegistryError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let mut inner = Inner::default();
        let tools: Vec<ToolEntry> = read_json_dir(&root.join("tools"))?;
        let data: Vec<DataRecord> = read_json_dir(&root.join("data"))?;
        for entry in tools
            .into_iter()
            .map(RegistryEntry::Tool)
            .chain(data.into_iter().map(RegistryEntry::Data))
        {
            let id = entry.id().to_string();
            if inner.entries.insert(id.clone(), entry).is_some() {
                return Err(RegistryError::DuplicateId(id));
            }
        }
        for s in read_json_dir::<SessionRecord>(&root.join("sessions"))? {
            inner.sessions.insert(s.id.clone(), s);
        }
        Ok(Registry {
            inner: RwLock::new(inner),
            root: Some(root.to_path_buf()),
            scorer: Arc::new(LexicalScorer),
        })
    }

    pub fn with_scorer(mut self, scorer: Arc<dyn RelevanceScorer>) -> Self {
        self.scorer = scorer;
        self
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|p| p.into_inner())
    }

    fn entry_path(&self, entry: &RegistryEntry) -> Option<PathBuf> {
        self.root
            .as_ref()
            .map(|r| r.join(entry.dir()).join(format!("{}.json", entry.id())))
    }

    pub fn register(&self, entry: RegistryEntry) -> Result<(), RegistryError> {
        if !is_valid_id(entry.id()) {
            return Err(RegistryError::InvalidId(entry.id().to_string()));
        }
        let mut inner = self.write();
        if inner.entries.contains_key(entry.id()) {
            return Err(RegistryError::DuplicateId(entry.id().to_string()));
        }
        if let Some(path) = self.entry_path(&entry) {
            write_atomic(&path, &entry.to_document())?;
        }
        inner.entries.insert(entry.id().to_string(), entry);
        Ok(())
    }

    pub fn register_tool(&self, entry: ToolEntry) -> Result<(), RegistryError> {
        self.register(RegistryEntry::Tool(entry))
    }

    pub fn lookup(&self, id: &str) -> Result<RegistryEntry, RegistryError> {
        self.read()
            .entries
            .get(id)
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(id.to_string()))
    }

    pub fn remove(&self, id: &str) -> Result<RegistryEntry, RegistryError> {
        let mut inner = self.write();
        let entry = inner
            .entries
            .get(id)
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(id.to_string()))?;
        if let Some(path) = self.entry_path(&entry) {
            std::fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
        }
        inner.entries.remove(id);
        Ok(entry)
    }

    pub fn len(&self) -> usize {
        self.read().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every entry, sorted by id.
    pub fn entries(&self) -> Vec<RegistryEntry> {
        self.read().entries.values().cloned().collect()
    }

    /// Serialized documents keyed by relative path, as they are on disk.
    pub fn documents(&self) -> BTreeMap<String, String> {
        let inner = self.read();
        let mut docs: BTreeMap<String, String> = inner
            .entries
            .values()
            .map(|e| (format!("{}/{}.json", e.dir(), e.id()), e.to_document()))
            .collect();
        for s in inner.sessions.values() {
            docs.insert(format!("sessions/{}.json", s.id), session_document(s));
        }
        docs
    }

    /// Writes every entry under `root`.
    pub fn save_to(&self, root: &Path) -> Result<(), RegistryError> {
        for (rel, text) in self.documents() {
            write_atomic(&root.join(rel), &text)?;
        }
        Ok(())
    }

    pub fn save_session(&self, record: SessionRecord) -> Result<(), RegistryError> {
        if !is_valid_id(&record.id.replace('-', "_")) {
            return Err(RegistryError::InvalidId(record.id));
        }
        if let Some(root) = &self.root {
            write_atomic(
                &root.join("sessions").join(format!("{}.json", record.id)),
                &session_document(&record),
            )?;
        }
        self.write().sessions.insert(record.id.clone(), record);
        Ok(())
    }

    pub fn session(&self, id: &str) -> Option<SessionRecord> {
        self.read().sessions.get(id).cloned()
    }

    /// Top `k` entries with a positive score, plus every mandatory entry.
    /// Ordered by score descending, then id ascending.
    pub fn retrieve_relevant(&self, task: &str, k: usize) -> Vec<Ranked> {
        let snapshot = self.entries();
        rank(self.scorer.as_ref(), task, snapshot, k)
    }

    /// Tool entries only, ranked as in [`Registry::retrieve_relevant`].
    pub fn retrieve_tools(&self, task: &str, k: usize) -> Vec<Ranked> {
        let snapshot = self
            .entries()
            .into_iter()
            .filter(|e| matches!(e, RegistryEntry::Tool(_)))
            .collect();
        rank(self.scorer.as_ref(), task, snapshot, k)
    }

    /// Merges the retrieved tools and their variables into a graph.
    /// Identical variable declarations collapse; conflicting ones are kept
    /// so validation rejects the graph.
    pub fn build_graph_for_task(
        &self,
        task: &str,
        k: usize,
    ) -> Result<MetaProgramGraph, RegistryError> {
        if self.is_empty() {
            return Err(RegistryError::Empty);
        }
        let mut tools = Vec::new();
        let mut variables: Vec<VariableSpec> = Vec::new();
        for ranked in self.retrieve_tools(task, k) {
            let RegistryEntry::Tool(t) = ranked.entry else {
                continue;
            };
            for v in t.variables {
                if !variables.contains(&v) {
                    variables.push(v);
                }
            }
            tools.push(t.spec);
        }
        let graph = MetaProgramGraph::new(variables, tools);
        let report = validate_graph(&graph);
        if report.is_empty() {
            Ok(graph)
        } else {
            Err(GraphError::Invalid(report).into())
        }
    }
}

fn session_document(s: &SessionRecord) -> String {
    let mut text = serde_json::to_string_pretty(s).expect("session records serialize");
    text.push('\n');
    text
}

fn rank(
    scorer: &dyn RelevanceScorer,
    task: &str,
    entries: Vec<RegistryEntry>,
    k: usize,
) -> Vec<Ranked> {
    let (mandatory, optional): (Vec<_>, Vec<_>) = entries
        .into_iter()
        .map(|entry| Ranked {
            score: scorer.score(task, &entry),
            entry,
        })
        .partition(|r| r.entry.is_mandatory());
    let order = |a: &Ranked, b: &Ranked| {
        b.score
            .cmp(&a.score)
            .then_with(|| a.entry.id().cmp(b.entry.id()))
    };
    let mut picked: Vec<Ranked> = optional.into_iter().filter(|r| r.score > 0).collect();
    picked.sort_by(order);
    picked.truncate(k);
    picked.extend(mandatory);
    picked.sort_by(order);
    picked
}

/// Ids of the ranked entries, in order.
pub fn ranked_ids(ranked: &[Ranked]) -> Vec<&str> {
    ranked.iter().map(|r| r.entry.id()).collect()
}

/// Distinct tool ids in a ranking.
pub fn ranked_tool_ids(ranked: &[Ranked]) -> BTreeSet<String> {
    ranked
        .iter()
        .filter(|r| matches!(r.entry, RegistryEntry::Tool(_)))
        .map(|r| r.entry.id().to_string())
        .collect()
}
