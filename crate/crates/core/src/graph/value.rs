//! Typed payloads carried by graph variables.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Closed set of payload kinds a variable may hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    Text,
    Path,
    Url,
    Date,
    FileRef,
    Table,
    Credential,
    PageRef,
    GeoField,
}

impl SemanticType {
    pub const ALL: [SemanticType; 9] = [
        SemanticType::Text,
        SemanticType::Path,
        SemanticType::Url,
        SemanticType::Date,
        SemanticType::FileRef,
        SemanticType::Table,
        SemanticType::Credential,
        SemanticType::PageRef,
        SemanticType::GeoField,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticType::Text => "text",
            SemanticType::Path => "path",
            SemanticType::Url => "url",
            SemanticType::Date => "date",
            SemanticType::FileRef => "file_ref",
            SemanticType::Table => "table",
            SemanticType::Credential => "credential",
            SemanticType::PageRef => "page_ref",
            SemanticType::GeoField => "geo_field",
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Error produced when raw text cannot be coerced into a semantic type.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot read {raw:?} as {expected}: {reason}")]
pub struct CoerceError {
    pub expected: SemanticType,
    pub raw: String,
    pub reason: String,
}

/// A calendar date. Displays as `2024/5/1`, the form users type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date(pub NaiveDate);

impl Date {
    pub fn ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day).map(Date)
    }

    /// `YYYY-MM-DD`, used for fixture file names.
    pub fn iso(&self) -> String {
        self.0.format("%Y-%m-%d").to_string()
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y/%-m/%-d"))
    }
}

impl FromStr for Date {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parts: Vec<&str> = s.split(['/', '-']).collect();
        if parts.len() != 3
            || parts
                .iter()
                .any(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()))
        {
            return Err("expected year/month/day".into());
        }
        let year: i32 = parts[0].parse().map_err(|_| "bad year".to_string())?;
        let month: u32 = parts[1].parse().map_err(|_| "bad month".to_string())?;
        let day: u32 = parts[2].parse().map_err(|_| "bad day".to_string())?;
        if parts[0].len() != 4 {
            return Err("year must have four digits".into());
        }
        Date::ymd(year, month, day).ok_or_else(|| "no such calendar day".to_string())
    }
}

impl Serialize for Date {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Date {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Handle to a file held by one of the external services.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FileRef {
    pub service: String,
    pub path: String,
    pub size: u64,
    pub sha256: String,
}

impl FileRef {
    pub fn for_content(service: &str, path: &str, content: &[u8]) -> Self {
        FileRef {
            service: service.to_string(),
            path: path.to_string(),
            size: content.len() as u64,
            sha256: hex::encode(Sha256::digest(content)),
        }
    }

    pub fn file_name(&self) -> &str {
        self.path.rsplit('/').next().unwrap_or(&self.path)
    }
}

/// Rectangular table of verbatim cell strings.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<C: Into<String>>(columns: impl IntoIterator<Item = C>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row<C: Into<String>>(&mut self, row: impl IntoIterator<Item = C>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Every value of one column, in row order.
    pub fn column(&self, name: &str) -> Option<Vec<String>> {
        let idx = self.column_index(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r.get(idx).cloned().unwrap_or_default())
                .collect(),
        )
    }
}

/// A named field, optionally with its boundary polygon as (lon, lat) pairs.
#[derive(Debug, Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct GeoField {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Vec<[f64; 2]>>,
}

/// A value held by a bound variable. The variant always agrees with the
/// variable's [`SemanticType`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    Text(String),
    Path(String),
    Url(String),
    Date(Date),
    FileRef(FileRef),
    Table(Table),
    /// Marker that a service session is authenticated. Never carries the token.
    Credential {
        service: String,
    },
    PageRef(String),
    GeoField(GeoField),
}

impl Value {
    pub fn semantic_type(&self) -> SemanticType {
        match self {
            Value::Text(_) => SemanticType::Text,
            Value::Path(_) => SemanticType::Path,
            Value::Url(_) => SemanticType::Url,
            Value::Date(_) => SemanticType::Date,
            Value::FileRef(_) => SemanticType::FileRef,
            Value::Table(_) => SemanticType::Table,
            Value::Credential { .. } => SemanticType::Credential,
            Value::PageRef(_) => SemanticType::PageRef,
            Value::GeoField(_) => SemanticType::GeoField,
        }
    }

    /// Reads raw user or agent text as a payload of the given type.
    ///
    /// File handles, tables and credentials only ever come from tools, so
    /// they are never coerced from text.
    pub fn coerce(ty: SemanticType, raw: &str) -> Result<Value, CoerceError> {
        let err = |reason: &str| CoerceError {
            expected: ty,
            raw: raw.to_string(),
            reason: reason.to_string(),
        };
        let text = raw.trim();
        if text.is_empty() {
            return Err(err("empty value"));
        }
        match ty {
            SemanticType::Text => Ok(Value::Text(text.to_string())),
            SemanticType::Path => Ok(Value::Path(text.to_string())),
            SemanticType::Url => {
                if text.starts_with("http://") || text.starts_with("https://") {
                    Ok(Value::Url(text.to_string()))
                } else {
                    Err(err("url must start with http:// or https://"))
                }
            }
            SemanticType::Date => text.parse().map(Value::Date).map_err(|e: String| err(&e)),
            SemanticType::PageRef => Ok(Value::PageRef(text.to_string())),
            SemanticType::GeoField => Ok(Value::GeoField(GeoField {
                name: text.to_string(),
                boundary: None,
            })),
            SemanticType::FileRef | SemanticType::Table | SemanticType::Credential => {
                Err(err("only tools produce this type"))
            }
        }
    }

    /// Scalar text form for string-like payloads.
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) | Value::Path(s) | Value::Url(s) | Value::PageRef(s) => Some(s),
            Value::GeoField(g) => Some(&g.name),
            _ => None,
        }
    }

    /// Short single-line rendering for agent prompts.
    pub fn preview(&self) -> String {
        const MAX: usize = 60;
        let full = match self {
            Value::Text(s) | Value::Path(s) | Value::Url(s) | Value::PageRef(s) => s.clone(),
            Value::Date(d) => d.to_string(),
            Value::FileRef(f) => format!("{}:{} ({} bytes)", f.service, f.path, f.size),
            Value::Table(t) => format!(
                "table {}x{} [{}]",
                t.rows.len(),
                t.columns.len(),
                t.columns.join(",")
            ),
            Value::Credential { service } => format!("authenticated:{service}"),
            Value::GeoField(g) => match &g.boundary {
                Some(b) => format!("{} ({} vertices)", g.name, b.len()),
                None => g.name.clone(),
            },
        };
        let single = full.replace(['\n', '\r'], " ");
        if single.chars().count() > MAX {
            let cut: String = single.chars().take(MAX).collect();
            format!("{cut}...")
        } else {
            single
        }
    }
}

/// One plotted series: values are the table cells, unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<String>,
}

/// Declarative chart description consumed by front-ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub x_label: String,
    pub x: Vec<String>,
    pub series: Vec<Series>,
}

/// Splits a metric phrase such as `temperature, humidity and wind speed`.
pub fn parse_metrics(phrase: &str) -> Vec<String> {
    phrase
        .split(',')
        .flat_map(|part| part.split(" and "))
        .map(|m| {
            m.trim()
                .trim_start_matches("and ")
                .trim()
                .to_ascii_lowercase()
                .replace(' ', "_")
        })
        .filter(|m| !m.is_empty())
        .collect()
}

impl PlotSpec {
    /// Builds a plot of the named metrics against the table's first column.
    pub fn from_table(table: &Table, metrics: &str) -> Result<PlotSpec, String> {
        let x_label = table
            .columns
            .first()
            .cloned()
            .ok_or("table has no columns")?;
        let x = table.column(&x_label).unwrap_or_default();
        let names = parse_metrics(metrics);
        if names.is_empty() {
            return Err("no metrics requested".into());
        }
        let series = names
            .into_iter()
            .map(|name| match table.column(&name) {
                Some(values) => Ok(Series { name, values }),
                None => Err(format!("table has no column {name:?}")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PlotSpec { x_label, x, series })
    }
}
