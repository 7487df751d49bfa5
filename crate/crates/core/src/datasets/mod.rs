//! Benchmark ingestion into canonical [`InstanceRecord`]s, and validation.
//!
//! Canonical JSONL, one object per line:
//!
//! ```text
//! {"id","image":{"kind","value"},"family","question","choices":[...],"gold_choice":int|null,"gold_direct_answers":[...],"split"}
//! ```

mod adapters;
mod canonical;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use canonical::{parse_canonical_jsonl, read_canonical_jsonl, to_canonical_jsonl, write_canonical_jsonl};
pub use validate::{validate, ValidationReport, Violation};

use crate::error::{Error, Result};
use crate::types::{InstanceRecord, Split, TaskFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Aokvqa,
    Okvqa,
    Vqav2,
    Esnlive,
    Vsr,
    Gqa,
    Clevr,
    Custom,
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum serializes");
        f.write_str(s.as_str().expect("serialized as string"))
    }
}

/// Where a benchmark lives and what it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: DatasetName,
    pub family: TaskFamily,
    /// Split files. `.jsonl` is read line by line; `.json` may hold an
    /// array, a `{"questions": [...]}` object, or an object keyed by id.
    pub paths: BTreeMap<Split, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_root: Option<String>,
}

impl DatasetManifest {
    /// Resolve relative split paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in self.paths.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Loaded, validated splits. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: DatasetName,
    pub family: TaskFamily,
    pub splits: BTreeMap<Split, Vec<InstanceRecord>>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[InstanceRecord] {
        self.splits.get(&s).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.splits.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    /// Rows dropped for failing validation.
    pub rejected: ValidationReport,
    /// Non-blank rows read per split, before rejection.
    pub rows_read: BTreeMap<Split, usize>,
}

/// Load every split; any invariant violation fails with the full report.
pub fn ingest(manifest: &DatasetManifest) -> Result<Dataset> {
    let outcome = ingest_lenient(manifest)?;
    if outcome.rejected.is_empty() {
        Ok(outcome.dataset)
    } else {
        Err(Error::Validation(outcome.rejected))
    }
}

/// Load every split, dropping records that fail validation and reporting them.
/// Unparseable input still fails outright.
pub fn ingest_lenient(manifest: &DatasetManifest) -> Result<IngestOutcome> {
    let mut splits = BTreeMap::new();
    let mut rejected = ValidationReport::default();
    let mut rows_read = BTreeMap::new();
    for (&split, path) in &manifest.paths {
        if !path.exists() {
            return Err(Error::Parse {
                path: path.clone(),
                line: 0,
                message: format!("{split} split file does not exist"),
            });
        }
        let records = load_split(manifest, split, path)?;
        rows_read.insert(split, records.len());

        let mut report = validate(&records);
        for (i, r) in records.iter().enumerate() {
            if r.family != manifest.family {
                report.push(
                    &r.id,
                    i + 1,
                    format!("family {} does not match manifest {}", r.family, manifest.family),
                );
            }
            if r.split != split {
                report.push(&r.id, i + 1, format!("record split {} listed under {split}", r.split));
            }
        }
        let bad_rows: std::collections::BTreeSet<usize> = report.violations.iter().map(|v| v.row).collect();
        for v in &mut report.violations {
            v.message = format!("{}: {}", path.display(), v.message);
        }
        rejected.extend(report);
        let kept = records
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !bad_rows.contains(&(i + 1)))
            .map(|(_, r)| r)
            .collect();
        splits.insert(split, kept);
    }
    Ok(IngestOutcome {
        dataset: Dataset {
            name: manifest.name,
            family: manifest.family,
            splits,
        },
        rejected,
        rows_read,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Rows of a split file as (1-based line or position, object key, value).
fn read_rows(path: &Path) -> Result<Vec<(usize, Option<String>, Value)>> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(path, 0, e.to_string()))?;
    let is_jsonl = path.extension().and_then(|e| e.to_str()) == Some("jsonl");
    if is_jsonl {
        return text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map(|v| (i + 1, None, v))
                    .map_err(|e| parse_err(path, i + 1, e.to_string()))
            })
            .collect();
    }
    let doc: Value = serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    let indexed = |items: Vec<Value>| items.into_iter().enumerate().map(|(i, v)| (i + 1, None, v)).collect();
    Ok(match doc {
        Value::Array(items) => indexed(items),
        Value::Object(mut obj) => match obj.remove("questions") {
            Some(Value::Array(items)) => indexed(items),
            Some(_) => return Err(parse_err(path, 0, "`questions` should be a list")),
            // Keyed objects are re-read in file order; `Value` maps sort keys.
            None => serde_json::from_str::<OrderedEntries>(&text)
                .map_err(|e| parse_err(path, e.line(), e.to_string()))?
                .0
                .into_iter()
                .enumerate()
                .map(|(i, (k, v))| (i + 1, Some(k), v))
                .collect(),
        },
        _ => return Err(parse_err(path, 0, "expected a JSON array or object")),
    })
}

struct OrderedEntries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for OrderedEntries {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct Visitor;
        impl<'de> serde::de::Visitor<'de> for Visitor {
            type Value = OrderedEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<OrderedEntries, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry::<String, Value>()? {
                    out.push(entry);
                }
                Ok(OrderedEntries(out))
            }
        }
        d.deserialize_map(Visitor)
    }
}

fn load_split(manifest: &DatasetManifest, split: Split, path: &Path) -> Result<Vec<InstanceRecord>> {
    let rows = read_rows(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (pos, (line, key, v)) in rows.into_iter().enumerate() {
        let ctx = adapters::RowContext {
            name: manifest.name,
            family: manifest.family,
            split,
            image_root: manifest.image_root.as_deref(),
            key: key.as_deref(),
            row: pos + 1,
        };
        let mut rec = adapters::convert(&v, &ctx).map_err(|m| parse_err(path, line, m))?;
        if let Some(fixed) = rec.family.fixed_choices() {
            if rec.choices.is_empty() {
                rec.choices = fixed.iter().map(|s| s.to_string()).collect();
            }
        }
        out.push(rec);
    }
    Ok(out)
}
