use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, IdMaps, Sample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which columns carry the ids. Every other column is a feature, in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub label: String,
    pub subject: String,
    /// Files without a session column are treated as a single session.
    pub session: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label: "label".into(),
            subject: "subject".into(),
            session: Some("session".into()),
        }
    }
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset<T>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

/// Parses CSV text. Lines starting with `#` are comments.
pub fn read_csv<T: Scalar, R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, msg: e.to_string() })?
        .clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { row: 0, msg: format!("missing column `{name}`") })
    };
    let label_col = col(&schema.label)?;
    let subject_col = col(&schema.subject)?;
    let session_col = schema.session.as_deref().map(col).transpose()?;
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != label_col && c != subject_col && Some(c) != session_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Dimension("no feature columns".into()));
    }

    struct Raw<T> {
        features: Vec<T>,
        label: i64,
        subject: i64,
        session: i64,
    }
    let mut raws: Vec<Raw<T>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::Dimension(format!(
                "row {row} has {} columns, header has {} ({} features expected)",
                rec.len(),
                header.len(),
                feature_cols.len()
            )));
        }
        let int = |c: usize| {
            rec[c].parse::<i64>().map_err(|e| Error::Parse {
                row,
                msg: format!("column `{}`: {e}", &header[c]),
            })
        };
        let mut features = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let v: f64 = rec[c].parse().map_err(|e| Error::Parse {
                row,
                msg: format!("column `{}`: {e}", &header[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "row {row} column `{}` is not finite",
                    &header[c]
                )));
            }
            features.push(T::of(v));
        }
        raws.push(Raw {
            features,
            label: int(label_col)?,
            subject: int(subject_col)?,
            session: session_col.map(int).transpose()?.unwrap_or(0),
        });
    }

    let dense = |vals: Vec<i64>| -> (Vec<i64>, BTreeMap<i64, usize>) {
        let mut uniq = vals;
        uniq.sort_unstable();
        uniq.dedup();
        let map = uniq.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        (uniq, map)
    };
    let (labels, label_map) = dense(raws.iter().map(|r| r.label).collect());
    let (subjects, subject_map) = dense(raws.iter().map(|r| r.subject).collect());
    let (sessions, session_map) = dense(raws.iter().map(|r| r.session).collect());
    let samples = raws
        .into_iter()
        .map(|r| Sample {
            features: r.features,
            class_label: label_map[&r.label],
            subject_id: subject_map[&r.subject],
            session_id: session_map[&r.session],
        })
        .collect();
    let ids = IdMaps {
        labels,
        subjects,
        sessions,
    };
    Dataset::with_id_maps(samples, ids.labels.len(), ids.subjects.len(), ids.sessions.len(), ids)
}

/// Writes `f0..f{F-1},label,subject,session` with the original id values.
/// `comments` become leading `# ` lines.
pub fn write_csv<T: Scalar, W: Write>(ds: &Dataset<T>, out: W, comments: &[String]) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    let mut header: Vec<String> = (0..ds.n_features()).map(|i| format!("f{i}")).collect();
    header.extend(["label".to_string(), "subject".into(), "session".into()]);
    writeln!(out, "{}", header.join(","))?;
    let ids = ds.id_maps();
    let mut line = String::new();
    for s in ds.samples() {
        line.clear();
        for v in &s.features {
            // shortest round-trip representation
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&format!(
            "{},{},{}",
            ids.labels[s.class_label], ids.subjects[s.subject_id], ids.sessions[s.session_id]
        ));
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
