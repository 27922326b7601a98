//! JSON-Lines dataset files: one sample object per line.
//!
//! ```text
//! {"label":0|1, "aux":[...], "target":{"raw":[50 floats],"t_a":int,"cid3":int},
//!  "history":[{item} x up-to-L], "user":optional}
//! ```
//!
//! Items may carry explicit `t_m`/`t_w`/`t_d`/`t_h` indices; otherwise they
//! are derived from `t_a` (UTC). Histories shorter than `L` are left-padded
//! with the null item; longer histories are rejected. The writer emits only
//! the non-padded suffix, so write/load round-trips exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ctr_core::data::{Dataset, ItemRecord, Sample, TruthSidecar, RAW_DIM};
use ctr_core::time::{decompose_timestamp, TimeSignals};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {msg}")]
    Line { path: String, line: usize, msg: String },
}

/// Schema expectations for loading. `n_categories: None` infers the
/// vocabulary as `max(cid3) + 1` in a first pass.
#[derive(Debug, Clone)]
pub struct SchemaConfig {
    pub history_len: usize,
    pub n_categories: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct ItemWire {
    raw: Vec<f64>,
    t_a: i64,
    cid3: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_m: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_w: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_d: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_h: Option<u32>,
}

#[derive(Serialize, Deserialize)]
struct SampleWire {
    label: u8,
    aux: Vec<f64>,
    target: ItemWire,
    history: Vec<ItemWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user: Option<u64>,
}

fn io_err(path: &Path, source: std::io::Error) -> LoadError {
    LoadError::Io { path: path.display().to_string(), source }
}

fn line_err(path: &Path, line: usize, msg: impl Into<String>) -> LoadError {
    LoadError::Line { path: path.display().to_string(), line, msg: msg.into() }
}

fn item_from_wire(wire: ItemWire) -> Result<ItemRecord, String> {
    if wire.raw.len() != RAW_DIM {
        return Err(format!(
            "raw feature vector has {} entries, expected {RAW_DIM}",
            wire.raw.len()
        ));
    }
    let derived = decompose_timestamp(wire.t_a).map_err(|e| e.to_string())?;
    let time = TimeSignals {
        t_a: wire.t_a,
        t_m: wire.t_m.unwrap_or(derived.t_m),
        t_w: wire.t_w.unwrap_or(derived.t_w),
        t_d: wire.t_d.unwrap_or(derived.t_d),
        t_h: wire.t_h.unwrap_or(derived.t_h),
    };
    time.validate().map_err(|e| e.to_string())?;
    Ok(ItemRecord { raw: wire.raw, time, cid3: wire.cid3 })
}

fn item_to_wire(item: &ItemRecord) -> ItemWire {
    let derived = decompose_timestamp(item.time.t_a).ok();
    let explicit = |value: u32, derived: Option<u32>| {
        if derived == Some(value) {
            None
        } else {
            Some(value)
        }
    };
    ItemWire {
        raw: item.raw.clone(),
        t_a: item.time.t_a,
        cid3: item.cid3,
        t_m: explicit(item.time.t_m, derived.map(|d| d.t_m)),
        t_w: explicit(item.time.t_w, derived.map(|d| d.t_w)),
        t_d: explicit(item.time.t_d, derived.map(|d| d.t_d)),
        t_h: explicit(item.time.t_h, derived.map(|d| d.t_h)),
    }
}

/// Load and validate a dataset. Errors carry the 1-based line number.
pub fn load_jsonl(path: &Path, schema: &SchemaConfig) -> Result<Dataset, LoadError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);

    let mut wires: Vec<(usize, SampleWire)> = Vec::new();
    let mut max_cid = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: SampleWire = serde_json::from_str(&line)
            .map_err(|e| line_err(path, lineno, format!("malformed JSON: {e}")))?;
        if wire.label > 1 {
            return Err(line_err(path, lineno, format!("label {} is not binary", wire.label)));
        }
        max_cid = max_cid
            .max(wire.target.cid3)
            .max(wire.history.iter().map(|h| h.cid3).max().unwrap_or(0));
        wires.push((lineno, wire));
    }

    let n_categories = schema.n_categories.unwrap_or(max_cid + 1).max(2);
    let mut ds = Dataset::empty(n_categories);
    let mut aux_dim: Option<usize> = None;

    for (lineno, wire) in wires {
        let target = item_from_wire(wire.target).map_err(|m| line_err(path, lineno, m))?;
        if wire.history.len() > schema.history_len {
            return Err(line_err(
                path,
                lineno,
                format!(
                    "history has {} items, expected at most {}",
                    wire.history.len(),
                    schema.history_len
                ),
            ));
        }
        let n_padded = schema.history_len - wire.history.len();
        let mut history = vec![ItemRecord::null_at(target.time); n_padded];
        for item in wire.history {
            history.push(item_from_wire(item).map_err(|m| line_err(path, lineno, m))?);
        }
        match aux_dim {
            None => aux_dim = Some(wire.aux.len()),
            Some(d) if d != wire.aux.len() => {
                return Err(line_err(
                    path,
                    lineno,
                    format!("aux vector has {} entries, earlier lines had {d}", wire.aux.len()),
                ));
            }
            _ => {}
        }
        let sample = Sample {
            history,
            n_padded,
            target,
            aux: wire.aux,
            label: wire.label == 1,
            user: wire.user,
        };
        sample
            .validate(schema.history_len, n_categories)
            .map_err(|e| line_err(path, lineno, e.to_string()))?;
        if sample.label {
            ds.positives.push(sample);
        } else {
            ds.negatives.push(sample);
        }
    }
    Ok(ds)
}

/// Write a dataset (positives first, then negatives). Padded history
/// prefixes are dropped so loading reconstructs the same dataset.
pub fn write_jsonl(path: &Path, ds: &Dataset) -> Result<(), LoadError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    for s in ds.positives.iter().chain(&ds.negatives) {
        let wire = SampleWire {
            label: u8::from(s.label),
            aux: s.aux.clone(),
            target: item_to_wire(&s.target),
            history: s.history[s.n_padded..].iter().map(item_to_wire).collect(),
            user: s.user,
        };
        serde_json::to_writer(&mut out, &wire).map_err(|e| {
            io_err(path, std::io::Error::new(std::io::ErrorKind::Other, e))
        })?;
        out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize, Deserialize)]
struct TruthWire {
    logit: f64,
    logit_timeblind: f64,
}

/// Ground-truth logits aligned line-by-line with the dataset file.
pub fn write_truth_sidecar(path: &Path, truth: &TruthSidecar) -> Result<(), LoadError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let rows = truth
        .pos_full
        .iter()
        .zip(&truth.pos_timeblind)
        .chain(truth.neg_full.iter().zip(&truth.neg_timeblind));
    for (&logit, &logit_timeblind) in rows {
        serde_json::to_writer(&mut out, &TruthWire { logit, logit_timeblind })
            .map_err(|e| io_err(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
        out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctr_core::synth::{generate_synthetic, SyntheticConfig};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn roundtrip_reconstructs_the_dataset() {
        let cfg = SyntheticConfig {
            n_samples: 300,
            n_users: 10,
            n_items: 40,
            n_categories: 5,
            ctr: 0.1,
            horizon_days: 5,
            history_len: 3,
            periodic_amplitude: 0.5,
            drift_rate: 0.1,
            seed: 2,
        };
        let mut ds = generate_synthetic(&cfg).unwrap();
        ds.truth = None;
        let dir = tmp();
        let path = dir.path().join("data.jsonl");
        write_jsonl(&path, &ds).unwrap();
        let loaded = load_jsonl(
            &path,
            &SchemaConfig { history_len: 3, n_categories: Some(5) },
        )
        .unwrap();
        assert_eq!(ds, loaded);
    }

    #[test]
    fn padded_histories_roundtrip() {
        let cfg = SyntheticConfig {
            n_samples: 40,
            n_users: 5,
            n_items: 20,
            n_categories: 4,
            ctr: 0.2,
            horizon_days: 3,
            history_len: 4,
            periodic_amplitude: 0.0,
            drift_rate: 0.0,
            seed: 3,
        };
        let mut ds = generate_synthetic(&cfg).unwrap();
        ds.truth = None;
        // chop two history items off one sample and re-pad
        let s = &mut ds.negatives[0];
        s.history.drain(0..2);
        let t = s.target.time;
        s.history.insert(0, ItemRecord::null_at(t));
        s.history.insert(0, ItemRecord::null_at(t));
        s.n_padded = 2;

        let dir = tmp();
        let path = dir.path().join("padded.jsonl");
        write_jsonl(&path, &ds).unwrap();
        let loaded =
            load_jsonl(&path, &SchemaConfig { history_len: 4, n_categories: Some(4) }).unwrap();
        assert_eq!(ds, loaded);
        assert_eq!(loaded.negatives[0].n_padded, 2);
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let dir = tmp();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let ds =
            load_jsonl(&path, &SchemaConfig { history_len: 3, n_categories: Some(4) }).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.ctr(), None);
    }

    #[test]
    fn counting_gives_the_ctr() {
        let dir = tmp();
        let path = dir.path().join("ctr.jsonl");
        let mut lines = String::new();
        let item = r#"{"raw":[0.0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0],"t_a":1000,"cid3":1}"#;
        for i in 0..100 {
            let label = u8::from(i == 0);
            lines.push_str(&format!(
                r#"{{"label":{label},"aux":[0.5],"target":{item},"history":[{item}]}}"#
            ));
            lines.push('\n');
        }
        std::fs::write(&path, lines).unwrap();
        let ds =
            load_jsonl(&path, &SchemaConfig { history_len: 1, n_categories: None }).unwrap();
        assert_eq!(ds.ctr(), Some(0.01));
    }

    #[test]
    fn short_raw_vector_names_line_and_arity() {
        let dir = tmp();
        let path = dir.path().join("bad.jsonl");
        let raw49: Vec<String> = vec!["0".into(); 49];
        let item = format!(
            r#"{{"raw":[{}],"t_a":1000,"cid3":1}}"#,
            raw49.join(",")
        );
        std::fs::write(
            &path,
            format!(r#"{{"label":0,"aux":[0.1],"target":{item},"history":[]}}"#) + "\n",
        )
        .unwrap();
        let err = load_jsonl(&path, &SchemaConfig { history_len: 2, n_categories: None })
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("49") && msg.contains("50"), "{msg}");
    }

    #[test]
    fn out_of_range_cid_and_overlong_history_are_rejected() {
        let dir = tmp();
        let path = dir.path().join("cid.jsonl");
        let item = |cid: usize| {
            format!(
                r#"{{"raw":[{}],"t_a":1000,"cid3":{cid}}}"#,
                vec!["0"; 50].join(",")
            )
        };
        std::fs::write(
            &path,
            format!(
                r#"{{"label":1,"aux":[0.1],"target":{},"history":[{}]}}"#,
                item(9),
                item(1)
            ) + "\n",
        )
        .unwrap();
        let err = load_jsonl(
            &path,
            &SchemaConfig { history_len: 1, n_categories: Some(4) },
        )
        .unwrap_err();
        assert!(err.to_string().contains("cid3"), "{err}");

        std::fs::write(
            &path,
            format!(
                r#"{{"label":1,"aux":[0.1],"target":{},"history":[{},{}]}}"#,
                item(1),
                item(1),
                item(1)
            ) + "\n",
        )
        .unwrap();
        let err = load_jsonl(
            &path,
            &SchemaConfig { history_len: 1, n_categories: Some(4) },
        )
        .unwrap_err();
        assert!(err.to_string().contains("at most 1"), "{err}");
    }

    #[test]
    fn explicit_time_indices_override_derivation() {
        let dir = tmp();
        let path = dir.path().join("explicit.jsonl");
        let item = format!(
            r#"{{"raw":[{}],"t_a":0,"cid3":1,"t_h":7}}"#,
            vec!["0"; 50].join(",")
        );
        std::fs::write(
            &path,
            format!(r#"{{"label":0,"aux":[0.1],"target":{item},"history":[]}}"#) + "\n",
        )
        .unwrap();
        let ds = load_jsonl(&path, &SchemaConfig { history_len: 1, n_categories: None }).unwrap();
        let t = ds.negatives[0].target.time;
        assert_eq!(t.t_h, 7); // explicit override
        assert_eq!(t.t_d, 3); // derived Thursday
    }
}
