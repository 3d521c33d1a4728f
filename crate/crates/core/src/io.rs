//! Line-delimited JSON dataset files.
//!
//! The first non-blank line is a header:
//!
//! ```text
//! {"format":"tvprior-dataset","version":1,"task":"gaussian","timesteps":10,"features":30,"vocab":0}
//! ```
//!
//! optionally carrying `feature_names`, `words` and per-timestep background
//! log-frequencies `theta`. Every following line is one instance:
//!
//! ```text
//! {"t":3,"x":[[0,1.25],[7,-0.5]],"y":0.8}
//! {"t":3,"x":[[2,1.0]],"tokens":[4,4,9,-1]}
//! ```
//!
//! Timesteps are 1-based. A negative token marks an out-of-vocabulary word
//! and is dropped on ingest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Instance, Response, Task, TimedDataset};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "tvprior-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    task: Task,
    timesteps: usize,
    features: usize,
    #[serde(default)]
    vocab: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    words: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    t: i64,
    #[serde(default)]
    x: Vec<(i64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<i64>>,
}

fn parse_err(line: usize, e: impl std::fmt::Display) -> Error {
    Error::Parse { line, message: e.to_string() }
}

fn invalid(line: usize, message: impl Into<String>) -> Error {
    Error::Validation { line, message: message.into() }
}

fn header_into_dataset(h: Header, line: usize) -> Result<TimedDataset> {
    if h.format != FORMAT_TAG {
        return Err(invalid(line, format!("unknown format tag {:?}", h.format)));
    }
    if h.version != FORMAT_VERSION {
        return Err(invalid(line, format!("unsupported version {}", h.version)));
    }
    let mut data =
        TimedDataset::new(h.task, h.timesteps, h.features, h.vocab).map_err(|e| invalid(line, e.to_string()))?;
    if let Some(names) = &h.feature_names {
        if names.len() != h.features {
            return Err(invalid(line, format!("{} feature names for {} features", names.len(), h.features)));
        }
    }
    if let Some(words) = &h.words {
        if words.len() != h.vocab {
            return Err(invalid(line, format!("{} words for a vocabulary of {}", words.len(), h.vocab)));
        }
    }
    if let Some(theta) = &h.theta {
        if h.task != Task::Sage
            || theta.len() != h.timesteps
            || theta.iter().any(|row| row.len() != h.vocab || row.iter().any(|v| !v.is_finite()))
        {
            return Err(invalid(line, "theta must hold one finite length-vocab row per timestep"));
        }
    }
    data.feature_names = h.feature_names;
    data.words = h.words;
    data.theta = h.theta;
    Ok(data)
}

fn record_into_instance(r: Record, data: &TimedDataset, line: usize) -> Result<Instance> {
    if r.t < 1 || r.t as u64 > data.timesteps as u64 {
        return Err(invalid(line, format!("timestep {} outside 1..={}", r.t, data.timesteps)));
    }
    let mut features = Vec::with_capacity(r.x.len());
    for (i, v) in r.x {
        if i < 0 {
            return Err(invalid(line, format!("negative feature index {i}")));
        }
        features.push((i as usize, v));
    }
    features.sort_by_key(|&(i, _)| i);
    if features.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(invalid(line, "repeated feature index"));
    }
    let response = match (r.y, r.tokens) {
        (Some(y), None) => Response::Real(y),
        (None, Some(toks)) => {
            let mut kept = Vec::with_capacity(toks.len());
            for w in toks {
                if w < 0 {
                    continue;
                }
                if w > u32::MAX as i64 {
                    return Err(invalid(line, format!("token index {w} out of range")));
                }
                kept.push(w as u32);
            }
            Response::Tokens(kept)
        }
        _ => return Err(parse_err(line, "record needs exactly one of \"y\" or \"tokens\"")),
    };
    let inst = Instance { t: r.t as usize, features, response };
    data.check_instance(&inst).map_err(|m| invalid(line, m))?;
    Ok(inst)
}

/// Reads a dataset from any line-oriented source. Line numbers in errors are 1-based.
pub fn read_dataset<R: Read>(reader: R) -> Result<TimedDataset> {
    let mut data: Option<TimedDataset> = None;
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match &mut data {
            None => {
                let h: Header = serde_json::from_str(text).map_err(|e| parse_err(line_no, e))?;
                data = Some(header_into_dataset(h, line_no)?);
            }
            Some(d) => {
                let r: Record = serde_json::from_str(text).map_err(|e| parse_err(line_no, e))?;
                let inst = record_into_instance(r, d, line_no)?;
                d.instances.push(inst);
            }
        }
    }
    match data {
        Some(d) if !d.is_empty() => Ok(d),
        _ => Err(Error::EmptyDataset),
    }
}

/// Reads a dataset file.
pub fn ingest(path: impl AsRef<Path>) -> Result<TimedDataset> {
    read_dataset(File::open(path)?)
}

/// Writes `data` in the format read by [`read_dataset`].
pub fn write_dataset<W: Write>(data: &TimedDataset, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let header = Header {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        task: data.task,
        timesteps: data.timesteps,
        features: data.num_features,
        vocab: data.vocab,
        feature_names: data.feature_names.clone(),
        words: data.words.clone(),
        theta: data.theta.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for inst in &data.instances {
        let (y, tokens) = match &inst.response {
            Response::Real(y) => (Some(*y), None),
            Response::Tokens(t) => (None, Some(t.iter().map(|&w| w as i64).collect())),
        };
        let record = Record {
            t: inst.t as i64,
            x: inst.features.iter().map(|&(i, v)| (i as i64, v)).collect(),
            y,
            tokens,
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `data` to a file, replacing it.
pub fn save(data: &TimedDataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(data, File::create(path)?)
}
