//! On-disk corpus layout.
//!
//! ```text
//! <dir>/items.jsonl        {"item_id": .., "category_id": .., "features": {"visual": 0, ..}}
//! <dir>/pairs.tsv          head_id \t tail_id \t split   (train | val | test)
//! <dir>/<modality>.tnfc    feature matrix
//! ```
//!
//! Feature file (little-endian):
//! - magic: `TNFC`
//! - version: u32 (= 1)
//! - rows: u64
//! - dim: u32
//! - body: rows * dim f32, row-major

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Corpus, FeatureTable, Item, PairRecord, Split};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"TNFC";
pub const FEATURE_VERSION: u32 = 1;
pub const ITEMS_FILE: &str = "items.jsonl";
pub const PAIRS_FILE: &str = "pairs.tsv";
const PAIRS_HEADER: &str = "head_id\ttail_id\tsplit";
const HEADER_LEN: usize = 4 + 4 + 8 + 4;

pub fn feature_file_name(modality: &str) -> String {
    format!("{modality}.tnfc")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemRecord {
    pub item_id: String,
    pub category_id: String,
    pub features: BTreeMap<String, u64>,
}

pub fn write_feature_table(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + table.data().len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(table.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(table.dim() as u32).to_le_bytes());
    for v in table.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_feature_table(path: &Path, modality: &str) -> Result<FeatureTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated feature header"));
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(Error::format(path, "bad magic (expected TNFC)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
            expected: FEATURE_VERSION,
        });
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() % 4 != 0 {
        return Err(Error::format(path, "body length is not a whole number of f32"));
    }
    let floats = body.len() / 4;
    if floats != rows * dim {
        return Err(Error::dims(
            format!("{}: header declares {rows} rows of dim {dim}", path.display()),
            rows * dim,
            floats,
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureTable::with_source(modality, dim, data, path)
}

pub fn write_items(path: &Path, items: &[ItemRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_items(path: &Path) -> Result<Vec<ItemRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ItemRecord = serde_json::from_str(line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_pairs(path: &Path, pairs: &[(String, String, Split)]) -> Result<()> {
    let mut s = String::with_capacity(pairs.len() * 24);
    s.push_str(PAIRS_HEADER);
    s.push('\n');
    for (h, t, split) in pairs {
        s.push_str(h);
        s.push('\t');
        s.push_str(t);
        s.push('\t');
        s.push_str(split.as_str());
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut first = true;
    for (i, line) in text.split('\n').enumerate() {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && line == PAIRS_HEADER {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::format(
                path,
                format!("line {line_no}: expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let split = cols[2]
            .parse::<Split>()
            .map_err(|e| Error::format(path, format!("line {line_no}: {e}")))?;
        out.push(PairRecord {
            head_id: cols[0].to_string(),
            tail_id: cols[1].to_string(),
            split,
            line: line_no,
        });
    }
    Ok(out)
}

/// Load and validate a corpus directory.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let items_path = dir.join(ITEMS_FILE);
    let records = read_items(&items_path)?;
    let modalities: BTreeSet<String> = records
        .iter()
        .flat_map(|r| r.features.keys().cloned())
        .collect();
    let mut tables = Vec::with_capacity(modalities.len());
    for m in &modalities {
        tables.push(read_feature_table(&dir.join(feature_file_name(m)), m)?);
    }
    let items = records
        .into_iter()
        .map(|r| Item {
            item_id: r.item_id,
            category_id: r.category_id,
            feature_rows: r
                .features
                .into_iter()
                .map(|(k, v)| (k, v as usize))
                .collect(),
        })
        .collect();
    let pairs_path: PathBuf = dir.join(PAIRS_FILE);
    let pairs = read_pairs(&pairs_path)?;
    Corpus::from_records(items, tables, pairs, &pairs_path)
}
