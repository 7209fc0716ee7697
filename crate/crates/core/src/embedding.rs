//! Embedding sources: GloVe-format text tables keyed by token, and
//! contextual vectors keyed by item id in a JSONL interchange format.
//!
//! Vectors are stored in single precision. Everything downstream works in
//! `f64`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::glossary::Item;

/// Token to vector map with a uniform dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

fn fold(token: &str, case_fold: bool) -> std::borrow::Cow<'_, str> {
    if case_fold {
        std::borrow::Cow::Owned(token.to_lowercase())
    } else {
        std::borrow::Cow::Borrowed(token)
    }
}

impl EmbeddingTable {
    fn with_dim(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Appends an entry; returns the index of an existing entry on a
    /// duplicate token.
    fn push(&mut self, token: String, vector: &[f32]) -> std::result::Result<(), usize> {
        debug_assert_eq!(vector.len(), self.dim);
        if let Some(&existing) = self.index.get(&token) {
            return Err(existing);
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    /// Builds a table in memory. Same checks as the file loader.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut table: Option<EmbeddingTable> = None;
        for (token, vector) in entries {
            let token = token.into();
            let t = table.get_or_insert_with(|| EmbeddingTable::with_dim(vector.len()));
            if vector.is_empty() {
                return Err(Error::InvalidInput(format!("empty vector for {token:?}")));
            }
            if vector.len() != t.dim {
                return Err(Error::DimensionMismatch {
                    expected: t.dim,
                    found: vector.len(),
                });
            }
            if t.push(token.clone(), &vector).is_err() {
                return Err(Error::InvalidInput(format!("duplicate token {token:?}")));
            }
        }
        table.ok_or_else(|| Error::InvalidInput("no entries".into()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    fn vector_at(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn get(&self, token: &str, case_fold: bool) -> Option<&[f32]> {
        self.index
            .get(fold(token, case_fold).as_ref())
            .map(|&idx| self.vector_at(idx))
    }

    pub fn contains(&self, token: &str, case_fold: bool) -> bool {
        self.get(token, case_fold).is_some()
    }

    /// Vector for `token`, lowercased first when `case_fold` is set.
    pub fn lookup(&self, token: &str, case_fold: bool) -> Result<&[f32]> {
        self.get(token, case_fold)
            .ok_or_else(|| Error::Missing(vec![token.to_string()]))
    }

    /// Writes the table in GloVe text format, in load order. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn write_glove<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (idx, token) in self.tokens.iter().enumerate() {
            out.write_all(token.as_bytes())?;
            for v in self.vector_at(idx) {
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

fn parse_error(source: &str, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        reason: reason.into(),
    }
}

/// Yields `(line_number, line)` for non-blank lines, with line endings
/// stripped and UTF-8 checked.
fn for_each_line<R: BufRead>(
    mut reader: R,
    source: &str,
    mut f: impl FnMut(usize, &str) -> Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let read = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::io(source, e))?;
        if read == 0 {
            return Ok(());
        }
        line_no += 1;
        let line =
            std::str::from_utf8(&buf).map_err(|_| parse_error(source, line_no, "invalid UTF-8"))?;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        f(line_no, line)?;
    }
}

/// Parses GloVe text from any reader. `source` names the input in errors.
pub fn read_glove<R: BufRead>(reader: R, source: &str) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    let mut first_seen: Vec<usize> = Vec::new();
    let mut vector: Vec<f32> = Vec::new();

    for_each_line(reader, source, |line_no, line| {
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or_default();
        if token.is_empty() {
            return Err(parse_error(source, line_no, "line starts with a space"));
        }
        vector.clear();
        for field in fields {
            // one trailing space is tolerated
            if field.is_empty() {
                continue;
            }
            let value: f32 = field
                .parse()
                .ok()
                .filter(|v: &f32| v.is_finite())
                .ok_or_else(|| {
                    parse_error(source, line_no, format!("unparseable float {field:?}"))
                })?;
            vector.push(value);
        }
        if vector.is_empty() {
            return Err(parse_error(
                source,
                line_no,
                format!("token {token:?} has no vector"),
            ));
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::with_dim(vector.len()));
        if vector.len() != t.dim {
            return Err(parse_error(
                source,
                line_no,
                format!(
                    "ragged line: expected {} values, found {}",
                    t.dim,
                    vector.len()
                ),
            ));
        }
        if let Err(existing) = t.push(token.to_string(), &vector) {
            return Err(parse_error(
                source,
                line_no,
                format!(
                    "duplicate token {token:?} (first on line {})",
                    first_seen[existing]
                ),
            ));
        }
        first_seen.push(line_no);
        Ok(())
    })?;

    table.ok_or_else(|| parse_error(source, 0, "empty file"))
}

/// Loads a GloVe text file.
pub fn load_glove(path: &Path) -> Result<EmbeddingTable> {
    Ok(load_glove_with_checksum(path)?.0)
}

/// Loads a GloVe text file and returns the SHA-256 of its bytes alongside.
pub fn load_glove_with_checksum(path: &Path) -> Result<(EmbeddingTable, String)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hashing = HashingReader::new(file);
    let table = read_glove(
        BufReader::with_capacity(1 << 20, &mut hashing),
        &path.display().to_string(),
    )?;
    Ok((table, hashing.finish()))
}

struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> HashingReader<R> {
    fn new(inner: R) -> Self {
        HashingReader {
            inner,
            hasher: Sha256::new(),
        }
    }

    /// Drains any unread input so the digest covers the whole stream.
    fn finish(mut self) -> String {
        let mut sink = [0u8; 8192];
        while let Ok(n) = self.read(&mut sink) {
            if n == 0 {
                break;
            }
        }
        to_hex(&self.hasher.finalize())
    }
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file's contents, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(HashingReader::new(file).finish())
}

pub const CONTEXTUAL_SCHEMA: &str = "ctx-emb/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    First,
}

/// Where a contextual store's vectors came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub layer: i64,
    pub pooling: Pooling,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    schema: String,
    dim: usize,
    model: String,
    layer: i64,
    pooling: Pooling,
}

/// One item's contextual vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextualRecord {
    pub id: String,
    pub text: String,
    pub target: String,
    pub vector: Vec<f32>,
}

/// Item id to vector map read from the interchange format.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualStore {
    dim: usize,
    provenance: Provenance,
    records: Vec<ContextualRecord>,
    index: HashMap<String, usize>,
}

impl ContextualStore {
    pub fn new(dim: usize, provenance: Provenance) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "contextual dim must be positive".into(),
            ));
        }
        Ok(ContextualStore {
            dim,
            provenance,
            records: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn insert(&mut self, record: ContextualRecord) -> Result<()> {
        if record.vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: record.vector.len(),
            });
        }
        if self.index.contains_key(&record.id) {
            return Err(Error::InvalidInput(format!("duplicate id {:?}", record.id)));
        }
        self.index.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ContextualRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|&i| self.records[i].vector.as_slice())
    }

    /// Writes the header then one record per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = HeaderRecord {
            schema: CONTEXTUAL_SCHEMA.to_string(),
            dim: self.dim,
            model: self.provenance.model.clone(),
            layer: self.provenance.layer,
            pooling: self.provenance.pooling,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Parses the contextual interchange format from any reader.
pub fn read_contextual<R: BufRead>(reader: R, source: &str) -> Result<ContextualStore> {
    let mut store: Option<ContextualStore> = None;
    for_each_line(reader, source, |line_no, line| {
        let Some(store) = store.as_mut() else {
            let header: HeaderRecord = serde_json::from_str(line).map_err(|e| {
                parse_error(source, line_no, format!("schema violation in header: {e}"))
            })?;
            if header.schema != CONTEXTUAL_SCHEMA {
                return Err(parse_error(
                    source,
                    line_no,
                    format!("unsupported schema {:?}", header.schema),
                ));
            }
            if header.dim == 0 {
                return Err(parse_error(source, line_no, "header dim must be positive"));
            }
            store = Some(ContextualStore::new(
                header.dim,
                Provenance {
                    model: header.model,
                    layer: header.layer,
                    pooling: header.pooling,
                },
            )?);
            return Ok(());
        };
        let record: ContextualRecord = serde_json::from_str(line)
            .map_err(|e| parse_error(source, line_no, format!("schema violation: {e}")))?;
        if record.vector.len() != store.dim {
            return Err(parse_error(
                source,
                line_no,
                format!(
                    "dimension mismatch: expected {}, found {}",
                    store.dim,
                    record.vector.len()
                ),
            ));
        }
        if store.index.contains_key(&record.id) {
            return Err(parse_error(
                source,
                line_no,
                format!("duplicate id {:?}", record.id),
            ));
        }
        store.insert(record)
    })?;
    store.ok_or_else(|| parse_error(source, 0, "empty file: missing header record"))
}

pub fn load_contextual(path: &Path) -> Result<ContextualStore> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_contextual(BufReader::new(file), &path.display().to_string())
}

/// A loaded source of item vectors.
#[derive(Debug, Clone)]
pub enum EmbeddingSource {
    /// Resolves items by target token.
    Table(EmbeddingTable),
    /// Resolves items by id.
    Contextual(ContextualStore),
}

impl EmbeddingSource {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingSource::Table(t) => t.dim(),
            EmbeddingSource::Contextual(c) => c.dim(),
        }
    }

    /// The key an item is looked up under.
    pub fn key<'a>(&self, item: &'a Item) -> &'a str {
        match self {
            EmbeddingSource::Table(_) => &item.target,
            EmbeddingSource::Contextual(_) => &item.id,
        }
    }

    pub fn resolve(&self, item: &Item, case_fold: bool) -> Option<&[f32]> {
        match self {
            EmbeddingSource::Table(t) => t.get(&item.target, case_fold),
            EmbeddingSource::Contextual(c) => c.get(&item.id),
        }
    }

    /// Keys of items that cannot be resolved, in item order.
    pub fn missing<'a>(
        &self,
        items: impl IntoIterator<Item = &'a Item>,
        case_fold: bool,
    ) -> Vec<String> {
        items
            .into_iter()
            .filter(|item| self.resolve(item, case_fold).is_none())
            .map(|item| self.key(item).to_string())
            .collect()
    }
}

/// Vectors for `items` in order, widened to `f64`. Every unresolvable item
/// is reported in one error.
pub fn embed_items(
    items: &[Item],
    source: &EmbeddingSource,
    case_fold: bool,
) -> Result<Vec<Vec<f64>>> {
    let missing = source.missing(items, case_fold);
    if !missing.is_empty() {
        return Err(Error::Missing(missing));
    }
    Ok(items
        .iter()
        .map(|item| {
            source
                .resolve(item, case_fold)
                .expect("checked above")
                .iter()
                .map(|&v| f64::from(v))
                .collect()
        })
        .collect())
}
