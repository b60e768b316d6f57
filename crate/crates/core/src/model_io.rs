//! Model files.
//!
//! Both formats store logical row values (the lazy scale is folded in) and
//! the class names, so a loaded model predicts with the original labels.
//!
//! Text format, one item per line, fields separated by single spaces:
//!
//! ```text
//! MEMOIR1
//! format_version 1
//! classes <C>
//! dim <d>
//! lambda <f64>
//! algorithm <l2|l1>
//! labels <name_0> ... <name_{C-1}>
//! <class_id> <nnz> <idx>:<val> ...      (C lines, class ids 0..C-1 in order)
//! end
//! ```
//!
//! Indices are 0-based; values use the shortest decimal form that parses
//! back to the same f64, so the text round trip is exact.
//!
//! Binary format, little endian:
//!
//! ```text
//! b"MEMOIR1\0"
//! u32 format_version
//! u64 C, u64 d, f64 lambda, u8 algorithm (0 = l2, 1 = l1)
//! C × (u32 byte length, UTF-8 class name)
//! C × (u64 class_id, u64 nnz, nnz × (u32 idx, f64 val))
//! b"END\0"
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::LabelMap;
use crate::error::{Error, Result};
use crate::sparse::SparseVector;
use crate::train::Algorithm;
use crate::weights::WeightMatrix;

pub const FORMAT_VERSION: u32 = 1;
const TEXT_MAGIC: &str = "MEMOIR1";
const BINARY_MAGIC: &[u8; 8] = b"MEMOIR1\0";
const BINARY_END: &[u8; 4] = b"END\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelFormat {
    Text,
    #[default]
    Binary,
}

impl std::str::FromStr for ModelFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ModelFormat::Text),
            "binary" | "bin" => Ok(ModelFormat::Binary),
            other => Err(Error::invalid(format!("unknown model format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub weights: WeightMatrix,
    pub labels: LabelMap,
    pub lambda: f64,
    pub algorithm: Algorithm,
}

impl Model {
    pub fn new(
        weights: WeightMatrix,
        labels: LabelMap,
        lambda: f64,
        algorithm: Algorithm,
    ) -> Result<Self> {
        if labels.len() != weights.num_classes() {
            return Err(Error::Model(format!(
                "{} label names for {} classes",
                labels.len(),
                weights.num_classes()
            )));
        }
        Ok(Self {
            weights,
            labels,
            lambda,
            algorithm,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.num_classes()
    }

    pub fn dim(&self) -> usize {
        self.weights.dim()
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Model(msg.into())
}

fn check_names(labels: &LabelMap) -> Result<()> {
    for name in labels.names() {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::Model(format!(
                "class name {name:?} cannot be stored: empty or contains whitespace"
            )));
        }
    }
    Ok(())
}

pub fn save_model(path: impl AsRef<Path>, model: &Model, format: ModelFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = BufWriter::new(file);
    write_model(&mut out, model, format)?;
    out.flush().map_err(|e| Error::file(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_model(BufReader::new(file))
}

pub fn write_model<W: Write>(out: W, model: &Model, format: ModelFormat) -> Result<()> {
    check_names(&model.labels)?;
    match format {
        ModelFormat::Text => write_text(out, model),
        ModelFormat::Binary => write_binary(out, model),
    }
}

/// Reads either format, detected from the magic bytes.
pub fn read_model<R: Read>(mut input: R) -> Result<Model> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| corrupt("file too short for a model header"))?;
    if &magic == BINARY_MAGIC {
        read_binary(input)
    } else if &magic == b"MEMOIR1\n" {
        read_text(BufReader::new(input))
    } else if magic.starts_with(b"MEMOIR") {
        Err(corrupt(format!(
            "unsupported model format {:?}",
            String::from_utf8_lossy(&magic).trim_end_matches(['\0', '\n'])
        )))
    } else {
        Err(corrupt("not a model file (bad magic)"))
    }
}

fn write_text<W: Write>(mut out: W, model: &Model) -> Result<()> {
    let w = &model.weights;
    writeln!(out, "{TEXT_MAGIC}")?;
    writeln!(out, "format_version {FORMAT_VERSION}")?;
    writeln!(out, "classes {}", w.num_classes())?;
    writeln!(out, "dim {}", w.dim())?;
    writeln!(out, "lambda {:?}", model.lambda)?;
    writeln!(out, "algorithm {}", model.algorithm)?;
    write!(out, "labels")?;
    for name in model.labels.names() {
        write!(out, " {name}")?;
    }
    writeln!(out)?;
    for c in 0..w.num_classes() {
        let row = w.materialize_row(c)?;
        write!(out, "{c} {}", row.nnz())?;
        for (i, v) in row.iter() {
            write!(out, " {i}:{v:?}")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "end")?;
    Ok(())
}

fn header_field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| corrupt(format!("missing header field '{key}'")))?;
    match line.split_once(' ') {
        Some((k, v)) if k == key => Ok(v),
        _ if line == key => Ok(""),
        _ => Err(corrupt(format!(
            "expected header field '{key}', found {line:?}"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| corrupt(format!("bad {what}: {s:?}")))
}

fn read_text<R: BufRead>(input: R) -> Result<Model> {
    let mut input = input;
    // Every line, the last included, must end in a newline, so any cut of a
    // valid file is detected.
    let mut next = move || -> Result<Option<String>> {
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        match line.strip_suffix('\n') {
            Some(l) => Ok(Some(l.to_string())),
            None => Err(corrupt("truncated: last line has no newline")),
        }
    };

    let version: u32 = parse_num(
        header_field(next()?.as_deref(), "format_version")?,
        "format_version",
    )?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let classes: usize = parse_num(header_field(next()?.as_deref(), "classes")?, "class count")?;
    let dim: usize = parse_num(header_field(next()?.as_deref(), "dim")?, "dimension")?;
    let lambda: f64 = parse_num(header_field(next()?.as_deref(), "lambda")?, "lambda")?;
    let algorithm: Algorithm = header_field(next()?.as_deref(), "algorithm")?
        .parse()
        .map_err(|_| corrupt("bad algorithm tag"))?;
    let names: Vec<String> = header_field(next()?.as_deref(), "labels")?
        .split(' ')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if names.len() != classes {
        return Err(corrupt(format!(
            "{} label names for {classes} classes",
            names.len()
        )));
    }

    let mut rows = Vec::new();
    for c in 0..classes {
        let line = next()?.ok_or_else(|| corrupt(format!("truncated: missing row {c}")))?;
        let mut toks = line.split(' ');
        let id: usize = parse_num(toks.next().unwrap_or(""), "class id")?;
        if id != c {
            return Err(corrupt(format!("expected row {c}, found {id}")));
        }
        let nnz: usize = parse_num(toks.next().unwrap_or(""), "nnz")?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in toks {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| corrupt(format!("row {c}: bad entry {tok:?}")))?;
            indices.push(parse_num::<u32>(i, "feature index")?);
            values.push(parse_num::<f64>(v, "value")?);
        }
        if indices.len() != nnz {
            return Err(corrupt(format!(
                "row {c}: declared {nnz} entries, found {}",
                indices.len()
            )));
        }
        rows.push(checked_row(c, dim, indices, values)?);
    }
    match next()?.as_deref() {
        Some("end") => {}
        Some(other) => return Err(corrupt(format!("expected 'end', found {other:?}"))),
        None => return Err(corrupt("truncated: missing 'end'")),
    }
    finish(dim, rows, names, lambda, algorithm)
}

fn checked_row(c: usize, dim: usize, indices: Vec<u32>, values: Vec<f64>) -> Result<SparseVector> {
    SparseVector::new(dim, indices, values).map_err(|e| corrupt(format!("row {c}: {e}")))
}

fn finish(
    dim: usize,
    rows: Vec<SparseVector>,
    names: Vec<String>,
    lambda: f64,
    algorithm: Algorithm,
) -> Result<Model> {
    let labels = LabelMap::from_names(names).map_err(|e| corrupt(e.to_string()))?;
    let weights = WeightMatrix::from_rows(dim, rows)?;
    Model::new(weights, labels, lambda, algorithm)
}

fn write_binary<W: Write>(mut out: W, model: &Model) -> Result<()> {
    let w = &model.weights;
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(w.num_classes() as u64).to_le_bytes())?;
    out.write_all(&(w.dim() as u64).to_le_bytes())?;
    out.write_all(&model.lambda.to_le_bytes())?;
    out.write_all(&[match model.algorithm {
        Algorithm::L2 => 0u8,
        Algorithm::L1 => 1u8,
    }])?;
    for name in model.labels.names() {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
    }
    for c in 0..w.num_classes() {
        let row = w.materialize_row(c)?;
        out.write_all(&(c as u64).to_le_bytes())?;
        out.write_all(&(row.nnz() as u64).to_le_bytes())?;
        for (i, v) in row.iter() {
            out.write_all(&i.to_le_bytes())?;
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.write_all(BINARY_END)?;
    Ok(())
}

struct Bytes<R> {
    inner: R,
}

impl<R: Read> Bytes<R> {
    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| corrupt(format!("truncated while reading {what}")))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| corrupt(format!("{what} out of range")))
    }
}

fn read_binary<R: Read>(input: R) -> Result<Model> {
    let mut r = Bytes { inner: input };
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let classes = r.usize("class count")?;
    let dim = r.usize("dimension")?;
    if dim > u32::MAX as usize + 1 {
        return Err(corrupt(format!("dimension {dim} exceeds the index range")));
    }
    let lambda = r.f64("lambda")?;
    let algorithm = match r.array::<1>("algorithm")?[0] {
        0 => Algorithm::L2,
        1 => Algorithm::L1,
        t => return Err(corrupt(format!("bad algorithm tag {t}"))),
    };
    let mut names = Vec::new();
    for c in 0..classes {
        let len = r.u32("class name length")? as usize;
        let mut buf = Vec::new();
        (&mut r.inner)
            .take(len as u64)
            .read_to_end(&mut buf)
            .map_err(|_| corrupt(format!("truncated while reading class name {c}")))?;
        if buf.len() != len {
            return Err(corrupt(format!("truncated while reading class name {c}")));
        }
        names.push(
            String::from_utf8(buf).map_err(|_| corrupt(format!("class name {c} is not UTF-8")))?,
        );
    }
    let mut rows = Vec::new();
    for c in 0..classes {
        let id = r.usize("class id")?;
        if id != c {
            return Err(corrupt(format!("expected row {c}, found {id}")));
        }
        let nnz = r.usize("nnz")?;
        if nnz > dim {
            return Err(corrupt(format!(
                "row {c}: nnz {nnz} exceeds dimension {dim}"
            )));
        }
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for _ in 0..nnz {
            indices.push(r.u32("feature index")?);
            values.push(r.f64("value")?);
        }
        rows.push(checked_row(c, dim, indices, values)?);
    }
    if &r.array::<4>("end marker")? != BINARY_END {
        return Err(corrupt("bad end marker"));
    }
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes after end marker"));
    }
    finish(dim, rows, names, lambda, algorithm)
}
