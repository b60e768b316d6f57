//! Labeled sparse datasets and the LIBSVM-style text format.
//!
//! One example per line: `label idx:val idx:val ...`. Blank lines and lines
//! starting with `#` are skipped. Feature ids are 1-based unless the parser
//! is told otherwise. Labels are arbitrary tokens mapped to dense class ids
//! in first-seen order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub label: usize,
    pub features: SparseVector,
}

/// External label names indexed by dense class id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelMap {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Labels `"0"`, `"1"`, ... for `n` classes.
    pub fn identity(n: usize) -> Self {
        Self::from_names((0..n).map(|c| c.to_string())).expect("distinct names")
    }

    pub fn from_names(names: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut map = Self::new();
        for name in names {
            if map.lookup.contains_key(&name) {
                return Err(Error::invalid(format!("duplicate label '{name}'")));
            }
            map.intern(&name);
        }
        Ok(map)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    dim: usize,
    num_classes: usize,
    labels: LabelMap,
}

impl Dataset {
    /// Validates that every label is `< num_classes` and every vector has
    /// dimension `dim`. Labels are named by their ids.
    pub fn new(examples: Vec<Example>, dim: usize, num_classes: usize) -> Result<Self> {
        Self::with_labels(examples, dim, num_classes, LabelMap::identity(num_classes))
    }

    pub fn with_labels(
        examples: Vec<Example>,
        dim: usize,
        num_classes: usize,
        labels: LabelMap,
    ) -> Result<Self> {
        if labels.len() != num_classes {
            return Err(Error::invalid(format!(
                "label map has {} names for {num_classes} classes",
                labels.len()
            )));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.label >= num_classes {
                return Err(Error::invalid(format!(
                    "example {i}: label {} >= num_classes {num_classes}",
                    ex.label
                )));
            }
            if ex.features.dim() != dim {
                return Err(Error::invalid(format!(
                    "example {i}: dimension {} != {dim}",
                    ex.features.dim()
                )));
            }
        }
        Ok(Self {
            examples,
            dim,
            num_classes,
            labels,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    /// Examples at the given positions, keeping dimension and label map.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        Dataset {
            examples: positions
                .iter()
                .map(|&i| self.examples[i].clone())
                .collect(),
            dim: self.dim,
            num_classes: self.num_classes,
            labels: self.labels.clone(),
        }
    }

    /// Seeded random split; the first part receives `round(fraction · n)`
    /// examples.
    pub fn split(&self, fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((fraction.clamp(0.0, 1.0) * self.len() as f64).round() as usize).min(self.len());
        (self.subset(&order[..cut]), self.subset(&order[cut..]))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Feature ids in the file start at 0 instead of 1.
    pub zero_based: bool,
    /// Forced dimension. Features beyond it are dropped and counted.
    pub dim: Option<usize>,
    /// Minimum number of classes.
    pub num_classes: Option<usize>,
    /// Existing label map to extend (train/test agreement).
    pub labels: Option<LabelMap>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    pub lines: usize,
    pub examples: usize,
    pub dropped_features: usize,
}

pub fn parse_dataset(
    path: impl AsRef<Path>,
    options: &ParseOptions,
) -> Result<(Dataset, ParseStats)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    parse_reader(BufReader::new(file), options)
}

pub fn parse_str(text: &str, options: &ParseOptions) -> Result<(Dataset, ParseStats)> {
    parse_reader(text.as_bytes(), options)
}

pub fn parse_reader<R: Read>(reader: R, options: &ParseOptions) -> Result<(Dataset, ParseStats)> {
    let reader = BufReader::new(reader);
    let mut labels = options.labels.clone().unwrap_or_default();
    let mut raw: Vec<(usize, Vec<(u32, f64)>)> = Vec::new();
    let mut stats = ParseStats::default();
    let mut max_index: Option<u32> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        stats.lines += 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        if label_tok.contains(':') {
            return Err(parse_err(
                lineno,
                format!("missing label before '{label_tok}'"),
            ));
        }
        if label_tok.contains(',') {
            return Err(parse_err(lineno, "multi-label rows are not supported"));
        }
        let label = labels.intern(label_tok);

        let mut feats: Vec<(u32, f64)> = Vec::new();
        for tok in tokens {
            let (idx, val) =
                parse_feature(tok, options.zero_based).map_err(|msg| parse_err(lineno, msg))?;
            if let Some(d) = options.dim {
                if idx as usize >= d {
                    stats.dropped_features += 1;
                    continue;
                }
            }
            feats.push((idx, val));
        }
        feats.sort_unstable_by_key(|f| f.0);
        if let Some(w) = feats.windows(2).find(|w| w[0].0 == w[1].0) {
            let shown = if options.zero_based {
                w[0].0
            } else {
                w[0].0 + 1
            };
            return Err(parse_err(lineno, format!("duplicate feature id {shown}")));
        }
        if let Some(&(last, _)) = feats.last() {
            max_index = Some(max_index.map_or(last, |m| m.max(last)));
        }
        raw.push((label, feats));
    }

    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = options
        .dim
        .unwrap_or_else(|| max_index.map_or(0, |m| m as usize + 1));
    let num_classes = labels.len().max(options.num_classes.unwrap_or(0));
    while labels.len() < num_classes {
        let name = format!("__class{}", labels.len());
        labels.intern(&name);
    }
    let examples = raw
        .into_iter()
        .map(|(label, feats)| {
            let (indices, values) = feats.into_iter().unzip();
            Example {
                label,
                features: SparseVector::from_sorted_unchecked(dim, indices, values),
            }
        })
        .collect::<Vec<_>>();
    stats.examples = examples.len();
    let data = Dataset::with_labels(examples, dim, num_classes, labels)?;
    Ok((data, stats))
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_feature(tok: &str, zero_based: bool) -> std::result::Result<(u32, f64), String> {
    let (idx, val) = tok
        .split_once(':')
        .ok_or_else(|| format!("malformed feature token '{tok}'"))?;
    if idx.starts_with('-') {
        return Err(format!("negative feature index in '{tok}'"));
    }
    let idx: u64 = idx
        .parse()
        .map_err(|_| format!("bad feature index in '{tok}'"))?;
    let idx = if zero_based {
        idx
    } else {
        idx.checked_sub(1)
            .ok_or_else(|| format!("feature index 0 in 1-based token '{tok}'"))?
    };
    let idx = u32::try_from(idx)
        .ok()
        .filter(|&i| i < u32::MAX)
        .ok_or_else(|| format!("feature index too large in '{tok}'"))?;
    let val: f64 = val
        .parse()
        .map_err(|_| format!("bad feature value in '{tok}'"))?;
    if !val.is_finite() {
        return Err(format!("non-finite feature value in '{tok}'"));
    }
    Ok((idx, val))
}

/// Writes `data` in the same text format, using the external label names.
pub fn write_dataset<W: Write>(mut out: W, data: &Dataset, zero_based: bool) -> Result<()> {
    let offset = u64::from(!zero_based);
    for ex in data.examples() {
        let name = data.labels().name(ex.label).expect("label in map");
        write!(out, "{name}")?;
        for (i, v) in ex.features.iter() {
            write!(out, " {}:{}", u64::from(i) + offset, v)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset_file(path: impl AsRef<Path>, data: &Dataset, zero_based: bool) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_dataset(BufWriter::new(file), data, zero_based)
}
