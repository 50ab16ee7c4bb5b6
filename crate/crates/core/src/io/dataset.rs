//! Feature dataset files.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! "AGAD" | version u32 | D u32 | n_attr u32 | n_attr x (len u32, utf-8 name)
//! | split u8 | provenance (len u32, utf-8) | n_samples u64
//! | n_samples x ( class (len u32, utf-8) | n_attr x f64 | D x f64 )
//! ```
//!
//! CSV has the header `class,<attr1>,...,f0,...,f{D-1}` and one sample per
//! row. Floats are written in shortest round-trip form (at most 17
//! significant digits), so values survive a CSV round trip exactly. CSV
//! carries neither split tag nor provenance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sample::AttributeSample;

pub(crate) const DATASET_MAGIC: &[u8; 4] = b"AGAD";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Unspecified,
    Train,
    Test,
}

impl Split {
    fn code(self) -> u8 {
        match self {
            Split::Unspecified => 0,
            Split::Train => 1,
            Split::Test => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Split::Unspecified),
            1 => Some(Split::Train),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Binary,
}

impl DatasetFormat {
    /// `.csv` selects CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub dim: usize,
    pub attribute_names: Vec<String>,
    pub samples: Vec<AttributeSample>,
    pub split: Split,
    pub provenance: String,
}

impl FeatureDataset {
    /// Validates every sample: dimension `dim`, all declared attributes, nonnegative values.
    pub fn new(dim: usize, attribute_names: Vec<String>, samples: Vec<AttributeSample>) -> Result<Self> {
        let ds = Self {
            dim,
            attribute_names,
            samples,
            split: Split::Unspecified,
            provenance: String::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.dim() != self.dim {
                return Err(Error::dims(format!("sample {i} features"), self.dim, s.dim()));
            }
            for name in &self.attribute_names {
                if s.attribute(name).is_none() {
                    return Err(Error::MissingAttribute(name.clone(), i));
                }
            }
            s.validate(i)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct class labels in first-appearance order.
    pub fn classes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.samples {
            if !out.contains(&s.class_label) {
                out.push(s.class_label.clone());
            }
        }
        out
    }

    /// Samples whose class is in `classes`, in original order.
    pub fn filter_classes(&self, classes: &[String]) -> FeatureDataset {
        FeatureDataset {
            samples: self
                .samples
                .iter()
                .filter(|s| classes.contains(&s.class_label))
                .cloned()
                .collect(),
            ..self.without_samples()
        }
    }

    /// Splits every class by sample order: the first `round(fraction * n_c)`
    /// samples of class `c` go to the train part.
    pub fn split_per_class(&self, fraction: f64) -> (FeatureDataset, FeatureDataset) {
        let mut sizes: HashMap<&str, usize> = HashMap::new();
        for s in &self.samples {
            *sizes.entry(s.class_label.as_str()).or_default() += 1;
        }
        let mut train = FeatureDataset {
            split: Split::Train,
            ..self.without_samples()
        };
        let mut test = FeatureDataset {
            split: Split::Test,
            ..self.without_samples()
        };
        let mut taken: HashMap<&str, usize> = HashMap::new();
        for s in &self.samples {
            let label = s.class_label.as_str();
            let quota = (sizes[label] as f64 * fraction).round() as usize;
            let n = taken.entry(label).or_default();
            if *n < quota {
                train.samples.push(s.clone());
            } else {
                test.samples.push(s.clone());
            }
            *n += 1;
        }
        (train, test)
    }

    pub(crate) fn without_samples(&self) -> FeatureDataset {
        FeatureDataset {
            dim: self.dim,
            attribute_names: self.attribute_names.clone(),
            samples: Vec::new(),
            split: self.split,
            provenance: self.provenance.clone(),
        }
    }
}

pub fn save_dataset(dataset: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match DatasetFormat::from_path(path) {
        DatasetFormat::Csv => save_dataset_csv(dataset, path),
        DatasetFormat::Binary => save_dataset_binary(dataset, path),
    }
}

/// Loads either format; binary files are recognised by their magic bytes.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(DATASET_MAGIC) {
        decode_binary(&bytes, path)
    } else {
        decode_csv(&bytes, path)
    }
}

fn save_dataset_binary(ds: &FeatureDataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(ds.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.attribute_names.len() as u32).to_le_bytes());
    for name in &ds.attribute_names {
        put_str(&mut buf, name);
    }
    buf.push(ds.split.code());
    put_str(&mut buf, &ds.provenance);
    buf.extend_from_slice(&(ds.samples.len() as u64).to_le_bytes());
    for (i, s) in ds.samples.iter().enumerate() {
        put_str(&mut buf, &s.class_label);
        for name in &ds.attribute_names {
            let v = s.attribute(name).ok_or_else(|| Error::MissingAttribute(name.clone(), i))?;
            buf.extend_from_slice(&v.to_le_bytes());
        }
        if s.dim() != ds.dim {
            return Err(Error::dims(format!("sample {i} features"), ds.dim, s.dim()));
        }
        for v in &s.features {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_file(path, &buf)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(bytes).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

/// Bounds-checked little-endian reader that reports byte offsets.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn error(&self, offset: usize, cause: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            location: format!("byte {offset}"),
            cause: cause.into(),
        }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(self.pos, format!("truncated while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn string(&mut self, what: &str) -> Result<String> {
        let start = self.pos;
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.error(start, format!("{what} is not valid utf-8")))
    }
}

fn decode_binary(bytes: &[u8], path: &Path) -> Result<FeatureDataset> {
    let mut cur = Cursor::new(bytes, path);
    let magic = cur.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(cur.error(0, "bad magic, expected AGAD"));
    }
    let at = cur.position();
    let version = cur.u32("version")?;
    if version != DATASET_VERSION {
        return Err(cur.error(at, format!("unsupported dataset version {version}")));
    }
    let dim = cur.u32("dimension")? as usize;
    let n_attr = cur.u32("attribute count")? as usize;
    let mut names = Vec::with_capacity(n_attr);
    for _ in 0..n_attr {
        names.push(cur.string("attribute name")?);
    }
    let at = cur.position();
    let split = Split::from_code(cur.u8("split tag")?).ok_or_else(|| cur.error(at, "unknown split tag"))?;
    let provenance = cur.string("provenance")?;
    let n = cur.u64("sample count")? as usize;
    // each record needs at least its length prefix and the floats
    let min_record = 4 + 8 * (n_attr + dim);
    if n.saturating_mul(min_record) > cur.remaining() {
        return Err(cur.error(cur.position(), format!("truncated: {n} samples declared")));
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let start = cur.position();
        let mut s = AttributeSample::new(Vec::with_capacity(dim), cur.string("class label")?);
        for name in &names {
            let v = cur.f64("attribute value")?;
            s.attributes.insert(name.clone(), v);
        }
        for _ in 0..dim {
            s.features.push(cur.f64("feature value")?);
        }
        s.validate(i).map_err(|e| cur.error(start, e.to_string()))?;
        samples.push(s);
    }
    if cur.remaining() != 0 {
        return Err(cur.error(cur.position(), "trailing bytes after last sample"));
    }
    Ok(FeatureDataset {
        dim,
        attribute_names: names,
        samples,
        split,
        provenance,
    })
}

pub fn save_dataset_csv(ds: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        location: "write".into(),
        cause: e.to_string(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["class".to_owned()];
    header.extend(ds.attribute_names.iter().cloned());
    header.extend((0..ds.dim).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, s) in ds.samples.iter().enumerate() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(s.class_label.clone());
        for name in &ds.attribute_names {
            let v = s.attribute(name).ok_or_else(|| Error::MissingAttribute(name.clone(), i))?;
            rec.push(format!("{v:?}"));
        }
        if s.dim() != ds.dim {
            return Err(Error::dims(format!("sample {i} features"), ds.dim, s.dim()));
        }
        rec.extend(s.features.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn decode_csv(bytes: &[u8], path: &Path) -> Result<FeatureDataset> {
    let err = |location: String, cause: String| Error::Format {
        path: path.to_path_buf(),
        location,
        cause,
    };
    let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(bytes);
    let header = r.headers().map_err(|e| err("header".into(), e.to_string()))?.clone();
    if header.get(0) != Some("class") {
        return Err(err("header".into(), "first column must be `class`".into()));
    }
    let first_feature = header
        .iter()
        .position(|h| h == "f0")
        .ok_or_else(|| err("header".into(), "no feature columns (expected f0, f1, ...)".into()))?;
    let names: Vec<String> = header.iter().skip(1).take(first_feature - 1).map(str::to_owned).collect();
    let dim = header.len() - first_feature;
    for (j, h) in header.iter().skip(first_feature).enumerate() {
        if h != format!("f{j}") {
            return Err(err("header".into(), format!("column {} should be f{j}, found `{h}`", first_feature + j)));
        }
    }

    let mut samples = Vec::new();
    for (i, rec) in r.records().enumerate() {
        // rows are numbered from 1 after the header
        let row = i + 1;
        let rec = rec.map_err(|e| err(format!("row {row}"), e.to_string()))?;
        if rec.len() != header.len() {
            return Err(err(
                format!("row {row}"),
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let parse = |j: usize| -> Result<f64> {
            let field = rec.get(j).unwrap_or_default().trim();
            field
                .parse::<f64>()
                .map_err(|_| err(format!("row {row}, column {}", header.get(j).unwrap_or("?")), format!("`{field}` is not a number")))
        };
        let mut s = AttributeSample::new(Vec::with_capacity(dim), rec.get(0).unwrap_or_default());
        for (k, name) in names.iter().enumerate() {
            s.attributes.insert(name.clone(), parse(1 + k)?);
        }
        for j in first_feature..header.len() {
            s.features.push(parse(j)?);
        }
        s.validate(i).map_err(|e| err(format!("row {row}"), e.to_string()))?;
        samples.push(s);
    }
    Ok(FeatureDataset {
        dim,
        attribute_names: names,
        samples,
        split: Split::Unspecified,
        provenance: String::new(),
    })
}
