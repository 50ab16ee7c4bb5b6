//! Model archives.
//!
//! ```text
//! "AGA1" | version u32 | record count u32 | records... | crc32 u32
//! record = tag u8 | payload length u64 | payload
//! ```
//!
//! Integers and floats are little-endian; strings are `len u32` + utf-8. The
//! trailing CRC-32 covers every byte between the version and the checksum.
//! Networks store their layer layout, shapes and all parameters and
//! BatchNorm state as 64-bit floats, so a round trip is bit-exact.

use std::path::Path;

use super::dataset::{write_file, Cursor};
use crate::error::{Error, Result};
use crate::grid::IntervalGrid;
use crate::nn::{BatchNorm, Layer, Linear, Matrix, Network};
use crate::regressor::{AttributeRegressor, RegressorTrainConfig};
use crate::svm::LinearSvmModel;
use crate::synthesis::{AttributeBank, EncoderDecoder, SynthesisBank};

const MAGIC: &[u8; 4] = b"AGA1";
const VERSION: u32 = 1;

const TAG_REGRESSOR: u8 = 1;
const TAG_SYNTHESIS: u8 = 2;
const TAG_SVM: u8 = 3;
const TAG_GRID: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum ArchiveRecord {
    Regressor(AttributeRegressor),
    Synthesis(EncoderDecoder),
    Svm(LinearSvmModel),
    Grid(IntervalGrid),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelArchive {
    pub records: Vec<ArchiveRecord>,
}

impl ModelArchive {
    pub fn new(records: Vec<ArchiveRecord>) -> Self {
        Self { records }
    }

    /// Grid, regressor, then functions in `(i, k)` order, per attribute.
    pub fn from_bank(bank: &SynthesisBank) -> Self {
        let mut records = Vec::new();
        for ab in &bank.attributes {
            records.push(ArchiveRecord::Grid(ab.grid.clone()));
            records.push(ArchiveRecord::Regressor(ab.gamma.clone()));
            records.extend(ab.functions.iter().cloned().map(ArchiveRecord::Synthesis));
        }
        Self { records }
    }

    pub fn regressors(&self) -> impl Iterator<Item = &AttributeRegressor> {
        self.records.iter().filter_map(|r| match r {
            ArchiveRecord::Regressor(g) => Some(g),
            _ => None,
        })
    }

    /// Reassembles a bank: one grid per attribute, a regressor for it, and
    /// exactly one function for every `(i, k)`.
    pub fn to_bank(&self) -> Result<SynthesisBank> {
        let mut bank = SynthesisBank::default();
        for r in &self.records {
            if let ArchiveRecord::Grid(g) = r {
                let gamma = self
                    .regressors()
                    .find(|x| x.attribute() == g.attribute)
                    .ok_or_else(|| Error::InvalidInput(format!("archive has no regressor for `{}`", g.attribute)))?;
                let t = g.targets.len();
                let mut slots: Vec<Option<EncoderDecoder>> = vec![None; g.len() * t];
                for r in &self.records {
                    if let ArchiveRecord::Synthesis(phi) = r {
                        if phi.attribute != g.attribute {
                            continue;
                        }
                        if phi.interval >= g.len() || phi.target_index >= t {
                            return Err(Error::InvalidInput(format!(
                                "archive function ({}, {}) outside the `{}` grid",
                                phi.interval, phi.target_index, g.attribute
                            )));
                        }
                        slots[phi.interval * t + phi.target_index] = Some(phi.clone());
                    }
                }
                let functions = slots
                    .into_iter()
                    .enumerate()
                    .map(|(n, f)| {
                        f.ok_or_else(|| {
                            Error::InvalidInput(format!(
                                "archive lacks function ({}, {}) of `{}`",
                                n / t,
                                n % t,
                                g.attribute
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                bank.attributes.push(AttributeBank {
                    grid: g.clone(),
                    gamma: gamma.clone(),
                    functions,
                });
            }
        }
        Ok(bank)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        put_u32(&mut body, self.records.len() as u32);
        for r in &self.records {
            let mut payload = Vec::new();
            let tag = match r {
                ArchiveRecord::Regressor(g) => {
                    put_regressor(&mut payload, g);
                    TAG_REGRESSOR
                }
                ArchiveRecord::Synthesis(phi) => {
                    put_synthesis(&mut payload, phi);
                    TAG_SYNTHESIS
                }
                ArchiveRecord::Svm(m) => {
                    put_svm(&mut payload, m);
                    TAG_SVM
                }
                ArchiveRecord::Grid(g) => {
                    put_grid(&mut payload, g);
                    TAG_GRID
                }
            };
            body.push(tag);
            put_u64(&mut body, payload.len() as u64);
            body.extend_from_slice(&payload);
        }
        let mut out = Vec::with_capacity(body.len() + 12);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        out.extend_from_slice(&body);
        put_u32(&mut out, crc32fast::hash(&body));
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut cur = Cursor::new(bytes, path);
        if cur.take(4, "magic")? != MAGIC {
            return Err(cur.error(0, "bad magic, expected AGA1"));
        }
        let version = cur.u32("version")?;
        if version != VERSION {
            return Err(cur.error(4, format!("unsupported archive version {version}")));
        }
        if bytes.len() < 12 {
            return Err(cur.error(bytes.len(), "truncated: no checksum"));
        }
        let body = &bytes[8..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(cur.error(
                bytes.len() - 4,
                format!("checksum mismatch: stored {stored:08x}, computed {actual:08x} (corrupted or truncated file)"),
            ));
        }

        let mut cur = Cursor::new(&bytes[..bytes.len() - 4], path);
        cur.take(8, "header")?;
        let count = cur.u32("record count")? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let start = cur.position();
            let tag = cur.u8("record tag")?;
            let len = cur.u64("record length")? as usize;
            if len > cur.remaining() {
                return Err(cur.error(start, format!("record of {len} bytes runs past the end")));
            }
            let payload_start = cur.position();
            let record = match tag {
                TAG_REGRESSOR => ArchiveRecord::Regressor(get_regressor(&mut cur)?),
                TAG_SYNTHESIS => ArchiveRecord::Synthesis(get_synthesis(&mut cur)?),
                TAG_SVM => ArchiveRecord::Svm(get_svm(&mut cur)?),
                TAG_GRID => ArchiveRecord::Grid(get_grid(&mut cur)?),
                other => return Err(cur.error(start, format!("unknown record tag {other}"))),
            };
            if cur.position() - payload_start != len {
                return Err(cur.error(start, "record length does not match its contents"));
            }
            records.push(record);
        }
        if cur.remaining() != 0 {
            return Err(cur.error(cur.position(), "trailing bytes after the last record"));
        }
        Ok(Self { records })
    }
}

pub fn save_model(archive: &ModelArchive, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &archive.encode())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArchive> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelArchive::decode(&bytes, path)
}

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(b: &mut Vec<u8>, v: f64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(b: &mut Vec<u8>, v: &[f64]) {
    put_u32(b, v.len() as u32);
    v.iter().for_each(|x| put_f64(b, *x));
}

fn put_str(b: &mut Vec<u8>, s: &str) {
    put_u32(b, s.len() as u32);
    b.extend_from_slice(s.as_bytes());
}

fn get_f64s(cur: &mut Cursor, what: &str) -> Result<Vec<f64>> {
    let at = cur.position();
    let n = cur.u32(what)? as usize;
    if n.saturating_mul(8) > cur.remaining() {
        return Err(cur.error(at, format!("truncated {what}")));
    }
    (0..n).map(|_| cur.f64(what)).collect()
}

const LAYER_LINEAR: u8 = 0;
const LAYER_BATCHNORM: u8 = 1;
const LAYER_RELU: u8 = 2;
const LAYER_ELU: u8 = 3;
const LAYER_DROPOUT: u8 = 4;

fn put_network(b: &mut Vec<u8>, net: &Network) {
    put_u32(b, net.input_dim() as u32);
    put_u32(b, net.layers().len() as u32);
    for layer in net.layers() {
        match layer {
            Layer::Linear(l) => {
                b.push(LAYER_LINEAR);
                put_u32(b, l.input_dim() as u32);
                put_u32(b, l.output_dim() as u32);
                l.weight.data().iter().for_each(|x| put_f64(b, *x));
                put_f64s(b, &l.bias);
            }
            Layer::BatchNorm(bn) => {
                b.push(LAYER_BATCHNORM);
                put_f64s(b, &bn.scale);
                put_f64s(b, &bn.shift);
                put_f64s(b, &bn.running_mean);
                put_f64s(b, &bn.running_var);
                put_f64(b, bn.momentum);
                put_f64(b, bn.epsilon);
            }
            Layer::Relu => b.push(LAYER_RELU),
            Layer::Elu { alpha } => {
                b.push(LAYER_ELU);
                put_f64(b, *alpha);
            }
            Layer::Dropout { p } => {
                b.push(LAYER_DROPOUT);
                put_f64(b, *p);
            }
        }
    }
}

fn get_network(cur: &mut Cursor) -> Result<Network> {
    let start = cur.position();
    let input_dim = cur.u32("network input dimension")? as usize;
    let n = cur.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let at = cur.position();
        let layer = match cur.u8("layer kind")? {
            LAYER_LINEAR => {
                let i = cur.u32("linear input dimension")? as usize;
                let o = cur.u32("linear output dimension")? as usize;
                if i.saturating_mul(o).saturating_mul(8) > cur.remaining() {
                    return Err(cur.error(at, "truncated linear weights"));
                }
                let w = (0..i * o).map(|_| cur.f64("linear weight")).collect::<Result<Vec<_>>>()?;
                let bias = get_f64s(cur, "linear bias")?;
                let weight = Matrix::from_vec(i, o, w).map_err(|e| cur.error(at, e.to_string()))?;
                Layer::Linear(Linear::from_parts(weight, bias).map_err(|e| cur.error(at, e.to_string()))?)
            }
            LAYER_BATCHNORM => Layer::BatchNorm(BatchNorm {
                scale: get_f64s(cur, "batchnorm scale")?,
                shift: get_f64s(cur, "batchnorm shift")?,
                running_mean: get_f64s(cur, "batchnorm running mean")?,
                running_var: get_f64s(cur, "batchnorm running variance")?,
                momentum: cur.f64("batchnorm momentum")?,
                epsilon: cur.f64("batchnorm epsilon")?,
            }),
            LAYER_RELU => Layer::Relu,
            LAYER_ELU => Layer::Elu {
                alpha: cur.f64("elu alpha")?,
            },
            LAYER_DROPOUT => Layer::Dropout {
                p: cur.f64("dropout probability")?,
            },
            other => return Err(cur.error(at, format!("unknown layer kind {other}"))),
        };
        layers.push(layer);
    }
    Network::new(input_dim, layers).map_err(|e| cur.error(start, format!("invalid network: {e}")))
}

fn put_regressor(b: &mut Vec<u8>, g: &AttributeRegressor) {
    put_str(b, g.attribute());
    put_f64(b, g.target_mean());
    put_f64(b, g.target_scale());
    let c = g.config();
    put_u64(b, c.epochs as u64);
    put_u64(b, c.batch_size as u64);
    put_f64(b, c.learning_rate);
    put_u64(b, c.hidden as u64);
    put_u64(b, c.seed);
    put_network(b, g.network());
}

fn get_regressor(cur: &mut Cursor) -> Result<AttributeRegressor> {
    let start = cur.position();
    let attribute = cur.string("regressor attribute")?;
    let mean = cur.f64("target mean")?;
    let scale = cur.f64("target scale")?;
    let config = RegressorTrainConfig {
        epochs: cur.u64("epochs")? as usize,
        batch_size: cur.u64("batch size")? as usize,
        learning_rate: cur.f64("learning rate")?,
        hidden: cur.u64("hidden width")? as usize,
        seed: cur.u64("seed")?,
    };
    let net = get_network(cur)?;
    AttributeRegressor::from_parts(attribute, net, mean, scale, config).map_err(|e| cur.error(start, e.to_string()))
}

fn put_synthesis(b: &mut Vec<u8>, phi: &EncoderDecoder) {
    put_str(b, &phi.attribute);
    put_u32(b, phi.interval as u32);
    put_u32(b, phi.target_index as u32);
    put_f64(b, phi.bounds.0);
    put_f64(b, phi.bounds.1);
    put_f64(b, phi.target);
    put_f64(b, phi.lambda);
    put_network(b, &phi.network);
}

fn get_synthesis(cur: &mut Cursor) -> Result<EncoderDecoder> {
    let start = cur.position();
    let phi = EncoderDecoder {
        attribute: cur.string("synthesis attribute")?,
        interval: cur.u32("interval index")? as usize,
        target_index: cur.u32("target index")? as usize,
        bounds: (cur.f64("interval low")?, cur.f64("interval high")?),
        target: cur.f64("target")?,
        lambda: cur.f64("lambda")?,
        network: get_network(cur)?,
    };
    if phi.network.output_dim() != phi.network.input_dim() {
        return Err(cur.error(start, "synthesis network must map D to D"));
    }
    Ok(phi)
}

fn put_svm(b: &mut Vec<u8>, m: &LinearSvmModel) {
    put_u32(b, m.class_ids.len() as u32);
    put_u32(b, m.dim() as u32);
    put_f64(b, m.cost);
    for ((id, w), bias) in m.class_ids.iter().zip(&m.weights).zip(&m.biases) {
        put_str(b, id);
        put_f64(b, *bias);
        w.iter().for_each(|x| put_f64(b, *x));
    }
}

fn get_svm(cur: &mut Cursor) -> Result<LinearSvmModel> {
    let at = cur.position();
    let n = cur.u32("class count")? as usize;
    let d = cur.u32("svm dimension")? as usize;
    if n.saturating_mul(d.saturating_add(1)).saturating_mul(8) > cur.remaining() {
        return Err(cur.error(at, "truncated svm weights"));
    }
    let mut m = LinearSvmModel {
        class_ids: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        biases: Vec::with_capacity(n),
        cost: cur.f64("svm cost")?,
    };
    for _ in 0..n {
        m.class_ids.push(cur.string("class id")?);
        m.biases.push(cur.f64("svm bias")?);
        m.weights.push((0..d).map(|_| cur.f64("svm weight")).collect::<Result<Vec<_>>>()?);
    }
    Ok(m)
}

fn put_grid(b: &mut Vec<u8>, g: &IntervalGrid) {
    put_str(b, &g.attribute);
    put_f64(b, g.range.0);
    put_f64(b, g.range.1);
    put_u32(b, g.intervals.len() as u32);
    for (l, h) in &g.intervals {
        put_f64(b, *l);
        put_f64(b, *h);
    }
    put_f64s(b, &g.targets);
}

fn get_grid(cur: &mut Cursor) -> Result<IntervalGrid> {
    let attribute = cur.string("grid attribute")?;
    let range = (cur.f64("range min")?, cur.f64("range max")?);
    let at = cur.position();
    let n = cur.u32("interval count")? as usize;
    if n.saturating_mul(16) > cur.remaining() {
        return Err(cur.error(at, "truncated intervals"));
    }
    let intervals = (0..n)
        .map(|_| Ok((cur.f64("interval low")?, cur.f64("interval high")?)))
        .collect::<Result<Vec<_>>>()?;
    let targets = get_f64s(cur, "targets")?;
    Ok(IntervalGrid {
        attribute,
        intervals,
        targets,
        range,
    })
}
