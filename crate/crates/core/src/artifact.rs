//! Binary container for generated models and hypernetwork checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "MGPT" | version u16 | text_len u32 | text (UTF-8 key=value lines)
//! | n_tensors u32 | per tensor: name_len u32, name, rank u8, dims u32 × rank, f32 × numel
//! | crc32 u32 over every preceding byte
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::arch::{parse_kv, ArchitectureSpec, SizeProfile};
use crate::encoder::{EncoderParams, TransformParams};
use crate::error::{Error, Result};
use crate::hypernet::Hypernet;
use crate::nn::{Linear, MlpParams};
use crate::paramgen::{layer_name, GeneratedModel, GeneratorParams, Provenance};
use crate::tensor::Tensor;
use crate::trainer::{Checkpoint, TrainConfig};

pub const MAGIC: &[u8; 4] = b"MGPT";
pub const VERSION: u16 = 1;
const MAX_RANK: usize = 8;

/// Decoded container contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub text: String,
    pub tensors: Vec<(String, Tensor)>,
}

pub fn encode_container(text: &str, tensors: &[(String, &Tensor)]) -> Vec<u8> {
    let payload: usize = tensors.iter().map(|(n, t)| 9 + n.len() + 4 * t.rank() + 4 * t.len()).sum();
    let mut out = Vec::with_capacity(4 + 2 + 4 + text.len() + 4 + payload + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(format!("truncated file while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_container(bytes: &[u8]) -> Result<Container> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format("bad magic bytes: expected \"MGPT\""));
    }
    if bytes.len() < 4 + 2 + 4 {
        return Err(Error::format("truncated file while reading header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::format(format!("unsupported format version {version}, expected {VERSION}")));
    }
    if bytes.len() < 4 + 2 + 4 + 4 + 4 {
        return Err(Error::format("truncated file"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let mut r = Reader { buf: body, pos: 6 };
    let text_len = r.u32("text length")? as usize;
    let text = std::str::from_utf8(r.take(text_len, "text block")?)
        .map_err(|_| Error::format("text block is not UTF-8"))?
        .to_string();
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let name_len = r.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::format(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let rank = r.take(1, "tensor rank")?[0] as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::format(format!("tensor {name} has unsupported rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dims")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::format(format!("tensor {name} has invalid shape {shape:?}")))?;
        let nbytes = numel
            .checked_mul(4)
            .ok_or_else(|| Error::format(format!("tensor {name} is too large")))?;
        let data = r
            .take(nbytes, "tensor data")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push((name, Tensor::new(shape, data).map_err(|e| Error::format(e.to_string()))?));
    }
    if r.pos != body.len() {
        return Err(Error::format(format!("{} trailing bytes before checksum", body.len() - r.pos)));
    }
    let crc = crc32fast::hash(body);
    if crc != stored {
        return Err(Error::format(format!("checksum mismatch: stored {stored:08x}, computed {crc:08x}")));
    }
    Ok(Container { text, tensors })
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n").replace('\r', "\\r")
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(Error::format(format!("bad escape \\{}", other.map_or(String::new(), String::from)))),
        }
    }
    Ok(out)
}

fn field<'a>(kv: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    kv.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::format(format!("missing header key {key:?}")))
}

fn number<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
    field(kv, key)?
        .parse()
        .map_err(|_| Error::format(format!("header key {key:?} is not a valid number")))
}

fn check_kind(kv: &BTreeMap<String, String>, want: &str) -> Result<()> {
    let kind = field(kv, "kind")?;
    if kind != want {
        return Err(Error::format(format!("file holds a {kind}, expected a {want}")));
    }
    Ok(())
}

pub fn encode_model(model: &GeneratedModel) -> Vec<u8> {
    let mut text = String::from("kind=model\n");
    text.push_str(&model.spec.to_text());
    let p = &model.provenance;
    let _ = writeln!(text, "requirement={}", escape(&p.requirement));
    let _ = writeln!(text, "checkpoint_id={}", escape(&p.checkpoint_id));
    let _ = writeln!(text, "timestamp={}", p.timestamp);
    let mut tensors = Vec::with_capacity(2 * model.params.layers().len());
    for (k, l) in model.params.layers().iter().enumerate() {
        tensors.push((format!("{}.weight", layer_name(k)), &l.weight));
        tensors.push((format!("{}.bias", layer_name(k)), &l.bias));
    }
    encode_container(&text, &tensors)
}

pub fn decode_model(bytes: &[u8]) -> Result<GeneratedModel> {
    let c = decode_container(bytes)?;
    let kv = parse_kv(&c.text)?;
    check_kind(&kv, "model")?;
    let spec = ArchitectureSpec::from_text(&c.text).map_err(|e| Error::format(e.to_string()))?;
    let provenance = Provenance {
        requirement: unescape(field(&kv, "requirement")?)?,
        checkpoint_id: unescape(field(&kv, "checkpoint_id")?)?,
        timestamp: number(&kv, "timestamp")?,
    };
    if c.tensors.len() % 2 != 0 {
        return Err(Error::format("model tensors must come in weight/bias pairs"));
    }
    let layers = c
        .tensors
        .chunks_exact(2)
        .enumerate()
        .map(|(k, pair)| {
            let [(wn, w), (bn, b)] = pair else { unreachable!() };
            let name = layer_name(k);
            if *wn != format!("{name}.weight") || *bn != format!("{name}.bias") {
                return Err(Error::format(format!("unexpected tensors {wn:?}, {bn:?} for {name}")));
            }
            Linear::new(w.clone(), b.clone()).map_err(|e| Error::format(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let params = MlpParams::new(layers).map_err(|e| Error::format(e.to_string()))?;
    GeneratedModel::new(spec, params, provenance).map_err(|e| Error::format(e.to_string()))
}

pub fn save_model(model: &GeneratedModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<GeneratedModel> {
    decode_model(&std::fs::read(path)?)
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut text = String::from("kind=checkpoint\n");
    let _ = writeln!(text, "epoch={}", ckpt.epoch);
    let _ = writeln!(text, "avg_eval_loss_bits={:016x}", ckpt.avg_eval_loss.to_bits());
    let _ = writeln!(text, "hidden_dim={}", ckpt.hypernet.profile.hidden_dim);
    let _ = writeln!(text, "n_layers={}", ckpt.hypernet.profile.n_layers);
    let _ = writeln!(text, "config={}", escape(&ckpt.config.to_toml()));
    let _ = writeln!(text, "task_count={}", ckpt.tasks.len());
    for (i, t) in ckpt.tasks.iter().enumerate() {
        let _ = writeln!(text, "task.{i}={}", escape(t));
    }
    encode_container(&text, &ckpt.hypernet.named_tensors())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let c = decode_container(bytes)?;
    let kv = parse_kv(&c.text)?;
    check_kind(&kv, "checkpoint")?;
    let epoch = number(&kv, "epoch")?;
    let bits = u64::from_str_radix(field(&kv, "avg_eval_loss_bits")?, 16)
        .map_err(|_| Error::format("avg_eval_loss_bits is not hex"))?;
    let profile = SizeProfile {
        hidden_dim: number(&kv, "hidden_dim")?,
        n_layers: number(&kv, "n_layers")?,
    };
    let config = TrainConfig::from_toml(&unescape(field(&kv, "config")?)?).map_err(|e| Error::format(e.to_string()))?;
    let n_tasks: usize = number(&kv, "task_count")?;
    if n_tasks > kv.len() {
        return Err(Error::format("task_count exceeds header size"));
    }
    let tasks = (0..n_tasks)
        .map(|i| unescape(field(&kv, &format!("task.{i}"))?))
        .collect::<Result<Vec<_>>>()?;
    let hypernet = hypernet_from_tensors(c.tensors, profile)?;
    Ok(Checkpoint {
        hypernet,
        config,
        epoch,
        avg_eval_loss: f64::from_bits(bits),
        tasks,
    })
}

fn hypernet_from_tensors(tensors: Vec<(String, Tensor)>, profile: SizeProfile) -> Result<Hypernet> {
    let mut map: BTreeMap<String, Tensor> = BTreeMap::new();
    for (n, t) in tensors {
        if map.insert(n.clone(), t).is_some() {
            return Err(Error::format(format!("duplicate tensor {n:?}")));
        }
    }
    let mut take = |n: &str| map.remove(n).ok_or_else(|| Error::format(format!("missing tensor {n:?}")));
    let fmt_err = |e: Error| Error::format(e.to_string());
    let linear = |w: Tensor, b: Tensor| Linear::new(w, b).map_err(fmt_err);
    let encoder = EncoderParams {
        cls: take("encoder.cls")?,
        table: take("encoder.table")?,
        mix: linear(take("encoder.mix.weight")?, take("encoder.mix.bias")?)?,
    };
    let transform = TransformParams {
        first: linear(take("transform.first.weight")?, take("transform.first.bias")?)?,
        second: linear(take("transform.second.weight")?, take("transform.second.bias")?)?,
    };
    let latent = transform.latent_dim();
    let mut heads = BTreeMap::new();
    let keys: Vec<String> = map
        .keys()
        .filter_map(|k| k.strip_prefix("head.")?.strip_suffix(".weight").map(str::to_string))
        .collect();
    for key in keys {
        let w = map.remove(&format!("head.{key}.weight")).expect("listed");
        let b = map
            .remove(&format!("head.{key}.bias"))
            .ok_or_else(|| Error::format(format!("head {key:?} has no bias")))?;
        heads.insert(key, linear(w, b)?);
    }
    if let Some(extra) = map.keys().next() {
        return Err(Error::format(format!("unexpected tensor {extra:?}")));
    }
    let generator = GeneratorParams::from_heads(latent, heads).map_err(fmt_err)?;
    let net = Hypernet::from_parts(encoder, transform, generator, profile);
    net.validate().map_err(fmt_err)?;
    Ok(net)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
