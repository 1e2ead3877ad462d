//! Versioned binary model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SVT1"                      magic
//! u32                         format version
//! u32 + UTF-8 bytes           header: `key=value` lines
//! u32                         tensor count
//! per tensor:
//!   u32                       rank
//!   u64 * rank                dims
//!   f32 * prod(dims)          values, row-major
//! ```
//!
//! The header carries the hyperparameters, the class order, the init seed
//! and any provenance keys (prefixed `config.`). Tensors follow the order of
//! [`NetworkParams::tensors`].

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::label::class_order_string;
use crate::model::{Hyperparams, Model, NetworkParams};

pub const MAGIC: &[u8; 4] = b"SVT1";
pub const VERSION: u32 = 1;
const PROVENANCE_PREFIX: &str = "config.";

/// A model plus the provenance keys stored alongside it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub provenance: Vec<(String, String)>,
}

fn join_sizes(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn header_text(model: &Model, provenance: &[(String, String)]) -> String {
    let h = &model.hyper;
    let mut lines = vec![
        "format=convsent-model".to_string(),
        format!("dim={}", h.dim),
        format!("maxl={}", h.maxl),
        format!("filter_sizes={}", join_sizes(&h.filter_sizes)),
        format!("feature_maps={}", h.feature_maps),
        format!("dropout_p={}", h.dropout_p),
        format!("fc_units={}", h.fc_units),
        format!("classes={}", h.classes),
        format!("class_order={}", class_order_string()),
        format!("init_seed={}", model.params.init_seed),
    ];
    for (k, v) in provenance {
        lines.push(format!("{PROVENANCE_PREFIX}{k}={}", v.replace('\n', " ")));
    }
    let mut text = lines.join("\n");
    text.push('\n');
    text
}

pub fn to_bytes(model: &Model, provenance: &[(String, String)]) -> Vec<u8> {
    let header = header_text(model, provenance);
    let mut out = Vec::with_capacity(16 + header.len() + 4 * model.params.num_values());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    let shapes = model.params.tensor_shapes();
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for (shape, values) in shapes.iter().zip(model.params.tensors()) {
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &dim in shape {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn save_model(
    model: &Model,
    path: impl AsRef<Path>,
    provenance: &[(String, String)],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model, provenance)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Hyperparameters, init seed and provenance pairs read from a header.
type Header = (Hyperparams, u64, Vec<(String, String)>);

fn parse_header(text: &str) -> Result<Header> {
    let mut hyper = Hyperparams::default();
    let mut seen = Vec::new();
    let mut init_seed = 0;
    let mut provenance = Vec::new();
    let bad = |what: &str| Error::CorruptHeader(what.to_string());
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (key, value) = line.split_once('=').ok_or_else(|| bad(line))?;
        if let Some(k) = key.strip_prefix(PROVENANCE_PREFIX) {
            provenance.push((k.to_string(), value.to_string()));
            continue;
        }
        let num = || value.parse::<usize>().map_err(|_| bad(line));
        match key {
            "format" if value == "convsent-model" => {}
            "format" => return Err(bad(line)),
            "dim" => hyper.dim = num()?,
            "maxl" => hyper.maxl = num()?,
            "feature_maps" => hyper.feature_maps = num()?,
            "fc_units" => hyper.fc_units = num()?,
            "classes" => hyper.classes = num()?,
            "dropout_p" => hyper.dropout_p = value.parse().map_err(|_| bad(line))?,
            "init_seed" => init_seed = value.parse().map_err(|_| bad(line))?,
            "filter_sizes" => {
                hyper.filter_sizes = value
                    .split(',')
                    .map(|s| s.parse::<usize>().map_err(|_| bad(line)))
                    .collect::<Result<_>>()?
            }
            "class_order" if value == class_order_string() => {}
            "class_order" => {
                return Err(Error::CorruptHeader(format!(
                    "unsupported class order '{value}'"
                )))
            }
            _ => continue,
        }
        seen.push(key.to_string());
    }
    for required in [
        "dim",
        "maxl",
        "filter_sizes",
        "feature_maps",
        "dropout_p",
        "fc_units",
        "classes",
        "class_order",
    ] {
        if !seen.iter().any(|k| k == required) {
            return Err(Error::CorruptHeader(format!("missing key '{required}'")));
        }
    }
    hyper
        .validate()
        .map_err(|e| Error::CorruptHeader(e.to_string()))?;
    Ok((hyper, init_seed, provenance))
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelFile> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::NotAModelFile);
    }
    let mut cur = Cursor {
        bytes: &bytes[MAGIC.len()..],
    };
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let header_len = cur.u32()? as usize;
    let header = std::str::from_utf8(cur.take(header_len)?)
        .map_err(|_| Error::CorruptHeader("header is not UTF-8".into()))?;
    let (hyper, init_seed, provenance) = parse_header(header)?;

    let mut params = NetworkParams::zeros(&hyper);
    params.init_seed = init_seed;
    let shapes = params.tensor_shapes();
    let count = cur.u32()? as usize;
    if count != shapes.len() {
        return Err(Error::CorruptHeader(format!(
            "{count} tensors stored, {} expected",
            shapes.len()
        )));
    }
    for (expected, tensor) in shapes.iter().zip(params.tensors_mut()) {
        let rank = cur.u32()? as usize;
        let dims = (0..rank)
            .map(|_| cur.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if &dims != expected {
            return Err(Error::CorruptHeader(format!(
                "tensor shape {dims:?}, expected {expected:?}"
            )));
        }
        let raw = cur.take(4 * tensor.len())?;
        for (dst, chunk) in tensor.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
        }
    }
    if !cur.bytes.is_empty() {
        return Err(Error::CorruptHeader("trailing bytes after tensors".into()));
    }
    Ok(ModelFile {
        model: Model { hyper, params },
        provenance,
    })
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    Ok(load_model_file(path)?.model)
}
