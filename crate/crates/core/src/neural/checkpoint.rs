use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Dims, ModelKind, NeuralModel, Params};
use crate::corpus::AppCatalog;
use crate::ranking::Popularity;
use crate::text::Vocabulary;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"APPSELNT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    vocab_size: usize,
    dim: usize,
    hidden: (usize, usize),
    seed: u64,
    dropout: f64,
    apps: Vec<String>,
    popularity: Vec<usize>,
}

fn vocab_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".vocab");
    PathBuf::from(p)
}

/// Binary layout: magic, `u32` version, `u32` header length, JSON header,
/// then every tensor as little-endian `f64` in row-major order
/// (E, W, A, W1, b1, W2, b2, W3, b3).
pub fn write_checkpoint(model: &NeuralModel, mut out: impl Write) -> Result<()> {
    let dims = model.dims();
    let header = Header {
        kind: model.kind(),
        vocab_size: dims.vocab,
        dim: dims.dim,
        hidden: dims.hidden,
        seed: model.seed(),
        dropout: model.dropout(),
        apps: model.catalog_arc().names().to_vec(),
        popularity: model.popularity().counts().to_vec(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::ModelFormat(e.to_string()))?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    for tensor in model.params().slices() {
        for v in tensor {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut buf = [0; 4];
    input.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::ModelFormat("checkpoint is truncated".into())
    } else {
        Error::Io(e)
    }
}

/// Parse a checkpoint given the vocabulary terms in id order.
pub fn read_checkpoint(mut input: impl Read, terms: &[String]) -> Result<NeuralModel> {
    let mut magic = [0; 8];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::ModelFormat("not a neural checkpoint".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported checkpoint version {version}")));
    }
    let len = read_u32(&mut input)? as usize;
    let mut json = vec![0; len];
    input.read_exact(&mut json).map_err(truncated)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if header.vocab_size != terms.len() {
        return Err(Error::ModelFormat(format!(
            "header lists {} terms, vocabulary file has {}",
            header.vocab_size,
            terms.len()
        )));
    }
    let dims = Dims {
        kind: header.kind,
        vocab: header.vocab_size,
        dim: header.dim,
        apps: header.apps.len(),
        hidden: header.hidden,
    };
    let mut params = Params::zeros(&dims);
    let mut buf = [0; 8];
    for tensor in params.slices_mut() {
        for v in tensor.iter_mut() {
            input.read_exact(&mut buf).map_err(truncated)?;
            *v = f64::from_le_bytes(buf);
        }
    }
    if input.read(&mut buf)? != 0 {
        return Err(Error::ModelFormat("trailing bytes after the last tensor".into()));
    }
    let catalog = Arc::new(AppCatalog::from_names(&header.apps));
    if catalog.len() != header.apps.len() {
        return Err(Error::ModelFormat("duplicate app names in header".into()));
    }
    let popularity = Popularity::from_counts(header.popularity, &catalog);
    let vocab = Vocabulary::build(std::iter::once(terms.iter()));
    NeuralModel::new(header.kind, params, &vocab, catalog, popularity, header.seed, header.dropout)
}

/// Write `path` and the sidecar `path.vocab` (one term per line).
pub fn save_checkpoint(model: &NeuralModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let write = |p: &Path, body: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let mut out = BufWriter::new(File::create(p).map_err(|e| Error::file(p, e))?);
        body(&mut out)?;
        out.flush().map_err(|e| Error::file(p, e))
    };
    write(path, &|out| write_checkpoint(model, out))?;
    write(&vocab_path(path), &|out| {
        for term in model.vocab().terms() {
            writeln!(out, "{term}")?;
        }
        Ok(())
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NeuralModel> {
    let path = path.as_ref();
    let vp = vocab_path(path);
    let vocab_file = File::open(&vp).map_err(|e| Error::file(&vp, e))?;
    let terms = BufReader::new(vocab_file)
        .lines()
        .collect::<std::io::Result<Vec<String>>>()
        .map_err(|e| Error::file(&vp, e))?;
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_checkpoint(BufReader::new(file), &terms)
}
