//! Pre-trained word vectors and fixed-size tweet input matrices.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::{Arc, RwLock};

use ndarray::{Array2, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text::Token;

/// Half-width of the uniform range used for out-of-vocabulary vectors.
pub const OOV_RANGE: f64 = 0.25;

/// Token to vector mapping with deterministic vectors for unseen tokens.
#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    oov_seed: u64,
    oov_cache: RwLock<HashMap<String, Arc<[f64]>>>,
    duplicates: usize,
}

impl EmbeddingTable {
    /// Builds a table from in-memory entries. Later duplicates overwrite
    /// earlier ones.
    pub fn from_entries<I, S>(dim: usize, entries: I, oov_seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::Embedding(
                "embedding dimension must be positive".into(),
            ));
        }
        let mut table = Self::empty(dim, oov_seed);
        for (token, vector) in entries {
            if vector.len() != dim {
                return Err(Error::Embedding(format!(
                    "expected {dim} components, got {}",
                    vector.len()
                )));
            }
            table.insert(token.into(), &vector);
        }
        Ok(table)
    }

    fn empty(dim: usize, oov_seed: u64) -> Self {
        EmbeddingTable {
            dim,
            index: HashMap::new(),
            vectors: Vec::new(),
            oov_seed,
            oov_cache: RwLock::new(HashMap::new()),
            duplicates: 0,
        }
    }

    fn insert(&mut self, token: String, vector: &[f64]) {
        match self.index.get(&token) {
            Some(&row) => {
                self.duplicates += 1;
                log::warn!("duplicate embedding for '{token}', keeping the last one");
                self.vectors[row * self.dim..(row + 1) * self.dim].copy_from_slice(vector);
            }
            None => {
                self.index.insert(token, self.vectors.len() / self.dim);
                self.vectors.extend_from_slice(vector);
            }
        }
    }

    /// Reads the text format: a `V D` header line, then `token c1 .. cD` rows.
    pub fn from_reader<R: BufRead>(reader: R, oov_seed: u64) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, line)) => {
                    let line = line.map_err(|e| Error::Embedding(e.to_string()))?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(Error::Embedding("missing header line".into())),
            }
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse = |s: &str| s.parse::<usize>().ok();
        let (vocab, dim) = match fields.as_slice() {
            [v, d] => match (parse(v), parse(d)) {
                (Some(v), Some(d)) if d > 0 => (v, d),
                _ => return Err(Error::Embedding(format!("bad header '{header}' at line 1"))),
            },
            _ => return Err(Error::Embedding(format!("bad header '{header}' at line 1"))),
        };

        let mut table = Self::empty(dim, oov_seed);
        let mut rows = 0;
        let mut vector = Vec::with_capacity(dim);
        for (i, line) in lines {
            let number = i + 1;
            let line = line.map_err(|e| Error::Embedding(format!("line {number}: {e}")))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            vector.clear();
            for part in parts {
                let value = part.parse::<f64>().map_err(|_| {
                    Error::Embedding(format!("non-numeric component '{part}' at line {number}"))
                })?;
                vector.push(value);
            }
            if vector.len() != dim {
                return Err(Error::Embedding(format!(
                    "expected {dim} components at line {number}"
                )));
            }
            table.insert(token.to_string(), &vector);
            rows += 1;
        }
        if rows != vocab {
            log::warn!("embedding header announces {vocab} rows, file has {rows}");
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>, oov_seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), oov_seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    /// Number of duplicate rows overwritten while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Vector for `token`, generating and caching one for unseen tokens.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.lookup_into(token, &mut out);
        out
    }

    /// Writes the vector for `token` into `out`, which must have length `dim`.
    pub fn lookup_into(&self, token: &str, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        if let Some(&row) = self.index.get(token) {
            out.copy_from_slice(&self.vectors[row * self.dim..(row + 1) * self.dim]);
            return;
        }
        if let Some(cached) = self
            .oov_cache
            .read()
            .expect("oov cache poisoned")
            .get(token)
        {
            out.copy_from_slice(cached);
            return;
        }
        let vector: Arc<[f64]> = oov_vector(self.oov_seed, token, self.dim).into();
        out.copy_from_slice(&vector);
        self.oov_cache
            .write()
            .expect("oov cache poisoned")
            .entry(token.to_string())
            .or_insert(vector);
    }
}

/// Uniform [-0.25, 0.25] vector keyed only by `(seed, token)`.
pub fn oov_vector(seed: u64, token: &str, dim: usize) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(token.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    (0..dim)
        .map(|_| rng.random_range(-OOV_RANGE..=OOV_RANGE))
        .collect()
}

/// A tweet as a `d x maxl` matrix, one token vector per column.
///
/// Columns are contiguous in memory (column-major storage), so the window of
/// `m` consecutive tokens starting at column `j` is one contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct InputMatrix {
    values: Array2<f64>,
    length: usize,
}

impl InputMatrix {
    /// Wraps a `d x maxl` matrix whose first `length` columns hold tokens.
    pub fn new(values: Array2<f64>, length: usize) -> Result<Self> {
        let (_, maxl) = values.dim();
        if length > maxl {
            return Err(Error::Shape(format!("length {length} exceeds maxl {maxl}")));
        }
        let mut stored = Array2::zeros(values.raw_dim().f());
        stored.assign(&values);
        Ok(InputMatrix {
            values: stored,
            length,
        })
    }

    pub fn zeros(dim: usize, maxl: usize) -> Self {
        InputMatrix {
            values: Array2::zeros((dim, maxl).f()),
            length: 0,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Number of token columns in use; later columns are zero.
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn maxl(&self) -> usize {
        self.values.ncols()
    }

    /// Token-major view of the data: column `j` occupies
    /// `[j * dim, (j + 1) * dim)`.
    pub fn token_major(&self) -> &[f64] {
        self.values
            .as_slice_memory_order()
            .expect("input matrix is contiguous")
    }

    pub(crate) fn token_major_mut(&mut self) -> &mut [f64] {
        self.values
            .as_slice_memory_order_mut()
            .expect("input matrix is contiguous")
    }
}

/// Embeds `tokens` column by column, truncating past `maxl` and zero-padding
/// the rest.
pub fn build_input_matrix(
    table: &EmbeddingTable,
    tokens: &[Token],
    maxl: usize,
) -> Result<InputMatrix> {
    if tokens.is_empty() {
        return Err(Error::EmptyTokens);
    }
    if maxl == 0 {
        return Err(Error::InvalidHyperparams("maxl must be at least 1".into()));
    }
    let dim = table.dim();
    let mut matrix = InputMatrix::zeros(dim, maxl);
    let length = tokens.len().min(maxl);
    let data = matrix.token_major_mut();
    for (j, token) in tokens.iter().take(length).enumerate() {
        table.lookup_into(token.as_str(), &mut data[j * dim..(j + 1) * dim]);
    }
    matrix.length = length;
    Ok(matrix)
}
