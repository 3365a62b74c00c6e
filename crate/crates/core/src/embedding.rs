//! Embeddings, token-aligned embedding pairs, and the word2vec/GloVe text
//! format.
//!
//! The text format is one vector per line, `token v_1 ... v_d`, separated by
//! spaces, with an optional `n d` header line (word2vec). GloVe files are the
//! headerless case.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomically;
use crate::linalg::{norm, Matrix};

/// An ordered vocabulary of unique tokens and one row vector per token.
#[derive(Clone, Debug)]
pub struct Embedding {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Matrix,
}

fn validate_token(token: &str) -> Result<()> {
    if token.is_empty() || token.chars().any(char::is_whitespace) {
        return Err(Error::InvalidToken(token.to_owned()));
    }
    Ok(())
}

impl Embedding {
    /// Checks that tokens are valid and unique and that there is one finite
    /// row per token.
    pub fn new(tokens: Vec<String>, matrix: Matrix) -> Result<Self> {
        if tokens.len() != matrix.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} tokens for {} rows",
                tokens.len(),
                matrix.rows()
            )));
        }
        if matrix.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("embedding contains non-finite entries".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            validate_token(t)?;
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::DuplicateToken {
                    token: t.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Embedding {
            tokens,
            index,
            matrix,
        })
    }

    /// Convenience constructor from `(token, vector)` rows.
    pub fn from_rows<S: Into<String>>(rows: Vec<(S, Vec<f64>)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("embedding has no rows".into()));
        }
        let (tokens, vecs): (Vec<String>, Vec<Vec<f64>>) =
            rows.into_iter().map(|(t, v)| (t.into(), v)).unzip();
        Embedding::new(tokens, Matrix::from_rows(&vecs)?)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.matrix.row(i))
    }

    /// Same tokens, new rows.
    pub fn with_matrix(&self, matrix: Matrix) -> Result<Self> {
        if matrix.rows() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows for {} tokens",
                matrix.rows(),
                self.len()
            )));
        }
        if matrix.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("embedding contains non-finite entries".into()));
        }
        Ok(Embedding {
            tokens: self.tokens.clone(),
            index: self.index.clone(),
            matrix,
        })
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("selection is empty".into()));
        }
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut tokens = Vec::with_capacity(indices.len());
        for &i in indices {
            tokens.push(self.tokens[i].clone());
            data.extend_from_slice(self.matrix.row(i));
        }
        Embedding::new(tokens, Matrix::from_vec_unchecked(indices.len(), d, data))
    }

    /// Euclidean norm of every row.
    pub fn row_norms(&self) -> Vec<f64> {
        self.matrix.row_iter().map(norm).collect()
    }

    /// Reads the text format from a file.
    pub fn load_text(path: impl AsRef<Path>, header: HeaderMode) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Embedding::read_text(BufReader::new(file), header).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    /// Reads the text format from any buffered reader.
    pub fn read_text<R: BufRead>(reader: R, header: HeaderMode) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut data = Vec::new();
        let mut index = HashMap::new();
        let mut dim: Option<usize> = None;
        let mut declared: Option<(usize, usize)> = None;
        let mut first = true;

        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io("<reader>", e))?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            if first {
                first = false;
                let parsed = parse_header(line);
                match (header, parsed) {
                    (HeaderMode::Yes, None) => {
                        return Err(Error::MalformedLine {
                            line: lineno,
                            reason: "expected header `n d`".into(),
                        })
                    }
                    (HeaderMode::Yes | HeaderMode::Auto, Some((n, d))) => {
                        declared = Some((n, d));
                        dim = Some(d);
                        continue;
                    }
                    _ => {}
                }
            }
            let token = fields.next().expect("line is not blank");
            let start = data.len();
            for (col, text) in fields.enumerate() {
                let value: f64 = text.parse().map_err(|_| Error::MalformedFloat {
                    line: lineno,
                    column: col + 2,
                    text: text.to_owned(),
                })?;
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        line: lineno,
                        column: col + 2,
                    });
                }
                data.push(value);
            }
            let found = data.len() - start;
            if found == 0 {
                return Err(Error::MalformedLine {
                    line: lineno,
                    reason: format!("token {token:?} has no vector components"),
                });
            }
            match dim {
                None => dim = Some(found),
                Some(expected) if expected != found => {
                    return Err(Error::InconsistentDim {
                        line: lineno,
                        expected,
                        found,
                    })
                }
                _ => {}
            }
            if index.insert(token.to_owned(), tokens.len()).is_some() {
                return Err(Error::DuplicateToken {
                    token: token.to_owned(),
                    line: lineno,
                });
            }
            tokens.push(token.to_owned());
        }

        if tokens.is_empty() {
            return Err(Error::EmptyInput("no embedding rows".into()));
        }
        if let Some((n, d)) = declared {
            if n != tokens.len() {
                return Err(Error::HeaderMismatch {
                    declared: format!("{n} rows of dimension {d}"),
                    found: format!("{} rows", tokens.len()),
                });
            }
        }
        let d = dim.expect("at least one row");
        Ok(Embedding {
            matrix: Matrix::from_vec_unchecked(tokens.len(), d, data),
            tokens,
            index,
        })
    }

    /// Writes the text format atomically.
    pub fn save_text(&self, path: impl AsRef<Path>, with_header: bool) -> Result<()> {
        for t in &self.tokens {
            validate_token(t)?;
        }
        write_atomically(path.as_ref(), |w| self.write_text(w, with_header))
    }

    /// Writes the text format. Floats use the shortest representation that
    /// parses back to the identical `f64`.
    pub fn write_text<W: Write>(&self, w: &mut W, with_header: bool) -> std::io::Result<()> {
        if with_header {
            writeln!(w, "{} {}", self.len(), self.dim())?;
        }
        for (t, row) in self.tokens.iter().zip(self.matrix.row_iter()) {
            w.write_all(t.as_bytes())?;
            for x in row {
                write!(w, " {x}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// The first `k` rows in stored order.
    pub fn top_k(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.len() {
            return Err(Error::OutOfRange {
                what: "k",
                value: k.to_string(),
                allowed: format!("1..={}", self.len()),
            });
        }
        self.select(&(0..k).collect::<Vec<_>>())
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let n = it.next()?.parse::<usize>().ok()?;
    let d = it.next()?.parse::<usize>().ok()?;
    (it.next().is_none() && n > 0 && d > 0).then_some((n, d))
}

/// Whether the first line of a text file is an `n d` header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// Header iff the first line is exactly two positive integers.
    #[default]
    Auto,
    Yes,
    No,
}

/// Row order of an intersected pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IntersectOrder {
    /// Order of appearance in the target.
    #[default]
    TargetOrder,
    /// Ascending combined rank (position in target + position in source),
    /// ties broken by target position.
    FrequencyRank,
}

/// Two embeddings over the same tokens in the same order: row `i` of the
/// target corresponds to row `i` of the source.
#[derive(Clone, Debug)]
pub struct AlignedPair {
    pub target: Embedding,
    pub source: Embedding,
}

impl AlignedPair {
    pub fn new(target: Embedding, source: Embedding) -> Result<Self> {
        if target.dim() != source.dim() {
            return Err(Error::DimMismatch {
                left: target.dim(),
                right: source.dim(),
            });
        }
        if target.tokens() != source.tokens() {
            return Err(Error::Invalid(
                "aligned pair requires identical token order".into(),
            ));
        }
        Ok(AlignedPair { target, source })
    }

    /// Pairs two matrices under shared tokens.
    pub fn from_matrices(tokens: Vec<String>, target: Matrix, source: Matrix) -> Result<Self> {
        let target = Embedding::new(tokens, target)?;
        let source = target.with_matrix(source)?;
        AlignedPair::new(target, source)
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn tokens(&self) -> &[String] {
        self.target.tokens()
    }

    /// The first `k` shared tokens.
    pub fn top_k(&self, k: usize) -> Result<Self> {
        Ok(AlignedPair {
            target: self.target.top_k(k)?,
            source: self.source.top_k(k)?,
        })
    }
}

/// Restricts two embeddings to their shared tokens.
pub fn intersect(a: &Embedding, b: &Embedding, order: IntersectOrder) -> Result<AlignedPair> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let mut shared: Vec<(usize, usize)> = a
        .tokens()
        .iter()
        .enumerate()
        .filter_map(|(i, t)| b.index_of(t).map(|j| (i, j)))
        .collect();
    if shared.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    if order == IntersectOrder::FrequencyRank {
        shared.sort_by_key(|&(i, j)| (i + j, i));
    }
    let (ia, ib): (Vec<usize>, Vec<usize>) = shared.into_iter().unzip();
    let target = a.select(&ia)?;
    let source = b.select(&ib)?;
    AlignedPair::new(target, source)
}

/// Tokens with one or more vectors each (one per occurrence context).
#[derive(Clone, Debug)]
pub struct ContextualEmbedding {
    tokens: Vec<String>,
    instances: Vec<Matrix>,
}

impl ContextualEmbedding {
    /// `instances[i]` holds the vectors of `tokens[i]`, one per row.
    pub fn new(tokens: Vec<String>, instances: Vec<Matrix>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("contextual embedding has no tokens".into()));
        }
        if tokens.len() != instances.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} tokens for {} instance sets",
                tokens.len(),
                instances.len()
            )));
        }
        let d = instances[0].cols();
        let mut seen = HashMap::new();
        for (i, (t, inst)) in tokens.iter().zip(&instances).enumerate() {
            validate_token(t)?;
            if seen.insert(t.as_str(), i).is_some() {
                return Err(Error::DuplicateToken {
                    token: t.clone(),
                    line: i + 1,
                });
            }
            if inst.rows() == 0 {
                return Err(Error::EmptyInput(format!("token {t:?} has no instances")));
            }
            if inst.cols() != d {
                return Err(Error::DimMismatch {
                    left: d,
                    right: inst.cols(),
                });
            }
        }
        Ok(ContextualEmbedding { tokens, instances })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn instances(&self) -> &[Matrix] {
        &self.instances
    }

    pub fn dim(&self) -> usize {
        self.instances[0].cols()
    }

    pub fn instances_of(&self, token: &str) -> Option<&Matrix> {
        self.tokens
            .iter()
            .position(|t| t == token)
            .map(|i| &self.instances[i])
    }

    /// One row per token: the mean of its instance vectors.
    pub fn collapse_means(&self) -> Embedding {
        let d = self.dim();
        let mut data = Vec::with_capacity(self.tokens.len() * d);
        for inst in &self.instances {
            let mut mean = vec![0.0; d];
            for row in inst.row_iter() {
                mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
            }
            let m = inst.rows() as f64;
            data.extend(mean.into_iter().map(|x| x / m));
        }
        Embedding::new(
            self.tokens.clone(),
            Matrix::from_vec_unchecked(self.tokens.len(), d, data),
        )
        .expect("validated at construction")
    }
}
