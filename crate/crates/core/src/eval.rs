//! Quantitative checks of an alignment: RMSE and mean cosine, brute-force
//! cosine neighbours, Spearman similarity tests, cross-embedding analogy
//! tests, and Gaussian-noise calibration.
//!
//! Items whose tokens are missing from the relevant embedding are skipped
//! and counted; every report satisfies `evaluated + skipped = dataset size`.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use crate::align::{align_with, apply_to_pair, AlignOptions, Variant};
use crate::embedding::{AlignedPair, Embedding};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::rng::SeededRng;

/// `sqrt((1/n) Σ ‖a_i − b_i‖²)`.
pub fn rmse(pair: &AlignedPair) -> f64 {
    let sse: f64 = pair
        .target
        .matrix()
        .as_slice()
        .iter()
        .zip(pair.source.matrix().as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (sse / pair.len() as f64).sqrt()
}

/// Cosine similarity, `None` if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    (na > 0.0 && nb > 0.0).then(|| dot(a, b) / (na * nb))
}

/// `(1/n) Σ cos(a_i, b_i)`.
pub fn mean_cosine(pair: &AlignedPair) -> Result<f64> {
    let mut total = 0.0;
    for (i, (a, b)) in pair
        .target
        .matrix()
        .row_iter()
        .zip(pair.source.matrix().row_iter())
        .enumerate()
    {
        total += cosine(a, b).ok_or_else(|| Error::ZeroNormRow(pair.tokens()[i].clone()))?;
    }
    Ok(total / pair.len() as f64)
}

/// A candidate in a [`NeighborIndex`]: row `row` of the `part`-th embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub part: usize,
    pub row: usize,
}

/// A scored search result.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor<'a> {
    pub candidate: Candidate,
    pub token: &'a str,
    pub cosine: f64,
}

/// Brute-force cosine search over one or more embeddings.
///
/// Results are ordered by descending cosine, then ascending token bytes, then
/// part index, so ties always resolve the same way.
pub struct NeighborIndex<'a> {
    parts: Vec<&'a Embedding>,
    unit: Vec<Matrix>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(emb: &'a Embedding) -> Self {
        NeighborIndex::over(vec![emb]).expect("single embedding")
    }

    /// A pool spanning several embeddings of the same dimension.
    pub fn over(parts: Vec<&'a Embedding>) -> Result<Self> {
        let d = parts
            .first()
            .ok_or_else(|| Error::EmptyInput("no embeddings to search".into()))?
            .dim();
        if let Some(bad) = parts.iter().find(|e| e.dim() != d) {
            return Err(Error::DimMismatch {
                left: d,
                right: bad.dim(),
            });
        }
        let unit = parts
            .iter()
            .map(|e| {
                let data = e
                    .matrix()
                    .row_iter()
                    .flat_map(|row| {
                        let n = norm(row);
                        // Zero rows stay zero and score a cosine of 0.
                        let inv = if n > 0.0 { 1.0 / n } else { 0.0 };
                        row.iter().map(move |x| x * inv)
                    })
                    .collect();
                Matrix::from_vec_unchecked(e.len(), d, data)
            })
            .collect();
        Ok(NeighborIndex { parts, unit })
    }

    pub fn dim(&self) -> usize {
        self.parts[0].dim()
    }

    pub fn token(&self, c: Candidate) -> &'a str {
        &self.parts[c.part].tokens()[c.row]
    }

    fn order(&self, a: &Neighbor<'_>, b: &Neighbor<'_>) -> Ordering {
        b.cosine
            .total_cmp(&a.cosine)
            .then_with(|| a.token.as_bytes().cmp(b.token.as_bytes()))
            .then(a.candidate.part.cmp(&b.candidate.part))
    }

    /// The `k` best candidates for `query`, skipping those for which
    /// `excluded` returns true.
    pub fn search<F>(&self, query: &[f64], k: usize, excluded: F) -> Result<Vec<Neighbor<'a>>>
    where
        F: Fn(Candidate) -> bool,
    {
        if query.len() != self.dim() {
            return Err(Error::DimMismatch {
                left: query.len(),
                right: self.dim(),
            });
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(Error::ZeroNorm("query"));
        }
        let mut scored: Vec<Neighbor<'a>> = Vec::new();
        for (part, unit) in self.unit.iter().enumerate() {
            for (row, u) in unit.row_iter().enumerate() {
                let candidate = Candidate { part, row };
                if excluded(candidate) {
                    continue;
                }
                scored.push(Neighbor {
                    candidate,
                    token: self.token(candidate),
                    cosine: dot(query, u) / qn,
                });
            }
        }
        if scored.is_empty() {
            return Err(Error::EmptyInput("no candidates left after exclusion".into()));
        }
        if k == 0 || k > scored.len() {
            return Err(Error::OutOfRange {
                what: "k",
                value: k.to_string(),
                allowed: format!("1..={}", scored.len()),
            });
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, |a, b| self.order(a, b));
            scored.truncate(k);
        }
        scored.sort_by(|a, b| self.order(a, b));
        Ok(scored)
    }
}

/// Tokens of the `k` rows of `emb` nearest to `query` by cosine, after
/// removing `exclude`.
pub fn nearest_neighbors(
    emb: &Embedding,
    query: &[f64],
    k: usize,
    exclude: &[&str],
) -> Result<Vec<String>> {
    let skip: Vec<usize> = exclude.iter().filter_map(|t| emb.index_of(t)).collect();
    let index = NeighborIndex::new(emb);
    Ok(index
        .search(query, k, |c| skip.contains(&c.row))?
        .into_iter()
        .map(|n| n.token.to_owned())
        .collect())
}

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateRanks("one side has all values tied"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} observations",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::EmptyEvaluation(format!(
            "need at least 2 observations, have {}",
            x.len()
        )));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then_some((i + 1, l))
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Word pairs with human similarity judgements.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityDataset {
    pub items: Vec<(String, String, f64)>,
}

impl SimilarityDataset {
    pub fn new(items: Vec<(String, String, f64)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyInput("similarity dataset has no items".into()));
        }
        if items.iter().any(|(_, _, s)| !s.is_finite()) {
            return Err(Error::Invalid("similarity scores must be finite".into()));
        }
        Ok(SimilarityDataset { items })
    }

    /// `token1 <TAB> token2 <TAB> score` per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (line, l) in content_lines(text) {
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::MalformedLine {
                    line,
                    reason: format!("expected `token1 token2 score`, got {} fields", fields.len()),
                });
            }
            let score: f64 = fields[2].parse().map_err(|_| Error::MalformedFloat {
                line,
                column: 3,
                text: fields[2].to_owned(),
            })?;
            if !score.is_finite() {
                return Err(Error::NonFinite { line, column: 3 });
            }
            items.push((fields[0].to_owned(), fields[1].to_owned(), score));
        }
        SimilarityDataset::new(items)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SimilarityDataset::parse(&read_file(path.as_ref())?)
    }
}

/// `a : b :: c : d` quadruples.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalogyDataset {
    pub items: Vec<[String; 4]>,
}

impl AnalogyDataset {
    pub fn new(items: Vec<[String; 4]>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyInput("analogy dataset has no items".into()));
        }
        for q in &items {
            for i in 0..4 {
                for j in i + 1..4 {
                    if q[i] == q[j] {
                        return Err(Error::Invalid(format!(
                            "analogy {q:?} repeats token {:?}",
                            q[i]
                        )));
                    }
                }
            }
        }
        Ok(AnalogyDataset { items })
    }

    /// `a b c d` per line; `: section` headers and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (line, l) in content_lines(text) {
            if l.starts_with(':') {
                continue;
            }
            let fields: Vec<&str> = l.split_whitespace().collect();
            let quad: [&str; 4] = fields.as_slice().try_into().map_err(|_| Error::MalformedLine {
                line,
                reason: format!("expected `a b c d`, got {} fields", fields.len()),
            })?;
            items.push(quad.map(str::to_owned));
        }
        AnalogyDataset::new(items)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        AnalogyDataset::parse(&read_file(path.as_ref())?)
    }
}

/// Score of an evaluation: a single number or one number per cutoff `k`.
#[derive(Clone, Debug, PartialEq)]
pub enum Score {
    Scalar(f64),
    PerK(Vec<(usize, f64)>),
}

/// Outcome of an evaluation run.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub metric: String,
    pub score: Score,
    pub evaluated: usize,
    pub skipped: usize,
    /// Ordered free-form notes (parameters, coverage, ...).
    pub params: Vec<(String, String)>,
}

impl EvalReport {
    pub fn scalar(&self) -> Option<f64> {
        match self.score {
            Score::Scalar(s) => Some(s),
            Score::PerK(_) => None,
        }
    }

    pub fn at_k(&self, k: usize) -> Option<f64> {
        match &self.score {
            Score::PerK(v) => v.iter().find(|(kk, _)| *kk == k).map(|(_, s)| *s),
            Score::Scalar(_) => None,
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_owned(), value.to_string()));
        self
    }

    /// `metric<TAB>score<TAB>evaluated<TAB>skipped`, one line per score
    /// (`P@k` lines for per-k scores).
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        match &self.score {
            Score::Scalar(s) => {
                let _ = writeln!(out, "{}\t{}\t{}\t{}", self.metric, s, self.evaluated, self.skipped);
            }
            Score::PerK(v) => {
                for (k, s) in v {
                    let _ = writeln!(out, "P@{k}\t{s}\t{}\t{}", self.evaluated, self.skipped);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let score = match &self.score {
            Score::Scalar(s) => json!(s),
            Score::PerK(v) => json!(v
                .iter()
                .map(|(k, s)| (format!("P@{k}"), json!(s)))
                .collect::<serde_json::Map<_, _>>()),
        };
        let params: serde_json::Map<_, _> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), json!(v)))
            .collect();
        json!({
            "metric": self.metric,
            "score": score,
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "params": params,
        })
        .to_string()
    }
}

/// Which vectors a similarity pair is scored with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimilarityMode {
    /// `cos(target[w1], target[w2])`
    WithinTarget,
    /// `cos(target[w1], source[w2])`
    Cross,
}

/// Spearman correlation between model cosines and human scores.
pub fn similarity_eval(
    target: &Embedding,
    source: &Embedding,
    ds: &SimilarityDataset,
    mode: SimilarityMode,
) -> Result<EvalReport> {
    if target.dim() != source.dim() {
        return Err(Error::DimMismatch {
            left: target.dim(),
            right: source.dim(),
        });
    }
    let second = match mode {
        SimilarityMode::WithinTarget => target,
        SimilarityMode::Cross => source,
    };
    let mut model = Vec::new();
    let mut human = Vec::new();
    for (w1, w2, score) in &ds.items {
        let (Some(a), Some(b)) = (target.vector(w1), second.vector(w2)) else {
            continue;
        };
        model.push(cosine(a, b).unwrap_or(0.0));
        human.push(*score);
    }
    if model.len() < 2 {
        return Err(Error::EmptyEvaluation(format!(
            "{} of {} similarity pairs are in vocabulary; need at least 2",
            model.len(),
            ds.items.len()
        )));
    }
    let rho = spearman(&model, &human)?;
    Ok(EvalReport {
        metric: "spearman".into(),
        score: Score::Scalar(rho),
        evaluated: model.len(),
        skipped: ds.items.len() - model.len(),
        params: vec![(
            "mode".into(),
            match mode {
                SimilarityMode::WithinTarget => "within",
                SimilarityMode::Cross => "cross",
            }
            .into(),
        )],
    })
}

/// Analogy accuracy with top-1 correctness.
pub fn analogy_eval(target: &Embedding, source: &Embedding, ds: &AnalogyDataset) -> Result<EvalReport> {
    analogy_eval_top_k(target, source, ds, 1)
}

/// For each `a:b::c:d`, searches `target` for `source[c] + source[b] −
/// source[a]` with `a`, `b`, `c` excluded; correct iff `d` is among the top
/// `k`.
pub fn analogy_eval_top_k(
    target: &Embedding,
    source: &Embedding,
    ds: &AnalogyDataset,
    k: usize,
) -> Result<EvalReport> {
    if target.dim() != source.dim() {
        return Err(Error::DimMismatch {
            left: target.dim(),
            right: source.dim(),
        });
    }
    if k == 0 {
        return Err(Error::OutOfRange {
            what: "k",
            value: "0".into(),
            allowed: ">= 1".into(),
        });
    }
    let index = NeighborIndex::new(target);
    let outcomes: Vec<Option<bool>> = ds
        .items
        .par_iter()
        .map(|[a, b, c, d]| {
            let (Some(va), Some(vb), Some(vc)) = (source.vector(a), source.vector(b), source.vector(c))
            else {
                return None;
            };
            let gold = target.index_of(d)?;
            let query: Vec<f64> = vc
                .iter()
                .zip(vb)
                .zip(va)
                .map(|((c, b), a)| c + b - a)
                .collect();
            let skip: Vec<usize> = [a, b, c].iter().filter_map(|t| target.index_of(t)).collect();
            let available = target.len() - skip.len();
            match index.search(&query, k.min(available), |cand| skip.contains(&cand.row)) {
                Ok(hits) => Some(hits.iter().any(|h| h.candidate.row == gold)),
                // A zero query or an exhausted vocabulary cannot be answered.
                Err(_) => Some(false),
            }
        })
        .collect();
    let evaluated = outcomes.iter().flatten().count();
    if evaluated == 0 {
        return Err(Error::EmptyEvaluation(format!(
            "none of {} analogies is in vocabulary",
            ds.items.len()
        )));
    }
    let correct = outcomes.iter().flatten().filter(|&&ok| ok).count();
    Ok(EvalReport {
        metric: "analogy_accuracy".into(),
        score: Score::Scalar(correct as f64 / evaluated as f64),
        evaluated,
        skipped: ds.items.len() - evaluated,
        params: vec![("k".into(), k.to_string()), ("correct".into(), correct.to_string())],
    })
}

/// Gaussian perturbation of a random subset of rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Per-coordinate standard deviation.
    pub sigma: f64,
    /// Fraction of rows perturbed, in `(0, 1]`.
    pub fraction: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, fraction: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::OutOfRange {
                what: "sigma",
                value: sigma.to_string(),
                allowed: "> 0".into(),
            });
        }
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::OutOfRange {
                what: "fraction",
                value: fraction.to_string(),
                allowed: "(0, 1]".into(),
            });
        }
        Ok(NoiseSpec {
            sigma,
            fraction,
            seed,
        })
    }

    /// `⌈p·n⌉`, guarding against `p·n` landing a rounding error above an
    /// integer.
    pub fn rows_affected(&self, n: usize) -> usize {
        ((self.fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
    }
}

/// Copy of `emb` with `N(0, σ²)` noise added to every coordinate of a seeded
/// random `⌈p·n⌉`-subset of rows.
pub fn add_gaussian_noise(emb: &Embedding, spec: &NoiseSpec) -> Result<Embedding> {
    let mut rng = SeededRng::new(spec.seed);
    let rows = rng.sample_indices(emb.len(), spec.rows_affected(emb.len()));
    let mut m = emb.matrix().clone();
    for i in rows {
        for x in m.row_mut(i) {
            *x += spec.sigma * rng.standard_normal();
        }
    }
    emb.with_matrix(m)
}

/// Aligns a noisy copy of `emb` back onto `emb` and reports the residual
/// RMSE.
pub fn gaussian_calibrate(
    emb: &Embedding,
    spec: &NoiseSpec,
    variant: Variant,
    opts: &AlignOptions,
) -> Result<EvalReport> {
    let noisy = add_gaussian_noise(emb, spec)?;
    let pair = AlignedPair::new(emb.clone(), noisy)?;
    let alignment = align_with(&pair, variant, opts)?;
    let aligned = apply_to_pair(&pair, &alignment.transform)?;
    Ok(EvalReport {
        metric: "rmse".into(),
        score: Score::Scalar(rmse(&aligned)),
        evaluated: emb.len(),
        skipped: 0,
        params: vec![],
    }
    .param("sigma", spec.sigma)
    .param("fraction", spec.fraction)
    .param("seed", spec.seed)
    .param("variant", variant.name())
    .param("noisy_rows", spec.rows_affected(emb.len())))
}
