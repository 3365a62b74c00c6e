//! Cross-lingual alignment: learn a map from a seed lexicon, score held-out
//! translations by precision@k, and translate through a pivot language.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use crate::align::{align_with, AlignOptions, SimilarityTransform, Variant};
use crate::embedding::{AlignedPair, Embedding};
use crate::error::{Error, Result};
use crate::eval::{EvalReport, NeighborIndex, Score};
use crate::linalg::Matrix;

/// Known translation pairs `(source_token, target_token)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pairs: Vec<(String, String)>,
}

impl Lexicon {
    /// Rejects empty lexica and repeated source tokens.
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput("lexicon has no pairs".into()));
        }
        let mut seen = HashSet::new();
        for (i, (s, _)) in pairs.iter().enumerate() {
            if !seen.insert(s.as_str()) {
                return Err(Error::DuplicateToken {
                    token: s.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Lexicon { pairs })
    }

    /// `source_token<TAB>target_token` per line; blank lines and `#` comments
    /// are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let l = line.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = l.split_whitespace().collect();
            let [s, t] = fields.as_slice() else {
                return Err(Error::MalformedLine {
                    line: i + 1,
                    reason: format!("expected `source<TAB>target`, got {} fields", fields.len()),
                });
            };
            if !seen.insert(s.to_string()) {
                return Err(Error::DuplicateToken {
                    token: s.to_string(),
                    line: i + 1,
                });
            }
            pairs.push((s.to_string(), t.to_string()));
        }
        Lexicon::new(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::parse(&text)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Neighbour pool for held-out translation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SearchSpace {
    /// Target vocabulary only.
    TargetOnly,
    /// Target and aligned source vocabularies together; a source-side
    /// neighbour ranked above the gold target counts against it.
    #[default]
    Union,
}

impl SearchSpace {
    pub fn name(self) -> &'static str {
        match self {
            SearchSpace::TargetOnly => "target",
            SearchSpace::Union => "union",
        }
    }
}

impl std::str::FromStr for SearchSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" | "target_only" => Ok(SearchSpace::TargetOnly),
            "union" => Ok(SearchSpace::Union),
            _ => Err(Error::Invalid(format!("unknown search space {s:?}"))),
        }
    }
}

/// A learned map plus how much of the seed lexicon it used.
#[derive(Clone, Debug)]
pub struct TrainedTranslation {
    pub transform: SimilarityTransform,
    pub used: usize,
    pub skipped: usize,
}

/// Learns the map taking `source` onto `target` from seed pairs; pairs with
/// a token missing on either side are skipped.
pub fn train_translation(
    source: &Embedding,
    target: &Embedding,
    seed: &Lexicon,
    variant: Variant,
    opts: &AlignOptions,
) -> Result<TrainedTranslation> {
    if source.dim() != target.dim() {
        return Err(Error::DimMismatch {
            left: source.dim(),
            right: target.dim(),
        });
    }
    let d = source.dim();
    let mut tokens = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (s, t) in seed.pairs() {
        if let (Some(vs), Some(vt)) = (source.vector(s), target.vector(t)) {
            tokens.push(s.clone());
            b.extend_from_slice(vs);
            a.extend_from_slice(vt);
        }
    }
    let used = tokens.len();
    if used < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            found: used,
        });
    }
    let pair = AlignedPair::from_matrices(
        tokens,
        Matrix::from_vec_unchecked(used, d, a),
        Matrix::from_vec_unchecked(used, d, b),
    )?;
    let alignment = align_with(&pair, variant, opts)?;
    Ok(TrainedTranslation {
        transform: alignment.transform,
        used,
        skipped: seed.len() - used,
    })
}

fn check_ks(ks: &[usize]) -> Result<Vec<usize>> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::OutOfRange {
            what: "k",
            value: format!("{ks:?}"),
            allowed: "non-empty list of positive integers".into(),
        });
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

/// Precision@k of held-out pairs: the aligned source vector of each test
/// source token is the query, and the gold target token must appear among
/// its `k` nearest neighbours (the query token itself excluded).
pub fn translation_eval(
    source_aligned: &Embedding,
    target: &Embedding,
    test: &Lexicon,
    ks: &[usize],
    space: SearchSpace,
) -> Result<EvalReport> {
    if source_aligned.dim() != target.dim() {
        return Err(Error::DimMismatch {
            left: source_aligned.dim(),
            right: target.dim(),
        });
    }
    let ks = check_ks(ks)?;
    let max_k = *ks.last().expect("non-empty");
    // part 0 = target, part 1 = aligned source
    let index = match space {
        SearchSpace::TargetOnly => NeighborIndex::new(target),
        SearchSpace::Union => NeighborIndex::over(vec![target, source_aligned])?,
    };
    let pool = match space {
        SearchSpace::TargetOnly => target.len(),
        SearchSpace::Union => target.len() + source_aligned.len() - 1,
    };

    let ranks: Vec<Option<Option<usize>>> = test
        .pairs()
        .par_iter()
        .map(|(s, t)| {
            let qrow = source_aligned.index_of(s)?;
            let gold = target.index_of(t)?;
            let query = source_aligned.row(qrow);
            // A query that cannot be searched (zero vector) is a miss.
            let rank = index
                .search(query, max_k.min(pool), |c| c.part == 1 && c.row == qrow)
                .ok()
                .and_then(|hits| {
                    hits.iter()
                        .position(|h| h.candidate.part == 0 && h.candidate.row == gold)
                });
            Some(rank)
        })
        .collect();

    let found: Vec<Option<usize>> = ranks.iter().flatten().copied().collect();
    let evaluated = found.len();
    if evaluated == 0 {
        return Err(Error::EmptyEvaluation(format!(
            "none of {} test pairs is in vocabulary",
            test.len()
        )));
    }
    let per_k = ks
        .iter()
        .map(|&k| {
            let hits = found.iter().filter(|r| matches!(r, Some(p) if *p < k)).count();
            (k, hits as f64 / evaluated as f64)
        })
        .collect();
    Ok(EvalReport {
        metric: "translation_precision".into(),
        score: Score::PerK(per_k),
        evaluated,
        skipped: test.len() - evaluated,
        params: vec![("space".into(), space.name().into())],
    })
}

/// Everything [`pivot_translate`] produced.
#[derive(Clone, Debug)]
pub struct PivotOutcome {
    pub report: EvalReport,
    pub first: TrainedTranslation,
    pub second: TrainedTranslation,
}

/// Aligns `l1` and `l2` independently onto `pivot` and evaluates `l1 → l2`
/// translation in the shared pivot space.
#[allow(clippy::too_many_arguments)]
pub fn pivot_translate(
    l1: &Embedding,
    l2: &Embedding,
    pivot: &Embedding,
    seed1: &Lexicon,
    seed2: &Lexicon,
    test: &Lexicon,
    ks: &[usize],
    variant: Variant,
    opts: &AlignOptions,
    space: SearchSpace,
) -> Result<PivotOutcome> {
    let first = train_translation(l1, pivot, seed1, variant, opts)?;
    let second = train_translation(l2, pivot, seed2, variant, opts)?;
    let l1_in_pivot = first.transform.apply(l1)?;
    let l2_in_pivot = second.transform.apply(l2)?;
    let report = translation_eval(&l1_in_pivot, &l2_in_pivot, test, ks, space)?
        .param("route", "pivot");
    Ok(PivotOutcome {
        report,
        first,
        second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procrustes::RotationChoice;
    use crate::rng::SeededRng;
    use crate::synth;

    fn identity_lexicon(tokens: &[String]) -> Lexicon {
        Lexicon::new(tokens.iter().map(|t| (t.clone(), t.clone())).collect()).unwrap()
    }

    #[test]
    fn lexicon_parsing() {
        let lex = Lexicon::parse("# seed\nperro\tdog\ngato\tcat\n\n").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.pairs()[1], ("gato".into(), "cat".into()));
        assert!(matches!(
            Lexicon::parse("perro\tdog\tcan\n"),
            Err(Error::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            Lexicon::parse("perro\tdog\nperro\thound\n"),
            Err(Error::DuplicateToken { line: 2, .. })
        ));
        assert!(Lexicon::parse("").is_err());
    }

    #[test]
    fn self_translation_inverts_rotation() {
        let mut rng = SeededRng::new(1);
        let target = synth::random_embedding(&mut rng, 60, 8);
        let q = synth::random_orthogonal(&mut rng, 8);
        let source = target.with_matrix(target.matrix().matmul(&q).unwrap()).unwrap();
        let lex = identity_lexicon(target.tokens());
        let trained =
            train_translation(&source, &target, &lex, Variant::WRST, &AlignOptions::default())
                .unwrap();
        let mapped = trained.transform.apply(&source).unwrap();
        let pair = AlignedPair::new(target.clone(), mapped).unwrap();
        assert!(crate::eval::rmse(&pair) <= 1e-8);
        assert_eq!((trained.used, trained.skipped), (60, 0));
    }

    #[test]
    fn seed_skip_policy() {
        let mut rng = SeededRng::new(2);
        let e = synth::random_embedding(&mut rng, 5, 3);
        let lex = Lexicon::parse("w0\tw0\nw1\tw1\nmissing\tw2\nw3\tnope\n").unwrap();
        let t = train_translation(&e, &e, &lex, Variant::R, &AlignOptions::default()).unwrap();
        assert_eq!((t.used, t.skipped), (2, 2));

        let lex = Lexicon::parse("w0\tw0\nmissing\tw2\n").unwrap();
        assert!(matches!(
            train_translation(&e, &e, &lex, Variant::R, &AlignOptions::default()),
            Err(Error::TooFewRows { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn exact_row_is_hit_at_one() {
        let src = Embedding::from_rows(vec![("uno", vec![1., 0.1]), ("dos", vec![0., 1.])]).unwrap();
        let tgt = Embedding::from_rows(vec![("one", vec![1., 0.1]), ("two", vec![0.1, 1.])]).unwrap();
        let test = Lexicon::parse("uno\tone\ndos\ttwo\n").unwrap();
        for space in [SearchSpace::TargetOnly, SearchSpace::Union] {
            let r = translation_eval(&src, &tgt, &test, &[1], space).unwrap();
            // `dos` itself is excluded; in the union pool `uno` is farther than `two`.
            assert_eq!(r.at_k(1), Some(1.0), "{space:?}");
        }
    }

    #[test]
    fn exhaustive_k_finds_everything() {
        let mut rng = SeededRng::new(3);
        let src = synth::random_embedding(&mut rng, 20, 4);
        let tgt = Embedding::new(synth::tokens("t", 20), synth::gaussian_matrix(&mut rng, 20, 4)).unwrap();
        let test = Lexicon::new((0..20).map(|i| (format!("w{i}"), format!("t{i}"))).collect()).unwrap();
        let r = translation_eval(&src, &tgt, &test, &[1, 5, 20], SearchSpace::TargetOnly).unwrap();
        assert_eq!(r.at_k(20), Some(1.0));
        let (p1, p5) = (r.at_k(1).unwrap(), r.at_k(5).unwrap());
        assert!(p1 <= p5 && p5 <= 1.0);
        let r = translation_eval(&src, &tgt, &test, &[39], SearchSpace::Union).unwrap();
        assert_eq!(r.at_k(39), Some(1.0));
    }

    #[test]
    fn oov_test_pairs_skipped() {
        let e = Embedding::from_rows(vec![("a", vec![1., 0.]), ("b", vec![0., 1.])]).unwrap();
        let test = Lexicon::parse("a\ta\nzz\tb\nb\tqq\n").unwrap();
        let r = translation_eval(&e, &e, &test, &[1], SearchSpace::TargetOnly).unwrap();
        assert_eq!((r.evaluated, r.skipped), (1, 2));
        let test = Lexicon::parse("zz\ta\n").unwrap();
        assert!(matches!(
            translation_eval(&e, &e, &test, &[1], SearchSpace::TargetOnly),
            Err(Error::EmptyEvaluation(_))
        ));
        assert!(translation_eval(&e, &e, &Lexicon::parse("a\ta\n").unwrap(), &[], SearchSpace::Union).is_err());
    }

    #[test]
    fn pivot_with_identical_languages() {
        let mut rng = SeededRng::new(4);
        let base = synth::random_embedding(&mut rng, 40, 6);
        let rot = |rng: &mut SeededRng| {
            let q = synth::random_orthogonal(rng, 6);
            base.with_matrix(base.matrix().matmul(&q).unwrap()).unwrap()
        };
        let (l1, l2, pivot) = (rot(&mut rng), rot(&mut rng), base.clone());
        let lex = identity_lexicon(base.tokens());
        let out = pivot_translate(
            &l1,
            &l2,
            &pivot,
            &lex,
            &lex,
            &lex,
            &[1],
            Variant::R,
            &AlignOptions::with_rotation(RotationChoice::ORTHOGONAL),
            SearchSpace::TargetOnly,
        )
        .unwrap();
        assert_eq!(out.report.at_k(1), Some(1.0));

        let out = pivot_translate(
            &base, &base, &base, &lex, &lex, &lex, &[1], Variant::WRST,
            &AlignOptions::default(), SearchSpace::Union,
        )
        .unwrap();
        assert_eq!(out.report.at_k(1), Some(1.0));
    }

    #[test]
    fn pivot_propagates_seed_errors() {
        let mut rng = SeededRng::new(5);
        let e = synth::random_embedding(&mut rng, 10, 3);
        let good = identity_lexicon(e.tokens());
        let useless = Lexicon::parse("nothing\there\n").unwrap();
        let err = pivot_translate(
            &e, &e, &e, &good, &useless, &good, &[1], Variant::R,
            &AlignOptions::default(), SearchSpace::Union,
        )
        .unwrap_err();
        assert!(matches!(err, Error::TooFewRows { found: 0, .. }));
    }
}
