//! Evaluation results checked against slow, independent re-implementations.

use orient_core::eval::SimilarityMode;
use orient_core::linalg::Matrix;
use orient_core::{
    analogy_eval, gaussian_calibrate, similarity_eval, synth, train_translation,
    translation_eval, AlignOptions, AnalogyDataset, Embedding, Lexicon, NoiseSpec, SearchSpace,
    SeededRng, SimilarityDataset, Variant,
};

/// Ranks by counting: rank = 1 + #smaller + (#equal − 1)/2.
fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let eq = v.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (na * nb)
}

#[test]
fn similarity_matches_rank_then_pearson() {
    let mut rng = SeededRng::new(501);
    let emb = synth::random_embedding(&mut rng, 30, 4);
    let mut checked = 0;
    for _ in 0..1000 {
        let size = 3 + rng.below(48);
        let mut items = Vec::new();
        for _ in 0..size {
            let (i, j) = (rng.below(30), rng.below(30));
            // Coarse human scores so ties are common.
            items.push((format!("w{i}"), format!("w{j}"), rng.below(5) as f64));
        }
        let human: Vec<f64> = items.iter().map(|t| t.2).collect();
        let model: Vec<f64> = items
            .iter()
            .map(|(a, b, _)| oracle_cos(emb.vector(a).unwrap(), emb.vector(b).unwrap()))
            .collect();
        let (rh, rm) = (oracle_ranks(&human), oracle_ranks(&model));
        let expected = oracle_pearson(&rh, &rm);
        let ds = SimilarityDataset::new(items).unwrap();
        let got = similarity_eval(&emb, &emb, &ds, SimilarityMode::WithinTarget);
        if !expected.is_finite() {
            assert!(got.is_err());
            continue;
        }
        let got = got.unwrap().scalar().unwrap();
        assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
        checked += 1;
    }
    assert!(checked > 900);
}

/// 20 words: 5 "a" words, each with 3 parallel offsets.
fn parallelogram(rng: &mut SeededRng, d: usize) -> (Embedding, AnalogyDataset) {
    let bases = synth::gaussian_matrix(rng, 5, d);
    let offsets = synth::gaussian_matrix(rng, 3, d);
    let mut rows = Vec::new();
    for i in 0..5 {
        rows.push((format!("x{i}"), bases.row(i).to_vec()));
        for k in 0..3 {
            let v: Vec<f64> = bases.row(i).iter().zip(offsets.row(k)).map(|(a, b)| a + b).collect();
            rows.push((format!("x{i}_{k}"), v));
        }
    }
    let emb = Embedding::from_rows(rows).unwrap();
    let mut items = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            if i != j {
                for k in 0..3 {
                    items.push([
                        format!("x{i}"),
                        format!("x{i}_{k}"),
                        format!("x{j}"),
                        format!("x{j}_{k}"),
                    ]);
                }
            }
        }
    }
    (emb, AnalogyDataset::new(items).unwrap())
}

fn oracle_analogy(target: &Embedding, source: &Embedding, ds: &AnalogyDataset) -> f64 {
    let mut correct = 0;
    for [a, b, c, d] in &ds.items {
        let q: Vec<f64> = (0..source.dim())
            .map(|p| source.vector(c).unwrap()[p] + source.vector(b).unwrap()[p] - source.vector(a).unwrap()[p])
            .collect();
        let mut best: Option<(f64, &str)> = None;
        for (i, tok) in target.tokens().iter().enumerate() {
            if tok == a || tok == b || tok == c {
                continue;
            }
            let s = oracle_cos(&q, target.row(i));
            let better = match best {
                None => true,
                Some((bs, bt)) => s > bs || (s == bs && tok.as_str() < bt),
            };
            if better {
                best = Some((s, tok));
            }
        }
        if best.map(|b| b.1) == Some(d.as_str()) {
            correct += 1;
        }
    }
    correct as f64 / ds.items.len() as f64
}

#[test]
fn analogy_matches_exhaustive_scan() {
    let mut rng = SeededRng::new(502);
    for noise in [0.0, 0.01, 0.3, 1.0] {
        let (emb, ds) = parallelogram(&mut rng, 6);
        let noisy = emb.with_matrix(synth::add_noise(&mut rng, emb.matrix(), noise)).unwrap();
        for (t, s) in [(&noisy, &emb), (&noisy, &noisy), (&emb, &emb)] {
            let got = analogy_eval(t, s, &ds).unwrap().scalar().unwrap();
            assert_eq!(got, oracle_analogy(t, s, &ds), "noise {noise}");
        }
    }
}

#[test]
fn exact_parallelograms_are_all_correct() {
    let mut rng = SeededRng::new(503);
    let (emb, ds) = parallelogram(&mut rng, 8);
    assert_eq!(analogy_eval(&emb, &emb, &ds).unwrap().scalar(), Some(1.0));
}

/// Monte-Carlo estimate of the residual after fitting a rotation: noise
/// energy is proportional to the number of perturbed rows, so halving `p`
/// should shrink RMSE by about √2.
#[test]
fn half_fraction_shrinks_rmse_by_sqrt_two() {
    let mut rng = SeededRng::new(504);
    let emb = synth::random_embedding(&mut rng, 2000, 20);
    let opts = AlignOptions::default();
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let full = gaussian_calibrate(&emb, &NoiseSpec::new(0.2, 1.0, seed).unwrap(), Variant::R, &opts).unwrap();
        let half = gaussian_calibrate(&emb, &NoiseSpec::new(0.2, 0.5, seed).unwrap(), Variant::R, &opts).unwrap();
        ratios.push(half.scalar().unwrap() / full.scalar().unwrap());
    }
    let mc = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let expected = 0.5f64.sqrt();
    assert!((mc - expected).abs() <= 0.2 * expected, "ratio {mc}");
}

#[test]
fn calibration_monotone_in_sigma_and_tiny_noise_vanishes() {
    let mut rng = SeededRng::new(505);
    let emb = synth::random_embedding(&mut rng, 500, 10);
    let opts = AlignOptions::default();
    let tiny = gaussian_calibrate(&emb, &NoiseSpec::new(1e-12, 1.0, 3).unwrap(), Variant::RST, &opts).unwrap();
    assert!(tiny.scalar().unwrap() <= 1e-9);
    let mut last = 0.0;
    for sigma in [0.01, 0.05, 0.1, 0.2, 0.4] {
        let r = gaussian_calibrate(&emb, &NoiseSpec::new(sigma, 0.5, 3).unwrap(), Variant::RST, &opts)
            .unwrap()
            .scalar()
            .unwrap();
        assert!(r >= last);
        last = r;
    }
}

#[test]
fn synthetic_translation_recovers_lexicon() {
    let mut rng = SeededRng::new(506);
    let latent = synth::gaussian_matrix(&mut rng, 400, 20);
    let src = synth::language_view(&mut rng, &latent, "s", 0.01);
    let tgt = synth::language_view(&mut rng, &latent, "t", 0.01);
    let lex = |r: std::ops::Range<usize>| {
        Lexicon::new(r.map(|i| (format!("s{i}"), format!("t{i}"))).collect()).unwrap()
    };
    let trained = train_translation(&src, &tgt, &lex(0..100), Variant::WRST, &AlignOptions::default()).unwrap();
    let moved = trained.transform.apply(&src).unwrap();
    for space in [SearchSpace::TargetOnly, SearchSpace::Union] {
        let r = translation_eval(&moved, &tgt, &lex(100..200), &[1, 10], space).unwrap();
        assert!(r.at_k(1).unwrap() >= 0.95, "{space:?}: {:?}", r.score);
    }
    let unaligned = translation_eval(&src, &tgt, &lex(100..200), &[1], SearchSpace::TargetOnly).unwrap();
    assert!(unaligned.at_k(1).unwrap() <= 0.1);
}

#[test]
fn identity_matrix_helpers_are_exact() {
    let i = Matrix::identity(3);
    assert_eq!(i.matmul(&i).unwrap(), i);
}
