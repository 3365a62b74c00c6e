//! Closed-form alignment of word embeddings and the tools to judge it.
//!
//! Two embeddings of a shared vocabulary are aligned by solving for the
//! optimal rotation (from the SVD of the cross-covariance), optionally with
//! translation and uniform scaling, in several weighted and normalised
//! variants. Alignments are scored by RMSE, Spearman similarity tests,
//! cross-embedding analogies, translation precision@k and Gaussian-noise
//! calibration.
//!
//! ```
//! use orient_core::{align, AlignedPair, Embedding, RotationChoice, Variant};
//!
//! let target = Embedding::from_rows(vec![("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])])?;
//! let source = Embedding::from_rows(vec![("a", vec![0.0, -1.0]), ("b", vec![1.0, 0.0])])?;
//! let pair = AlignedPair::new(target, source)?;
//! let t = align(&pair, Variant::R, RotationChoice::ORTHOGONAL)?;
//! let moved = t.apply(&pair.source)?;
//! assert!(moved.matrix().max_abs_diff(pair.target.matrix()) < 1e-12);
//! # Ok::<(), orient_core::Error>(())
//! ```

pub mod align;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod procrustes;
pub mod rng;
pub mod synth;
pub mod translation;

pub use align::{
    affine_baseline, affine_objective, align, align_contextual, align_with,
    all_pairs_cross_covariance, apply_to_pair, ensemble_average, AffineTransform, AlignOptions,
    Alignment, PairWeights, SimilarityTransform, Variant, WeightPolicy,
};
pub use embedding::{
    intersect, AlignedPair, ContextualEmbedding, Embedding, HeaderMode, IntersectOrder,
};
pub use error::{Error, Result};
pub use eval::{
    analogy_eval, analogy_eval_top_k, gaussian_calibrate, mean_cosine, nearest_neighbors, rmse,
    similarity_eval, spearman, AnalogyDataset, EvalReport, NoiseSpec, Score, SimilarityDataset,
    SimilarityMode,
};
pub use linalg::{centroid, cross_covariance, frobenius_sq, svd, Matrix, SvdResult};
pub use procrustes::{optimal_rotation, optimal_scale, RotationChoice, ScaleEstimate};
pub use rng::SeededRng;
pub use translation::{
    pivot_translate, train_translation, translation_eval, Lexicon, PivotOutcome, SearchSpace,
    TrainedTranslation,
};
