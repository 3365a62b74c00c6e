//! Alignment recipes built on the closed-form solvers.
//!
//! Every variant produces a [`SimilarityTransform`] that maps a source row
//! `x` to `s · ((x − b̄) · R) + ā`.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde_json::Value;

use crate::embedding::{intersect, AlignedPair, ContextualEmbedding, Embedding, IntersectOrder};
use crate::error::{Error, Result};
use crate::linalg::{centroid, cholesky_solve, cross_covariance, norm, vec_mat_into, Matrix};
use crate::procrustes::{optimal_rotation, optimal_scale, RotationChoice};

/// Alignment recipe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Rotation about the origin.
    R,
    /// Center both sides, rotate, translate back onto the target centroid.
    RT,
    /// Center both sides and rotate; the target is compared centered.
    Centered,
    /// Rotation about the origin, then least-squares scale.
    RS,
    /// Center, rotate, scale, translate back.
    RST,
    /// [`Variant::R`] with per-pair weights from the row norms.
    WR,
    /// [`Variant::RST`] with per-pair weights from the row norms.
    WRST,
    /// [`Variant::R`] on unit-normalised rows.
    Normalized,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::R,
        Variant::RT,
        Variant::Centered,
        Variant::RS,
        Variant::RST,
        Variant::WR,
        Variant::WRST,
        Variant::Normalized,
    ];

    /// Name used in serialized transforms.
    pub fn name(self) -> &'static str {
        match self {
            Variant::R => "r",
            Variant::RT => "r_t",
            Variant::Centered => "centered",
            Variant::RS => "r_s",
            Variant::RST => "r_s_t",
            Variant::WR => "w_r",
            Variant::WRST => "w_r_s_t",
            Variant::Normalized => "normalized",
        }
    }

    /// Short command-line spelling.
    pub fn mnemonic(self) -> &'static str {
        match self {
            Variant::R => "r",
            Variant::RT => "rt",
            Variant::Centered => "c",
            Variant::RS => "rs",
            Variant::RST => "rst",
            Variant::WR => "wr",
            Variant::WRST => "wrst",
            Variant::Normalized => "norm",
        }
    }

    /// Results of this variant are compared against the centered target.
    pub fn centers_target(self) -> bool {
        self == Variant::Centered
    }

    fn weighted(self) -> bool {
        matches!(self, Variant::WR | Variant::WRST)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts both the serialized name and the mnemonic.
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s || v.mnemonic() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown variant {s:?}")))
    }
}

/// How a pair's weight is derived from its two row norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightPolicy {
    /// `‖a_i‖ · ‖b_i‖`
    #[default]
    Product,
    /// `min(‖a_i‖, ‖b_i‖)`
    Min,
    /// `(‖a_i‖ + ‖b_i‖) / 2`
    Mean,
}

impl FromStr for WeightPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(WeightPolicy::Product),
            "min" => Ok(WeightPolicy::Min),
            "mean" => Ok(WeightPolicy::Mean),
            _ => Err(Error::Invalid(format!("unknown weight policy {s:?}"))),
        }
    }
}

/// Nonnegative per-pair weights with a positive sum.
#[derive(Clone, Debug, PartialEq)]
pub struct PairWeights(Vec<f64>);

impl PairWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid("weights must be finite and nonnegative".into()));
        }
        if values.iter().sum::<f64>() <= 0.0 {
            return Err(Error::ZeroWeights);
        }
        Ok(PairWeights(values))
    }

    /// Weights from row norms, rescaled so the largest is exactly 1. The
    /// rescaling leaves every weighted optimum unchanged, and makes equal
    /// norms produce weights bit-identical to the unweighted case.
    pub fn from_norms(pair: &AlignedPair, policy: WeightPolicy) -> Result<Self> {
        let mut w = Vec::with_capacity(pair.len());
        for (i, (a, b)) in pair
            .target
            .matrix()
            .row_iter()
            .zip(pair.source.matrix().row_iter())
            .enumerate()
        {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroNormRow(pair.tokens()[i].clone()));
            }
            w.push(match policy {
                WeightPolicy::Product => na * nb,
                WeightPolicy::Min => na.min(nb),
                WeightPolicy::Mean => 0.5 * (na + nb),
            });
        }
        let max = w.iter().copied().fold(0.0, f64::max);
        w.iter_mut().for_each(|x| *x /= max);
        PairWeights::new(w)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Knobs beyond the variant itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct AlignOptions {
    pub rotation: RotationChoice,
    pub weight_policy: WeightPolicy,
    /// For [`Variant::RST`]/[`Variant::WRST`], compute the scale from the
    /// uncentered, unrotated inputs (`Σ⟨a_i, b_i⟩ / ‖B‖²`) instead of the
    /// centered, rotated ones.
    pub literal_rst_scale: bool,
}

impl AlignOptions {
    pub fn with_rotation(rotation: RotationChoice) -> Self {
        AlignOptions {
            rotation,
            ..Default::default()
        }
    }
}

/// Learned map `x ↦ s · ((x − b̄) · R) + ā`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub rotation: Matrix,
    pub scale: f64,
    pub source_centroid: Vec<f64>,
    pub target_centroid: Vec<f64>,
    pub variant: Variant,
}

impl SimilarityTransform {
    pub fn identity(d: usize) -> Self {
        SimilarityTransform {
            rotation: Matrix::identity(d),
            scale: 1.0,
            source_centroid: vec![0.0; d],
            target_centroid: vec![0.0; d],
            variant: Variant::R,
        }
    }

    pub fn dim(&self) -> usize {
        self.rotation.rows()
    }

    /// Maps one row into `out`.
    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) {
        let centered: Vec<f64> = x
            .iter()
            .zip(&self.source_centroid)
            .map(|(v, c)| v - c)
            .collect();
        vec_mat_into(&centered, &self.rotation, out);
        for (o, t) in out.iter_mut().zip(&self.target_centroid) {
            *o = self.scale * *o + t;
        }
    }

    /// Maps every row of `m`.
    pub fn apply_matrix(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.dim() {
            return Err(Error::DimMismatch {
                left: m.cols(),
                right: self.dim(),
            });
        }
        let d = self.dim();
        let mut out = vec![0.0; m.rows() * d];
        out.par_chunks_mut(d)
            .zip(m.as_slice().par_chunks(d))
            .for_each(|(o, x)| self.apply_row(x, o));
        Matrix::new(m.rows(), d, out)
    }

    /// Maps every row of an embedding; tokens are unchanged.
    pub fn apply(&self, emb: &Embedding) -> Result<Embedding> {
        emb.with_matrix(self.apply_matrix(emb.matrix())?)
    }

    /// JSON with fixed key order and 17 significant digits per number.
    pub fn to_json(&self) -> String {
        fn num(x: f64) -> String {
            format!("{x:.16e}")
        }
        fn arr(xs: &[f64]) -> String {
            let items: Vec<String> = xs.iter().map(|&x| num(x)).collect();
            format!("[{}]", items.join(","))
        }
        format!(
            "{{\"variant\":\"{}\",\"d\":{},\"rotation\":{},\"scale\":{},\"source_centroid\":{},\"target_centroid\":{}}}\n",
            self.variant.name(),
            self.dim(),
            arr(self.rotation.as_slice()),
            num(self.scale),
            arr(&self.source_centroid),
            arr(&self.target_centroid),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)
            .map_err(|e| Error::Invalid(format!("transform JSON: {e}")))?;
        let field = |k: &str| {
            v.get(k)
                .ok_or_else(|| Error::Invalid(format!("transform JSON lacks {k:?}")))
        };
        let numbers = |k: &str| -> Result<Vec<f64>> {
            field(k)?
                .as_array()
                .ok_or_else(|| Error::Invalid(format!("{k:?} must be an array")))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| Error::Invalid(format!("{k:?} holds a non-number")))
                })
                .collect()
        };
        let variant: Variant = field("variant")?
            .as_str()
            .ok_or_else(|| Error::Invalid("\"variant\" must be a string".into()))?
            .parse()?;
        let d = field("d")?
            .as_u64()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Invalid("\"d\" must be a positive integer".into()))?
            as usize;
        let scale = field("scale")?
            .as_f64()
            .ok_or_else(|| Error::Invalid("\"scale\" must be a number".into()))?;
        let rotation = Matrix::new(d, d, numbers("rotation")?)?;
        let source_centroid = numbers("source_centroid")?;
        let target_centroid = numbers("target_centroid")?;
        if source_centroid.len() != d || target_centroid.len() != d {
            return Err(Error::Invalid("centroids must have d entries".into()));
        }
        Ok(SimilarityTransform {
            rotation,
            scale,
            source_centroid,
            target_centroid,
            variant,
        })
    }
}

/// A transform plus what happened while learning it.
#[derive(Clone, Debug)]
pub struct Alignment {
    pub transform: SimilarityTransform,
    /// Rows dropped by [`Variant::Normalized`] for having zero norm.
    pub dropped_tokens: Vec<String>,
    /// The learned scale was `≤ 0`.
    pub non_positive_scale: bool,
}

/// Aligns `pair.source` onto `pair.target` with default options apart from
/// the rotation group.
pub fn align(pair: &AlignedPair, variant: Variant, choice: RotationChoice) -> Result<SimilarityTransform> {
    align_with(pair, variant, &AlignOptions::with_rotation(choice)).map(|a| a.transform)
}

fn centered(m: &Matrix, c: &[f64]) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        out.row_mut(i).iter_mut().zip(c).for_each(|(x, ci)| *x -= ci);
    }
    out
}

fn normalized_rows(m: &Matrix, keep: &[usize]) -> Matrix {
    let d = m.cols();
    let mut data = Vec::with_capacity(keep.len() * d);
    for &i in keep {
        let row = m.row(i);
        let n = norm(row);
        data.extend(row.iter().map(|x| x / n));
    }
    Matrix::from_vec_unchecked(keep.len(), d, data)
}

/// Aligns `pair.source` onto `pair.target`.
pub fn align_with(pair: &AlignedPair, variant: Variant, opts: &AlignOptions) -> Result<Alignment> {
    if pair.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            found: pair.len(),
        });
    }
    let d = pair.dim();
    let a = pair.target.matrix();
    let b = pair.source.matrix();
    let zeros = vec![0.0; d];
    let mut dropped_tokens = Vec::new();
    let mut non_positive_scale = false;

    let weights = if variant.weighted() {
        Some(PairWeights::from_norms(pair, opts.weight_policy)?)
    } else {
        None
    };
    let w = weights.as_ref().map(PairWeights::values);

    let (rotation, scale, source_centroid, target_centroid) = match variant {
        Variant::R | Variant::WR => {
            let h = cross_covariance(a, b, w)?;
            (optimal_rotation(&h, opts.rotation)?, 1.0, zeros.clone(), zeros)
        }
        Variant::RS => {
            let h = cross_covariance(a, b, None)?;
            let r = optimal_rotation(&h, opts.rotation)?;
            let s = optimal_scale(a, &b.matmul(&r)?, None)?;
            non_positive_scale = s.non_positive;
            (r, s.value, zeros.clone(), zeros)
        }
        Variant::RT | Variant::Centered => {
            let ca = centroid(a, None)?;
            let cb = centroid(b, None)?;
            let h = cross_covariance(&centered(a, &ca), &centered(b, &cb), None)?;
            let r = optimal_rotation(&h, opts.rotation)?;
            let target = if variant == Variant::RT { ca } else { zeros };
            (r, 1.0, cb, target)
        }
        Variant::RST | Variant::WRST => {
            let ca = centroid(a, w)?;
            let cb = centroid(b, w)?;
            let (ac, bc) = (centered(a, &ca), centered(b, &cb));
            let h = cross_covariance(&ac, &bc, w)?;
            let r = optimal_rotation(&h, opts.rotation)?;
            let s = if opts.literal_rst_scale {
                optimal_scale(a, b, w)?
            } else {
                optimal_scale(&ac, &bc.matmul(&r)?, w)?
            };
            non_positive_scale = s.non_positive;
            (r, s.value, cb, ca)
        }
        Variant::Normalized => {
            let keep: Vec<usize> = (0..pair.len())
                .filter(|&i| {
                    let ok = norm(a.row(i)) > 0.0 && norm(b.row(i)) > 0.0;
                    if !ok {
                        dropped_tokens.push(pair.tokens()[i].clone());
                    }
                    ok
                })
                .collect();
            if !dropped_tokens.is_empty() {
                warn!(
                    "normalized alignment: dropped {} zero-norm row(s)",
                    dropped_tokens.len()
                );
            }
            if keep.len() < 2 {
                return Err(Error::TooFewRows {
                    needed: 2,
                    found: keep.len(),
                });
            }
            let h = cross_covariance(&normalized_rows(a, &keep), &normalized_rows(b, &keep), None)?;
            (optimal_rotation(&h, opts.rotation)?, 1.0, zeros.clone(), zeros)
        }
    };
    if non_positive_scale {
        warn!("{variant} alignment: optimal scale {scale} is not positive");
    }
    Ok(Alignment {
        transform: SimilarityTransform {
            rotation,
            scale,
            source_centroid,
            target_centroid,
            variant,
        },
        dropped_tokens,
        non_positive_scale,
    })
}

/// The pair as it should be compared after alignment: the target (centered
/// for [`Variant::Centered`]) and the transformed source.
pub fn apply_to_pair(pair: &AlignedPair, t: &SimilarityTransform) -> Result<AlignedPair> {
    let target = if t.variant.centers_target() {
        let c = centroid(pair.target.matrix(), None)?;
        pair.target.with_matrix(centered(pair.target.matrix(), &c))?
    } else {
        pair.target.clone()
    };
    let source = t.apply(&pair.source)?;
    AlignedPair::new(target, source)
}

/// Aligns two contextual embeddings through their per-token means. The
/// cross-covariance, centroids and scale of the mean form equal those of the
/// all-pairs form (see [`all_pairs_cross_covariance`]).
pub fn align_contextual(
    target: &ContextualEmbedding,
    source: &ContextualEmbedding,
    variant: Variant,
    opts: &AlignOptions,
) -> Result<SimilarityTransform> {
    let pair = intersect(
        &target.collapse_means(),
        &source.collapse_means(),
        IntersectOrder::TargetOrder,
    )?;
    align_with(&pair, variant, opts).map(|a| a.transform)
}

/// `H = Σ_i 1/(m_{A,i} m_{B,i}) Σ_j Σ_j' b_{i,j'}ᵀ a_{i,j}` over shared tokens,
/// with the same orientation as [`cross_covariance`] (target = A).
pub fn all_pairs_cross_covariance(
    target: &ContextualEmbedding,
    source: &ContextualEmbedding,
) -> Result<Matrix> {
    if target.dim() != source.dim() {
        return Err(Error::DimMismatch {
            left: target.dim(),
            right: source.dim(),
        });
    }
    let d = target.dim();
    let mut h = Matrix::zeros(d, d);
    let mut shared = 0;
    for (token, a_inst) in target.tokens().iter().zip(target.instances()) {
        let Some(b_inst) = source.instances_of(token) else {
            continue;
        };
        shared += 1;
        let w = 1.0 / (a_inst.rows() * b_inst.rows()) as f64;
        for a in a_inst.row_iter() {
            for b in b_inst.row_iter() {
                for p in 0..d {
                    for q in 0..d {
                        h[(p, q)] += w * b[p] * a[q];
                    }
                }
            }
        }
    }
    if shared == 0 {
        return Err(Error::EmptyIntersection);
    }
    Ok(h)
}

/// Linear map `x ↦ x · M` fitted with ridge penalty `γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineTransform {
    pub m: Matrix,
    pub gamma: f64,
}

impl AffineTransform {
    pub fn apply_matrix(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.m)
    }

    pub fn apply(&self, emb: &Embedding) -> Result<Embedding> {
        emb.with_matrix(self.apply_matrix(emb.matrix())?)
    }
}

/// `Σ ‖a_i − b_i M‖² + γ ‖M‖_F²`.
pub fn affine_objective(pair: &AlignedPair, m: &Matrix, gamma: f64) -> Result<f64> {
    let bm = pair.source.matrix().matmul(m)?;
    let fit: f64 = pair
        .target
        .matrix()
        .as_slice()
        .iter()
        .zip(bm.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(fit + gamma * crate::linalg::frobenius_sq(m))
}

/// Closed-form minimiser `M = (BᵀB + γI)⁻¹ BᵀA` of [`affine_objective`].
pub fn affine_baseline(pair: &AlignedPair, gamma: f64) -> Result<AffineTransform> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::OutOfRange {
            what: "gamma",
            value: gamma.to_string(),
            allowed: "finite and >= 0".into(),
        });
    }
    let (a, b) = (pair.target.matrix(), pair.source.matrix());
    let mut gram = cross_covariance(b, b, None)?;
    for i in 0..gram.rows() {
        gram[(i, i)] += gamma;
    }
    let bta = cross_covariance(a, b, None)?;
    let m = cholesky_solve(&gram, &bta)?;
    Ok(AffineTransform { m, gamma })
}

/// Row-wise mean `(a_i + b_i) / 2` of an already aligned pair.
pub fn ensemble_average(pair: &AlignedPair) -> Result<Embedding> {
    let data: Vec<f64> = pair
        .target
        .matrix()
        .as_slice()
        .iter()
        .zip(pair.source.matrix().as_slice())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    pair.target
        .with_matrix(Matrix::new(pair.len(), pair.dim(), data)?)
}
