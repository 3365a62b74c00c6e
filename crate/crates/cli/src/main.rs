use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use orient_core::io::write_atomically;
use orient_core::{
    align_with, analogy_eval_top_k, apply_to_pair, ensemble_average, gaussian_calibrate, intersect,
    mean_cosine, pivot_translate, rmse, similarity_eval, train_translation, translation_eval,
    AlignOptions, AlignedPair, AnalogyDataset, Embedding, Error, EvalReport, HeaderMode,
    IntersectOrder, Lexicon, NoiseSpec, RotationChoice, SearchSpace, SimilarityDataset,
    SimilarityMode, Variant, WeightPolicy,
};

#[derive(Parser, Debug)]
#[command(name = "orient", version, about = "Closed-form alignment of word embeddings")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "ORIENT_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    /// Whether input embedding files start with a `<n> <d>` header line.
    #[arg(long, global = true, value_enum, default_value_t = Header::Auto)]
    header: Header,

    /// Write output embeddings without the `<n> <d>` header line.
    #[arg(long, global = true)]
    no_header_out: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Header {
    Auto,
    Yes,
    No,
}

impl From<Header> for HeaderMode {
    fn from(h: Header) -> Self {
        match h {
            Header::Auto => HeaderMode::Auto,
            Header::Yes => HeaderMode::Yes,
            Header::No => HeaderMode::No,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Order {
    /// Order of the target file.
    Target,
    /// Sum of the ranks in both files.
    Frequency,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Sim,
    Analogy,
}

#[derive(Args, Debug)]
struct AlignFlags {
    /// r, rt, c, rs, rst, wr, wrst or norm.
    #[arg(long, default_value = "r")]
    variant: Variant,

    /// Restrict the rotation to det = +1.
    #[arg(long)]
    so3: bool,

    /// Row weights for wr/wrst: product, min or mean of the two norms.
    #[arg(long, default_value = "product")]
    weight_policy: WeightPolicy,

    /// For rst/wrst, take the scale from uncentered, unrotated vectors.
    #[arg(long)]
    literal_scale: bool,
}

impl AlignFlags {
    fn options(&self) -> AlignOptions {
        AlignOptions {
            rotation: if self.so3 {
                RotationChoice::PROPER
            } else {
                RotationChoice::ORTHOGONAL
            },
            weight_policy: self.weight_policy,
            literal_rst_scale: self.literal_scale,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Align SOURCE onto TARGET and write the moved source embedding.
    Align {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[command(flatten)]
        flags: AlignFlags,
        #[arg(long)]
        out: PathBuf,
        /// Also write the learned transform as JSON.
        #[arg(long)]
        transform_out: Option<PathBuf>,
        /// Learn from the first K shared words only; apply to every row.
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        vocab_limit: Option<u64>,
        #[arg(long, value_enum, default_value_t = Order::Target)]
        order: Order,
    },
    /// Noise-recovery curve: RMSE after aligning a noisy copy back.
    Calibrate {
        #[arg(long)]
        emb: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        fraction: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        flags: AlignFlags,
        /// Also write the TSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Word similarity (Spearman) or analogy accuracy.
    Eval {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        target: PathBuf,
        /// Defaults to the target.
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// Similarity: score word pairs across the two embeddings.
        #[arg(long)]
        cross: bool,
        /// Analogy: count a hit anywhere in the top K.
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn a translation map from a seed lexicon and report precision@k.
    Translate {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        seed_lexicon: PathBuf,
        #[arg(long)]
        test_lexicon: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        k: Vec<usize>,
        /// Translate through this third embedding.
        #[arg(long, requires = "seed_lexicon2")]
        pivot: Option<PathBuf>,
        /// Target-to-pivot seed lexicon.
        #[arg(long, requires = "pivot")]
        seed_lexicon2: Option<PathBuf>,
        #[arg(long, default_value = "union")]
        space: SearchSpace,
        #[arg(long, default_value = "wrst")]
        variant: Variant,
        #[arg(long)]
        so3: bool,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align SOURCE onto TARGET and average the shared words.
    Ensemble {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[command(flatten)]
        flags: AlignFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Size, dimension and norm statistics of an embedding file.
    Info {
        #[arg(long)]
        emb: PathBuf,
    },
}

struct Ctx {
    header: HeaderMode,
    header_out: bool,
}

impl Ctx {
    fn load(&self, path: &Path) -> Result<Embedding, Error> {
        let e = Embedding::load_text(path, self.header)?;
        info!("{}: {} words, d = {}", path.display(), e.len(), e.dim());
        Ok(e)
    }

    fn save(&self, e: &Embedding, path: &Path) -> Result<(), Error> {
        e.save_text(path, self.header_out)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    write_atomically(path, |w| w.write_all(text.as_bytes()))
}

/// Prints `text` and mirrors it to `out` when given.
fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    if let Some(path) = out {
        write_text(path, text)?;
    }
    print!("{text}");
    Ok(())
}

fn render(report: &EvalReport, json: bool) -> String {
    if json {
        format!("{}\n", report.to_json())
    } else {
        report.render_text()
    }
}

fn cosine_text(pair: &AlignedPair) -> String {
    match mean_cosine(pair) {
        Ok(c) => c.to_string(),
        Err(e) => {
            warn!("mean cosine undefined: {e}");
            "NA".into()
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let ctx = Ctx {
        header: cli.header.into(),
        header_out: !cli.no_header_out,
    };
    match cli.command {
        Command::Align {
            target,
            source,
            flags,
            out,
            transform_out,
            vocab_limit,
            order,
        } => {
            let (t, s) = (ctx.load(&target)?, ctx.load(&source)?);
            let order = match order {
                Order::Target => IntersectOrder::TargetOrder,
                Order::Frequency => IntersectOrder::FrequencyRank,
            };
            let pair = intersect(&t, &s, order)?;
            let train = match vocab_limit {
                Some(k) if (k as usize) < pair.len() => pair.top_k(k as usize)?,
                Some(k) => {
                    warn!("vocab limit {k} exceeds the {} shared words; using all", pair.len());
                    pair.clone()
                }
                None => pair.clone(),
            };
            let alignment = align_with(&train, flags.variant, &flags.options())?;
            let tr = &alignment.transform;
            ctx.save(&tr.apply(&s)?, &out)?;
            if let Some(path) = transform_out {
                write_text(&path, &format!("{}\n", tr.to_json()))?;
            }
            let after = apply_to_pair(&pair, tr)?;
            let mut text = String::new();
            let _ = writeln!(text, "variant\t{}", tr.variant.mnemonic());
            let _ = writeln!(text, "shared\t{}", pair.len());
            let _ = writeln!(text, "trained_on\t{}", train.len());
            let _ = writeln!(text, "scale\t{}", tr.scale);
            let _ = writeln!(text, "rmse_before\t{}", rmse(&pair));
            let _ = writeln!(text, "rmse_after\t{}", rmse(&after));
            let _ = writeln!(text, "cosine_before\t{}", cosine_text(&pair));
            let _ = writeln!(text, "cosine_after\t{}", cosine_text(&after));
            emit(&text, None)
        }
        Command::Calibrate {
            emb,
            sigma,
            fraction,
            seed,
            flags,
            out,
        } => {
            let mut grid = Vec::new();
            for &sg in &sigma {
                for &p in &fraction {
                    grid.push(NoiseSpec::new(sg, p, seed)?);
                }
            }
            let e = ctx.load(&emb)?;
            let opts = flags.options();
            let mut text = String::from("sigma\tfraction\trmse\n");
            for spec in &grid {
                let r = gaussian_calibrate(&e, spec, flags.variant, &opts)?;
                let value = r.scalar().expect("scalar report");
                let _ = writeln!(text, "{}\t{}\t{}", spec.sigma, spec.fraction, value);
            }
            emit(&text, out.as_deref())
        }
        Command::Eval {
            mode,
            target,
            source,
            dataset,
            cross,
            k,
            json,
            out,
        } => {
            if k == 0 {
                return Err(Error::OutOfRange {
                    what: "k",
                    value: "0".into(),
                    allowed: ">= 1".into(),
                });
            }
            let t = ctx.load(&target)?;
            let s = match &source {
                Some(p) => ctx.load(p)?,
                None => t.clone(),
            };
            let report = match mode {
                Mode::Sim => {
                    let ds = SimilarityDataset::load(&dataset)?;
                    let m = if cross {
                        SimilarityMode::Cross
                    } else {
                        SimilarityMode::WithinTarget
                    };
                    similarity_eval(&t, &s, &ds, m)?
                }
                Mode::Analogy => {
                    let ds = AnalogyDataset::load(&dataset)?;
                    analogy_eval_top_k(&t, &s, &ds, k)?
                }
            };
            emit(&render(&report, json), out.as_deref())
        }
        Command::Translate {
            source,
            target,
            seed_lexicon,
            test_lexicon,
            k,
            pivot,
            seed_lexicon2,
            space,
            variant,
            so3,
            json,
            out,
        } => {
            if k.is_empty() || k.contains(&0) {
                return Err(Error::OutOfRange {
                    what: "k",
                    value: format!("{k:?}"),
                    allowed: "positive integers".into(),
                });
            }
            let opts = AlignOptions::with_rotation(if so3 {
                RotationChoice::PROPER
            } else {
                RotationChoice::ORTHOGONAL
            });
            let (s, t) = (ctx.load(&source)?, ctx.load(&target)?);
            let seed1 = Lexicon::load(&seed_lexicon)?;
            let test = Lexicon::load(&test_lexicon)?;
            let report = match (pivot, seed_lexicon2) {
                (Some(pivot), Some(seed2)) => {
                    let p = ctx.load(&pivot)?;
                    let seed2 = Lexicon::load(&seed2)?;
                    pivot_translate(&s, &t, &p, &seed1, &seed2, &test, &k, variant, &opts, space)?.report
                }
                _ => {
                    let trained = train_translation(&s, &t, &seed1, variant, &opts)?;
                    info!("seed pairs used {}, skipped {}", trained.used, trained.skipped);
                    let moved = trained.transform.apply(&s)?;
                    translation_eval(&moved, &t, &test, &k, space)?
                }
            };
            emit(&render(&report, json), out.as_deref())
        }
        Command::Ensemble {
            target,
            source,
            flags,
            out,
        } => {
            let (t, s) = (ctx.load(&target)?, ctx.load(&source)?);
            let pair = intersect(&t, &s, IntersectOrder::TargetOrder)?;
            let alignment = align_with(&pair, flags.variant, &flags.options())?;
            let merged = ensemble_average(&apply_to_pair(&pair, &alignment.transform)?)?;
            ctx.save(&merged, &out)?;
            emit(&format!("n\t{}\nd\t{}\n", merged.len(), merged.dim()), None)
        }
        Command::Info { emb } => {
            let e = ctx.load(&emb)?;
            let norms = e.row_norms();
            let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
            let max = norms.iter().copied().fold(0.0, f64::max);
            let mean = norms.iter().sum::<f64>() / norms.len() as f64;
            emit(
                &format!("n\t{}\nd\t{}\nnorm_min\t{min}\nnorm_mean\t{mean}\nnorm_max\t{max}\n", e.len(), e.dim()),
                None,
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            eprint!("{msg}");
            if !msg.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
        {
            eprintln!("orient: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("orient: error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
