//! `ecn`: distances, re-ranking, evaluation, synthetic data and timing.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecn_core::bench::{bench_rerank, growth_ratios};
use ecn_core::distance::{pairwise_cosine, pairwise_sq_euclidean};
use ecn_core::ecn::{rerank, rerank_features};
use ecn_core::eval::evaluate;
use ecn_core::synth::{generate_clusters, ClusterSpec};
use ecn_core::{io, DistanceMatrix, EcnParams, Error, Matrix, Method};

const EXIT_CODES: &str = "\
Exit codes:
   0  success
   1  could not start worker threads
   2  bad command line
   3  file system error
   4  wrong magic bytes in a binary file
   5  unsupported binary format version
   6  truncated binary file
   7  unparsable text input (CSV)
   8  duplicate item index in metadata
   9  unknown role in metadata
  10  item index missing from metadata
  11  empty matrix
  12  non-finite value
  13  shape mismatch between inputs
  14  zero-norm feature row (cosine)
  15  input is not a valid distance matrix
  16  item index out of range
  17  invalid parameters
  18  neighborhood t + t*q larger than the item count
  19  constant rank-list similarity
  20  no query has a valid gallery match
  21  bad synthetic parameters
  22  input too large for the reference implementation
  23  JSON serialization failure";

#[derive(Parser)]
#[command(name = "ecn", version, about = "Expanded cross neighborhood re-ranking", after_help = EXIT_CODES)]
struct Cli {
    /// Worker threads; outputs do not depend on this
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise distances over all items of a feature file
    Distance {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Sqeuclidean)]
        metric: Metric,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query x gallery distances, optionally re-ranked
    Rerank(RerankArgs),
    /// CMC and mAP of a query x gallery distance matrix
    Eval {
        #[arg(long)]
        distances: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,50")]
        ranks: Vec<usize>,
        /// Report JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gaussian-cluster retrieval set: PREFIX.ecnf and PREFIX.meta.csv
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ClusterSpec::calibrated(0).n_ids)]
        ids: usize,
        #[arg(long, default_value_t = ClusterSpec::calibrated(0).imgs_per_id)]
        imgs: usize,
        #[arg(long, default_value_t = ClusterSpec::calibrated(0).dim)]
        dim: usize,
        #[arg(long, default_value_t = ClusterSpec::calibrated(0).intra_std)]
        intra: f64,
        #[arg(long, default_value_t = ClusterSpec::calibrated(0).inter_std)]
        inter: f64,
        #[arg(long, default_value_t = ClusterSpec::calibrated(0).n_cameras)]
        cams: usize,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Re-ranking wall time on synthetic sets of growing size
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "2000,4000,8000")]
        sizes: Vec<usize>,
        #[arg(long, value_enum, default_value_t = RerankMethod::EcnRank)]
        method: RerankMethod,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
    },
}

#[derive(Args)]
#[group(id = "input", required = true, multiple = false)]
struct RerankInput {
    /// Feature file (ECNF, or headerless .csv); distances are squared euclidean
    #[arg(long, group = "input")]
    features: Option<PathBuf>,
    /// Precomputed all-items distance file (ECND)
    #[arg(long, group = "input")]
    distances: Option<PathBuf>,
}

#[derive(Args)]
struct RerankArgs {
    #[command(flatten)]
    input: RerankInput,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long, value_enum, default_value_t = RerankMethod::EcnRank)]
    method: RerankMethod,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParamArgs {
    /// First-level neighbors
    #[arg(long, default_value_t = 3)]
    t: usize,
    /// Second-level neighbors per first-level neighbor
    #[arg(long, default_value_t = 8)]
    q: usize,
    /// Rank-list depth for the similarity
    #[arg(long, default_value_t = 25)]
    k: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Sqeuclidean,
    Cosine,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RerankMethod {
    /// Base distances, no re-ranking
    None,
    RankDist,
    EcnOrig,
    EcnRank,
}

impl RerankMethod {
    fn core(self) -> Option<Method> {
        match self {
            RerankMethod::None => None,
            RerankMethod::RankDist => Some(Method::RankDistOnly),
            RerankMethod::EcnOrig => Some(Method::EcnOrigDist),
            RerankMethod::EcnRank => Some(Method::EcnRankDist),
        }
    }
}

/// An error plus the file it concerns, if any.
struct Failure {
    error: Error,
    path: Option<PathBuf>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { error, path: None }
    }
}

trait Context<T> {
    fn at(self, path: &Path) -> Result<T, Failure>;
}

impl<T> Context<T> for ecn_core::Result<T> {
    fn at(self, path: &Path) -> Result<T, Failure> {
        self.map_err(|error| Failure {
            error,
            path: Some(path.to_path_buf()),
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::BadMagic { .. } => 4,
        Error::UnsupportedVersion(_) => 5,
        Error::TruncatedFile { .. } => 6,
        Error::Parse { .. } => 7,
        Error::DuplicateIndex(_) => 8,
        Error::UnknownRole(_) => 9,
        Error::IndexGap(_) => 10,
        Error::EmptyMatrix => 11,
        Error::NonFinite { .. } => 12,
        Error::ShapeMismatch { .. } => 13,
        Error::ZeroNormRow(_) => 14,
        Error::InvalidDistance(_) => 15,
        Error::IndexOutOfRange { .. } => 16,
        Error::InvalidParams(_) => 17,
        Error::ParamsTooLarge { .. } => 18,
        Error::DegenerateSimilarity => 19,
        Error::NoValidQueries => 20,
        Error::BadParams(_) => 21,
        Error::TooLargeForOracle { .. } => 22,
        Error::Json(_) => 23,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = cli.threads {
        pool = pool.num_threads(threads);
    }
    let pool = match pool.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            // Parse errors already name their file
            match (&f.path, &f.error) {
                (Some(path), e) if !matches!(e, Error::Parse { .. }) => {
                    eprintln!("error: {}: {e}", path.display())
                }
                (_, e) => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&f.error))
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Distance { features, metric, out } => {
            let x = io::read_features(&features).at(&features)?;
            let d = match metric {
                Metric::Sqeuclidean => pairwise_sq_euclidean(&x)?,
                Metric::Cosine => pairwise_cosine(&x)?,
            };
            io::write_distance(&d.into_matrix(), &out).at(&out)?;
            println!(
                "{} items, {}-dim: wrote {n} x {n} distances to {}",
                x.n_items(),
                x.dim(),
                out.display(),
                n = x.n_items()
            );
        }
        Command::Rerank(args) => cmd_rerank(args)?,
        Command::Eval {
            distances,
            meta,
            ranks,
            out,
        } => {
            let d = io::read_distance(&distances).at(&distances)?;
            let records = io::read_metadata(&meta).at(&meta)?;
            let report = evaluate(&d, &records, &ranks)?;
            println!(
                "mAP {:.2}%  over {} queries ({} without a valid match)",
                100.0 * report.map,
                report.num_queries,
                report.skipped_queries
            );
            let cmc: Vec<String> = report
                .cmc
                .iter()
                .map(|(k, v)| format!("R{k} {:.2}%", 100.0 * v))
                .collect();
            println!("CMC  {}", cmc.join("  "));
            if let Some(out) = out {
                let mut json = report.to_json()?;
                json.push('\n');
                std::fs::write(&out, json).map_err(Error::from).at(&out)?;
            }
        }
        Command::Synth {
            seed,
            ids,
            imgs,
            dim,
            intra,
            inter,
            cams,
            out_prefix,
        } => {
            let spec = ClusterSpec {
                seed,
                n_ids: ids,
                imgs_per_id: imgs,
                dim,
                intra_std: intra,
                inter_std: inter,
                n_cameras: cams,
            };
            let (features, records) = generate_clusters(&spec)?;
            let feat_path = with_suffix(&out_prefix, ".ecnf");
            let meta_path = with_suffix(&out_prefix, ".meta.csv");
            io::write_features(&features, &feat_path).at(&feat_path)?;
            io::write_metadata(&records, &meta_path).at(&meta_path)?;
            println!(
                "{} identities x {} images, {}-dim: wrote {} and {}",
                ids,
                imgs,
                dim,
                feat_path.display(),
                meta_path.display()
            );
        }
        Command::Bench {
            sizes,
            method,
            runs,
            seed,
            params,
        } => {
            let Some(method) = method.core() else {
                return Err(Error::InvalidParams("bench needs a re-ranking method, not none".into()).into());
            };
            let params = EcnParams {
                t: params.t,
                q: params.q,
                k: params.k,
                method,
            };
            let rows = bench_rerank(&sizes, &params, runs, seed)?;
            println!("{method}, {runs} runs per size, distances included");
            println!("{:>8}  {:>9}  {:>9}  {:>9}", "items", "mean s", "median s", "min s");
            for row in &rows {
                println!(
                    "{:>8}  {:>9.3}  {:>9.3}  {:>9.3}",
                    row.n_items,
                    row.mean(),
                    row.median(),
                    row.min()
                );
            }
            for (w, ratio) in rows.windows(2).zip(growth_ratios(&rows)) {
                println!(
                    "{} -> {}: x{ratio:.2} (median per-run ratio)",
                    w[0].n_items, w[1].n_items
                );
            }
        }
    }
    Ok(())
}

fn cmd_rerank(args: RerankArgs) -> Result<(), Failure> {
    let records = io::read_metadata(&args.meta).at(&args.meta)?;
    let method = args.method.core();
    let params = method.map(|method| EcnParams {
        t: args.params.t,
        q: args.params.q,
        k: args.params.k,
        method,
    });

    let out: Matrix = match (&args.input.features, &args.input.distances) {
        (Some(path), _) => {
            let features = io::read_features(path).at(path)?;
            match params {
                Some(params) => rerank_features(&features, &params, &records)?,
                None => slice(&pairwise_sq_euclidean(&features)?, &records)?,
            }
        }
        (None, Some(path)) => {
            let base = DistanceMatrix::from_matrix(io::read_distance(path).at(path)?).at(path)?;
            match params {
                Some(params) => rerank(&base, &params, &records)?,
                None => slice(&base, &records)?,
            }
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    io::write_distance(&out, &args.out).at(&args.out)?;
    let label = match params {
        Some(p) if p.method == Method::RankDistOnly => format!("{}, k={}", p.method, p.k),
        Some(p) if p.method == Method::EcnOrigDist => format!("{}, t={} q={}", p.method, p.t, p.q),
        Some(p) => format!("{}, t={} q={} k={}", p.method, p.t, p.q, p.k),
        None => "none".to_string(),
    };
    println!(
        "{label}: wrote {} x {} query x gallery distances to {}",
        out.rows(),
        out.cols(),
        args.out.display()
    );
    Ok(())
}

fn slice(base: &DistanceMatrix, records: &ecn_core::EvalRecords) -> ecn_core::Result<Matrix> {
    if records.len() != base.n_items() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} records", base.n_items()),
            actual: format!("{} records", records.len()),
        });
    }
    base.select(&records.queries(), &records.gallery())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
