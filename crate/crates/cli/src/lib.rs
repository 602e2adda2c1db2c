//! The `semsort` command line. Each subcommand loads its inputs, calls into
//! `semsort-core` and writes the result.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use semsort_core::corpus::{self, Granularity, IngestOptions, Tokenizer};
use semsort_core::eval::{self, CurveOptions, PairUniverse};
use semsort_core::preferences::{self, PreferencePool, PreferenceSource, ScoredPair, DEFAULT_TEST_CAP};
use semsort_core::semantics::wnsd_pair;
use semsort_core::store::{self, tsv};
use semsort_core::trainer::{self, TrainReport};
use semsort_core::vcdim::{self, Kind};
use semsort_core::{Index, SemanticModel, TrainerConfig};
use semsort_server::LabelSession;

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

#[derive(Debug, Parser)]
#[command(
    name = "semsort",
    version,
    about = "Learn context weights for co-occurrence relatedness from preferences"
)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 17)]
    pub seed: u64,

    /// Maximum number of worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index from a corpus directory or file.
    Ingest(IngestArgs),
    /// Score term pairs by negated NSD, or WNSD under a model.
    Score(ScoreArgs),
    /// Expand scored pairs into preferences.
    GenPrefs(GenPrefsArgs),
    /// Score all pairs of a term list by negated NSD over a second corpus.
    Gss(GssArgs),
    /// Train a model on preferences.
    Train(TrainArgs),
    /// Accuracy on preferences and Spearman against scored pairs.
    Eval(EvalArgs),
    /// Learning curve: accuracy and correlation against training size.
    Curve(CurveArgs),
    /// Most related terms for a term.
    Rank(RankArgs),
    /// Per-group change in total context weight between two models.
    Interpret(InterpretArgs),
    /// Brute-force VC dimension of a preference hypothesis class.
    Vcdim(VcdimArgs),
    /// Run the labeling service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        matches!(self, Switch::On)
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of .txt files, or one file with form-feed separated documents.
    pub corpus: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value = "paragraph", value_parser = parse_granularity)]
    pub granularity: Granularity,
    /// Stopword list, one word per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "on")]
    pub stem: Switch,
    /// Drop documents with fewer non-stopword tokens (0 keeps all).
    #[arg(long, default_value_t = 0)]
    pub min_nonstop: usize,
    /// Keep only the most frequent terms.
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Phrase list, one phrase per line.
    #[arg(long)]
    pub phrases: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Pairs as `term1<TAB>term2`, optionally followed by a score column that is ignored.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Score with WNSD under this model instead of NSD.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenPrefsArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Write a uniform sample of this many preferences instead of all.
    #[arg(long)]
    pub sample: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GssArgs {
    /// Index of the scoring corpus, usually built with sentence contexts.
    #[arg(long)]
    pub index: PathBuf,
    /// Terms to score, one per line.
    #[arg(long, conflicts_with = "top")]
    pub terms: Option<PathBuf>,
    /// Score the most frequent terms of the index instead of a list.
    #[arg(long)]
    pub top: Option<usize>,
    /// Leave out pairs that never co-occur instead of giving them the sentinel score.
    #[arg(long)]
    pub drop_flagged: bool,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub prefs: PathBuf,
    /// Trainer config as key=value lines (default: built-in values).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from this model instead of all ones.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Per-epoch CSV report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Model to evaluate (default: all ones, i.e. plain NSD).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub prefs: Option<PathBuf>,
    /// Ground-truth scored pairs for Spearman correlation.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Training sizes 0, 0.5, 1, 2, 4 and 8 percent of all preferences; 10 trials.
    SmallWordsim,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Universe {
    /// Pairs appearing in the test preferences.
    Test,
    /// Every scored pair.
    All,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Ground-truth scored pairs; preferences are all pairs of these.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Training sizes, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["preset", "fractions"])]
    pub sizes: Option<Vec<u64>>,
    /// Training sizes as fractions of all preferences, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "preset")]
    pub fractions: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TEST_CAP)]
    pub test_cap: u64,
    /// Pairs entering the Spearman correlation.
    #[arg(long, value_enum, default_value = "test")]
    pub universe: Universe,
    /// Directory for curve.csv and raw.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub term: String,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// Also list terms that never co-occur with the target.
    #[arg(long)]
    pub include_infinite: bool,
}

#[derive(Debug, Args)]
pub struct InterpretArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Model before training (default: all ones).
    #[arg(long)]
    pub initial: Option<PathBuf>,
    #[arg(long = "final")]
    pub final_model: PathBuf,
    /// `doc_id<TAB>group` lines.
    #[arg(long)]
    pub groups: PathBuf,
}

#[derive(Debug, Args)]
pub struct VcdimArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: Kind,
    #[arg(long)]
    pub d: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Labels from an earlier session to start with.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<Kind, String> {
    s.parse()
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        // Ignore the error when a pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let seed = cli.seed;
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Score(a) => score(a),
        Command::GenPrefs(a) => gen_prefs(a, seed),
        Command::Gss(a) => gss(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => evaluate(a),
        Command::Curve(a) => curve(a, seed),
        Command::Rank(a) => rank(a),
        Command::Interpret(a) => interpret(a),
        Command::Vcdim(a) => vcdim_cmd(a),
        Command::Serve(a) => serve(a, seed),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_model_or_unit(path: Option<&Path>, index: &Index) -> CliResult<SemanticModel> {
    Ok(match path {
        Some(p) => store::load_model(p, index)?,
        None => SemanticModel::unit(index),
    })
}

fn load_config(path: Option<&Path>) -> CliResult<TrainerConfig> {
    Ok(match path {
        Some(p) => tsv::read_config(p)?,
        None => TrainerConfig::default(),
    })
}

/// Reads scored pairs, warning about rows that were skipped.
fn load_scores(path: &Path, index: &Index) -> CliResult<Vec<ScoredPair>> {
    let file = tsv::read_scored_pairs(path, &tsv::TermResolver::for_index(index))?;
    for u in &file.unknown {
        eprintln!("warning: {}:{}: unknown term {:?}", path.display(), u.line, u.term);
    }
    for line in &file.self_pairs {
        eprintln!("warning: {}:{}: both terms are the same entry", path.display(), line);
    }
    Ok(preferences::merge_duplicate_pairs(&file.pairs))
}

fn finite_scores(pairs: Vec<ScoredPair>) -> Vec<ScoredPair> {
    let before = pairs.len();
    let kept: Vec<ScoredPair> = pairs.into_iter().filter(|s| s.score.is_finite()).collect();
    if kept.len() < before {
        eprintln!("warning: skipped {} pairs with non-finite scores", before - kept.len());
    }
    kept
}

fn ingest(a: IngestArgs) -> CliResult {
    let stopwords = match &a.stopwords {
        Some(p) => corpus::load_lines(p)?,
        None => Vec::new(),
    };
    let phrases = match &a.phrases {
        Some(p) => corpus::load_lines(p)?,
        None => Vec::new(),
    };
    let opts = IngestOptions {
        granularity: a.granularity,
        tokenizer: Tokenizer::new(stopwords, a.stem.on()),
        min_nonstop: a.min_nonstop,
        top_n: a.top_n,
        phrases,
    };
    let docs = corpus::load_corpus(&a.corpus)?;
    let ing = corpus::ingest(&docs, &opts)?;
    let index = Index::build(&ing.contexts, ing.dictionary, a.stem.on())?;
    store::save_index(&index, &a.out)?;
    eprintln!(
        "documents kept {} dropped {}; contexts {}; terms {}",
        ing.kept_documents,
        ing.dropped_documents,
        index.num_contexts(),
        index.num_terms()
    );
    Ok(())
}

fn score(a: ScoreArgs) -> CliResult {
    let index = store::load_index(&a.index)?;
    let model = load_model_or_unit(a.model.as_deref(), &index)?;
    let resolver = tsv::TermResolver::for_index(&index);
    let text = fs::read_to_string(&a.pairs)?;
    let mut out = String::new();
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        rows += 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 {
            return Err(format!("{}:{}: expected at least 2 columns", a.pairs.display(), n + 1).into());
        }
        let (Some(t1), Some(t2)) = (resolver.resolve(cols[0]), resolver.resolve(cols[1])) else {
            // An unresolvable first row is taken as a header.
            if rows > 1 {
                eprintln!("warning: {}:{}: unknown term in {:?}", a.pairs.display(), n + 1, line);
            }
            continue;
        };
        let Ok(pair) = semsort_core::TermPair::new(t1, t2) else {
            eprintln!(
                "warning: {}:{}: both terms are the same entry",
                a.pairs.display(),
                n + 1
            );
            continue;
        };
        let r = wnsd_pair(&model, &index, pair)?;
        writeln!(out, "{}\t{}\t{}", cols[0].trim(), cols[1].trim(), r.score())?;
    }
    write_output(a.out.as_deref(), &out)
}

fn gen_prefs(a: GenPrefsArgs, seed: u64) -> CliResult {
    let index = store::load_index(&a.index)?;
    let scores = finite_scores(load_scores(&a.scores, &index)?);
    let pool = PreferencePool::new(&scores)?;
    let prefs = match a.sample {
        Some(m) => preferences::sample_split(&pool, m, seed, 0)?.train,
        None => pool.to_vec(),
    };
    tsv::write_preferences(&a.out, &prefs, index.dictionary())?;
    eprintln!("{} preferences written of {}", prefs.len(), pool.len());
    Ok(())
}

fn gss(a: GssArgs) -> CliResult {
    let index = store::load_index(&a.index)?;
    let dict = index.dictionary();
    let targets = match (&a.terms, a.top) {
        (Some(p), _) => {
            let resolver = tsv::TermResolver::for_index(&index);
            let mut keep = Vec::new();
            for raw in corpus::load_lines(p)? {
                match resolver.resolve(&raw) {
                    Some(id) => keep.push(dict.term(id).unwrap().to_string()),
                    None => eprintln!("warning: {raw:?} is not in the index"),
                }
            }
            dict.subset(keep.iter().map(String::as_str))
        }
        (None, Some(n)) => dict.subset(dict.terms().iter().take(n).map(String::as_str)),
        (None, None) => return Err("one of --terms or --top is required".into()),
    };
    let scores = preferences::gss_scores(&index, &targets)?;
    let flagged = scores.iter().filter(|s| s.flagged).count();
    let kept: Vec<ScoredPair> = scores
        .iter()
        .filter(|s| !(a.drop_flagged && s.flagged))
        .map(|s| s.scored)
        .collect();
    tsv::write_scored_pairs(&a.out, &kept, &targets)?;
    eprintln!(
        "{} pairs over {} terms; {} never co-occur",
        scores.len(),
        targets.len(),
        flagged
    );
    Ok(())
}

pub const REPORT_CSV_HEADER: &str = "epoch,delta,alpha,unsatisfied";

pub fn report_csv(r: &TrainReport) -> String {
    let mut out = format!("{REPORT_CSV_HEADER}\n");
    for i in 0..r.epochs {
        writeln!(
            out,
            "{},{},{},{}",
            i + 1,
            r.delta_per_epoch[i],
            r.alpha_per_epoch[i],
            r.unsatisfied_per_epoch[i]
        )
        .unwrap();
    }
    out
}

fn train(a: TrainArgs) -> CliResult {
    let index = store::load_index(&a.index)?;
    let config = load_config(a.config.as_deref())?;
    let prefs = tsv::read_preferences(&a.prefs, &tsv::TermResolver::for_index(&index))?;
    let mut model = load_model_or_unit(a.init.as_deref(), &index)?;
    let report = trainer::train(&mut model, &index, &prefs, &config)?;
    store::save_model(&model, &a.model_out)?;
    if let Some(p) = &a.report {
        fs::write(p, report_csv(&report))?;
    }
    println!(
        "epochs {} final_delta {} terminated_by {} infinite_gap_updates {}",
        report.epochs,
        report.final_delta(),
        report.terminated_by,
        report.infinite_gap_updates
    );
    Ok(())
}

fn evaluate(a: EvalArgs) -> CliResult {
    if a.prefs.is_none() && a.scores.is_none() {
        return Err("nothing to evaluate: give --prefs and/or --scores".into());
    }
    let index = store::load_index(&a.index)?;
    let model = load_model_or_unit(a.model.as_deref(), &index)?;
    if let Some(p) = &a.prefs {
        let prefs = tsv::read_preferences(p, &tsv::TermResolver::for_index(&index))?;
        println!("accuracy\t{}", eval::accuracy(&model, &index, &prefs)?);
        println!("preferences\t{}", prefs.len());
    }
    if let Some(p) = &a.scores {
        let scores = load_scores(p, &index)?;
        let mut predicted = Vec::with_capacity(scores.len());
        let mut truth = Vec::with_capacity(scores.len());
        for s in &scores {
            predicted.push(wnsd_pair(&model, &index, s.pair)?.score());
            truth.push(s.score);
        }
        println!("spearman\t{}", eval::spearman(&predicted, &truth)?);
        println!("pairs\t{}", scores.len());
    }
    Ok(())
}

/// Training sizes and trial count for a curve run.
pub fn curve_plan(
    preset: Option<Preset>,
    sizes: Option<Vec<u64>>,
    fractions: Option<Vec<f64>>,
    trials: Option<usize>,
    pool_len: u64,
) -> CliResult<(Vec<u64>, usize)> {
    let (fractions, default_trials) = match preset {
        Some(Preset::SmallWordsim) => (Some(vec![0.0, 0.005, 0.01, 0.02, 0.04, 0.08]), 10),
        None => (fractions, 10),
    };
    let sizes = match (sizes, fractions) {
        (Some(s), _) => s,
        (None, Some(f)) => {
            if let Some(bad) = f.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(format!("fraction {bad} outside [0, 1]").into());
            }
            let mut s: Vec<u64> = f.iter().map(|x| (x * pool_len as f64).round() as u64).collect();
            // Small pools can round neighbouring fractions to the same size.
            s.dedup();
            s
        }
        (None, None) => return Err("give --preset, --sizes or --fractions".into()),
    };
    Ok((sizes, trials.unwrap_or(default_trials)))
}

fn curve(a: CurveArgs, seed: u64) -> CliResult {
    let index = store::load_index(&a.index)?;
    let config = load_config(a.config.as_deref())?;
    let scores = finite_scores(load_scores(&a.scores, &index)?);
    let pool = PreferencePool::new(&scores)?;
    let (sizes, trials) = curve_plan(a.preset, a.sizes, a.fractions, a.trials, pool.len())?;
    let options = CurveOptions {
        test_cap: a.test_cap,
        universe: match a.universe {
            Universe::Test => PairUniverse::TestPairs,
            Universe::All => PairUniverse::AllScoredPairs,
        },
    };
    let c = eval::learning_curve(&pool, &scores, &sizes, trials, seed, &config, &index, &options)?;
    fs::create_dir_all(&a.out_dir)?;
    fs::write(a.out_dir.join("curve.csv"), eval::curve_csv(&c.points))?;
    fs::write(a.out_dir.join("raw.csv"), eval::raw_csv(&c.raw))?;
    print!("{}", eval::curve_csv(&c.points));
    Ok(())
}

fn rank(a: RankArgs) -> CliResult {
    let index = store::load_index(&a.index)?;
    let model = load_model_or_unit(a.model.as_deref(), &index)?;
    let target = tsv::TermResolver::for_index(&index)
        .resolve(&a.term)
        .ok_or_else(|| format!("unknown term {:?}", a.term))?;
    let dict = index.dictionary();
    let mut out = String::new();
    for (t, r) in eval::rank_topk(&model, &index, target, a.k, a.include_infinite)? {
        writeln!(out, "{}\t{}", dict.term(t).unwrap(), r.distance)?;
    }
    write_output(None, &out)
}

fn interpret(a: InterpretArgs) -> CliResult {
    let index = store::load_index(&a.index)?;
    let initial = load_model_or_unit(a.initial.as_deref(), &index)?;
    let final_model = store::load_model(&a.final_model, &index)?;
    let groups = tsv::read_doc_groups(&a.groups)?;
    let rows = eval::group_weight_delta(&initial, &final_model, &groups, &index)?;
    write_output(None, &eval::group_delta_tsv(&rows))
}

fn vcdim_cmd(a: VcdimArgs) -> CliResult {
    let report = vcdim::vcdim_report(a.kind, a.d)?;
    print!("{}", vcdim::report_table(&[report]));
    Ok(())
}

fn serve(a: ServeArgs, seed: u64) -> CliResult {
    let index = Arc::new(store::load_index(&a.index)?);
    let config = load_config(a.config.as_deref())?;
    let session = Arc::new(LabelSession::new(index.clone(), config, seed));
    if let Some(p) = &a.labels {
        for pref in tsv::read_preferences(p, &tsv::TermResolver::for_index(&index))? {
            session.add_label(pref, "imported").map_err(|e| e.body.to_string())?;
        }
    }
    let addr = SocketAddr::new(a.host, a.port);
    eprintln!("serving {} terms on http://{addr}", index.num_terms());
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(semsort_server::serve(session, addr))?;
    Ok(())
}
