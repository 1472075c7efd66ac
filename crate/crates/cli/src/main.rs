//! `leakscope` command-line front end.
//!
//! Exit status: 0 on success, 1 when input data fails validation or
//! scoring, 2 on usage errors (bad flags, missing required inputs).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use leakscope::audit::{
    group_summaries, high_threshold, priv_bits, private_split_stats, ranking_entries,
    sequence_private_correlation, token_entries, top_k_sequences, write_group_csv, write_split_csv,
    RankBy,
};
use leakscope::data::{validate_token_block, Dataset, PopulationSignal, SequenceSignal};
use leakscope::evaluation::{compare_attacks, labels_of, roc};
use leakscope::report::{build_payloads, emit_scores, write_heatmap};
use leakscope::{score_dataset, Aggregation, Attack, AttackConfig, LogBase, ScoreFormat, ScoreSet};

const OUT_DIR_ENV: &str = "LEAKSCOPE_OUT_DIR";

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(
    name = "leakscope",
    version,
    about = "Membership-inference scoring and privacy auditing"
)]
struct Cli {
    /// JSON file whose keys mirror the command-line flags. Flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check evaluation and population datasets.
    Validate(ValidateArgs),
    /// Score an evaluation dataset with one attack.
    Score(ScoreArgs),
    /// Compare score files against dataset labels.
    Eval(EvalArgs),
    /// Token-level audit statistics.
    Stats(StatsArgs),
    /// Render heatmap and top-k HTML reports.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Evaluation datasets.
    #[arg(value_name = "EVAL")]
    eval: Vec<PathBuf>,
    /// Population datasets.
    #[arg(long, value_name = "FILE")]
    population: Vec<PathBuf>,
    /// Recompute token statistics from full distributions where present.
    #[arg(long)]
    full: bool,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Evaluation dataset (JSONL).
    #[arg(long, short)]
    data: Option<PathBuf>,
    /// rmia, informia, informia-token, loss, zlib, mink, minkpp or ref.
    #[arg(long)]
    attack: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    /// Percentage of tokens kept by min-k style aggregations.
    #[arg(long)]
    k: Option<f64>,
    /// Token aggregation for informia-token: mean or min_k.
    #[arg(long)]
    agg: Option<String>,
    /// Logarithm base: 2 or e.
    #[arg(long)]
    base: Option<String>,
    /// Population dataset, required by rmia and informia.
    #[arg(long)]
    population: Option<PathBuf>,
    /// Reference model index for the ref attack.
    #[arg(long)]
    ref_index: Option<usize>,
    /// Use raw population weights instead of normalizing them.
    #[arg(long)]
    unnormalized: bool,
    /// csv or jsonl; inferred from --out when omitted.
    #[arg(long)]
    format: Option<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Score files (repeatable).
    #[arg(long = "scores", required = true)]
    scores: Vec<PathBuf>,
    /// Evaluation dataset carrying the labels.
    #[arg(long)]
    labels: PathBuf,
    /// Comparison table CSV. Defaults to comparison.csv in the output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write one ROC CSV per score file here.
    #[arg(long)]
    roc_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long, short)]
    data: PathBuf,
    /// Token-level score file.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, short)]
    data: PathBuf,
    /// Token-level score file.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Number of sequences on each top-k page.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    title: Option<String>,
}

/// Config file contents. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    data: Option<PathBuf>,
    attack: Option<String>,
    gamma: Option<f64>,
    a: Option<f64>,
    k: Option<f64>,
    agg: Option<String>,
    base: Option<String>,
    population: Option<PathBuf>,
    ref_index: Option<usize>,
    unnormalized: Option<bool>,
    epsilon_floor: Option<f64>,
    format: Option<String>,
    out: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    top_k: Option<usize>,
    title: Option<String>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    fn attack_config(&self, args: &ScoreArgs) -> anyhow::Result<AttackConfig> {
        let mut cfg = AttackConfig::default();
        if let Some(g) = args.gamma.or(self.gamma) {
            cfg.gamma = g;
        }
        if let Some(a) = args.a.or(self.a) {
            cfg.a = a;
        }
        if let Some(k) = args.k.or(self.k) {
            cfg.k_percent = k;
        }
        if let Some(b) = args.base.as_ref().or(self.base.as_ref()) {
            cfg.log_base = b.parse::<LogBase>().map_err(|e| usage(e.to_string()))?;
        }
        if args.unnormalized || self.unnormalized == Some(true) {
            cfg.normalize_population = false;
        }
        if let Some(f) = self.epsilon_floor {
            cfg.epsilon_floor = f;
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    fn out_dir(&self, flag: Option<&PathBuf>) -> PathBuf {
        flag.cloned()
            .or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn load_eval(path: &Path, floor: f64) -> anyhow::Result<Dataset<SequenceSignal>> {
    Dataset::load(path, floor).with_context(|| format!("loading {}", path.display()))
}

fn load_population(path: &Path, floor: f64) -> anyhow::Result<Dataset<PopulationSignal>> {
    Dataset::load(path, floor).with_context(|| format!("loading {}", path.display()))
}

fn load_scores(path: &Path) -> anyhow::Result<ScoreSet> {
    ScoreSet::load(path).with_context(|| format!("loading {}", path.display()))
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn validate(args: &ValidateArgs, conf: &ConfigFile) -> anyhow::Result<()> {
    if args.eval.is_empty() && args.population.is_empty() {
        return Err(usage("validate needs at least one dataset"));
    }
    let floor = conf
        .epsilon_floor
        .unwrap_or(AttackConfig::default().epsilon_floor);
    for path in &args.eval {
        let data = load_eval(path, floor)?;
        let mut checked = 0;
        let mut deviation = 0.0f64;
        if args.full {
            for rec in data.records.iter().filter(|r| {
                r.tokens
                    .as_ref()
                    .is_some_and(|t| t.iter().all(|t| t.has_full_dist()))
            }) {
                let report =
                    validate_token_block(rec).with_context(|| format!("{}", path.display()))?;
                checked += report.positions_checked;
                deviation = deviation.max(report.max_deviation);
            }
        }
        print!(
            "{}: {} records, {} floored",
            path.display(),
            data.len(),
            data.floored
        );
        if args.full {
            print!(", {checked} positions recomputed (max deviation {deviation:.1e})");
        }
        println!();
    }
    for path in &args.population {
        let data = load_population(path, floor)?;
        println!(
            "{}: {} population records, {} floored",
            path.display(),
            data.len(),
            data.floored
        );
    }
    Ok(())
}

fn score(args: &ScoreArgs, conf: &ConfigFile) -> anyhow::Result<()> {
    let data_path = args
        .data
        .as_ref()
        .or(conf.data.as_ref())
        .ok_or_else(|| usage("score needs --data"))?;
    let attack_name = args
        .attack
        .as_ref()
        .or(conf.attack.as_ref())
        .ok_or_else(|| usage("score needs --attack"))?;
    let agg: Aggregation = match args.agg.as_ref().or(conf.agg.as_ref()) {
        Some(s) => s
            .parse()
            .map_err(|e: leakscope::Error| usage(e.to_string()))?,
        None => Aggregation::Mean,
    };
    let ref_index = args.ref_index.or(conf.ref_index).unwrap_or(0);
    let attack = Attack::parse(attack_name, agg, ref_index).map_err(|e| usage(e.to_string()))?;
    let cfg = conf.attack_config(args)?;
    let population_path = args.population.as_ref().or(conf.population.as_ref());
    if attack.needs_population() && population_path.is_none() {
        return Err(usage(format!(
            "attack '{attack_name}' requires --population"
        )));
    }

    let format = match args.format.as_ref().or(conf.format.as_ref()) {
        Some(f) => Some(f.parse::<ScoreFormat>().map_err(|e| usage(e.to_string()))?),
        None => None,
    };
    let out = match args.out.as_ref().or(conf.out.as_ref()) {
        Some(p) => p.clone(),
        None => {
            let ext = match format.unwrap_or(ScoreFormat::Csv) {
                ScoreFormat::Csv => "csv",
                ScoreFormat::Jsonl => "jsonl",
            };
            conf.out_dir(None).join(format!("{}.{ext}", attack.name()))
        }
    };
    let format = format.unwrap_or_else(|| ScoreFormat::from_path(&out));

    let data = load_eval(data_path, cfg.epsilon_floor)?;
    let population = match population_path {
        Some(p) if attack.needs_population() => Some(load_population(p, cfg.epsilon_floor)?),
        _ => None,
    };
    let set = score_dataset(
        attack,
        &data.records,
        population.as_ref().map(|p| p.records.as_slice()),
        &cfg,
    )?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    emit_scores(&set, &out, format)?;
    eprintln!("wrote {} scores to {}", set.len(), out.display());
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scores".into())
}

fn eval(args: &EvalArgs, conf: &ConfigFile) -> anyhow::Result<()> {
    let floor = conf
        .epsilon_floor
        .unwrap_or(AttackConfig::default().epsilon_floor);
    let data = load_eval(&args.labels, floor)?;
    let labels = labels_of(&data.records);
    let sets = args
        .scores
        .iter()
        .map(|p| load_scores(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let table = compare_attacks(&sets, &labels)?;

    let out = args
        .out
        .clone()
        .or_else(|| conf.out.clone())
        .unwrap_or_else(|| conf.out_dir(None).join("comparison.csv"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    table.write_csv(file)?;

    if let Some(dir) = &args.roc_dir {
        create_dir(dir)?;
        for (set, path) in sets.iter().zip(&args.scores) {
            let curve = roc(set, &labels)?;
            let target = dir.join(format!("{}.roc.csv", file_stem(path)));
            let file = fs::File::create(&target)
                .with_context(|| format!("creating {}", target.display()))?;
            curve.write_csv(file)?;
        }
    }
    print!("{}", table.to_text());
    Ok(())
}

#[derive(serde::Serialize)]
struct Summary {
    attack: String,
    sequences: usize,
    scored_tokens: usize,
    high_threshold: f64,
    masked_tokens: usize,
    correlation: Correlation,
}

#[derive(serde::Serialize)]
struct Correlation {
    method: &'static str,
    /// Sequences with at least one private token.
    n: usize,
    value: Option<f64>,
}

fn require_token_scores(set: &ScoreSet, path: &Path) -> anyhow::Result<()> {
    if set.token_scores.is_none() {
        return Err(usage(format!("{} carries no token scores", path.display())));
    }
    Ok(())
}

fn stats(args: &StatsArgs, conf: &ConfigFile) -> anyhow::Result<()> {
    let floor = conf
        .epsilon_floor
        .unwrap_or(AttackConfig::default().epsilon_floor);
    let data = load_eval(&args.data, floor)?;
    let set = load_scores(&args.scores)?;
    require_token_scores(&set, &args.scores)?;
    let dir = conf.out_dir(args.out_dir.as_ref());
    create_dir(&dir)?;

    let entries = token_entries(&data.records, &set)?;
    let all: Vec<f64> = entries.iter().map(|e| e.score).collect();
    let groups = group_summaries(&entries)?;
    write_group_csv(&groups, fs::File::create(dir.join("entity_groups.csv"))?)?;

    let masked = data.records.iter().any(|r| r.priv_mask.is_some());
    let mut masked_tokens = 0;
    if masked {
        let split = private_split_stats(&data.records, &set)?;
        masked_tokens = split.masked_tokens();
        write_split_csv(&split, fs::File::create(dir.join("private_split.csv"))?)?;

        let mut w = csv::Writer::from_path(dir.join("priv_bits.csv"))?;
        w.write_record([
            "id",
            "private_bits",
            "total_bits",
            "private_positions",
            "positions",
        ])?;
        for rec in data.records.iter().filter(|r| r.priv_mask.is_some()) {
            let b = priv_bits(rec)?;
            w.write_record([
                rec.id.clone(),
                b.private_bits.to_string(),
                b.total_bits.to_string(),
                b.private_positions.to_string(),
                b.positions.to_string(),
            ])?;
        }
        w.flush()?;
    } else {
        eprintln!("no privacy masks: skipping private_split.csv and priv_bits.csv");
    }

    let ranked = ranking_entries(&data.records, &set);
    let with_private = ranked
        .iter()
        .filter(|r| r.private_token_mean.is_some())
        .count();
    let summary = Summary {
        attack: set.attack.clone(),
        sequences: set.len(),
        scored_tokens: entries.len(),
        high_threshold: high_threshold(&all)?,
        masked_tokens,
        correlation: Correlation {
            method: "pearson",
            n: with_private,
            value: sequence_private_correlation(&ranked).ok(),
        },
    };
    let mut f = fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;
    eprintln!("wrote statistics to {}", dir.display());
    Ok(())
}

fn report(args: &ReportArgs, conf: &ConfigFile) -> anyhow::Result<()> {
    let floor = conf
        .epsilon_floor
        .unwrap_or(AttackConfig::default().epsilon_floor);
    let data = load_eval(&args.data, floor)?;
    let set = load_scores(&args.scores)?;
    require_token_scores(&set, &args.scores)?;
    let k = args.top_k.or(conf.top_k).unwrap_or(10);
    if k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    let title = args
        .title
        .clone()
        .or_else(|| conf.title.clone())
        .unwrap_or_else(|| set.attack.clone());
    let dir = conf.out_dir(args.out_dir.as_ref());
    create_dir(&dir)?;

    let mut scored: Vec<&SequenceSignal> = data
        .records
        .iter()
        .filter(|r| set.tokens_of(&r.id).is_some())
        .collect();
    if scored.is_empty() {
        bail!("no record in {} has token scores", args.data.display());
    }
    scored.sort_by(|a, b| a.id.cmp(&b.id));
    write_heatmap(
        &build_payloads(scored.iter().copied(), &set)?,
        &title,
        dir.join("heatmap.html"),
    )?;

    let ranked = ranking_entries(&data.records, &set);
    let pages = [
        (
            RankBy::SequenceMean,
            "top_sequences.html",
            "top sequences by sequence score",
        ),
        (
            RankBy::PrivateTokenMean,
            "top_private.html",
            "top sequences by private-token score",
        ),
    ];
    for (by, file, label) in pages {
        let top = top_k_sequences(&ranked, k, by);
        if top.is_empty() {
            eprintln!("{file}: nothing to rank, skipped");
            continue;
        }
        let records = top.iter().filter_map(|r| data.get(&r.id));
        write_heatmap(
            &build_payloads(records, &set)?,
            &format!("{title}: {label}"),
            dir.join(file),
        )?;
    }
    eprintln!("wrote reports to {}", dir.display());
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let conf = ConfigFile::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Validate(a) => validate(a, &conf),
        Command::Score(a) => score(a, &conf),
        Command::Eval(a) => eval(a, &conf),
        Command::Stats(a) => stats(a, &conf),
        Command::Report(a) => report(a, &conf),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
