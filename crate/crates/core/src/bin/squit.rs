use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use squit::error::{Error, Result};
use squit::eval::{score_corpus, BleuSmoothing, EvalOptions};
use squit::fuzz::{fuzz_question, FuzzConfig};
use squit::grammar::template_stats;
use squit::kb_ingest::{self, fetch_slice, label_stats, KnowledgeSlice, SliceCache};
use squit::pipeline::{
    compute_stats, entity_spans_from_query, format_mean, read_corpus, write_records, CorpusFormat,
    CorpusRecord, Generator, SplitRecipe,
};
use squit::rng::item_rng;

#[derive(Parser)]
#[command(name = "squit", version, about = "Generate question/SPARQL pairs from a typed knowledge-base slice")]
struct Cli {
    /// Overrides the recipe seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Split recipe (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Jsonl,
    Tsv,
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize local dumps, or fetch domains from a SPARQL endpoint, into a slice directory.
    Ingest(IngestArgs),
    /// Generate one split from a recipe.
    Generate(GenerateArgs),
    /// Perturb the questions of a JSONL corpus.
    Fuzz(FuzzArgs),
    /// Score predicted queries against gold queries.
    Eval(EvalArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, requires = "entities")]
    predicates: Option<PathBuf>,
    #[arg(long, requires = "predicates")]
    entities: Option<PathBuf>,
    /// Tab-separated `label<TAB>POS` overrides.
    #[arg(long)]
    pos_lexicon: Option<PathBuf>,
    #[arg(long, env = "SQUIT_ENDPOINT")]
    endpoint: Option<String>,
    /// Entity type to fetch; repeatable.
    #[arg(long = "domain")]
    domains: Vec<String>,
    #[arg(long, default_value_t = 500)]
    limit: usize,
}

#[derive(Args)]
struct GenerateArgs {
    /// Overrides the recipe's target count.
    #[arg(long)]
    count: Option<usize>,
    /// Writes the type graph in DOT format.
    #[arg(long)]
    graph_dot: Option<PathBuf>,
    /// Writes the enumerated baseline templates, one per line.
    #[arg(long)]
    dump_templates: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    filler_prob: Option<f64>,
    #[arg(long)]
    case_prob: Option<f64>,
    #[arg(long)]
    char_noise_prob: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    bleu_smoothing: bool,
    #[arg(long, default_value_t = 1.2)]
    rouge_w_exp: f64,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| io_err(p, e))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn io_err(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn require_config(cli: &Cli) -> Result<&Path> {
    cli.config
        .as_deref()
        .ok_or_else(|| Error::Config("--config <recipe.toml> is required".into()))
}

fn corpus_format(f: Option<Format>) -> Result<CorpusFormat> {
    match f {
        None | Some(Format::Jsonl) => Ok(CorpusFormat::Jsonl),
        Some(Format::Tsv) => Ok(CorpusFormat::Tsv),
        Some(_) => Err(Error::Config("--format must be jsonl or tsv here".into())),
    }
}

fn ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    let dir = cli
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("--out <dir> is required for ingest".into()))?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let slice = if let (Some(p), Some(e)) = (&args.predicates, &args.entities) {
        let slice = KnowledgeSlice::load(p, e, args.pos_lexicon.as_deref())?;
        kb_ingest::write_predicates(dir.join("predicates.jsonl"), &slice.predicates)?;
        kb_ingest::write_entities(dir.join("entities.jsonl"), &slice.entities)?;
        slice
    } else {
        let endpoint = args.endpoint.as_deref().ok_or_else(|| {
            Error::Config("give --predicates/--entities, or --endpoint (or SQUIT_ENDPOINT) with --domain".into())
        })?;
        if args.domains.is_empty() {
            return Err(Error::Config("--domain is required with --endpoint".into()));
        }
        let mut predicates = Vec::new();
        let mut entities = Vec::new();
        for d in &args.domains {
            let part = fetch_slice(endpoint, d, args.limit, &SliceCache::in_dir(dir, d))?;
            predicates.extend(part.predicates);
            entities.extend(part.entities);
        }
        KnowledgeSlice::new(predicates, entities)?
    };
    let stats = label_stats(&slice);
    let mut out = io::stdout().lock();
    let w = |e| io_err(Path::new("<stdout>"), e);
    writeln!(out, "predicates\t{}", stats.distinct_predicates).map_err(w)?;
    writeln!(out, "predicate labels\t{}", stats.predicate_labels).map_err(w)?;
    writeln!(out, "mean labels per predicate\t{}", format_mean(stats.mean_labels_per_predicate)).map_err(w)?;
    writeln!(out, "entities\t{}", stats.entities).map_err(w)?;
    writeln!(out, "unique entity labels\t{}", stats.unique_entity_labels).map_err(w)?;
    writeln!(out, "mean labels per entity\t{}", format_mean(stats.mean_labels_per_entity)).map_err(w)?;
    Ok(())
}

fn generate(cli: &Cli, args: &GenerateArgs) -> Result<()> {
    let mut recipe = SplitRecipe::load(require_config(cli)?)?;
    if let Some(seed) = cli.seed {
        recipe.seed = seed;
    }
    if let Some(n) = args.count {
        recipe.target_count = n;
    }
    let format = corpus_format(cli.format)?;
    let slice = recipe.load_slice()?;
    let grammars = recipe.load_grammars()?;
    let generator = Generator::new(&recipe, &slice, &grammars)?;
    if let Some(p) = &args.graph_dot {
        fs::write(p, generator.graph.to_dot()).map_err(|e| io_err(p, e))?;
    }
    if let Some(p) = &args.dump_templates {
        let text: String = generator
            .templates
            .iter()
            .map(|t| format!("{}\t{}\t{}\t{}\n", t.id, t.question_type, t.depth, t.text()))
            .collect();
        fs::write(p, text).map_err(|e| io_err(p, e))?;
        eprint!("{}", template_stats(&generator.templates));
    }
    let pairs = generator.generate()?;
    let records: Vec<CorpusRecord> = pairs.iter().map(CorpusRecord::from).collect();
    let target = cli.out.as_deref().unwrap_or(Path::new("<stdout>"));
    write_records(output(cli.out.as_deref())?, &records, format).map_err(|e| io_err(target, e))?;
    log::info!("wrote {} pairs", records.len());
    Ok(())
}

fn fuzz(cli: &Cli, args: &FuzzArgs) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => SplitRecipe::load(p)?.fuzz,
        None => FuzzConfig::test_hard(),
    };
    if let Some(p) = args.filler_prob {
        config.filler_prob = p;
    }
    if let Some(p) = args.case_prob {
        config.case_prob = p;
    }
    if let Some(p) = args.char_noise_prob {
        config.char_noise_prob = p;
    }
    config.validate()?;
    let seed = cli.seed.unwrap_or(0);
    let mut records = read_corpus(&args.input)?;
    for (i, r) in records.iter_mut().enumerate() {
        let spans = entity_spans_from_query(&r.question, &r.query);
        let mut rng = item_rng(seed, config.salt, i as u64);
        r.question = fuzz_question(&r.question, &spans, &config, &mut rng).text;
    }
    let target = cli.out.as_deref().unwrap_or(Path::new("<stdout>"));
    write_records(output(cli.out.as_deref())?, &records, corpus_format(cli.format)?)
        .map_err(|e| io_err(target, e))
}

fn eval(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let opts = EvalOptions {
        normalize: !args.no_normalize,
        bleu_smoothing: if args.bleu_smoothing {
            BleuSmoothing::AddOne
        } else {
            BleuSmoothing::None
        },
        rouge_w_exponent: args.rouge_w_exp,
    };
    let report = score_corpus(&args.pred, &args.gold, &opts)?;
    let name = args
        .pred
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    let json = serde_json::to_string(&report).expect("report serializes");
    let mut text = String::new();
    match cli.format {
        Some(Format::Json) => text.push_str(&json),
        Some(Format::Text) => text.push_str(report.table(&name).trim_end()),
        None => {
            text.push_str(&report.table(&name));
            text.push_str(&json);
        }
        Some(_) => return Err(Error::Config("--format must be text or json here".into())),
    }
    text.push('\n');
    let target = cli.out.as_deref().unwrap_or(Path::new("<stdout>"));
    output(cli.out.as_deref())?
        .write_all(text.as_bytes())
        .map_err(|e| io_err(target, e))
}

fn stats(cli: &Cli, args: &StatsArgs) -> Result<()> {
    let recipe = SplitRecipe::load(require_config(cli)?)?;
    let slice = recipe.load_slice()?;
    let records = read_corpus(&args.corpus)?;
    let stats = compute_stats(&records, &slice)?;
    let text = match cli.format {
        Some(Format::Json) => serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n",
        None | Some(Format::Text) => stats.to_string(),
        Some(_) => return Err(Error::Config("--format must be text or json here".into())),
    };
    let target = cli.out.as_deref().unwrap_or(Path::new("<stdout>"));
    output(cli.out.as_deref())?
        .write_all(text.as_bytes())
        .map_err(|e| io_err(target, e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => ingest(&cli, a),
        Command::Generate(a) => generate(&cli, a),
        Command::Fuzz(a) => fuzz(&cli, a),
        Command::Eval(a) => eval(&cli, a),
        Command::Stats(a) => stats(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
