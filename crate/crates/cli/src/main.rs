use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use prefixer_core::corpus::{run_corpus, CorpusOptions};
use prefixer_core::fixtures;
use prefixer_core::generator::{Generator, HeuristicGenerator, HttpTransport, LlmConfig, LlmGenerator};
use prefixer_core::harness::{DependencyInstaller, Harness, PipInstaller, ProcessBackend, PythonEnv, PythonEnvProbe};
use prefixer_core::instrument::instrument;
use prefixer_core::prompt::{gen_prompt1, undefined_blocks};
use prefixer_core::search;
use prefixer_core::{get_undefined_refs, GeneratorKind, RunConfig, Snippet};

#[derive(Parser)]
#[command(name = "prefixer", version, about = "Synthesize imports and initializations that make Python snippets run")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Heuristic,
    Llm,
}

#[derive(Subcommand)]
enum Command {
    /// Search prefixes for every `.py` file in a directory.
    Run(RunArgs),
    /// Print the undefined variables and members of a snippet.
    Analyze { file: PathBuf },
    /// Print the instrumented snippet and its probe-to-line map.
    Instrument { file: PathBuf },
    /// Print the first prompt sent for a snippet.
    Prompt { file: PathBuf },
    /// Replay the bundled worked example with canned responses and a
    /// simulated interpreter.
    Demo,
}

#[derive(clap::Args)]
struct RunArgs {
    corpus: PathBuf,
    /// Completions per query.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Coverage-guidance attempts.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value_t = GeneratorArg::Heuristic)]
    generator: GeneratorArg,
    #[arg(long, default_value = "gpt-4o-mini")]
    model: String,
    /// Chat-completions endpoint root.
    #[arg(long, env = "PREFIXER_BASE_URL", default_value = "https://api.openai.com/v1")]
    base_url: String,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Write every request and response under this directory.
    #[arg(long)]
    audit_dir: Option<PathBuf>,
    /// Shared virtual environment that dependencies are installed into.
    #[arg(long = "env", default_value = ".prefixer-env")]
    env_dir: PathBuf,
    /// Run with the base interpreter and install nothing.
    #[arg(long)]
    no_install: bool,
    /// Interpreter used to create the environment, or to run programs with
    /// `--no-install`.
    #[arg(long, default_value = "python3")]
    python: PathBuf,
    /// Runtime script that executes composed programs.
    #[arg(long, env = "PREFIXER_SHIM")]
    shim: Option<PathBuf>,
    /// Parallel snippet workers (0: one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds before a program run is killed.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    #[arg(long, default_value_t = 10)]
    postprocess_attempts: usize,
    #[arg(long, default_value = "prefixer-out")]
    out: PathBuf,
}

fn read_snippet(file: &Path) -> Result<Snippet> {
    let source = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let id = file.file_stem().and_then(|s| s.to_str()).unwrap_or("snippet");
    Ok(Snippet::new(id, source).with_context(|| format!("{} is not a usable snippet", file.display()))?)
}

fn analyze(file: &Path) -> Result<()> {
    let snippet = read_snippet(file)?;
    let refs = get_undefined_refs(&snippet)?;
    println!("{}", undefined_blocks(&refs));
    for note in &refs.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

fn show_instrumented(file: &Path) -> Result<()> {
    let snippet = read_snippet(file)?;
    let inst = instrument(&snippet)?;
    print!("{}", inst.source);
    println!();
    println!("# probe -> line");
    for (probe, line) in &inst.source_map {
        println!("# {probe} -> {line}");
    }
    Ok(())
}

fn show_prompt(file: &Path) -> Result<()> {
    let snippet = read_snippet(file)?;
    let refs = get_undefined_refs(&snippet)?;
    print!("{}", gen_prompt1(&snippet, &refs).transcript());
    Ok(())
}

fn demo() -> Result<()> {
    let snippet = Snippet::new("running-example", fixtures::RUNNING_EXAMPLE)?;
    let harness = Harness::new(
        fixtures::running_example_backend(),
        RunConfig {
            n: 2,
            install_deps: false,
            ..RunConfig::default()
        },
    );
    let outcome = search::run(&snippet, &fixtures::running_example_script(), &harness)?;
    print!("{}", snippet.source());
    println!();
    for trace in &outcome.traces {
        println!(
            "step {}: {} prompts, {} prefixes, coverage {:.2}",
            trace.step.level(),
            trace.prompts_sent,
            trace.prefixes_generated,
            trace.coverage_after
        );
    }
    let ids: Vec<String> = outcome.result.prefixes.iter().map(|p| p.to_string()).collect();
    println!("P = [{}]", ids.join(", "));
    if let Some(best) = &outcome.result.best {
        println!("p_best = {best}");
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let config = RunConfig {
        n: args.n,
        k: args.k,
        prefix_timeout: Duration::try_from_secs_f64(args.timeout).context("--timeout")?,
        postprocess_attempts: args.postprocess_attempts,
        generator: match args.generator {
            GeneratorArg::Heuristic => GeneratorKind::Heuristic,
            GeneratorArg::Llm => GeneratorKind::Llm,
        },
        env_dir: args.env_dir.clone(),
        install_deps: !args.no_install,
        seed: args.seed,
    };
    config.validate()?;
    let Some(shim) = args.shim else {
        bail!("no runtime script given: pass --shim or set PREFIXER_SHIM");
    };

    let env = if config.install_deps {
        PythonEnv::open_or_create(&config.env_dir, &args.python)?
    } else {
        PythonEnv::system(&args.python)
    };
    let backend = ProcessBackend::new(&env, shim)?;
    let mut harness = Harness::new(Arc::new(backend), config.clone());
    if config.install_deps {
        let interpreter = env.interpreter.clone();
        harness = harness.with_installer(Arc::new(DependencyInstaller::new(
            Box::new(PythonEnvProbe {
                interpreter: interpreter.clone(),
            }),
            Box::new(PipInstaller { interpreter }),
        )));
    }

    let generator: Box<dyn Generator> = match args.generator {
        GeneratorArg::Heuristic => Box::new(HeuristicGenerator::new(args.seed)),
        GeneratorArg::Llm => {
            let mut llm = LlmConfig::new(args.model);
            llm.base_url = args.base_url;
            llm.temperature = args.temperature;
            llm.audit_dir = args.audit_dir;
            let transport = HttpTransport::from_env(&llm)?;
            Box::new(LlmGenerator::new(llm, transport))
        }
    };

    let opts = CorpusOptions {
        input: args.corpus,
        out: args.out.clone(),
        workers: args.workers,
    };
    let summary = run_corpus(&opts, generator.as_ref(), &harness)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    eprintln!("reports written to {}", args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Analyze { file } => analyze(&file),
        Command::Instrument { file } => show_instrumented(&file),
        Command::Prompt { file } => show_prompt(&file),
        Command::Demo => demo(),
    }
}
