//! Command-line front end: `train`, `parse`, `eval` and `check`.

mod archive;
mod check;
mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{read_conll, split_dev, write_conll_to};
use crate::decoder::DecodeMode;
use crate::error::{Error, Result};
use crate::eval::score;
use crate::trainer::{build_model, train};

pub use archive::{ModelArchive, FORMAT_VERSION, MAGIC};
pub use check::{random_attention, random_simplex, run_checks, CheckResult};
pub use config::{Paths, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "attdep", version, about = "Bi-directional attention dependency parser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write an archive plus a training log.
    Train(Opts),
    /// Parse CoNLL-X input with a trained model.
    Parse(Opts),
    /// Score predicted CoNLL-X against gold.
    Eval(Opts),
    /// Run the numeric self-checks.
    Check(Opts),
}

#[derive(Args, Debug)]
struct Opts {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.hidden_size=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Input to parse, or gold file for `eval`.
    #[arg(long, alias = "gold", alias = "input")]
    test: Option<PathBuf>,
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[arg(long)]
    model_in: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Parser output, or predicted file for `eval`.
    #[arg(long, alias = "predicted")]
    output: Option<PathBuf>,
    /// Training log; defaults to the model path plus `.log`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["greedy", "mst"])]
    decode: Option<String>,
    #[arg(long)]
    single_root: bool,
    #[arg(long, hide = true)]
    sabotage: bool,
}

impl Opts {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            if !path.is_file() {
                return Err(Error::Config(format!("config file not found: {}", path.display())));
            }
            c.apply_file(path)?;
        }
        for assignment in &self.set {
            c.apply_override(assignment)?;
        }
        let p = &mut c.paths;
        for (flag, slot) in [
            (&self.train, &mut p.train),
            (&self.dev, &mut p.dev),
            (&self.test, &mut p.test),
            (&self.pretrained, &mut p.pretrained),
            (&self.model_in, &mut p.model_in),
            (&self.model_out, &mut p.model_out),
            (&self.output, &mut p.output),
            (&self.log, &mut p.log),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
        if let Some(seed) = self.seed {
            c.train.seed = seed;
        }
        if let Some(mode) = &self.decode {
            c.decode = Some(mode.parse()?);
        }
        if self.single_root {
            c.single_root = Some(true);
        }
        Ok(c)
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(o) => o.resolve().and_then(|c| cmd_train(&c, out)),
        Command::Parse(o) => o.resolve().and_then(|c| cmd_parse(&c, out)),
        Command::Eval(o) => o.resolve().and_then(|c| cmd_eval(&c, out)),
        Command::Check(o) => o.resolve().and_then(|c| cmd_check(&c, o.sabotage, out)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            match e {
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("{} is required", key)))
}

fn input<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = required(path, key)?;
    if !p.is_file() {
        return Err(Error::Config(format!("{} not found: {}", key, p.display())));
    }
    Ok(p)
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

pub fn cmd_train(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    config.train.validate()?;
    let train_path = input(&config.paths.train, "paths.train")?;
    let model_out = required(&config.paths.model_out, "paths.model_out")?;
    let pretrained = match &config.paths.pretrained {
        Some(_) => Some(input(&config.paths.pretrained, "paths.pretrained")?),
        None => None,
    };
    let sentences = read_conll(train_path)?;
    let (train_set, dev_set) = match &config.paths.dev {
        Some(_) => (sentences, read_conll(input(&config.paths.dev, "paths.dev")?)?),
        None => {
            let split = split_dev(&sentences, config.train.seed)?;
            (split.train, split.dev)
        }
    };
    let model = build_model(&train_set, &config.train, pretrained)?;
    let outcome = train(model, &train_set, &dev_set, &config.train)?;

    let log_path = config
        .paths
        .log
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.log", model_out.display())));
    let mut log = BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?);
    for record in &outcome.log {
        writeln!(log, "{}", record).map_err(io_err(&log_path))?;
    }
    log.flush().map_err(io_err(&log_path))?;

    let archive = ModelArchive {
        model: outcome.model,
        config: config.clone(),
    };
    archive.save(model_out)?;
    writeln!(
        out,
        "trained {} epochs; model written to {}",
        outcome.log.len(),
        model_out.display()
    )
    .map_err(io_err(model_out))?;
    Ok(EXIT_OK)
}

pub fn cmd_parse(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let archive = ModelArchive::load(input(&config.paths.model_in, "paths.model_in")?)?;
    let source = input(&config.paths.test, "paths.test")?;
    let mode = config.decode.or(archive.config.decode).unwrap_or(DecodeMode::Mst);
    let single_root = config.single_root.or(archive.config.single_root).unwrap_or(false);
    let sentences = read_conll(source)?;
    let model = &archive.model;
    let mut heads = Vec::with_capacity(sentences.len());
    let mut rels = Vec::with_capacity(sentences.len());
    for s in &sentences {
        let tree = model.parse(s, mode, single_root)?;
        rels.push(
            tree.rels
                .iter()
                .map(|&r| model.vocab.relations().label(r).to_owned())
                .collect(),
        );
        heads.push(tree.heads);
    }
    match &config.paths.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
            write_conll_to(&mut w, &sentences, &heads, &rels)?;
            w.flush().map_err(io_err(path))?;
        }
        None => write_conll_to(&mut &mut *out, &sentences, &heads, &rels)?,
    }
    Ok(EXIT_OK)
}

pub fn cmd_eval(config: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let gold = read_conll(input(&config.paths.test, "paths.test")?)?;
    let predicted = read_conll(input(&config.paths.output, "paths.output")?)?;
    let report = score(&gold, &predicted)?;
    out.write_all(report.to_tsv(Some(2)).as_bytes())
        .map_err(|e| Error::io("<stdout>", e))?;
    Ok(EXIT_OK)
}

pub fn cmd_check(config: &RunConfig, sabotage: bool, out: &mut dyn Write) -> Result<i32> {
    let results = run_checks(config.train.seed, sabotage)?;
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{}\t{}\t{}", status, r.name, r.detail).map_err(|e| Error::io("<stdout>", e))?;
        if !r.passed {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        writeln!(out, "failed: {}", failed.join(", ")).map_err(|e| Error::io("<stdout>", e))?;
        Ok(EXIT_FAILURE)
    }
}
