//! `moonshine`: data pipeline, toy training, transcription and evaluation
//! harnesses behind one binary.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use moonshine_core::Error;
use serde_json::json;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "moonshine", version, about = "Speech recognition toolkit: data pipeline, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunConfig,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic tone-word dataset (WAVs and manifest.jsonl).
    Synth,
    /// Train a toy model on a manifest; writes a checkpoint and loss log.
    TrainToy,
    /// Greedy-decode WAV files with a checkpoint.
    Transcribe { files: Vec<PathBuf> },
    /// Filter captions and pseudo-labels and assemble training instances.
    Pipeline { dirs: Vec<PathBuf> },
    /// Run a named evaluation harness.
    Eval { harness: Option<String> },
}

impl Command {
    fn into_parts(self) -> (&'static str, Option<String>, Vec<PathBuf>) {
        match self {
            Command::Synth => ("synth", None, Vec::new()),
            Command::TrainToy => ("train-toy", None, Vec::new()),
            Command::Transcribe { files } => ("transcribe", None, files),
            Command::Pipeline { dirs } => ("pipeline", None, dirs),
            Command::Eval { harness } => ("eval", harness, Vec::new()),
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    let mut cfg = cli.run;
    if let Some(cmd) = cli.command {
        let (name, harness, inputs) = cmd.into_parts();
        cfg.command = Some(name.to_string());
        cfg.harness = harness;
        cfg.inputs = inputs;
    }
    if let Some(path) = cfg.config.take() {
        cfg = cfg.overlay(RunConfig::load(&path)?);
    }
    let command = cfg.command.clone().ok_or_else(|| Error::Argument("no subcommand given".into()))?;
    let out = cfg.out_dir();
    commands::ensure_dir(&out)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let written = pool.install(|| match command.as_str() {
        "synth" => commands::synth(&mut cfg, &out),
        "train-toy" => commands::train_toy(&mut cfg, &out),
        "transcribe" => commands::transcribe(&mut cfg, &out),
        "pipeline" => commands::pipeline(&mut cfg, &out),
        "eval" => commands::eval(&mut cfg, &out),
        other => Err(Error::UnknownName {
            kind: "subcommand",
            name: other.into(),
            known: "synth, train-toy, transcribe, pipeline, eval".into(),
        }
        .into()),
    })?;
    cfg.save(&out)?;
    Ok(json!({ "command": command, "out_dir": out, "written": written }))
}

fn error_record(e: &anyhow::Error) -> serde_json::Value {
    let kind = e.downcast_ref::<Error>().map_or("error", Error::kind);
    json!({ "error": { "kind": kind, "message": format!("{e:#}") } })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let record = json!({ "error": { "kind": "argument", "message": e.to_string().trim_end() } });
            eprintln!("{record}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(done) => {
            println!("{done}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}
