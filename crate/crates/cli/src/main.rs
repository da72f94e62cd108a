// Copyright 2026 Geoscope Contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! `geoscope`: batch pipeline from raw search records to regression tables.
//!
//! Exit codes: 0 success, 1 an estimator did not converge, 2 input or
//! configuration error.

mod backends;
mod config;
mod http;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use stages::{Ctx, Status};

#[derive(Parser)]
#[command(name = "geoscope", version, about = "Citation analysis pipeline for AI search overviews")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the corpus and write the run manifest.
    Ingest(Common),
    /// Chunk documents, select representative chunks and score them.
    BuildDatasets(Common),
    /// Polish every chunk with the general and the objective prompt.
    Polish(Common),
    /// Run the RAG citation experiment.
    RagRun(Common),
    /// Fit the regressions and run the hypothesis tests.
    Analyze(Common),
    /// Print a summary of a finished run.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set chunking.window=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    documents: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    step: Option<usize>,
    /// Disable data parallelism.
    #[arg(long)]
    sequential: bool,
}

fn toml_path(p: &PathBuf) -> Result<String> {
    let abs = std::path::absolute(p)?;
    // TOML basic string
    Ok(toml::Value::String(abs.display().to_string()).to_string())
}

impl Common {
    fn overrides(&self) -> Result<Vec<String>> {
        let mut o = self.set.clone();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(p) = &self.output_dir {
            o.push(format!("output_dir={}", toml_path(p)?));
        }
        if let Some(p) = &self.records {
            o.push(format!("corpus.records={}", toml_path(p)?));
        }
        if let Some(p) = &self.documents {
            o.push(format!("corpus.documents={}", toml_path(p)?));
        }
        if let Some(w) = self.window {
            o.push(format!("chunking.window={w}"));
        }
        if let Some(s) = self.step {
            o.push(format!("chunking.step={s}"));
        }
        if self.sequential {
            o.push("parallel=false".into());
        }
        Ok(o)
    }

    fn context(&self) -> Result<Ctx> {
        let cfg = RunConfig::load(&self.config, &self.overrides()?)?;
        Ok(Ctx::new(cfg))
    }
}

fn run(cli: Cli) -> Result<Status> {
    let (common, stage): (&Common, fn(&Ctx) -> Result<Status>) = match &cli.command {
        Command::Ingest(c) => (c, stages::ingest),
        Command::BuildDatasets(c) => (c, stages::build_datasets_stage),
        Command::Polish(c) => (c, stages::polish),
        Command::RagRun(c) => (c, stages::rag_run),
        Command::Analyze(c) => (c, stages::analyze),
        Command::Report(c) => (c, stages::report),
    };
    let ctx = common.context()?;
    eprintln!("run directory: {}", ctx.dir.display());
    stage(&ctx)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NonConverged(n)) => {
            eprintln!("error: {n} estimate(s) did not converge; see analysis_errors.json and tables.txt");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
