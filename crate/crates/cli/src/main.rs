use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use molrefine_core::agent::{run_loop, LoopConfig, LoopContext, LoopMode};
use molrefine_core::benchmark::{self, BenchConfig};
use molrefine_core::descriptors::{self, parse_property_list, sub_descriptors_with, ParameterTables, PropertyId};
use molrefine_core::fingerprint::{morgan_fingerprint, tanimoto, FingerprintParams};
use molrefine_core::objective::ObjectiveSpec;
use molrefine_core::proposer::{
    CachedProposer, Proposer, ProposerConfig, RemoteChat, RemoteChatConfig, ScriptedProposer, ScriptedScenario,
};
use molrefine_core::retrieval::{sample_lines, Database};
use molrefine_core::{graph_signature, parse_smiles, write_smiles, MolGraph, ParseOutcome};

/// Marks an error caused by the invocation rather than the run.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(name = "molrefine", version, about = "Molecule refinement with a language-model proposer")]
struct Cli {
    /// Directory holding crippen.txt, tpsa.txt, qed.txt and alerts.txt
    /// (defaults to the built-in tables).
    #[arg(long, global = true)]
    assets: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Copy)]
struct FpArgs {
    #[arg(long, default_value_t = 2)]
    radius: u32,
    #[arg(long, default_value_t = 2048)]
    nbits: u32,
}

impl FpArgs {
    fn params(self) -> Result<FingerprintParams> {
        FingerprintParams::new(self.radius, self.nbits).map_err(|e| usage(e.to_string()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse a SMILES string and print the outcome as JSON.
    Parse { smiles: String },
    /// Compute properties of a molecule.
    Props {
        smiles: String,
        #[arg(long, default_value = "LogP,TPSA,QED")]
        properties: String,
        /// Include MW, HBA, HBD, ROTB, AROM and ALERTS.
        #[arg(long)]
        sub: bool,
    },
    /// Tanimoto similarity of two molecules.
    Sim {
        a: String,
        b: String,
        #[command(flatten)]
        fp: FpArgs,
    },
    /// Build, inspect, query or sample example databases.
    Db {
        #[command(subcommand)]
        command: DbCommand,
    },
    /// Run the refinement loop for one molecule and print the trace.
    Optimize {
        smiles: String,
        /// Preset name (e.g. single/strict/+LogP) or compact form (+LogP:0.5,-TPSA:10).
        #[arg(long)]
        objective: String,
        /// agentdrug enables every feedback stage; the others drop the
        /// parse-error loop, the property feedback or the retrieved example.
        #[arg(long, default_value = "agentdrug", value_parser = ["agentdrug", "no-inner", "generic", "no-retrieval"])]
        mode: String,
        /// scripted:<file.json>, remote:<base url> or config:<proposer.json>.
        #[arg(long)]
        proposer: String,
        /// Model name for remote proposers.
        #[arg(long, default_value = "")]
        model: String,
        /// Variable holding the API key for remote proposers ("none" sends no key).
        #[arg(long, default_value = "OPENAI_API_KEY")]
        api_key_env: String,
        /// Cache responses in this directory.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Example database index.
        #[arg(long)]
        db: Option<PathBuf>,
        /// Refinement budget after the initial proposal.
        #[arg(long, default_value_t = 3)]
        iterations: u32,
    },
    /// Run a benchmark described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-aggregate a benchmark output directory and print its summary.
    Report { dir: PathBuf },
}

#[derive(Subcommand)]
enum DbCommand {
    /// Index a SMILES file.
    Build {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value = "LogP,TPSA,QED")]
        properties: String,
        #[command(flatten)]
        fp: FpArgs,
    },
    /// Summarize an index.
    Stats { index: PathBuf },
    /// Retrieve the closest example meeting an objective.
    Query {
        index: PathBuf,
        /// Preset name or compact form.
        #[arg(long)]
        objective: String,
        /// The original molecule (objective reference, excluded).
        #[arg(long)]
        given: String,
        /// The current modified molecule (similarity query, excluded).
        #[arg(long)]
        modified: String,
    },
    /// Draw a seeded sample of lines from a SMILES file.
    Sample {
        input: PathBuf,
        #[arg(short, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn molecule(smiles: &str) -> Result<MolGraph> {
    MolGraph::from_smiles(smiles).map_err(|e| usage(format!("invalid molecule {smiles:?}: {e}")))
}

fn objective(text: &str) -> Result<ObjectiveSpec> {
    ObjectiveSpec::resolve(text).map_err(|e| usage(e.to_string()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn parse_command(smiles: &str) -> Result<()> {
    let value = match parse_smiles(smiles) {
        ParseOutcome::Valid(m) => json!({
            "input": smiles,
            "valid": true,
            "smiles": write_smiles(&m),
            "signature": graph_signature(&m),
            "atoms": m.atom_count(),
            "bonds": m.bond_count(),
            "rings": m.rings().len(),
        }),
        ParseOutcome::Invalid(e) => json!({
            "input": smiles,
            "valid": false,
            "category": e.category,
            "detail": e.detail,
            "position": e.position,
            "message": e.to_string(),
        }),
    };
    print_json(&value)
}

fn proposer_from_args(
    spec: &str,
    model: &str,
    api_key_env: &str,
    cache: Option<&Path>,
) -> Result<Arc<dyn Proposer>> {
    let (kind, arg) = spec.split_once(':').ok_or_else(|| usage("--proposer must look like kind:value"))?;
    let base: Arc<dyn Proposer> = match kind {
        "scripted" => {
            let scenario = ScriptedScenario::from_file(Path::new(arg)).map_err(|e| usage(e.to_string()))?;
            Arc::new(ScriptedProposer::try_new(scenario).map_err(|e| usage(e.to_string()))?)
        }
        "remote" => {
            if model.is_empty() {
                bail!(usage("--model is required for remote proposers"));
            }
            let mut config = RemoteChatConfig::new(arg, model);
            config.api_key_env = (api_key_env != "none").then(|| api_key_env.to_string());
            Arc::new(RemoteChat::new(config).map_err(|e| usage(e.to_string()))?)
        }
        "config" => {
            let text = fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?;
            let config: ProposerConfig = serde_json::from_str(&text).map_err(|e| usage(format!("{arg}: {e}")))?;
            let base = Path::new(arg).parent().unwrap_or(Path::new("."));
            config.factory(base).map_err(|e| usage(e.to_string()))?.create()
        }
        other => bail!(usage(format!("unknown proposer kind {other:?}"))),
    };
    Ok(match cache {
        Some(dir) => Arc::new(CachedProposer::new(base, dir.to_path_buf())?),
        None => base,
    })
}

fn db_command(command: DbCommand, tables: &ParameterTables) -> Result<()> {
    match command {
        DbCommand::Build { input, out, properties, fp } => {
            let ids = parse_property_list(&properties).map_err(|e| usage(e.to_string()))?;
            let (db, report) = Database::build_from_file(&input, fp.params()?, &ids, tables)?;
            db.save(&out)?;
            eprintln!(
                "indexed {} molecules ({} skipped, {} duplicates) into {}",
                db.len(),
                report.skipped.len(),
                report.duplicates,
                out.display()
            );
            Ok(())
        }
        DbCommand::Stats { index } => print_json(&Database::load(&index)?.stats()),
        DbCommand::Query { index, objective: obj, given, modified } => {
            let db = Database::load(&index)?;
            let spec = objective(&obj)?;
            let (m, mh) = (molecule(&given)?, molecule(&modified)?);
            let props = descriptors::compute_properties_with(tables, &m, &spec.properties())?;
            let fp = morgan_fingerprint(&mh, db.params())?;
            let exclude: HashSet<String> = [graph_signature(&m), graph_signature(&mh)].into_iter().collect();
            let hit = db.retrieve(&spec, &props, &fp, &exclude)?;
            print_json(&hit.map(|r| {
                json!({
                    "index": r.index,
                    "smiles": r.record.smiles,
                    "similarity": r.similarity,
                    "properties": r.record.properties,
                })
            }))
        }
        DbCommand::Sample { input, n, seed, out } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let lines: Vec<&str> = text.lines().collect();
            let mut body = sample_lines(&lines, n, seed).join("\n");
            body.push('\n');
            match out {
                Some(path) => fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().lock().write_all(body.as_bytes())?,
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let owned;
    let tables = match &cli.assets {
        Some(dir) => {
            owned = ParameterTables::from_dir(dir)?;
            &owned
        }
        None => ParameterTables::builtin(),
    };
    match cli.command {
        Command::Parse { smiles } => parse_command(&smiles),
        Command::Props { smiles, properties, sub } => {
            let ids: Vec<PropertyId> = parse_property_list(&properties).map_err(|e| usage(e.to_string()))?;
            let m = molecule(&smiles)?;
            let props = descriptors::compute_properties_with(tables, &m, &ids)?;
            if sub {
                print_json(&json!({ "properties": props, "sub_descriptors": sub_descriptors_with(tables, &m) }))
            } else {
                print_json(&props)
            }
        }
        Command::Sim { a, b, fp } => {
            let params = fp.params()?;
            let (fa, fb) = (morgan_fingerprint(&molecule(&a)?, params)?, morgan_fingerprint(&molecule(&b)?, params)?);
            println!("{}", tanimoto(&fa, &fb)?);
            Ok(())
        }
        Command::Db { command } => db_command(command, tables),
        Command::Optimize { smiles, objective: obj, mode, proposer, model, api_key_env, cache, db, iterations } => {
            let spec = objective(&obj)?;
            molecule(&smiles)?;
            let mode: LoopMode = mode.parse().map_err(|e: molrefine_core::agent::AgentError| usage(e.to_string()))?;
            let config = LoopConfig { max_iterations: iterations, ..LoopConfig::default() }.with_mode(mode);
            config.validate().map_err(|e| usage(e.to_string()))?;
            let proposer = proposer_from_args(&proposer, &model, &api_key_env, cache.as_deref())?;
            let database = db.as_deref().map(Database::load).transpose()?;
            let ctx = LoopContext::new(tables, database.as_ref());
            let trace = run_loop(&config, &smiles, &spec, proposer.as_ref(), &ctx)?;
            print_json(&trace)?;
            match &trace.aborted {
                Some(e) => bail!("loop aborted: {e}"),
                None => Ok(()),
            }
        }
        Command::Bench { config } => {
            let config = BenchConfig::load(&config).map_err(|e| usage(e.to_string()))?;
            let result = benchmark::run_benchmark(&config, tables)?;
            eprintln!(
                "{} traces resumed, {} run; outputs in {}",
                result.resumed,
                result.executed,
                config.output_dir.display()
            );
            print!("{}", benchmark::report::summary_text(&result.rows));
            Ok(())
        }
        Command::Report { dir } => {
            let rows = benchmark::report_dir(&dir)?;
            print!("{}", benchmark::report::summary_text(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
