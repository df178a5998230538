//! Batch runs of the refinement loop over molecules and objectives, with a
//! resumable JSONL trace stream and summary reports.

pub mod report;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{run_loop, AgentError, LoopConfig, LoopContext, LoopMode, RefinementTrace};
use crate::descriptors::ParameterTables;
use crate::molgraph::parse_smiles;
use crate::objective::{ObjectiveError, ObjectiveSpec};
use crate::proposer::{ProposerConfig, ProposerError};
use crate::retrieval::{sample_lines, Database, RetrievalError};

pub use report::{aggregate, write_reports, SummaryRow, UNDEFINED};

pub const TRACES_FILE: &str = "traces.jsonl";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const PLOT_CSV: &str = "plotdata.csv";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error("molecule on line {line} is invalid: {detail}")]
    InvalidMolecule { line: usize, detail: String },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{path} line {line}: {detail}")]
    Trace { path: PathBuf, line: usize, detail: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

fn default_seed() -> u64 {
    0
}

/// Benchmark configuration file. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// One SMILES per line (first token); blank lines and `#` comments are
    /// ignored.
    pub molecules_file: PathBuf,
    /// Draw this many molecules with `seed` instead of using all of them.
    #[serde(default)]
    pub sample: Option<usize>,
    /// Preset names or compact objectives.
    pub objectives: Vec<String>,
    /// Named flag combination applied over `loop`.
    #[serde(default)]
    pub mode: Option<LoopMode>,
    #[serde(default, rename = "loop")]
    pub loop_config: LoopConfig,
    pub proposer: ProposerConfig,
    #[serde(default)]
    pub database: Option<PathBuf>,
    /// Worker threads; defaults to the processor count.
    #[serde(default)]
    pub parallelism: Option<usize>,
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl BenchConfig {
    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<BenchConfig, BenchError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config: BenchConfig =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.molecules_file);
        fix(&mut self.output_dir);
        if let Some(db) = &mut self.database {
            fix(db);
        }
        if let ProposerConfig::Cached { dir, .. } = &mut self.proposer {
            fix(dir);
        }
        if let ProposerConfig::Scripted { scenario: crate::proposer::ScriptedSource::File { path } } = &mut self.proposer {
            fix(path);
        }
    }

    pub fn effective_loop(&self) -> LoopConfig {
        match self.mode {
            Some(m) => self.loop_config.clone().with_mode(m),
            None => self.loop_config.clone(),
        }
    }

    fn validate(&self) -> Result<Vec<ObjectiveSpec>, BenchError> {
        if self.objectives.is_empty() {
            return Err(BenchError::Config("objectives must not be empty".into()));
        }
        if self.parallelism == Some(0) {
            return Err(BenchError::Config("parallelism must be at least 1".into()));
        }
        self.effective_loop().validate()?;
        let specs: Vec<ObjectiveSpec> =
            self.objectives.iter().map(|o| ObjectiveSpec::resolve(o)).collect::<Result<_, _>>()?;
        let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(BenchError::Config("objectives must be distinct".into()));
        }
        Ok(specs)
    }
}

/// One line of `traces.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTrace {
    /// Position in the run order (objective-major).
    pub pair: usize,
    pub objective: String,
    pub molecule: usize,
    pub mode: String,
    pub trace: RefinementTrace,
}

impl BenchTrace {
    /// Valid and hit as counted by the metrics; aborted traces count as
    /// invalid.
    pub fn counted_valid(&self) -> bool {
        self.trace.aborted.is_none() && self.trace.outcome.valid
    }

    pub fn counted_hit(&self) -> bool {
        self.counted_valid() && self.trace.outcome.hit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunInfo {
    pub config: BenchConfig,
    pub proposer: String,
    pub molecules: usize,
    pub asset_hashes: BTreeMap<String, String>,
    pub database_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub rows: Vec<SummaryRow>,
    pub traces_path: PathBuf,
    pub resumed: usize,
    pub executed: usize,
}

/// Molecules from a SMILES file: first token of each non-blank,
/// non-comment line, as (line number, SMILES).
pub fn read_molecules(path: &Path) -> Result<Vec<(usize, String)>, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let t = l.trim();
            (!t.is_empty() && !t.starts_with('#')).then(|| (i + 1, t.split_whitespace().next().unwrap_or("").to_string()))
        })
        .collect())
}

fn sha256_file(path: &Path) -> Result<String, BenchError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Reads a trace stream, dropping a torn final line. Returns the traces and
/// the byte length of the intact prefix.
pub fn read_traces(path: &Path) -> Result<(Vec<BenchTrace>, u64), BenchError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut reader = BufReader::new(file);
    let mut traces = Vec::new();
    let mut good = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        if !line.ends_with('\n') {
            log::warn!("{}: dropping incomplete final record", path.display());
            break;
        }
        match serde_json::from_str::<BenchTrace>(&line) {
            Ok(t) => {
                traces.push(t);
                good += n as u64;
            }
            Err(e) => {
                return Err(BenchError::Trace { path: path.to_path_buf(), line: traces.len() + 1, detail: e.to_string() })
            }
        }
    }
    Ok((traces, good))
}

/// Runs every (objective, molecule) pair not already present in the output
/// stream, then rewrites the reports from the full stream.
pub fn run_benchmark(config: &BenchConfig, tables: &ParameterTables) -> Result<BenchResult, BenchError> {
    let specs = config.validate()?;
    let loop_config = config.effective_loop();
    let mut molecules = read_molecules(&config.molecules_file)?;
    if let Some(n) = config.sample {
        let lines: Vec<String> = molecules.iter().map(|(_, s)| s.clone()).collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let picked = sample_lines(&refs, n, config.seed);
        let mut used = vec![false; molecules.len()];
        molecules = picked
            .into_iter()
            .map(|s| {
                let k = (0..lines.len()).find(|&k| !used[k] && lines[k] == s).expect("sampled line exists");
                used[k] = true;
                molecules[k].clone()
            })
            .collect();
    }
    if molecules.is_empty() {
        return Err(BenchError::Config("no molecules to run".into()));
    }
    for (line, smiles) in &molecules {
        if let Some(e) = parse_smiles(smiles).error() {
            return Err(BenchError::InvalidMolecule { line: *line, detail: e.to_string() });
        }
    }
    let database = config.database.as_deref().map(Database::load).transpose()?;
    let ctx = LoopContext::new(tables, database.as_ref());
    let factory = config.proposer.factory(Path::new("."))?;
    let mode_name = config.mode.map_or("custom".to_string(), |m| m.name().to_string());

    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let traces_path = config.output_dir.join(TRACES_FILE);
    let (done, intact) = read_traces(&traces_path)?;
    let pairs: Vec<(usize, usize)> =
        (0..specs.len()).flat_map(|o| (0..molecules.len()).map(move |m| (o, m))).collect();
    for (k, t) in done.iter().enumerate() {
        let (o, m) = pairs.get(k).copied().ok_or_else(|| BenchError::Config("existing traces exceed the run".into()))?;
        if t.pair != k || t.objective != specs[o].name || t.molecule != m {
            return Err(BenchError::Config(format!(
                "{} does not match this configuration (record {})",
                traces_path.display(),
                k + 1
            )));
        }
    }
    let resumed = done.len();
    let mut out = OpenOptions::new().create(true).append(true).open(&traces_path).map_err(io_err(&traces_path))?;
    out.set_len(intact).map_err(io_err(&traces_path))?;

    let workers = config
        .parallelism
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let next = AtomicUsize::new(resumed);
    let (tx, rx) = mpsc::channel::<Result<BenchTrace, BenchError>>();
    let written = std::thread::scope(|scope| -> Result<usize, BenchError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pairs, specs, molecules, factory, ctx, loop_config, mode_name) =
                (&next, &pairs, &specs, &molecules, &factory, &ctx, &loop_config, &mode_name);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(o, m)) = pairs.get(k) else { break };
                let proposer = factory.create();
                let result = run_loop(loop_config, &molecules[m].1, &specs[o], proposer.as_ref(), ctx)
                    .map(|trace| BenchTrace {
                        pair: k,
                        objective: specs[o].name.clone(),
                        molecule: m,
                        mode: mode_name.clone(),
                        trace,
                    })
                    .map_err(BenchError::from);
                if tx.send(result).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut expected = resumed;
        let mut written = 0;
        for result in rx {
            let t = result?;
            pending.insert(t.pair, t);
            let mut batch = String::new();
            while let Some(t) = pending.remove(&expected) {
                batch.push_str(&serde_json::to_string(&t).expect("trace serializes"));
                batch.push('\n');
                expected += 1;
                written += 1;
            }
            if !batch.is_empty() {
                out.write_all(batch.as_bytes()).map_err(io_err(&traces_path))?;
                out.sync_data().map_err(io_err(&traces_path))?;
            }
        }
        Ok(written)
    })?;

    let (all, _) = read_traces(&traces_path)?;
    let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    let rows = aggregate(&all, &names);
    let info = RunInfo {
        config: config.clone(),
        proposer: config.proposer.describe(),
        molecules: molecules.len(),
        asset_hashes: tables.hashes().clone(),
        database_sha256: config.database.as_deref().map(sha256_file).transpose()?,
    };
    let run_path = config.output_dir.join(RUN_FILE);
    fs::write(&run_path, serde_json::to_string_pretty(&info).expect("run info serializes") + "\n")
        .map_err(io_err(&run_path))?;
    write_reports(&config.output_dir, &rows, &mode_name)?;
    Ok(BenchResult { rows, traces_path, resumed, executed: written })
}

/// Re-aggregates an output directory's trace stream and rewrites its
/// reports.
pub fn report_dir(dir: &Path) -> Result<Vec<SummaryRow>, BenchError> {
    let (traces, _) = read_traces(&dir.join(TRACES_FILE))?;
    let mut names: Vec<String> = Vec::new();
    for t in &traces {
        if !names.contains(&t.objective) {
            names.push(t.objective.clone());
        }
    }
    let mode = traces.first().map_or("custom".to_string(), |t| t.mode.clone());
    let rows = aggregate(&traces, &names);
    write_reports(dir, &rows, &mode)?;
    Ok(rows)
}
