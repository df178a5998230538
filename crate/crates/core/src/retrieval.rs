//! Example-molecule database: a JSONL index of normalized molecules with
//! properties and fingerprints, and the filtered nearest-neighbour query.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::descriptors::{compute_properties_with, ParameterTables, PropertyId, PropertyVector};
use crate::fingerprint::{morgan_fingerprint, tanimoto, Fingerprint, FingerprintError, FingerprintParams};
use crate::molgraph::{graph_signature, parse_smiles, write_smiles, ParseOutcome};
use crate::objective::{evaluate, ObjectiveError, ObjectiveSpec};

pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("index line {line}: {detail}")]
    Format { line: usize, detail: String },
    #[error("no valid molecules in input")]
    NoValidMolecules,
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("index lacks property {0} required by the objective")]
    MissingProperty(PropertyId),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub version: u32,
    pub nbits: u32,
    pub radius: u32,
    pub properties: Vec<PropertyId>,
    pub asset_hashes: BTreeMap<String, String>,
    pub count: usize,
}

impl IndexHeader {
    pub fn fingerprint_params(&self) -> FingerprintParams {
        FingerprintParams { radius: self.radius, nbits: self.nbits }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeRecord {
    pub smiles: String,
    pub signature: String,
    pub properties: PropertyVector,
    pub fingerprint: Fingerprint,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    smiles: String,
    sig: String,
    props: PropertyVector,
    fp: String,
}

/// Parse failures and duplicates dropped while building.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildReport {
    /// (1-based input line, error message)
    pub skipped: Vec<(usize, String)>,
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    pub header: IndexHeader,
    pub records: Vec<MoleculeRecord>,
}

/// A retrieved record and its similarity to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retrieved<'a> {
    pub index: usize,
    pub similarity: f64,
    pub record: &'a MoleculeRecord,
}

fn make_record(
    tables: &ParameterTables,
    smiles: &str,
    params: FingerprintParams,
    ids: &[PropertyId],
) -> Result<MoleculeRecord, String> {
    let mol = match parse_smiles(smiles) {
        ParseOutcome::Valid(m) => m,
        ParseOutcome::Invalid(e) => return Err(e.to_string()),
    };
    Ok(MoleculeRecord {
        smiles: write_smiles(&mol),
        signature: graph_signature(&mol),
        properties: compute_properties_with(tables, &mol, ids).map_err(|e| e.to_string())?,
        fingerprint: morgan_fingerprint(&mol, params).map_err(|e| e.to_string())?,
    })
}

impl Database {
    /// Builds an index from SMILES lines (first whitespace-delimited token
    /// of each non-blank line). Output order follows input order; later
    /// duplicates by signature are dropped.
    pub fn build<S: AsRef<str> + Sync>(
        lines: &[S],
        params: FingerprintParams,
        ids: &[PropertyId],
        tables: &ParameterTables,
    ) -> Result<(Database, BuildReport), RetrievalError> {
        params.validate()?;
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16);
        let chunk = lines.len().div_ceil(workers).max(1);
        let results: Vec<Option<Result<MoleculeRecord, String>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = lines
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|line| {
                                let token = line.as_ref().split_whitespace().next()?;
                                Some(make_record(tables, token, params, ids))
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("index worker panicked")).collect()
        });
        let mut report = BuildReport::default();
        let mut seen = HashSet::new();
        let mut records = Vec::new();
        for (k, result) in results.into_iter().enumerate() {
            match result {
                None => {}
                Some(Err(e)) => {
                    log::warn!("line {}: skipped: {e}", k + 1);
                    report.skipped.push((k + 1, e));
                }
                Some(Ok(rec)) => {
                    if seen.insert(rec.signature.clone()) {
                        records.push(rec);
                    } else {
                        report.duplicates += 1;
                    }
                }
            }
        }
        if records.is_empty() {
            return Err(RetrievalError::NoValidMolecules);
        }
        let header = IndexHeader {
            version: INDEX_VERSION,
            nbits: params.nbits,
            radius: params.radius,
            properties: ids.to_vec(),
            asset_hashes: tables.hashes().clone(),
            count: records.len(),
        };
        Ok((Database { header, records }, report))
    }

    /// Reads a SMILES file and builds an index from it.
    pub fn build_from_file(
        path: &Path,
        params: FingerprintParams,
        ids: &[PropertyId],
        tables: &ParameterTables,
    ) -> Result<(Database, BuildReport), RetrievalError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let lines: Vec<&str> = text.lines().collect();
        Database::build(&lines, params, ids, tables)
    }

    pub fn params(&self) -> FingerprintParams {
        self.header.fingerprint_params()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            let line = RecordLine {
                smiles: r.smiles.clone(),
                sig: r.signature.clone(),
                props: r.properties.clone(),
                fp: r.fingerprint.to_base64(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let file = fs::File::create(path).map_err(io_err(path))?;
        self.write_to(BufWriter::new(file)).map_err(io_err(path))
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Database, RetrievalError> {
        let mut lines = input.lines().enumerate();
        let format = |line: usize, detail: String| RetrievalError::Format { line, detail };
        let (_, first) = lines.next().ok_or_else(|| format(1, "missing header".into()))?;
        let first = first.map_err(|e| format(1, e.to_string()))?;
        let header: IndexHeader = serde_json::from_str(&first).map_err(|e| format(1, e.to_string()))?;
        if header.version != INDEX_VERSION {
            return Err(format(1, format!("unsupported index version {}", header.version)));
        }
        let params = header.fingerprint_params();
        params.validate()?;
        let mut records = Vec::with_capacity(header.count);
        let mut seen = HashSet::new();
        for (k, line) in lines {
            let n = k + 1;
            let line = line.map_err(|e| format(n, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: RecordLine = serde_json::from_str(&line).map_err(|e| format(n, e.to_string()))?;
            if let Some(p) = header.properties.iter().find(|p| r.props.get(**p).is_none()) {
                return Err(format(n, format!("record lacks property {p}")));
            }
            if !seen.insert(r.sig.clone()) {
                return Err(format(n, format!("duplicate signature {}", r.sig)));
            }
            let fingerprint = Fingerprint::from_base64(params, &r.fp).map_err(|e| format(n, e.to_string()))?;
            records.push(MoleculeRecord { smiles: r.smiles, signature: r.sig, properties: r.props, fingerprint });
        }
        if records.len() != header.count {
            return Err(format(1, format!("header count {} but {} records", header.count, records.len())));
        }
        Ok(Database { header, records })
    }

    pub fn load(path: &Path) -> Result<Database, RetrievalError> {
        let file = fs::File::open(path).map_err(io_err(path))?;
        Database::read_from(BufReader::new(file))
    }

    /// Most similar record to `query` among those meeting `spec` relative to
    /// `props_m` and not in `exclude`. Ties go to the lowest index.
    pub fn retrieve(
        &self,
        spec: &ObjectiveSpec,
        props_m: &PropertyVector,
        query: &Fingerprint,
        exclude: &HashSet<String>,
    ) -> Result<Option<Retrieved<'_>>, RetrievalError> {
        if query.params() != self.params() {
            return Err(FingerprintError::Mismatch { left: self.params(), right: query.params() }.into());
        }
        if let Some(p) = spec.properties().into_iter().find(|p| !self.header.properties.contains(p)) {
            return Err(RetrievalError::MissingProperty(p));
        }
        let mut best: Option<Retrieved<'_>> = None;
        for (index, record) in self.records.iter().enumerate() {
            if exclude.contains(&record.signature) || !evaluate(spec, props_m, &record.properties)?.overall {
                continue;
            }
            let similarity = tanimoto(&record.fingerprint, query)?;
            if best.is_none_or(|b| similarity > b.similarity) {
                best = Some(Retrieved { index, similarity, record });
            }
        }
        Ok(best)
    }

    /// Record count and per-property (min, mean, max).
    pub fn stats(&self) -> DatabaseStats {
        let mut properties = BTreeMap::new();
        for &p in &self.header.properties {
            let values: Vec<f64> = self.records.iter().filter_map(|r| r.properties.get(p)).collect();
            if values.is_empty() {
                continue;
            }
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            properties.insert(p.name().to_string(), PropertyStats { min, mean, max });
        }
        DatabaseStats {
            count: self.records.len(),
            nbits: self.header.nbits,
            radius: self.header.radius,
            properties,
            asset_hashes: self.header.asset_hashes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatabaseStats {
    pub count: usize,
    pub nbits: u32,
    pub radius: u32,
    pub properties: BTreeMap<String, PropertyStats>,
    pub asset_hashes: BTreeMap<String, String>,
}

/// Draws `n` distinct non-blank lines with a seeded generator, keeping
/// their input order.
pub fn sample_lines<'a>(lines: &[&'a str], n: usize, seed: u64) -> Vec<&'a str> {
    let candidates: Vec<usize> = (0..lines.len()).filter(|&i| !lines[i].trim().is_empty()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = candidates.choose_multiple(&mut rng, n.min(candidates.len())).copied().collect();
    picked.sort_unstable();
    picked.into_iter().map(|i| lines[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::PropertyId;

    fn db(lines: &[&str]) -> (Database, BuildReport) {
        Database::build(lines, FingerprintParams::default(), &PropertyId::ALL, ParameterTables::builtin()).unwrap()
    }

    #[test]
    fn build_skips_invalid_and_duplicates() {
        let (d, report) = db(&["CCO", "C1CC", "OCC", "", "c1ccccc1"]);
        assert_eq!(d.len(), 2);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].0, 2);
        assert_eq!(report.duplicates, 1);
        assert_eq!(d.header.count, 2);
        assert!(matches!(
            Database::build(&["C1CC"], FingerprintParams::default(), &PropertyId::ALL, ParameterTables::builtin()),
            Err(RetrievalError::NoValidMolecules)
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let (d, _) = db(&["CCO", "c1ccccc1O", "CC(=O)N"]);
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let back = Database::read_from(&buf[..]).unwrap();
        assert_eq!(back, d);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_index_is_rejected() {
        let (d, _) = db(&["CCO", "CCN"]);
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(Database::read_from(truncated.as_bytes()).is_err());
        assert!(Database::read_from("not json\n".as_bytes()).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let lines = ["a", "b", "", "c", "d", "e"];
        let a = sample_lines(&lines, 3, 7);
        assert_eq!(a, sample_lines(&lines, 3, 7));
        assert_eq!(a.len(), 3);
        assert!(!a.contains(&""));
        assert_eq!(sample_lines(&lines, 99, 1).len(), 5);
    }
}
