//! Acceptance checks shared by the topic test files and the `acceptance`
//! runner. Each check returns a short detail line on success and the first
//! violation on failure.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use molrefine_core::agent::prompts::format_residual;
use molrefine_core::agent::{check_trace, run_loop, LoopConfig, LoopContext, LoopMode, RefinementTrace, StepKind};
use molrefine_core::benchmark::{self, BenchConfig};
use molrefine_core::descriptors::{compute_properties, crippen_logp, ertl_tpsa, qed, ParameterTables, PropertyId};
use molrefine_core::fingerprint::{morgan_fingerprint, tanimoto, Fingerprint, FingerprintParams};
use molrefine_core::objective::{evaluate, gradient, load_presets, term_satisfied, Direction, ObjectiveSpec, ObjectiveTerm};
use molrefine_core::proposer::{
    CachedProposer, ChatMessage, GenerationParams, Proposer, ProposerConfig, ProposerRequest, RemoteChat,
    RemoteChatConfig, ScriptRule, ScriptedProposer, ScriptedScenario, ScriptedSource,
};
use molrefine_core::retrieval::{Database, MoleculeRecord};
use molrefine_core::{graph_signature, parse_smiles, write_smiles, MolGraph, ParseErrorCategory, ParseOutcome};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub type Check = Result<String, String>;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn druglike() -> Vec<String> {
    fs::read_to_string(fixture("druglike_1k.smi"))
        .expect("druglike fixture")
        .lines()
        .filter_map(|l| l.split_whitespace().next().map(str::to_string))
        .collect()
}

fn mol(smiles: &str) -> MolGraph {
    MolGraph::from_smiles(smiles).unwrap_or_else(|e| panic!("{smiles}: {e}"))
}

// ---------------------------------------------------------------- parsing

pub fn parse_taxonomy() -> Check {
    let corpus: Value = serde_json::from_str(&fs::read_to_string(fixture("parse_errors.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let families = corpus["families"].as_array().ok_or("no families")?;
    let mut per_category: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0;
    for family in families {
        let label = family["category"].as_str().ok_or("family without category")?;
        let expected = ParseErrorCategory::from_name(label).ok_or_else(|| format!("unknown category {label}"))?;
        if family["definition"].as_str().is_none_or(str::is_empty) {
            return Err(format!("family {label} lacks its definition"));
        }
        for case in family["cases"].as_array().ok_or("no cases")? {
            let text = case.as_str().ok_or("non-string case")?;
            match parse_smiles(text) {
                ParseOutcome::Valid(_) => return Err(format!("{text:?} parsed valid, expected {label}")),
                ParseOutcome::Invalid(e) if e.category != expected => {
                    return Err(format!("{text:?} classified {}, expected {label} ({e})", e.category))
                }
                ParseOutcome::Invalid(e) => {
                    if !e.message().starts_with(&format!("{label}: ")) {
                        return Err(format!("message {:?} lacks the category prefix", e.message()));
                    }
                }
            }
            *per_category.entry(label.to_string()).or_default() += 1;
            total += 1;
        }
    }
    for c in ParseErrorCategory::ALL {
        let n = per_category.get(c.as_str()).copied().unwrap_or(0);
        if n < 20 {
            return Err(format!("category {c} has {n} cases, need at least 20"));
        }
    }
    if total < 120 {
        return Err(format!("corpus has {total} cases, need at least 120"));
    }
    Ok(format!("{total}/{total} classified across {} categories", per_category.len()))
}

const SMILES_ALPHABET: &[u8] = b"CNOSPFIBrcnosl()[]=#@+-123456789%.Hh/\\*: ";

fn mutate(rng: &mut ChaCha8Rng, base: &str) -> String {
    let mut bytes = base.as_bytes().to_vec();
    for _ in 0..rng.random_range(1..=3) {
        let op = rng.random_range(0..3);
        let at = if bytes.is_empty() { 0 } else { rng.random_range(0..bytes.len()) };
        let ch = SMILES_ALPHABET[rng.random_range(0..SMILES_ALPHABET.len())];
        match op {
            0 => bytes.insert(at, ch),
            1 if !bytes.is_empty() => {
                bytes.remove(at);
            }
            _ if !bytes.is_empty() => bytes[at] = ch,
            _ => bytes.push(ch),
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Inputs for the robustness sweep: a third random bytes, a third random
/// SMILES-alphabet strings, a third point mutations of drug-like SMILES.
pub fn fuzz_inputs(n: usize, seed: u64) -> Vec<String> {
    let base = druglike();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| match i % 3 {
            0 => {
                let len = rng.random_range(0..40);
                let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
                String::from_utf8_lossy(&bytes).into_owned()
            }
            1 => {
                let len = rng.random_range(0..30);
                (0..len).map(|_| SMILES_ALPHABET[rng.random_range(0..SMILES_ALPHABET.len())] as char).collect()
            }
            _ => {
                let b = &base[rng.random_range(0..base.len())];
                mutate(&mut rng, b)
            }
        })
        .collect()
}

pub fn parser_robustness(n: usize) -> Check {
    let inputs = fuzz_inputs(n, 7);
    let (mut valid, mut invalid) = (0usize, 0usize);
    for text in &inputs {
        let outcome = catch_unwind(AssertUnwindSafe(|| parse_smiles(text)))
            .map_err(|_| format!("parser panicked on {text:?}"))?;
        match outcome {
            ParseOutcome::Valid(m) => {
                let written = write_smiles(&m);
                let again = MolGraph::from_smiles(&written)
                    .map_err(|e| format!("{text:?} wrote {written:?}, which fails to parse: {e}"))?;
                if graph_signature(&again) != graph_signature(&m) {
                    return Err(format!("{text:?} wrote {written:?} with a different signature"));
                }
                valid += 1;
            }
            ParseOutcome::Invalid(e) => {
                if !ParseErrorCategory::ALL.contains(&e.category) || e.detail.is_empty() {
                    return Err(format!("{text:?} produced an unclassified error"));
                }
                invalid += 1;
            }
        }
    }
    let sample = druglike();
    let ok = sample.iter().filter(|s| parse_smiles(s).is_valid()).count();
    let rate = ok as f64 / sample.len() as f64;
    if sample.len() < 1000 || rate < 0.99 {
        return Err(format!("drug-like validity {ok}/{} below 99%", sample.len()));
    }
    Ok(format!("{n} fuzzed inputs ({valid} valid, {invalid} classified invalid), drug-like {ok}/{}", sample.len()))
}

// ------------------------------------------------------------ descriptors

pub struct OracleRow {
    pub smiles: String,
    pub logp: f64,
    pub tpsa: f64,
    pub qed: f64,
    pub alerts: u32,
}

pub fn oracle_rows() -> Vec<OracleRow> {
    let text = fs::read_to_string(fixture("descriptor_oracle.tsv")).expect("oracle fixture");
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().expect("header").split('\t').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).expect("oracle column");
    let (s, l, t, q, a) = (col("smiles"), col("logp"), col("tpsa"), col("qed"), col("alerts"));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            OracleRow {
                smiles: f[s].to_string(),
                logp: f[l].parse().expect("logp"),
                tpsa: f[t].parse().expect("tpsa"),
                qed: f[q].parse().expect("qed"),
                alerts: f[a].parse().expect("alerts"),
            }
        })
        .collect()
}

pub fn descriptor_parity() -> Check {
    let rows = oracle_rows();
    if rows.len() < 200 {
        return Err(format!("oracle fixture has {} rows, need 200", rows.len()));
    }
    let (mut logp_ok, mut tpsa_ok, mut qed_ok, mut qed_n) = (0, 0, 0, 0);
    let mut worst_qed: f64 = 0.0;
    for r in &rows {
        let Ok(m) = MolGraph::from_smiles(&r.smiles) else { continue };
        logp_ok += ((crippen_logp(&m) - r.logp).abs() <= 0.01) as usize;
        tpsa_ok += ((ertl_tpsa(&m) - r.tpsa).abs() <= 0.01) as usize;
        if r.alerts == 0 {
            qed_n += 1;
            let d = (qed(&m) - r.qed).abs();
            worst_qed = worst_qed.max(d);
            qed_ok += (d <= 0.05) as usize;
        }
    }
    let n = rows.len();
    let need = (0.99 * n as f64).ceil() as usize;
    if logp_ok < need || tpsa_ok < need {
        return Err(format!("LogP {logp_ok}/{n}, TPSA {tpsa_ok}/{n} within 0.01 (need {need})"));
    }
    if qed_ok < qed_n {
        return Err(format!("QED within 0.05 on {qed_ok}/{qed_n} alert-free molecules"));
    }
    let benzene = ertl_tpsa(&mol("c1ccccc1"));
    if benzene != 0.0 || benzene.is_sign_negative() {
        return Err(format!("benzene TPSA {benzene:?}, expected 0.0"));
    }
    let pyridine = ertl_tpsa(&mol("c1ccncc1"));
    if (pyridine - 12.89).abs() > 0.01 {
        return Err(format!("pyridine TPSA {pyridine}, expected 12.89"));
    }
    Ok(format!(
        "LogP {logp_ok}/{n}, TPSA {tpsa_ok}/{n}, QED {qed_ok}/{qed_n} alert-free (max dev {worst_qed:.2e}); benzene 0.0, pyridine {pyridine:.2}"
    ))
}

// ------------------------------------------------------------ fingerprint

pub fn fingerprint_properties() -> Check {
    let params = FingerprintParams::default();
    let smiles = druglike();
    let fps: Vec<Fingerprint> = smiles
        .iter()
        .filter_map(|s| MolGraph::from_smiles(s).ok())
        .map(|m| morgan_fingerprint(&m, params).expect("fingerprint"))
        .collect();
    for (i, f) in fps.iter().enumerate() {
        let s = tanimoto(f, f).map_err(|e| e.to_string())?;
        if s != 1.0 {
            return Err(format!("identity similarity {s} for molecule {i}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (a, b) = (&fps[rng.random_range(0..fps.len())], &fps[rng.random_range(0..fps.len())]);
        let (ab, ba) = (tanimoto(a, b).map_err(|e| e.to_string())?, tanimoto(b, a).map_err(|e| e.to_string())?);
        if ab != ba {
            return Err(format!("asymmetric similarity {ab} vs {ba}"));
        }
        if !(0.0..=1.0).contains(&ab) {
            return Err(format!("similarity {ab} out of bounds"));
        }
    }
    let mut checked = 0;
    for s in smiles.iter().take(50) {
        let m = mol(s);
        let reference = morgan_fingerprint(&m, params).expect("fingerprint");
        let signature = graph_signature(&m);
        let mut order: Vec<usize> = (0..m.atom_count()).collect();
        for _ in 0..100 {
            order.shuffle(&mut rng);
            let p = m.relabeled(&order);
            if morgan_fingerprint(&p, params).expect("fingerprint") != reference {
                return Err(format!("fingerprint of {s} changed under relabeling {order:?}"));
            }
            if graph_signature(&p) != signature {
                return Err(format!("signature of {s} changed under relabeling"));
            }
            checked += 1;
        }
    }
    Ok(format!("{} identities, 1000 pairs symmetric and bounded, {checked} relabelings invariant", fps.len()))
}

// -------------------------------------------------------------- retrieval

pub fn oracle_database(n: usize) -> Database {
    let lines: Vec<String> = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/screening_10k.smi"))
        .expect("screening set")
        .lines()
        .take(n + n / 5)
        .map(str::to_string)
        .collect();
    let (mut db, _) =
        Database::build(&lines, FingerprintParams::default(), &PropertyId::ALL, ParameterTables::builtin())
            .expect("index");
    db.records.truncate(n);
    db.header.count = db.records.len();
    db
}

/// Filter-then-argmax written directly from the definition: qualifying
/// records meet every term relative to `m`, are not excluded, and the
/// winner has the highest bit-set similarity, lowest index on ties.
/// Returns the winner and how many qualifying records share its similarity.
pub fn brute_force_retrieve(
    db: &Database,
    spec: &ObjectiveSpec,
    m: &molrefine_core::PropertyVector,
    query: &Fingerprint,
    exclude: &HashSet<String>,
) -> Option<((usize, f64), usize)> {
    let q: Vec<u32> = query.on_bits().collect();
    let mut best: Option<((usize, f64), usize)> = None;
    for (i, r) in db.records.iter().enumerate() {
        if exclude.contains(&r.signature) {
            continue;
        }
        let meets = spec.terms.iter().all(|t| {
            let delta = r.properties.get(t.property).unwrap() - m.get(t.property).unwrap();
            match t.direction {
                Direction::Increase => delta >= t.magnitude,
                Direction::Decrease => delta <= -t.magnitude,
            }
        });
        if !meets {
            continue;
        }
        let bits: Vec<u32> = r.fingerprint.on_bits().collect();
        let common = bits.iter().filter(|b| q.binary_search(b).is_ok()).count();
        let union = bits.len() + q.len() - common;
        let sim = if union == 0 { 0.0 } else { common as f64 / union as f64 };
        best = match best {
            Some((top, n)) if top.1 == sim => Some((top, n + 1)),
            Some((top, n)) if top.1 > sim => Some((top, n)),
            _ => Some(((i, sim), 1)),
        };
    }
    best
}

pub fn retrieval_oracle() -> Check {
    let db = oracle_database(1000);
    if db.len() != 1000 {
        return Err(format!("index has {} records", db.len()));
    }
    let presets = load_presets();
    let pool = druglike();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut found, mut ties) = (0, 0);
    for q in 0..100 {
        let spec = &presets[rng.random_range(0..presets.len())];
        // Every fourth query uses an indexed molecule so exclusion matters.
        let m_smiles = if q % 4 == 0 { db.records[rng.random_range(0..db.len())].smiles.clone() } else { pool[rng.random_range(0..pool.len())].clone() };
        let mhat_smiles = db.records[rng.random_range(0..db.len())].smiles.clone();
        let (m, mhat) = (mol(&m_smiles), mol(&mhat_smiles));
        let props = compute_properties(&m, &spec.properties()).map_err(|e| e.to_string())?;
        let query = morgan_fingerprint(&mhat, db.params()).map_err(|e| e.to_string())?;
        let exclude: HashSet<String> = [graph_signature(&m), graph_signature(&mhat)].into();
        let got = db.retrieve(spec, &props, &query, &exclude).map_err(|e| e.to_string())?.map(|r| (r.index, r.similarity));
        let want = brute_force_retrieve(&db, spec, &props, &query, &exclude);
        if got != want.map(|w| w.0) {
            return Err(format!("query {q} ({}, {m_smiles}, {mhat_smiles}): got {got:?}, oracle {want:?}", spec.name));
        }
        if let Some((_, tied)) = want {
            found += 1;
            ties += (tied > 1) as usize;
        }
    }
    tie_break()?;
    let given = mol("CCO");
    let props = compute_properties(&given, &[PropertyId::LogP]).map_err(|e| e.to_string())?;
    let impossible = ObjectiveSpec::parse_compact("+LogP:100").map_err(|e| e.to_string())?;
    let query = morgan_fingerprint(&given, db.params()).map_err(|e| e.to_string())?;
    if db.retrieve(&impossible, &props, &query, &HashSet::new()).map_err(|e| e.to_string())?.is_some() {
        return Err("a retrieval with no qualifying record returned a result".into());
    }
    Ok(format!("100 queries match the oracle ({found} non-empty, {ties} with tied maxima), tie rule and empty set hold"))
}

/// Records with identical fingerprints and properties under distinct
/// signatures: the lowest index wins unless excluded.
pub fn tie_break() -> Result<(), String> {
    let params = FingerprintParams::default();
    let tables = ParameterTables::builtin();
    let (template, _) = Database::build(&["CCCCO", "c1ccccc1O", "CCN"], params, &PropertyId::ALL, tables).map_err(|e| e.to_string())?;
    let twin = template.records[1].clone();
    let mut records: Vec<MoleculeRecord> = vec![template.records[0].clone()];
    for k in 0..3 {
        records.push(MoleculeRecord { signature: format!("twin-{k}"), ..twin.clone() });
    }
    records.push(template.records[2].clone());
    let mut header = template.header.clone();
    header.count = records.len();
    let db = Database { header, records };
    let spec = ObjectiveSpec::parse_compact("+LogP:0").map_err(|e| e.to_string())?;
    let m = compute_properties(&mol("O"), &[PropertyId::LogP]).map_err(|e| e.to_string())?;
    let query = morgan_fingerprint(&mol("c1ccccc1O"), params).map_err(|e| e.to_string())?;
    let mut exclude = HashSet::new();
    for expected in [1, 2, 3] {
        let got = db.retrieve(&spec, &m, &query, &exclude).map_err(|e| e.to_string())?.map(|r| r.index);
        if got != Some(expected) || brute_force_retrieve(&db, &spec, &m, &query, &exclude).map(|r| r.0 .0) != got {
            return Err(format!("tie resolved to {got:?}, expected {expected}"));
        }
        exclude.insert(db.records[expected].signature.clone());
    }
    Ok(())
}

// -------------------------------------------------------------- objective

fn random_term(rng: &mut ChaCha8Rng) -> ObjectiveTerm {
    let p = PropertyId::ALL[rng.random_range(0..3)];
    let dir = if rng.random_bool(0.5) { Direction::Increase } else { Direction::Decrease };
    let magnitude = match rng.random_range(0..5) {
        0 => 0.0,
        1 => 0.5,
        2 => 10.0,
        3 => 0.1,
        _ => rng.random_range(0.0..20.0),
    };
    ObjectiveTerm::new(p, dir, magnitude).expect("term")
}

pub fn objective_math(cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut boundary = 0;
    for case in 0..cases {
        let terms: Vec<ObjectiveTerm> = (0..rng.random_range(1..=2)).map(|_| random_term(&mut rng)).collect();
        let mut seen = HashSet::new();
        if !terms.iter().all(|t| seen.insert(t.property)) {
            continue;
        }
        let spec = ObjectiveSpec::new("case", terms).map_err(|e| e.to_string())?;
        let mut m = molrefine_core::PropertyVector::new();
        let mut mhat = molrefine_core::PropertyVector::new();
        let on_boundary = case % 4 == 0;
        for t in &spec.terms {
            // Boundary cases need an exact subtraction: dyadic bases for
            // dyadic thresholds, a zero base otherwise.
            let sd = t.signed_threshold();
            let base = if on_boundary && (sd * 8.0).fract() != 0.0 { 0.0 } else { rng.random_range(-800i32..800) as f64 / 8.0 };
            let delta = if on_boundary { t.signed_threshold() } else { rng.random_range(-40.0..40.0) };
            m.insert(t.property, base);
            mhat.insert(t.property, base + delta);
        }
        let eval = evaluate(&spec, &m, &mhat).map_err(|e| e.to_string())?;
        let grad = gradient(&spec, &m, &mhat).map_err(|e| e.to_string())?;
        for ((t, o), g) in spec.terms.iter().zip(&eval.per_term).zip(&grad.per_term) {
            let delta = mhat.get(t.property).unwrap() - m.get(t.property).unwrap();
            let expected = match t.direction {
                Direction::Increase => delta >= t.magnitude,
                Direction::Decrease => delta <= -t.magnitude,
            };
            if o.satisfied != expected || term_satisfied(t, delta) != expected || o.observed_delta != delta {
                return Err(format!("case {case}: {t} with delta {delta} gave satisfied={}", o.satisfied));
            }
            if g.direction != t.direction || g.residual != (delta - t.signed_threshold()).abs() || g.residual < 0.0 {
                return Err(format!("case {case}: residual {} for {t} with delta {delta}", g.residual));
            }
            if on_boundary {
                if !o.satisfied || g.residual != 0.0 {
                    return Err(format!("case {case}: boundary {t} not satisfied with zero residual"));
                }
                boundary += 1;
            }
            // Moving further in the desired direction keeps the term met.
            if o.satisfied && !term_satisfied(t, delta + t.direction.sign() * 0.25) {
                return Err(format!("case {case}: {t} not monotone"));
            }
        }
        if eval.overall != eval.per_term.iter().all(|o| o.satisfied) {
            return Err(format!("case {case}: overall disagrees with terms"));
        }
    }
    let presets = load_presets();
    if presets.len() != 28 {
        return Err(format!("{} presets, expected 28", presets.len()));
    }
    let mut magnitudes = BTreeMap::new();
    for p in &presets {
        for t in &p.terms {
            let want = if p.threshold_label() == "loose" {
                0.0
            } else {
                match t.property {
                    PropertyId::LogP => 0.5,
                    PropertyId::Tpsa => 10.0,
                    PropertyId::Qed => 0.1,
                }
            };
            if t.magnitude != want {
                return Err(format!("preset {} has {} magnitude {}", p.name, t.property, t.magnitude));
            }
            magnitudes.insert(format!("{}", t.magnitude), ());
        }
    }
    let listed: Vec<String> = magnitudes.into_keys().collect();
    Ok(format!("{cases} randomized cases ({boundary} boundary terms); 28 presets with magnitudes {}", listed.join("/")))
}

// ------------------------------------------------------------------ agent

pub fn scripted(responses: &[&str]) -> ScriptedProposer {
    ScriptedProposer::from_responses(responses.iter().copied())
}

pub fn run_scenario(
    given: &str,
    objective: &str,
    mode: LoopMode,
    responses: &[&str],
    db: Option<&Database>,
) -> RefinementTrace {
    let config = LoopConfig::default().with_mode(mode);
    let spec = ObjectiveSpec::resolve(objective).expect("objective");
    let ctx = LoopContext::new(ParameterTables::builtin(), db);
    run_loop(&config, given, &spec, &scripted(responses), &ctx).expect("loop")
}

/// Every residual printed in a prompt equals the recomputed gradient of the
/// step the prompt describes.
pub fn residuals_honest(trace: &RefinementTrace) -> Result<usize, String> {
    let mut checked = 0;
    for (k, step) in trace.steps.iter().enumerate() {
        if step.kind != StepKind::OuterRefine || !trace.config.gradient_feedback {
            continue;
        }
        let Some(from) = step.feedback_from else { continue };
        let described = &trace.steps[from];
        let props = described.properties.as_ref().ok_or("feedback from a step without properties")?;
        let eval = evaluate(&trace.objective, &trace.given.properties, props).map_err(|e| e.to_string())?;
        let grad = gradient(&trace.objective, &trace.given.properties, props).map_err(|e| e.to_string())?;
        for (o, g) in eval.per_term.iter().zip(&grad.per_term) {
            let verb = match g.direction {
                Direction::Increase => "increased",
                Direction::Decrease => "decreased",
            };
            let sentence = format!("Its {} needs to be {verb} by {} more.", g.property, format_residual(g.property, g.residual));
            if o.satisfied == step.prompt.contains(&sentence) {
                return Err(format!("step {k}: expected sentence {sentence:?} present={}", !o.satisfied));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

pub const GIVEN: &str = "CCO";
pub const STRICT_LOGP: &str = "single/strict/+LogP";
/// Invalid, then a valid miss (lower LogP), then a hit.
pub const FIX_MISS_HIT: [&str; 3] = ["C1CC", "OCCO", "CCCCCO"];

pub fn example_database() -> Database {
    let (db, _) = Database::build(
        &["O", "OCCO", "CCCCCCCCO", "CCCCCC"],
        FingerprintParams::default(),
        &PropertyId::ALL,
        ParameterTables::builtin(),
    )
    .expect("index");
    db
}

pub fn trace_fidelity() -> Check {
    use StepKind::{Init, InnerFix, OuterRefine};
    let db = example_database();
    let mut traces = Vec::new();
    let mut expect = |name: &str, trace: RefinementTrace, kinds: &[StepKind], hit: bool| -> Result<(), String> {
        check_trace(&trace).map_err(|e| format!("{name}: {e}"))?;
        if trace.kinds() != kinds {
            return Err(format!("{name}: kinds {:?}, expected {kinds:?}", trace.kinds()));
        }
        if trace.outcome.hit != hit {
            return Err(format!("{name}: hit {}, expected {hit}", trace.outcome.hit));
        }
        traces.push((name.to_string(), trace));
        Ok(())
    };

    let t = run_scenario(GIVEN, STRICT_LOGP, LoopMode::Full, &FIX_MISS_HIT, Some(&db));
    expect("invalid-fix-miss-hit", t, &[Init, InnerFix, OuterRefine], true)?;
    let t = run_scenario(GIVEN, STRICT_LOGP, LoopMode::Full, &["CCCCCO"], Some(&db));
    expect("immediate-hit", t, &[Init], true)?;
    let t = run_scenario(GIVEN, STRICT_LOGP, LoopMode::Full, &["C1CC", "C(C", "C1CC", "CC)"], Some(&db));
    expect("always-invalid", t, &[Init, InnerFix, InnerFix, InnerFix], false)?;
    let fallback = run_scenario("CCCCCCCCCCCC", STRICT_LOGP, LoopMode::Full, &["CCCCCCCCCC", "CCCCCCCCCCCCCCC"], Some(&db));
    if fallback.steps[1].example.is_some() || fallback.steps[1].prompt.contains("For your reference") {
        return Err("retrieval-miss: an example was quoted although none qualifies".into());
    }
    expect("retrieval-miss", fallback, &[Init, OuterRefine], true)?;

    let modes = [
        (LoopMode::Full, vec![Init, InnerFix, OuterRefine]),
        (LoopMode::NoInner, vec![Init, OuterRefine, OuterRefine]),
        (LoopMode::Generic, vec![Init, InnerFix, OuterRefine]),
        (LoopMode::NoRetrieval, vec![Init, InnerFix, OuterRefine]),
    ];
    for (mode, kinds) in modes {
        let t = run_scenario(GIVEN, STRICT_LOGP, mode, &FIX_MISS_HIT, Some(&db));
        let last = &t.steps.last().expect("steps").prompt;
        let refine = &t.steps[2].prompt;
        let gradient_text = refine.contains("needs to be increased by");
        let example_text = refine.contains("For your reference");
        if gradient_text != (mode != LoopMode::Generic) {
            return Err(format!("{}: gradient sentence present={gradient_text}", mode.name()));
        }
        if example_text != (mode != LoopMode::NoRetrieval) {
            return Err(format!("{}: example sentence present={example_text}", mode.name()));
        }
        if mode == LoopMode::NoInner && t.steps[1].prompt.contains("not chemically valid") {
            return Err("no-inner: parse-error feedback was sent".into());
        }
        if !last.ends_with("No explanation is needed.") {
            return Err(format!("{}: prompt lacks the closing instruction", mode.name()));
        }
        expect(mode.name(), t, &kinds, true)?;
    }

    let mut residuals = 0;
    for (name, t) in &traces {
        residuals += residuals_honest(t).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("{} scenarios matched their step kinds; {residuals} prompt residuals recomputed", traces.len()))
}

// --------------------------------------------------------------- proposer

/// Authorization header and JSON body of each request received.
pub type Received = Arc<Mutex<Vec<(Option<String>, Value)>>>;

pub struct MockServer {
    pub url: String,
    pub requests: Received,
    pub peak: Arc<AtomicUsize>,
    handle: Option<thread::JoinHandle<()>>,
    server: Arc<tiny_http::Server>,
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Chat-completions mock. `statuses` gives the status of successive
/// requests (200 after it runs out); each reply echoes the last user
/// message's first word so callers can tell requests apart.
pub fn mock_server(statuses: Vec<u16>, delay: Duration) -> MockServer {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind"));
    let url = format!("http://{}/v1", server.server_addr().to_ip().expect("ip"));
    let requests = Arc::new(Mutex::new(Vec::new()));
    let peak = Arc::new(AtomicUsize::new(0));
    let handle = {
        let (server, requests, peak) = (Arc::clone(&server), Arc::clone(&requests), Arc::clone(&peak));
        let statuses = Arc::new(Mutex::new(statuses.into_iter()));
        let active = Arc::new(AtomicUsize::new(0));
        thread::spawn(move || {
            let mut workers = Vec::new();
            for mut request in server.incoming_requests() {
                let (requests, peak, statuses, active) =
                    (Arc::clone(&requests), Arc::clone(&peak), Arc::clone(&statuses), Arc::clone(&active));
                workers.push(thread::spawn(move || {
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    let auth = request
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Authorization"))
                        .map(|h| h.value.to_string());
                    let mut body = String::new();
                    let _ = request.as_reader().read_to_string(&mut body);
                    let body: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
                    let word = body["messages"]
                        .as_array()
                        .and_then(|m| m.last())
                        .and_then(|m| m["content"].as_str())
                        .and_then(|c| c.split_whitespace().next())
                        .unwrap_or("C")
                        .to_string();
                    requests.lock().unwrap().push((auth, body));
                    thread::sleep(delay);
                    let status = statuses.lock().unwrap().next().unwrap_or(200);
                    let reply = if status == 200 {
                        json!({
                            "choices": [{"index": 0, "message": {"role": "assistant", "content": word}, "finish_reason": "stop"}],
                            "usage": {"prompt_tokens": 10, "completion_tokens": 2, "total_tokens": 12}
                        })
                    } else {
                        json!({"error": {"message": "slow down"}})
                    };
                    active.fetch_sub(1, Ordering::SeqCst);
                    let _ = request.respond(tiny_http::Response::from_string(reply.to_string()).with_status_code(status));
                }));
            }
            for w in workers {
                let _ = w.join();
            }
        })
    };
    MockServer { url, requests, peak, handle: Some(handle), server }
}

pub fn request(text: &str) -> ProposerRequest {
    ProposerRequest { system: None, messages: vec![ChatMessage::user(text)], params: GenerationParams::default() }
}

static KEY_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// A client for `url` whose key lives in a fresh environment variable.
pub fn client(url: &str, max_concurrent: usize) -> RemoteChat {
    let var = format!("MOLREFINE_TEST_KEY_{}_{}", std::process::id(), KEY_COUNTER.fetch_add(1, Ordering::SeqCst));
    std::env::set_var(&var, "sk-test");
    let mut config = RemoteChatConfig::new(url, "mock-model");
    config.api_key_env = Some(var);
    config.backoff_ms = 20;
    config.max_attempts = 4;
    config.timeout_secs = 5;
    config.max_concurrent = max_concurrent;
    RemoteChat::new(config).expect("client")
}

pub fn proposer_client() -> Check {
    let server = mock_server(vec![429, 200], Duration::ZERO);
    let chat = client(&server.url, 4);
    let response = chat.propose(&request("CCO please")).map_err(|e| e.to_string())?;
    if response.text != "CCO" || response.attempts != 2 {
        return Err(format!("after 429: text {:?}, attempts {}", response.text, response.attempts));
    }
    {
        let seen = server.requests.lock().unwrap();
        if seen.len() != 2 {
            return Err(format!("{} requests for one 429 and one success", seen.len()));
        }
        for (auth, body) in seen.iter() {
            if auth.as_deref() != Some("Bearer sk-test") {
                return Err(format!("authorization header {auth:?}"));
            }
            let schema_ok = body["model"] == "mock-model"
                && body["temperature"].is_number()
                && body["max_tokens"].is_u64()
                && body["messages"].as_array().is_some_and(|m| {
                    !m.is_empty()
                        && m.iter().all(|x| {
                            matches!(x["role"].as_str(), Some("system" | "user" | "assistant")) && x["content"].is_string()
                        })
                });
            if !schema_ok {
                return Err(format!("request body does not match the chat schema: {body}"));
            }
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cached = CachedProposer::new(Arc::new(chat), dir.path().to_path_buf()).map_err(|e| e.to_string())?;
    let first = cached.propose(&request("CCN again")).map_err(|e| e.to_string())?;
    let second = cached.propose(&request("CCN again")).map_err(|e| e.to_string())?;
    let served = server.requests.lock().unwrap().len();
    if first.cached || !second.cached || second.text != first.text || served != 3 {
        return Err(format!("cache: first cached={}, second cached={}, {served} requests", first.cached, second.cached));
    }

    let slow = mock_server(vec![], Duration::from_millis(60));
    let limited = Arc::new(client(&slow.url, 2));
    let workers: Vec<_> = (0..6)
        .map(|k| {
            let limited = Arc::clone(&limited);
            thread::spawn(move || limited.propose(&request(&format!("C{k}"))).map(|_| ()))
        })
        .collect();
    for w in workers {
        w.join().map_err(|_| "worker panicked")?.map_err(|e| e.to_string())?;
    }
    let peak = slow.peak.load(Ordering::SeqCst);
    if peak > 2 {
        return Err(format!("{peak} concurrent requests with a limit of 2"));
    }
    Ok(format!("schema and bearer header verified, 429 then 200 in 2 attempts, cache hit on repeat, peak concurrency {peak}/2"))
}

// -------------------------------------------------------------- benchmark

pub struct BenchSetup {
    pub dir: tempfile::TempDir,
    pub config_path: PathBuf,
}

/// Ten molecules, two objectives, a rule-driven scripted proposer and a
/// small example index.
pub fn bench_setup() -> BenchSetup {
    let dir = tempfile::tempdir().expect("tempdir");
    let molecules: Vec<String> = druglike().into_iter().step_by(37).take(10).collect();
    fs::write(dir.path().join("molecules.smi"), molecules.join("\n") + "\n").expect("molecules");
    let pool: Vec<String> = druglike().into_iter().take(300).collect();
    let (db, _) = Database::build(&pool, FingerprintParams::default(), &PropertyId::ALL, ParameterTables::builtin()).expect("index");
    db.save(&dir.path().join("examples.jsonl")).expect("save index");
    let rule = |contains: Option<&str>, pattern: Option<&str>, responses: &[&str]| ScriptRule {
        contains: contains.map(str::to_string),
        pattern: pattern.map(str::to_string),
        responses: responses.iter().map(|s| s.to_string()).collect(),
        repeat: true,
    };
    let scenario = ScriptedScenario::Rules {
        rules: vec![
            rule(Some("not chemically valid"), None, &["CCO"]),
            rule(None, Some(r"molecule (\S+) that is similar"), &["$1"]),
            rule(Some("does not meet"), None, &["c1ccccc1CCCl"]),
            rule(None, Some(r"Given (\S*N\S*), modify"), &["${1}("]),
            rule(None, Some(r"Given (\S+), modify"), &["${1}C"]),
        ],
    };
    let config = json!({
        "molecules_file": "molecules.smi",
        "objectives": ["single/loose/+LogP", "multi/strict/+LogP-TPSA"],
        "mode": "agentdrug",
        "loop": {"max_iterations": 3},
        "proposer": ProposerConfig::Scripted { scenario: ScriptedSource::Inline(scenario) },
        "database": "examples.jsonl",
        "parallelism": 4,
        "output_dir": "out",
        "seed": 0
    });
    let config_path = dir.path().join("bench.json");
    fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).expect("config");
    BenchSetup { dir, config_path }
}

pub const OUTPUTS: [&str; 4] = [benchmark::TRACES_FILE, benchmark::SUMMARY_CSV, benchmark::SUMMARY_TXT, benchmark::PLOT_CSV];

pub fn run_bench(setup: &BenchSetup, out: &str) -> Result<(PathBuf, benchmark::BenchResult), String> {
    let mut config = BenchConfig::load(&setup.config_path).map_err(|e| e.to_string())?;
    config.output_dir = setup.dir.path().join(out);
    let result = benchmark::run_benchmark(&config, ParameterTables::builtin()).map_err(|e| e.to_string())?;
    Ok((config.output_dir, result))
}

fn read_outputs(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    OUTPUTS.iter().map(|f| fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))).collect()
}

/// summary.csv recomputed from the raw trace lines, without the library's
/// report types.
pub fn reaggregate(traces_path: &Path, objectives: &[&str]) -> Result<String, String> {
    let file = fs::File::open(traces_path).map_err(|e| e.to_string())?;
    let lines: Vec<Value> = BufReader::new(file)
        .lines()
        .map(|l| serde_json::from_str(&l.map_err(|e| e.to_string())?).map_err(|e| e.to_string()))
        .collect::<Result<_, String>>()?;
    let mut out = String::from("objective,group,threshold,n,valid,hits,aborted,validity_pct,hit_pct,sim_all,sim_valid,sim_hits\n");
    let mean = |v: &[f64]| if v.is_empty() { "NA".to_string() } else { format!("{:.4}", v.iter().sum::<f64>() / v.len() as f64) };
    for name in objectives {
        let rows: Vec<&Value> = lines.iter().filter(|l| l["objective"] == *name).collect();
        let parts: Vec<&str> = name.split('/').collect();
        let (mut all, mut valid, mut hits, mut aborted) = (Vec::new(), Vec::new(), Vec::new(), 0);
        for r in &rows {
            let t = &r["trace"];
            let is_aborted = !t["aborted"].is_null();
            aborted += is_aborted as usize;
            let ok = !is_aborted && t["final"]["valid"] == true;
            let sim = t["final"]["similarity"].as_f64().unwrap_or(0.0);
            all.push(if ok { sim } else { 0.0 });
            if ok {
                valid.push(sim);
                if t["final"]["hit"] == true {
                    hits.push(sim);
                }
            }
        }
        let n = rows.len();
        let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
        out.push_str(&format!(
            "{name},{},{},{n},{},{},{aborted},{:.1},{:.1},{},{},{}\n",
            parts[0],
            parts[1],
            valid.len(),
            hits.len(),
            pct(valid.len()),
            pct(hits.len()),
            mean(&all),
            mean(&valid),
            mean(&hits)
        ));
    }
    Ok(out)
}

pub fn bench_determinism() -> Check {
    let setup = bench_setup();
    let (a, first) = run_bench(&setup, "a")?;
    let (b, _) = run_bench(&setup, "b")?;
    let (oa, ob) = (read_outputs(&a)?, read_outputs(&b)?);
    if oa != ob {
        return Err("two fresh runs produced different outputs".into());
    }
    let traces = String::from_utf8(oa[0].clone()).map_err(|e| e.to_string())?;
    let n_lines = traces.lines().count();
    if n_lines != 20 || first.executed != 20 {
        return Err(format!("{n_lines} trace lines, expected 20"));
    }

    // Simulate a kill after 7 complete traces and half of the eighth.
    let (c, _) = run_bench(&setup, "c")?;
    let keep: usize = traces.lines().take(7).map(|l| l.len() + 1).sum();
    let torn = traces.lines().nth(7).unwrap().len() / 2;
    let mut f = fs::OpenOptions::new().write(true).open(c.join(benchmark::TRACES_FILE)).map_err(|e| e.to_string())?;
    f.set_len((keep + torn) as u64).map_err(|e| e.to_string())?;
    f.flush().map_err(|e| e.to_string())?;
    for extra in &OUTPUTS[1..] {
        fs::remove_file(c.join(extra)).map_err(|e| e.to_string())?;
    }
    let (_, resumed) = run_bench(&setup, "c")?;
    if resumed.resumed != 7 || resumed.executed != 13 {
        return Err(format!("resume kept {} and ran {}", resumed.resumed, resumed.executed));
    }
    if read_outputs(&c)? != oa {
        return Err("kill-and-resume output differs from a clean run".into());
    }

    let objectives = ["single/loose/+LogP", "multi/strict/+LogP-TPSA"];
    let recomputed = reaggregate(&a.join(benchmark::TRACES_FILE), &objectives)?;
    if recomputed.as_bytes() != oa[1].as_slice() {
        return Err(format!("independent aggregation differs:\n{recomputed}\nvs\n{}", String::from_utf8_lossy(&oa[1])));
    }
    let hits: usize = first.rows.iter().map(|r| r.hits).sum();
    Ok(format!("20 traces ({hits} hits) byte-identical across 2 runs and a resume after 7.5 traces; re-aggregation matches"))
}
