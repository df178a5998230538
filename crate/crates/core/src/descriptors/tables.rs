use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use super::tpsa::PolarEnv;
use super::DescriptorError;
use crate::smarts::Smarts;

const CRIPPEN: &str = include_str!("../../assets/crippen.txt");
const TPSA: &str = include_str!("../../assets/tpsa.txt");
const QED: &str = include_str!("../../assets/qed.txt");
const ALERTS: &str = include_str!("../../assets/alerts.txt");

/// Asset file names, in the order they are hashed and reported.
pub const ASSET_FILES: [&str; 4] = ["crippen.txt", "tpsa.txt", "qed.txt", "alerts.txt"];

pub(crate) struct CrippenRule {
    pub pattern: Smarts,
    pub logp: f64,
    elements: Option<Vec<u8>>,
}

impl CrippenRule {
    pub fn may_match(&self, z: u8) -> bool {
        self.elements.as_ref().is_none_or(|e| e.contains(&z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RingFlag {
    Any,
    Yes,
    No,
}

struct TpsaRow {
    element: u8,
    neighbors: u8,
    hydrogens: u8,
    charge: i8,
    single: u8,
    double: u8,
    triple: u8,
    aromatic: u8,
    three_ring: RingFlag,
    value: f64,
}

#[derive(Default)]
pub(crate) struct TpsaTable {
    rows: Vec<TpsaRow>,
    fallback: BTreeMap<u8, [f64; 3]>,
}

impl TpsaTable {
    pub fn contribution(&self, element: u8, env: &PolarEnv) -> f64 {
        let hit = self.rows.iter().find(|r| {
            r.element == element
                && r.neighbors == env.neighbors
                && r.hydrogens == env.hydrogens
                && r.charge == env.charge
                && r.single == env.single
                && r.double == env.double
                && r.triple == env.triple
                && r.aromatic == env.aromatic
                && match r.three_ring {
                    RingFlag::Any => true,
                    RingFlag::Yes => env.in_three_ring,
                    RingFlag::No => !env.in_three_ring,
                }
        });
        if let Some(row) = hit {
            return row.value;
        }
        match self.fallback.get(&element) {
            Some([base, per_nbr, per_h]) => {
                (base + per_nbr * env.neighbors as f64 + per_h * env.hydrogens as f64).max(0.0)
            }
            None => 0.0,
        }
    }
}

/// Coefficients of one asymmetric double sigmoid.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Ads {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub dmax: f64,
}

impl Ads {
    pub fn eval(&self, x: f64) -> f64 {
        let rise = 1.0 + (-(x - self.c + self.d / 2.0) / self.e).exp();
        let fall = 1.0 - 1.0 / (1.0 + (-(x - self.c - self.d / 2.0) / self.f).exp());
        (self.a + self.b / rise * fall) / self.dmax
    }
}

pub(crate) const QED_INPUTS: [&str; 8] = ["MW", "ALOGP", "HBA", "HBD", "PSA", "ROTB", "AROM", "ALERTS"];

pub(crate) struct QedParams {
    pub ads: [Ads; 8],
    pub weights: [f64; 8],
    pub acceptors: Vec<Smarts>,
    pub donor: Smarts,
    pub rotatable: Smarts,
    pub aliphatic_ring: Smarts,
}

/// Descriptor parameters: Crippen atom types, TPSA fragments, QED
/// coefficients and structural alerts, with the SHA-256 of each source.
pub struct ParameterTables {
    pub(crate) crippen: Vec<CrippenRule>,
    pub(crate) tpsa: TpsaTable,
    pub(crate) qed: QedParams,
    pub(crate) alerts: Vec<Smarts>,
    hashes: BTreeMap<String, String>,
}

impl std::fmt::Debug for ParameterTables {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParameterTables")
            .field("crippen_rules", &self.crippen.len())
            .field("alerts", &self.alerts.len())
            .field("hashes", &self.hashes)
            .finish()
    }
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Non-comment lines split on whitespace, with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        (!line.is_empty() && !line.starts_with('#')).then(|| (i + 1, line.split_whitespace().collect()))
    })
}

fn asset_err(file: &str, line: usize, detail: impl Into<String>) -> DescriptorError {
    DescriptorError::Asset { file: file.to_string(), line, detail: detail.into() }
}

fn number<T: std::str::FromStr>(file: &str, line: usize, field: &str) -> Result<T, DescriptorError> {
    field.parse().map_err(|_| asset_err(file, line, format!("invalid number {field:?}")))
}

fn pattern(file: &str, line: usize, text: &str) -> Result<Smarts, DescriptorError> {
    Smarts::parse(text).map_err(|e| asset_err(file, line, e.to_string()))
}

fn parse_crippen(text: &str) -> Result<Vec<CrippenRule>, DescriptorError> {
    let file = "crippen.txt";
    let rules = records(text)
        .map(|(line, f)| {
            if f.len() != 3 {
                return Err(asset_err(file, line, "expected type, SMARTS and value"));
            }
            let pattern = pattern(file, line, f[1])?;
            Ok(CrippenRule { elements: pattern.first_atom_elements(), pattern, logp: number(file, line, f[2])? })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if rules.is_empty() {
        return Err(asset_err(file, 0, "no rules"));
    }
    Ok(rules)
}

fn element_number(file: &str, line: usize, symbol: &str) -> Result<u8, DescriptorError> {
    match symbol {
        "N" => Ok(7),
        "O" => Ok(8),
        _ => Err(asset_err(file, line, format!("unsupported element {symbol:?}"))),
    }
}

fn parse_tpsa(text: &str) -> Result<TpsaTable, DescriptorError> {
    let file = "tpsa.txt";
    let mut table = TpsaTable::default();
    for (line, f) in records(text) {
        if f[0] == "fallback" {
            if f.len() != 5 {
                return Err(asset_err(file, line, "expected fallback element base per_neighbour per_hydrogen"));
            }
            let z = element_number(file, line, f[1])?;
            let coeffs = [number(file, line, f[2])?, number(file, line, f[3])?, number(file, line, f[4])?];
            table.fallback.insert(z, coeffs);
            continue;
        }
        if f.len() != 10 {
            return Err(asset_err(file, line, "expected 10 columns"));
        }
        let three_ring = match f[8] {
            "any" => RingFlag::Any,
            "yes" => RingFlag::Yes,
            "no" => RingFlag::No,
            other => return Err(asset_err(file, line, format!("invalid ring flag {other:?}"))),
        };
        table.rows.push(TpsaRow {
            element: element_number(file, line, f[0])?,
            neighbors: number(file, line, f[1])?,
            hydrogens: number(file, line, f[2])?,
            charge: number(file, line, f[3])?,
            single: number(file, line, f[4])?,
            double: number(file, line, f[5])?,
            triple: number(file, line, f[6])?,
            aromatic: number(file, line, f[7])?,
            three_ring,
            value: number(file, line, f[9])?,
        });
    }
    Ok(table)
}

fn parse_qed(text: &str) -> Result<QedParams, DescriptorError> {
    let file = "qed.txt";
    let mut ads: [Option<Ads>; 8] = [None; 8];
    let mut weights: [Option<f64>; 8] = [None; 8];
    let mut acceptors = Vec::new();
    let (mut donor, mut rotatable, mut aliphatic_ring) = (None, None, None);
    let slot = |line: usize, name: &str| {
        QED_INPUTS
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| asset_err(file, line, format!("unknown QED input {name:?}")))
    };
    for (line, f) in records(text) {
        match (f[0], f.len()) {
            ("ads", 9) => {
                let v: Vec<f64> = f[2..].iter().map(|x| number(file, line, x)).collect::<Result<_, _>>()?;
                ads[slot(line, f[1])?] =
                    Some(Ads { a: v[0], b: v[1], c: v[2], d: v[3], e: v[4], f: v[5], dmax: v[6] });
            }
            ("weight", 3) => weights[slot(line, f[1])?] = Some(number(file, line, f[2])?),
            ("acceptor", 2) => acceptors.push(pattern(file, line, f[1])?),
            ("donor", 2) => donor = Some(pattern(file, line, f[1])?),
            ("rotatable", 2) => rotatable = Some(pattern(file, line, f[1])?),
            ("aliphatic_ring", 2) => aliphatic_ring = Some(pattern(file, line, f[1])?),
            _ => return Err(asset_err(file, line, format!("unrecognised record {:?}", f[0]))),
        }
    }
    let missing = |what: &str| asset_err(file, 0, format!("missing {what}"));
    let mut out_ads = [Ads::default(); 8];
    let mut out_w = [0.0; 8];
    for k in 0..8 {
        out_ads[k] = ads[k].ok_or_else(|| missing(&format!("ads {}", QED_INPUTS[k])))?;
        out_w[k] = weights[k].ok_or_else(|| missing(&format!("weight {}", QED_INPUTS[k])))?;
    }
    Ok(QedParams {
        ads: out_ads,
        weights: out_w,
        acceptors,
        donor: donor.ok_or_else(|| missing("donor"))?,
        rotatable: rotatable.ok_or_else(|| missing("rotatable"))?,
        aliphatic_ring: aliphatic_ring.ok_or_else(|| missing("aliphatic_ring"))?,
    })
}

fn parse_alerts(text: &str) -> Result<Vec<Smarts>, DescriptorError> {
    records(text).map(|(line, f)| pattern("alerts.txt", line, f[0])).collect()
}

impl ParameterTables {
    /// Builds tables from the text of the four asset files.
    pub fn from_sources(crippen: &str, tpsa: &str, qed: &str, alerts: &str) -> Result<Self, DescriptorError> {
        let hashes = ASSET_FILES
            .iter()
            .zip([crippen, tpsa, qed, alerts])
            .map(|(name, text)| (name.to_string(), sha256_hex(text)))
            .collect();
        Ok(ParameterTables {
            crippen: parse_crippen(crippen)?,
            tpsa: parse_tpsa(tpsa)?,
            qed: parse_qed(qed)?,
            alerts: parse_alerts(alerts)?,
            hashes,
        })
    }

    /// Loads the four asset files from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, DescriptorError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| DescriptorError::Io { path, source })
        };
        Self::from_sources(&read(ASSET_FILES[0])?, &read(ASSET_FILES[1])?, &read(ASSET_FILES[2])?, &read(ASSET_FILES[3])?)
    }

    /// The tables compiled into the library.
    pub fn builtin() -> &'static ParameterTables {
        static TABLES: OnceLock<ParameterTables> = OnceLock::new();
        TABLES.get_or_init(|| {
            ParameterTables::from_sources(CRIPPEN, TPSA, QED, ALERTS).expect("built-in descriptor assets are valid")
        })
    }

    /// SHA-256 (hex) of each asset, keyed by file name.
    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }

    pub fn alert_count(&self) -> usize {
        self.alerts.len()
    }
}
