//! LogP, TPSA and QED with their sub-descriptors. Parameters live in plain
//! text assets (see [`ParameterTables`]).

mod crippen;
mod qed;
mod tables;
mod tpsa;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::molgraph::MolGraph;

pub use crippen::crippen_logp_with;
pub use qed::{qed_inputs_with, qed_with, sub_descriptors_with, QedInputs, SubDescriptors};
pub use tables::ParameterTables;
pub use tpsa::ertl_tpsa_with;

#[derive(Debug, thiserror::Error)]
pub enum DescriptorError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: {detail}")]
    Asset { file: String, line: usize, detail: String },
    #[error("unknown property {0:?} (known: LogP, TPSA, QED)")]
    UnknownProperty(String),
    #[error("no properties requested")]
    NoProperties,
}

/// A registered molecular property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PropertyId {
    LogP,
    #[serde(rename = "TPSA")]
    Tpsa,
    #[serde(rename = "QED")]
    Qed,
}

impl PropertyId {
    pub const ALL: [PropertyId; 3] = [PropertyId::LogP, PropertyId::Tpsa, PropertyId::Qed];

    pub fn name(self) -> &'static str {
        match self {
            PropertyId::LogP => "LogP",
            PropertyId::Tpsa => "TPSA",
            PropertyId::Qed => "QED",
        }
    }

    pub fn compute(self, tables: &ParameterTables, mol: &MolGraph) -> f64 {
        match self {
            PropertyId::LogP => crippen_logp_with(tables, mol),
            PropertyId::Tpsa => ertl_tpsa_with(tables, mol),
            PropertyId::Qed => qed_with(tables, mol),
        }
    }
}

impl fmt::Display for PropertyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PropertyId {
    type Err = DescriptorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PropertyId::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DescriptorError::UnknownProperty(s.to_string()))
    }
}

/// Property values keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PropertyVector(BTreeMap<PropertyId, f64>);

impl PropertyVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: PropertyId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn insert(&mut self, id: PropertyId, value: f64) {
        self.0.insert(id, value);
    }

    pub fn ids(&self) -> impl Iterator<Item = PropertyId> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PropertyId, f64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(PropertyId, f64)> for PropertyVector {
    fn from_iter<T: IntoIterator<Item = (PropertyId, f64)>>(iter: T) -> Self {
        PropertyVector(iter.into_iter().collect())
    }
}

/// Computes exactly the requested properties.
pub fn compute_properties_with(
    tables: &ParameterTables,
    mol: &MolGraph,
    ids: &[PropertyId],
) -> Result<PropertyVector, DescriptorError> {
    if ids.is_empty() {
        return Err(DescriptorError::NoProperties);
    }
    Ok(ids.iter().map(|&id| (id, id.compute(tables, mol))).collect())
}

/// [`compute_properties_with`] over the built-in tables.
pub fn compute_properties(mol: &MolGraph, ids: &[PropertyId]) -> Result<PropertyVector, DescriptorError> {
    compute_properties_with(ParameterTables::builtin(), mol, ids)
}

/// Parses property names such as `LogP,TPSA`.
pub fn parse_property_list(text: &str) -> Result<Vec<PropertyId>, DescriptorError> {
    let ids: Vec<PropertyId> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    if ids.is_empty() {
        return Err(DescriptorError::NoProperties);
    }
    Ok(ids)
}

pub fn crippen_logp(mol: &MolGraph) -> f64 {
    crippen_logp_with(ParameterTables::builtin(), mol)
}

pub fn ertl_tpsa(mol: &MolGraph) -> f64 {
    ertl_tpsa_with(ParameterTables::builtin(), mol)
}

pub fn qed(mol: &MolGraph) -> f64 {
    qed_with(ParameterTables::builtin(), mol)
}

pub fn sub_descriptors(mol: &MolGraph) -> SubDescriptors {
    sub_descriptors_with(ParameterTables::builtin(), mol)
}

/// Average molecular weight including implicit hydrogens.
pub fn molecular_weight(mol: &MolGraph) -> f64 {
    let h = crate::molgraph::Element::H.weight();
    order_free_sum((0..mol.atom_count()).map(|i| mol.atom(i).element.weight() + mol.total_h(i) as f64 * h))
}

/// Sum that does not depend on atom numbering: terms are added in sorted
/// order, starting from +0.0 so an empty sum is not -0.0.
pub(crate) fn order_free_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = terms.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().fold(0.0, |acc, x| acc + x)
}
