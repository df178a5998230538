//! Molecule refinement with a language-model proposer: SMILES parsing with
//! categorized errors, LogP/TPSA/QED descriptors, circular fingerprints,
//! objectives with gradient feedback, example retrieval, the nested
//! refinement loop, proposer backends and a benchmark harness.

pub mod agent;
pub mod benchmark;
pub mod descriptors;
pub mod fingerprint;
mod hashing;
pub mod molgraph;
pub mod objective;
pub mod proposer;
pub mod retrieval;
mod smarts;

pub use agent::{run_loop, LoopConfig, LoopContext, LoopMode, RefinementTrace, StepKind};
pub use benchmark::{run_benchmark, BenchConfig, BenchResult};
pub use descriptors::{compute_properties, ParameterTables, PropertyId, PropertyVector};
pub use fingerprint::{morgan_fingerprint, tanimoto, Fingerprint, FingerprintParams};
pub use molgraph::{graph_signature, parse_smiles, write_smiles, MolGraph, ParseError, ParseErrorCategory, ParseOutcome};
pub use objective::{evaluate, gradient, load_presets, Direction, EvaluationResult, Gradient, ObjectiveSpec};
pub use proposer::{Proposer, ProposerConfig, ProposerError, ProposerRequest, ProposerResponse};
pub use retrieval::{Database, MoleculeRecord};
