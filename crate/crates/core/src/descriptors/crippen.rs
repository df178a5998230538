use super::{order_free_sum, ParameterTables};
use crate::molgraph::MolGraph;
use crate::smarts::Target;

/// Wildman-Crippen logP: every atom, hydrogens included, contributes the
/// value of the first rule that matches it.
pub fn crippen_logp_with(tables: &ParameterTables, mol: &MolGraph) -> f64 {
    let target = Target::new(mol, true);
    let contributions = (0..target.atom_count())
        .map(|atom| {
            let z = target.atomic_number(atom);
            tables
                .crippen
                .iter()
                .filter(|rule| rule.may_match(z))
                .find(|rule| target.matches_at(&rule.pattern, atom))
                .map_or(0.0, |rule| rule.logp)
        });
    order_free_sum(contributions)
}

