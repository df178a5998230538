//! Double-bond assignment for aromatic systems.

/// Search budget; pathological inputs give up instead of spinning.
const MAX_NODES: usize = 200_000;

struct Search<'a> {
    adjacency: &'a [Vec<(usize, usize)>],
    aromatic_bond: &'a [bool],
    needs: &'a [bool],
    nodes: usize,
}

/// Chooses one aromatic bond per atom in `needs` such that no atom gets two.
/// Returns per-bond double flags, or the index of an atom that could not be
/// matched.
pub(crate) fn assign_double_bonds(
    adjacency: &[Vec<(usize, usize)>],
    aromatic_bond: &[bool],
    needs: &[bool],
) -> Result<Vec<bool>, usize> {
    let mut search = Search {
        adjacency,
        aromatic_bond,
        needs,
        nodes: 0,
    };
    let mate = vec![None; adjacency.len()];
    let mate = search.solve(mate)?;
    let mut double = vec![false; aromatic_bond.len()];
    for m in mate.into_iter().flatten() {
        double[m] = true;
    }
    Ok(double)
}

impl Search<'_> {
    fn options<'b>(&'b self, mate: &'b [Option<usize>], v: usize) -> impl Iterator<Item = (usize, usize)> + 'b {
        self.adjacency[v]
            .iter()
            .copied()
            .filter(move |&(w, e)| self.aromatic_bond[e] && self.needs[w] && mate[w].is_none())
    }

    fn solve(&mut self, mut mate: Vec<Option<usize>>) -> Result<Vec<Option<usize>>, usize> {
        self.nodes += 1;
        let n = self.adjacency.len();
        // Forced moves first.
        loop {
            let mut changed = false;
            for v in 0..n {
                if !self.needs[v] || mate[v].is_some() {
                    continue;
                }
                let first_two: Vec<(usize, usize)> = self.options(&mate, v).take(2).collect();
                match (first_two.first().copied(), first_two.get(1)) {
                    (None, _) => return Err(v),
                    (Some((w, e)), None) => {
                        mate[v] = Some(e);
                        mate[w] = Some(e);
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        let pick = (0..n)
            .filter(|&v| self.needs[v] && mate[v].is_none())
            .min_by_key(|&v| self.options(&mate, v).count());
        let Some(v) = pick else {
            return Ok(mate);
        };
        if self.nodes > MAX_NODES {
            return Err(v);
        }
        let opts: Vec<(usize, usize)> = self.options(&mate, v).collect();
        for (w, e) in opts {
            let mut next = mate.clone();
            next[v] = Some(e);
            next[w] = Some(e);
            if let Ok(done) = self.solve(next) {
                return Ok(done);
            }
        }
        Err(v)
    }
}
