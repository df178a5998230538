//! Ring perception: bridge detection and a minimum cycle basis.

use std::collections::{HashSet, VecDeque};

type Adjacency = [Vec<(usize, usize)>];

/// Marks every edge that lies on at least one cycle (i.e. is not a bridge).
pub(crate) fn ring_bonds(adjacency: &Adjacency, n_edges: usize) -> Vec<bool> {
    let n = adjacency.len();
    let mut on_cycle = vec![true; n_edges];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (vertex, edge used to reach it, next neighbour slot)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (v, via, ref mut slot)) = stack.last_mut() {
            if *slot < adjacency[v].len() {
                let (w, e) = adjacency[v][*slot];
                *slot += 1;
                if e == via {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, e, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[v]);
                    if low[v] > disc[parent] {
                        on_cycle[via] = false;
                    }
                }
            }
        }
    }
    on_cycle
}

/// Number of connected components.
pub(crate) fn component_count(adjacency: &Adjacency) -> usize {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(w, _) in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

struct Candidate {
    atoms: Vec<usize>,
    edges: Vec<usize>,
}

/// Computes a minimum cycle basis (smallest set of smallest rings) of size
/// E - V + C using Horton's candidate set and GF(2) elimination.
/// Each ring is returned as an ordered atom cycle.
pub(crate) fn smallest_rings(adjacency: &Adjacency, edges: &[(usize, usize)], on_cycle: &[bool]) -> Vec<Vec<usize>> {
    let n = adjacency.len();
    let rank = edges.len() + component_count(adjacency) - n;
    if rank == 0 {
        return Vec::new();
    }
    let ring_atoms: Vec<usize> = (0..n)
        .filter(|&v| adjacency[v].iter().any(|&(_, e)| on_cycle[e]))
        .collect();
    let ring_edges: Vec<usize> = (0..edges.len()).filter(|&e| on_cycle[e]).collect();

    let mut candidates: Vec<Candidate> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut dist = vec![usize::MAX; n];
    let mut parent: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); n];
    for &root in &ring_atoms {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &(w, e) in &adjacency[v] {
                if on_cycle[e] && dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    parent[w] = (v, e);
                    queue.push_back(w);
                }
            }
        }
        for &e in &ring_edges {
            let (x, y) = edges[e];
            if dist[x] == usize::MAX || dist[y] == usize::MAX {
                continue;
            }
            if parent[x].1 == e || parent[y].1 == e {
                continue;
            }
            let path = |mut v: usize| {
                let mut atoms = vec![v];
                let mut bonds = Vec::new();
                while v != root {
                    let (p, pe) = parent[v];
                    bonds.push(pe);
                    atoms.push(p);
                    v = p;
                }
                (atoms, bonds)
            };
            let (px, bx) = path(x);
            let (py, by) = path(y);
            let sx: HashSet<usize> = px[..px.len() - 1].iter().copied().collect();
            if py[..py.len() - 1].iter().any(|a| sx.contains(a)) {
                continue;
            }
            let mut key: Vec<usize> = bx.iter().chain(by.iter()).copied().chain([e]).collect();
            key.sort_unstable();
            if !seen.insert(key.clone()) {
                continue;
            }
            let mut atoms = px;
            atoms.extend(py[..py.len() - 1].iter().rev());
            candidates.push(Candidate { atoms, edges: key });
        }
    }
    candidates.sort_by(|a, b| a.edges.len().cmp(&b.edges.len()).then_with(|| a.edges.cmp(&b.edges)));

    let words = edges.len().div_ceil(64);
    let mut basis: Vec<Option<Vec<u64>>> = vec![None; edges.len()];
    let mut rings = Vec::new();
    for cand in candidates {
        let mut vec = vec![0u64; words];
        for &e in &cand.edges {
            vec[e / 64] |= 1 << (e % 64);
        }
        while let Some(pivot) = lowest_bit(&vec) {
            match &basis[pivot] {
                Some(row) => vec.iter_mut().zip(row).for_each(|(a, b)| *a ^= b),
                None => {
                    basis[pivot] = Some(vec);
                    rings.push(canonical_cycle(cand.atoms));
                    break;
                }
            }
        }
        if rings.len() == rank {
            break;
        }
    }
    rings
}

fn lowest_bit(v: &[u64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

/// Rotates a cycle to start at its lowest atom index, walking towards the
/// smaller neighbour, so ring output does not depend on candidate order.
fn canonical_cycle(mut atoms: Vec<usize>) -> Vec<usize> {
    let start = atoms
        .iter()
        .enumerate()
        .min_by_key(|(_, a)| **a)
        .map(|(i, _)| i)
        .unwrap_or(0);
    atoms.rotate_left(start);
    if atoms.len() > 2 && atoms[atoms.len() - 1] < atoms[1] {
        atoms[1..].reverse();
    }
    atoms
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); n];
        for (i, &(a, b)) in edges.iter().enumerate() {
            adj[a].push((b, i));
            adj[b].push((a, i));
        }
        adj
    }

    #[test]
    fn bridges_in_chain_and_ring() {
        // 0-1-2-0 triangle plus tail 2-3
        let edges = [(0, 1), (1, 2), (2, 0), (2, 3)];
        let adj = graph(4, &edges);
        assert_eq!(ring_bonds(&adj, 4), vec![true, true, true, false]);
    }

    #[test]
    fn cubane_has_five_four_rings() {
        let edges = [
            (0, 1), (1, 2), (2, 3), (3, 0),
            (4, 5), (5, 6), (6, 7), (7, 4),
            (0, 4), (1, 5), (2, 6), (3, 7),
        ];
        let adj = graph(8, &edges);
        let on = ring_bonds(&adj, edges.len());
        let rings = smallest_rings(&adj, &edges, &on);
        assert_eq!(rings.len(), 5);
        assert!(rings.iter().all(|r| r.len() == 4));
    }
}
