//! The discrepancy objective: minimum-weight perfect matchings with L2
//! costs, both bipartite (between realized control and treated groups) and
//! general (over one pooled set of subjects, as the matched-pair benchmark
//! requires), plus exhaustive oracles for small instances.

mod assignment;
mod blossom;
mod brute;

pub use brute::{discrepancy_bruteforce, pairing_bruteforce};

use std::collections::HashMap;

use thiserror::Error;

use crate::space::{dist, Subject};

/// Number of points above which the exact blossom solver refuses to run
/// unless a greedy fallback is explicitly requested.
pub const DEFAULT_MAX_PAIRING_NODES: usize = 5000;

// Distances are scaled to integers for the blossom solver; 2^48 keeps the
// rounding error orders of magnitude below the 1e-9 cost tolerance while
// dual variables stay far from i64 overflow.
const BLOSSOM_SCALE: f64 = (1u64 << 48) as f64;

/// A perfect matching with its total L2 cost. For bipartite matchings the
/// pairs are `(control index, treated index)`; for pairings over one pooled
/// set they are unordered index pairs into that set.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MatchingError {
    #[error("groups have different sizes: {control} control vs {treated} treated")]
    SizeMismatch { control: usize, treated: usize },
    #[error("both groups must be nonempty")]
    EmptyGroup,
    #[error("{n} subjects cannot be paired perfectly; an even count is required")]
    OddCount { n: usize },
    #[error("instance with {n} subjects exceeds the limit of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("subjects live in different spaces")]
    SpaceMismatch,
    #[error("subject {index} has a non-finite coordinate")]
    NonFinite { index: usize },
}

fn check_shapes(subjects: &[Subject]) -> Result<(), MatchingError> {
    let first = &subjects[0];
    for (index, s) in subjects.iter().enumerate() {
        if s.continuous.len() != first.continuous.len() || s.discrete.len() != first.discrete.len()
        {
            return Err(MatchingError::SpaceMismatch);
        }
        if s.coords().any(|v| !v.is_finite()) {
            return Err(MatchingError::NonFinite { index });
        }
    }
    Ok(())
}

pub(crate) fn check_groups(control: &[Subject], treated: &[Subject]) -> Result<(), MatchingError> {
    if control.is_empty() || treated.is_empty() {
        return Err(MatchingError::EmptyGroup);
    }
    if control.len() != treated.len() {
        return Err(MatchingError::SizeMismatch {
            control: control.len(),
            treated: treated.len(),
        });
    }
    check_shapes(control)?;
    check_shapes(treated)?;
    if control[0].continuous.len() != treated[0].continuous.len()
        || control[0].discrete.len() != treated[0].discrete.len()
    {
        return Err(MatchingError::SpaceMismatch);
    }
    Ok(())
}

pub(crate) fn check_pairing_input(subjects: &[Subject]) -> Result<(), MatchingError> {
    if subjects.len() < 2 || !subjects.len().is_multiple_of(2) {
        return Err(MatchingError::OddCount { n: subjects.len() });
    }
    check_shapes(subjects)
}

/// Bit-exact grouping key for a subject's coordinates.
fn coord_key(s: &Subject) -> Vec<u64> {
    s.coords().map(f64::to_bits).collect()
}

fn group_by_coords(subjects: &[Subject]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut key_to_group: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut reps = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, s) in subjects.iter().enumerate() {
        let g = *key_to_group.entry(coord_key(s)).or_insert_with(|| {
            reps.push(i);
            members.push(Vec::new());
            members.len() - 1
        });
        members[g].push(i);
    }
    (reps, members)
}

/// The discrepancy `d_{A,B}`: exact minimum-weight perfect bipartite matching
/// between the control and treated groups. Duplicate points are aggregated
/// into a transportation instance first, which keeps the all-discrete case
/// cheap; distinct-point instances run through a dense O(n^3) assignment
/// solver. Only the cost is contractual; ties between optimal pairings are
/// broken arbitrarily.
pub fn discrepancy(control: &[Subject], treated: &[Subject]) -> Result<Matching, MatchingError> {
    check_groups(control, treated)?;
    let n = control.len();

    let (c_reps, c_members) = group_by_coords(control);
    let (t_reps, t_members) = group_by_coords(treated);
    let (nr, nc) = (c_reps.len(), t_reps.len());

    if nr == n && nc == n {
        // All points distinct: plain assignment.
        let mut cost = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                cost[i * n + j] = dist(&control[i], &treated[j]);
            }
        }
        let (row_to_col, total) = assignment::solve_assignment(n, &cost);
        let pairs = row_to_col
            .iter()
            .enumerate()
            .map(|(i, &j)| (i, j))
            .collect();
        return Ok(Matching { pairs, cost: total });
    }

    let mut cost = vec![0.0f64; nr * nc];
    for (r, &i) in c_reps.iter().enumerate() {
        for (c, &j) in t_reps.iter().enumerate() {
            cost[r * nc + c] = dist(&control[i], &treated[j]);
        }
    }
    let supply: Vec<u64> = c_members.iter().map(|m| m.len() as u64).collect();
    let demand: Vec<u64> = t_members.iter().map(|m| m.len() as u64).collect();
    let (flows, total) = assignment::solve_transportation(nr, nc, &cost, &supply, &demand);

    // Expand group-level flows back to index pairs.
    let mut next_c: Vec<usize> = vec![0; nr];
    let mut next_t: Vec<usize> = vec![0; nc];
    let mut pairs = Vec::with_capacity(n);
    for (r, c, amount) in flows {
        for _ in 0..amount {
            pairs.push((c_members[r][next_c[r]], t_members[c][next_t[c]]));
            next_c[r] += 1;
            next_t[c] += 1;
        }
    }
    Ok(Matching { pairs, cost: total })
}

/// Options for [`min_weight_pairing_with`].
#[derive(Debug, Clone)]
pub struct PairingOptions {
    /// Hard size limit for the exact blossom solver.
    pub max_nodes: usize,
    /// Above `max_nodes`, fall back to a greedy nearest-pair heuristic.
    /// The result is then approximate, not a guaranteed optimum.
    pub greedy_fallback: bool,
}

impl Default for PairingOptions {
    fn default() -> Self {
        Self {
            max_nodes: DEFAULT_MAX_PAIRING_NODES,
            greedy_fallback: false,
        }
    }
}

/// Exact minimum-weight perfect matching on the complete graph over all
/// subjects (general, non-bipartite), with the default size guard.
pub fn min_weight_pairing(subjects: &[Subject]) -> Result<Matching, MatchingError> {
    min_weight_pairing_with(subjects, &PairingOptions::default())
}

/// As [`min_weight_pairing`] but with an explicit size guard and optional
/// greedy fallback.
pub fn min_weight_pairing_with(
    subjects: &[Subject],
    opts: &PairingOptions,
) -> Result<Matching, MatchingError> {
    check_pairing_input(subjects)?;
    let n = subjects.len();
    if n > opts.max_nodes {
        if opts.greedy_fallback {
            return Ok(greedy_pairing(subjects));
        }
        return Err(MatchingError::TooLarge {
            n,
            max: opts.max_nodes,
        });
    }

    // Scale distances to integers and flip to a max-weight problem; with
    // max-cardinality the matching on a complete graph is perfect.
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    let mut max_w = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let w = (dist(&subjects[i], &subjects[j]) * BLOSSOM_SCALE).round() as i64;
            max_w = max_w.max(w);
            edges.push((i, j, w));
        }
    }
    for e in &mut edges {
        e.2 = max_w - e.2;
    }
    let mate = blossom::max_weight_matching(n, &edges, true);

    let mut pairs = Vec::with_capacity(n / 2);
    let mut cost = 0.0;
    for i in 0..n {
        let j = mate[i];
        assert!(
            j != blossom::NONE,
            "complete graph must yield a perfect matching"
        );
        if i < j {
            pairs.push((i, j));
            cost += dist(&subjects[i], &subjects[j]);
        }
    }
    Ok(Matching { pairs, cost })
}

// Repeatedly match the globally closest unused pair. Approximate.
fn greedy_pairing(subjects: &[Subject]) -> Matching {
    let n = subjects.len();
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((dist(&subjects[i], &subjects[j]), i, j));
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut used = vec![false; n];
    let mut pairs = Vec::with_capacity(n / 2);
    let mut cost = 0.0;
    for (d, i, j) in edges {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            pairs.push((i, j));
            cost += d;
        }
    }
    Matching { pairs, cost }
}

/// Exact bipartite discrepancy in one dimension: sort both groups and sum
/// coordinate gaps in sorted order. Valid whenever subjects carry a single
/// coordinate (p + q = 1).
pub fn line_discrepancy(control: &[f64], treated: &[f64]) -> f64 {
    debug_assert_eq!(control.len(), treated.len());
    let mut a = control.to_vec();
    let mut b = treated.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}
