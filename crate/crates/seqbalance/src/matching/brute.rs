//! Exhaustive matching oracles for small instances. These exist to verify the
//! polynomial solvers and are deliberately independent of them: plain
//! enumeration over all bijections / all perfect pairings.

use crate::space::{dist, Subject};

use super::{Matching, MatchingError};

pub(super) const MAX_BIPARTITE: usize = 8;
pub(super) const MAX_PAIRING: usize = 10;

/// Minimum-cost bijection between two groups by enumerating all `n!` of them.
pub fn discrepancy_bruteforce(
    control: &[Subject],
    treated: &[Subject],
) -> Result<Matching, MatchingError> {
    super::check_groups(control, treated)?;
    let n = control.len();
    if n > MAX_BIPARTITE {
        return Err(MatchingError::TooLarge {
            n,
            max: MAX_BIPARTITE,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_cost = f64::INFINITY;
    let mut best: Vec<usize> = perm.clone();
    permute(&mut perm, 0, &mut |assignment| {
        let cost: f64 = assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| dist(&control[i], &treated[j]))
            .sum();
        if cost < best_cost {
            best_cost = cost;
            best = assignment.to_vec();
        }
    });
    let pairs = best.iter().enumerate().map(|(i, &j)| (i, j)).collect();
    Ok(Matching {
        pairs,
        cost: best_cost,
    })
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Minimum-cost perfect pairing of one point set by enumerating all
/// `(n-1)!!` pairings.
pub fn pairing_bruteforce(subjects: &[Subject]) -> Result<Matching, MatchingError> {
    super::check_pairing_input(subjects)?;
    let n = subjects.len();
    if n > MAX_PAIRING {
        return Err(MatchingError::TooLarge {
            n,
            max: MAX_PAIRING,
        });
    }
    let mut used = vec![false; n];
    let mut current = Vec::with_capacity(n / 2);
    let mut best_cost = f64::INFINITY;
    let mut best = Vec::new();
    pair_rec(
        subjects,
        &mut used,
        &mut current,
        0.0,
        &mut best_cost,
        &mut best,
    );
    Ok(Matching {
        pairs: best,
        cost: best_cost,
    })
}

fn pair_rec(
    subjects: &[Subject],
    used: &mut [bool],
    current: &mut Vec<(usize, usize)>,
    cost: f64,
    best_cost: &mut f64,
    best: &mut Vec<(usize, usize)>,
) {
    let first = match used.iter().position(|&u| !u) {
        Some(i) => i,
        None => {
            if cost < *best_cost {
                *best_cost = cost;
                *best = current.clone();
            }
            return;
        }
    };
    used[first] = true;
    for j in first + 1..subjects.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        current.push((first, j));
        pair_rec(
            subjects,
            used,
            current,
            cost + dist(&subjects[first], &subjects[j]),
            best_cost,
            best,
        );
        current.pop();
        used[j] = false;
    }
    used[first] = false;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalars(xs: &[f64]) -> Vec<Subject> {
        xs.iter().map(|&x| Subject::scalar(x)).collect()
    }

    #[test]
    fn example1_split_costs() {
        // A = {1,3}, B = {2,4} gives 1.1; A = {1,2}, B = {3,4} gives 0.5.
        let m = discrepancy_bruteforce(&scalars(&[0.1, 0.4]), &scalars(&[0.7, 0.9])).unwrap();
        assert_abs_diff_eq!(m.cost, 1.1, epsilon = 1e-12);
        let m = discrepancy_bruteforce(&scalars(&[0.1, 0.7]), &scalars(&[0.4, 0.9])).unwrap();
        assert_abs_diff_eq!(m.cost, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn single_pair_is_distance() {
        let m = discrepancy_bruteforce(&scalars(&[0.2]), &scalars(&[0.9])).unwrap();
        assert_abs_diff_eq!(m.cost, 0.7, epsilon = 1e-12);
        assert_eq!(m.pairs, vec![(0, 0)]);
    }

    #[test]
    fn pairing_example1() {
        let m = pairing_bruteforce(&scalars(&[0.1, 0.7, 0.4, 0.9])).unwrap();
        assert_abs_diff_eq!(m.cost, 0.5, epsilon = 1e-12);
        let mut pairs = m.pairs.clone();
        pairs.sort();
        assert_eq!(pairs, vec![(0, 2), (1, 3)]); // {0.1,0.4} and {0.7,0.9}
    }

    #[test]
    fn pairing_two_points() {
        let m = pairing_bruteforce(&scalars(&[0.3, 0.8])).unwrap();
        assert_abs_diff_eq!(m.cost, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn size_guards() {
        let big = scalars(&[0.0; 12]);
        assert!(matches!(
            pairing_bruteforce(&big),
            Err(MatchingError::TooLarge { n: 12, max: 10 })
        ));
        let a = scalars(&[0.0; 9]);
        let b = scalars(&[1.0; 9]);
        assert!(matches!(
            discrepancy_bruteforce(&a, &b),
            Err(MatchingError::TooLarge { n: 9, max: 8 })
        ));
    }
}
