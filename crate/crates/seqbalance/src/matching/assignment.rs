//! Exact solvers for the dense min-cost bipartite side: a shortest
//! augmenting path assignment solver with potentials for unit instances,
//! and a successive-shortest-paths transportation solver for instances
//! aggregated over duplicate points.

/// Minimum-cost perfect assignment on a square `n x n` cost matrix
/// (row-major, all entries finite and nonnegative).
/// Returns `(row_to_col, total_cost)`.
pub(crate) fn solve_assignment(n: usize, cost: &[f64]) -> (Vec<usize>, f64) {
    debug_assert_eq!(cost.len(), n * n);
    // Columns are 1-based with a virtual column 0 holding the row currently
    // being inserted; p[j] is the row assigned to column j.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![usize::MAX; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 0..n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 * n + (j - 1)] - u[i0 + 1] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j] + 1] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == usize::MAX {
                break;
            }
        }
        // Walk the augmenting path backwards.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=n {
        row_to_col[p[j]] = j - 1;
    }
    let total = row_to_col
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r * n + c])
        .sum();
    (row_to_col, total)
}

/// Minimum-cost transportation plan between `supply` (rows) and `demand`
/// (columns) with dense costs. `sum(supply) == sum(demand)` is required.
/// Returns the flows as `(row, col, amount)` triples plus the total cost.
pub(crate) fn solve_transportation(
    nr: usize,
    nc: usize,
    cost: &[f64],
    supply: &[u64],
    demand: &[u64],
) -> (Vec<(usize, usize, u64)>, f64) {
    debug_assert_eq!(cost.len(), nr * nc);
    debug_assert_eq!(supply.iter().sum::<u64>(), demand.iter().sum::<u64>());

    let n_nodes = nr + nc; // rows first, then columns
    let mut flow = vec![0u64; nr * nc];
    let mut pi = vec![0.0f64; n_nodes];
    let mut rem_s = supply.to_vec();
    let mut rem_d = demand.to_vec();
    let mut remaining: u64 = supply.iter().sum();

    let mut dist = vec![0.0f64; n_nodes];
    let mut parent = vec![usize::MAX; n_nodes];
    let mut done = vec![false; n_nodes];

    while remaining > 0 {
        // Dense Dijkstra over reduced costs from all rows with supply left.
        for v in 0..n_nodes {
            dist[v] = f64::INFINITY;
            parent[v] = usize::MAX;
            done[v] = false;
        }
        for r in 0..nr {
            if rem_s[r] > 0 {
                dist[r] = 0.0;
            }
        }
        let target;
        loop {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for v in 0..n_nodes {
                if !done[v] && dist[v] < best_d {
                    best_d = dist[v];
                    best = v;
                }
            }
            assert!(best != usize::MAX, "transportation network disconnected");
            done[best] = true;
            if best >= nr && rem_d[best - nr] > 0 {
                target = best;
                break;
            }
            if best < nr {
                let r = best;
                for c in 0..nc {
                    let node = nr + c;
                    if done[node] {
                        continue;
                    }
                    let rc = (cost[r * nc + c] + pi[r] - pi[node]).max(0.0);
                    let nd = dist[r] + rc;
                    if nd < dist[node] {
                        dist[node] = nd;
                        parent[node] = r;
                    }
                }
            } else {
                let c = best - nr;
                for r in 0..nr {
                    if done[r] || flow[r * nc + c] == 0 {
                        continue;
                    }
                    let rc = (-cost[r * nc + c] + pi[best] - pi[r]).max(0.0);
                    let nd = dist[best] + rc;
                    if nd < dist[r] {
                        dist[r] = nd;
                        parent[r] = best;
                    }
                }
            }
        }

        let d_target = dist[target];
        for v in 0..n_nodes {
            pi[v] += dist[v].min(d_target);
        }

        // Bottleneck along the path back to a supply row.
        let mut bottleneck = rem_d[target - nr];
        let mut v = target;
        while parent[v] != usize::MAX {
            let pv = parent[v];
            if v >= nr {
                // forward arc pv -> v, uncapacitated
            } else {
                // reverse arc (col pv) -> (row v); limited by current flow
                bottleneck = bottleneck.min(flow[v * nc + (pv - nr)]);
            }
            v = pv;
        }
        bottleneck = bottleneck.min(rem_s[v]);
        debug_assert!(bottleneck > 0);

        // Apply the augmentation.
        let mut node = target;
        while parent[node] != usize::MAX {
            let pv = parent[node];
            if node >= nr {
                flow[pv * nc + (node - nr)] += bottleneck;
            } else {
                flow[node * nc + (pv - nr)] -= bottleneck;
            }
            node = pv;
        }
        rem_s[node] -= bottleneck;
        rem_d[target - nr] -= bottleneck;
        remaining -= bottleneck;
    }

    let mut flows = Vec::new();
    let mut total = 0.0;
    for r in 0..nr {
        for c in 0..nc {
            let f = flow[r * nc + c];
            if f > 0 {
                flows.push((r, c, f));
                total += cost[r * nc + c] * f as f64;
            }
        }
    }
    (flows, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn assignment_small_exact() {
        // 2x2: optimum picks the anti-diagonal.
        let cost = [4.0, 1.0, 2.0, 5.0];
        let (perm, total) = solve_assignment(2, &cost);
        assert_eq!(perm, vec![1, 0]);
        assert_abs_diff_eq!(total, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn assignment_identity_when_diagonal_cheap() {
        let cost = [0.0, 9.0, 9.0, 9.0, 0.0, 9.0, 9.0, 9.0, 0.0];
        let (perm, total) = solve_assignment(3, &cost);
        assert_eq!(perm, vec![0, 1, 2]);
        assert_eq!(total, 0.0);
    }

    #[test]
    fn transportation_matches_assignment_on_unit_supplies() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..=7);
            let cost: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let (_, a) = solve_assignment(n, &cost);
            let ones = vec![1u64; n];
            let (_, t) = solve_transportation(n, n, &cost, &ones, &ones);
            assert_abs_diff_eq!(a, t, epsilon = 1e-9);
        }
    }

    #[test]
    fn transportation_aggregates_duplicates() {
        // Two distinct supply points, two distinct demand points.
        let cost = [1.0, 3.0, 2.0, 1.0];
        let (flows, total) = solve_transportation(2, 2, &cost, &[3, 2], &[2, 3]);
        // Optimal: route 2 units (0,0), 1 unit (0,1), 2 units (1,1).
        assert_abs_diff_eq!(total, 2.0 + 3.0 + 2.0, epsilon = 1e-12);
        let shipped: u64 = flows.iter().map(|f| f.2).sum();
        assert_eq!(shipped, 5);
    }
}
