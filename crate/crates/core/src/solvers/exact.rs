use crate::instance::{Tour, TspInstance};
use crate::{Error, Result};

pub const EXHAUSTIVE_LIMIT: usize = 12;
pub const DP_LIMIT: usize = 20;
pub const BRANCH_BOUND_LIMIT: usize = 20;

fn guard(solver: &'static str, n: usize, limit: usize) -> Result<()> {
    if n > limit {
        Err(Error::SizeLimit { solver, n, limit })
    } else {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Search-tree nodes entered, root and leaves included.
    pub nodes_visited: u64,
}

struct Search<'a> {
    n: usize,
    dist: &'a [f64],
    /// Cheapest edge leaving each city; the branch-and-bound bound.
    min_out: Vec<f64>,
    prune: bool,
    path: Vec<usize>,
    visited: Vec<bool>,
    best_len: f64,
    best: Vec<usize>,
    stats: SearchStats,
}

impl Search<'_> {
    fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    fn descend(&mut self, cost: f64, remaining_min: f64) {
        self.stats.nodes_visited += 1;
        let n = self.n;
        let current = *self.path.last().unwrap();
        if self.path.len() == n {
            let total = cost + self.d(current, 0);
            if total < self.best_len {
                self.best_len = total;
                self.best.clone_from(&self.path);
            }
            return;
        }
        if self.prune && cost + self.min_out[current] + remaining_min >= self.best_len {
            return;
        }
        let mut children: Vec<usize> = (1..n).filter(|&c| !self.visited[c]).collect();
        if self.prune {
            children.sort_by(|&a, &b| self.d(current, a).total_cmp(&self.d(current, b)));
        }
        for next in children {
            let step = cost + self.d(current, next);
            if self.prune && step >= self.best_len {
                continue;
            }
            self.visited[next] = true;
            self.path.push(next);
            self.descend(step, remaining_min - self.min_out[next]);
            self.path.pop();
            self.visited[next] = false;
        }
    }
}

fn depth_first(instance: &TspInstance, prune: bool) -> (Tour, SearchStats) {
    let n = instance.n();
    let dist = instance.distance_matrix();
    let min_out: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| dist[i * n + j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let (best_len, best) = if prune {
        let nn = nearest_neighbor(n, &dist);
        (crate::instance::cycle_length(instance, &nn), nn)
    } else {
        (f64::INFINITY, Vec::new())
    };
    let mut visited = vec![false; n];
    visited[0] = true;
    let remaining_min = min_out[1..].iter().sum();
    let mut s = Search {
        n,
        dist: &dist,
        min_out,
        prune,
        path: vec![0],
        visited,
        best_len,
        best,
        stats: SearchStats::default(),
    };
    s.descend(0.0, remaining_min);
    let order = s.best;
    let length = crate::instance::cycle_length(instance, &order);
    (Tour { order, length }, s.stats)
}

pub(crate) fn nearest_neighbor(n: usize, dist: &[f64]) -> Vec<usize> {
    let mut visited = vec![false; n];
    let mut order = vec![0];
    visited[0] = true;
    for _ in 1..n {
        let cur = *order.last().unwrap();
        let next = (0..n)
            .filter(|&j| !visited[j])
            .min_by(|&a, &b| dist[cur * n + a].total_cmp(&dist[cur * n + b]))
            .unwrap();
        visited[next] = true;
        order.push(next);
    }
    order
}

/// Enumerates every tour starting at city 0.
pub fn solve_exhaustive(instance: &TspInstance) -> Result<Tour> {
    solve_exhaustive_stats(instance).map(|(t, _)| t)
}

pub fn solve_exhaustive_stats(instance: &TspInstance) -> Result<(Tour, SearchStats)> {
    guard("exhaustive search", instance.n(), EXHAUSTIVE_LIMIT)?;
    Ok(depth_first(instance, false))
}

/// Depth-first branch and bound with a nearest-neighbor incumbent.
///
/// A partial path is cut when its cost plus the cheapest outgoing edge of
/// the current city and of every unvisited city reaches the incumbent.
pub fn solve_branch_bound(instance: &TspInstance) -> Result<Tour> {
    solve_branch_bound_stats(instance).map(|(t, _)| t)
}

pub fn solve_branch_bound_stats(instance: &TspInstance) -> Result<(Tour, SearchStats)> {
    guard("branch and bound", instance.n(), BRANCH_BOUND_LIMIT)?;
    Ok(depth_first(instance, true))
}

/// Held-Karp dynamic program over subsets of cities `1..n`.
pub fn solve_dp(instance: &TspInstance) -> Result<Tour> {
    let n = instance.n();
    guard("dynamic programming", n, DP_LIMIT)?;
    let dist = instance.distance_matrix();
    let d = |i: usize, j: usize| dist[i * n + j];
    // city c (1..n) is bit c-1; entry [mask * m + (c-1)] is the shortest
    // path from 0 through `mask`, ending at c
    let m = n - 1;
    let full = 1usize << m;
    let mut cost = vec![f64::INFINITY; full * m];
    let mut parent = vec![u8::MAX; full * m];
    for c in 0..m {
        cost[(1 << c) * m + c] = d(0, c + 1);
    }
    for mask in 1..full {
        for last in 0..m {
            if mask & (1 << last) == 0 {
                continue;
            }
            let here = cost[mask * m + last];
            if !here.is_finite() {
                continue;
            }
            for next in 0..m {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let nm = mask | (1 << next);
                let cand = here + d(last + 1, next + 1);
                if cand < cost[nm * m + next] {
                    cost[nm * m + next] = cand;
                    parent[nm * m + next] = last as u8;
                }
            }
        }
    }
    let all = full - 1;
    let mut last = (0..m)
        .min_by(|&a, &b| {
            (cost[all * m + a] + d(a + 1, 0)).total_cmp(&(cost[all * m + b] + d(b + 1, 0)))
        })
        .unwrap();
    let mut mask = all;
    let mut rev = Vec::with_capacity(n);
    loop {
        rev.push(last + 1);
        let p = parent[mask * m + last];
        mask &= !(1 << last);
        if p == u8::MAX {
            break;
        }
        last = p as usize;
    }
    rev.push(0);
    rev.reverse();
    Tour::new(instance, rev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, validate_tour, Bounds};

    fn square() -> TspInstance {
        TspInstance::new("sq", vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn unit_square() {
        for t in [
            solve_exhaustive(&square()).unwrap(),
            solve_dp(&square()).unwrap(),
            solve_branch_bound(&square()).unwrap(),
        ] {
            assert!((t.length - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn triangle_agrees() {
        let t = TspInstance::new("t", vec![[0.0, 0.0], [2.0, 0.5], [0.3, 1.0]]).unwrap();
        let a = solve_exhaustive(&t).unwrap();
        let b = solve_dp(&t).unwrap();
        assert!((a.length - b.length).abs() < 1e-12);
    }

    #[test]
    fn collinear_is_out_and_back() {
        let xs = [0.0, 3.5, 1.0, 7.0, 2.0];
        let inst = TspInstance::new("line", xs.iter().map(|&x| [x, 0.0]).collect()).unwrap();
        assert!((solve_dp(&inst).unwrap().length - 14.0).abs() < 1e-12);
    }

    #[test]
    fn exact_solvers_agree_on_random_instances() {
        let mut k = 0;
        for n in 4..=8 {
            for seed in 0..40 {
                k += 1;
                let inst = generate_instance(n, 1000 + seed, Bounds::default()).unwrap();
                let e = solve_exhaustive(&inst).unwrap();
                let d = solve_dp(&inst).unwrap();
                let b = solve_branch_bound(&inst).unwrap();
                for t in [&e, &d, &b] {
                    assert!(validate_tour(&inst, &t.order).is_valid());
                }
                assert!((e.length - d.length).abs() <= 1e-9 * d.length);
                assert!((b.length - d.length).abs() <= 1e-9 * d.length);
            }
        }
        assert_eq!(k, 200);
    }

    #[test]
    fn branch_bound_matches_dp_up_to_ten() {
        for seed in 0..10 {
            let inst = generate_instance(10, seed, Bounds::default()).unwrap();
            let d = solve_dp(&inst).unwrap();
            let b = solve_branch_bound(&inst).unwrap();
            assert!((b.length - d.length).abs() <= 1e-9 * d.length);
        }
    }

    #[test]
    fn branch_bound_visits_fewer_nodes() {
        for n in 4..=9 {
            let inst = generate_instance(n, 7, Bounds::default()).unwrap();
            let (_, full) = solve_exhaustive_stats(&inst).unwrap();
            let (_, bb) = solve_branch_bound_stats(&inst).unwrap();
            assert!(bb.nodes_visited <= full.nodes_visited);
            // every partial permutation of 1..n is a node of the full tree
            let expected: u64 = (0..n as u64).map(|k| ((n as u64 - k)..n as u64).product::<u64>()).sum();
            assert_eq!(full.nodes_visited, expected);
        }
    }

    #[test]
    fn size_guards() {
        let big = generate_instance(13, 0, Bounds::default()).unwrap();
        assert!(matches!(solve_exhaustive(&big), Err(Error::SizeLimit { .. })));
        let huge = generate_instance(21, 0, Bounds::default()).unwrap();
        assert!(matches!(solve_dp(&huge), Err(Error::SizeLimit { .. })));
        assert!(matches!(solve_branch_bound(&huge), Err(Error::SizeLimit { .. })));
    }
}
