// Balanced transportation problem solved by the primal simplex on the
// spanning-tree basis: north-west corner start, dual potentials, Bland's
// entering and leaving rules.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const BALANCE_TOLERANCE: f64 = 1e-9;

/// Optimal flow, row-major `rows x cols`, and its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    pub flow: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl TransportPlan {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.flow[i * self.cols + j]
    }
}

/// Minimizes `sum c_ij f_ij` subject to `f >= 0`, row sums `supply` and
/// column sums `demand`. `cost` is row-major `supply.len() x demand.len()`.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportPlan> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(Error::shape("transport", format!("{m} supplies, {n} demands, {} costs", cost.len())));
    }
    if supply.iter().chain(demand).any(|&v| !(v >= 0.0 && v.is_finite())) || cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("transport", "masses must be finite and >= 0, costs finite"));
    }
    let (ts, td) = (supply.iter().sum::<f64>(), demand.iter().sum::<f64>());
    if (ts - td).abs() > BALANCE_TOLERANCE {
        return Err(Error::invalid("transport", format!("supply {ts} and demand {td} differ")));
    }

    let mut flow = vec![0.0; m * n];
    let mut basic = vec![false; m * n];
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    {
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = a[i].min(b[j]);
            flow[i * n + j] = x;
            basic[i * n + j] = true;
            basis.push((i, j));
            a[i] -= x;
            b[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && a[i] <= b[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let scale = cost.iter().fold(1.0f64, |acc, c| acc.max(c.abs()));
    let tol = 1e-12 * scale;
    let max_pivots = 50 * m * n + 1000;
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    for _ in 0..max_pivots {
        potentials(&basis, cost, m, n, &mut u, &mut v);
        let entering = (0..m * n).find(|&c| !basic[c] && cost[c] - u[c / n] - v[c % n] < -tol);
        let Some(cell) = entering else {
            let total = flow.iter().zip(cost).map(|(f, c)| f * c).sum();
            return Ok(TransportPlan { cost: total, flow, rows: m, cols: n });
        };
        let (p, q) = (cell / n, cell % n);
        let cycle = tree_path(&basis, m, n, q, p);
        // cycle[k] alternates -, +, -, ... after the entering cell's +.
        let mut leave: Option<usize> = None;
        for (k, &(i, j)) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                let better = match leave {
                    None => true,
                    Some(l) => {
                        let (li, lj) = cycle[l];
                        let (fl, fc) = (flow[li * n + lj], flow[i * n + j]);
                        fc < fl || (fc == fl && i * n + j < li * n + lj)
                    }
                };
                if better {
                    leave = Some(k);
                }
            }
        }
        let leave = leave.expect("cycle has a minus cell");
        let (li, lj) = cycle[leave];
        let theta = flow[li * n + lj];
        flow[cell] += theta;
        for (k, &(i, j)) in cycle.iter().enumerate() {
            let f = &mut flow[i * n + j];
            if k % 2 == 0 {
                *f = (*f - theta).max(0.0);
            } else {
                *f += theta;
            }
        }
        flow[li * n + lj] = 0.0;
        basic[li * n + lj] = false;
        basic[cell] = true;
        let pos = basis.iter().position(|&c| c == (li, lj)).expect("leaving cell is basic");
        basis[pos] = (p, q);
    }
    Err(Error::degenerate("transport", format!("no convergence after {max_pivots} pivots")))
}

/// Node ids: rows `0..m`, columns `m..m + n`.
fn adjacency(basis: &[(usize, usize)], m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); m + n];
    for &(i, j) in basis {
        adj[i].push(m + j);
        adj[m + j].push(i);
    }
    adj
}

/// `u_i + v_j = c_ij` on every basic cell, with `u_0 = 0`.
fn potentials(basis: &[(usize, usize)], cost: &[f64], m: usize, n: usize, u: &mut [f64], v: &mut [f64]) {
    let adj = adjacency(basis, m, n);
    let mut seen = vec![false; m + n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    u[0] = 0.0;
    while let Some(node) = queue.pop_front() {
        for &next in &adj[node] {
            if seen[next] {
                continue;
            }
            seen[next] = true;
            if node < m {
                let j = next - m;
                v[j] = cost[node * n + j] - u[node];
            } else {
                let j = node - m;
                u[next] = cost[next * n + j] - v[j];
            }
            queue.push_back(next);
        }
    }
}

/// Basic cells on the tree path from column `q` to row `p`, in order.
fn tree_path(basis: &[(usize, usize)], m: usize, n: usize, q: usize, p: usize) -> Vec<(usize, usize)> {
    let adj = adjacency(basis, m, n);
    let start = m + q;
    let mut parent = vec![usize::MAX; m + n];
    parent[start] = start;
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == p {
            break;
        }
        for &next in &adj[node] {
            if parent[next] == usize::MAX {
                parent[next] = node;
                queue.push_back(next);
            }
        }
    }
    let mut nodes = vec![p];
    let mut cur = p;
    while cur != start {
        cur = parent[cur];
        nodes.push(cur);
    }
    nodes.reverse();
    nodes
        .windows(2)
        .map(|w| if w[0] < m { (w[0], w[1] - m) } else { (w[1], w[0] - m) })
        .collect()
}
