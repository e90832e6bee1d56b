//! Transportation simplex on a dense cost matrix.
//!
//! Starts from the north-west corner basis, prices with dual potentials on
//! the basis tree and pivots along the unique tree cycle. Entering cells use
//! the most negative reduced cost; after a long run of pivots the rule
//! switches to the first negative cell in row-major order. All tie-breaks
//! are by index, so the returned vertex depends only on the input order.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub(crate) struct Solution {
    /// Row-major `m x n` flow.
    pub flow: Vec<f64>,
}

pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<Solution> {
    let m = supply.len();
    let n = demand.len();
    debug_assert_eq!(cost.len(), m * n);
    let scale = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-12 * (1.0 + scale);

    let mut flow = vec![0.0; m * n];
    let mut basis = north_west(supply, demand, &mut flow);
    let cap = 50 * m * n + 1000;
    let bland_after = 4 * m * n + 100;

    for iter in 0..cap {
        let tree = Tree::new(m, n, &basis);
        let (u, v) = tree.potentials(cost);
        let mut in_basis = vec![false; m * n];
        for &c in &basis {
            in_basis[c] = true;
        }

        let mut entering = None;
        let mut best = -tol;
        for cell in 0..m * n {
            if in_basis[cell] {
                continue;
            }
            let reduced = cost[cell] - u[cell / n] - v[cell % n];
            if reduced < best {
                best = reduced;
                entering = Some(cell);
                if iter >= bland_after {
                    break;
                }
            }
        }
        let Some(enter) = entering else {
            flow.iter_mut().for_each(|x| *x = x.max(0.0));
            return Ok(Solution { flow });
        };

        let (ei, ej) = (enter / n, enter % n);
        // Path in the tree from column ej to row ei, as basis cells.
        let path = tree.path(m + ej, ei);
        // Signs alternate starting with '-' on the edge touching column ej.
        let mut leave_pos = None;
        let mut theta = f64::INFINITY;
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 && flow[cell] < theta {
                theta = flow[cell];
                leave_pos = Some(k);
            }
        }
        let leave_pos = leave_pos.ok_or_else(|| Error::Solver("degenerate pivot cycle".into()))?;
        let leave = path[leave_pos];
        flow[enter] += theta;
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                flow[cell] -= theta;
            } else {
                flow[cell] += theta;
            }
        }
        flow[leave] = 0.0;
        let slot = basis.iter().position(|&c| c == leave).expect("leaving cell is basic");
        basis[slot] = enter;
    }
    Err(Error::Solver(format!(
        "no optimal basis after {cap} pivots on a {m}x{n} problem"
    )))
}

fn north_west(supply: &[f64], demand: &[f64], flow: &mut [f64]) -> Vec<usize> {
    let m = supply.len();
    let n = demand.len();
    let mut rs = supply.to_vec();
    let mut rd = demand.to_vec();
    let mut basis = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let x = rs[i].min(rd[j]).max(0.0);
        flow[i * n + j] = x;
        basis.push(i * n + j);
        rs[i] -= x;
        rd[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if i == m - 1 || (j < n - 1 && rd[j] <= rs[i]) {
            j += 1;
        } else {
            i += 1;
        }
    }
    basis
}

/// Basis tree on `m + n` nodes: rows are `0..m`, columns `m..m+n`.
struct Tree {
    m: usize,
    n: usize,
    adj: Vec<Vec<usize>>,
}

impl Tree {
    fn new(m: usize, n: usize, basis: &[usize]) -> Self {
        let mut adj = vec![Vec::new(); m + n];
        for &cell in basis {
            let (i, j) = (cell / n, cell % n);
            adj[i].push(m + j);
            adj[m + j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        Self { m, n, adj }
    }

    fn cell(&self, a: usize, b: usize) -> usize {
        let (r, c) = if a < self.m { (a, b - self.m) } else { (b, a - self.m) };
        r * self.n + c
    }

    fn potentials(&self, cost: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.m + self.n];
        let mut queue = VecDeque::from([0usize]);
        pot[0] = 0.0;
        while let Some(a) = queue.pop_front() {
            for &b in &self.adj[a] {
                if pot[b].is_nan() {
                    let c = cost[self.cell(a, b)];
                    pot[b] = c - pot[a];
                    queue.push_back(b);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    /// Basis cells on the tree path from `from` to `to`, in walking order.
    fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut parent = vec![usize::MAX; self.m + self.n];
        parent[to] = to;
        let mut queue = VecDeque::from([to]);
        while let Some(a) = queue.pop_front() {
            if a == from {
                break;
            }
            for &b in &self.adj[a] {
                if parent[b] == usize::MAX {
                    parent[b] = a;
                    queue.push_back(b);
                }
            }
        }
        let mut cells = Vec::new();
        let mut a = from;
        while a != to {
            let b = parent[a];
            cells.push(self.cell(a, b));
            a = b;
        }
        cells
    }
}
