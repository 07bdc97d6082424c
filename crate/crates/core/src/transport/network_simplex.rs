//! Primal network simplex for dense bipartite transportation problems with
//! integer supplies and real costs.
//!
//! The spanning tree is kept strongly feasible (Cunningham's leaving-arc rule),
//! which rules out cycling on degenerate pivots. Entering arcs are chosen by
//! block search over the implicit `rows x cols` arc set. Arcs are uncapacitated,
//! so only backward arcs on the pivot cycle can block.

use super::CostMatrix;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Optimal transport cost `sum_ij flow_ij * cost_ij` for integer marginals.
///
/// `supply` and `demand` must have equal totals. The returned value is the
/// unnormalized cost; divide by the total mass for probability marginals.
pub fn min_cost_flow(cost: &CostMatrix, supply: &[u64], demand: &[u64]) -> Result<f64> {
    if supply.len() != cost.rows() || demand.len() != cost.cols() {
        return Err(Error::input("marginal lengths do not match the cost matrix"));
    }
    let total_supply: u64 = supply.iter().sum();
    let total_demand: u64 = demand.iter().sum();
    if total_supply != total_demand {
        return Err(Error::input(format!(
            "unbalanced marginals: supply {total_supply} vs demand {total_demand}"
        )));
    }
    if total_supply == 0 {
        return Ok(0.0);
    }
    let mut solver = Solver::new(cost, supply, demand);
    solver.run()?;
    Ok(solver.objective())
}

struct Solver<'a> {
    cost: &'a CostMatrix,
    rows: usize,
    cols: usize,
    root: usize,
    big: f64,
    eps: f64,
    // Arc k < rows*cols is (k / cols) -> rows + (k % cols); arc rows*cols + v is
    // the artificial arc between node v and the root.
    flow: Vec<i64>,
    in_tree: Vec<bool>,
    art_to_root: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    depth: Vec<u32>,
    potential: Vec<f64>,
    first_child: Vec<usize>,
    next_sibling: Vec<usize>,
    prev_sibling: Vec<usize>,
    next_arc: usize,
    block: usize,
    stack: Vec<usize>,
}

impl<'a> Solver<'a> {
    fn new(cost: &'a CostMatrix, supply: &[u64], demand: &[u64]) -> Self {
        let rows = cost.rows();
        let cols = cost.cols();
        let nodes = rows + cols + 1;
        let root = rows + cols;
        let arcs = rows * cols + rows + cols;
        let max_cost = cost.entries().iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
        let big = 1.0 + (rows + cols) as f64 * max_cost.max(1.0);

        let mut s = Solver {
            cost,
            rows,
            cols,
            root,
            big,
            eps: 1e-11 * max_cost.max(1e-300),
            flow: vec![0; arcs],
            in_tree: vec![false; arcs],
            art_to_root: vec![false; rows + cols],
            parent: vec![NONE; nodes],
            pred: vec![NONE; nodes],
            depth: vec![0; nodes],
            potential: vec![0.0; nodes],
            first_child: vec![NONE; nodes],
            next_sibling: vec![NONE; nodes],
            prev_sibling: vec![NONE; nodes],
            next_arc: 0,
            block: ((rows * cols) as f64).sqrt().ceil().max(16.0) as usize,
            stack: Vec::new(),
        };

        // Initial tree: every node hangs off the root through its artificial arc,
        // oriented so that zero-flow arcs point away from the root.
        for v in 0..rows + cols {
            let arc = rows * cols + v;
            let (amount, to_root) = if v < rows {
                (supply[v], supply[v] > 0)
            } else {
                (demand[v - rows], false)
            };
            s.art_to_root[v] = to_root;
            s.flow[arc] = amount as i64;
            s.in_tree[arc] = true;
            s.parent[v] = root;
            s.pred[v] = arc;
            s.depth[v] = 1;
            s.potential[v] = if to_root { -big } else { big };
            s.attach(v, root);
        }
        s
    }

    fn endpoints(&self, arc: usize) -> (usize, usize) {
        let real = self.rows * self.cols;
        if arc < real {
            (arc / self.cols, self.rows + arc % self.cols)
        } else {
            let v = arc - real;
            if self.art_to_root[v] {
                (v, self.root)
            } else {
                (self.root, v)
            }
        }
    }

    fn arc_cost(&self, arc: usize) -> f64 {
        if arc < self.rows * self.cols {
            self.cost.entries()[arc]
        } else {
            self.big
        }
    }

    fn attach(&mut self, child: usize, parent: usize) {
        let head = self.first_child[parent];
        self.next_sibling[child] = head;
        self.prev_sibling[child] = NONE;
        if head != NONE {
            self.prev_sibling[head] = child;
        }
        self.first_child[parent] = child;
    }

    fn detach(&mut self, child: usize) {
        let parent = self.parent[child];
        let prev = self.prev_sibling[child];
        let next = self.next_sibling[child];
        if prev != NONE {
            self.next_sibling[prev] = next;
        } else {
            self.first_child[parent] = next;
        }
        if next != NONE {
            self.prev_sibling[next] = prev;
        }
        self.prev_sibling[child] = NONE;
        self.next_sibling[child] = NONE;
    }

    /// Block search for an arc with negative reduced cost.
    fn find_entering(&mut self) -> Option<usize> {
        let total = self.rows * self.cols;
        let entries = self.cost.entries();
        let mut best = NONE;
        let mut best_rc = -self.eps;
        let mut scanned_in_block = 0;
        let mut arc = self.next_arc;
        for _ in 0..total {
            if !self.in_tree[arc] {
                let i = arc / self.cols;
                let j = self.rows + arc % self.cols;
                let rc = entries[arc] + self.potential[i] - self.potential[j];
                if rc < best_rc {
                    best_rc = rc;
                    best = arc;
                }
            }
            arc += 1;
            if arc == total {
                arc = 0;
            }
            scanned_in_block += 1;
            if scanned_in_block == self.block {
                if best != NONE {
                    self.next_arc = arc;
                    return Some(best);
                }
                scanned_in_block = 0;
            }
        }
        self.next_arc = arc;
        (best != NONE).then_some(best)
    }

    fn run(&mut self) -> Result<()> {
        // Each pivot either strictly decreases the objective or is degenerate;
        // strong feasibility bounds the degenerate runs, this is a safety net.
        let max_pivots = 50 * (self.rows * self.cols + self.rows + self.cols) + 10_000;
        let mut pivots = 0usize;
        while let Some(entering) = self.find_entering() {
            self.pivot(entering);
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Internal("network simplex exceeded its pivot budget".into()));
            }
        }
        let real = self.rows * self.cols;
        if self.flow[real..].iter().any(|&f| f != 0) {
            return Err(Error::Internal("artificial arcs carry flow at optimum".into()));
        }
        Ok(())
    }

    fn pivot(&mut self, entering: usize) {
        let (u, w) = self.endpoints(entering);

        let mut a = u;
        let mut b = w;
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        let join = a;

        // Backward arcs on the cycle limit the push. Ties go to the last
        // blocking arc met when walking join -> u -> w -> join.
        let mut delta = i64::MAX;
        let mut out = NONE;
        let mut x = u;
        while x != join {
            let arc = self.pred[x];
            if self.endpoints(arc).0 == x && self.flow[arc] < delta {
                delta = self.flow[arc];
                out = x;
            }
            x = self.parent[x];
        }
        let mut out_on_w_side = false;
        let mut x = w;
        while x != join {
            let arc = self.pred[x];
            if self.endpoints(arc).0 != x && self.flow[arc] <= delta {
                delta = self.flow[arc];
                out = x;
                out_on_w_side = true;
            }
            x = self.parent[x];
        }
        debug_assert!(out != NONE, "uncapacitated cycle must contain a backward arc");

        if delta > 0 {
            let mut x = u;
            while x != join {
                let arc = self.pred[x];
                if self.endpoints(arc).0 == x {
                    self.flow[arc] -= delta;
                } else {
                    self.flow[arc] += delta;
                }
                x = self.parent[x];
            }
            let mut x = w;
            while x != join {
                let arc = self.pred[x];
                if self.endpoints(arc).0 == x {
                    self.flow[arc] += delta;
                } else {
                    self.flow[arc] -= delta;
                }
                x = self.parent[x];
            }
        }
        self.flow[entering] = delta;

        let leaving = self.pred[out];
        self.in_tree[leaving] = false;
        self.in_tree[entering] = true;

        let (inside, outside) = if out_on_w_side { (w, u) } else { (u, w) };
        self.rehang(inside, outside, entering, out);
        self.refresh_subtree(inside);
    }

    /// Detach the subtree rooted at `out` and re-root it at `inside`, which
    /// becomes a child of `outside` through the entering arc.
    fn rehang(&mut self, inside: usize, outside: usize, entering: usize, out: usize) {
        let mut child = inside;
        let mut new_parent = outside;
        let mut new_pred = entering;
        loop {
            let old_parent = self.parent[child];
            let old_pred = self.pred[child];
            self.detach(child);
            self.parent[child] = new_parent;
            self.pred[child] = new_pred;
            self.attach(child, new_parent);
            if child == out {
                break;
            }
            new_parent = child;
            new_pred = old_pred;
            child = old_parent;
        }
    }

    fn refresh_subtree(&mut self, top: usize) {
        let mut stack = std::mem::take(&mut self.stack);
        stack.clear();
        stack.push(top);
        while let Some(v) = stack.pop() {
            let p = self.parent[v];
            let arc = self.pred[v];
            let c = self.arc_cost(arc);
            self.depth[v] = self.depth[p] + 1;
            self.potential[v] = if self.endpoints(arc).0 == v {
                self.potential[p] - c
            } else {
                self.potential[p] + c
            };
            let mut ch = self.first_child[v];
            while ch != NONE {
                stack.push(ch);
                ch = self.next_sibling[ch];
            }
        }
        self.stack = stack;
    }

    fn objective(&self) -> f64 {
        let real = self.rows * self.cols;
        (0..self.rows + self.cols)
            .map(|v| self.pred[v])
            .filter(|&arc| arc < real && self.flow[arc] != 0)
            .map(|arc| self.flow[arc] as f64 * self.cost.entries()[arc])
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let c = CostMatrix::new(1, 1, vec![3.5]).unwrap();
        assert_eq!(min_cost_flow(&c, &[4], &[4]).unwrap(), 14.0);
    }

    #[test]
    fn prefers_anti_diagonal() {
        let c = CostMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(min_cost_flow(&c, &[1, 1], &[1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn unequal_sizes() {
        // Two sources of 3 units, three sinks of 2 units, cost |i - j| on a line.
        let rows = [0.0_f64, 1.0];
        let cols = [0.0, 0.5, 1.0];
        let entries = rows
            .iter()
            .flat_map(|r| cols.iter().map(move |c| (r - c).abs()))
            .collect();
        let c = CostMatrix::new(2, 3, entries).unwrap();
        // Source 0 sends 2 to col 0 and 1 to col 1, source 1 the rest: 0.5 + 0.5 = 1.
        let v = min_cost_flow(&c, &[3, 3], &[2, 2, 2]).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn rejects_unbalanced() {
        let c = CostMatrix::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert!(min_cost_flow(&c, &[2], &[1, 2]).is_err());
    }

    #[test]
    fn degenerate_all_zero_costs() {
        let c = CostMatrix::new(4, 4, vec![0.0; 16]).unwrap();
        assert_eq!(min_cost_flow(&c, &[1; 4], &[1; 4]).unwrap(), 0.0);
    }
}
