//! Earth mover's distance by primal network simplex.
//!
//! The transport graph is complete bipartite (every source to every sink),
//! so arcs are implicit: only the spanning-tree basis is stored. An extra
//! root node joined to every node by a high-cost artificial arc gives a
//! strongly feasible starting basis; Cunningham's leaving-arc rule keeps it
//! strongly feasible, which rules out cycling on degenerate pivots.
//!
//! Because the ground distance is a metric, mass present in both
//! histograms at the same cell can stay put at zero cost; cancelling it
//! first leaves every cell a pure source or a pure sink.

use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::scalar::Real;

/// Relative tolerance on reduced costs.
const PRICING_TOLERANCE: f64 = 1e-14;

/// EMD between two fields after area-downsampling to `grid` (capped at the
/// source size) and normalizing each to unit mass. Ground distance is
/// Euclidean in coarse-cell units. A field with no mass is treated as
/// uniform.
pub fn emd<T: Real>(sal: &Field2D<T>, fdm: &Field2D<T>, grid: (usize, usize)) -> Result<f64> {
    sal.ensure_same_dims(fdm)?;
    if grid.0 == 0 || grid.1 == 0 {
        return Err(Error::param("EMD grid must be non-empty"));
    }
    let a = distribution(&sal.downsample_area(grid.0, grid.1));
    let b = distribution(&fdm.downsample_area(grid.0, grid.1));
    let width = sal.width().min(grid.0);
    emd_on_grid(&a, &b, width)
}

fn distribution<T: Real>(f: &Field2D<T>) -> Vec<f64> {
    let v: Vec<f64> = f.values().iter().map(|x| x.to_f64_lossy().max(0.0)).collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

/// EMD between two histograms laid out row-major on a grid `width` cells
/// wide. Both must be non-negative with equal (positive) totals.
pub fn emd_on_grid(a: &[f64], b: &[f64], width: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "histogram",
            left: a.len(),
            right: b.len(),
        });
    }
    if width == 0 || !a.len().is_multiple_of(width) {
        return Err(Error::param(format!("{} cells do not tile rows of {width}", a.len())));
    }
    if a.iter().chain(b).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param("histogram masses must be finite and non-negative"));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut sources = Vec::new();
    let mut sinks = Vec::new();
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        if x > y {
            sources.push((i, x - y));
        } else if y > x {
            sinks.push((i, y - x));
        }
    }
    if sources.is_empty() || sinks.is_empty() {
        return Err(Error::Empty("histogram has no mass"));
    }
    let cell = |i: usize| ((i % width) as f64, (i / width) as f64);
    let mut cost = Vec::with_capacity(sources.len() * sinks.len());
    let mut max_cost = 0.0f64;
    for &(i, _) in &sources {
        let (sx, sy) = cell(i);
        for &(j, _) in &sinks {
            let (tx, ty) = cell(j);
            let c = ((sx - tx).powi(2) + (sy - ty).powi(2)).sqrt();
            max_cost = max_cost.max(c);
            cost.push(c);
        }
    }
    let supply: Vec<f64> = sources.iter().map(|&(_, m)| m).collect();
    let demand: Vec<f64> = sinks.iter().map(|&(_, m)| m).collect();
    Transport::new(&supply, &demand, cost, max_cost).solve()
}

/// Direction of a tree arc relative to its child node.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Dir {
    /// child → parent
    Up,
    /// parent → child
    Down,
}

struct Transport {
    ns: usize,
    nd: usize,
    /// Row-major source × sink ground distances.
    cost: Vec<f64>,
    art_cost: f64,
    /// Basic arcs and their flows.
    basis: Vec<(usize, f64)>,
    /// Per node: indices into `basis`.
    adjacent: Vec<Vec<usize>>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    dir: Vec<Dir>,
    depth: Vec<usize>,
    potential: Vec<f64>,
    next_arc: usize,
}

impl Transport {
    fn new(supply: &[f64], demand: &[f64], cost: Vec<f64>, max_cost: f64) -> Self {
        let (ns, nd) = (supply.len(), demand.len());
        let n = ns + nd + 1;
        let mut t = Self {
            ns,
            nd,
            cost,
            art_cost: (max_cost + 1.0) * n as f64,
            basis: Vec::with_capacity(n - 1),
            adjacent: vec![Vec::new(); n],
            parent: vec![usize::MAX; n],
            pred: vec![usize::MAX; n],
            dir: vec![Dir::Up; n],
            depth: vec![0; n],
            potential: vec![0.0; n],
            next_arc: 0,
        };
        // every starting arc carries positive flow, so the basis is
        // trivially strongly feasible
        for (s, &m) in supply.iter().enumerate() {
            t.push_basic(t.artificial_source_arc(s), m);
        }
        for (d, &m) in demand.iter().enumerate() {
            t.push_basic(t.artificial_sink_arc(d), m);
        }
        t.rebuild();
        t
    }

    fn root(&self) -> usize {
        self.ns + self.nd
    }

    fn num_real_arcs(&self) -> usize {
        self.ns * self.nd
    }

    fn num_arcs(&self) -> usize {
        self.num_real_arcs() + self.ns + self.nd
    }

    fn artificial_source_arc(&self, s: usize) -> usize {
        self.num_real_arcs() + s
    }

    fn artificial_sink_arc(&self, d: usize) -> usize {
        self.num_real_arcs() + self.ns + d
    }

    /// `(tail, head)` node ids of an arc.
    fn ends(&self, arc: usize) -> (usize, usize) {
        let real = self.num_real_arcs();
        if arc < real {
            (arc / self.nd, self.ns + arc % self.nd)
        } else if arc < real + self.ns {
            (arc - real, self.root())
        } else {
            (self.root(), self.ns + (arc - real - self.ns))
        }
    }

    fn arc_cost(&self, arc: usize) -> f64 {
        if arc < self.num_real_arcs() {
            self.cost[arc]
        } else {
            self.art_cost
        }
    }

    fn push_basic(&mut self, arc: usize, flow: f64) {
        let (u, v) = self.ends(arc);
        let k = self.basis.len();
        self.basis.push((arc, flow));
        self.adjacent[u].push(k);
        self.adjacent[v].push(k);
    }

    /// Recomputes parents, depths and potentials from the basis.
    fn rebuild(&mut self) {
        let root = self.root();
        self.parent[root] = usize::MAX;
        self.depth[root] = 0;
        self.potential[root] = 0.0;
        let mut stack = vec![root];
        let mut seen = vec![false; self.parent.len()];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            for idx in 0..self.adjacent[u].len() {
                let k = self.adjacent[u][idx];
                let (arc, _) = self.basis[k];
                let (tail, head) = self.ends(arc);
                let (v, dir) = if tail == u { (head, Dir::Down) } else { (tail, Dir::Up) };
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                self.parent[v] = u;
                self.pred[v] = k;
                self.dir[v] = dir;
                self.depth[v] = self.depth[u] + 1;
                // tree arcs have zero reduced cost: c + π(tail) − π(head) = 0
                let c = self.arc_cost(arc);
                self.potential[v] = match dir {
                    Dir::Down => self.potential[u] + c,
                    Dir::Up => self.potential[u] - c,
                };
                stack.push(v);
            }
        }
    }

    fn reduced_cost(&self, arc: usize) -> f64 {
        let (u, v) = self.ends(arc);
        self.arc_cost(arc) + self.potential[u] - self.potential[v]
    }

    /// Block search pricing: scans blocks of about √m arcs from where the
    /// previous search stopped, returning the most negative arc of the
    /// first block that has one.
    fn find_entering(&mut self, in_basis: &[bool]) -> Option<usize> {
        let m = self.num_arcs();
        let real = self.num_real_arcs();
        let block = ((m as f64).sqrt().ceil() as usize).max(10);
        let tol = PRICING_TOLERANCE * self.art_cost;
        let mut best: Option<(usize, f64)> = None;
        let mut arc = self.next_arc;
        // source / sink of `arc` while it is a real arc
        let (mut s, mut d) = (arc / self.nd, arc % self.nd);
        let mut in_block = 0;
        for _ in 0..m {
            if !in_basis[arc] {
                let rc = if arc < real {
                    self.cost[arc] + self.potential[s] - self.potential[self.ns + d]
                } else {
                    self.reduced_cost(arc)
                };
                if rc < -tol && best.is_none_or(|(_, b)| rc < b) {
                    best = Some((arc, rc));
                }
            }
            arc += 1;
            d += 1;
            if d == self.nd {
                d = 0;
                s += 1;
            }
            if arc == m {
                (arc, s, d) = (0, 0, 0);
            }
            in_block += 1;
            if in_block == block {
                if let Some((found, _)) = best {
                    self.next_arc = arc;
                    return Some(found);
                }
                in_block = 0;
            }
        }
        best.map(|(found, _)| {
            self.next_arc = (found + 1) % m;
            found
        })
    }

    fn join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] > self.depth[v] {
                u = self.parent[u];
            } else if self.depth[v] > self.depth[u] {
                v = self.parent[v];
            } else {
                u = self.parent[u];
                v = self.parent[v];
            }
        }
        u
    }

    fn solve(mut self) -> Result<f64> {
        let mut in_basis = vec![false; self.num_arcs()];
        for &(arc, _) in &self.basis {
            in_basis[arc] = true;
        }
        let limit = 1000 * (self.ns + self.nd + 1) + 10_000;
        let mut pivots = 0;
        let mut stack = Vec::new();
        while let Some(entering) = self.find_entering(&in_basis) {
            pivots += 1;
            if pivots > limit {
                return Err(Error::SolverDiverged(pivots));
            }
            let (first, second) = self.ends(entering);
            let join = self.join(first, second);

            // Flow is pushed first → second along the entering arc and back
            // to first through the tree. Arcs losing flow bound the step;
            // `<` on the first side and `<=` on the second pick the last
            // blocking arc met when walking the cycle from the join in
            // flow direction.
            let mut delta = f64::INFINITY;
            let mut leaving_node = usize::MAX;
            let mut leaving_on_first = true;
            let mut u = first;
            while u != join {
                if self.dir[u] == Dir::Up {
                    let f = self.basis[self.pred[u]].1;
                    if f < delta {
                        delta = f;
                        leaving_node = u;
                    }
                }
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                if self.dir[u] == Dir::Down {
                    let f = self.basis[self.pred[u]].1;
                    if f <= delta {
                        delta = f;
                        leaving_node = u;
                        leaving_on_first = false;
                    }
                }
                u = self.parent[u];
            }
            if leaving_node == usize::MAX {
                // cannot happen: the graph is acyclic and costs are bounded
                return Err(Error::SolverDiverged(pivots));
            }

            if delta > 0.0 {
                let mut u = first;
                while u != join {
                    let k = self.pred[u];
                    match self.dir[u] {
                        Dir::Up => self.basis[k].1 -= delta,
                        Dir::Down => self.basis[k].1 += delta,
                    }
                    u = self.parent[u];
                }
                let mut u = second;
                while u != join {
                    let k = self.pred[u];
                    match self.dir[u] {
                        Dir::Up => self.basis[k].1 += delta,
                        Dir::Down => self.basis[k].1 -= delta,
                    }
                    u = self.parent[u];
                }
            }

            // the leaving arc's slot is reused for the entering arc
            let slot = self.pred[leaving_node];
            let (old_arc, _) = self.basis[slot];
            let (ou, ov) = self.ends(old_arc);
            self.adjacent[ou].retain(|&x| x != slot);
            self.adjacent[ov].retain(|&x| x != slot);
            in_basis[old_arc] = false;
            self.basis[slot] = (entering, delta);
            self.adjacent[first].push(slot);
            self.adjacent[second].push(slot);
            in_basis[entering] = true;

            // The subtree below the leaving arc is re-hung from the entering
            // arc: reverse the parent chain from the entering endpoint up to
            // the old subtree root.
            let (sub_root, new_parent, entering_dir) = if leaving_on_first {
                (first, second, Dir::Up)
            } else {
                (second, first, Dir::Down)
            };
            let (mut child, mut up, mut pred, mut dir) = (sub_root, new_parent, slot, entering_dir);
            loop {
                let (old_parent, old_pred, old_dir) = (self.parent[child], self.pred[child], self.dir[child]);
                self.parent[child] = up;
                self.pred[child] = pred;
                self.dir[child] = dir;
                if child == leaving_node {
                    break;
                }
                up = child;
                pred = old_pred;
                dir = match old_dir {
                    Dir::Up => Dir::Down,
                    Dir::Down => Dir::Up,
                };
                child = old_parent;
            }
            self.refresh_subtree(sub_root, &mut stack);
        }
        let real = self.num_real_arcs();
        Ok(self
            .basis
            .iter()
            .filter(|&&(arc, _)| arc < real)
            .map(|&(arc, f)| f * self.cost[arc])
            .sum())
    }

    /// Recomputes depth and potential for `top` and everything below it.
    fn refresh_subtree(&mut self, top: usize, stack: &mut Vec<usize>) {
        self.set_from_parent(top);
        stack.clear();
        stack.push(top);
        while let Some(u) = stack.pop() {
            for idx in 0..self.adjacent[u].len() {
                let (arc, _) = self.basis[self.adjacent[u][idx]];
                let (tail, head) = self.ends(arc);
                let v = if tail == u { head } else { tail };
                if v == self.parent[u] {
                    continue;
                }
                self.set_from_parent(v);
                stack.push(v);
            }
        }
    }

    fn set_from_parent(&mut self, v: usize) {
        let u = self.parent[v];
        let c = self.arc_cost(self.basis[self.pred[v]].0);
        self.depth[v] = self.depth[u] + 1;
        self.potential[v] = match self.dir[v] {
            Dir::Down => self.potential[u] + c,
            Dir::Up => self.potential[u] - c,
        };
    }
}
