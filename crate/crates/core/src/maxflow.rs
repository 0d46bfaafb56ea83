//! Boykov–Kolmogorov augmenting-path max-flow on integer capacities.
//!
//! After `solve`, `source_side` returns the nodes reachable from the source in
//! the residual graph: the smallest source set among all minimum cuts.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;
const INF_DIST: u32 = u32::MAX;

/// Directed graph with paired arcs (`a ^ 1` is the reverse of `a`) and terminal capacities.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    first: Vec<u32>,
    tr_cap: Vec<i64>,
    head: Vec<u32>,
    next: Vec<u32>,
    r_cap: Vec<i64>,
    flow: i64,
    solved: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowStats {
    pub nodes: usize,
    pub arcs: usize,
    pub flow: i64,
}

impl Graph {
    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        let mut g = Self::default();
        g.first.reserve(nodes);
        g.tr_cap.reserve(nodes);
        g.head.reserve(2 * edges);
        g.next.reserve(2 * edges);
        g.r_cap.reserve(2 * edges);
        g
    }

    pub fn add_nodes(&mut self, n: usize) -> usize {
        let start = self.first.len();
        assert!(start + n < ORPHAN as usize, "too many nodes");
        self.first.resize(start + n, NONE);
        self.tr_cap.resize(start + n, 0);
        start
    }

    pub fn node_count(&self) -> usize {
        self.first.len()
    }

    /// Edge `i → j` with capacity `cap`, and `j → i` with capacity `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: i64, rev_cap: i64) {
        debug_assert!(i != j && cap >= 0 && rev_cap >= 0);
        let a = self.head.len() as u32;
        assert!((a as usize) + 2 < ORPHAN as usize, "too many arcs");
        self.head.push(j as u32);
        self.next.push(self.first[i]);
        self.r_cap.push(cap);
        self.first[i] = a;
        self.head.push(i as u32);
        self.next.push(self.first[j]);
        self.r_cap.push(rev_cap);
        self.first[j] = a + 1;
        self.solved = false;
    }

    /// Adds capacity from the source and to the sink of node `i`.
    ///
    /// Only the net terminal capacity is stored; the common part is direct
    /// source→sink flow and is added to the flow value immediately.
    pub fn add_terminal(&mut self, i: usize, source_cap: i64, sink_cap: i64) {
        debug_assert!(source_cap >= 0 && sink_cap >= 0);
        let delta = self.tr_cap[i];
        let (s, t) = if delta > 0 {
            (source_cap + delta, sink_cap)
        } else {
            (source_cap, sink_cap - delta)
        };
        self.flow += s.min(t);
        self.tr_cap[i] = s - t;
        self.solved = false;
    }

    pub fn stats(&self) -> FlowStats {
        FlowStats {
            nodes: self.first.len(),
            arcs: self.head.len(),
            flow: self.flow,
        }
    }

    /// Runs max-flow to completion and returns the flow value.
    pub fn solve(&mut self) -> i64 {
        Solver::new(self).run();
        self.solved = true;
        self.flow
    }

    /// Nodes on the source side of the canonical minimum cut.
    pub fn source_side(&self) -> Vec<bool> {
        assert!(self.solved, "source_side before solve");
        let n = self.first.len();
        let mut seen = vec![false; n];
        let mut queue: VecDeque<u32> = (0..n as u32).filter(|&i| self.tr_cap[i as usize] > 0).collect();
        for &i in &queue {
            seen[i as usize] = true;
        }
        while let Some(i) = queue.pop_front() {
            let mut a = self.first[i as usize];
            while a != NONE {
                let j = self.head[a as usize];
                if self.r_cap[a as usize] > 0 && !seen[j as usize] {
                    seen[j as usize] = true;
                    queue.push_back(j);
                }
                a = self.next[a as usize];
            }
        }
        seen
    }
}

struct Solver<'g> {
    g: &'g mut Graph,
    parent: Vec<u32>,
    is_sink: Vec<bool>,
    ts: Vec<u32>,
    dist: Vec<u32>,
    active: VecDeque<u32>,
    in_active: Vec<bool>,
    orphans: VecDeque<u32>,
    time: u32,
}

impl<'g> Solver<'g> {
    fn new(g: &'g mut Graph) -> Self {
        let n = g.first.len();
        Self {
            g,
            parent: vec![NONE; n],
            is_sink: vec![false; n],
            ts: vec![0; n],
            dist: vec![0; n],
            active: VecDeque::new(),
            in_active: vec![false; n],
            orphans: VecDeque::new(),
            time: 0,
        }
    }

    fn set_active(&mut self, i: u32) {
        if !self.in_active[i as usize] {
            self.in_active[i as usize] = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<u32> {
        while let Some(i) = self.active.pop_front() {
            self.in_active[i as usize] = false;
            if self.parent[i as usize] != NONE {
                return Some(i);
            }
        }
        None
    }

    fn run(&mut self) {
        for i in 0..self.g.first.len() {
            let c = self.g.tr_cap[i];
            if c != 0 {
                self.is_sink[i] = c < 0;
                self.parent[i] = TERMINAL;
                self.dist[i] = 1;
                self.set_active(i as u32);
            }
        }
        let mut current: Option<u32> = None;
        loop {
            let i = match current.filter(|&i| self.parent[i as usize] != NONE) {
                Some(i) => i,
                None => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };
            let bridge = self.grow(i);
            self.time = self.time.wrapping_add(1);
            match bridge {
                Some(a) => {
                    current = Some(i);
                    self.augment(a);
                    while let Some(o) = self.orphans.pop_front() {
                        if self.is_sink[o as usize] {
                            self.adopt_sink(o);
                        } else {
                            self.adopt_source(o);
                        }
                    }
                }
                None => current = None,
            }
        }
    }

    /// Grows the tree containing `i`; returns a source→sink arc when the trees touch.
    fn grow(&mut self, i: u32) -> Option<u32> {
        let iu = i as usize;
        let sink_tree = self.is_sink[iu];
        let mut a = self.g.first[iu];
        while a != NONE {
            let au = a as usize;
            let cap = if sink_tree {
                self.g.r_cap[au ^ 1]
            } else {
                self.g.r_cap[au]
            };
            if cap > 0 {
                let j = self.g.head[au];
                let ju = j as usize;
                if self.parent[ju] == NONE {
                    self.is_sink[ju] = sink_tree;
                    self.parent[ju] = a ^ 1;
                    self.ts[ju] = self.ts[iu];
                    self.dist[ju] = self.dist[iu] + 1;
                    self.set_active(j);
                } else if self.is_sink[ju] != sink_tree {
                    return Some(if sink_tree { a ^ 1 } else { a });
                } else if self.ts[ju] <= self.ts[iu] && self.dist[ju] > self.dist[iu] {
                    self.parent[ju] = a ^ 1;
                    self.ts[ju] = self.ts[iu];
                    self.dist[ju] = self.dist[iu] + 1;
                }
            }
            a = self.g.next[au];
        }
        None
    }

    fn orphan(&mut self, i: u32) {
        self.parent[i as usize] = ORPHAN;
        self.orphans.push_front(i);
    }

    /// Pushes the bottleneck along source-tree path, arc `mid`, sink-tree path.
    fn augment(&mut self, mid: u32) {
        let g = &mut *self.g;
        let mid_u = mid as usize;
        let mut b = g.r_cap[mid_u];
        let mut i = g.head[mid_u ^ 1];
        loop {
            let a = self.parent[i as usize];
            if a == TERMINAL {
                break;
            }
            b = b.min(g.r_cap[a as usize ^ 1]);
            i = g.head[a as usize];
        }
        b = b.min(g.tr_cap[i as usize]);
        let mut i = g.head[mid_u];
        loop {
            let a = self.parent[i as usize];
            if a == TERMINAL {
                break;
            }
            b = b.min(g.r_cap[a as usize]);
            i = g.head[a as usize];
        }
        b = b.min(-g.tr_cap[i as usize]);

        g.r_cap[mid_u ^ 1] += b;
        g.r_cap[mid_u] -= b;
        let mut new_orphans = Vec::new();
        let mut i = g.head[mid_u ^ 1];
        loop {
            let a = self.parent[i as usize];
            if a == TERMINAL {
                break;
            }
            let au = a as usize;
            g.r_cap[au] += b;
            g.r_cap[au ^ 1] -= b;
            if g.r_cap[au ^ 1] == 0 {
                new_orphans.push(i);
            }
            i = g.head[au];
        }
        g.tr_cap[i as usize] -= b;
        if g.tr_cap[i as usize] == 0 {
            new_orphans.push(i);
        }
        let mut i = g.head[mid_u];
        loop {
            let a = self.parent[i as usize];
            if a == TERMINAL {
                break;
            }
            let au = a as usize;
            g.r_cap[au ^ 1] += b;
            g.r_cap[au] -= b;
            if g.r_cap[au] == 0 {
                new_orphans.push(i);
            }
            i = g.head[au];
        }
        g.tr_cap[i as usize] += b;
        if g.tr_cap[i as usize] == 0 {
            new_orphans.push(i);
        }
        g.flow += b;
        for o in new_orphans {
            self.orphan(o);
        }
    }

    /// Distance from `j` to its terminal through valid parents, or `INF_DIST`.
    fn origin_dist(&mut self, start: u32) -> u32 {
        let mut j = start;
        let mut d: u32 = 0;
        loop {
            let ju = j as usize;
            if self.ts[ju] == self.time {
                d += self.dist[ju];
                break;
            }
            let a = self.parent[ju];
            d += 1;
            if a == TERMINAL {
                self.ts[ju] = self.time;
                self.dist[ju] = 1;
                break;
            }
            if a == ORPHAN || a == NONE {
                return INF_DIST;
            }
            j = self.g.head[a as usize];
        }
        // mark the path for later queries in this round
        let mut j = start;
        let mut dd = d;
        while self.ts[j as usize] != self.time {
            self.ts[j as usize] = self.time;
            self.dist[j as usize] = dd;
            dd -= 1;
            j = self.g.head[self.parent[j as usize] as usize];
        }
        d
    }

    fn adopt(&mut self, i: u32, sink_tree: bool) {
        let iu = i as usize;
        let mut best = NONE;
        let mut best_d = INF_DIST;
        let mut a = self.g.first[iu];
        while a != NONE {
            let au = a as usize;
            // the arc from candidate parent j into i must have residual capacity
            let cap = if sink_tree {
                self.g.r_cap[au]
            } else {
                self.g.r_cap[au ^ 1]
            };
            if cap > 0 {
                let j = self.g.head[au];
                if self.is_sink[j as usize] == sink_tree && self.parent[j as usize] != NONE {
                    let d = self.origin_dist(j);
                    if d < best_d {
                        best_d = d;
                        best = a;
                    }
                }
            }
            a = self.g.next[au];
        }
        self.parent[iu] = best;
        if best != NONE {
            self.ts[iu] = self.time;
            self.dist[iu] = best_d + 1;
            return;
        }
        let mut a = self.g.first[iu];
        while a != NONE {
            let au = a as usize;
            let j = self.g.head[au];
            let ju = j as usize;
            let pj = self.parent[ju];
            if self.is_sink[ju] == sink_tree && pj != NONE {
                let cap = if sink_tree {
                    self.g.r_cap[au]
                } else {
                    self.g.r_cap[au ^ 1]
                };
                if cap > 0 {
                    self.set_active(j);
                }
                if pj != TERMINAL && pj != ORPHAN && self.g.head[pj as usize] == i {
                    self.parent[ju] = ORPHAN;
                    self.orphans.push_back(j);
                }
            }
            a = self.g.next[au];
        }
    }

    fn adopt_source(&mut self, i: u32) {
        self.adopt(i, false);
    }

    fn adopt_sink(&mut self, i: u32) {
        self.adopt(i, true);
    }
}
