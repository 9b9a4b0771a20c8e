//! Boykov-Kolmogorov max-flow: two search trees grown from the terminals,
//! augmentation along the joining path, then orphan adoption.

use std::collections::VecDeque;

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Parent {
    Free,
    Terminal,
    Orphan,
    /// Arc from the node towards its parent.
    Arc(usize),
}

#[derive(Clone, Debug)]
struct Arc {
    head: usize,
    next: usize,
    sister: usize,
    residual: f64,
}

#[derive(Clone, Debug)]
struct Node {
    first: usize,
    parent: Parent,
    in_sink_tree: bool,
    /// Positive: residual from the source; negative: residual to the sink.
    terminal: f64,
    active: bool,
}

#[derive(Clone, Debug)]
pub struct MaxFlow {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: f64,
    active: VecDeque<usize>,
    orphans: VecDeque<usize>,
}

impl MaxFlow {
    pub fn new(n: usize) -> Self {
        Self {
            nodes: vec![
                Node {
                    first: NONE,
                    parent: Parent::Free,
                    in_sink_tree: false,
                    terminal: 0.0,
                    active: false,
                };
                n
            ],
            arcs: Vec::new(),
            flow: 0.0,
            active: VecDeque::new(),
            orphans: VecDeque::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Adds capacities source -> `i` and `i` -> sink.
    pub fn add_terminal(&mut self, i: usize, source: f64, sink: f64) {
        let node = &mut self.nodes[i];
        let prev = node.terminal;
        // Keep only the difference; the common part is flow already routed.
        let (s, t) = if prev > 0.0 { (source + prev, sink) } else { (source, sink - prev) };
        self.flow += s.min(t);
        node.terminal = s - t;
    }

    /// Adds arc `i -> j` with capacity `cap` and `j -> i` with `rev`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev: f64) {
        assert!(i != j, "self-loop");
        let a = self.arcs.len();
        self.arcs.push(Arc {
            head: j,
            next: self.nodes[i].first,
            sister: a + 1,
            residual: cap,
        });
        self.arcs.push(Arc {
            head: i,
            next: self.nodes[j].first,
            sister: a,
            residual: rev,
        });
        self.nodes[i].first = a;
        self.nodes[j].first = a + 1;
    }

    fn push_active(&mut self, i: usize) {
        if !self.nodes[i].active {
            self.nodes[i].active = true;
            self.active.push_back(i);
        }
    }

    fn arcs_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let mut a = self.nodes[i].first;
        std::iter::from_fn(move || {
            if a == NONE {
                None
            } else {
                let cur = a;
                a = self.arcs[a].next;
                Some(cur)
            }
        })
    }

    /// Runs to completion and returns the maximum flow value.
    pub fn solve(&mut self) -> f64 {
        for i in 0..self.nodes.len() {
            let t = self.nodes[i].terminal;
            if t != 0.0 {
                self.nodes[i].parent = Parent::Terminal;
                self.nodes[i].in_sink_tree = t < 0.0;
                self.push_active(i);
            }
        }
        while let Some(i) = self.active.pop_front() {
            self.nodes[i].active = false;
            if self.nodes[i].parent == Parent::Free {
                continue;
            }
            if let Some(middle) = self.grow(i) {
                self.augment(middle);
                self.adopt_orphans();
                // Revisit: the node may still have unexplored paths.
                if self.nodes[i].parent != Parent::Free && !self.nodes[i].active {
                    self.nodes[i].active = true;
                    self.active.push_front(i);
                }
            }
        }
        self.flow
    }

    /// Expands the tree at `i`; returns the source-to-sink arc joining the
    /// trees if one is found.
    fn grow(&mut self, i: usize) -> Option<usize> {
        let sink_side = self.nodes[i].in_sink_tree;
        let arcs: Vec<usize> = self.arcs_of(i).collect();
        for a in arcs {
            let sister = self.arcs[a].sister;
            let (toward, j) = if sink_side {
                (self.arcs[sister].residual, self.arcs[a].head)
            } else {
                (self.arcs[a].residual, self.arcs[a].head)
            };
            if toward <= 0.0 {
                continue;
            }
            match self.nodes[j].parent {
                Parent::Free => {
                    self.nodes[j].in_sink_tree = sink_side;
                    self.nodes[j].parent = Parent::Arc(sister);
                    self.push_active(j);
                }
                Parent::Orphan => {}
                _ if self.nodes[j].in_sink_tree != sink_side => {
                    return Some(if sink_side { sister } else { a });
                }
                _ => {}
            }
        }
        None
    }

    fn augment(&mut self, middle: usize) {
        let tail = self.arcs[self.arcs[middle].sister].head;
        let head = self.arcs[middle].head;
        let mut bottleneck = self.arcs[middle].residual;
        let mut i = tail;
        while let Parent::Arc(a) = self.nodes[i].parent {
            bottleneck = bottleneck.min(self.arcs[self.arcs[a].sister].residual);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(self.nodes[i].terminal);
        let mut i = head;
        while let Parent::Arc(a) = self.nodes[i].parent {
            bottleneck = bottleneck.min(self.arcs[a].residual);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i].terminal);

        let sister = self.arcs[middle].sister;
        self.arcs[sister].residual += bottleneck;
        self.arcs[middle].residual -= bottleneck;

        let mut i = tail;
        while let Parent::Arc(a) = self.nodes[i].parent {
            let s = self.arcs[a].sister;
            self.arcs[a].residual += bottleneck;
            self.arcs[s].residual -= bottleneck;
            let next = self.arcs[a].head;
            if self.arcs[s].residual <= 0.0 {
                self.make_orphan(i);
            }
            i = next;
        }
        self.nodes[i].terminal -= bottleneck;
        if self.nodes[i].terminal <= 0.0 {
            self.nodes[i].terminal = self.nodes[i].terminal.max(0.0);
            self.make_orphan(i);
        }

        let mut i = head;
        while let Parent::Arc(a) = self.nodes[i].parent {
            let s = self.arcs[a].sister;
            self.arcs[s].residual += bottleneck;
            self.arcs[a].residual -= bottleneck;
            let next = self.arcs[a].head;
            if self.arcs[a].residual <= 0.0 {
                self.make_orphan(i);
            }
            i = next;
        }
        self.nodes[i].terminal += bottleneck;
        if self.nodes[i].terminal >= 0.0 {
            self.nodes[i].terminal = self.nodes[i].terminal.min(0.0);
            self.make_orphan(i);
        }
        self.flow += bottleneck;
    }

    fn make_orphan(&mut self, i: usize) {
        self.nodes[i].parent = Parent::Orphan;
        self.orphans.push_front(i);
    }

    /// Whether the tree path from `j` reaches a terminal without meeting an orphan.
    fn rooted(&self, mut j: usize) -> bool {
        loop {
            match self.nodes[j].parent {
                Parent::Terminal => return true,
                Parent::Arc(a) => j = self.arcs[a].head,
                Parent::Free | Parent::Orphan => return false,
            }
        }
    }

    fn adopt_orphans(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            let sink_side = self.nodes[i].in_sink_tree;
            let arcs: Vec<usize> = self.arcs_of(i).collect();
            let mut adopted = None;
            for &a in &arcs {
                let cap = if sink_side {
                    self.arcs[a].residual
                } else {
                    self.arcs[self.arcs[a].sister].residual
                };
                let j = self.arcs[a].head;
                if cap > 0.0 && self.nodes[j].in_sink_tree == sink_side && self.rooted(j) {
                    adopted = Some(a);
                    break;
                }
            }
            if let Some(a) = adopted {
                self.nodes[i].parent = Parent::Arc(a);
                continue;
            }
            self.nodes[i].parent = Parent::Free;
            for &a in &arcs {
                let j = self.arcs[a].head;
                if self.nodes[j].in_sink_tree != sink_side || self.nodes[j].parent == Parent::Free {
                    continue;
                }
                let cap = if sink_side {
                    self.arcs[a].residual
                } else {
                    self.arcs[self.arcs[a].sister].residual
                };
                if cap > 0.0 {
                    self.push_active(j);
                }
                if let Parent::Arc(pa) = self.nodes[j].parent {
                    if self.arcs[pa].head == i {
                        self.make_orphan_back(j);
                    }
                }
            }
        }
    }

    fn make_orphan_back(&mut self, j: usize) {
        self.nodes[j].parent = Parent::Orphan;
        self.orphans.push_back(j);
    }

    /// True when node `i` ends on the sink side of the minimum cut.
    pub fn sink_side(&self, i: usize) -> bool {
        let n = &self.nodes[i];
        n.parent == Parent::Free || n.in_sink_tree
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_network() {
        // s->0 (10), s->1 (10), 0->1 (2), 0->2 (4), 0->3 (8), 1->3 (9), 3->2 (6), 2->t (10), 3->t (10)
        let mut g = MaxFlow::new(4);
        g.add_terminal(0, 10.0, 0.0);
        g.add_terminal(1, 10.0, 0.0);
        g.add_terminal(2, 0.0, 10.0);
        g.add_terminal(3, 0.0, 10.0);
        g.add_edge(0, 1, 2.0, 0.0);
        g.add_edge(0, 2, 4.0, 0.0);
        g.add_edge(0, 3, 8.0, 0.0);
        g.add_edge(1, 3, 9.0, 0.0);
        g.add_edge(3, 2, 6.0, 0.0);
        assert_eq!(g.solve(), 19.0);
    }

    #[test]
    fn both_terminals_on_one_node() {
        let mut g = MaxFlow::new(1);
        g.add_terminal(0, 3.0, 5.0);
        assert_eq!(g.solve(), 3.0);
        assert!(g.sink_side(0));
    }
}
