//! Dinic max-flow on real-valued capacities.

use std::collections::VecDeque;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Arc {
    to: usize,
    cap: f64,
    rev: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct FlowNetwork {
    graph: Vec<Vec<Arc>>,
    level: Vec<i32>,
    next: Vec<usize>,
}

/// Handle to an arc, for reading its flow after a solve.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ArcId {
    from: usize,
    index: usize,
    capacity: f64,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            graph: vec![Vec::new(); nodes],
            level: vec![0; nodes],
            next: vec![0; nodes],
        }
    }

    pub fn add_arc(&mut self, from: usize, to: usize, cap: f64) -> ArcId {
        let (fwd, bwd) = (
            self.graph[from].len(),
            self.graph[to].len() + usize::from(from == to),
        );
        self.graph[from].push(Arc { to, cap, rev: bwd });
        self.graph[to].push(Arc {
            to: from,
            cap: 0.0,
            rev: fwd,
        });
        ArcId {
            from,
            index: fwd,
            capacity: cap,
        }
    }

    pub fn flow(&self, arc: ArcId) -> f64 {
        (arc.capacity - self.graph[arc.from][arc.index].cap).max(0.0)
    }

    fn bfs(&mut self, source: usize, sink: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for a in &self.graph[v] {
                if a.cap > EPS && self.level[a.to] < 0 {
                    self.level[a.to] = self.level[v] + 1;
                    queue.push_back(a.to);
                }
            }
        }
        self.level[sink] >= 0
    }

    fn dfs(&mut self, v: usize, sink: usize, pushed: f64) -> f64 {
        if v == sink {
            return pushed;
        }
        while self.next[v] < self.graph[v].len() {
            let a = self.graph[v][self.next[v]];
            if a.cap > EPS && self.level[a.to] == self.level[v] + 1 {
                let got = self.dfs(a.to, sink, pushed.min(a.cap));
                if got > 0.0 {
                    self.graph[v][self.next[v]].cap -= got;
                    self.graph[a.to][a.rev].cap += got;
                    return got;
                }
            }
            self.next[v] += 1;
        }
        0.0
    }

    pub fn max_flow(&mut self, source: usize, sink: usize) -> f64 {
        let mut total = 0.0;
        while self.bfs(source, sink) {
            self.next.iter_mut().for_each(|n| *n = 0);
            loop {
                let f = self.dfs(source, sink, f64::INFINITY);
                if f <= 0.0 {
                    break;
                }
                total += f;
            }
        }
        total
    }
}
