//! Finite metric graphs with a basepoint, distance oracles, and geodesic
//! queries.
//!
//! Graphs come from three builders: Cayley balls of model groups (which keep
//! their normal-form words and answer distance queries through the word
//! metric), small hand fixtures (paths, cycles), and edge-list files. BFS
//! rows are cached on demand; for group balls the word metric agrees with
//! the graph metric, which the tests check exhaustively on small fixtures.

use crate::error::{CoreError, Result};
use crate::word::{generate_ball, GroupSpec, WordStore};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

impl std::fmt::Debug for MetricGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricGraph")
            .field("n", &self.n)
            .field("basepoint", &self.basepoint)
            .field("max_degree", &self.max_degree)
            .field("ball_radius", &self.ball_radius)
            .finish_non_exhaustive()
    }
}

pub struct MetricGraph {
    n: u32,
    adj_off: Vec<u32>,
    adj: Vec<u32>,
    basepoint: u32,
    /// d(basepoint, v) for every v.
    levels: Vec<u32>,
    max_degree: u32,
    /// Radius of the generated ball, when the graph is a truncated Cayley ball.
    ball_radius: Option<u32>,
    words: Option<WordStore>,
    file_labels: Option<HashMap<u32, String>>,
    rows: RwLock<HashMap<u32, Arc<Vec<u32>>>>,
}

impl MetricGraph {
    fn from_edges(n: u32, basepoint: u32, mut edges: Vec<(u32, u32)>) -> Result<Self> {
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(CoreError::BadVertex(u.max(v), n));
            }
            if u == v {
                return Err(CoreError::BadSpec(format!("loop at vertex {u}")));
            }
        }
        if basepoint >= n {
            return Err(CoreError::BadVertex(basepoint, n));
        }
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let mut deg = vec![0u32; n as usize];
        for &(u, v) in &edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        let mut adj_off = vec![0u32; n as usize + 1];
        for i in 0..n as usize {
            adj_off[i + 1] = adj_off[i] + deg[i];
        }
        let mut adj = vec![0u32; adj_off[n as usize] as usize];
        let mut cursor = adj_off.clone();
        for &(u, v) in &edges {
            adj[cursor[u as usize] as usize] = v;
            cursor[u as usize] += 1;
            adj[cursor[v as usize] as usize] = u;
            cursor[v as usize] += 1;
        }
        for i in 0..n as usize {
            adj[adj_off[i] as usize..adj_off[i + 1] as usize].sort_unstable();
        }
        let max_degree = deg.iter().copied().max().unwrap_or(0);

        let mut g = MetricGraph {
            n,
            adj_off,
            adj,
            basepoint,
            levels: Vec::new(),
            max_degree,
            ball_radius: None,
            words: None,
            file_labels: None,
            rows: RwLock::new(HashMap::new()),
        };
        let levels = g.bfs_row(basepoint);
        if let Some(v) = levels.iter().position(|&d| d == u32::MAX) {
            return Err(CoreError::Disconnected(v as u32));
        }
        g.levels = levels;
        Ok(g)
    }

    /// Ball of the spec's radius in the Cayley graph of the model group,
    /// basepoint = identity, labels = reduced normal forms.
    pub fn group_ball(spec: &GroupSpec) -> Result<Self> {
        let (words, levels, edges) = generate_ball(spec);
        let n = words.len() as u32;
        let mut g = Self::from_edges(n, 0, edges)?;
        debug_assert_eq!(g.levels, levels);
        g.ball_radius = Some(spec.radius);
        g.words = Some(words);
        Ok(g)
    }

    /// Path on `n` vertices 0..n-1, basepoint 0.
    pub fn path(n: u32) -> Self {
        let edges = (0..n - 1).map(|i| (i, i + 1)).collect();
        Self::from_edges(n, 0, edges).expect("path is valid")
    }

    /// Cycle on `n` vertices, basepoint 0.
    pub fn cycle(n: u32) -> Self {
        let mut edges: Vec<(u32, u32)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        edges.push((n - 1, 0));
        Self::from_edges(n, 0, edges).expect("cycle is valid")
    }

    /// Parse the graph file format: first line `n m e0`, then `m` lines
    /// `u v`, with optional `# label v word` comment lines.
    pub fn from_graph_file(text: &str) -> Result<Self> {
        let mut labels: HashMap<u32, String> = HashMap::new();
        let mut header: Option<(u32, usize, u32)> = None;
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                if it.next() == Some("label") {
                    let v: u32 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or(CoreError::BadGraphFile { line: line_no, msg: "bad label vertex".into() })?;
                    let w = it
                        .next()
                        .ok_or(CoreError::BadGraphFile { line: line_no, msg: "missing label word".into() })?;
                    labels.insert(v, w.to_string());
                }
                continue;
            }
            let nums: Vec<&str> = line.split_whitespace().collect();
            if header.is_none() {
                if nums.len() != 3 {
                    return Err(CoreError::BadGraphFile { line: line_no, msg: "expected `n m e0`".into() });
                }
                let parse = |s: &str| -> Result<u32> {
                    s.parse().map_err(|_| CoreError::BadGraphFile { line: line_no, msg: format!("bad integer `{s}`") })
                };
                header = Some((parse(nums[0])?, parse(nums[1])? as usize, parse(nums[2])?));
            } else {
                if nums.len() != 2 {
                    return Err(CoreError::BadGraphFile { line: line_no, msg: "expected `u v`".into() });
                }
                let parse = |s: &str| -> Result<u32> {
                    s.parse().map_err(|_| CoreError::BadGraphFile { line: line_no, msg: format!("bad integer `{s}`") })
                };
                edges.push((parse(nums[0])?, parse(nums[1])?));
            }
        }
        let (n, m, e0) = header.ok_or(CoreError::BadGraphFile { line: 1, msg: "missing header".into() })?;
        if edges.len() != m {
            return Err(CoreError::BadGraphFile {
                line: text.lines().count(),
                msg: format!("expected {m} edges, found {}", edges.len()),
            });
        }
        let mut g = Self::from_edges(n, e0, edges)?;
        if !labels.is_empty() {
            g.file_labels = Some(labels);
        }
        Ok(g)
    }

    /// Serialize in the graph file format, including labels when present.
    pub fn to_graph_file(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let mut edges = Vec::new();
        for u in 0..self.n {
            for &v in self.neighbors(u) {
                if u < v {
                    edges.push((u, v));
                }
            }
        }
        let _ = writeln!(out, "{} {} {}", self.n, edges.len(), self.basepoint);
        for (u, v) in edges {
            let _ = writeln!(out, "{u} {v}");
        }
        for v in 0..self.n {
            if let Some(l) = self.label(v) {
                let _ = writeln!(out, "# label {v} {l}");
            }
        }
        out
    }

    pub fn vertex_count(&self) -> u32 {
        self.n
    }

    pub fn basepoint(&self) -> u32 {
        self.basepoint
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn ball_radius(&self) -> Option<u32> {
        self.ball_radius
    }

    pub fn words(&self) -> Option<&WordStore> {
        self.words.as_ref()
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[self.adj_off[v as usize] as usize..self.adj_off[v as usize + 1] as usize]
    }

    /// d(basepoint, v).
    pub fn level(&self, v: u32) -> u32 {
        self.levels[v as usize]
    }

    pub fn label(&self, v: u32) -> Option<String> {
        if let Some(ls) = &self.file_labels {
            return ls.get(&v).cloned();
        }
        self.words.as_ref().map(|w| w.label(v))
    }

    /// Vertex id by label, when labels exist.
    pub fn vertex_by_label(&self, want: &str) -> Option<u32> {
        (0..self.n).find(|&v| self.label(v).as_deref() == Some(want))
    }

    fn bfs_row(&self, src: u32) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n as usize];
        let mut queue = std::collections::VecDeque::new();
        dist[src as usize] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize];
            for &v in self.neighbors(u) {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = du + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Exact hop distances from `v` as a cached BFS row.
    pub fn distances_from(&self, v: u32) -> Result<Arc<Vec<u32>>> {
        if v >= self.n {
            return Err(CoreError::BadVertex(v, self.n));
        }
        if let Some(row) = self.rows.read().unwrap().get(&v) {
            return Ok(Arc::clone(row));
        }
        let row = Arc::new(self.bfs_row(v));
        let mut w = self.rows.write().unwrap();
        Ok(Arc::clone(w.entry(v).or_insert(row)))
    }

    /// Pairwise distance. Group balls answer through the word metric (equal
    /// to the graph metric on the ball); other graphs fill a BFS row.
    pub fn dist(&self, u: u32, v: u32) -> u32 {
        if u == v {
            return 0;
        }
        if u == self.basepoint {
            return self.levels[v as usize];
        }
        if v == self.basepoint {
            return self.levels[u as usize];
        }
        if let Some(ws) = &self.words {
            return ws.dist(u, v) as u32;
        }
        self.distances_from(u).expect("valid vertex")[v as usize]
    }

    /// True iff `v` lies on some geodesic from `y` to `z`.
    pub fn on_geodesic(&self, y: u32, v: u32, z: u32) -> bool {
        self.dist(y, v) + self.dist(v, z) == self.dist(y, z)
    }

    /// Closed ball around `x`: `(vertex, distance)` pairs with d ≤ k,
    /// ordered by (distance, id).
    pub fn ball_around(&self, x: u32, k: u32) -> Vec<(u32, u32)> {
        let mut dist: HashMap<u32, u32> = HashMap::new();
        let mut queue = std::collections::VecDeque::new();
        dist.insert(x, 0);
        queue.push_back(x);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            if du == k {
                continue;
            }
            for &v in self.neighbors(u) {
                dist.entry(v).or_insert_with(|| {
                    queue.push_back(v);
                    du + 1
                });
            }
        }
        let mut out: Vec<(u32, u32)> = dist.into_iter().collect();
        out.sort_unstable_by_key(|&(v, d)| (d, v));
        out
    }

    /// Safe evaluation radius: half the generated ball radius, where
    /// distances and geodesic sets agree with the infinite model group.
    pub fn safe_radius(&self) -> Option<u32> {
        self.ball_radius.map(|r| r / 2)
    }

    /// Vertices inside the safe ball (everything, for untruncated graphs).
    pub fn safe_vertices(&self) -> Vec<u32> {
        match self.safe_radius() {
            Some(s) => (0..self.n).filter(|&v| self.levels[v as usize] <= s).collect(),
            None => (0..self.n).collect(),
        }
    }

    /// Exact diameter for small graphs, otherwise the 2·safe-radius bound
    /// for generated balls.
    pub fn safe_diameter(&self) -> u32 {
        if let Some(s) = self.safe_radius() {
            return 2 * s;
        }
        let mut d = 0;
        for v in 0..self.n {
            let row = self.distances_from(v).unwrap();
            d = d.max(*row.iter().max().unwrap());
        }
        d
    }

    /// Union of all geodesics from `source` to the basepoint, as a DAG.
    pub fn geodesic_dag(&self, source: u32) -> GeodesicDag {
        self.geodesic_dag_to(source, self.basepoint)
    }

    /// Union of all geodesics from `source` to `sink`.
    pub fn geodesic_dag_to(&self, source: u32, sink: u32) -> GeodesicDag {
        // descend: v is on a geodesic iff d(source,v) + d(v,sink) = total,
        // discovered by expanding only neighbors one step closer to sink.
        let total = self.dist(source, sink);
        let sink_row = if self.words.is_none() && sink != self.basepoint {
            Some(self.distances_from(sink).expect("valid vertex"))
        } else {
            None
        };
        let sink_dist = |v: u32| -> u32 {
            if let Some(row) = &sink_row {
                row[v as usize]
            } else if sink == self.basepoint {
                self.levels[v as usize]
            } else {
                self.dist(v, sink)
            }
        };
        let mut nodes: HashMap<u32, DagNode> = HashMap::new();
        nodes.insert(source, DagNode { from_source: 0, parents: Vec::new() });
        let mut frontier = vec![source];
        let mut depth = 0u32;
        while !frontier.is_empty() {
            depth += 1;
            let mut next = Vec::new();
            for &u in &frontier {
                let du = sink_dist(u);
                if du == 0 {
                    continue;
                }
                for &v in self.neighbors(u) {
                    if sink_dist(v) + 1 == du {
                        let node = nodes.entry(v).or_insert_with(|| {
                            next.push(v);
                            DagNode { from_source: depth, parents: Vec::new() }
                        });
                        node.parents.push(u);
                    }
                }
            }
            frontier = next;
        }
        // parents currently point backward (toward source); flip so that
        // `parents[v]` lists successors one step closer to the sink.
        let mut flipped: HashMap<u32, DagNode> = nodes
            .iter()
            .map(|(&v, n)| (v, DagNode { from_source: n.from_source, parents: Vec::new() }))
            .collect();
        for (&v, n) in &nodes {
            for &back in &n.parents {
                flipped.get_mut(&back).unwrap().parents.push(v);
            }
        }
        for n in flipped.values_mut() {
            n.parents.sort_unstable();
            n.parents.dedup();
        }
        debug_assert_eq!(flipped[&sink].from_source, total);
        GeodesicDag { source, sink, total, nodes: flipped }
    }

    /// Deterministic geodesic between arbitrary endpoints: greedy walk
    /// choosing the smallest-id neighbor that decreases the distance.
    pub fn canonical_geodesic_between(&self, x: u32, y: u32) -> Vec<u32> {
        let row = if self.words.is_none() { Some(self.distances_from(y).expect("valid vertex")) } else { None };
        let to_y = |v: u32| match &row {
            Some(r) => r[v as usize],
            None => self.dist(v, y),
        };
        let mut path = vec![x];
        let mut cur = x;
        while cur != y {
            let dc = to_y(cur);
            let next = self
                .neighbors(cur)
                .iter()
                .copied()
                .find(|&v| to_y(v) + 1 == dc)
                .expect("connected graph");
            path.push(next);
            cur = next;
        }
        path
    }
}

struct DagNode {
    from_source: u32,
    parents: Vec<u32>,
}

/// Per-source shortest-path DAG toward a sink; `parents` of a vertex are its
/// successors one step closer to the sink.
pub struct GeodesicDag {
    pub source: u32,
    pub sink: u32,
    total: u32,
    nodes: HashMap<u32, DagNode>,
}

impl GeodesicDag {
    pub fn contains(&self, v: u32) -> bool {
        self.nodes.contains_key(&v)
    }

    pub fn parents(&self, v: u32) -> &[u32] {
        self.nodes.get(&v).map(|n| n.parents.as_slice()).unwrap_or(&[])
    }

    pub fn dist_from_source(&self, v: u32) -> Option<u32> {
        self.nodes.get(&v).map(|n| n.from_source)
    }

    pub fn len_total(&self) -> u32 {
        self.total
    }

    /// All DAG vertices sorted by (distance from source, id).
    pub fn vertices(&self) -> Vec<u32> {
        let mut vs: Vec<u32> = self.nodes.keys().copied().collect();
        vs.sort_unstable_by_key(|&v| (self.nodes[&v].from_source, v));
        vs
    }

    /// Number of maximal source→sink paths (saturating).
    pub fn path_count(&self) -> u64 {
        let mut memo: HashMap<u32, u64> = HashMap::new();
        self.count_from(self.source, &mut memo)
    }

    fn count_from(&self, v: u32, memo: &mut HashMap<u32, u64>) -> u64 {
        if v == self.sink {
            return 1;
        }
        if let Some(&c) = memo.get(&v) {
            return c;
        }
        let mut total = 0u64;
        for &p in self.parents(v) {
            total = total.saturating_add(self.count_from(p, memo));
        }
        memo.insert(v, total);
        total
    }

    /// The geodesic obtained by always stepping to the smallest-id parent.
    pub fn canonical_path(&self) -> Vec<u32> {
        self.extreme_path(false)
    }

    /// The geodesic obtained by always stepping to the largest-id parent.
    pub fn max_path(&self) -> Vec<u32> {
        self.extreme_path(true)
    }

    fn extreme_path(&self, take_max: bool) -> Vec<u32> {
        let mut path = vec![self.source];
        let mut cur = self.source;
        while cur != self.sink {
            let ps = self.parents(cur);
            cur = if take_max { *ps.last().unwrap() } else { ps[0] };
            path.push(cur);
        }
        path
    }

    /// Enumerate every maximal path (test oracle; small graphs only).
    pub fn all_paths(&self) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut stack = vec![self.source];
        self.walk(&mut stack, &mut out);
        out
    }

    fn walk(&self, stack: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        let cur = *stack.last().unwrap();
        if cur == self.sink {
            out.push(stack.clone());
            return;
        }
        for &p in self.parents(cur) {
            stack.push(p);
            self.walk(stack, out);
            stack.pop();
        }
    }
}
