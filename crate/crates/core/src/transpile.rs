//! Mapping logical circuits onto device coupling graphs.
//!
//! The router is a SABRE-style lookahead SWAP heuristic run from several
//! randomized initial placements; the best result by (depth, CNOT count) is
//! kept. Built-in topologies ship as versioned edge-list data files.

use crate::circuit::{gen_family, sub_rng, Circuit, Family, Gate};
use crate::error::{Error, Result};
use crate::hhl::build_hhl;
use rand::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Undirected device connectivity graph with optional error annotations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingMap {
    pub name: String,
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub er: Option<f64>,
}

impl CouplingMap {
    pub fn all_to_all(n: usize) -> Self {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                edges.push((a, b));
            }
        }
        CouplingMap {
            name: format!("all_to_all({n})"),
            n,
            edges,
            e1: None,
            e2: None,
            er: None,
        }
    }

    pub fn line(n: usize) -> Self {
        CouplingMap {
            name: format!("line({n})"),
            n,
            edges: (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            e1: None,
            e2: None,
            er: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            name: String,
            n: usize,
            edges: Vec<(usize, usize)>,
            #[serde(default)]
            e1: Option<f64>,
            #[serde(default)]
            e2: Option<f64>,
            #[serde(default)]
            er: Option<f64>,
        }
        let f: File = serde_json::from_str(text)
            .map_err(|e| Error::Topology(format!("bad topology file: {e}")))?;
        let map = CouplingMap {
            name: f.name,
            n: f.n,
            edges: f.edges,
            e1: f.e1,
            e2: f.e2,
            er: f.er,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Topology("empty graph".into()));
        }
        for &(a, b) in &self.edges {
            if a == b {
                return Err(Error::Topology(format!("self-loop at {a}")));
            }
            if a >= self.n || b >= self.n {
                return Err(Error::Topology(format!(
                    "edge ({a},{b}) outside 0..{}",
                    self.n
                )));
            }
        }
        // connectivity by BFS
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        if count != self.n {
            return Err(Error::Topology(format!(
                "graph disconnected: reached {count} of {} nodes",
                self.n
            )));
        }
        Ok(())
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        adj
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b)) || self.edges.contains(&(b, a))
    }

    /// All-pairs shortest-path distances by BFS.
    pub fn distances(&self) -> Vec<Vec<u32>> {
        let adj = self.adjacency();
        (0..self.n)
            .map(|s| {
                let mut d = vec![u32::MAX; self.n];
                d[s] = 0;
                let mut q = VecDeque::from([s]);
                while let Some(v) = q.pop_front() {
                    for &w in &adj[v] {
                        if d[w] == u32::MAX {
                            d[w] = d[v] + 1;
                            q.push_back(w);
                        }
                    }
                }
                d
            })
            .collect()
    }
}

/// Load a built-in topology or a custom edge-list file.
///
/// Built-ins: `all_to_all(n)`, `line(n)`, `melbourne15`, `johannesburg20`,
/// `rochester53`, `sycamore53`. Anything else is treated as a path to a
/// topology JSON file.
pub fn load_topology(name: &str) -> Result<CouplingMap> {
    let parse_param = |s: &str, prefix: &str| -> Option<usize> {
        s.strip_prefix(prefix)?
            .strip_suffix(')')?
            .parse::<usize>()
            .ok()
    };
    if let Some(n) = parse_param(name, "all_to_all(") {
        return Ok(CouplingMap::all_to_all(n));
    }
    if let Some(n) = parse_param(name, "line(") {
        return Ok(CouplingMap::line(n));
    }
    match name {
        "melbourne15" => CouplingMap::from_json(include_str!("../data/melbourne15.json")),
        "johannesburg20" => CouplingMap::from_json(include_str!("../data/johannesburg20.json")),
        "rochester53" => CouplingMap::from_json(include_str!("../data/rochester53.json")),
        "sycamore53" => CouplingMap::from_json(include_str!("../data/sycamore53.json")),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Topology(format!("unknown topology `{path}`: {e}")))?;
            CouplingMap::from_json(&text)
        }
    }
}

/// Routing result: the physical circuit plus bookkeeping for equivalence
/// checks (initial/final logical-to-physical layouts).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranspileReport {
    pub routed: Circuit,
    pub depth: usize,
    pub cnot_count: usize,
    pub sq_count: usize,
    pub restarts_used: usize,
    pub seed: u64,
    pub initial_layout: Vec<usize>,
    pub final_layout: Vec<usize>,
}

struct SabrePass<'a> {
    dist: &'a [Vec<u32>],
    adj: &'a [Vec<usize>],
}

const LOOKAHEAD: usize = 20;
const LOOKAHEAD_WEIGHT: f64 = 0.5;

impl<'a> SabrePass<'a> {
    /// Route one layout. `layout[q]` is the physical qubit carrying logical q.
    ///
    /// Dependencies are tracked incrementally: a gate becomes ready when it is
    /// the head of every per-qubit gate chain it touches, so each scheduling
    /// step costs O(front + lookahead) instead of a full gate-list scan.
    fn run(
        &self,
        circuit: &Circuit,
        n_phys: usize,
        mut layout: Vec<usize>,
    ) -> (Circuit, Vec<usize>) {
        use std::collections::BTreeSet;
        let gates = &circuit.gates;
        let mut per_qubit: Vec<Vec<usize>> = vec![Vec::new(); circuit.n_qubits];
        for (i, g) in gates.iter().enumerate() {
            for q in g.qubits() {
                per_qubit[q].push(i);
            }
        }
        let mut head: Vec<usize> = vec![0; circuit.n_qubits];
        let is_ready = |head: &[usize], per_qubit: &[Vec<usize>], i: usize| -> bool {
            gates[i]
                .qubits()
                .iter()
                .all(|&q| per_qubit[q].get(head[q]) == Some(&i))
        };
        // ready set, ascending gate index for determinism
        let mut ready: BTreeSet<usize> = BTreeSet::new();
        for q in 0..circuit.n_qubits {
            if let Some(&i) = per_qubit[q].first() {
                if is_ready(&head, &per_qubit, i) {
                    ready.insert(i);
                }
            }
        }
        // undone CNOT indices in program order, for the lookahead window
        let mut pending_cnots: std::collections::VecDeque<usize> = gates
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_cnot())
            .map(|(i, _)| i)
            .collect();
        let mut done = vec![false; gates.len()];
        let mut n_done = 0usize;
        let mut out = Circuit::new(n_phys);
        out.tags = circuit.tags.clone();
        let mut inv = vec![usize::MAX; n_phys];
        for (q, &p) in layout.iter().enumerate() {
            inv[p] = q;
        }

        let mut last_swap: Option<(usize, usize)> = None;
        let mut stall = 0usize;
        while n_done < gates.len() {
            // execute every ready gate that fits the topology
            loop {
                let exec: Option<usize> = ready
                    .iter()
                    .copied()
                    .find(|&i| match &gates[i] {
                        Gate::SQ { .. } => true,
                        Gate::CNOT { control, target } => {
                            self.dist[layout[*control]][layout[*target]] == 1
                        }
                    });
                let Some(i) = exec else { break };
                ready.remove(&i);
                match &gates[i] {
                    Gate::SQ { target, .. } => {
                        out.push(Gate::sq(layout[*target], &gates[i].matrix().unwrap()))
                    }
                    Gate::CNOT { control, target } => {
                        out.push(Gate::cnot(layout[*control], layout[*target]))
                    }
                }
                done[i] = true;
                n_done += 1;
                stall = 0;
                last_swap = None;
                for q in gates[i].qubits() {
                    head[q] += 1;
                    if let Some(&next) = per_qubit[q].get(head[q]) {
                        if is_ready(&head, &per_qubit, next) {
                            ready.insert(next);
                        }
                    }
                }
            }
            if n_done == gates.len() {
                break;
            }
            // everything left in the ready set is a blocked CNOT: the front
            let front: Vec<(usize, usize)> = ready
                .iter()
                .map(|&i| {
                    let q = gates[i].qubits();
                    (q[0], q[1])
                })
                .collect();
            debug_assert!(!front.is_empty());
            while pending_cnots.front().is_some_and(|&i| done[i]) {
                pending_cnots.pop_front();
            }
            let ext: Vec<(usize, usize)> = pending_cnots
                .iter()
                .filter(|&&i| !done[i])
                .take(LOOKAHEAD)
                .map(|&i| {
                    let q = gates[i].qubits();
                    (q[0], q[1])
                })
                .collect();

            let score = |layout: &[usize]| -> f64 {
                let f: u32 = front
                    .iter()
                    .map(|&(c, t)| self.dist[layout[c]][layout[t]])
                    .sum();
                let e: u32 = ext
                    .iter()
                    .map(|&(c, t)| self.dist[layout[c]][layout[t]])
                    .sum();
                f as f64 / front.len() as f64
                    + LOOKAHEAD_WEIGHT * e as f64 / ext.len().max(1) as f64
            };

            // candidate swaps touch a physical qubit of a front gate
            let mut phys_of_front: Vec<usize> = front
                .iter()
                .flat_map(|&(c, t)| [layout[c], layout[t]])
                .collect();
            phys_of_front.sort_unstable();
            phys_of_front.dedup();
            let mut best: Option<((usize, usize), f64)> = None;
            for &p in &phys_of_front {
                for &nb in &self.adj[p] {
                    let edge = (p.min(nb), p.max(nb));
                    if last_swap == Some(edge) {
                        continue;
                    }
                    // score with the two physical slots exchanged
                    let mut trial = layout.clone();
                    if inv[edge.0] != usize::MAX {
                        trial[inv[edge.0]] = edge.1;
                    }
                    if inv[edge.1] != usize::MAX {
                        trial[inv[edge.1]] = edge.0;
                    }
                    let s = score(&trial);
                    let better = match &best {
                        None => true,
                        Some((be, bs)) => s < bs - 1e-12 || (s < bs + 1e-12 && edge < *be),
                    };
                    if better {
                        best = Some((edge, s));
                    }
                }
            }
            let (edge, _) = best.expect("front gate must have adjacent edges");
            // anti-livelock: after too many swaps without progress, drag the
            // first front gate together along a shortest path
            stall += 1;
            let edge = if stall > 2 * n_phys {
                let (c, t) = front[0];
                let (pc, pt) = (layout[c], layout[t]);
                let step = self.adj[pc]
                    .iter()
                    .copied()
                    .min_by_key(|&nb| (self.dist[nb][pt], nb))
                    .unwrap();
                (pc.min(step), pc.max(step))
            } else {
                edge
            };
            // emit SWAP = 3 CNOTs on the physical pair
            out.push(Gate::cnot(edge.0, edge.1));
            out.push(Gate::cnot(edge.1, edge.0));
            out.push(Gate::cnot(edge.0, edge.1));
            let (l0, l1) = (inv[edge.0], inv[edge.1]);
            if l0 != usize::MAX {
                layout[l0] = edge.1;
            }
            if l1 != usize::MAX {
                layout[l1] = edge.0;
            }
            inv.swap(edge.0, edge.1);
            last_swap = Some(edge);
        }
        (out, layout)
    }
}

/// Route a circuit onto a coupling map: randomized initial placements, a
/// lookahead SWAP pass each, minimum depth wins (ties by CNOT count, then
/// restart index). Deterministic for a fixed seed.
pub fn route(
    circuit: &Circuit,
    map: &CouplingMap,
    restarts: usize,
    seed: u64,
) -> Result<TranspileReport> {
    if circuit.n_qubits > map.n {
        return Err(Error::WidthExceeded {
            width: circuit.n_qubits,
            limit: map.n,
            context: "route: circuit wider than device",
        });
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be >= 1".into()));
    }
    map.validate()?;
    circuit.validate()?;
    let dist = map.distances();
    let adj = map.adjacency();
    let pass = SabrePass {
        dist: &dist,
        adj: &adj,
    };
    let results: Vec<(usize, usize, Circuit, Vec<usize>, Vec<usize>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let layout: Vec<usize> = if r == 0 {
                (0..circuit.n_qubits).collect()
            } else {
                let mut rng = sub_rng(seed, 0x5ab3_0000 ^ r as u64);
                let mut phys: Vec<usize> = (0..map.n).collect();
                phys.shuffle(&mut rng);
                phys.truncate(circuit.n_qubits);
                phys
            };
            let initial = layout.clone();
            let (routed, final_layout) = pass.run(circuit, map.n, layout);
            (routed.depth(), routed.cnot_count(), routed, initial, final_layout)
        })
        .collect();
    let (best_idx, _) = results
        .iter()
        .enumerate()
        .min_by_key(|(i, (d, c, ..))| (*d, *c, *i))
        .unwrap();
    let (depth, cnot_count, routed, initial_layout, final_layout) = results
        .into_iter()
        .nth(best_idx)
        .unwrap();
    let sq_count = routed.sq_count();
    Ok(TranspileReport {
        routed,
        depth,
        cnot_count,
        sq_count,
        restarts_used: restarts,
        seed,
        initial_layout,
        final_layout,
    })
}

/// One row of the depth-versus-width study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyRow {
    pub family: Family,
    pub width: usize,
    pub instances: usize,
    pub mean_depth: f64,
    pub stderr_depth: f64,
    pub mean_cnots: f64,
    pub stderr_cnots: f64,
    pub mean_sq: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Transpile `n_instances` random hybrid HHL circuits per (family, width)
/// and tabulate mean depth and CNOT count. `width` is the total circuit
/// width (vector + 2 phase + ancilla); family/width pairs too narrow for the
/// family are skipped.
pub fn depth_study(
    families: &[Family],
    widths: &[usize],
    map: &CouplingMap,
    n_instances: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    for &family in families {
        for &width in widths {
            if width < family.min_vector_qubits() + 3 {
                continue;
            }
            let n_vec = width - 3;
            if width > map.n {
                continue;
            }
            let stats: Vec<(f64, f64, f64)> = (0..n_instances)
                .into_par_iter()
                .map(|i| {
                    let inst_seed = sub_rng(seed, (family as u64) << 32 | (width as u64) << 16)
                        .gen::<u64>()
                        .wrapping_add(i as u64);
                    let (circ, spec) = gen_family(family, n_vec, inst_seed)?;
                    let (hhl, _) = build_hhl(&circ, &spec, 3, true)?;
                    let report = route(&hhl, map, restarts, inst_seed)?;
                    Ok((
                        report.depth as f64,
                        report.cnot_count as f64,
                        report.sq_count as f64,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let depths: Vec<f64> = stats.iter().map(|s| s.0).collect();
            let cnots: Vec<f64> = stats.iter().map(|s| s.1).collect();
            let sqs: Vec<f64> = stats.iter().map(|s| s.2).collect();
            let (mean_depth, stderr_depth) = mean_stderr(&depths);
            let (mean_cnots, stderr_cnots) = mean_stderr(&cnots);
            let (mean_sq, _) = mean_stderr(&sqs);
            rows.push(StudyRow {
                family,
                width,
                instances: n_instances,
                mean_depth,
                stderr_depth,
                mean_cnots,
                stderr_cnots,
                mean_sq,
            });
        }
    }
    Ok(rows)
}

/// Check that every two-qubit gate of a circuit lands on a map edge.
pub fn respects_map(circuit: &Circuit, map: &CouplingMap) -> bool {
    circuit.gates.iter().all(|g| match g {
        Gate::CNOT { control, target } => map.has_edge(*control, *target),
        Gate::SQ { .. } => true,
    })
}
