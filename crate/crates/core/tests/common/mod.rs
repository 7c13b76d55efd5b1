#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pepflow::convert::convert_to_event_based;
use pepflow::engine::Mode;
use pepflow::ingest;
use pepflow::mdp::{compile, compose, ComposeOptions, ComposedMdp, MdpModule};
use pepflow::model::{Diagram, FlowNode, MessageFlow, NodeKind, Pool, ProcessModel, SequenceFlow};

pub fn samples_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples")
}

pub fn load_sample(name: &str) -> ProcessModel {
    let text = std::fs::read_to_string(samples_dir().join(name)).expect("sample exists");
    ingest::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// The event-based form of any valid model.
pub fn event_based(model: &ProcessModel) -> ProcessModel {
    if model.message_flows.is_empty() && model.pools.is_empty() {
        model.clone()
    } else {
        convert_to_event_based(model).expect("converts").0
    }
}

pub fn build(model: &ProcessModel) -> ComposedMdp {
    let program = compile(model).expect("compiles");
    compose(&program, &ComposeOptions::default()).expect("composes")
}

// ---------------------------------------------------------------------------
// Random pool-based models

#[derive(Clone, Copy, Debug)]
enum Block {
    Task,
    ProbChoice,
    FreeChoice,
    Retry,
    Spin,
    Parallel,
}

/// Parameters of [`random_pool_model`].
#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub max_diagrams: usize,
    pub max_nodes: usize,
    pub max_message_flows: usize,
    /// Chance of adding a structural duplicate of one diagram.
    pub duplicate_chance: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_diagrams: 3,
            max_nodes: 10,
            max_message_flows: 3,
            duplicate_chance: 0.3,
        }
    }
}

fn random_diagram(id: &str, max_nodes: usize, rng: &mut ChaCha8Rng) -> Diagram {
    let mut b = Builder::new(id, max_nodes);
    let start = b.node(NodeKind::StartEvent);
    let mut tail = start;
    let mut pending: Option<f64> = None;
    loop {
        let choices: &[(Block, usize, u32)] = &[
            (Block::Task, 1, 4),
            (Block::ProbChoice, 4, 2),
            (Block::FreeChoice, 4, 1),
            (Block::Retry, 2, 2),
            (Block::Spin, 2, 1),
            (Block::Parallel, 4, 2),
        ];
        // keep one node for the end event
        let room = b.budget.saturating_sub(b.d.nodes.len() + 1);
        let fitting: Vec<&(Block, usize, u32)> = choices.iter().filter(|c| c.1 <= room).collect();
        if fitting.is_empty() || (b.d.nodes.len() > 1 && rng.gen_bool(0.25)) {
            break;
        }
        let &&(block, _, _) = fitting
            .choose_weighted(rng, |c| c.2)
            .expect("weights are positive");
        let (new_tail, exit) = b.block(block, &tail, pending.take(), rng);
        tail = new_tail;
        pending = exit;
    }
    let end = b.node(NodeKind::EndEvent);
    b.flow(&tail, &end, pending);
    b.d.role = ["Engineer", "Manager", "Tester"][rng.gen_range(0..3)].to_string();
    b.d.level = rng.gen_range(1..=3);
    b.d
}

struct Builder {
    d: Diagram,
    next: usize,
    budget: usize,
}

impl Builder {
    fn new(id: &str, budget: usize) -> Self {
        Builder {
            d: Diagram::new(id, format!("process {id}"), 1, ""),
            next: 0,
            budget,
        }
    }

    fn node(&mut self, kind: NodeKind) -> String {
        let id = format!("{}_n{}", self.d.id, self.next);
        let name = format!("{} {}", kind.as_str(), self.next);
        self.next += 1;
        self.d.nodes.push(FlowNode::new(&id, name, kind));
        id
    }

    fn flow(&mut self, from: &str, to: &str, p: Option<f64>) {
        let id = format!("{}_f{}", self.d.id, self.d.flows.len());
        let mut f = SequenceFlow::new(id, from, to);
        f.probability = p;
        self.d.flows.push(f);
    }

    /// Appends `block` after `tail`, whose pending outgoing flow carries
    /// `enter`. Returns the new tail and the probability its exit must carry.
    fn block(&mut self, block: Block, tail: &str, enter: Option<f64>, rng: &mut ChaCha8Rng) -> (String, Option<f64>) {
        let entry = |b: &mut Self, to: &str| b.flow(tail, to, enter);
        match block {
            Block::Task => {
                let t = self.node(NodeKind::Task);
                entry(self, &t);
                (t, None)
            }
            Block::ProbChoice | Block::FreeChoice => {
                let split = self.node(NodeKind::ExclusiveGateway);
                let a = self.node(NodeKind::Task);
                let c = self.node(NodeKind::Task);
                let merge = self.node(NodeKind::ExclusiveGateway);
                entry(self, &split);
                let (pa, pc) = match block {
                    Block::ProbChoice => {
                        let p = rng.gen_range(1..10) as f64 / 10.0;
                        (Some(p), Some(1.0 - p))
                    }
                    _ => (None, None),
                };
                self.flow(&split, &a, pa);
                self.flow(&split, &c, pc);
                self.flow(&a, &merge, None);
                self.flow(&c, &merge, None);
                (merge, None)
            }
            Block::Retry | Block::Spin => {
                let t = self.node(NodeKind::Task);
                let g = self.node(NodeKind::ExclusiveGateway);
                entry(self, &t);
                self.flow(&t, &g, None);
                let back = match block {
                    Block::Retry => Some(rng.gen_range(1..10) as f64 / 10.0),
                    _ => None,
                };
                self.flow(&g, &t, back);
                (g, back.map(|p| 1.0 - p))
            }
            Block::Parallel => {
                let fork = self.node(NodeKind::ParallelGateway);
                let a = self.node(NodeKind::Task);
                let c = self.node(NodeKind::Task);
                let join = self.node(NodeKind::ParallelGateway);
                entry(self, &fork);
                self.flow(&fork, &a, None);
                self.flow(&fork, &c, None);
                self.flow(&a, &join, None);
                self.flow(&c, &join, None);
                (join, None)
            }
        }
    }
}

/// A copy of `d` with fresh ids but the same names, role and structure.
pub fn structural_copy(d: &Diagram, new_id: &str) -> Diagram {
    let rename = |id: &str| format!("{new_id}{}", &id[d.id.len()..]);
    let mut c = d.clone();
    c.id = new_id.to_string();
    for n in &mut c.nodes {
        n.id = rename(&n.id);
    }
    for f in &mut c.flows {
        f.id = rename(&f.id);
        f.source = rename(&f.source);
        f.target = rename(&f.target);
    }
    c
}

/// A random valid pool-based model: up to `max_diagrams` structured diagrams
/// (one pool each, sometimes two sharing a pool), message flows between tasks
/// or from end events / to start events of different pools, and sometimes a
/// structural duplicate of a diagram in a pool of its own. Duplicates take
/// part in no message flows.
pub fn random_pool_model(seed: u64, cfg: &GenConfig) -> ProcessModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(1..=cfg.max_diagrams);
    let mut model = ProcessModel::default();
    for i in 0..count {
        model.diagrams.push(random_diagram(&format!("D{i}"), cfg.max_nodes, &mut rng));
    }
    for d in &model.diagrams {
        model.pools.push(Pool {
            id: format!("pool_{}", d.id),
            name: format!("pool of {}", d.id),
            diagram_ids: vec![d.id.clone()],
        });
    }
    if count >= 3 && rng.gen_bool(0.2) {
        let moved = model.pools.remove(1).diagram_ids;
        model.pools[0].diagram_ids.extend(moved);
    }
    let pool_of: HashMap<String, usize> = model
        .pools
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| p.diagram_ids.iter().map(move |d| (d.clone(), pi)))
        .collect();

    let mut used: BTreeSet<(String, String)> = BTreeSet::new();
    let mut end_sources: BTreeSet<String> = BTreeSet::new();
    let flows = if count > 1 { rng.gen_range(0..=cfg.max_message_flows) } else { 0 };
    for k in 0..flows {
        let a = rng.gen_range(0..count);
        let b = rng.gen_range(0..count);
        if pool_of[&model.diagrams[a].id] == pool_of[&model.diagrams[b].id] {
            continue;
        }
        let (da, db) = (&model.diagrams[a], &model.diagrams[b]);
        let sources: Vec<&FlowNode> = da
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Task || (n.kind == NodeKind::EndEvent && !end_sources.contains(&n.id)))
            .collect();
        let targets: Vec<&FlowNode> = db
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Task | NodeKind::StartEvent))
            .collect();
        let (Some(s), Some(t)) = (sources.choose(&mut rng), targets.choose(&mut rng)) else { continue };
        if !used.insert((s.id.clone(), t.id.clone())) {
            continue;
        }
        if s.kind == NodeKind::EndEvent {
            end_sources.insert(s.id.clone());
        }
        model
            .message_flows
            .push(MessageFlow::new(format!("mf{k}"), s.id.clone(), t.id.clone()));
    }

    if rng.gen_bool(cfg.duplicate_chance) {
        let touched: BTreeSet<&str> = model
            .message_flows
            .iter()
            .flat_map(|m| [m.source.as_str(), m.target.as_str()])
            .filter_map(|n| model.locate(n).map(|(d, _)| d.id.as_str()))
            .collect();
        let free: Vec<usize> = (0..count).filter(|&i| !touched.contains(model.diagrams[i].id.as_str())).collect();
        if let Some(&i) = free.choose(&mut rng) {
            let mut copy = structural_copy(&model.diagrams[i], &format!("C{i}"));
            copy.level = rng.gen_range(1..=3);
            model.pools.push(Pool {
                id: format!("pool_{}", copy.id),
                name: format!("pool of {}", copy.id),
                diagram_ids: vec![copy.id.clone()],
            });
            model.diagrams.push(copy);
        }
    }
    model
}

// ---------------------------------------------------------------------------
// Oracles

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Exact reachability probabilities of the Markov chain induced by `policy`
/// (`None` for states without choices).
fn evaluate(mdp: &ComposedMdp, policy: &[Option<usize>], target: &[bool], pinned_zero: &[bool]) -> Vec<f64> {
    let n = mdp.num_states();
    // states that reach the target in the chain
    let mut reaches = target.to_vec();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if reaches[s] || pinned_zero[s] {
                continue;
            }
            if let Some(c) = policy[s] {
                if mdp.branches(c).any(|(t, _)| reaches[t]) {
                    reaches[s] = true;
                    changed = true;
                }
            }
        }
    }
    let unknown: Vec<usize> = (0..n).filter(|&s| reaches[s] && !target[s]).collect();
    let pos: HashMap<usize, usize> = unknown.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut a = vec![vec![0.0; unknown.len()]; unknown.len()];
    let mut b = vec![0.0; unknown.len()];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] += 1.0;
        let c = policy[s].expect("reaching states have a choice");
        for (t, p) in mdp.branches(c) {
            if target[t] {
                b[i] += p;
            } else if let Some(&j) = pos.get(&t) {
                a[i][j] -= p;
            }
        }
    }
    let sol = solve_dense(a, b);
    let mut x: Vec<f64> = target.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    for (i, &s) in unknown.iter().enumerate() {
        x[s] = sol[i];
    }
    x
}

/// States from which some scheduler avoids `target` forever, by naive
/// fixpoint iteration.
fn can_avoid(mdp: &ComposedMdp, target: &[bool]) -> Vec<bool> {
    let n = mdp.num_states();
    let mut forced = target.to_vec();
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if forced[s] || mdp.is_deadlock(s) {
                continue;
            }
            if mdp.choices(s).all(|c| mdp.branches(c).any(|(t, _)| forced[t])) {
                forced[s] = true;
                changed = true;
            }
        }
    }
    forced.into_iter().map(|f| !f).collect()
}

/// Optimal reachability probabilities by policy iteration with exact linear
/// solves. Independent of the engine's value iteration.
pub fn oracle_reach(mdp: &ComposedMdp, target: &[bool], mode: Mode) -> Vec<f64> {
    let n = mdp.num_states();
    let avoid = match mode {
        Mode::Min => can_avoid(mdp, target),
        Mode::Max => vec![false; n],
    };
    let mut policy: Vec<Option<usize>> = (0..n)
        .map(|s| {
            let mut cs = mdp.choices(s);
            if avoid[s] {
                // stay inside the avoiding region
                mdp.choices(s).find(|&c| mdp.branches(c).all(|(t, _)| avoid[t]))
            } else {
                cs.next()
            }
        })
        .collect();
    for _ in 0..10_000 {
        let v = evaluate(mdp, &policy, target, &avoid);
        let mut improved = false;
        for s in 0..n {
            if target[s] || avoid[s] {
                continue;
            }
            let Some(cur) = policy[s] else { continue };
            let q = |c: usize| -> f64 { mdp.branches(c).map(|(t, p)| p * v[t]).sum() };
            let mut best = (q(cur), cur);
            for c in mdp.choices(s) {
                let qc = q(c);
                let better = match mode {
                    Mode::Max => qc > best.0 + 1e-12,
                    Mode::Min => qc < best.0 - 1e-12,
                };
                if better {
                    best = (qc, c);
                }
            }
            if best.1 != cur {
                policy[s] = Some(best.1);
                improved = true;
            }
        }
        if !improved {
            return v;
        }
    }
    panic!("policy iteration did not terminate");
}

/// Counts states and transitions of the product of `modules` by a naive
/// search over location tuples, independently of the composition code.
pub fn brute_force_product(modules: &[MdpModule]) -> (usize, usize) {
    let mut alphabet: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (i, m) in modules.iter().enumerate() {
        for c in &m.commands {
            if let Some(a) = &c.action {
                alphabet.entry(a).or_default().insert(i);
            }
        }
    }
    let init: Vec<u32> = modules.iter().map(|m| m.initial).collect();
    let mut seen: BTreeSet<Vec<u32>> = BTreeSet::from([init.clone()]);
    let mut queue = VecDeque::from([init]);
    let mut transitions = 0;
    while let Some(s) = queue.pop_front() {
        let mut distributions: Vec<Vec<Vec<u32>>> = Vec::new();
        for (i, m) in modules.iter().enumerate() {
            for c in m.commands.iter().filter(|c| c.action.is_none() && c.guard == s[i]) {
                distributions.push(
                    c.branches
                        .iter()
                        .map(|&(_, l)| {
                            let mut t = s.clone();
                            t[i] = l;
                            t
                        })
                        .collect(),
                );
            }
        }
        for (action, members) in &alphabet {
            let mut partial: Vec<Vec<Vec<u32>>> = vec![vec![s.clone()]];
            for &i in members {
                let enabled: Vec<_> = modules[i]
                    .commands
                    .iter()
                    .filter(|c| c.action.as_deref() == Some(*action) && c.guard == s[i])
                    .collect();
                let mut next = Vec::new();
                for dist in &partial {
                    for c in &enabled {
                        let mut out = Vec::new();
                        for t in dist {
                            for &(_, l) in &c.branches {
                                let mut u = t.clone();
                                u[i] = l;
                                out.push(u);
                            }
                        }
                        next.push(out);
                    }
                }
                partial = next;
            }
            distributions.extend(partial);
        }
        for mut d in distributions {
            d.sort();
            d.dedup();
            transitions += d.len();
            for t in d {
                if seen.insert(t.clone()) {
                    queue.push_back(t);
                }
            }
        }
    }
    (seen.len(), transitions)
}
