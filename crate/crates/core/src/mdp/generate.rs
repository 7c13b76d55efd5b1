//! Diagram to module compilation.
//!
//! A diagram is executed as a token game. Tokens sit on nodes, except in front
//! of a parallel join where they wait on the incoming flow so the join can
//! tell its branches apart. A marking is the sorted multiset of token
//! positions; every reachable marking becomes one location of the module.

use std::collections::{HashMap, VecDeque};

use super::{Command, GenerateError, MdpModule, DEFAULT_MAX_STATES};
use crate::model::{Diagram, EventLink, NodeKind};

type Marking = Vec<u32>;

struct Sync {
    signal: String,
    external: bool,
    nodes: Vec<usize>,
}

struct Move {
    label: Option<String>,
    branches: Vec<(f64, Marking)>,
    source: String,
    task: Option<String>,
}

struct TokenGame<'a> {
    d: &'a Diagram,
    n: u32,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    flow_target: Vec<usize>,
    is_join: Vec<bool>,
    syncs: Vec<Sync>,
}

impl<'a> TokenGame<'a> {
    fn new(d: &'a Diagram, links: &[EventLink]) -> Result<Self, GenerateError> {
        let index: HashMap<&str, usize> = d.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut outgoing = vec![Vec::new(); d.nodes.len()];
        let mut incoming = vec![Vec::new(); d.nodes.len()];
        let mut flow_target = Vec::with_capacity(d.flows.len());
        for (fi, f) in d.flows.iter().enumerate() {
            let lookup = |id: &str| {
                index.get(id).copied().ok_or_else(|| GenerateError::UnknownNode {
                    diagram: d.id.clone(),
                    flow: f.id.clone(),
                    node: id.to_string(),
                })
            };
            let (s, t) = (lookup(&f.source)?, lookup(&f.target)?);
            outgoing[s].push(fi);
            incoming[t].push(fi);
            flow_target.push(t);
        }
        let is_join = d
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| n.kind == NodeKind::ParallelGateway && incoming[i].len() > 1)
            .collect();

        let mut syncs = Vec::new();
        let mut covered = vec![false; d.nodes.len()];
        for link in links {
            let mut nodes = Vec::new();
            let mut external = false;
            for p in link.participants() {
                if p.diagram != d.id {
                    external = true;
                    continue;
                }
                if let Some(&i) = index.get(p.node.as_str()) {
                    if d.nodes[i].signal.as_deref() == Some(link.signal.as_str()) {
                        nodes.push(i);
                        covered[i] = true;
                    }
                }
            }
            if !nodes.is_empty() {
                nodes.sort_unstable();
                nodes.dedup();
                syncs.push(Sync {
                    signal: link.signal.clone(),
                    external,
                    nodes,
                });
            }
        }
        for (i, node) in d.nodes.iter().enumerate() {
            if let (Some(signal), false) = (&node.signal, covered[i]) {
                return Err(GenerateError::UnlinkedSignal {
                    diagram: d.id.clone(),
                    node: node.id.clone(),
                    signal: signal.clone(),
                });
            }
        }

        Ok(TokenGame {
            d,
            n: d.nodes.len() as u32,
            outgoing,
            incoming,
            flow_target,
            is_join,
            syncs,
        })
    }

    fn place(&self, flow: usize) -> u32 {
        let t = self.flow_target[flow];
        if self.is_join[t] {
            self.n + flow as u32
        } else {
            t as u32
        }
    }

    /// Tokens produced when `node` hands its token on along every outgoing flow.
    fn emit(&self, node: usize, into: &mut Marking) {
        if self.d.nodes[node].kind == NodeKind::EndEvent {
            return;
        }
        into.extend(self.outgoing[node].iter().map(|&f| self.place(f)));
    }

    fn without(m: &Marking, remove: &[u32]) -> Marking {
        let mut out = m.clone();
        for r in remove {
            let pos = out.iter().position(|x| x == r).expect("token present");
            out.remove(pos);
        }
        out
    }

    fn finish(mut m: Marking) -> Marking {
        m.sort_unstable();
        m
    }

    fn moves(&self, m: &Marking) -> Vec<Move> {
        let mut moves = Vec::new();
        let mut prev = None;
        for &p in m {
            if prev == Some(p) || p >= self.n {
                prev = Some(p);
                continue;
            }
            prev = Some(p);
            let i = p as usize;
            let node = &self.d.nodes[i];
            let rest = Self::without(m, &[p]);
            match node.kind {
                NodeKind::IntermediateThrowEvent | NodeKind::IntermediateCatchEvent => {}
                NodeKind::EndEvent if node.signal.is_some() => {}
                NodeKind::ExclusiveGateway if self.outgoing[i].len() > 1 => {
                    let flows = &self.outgoing[i];
                    let probabilistic = flows.iter().all(|&f| self.d.flows[f].probability.is_some());
                    if probabilistic {
                        let mut branches: Vec<(f64, Marking)> = Vec::new();
                        for &f in flows {
                            let mut next = rest.clone();
                            next.push(self.place(f));
                            let next = Self::finish(next);
                            let p = self.d.flows[f].probability.unwrap_or(0.0);
                            match branches.iter_mut().find(|(_, b)| *b == next) {
                                Some(b) => b.0 += p,
                                None => branches.push((p, next)),
                            }
                        }
                        moves.push(Move {
                            label: None,
                            branches,
                            source: node.id.clone(),
                            task: None,
                        });
                    } else {
                        for &f in flows {
                            let mut next = rest.clone();
                            next.push(self.place(f));
                            moves.push(Move {
                                label: None,
                                branches: vec![(1.0, Self::finish(next))],
                                source: node.id.clone(),
                                task: None,
                            });
                        }
                    }
                }
                kind => {
                    let mut next = rest;
                    self.emit(i, &mut next);
                    moves.push(Move {
                        label: None,
                        branches: vec![(1.0, Self::finish(next))],
                        source: node.id.clone(),
                        task: (kind == NodeKind::Task).then(|| node.id.clone()),
                    });
                }
            }
        }

        for (j, node) in self.d.nodes.iter().enumerate() {
            if !self.is_join[j] {
                continue;
            }
            let waiting: Vec<u32> = self.incoming[j].iter().map(|&f| self.n + f as u32).collect();
            if waiting.iter().all(|w| m.contains(w)) {
                let mut next = Self::without(m, &waiting);
                self.emit(j, &mut next);
                moves.push(Move {
                    label: None,
                    branches: vec![(1.0, Self::finish(next))],
                    source: node.id.clone(),
                    task: None,
                });
            }
        }

        for s in &self.syncs {
            let tokens: Vec<u32> = s.nodes.iter().map(|&i| i as u32).collect();
            if tokens.iter().all(|t| m.contains(t)) {
                let mut next = Self::without(m, &tokens);
                for &i in &s.nodes {
                    self.emit(i, &mut next);
                }
                moves.push(Move {
                    label: s.external.then(|| s.signal.clone()),
                    branches: vec![(1.0, Self::finish(next))],
                    source: self.d.nodes[s.nodes[0]].id.clone(),
                    task: None,
                });
            }
        }
        moves
    }
}

/// Compiles one diagram. `links` must cover every signal used by its events.
pub fn generate_module(d: &Diagram, links: &[EventLink]) -> Result<MdpModule, GenerateError> {
    generate_module_with_limit(d, links, DEFAULT_MAX_STATES)
}

pub fn generate_module_with_limit(
    d: &Diagram,
    links: &[EventLink],
    max_locations: usize,
) -> Result<MdpModule, GenerateError> {
    let game = TokenGame::new(d, links)?;
    let start = d
        .start_node()
        .and_then(|s| d.node_index(&s.id))
        .ok_or_else(|| GenerateError::NoStart(d.id.clone()))?;

    let n = game.n;
    let done = n;
    let mut next_aux = n + 1;
    let mut location: HashMap<Marking, u32> = HashMap::new();
    let mut queue = VecDeque::new();

    let mut locate = |m: &Marking, queue: &mut VecDeque<Marking>| -> Result<u32, GenerateError> {
        if let Some(&l) = location.get(m) {
            return Ok(l);
        }
        if location.len() >= max_locations {
            return Err(GenerateError::TooManyLocations {
                diagram: d.id.clone(),
                limit: max_locations,
            });
        }
        let l = match m.as_slice() {
            [] => done,
            [p] if *p < n => *p,
            _ => {
                next_aux += 1;
                next_aux - 1
            }
        };
        location.insert(m.clone(), l);
        queue.push_back(m.clone());
        Ok(l)
    };

    let initial = locate(&vec![start as u32], &mut queue)?;
    let mut commands = Vec::new();
    while let Some(m) = queue.pop_front() {
        let guard = locate(&m, &mut queue)?;
        for mv in game.moves(&m) {
            let branches = mv
                .branches
                .iter()
                .map(|(p, target)| Ok((*p, locate(target, &mut queue)?)))
                .collect::<Result<Vec<_>, GenerateError>>()?;
            commands.push(Command {
                action: mv.label,
                guard,
                branches,
                source: mv.source,
                task: mv.task,
            });
        }
    }
    commands.sort_by_key(|c| c.guard);

    Ok(MdpModule {
        name: d.id.clone(),
        num_locations: next_aux,
        initial,
        done,
        commands,
        location_of: d
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| (node.id.clone(), i as u32))
            .collect(),
    })
}
