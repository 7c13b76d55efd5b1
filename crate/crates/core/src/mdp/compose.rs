//! Explicit parallel composition of modules.
//!
//! Commands without an action interleave. A labelled command fires together
//! with one enabled command carrying the same label in every other module
//! whose alphabet contains that label; the branch probabilities multiply.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{MdpModule, MdpProgram, RewardStructure, StateLabel};

pub const DEFAULT_MAX_STATES: usize = 10_000_000;

/// Marker in `choice_action` for interleaved choices.
pub const SILENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComposeOptions {
    pub max_states: usize,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions {
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComposeError {
    #[error("state space exceeds {limit} states ({explored} discovered before stopping)")]
    StateSpaceLimitExceeded { limit: usize, explored: usize },
    #[error("module name {0} is used twice")]
    DuplicateModule(String),
}

/// The reachable part of the product MDP in compressed sparse rows.
///
/// State `s` owns choices `choice_start[s]..choice_start[s + 1]`, choice `c`
/// owns branches `branch_start[c]..branch_start[c + 1]`. State 0 is initial.
#[derive(Debug, Clone)]
pub struct ComposedMdp {
    pub module_names: Vec<String>,
    pub actions: Vec<String>,
    /// Module locations of every state, `module_names.len()` values per state.
    pub locations: Vec<u32>,
    pub choice_start: Vec<usize>,
    pub choice_action: Vec<u32>,
    pub branch_start: Vec<usize>,
    pub succ: Vec<u32>,
    pub prob: Vec<f64>,
    /// Per reward structure, one value per choice.
    pub rewards: Vec<(String, Vec<f64>)>,
    pub labels: Vec<(String, Vec<bool>)>,
    pub build_time: Duration,
}

impl ComposedMdp {
    pub fn num_states(&self) -> usize {
        self.choice_start.len() - 1
    }

    pub fn num_choices(&self) -> usize {
        self.choice_action.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.succ.len()
    }

    pub fn state(&self, s: usize) -> &[u32] {
        let w = self.module_names.len();
        &self.locations[s * w..(s + 1) * w]
    }

    pub fn choices(&self, s: usize) -> std::ops::Range<usize> {
        self.choice_start[s]..self.choice_start[s + 1]
    }

    pub fn branches(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.branch_start[c]..self.branch_start[c + 1];
        self.succ[r.clone()].iter().map(|&t| t as usize).zip(self.prob[r].iter().copied())
    }

    pub fn is_deadlock(&self, s: usize) -> bool {
        self.choice_start[s] == self.choice_start[s + 1]
    }

    pub fn label(&self, name: &str) -> Option<&[bool]> {
        self.labels.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn reward(&self, name: &str) -> Option<&[f64]> {
        self.rewards.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn deadlocks(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states()).filter(|&s| self.is_deadlock(s))
    }
}

/// Per-module command lookup by guard value.
struct Index {
    by_guard: Vec<Vec<usize>>,
}

/// One combined command: which `(module, command)` pairs fire together.
type Combination = Vec<(usize, usize)>;

pub fn compose(program: &MdpProgram, opts: &ComposeOptions) -> Result<ComposedMdp, ComposeError> {
    compose_modules(&program.modules, &program.rewards, &program.labels, opts)
}

pub fn compose_modules(
    modules: &[MdpModule],
    rewards: &[RewardStructure],
    labels: &[StateLabel],
    opts: &ComposeOptions,
) -> Result<ComposedMdp, ComposeError> {
    let started = Instant::now();
    let mut seen_names = std::collections::HashSet::new();
    for m in modules {
        if !seen_names.insert(m.name.as_str()) {
            return Err(ComposeError::DuplicateModule(m.name.clone()));
        }
    }

    let mut alphabet: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (mi, m) in modules.iter().enumerate() {
        for c in &m.commands {
            if let Some(a) = c.action.as_deref() {
                let participants = alphabet.entry(a).or_default();
                if participants.last() != Some(&mi) {
                    participants.push(mi);
                }
            }
        }
    }
    let actions: Vec<String> = alphabet.keys().map(|a| a.to_string()).collect();
    let action_id: HashMap<&str, u32> = alphabet.keys().enumerate().map(|(i, a)| (*a, i as u32)).collect();
    let participants: Vec<&Vec<usize>> = alphabet.values().collect();

    let index: Vec<Index> = modules
        .iter()
        .map(|m| {
            let mut by_guard = vec![Vec::new(); m.num_locations as usize];
            for (ci, c) in m.commands.iter().enumerate() {
                if let Some(slot) = by_guard.get_mut(c.guard as usize) {
                    slot.push(ci);
                }
            }
            Index { by_guard }
        })
        .collect();

    let width = modules.len();
    let mut ids: HashMap<Box<[u32]>, u32> = HashMap::new();
    let mut queue: VecDeque<u32> = VecDeque::new();
    let mut locations: Vec<u32> = Vec::new();

    let mut intern = |tuple: &[u32], locations: &mut Vec<u32>, queue: &mut VecDeque<u32>| -> Result<u32, ComposeError> {
        if let Some(&id) = ids.get(tuple) {
            return Ok(id);
        }
        if ids.len() >= opts.max_states {
            return Err(ComposeError::StateSpaceLimitExceeded {
                limit: opts.max_states,
                explored: ids.len(),
            });
        }
        let id = ids.len() as u32;
        ids.insert(tuple.into(), id);
        locations.extend_from_slice(tuple);
        queue.push_back(id);
        Ok(id)
    };

    let initial: Vec<u32> = modules.iter().map(|m| m.initial).collect();
    intern(&initial, &mut locations, &mut queue)?;

    let mut choice_start = vec![0];
    let mut choice_action = Vec::new();
    let mut branch_start = vec![0];
    let mut succ = Vec::new();
    let mut prob = Vec::new();
    let mut reward_values: Vec<Vec<f64>> = vec![Vec::new(); rewards.len()];

    let mut combos: Vec<(u32, Combination)> = Vec::new();
    let mut dist: Vec<(Vec<u32>, f64)> = Vec::new();
    while let Some(s) = queue.pop_front() {
        let current: Vec<u32> = locations[s as usize * width..(s as usize + 1) * width].to_vec();
        enabled_combinations(modules, &index, &current, &participants, &action_id, &mut combos);

        for (action, combo) in combos.drain(..) {
            dist.clear();
            dist.push((current.clone(), 1.0));
            for &(mi, ci) in &combo {
                let cmd = &modules[mi].commands[ci];
                let mut next = Vec::with_capacity(dist.len() * cmd.branches.len());
                for (tuple, p) in &dist {
                    for &(q, loc) in &cmd.branches {
                        let mut t = tuple.clone();
                        t[mi] = loc;
                        next.push((t, p * q));
                    }
                }
                dist = next;
            }
            let first = succ.len();
            for (tuple, p) in &dist {
                let t = intern(tuple, &mut locations, &mut queue)?;
                match succ[first..].iter().position(|&x| x == t) {
                    Some(k) => prob[first + k] += p,
                    None => {
                        succ.push(t);
                        prob.push(*p);
                    }
                }
            }
            branch_start.push(succ.len());
            choice_action.push(action);
            for (r, values) in rewards.iter().zip(reward_values.iter_mut()) {
                values.push(combo.iter().filter_map(|k| r.values.get(k)).sum());
            }
        }
        choice_start.push(choice_action.len());
    }

    let num_states = choice_start.len() - 1;
    let state_labels = labels
        .iter()
        .map(|l| {
            let v = (0..num_states)
                .map(|s| l.holds(&locations[s * width..(s + 1) * width]))
                .collect();
            (l.name.clone(), v)
        })
        .collect();

    let mdp = ComposedMdp {
        module_names: modules.iter().map(|m| m.name.clone()).collect(),
        actions,
        locations,
        choice_start,
        choice_action,
        branch_start,
        succ,
        prob,
        rewards: rewards
            .iter()
            .zip(reward_values)
            .map(|(r, v)| (r.name.clone(), v))
            .collect(),
        labels: state_labels,
        build_time: started.elapsed(),
    };
    log::debug!(
        "composed {} modules into {} states, {} transitions in {:?}",
        width,
        mdp.num_states(),
        mdp.num_transitions(),
        mdp.build_time
    );
    Ok(mdp)
}

fn enabled_combinations(
    modules: &[MdpModule],
    index: &[Index],
    state: &[u32],
    participants: &[&Vec<usize>],
    action_id: &HashMap<&str, u32>,
    out: &mut Vec<(u32, Combination)>,
) {
    let enabled = |mi: usize| -> &[usize] {
        index[mi]
            .by_guard
            .get(state[mi] as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    };

    for mi in 0..modules.len() {
        for &ci in enabled(mi) {
            if modules[mi].commands[ci].action.is_none() {
                out.push((SILENT, vec![(mi, ci)]));
            }
        }
    }

    for (&name, &aid) in action_id.iter().collect::<BTreeMap<_, _>>() {
        let mut partial: Vec<Combination> = vec![Vec::new()];
        for &mi in participants[aid as usize] {
            let cands: Vec<usize> = enabled(mi)
                .iter()
                .copied()
                .filter(|&ci| modules[mi].commands[ci].action.as_deref() == Some(name))
                .collect();
            if cands.is_empty() {
                partial.clear();
                break;
            }
            partial = partial
                .into_iter()
                .flat_map(|p| {
                    cands.iter().map(move |&ci| {
                        let mut p = p.clone();
                        p.push((mi, ci));
                        p
                    })
                })
                .collect();
        }
        out.extend(partial.into_iter().map(|c| (aid, c)));
    }
}
