//! Qualitative analysis: the graph-based probability-0 and probability-1
//! state sets. A state without choices behaves as if it looped on itself.

use std::collections::VecDeque;

use crate::mdp::ComposedMdp;

/// Reverse edges: for every state the `(predecessor, choice)` pairs leading into it.
pub(crate) struct Predecessors {
    start: Vec<usize>,
    edges: Vec<(u32, u32)>,
}

impl Predecessors {
    pub(crate) fn new(mdp: &ComposedMdp) -> Self {
        let n = mdp.num_states();
        let mut count = vec![0usize; n + 1];
        for &t in &mdp.succ {
            count[t as usize + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let start = count.clone();
        let mut fill = count;
        let mut edges = vec![(0u32, 0u32); mdp.succ.len()];
        for s in 0..n {
            for c in mdp.choices(s) {
                for (t, _) in mdp.branches(c) {
                    edges[fill[t]] = (s as u32, c as u32);
                    fill[t] += 1;
                }
            }
        }
        Predecessors { start, edges }
    }

    fn of(&self, t: usize) -> &[(u32, u32)] {
        &self.edges[self.start[t]..self.start[t + 1]]
    }
}

/// States that reach `seeds` along some path, moving backwards only through
/// states in `through`. Seeds are always included.
fn backward(pre: &Predecessors, seeds: &[bool], through: impl Fn(usize) -> bool) -> Vec<bool> {
    let mut reached = seeds.to_vec();
    let mut queue: VecDeque<usize> = (0..seeds.len()).filter(|&s| seeds[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &(s, _) in pre.of(t) {
            let s = s as usize;
            if !reached[s] && through(s) {
                reached[s] = true;
                queue.push_back(s);
            }
        }
    }
    reached
}

/// States where every scheduler reaches `target` with probability 0.
pub(crate) fn prob0a(pre: &Predecessors, target: &[bool]) -> Vec<bool> {
    backward(pre, target, |_| true).into_iter().map(|r| !r).collect()
}

/// States where some scheduler reaches `target` with probability 0.
pub(crate) fn prob0e(mdp: &ComposedMdp, pre: &Predecessors, target: &[bool]) -> Vec<bool> {
    let n = mdp.num_states();
    // Least set R containing the target and every state all of whose choices
    // can enter R. Deadlocks keep their implicit self-loop and never join.
    let mut in_r = target.to_vec();
    let mut choice_hits = vec![false; mdp.num_choices()];
    let mut missing: Vec<usize> = (0..n).map(|s| mdp.choices(s).len()).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| in_r[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &(s, c) in pre.of(t) {
            let (s, c) = (s as usize, c as usize);
            if in_r[s] || choice_hits[c] {
                continue;
            }
            choice_hits[c] = true;
            missing[s] -= 1;
            if missing[s] == 0 {
                in_r[s] = true;
                queue.push_back(s);
            }
        }
    }
    in_r.into_iter().map(|r| !r).collect()
}

/// States where every scheduler reaches `target` with probability 1.
pub(crate) fn prob1a(pre: &Predecessors, target: &[bool], no_min: &[bool]) -> Vec<bool> {
    // Pmin < 1 exactly when some path avoiding the target leads into a state
    // whose minimum is 0.
    backward(pre, no_min, |s| !target[s]).into_iter().map(|r| !r).collect()
}

/// States where some scheduler reaches `target` with probability 1, together
/// with such a scheduler: for every state in the set outside the target, a
/// choice that keeps within the set and makes progress towards the target.
pub(crate) fn prob1e(mdp: &ComposedMdp, pre: &Predecessors, target: &[bool]) -> (Vec<bool>, Vec<Option<usize>>) {
    let n = mdp.num_states();
    let mut u: Vec<bool> = prob0a(pre, target).into_iter().map(|z| !z).collect();
    loop {
        // Attractor of the target inside u using only choices that stay in u.
        let safe: Vec<bool> = (0..mdp.num_choices()).map(|c| mdp.branches(c).all(|(t, _)| u[t])).collect();
        let mut r = target.to_vec();
        let mut strategy = vec![None; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&s| r[s]).collect();
        while let Some(t) = queue.pop_front() {
            for &(s, c) in pre.of(t) {
                let (s, c) = (s as usize, c as usize);
                if r[s] || !u[s] || !safe[c] {
                    continue;
                }
                r[s] = true;
                strategy[s] = Some(c);
                queue.push_back(s);
            }
        }
        if r == u {
            return (u, strategy);
        }
        u = r;
    }
}
