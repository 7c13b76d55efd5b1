//! Explicit-state analysis of a composed MDP: size, deadlocks, reachability
//! probabilities and expected accumulated rewards.

mod graph;

use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use thiserror::Error;

use crate::mdp::{ComposedMdp, DAYS_REWARD, DONE_LABEL, EFFORT_REWARD};
use graph::Predecessors;

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("value iteration did not converge within {iterations} iterations (last change {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("no state label named {0}")]
    UnknownLabel(String),
    #[error("no reward structure named {0}")]
    UnknownReward(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    /// Absolute change below which value iteration stops.
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub states: usize,
    pub transitions: usize,
    pub build_time: Duration,
}

pub fn count_state_space(mdp: &ComposedMdp) -> StateSpace {
    StateSpace {
        states: mdp.num_states(),
        transitions: mdp.num_transitions(),
        build_time: mdp.build_time,
    }
}

/// True iff every state without an enabled choice has all modules terminated.
pub fn check_deadlock_free(mdp: &ComposedMdp) -> bool {
    let done = mdp.label(DONE_LABEL);
    mdp.deadlocks().all(|s| done.is_some_and(|d| d[s]))
}

fn target_of<'a>(mdp: &'a ComposedMdp, label: &str) -> Result<&'a [bool], EngineError> {
    mdp.label(label).ok_or_else(|| EngineError::UnknownLabel(label.to_string()))
}

/// Min or max probability of eventually reaching a `target` state, per state.
pub fn reach_probability(
    mdp: &ComposedMdp,
    target: &[bool],
    mode: Mode,
    settings: &Settings,
) -> Result<Vec<f64>, EngineError> {
    let pre = Predecessors::new(mdp);
    let (zero, one) = match mode {
        Mode::Min => {
            let zero = graph::prob0e(mdp, &pre, target);
            let one = graph::prob1a(&pre, target, &zero);
            (zero, one)
        }
        Mode::Max => (graph::prob0a(&pre, target), graph::prob1e(mdp, &pre, target).0),
    };
    let n = mdp.num_states();
    let mut x: Vec<f64> = (0..n).map(|s| if one[s] { 1.0 } else { 0.0 }).collect();
    let unknown: Vec<usize> = (0..n).filter(|&s| !zero[s] && !one[s]).collect();
    let choices: Vec<Vec<usize>> = unknown.iter().map(|&s| mdp.choices(s).collect()).collect();
    iterate(mdp, &mut x, &unknown, &choices, None, mode, settings)?;
    Ok(x)
}

/// Min or max expected reward accumulated before reaching `target`, per
/// state. A state gets `f64::INFINITY` when the optimising scheduler cannot
/// guarantee reaching the target: for `Max` some scheduler misses it with
/// positive probability, for `Min` none reaches it almost surely.
pub fn expected_reward(
    mdp: &ComposedMdp,
    reward: &[f64],
    target: &[bool],
    mode: Mode,
    settings: &Settings,
) -> Result<Vec<f64>, EngineError> {
    let n = mdp.num_states();
    let pre = Predecessors::new(mdp);
    let mut x = vec![0.0; n];
    match mode {
        Mode::Max => {
            let zero = graph::prob0e(mdp, &pre, target);
            let sure = graph::prob1a(&pre, target, &zero);
            for s in 0..n {
                if !sure[s] {
                    x[s] = f64::INFINITY;
                }
            }
            let unknown: Vec<usize> = (0..n).filter(|&s| sure[s] && !target[s]).collect();
            let choices: Vec<Vec<usize>> = unknown.iter().map(|&s| mdp.choices(s).collect()).collect();
            iterate(mdp, &mut x, &unknown, &choices, Some(reward), Mode::Max, settings)?;
        }
        Mode::Min => {
            let (able, strategy) = graph::prob1e(mdp, &pre, target);
            for s in 0..n {
                if !able[s] {
                    x[s] = f64::INFINITY;
                }
            }
            let unknown: Vec<usize> = (0..n).filter(|&s| able[s] && !target[s]).collect();
            // The attractor strategy reaches the target almost surely; its
            // value bounds the optimum from above, and iterating downwards
            // from there cannot get stuck on zero-reward cycles.
            let fixed: Vec<Vec<usize>> = unknown
                .iter()
                .map(|&s| strategy[s].into_iter().collect())
                .collect();
            iterate(mdp, &mut x, &unknown, &fixed, Some(reward), Mode::Min, settings)?;
            let choices: Vec<Vec<usize>> = unknown
                .iter()
                .map(|&s| {
                    mdp.choices(s)
                        .filter(|&c| mdp.branches(c).all(|(t, _)| able[t]))
                        .collect()
                })
                .collect();
            iterate(mdp, &mut x, &unknown, &choices, Some(reward), Mode::Min, settings)?;
        }
    }
    Ok(x)
}

/// Gauss-Seidel value iteration over `states`, where `choices[i]` lists the
/// choices available in `states[i]`.
fn iterate(
    mdp: &ComposedMdp,
    x: &mut [f64],
    states: &[usize],
    choices: &[Vec<usize>],
    reward: Option<&[f64]>,
    mode: Mode,
    settings: &Settings,
) -> Result<(), EngineError> {
    if states.is_empty() {
        return Ok(());
    }
    let mut residual = f64::INFINITY;
    for it in 0..settings.max_iterations {
        residual = 0.0;
        for (i, &s) in states.iter().enumerate() {
            let mut best: Option<f64> = None;
            for &c in &choices[i] {
                let mut v = reward.map_or(0.0, |r| r[c]);
                for (t, p) in mdp.branches(c) {
                    v += p * x[t];
                }
                best = Some(match (best, mode) {
                    (None, _) => v,
                    (Some(b), Mode::Min) => b.min(v),
                    (Some(b), Mode::Max) => b.max(v),
                });
            }
            let v = best.unwrap_or(x[s]);
            residual = residual.max((v - x[s]).abs());
            x[s] = v;
        }
        if residual < settings.epsilon {
            log::trace!("value iteration converged after {} sweeps", it + 1);
            return Ok(());
        }
    }
    Err(EngineError::NonConvergence {
        iterations: settings.max_iterations,
        residual,
    })
}

/// Property values at the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub states: usize,
    pub transitions: usize,
    pub build_time: Duration,
    pub deadlock_free: bool,
    /// `phi1` Pmin and `phi2` Pmax of termination, `phi3` 1 or 0, `phi4`
    /// minimum days and `phi5` maximum expected effort when rewards exist.
    pub values: BTreeMap<String, f64>,
    /// Verdicts of `phi1`..`phi3`.
    pub verdicts: BTreeMap<String, bool>,
}

impl AnalysisResult {
    pub fn holds(&self, property: &str) -> Option<bool> {
        self.verdicts.get(property).copied()
    }
}

/// Checks all properties at the initial state.
pub fn analyze(mdp: &ComposedMdp, settings: &Settings) -> Result<AnalysisResult, EngineError> {
    let target = target_of(mdp, DONE_LABEL)?;
    let space = count_state_space(mdp);
    let deadlock_free = check_deadlock_free(mdp);
    let pmin = reach_probability(mdp, target, Mode::Min, settings)?[0];
    let pmax = reach_probability(mdp, target, Mode::Max, settings)?[0];

    // Qualitative verdicts come from the exact graph sets, not the numbers.
    let pre = Predecessors::new(mdp);
    let zero = graph::prob0e(mdp, &pre, target);
    let almost_sure = graph::prob1a(&pre, target, &zero)[0];
    let possible = graph::prob1e(mdp, &pre, target).0[0];

    let mut values = BTreeMap::from([
        ("phi1".to_string(), pmin),
        ("phi2".to_string(), pmax),
        ("phi3".to_string(), if deadlock_free { 1.0 } else { 0.0 }),
    ]);
    let verdicts = BTreeMap::from([
        ("phi1".to_string(), deadlock_free && almost_sure),
        ("phi2".to_string(), possible),
        ("phi3".to_string(), deadlock_free),
    ]);
    for (prop, name, mode) in [("phi4", DAYS_REWARD, Mode::Min), ("phi5", EFFORT_REWARD, Mode::Max)] {
        if let Some(r) = mdp.reward(name) {
            values.insert(prop.to_string(), expected_reward(mdp, r, target, mode, settings)?[0]);
        }
    }
    Ok(AnalysisResult {
        states: space.states,
        transitions: space.transitions,
        build_time: space.build_time,
        deadlock_free,
        values,
        verdicts,
    })
}

/// Compares two MDPs state by state, matching states by their location
/// tuples. Action names are ignored; probabilities must agree within 1e-12.
pub fn isomorphic(a: &ComposedMdp, b: &ComposedMdp) -> Result<(), String> {
    if a.module_names.len() != b.module_names.len() {
        return Err(format!("{} vs {} modules", a.module_names.len(), b.module_names.len()));
    }
    if a.num_states() != b.num_states() || a.num_transitions() != b.num_transitions() {
        return Err(format!(
            "{} states / {} transitions vs {} / {}",
            a.num_states(),
            a.num_transitions(),
            b.num_states(),
            b.num_transitions()
        ));
    }
    let index: HashMap<&[u32], usize> = (0..b.num_states()).map(|s| (b.state(s), s)).collect();
    if a.state(0) != b.state(0) {
        return Err("initial states differ".into());
    }
    let mut names: Vec<&str> = a.rewards.iter().chain(&b.rewards).map(|(n, _)| n.as_str()).collect();
    names.sort_unstable();
    names.dedup();

    for s in 0..a.num_states() {
        let tuple = a.state(s);
        let &t = index.get(tuple).ok_or_else(|| format!("state {tuple:?} missing"))?;
        let (sa, sb) = (signature(a, s, &names), signature(b, t, &names));
        let same = sa.len() == sb.len()
            && sa.iter().zip(&sb).all(|(x, y)| {
                x.0.len() == y.0.len()
                    && x.0.iter().zip(&y.0).all(|(p, q)| p.0 == q.0 && (p.1 - q.1).abs() <= 1e-12)
                    && x.1.iter().zip(&y.1).all(|(p, q)| (p - q).abs() <= 1e-12)
            });
        if !same {
            return Err(format!("choices of state {tuple:?} differ"));
        }
    }
    Ok(())
}

type Signature<'m> = (Vec<(&'m [u32], f64)>, Vec<f64>);

/// The choices of `s` in a canonical order, each as sorted successor tuples
/// with probabilities plus the values of the reward structures `names`.
fn signature<'m>(m: &'m ComposedMdp, s: usize, names: &[&str]) -> Vec<Signature<'m>> {
    let mut out: Vec<Signature> = m
        .choices(s)
        .map(|c| {
            let mut succ: Vec<(&[u32], f64)> = m.branches(c).map(|(t, p)| (m.state(t), p)).collect();
            succ.sort_by(|x, y| x.0.cmp(y.0));
            let rewards = names.iter().map(|n| m.reward(n).map_or(0.0, |r| r[c])).collect();
            (succ, rewards)
        })
        .collect();
    out.sort_by(|x, y| {
        let kx: Vec<(&[u32], u64)> = x.0.iter().map(|(t, p)| (*t, p.to_bits())).collect();
        let ky: Vec<(&[u32], u64)> = y.0.iter().map(|(t, p)| (*t, p.to_bits())).collect();
        kx.cmp(&ky).then_with(|| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{compose_modules, Command, ComposeOptions, MdpModule, RewardStructure, StateLabel};

    fn cmd(guard: u32, branches: Vec<(f64, u32)>) -> Command {
        Command {
            action: None,
            guard,
            branches,
            source: String::new(),
            task: None,
        }
    }

    fn single(locations: u32, done: u32, commands: Vec<Command>, costs: &[(usize, f64)]) -> ComposedMdp {
        let m = MdpModule {
            name: "M".into(),
            num_locations: locations,
            initial: 0,
            done,
            commands,
            location_of: Default::default(),
        };
        let rewards = vec![RewardStructure {
            name: "cost".into(),
            values: costs.iter().map(|&(c, v)| ((0, c), v)).collect(),
        }];
        let labels = vec![StateLabel {
            name: DONE_LABEL.into(),
            disjuncts: vec![vec![(0, done)]],
        }];
        compose_modules(&[m], &rewards, &labels, &ComposeOptions::default()).unwrap()
    }

    fn initial(v: Result<Vec<f64>, EngineError>) -> f64 {
        v.unwrap()[0]
    }

    #[test]
    fn retry_loop_terminates_almost_surely() {
        // 0 -> coin: 0.5 done, 0.5 back to 0
        let mdp = single(2, 1, vec![cmd(0, vec![(0.5, 1), (0.5, 0)])], &[]);
        let t = mdp.label(DONE_LABEL).unwrap();
        let s = Settings::default();
        assert_eq!(initial(reach_probability(&mdp, t, Mode::Min, &s)), 1.0);
        assert_eq!(initial(reach_probability(&mdp, t, Mode::Max, &s)), 1.0);
    }

    #[test]
    fn divergence_splits_min_and_max() {
        // 0 -> done or 0 -> 1, 1 loops forever
        let mdp = single(3, 2, vec![cmd(0, vec![(1.0, 2)]), cmd(0, vec![(1.0, 1)]), cmd(1, vec![(1.0, 1)])], &[]);
        let t = mdp.label(DONE_LABEL).unwrap();
        let s = Settings::default();
        assert_eq!(initial(reach_probability(&mdp, t, Mode::Min, &s)), 0.0);
        assert_eq!(initial(reach_probability(&mdp, t, Mode::Max, &s)), 1.0);
        assert!(check_deadlock_free(&mdp));
    }

    #[test]
    fn zero_reward_cycle_does_not_fool_rmin() {
        // 0 may idle for free forever or pay 5 to finish
        let mdp = single(2, 1, vec![cmd(0, vec![(1.0, 0)]), cmd(0, vec![(1.0, 1)])], &[(1, 5.0)]);
        let t = mdp.label(DONE_LABEL).unwrap();
        let r = mdp.reward("cost").unwrap();
        let s = Settings::default();
        assert_eq!(initial(expected_reward(&mdp, r, t, Mode::Min, &s)), 5.0);
        assert_eq!(initial(expected_reward(&mdp, r, t, Mode::Max, &s)), f64::INFINITY);
    }

    #[test]
    fn branching_cost_is_averaged() {
        // 0 -> 0.5: 1, 0.5: 2; 1 pays 2, 2 pays 4
        let mdp = single(
            4,
            3,
            vec![cmd(0, vec![(0.5, 1), (0.5, 2)]), cmd(1, vec![(1.0, 3)]), cmd(2, vec![(1.0, 3)])],
            &[(1, 2.0), (2, 4.0)],
        );
        let t = mdp.label(DONE_LABEL).unwrap();
        let r = mdp.reward("cost").unwrap();
        let s = Settings::default();
        assert!((initial(expected_reward(&mdp, r, t, Mode::Max, &s)) - 3.0).abs() < 1e-12);
        assert!((initial(expected_reward(&mdp, r, t, Mode::Min, &s)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn deadlock_outside_done_is_reported() {
        let mdp = single(3, 2, vec![cmd(0, vec![(1.0, 1)])], &[]);
        assert!(!check_deadlock_free(&mdp));
        let res = analyze(&mdp, &Settings::default()).unwrap();
        assert_eq!(res.holds("phi1"), Some(false));
        assert_eq!(res.holds("phi2"), Some(false));
        assert_eq!(res.values["phi1"], 0.0);
    }

    #[test]
    fn slow_convergence_hits_the_cap() {
        let mdp = single(2, 1, vec![cmd(0, vec![(1e-3, 1), (1.0 - 1e-3, 0)])], &[(0, 1.0)]);
        let r = mdp.reward("cost").unwrap();
        let t = mdp.label(DONE_LABEL).unwrap();
        let s = Settings {
            epsilon: 1e-12,
            max_iterations: 10,
        };
        assert!(matches!(
            expected_reward(&mdp, r, t, Mode::Max, &s),
            Err(EngineError::NonConvergence { iterations: 10, .. })
        ));
        let v = initial(expected_reward(&mdp, r, t, Mode::Max, &Settings::default()));
        assert!((v - 1000.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn isomorphism_detects_differences() {
        let a = single(3, 2, vec![cmd(0, vec![(0.5, 1), (0.5, 2)]), cmd(1, vec![(1.0, 2)])], &[]);
        let b = single(3, 2, vec![cmd(0, vec![(0.5, 2), (0.5, 1)]), cmd(1, vec![(1.0, 2)])], &[]);
        let c = single(3, 2, vec![cmd(0, vec![(0.4, 1), (0.6, 2)]), cmd(1, vec![(1.0, 2)])], &[]);
        assert_eq!(isomorphic(&a, &b), Ok(()));
        assert!(isomorphic(&a, &c).is_err());
    }
}
