//! Compilation of event-based diagrams into guarded-command MDP modules and
//! their synchronised product.

mod compose;
mod generate;
mod rewards;

use std::collections::BTreeMap;

use thiserror::Error;

pub use compose::{compose, compose_modules, ComposeError, ComposeOptions, ComposedMdp, DEFAULT_MAX_STATES};
pub use generate::{generate_module, generate_module_with_limit};
pub use rewards::{attach_rewards, milestone_labels};

use crate::model::{EventLink, ProcessModel};

/// Name of the label holding in states where every module has terminated.
pub const DONE_LABEL: &str = "done_all";
pub const DAYS_REWARD: &str = "days";
pub const EFFORT_REWARD: &str = "wd";

/// One guarded command `[action] var=guard -> p1:(var'=l1) + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    /// Synchronisation label; `None` for commands that interleave freely.
    pub action: Option<String>,
    pub guard: u32,
    pub branches: Vec<(f64, u32)>,
    /// Id of the node (or join gateway) whose token moves.
    pub source: String,
    /// Set when the command completes a task; rewards attach here.
    pub task: Option<String>,
}

/// The compiled form of one diagram: a single integer variable ranging over
/// the local control locations.
///
/// Locations `0..n` are the diagram's nodes in order (a lone token at that
/// node), `n` is the terminal location, and anything above `n` encodes a
/// combination of tokens inside a parallel region.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpModule {
    pub name: String,
    pub num_locations: u32,
    pub initial: u32,
    pub done: u32,
    pub commands: Vec<Command>,
    pub location_of: BTreeMap<String, u32>,
}

impl MdpModule {
    /// Highest value of the state variable.
    pub fn max_location(&self) -> u32 {
        self.num_locations - 1
    }
}

/// Transition rewards keyed by `(module index, command index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardStructure {
    pub name: String,
    pub values: BTreeMap<(usize, usize), f64>,
}

/// A state predicate in disjunctive normal form over `module location = value` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLabel {
    pub name: String,
    pub disjuncts: Vec<Vec<(usize, u32)>>,
}

impl StateLabel {
    pub fn holds(&self, locations: &[u32]) -> bool {
        self.disjuncts
            .iter()
            .any(|conj| conj.iter().all(|&(m, l)| locations[m] == l))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("node {node} in diagram {diagram} carries signal {signal} that no event link covers")]
    UnlinkedSignal {
        diagram: String,
        node: String,
        signal: String,
    },
    #[error("diagram {0} has no unique start event")]
    NoStart(String),
    #[error("sequence flow {flow} in diagram {diagram} references unknown node {node}")]
    UnknownNode {
        diagram: String,
        flow: String,
        node: String,
    },
    #[error("diagram {diagram} exceeds {limit} local token configurations")]
    TooManyLocations { diagram: String, limit: usize },
    #[error("model still has {0} message flows; convert it to the event-based form first")]
    MessageFlows(usize),
}

/// Everything needed to build or emit the MDP of an event-based model.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpProgram {
    pub modules: Vec<MdpModule>,
    pub links: Vec<EventLink>,
    pub rewards: Vec<RewardStructure>,
    pub labels: Vec<StateLabel>,
}

/// Compiles every diagram of `model` and attaches rewards and labels.
pub fn compile(model: &ProcessModel) -> Result<MdpProgram, GenerateError> {
    compile_with_limit(model, DEFAULT_MAX_STATES)
}

pub fn compile_with_limit(model: &ProcessModel, max_locations: usize) -> Result<MdpProgram, GenerateError> {
    if !model.message_flows.is_empty() {
        return Err(GenerateError::MessageFlows(model.message_flows.len()));
    }
    let modules = model
        .diagrams
        .iter()
        .map(|d| generate_module_with_limit(d, &model.event_links, max_locations))
        .collect::<Result<Vec<_>, _>>()?;
    let rewards = attach_rewards(&modules, model);
    let mut labels = vec![StateLabel {
        name: DONE_LABEL.to_string(),
        disjuncts: vec![modules.iter().enumerate().map(|(i, m)| (i, m.done)).collect()],
    }];
    labels.extend(milestone_labels(&modules, model));
    Ok(MdpProgram {
        modules,
        links: model.event_links.clone(),
        rewards,
        labels,
    })
}
