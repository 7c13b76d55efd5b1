use std::collections::BTreeMap;

use super::{MdpModule, RewardStructure, StateLabel, DAYS_REWARD, EFFORT_REWARD};
use crate::model::ProcessModel;

/// Builds the `days` and `wd` transition rewards from the task costs. Models
/// without a timeline get no reward structures at all.
///
/// `modules[i]` must be the compiled form of `model.diagrams[i]`.
pub fn attach_rewards(modules: &[MdpModule], model: &ProcessModel) -> Vec<RewardStructure> {
    if model.timeline.is_none() {
        return Vec::new();
    }
    let mut days = BTreeMap::new();
    let mut effort = BTreeMap::new();
    for (mi, (module, diagram)) in modules.iter().zip(&model.diagrams).enumerate() {
        for (ci, cmd) in module.commands.iter().enumerate() {
            let Some(node) = cmd.task.as_deref().and_then(|t| diagram.node(t)) else { continue };
            days.insert((mi, ci), node.duration_days.unwrap_or(0.0));
            effort.insert((mi, ci), node.effort_wd.unwrap_or(0.0));
        }
    }
    vec![
        RewardStructure {
            name: DAYS_REWARD.to_string(),
            values: days,
        },
        RewardStructure {
            name: EFFORT_REWARD.to_string(),
            values: effort,
        },
    ]
}

/// One label per timeline milestone, holding while a token rests on any node
/// named after the milestone.
pub fn milestone_labels(modules: &[MdpModule], model: &ProcessModel) -> Vec<StateLabel> {
    let Some(timeline) = &model.timeline else { return Vec::new() };
    timeline
        .milestones
        .iter()
        .map(|ms| {
            let disjuncts = modules
                .iter()
                .zip(&model.diagrams)
                .enumerate()
                .flat_map(|(mi, (module, d))| {
                    d.nodes
                        .iter()
                        .filter(|n| n.name == ms.name)
                        .filter_map(move |n| module.location_of.get(&n.id).map(|&l| vec![(mi, l)]))
                })
                .collect();
            StateLabel {
                name: ms.name.clone(),
                disjuncts,
            }
        })
        .collect()
}
