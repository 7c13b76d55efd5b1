//! Pool-based to event-based conversion.
//!
//! Redundant sub-processes are removed first, then every message flow is
//! replaced by a throw/catch signal pair, and finally pools are dropped so
//! that each sub-process stands alone as its own diagram.

mod canonical;
mod dedup;
mod splice;

use thiserror::Error;

pub use canonical::{canonical_form, CanonicalForm};
pub use dedup::{deduplicate_processes, DedupReport};

use crate::dialect::{classify_dialect, Dialect, DialectError};
use crate::model::{Diagram, FlowNode, NodeKind, ProcessModel, SequenceFlow};
use splice::IdAllocator;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConvertError {
    #[error("cannot splice message flow {flow} at {element}: {reason}")]
    Splice {
        flow: String,
        element: String,
        reason: String,
    },
    #[error("conversion needs a pool-based model, got an event-based one")]
    NotPoolBased,
    #[error(transparent)]
    Dialect(#[from] DialectError),
    #[error("diagram {0} has no unique start event to merge from")]
    NoStart(String),
}

impl ConvertError {
    fn splice(flow: &str, element: &str, reason: &str) -> Self {
        ConvertError::Splice {
            flow: flow.to_string(),
            element: element.to_string(),
            reason: reason.to_string(),
        }
    }
}

/// Replaces every message flow by a throw event spliced after its source and
/// a catch event spliced before its target, linked by a fresh signal.
pub fn replace_message_flows(model: &ProcessModel) -> Result<ProcessModel, ConvertError> {
    let mut out = model.clone();
    if model.message_flows.is_empty() {
        return Ok(out);
    }
    let plan = splice::plan(model)?;
    let mut ids = IdAllocator::for_model(model);
    splice::apply(&mut out.diagrams, &plan, &mut ids)?;
    out.message_flows.clear();
    out.relink_events();
    Ok(out)
}

/// Drops all pools; the diagrams themselves are untouched.
pub fn remove_pools(model: &ProcessModel) -> ProcessModel {
    ProcessModel {
        pools: Vec::new(),
        ..model.clone()
    }
}

/// Full conversion: deduplicate, replace message flows, remove pools.
pub fn convert_to_event_based(model: &ProcessModel) -> Result<(ProcessModel, DedupReport), ConvertError> {
    if classify_dialect(model)? != Dialect::PoolBased {
        return Err(ConvertError::NotPoolBased);
    }
    let (deduped, report) = deduplicate_processes(model);
    let replaced = replace_message_flows(&deduped)?;
    Ok((remove_pools(&replaced), report))
}

/// Flattens a pool-based model into one diagram: a global start forks in
/// parallel into every sub-process, and message flows become throw/catch
/// pairs inside that single diagram. Node names are prefixed with their
/// diagram id to stay unique. Serves as the size baseline for pool-based
/// models.
pub fn merge_diagrams(model: &ProcessModel) -> Result<Diagram, ConvertError> {
    let plan = splice::plan(model)?;
    let mut ids = IdAllocator::for_model(model);

    let mut merged = Diagram::new(ids.fresh("merged"), "merged", model.abstraction_levels(), "");
    let start = ids.fresh("merged_start");
    let fork = ids.fresh("merged_fork");
    merged.nodes.push(FlowNode::new(&start, "global start", NodeKind::StartEvent));
    merged.nodes.push(FlowNode::new(&fork, "global fork", NodeKind::ParallelGateway));
    merged.flows.push(SequenceFlow::new(ids.fresh("merged_flow_start"), &start, &fork));

    for d in &model.diagrams {
        let sub_start = d.start_node().ok_or_else(|| ConvertError::NoStart(d.id.clone()))?;
        merged.flows.push(SequenceFlow::new(
            ids.fresh(&format!("merged_flow_{}", d.id)),
            &fork,
            &sub_start.id,
        ));
        merged.nodes.extend(d.nodes.iter().map(|n| FlowNode {
            name: format!("{}.{}", d.id, n.name),
            ..n.clone()
        }));
        merged.flows.extend(d.flows.iter().cloned());
    }

    let mut holder = [merged];
    splice::apply(&mut holder, &plan, &mut ids)?;
    let [merged] = holder;
    Ok(merged)
}

/// Wraps [`merge_diagrams`] into a single-diagram event-based model.
pub fn merged_model(model: &ProcessModel) -> Result<ProcessModel, ConvertError> {
    let merged = merge_diagrams(model)?;
    let mut out = ProcessModel {
        diagrams: vec![merged],
        timeline: model.timeline.clone(),
        ..Default::default()
    };
    out.relink_events();
    Ok(out)
}
