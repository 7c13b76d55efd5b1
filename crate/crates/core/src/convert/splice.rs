//! Realisation of message flows as throw/catch signal pairs.

use std::collections::{BTreeMap, HashSet};

use super::ConvertError;
use crate::model::{Diagram, FlowNode, NodeKind, ProcessModel, SequenceFlow};

/// Hands out element ids that do not clash with any id already in use.
#[derive(Debug, Default)]
pub(crate) struct IdAllocator {
    used: HashSet<String>,
}

impl IdAllocator {
    pub(crate) fn for_model(model: &ProcessModel) -> Self {
        let mut used = HashSet::new();
        for d in &model.diagrams {
            used.insert(d.id.clone());
            used.extend(d.nodes.iter().map(|n| n.id.clone()));
            used.extend(d.flows.iter().map(|f| f.id.clone()));
        }
        used.extend(model.pools.iter().map(|p| p.id.clone()));
        used.extend(model.message_flows.iter().map(|m| m.id.clone()));
        IdAllocator { used }
    }

    pub(crate) fn fresh(&mut self, base: &str) -> String {
        let base: String = base
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '_' || c == '-' || c == '.' { c } else { '_' })
            .collect();
        let mut candidate = base.clone();
        let mut n = 2;
        while self.used.contains(&candidate) {
            candidate = format!("{base}_{n}");
            n += 1;
        }
        self.used.insert(candidate.clone());
        candidate
    }
}

/// Where the signal for each message flow is thrown and caught.
#[derive(Debug, Default)]
pub(crate) struct SplicePlan {
    /// source node id -> (message flow id, signal) in throw order
    throws: BTreeMap<String, Vec<(String, String)>>,
    /// target node id -> (message flow id, signal) in catch order
    catches: BTreeMap<String, Vec<(String, String)>>,
}

/// Assigns each message flow its signal name `msg_<source diagram>_<source
/// name>_<target name>` (suffixed on collision) and fixes the order in which
/// several signals at one node are spliced: by target name for throws, by
/// source name for catches.
pub(crate) fn plan(model: &ProcessModel) -> Result<SplicePlan, ConvertError> {
    struct Endpoint<'a> {
        diagram_pos: usize,
        node_pos: usize,
        diagram: &'a Diagram,
        node: &'a FlowNode,
    }
    let locate = |flow: &str, id: &str| -> Result<Endpoint<'_>, ConvertError> {
        model
            .diagrams
            .iter()
            .enumerate()
            .find_map(|(dp, d)| {
                d.node_index(id).map(|np| Endpoint {
                    diagram_pos: dp,
                    node_pos: np,
                    diagram: d,
                    node: &d.nodes[np],
                })
            })
            .ok_or_else(|| ConvertError::splice(flow, id, "endpoint node does not exist"))
    };

    let mut resolved = Vec::with_capacity(model.message_flows.len());
    for m in &model.message_flows {
        let src = locate(&m.id, &m.source)?;
        let tgt = locate(&m.id, &m.target)?;
        resolved.push((m, src, tgt));
    }
    resolved.sort_by(|(ma, sa, ta), (mb, sb, tb)| {
        (sa.diagram_pos, sa.node_pos, &ta.node.name, &ta.node.id, &ma.id)
            .cmp(&(sb.diagram_pos, sb.node_pos, &tb.node.name, &tb.node.id, &mb.id))
    });

    let mut taken: HashSet<String> = model
        .diagrams
        .iter()
        .flat_map(|d| d.nodes.iter().filter_map(|n| n.signal.clone()))
        .collect();
    let mut p = SplicePlan::default();
    let mut catch_keys: BTreeMap<String, Vec<((String, String, String), String, String)>> = BTreeMap::new();
    for (m, src, tgt) in &resolved {
        let base = format!("msg_{}_{}_{}", src.diagram.id, src.node.name, tgt.node.name);
        let mut signal = base.clone();
        let mut n = 2;
        while !taken.insert(signal.clone()) {
            signal = format!("{base}_{n}");
            n += 1;
        }
        p.throws
            .entry(m.source.clone())
            .or_default()
            .push((m.id.clone(), signal.clone()));
        catch_keys.entry(m.target.clone()).or_default().push((
            (src.node.name.clone(), src.diagram.id.clone(), m.id.clone()),
            m.id.clone(),
            signal,
        ));
    }
    for (target, mut entries) in catch_keys {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        p.catches
            .insert(target, entries.into_iter().map(|(_, id, s)| (id, s)).collect());
    }
    Ok(p)
}

fn find_node(diagrams: &[Diagram], id: &str) -> Option<(usize, usize)> {
    diagrams
        .iter()
        .enumerate()
        .find_map(|(di, d)| d.node_index(id).map(|ni| (di, ni)))
}

fn event_node(ids: &mut IdAllocator, kind: NodeKind, signal: &str) -> FlowNode {
    let (prefix, tag) = match kind {
        NodeKind::IntermediateThrowEvent => ("throw", "throw"),
        _ => ("catch", "catch"),
    };
    FlowNode::new(ids.fresh(&format!("{prefix}_{signal}")), format!("{tag}:{signal}"), kind)
        .with_signal(signal)
}

/// Splices the planned throw and catch events into `diagrams`, which must
/// contain every endpoint named by the plan.
pub(crate) fn apply(diagrams: &mut [Diagram], plan: &SplicePlan, ids: &mut IdAllocator) -> Result<(), ConvertError> {
    for (source, throws) in &plan.throws {
        let (di, ni) = find_node(diagrams, source)
            .ok_or_else(|| ConvertError::splice(&throws[0].0, source, "endpoint node does not exist"))?;
        let d = &mut diagrams[di];
        let node = d.nodes[ni].clone();
        match node.kind {
            k if k.is_gateway() => {
                return Err(ConvertError::splice(&throws[0].0, source, "message flows cannot leave a gateway"))
            }
            NodeKind::EndEvent => {
                if throws.len() > 1 || node.signal.is_some() {
                    return Err(ConvertError::splice(
                        &throws[0].0,
                        source,
                        "an end event can carry the signal of only one message flow",
                    ));
                }
                d.nodes[ni].signal = Some(throws[0].1.clone());
                continue;
            }
            _ => {}
        }
        let outgoing: Vec<usize> = (0..d.flows.len()).filter(|&i| d.flows[i].source == *source).collect();
        if outgoing.is_empty() {
            return Err(ConvertError::splice(&throws[0].0, source, "node has no outgoing flow to splice into"));
        }
        let events: Vec<FlowNode> = throws
            .iter()
            .map(|(_, s)| event_node(ids, NodeKind::IntermediateThrowEvent, s))
            .collect();
        let last = events.last().expect("at least one throw").id.clone();
        for i in outgoing {
            d.flows[i].source = last.clone();
        }
        let mut prev = source.clone();
        for e in &events {
            d.flows.push(SequenceFlow::new(ids.fresh(&format!("flow_{}", e.id)), prev, e.id.clone()));
            prev = e.id.clone();
        }
        d.nodes.splice(ni + 1..ni + 1, events);
    }

    for (target, catches) in &plan.catches {
        let (di, ni) = find_node(diagrams, target)
            .ok_or_else(|| ConvertError::splice(&catches[0].0, target, "endpoint node does not exist"))?;
        let d = &mut diagrams[di];
        let kind = d.nodes[ni].kind;
        if kind.is_gateway() {
            return Err(ConvertError::splice(&catches[0].0, target, "message flows cannot enter a gateway"));
        }
        let events: Vec<FlowNode> = catches
            .iter()
            .map(|(_, s)| event_node(ids, NodeKind::IntermediateCatchEvent, s))
            .collect();
        let first = events[0].id.clone();
        let last = events.last().expect("at least one catch").id.clone();

        if kind == NodeKind::StartEvent {
            // A start event has nothing before it: wait right after it instead.
            let outgoing: Vec<usize> = (0..d.flows.len()).filter(|&i| d.flows[i].source == *target).collect();
            if outgoing.is_empty() {
                return Err(ConvertError::splice(&catches[0].0, target, "start event has no outgoing flow"));
            }
            for i in outgoing {
                d.flows[i].source = last.clone();
            }
            let mut prev = target.clone();
            for e in &events {
                d.flows.push(SequenceFlow::new(ids.fresh(&format!("flow_{}", e.id)), prev, e.id.clone()));
                prev = e.id.clone();
            }
            d.nodes.splice(ni + 1..ni + 1, events);
        } else {
            let incoming: Vec<usize> = (0..d.flows.len()).filter(|&i| d.flows[i].target == *target).collect();
            if incoming.is_empty() {
                return Err(ConvertError::splice(&catches[0].0, target, "node has no incoming flow to splice into"));
            }
            for i in incoming {
                d.flows[i].target = first.clone();
            }
            for w in events.windows(2) {
                d.flows.push(SequenceFlow::new(
                    ids.fresh(&format!("flow_{}", w[1].id)),
                    w[0].id.clone(),
                    w[1].id.clone(),
                ));
            }
            d.flows.push(SequenceFlow::new(ids.fresh(&format!("flow_{target}")), last, target.clone()));
            d.nodes.splice(ni..ni, events);
        }
    }
    Ok(())
}
