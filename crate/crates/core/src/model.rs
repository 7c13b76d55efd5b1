//! In-memory representation of BPMN process models.
//!
//! The same types carry both dialects: a pool-based model uses `pools` and
//! `message_flows`, an event-based model communicates through `event_links`
//! derived from throw/catch signals. All structural invariants are checked by
//! [`crate::validate::validate`].

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    StartEvent,
    EndEvent,
    Task,
    IntermediateThrowEvent,
    IntermediateCatchEvent,
    ExclusiveGateway,
    ParallelGateway,
}

impl NodeKind {
    pub fn is_gateway(self) -> bool {
        matches!(self, NodeKind::ExclusiveGateway | NodeKind::ParallelGateway)
    }

    /// Kinds that may throw a signal: intermediate throw events and signalled end events.
    pub fn can_throw(self) -> bool {
        matches!(self, NodeKind::IntermediateThrowEvent | NodeKind::EndEvent)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::StartEvent => "startEvent",
            NodeKind::EndEvent => "endEvent",
            NodeKind::Task => "task",
            NodeKind::IntermediateThrowEvent => "intermediateThrowEvent",
            NodeKind::IntermediateCatchEvent => "intermediateCatchEvent",
            NodeKind::ExclusiveGateway => "exclusiveGateway",
            NodeKind::ParallelGateway => "parallelGateway",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowNode {
    pub id: String,
    pub name: String,
    pub kind: NodeKind,
    pub signal: Option<String>,
    pub duration_days: Option<f64>,
    pub effort_wd: Option<f64>,
}

impl FlowNode {
    pub fn new(id: impl Into<String>, name: impl Into<String>, kind: NodeKind) -> Self {
        FlowNode {
            id: id.into(),
            name: name.into(),
            kind,
            signal: None,
            duration_days: None,
            effort_wd: None,
        }
    }

    pub fn with_signal(mut self, signal: impl Into<String>) -> Self {
        self.signal = Some(signal.into());
        self
    }

    pub fn with_cost(mut self, duration_days: f64, effort_wd: f64) -> Self {
        self.duration_days = Some(duration_days);
        self.effort_wd = Some(effort_wd);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFlow {
    pub id: String,
    pub source: String,
    pub target: String,
    pub probability: Option<f64>,
    pub label: Option<String>,
}

impl SequenceFlow {
    pub fn new(id: impl Into<String>, source: impl Into<String>, target: impl Into<String>) -> Self {
        SequenceFlow {
            id: id.into(),
            source: source.into(),
            target: target.into(),
            probability: None,
            label: None,
        }
    }

    pub fn with_probability(mut self, p: f64) -> Self {
        self.probability = Some(p);
        self
    }
}

/// One sub-process: a single BPMN process with its own start event.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagram {
    pub id: String,
    pub name: String,
    pub level: u32,
    pub role: String,
    pub nodes: Vec<FlowNode>,
    pub flows: Vec<SequenceFlow>,
}

impl Diagram {
    pub fn new(id: impl Into<String>, name: impl Into<String>, level: u32, role: impl Into<String>) -> Self {
        Diagram {
            id: id.into(),
            name: name.into(),
            level,
            role: role.into(),
            nodes: Vec::new(),
            flows: Vec::new(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn node_by_name(&self, name: &str) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn outgoing<'a>(&'a self, node_id: &'a str) -> impl Iterator<Item = &'a SequenceFlow> + 'a {
        self.flows.iter().filter(move |f| f.source == node_id)
    }

    pub fn incoming<'a>(&'a self, node_id: &'a str) -> impl Iterator<Item = &'a SequenceFlow> + 'a {
        self.flows.iter().filter(move |f| f.target == node_id)
    }

    /// The unique start event without incoming flows, if there is exactly one.
    pub fn start_node(&self) -> Option<&FlowNode> {
        let mut starts = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::StartEvent && self.incoming(&n.id).next().is_none());
        let first = starts.next()?;
        starts.next().is_none().then_some(first)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &FlowNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Task)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageFlow {
    pub id: String,
    pub name: String,
    pub source: String,
    pub target: String,
}

impl MessageFlow {
    pub fn new(id: impl Into<String>, source: impl Into<String>, target: impl Into<String>) -> Self {
        MessageFlow {
            id: id.into(),
            name: String::new(),
            source: source.into(),
            target: target.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub id: String,
    pub name: String,
    pub diagram_ids: Vec<String>,
}

/// Reference to a node inside a specific diagram.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub diagram: String,
    pub node: String,
}

impl NodeRef {
    pub fn new(diagram: impl Into<String>, node: impl Into<String>) -> Self {
        NodeRef {
            diagram: diagram.into(),
            node: node.into(),
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.diagram, self.node)
    }
}

/// A named signal pairing one throwing node with the nodes catching it.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLink {
    pub signal: String,
    pub thrower: NodeRef,
    pub catchers: Vec<NodeRef>,
}

impl EventLink {
    /// Participants of the link: the thrower followed by all catchers.
    pub fn participants(&self) -> impl Iterator<Item = &NodeRef> {
        std::iter::once(&self.thrower).chain(self.catchers.iter())
    }

    /// Builds links from the signals carried by the nodes of `diagrams`.
    ///
    /// Links are ordered by signal name; the first throwing node in diagram
    /// order becomes the thrower. Signals without any thrower produce no link,
    /// which `validate` then reports for the orphaned catchers.
    pub fn derive(diagrams: &[Diagram]) -> Vec<EventLink> {
        let mut by_signal: BTreeMap<&str, (Option<NodeRef>, Vec<NodeRef>)> = BTreeMap::new();
        for d in diagrams {
            for n in &d.nodes {
                let Some(signal) = n.signal.as_deref() else { continue };
                let entry = by_signal.entry(signal).or_default();
                let r = NodeRef::new(&d.id, &n.id);
                match n.kind {
                    NodeKind::IntermediateCatchEvent => entry.1.push(r),
                    k if k.can_throw() => {
                        if entry.0.is_none() {
                            entry.0 = Some(r);
                        }
                    }
                    _ => {}
                }
            }
        }
        by_signal
            .into_iter()
            .filter_map(|(signal, (thrower, catchers))| {
                thrower.map(|thrower| EventLink {
                    signal: signal.to_string(),
                    thrower,
                    catchers,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Milestone {
    pub name: String,
    pub day: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timeline {
    pub milestones: Vec<Milestone>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProcessModel {
    pub diagrams: Vec<Diagram>,
    pub pools: Vec<Pool>,
    pub message_flows: Vec<MessageFlow>,
    pub event_links: Vec<EventLink>,
    pub timeline: Option<Timeline>,
}

impl ProcessModel {
    /// Number of abstraction levels: the highest diagram level, at least 1.
    pub fn abstraction_levels(&self) -> u32 {
        self.diagrams.iter().map(|d| d.level).max().unwrap_or(1).max(1)
    }

    pub fn diagram(&self, id: &str) -> Option<&Diagram> {
        self.diagrams.iter().find(|d| d.id == id)
    }

    /// Finds the diagram containing node `node_id`.
    pub fn locate(&self, node_id: &str) -> Option<(&Diagram, &FlowNode)> {
        self.diagrams
            .iter()
            .find_map(|d| d.node(node_id).map(|n| (d, n)))
    }

    pub fn pool_of(&self, diagram_id: &str) -> Option<&Pool> {
        self.pools
            .iter()
            .find(|p| p.diagram_ids.iter().any(|d| d == diagram_id))
    }

    pub fn node_count(&self) -> usize {
        self.diagrams.iter().map(|d| d.nodes.len()).sum()
    }

    /// Recomputes `event_links` from the node signals.
    pub fn relink_events(&mut self) {
        self.event_links = EventLink::derive(&self.diagrams);
    }
}
