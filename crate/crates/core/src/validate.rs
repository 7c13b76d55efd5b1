use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::model::{NodeKind, ProcessModel};

/// Tolerance for gateway branch probabilities summing to one.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// A broken invariant, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub element: String,
    pub rule: String,
}

impl Violation {
    fn new(element: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            element: element.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.rule)
    }
}

/// Checks every structural invariant of `model`. An empty result means the
/// model is well formed.
pub fn validate(model: &ProcessModel) -> Vec<Violation> {
    let mut out = Vec::new();

    if !model.message_flows.is_empty() && !model.event_links.is_empty() {
        out.push(Violation::new(
            "model",
            "message flows and event links are mutually exclusive",
        ));
    }

    let mut diagram_ids = HashSet::new();
    let mut node_home: HashMap<&str, &str> = HashMap::new();
    let mut element_ids = HashSet::new();

    for d in &model.diagrams {
        if !diagram_ids.insert(d.id.as_str()) {
            out.push(Violation::new(&d.id, "duplicate diagram id"));
        }
        if d.level == 0 {
            out.push(Violation::new(&d.id, "abstraction level must be at least 1"));
        }

        let starts = d.nodes.iter().filter(|n| n.kind == NodeKind::StartEvent).count();
        if starts != 1 {
            out.push(Violation::new(
                &d.id,
                format!("diagram must have exactly one start event (found {starts})"),
            ));
        }
        if !d.nodes.iter().any(|n| n.kind == NodeKind::EndEvent) {
            out.push(Violation::new(&d.id, "diagram must have at least one end event"));
        }

        let mut names = HashSet::new();
        for n in &d.nodes {
            if !element_ids.insert(n.id.as_str()) {
                out.push(Violation::new(&n.id, "duplicate element id"));
            }
            node_home.insert(&n.id, &d.id);
            if !names.insert(n.name.as_str()) {
                out.push(Violation::new(
                    &n.id,
                    format!("node name {:?} is not unique in diagram {}", n.name, d.id),
                ));
            }
            let signalled = matches!(
                n.kind,
                NodeKind::IntermediateThrowEvent | NodeKind::IntermediateCatchEvent
            );
            match (&n.signal, n.kind) {
                (None, _) if signalled => {
                    out.push(Violation::new(&n.id, "throw/catch event requires a signal"))
                }
                (Some(_), NodeKind::EndEvent) => {}
                (Some(_), _) if !signalled => {
                    out.push(Violation::new(&n.id, "only throw/catch/end events carry a signal"))
                }
                _ => {}
            }
            for (what, value) in [("duration_days", n.duration_days), ("effort_wd", n.effort_wd)] {
                let Some(v) = value else { continue };
                if n.kind != NodeKind::Task {
                    out.push(Violation::new(&n.id, format!("{what} is only allowed on tasks")));
                }
                if !(v.is_finite() && v >= 0.0) {
                    out.push(Violation::new(&n.id, format!("{what} must be a nonnegative number")));
                }
            }
        }

        for f in &d.flows {
            if !element_ids.insert(f.id.as_str()) {
                out.push(Violation::new(&f.id, "duplicate element id"));
            }
            for end in [&f.source, &f.target] {
                if d.node(end).is_none() {
                    out.push(Violation::new(
                        &f.id,
                        format!("sequence flow endpoint {end} is not a node of diagram {}", d.id),
                    ));
                }
            }
            if let Some(p) = f.probability {
                let from_xor = d
                    .node(&f.source)
                    .is_some_and(|n| n.kind == NodeKind::ExclusiveGateway);
                if !from_xor {
                    out.push(Violation::new(
                        &f.id,
                        "probability is only allowed on flows leaving an exclusive gateway",
                    ));
                }
                if !(p > 0.0 && p <= 1.0) {
                    out.push(Violation::new(&f.id, "probability must lie in (0,1]"));
                }
            }
        }

        for g in d.nodes.iter().filter(|n| n.kind == NodeKind::ExclusiveGateway) {
            let probs: Vec<Option<f64>> = d.outgoing(&g.id).map(|f| f.probability).collect();
            let annotated = probs.iter().filter(|p| p.is_some()).count();
            if annotated == 0 {
                continue;
            }
            if annotated != probs.len() {
                out.push(Violation::new(
                    &g.id,
                    "outgoing flows must be either all or none annotated with probabilities",
                ));
                continue;
            }
            let sum: f64 = probs.iter().flatten().sum();
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                out.push(Violation::new(
                    &g.id,
                    format!("probabilities must sum to 1 (sum is {sum})"),
                ));
            }
        }
    }

    let mut pool_of: HashMap<&str, &str> = HashMap::new();
    for p in &model.pools {
        if !element_ids.insert(p.id.as_str()) {
            out.push(Violation::new(&p.id, "duplicate element id"));
        }
        for d in &p.diagram_ids {
            if !diagram_ids.contains(d.as_str()) {
                out.push(Violation::new(&p.id, format!("pool references unknown diagram {d}")));
            }
            if let Some(prev) = pool_of.insert(d, &p.id) {
                out.push(Violation::new(
                    d,
                    format!("diagram belongs to more than one pool ({prev}, {})", p.id),
                ));
            }
        }
    }

    for m in &model.message_flows {
        if !element_ids.insert(m.id.as_str()) {
            out.push(Violation::new(&m.id, "duplicate element id"));
        }
        let src = node_home.get(m.source.as_str()).copied();
        let tgt = node_home.get(m.target.as_str()).copied();
        if src.is_none() {
            out.push(Violation::new(&m.id, format!("message flow source {} does not exist", m.source)));
        }
        if tgt.is_none() {
            out.push(Violation::new(&m.id, format!("message flow target {} does not exist", m.target)));
        }
        if let (Some(a), Some(b)) = (src, tgt) {
            let same_pool = matches!((pool_of.get(a), pool_of.get(b)), (Some(x), Some(y)) if x == y);
            if a == b || same_pool {
                out.push(Violation::new(&m.id, "message flow must cross pools"));
            }
        }
    }

    check_event_links(model, &mut out);

    if let Some(t) = &model.timeline {
        for w in t.milestones.windows(2) {
            if w[1].day <= w[0].day {
                out.push(Violation::new(
                    &w[1].name,
                    "milestone days must strictly increase",
                ));
            }
        }
    }

    out
}

fn check_event_links(model: &ProcessModel, out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    // (diagram, node) pairs covered by some link, with the signal they were linked under
    let mut covered: BTreeMap<(&str, &str), &str> = BTreeMap::new();

    for link in &model.event_links {
        let element = format!("signal {}", link.signal);
        if !seen.insert(link.signal.as_str()) {
            out.push(Violation::new(&element, "exactly one thrower per signal (duplicate link)"));
        }
        if link.catchers.is_empty() {
            out.push(Violation::new(&element, "event link needs at least one catcher"));
        }
        for (i, r) in link.participants().enumerate() {
            let node = model.diagram(&r.diagram).and_then(|d| d.node(&r.node));
            let Some(node) = node else {
                out.push(Violation::new(&element, format!("event link references unknown node {r}")));
                continue;
            };
            let kind_ok = if i == 0 {
                node.kind.can_throw()
            } else {
                node.kind == NodeKind::IntermediateCatchEvent
            };
            if !kind_ok {
                let role = if i == 0 { "thrower" } else { "catcher" };
                out.push(Violation::new(&node.id, format!("{} cannot act as {role}", node.kind)));
            }
            if node.signal.as_deref() != Some(link.signal.as_str()) {
                out.push(Violation::new(
                    &node.id,
                    format!("node signal does not match event link {}", link.signal),
                ));
            }
            covered.insert((&r.diagram, &r.node), &link.signal);
        }
    }

    for d in &model.diagrams {
        for n in &d.nodes {
            let Some(signal) = &n.signal else { continue };
            if covered.contains_key(&(d.id.as_str(), n.id.as_str())) {
                continue;
            }
            let rule = if n.kind == NodeKind::IntermediateCatchEvent {
                format!("signal {signal} has no thrower")
            } else {
                format!("exactly one thrower per signal ({signal} is thrown elsewhere)")
            };
            out.push(Violation::new(&n.id, rule));
        }
    }
}
