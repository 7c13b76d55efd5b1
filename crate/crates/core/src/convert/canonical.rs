use std::collections::HashMap;
use std::fmt;

use crate::model::Diagram;

/// Deterministic textual fingerprint of a diagram's structure.
///
/// Covers the role, every node (kind, name, signal, cost annotations) and the
/// flow relation expressed over node names, including probabilities and
/// labels. Ids, list order, diagram name and level do not contribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalForm(String);

impl CanonicalForm {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn canonical_form(d: &Diagram) -> CanonicalForm {
    let names: HashMap<&str, &str> = d.nodes.iter().map(|n| (n.id.as_str(), n.name.as_str())).collect();
    let name_of = |id: &str| match names.get(id) {
        Some(n) => format!("{n:?}"),
        None => format!("?{id:?}"),
    };

    let mut nodes: Vec<String> = d
        .nodes
        .iter()
        .map(|n| {
            format!(
                "node {} {:?} signal={:?} days={:?} wd={:?}",
                n.kind, n.name, n.signal, n.duration_days, n.effort_wd
            )
        })
        .collect();
    nodes.sort();

    let mut flows: Vec<String> = d
        .flows
        .iter()
        .map(|f| {
            format!(
                "flow {} -> {} p={:?} label={:?}",
                name_of(&f.source),
                name_of(&f.target),
                f.probability,
                f.label
            )
        })
        .collect();
    flows.sort();

    let mut text = format!("role {:?}\n", d.role);
    for line in nodes.iter().chain(flows.iter()) {
        text.push_str(line);
        text.push('\n');
    }
    CanonicalForm(text)
}
