use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::canonical::{canonical_form, CanonicalForm};
use crate::model::ProcessModel;

/// Outcome of redundant-process elimination.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupReport {
    /// `(removed diagram id, surviving diagram id)` in model order.
    pub removed: Vec<(String, String)>,
    /// Message flows whose endpoints moved to a survivor.
    pub rewired: Vec<String>,
    /// Message flows dropped because both endpoints ended up in one diagram.
    pub dropped: Vec<String>,
}

impl DedupReport {
    pub fn is_empty(&self) -> bool {
        self.removed.is_empty() && self.rewired.is_empty() && self.dropped.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if self.removed.is_empty() {
            out.push_str("no redundant processes\n");
        }
        for (removed, kept) in &self.removed {
            let _ = writeln!(out, "removed {removed} -> kept {kept}");
        }
        for r in &self.rewired {
            let _ = writeln!(out, "rewired {r}");
        }
        for d in &self.dropped {
            let _ = writeln!(out, "dropped {d}");
        }
        out
    }
}

/// Removes every diagram structurally equal to another one, keeping the copy
/// on the lowest abstraction level (ties broken by smallest id). Message flows
/// touching a removed copy are moved to the equally named node of the
/// survivor.
pub fn deduplicate_processes(model: &ProcessModel) -> (ProcessModel, DedupReport) {
    let mut groups: BTreeMap<CanonicalForm, Vec<usize>> = BTreeMap::new();
    for (i, d) in model.diagrams.iter().enumerate() {
        groups.entry(canonical_form(d)).or_default().push(i);
    }

    let mut survivor_of: HashMap<&str, usize> = HashMap::new();
    for members in groups.values().filter(|g| g.len() > 1) {
        let keep = *members
            .iter()
            .min_by(|&&a, &&b| {
                let (da, db) = (&model.diagrams[a], &model.diagrams[b]);
                (da.level, &da.id).cmp(&(db.level, &db.id))
            })
            .expect("group is non-empty");
        for &m in members.iter().filter(|&&m| m != keep) {
            survivor_of.insert(&model.diagrams[m].id, keep);
        }
    }

    let mut report = DedupReport::default();
    if survivor_of.is_empty() {
        return (model.clone(), report);
    }

    // node id in a removed diagram -> (survivor diagram id, survivor node id)
    let mut node_map: HashMap<&str, (&str, &str)> = HashMap::new();
    for d in &model.diagrams {
        let Some(&keep) = survivor_of.get(d.id.as_str()) else { continue };
        let kept = &model.diagrams[keep];
        report.removed.push((d.id.clone(), kept.id.clone()));
        for n in &d.nodes {
            let twin = kept
                .node_by_name(&n.name)
                .expect("structurally equal diagrams share node names");
            node_map.insert(&n.id, (&kept.id, &twin.id));
        }
    }

    let home: HashMap<&str, &str> = model
        .diagrams
        .iter()
        .flat_map(|d| d.nodes.iter().map(move |n| (n.id.as_str(), d.id.as_str())))
        .collect();

    let mut out = model.clone();
    out.diagrams.retain(|d| !survivor_of.contains_key(d.id.as_str()));
    for p in &mut out.pools {
        p.diagram_ids.retain(|d| !survivor_of.contains_key(d.as_str()));
    }

    out.message_flows.clear();
    for m in &model.message_flows {
        let mut m = m.clone();
        let mut moved = false;
        let mut src_home = home.get(m.source.as_str()).copied();
        let mut tgt_home = home.get(m.target.as_str()).copied();
        if let Some(&(d, n)) = node_map.get(m.source.as_str()) {
            m.source = n.to_string();
            src_home = Some(d);
            moved = true;
        }
        if let Some(&(d, n)) = node_map.get(m.target.as_str()) {
            m.target = n.to_string();
            tgt_home = Some(d);
            moved = true;
        }
        if moved && src_home.is_some() && src_home == tgt_home {
            report.dropped.push(format!(
                "{} ({} -> {} now inside diagram {})",
                m.id,
                m.source,
                m.target,
                src_home.unwrap_or_default()
            ));
            continue;
        }
        if moved {
            report.rewired.push(format!("{} now {} -> {}", m.id, m.source, m.target));
        }
        out.message_flows.push(m);
    }

    (out, report)
}
