//! BPMN 2.0 XML reading and writing.
//!
//! Only the interchange subset needed by the pipeline is understood. Elements
//! outside it are skipped with a warning; diagram-interchange (layout) content
//! is skipped silently. Probabilities, costs, levels and the timeline live in
//! the [`EXT_NS`] extension namespace so stock editors still load the files.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use log::warn;
use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::name::{Namespace, ResolveResult};
use quick_xml::NsReader;
use thiserror::Error;

use crate::model::{
    Diagram, EventLink, FlowNode, MessageFlow, Milestone, NodeKind, Pool, ProcessModel,
    SequenceFlow, Timeline,
};
use crate::validate::{validate, Violation};

pub const BPMN_NS: &str = "http://www.omg.org/spec/BPMN/20100524/MODEL";
pub const BPMNDI_NS: &str = "http://www.omg.org/spec/BPMN/20100524/DI";
/// Namespace of the pepflow extension attributes and elements.
pub const EXT_NS: &str = "urn:pepflow:bpmn-extension:1.0";

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("malformed XML at byte {position}: {message}")]
    Xml { position: u64, message: String },
    #[error("document root must be a BPMN <definitions> element, found <{0}>")]
    NotBpmn(String),
    #[error("<{element}> is missing mandatory attribute `{attribute}`")]
    MissingAttribute { element: String, attribute: String },
    #[error("<{element}> attribute `{attribute}` has invalid value {value:?}")]
    InvalidAttribute {
        element: String,
        attribute: String,
        value: String,
    },
    #[error("duplicate element id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("model violates {} invariant(s): {}", .0.len(), join_violations(.0))]
    Validation(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ns {
    Bpmn,
    BpmnDi,
    Ext,
    None,
    Other,
}

fn classify_ns(r: &ResolveResult) -> Ns {
    match r {
        ResolveResult::Bound(Namespace(ns)) => match *ns {
            n if n == BPMN_NS.as_bytes() => Ns::Bpmn,
            n if n == EXT_NS.as_bytes() => Ns::Ext,
            n if n.starts_with(b"http://www.omg.org/spec/BPMN/20100524/DI")
                || n.starts_with(b"http://www.omg.org/spec/DD/") =>
            {
                Ns::BpmnDi
            }
            _ => Ns::Other,
        },
        ResolveResult::Unbound => Ns::None,
        ResolveResult::Unknown(_) => Ns::Other,
    }
}

#[derive(Debug)]
struct Element {
    ns: Ns,
    name: String,
    attrs: Vec<(Ns, String, String)>,
    children: Vec<Element>,
}

impl Element {
    fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(ns, n, _)| matches!(ns, Ns::None | Ns::Bpmn) && n == name)
            .map(|(_, _, v)| v.as_str())
    }

    fn ext_attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(ns, n, _)| *ns == Ns::Ext && n == name)
            .map(|(_, _, v)| v.as_str())
    }

    fn required(&self, name: &str) -> Result<&str, ParseError> {
        self.attr(name).ok_or_else(|| ParseError::MissingAttribute {
            element: self.name.clone(),
            attribute: name.to_string(),
        })
    }

    fn bpmn_children<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.children
            .iter()
            .filter(move |c| c.ns == Ns::Bpmn && c.name == name)
    }

    fn parse_ext<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, ParseError> {
        self.ext_attr(name)
            .map(|v| {
                v.trim().parse::<T>().map_err(|_| ParseError::InvalidAttribute {
                    element: self.name.clone(),
                    attribute: format!("ext:{name}"),
                    value: v.to_string(),
                })
            })
            .transpose()
    }
}

fn xml_err(reader: &NsReader<&[u8]>, e: impl std::fmt::Display) -> ParseError {
    ParseError::Xml {
        position: reader.buffer_position(),
        message: e.to_string(),
    }
}

fn open_element(reader: &NsReader<&[u8]>, e: &BytesStart) -> Result<Element, ParseError> {
    let (ns, _) = reader.resolve_element(e.name());
    let ns = classify_ns(&ns);
    let mut attrs = Vec::new();
    for a in e.attributes() {
        let a = a.map_err(|err| xml_err(reader, err))?;
        if a.key.as_namespace_binding().is_some() {
            continue;
        }
        let (ans, local) = reader.resolve_attribute(a.key);
        let value = a
            .unescape_value()
            .map_err(|err| xml_err(reader, err))?
            .into_owned();
        attrs.push((
            classify_ns(&ans),
            String::from_utf8_lossy(local.as_ref()).into_owned(),
            value,
        ));
    }
    Ok(Element {
        ns,
        name: String::from_utf8_lossy(e.local_name().as_ref()).into_owned(),
        attrs,
        children: Vec::new(),
    })
}

fn read_tree(text: &str) -> Result<Element, ParseError> {
    let mut reader = NsReader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Element> = Vec::new();
    let mut root = None;
    loop {
        let ev = reader.read_event().map_err(|e| xml_err(&reader, e))?;
        match ev {
            Event::Start(e) => {
                let el = open_element(&reader, &e)?;
                stack.push(el);
            }
            Event::Empty(e) => {
                let el = open_element(&reader, &e)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => root = Some(el),
                }
            }
            Event::End(_) => {
                let el = stack.pop().ok_or_else(|| xml_err(&reader, "unbalanced end tag"))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => root = Some(el),
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(xml_err(&reader, "unclosed elements at end of document"));
    }
    root.ok_or_else(|| xml_err(&reader, "empty document"))
}

fn node_kind(local: &str) -> Option<NodeKind> {
    Some(match local {
        "startEvent" => NodeKind::StartEvent,
        "endEvent" => NodeKind::EndEvent,
        "task" | "userTask" | "manualTask" | "serviceTask" | "scriptTask" | "sendTask"
        | "receiveTask" | "businessRuleTask" => NodeKind::Task,
        "intermediateThrowEvent" => NodeKind::IntermediateThrowEvent,
        "intermediateCatchEvent" => NodeKind::IntermediateCatchEvent,
        "exclusiveGateway" => NodeKind::ExclusiveGateway,
        "parallelGateway" => NodeKind::ParallelGateway,
        _ => return None,
    })
}

struct IdRegistry(HashSet<String>);

impl IdRegistry {
    fn claim(&mut self, id: &str) -> Result<(), ParseError> {
        if self.0.insert(id.to_string()) {
            Ok(())
        } else {
            Err(ParseError::DuplicateId(id.to_string()))
        }
    }
}

/// Parses a BPMN document and validates the resulting model.
pub fn parse(doc: &str) -> Result<ProcessModel, IngestError> {
    let model = parse_unchecked(doc)?;
    let violations = validate(&model);
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(IngestError::Validation(violations))
    }
}

/// Parses a BPMN document without running [`validate`].
pub fn parse_unchecked(doc: &str) -> Result<ProcessModel, ParseError> {
    let root = read_tree(doc)?;
    if root.ns != Ns::Bpmn || root.name != "definitions" {
        return Err(ParseError::NotBpmn(root.name));
    }

    let mut ids = IdRegistry(HashSet::new());
    let signals: HashMap<&str, &str> = root
        .bpmn_children("signal")
        .filter_map(|s| Some((s.attr("id")?, s.attr("name").or(s.attr("id"))?)))
        .collect();

    let mut model = ProcessModel::default();
    for child in &root.children {
        match (child.ns, child.name.as_str()) {
            (Ns::Bpmn, "signal") => {}
            (Ns::Bpmn, "collaboration") => read_collaboration(child, &mut model, &mut ids)?,
            (Ns::Bpmn, "process") => model.diagrams.push(read_process(child, &signals, &mut ids)?),
            (Ns::Ext, "timeline") => model.timeline = Some(read_timeline(child)?),
            (Ns::Bpmn, "extensionElements") => {
                for ext in &child.children {
                    if ext.ns == Ns::Ext && ext.name == "timeline" {
                        model.timeline = Some(read_timeline(ext)?);
                    }
                }
            }
            (Ns::BpmnDi, _) => {}
            (_, name) => warn!("ignoring unsupported element <{name}> in definitions"),
        }
    }
    model.event_links = EventLink::derive(&model.diagrams);
    Ok(model)
}

fn read_collaboration(el: &Element, model: &mut ProcessModel, ids: &mut IdRegistry) -> Result<(), ParseError> {
    for child in &el.children {
        match (child.ns, child.name.as_str()) {
            (Ns::Bpmn, "participant") => {
                let id = child.required("id")?;
                ids.claim(id)?;
                let diagram_ids = match (child.attr("processRef"), child.ext_attr("processRefs")) {
                    (Some(r), _) => vec![r.to_string()],
                    (None, Some(refs)) => refs.split_whitespace().map(str::to_string).collect(),
                    (None, None) => Vec::new(),
                };
                model.pools.push(Pool {
                    id: id.to_string(),
                    name: child.attr("name").unwrap_or_default().to_string(),
                    diagram_ids,
                });
            }
            (Ns::Bpmn, "messageFlow") => {
                let id = child.required("id")?;
                ids.claim(id)?;
                model.message_flows.push(MessageFlow {
                    id: id.to_string(),
                    name: child.attr("name").unwrap_or_default().to_string(),
                    source: child.required("sourceRef")?.to_string(),
                    target: child.required("targetRef")?.to_string(),
                });
            }
            (Ns::Bpmn, "extensionElements" | "documentation") | (Ns::BpmnDi, _) => {}
            (_, name) => warn!("ignoring unsupported element <{name}> in collaboration"),
        }
    }
    Ok(())
}

fn read_process(
    el: &Element,
    signals: &HashMap<&str, &str>,
    ids: &mut IdRegistry,
) -> Result<Diagram, ParseError> {
    let id = el.required("id")?;
    ids.claim(id)?;
    let level = el.parse_ext::<u32>("level")?.unwrap_or(1);
    let mut d = Diagram::new(id, el.attr("name").unwrap_or_default(), level, "");

    for child in &el.children {
        if child.ns != Ns::Bpmn {
            if child.ns != Ns::BpmnDi {
                warn!("ignoring foreign element <{}> in process {id}", child.name);
            }
            continue;
        }
        match child.name.as_str() {
            "laneSet" => {
                let mut lanes = child.bpmn_children("lane");
                if let Some(lane) = lanes.next() {
                    d.role = lane.attr("name").unwrap_or_default().to_string();
                }
                if lanes.next().is_some() {
                    warn!("process {id} has several lanes; using the first as its role");
                }
            }
            "sequenceFlow" => {
                let fid = child.required("id")?;
                ids.claim(fid)?;
                d.flows.push(SequenceFlow {
                    id: fid.to_string(),
                    source: child.required("sourceRef")?.to_string(),
                    target: child.required("targetRef")?.to_string(),
                    probability: child.parse_ext::<f64>("probability")?,
                    label: child.attr("name").map(str::to_string),
                });
            }
            "extensionElements" | "documentation" => {}
            local => match node_kind(local) {
                Some(kind) => {
                    let node = read_node(child, kind, signals)?;
                    ids.claim(&node.id)?;
                    d.nodes.push(node);
                }
                None => warn!("ignoring unsupported element <{local}> in process {id}"),
            },
        }
    }
    Ok(d)
}

fn read_node(el: &Element, kind: NodeKind, signals: &HashMap<&str, &str>) -> Result<FlowNode, ParseError> {
    let id = el.required("id")?;
    let mut node = FlowNode::new(id, el.attr("name").unwrap_or(id), kind);
    if let Some(def) = el.bpmn_children("signalEventDefinition").next() {
        let r = def.required("signalRef")?;
        node.signal = Some(signals.get(r).copied().unwrap_or(r).to_string());
    }
    node.duration_days = el.parse_ext::<f64>("durationDays")?;
    node.effort_wd = el.parse_ext::<f64>("effortWd")?;
    Ok(node)
}

fn read_timeline(el: &Element) -> Result<Timeline, ParseError> {
    let mut t = Timeline::default();
    for m in el.children.iter().filter(|c| c.ns == Ns::Ext && c.name == "milestone") {
        let name = m.required("name")?;
        let day = m.required("day")?;
        let day = day.trim().parse().map_err(|_| ParseError::InvalidAttribute {
            element: "milestone".into(),
            attribute: "day".into(),
            value: day.to_string(),
        })?;
        t.milestones.push(Milestone {
            name: name.to_string(),
            day,
        });
    }
    Ok(t)
}

fn esc(s: &str) -> std::borrow::Cow<'_, str> {
    escape(s)
}

/// Writes `model` as a BPMN document that [`parse`] reads back unchanged.
pub fn serialize(model: &ProcessModel) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<bpmn:definitions xmlns:bpmn=\"{BPMN_NS}\" xmlns:ext=\"{EXT_NS}\" id=\"pepflow_definitions\">"
    );

    let mut signal_names: Vec<&str> = model
        .diagrams
        .iter()
        .flat_map(|d| d.nodes.iter().filter_map(|n| n.signal.as_deref()))
        .collect();
    signal_names.sort_unstable();
    signal_names.dedup();
    let signal_ids: HashMap<&str, String> = signal_names
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, format!("pepflow_signal_{}", i + 1)))
        .collect();
    for s in &signal_names {
        let _ = writeln!(out, "  <bpmn:signal id=\"{}\" name=\"{}\"/>", signal_ids[s], esc(s));
    }

    if let Some(t) = &model.timeline {
        out.push_str("  <ext:timeline>\n");
        for m in &t.milestones {
            let _ = writeln!(out, "    <ext:milestone name=\"{}\" day=\"{}\"/>", esc(&m.name), m.day);
        }
        out.push_str("  </ext:timeline>\n");
    }

    if !model.pools.is_empty() || !model.message_flows.is_empty() {
        out.push_str("  <bpmn:collaboration id=\"pepflow_collaboration\">\n");
        for p in &model.pools {
            let _ = write!(out, "    <bpmn:participant id=\"{}\" name=\"{}\"", esc(&p.id), esc(&p.name));
            if let [single] = p.diagram_ids.as_slice() {
                let _ = write!(out, " processRef=\"{}\"", esc(single));
            } else if !p.diagram_ids.is_empty() {
                let _ = write!(out, " ext:processRefs=\"{}\"", esc(&p.diagram_ids.join(" ")));
            }
            out.push_str("/>\n");
        }
        for m in &model.message_flows {
            let _ = writeln!(
                out,
                "    <bpmn:messageFlow id=\"{}\" name=\"{}\" sourceRef=\"{}\" targetRef=\"{}\"/>",
                esc(&m.id),
                esc(&m.name),
                esc(&m.source),
                esc(&m.target)
            );
        }
        out.push_str("  </bpmn:collaboration>\n");
    }

    for d in &model.diagrams {
        let _ = writeln!(
            out,
            "  <bpmn:process id=\"{}\" name=\"{}\" isExecutable=\"false\" ext:level=\"{}\">",
            esc(&d.id),
            esc(&d.name),
            d.level
        );
        if !d.role.is_empty() {
            let _ = writeln!(out, "    <bpmn:laneSet id=\"pepflow_laneset_{}\">", esc(&d.id));
            let _ = writeln!(out, "      <bpmn:lane id=\"pepflow_lane_{}\" name=\"{}\">", esc(&d.id), esc(&d.role));
            for n in &d.nodes {
                let _ = writeln!(out, "        <bpmn:flowNodeRef>{}</bpmn:flowNodeRef>", esc(&n.id));
            }
            out.push_str("      </bpmn:lane>\n    </bpmn:laneSet>\n");
        }
        for n in &d.nodes {
            let _ = write!(out, "    <bpmn:{} id=\"{}\" name=\"{}\"", n.kind, esc(&n.id), esc(&n.name));
            if let Some(v) = n.duration_days {
                let _ = write!(out, " ext:durationDays=\"{v}\"");
            }
            if let Some(v) = n.effort_wd {
                let _ = write!(out, " ext:effortWd=\"{v}\"");
            }
            match &n.signal {
                Some(s) => {
                    let _ = writeln!(
                        out,
                        ">\n      <bpmn:signalEventDefinition signalRef=\"{}\"/>\n    </bpmn:{}>",
                        signal_ids[s.as_str()],
                        n.kind
                    );
                }
                None => out.push_str("/>\n"),
            }
        }
        for f in &d.flows {
            let _ = write!(
                out,
                "    <bpmn:sequenceFlow id=\"{}\" sourceRef=\"{}\" targetRef=\"{}\"",
                esc(&f.id),
                esc(&f.source),
                esc(&f.target)
            );
            if let Some(l) = &f.label {
                let _ = write!(out, " name=\"{}\"", esc(l));
            }
            if let Some(p) = f.probability {
                let _ = write!(out, " ext:probability=\"{p}\"");
            }
            out.push_str("/>\n");
        }
        out.push_str("  </bpmn:process>\n");
    }
    out.push_str("</bpmn:definitions>\n");
    out
}
