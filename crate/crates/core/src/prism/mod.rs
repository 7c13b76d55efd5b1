//! Text output in the guarded-command language of the PRISM checker, and a
//! reader for the subset that is written.

mod ident;
mod read;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

pub use ident::{is_identifier, Sanitizer};
pub use read::{read_model, ReadError, ReadModel};

use crate::mdp::{MdpProgram, DAYS_REWARD, DONE_LABEL, EFFORT_REWARD};
use crate::model::ProcessModel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmitError {
    #[error("no modules to emit")]
    NoModules,
    #[error("identifier {0:?} cannot be written in the target syntax")]
    InvalidIdentifier(String),
}

/// Target names chosen for one program.
#[derive(Debug, Clone, Default)]
pub struct NameMap {
    pub modules: Vec<String>,
    pub variables: Vec<String>,
    pub actions: BTreeMap<String, String>,
    /// `(module, command)` -> private label of a rewarded task command.
    pub task_actions: BTreeMap<(usize, usize), String>,
    pub labels: Vec<String>,
}

/// Assigns every module, variable, action and label a valid, distinct name.
pub fn assign_names(program: &MdpProgram) -> NameMap {
    let mut idents = Sanitizer::new();
    let mut names = NameMap::default();
    for m in &program.modules {
        names.modules.push(idents.fresh(&m.name));
    }
    for m in &program.modules {
        names.variables.push(idents.fresh(&format!("s_{}", m.name)));
    }
    for m in &program.modules {
        for c in &m.commands {
            if let Some(a) = &c.action {
                if !names.actions.contains_key(a) {
                    let id = idents.fresh(a);
                    names.actions.insert(a.clone(), id);
                }
            }
        }
    }
    // Transition rewards attach to action labels, so rewarded task commands
    // get a label of their own.
    for (mi, m) in program.modules.iter().enumerate() {
        for (ci, c) in m.commands.iter().enumerate() {
            let rewarded = program
                .rewards
                .iter()
                .any(|r| r.values.get(&(mi, ci)).is_some_and(|&v| v != 0.0));
            if rewarded && c.action.is_none() {
                let base = format!("t_{}_{}", m.name, c.task.as_deref().unwrap_or(&c.source));
                names.task_actions.insert((mi, ci), idents.fresh(&base));
            }
        }
    }
    let mut label_idents = Sanitizer::with_reserved(&["init", "deadlock"]);
    for l in &program.labels {
        names.labels.push(label_idents.fresh(&l.name));
    }
    names
}

fn check(name: &str) -> Result<&str, EmitError> {
    if is_identifier(name) {
        Ok(name)
    } else {
        Err(EmitError::InvalidIdentifier(name.to_string()))
    }
}

/// Writes the model file. Output is byte-identical for identical input.
pub fn emit_model(program: &MdpProgram) -> Result<String, EmitError> {
    if program.modules.is_empty() {
        return Err(EmitError::NoModules);
    }
    let names = assign_names(program);
    let mut out = String::from("mdp\n");

    for (mi, m) in program.modules.iter().enumerate() {
        let var = check(&names.variables[mi])?;
        let _ = writeln!(out, "\nmodule {}", check(&names.modules[mi])?);
        let _ = writeln!(out, "  {var} : [0..{}] init {};", m.max_location(), m.initial);
        if !m.commands.is_empty() {
            out.push('\n');
        }
        for (ci, c) in m.commands.iter().enumerate() {
            let action = match (&c.action, names.task_actions.get(&(mi, ci))) {
                (Some(a), _) => check(&names.actions[a])?,
                (None, Some(t)) => check(t)?,
                (None, None) => "",
            };
            let _ = write!(out, "  [{action}] {var}={} -> ", c.guard);
            match c.branches.as_slice() {
                [(_, l)] => {
                    let _ = write!(out, "({var}'={l})");
                }
                branches => {
                    for (i, (p, l)) in branches.iter().enumerate() {
                        if i > 0 {
                            out.push_str(" + ");
                        }
                        let _ = write!(out, "{p} : ({var}'={l})");
                    }
                }
            }
            out.push_str(";\n");
        }
        out.push_str("endmodule\n");
    }

    for r in &program.rewards {
        let _ = writeln!(out, "\nrewards \"{}\"", r.name);
        for (&(mi, ci), &v) in &r.values {
            if v == 0.0 {
                continue;
            }
            if let Some(t) = names.task_actions.get(&(mi, ci)) {
                let _ = writeln!(out, "  [{t}] true : {v};");
            }
        }
        out.push_str("endrewards\n");
    }

    out.push('\n');
    for (l, name) in program.labels.iter().zip(&names.labels) {
        let _ = writeln!(out, "label \"{name}\" = {};", label_expr(l, &names.variables));
    }
    Ok(out)
}

fn label_expr(l: &crate::mdp::StateLabel, vars: &[String]) -> String {
    if l.disjuncts.is_empty() {
        return "false".to_string();
    }
    let conj: Vec<String> = l
        .disjuncts
        .iter()
        .map(|c| {
            if c.is_empty() {
                "true".to_string()
            } else {
                c.iter().map(|&(m, v)| format!("{}={v}", vars[m])).collect::<Vec<_>>().join(" & ")
            }
        })
        .collect();
    if conj.len() == 1 {
        conj.into_iter().next().unwrap_or_default()
    } else {
        conj.iter().map(|c| format!("({c})")).collect::<Vec<_>>().join(" | ")
    }
}

/// The property names in emission order.
pub const PROPERTY_NAMES: [&str; 5] = ["phi1", "phi2", "phi3", "phi4", "phi5"];

/// Property formulas for `model`; the reward queries only when it has a timeline.
pub fn properties(model: &ProcessModel) -> Vec<(&'static str, &'static str, String)> {
    let mut props = vec![
        (
            "phi1",
            "process completes with probability 1 under every scheduler",
            format!("Pmin=? [ F \"{DONE_LABEL}\" ]"),
        ),
        (
            "phi2",
            "process is able to complete",
            format!("Pmax=? [ F \"{DONE_LABEL}\" ]"),
        ),
        (
            "phi3",
            "no execution stops outside the terminal locations",
            format!("filter(forall, \"deadlock\" => \"{DONE_LABEL}\")"),
        ),
    ];
    if model.timeline.is_some() {
        props.push((
            "phi4",
            "minimum days to complete",
            format!("Rmin{{\"{DAYS_REWARD}\"}}=? [ F \"{DONE_LABEL}\" ]"),
        ));
        props.push((
            "phi5",
            "expected effort in working days, worst case",
            format!("Rmax{{\"{EFFORT_REWARD}\"}}=? [ F \"{DONE_LABEL}\" ]"),
        ));
    }
    props
}

/// Writes the property file: one commented formula per property.
pub fn emit_properties(model: &ProcessModel) -> String {
    let mut out = String::new();
    for (name, what, formula) in properties(model) {
        let _ = writeln!(out, "// {name}: {what}\n{formula}\n");
    }
    out
}
