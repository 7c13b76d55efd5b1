//! Recursive-descent reader for the model files produced by `emit_model`:
//! `mdp`, modules with one bounded integer variable, guarded commands over
//! that variable, action-labelled reward items and state labels.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::mdp::{
    compose_modules, Command, ComposeError, ComposeOptions, ComposedMdp, MdpModule, RewardStructure, StateLabel,
};

#[derive(Debug, Error, PartialEq)]
pub enum ReadError {
    #[error("line {line}: expected {expected}, found {found:?}")]
    Unexpected {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}: unknown variable {name}")]
    UnknownVariable { line: usize, name: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Str(String),
    Sym(&'static str),
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Num(s) => s.clone(),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Sym(s) => s.to_string(),
        }
    }
}

const SYMBOLS: &[&str] = &["->", "..", "[", "]", "(", ")", ":", ";", "=", "'", "+", "&", "|"];

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ReadError> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let src = raw.split("//").next().unwrap_or("");
        let b = src.as_bytes();
        let mut i = 0;
        'scan: while i < b.len() {
            let c = b[i] as char;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), line));
                continue;
            }
            if c.is_ascii_digit() || (c == '.' && b.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                while i < b.len() {
                    let d = b[i] as char;
                    let exp_sign = (d == '-' || d == '+') && matches!(b[i - 1], b'e' | b'E');
                    let dot = d == '.' && b.get(i + 1) != Some(&b'.');
                    if d.is_ascii_digit() || dot || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                out.push((Tok::Num(src[start..i].to_string()), line));
                continue;
            }
            if c == '"' {
                let end = src[i + 1..].find('"').ok_or_else(|| ReadError::Invalid {
                    line,
                    message: "unterminated string".into(),
                })?;
                out.push((Tok::Str(src[i + 1..i + 1 + end].to_string()), line));
                i += end + 2;
                continue;
            }
            for s in SYMBOLS {
                if src[i..].starts_with(s) {
                    out.push((Tok::Sym(s), line));
                    i += s.len();
                    continue 'scan;
                }
            }
            return Err(ReadError::Invalid {
                line,
                message: format!("unexpected character {c:?}"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map_or(0, |t| t.1)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn unexpected<T>(&self, expected: &str) -> Result<T, ReadError> {
        Err(ReadError::Unexpected {
            line: self.line(),
            expected: expected.to_string(),
            found: self.peek().map_or("end of input".into(), Tok::text),
        })
    }

    fn sym(&mut self, s: &'static str) -> Result<(), ReadError> {
        if self.peek() == Some(&Tok::Sym(s)) {
            self.pos += 1;
            Ok(())
        } else {
            self.unexpected(&format!("'{s}'"))
        }
    }

    fn eat(&mut self, s: &'static str) -> bool {
        let hit = self.peek() == Some(&Tok::Sym(s));
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn keyword(&mut self, k: &str) -> Result<(), ReadError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == k => {
                self.pos += 1;
                Ok(())
            }
            _ => self.unexpected(k),
        }
    }

    fn at_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == k)
    }

    fn ident(&mut self) -> Result<String, ReadError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.unexpected("identifier"),
        }
    }

    fn string(&mut self) -> Result<String, ReadError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.unexpected("string"),
        }
    }

    fn number(&mut self) -> Result<f64, ReadError> {
        match self.peek() {
            Some(Tok::Num(s)) => {
                let line = self.line();
                let v = s.parse().map_err(|_| ReadError::Invalid {
                    line,
                    message: format!("bad number {s}"),
                })?;
                self.pos += 1;
                Ok(v)
            }
            _ => self.unexpected("number"),
        }
    }

    fn int(&mut self) -> Result<u32, ReadError> {
        let line = self.line();
        let v = self.number()?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(ReadError::Invalid {
                line,
                message: format!("{v} is not a location"),
            });
        }
        Ok(v as u32)
    }
}

/// A model file turned back into modules.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadModel {
    pub modules: Vec<MdpModule>,
    pub rewards: Vec<RewardStructure>,
    pub labels: Vec<StateLabel>,
}

impl ReadModel {
    pub fn compose(&self, opts: &ComposeOptions) -> Result<ComposedMdp, ComposeError> {
        compose_modules(&self.modules, &self.rewards, &self.labels, opts)
    }
}

pub fn read_model(text: &str) -> Result<ReadModel, ReadError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    p.keyword("mdp")?;
    let mut modules = Vec::new();
    let mut vars: HashMap<String, usize> = HashMap::new();
    let mut reward_items: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    let mut labels = Vec::new();

    while p.peek().is_some() {
        if p.at_keyword("module") {
            p.pos += 1;
            let name = p.ident()?;
            let var = p.ident()?;
            p.sym(":")?;
            p.sym("[")?;
            let lo = p.int()?;
            p.sym("..")?;
            let hi = p.int()?;
            p.sym("]")?;
            p.keyword("init")?;
            let initial = p.int()?;
            p.sym(";")?;
            if lo != 0 || initial > hi {
                return Err(ReadError::Invalid {
                    line: p.line(),
                    message: format!("variable {var} must range from 0 and contain its initial value"),
                });
            }
            let mut commands = Vec::new();
            while p.peek() == Some(&Tok::Sym("[")) {
                commands.push(command(&mut p, &var, hi)?);
            }
            p.keyword("endmodule")?;
            vars.insert(var, modules.len());
            modules.push(MdpModule {
                name,
                num_locations: hi + 1,
                initial,
                done: hi,
                commands,
                location_of: BTreeMap::new(),
            });
        } else if p.at_keyword("rewards") {
            p.pos += 1;
            let name = p.string()?;
            let mut items = Vec::new();
            while p.eat("[") {
                let action = p.ident()?;
                p.sym("]")?;
                p.keyword("true")?;
                p.sym(":")?;
                let v = p.number()?;
                p.sym(";")?;
                items.push((action, v));
            }
            p.keyword("endrewards")?;
            reward_items.push((name, items));
        } else if p.at_keyword("label") {
            p.pos += 1;
            let name = p.string()?;
            p.sym("=")?;
            let disjuncts = label_body(&mut p, &vars)?;
            p.sym(";")?;
            labels.push(StateLabel { name, disjuncts });
        } else {
            return p.unexpected("module, rewards or label");
        }
    }

    let mut by_action: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
    for (mi, m) in modules.iter().enumerate() {
        for (ci, c) in m.commands.iter().enumerate() {
            if let Some(a) = &c.action {
                by_action.entry(a.as_str()).or_default().push((mi, ci));
            }
        }
    }
    let rewards = reward_items
        .iter()
        .map(|(name, items)| {
            let mut values = BTreeMap::new();
            for (action, v) in items {
                // A reward on a synchronised action is paid once per joint
                // step; charge it to the first participating command.
                let mut seen_modules = Vec::new();
                for &(mi, ci) in by_action.get(action.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
                    if seen_modules.first().is_some_and(|&f| f != mi) {
                        continue;
                    }
                    seen_modules.push(mi);
                    *values.entry((mi, ci)).or_insert(0.0) += v;
                }
            }
            RewardStructure {
                name: name.clone(),
                values,
            }
        })
        .collect();

    Ok(ReadModel {
        modules,
        rewards,
        labels,
    })
}

fn command(p: &mut Parser, var: &str, hi: u32) -> Result<Command, ReadError> {
    p.sym("[")?;
    let action = match p.peek() {
        Some(Tok::Ident(_)) => Some(p.ident()?),
        _ => None,
    };
    p.sym("]")?;
    let line = p.line();
    let guard_var = p.ident()?;
    if guard_var != var {
        return Err(ReadError::UnknownVariable { line, name: guard_var });
    }
    p.sym("=")?;
    let guard = p.int()?;
    p.sym("->")?;
    let mut branches = Vec::new();
    loop {
        let prob = match p.peek() {
            Some(Tok::Num(_)) => {
                let v = p.number()?;
                p.sym(":")?;
                v
            }
            _ => 1.0,
        };
        p.sym("(")?;
        let line = p.line();
        let target_var = p.ident()?;
        if target_var != var {
            return Err(ReadError::UnknownVariable { line, name: target_var });
        }
        p.sym("'")?;
        p.sym("=")?;
        let target = p.int()?;
        p.sym(")")?;
        if target > hi || guard > hi {
            return Err(ReadError::Invalid {
                line,
                message: format!("location out of range 0..{hi}"),
            });
        }
        branches.push((prob, target));
        if !p.eat("+") {
            break;
        }
    }
    p.sym(";")?;
    Ok(Command {
        action,
        guard,
        branches,
        source: format!("line {line}"),
        task: None,
    })
}

fn label_body(p: &mut Parser, vars: &HashMap<String, usize>) -> Result<Vec<Vec<(usize, u32)>>, ReadError> {
    let mut disjuncts = Vec::new();
    loop {
        let paren = p.eat("(");
        if p.at_keyword("false") {
            p.pos += 1;
        } else if p.at_keyword("true") {
            p.pos += 1;
            disjuncts.push(Vec::new());
        } else {
            let mut conj = Vec::new();
            loop {
                let line = p.line();
                let v = p.ident()?;
                let &m = vars.get(&v).ok_or(ReadError::UnknownVariable { line, name: v })?;
                p.sym("=")?;
                conj.push((m, p.int()?));
                if !p.eat("&") {
                    break;
                }
            }
            disjuncts.push(conj);
        }
        if paren {
            p.sym(")")?;
        }
        if !p.eat("|") {
            break;
        }
    }
    Ok(disjuncts)
}
