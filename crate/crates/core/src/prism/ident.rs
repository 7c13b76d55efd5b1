use std::collections::HashSet;

const KEYWORDS: &[&str] = &[
    "A", "bool", "C", "ceil", "clock", "const", "ctmc", "double", "dtmc", "E", "endinit", "endinvariant",
    "endmodule", "endobservables", "endrewards", "endsystem", "F", "false", "filter", "floor", "formula", "func",
    "G", "global", "I", "init", "invariant", "int", "label", "log", "max", "mdp", "min", "mod", "module", "nondeterministic",
    "observable", "observables", "of", "P", "Pmax", "Pmin", "pomdp", "popta", "pow", "prob", "probabilistic", "pta",
    "R", "rate", "rewards", "Rmax", "Rmin", "S", "stochastic", "system", "true", "U", "W", "X",
];

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&s)
}

/// Maps arbitrary names to distinct identifiers. The same sequence of calls
/// always yields the same names.
#[derive(Debug, Clone, Default)]
pub struct Sanitizer {
    used: HashSet<String>,
}

impl Sanitizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_reserved(reserved: &[&str]) -> Self {
        Sanitizer {
            used: reserved.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn fresh(&mut self, raw: &str) -> String {
        let mut base: String = raw
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
            .collect();
        if !base.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
            base.insert(0, '_');
        }
        if KEYWORDS.contains(&base.as_str()) {
            base.push('_');
        }
        let mut name = base.clone();
        let mut n = 2;
        while self.used.contains(&name) {
            name = format!("{base}_{n}");
            n += 1;
        }
        self.used.insert(name.clone());
        name
    }
}
