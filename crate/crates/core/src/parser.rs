//! Reader and writer for the Cassandra `.pomdp` text format.
//!
//! The grammar accepted here is documented in `docs/pomdp-format.md`.
//! Parsing is a single forward pass over a token stream. Rewards that
//! depend on the next state or observation are folded into `R(s, a)` by
//! taking their expectation under `T` and `O`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::model::{ModelError, ModelParts, PomdpModel, SparseRows};

/// Raw `.pomdp` text and where it came from.
#[derive(Debug, Clone)]
pub struct PomdpSource {
    pub text: String,
    pub origin: String,
}

impl PomdpSource {
    pub fn from_str(text: impl Into<String>) -> Self {
        PomdpSource {
            text: text.into(),
            origin: "<memory>".into(),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        Ok(PomdpSource {
            text: std::fs::read_to_string(path)?,
            origin: path.display().to_string(),
        })
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{origin}:{line}:{column}: {message}")]
    Syntax {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: {message}")]
    Semantic { origin: String, message: String },
    #[error("{origin}:{line}: unsupported construct '{construct}'")]
    Unsupported {
        origin: String,
        line: usize,
        construct: String,
    },
}

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let mut start: Option<usize> = None;
        for (i, ch) in line.char_indices() {
            if ch.is_whitespace() || ch == ':' {
                if let Some(s) = start.take() {
                    out.push(Token {
                        text: &line[s..i],
                        line: ln + 1,
                        column: s + 1,
                    });
                }
                if ch == ':' {
                    out.push(Token {
                        text: &line[i..i + 1],
                        line: ln + 1,
                        column: i + 1,
                    });
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            out.push(Token {
                text: &line[s..],
                line: ln + 1,
                column: s + 1,
            });
        }
    }
    out
}

const KEYWORDS: [&str; 9] = [
    "discount",
    "values",
    "states",
    "actions",
    "observations",
    "start",
    "T",
    "O",
    "R",
];

/// An index selector: one element or the `*` wildcard.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Sel {
    One(usize),
    All,
}

impl Sel {
    fn expand(self, n: usize) -> std::ops::Range<usize> {
        match self {
            Sel::One(i) => i..i + 1,
            Sel::All => 0..n,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct NextReward {
    base: f64,
    by_obs: BTreeMap<usize, f64>,
}

/// Reward specification for one `(a, s)` pair, layered by specificity.
#[derive(Debug, Clone, Default)]
struct RewardCell {
    base: f64,
    by_next: BTreeMap<usize, NextReward>,
}

impl RewardCell {
    fn set(&mut self, next: Sel, obs: Sel, v: f64, n_s: usize) {
        match (next, obs) {
            (Sel::All, Sel::All) => {
                self.base = v;
                self.by_next.clear();
            }
            (Sel::One(j), Sel::All) => {
                self.by_next.insert(
                    j,
                    NextReward {
                        base: v,
                        by_obs: BTreeMap::new(),
                    },
                );
            }
            (next, Sel::One(z)) => {
                for j in next.expand(n_s) {
                    let base = self.base;
                    self.by_next
                        .entry(j)
                        .or_insert_with(|| NextReward {
                            base,
                            by_obs: BTreeMap::new(),
                        })
                        .by_obs
                        .insert(z, v);
                }
            }
        }
    }

    fn is_plain(&self) -> bool {
        self.by_next.is_empty()
    }
}

struct Parser<'a> {
    origin: &'a str,
    tokens: Vec<Token<'a>>,
    pos: usize,
    gamma: Option<f64>,
    cost: bool,
    states: Option<Vec<String>>,
    actions: Option<Vec<String>>,
    observations: Option<Vec<String>>,
    start: Option<Vec<f64>>,
    transition: Vec<BTreeMap<usize, f64>>,
    observation: Vec<BTreeMap<usize, f64>>,
    reward: Vec<RewardCell>,
}

impl<'a> Parser<'a> {
    fn syntax<T>(&self, at: usize, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, column) = match self.tokens.get(at).or(self.tokens.last()) {
            Some(t) => (t.line, t.column),
            None => (1, 1),
        };
        Err(ParseError::Syntax {
            origin: self.origin.to_string(),
            line,
            column,
            message: message.into(),
        })
    }

    fn semantic<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Semantic {
            origin: self.origin.to_string(),
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(|t| t.text)
    }

    fn peek_at(&self, i: usize) -> Option<&'a str> {
        self.tokens.get(i).map(|t| t.text)
    }

    fn next(&mut self) -> Option<&'a str> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_colon(&mut self) -> Result<(), ParseError> {
        match self.next() {
            Some(":") => Ok(()),
            _ => self.syntax(self.pos.saturating_sub(1), "expected ':'"),
        }
    }

    /// True when the token at `i` begins a new top-level entry.
    fn is_entry_start(&self, i: usize) -> bool {
        match self.peek_at(i) {
            Some("start") => matches!(self.peek_at(i + 1), Some(":" | "include" | "exclude")),
            Some(t) if KEYWORDS.contains(&t) => self.peek_at(i + 1) == Some(":"),
            _ => false,
        }
    }

    /// Tokens up to the next entry keyword.
    fn take_values(&mut self) -> (usize, Vec<&'a str>) {
        let first = self.pos;
        let mut out = Vec::new();
        while self.pos < self.tokens.len() && !self.is_entry_start(self.pos) {
            out.push(self.tokens[self.pos].text);
            self.pos += 1;
        }
        (first, out)
    }

    fn numbers(&self, at: usize, toks: &[&str], count: usize) -> Result<Vec<f64>, ParseError> {
        if toks.len() != count {
            return self.syntax(
                at,
                format!("expected {count} numbers, found {} tokens", toks.len()),
            );
        }
        toks.iter()
            .enumerate()
            .map(|(k, t)| match t.parse::<f64>() {
                Ok(v) => Ok(v),
                Err(_) => self.syntax(at + k, format!("expected a number, found '{t}'")),
            })
            .collect()
    }

    fn parse(mut self) -> Result<PomdpModel, ParseError> {
        while let Some(tok) = self.peek() {
            let at = self.pos;
            if !self.is_entry_start(at) {
                return self.syntax(at, format!("unexpected token '{tok}'"));
            }
            self.pos += 1;
            match tok {
                "discount" => {
                    self.expect_colon()?;
                    let (at, v) = self.take_values();
                    self.gamma = Some(self.numbers(at, &v, 1)?[0]);
                }
                "values" => {
                    self.expect_colon()?;
                    let (at, v) = self.take_values();
                    self.cost = match v.as_slice() {
                        ["reward"] => false,
                        ["cost"] => true,
                        _ => return self.syntax(at, "expected 'reward' or 'cost'"),
                    };
                }
                "states" | "actions" | "observations" => {
                    self.expect_colon()?;
                    let (at, v) = self.take_values();
                    let names = self.names(at, &v)?;
                    match tok {
                        "states" => self.states = Some(names),
                        "actions" => self.actions = Some(names),
                        _ => self.observations = Some(names),
                    }
                }
                "start" => self.parse_start(at)?,
                "T" | "O" | "R" => {
                    self.ensure_declared(at)?;
                    self.expect_colon()?;
                    match tok {
                        "T" => self.parse_transition(at)?,
                        "O" => self.parse_observation(at)?,
                        _ => self.parse_reward(at)?,
                    }
                }
                _ => unreachable!(),
            }
        }
        self.finish()
    }

    fn names(&self, at: usize, toks: &[&str]) -> Result<Vec<String>, ParseError> {
        match toks {
            [] => self.syntax(at, "expected a count or a list of names"),
            [single] if single.parse::<usize>().is_ok() => {
                let n: usize = single.parse().unwrap();
                if n == 0 {
                    return self.syntax(at, "count must be at least 1");
                }
                Ok((0..n).map(|i| i.to_string()).collect())
            }
            names => Ok(names.iter().map(|s| s.to_string()).collect()),
        }
    }

    fn ensure_declared(&mut self, at: usize) -> Result<(), ParseError> {
        let (Some(s), Some(a), Some(_)) = (&self.states, &self.actions, &self.observations) else {
            return self.syntax(
                at,
                "states, actions and observations must be declared first",
            );
        };
        let rows = s.len() * a.len();
        if self.transition.is_empty() {
            self.transition = vec![BTreeMap::new(); rows];
            self.observation = vec![BTreeMap::new(); rows];
            self.reward = vec![RewardCell::default(); rows];
        }
        Ok(())
    }

    fn n_s(&self) -> usize {
        self.states.as_ref().map_or(0, |v| v.len())
    }

    fn n_a(&self) -> usize {
        self.actions.as_ref().map_or(0, |v| v.len())
    }

    fn n_z(&self) -> usize {
        self.observations.as_ref().map_or(0, |v| v.len())
    }

    fn resolve(&self, at: usize, which: &str, tok: &str) -> Result<Sel, ParseError> {
        if tok == "*" {
            return Ok(Sel::All);
        }
        let names = match which {
            "state" => self.states.as_ref(),
            "action" => self.actions.as_ref(),
            _ => self.observations.as_ref(),
        }
        .expect("declared before use");
        if let Some(i) = names.iter().position(|n| n == tok) {
            return Ok(Sel::One(i));
        }
        match tok.parse::<usize>() {
            Ok(i) if i < names.len() => Ok(Sel::One(i)),
            _ => self.semantic(format!(
                "line {}: unknown {which} '{tok}'",
                self.tokens[at].line
            )),
        }
    }

    /// Reads `x [: y [: z ...]]` selectors (at most `max`), then the value tokens.
    fn selectors(
        &mut self,
        max: usize,
    ) -> Result<(Vec<(usize, &'a str)>, usize, Vec<&'a str>), ParseError> {
        let mut sels = Vec::new();
        loop {
            let at = self.pos;
            match self.next() {
                Some(t) if t != ":" => sels.push((at, t)),
                _ => return self.syntax(at, "expected an identifier or '*'"),
            }
            if sels.len() < max && self.peek() == Some(":") {
                self.pos += 1;
                continue;
            }
            break;
        }
        let (at, vals) = self.take_values();
        Ok((sels, at, vals))
    }

    fn unsupported<T>(&self, at: usize, construct: &str) -> Result<T, ParseError> {
        Err(ParseError::Unsupported {
            origin: self.origin.to_string(),
            line: self.tokens[at.min(self.tokens.len() - 1)].line,
            construct: construct.to_string(),
        })
    }

    fn parse_transition(&mut self, entry: usize) -> Result<(), ParseError> {
        let (n_s, n_a) = (self.n_s(), self.n_a());
        let (sels, at, vals) = self.selectors(3)?;
        let a = self.resolve(sels[0].0, "action", sels[0].1)?;
        match sels.len() {
            3 => {
                let s = self.resolve(sels[1].0, "state", sels[1].1)?;
                let next = self.resolve(sels[2].0, "state", sels[2].1)?;
                let p = self.numbers(at, &vals, 1)?[0];
                for a in a.expand(n_a) {
                    for s in s.expand(n_s) {
                        for j in next.expand(n_s) {
                            self.transition[a * n_s + s].insert(j, p);
                        }
                    }
                }
            }
            2 => {
                let s = self.resolve(sels[1].0, "state", sels[1].1)?;
                let row = match vals.as_slice() {
                    ["uniform"] => vec![1.0 / n_s as f64; n_s],
                    ["reset"] => return self.unsupported(at, "reset"),
                    _ => self.numbers(at, &vals, n_s)?,
                };
                for a in a.expand(n_a) {
                    for s in s.expand(n_s) {
                        self.transition[a * n_s + s] = dense_to_map(&row);
                    }
                }
            }
            _ => {
                let matrix = match vals.as_slice() {
                    ["identity"] => identity(n_s),
                    ["uniform"] => vec![1.0 / n_s as f64; n_s * n_s],
                    _ => self.numbers(at, &vals, n_s * n_s)?,
                };
                let _ = entry;
                for a in a.expand(n_a) {
                    for s in 0..n_s {
                        self.transition[a * n_s + s] =
                            dense_to_map(&matrix[s * n_s..(s + 1) * n_s]);
                    }
                }
            }
        }
        Ok(())
    }

    fn parse_observation(&mut self, _entry: usize) -> Result<(), ParseError> {
        let (n_s, n_a, n_z) = (self.n_s(), self.n_a(), self.n_z());
        let (sels, at, vals) = self.selectors(3)?;
        let a = self.resolve(sels[0].0, "action", sels[0].1)?;
        match sels.len() {
            3 => {
                let next = self.resolve(sels[1].0, "state", sels[1].1)?;
                let z = self.resolve(sels[2].0, "observation", sels[2].1)?;
                let p = self.numbers(at, &vals, 1)?[0];
                for a in a.expand(n_a) {
                    for j in next.expand(n_s) {
                        for z in z.expand(n_z) {
                            self.observation[a * n_s + j].insert(z, p);
                        }
                    }
                }
            }
            2 => {
                let next = self.resolve(sels[1].0, "state", sels[1].1)?;
                let row = match vals.as_slice() {
                    ["uniform"] => vec![1.0 / n_z as f64; n_z],
                    _ => self.numbers(at, &vals, n_z)?,
                };
                for a in a.expand(n_a) {
                    for j in next.expand(n_s) {
                        self.observation[a * n_s + j] = dense_to_map(&row);
                    }
                }
            }
            _ => {
                let matrix = match vals.as_slice() {
                    ["uniform"] => vec![1.0 / n_z as f64; n_s * n_z],
                    ["identity"] if n_s == n_z => identity(n_s),
                    ["identity"] => {
                        return self.semantic("O identity requires |Z| = |S|");
                    }
                    _ => self.numbers(at, &vals, n_s * n_z)?,
                };
                for a in a.expand(n_a) {
                    for j in 0..n_s {
                        self.observation[a * n_s + j] =
                            dense_to_map(&matrix[j * n_z..(j + 1) * n_z]);
                    }
                }
            }
        }
        Ok(())
    }

    fn parse_reward(&mut self, _entry: usize) -> Result<(), ParseError> {
        let (n_s, n_a, n_z) = (self.n_s(), self.n_a(), self.n_z());
        let (sels, at, vals) = self.selectors(4)?;
        if sels.len() < 2 {
            return self.syntax(sels[0].0, "reward entries need at least 'action : state'");
        }
        let a = self.resolve(sels[0].0, "action", sels[0].1)?;
        let s = self.resolve(sels[1].0, "state", sels[1].1)?;
        // (next selector, obs selector, value) writes, applied to every (a, s)
        let mut writes: Vec<(Sel, Sel, f64)> = Vec::new();
        match sels.len() {
            4 => {
                let next = self.resolve(sels[2].0, "state", sels[2].1)?;
                let z = self.resolve(sels[3].0, "observation", sels[3].1)?;
                writes.push((next, z, self.numbers(at, &vals, 1)?[0]));
            }
            3 => {
                let next = self.resolve(sels[2].0, "state", sels[2].1)?;
                let row = self.numbers(at, &vals, n_z)?;
                for (z, &v) in row.iter().enumerate() {
                    writes.push((next, Sel::One(z), v));
                }
            }
            _ => {
                let matrix = self.numbers(at, &vals, n_s * n_z)?;
                for j in 0..n_s {
                    for z in 0..n_z {
                        writes.push((Sel::One(j), Sel::One(z), matrix[j * n_z + z]));
                    }
                }
            }
        }
        for a in a.expand(n_a) {
            for s in s.expand(n_s) {
                let cell = &mut self.reward[a * n_s + s];
                for &(next, z, v) in &writes {
                    cell.set(next, z, v, n_s);
                }
            }
        }
        Ok(())
    }

    fn parse_start(&mut self, entry: usize) -> Result<(), ParseError> {
        let mode = match self.peek() {
            Some(m @ ("include" | "exclude")) => {
                self.pos += 1;
                Some(m)
            }
            _ => None,
        };
        self.expect_colon()?;
        let (at, vals) = self.take_values();
        let Some(states) = self.states.clone() else {
            return self.syntax(entry, "states must be declared before start");
        };
        let n_s = states.len();
        let pick = |this: &Self, toks: &[&str]| -> Result<Vec<bool>, ParseError> {
            let mut mask = vec![false; n_s];
            for (k, t) in toks.iter().enumerate() {
                match this.resolve(at + k, "state", t)? {
                    Sel::One(i) => mask[i] = true,
                    Sel::All => mask.iter_mut().for_each(|m| *m = true),
                }
            }
            Ok(mask)
        };
        let belief = match (mode, vals.as_slice()) {
            (None, ["uniform"]) => vec![1.0 / n_s as f64; n_s],
            (None, toks) if toks.len() == n_s && toks.iter().all(|t| t.parse::<f64>().is_ok()) => {
                self.numbers(at, toks, n_s)?
            }
            (None, [name]) => {
                let mask = pick(self, &[name])?;
                mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
            }
            (Some(m), toks) if !toks.is_empty() => {
                let mut mask = pick(self, toks)?;
                if m == "exclude" {
                    mask.iter_mut().for_each(|b| *b = !*b);
                }
                let k = mask.iter().filter(|&&b| b).count();
                if k == 0 {
                    return self.semantic("start set is empty");
                }
                mask.iter()
                    .map(|&b| if b { 1.0 / k as f64 } else { 0.0 })
                    .collect()
            }
            _ => return self.syntax(at, "malformed start distribution"),
        };
        self.start = Some(belief);
        Ok(())
    }

    fn finish(self) -> Result<PomdpModel, ParseError> {
        let origin = self.origin.to_string();
        let semantic = |message: String| ParseError::Semantic {
            origin: origin.clone(),
            message,
        };
        let gamma = self
            .gamma
            .ok_or_else(|| semantic("missing 'discount:'".into()))?;
        let states = self
            .states
            .ok_or_else(|| semantic("missing 'states:'".into()))?;
        let actions = self
            .actions
            .ok_or_else(|| semantic("missing 'actions:'".into()))?;
        let observations = self
            .observations
            .ok_or_else(|| semantic("missing 'observations:'".into()))?;
        let (n_s, n_a, n_z) = (states.len(), actions.len(), observations.len());
        let mut transition = self.transition;
        let mut observation = self.observation;
        let mut reward = self.reward;
        if transition.is_empty() {
            transition = vec![BTreeMap::new(); n_s * n_a];
            observation = vec![BTreeMap::new(); n_s * n_a];
            reward = vec![RewardCell::default(); n_s * n_a];
        }
        let to_rows = |rows: Vec<BTreeMap<usize, f64>>, n_cols| {
            SparseRows::from_sparse(rows.into_iter().map(|m| m.into_iter().collect()), n_cols)
        };
        let mut parts = ModelParts {
            states,
            actions,
            observations,
            transition: to_rows(transition, n_s),
            observation: to_rows(observation, n_z),
            reward: vec![0.0; n_s * n_a],
            gamma,
            start: self.start,
        };
        let invalid = |e: ModelError| semantic(e.to_string());
        let kernels = PomdpModel::new(parts.clone()).map_err(invalid)?;
        let mut folded = false;
        for (row, cell) in reward.iter().enumerate() {
            let (a, s) = (row / n_s, row % n_s);
            if cell.is_plain() {
                parts.reward[row] = cell.base;
                continue;
            }
            folded = true;
            let (idx, val) = kernels.transition_row(s, a);
            let mut r = 0.0;
            for (&j, &t) in idx.iter().zip(val) {
                let inner = match cell.by_next.get(&j) {
                    None => cell.base,
                    Some(nr) => {
                        let (zi, zv) = kernels.observation_row(j, a);
                        zi.iter()
                            .zip(zv)
                            .map(|(z, &o)| o * nr.by_obs.get(z).copied().unwrap_or(nr.base))
                            .sum()
                    }
                };
                r += t * inner;
            }
            parts.reward[row] = r;
        }
        if folded {
            log::info!(
                "{}: rewards depending on next state or observation were folded into R(s, a)",
                self.origin
            );
        }
        if self.cost {
            parts.reward.iter_mut().for_each(|r| *r = -*r);
        }
        // The kernels were already renormalized by the first validation pass.
        parts.transition = kernels.transition_kernel().clone();
        parts.observation = kernels.observation_kernel().clone();
        parts.start = Some(kernels.initial_belief().probs().to_vec());
        PomdpModel::new(parts).map_err(invalid)
    }
}

fn dense_to_map(row: &[f64]) -> BTreeMap<usize, f64> {
    row.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(j, &v)| (j, v))
        .collect()
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// Parses a `.pomdp` source into a validated model.
pub fn parse_pomdp(src: &PomdpSource) -> Result<PomdpModel, ParseError> {
    Parser {
        origin: &src.origin,
        tokens: tokenize(&src.text),
        pos: 0,
        gamma: None,
        cost: false,
        states: None,
        actions: None,
        observations: None,
        start: None,
        transition: Vec::new(),
        observation: Vec::new(),
        reward: Vec::new(),
    }
    .parse()
}

fn write_matrix(out: &mut String, rows: impl Iterator<Item = Vec<f64>>) {
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

/// Emits `model` in full-matrix form. Parsing the output reproduces the
/// model's kernels, rewards, discount and start distribution.
pub fn write_pomdp(model: &PomdpModel) -> PomdpSource {
    let n_s = model.n_states();
    let mut out = String::new();
    let _ = writeln!(out, "discount: {:?}", model.gamma());
    out.push_str("values: reward\n");
    for (key, names) in [
        ("states", model.states()),
        ("actions", model.actions()),
        ("observations", model.observations()),
    ] {
        let numbered = names.iter().enumerate().all(|(i, n)| *n == i.to_string());
        if numbered {
            let _ = writeln!(out, "{key}: {}", names.len());
        } else {
            let _ = writeln!(out, "{key}: {}", names.join(" "));
        }
    }
    out.push_str("start:");
    for p in model.initial_belief().probs() {
        let _ = write!(out, " {p:?}");
    }
    out.push('\n');
    for (a, name) in model.actions().iter().enumerate() {
        let _ = writeln!(out, "\nT: {name}");
        write_matrix(
            &mut out,
            (0..n_s).map(|s| model.transition_kernel().dense_row(a * n_s + s)),
        );
    }
    for (a, name) in model.actions().iter().enumerate() {
        let _ = writeln!(out, "\nO: {name}");
        write_matrix(
            &mut out,
            (0..n_s).map(|j| model.observation_kernel().dense_row(a * n_s + j)),
        );
    }
    out.push('\n');
    for (a, an) in model.actions().iter().enumerate() {
        for (s, sn) in model.states().iter().enumerate() {
            let _ = writeln!(out, "R: {an} : {sn} : * : * {:?}", model.reward(s, a));
        }
    }
    PomdpSource {
        text: out,
        origin: "<memory>".into(),
    }
}
