//! Network data model and the line-oriented text format.
//!
//! A network is the quadruple (species, complexes, reactions, rates) plus a
//! per-reaction delay. Stoichiometric coefficients are exact integers; rates
//! and delays are exact rationals parsed from decimal or `p/q` literals, with
//! f64 views cached for the numeric paths.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::exact::{format_rat, parse_rat, rat_to_f64, Rat};
use num::traits::Zero;

/// A complex: nonnegative integer combination of species. Absent key = 0.
/// The zero complex (no entries) is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Complex {
    coeffs: BTreeMap<usize, u32>,
}

impl Complex {
    pub fn zero() -> Self {
        Complex::default()
    }

    pub fn from_pairs(pairs: &[(usize, u32)]) -> Self {
        let mut coeffs = BTreeMap::new();
        for &(sp, c) in pairs {
            if c > 0 {
                *coeffs.entry(sp).or_insert(0) += c;
            }
        }
        Complex { coeffs }
    }

    pub fn coeff(&self, species: usize) -> u32 {
        self.coeffs.get(&species).copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.coeffs.iter().map(|(&s, &c)| (s, c))
    }

    pub fn max_species(&self) -> Option<usize> {
        self.coeffs.keys().max().copied()
    }

    /// Some((species, coefficient)) when the complex is a positive multiple of
    /// a single species.
    pub fn single_species(&self) -> Option<(usize, u32)> {
        if self.coeffs.len() == 1 {
            self.iter().next()
        } else {
            None
        }
    }

    pub fn dense(&self, n: usize) -> Vec<u32> {
        let mut v = vec![0; n];
        for (s, c) in self.iter() {
            v[s] = c;
        }
        v
    }

    pub fn dense_rat(&self, n: usize) -> Vec<Rat> {
        self.dense(n).into_iter().map(|c| Rat::from_integer(c.into())).collect()
    }

    pub fn format_with(&self, species: &[String]) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        self.iter()
            .map(|(s, c)| {
                let name = species.get(s).map(String::as_str).unwrap_or("?");
                if c == 1 { name.to_string() } else { format!("{c}{name}") }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// A single reaction with mass-action rate constant and delay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reaction {
    pub reactant: Complex,
    pub product: Complex,
    pub rate: Rat,
    pub delay: Rat,
}

impl Reaction {
    pub fn new(reactant: Complex, product: Complex, rate: Rat, delay: Rat) -> Self {
        Reaction { reactant, product, rate, delay }
    }

    /// Reaction vector product - reactant over n species.
    pub fn vector(&self, n: usize) -> Vec<Rat> {
        let y = self.reactant.dense_rat(n);
        let yp = self.product.dense_rat(n);
        yp.into_iter().zip(y).map(|(a, b)| a - b).collect()
    }
}

/// A delayed mass-action network. Immutable after construction; species order
/// is declaration order and fixes vector component order everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
    rates_f64: Vec<f64>,
    delays_f64: Vec<f64>,
}

impl DelayedNetwork {
    pub fn new(species: Vec<String>, reactions: Vec<Reaction>) -> Self {
        let rates_f64 = reactions.iter().map(|r| rat_to_f64(&r.rate)).collect();
        let delays_f64 = reactions.iter().map(|r| rat_to_f64(&r.delay)).collect();
        DelayedNetwork { species, reactions, rates_f64, delays_f64 }
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn n(&self) -> usize {
        self.species.len()
    }

    pub fn r(&self) -> usize {
        self.reactions.len()
    }

    pub fn rate_f64(&self, i: usize) -> f64 {
        self.rates_f64[i]
    }

    pub fn delay_f64(&self, i: usize) -> f64 {
        self.delays_f64[i]
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    /// All complexes appearing as reactant or product, deduplicated, ordered.
    pub fn complexes(&self) -> Vec<Complex> {
        let mut seen = Vec::new();
        for rx in &self.reactions {
            for c in [&rx.reactant, &rx.product] {
                if !seen.contains(c) {
                    seen.push(c.clone());
                }
            }
        }
        seen
    }

    /// Distinct delays in declaration order (exact comparison).
    pub fn distinct_delays(&self) -> Vec<Rat> {
        let mut out: Vec<Rat> = Vec::new();
        for rx in &self.reactions {
            if !out.contains(&rx.delay) {
                out.push(rx.delay.clone());
            }
        }
        out
    }

    pub fn max_delay_f64(&self) -> f64 {
        self.delays_f64.iter().copied().fold(0.0, f64::max)
    }

    /// Groups reaction indices by reactant complex; keys are exactly the
    /// reactant complex set and every index appears exactly once.
    pub fn reactant_groups(&self) -> BTreeMap<Complex, Vec<usize>> {
        let mut map: BTreeMap<Complex, Vec<usize>> = BTreeMap::new();
        for (i, rx) in self.reactions.iter().enumerate() {
            map.entry(rx.reactant.clone()).or_default().push(i);
        }
        map
    }

    /// The same network with every delay set to zero.
    pub fn strip_delays(&self) -> DelayedNetwork {
        let reactions = self
            .reactions
            .iter()
            .map(|rx| Reaction::new(rx.reactant.clone(), rx.product.clone(), rx.rate.clone(), Rat::zero()))
            .collect();
        DelayedNetwork::new(self.species.clone(), reactions)
    }
}

/// Diagonal positive map relating a source network to a complex-balanced
/// target: source trajectories are L times the target's.
#[derive(Debug, Clone)]
pub struct ConjugacyWitness {
    pub target: DelayedNetwork,
    pub l: Vec<Rat>,
}

impl ConjugacyWitness {
    /// Identity witness: the target is the network itself.
    pub fn identity(target: DelayedNetwork) -> Self {
        let n = target.n();
        ConjugacyWitness { target, l: vec![Rat::from_integer(1.into()); n] }
    }

    pub fn is_identity_l(&self) -> bool {
        use num::traits::One;
        self.l.iter().all(|x| x.is_one())
    }
}

/// Structural problem found in a network; reaction index where applicable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub reaction: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.reaction {
            Some(i) => write!(f, "reaction {}: {}", i, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Checks the type invariants; empty iff the network is well formed.
pub fn validate_network(net: &DelayedNetwork) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = net.n();
    let mut names = std::collections::BTreeSet::new();
    for s in net.species() {
        if !names.insert(s.clone()) {
            out.push(Diagnostic { reaction: None, message: format!("duplicate species name `{s}`") });
        }
    }
    use num::traits::Signed;
    for (i, rx) in net.reactions().iter().enumerate() {
        if !rx.rate.is_positive() {
            out.push(Diagnostic { reaction: Some(i), message: "nonpositive rate".to_string() });
        }
        if rx.delay.is_negative() {
            out.push(Diagnostic { reaction: Some(i), message: "negative delay".to_string() });
        }
        for (side, c) in [("reactant", &rx.reactant), ("product", &rx.product)] {
            if let Some(max) = c.max_species() {
                if max >= n {
                    out.push(Diagnostic {
                        reaction: Some(i),
                        message: format!("{side} references undeclared species index {max}"),
                    });
                }
            }
        }
    }
    out
}

/// Parse failure with position information.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}, col {col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("line {line}: unknown species `{name}`")]
    UnknownSpecies { line: usize, name: String },
    #[error("line {line}: nonpositive rate")]
    NonpositiveRate { line: usize },
    #[error("line {line}: negative delay")]
    NegativeDelay { line: usize },
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_complex(text: &str, species: &[String], line_no: usize, col0: usize) -> Result<Complex, ParseError> {
    let text = text.trim();
    if text == "0" {
        return Ok(Complex::zero());
    }
    if text.is_empty() {
        return Err(ParseError::Syntax { line: line_no, col: col0, message: "empty complex".into() });
    }
    let mut pairs = Vec::new();
    for term in text.split('+') {
        let term = term.trim();
        if term.is_empty() {
            return Err(ParseError::Syntax { line: line_no, col: col0, message: "empty term in complex".into() });
        }
        let digits: String = term.chars().take_while(|c| c.is_ascii_digit()).collect();
        let name = &term[digits.len()..];
        if name.is_empty() {
            return Err(ParseError::Syntax {
                line: line_no,
                col: col0,
                message: format!("term `{term}` has no species name"),
            });
        }
        let coeff: u32 = if digits.is_empty() {
            1
        } else {
            digits.parse().map_err(|_| ParseError::Syntax {
                line: line_no,
                col: col0,
                message: format!("bad coefficient in `{term}`"),
            })?
        };
        let idx = species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| ParseError::UnknownSpecies { line: line_no, name: name.to_string() })?;
        pairs.push((idx, coeff));
    }
    Ok(Complex::from_pairs(&pairs))
}

fn parse_reaction_line(rest: &str, species: &[String], line_no: usize) -> Result<Reaction, ParseError> {
    let syntax = |msg: &str| ParseError::Syntax { line: line_no, col: 1, message: msg.to_string() };
    let (lhs, tail) = rest.split_once("->").ok_or_else(|| syntax("expected `->`"))?;
    let (rhs, params) = tail.split_once(':').ok_or_else(|| syntax("expected `:` before rate"))?;
    let reactant = parse_complex(lhs, species, line_no, 1)?;
    let product = parse_complex(rhs, species, line_no, 1)?;
    let mut rate: Option<Rat> = None;
    let mut delay: Option<Rat> = None;
    for field in params.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| syntax("expected key=value"))?;
        let parsed = parse_rat(value).ok_or_else(|| syntax(&format!("bad number `{value}`")))?;
        match key {
            "k" => rate = Some(parsed),
            "tau" => delay = Some(parsed),
            other => return Err(syntax(&format!("unknown field `{other}`"))),
        }
    }
    let rate = rate.ok_or_else(|| syntax("missing k="))?;
    let delay = delay.unwrap_or_else(Rat::zero);
    use num::traits::Signed;
    if !rate.is_positive() {
        return Err(ParseError::NonpositiveRate { line: line_no });
    }
    if delay.is_negative() {
        return Err(ParseError::NegativeDelay { line: line_no });
    }
    Ok(Reaction::new(reactant, product, rate, delay))
}

/// Parses the line-oriented network format:
///
/// ```text
/// species S1 S2
/// reaction 2S1 -> S1 : k=1 tau=0.5
/// reaction 0 -> S1 : k=2 tau=0
/// ```
pub fn parse_network(text: &str) -> Result<DelayedNetwork, ParseError> {
    let mut species: Vec<String> = Vec::new();
    let mut reactions: Vec<Reaction> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (word, rest) = match line.split_once(char::is_whitespace) {
            Some((w, r)) => (w, r.trim()),
            None => (line, ""),
        };
        match word {
            "species" => {
                for name in rest.split_whitespace() {
                    if species.iter().any(|s| s == name) {
                        return Err(ParseError::Syntax {
                            line: line_no,
                            col: 1,
                            message: format!("duplicate species `{name}`"),
                        });
                    }
                    species.push(name.to_string());
                }
            }
            "reaction" => reactions.push(parse_reaction_line(rest, &species, line_no)?),
            other => {
                return Err(ParseError::Syntax {
                    line: line_no,
                    col: 1,
                    message: format!("unknown directive `{other}`"),
                })
            }
        }
    }
    Ok(DelayedNetwork::new(species, reactions))
}

/// Serializes a network; `parse_network(serialize_network(net)) == net`.
pub fn serialize_network(net: &DelayedNetwork) -> String {
    let mut out = String::new();
    if !net.species().is_empty() {
        out.push_str("species ");
        out.push_str(&net.species().join(" "));
        out.push('\n');
    }
    for rx in net.reactions() {
        out.push_str(&format!(
            "reaction {} -> {} : k={} tau={}\n",
            rx.reactant.format_with(net.species()),
            rx.product.format_with(net.species()),
            format_rat(&rx.rate),
            format_rat(&rx.delay),
        ));
    }
    out
}

/// Parses a witness file: an `L` line plus a `target:` block holding the
/// target network in the ordinary syntax.
pub fn parse_witness(text: &str, source: &DelayedNetwork) -> Result<ConjugacyWitness, ParseError> {
    let mut l: Option<Vec<Rat>> = None;
    let mut target_text = String::new();
    let mut in_target = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if in_target {
            target_text.push_str(raw);
            target_text.push('\n');
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if line == "target:" {
            in_target = true;
            continue;
        }
        if let Some(rest) = line.strip_prefix("L ").or_else(|| line.strip_prefix("L\t")) {
            let vals: Result<Vec<Rat>, _> = rest
                .split_whitespace()
                .map(|t| {
                    parse_rat(t).ok_or(ParseError::Syntax {
                        line: line_no,
                        col: 1,
                        message: format!("bad number `{t}`"),
                    })
                })
                .collect();
            l = Some(vals?);
        } else {
            return Err(ParseError::Syntax {
                line: line_no,
                col: 1,
                message: format!("unknown directive `{line}` in witness file"),
            });
        }
    }
    let target = parse_network(&target_text)?;
    if target.species() != source.species() {
        return Err(ParseError::Syntax {
            line: 1,
            col: 1,
            message: "target species list differs from source".to_string(),
        });
    }
    let l = l.unwrap_or_else(|| vec![Rat::from_integer(1.into()); source.n()]);
    use num::traits::Signed;
    if l.len() != source.n() || l.iter().any(|x| !x.is_positive()) {
        return Err(ParseError::Syntax {
            line: 1,
            col: 1,
            message: "L must list one positive entry per species".to_string(),
        });
    }
    Ok(ConjugacyWitness { target, l })
}

pub fn serialize_witness(w: &ConjugacyWitness) -> String {
    let l_line = w.l.iter().map(format_rat).collect::<Vec<_>>().join(" ");
    format!("L {}\ntarget:\n{}", l_line, serialize_network(&w.target))
}
