//! Shoenfield-system Frege proofs over merged-form formulas.

pub mod build;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::VarAssignment;
use crate::formula::{parse_formula, subformulas_of, Formula};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleName {
    #[serde(rename = "input")]
    Input,
    #[serde(rename = "em")]
    ExcludedMiddle,
    #[serde(rename = "weak")]
    Weakening,
    #[serde(rename = "cut")]
    Cut,
    #[serde(rename = "contr")]
    Contraction,
    #[serde(rename = "assoc")]
    Associative,
}

impl RuleName {
    pub fn arity(self) -> usize {
        match self {
            RuleName::Input | RuleName::ExcludedMiddle => 0,
            RuleName::Cut => 2,
            _ => 1,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            RuleName::Input => "input",
            RuleName::ExcludedMiddle => "em",
            RuleName::Weakening => "weak",
            RuleName::Cut => "cut",
            RuleName::Contraction => "contr",
            RuleName::Associative => "assoc",
        }
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Values of the rule metavariables `p`, `q`, `r`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Substitution {
    pub p: Option<Formula>,
    pub q: Option<Formula>,
    pub r: Option<Formula>,
}

impl Substitution {
    pub fn p(p: Formula) -> Self {
        Substitution { p: Some(p), q: None, r: None }
    }

    pub fn pq(p: Formula, q: Formula) -> Self {
        Substitution { p: Some(p), q: Some(q), r: None }
    }

    pub fn pqr(p: Formula, q: Formula, r: Formula) -> Self {
        Substitution { p: Some(p), q: Some(q), r: Some(r) }
    }

    fn map(&self, f: impl Fn(&Formula) -> Formula) -> Self {
        Substitution { p: self.p.as_ref().map(&f), q: self.q.as_ref().map(&f), r: self.r.as_ref().map(&f) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofLine {
    /// 1-based position.
    pub id: usize,
    pub formula: Formula,
    pub rule: RuleName,
    /// Ids of earlier lines.
    pub premises: Vec<usize>,
    pub sub: Substitution,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FregeProof {
    pub lines: Vec<ProofLine>,
    pub inputs: Vec<Formula>,
    pub target: Formula,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProofError {
    #[error("the proof has no lines")]
    EmptyProof,
    #[error("{} invalid line(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<LineViolation>),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("level {level} of {formula} exceeds the threshold vector")]
    LevelOutOfRange { formula: Formula, level: usize },
    #[error("subformula {0} has no level")]
    MissingLevel(Formula),
    #[error("threshold vector must start with 1 and be positive")]
    BadThresholds,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LineViolation {
    pub line: usize,
    pub rule: RuleName,
    pub reason: String,
}

impl fmt::Display for LineViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} ({}): {}", self.line, self.rule, self.reason)
    }
}

impl ProofLine {
    pub fn input(formula: Formula) -> Self {
        ProofLine { id: 0, formula, rule: RuleName::Input, premises: vec![], sub: Substitution::default() }
    }
}

/// Incremental builder that assigns ids and derives conclusions.
#[derive(Clone, Debug, Default)]
pub struct ProofBuilder {
    lines: Vec<ProofLine>,
    inputs: Vec<Formula>,
    index: HashMap<Formula, usize>,
}

impl ProofBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn formula(&self, id: usize) -> &Formula {
        &self.lines[id - 1].formula
    }

    /// Id of an existing line with this formula.
    pub fn find(&self, f: &Formula) -> Option<usize> {
        self.index.get(f).copied()
    }

    fn push(&mut self, formula: Formula, rule: RuleName, premises: Vec<usize>, sub: Substitution) -> usize {
        let id = self.lines.len() + 1;
        self.index.entry(formula.clone()).or_insert(id);
        self.lines.push(ProofLine { id, formula, rule, premises, sub });
        id
    }

    pub fn input(&mut self, f: Formula) -> usize {
        if !self.inputs.contains(&f) {
            self.inputs.push(f.clone());
        }
        self.push(f, RuleName::Input, vec![], Substitution::default())
    }

    pub fn excluded_middle(&mut self, p: Formula) -> usize {
        let f = Formula::or2(&p, &Formula::neg(&p));
        self.push(f, RuleName::ExcludedMiddle, vec![], Substitution::p(p))
    }

    /// `p ⊢ q ∨ p`.
    pub fn weaken(&mut self, prem: usize, q: Formula) -> usize {
        let p = self.formula(prem).clone();
        let f = Formula::or2(&q, &p);
        self.push(f, RuleName::Weakening, vec![prem], Substitution::pq(p, q))
    }

    /// `p ∨ q, ¬p ∨ r ⊢ q ∨ r`; `q` and `r` are read off the premises.
    pub fn cut(&mut self, a: usize, b: usize, p: &Formula) -> usize {
        let q = remove_disjunct(self.formula(a), p).expect("cut formula absent from first premise");
        let r =
            remove_disjunct(self.formula(b), &Formula::neg(p)).expect("negated cut formula absent from second premise");
        self.cut_with(a, b, p.clone(), q, r)
    }

    pub fn cut_with(&mut self, a: usize, b: usize, p: Formula, q: Formula, r: Formula) -> usize {
        let f = Formula::or2(&q, &r);
        self.push(f, RuleName::Cut, vec![a, b], Substitution::pqr(p, q, r))
    }

    pub fn contraction(&mut self, prem: usize) -> usize {
        let p = self.formula(prem).clone();
        self.push(p.clone(), RuleName::Contraction, vec![prem], Substitution::p(p))
    }

    pub fn associative(&mut self, prem: usize, p: Formula, q: Formula, r: Formula) -> usize {
        let f = Formula::or([p.clone(), Formula::or2(&q, &r)]);
        self.push(f, RuleName::Associative, vec![prem], Substitution::pqr(p, q, r))
    }

    pub fn finish(self, target: Formula) -> FregeProof {
        FregeProof { lines: self.lines, inputs: self.inputs, target }
    }

    /// Finishes with the last line as the target.
    pub fn finish_last(self) -> FregeProof {
        let target = self.lines.last().map(|l| l.formula.clone()).unwrap_or_else(Formula::zero);
        self.finish(target)
    }
}

/// The disjunction left after removing `p` from `c`'s disjunct set.
pub fn remove_disjunct(c: &Formula, p: &Formula) -> Option<Formula> {
    let ds = c.disjuncts();
    if p.is_or() {
        let sub = p.disjuncts();
        if !sub.iter().all(|d| ds.contains(d)) {
            return None;
        }
        return Some(Formula::or(ds.iter().filter(|d| !sub.contains(d)).cloned()));
    }
    if !ds.contains(p) {
        return None;
    }
    Some(Formula::or(ds.iter().filter(|d| *d != p).cloned()))
}

impl FregeProof {
    pub fn formulas(&self) -> Vec<Formula> {
        self.lines.iter().map(|l| l.formula.clone()).collect()
    }

    /// Number of lines.
    pub fn pln(&self) -> Result<usize, ProofError> {
        if self.lines.is_empty() {
            Err(ProofError::EmptyProof)
        } else {
            Ok(self.lines.len())
        }
    }

    /// Number of distinct subformulas over all lines.
    pub fn psz(&self) -> usize {
        subformulas_of(self.lines.iter().map(|l| &l.formula)).len()
    }

    /// Maximum line depth.
    pub fn depth(&self) -> usize {
        self.lines.iter().map(|l| l.formula.depth()).max().unwrap_or(0)
    }

    /// Maximum syntactic line width.
    pub fn width(&self) -> usize {
        self.lines.iter().map(|l| l.formula.vars().len()).max().unwrap_or(0)
    }

    /// Checks every line against its rule and substitution.
    pub fn check(&self) -> Result<(), ProofError> {
        if self.lines.is_empty() {
            return Err(ProofError::EmptyProof);
        }
        let inputs: HashSet<&Formula> = self.inputs.iter().collect();
        let mut bad = Vec::new();
        for (k, line) in self.lines.iter().enumerate() {
            if let Err(reason) = self.check_line(k, line, &inputs) {
                bad.push(LineViolation { line: line.id, rule: line.rule, reason });
            }
        }
        let last = &self.lines.last().unwrap().formula;
        if *last != self.target {
            bad.push(LineViolation {
                line: self.lines.len(),
                rule: self.lines.last().unwrap().rule,
                reason: format!("last line {last} differs from target {}", self.target),
            });
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ProofError::Invalid(bad))
        }
    }

    fn check_line(&self, k: usize, line: &ProofLine, inputs: &HashSet<&Formula>) -> Result<(), String> {
        if line.id != k + 1 {
            return Err(format!("id {} at position {}", line.id, k + 1));
        }
        if line.premises.len() != line.rule.arity() {
            return Err(format!("{} premises, rule takes {}", line.premises.len(), line.rule.arity()));
        }
        let mut prem = Vec::new();
        for &j in &line.premises {
            if j == 0 || j > k {
                return Err(format!("premise {j} is not an earlier line"));
            }
            prem.push(&self.lines[j - 1].formula);
        }
        let need = |m: &Option<Formula>, name: &str| m.clone().ok_or_else(|| format!("substitution lacks {name}"));
        let expect = |want: &Formula, got: &Formula, what: &str| {
            if want == got {
                Ok(())
            } else {
                Err(format!("{what} is {got}, rule instance needs {want}"))
            }
        };
        let s = &line.sub;
        match line.rule {
            RuleName::Input => {
                if inputs.contains(&line.formula) {
                    Ok(())
                } else {
                    Err(format!("{} is not an input", line.formula))
                }
            }
            RuleName::ExcludedMiddle => {
                let p = need(&s.p, "p")?;
                expect(&Formula::or2(&p, &Formula::neg(&p)), &line.formula, "conclusion")
            }
            RuleName::Weakening => {
                let p = need(&s.p, "p")?;
                let q = need(&s.q, "q")?;
                expect(&p, prem[0], "premise")?;
                expect(&Formula::or2(&q, &p), &line.formula, "conclusion")
            }
            RuleName::Cut => {
                let p = need(&s.p, "p")?;
                let q = need(&s.q, "q")?;
                let r = need(&s.r, "r")?;
                expect(&Formula::or2(&p, &q), prem[0], "first premise")?;
                expect(&Formula::or2(&Formula::neg(&p), &r), prem[1], "second premise")?;
                expect(&Formula::or2(&q, &r), &line.formula, "conclusion")
            }
            RuleName::Contraction => {
                if let Some(p) = &s.p {
                    expect(&Formula::or2(p, p), prem[0], "premise")?;
                    expect(p, &line.formula, "conclusion")
                } else {
                    expect(prem[0], &line.formula, "conclusion")
                }
            }
            RuleName::Associative => match (&s.p, &s.q, &s.r) {
                (Some(p), Some(q), Some(r)) => {
                    let left = Formula::or([Formula::or2(p, q), r.clone()]);
                    let right = Formula::or([p.clone(), Formula::or2(q, r)]);
                    expect(&left, prem[0], "premise")?;
                    expect(&right, &line.formula, "conclusion")
                }
                _ => expect(prem[0], &line.formula, "conclusion"),
            },
        }
    }

    /// Applies a variable assignment rule by rule, keeping a valid proof
    /// from the restricted inputs.
    pub fn restrict_vars(&self, rho: &VarAssignment) -> FregeProof {
        let mut out = ProofBuilder::new();
        let mut map: Vec<usize> = Vec::with_capacity(self.lines.len());
        let r = |f: &Formula| rho.restrict(f);
        for line in &self.lines {
            let f = r(&line.formula);
            let sub = line.sub.map(r);
            let prem: Vec<usize> = line.premises.iter().map(|j| map[j - 1]).collect();
            let id = match line.rule {
                RuleName::Input => out.input(f.clone()),
                RuleName::ExcludedMiddle => out.excluded_middle(sub.p.clone().unwrap()),
                RuleName::Weakening => out.weaken(prem[0], sub.q.clone().unwrap()),
                RuleName::Contraction | RuleName::Associative => out.contraction(prem[0]),
                RuleName::Cut => {
                    let (p, q, rr) = (sub.p.unwrap(), sub.q.unwrap(), sub.r.unwrap());
                    match p.as_const() {
                        Some(false) => out.weaken(prem[0], rr),
                        Some(true) => {
                            let w = out.weaken(prem[1], q);
                            if *out.formula(w) == f {
                                w
                            } else {
                                out.contraction(w)
                            }
                        }
                        None => out.cut_with(prem[0], prem[1], p, q, rr),
                    }
                }
            };
            debug_assert_eq!(*out.formula(id), f, "restricted line {} drifted", line.id);
            map.push(id);
        }
        out.finish(r(&self.target))
    }

    /// Proof file: one JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            let mut sub = BTreeMap::new();
            for (k, v) in [("p", &l.sub.p), ("q", &l.sub.q), ("r", &l.sub.r)] {
                if let Some(v) = v {
                    sub.insert(k, v.to_string());
                }
            }
            let rec = LineRecord { id: l.id, f: l.formula.to_string(), rule: l.rule, prem: l.premises.clone(), sub };
            s.push_str(&serde_json::to_string(&rec).unwrap());
            s.push('\n');
        }
        s
    }

    /// Parses a proof file; without explicit inputs the input lines define them.
    pub fn from_jsonl(text: &str, inputs: Option<Vec<Formula>>) -> Result<FregeProof, ProofError> {
        let mut lines = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let fmt_err = |msg: String| ProofError::Format { line: k + 1, msg };
            let rec: LineRecordIn = serde_json::from_str(raw).map_err(|e| fmt_err(e.to_string()))?;
            let parse = |s: &str| parse_formula(s).map_err(|e| fmt_err(e.to_string()));
            let mut sub = Substitution::default();
            for (key, val) in &rec.sub {
                let f = parse(val)?;
                match key.as_str() {
                    "p" => sub.p = Some(f),
                    "q" => sub.q = Some(f),
                    "r" => sub.r = Some(f),
                    other => return Err(fmt_err(format!("unknown metavariable {other}"))),
                }
            }
            if let Some(prev) = lines.last().map(|l: &ProofLine| l.id) {
                if rec.id <= prev {
                    return Err(fmt_err("ids must be strictly increasing".into()));
                }
            }
            lines.push(ProofLine { id: rec.id, formula: parse(&rec.f)?, rule: rec.rule, premises: rec.prem, sub });
        }
        if lines.is_empty() {
            return Err(ProofError::EmptyProof);
        }
        let inputs = inputs.unwrap_or_else(|| {
            let mut v: Vec<Formula> =
                lines.iter().filter(|l| l.rule == RuleName::Input).map(|l| l.formula.clone()).collect();
            v.sort();
            v.dedup();
            v
        });
        let target = lines.last().unwrap().formula.clone();
        Ok(FregeProof { lines, inputs, target })
    }
}

#[derive(Serialize)]
struct LineRecord<'a> {
    id: usize,
    f: String,
    rule: RuleName,
    prem: Vec<usize>,
    sub: BTreeMap<&'a str, String>,
}

#[derive(Deserialize)]
struct LineRecordIn {
    id: usize,
    f: String,
    rule: RuleName,
    #[serde(default)]
    prem: Vec<usize>,
    #[serde(default)]
    sub: BTreeMap<String, String>,
}

/// Threshold parameters `(d_0, ..., d_k)` with `d_0 = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ThresholdVector(Vec<u64>);

impl ThresholdVector {
    pub fn new(d: Vec<u64>) -> Result<Self, ProofError> {
        if d.first() != Some(&1) || d.contains(&0) {
            return Err(ProofError::BadThresholds);
        }
        Ok(ThresholdVector(d))
    }

    pub fn get(&self, i: usize) -> Option<u64> {
        self.0.get(i).copied()
    }

    pub fn k(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    /// `d_1 ⋯ d_i`, saturating.
    pub fn prefix_product(&self, i: usize) -> u64 {
        self.0[1..=i.min(self.k())].iter().fold(1u64, |a, b| a.saturating_mul(*b))
    }
}

/// Levels on which each formula appears.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevelMap(HashMap<Formula, BTreeSet<usize>>);

impl LevelMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every subformula of the lines at its own depth.
    pub fn from_lines(lines: &[Formula]) -> Self {
        let mut m = LevelMap::new();
        for f in subformulas_of(lines) {
            let d = f.depth();
            m.add(&f, d);
        }
        m
    }

    pub fn add(&mut self, f: &Formula, level: usize) {
        self.0.entry(f.clone()).or_default().insert(level);
    }

    pub fn add_all(&mut self, f: &Formula, levels: &BTreeSet<usize>) {
        self.0.entry(f.clone()).or_default().extend(levels.iter().copied());
    }

    pub fn levels(&self, f: &Formula) -> Option<&BTreeSet<usize>> {
        self.0.get(f)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Formula, &BTreeSet<usize>)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Formulas appearing on `level`, in structural order.
    pub fn at_level(&self, level: usize) -> Vec<Formula> {
        let mut v: Vec<Formula> = self.0.iter().filter(|(_, ls)| ls.contains(&level)).map(|(f, _)| f.clone()).collect();
        v.sort();
        v
    }

    /// Formulas appearing on some level `≤ level`, in structural order.
    pub fn up_to_level(&self, level: usize) -> Vec<Formula> {
        let mut v: Vec<Formula> = self
            .0
            .iter()
            .filter(|(_, ls)| ls.iter().next().is_some_and(|l| *l <= level))
            .map(|(f, _)| f.clone())
            .collect();
        v.sort();
        v
    }

    pub fn max_level(&self) -> usize {
        self.0.values().filter_map(|ls| ls.iter().next_back()).copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegularityViolation {
    pub formula: Formula,
    pub level: usize,
    pub in_degree: usize,
}

/// In-degree of every subformula against the threshold of each of its levels.
pub fn is_d_regular(
    lines: &[Formula],
    levels: &LevelMap,
    d: &ThresholdVector,
) -> Result<Vec<RegularityViolation>, ProofError> {
    let mut out = Vec::new();
    for f in subformulas_of(lines) {
        let ls = levels.levels(&f).ok_or_else(|| ProofError::MissingLevel(f.clone()))?;
        for &l in ls {
            let t = d.get(l).ok_or_else(|| ProofError::LevelOutOfRange { formula: f.clone(), level: l })?;
            if f.in_degree() as u64 > t {
                out.push(RegularityViolation { formula: f.clone(), level: l, in_degree: f.in_degree() });
            }
        }
    }
    out.sort_by(|a, b| (a.level, &a.formula).cmp(&(b.level, &b.formula)));
    Ok(out)
}
