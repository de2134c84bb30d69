//! Semantic derivations over truth-table lines, the transformation of
//! restricted Frege proofs into them, and width-bounded resolution.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::FormulaAssignment;
use crate::f2sys::{Cnf, Equation, Lit};
use crate::formula::{Formula, FormulaError, TruthTable, Var, DEFAULT_MAX_SUPPORT};
use crate::frege::{FregeProof, RuleName};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticError {
    #[error("support of {support} variables exceeds the limit {max}")]
    SupportTooLarge { support: usize, max: usize },
    #[error("{} invalid line(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<SemanticViolation>),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("clause {clause} has width {width} above {limit}")]
    ClauseTooWide { clause: usize, width: usize, limit: usize },
    #[error("more than {0} variables")]
    TooManyVariables(usize),
    #[error("line {line}: no premise set of at most {c_max} lines implies the restricted formula")]
    TransformFailure { line: usize, c_max: usize },
}

impl From<FormulaError> for SemanticError {
    fn from(e: FormulaError) -> Self {
        match e {
            FormulaError::SupportTooLarge { support, max } => SemanticError::SupportTooLarge { support, max },
            FormulaError::MissingVariable(v) => SemanticError::Format { line: 0, msg: format!("missing variable {v}") },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SemanticViolation {
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for SemanticViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

/// Limits for semantic derivations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SemanticConfig {
    /// Premises per rule step.
    pub c_max: usize,
    /// Largest support enumerated.
    pub w_max: usize,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        SemanticConfig { c_max: 3, w_max: DEFAULT_MAX_SUPPORT }
    }
}

/// A set `S ⊆ {0,1}^n` stored on its semantic support, variables sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SemanticLine(TruthTable);

impl SemanticLine {
    pub fn from_table(t: &TruthTable) -> Self {
        let mut sorted = t.vars().to_vec();
        sorted.sort();
        let t = if sorted.as_slice() == t.vars() { t.clone() } else { t.reindex(&sorted) };
        SemanticLine(t.reduce())
    }

    pub fn from_formula(f: &Formula, w_max: usize) -> Result<Self, SemanticError> {
        Ok(SemanticLine::from_table(&f.table(w_max)?))
    }

    pub fn from_equation(vars: &[Var], e: &Equation) -> Self {
        let vs: Vec<Var> = e.cols().into_iter().map(|j| vars[j].clone()).collect();
        SemanticLine::from_table(&TruthTable::from_fn(vs, |a| (a.count_ones() % 2 == 1) == e.rhs))
    }

    pub fn full() -> Self {
        SemanticLine(TruthTable::constant(vec![], true))
    }

    pub fn empty() -> Self {
        SemanticLine(TruthTable::constant(vec![], false))
    }

    pub fn table(&self) -> &TruthTable {
        &self.0
    }

    pub fn support(&self) -> &[Var] {
        self.0.vars()
    }

    pub fn width(&self) -> usize {
        self.0.arity()
    }

    pub fn is_full(&self) -> bool {
        self.0.is_true()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_false()
    }

    /// Intersection, failing above `w_max` joint variables.
    pub fn intersect(&self, other: &SemanticLine, w_max: usize) -> Result<SemanticLine, SemanticError> {
        let u = union_support([self, other]);
        if u.len() > w_max {
            return Err(SemanticError::SupportTooLarge { support: u.len(), max: w_max });
        }
        Ok(SemanticLine::from_table(&self.0.reindex(&u).and(&other.0.reindex(&u))))
    }

    /// Evaluates membership of a total assignment.
    pub fn contains_point(&self, a: &HashMap<Var, bool>) -> bool {
        let row = self.0.vars().iter().enumerate().fold(0usize, |r, (i, v)| r | ((a[v] as usize) << i));
        self.0.get(row)
    }

    fn hex(&self) -> String {
        let mut s = String::new();
        for w in self.0.words().iter().rev() {
            write!(s, "{w:016x}").unwrap();
        }
        s
    }
}

fn union_support<'a, I: IntoIterator<Item = &'a SemanticLine>>(lines: I) -> Vec<Var> {
    let mut u: Vec<Var> = lines.into_iter().flat_map(|l| l.support().iter().cloned()).collect();
    u.sort();
    u.dedup();
    u
}

/// `T_1 ∩ … ∩ T_c ⊆ T_0` by enumeration over the joint support.
pub fn implies(premises: &[&SemanticLine], conclusion: &SemanticLine, w_max: usize) -> Result<bool, SemanticError> {
    let u = union_support(premises.iter().copied().chain([conclusion]));
    if u.len() > w_max {
        return Err(SemanticError::SupportTooLarge { support: u.len(), max: w_max });
    }
    let mut acc = TruthTable::constant(u.clone(), true);
    for p in premises {
        acc.and_assign(&p.0.reindex(&u));
    }
    Ok(acc.implies(&conclusion.0.reindex(&u)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Justification {
    /// Serialized as `"axiom:<tag>"`.
    Axiom(String),
    Rule(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationLine {
    pub line: SemanticLine,
    pub just: Justification,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SemanticDerivation {
    pub lines: Vec<DerivationLine>,
}

impl SemanticDerivation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Appends an axiom line; returns its 1-based id.
    pub fn axiom(&mut self, line: SemanticLine, tag: impl Into<String>) -> usize {
        self.lines.push(DerivationLine { line, just: Justification::Axiom(tag.into()) });
        self.lines.len()
    }

    /// Appends a rule line from 1-based premise ids.
    pub fn rule(&mut self, line: SemanticLine, premises: Vec<usize>) -> usize {
        self.lines.push(DerivationLine { line, just: Justification::Rule(premises) });
        self.lines.len()
    }

    pub fn last(&self) -> Option<&SemanticLine> {
        self.lines.last().map(|l| &l.line)
    }

    pub fn max_width(&self) -> usize {
        self.lines.iter().map(|l| l.line.width()).max().unwrap_or(0)
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for (k, l) in self.lines.iter().enumerate() {
            let just = match &l.just {
                Justification::Axiom(tag) => serde_json::Value::String(format!("axiom:{tag}")),
                Justification::Rule(p) => serde_json::json!(p),
            };
            let rec = serde_json::json!({
                "id": k + 1,
                "support": l.line.support().iter().map(|v| v.name().to_string()).collect::<Vec<_>>(),
                "bits": l.line.hex(),
                "just": just,
            });
            s.push_str(&rec.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<SemanticDerivation, SemanticError> {
        #[derive(Deserialize)]
        struct Rec {
            id: usize,
            support: Vec<String>,
            bits: String,
            just: serde_json::Value,
        }
        let mut out = SemanticDerivation::new();
        for (k, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let err = |msg: String| SemanticError::Format { line: k + 1, msg };
            let rec: Rec = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
            if rec.id != out.len() + 1 {
                return Err(err("ids must be consecutive from 1".into()));
            }
            let vars: Vec<Var> = rec.support.iter().map(|s| Var::new(s)).collect();
            let nwords = if vars.len() <= 6 { 1 } else { 1usize << (vars.len() - 6) };
            if rec.bits.len() != 16 * nwords {
                return Err(err("bits length does not match support".into()));
            }
            let mut words = Vec::with_capacity(nwords);
            for c in rec.bits.as_bytes().chunks(16).rev() {
                let h = std::str::from_utf8(c).map_err(|e| err(e.to_string()))?;
                words.push(u64::from_str_radix(h, 16).map_err(|e| err(e.to_string()))?);
            }
            let t = TruthTable::from_words(vars, words).ok_or_else(|| err("malformed table".into()))?;
            let line = SemanticLine::from_table(&t);
            match rec.just {
                serde_json::Value::String(s) => {
                    let tag =
                        s.strip_prefix("axiom:").ok_or_else(|| err("justification must be axiom:<tag>".into()))?;
                    out.axiom(line, tag);
                }
                v => {
                    let p: Vec<usize> = serde_json::from_value(v).map_err(|e| err(e.to_string()))?;
                    out.rule(line, p);
                }
            }
        }
        Ok(out)
    }
}

/// Checks every axiom line against `axioms` and every rule step by enumeration.
pub fn check_semantic(
    d: &SemanticDerivation,
    axioms: &[SemanticLine],
    cfg: &SemanticConfig,
) -> Result<(), SemanticError> {
    let known: HashSet<&SemanticLine> = axioms.iter().collect();
    let mut bad = Vec::new();
    for (k, l) in d.lines.iter().enumerate() {
        let id = k + 1;
        match &l.just {
            Justification::Axiom(tag) => {
                if !known.contains(&l.line) {
                    bad.push(SemanticViolation { line: id, reason: format!("axiom {tag} is not in the axiom set") });
                }
            }
            Justification::Rule(prem) => {
                if prem.len() > cfg.c_max {
                    bad.push(SemanticViolation {
                        line: id,
                        reason: format!("{} premises exceed {}", prem.len(), cfg.c_max),
                    });
                    continue;
                }
                if let Some(p) = prem.iter().find(|&&p| p == 0 || p >= id) {
                    bad.push(SemanticViolation { line: id, reason: format!("premise {p} is not an earlier line") });
                    continue;
                }
                let ps: Vec<&SemanticLine> = prem.iter().map(|&p| &d.lines[p - 1].line).collect();
                if !implies(&ps, &l.line, cfg.w_max)? {
                    bad.push(SemanticViolation { line: id, reason: "premises do not imply the line".into() });
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(SemanticError::Invalid(bad))
    }
}

/// Width of a line after dummy elimination.
pub fn line_width(l: &SemanticLine) -> usize {
    l.width()
}

/// Outcome of transforming a proof under a formula assignment.
#[derive(Clone, Debug)]
pub struct TransformReport {
    pub derivation: SemanticDerivation,
    /// The axiom set `restrict(inputs, σ) ∪ A_σ` as lines.
    pub axioms: Vec<SemanticLine>,
    /// Maximum semantic width over the original lines.
    pub proof_width: usize,
    /// Maximum semantic width over `A_σ`.
    pub axiom_width: usize,
    pub max_width: usize,
    /// `max_width / max(proof_width, axiom_width, 1)`.
    pub ratio: Ratio<u64>,
    /// Derivation line id of each original line.
    pub line_map: Vec<usize>,
}

/// Rebuilds `proof|σ` as a semantic derivation from `restrict(inputs, σ) ∪ A_σ`.
pub fn transform(
    proof: &FregeProof,
    sigma: &FormulaAssignment,
    cfg: &SemanticConfig,
) -> Result<TransformReport, SemanticError> {
    let line_of = |f: &Formula| SemanticLine::from_formula(f, cfg.w_max);
    let mut d = SemanticDerivation::new();
    let mut axioms = Vec::new();
    let mut axiom_ids: HashMap<Formula, usize> = HashMap::new();
    let mut input_ids: HashMap<Formula, usize> = HashMap::new();
    for (k, f) in proof.inputs.iter().enumerate() {
        let r = sigma.restrict(f);
        let l = line_of(&r)?;
        axioms.push(l.clone());
        let id = d.axiom(l, format!("input:{}", k + 1));
        input_ids.entry(r).or_insert(id);
    }
    let mut axiom_width = 0;
    for (k, (f, v)) in sigma.pairs().enumerate() {
        let a = f.power(v);
        let l = line_of(&a)?;
        axiom_width = axiom_width.max(l.width());
        axioms.push(l.clone());
        let id = d.axiom(l, format!("sigma:{}", k + 1));
        axiom_ids.entry(f.clone()).or_insert(id);
    }
    let mut proof_width = 0;
    let mut map: Vec<usize> = Vec::with_capacity(proof.lines.len());
    for line in &proof.lines {
        proof_width = proof_width.max(line.formula.width_or_bound(cfg.w_max).0);
        let restricted = sigma.restrict(&line.formula);
        let l = line_of(&restricted)?;
        if line.rule == RuleName::Input {
            map.push(input_ids[&restricted]);
            continue;
        }
        if l.is_full() {
            map.push(d.rule(l, vec![]));
            continue;
        }
        let mut pool: Vec<usize> = Vec::new();
        for &p in &line.premises {
            let id = map[p - 1];
            if !d.lines[id - 1].line.is_full() && !pool.contains(&id) {
                pool.push(id);
            }
        }
        let mut related: Vec<Formula> = line.premises.iter().map(|&p| proof.lines[p - 1].formula.clone()).collect();
        for m in [&line.sub.p, &line.sub.q, &line.sub.r].into_iter().flatten() {
            related.push(m.clone());
            related.push(Formula::neg(m));
        }
        for f in &related {
            for g in f.subformulas() {
                if !g.is_or() {
                    continue;
                }
                let pre = Formula::or(g.children().iter().map(|c| sigma.restrict(c)));
                if let Some(dj) = sigma.weakened_disjunction(&pre) {
                    let id = axiom_ids[dj];
                    if !pool.contains(&id) {
                        pool.push(id);
                    }
                }
            }
        }
        let chosen = choose_premises(&d, &pool, &l, cfg)?
            .ok_or(SemanticError::TransformFailure { line: line.id, c_max: cfg.c_max })?;
        map.push(d.rule(l, chosen));
    }
    let max_width = d.max_width();
    let base = proof_width.max(axiom_width).max(1) as u64;
    let ratio = Ratio::new(max_width as u64, base);
    Ok(TransformReport { derivation: d, axioms, proof_width, axiom_width, max_width, ratio, line_map: map })
}

/// Smallest premise subset of `pool` (in order of size, then position) implying `goal`.
fn choose_premises(
    d: &SemanticDerivation,
    pool: &[usize],
    goal: &SemanticLine,
    cfg: &SemanticConfig,
) -> Result<Option<Vec<usize>>, SemanticError> {
    let lines: Vec<&SemanticLine> = pool.iter().map(|&i| &d.lines[i - 1].line).collect();
    for size in 0..=cfg.c_max.min(pool.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let ps: Vec<&SemanticLine> = idx.iter().map(|&i| lines[i]).collect();
            if implies(&ps, goal, cfg.w_max)? {
                return Ok(Some(idx.iter().map(|&i| pool[i]).collect()));
            }
            if !next_combination(&mut idx, pool.len()) {
                break;
            }
        }
    }
    Ok(None)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// A clause as `(positive mask, negative mask)` over at most 128 variables.
type MaskClause = (u128, u128);

fn width(c: &MaskClause) -> usize {
    (c.0.count_ones() + c.1.count_ones()) as usize
}

/// Widest clause whose proper sub-clauses are searched for subsumption.
const SUBSUMPTION_WIDTH: usize = 12;

fn subsumed(seen: &HashSet<MaskClause>, c: MaskClause) -> bool {
    let lits: Vec<(u128, bool)> =
        bit_positions(c.0).map(|v| (1u128 << v, true)).chain(bit_positions(c.1).map(|v| (1u128 << v, false))).collect();
    if lits.len() > SUBSUMPTION_WIDTH {
        return false;
    }
    (0u32..(1 << lits.len()) - 1).any(|pick| {
        let sub = lits.iter().enumerate().filter(|(i, _)| pick >> i & 1 == 1).fold((0, 0), |(p, n), (_, &(b, s))| {
            if s {
                (p | b, n)
            } else {
                (p, n | b)
            }
        });
        seen.contains(&sub)
    })
}

fn bit_positions(mut m: u128) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            return None;
        }
        let v = m.trailing_zeros() as usize;
        m &= m - 1;
        Some(v)
    })
}

/// Premises `(left, right)` and pivot variable of one resolution step.
pub type Resolvent = (usize, usize, usize);

/// Result of width-bounded saturation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SaturationResult {
    pub refutable: bool,
    pub clauses: usize,
    /// Resolution steps `(left, right, pivot variable)` leading to the empty
    /// clause, over the clause list in derivation order.
    #[serde(skip)]
    pub derivation: Vec<(Vec<Lit>, Option<Resolvent>)>,
}

/// Closes `F` under resolution restricted to width `w`; refutable iff the
/// empty clause appears.
pub fn resolution_width_saturation(cnf: &Cnf, w: usize) -> Result<SaturationResult, SemanticError> {
    if let Some((i, c)) = cnf.clauses.iter().enumerate().find(|(_, c)| c.len() > w) {
        return Err(SemanticError::ClauseTooWide { clause: i, width: c.len(), limit: w });
    }
    saturate(cnf, w)
}

/// Like [`resolution_width_saturation`], but input clauses wider than `w`
/// are left out instead of rejected.
pub fn refutable_within(cnf: &Cnf, w: usize) -> Result<bool, SemanticError> {
    let narrow =
        Cnf { vars: cnf.vars.clone(), clauses: cnf.clauses.iter().filter(|c| c.len() <= w).cloned().collect() };
    Ok(saturate(&narrow, w)?.refutable)
}

fn saturate(cnf: &Cnf, w: usize) -> Result<SaturationResult, SemanticError> {
    if cnf.n() > 128 {
        return Err(SemanticError::TooManyVariables(128));
    }
    let mut list: Vec<MaskClause> = Vec::new();
    let mut origin: Vec<Option<Resolvent>> = Vec::new();
    let mut seen: HashSet<MaskClause> = HashSet::new();
    let mut add = |c: MaskClause, o: Option<Resolvent>, list: &mut Vec<MaskClause>| -> Option<usize> {
        if c.0 & c.1 != 0 || seen.contains(&c) || subsumed(&seen, c) {
            return None;
        }
        seen.insert(c);
        list.push(c);
        origin.push(o);
        Some(list.len() - 1)
    };
    let mut initial: Vec<MaskClause> = cnf
        .clauses
        .iter()
        .map(|c| {
            c.iter().fold(
                (0u128, 0u128),
                |(p, n), l| {
                    if l.positive {
                        (p | 1 << l.var, n)
                    } else {
                        (p, n | 1 << l.var)
                    }
                },
            )
        })
        .collect();
    initial.sort_by_key(|c| (width(c), c.0, c.1));
    // Pending clauses bucketed by width; the narrowest is processed first.
    let mut pending: Vec<Vec<usize>> = vec![Vec::new(); w + 1];
    for c in initial {
        if let Some(id) = add(c, None, &mut list) {
            pending[width(&c)].push(id);
        }
    }
    for b in &mut pending {
        b.reverse();
    }
    let mut empty: Option<usize> = list.iter().position(|c| width(c) == 0);
    // by_lit[2v] holds clauses containing x_v, by_lit[2v + 1] those containing ~x_v.
    let mut by_lit: Vec<Vec<usize>> = vec![Vec::new(); 2 * cnf.n()];
    while empty.is_none() {
        let Some(me) = pending.iter_mut().find_map(|b| b.pop()) else { break };
        let c = list[me];
        'vars: for v in bit_positions(c.0 | c.1) {
            let bit = 1u128 << v;
            let pos = c.0 & bit != 0;
            let key = if pos { 2 * v + 1 } else { 2 * v };
            for &j in &by_lit[key] {
                let o = list[j];
                let r = ((c.0 | o.0) & !bit, (c.1 | o.1) & !bit);
                if width(&r) > w {
                    continue;
                }
                let (a, b) = if pos { (me, j) } else { (j, me) };
                if let Some(id) = add(r, Some((a, b, v)), &mut list) {
                    if width(&r) == 0 {
                        empty = Some(id);
                        break 'vars;
                    }
                    pending[width(&r)].push(id);
                }
            }
        }
        for v in bit_positions(c.0) {
            by_lit[2 * v].push(me);
        }
        for v in bit_positions(c.1) {
            by_lit[2 * v + 1].push(me);
        }
    }
    let derivation = match empty {
        Some(e) => extract(&list, &origin, e),
        None => Vec::new(),
    };
    Ok(SaturationResult { refutable: empty.is_some(), clauses: list.len(), derivation })
}

fn extract(list: &[MaskClause], origin: &[Option<Resolvent>], goal: usize) -> Vec<(Vec<Lit>, Option<Resolvent>)> {
    let mut need = vec![false; list.len()];
    let mut stack = vec![goal];
    while let Some(i) = stack.pop() {
        if std::mem::replace(&mut need[i], true) {
            continue;
        }
        if let Some((a, b, _)) = origin[i] {
            stack.push(a);
            stack.push(b);
        }
    }
    let mut pos = vec![usize::MAX; list.len()];
    let mut out = Vec::new();
    for i in 0..list.len() {
        if !need[i] {
            continue;
        }
        pos[i] = out.len();
        let (p, n) = list[i];
        let lits: Vec<Lit> = (0..128)
            .filter_map(|v| {
                if p >> v & 1 == 1 {
                    Some(Lit::new(v, true))
                } else if n >> v & 1 == 1 {
                    Some(Lit::new(v, false))
                } else {
                    None
                }
            })
            .collect();
        out.push((lits, origin[i].map(|(a, b, v)| (pos[a], pos[b], v))));
    }
    out
}
