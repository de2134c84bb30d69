//! Variable assignments, formula assignments and the restriction operator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{parse_formula, Formula, Kind, Var};
use crate::frege::LevelMap;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssignError {
    #[error("{0} has a negation as its top gate")]
    NegationTopGate(Formula),
    #[error("disjunction {0} is assigned 0")]
    DisjunctionMappedToZero(Formula),
    #[error("{0} occurs twice in the domain")]
    DuplicateDomain(Formula),
    #[error("constant {0} cannot be assigned")]
    ConstantInDomain(Formula),
    #[error("assignment file: {0}")]
    Format(String),
}

/// A partial assignment of bits to variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarAssignment(BTreeMap<Var, bool>);

impl VarAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, v: &Var) -> Option<bool> {
        self.0.get(v).copied()
    }

    pub fn insert(&mut self, v: Var, b: bool) -> Option<bool> {
        self.0.insert(v, b)
    }

    pub fn contains(&self, v: &Var) -> bool {
        self.0.contains_key(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, bool)> {
        self.0.iter().map(|(v, b)| (v, *b))
    }

    pub fn domain(&self) -> impl Iterator<Item = &Var> {
        self.0.keys()
    }

    pub fn map(&self) -> &BTreeMap<Var, bool> {
        &self.0
    }

    /// Union; panics on a conflicting value.
    pub fn extend(&mut self, other: &VarAssignment) {
        for (v, b) in other.iter() {
            if let Some(old) = self.0.insert(v.clone(), b) {
                assert_eq!(old, b, "conflicting values for {v}");
            }
        }
    }

    /// Classic substitution followed by constant folding.
    pub fn restrict(&self, f: &Formula) -> Formula {
        let mut memo = HashMap::new();
        self.restrict_memo(f, &mut memo)
    }

    /// Restricts many formulas with one shared memo.
    pub fn restrict_all(&self, fs: &[Formula]) -> Vec<Formula> {
        let mut memo = HashMap::new();
        fs.iter().map(|f| self.restrict_memo(f, &mut memo)).collect()
    }

    fn restrict_memo(&self, f: &Formula, memo: &mut HashMap<u64, Formula>) -> Formula {
        if f.vars().iter().all(|v| !self.contains(v)) {
            return f.clone();
        }
        if let Some(g) = memo.get(&f.id()) {
            return g.clone();
        }
        let g = match f.kind() {
            Kind::Const(_) => f.clone(),
            Kind::Var(x) => self.get(x).map(Formula::constant).unwrap_or_else(|| f.clone()),
            Kind::Neg(c) => Formula::neg(&self.restrict_memo(c, memo)),
            Kind::Or(cs) => Formula::or(cs.iter().map(|c| self.restrict_memo(c, memo))),
        };
        memo.insert(f.id(), g.clone());
        g
    }

    pub fn to_pairs(&self) -> Vec<(Formula, bool)> {
        self.iter().map(|(v, b)| (Formula::from_var(v.clone()), b)).collect()
    }
}

impl FromIterator<(Var, bool)> for VarAssignment {
    fn from_iter<I: IntoIterator<Item = (Var, bool)>>(iter: I) -> Self {
        VarAssignment(iter.into_iter().collect())
    }
}

impl crate::formula::Valuation for VarAssignment {
    fn value(&self, v: &Var) -> Option<bool> {
        self.get(v)
    }
}

/// A validated set of `(formula, bit)` pairs.
#[derive(Debug)]
pub struct FormulaAssignment {
    pairs: BTreeMap<Formula, bool>,
    vars: HashMap<Var, bool>,
    disjunctions: Vec<Formula>,
    memo: Mutex<HashMap<u64, Formula>>,
}

impl Clone for FormulaAssignment {
    fn clone(&self) -> Self {
        FormulaAssignment {
            pairs: self.pairs.clone(),
            vars: self.vars.clone(),
            disjunctions: self.disjunctions.clone(),
            memo: Mutex::new(self.memo.lock().unwrap().clone()),
        }
    }
}

impl PartialEq for FormulaAssignment {
    fn eq(&self, other: &Self) -> bool {
        self.pairs == other.pairs
    }
}

impl Eq for FormulaAssignment {}

impl Default for FormulaAssignment {
    fn default() -> Self {
        FormulaAssignment::empty()
    }
}

impl FormulaAssignment {
    pub fn empty() -> Self {
        FormulaAssignment {
            pairs: BTreeMap::new(),
            vars: HashMap::new(),
            disjunctions: Vec::new(),
            memo: Mutex::new(HashMap::new()),
        }
    }

    /// Checks both structural conditions and distinctness of the domain.
    pub fn validate<I: IntoIterator<Item = (Formula, bool)>>(pairs: I) -> Result<Self, AssignError> {
        let mut out = FormulaAssignment::empty();
        for (f, b) in pairs {
            out.push(f, b)?;
        }
        Ok(out)
    }

    fn push(&mut self, f: Formula, b: bool) -> Result<(), AssignError> {
        match f.kind() {
            Kind::Const(_) => return Err(AssignError::ConstantInDomain(f)),
            Kind::Neg(_) => return Err(AssignError::NegationTopGate(f)),
            Kind::Or(_) if !b => return Err(AssignError::DisjunctionMappedToZero(f)),
            _ => {}
        }
        if self.pairs.contains_key(&f) {
            return Err(AssignError::DuplicateDomain(f));
        }
        match f.kind() {
            Kind::Var(x) => {
                self.vars.insert(x.clone(), b);
            }
            _ => {
                let pos = self.disjunctions.binary_search(&f).unwrap_err();
                self.disjunctions.insert(pos, f.clone());
            }
        }
        self.pairs.insert(f, b);
        self.memo.get_mut().unwrap().clear();
        Ok(())
    }

    /// Adds one pair, re-validating the conditions.
    pub fn insert(&mut self, f: Formula, b: bool) -> Result<(), AssignError> {
        self.push(f, b)
    }

    pub fn from_vars(rho: &VarAssignment) -> Self {
        FormulaAssignment::validate(rho.to_pairs()).expect("variable pairs are always valid")
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, f: &Formula) -> Option<bool> {
        self.pairs.get(f).copied()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Formula, bool)> {
        self.pairs.iter().map(|(f, b)| (f, *b))
    }

    pub fn domain(&self) -> impl Iterator<Item = &Formula> {
        self.pairs.keys()
    }

    /// Domain disjunctions in structural order.
    pub fn disjunctions(&self) -> &[Formula] {
        &self.disjunctions
    }

    /// First domain disjunction that `c` weakens.
    pub fn weakened_disjunction(&self, c: &Formula) -> Option<&Formula> {
        if !c.is_or() {
            return None;
        }
        self.disjunctions.iter().find(|d| c.weakening_of(d))
    }

    /// `{D^α : (D, α) ∈ σ}`.
    pub fn axiom_set(&self) -> Vec<Formula> {
        self.pairs.iter().map(|(f, b)| f.power(*b)).collect()
    }

    /// Bottom-up restriction by the three inductive cases.
    pub fn restrict(&self, f: &Formula) -> Formula {
        if self.pairs.is_empty() || f.is_const() {
            return f.clone();
        }
        if let Some(g) = self.memo.lock().unwrap().get(&f.id()) {
            return g.clone();
        }
        let g = match f.kind() {
            Kind::Const(_) => f.clone(),
            Kind::Var(x) => self.vars.get(x).map(|b| Formula::constant(*b)).unwrap_or_else(|| f.clone()),
            Kind::Neg(c) => Formula::neg(&self.restrict(c)),
            Kind::Or(cs) => {
                let c2 = Formula::or(cs.iter().map(|c| self.restrict(c)));
                if self.weakened_disjunction(&c2).is_some() {
                    Formula::one()
                } else {
                    c2
                }
            }
        };
        self.memo.lock().unwrap().insert(f.id(), g.clone());
        g
    }

    /// Restricts every line and carries levels over to the images.
    pub fn restrict_proof(&self, lines: &[Formula], levels: &LevelMap) -> (Vec<Formula>, LevelMap) {
        let restricted: Vec<Formula> = lines.iter().map(|f| self.restrict(f)).collect();
        let mut out = LevelMap::new();
        for (d, ls) in levels.iter() {
            out.add_all(&self.restrict(d), ls);
        }
        (restricted, out)
    }

    /// The JSON assignment-file form.
    pub fn to_entries(&self) -> Vec<AssignmentEntry> {
        self.pairs.iter().map(|(f, b)| AssignmentEntry { f: f.to_string(), v: *b as u8 }).collect()
    }

    pub fn from_entries(entries: &[AssignmentEntry]) -> Result<Self, AssignError> {
        let mut pairs = Vec::new();
        for e in entries {
            let f = parse_formula(&e.f).map_err(|err| AssignError::Format(err.to_string()))?;
            if e.v > 1 {
                return Err(AssignError::Format(format!("value {} is not a bit", e.v)));
            }
            pairs.push((f, e.v == 1));
        }
        FormulaAssignment::validate(pairs)
    }

    /// Variables occurring in any domain formula.
    pub fn occurring_vars(&self) -> BTreeSet<Var> {
        self.pairs.keys().flat_map(|f| f.vars().iter().cloned()).collect()
    }
}

/// One entry of an assignment file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub f: String,
    pub v: u8,
}

impl VarAssignment {
    pub fn to_entries(&self) -> Vec<AssignmentEntry> {
        self.iter().map(|(x, b)| AssignmentEntry { f: x.to_string(), v: b as u8 }).collect()
    }

    pub fn from_entries(entries: &[AssignmentEntry]) -> Result<Self, AssignError> {
        let mut out = VarAssignment::new();
        for e in entries {
            let f = parse_formula(&e.f).map_err(|err| AssignError::Format(err.to_string()))?;
            let x = f.as_var().ok_or_else(|| AssignError::Format(format!("{} is not a variable", e.f)))?;
            if e.v > 1 {
                return Err(AssignError::Format(format!("value {} is not a bit", e.v)));
            }
            if out.insert(x.clone(), e.v == 1).is_some() {
                return Err(AssignError::DuplicateDomain(f));
            }
        }
        Ok(out)
    }
}

/// One stage of a successive restriction.
#[derive(Clone, Debug)]
pub enum Restriction {
    Vars(VarAssignment),
    Formulas(FormulaAssignment),
}

impl Restriction {
    pub fn apply(&self, f: &Formula) -> Formula {
        match self {
            Restriction::Vars(rho) => rho.restrict(f),
            Restriction::Formulas(sigma) => sigma.restrict(f),
        }
    }
}

/// `((f|s1)|s2 ...)|sm`.
pub fn compose_restrict(f: &Formula, seq: &[Restriction]) -> Formula {
    seq.iter().fold(f.clone(), |g, s| s.apply(&g))
}
