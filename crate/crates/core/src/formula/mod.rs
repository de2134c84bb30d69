//! Boolean formulas over `∨`, `¬`, `0`, `1` in merged form.
//!
//! Every formula is interned in a process-wide [`FormulaStore`], so equal
//! structures share one node and compare by id.

mod parse;
mod table;

pub use parse::{parse_formula, ParseError};
pub use table::TruthTable;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// Default bound on the support of exhaustive truth tables.
pub const DEFAULT_MAX_SUPPORT: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("support of {support} variables exceeds the limit {max}")]
    SupportTooLarge { support: usize, max: usize },
    #[error("variable {0} has no value")]
    MissingVariable(String),
}

/// A propositional variable, ordered naturally (`x2 < x10`).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Self {
        Var(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    fn split(&self) -> (&str, Option<u128>) {
        let s: &str = &self.0;
        let cut = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (head, digits) = s.split_at(cut);
        (head, digits.parse().ok())
    }
}

impl Ord for Var {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ha, na) = self.split();
        let (hb, nb) = other.split();
        ha.cmp(hb).then(na.cmp(&nb)).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Self {
        Var::new(s)
    }
}

#[derive(Clone, Debug)]
pub enum Kind {
    Const(bool),
    Var(Var),
    Neg(Formula),
    Or(Vec<Formula>),
}

pub struct Node {
    id: u64,
    kind: Kind,
    vars: Vec<Var>,
    depth: u32,
}

/// Hash-consed formula handle.
#[derive(Clone)]
pub struct Formula(Arc<Node>);

#[derive(Clone, PartialEq, Eq, Hash)]
enum Key {
    Const(bool),
    Var(Var),
    Neg(u64),
    Or(Vec<u64>),
}

/// Append-only interning table shared by all formulas.
pub struct FormulaStore {
    table: Mutex<HashMap<Key, Formula>>,
}

impl FormulaStore {
    pub fn global() -> &'static FormulaStore {
        static STORE: OnceLock<FormulaStore> = OnceLock::new();
        STORE.get_or_init(|| FormulaStore { table: Mutex::new(HashMap::new()) })
    }

    /// Number of distinct nodes interned so far.
    pub fn len(&self) -> usize {
        self.table.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn intern(&self, key: Key, build: impl FnOnce() -> Kind) -> Formula {
        let mut table = self.table.lock().unwrap();
        if let Some(f) = table.get(&key) {
            return f.clone();
        }
        let id = table.len() as u64;
        let kind = build();
        let (vars, depth) = match &kind {
            Kind::Const(_) => (Vec::new(), 0),
            Kind::Var(v) => (vec![v.clone()], 0),
            Kind::Neg(c) => (c.0.vars.clone(), c.0.depth + 1),
            Kind::Or(cs) => {
                let mut vars: Vec<Var> = cs.iter().flat_map(|c| c.0.vars.iter().cloned()).collect();
                vars.sort();
                vars.dedup();
                (vars, cs.iter().map(|c| c.0.depth).max().unwrap_or(0).max(1))
            }
        };
        let f = Formula(Arc::new(Node { id, kind, vars, depth }));
        table.insert(key, f.clone());
        f
    }
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.0.id == other.0.id
    }
}

impl Eq for Formula {}

impl Hash for Formula {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.id.hash(state)
    }
}

impl Ord for Formula {
    /// Structural order: constants, variables, negations, disjunctions.
    fn cmp(&self, other: &Self) -> Ordering {
        if self.0.id == other.0.id {
            return Ordering::Equal;
        }
        let rank = |k: &Kind| match k {
            Kind::Const(_) => 0,
            Kind::Var(_) => 1,
            Kind::Neg(_) => 2,
            Kind::Or(_) => 3,
        };
        match (&self.0.kind, &other.0.kind) {
            (Kind::Const(a), Kind::Const(b)) => a.cmp(b),
            (Kind::Var(a), Kind::Var(b)) => a.cmp(b),
            (Kind::Neg(a), Kind::Neg(b)) => a.cmp(b),
            (Kind::Or(a), Kind::Or(b)) => a.iter().cmp(b.iter()),
            (a, b) => rank(a).cmp(&rank(b)),
        }
    }
}

impl PartialOrd for Formula {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Source of variable values for [`Formula::evaluate`].
pub trait Valuation {
    fn value(&self, v: &Var) -> Option<bool>;
}

impl Valuation for HashMap<Var, bool> {
    fn value(&self, v: &Var) -> Option<bool> {
        self.get(v).copied()
    }
}

impl Valuation for BTreeMap<Var, bool> {
    fn value(&self, v: &Var) -> Option<bool> {
        self.get(v).copied()
    }
}

impl<F: Fn(&Var) -> Option<bool>> Valuation for F {
    fn value(&self, v: &Var) -> Option<bool> {
        self(v)
    }
}

impl Formula {
    pub fn constant(b: bool) -> Formula {
        FormulaStore::global().intern(Key::Const(b), || Kind::Const(b))
    }

    pub fn zero() -> Formula {
        Formula::constant(false)
    }

    pub fn one() -> Formula {
        Formula::constant(true)
    }

    pub fn var(name: &str) -> Formula {
        Formula::from_var(Var::new(name))
    }

    pub fn from_var(v: Var) -> Formula {
        FormulaStore::global().intern(Key::Var(v.clone()), || Kind::Var(v))
    }

    /// Negation with constant and double-negation folding.
    pub fn neg(f: &Formula) -> Formula {
        match &f.0.kind {
            Kind::Const(b) => Formula::constant(!b),
            Kind::Neg(inner) => inner.clone(),
            _ => {
                let c = f.clone();
                FormulaStore::global().intern(Key::Neg(f.0.id), || Kind::Neg(c))
            }
        }
    }

    /// Merged disjunction: flattens, drops `0`, absorbs `1`, sorts, dedups.
    pub fn or<I: IntoIterator<Item = Formula>>(children: I) -> Formula {
        let mut flat = Vec::new();
        for c in children {
            match &c.0.kind {
                Kind::Const(true) => return Formula::one(),
                Kind::Const(false) => {}
                Kind::Or(cs) => flat.extend(cs.iter().cloned()),
                _ => flat.push(c),
            }
        }
        flat.sort();
        flat.dedup();
        match flat.len() {
            0 => Formula::zero(),
            1 => flat.pop().unwrap(),
            _ => {
                let key = Key::Or(flat.iter().map(|c| c.0.id).collect());
                FormulaStore::global().intern(key, || Kind::Or(flat))
            }
        }
    }

    pub fn or2(a: &Formula, b: &Formula) -> Formula {
        Formula::or([a.clone(), b.clone()])
    }

    /// `self` when `bit` is 1, its negation otherwise.
    pub fn power(&self, bit: bool) -> Formula {
        if bit {
            self.clone()
        } else {
            Formula::neg(self)
        }
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    pub fn as_const(&self) -> Option<bool> {
        match self.0.kind {
            Kind::Const(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&Var> {
        match &self.0.kind {
            Kind::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        self.as_const().is_some()
    }

    pub fn is_or(&self) -> bool {
        matches!(self.0.kind, Kind::Or(_))
    }

    pub fn is_neg(&self) -> bool {
        matches!(self.0.kind, Kind::Neg(_))
    }

    pub fn children(&self) -> &[Formula] {
        match &self.0.kind {
            Kind::Neg(c) => std::slice::from_ref(c),
            Kind::Or(cs) => cs,
            _ => &[],
        }
    }

    /// Syntactic variables in natural order.
    pub fn vars(&self) -> &[Var] {
        &self.0.vars
    }

    /// Alternations between `∨` and `¬`; a clause has depth 1.
    pub fn depth(&self) -> usize {
        self.0.depth as usize
    }

    /// Number of children of the top gate.
    pub fn in_degree(&self) -> usize {
        self.children().len()
    }

    /// Disjuncts of a disjunction, or the formula itself as a singleton.
    /// The constant `0` is the empty disjunction.
    pub fn disjuncts(&self) -> &[Formula] {
        match &self.0.kind {
            Kind::Or(cs) => cs,
            Kind::Const(false) => &[],
            _ => std::slice::from_ref(self),
        }
    }

    /// Whether `self`'s disjunct set contains `d`'s.
    pub fn weakening_of(&self, d: &Formula) -> bool {
        let mine = self.disjuncts();
        d.disjuncts().iter().all(|x| mine.binary_search(x).is_ok())
    }

    /// All distinct subformulas, children before parents.
    pub fn subformulas(&self) -> Vec<Formula> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        collect_post_order(self, &mut seen, &mut out);
        out
    }

    pub fn evaluate<V: Valuation + ?Sized>(&self, a: &V) -> Result<bool, FormulaError> {
        let mut memo = HashMap::new();
        self.eval_memo(a, &mut memo)
    }

    fn eval_memo<V: Valuation + ?Sized>(&self, a: &V, memo: &mut HashMap<u64, bool>) -> Result<bool, FormulaError> {
        if let Some(v) = memo.get(&self.0.id) {
            return Ok(*v);
        }
        let v = match &self.0.kind {
            Kind::Const(b) => *b,
            Kind::Var(x) => a.value(x).ok_or_else(|| FormulaError::MissingVariable(x.to_string()))?,
            Kind::Neg(c) => !c.eval_memo(a, memo)?,
            Kind::Or(cs) => {
                let mut any = false;
                for c in cs {
                    if c.eval_memo(a, memo)? {
                        any = true;
                        break;
                    }
                }
                any
            }
        };
        memo.insert(self.0.id, v);
        Ok(v)
    }

    /// Truth table over `vars`, which must contain every variable of `self`.
    pub fn truth_table(&self, vars: &[Var]) -> Result<TruthTable, FormulaError> {
        if let Some(missing) = self.vars().iter().find(|v| !vars.contains(v)) {
            return Err(FormulaError::MissingVariable(missing.to_string()));
        }
        let mut memo: HashMap<u64, TruthTable> = HashMap::new();
        for g in self.subformulas() {
            let t = match &g.0.kind {
                Kind::Const(b) => TruthTable::constant(vars.to_vec(), *b),
                Kind::Var(x) => TruthTable::projection(vars.to_vec(), vars.iter().position(|v| v == x).unwrap()),
                Kind::Neg(c) => memo[&c.id()].not(),
                Kind::Or(cs) => {
                    let mut t = memo[&cs[0].id()].clone();
                    for c in &cs[1..] {
                        t.or_assign(&memo[&c.id()]);
                    }
                    t
                }
            };
            memo.insert(g.id(), t);
        }
        Ok(memo.remove(&self.id()).unwrap())
    }

    /// Truth table over the syntactic variables, bounded by `max_support`.
    pub fn table(&self, max_support: usize) -> Result<TruthTable, FormulaError> {
        let n = self.vars().len();
        if n > max_support {
            return Err(FormulaError::SupportTooLarge { support: n, max: max_support });
        }
        self.truth_table(self.vars())
    }

    /// Number of variables the function actually depends on.
    pub fn semantic_width(&self, max_support: usize) -> Result<usize, FormulaError> {
        Ok(self.table(max_support)?.width())
    }

    /// Semantic width when computable, else the syntactic count flagged as a bound.
    pub fn width_or_bound(&self, max_support: usize) -> (usize, bool) {
        match self.semantic_width(max_support) {
            Ok(w) => (w, true),
            Err(_) => (self.vars().len(), false),
        }
    }
}

fn collect_post_order(f: &Formula, seen: &mut HashSet<u64>, out: &mut Vec<Formula>) {
    if !seen.insert(f.id()) {
        return;
    }
    for c in f.children() {
        collect_post_order(c, seen, out);
    }
    out.push(f.clone());
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.kind {
            Kind::Const(b) => write!(f, "{}", *b as u8),
            Kind::Var(v) => write!(f, "{v}"),
            Kind::Neg(c) => write!(f, "~{c}"),
            Kind::Or(cs) => {
                f.write_str("(")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl serde::Serialize for Formula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Formula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_formula(&s).map_err(serde::de::Error::custom)
    }
}

/// Subformulas of a collection, deduplicated, children first.
pub fn subformulas_of<'a, I: IntoIterator<Item = &'a Formula>>(fs: I) -> Vec<Formula> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for f in fs {
        collect_post_order(f, &mut seen, &mut out);
    }
    out
}
