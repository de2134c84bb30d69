//! Linear systems over F2, CNF translations and random instances.

use std::collections::HashMap;
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::assign::VarAssignment;
use crate::formula::{Formula, Var};
use crate::graph::BipartiteGraph;

/// Default bound on equation support for the canonical CNF encoding.
pub const DEFAULT_WIDTH_LIMIT: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum F2Error {
    #[error("clause {clause} has {len} literals over distinct variables, expected 3")]
    ClauseArity { clause: usize, len: usize },
    #[error("equation {index} has support {width} above the limit {limit}")]
    WidthLimit { index: usize, width: usize, limit: usize },
    #[error("the assignment falsifies equation {0}")]
    FalsifiedEquation(usize),
    #[error("need at least 3 variables, got {0}")]
    TooFewVariables(usize),
    #[error("equation 0 = 1 cannot be stored")]
    EmptyInconsistent,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A literal over a variable column; `positive` is the sign bit δ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit {
    pub var: usize,
    pub positive: bool,
}

impl Lit {
    pub fn new(var: usize, positive: bool) -> Self {
        Lit { var, positive }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cnf {
    pub vars: Vec<Var>,
    pub clauses: Vec<Vec<Lit>>,
}

/// Variable names `x1..xn`.
pub fn default_vars(n: usize) -> Vec<Var> {
    (1..=n).map(|i| Var::new(&format!("x{i}"))).collect()
}

fn parse_err(line: usize, msg: impl Into<String>) -> F2Error {
    F2Error::Parse { line, msg: msg.into() }
}

impl Cnf {
    pub fn n(&self) -> usize {
        self.vars.len()
    }

    pub fn clause_formula(&self, i: usize) -> Formula {
        Formula::or(self.clauses[i].iter().map(|l| Formula::from_var(self.vars[l.var].clone()).power(l.positive)))
    }

    pub fn formulas(&self) -> Vec<Formula> {
        (0..self.clauses.len()).map(|i| self.clause_formula(i)).collect()
    }

    pub fn max_width(&self) -> usize {
        self.clauses.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn satisfied_by(&self, a: &[bool]) -> bool {
        self.clauses.iter().all(|c| c.iter().any(|l| a[l.var] == l.positive))
    }

    pub fn to_dimacs(&self) -> String {
        let mut s = format!("p cnf {} {}\n", self.n(), self.clauses.len());
        for c in &self.clauses {
            for l in c {
                let v = l.var as i64 + 1;
                write!(s, "{} ", if l.positive { v } else { -v }).unwrap();
            }
            s.push_str("0\n");
        }
        s
    }

    pub fn from_dimacs(text: &str) -> Result<Cnf, F2Error> {
        let mut n = None;
        let mut clauses = Vec::new();
        let mut cur = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('c') {
                continue;
            }
            if t.starts_with('p') {
                let parts: Vec<&str> = t.split_whitespace().collect();
                if parts.len() != 4 || parts[1] != "cnf" {
                    return Err(parse_err(k + 1, "expected 'p cnf n m'"));
                }
                n = Some(parts[2].parse::<usize>().map_err(|e| parse_err(k + 1, e.to_string()))?);
                continue;
            }
            let n = n.ok_or_else(|| parse_err(k + 1, "clause before header"))?;
            for tok in t.split_whitespace() {
                let v: i64 = tok.parse().map_err(|_| parse_err(k + 1, format!("bad literal {tok}")))?;
                if v == 0 {
                    clauses.push(std::mem::take(&mut cur));
                } else {
                    let var = v.unsigned_abs() as usize - 1;
                    if var >= n {
                        return Err(parse_err(k + 1, format!("variable {v} out of range")));
                    }
                    cur.push(Lit::new(var, v > 0));
                }
            }
        }
        if !cur.is_empty() {
            clauses.push(cur);
        }
        let n = n.ok_or_else(|| parse_err(0, "missing header"))?;
        Ok(Cnf { vars: default_vars(n), clauses })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub support: FixedBitSet,
    pub rhs: bool,
    /// Stable index surviving subsystems and restrictions.
    pub index: usize,
}

impl Equation {
    pub fn cols(&self) -> Vec<usize> {
        self.support.ones().collect()
    }

    pub fn width(&self) -> usize {
        self.support.count_ones(..)
    }

    pub fn satisfied_by(&self, a: &[bool]) -> bool {
        self.support.ones().filter(|&j| a[j]).count() % 2 == self.rhs as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinSystem {
    vars: Vec<Var>,
    eqs: Vec<Equation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum GaussResult {
    Sat(Vec<bool>),
    /// Stable indices of equations summing to `0 = 1`.
    Unsat(Vec<usize>),
}

impl LinSystem {
    /// Builds a system with indices `0..`; empty `0 = 0` equations are dropped.
    pub fn new(vars: Vec<Var>, eqs: Vec<(Vec<usize>, bool)>) -> Result<Self, F2Error> {
        let indexed = eqs.into_iter().enumerate().map(|(i, (s, b))| (i, s, b)).collect();
        Self::with_indices(vars, indexed)
    }

    pub fn with_indices(vars: Vec<Var>, eqs: Vec<(usize, Vec<usize>, bool)>) -> Result<Self, F2Error> {
        let n = vars.len();
        let mut out = Vec::new();
        for (index, cols, rhs) in eqs {
            let mut support = FixedBitSet::with_capacity(n);
            for c in cols {
                assert!(c < n, "column {c} out of range");
                support.toggle(c);
            }
            if support.is_clear() {
                if rhs {
                    return Err(F2Error::EmptyInconsistent);
                }
                continue;
            }
            out.push(Equation { support, rhs, index });
        }
        Ok(LinSystem { vars, eqs: out })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn n(&self) -> usize {
        self.vars.len()
    }

    pub fn m(&self) -> usize {
        self.eqs.len()
    }

    pub fn equations(&self) -> &[Equation] {
        &self.eqs
    }

    pub fn indices(&self) -> Vec<usize> {
        self.eqs.iter().map(|e| e.index).collect()
    }

    pub fn equation(&self, index: usize) -> Option<&Equation> {
        self.eqs.iter().find(|e| e.index == index)
    }

    pub fn col(&self, v: &Var) -> Option<usize> {
        self.vars.iter().position(|x| x == v)
    }

    pub fn satisfied_by(&self, a: &[bool]) -> bool {
        self.eqs.iter().all(|e| e.satisfied_by(a))
    }

    /// Equation `e` as a formula-free parity string such as `x1+x2=1`.
    pub fn render(&self, e: &Equation) -> String {
        let names: Vec<String> = e.support.ones().map(|j| self.vars[j].to_string()).collect();
        format!("{}={}", names.join("+"), e.rhs as u8)
    }

    /// The equations whose stable indices lie in `idx`.
    pub fn subsystem(&self, idx: &[usize]) -> LinSystem {
        LinSystem {
            vars: self.vars.clone(),
            eqs: self.eqs.iter().filter(|e| idx.contains(&e.index)).cloned().collect(),
        }
    }

    /// Replaces each clause by `x1+x2+x3 = δ1+δ2+δ3`.
    pub fn from_3cnf(cnf: &Cnf) -> Result<LinSystem, F2Error> {
        let mut eqs = Vec::new();
        for (i, c) in cnf.clauses.iter().enumerate() {
            let mut vs: Vec<usize> = c.iter().map(|l| l.var).collect();
            vs.sort_unstable();
            vs.dedup();
            if c.len() != 3 || vs.len() != 3 {
                return Err(F2Error::ClauseArity { clause: i, len: vs.len() });
            }
            let rhs = c.iter().filter(|l| l.positive).count() % 2 == 1;
            eqs.push((i, vs, rhs));
        }
        LinSystem::with_indices(cnf.vars.clone(), eqs)
    }

    /// Each equation of support `w` becomes the `2^(w-1)` clauses excluding
    /// its wrong-parity patterns.
    pub fn cnf_encoding(&self, width_limit: usize) -> Result<Cnf, F2Error> {
        let mut clauses = Vec::new();
        for e in &self.eqs {
            let cols = e.cols();
            if cols.len() > width_limit {
                return Err(F2Error::WidthLimit { index: e.index, width: cols.len(), limit: width_limit });
            }
            clauses.extend(parity_clauses(&cols, e.rhs));
        }
        Ok(Cnf { vars: self.vars.clone(), clauses })
    }

    /// Elimination with row certificates.
    pub fn gaussian_sat(&self) -> GaussResult {
        let m = self.eqs.len();
        let mut rows: Vec<(FixedBitSet, bool, FixedBitSet)> = self
            .eqs
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let mut cert = FixedBitSet::with_capacity(m);
                cert.insert(k);
                (e.support.clone(), e.rhs, cert)
            })
            .collect();
        let order: Vec<usize> = (0..self.n()).collect();
        let pivots = reduce(&mut rows, &order);
        if let Some(bad) = rows.iter().find(|r| r.0.is_clear() && r.1) {
            let cert: Vec<usize> = bad.2.ones().map(|k| self.eqs[k].index).collect();
            debug_assert!(self.certifies_unsat(&cert));
            return GaussResult::Unsat(cert);
        }
        let mut model = vec![false; self.n()];
        for (r, col) in pivots {
            model[col] = rows[r].1;
        }
        debug_assert!(self.satisfied_by(&model));
        GaussResult::Sat(model)
    }

    /// Whether the equations with these stable indices sum to `0 = 1`.
    pub fn certifies_unsat(&self, cert: &[usize]) -> bool {
        let mut acc = FixedBitSet::with_capacity(self.n());
        let mut rhs = false;
        for idx in cert {
            match self.equation(*idx) {
                Some(e) => {
                    acc.symmetric_difference_with(&e.support);
                    rhs ^= e.rhs;
                }
                None => return false,
            }
        }
        acc.is_clear() && rhs
    }

    /// Substitutes `rho` and removes satisfied equations.
    pub fn restrict(&self, rho: &VarAssignment) -> Result<LinSystem, F2Error> {
        let fixed: Vec<Option<bool>> = self.vars.iter().map(|v| rho.get(v)).collect();
        let mut eqs = Vec::new();
        for e in &self.eqs {
            let mut support = e.support.clone();
            let mut rhs = e.rhs;
            for j in e.support.ones() {
                if let Some(b) = fixed[j] {
                    support.set(j, false);
                    rhs ^= b;
                }
            }
            if support.is_clear() {
                if rhs {
                    return Err(F2Error::FalsifiedEquation(e.index));
                }
                continue;
            }
            eqs.push(Equation { support, rhs, index: e.index });
        }
        Ok(LinSystem { vars: self.vars.clone(), eqs })
    }

    /// Left vertices are equation indices, right vertices variable columns.
    pub fn incidence_graph(&self) -> BipartiteGraph {
        let left: Vec<usize> = self.eqs.iter().map(|e| e.index).collect();
        let right: Vec<usize> = (0..self.n()).collect();
        let adj: Vec<Vec<usize>> = self.eqs.iter().map(|e| e.cols()).collect();
        BipartiteGraph::with_labels(left, right, adj)
    }

    /// Constraints on the columns `cols` implied by the whole system, as
    /// `(mask over positions in cols, rhs)`; `None` when unsatisfiable.
    pub fn projection(&self, cols: &[usize]) -> Option<Vec<(u64, bool)>> {
        assert!(cols.len() <= 64);
        let mut order: Vec<usize> = (0..self.n()).filter(|j| !cols.contains(j)).collect();
        order.extend_from_slice(cols);
        let mut rows: Vec<(FixedBitSet, bool, FixedBitSet)> =
            self.eqs.iter().map(|e| (e.support.clone(), e.rhs, FixedBitSet::new())).collect();
        let pivots = reduce(&mut rows, &order);
        if rows.iter().any(|r| r.0.is_clear() && r.1) {
            return None;
        }
        let mut out = Vec::new();
        for (r, col) in pivots {
            if cols.contains(&col) {
                let mut mask = 0u64;
                for (t, c) in cols.iter().enumerate() {
                    if rows[r].0.contains(*c) {
                        mask |= 1 << t;
                    }
                }
                out.push((mask, rows[r].1));
            }
        }
        Some(out)
    }

    pub fn to_xor(&self) -> String {
        let mut s = format!("p xor {} {}\n", self.n(), self.m());
        for e in &self.eqs {
            for j in e.support.ones() {
                write!(s, "{} ", j + 1).unwrap();
            }
            writeln!(s, "{}", e.rhs as u8).unwrap();
        }
        s
    }

    pub fn from_xor(text: &str) -> Result<LinSystem, F2Error> {
        let mut n = None;
        let mut eqs = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('c') {
                continue;
            }
            if t.starts_with('p') {
                let parts: Vec<&str> = t.split_whitespace().collect();
                if parts.len() != 4 || parts[1] != "xor" {
                    return Err(parse_err(k + 1, "expected 'p xor n m'"));
                }
                n = Some(parts[2].parse::<usize>().map_err(|e| parse_err(k + 1, e.to_string()))?);
                continue;
            }
            let n = n.ok_or_else(|| parse_err(k + 1, "equation before header"))?;
            let nums: Vec<usize> = t
                .split_whitespace()
                .map(|tok| tok.parse().map_err(|_| parse_err(k + 1, format!("bad token {tok}"))))
                .collect::<Result<_, _>>()?;
            let (&b, vs) = nums.split_last().ok_or_else(|| parse_err(k + 1, "empty equation"))?;
            if b > 1 {
                return Err(parse_err(k + 1, "right-hand side must be 0 or 1"));
            }
            let mut cols = Vec::new();
            for v in vs {
                if *v == 0 || *v > n {
                    return Err(parse_err(k + 1, format!("variable {v} out of range")));
                }
                cols.push(v - 1);
            }
            eqs.push((eqs.len(), cols, b == 1));
        }
        let n = n.ok_or_else(|| parse_err(0, "missing header"))?;
        LinSystem::with_indices(default_vars(n), eqs).map_err(|e| parse_err(0, e.to_string()))
    }
}

/// Clauses ruling out every assignment to `cols` of parity `!rhs`.
pub fn parity_clauses(cols: &[usize], rhs: bool) -> Vec<Vec<Lit>> {
    let w = cols.len();
    let mut out = Vec::new();
    for a in 0u64..(1 << w) {
        if (a.count_ones() % 2 == 1) != rhs {
            out.push(cols.iter().enumerate().map(|(t, &c)| Lit::new(c, (a >> t) & 1 == 0)).collect());
        }
    }
    out
}

/// Reduced row echelon form over the column `order`; returns `(row, pivot column)`.
fn reduce(rows: &mut [(FixedBitSet, bool, FixedBitSet)], order: &[usize]) -> Vec<(usize, usize)> {
    let mut pivots = Vec::new();
    let mut next = 0;
    for &col in order {
        let Some(p) = (next..rows.len()).find(|&r| rows[r].0.contains(col)) else {
            continue;
        };
        rows.swap(next, p);
        let (head, tail) = rows.split_at_mut(next);
        let (pivot, tail) = tail.split_first_mut().unwrap();
        for r in head.iter_mut().chain(tail.iter_mut()) {
            if r.0.contains(col) {
                r.0.symmetric_difference_with(&pivot.0);
                r.1 ^= pivot.1;
                r.2.symmetric_difference_with(&pivot.2);
            }
        }
        pivots.push((next, col));
        next += 1;
    }
    pivots
}

/// Number of clauses `⌊C·n⌉`, rounding half up.
pub fn clause_count(n: usize, density: f64) -> usize {
    (density * n as f64 + 0.5).floor() as usize
}

/// Uniform random 3-CNF: three distinct variables per clause, uniform signs.
pub fn random_3cnf(n: usize, density: f64, seed: u64) -> Result<Cnf, F2Error> {
    if n < 3 {
        return Err(F2Error::TooFewVariables(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = clause_count(n, density);
    let clauses =
        (0..m).map(|_| sample(&mut rng, n, 3).into_iter().map(|v| Lit::new(v, rng.gen())).collect()).collect();
    Ok(Cnf { vars: default_vars(n), clauses })
}

/// `8 ln 2`, the density above which random instances are hard w.h.p.
pub fn density_threshold() -> f64 {
    8.0 * std::f64::consts::LN_2
}

/// Random simple `degree`-regular graph on `nv` vertices
/// (pairing model, resampled until simple).
pub fn random_regular_graph(nv: usize, degree: usize, seed: u64) -> Option<Vec<(usize, usize)>> {
    if nv * degree % 2 == 1 || degree >= nv {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for _ in 0..10_000 {
        let mut points: Vec<usize> = (0..nv * degree).map(|p| p / degree).collect();
        points.shuffle(&mut rng);
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(points.len() / 2);
        for pair in points.chunks(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a == b || edges.contains(&(a, b)) {
                continue 'attempt;
            }
            edges.push((a, b));
        }
        edges.sort_unstable();
        return Some(edges);
    }
    None
}

/// Tseitin system of a graph: one variable per edge, one equation per vertex
/// stating that the incident edges sum to its charge.
pub fn tseitin(nv: usize, edges: &[(usize, usize)], charges: &[bool]) -> Result<LinSystem, F2Error> {
    let eqs = (0..nv)
        .map(|v| {
            let cols = edges.iter().enumerate().filter(|(_, e)| e.0 == v || e.1 == v).map(|(i, _)| i).collect();
            (cols, charges[v])
        })
        .collect();
    LinSystem::new(default_vars(edges.len()), eqs)
}

impl Cnf {
    pub fn var_map(&self) -> HashMap<Var, usize> {
        self.vars.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect()
    }
}
