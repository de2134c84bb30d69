//! Independent oracles shared by the integration tests: a plain formula tree
//! with its own evaluator, brute-force closures and expansion checks over
//! bitmask graphs, and solution-set enumeration for small systems.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use num_rational::Ratio;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use proofreg::assign::FormulaAssignment;
use proofreg::classify::Classification;
use proofreg::f2sys::{default_vars, LinSystem};
use proofreg::formula::{parse_formula, Formula, Var};
use proofreg::graph::BipartiteGraph;

pub mod criteria;

pub fn var_name(i: usize) -> String {
    format!("x{}", i + 1)
}

/// A formula as written, before any merging.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tree {
    Const(bool),
    Var(usize),
    Neg(Box<Tree>),
    Or(Vec<Tree>),
}

impl Tree {
    pub fn render(&self) -> String {
        match self {
            Tree::Const(b) => (*b as u8).to_string(),
            Tree::Var(i) => var_name(*i),
            Tree::Neg(t) => format!("~{}", t.render()),
            Tree::Or(ts) => {
                let parts: Vec<String> = ts.iter().map(Tree::render).collect();
                format!("({})", parts.join("|"))
            }
        }
    }

    pub fn eval(&self, a: &[bool]) -> bool {
        match self {
            Tree::Const(b) => *b,
            Tree::Var(i) => a[*i],
            Tree::Neg(t) => !t.eval(a),
            Tree::Or(ts) => ts.iter().any(|t| t.eval(a)),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Tree::Const(_) | Tree::Var(_) => 1,
            Tree::Neg(t) => 1 + t.size(),
            Tree::Or(ts) => 1 + ts.iter().map(Tree::size).sum::<usize>(),
        }
    }

    pub fn vars(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            Tree::Const(_) => {}
            Tree::Var(i) => {
                out.insert(*i);
            }
            Tree::Neg(t) => t.collect_vars(out),
            Tree::Or(ts) => ts.iter().for_each(|t| t.collect_vars(out)),
        }
    }

    pub fn formula(&self) -> Formula {
        parse_formula(&self.render()).expect("rendered trees parse")
    }
}

pub fn lit(i: usize, positive: bool) -> Tree {
    if positive {
        Tree::Var(i)
    } else {
        Tree::Neg(Box::new(Tree::Var(i)))
    }
}

pub fn tree_strategy(nvars: usize, depth: u32) -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![
        1 => any::<bool>().prop_map(Tree::Const),
        6 => (0..nvars).prop_map(Tree::Var),
    ];
    leaf.prop_recursive(depth, 30, 4, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| Tree::Neg(Box::new(t))),
            prop::collection::vec(inner, 2..=4).prop_map(Tree::Or),
        ]
    })
}

/// A random tree with at most `budget` nodes.
pub fn random_tree<R: Rng>(rng: &mut R, nvars: usize, budget: usize) -> Tree {
    if budget <= 2 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.05) { Tree::Const(rng.gen()) } else { Tree::Var(rng.gen_range(0..nvars)) };
    }
    if rng.gen_bool(0.3) {
        return Tree::Neg(Box::new(random_tree(rng, nvars, budget - 1)));
    }
    let k = rng.gen_range(2..=4).min(budget - 1);
    let mut left = budget - 1;
    let mut kids = Vec::new();
    for j in 0..k {
        let share = (left / (k - j)).max(1);
        let t = random_tree(rng, nvars, share);
        left = left.saturating_sub(t.size());
        kids.push(t);
    }
    Tree::Or(kids)
}

/// Values of `x1..xn` for the bits of `a`.
pub fn valuation(n: usize, a: u64) -> HashMap<Var, bool> {
    (0..n).map(|i| (Var::new(&var_name(i)), (a >> i) & 1 == 1)).collect()
}

pub fn bits(n: usize, a: u64) -> Vec<bool> {
    (0..n).map(|i| (a >> i) & 1 == 1).collect()
}

/// Up to `max_pairs` valid pairs drawn from subformulas of `pool`.
pub fn random_sigma<R: Rng>(rng: &mut R, pool: &[Formula], max_pairs: usize) -> FormulaAssignment {
    let mut cands: Vec<Formula> =
        proofreg::formula::subformulas_of(pool.iter()).into_iter().filter(|f| !f.is_const() && !f.is_neg()).collect();
    cands.shuffle(rng);
    let k = rng.gen_range(0..=max_pairs).min(cands.len());
    let pairs: Vec<(Formula, bool)> = cands
        .into_iter()
        .take(k)
        .map(|f| {
            let b = f.is_or() || rng.gen();
            (f, b)
        })
        .collect();
    FormulaAssignment::validate(pairs).expect("generated pairs are valid")
}

/// Bipartite graph with left adjacency as bitmasks over at most 32 right vertices.
#[derive(Clone, Debug)]
pub struct SmallGraph {
    pub nr: usize,
    pub adj: Vec<u32>,
}

pub fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| (mask >> i) & 1 == 1).collect()
}

pub fn mask_of(items: &[usize]) -> u32 {
    items.iter().fold(0, |m, &i| m | (1 << i))
}

impl SmallGraph {
    pub fn random<R: Rng>(rng: &mut R, nl: usize, nr: usize, dmin: usize, dmax: usize) -> SmallGraph {
        let all: Vec<usize> = (0..nr).collect();
        let adj = (0..nl)
            .map(|_| {
                let d = rng.gen_range(dmin..=dmax).min(nr);
                mask_of(&all.choose_multiple(rng, d).copied().collect::<Vec<_>>())
            })
            .collect();
        SmallGraph { nr, adj }
    }

    pub fn from_system(sys: &LinSystem) -> SmallGraph {
        SmallGraph { nr: sys.n(), adj: sys.equations().iter().map(|e| mask_of(&e.cols())).collect() }
    }

    /// Left vertices in label order; right labels are kept as bit positions.
    pub fn from_graph(g: &BipartiteGraph) -> SmallGraph {
        let nr = g.right().iter().max().map_or(0, |m| m + 1);
        SmallGraph { nr, adj: g.left().iter().map(|&l| mask_of(&g.neighbours(l))).collect() }
    }

    pub fn nl(&self) -> usize {
        self.adj.len()
    }

    pub fn to_graph(&self) -> BipartiteGraph {
        BipartiteGraph::new(self.nr, self.adj.iter().map(|&m| members(m)).collect())
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(|m| m.count_ones() as usize).max().unwrap_or(0)
    }

    /// Right vertices with exactly one neighbour in `set`.
    pub fn boundary(&self, set: u32) -> u32 {
        let mut once = 0u32;
        let mut twice = 0u32;
        for i in members(set) {
            twice |= once & self.adj[i];
            once |= self.adj[i];
        }
        once & !twice
    }

    pub fn neighbourhood(&self, set: u32) -> u32 {
        members(set).iter().fold(0, |m, &i| m | self.adj[i])
    }

    /// Every `(r, J)`-contained set: `|I| ≤ r`, `∂(I) ⊆ J`.
    pub fn contained_sets(&self, j: u32, r: usize) -> Vec<u32> {
        (0u32..1 << self.nl()).filter(|&s| s.count_ones() as usize <= r && self.boundary(s) & !j == 0).collect()
    }

    /// Lexicographically first maximum contained set.
    pub fn closure(&self, j: u32, r: usize) -> u32 {
        let mut best: Option<(usize, Vec<usize>, u32)> = None;
        for s in self.contained_sets(j, r) {
            let key = (s.count_ones() as usize, members(s));
            let better = match &best {
                None => true,
                Some((size, list, _)) => key.0 > *size || (key.0 == *size && key.1 < *list),
            };
            if better {
                best = Some((key.0, key.1, s));
            }
        }
        best.map(|b| b.2).unwrap_or(0)
    }

    pub fn extension(&self, j: u32, r: usize) -> u32 {
        j | self.neighbourhood(self.closure(j, r))
    }

    pub fn is_boundary_expander(&self, r: usize, delta: usize, c: Ratio<u64>) -> bool {
        self.max_degree() <= delta
            && (1u32..1 << self.nl()).all(|s| {
                let k = s.count_ones() as usize;
                k > r || Ratio::from_integer(self.boundary(s).count_ones() as u64) >= c * Ratio::from_integer(k as u64)
            })
    }

    pub fn is_weak_expander(&self, r: usize, delta: usize, c: Ratio<u64>) -> bool {
        self.max_degree() <= delta
            && (1u32..1 << self.nl()).all(|s| {
                let k = s.count_ones() as usize;
                let b = self.boundary(s).count_ones() as u64;
                if 2 * k <= r {
                    b > 0
                } else if k <= r {
                    Ratio::from_integer(b) >= c * Ratio::from_integer(k as u64)
                } else {
                    true
                }
            })
    }
}

/// Every `|I| ≤ r` with its boundary, enumerated once per graph.
pub struct ClosureOracle {
    sets: Vec<(u32, u32)>,
}

impl ClosureOracle {
    pub fn new(g: &SmallGraph, r: usize) -> ClosureOracle {
        let sets = small_subsets(g.nl(), r).into_iter().map(|s| (s, g.boundary(s))).collect();
        ClosureOracle { sets }
    }

    pub fn contained(&self, j: u32) -> impl Iterator<Item = u32> + '_ {
        self.sets.iter().filter(move |(_, b)| b & !j == 0).map(|(s, _)| *s)
    }

    /// Maximum contained set, lexicographically first on ties.
    pub fn closure(&self, j: u32) -> u32 {
        let mut best = 0u32;
        for s in self.contained(j) {
            let (a, b) = (s.count_ones(), best.count_ones());
            if a > b || (a == b && members(s) < members(best)) {
                best = s;
            }
        }
        best
    }

    pub fn union(&self, j: u32) -> u32 {
        self.contained(j).fold(0, |m, s| m | s)
    }
}

/// Left and right label sets of a library graph, as masks.
pub fn label_masks(g: &BipartiteGraph) -> (u32, u32) {
    (mask_of(g.left()), mask_of(g.right()))
}

/// `|J| ≤ k` subsets of `0..n`.
pub fn small_subsets(n: usize, k: usize) -> Vec<u32> {
    (0u32..1 << n).filter(|s| s.count_ones() as usize <= k).collect()
}

/// A system over `x1..xn` with equations given as column lists.
pub fn system(n: usize, eqs: &[(Vec<usize>, bool)]) -> LinSystem {
    LinSystem::new(default_vars(n), eqs.to_vec()).expect("no empty inconsistent equations")
}

/// Whether assignment `a` satisfies every equation with position in `idx`.
pub fn satisfies(eqs: &[(Vec<usize>, bool)], idx: u32, a: &[bool]) -> bool {
    members(idx).iter().all(|&i| {
        let (cols, rhs) = &eqs[i];
        (cols.iter().filter(|&&c| a[c]).count() % 2 == 1) == *rhs
    })
}

/// Values `C` takes on the solutions of the equations in `idx`.
pub fn values_on(eqs: &[(Vec<usize>, bool)], n: usize, idx: u32, c: &Tree) -> [bool; 2] {
    let mut seen = [false; 2];
    for a in 0u64..1 << n {
        let a = bits(n, a);
        if satisfies(eqs, idx, &a) {
            seen[c.eval(&a) as usize] = true;
        }
    }
    seen
}

/// Classification straight from the solution set of `L^I`; `None` when empty.
pub fn oracle_class(seen: [bool; 2]) -> Option<Classification> {
    match seen {
        [true, true] => Some(Classification::Live),
        [false, true] => Some(Classification::Forced(true)),
        [true, false] => Some(Classification::Forced(false)),
        [false, false] => None,
    }
}

/// Clause `ℓ1 ∨ ℓ2 ∨ ...` over 0-based variables as `(var, positive)`.
pub fn clause_sat(clause: &[(usize, bool)], a: &[bool]) -> bool {
    clause.iter().any(|&(v, pos)| a[v] == pos)
}

/// Naive width-bounded resolution closure over literal sets.
pub fn naive_refutable(clauses: &[Vec<(usize, bool)>], w: usize) -> bool {
    let norm = |c: &[(usize, bool)]| -> Option<BTreeSet<(usize, bool)>> {
        let s: BTreeSet<(usize, bool)> = c.iter().copied().collect();
        if s.iter().any(|&(v, p)| s.contains(&(v, !p))) {
            None
        } else {
            Some(s)
        }
    };
    let mut known: BTreeSet<BTreeSet<(usize, bool)>> =
        clauses.iter().filter(|c| c.len() <= w).filter_map(|c| norm(c)).collect();
    loop {
        if known.iter().any(|c| c.is_empty()) {
            return true;
        }
        let list: Vec<BTreeSet<(usize, bool)>> = known.iter().cloned().collect();
        let mut added = false;
        for a in &list {
            for b in &list {
                for &(v, p) in a {
                    if p && b.contains(&(v, false)) {
                        let mut res: Vec<(usize, bool)> = a.iter().copied().filter(|&l| l != (v, true)).collect();
                        res.extend(b.iter().copied().filter(|&l| l != (v, false)));
                        if let Some(s) = norm(&res) {
                            if s.len() <= w && known.insert(s) {
                                added = true;
                            }
                        }
                    }
                }
            }
        }
        if !added {
            return false;
        }
    }
}
