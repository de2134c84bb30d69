//! Bipartite incidence graphs: boundaries, expansion, closure, extension, deletion.
//!
//! Vertices carry stable integer labels that survive deletion; every set in
//! the public API is a sorted list of labels.

use std::fmt::Write as _;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// `(r, Δ, c)` with `c` an exact fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ExpanderParams {
    pub r: usize,
    pub delta: usize,
    #[serde(serialize_with = "ser_ratio")]
    pub c: Ratio<u64>,
}

fn ser_ratio<S: serde::Serializer>(c: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(&format!("{}/{}", c.numer(), c.denom()))
}

impl ExpanderParams {
    pub fn new(r: usize, delta: usize, c: Ratio<u64>) -> Self {
        ExpanderParams { r, delta, c }
    }

    /// Parses `r,Δ,p/q`.
    pub fn parse(s: &str) -> Option<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return None;
        }
        Some(ExpanderParams::new(parts[0].parse().ok()?, parts[1].parse().ok()?, parse_ratio(parts[2])?))
    }

    /// `size ≤ c·r/k`, exactly.
    pub fn within(&self, size: usize, k: u64) -> bool {
        size as u128 * k as u128 * *self.c.denom() as u128 <= *self.c.numer() as u128 * self.r as u128
    }

    /// `count ≥ c·size`, exactly.
    pub fn expands(&self, count: usize, size: usize) -> bool {
        count as u128 * *self.c.denom() as u128 >= *self.c.numer() as u128 * size as u128
    }

    /// `⌈c·r/k⌉`.
    pub fn ceil_cr_over(&self, k: u64) -> usize {
        let v = self.c * Ratio::from_integer(self.r as u64) / Ratio::from_integer(k);
        v.ceil().to_integer() as usize
    }

    /// `⌊c·r/k⌋`.
    pub fn floor_cr_over(&self, k: u64) -> usize {
        let v = self.c * Ratio::from_integer(self.r as u64) / Ratio::from_integer(k);
        v.floor().to_integer() as usize
    }

    /// Same `r`, `Δ`, with `c` halved.
    pub fn halved(&self) -> Self {
        ExpanderParams { c: self.c / 2, ..*self }
    }
}

pub fn parse_ratio(s: &str) -> Option<Ratio<u64>> {
    let s = s.trim();
    let r = match s.split_once('/') {
        Some((a, b)) => {
            let d: u64 = b.trim().parse().ok()?;
            if d == 0 {
                return None;
            }
            Ratio::new(a.trim().parse().ok()?, d)
        }
        None => Ratio::from_integer(s.parse().ok()?),
    };
    Some(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CheckMode {
    Exhaustive,
    Sampled { samples: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Violation {
    /// A left vertex of degree above `Δ`.
    Degree { vertex: usize, degree: usize },
    /// A small nonempty set with empty boundary.
    EmptyBoundary { set: Vec<usize> },
    /// A set whose boundary is below `c·|I|`.
    Contracting { set: Vec<usize>, boundary: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ExpansionOutcome {
    Certified {
        subsets_checked: u64,
    },
    /// Sampling never certifies.
    NoCounterexampleFound {
        samples: u64,
    },
    Counterexample(Violation),
}

impl ExpansionOutcome {
    pub fn is_certified(&self) -> bool {
        matches!(self, ExpansionOutcome::Certified { .. })
    }
}

/// Limits for exact closure computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct ClosureConfig {
    pub exhaustive_limit: usize,
    pub node_budget: u64,
}

impl Default for ClosureConfig {
    fn default() -> Self {
        ClosureConfig { exhaustive_limit: 20, node_budget: 5_000_000 }
    }
}

/// Default number of subsets an exhaustive expansion check may visit.
pub const DEFAULT_SUBSET_BUDGET: u64 = 200_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BipartiteGraph {
    left: Vec<usize>,
    right: Vec<usize>,
    adj: Vec<Vec<usize>>,
    radj: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    /// Left `0..adj.len()`, right `0..n_right`.
    pub fn new(n_right: usize, adj: Vec<Vec<usize>>) -> Self {
        let left = (0..adj.len()).collect();
        BipartiteGraph::with_labels(left, (0..n_right).collect(), adj)
    }

    /// `adj[k]` lists the right labels adjacent to `left[k]`.
    pub fn with_labels(left: Vec<usize>, mut right: Vec<usize>, adj: Vec<Vec<usize>>) -> Self {
        assert_eq!(left.len(), adj.len());
        right.sort_unstable();
        right.dedup();
        let mut pairs: Vec<(usize, Vec<usize>)> = left.into_iter().zip(adj).collect();
        pairs.sort_by_key(|p| p.0);
        let mut radj = vec![Vec::new(); right.len()];
        let mut left = Vec::with_capacity(pairs.len());
        let mut dense = Vec::with_capacity(pairs.len());
        for (i, (l, nbrs)) in pairs.into_iter().enumerate() {
            let mut ds: Vec<usize> =
                nbrs.iter().map(|v| right.binary_search(v).expect("edge to an unknown right vertex")).collect();
            ds.sort_unstable();
            ds.dedup();
            for &d in &ds {
                radj[d].push(i);
            }
            left.push(l);
            dense.push(ds);
        }
        BipartiteGraph { left, right, adj: dense, radj }
    }

    pub fn left(&self) -> &[usize] {
        &self.left
    }

    pub fn right(&self) -> &[usize] {
        &self.right
    }

    pub fn n_left(&self) -> usize {
        self.left.len()
    }

    pub fn n_right(&self) -> usize {
        self.right.len()
    }

    pub fn neighbours(&self, label: usize) -> Vec<usize> {
        match self.left_index(label) {
            Some(i) => self.adj[i].iter().map(|&d| self.right[d]).collect(),
            None => Vec::new(),
        }
    }

    pub fn max_left_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn left_index(&self, label: usize) -> Option<usize> {
        self.left.binary_search(&label).ok()
    }

    fn right_index(&self, label: usize) -> Option<usize> {
        self.right.binary_search(&label).ok()
    }

    fn left_mask(&self, set: &[usize]) -> Vec<bool> {
        let mut m = vec![false; self.n_left()];
        for l in set {
            if let Some(i) = self.left_index(*l) {
                m[i] = true;
            }
        }
        m
    }

    fn right_mask(&self, set: &[usize]) -> Vec<bool> {
        let mut m = vec![false; self.n_right()];
        for l in set {
            if let Some(i) = self.right_index(*l) {
                m[i] = true;
            }
        }
        m
    }

    fn right_labels(&self, mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| self.right[i]).collect()
    }

    fn left_labels(&self, mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| self.left[i]).collect()
    }

    /// `N(I)`.
    pub fn neighbourhood(&self, set: &[usize]) -> Vec<usize> {
        let mut m = vec![false; self.n_right()];
        for (i, inside) in self.left_mask(set).into_iter().enumerate() {
            if inside {
                self.adj[i].iter().for_each(|&d| m[d] = true);
            }
        }
        self.right_labels(&m)
    }

    /// `∂(I)`: right vertices with exactly one neighbour in `I`.
    pub fn boundary(&self, set: &[usize]) -> Vec<usize> {
        let mut cnt = vec![0u32; self.n_right()];
        for (i, inside) in self.left_mask(set).into_iter().enumerate() {
            if inside {
                self.adj[i].iter().for_each(|&d| cnt[d] += 1);
            }
        }
        let m: Vec<bool> = cnt.iter().map(|c| *c == 1).collect();
        self.right_labels(&m)
    }

    fn degree_violation(&self, delta: usize) -> Option<Violation> {
        self.adj
            .iter()
            .enumerate()
            .find(|(_, a)| a.len() > delta)
            .map(|(i, a)| Violation::Degree { vertex: self.left[i], degree: a.len() })
    }

    /// Every `I` with `|I| ≤ r` has `|∂(I)| ≥ c|I|`.
    pub fn is_boundary_expander(&self, p: &ExpanderParams, mode: CheckMode) -> Result<ExpansionOutcome, GraphError> {
        self.check_expansion(p, mode, false, DEFAULT_SUBSET_BUDGET)
    }

    /// Nonempty boundary up to `r/2`, `|∂(I)| ≥ c|I|` for `r/2 < |I| ≤ r`.
    pub fn is_weak_expander(&self, p: &ExpanderParams, mode: CheckMode) -> Result<ExpansionOutcome, GraphError> {
        self.check_expansion(p, mode, true, DEFAULT_SUBSET_BUDGET)
    }

    pub fn check_expansion(
        &self,
        p: &ExpanderParams,
        mode: CheckMode,
        weak: bool,
        budget: u64,
    ) -> Result<ExpansionOutcome, GraphError> {
        if let Some(v) = self.degree_violation(p.delta) {
            return Ok(ExpansionOutcome::Counterexample(v));
        }
        let r = p.r.min(self.n_left());
        let judge = |size: usize, bnd: usize| -> Option<bool> {
            if size == 0 {
                return None;
            }
            if weak && 2 * size <= p.r {
                (bnd == 0).then_some(true)
            } else {
                (!p.expands(bnd, size)).then_some(false)
            }
        };
        match mode {
            CheckMode::Exhaustive => {
                let total = subsets_up_to(self.n_left(), r);
                if total > budget {
                    return Err(GraphError::BudgetExceeded(format!(
                        "{total} subsets of up to {r} of {} left vertices",
                        self.n_left()
                    )));
                }
                let mut st = SubsetWalk { g: self, cnt: vec![0; self.n_right()], bnd: 0, cur: Vec::new(), visited: 0 };
                let found = st.walk(0, r, &judge);
                Ok(match found {
                    Some((set, empty)) => ExpansionOutcome::Counterexample(self.violation(set, empty)),
                    None => ExpansionOutcome::Certified { subsets_checked: st.visited },
                })
            }
            CheckMode::Sampled { samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..samples {
                    if r == 0 {
                        break;
                    }
                    let size = rng.gen_range(1..=r);
                    let mut idx = rand::seq::index::sample(&mut rng, self.n_left(), size).into_vec();
                    idx.sort_unstable();
                    let labels: Vec<usize> = idx.iter().map(|&i| self.left[i]).collect();
                    let bnd = self.boundary(&labels).len();
                    if let Some(empty) = judge(size, bnd) {
                        return Ok(ExpansionOutcome::Counterexample(self.violation(idx, empty)));
                    }
                }
                Ok(ExpansionOutcome::NoCounterexampleFound { samples })
            }
        }
    }

    fn violation(&self, dense: Vec<usize>, empty: bool) -> Violation {
        let set: Vec<usize> = dense.iter().map(|&i| self.left[i]).collect();
        if empty {
            Violation::EmptyBoundary { set }
        } else {
            let boundary = self.boundary(&set).len();
            Violation::Contracting { set, boundary }
        }
    }

    /// `Cl(J)`: lexicographically first maximum `I` with `|I| ≤ r`, `∂(I) ⊆ J`.
    pub fn closure(&self, j: &[usize], r: usize) -> Result<Vec<usize>, GraphError> {
        self.closure_with(j, r, ClosureConfig::default())
    }

    pub fn closure_with(&self, j: &[usize], r: usize, cfg: ClosureConfig) -> Result<Vec<usize>, GraphError> {
        let in_j = self.right_mask(j);
        let maximal = self.largest_contained(&in_j);
        let msize = maximal.iter().filter(|b| **b).count();
        if msize <= r {
            return Ok(self.left_labels(&maximal));
        }
        let mut search = ContainedSearch::new(self, &in_j, &maximal, cfg.node_budget);
        let mut union = vec![false; self.n_left()];
        for seed in 0..self.n_left() {
            if !maximal[seed] || union[seed] {
                continue;
            }
            if let Some(found) = search.find_with(seed, r)? {
                found.into_iter().for_each(|i| union[i] = true);
            }
        }
        let cands: Vec<usize> = (0..self.n_left()).filter(|&i| union[i]).collect();
        if cands.len() <= r {
            return Ok(self.left_labels(&union));
        }
        if cands.len() > cfg.exhaustive_limit {
            return Err(GraphError::BudgetExceeded(format!(
                "closure needs exhaustive search over {} candidates (limit {})",
                cands.len(),
                cfg.exhaustive_limit
            )));
        }
        let best = search.best_subset(&cands, r);
        Ok(best.into_iter().map(|i| self.left[i]).collect())
    }

    /// Largest left set whose boundary lies in `J`, by peeling.
    fn largest_contained(&self, in_j: &[bool]) -> Vec<bool> {
        let mut alive = vec![true; self.n_left()];
        let mut cnt: Vec<u32> = self.radj.iter().map(|ls| ls.len() as u32).collect();
        let mut queue: Vec<usize> = (0..self.n_right()).filter(|&v| !in_j[v] && cnt[v] == 1).collect();
        while let Some(v) = queue.pop() {
            if cnt[v] != 1 {
                continue;
            }
            let Some(&u) = self.radj[v].iter().find(|&&u| alive[u]) else {
                continue;
            };
            alive[u] = false;
            for &w in &self.adj[u] {
                cnt[w] -= 1;
                if cnt[w] == 1 && !in_j[w] {
                    queue.push(w);
                }
            }
        }
        alive
    }

    /// `Ext(J) = J ∪ N(Cl(J))`.
    pub fn extension(&self, j: &[usize], r: usize) -> Result<Vec<usize>, GraphError> {
        self.extension_with(j, r, ClosureConfig::default())
    }

    pub fn extension_with(&self, j: &[usize], r: usize, cfg: ClosureConfig) -> Result<Vec<usize>, GraphError> {
        let cl = self.closure_with(j, r, cfg)?;
        let mut out: Vec<usize> = self.neighbourhood(&cl);
        out.extend(j.iter().copied());
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Removes `J` and every left vertex whose (nonempty) neighbourhood lies in `J`.
    pub fn delete(&self, j: &[usize]) -> BipartiteGraph {
        let in_j = self.right_mask(j);
        let keep_left: Vec<usize> =
            (0..self.n_left()).filter(|&i| self.adj[i].is_empty() || self.adj[i].iter().any(|&d| !in_j[d])).collect();
        let keep_right: Vec<usize> = (0..self.n_right()).filter(|&d| !in_j[d]).collect();
        self.induced_dense(&keep_left, &keep_right)
    }

    /// Induced subgraph on the given label sets.
    pub fn induced(&self, left: &[usize], right: &[usize]) -> BipartiteGraph {
        let l: Vec<usize> = left.iter().filter_map(|x| self.left_index(*x)).collect();
        let r: Vec<usize> = right.iter().filter_map(|x| self.right_index(*x)).collect();
        self.induced_dense(&l, &r)
    }

    fn induced_dense(&self, left: &[usize], right: &[usize]) -> BipartiteGraph {
        let mut keep = vec![false; self.n_right()];
        right.iter().for_each(|&d| keep[d] = true);
        let adj =
            left.iter().map(|&i| self.adj[i].iter().filter(|&&d| keep[d]).map(|&d| self.right[d]).collect()).collect();
        BipartiteGraph::with_labels(
            left.iter().map(|&i| self.left[i]).collect(),
            right.iter().map(|&d| self.right[d]).collect(),
            adj,
        )
    }

    /// `g |L| |R|` header, then `i: j1 j2 ...` per left vertex.
    pub fn to_text(&self) -> String {
        let mut s = format!("g {} {}\n", self.n_left(), self.n_right());
        for (i, a) in self.adj.iter().enumerate() {
            write!(s, "{}:", self.left[i]).unwrap();
            for d in a {
                write!(s, " {}", self.right[*d]).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<BipartiteGraph, GraphError> {
        let err = |line: usize, msg: &str| GraphError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "g" {
            return Err(err(1, "expected 'g |L| |R|'"));
        }
        let nl: usize = parts[1].parse().map_err(|_| err(1, "bad |L|"))?;
        let nr: usize = parts[2].parse().map_err(|_| err(1, "bad |R|"))?;
        let mut left = Vec::new();
        let mut adj = Vec::new();
        for (k, l) in lines {
            let (lab, rest) = l.split_once(':').ok_or_else(|| err(k + 1, "expected 'i: ...'"))?;
            left.push(lab.trim().parse().map_err(|_| err(k + 1, "bad left label"))?);
            let nb: Vec<usize> = rest
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err(k + 1, "bad right label")))
                .collect::<Result<_, _>>()?;
            if nb.iter().any(|&v| v >= nr) {
                return Err(err(k + 1, "right label out of range"));
            }
            adj.push(nb);
        }
        if left.len() != nl {
            return Err(err(0, "left vertex count does not match header"));
        }
        Ok(BipartiteGraph::with_labels(left, (0..nr).collect(), adj))
    }
}

fn subsets_up_to(n: usize, r: usize) -> u64 {
    let mut total: u64 = 0;
    let mut c: u64 = 1;
    for i in 0..=r.min(n) {
        total = total.saturating_add(c);
        c = c.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    total
}

struct SubsetWalk<'a> {
    g: &'a BipartiteGraph,
    cnt: Vec<u32>,
    bnd: usize,
    cur: Vec<usize>,
    visited: u64,
}

impl SubsetWalk<'_> {
    fn add(&mut self, u: usize) {
        for &d in &self.g.adj[u] {
            self.cnt[d] += 1;
            match self.cnt[d] {
                1 => self.bnd += 1,
                2 => self.bnd -= 1,
                _ => {}
            }
        }
        self.cur.push(u);
    }

    fn remove(&mut self, u: usize) {
        for &d in &self.g.adj[u] {
            self.cnt[d] -= 1;
            match self.cnt[d] {
                0 => self.bnd -= 1,
                1 => self.bnd += 1,
                _ => {}
            }
        }
        self.cur.pop();
    }

    fn walk(
        &mut self,
        from: usize,
        r: usize,
        judge: &impl Fn(usize, usize) -> Option<bool>,
    ) -> Option<(Vec<usize>, bool)> {
        self.visited += 1;
        if let Some(empty) = judge(self.cur.len(), self.bnd) {
            return Some((self.cur.clone(), empty));
        }
        if self.cur.len() == r {
            return None;
        }
        for u in from..self.g.n_left() {
            self.add(u);
            let hit = self.walk(u + 1, r, judge);
            self.remove(u);
            if hit.is_some() {
                return hit;
            }
        }
        None
    }
}

/// Incremental search for sets whose boundary stays inside `J`.
struct ContainedSearch<'a> {
    g: &'a BipartiteGraph,
    in_j: &'a [bool],
    allowed: &'a [bool],
    inset: Vec<bool>,
    cnt: Vec<u32>,
    bad: usize,
    members: Vec<usize>,
    budget: u64,
}

impl<'a> ContainedSearch<'a> {
    fn new(g: &'a BipartiteGraph, in_j: &'a [bool], allowed: &'a [bool], budget: u64) -> Self {
        ContainedSearch {
            g,
            in_j,
            allowed,
            inset: vec![false; g.n_left()],
            cnt: vec![0; g.n_right()],
            bad: 0,
            members: Vec::new(),
            budget,
        }
    }

    fn add(&mut self, u: usize) {
        self.inset[u] = true;
        self.members.push(u);
        for &d in &self.g.adj[u] {
            self.cnt[d] += 1;
            if !self.in_j[d] {
                match self.cnt[d] {
                    1 => self.bad += 1,
                    2 => self.bad -= 1,
                    _ => {}
                }
            }
        }
    }

    fn remove(&mut self, u: usize) {
        self.inset[u] = false;
        self.members.pop();
        for &d in &self.g.adj[u] {
            self.cnt[d] -= 1;
            if !self.in_j[d] {
                match self.cnt[d] {
                    0 => self.bad -= 1,
                    1 => self.bad += 1,
                    _ => {}
                }
            }
        }
    }

    fn tick(&mut self) -> Result<(), GraphError> {
        if self.budget == 0 {
            return Err(GraphError::BudgetExceeded("closure search node budget".into()));
        }
        self.budget -= 1;
        Ok(())
    }

    /// Some contained set of size `≤ r` containing `seed`, if one exists.
    fn find_with(&mut self, seed: usize, r: usize) -> Result<Option<Vec<usize>>, GraphError> {
        self.add(seed);
        let res = self.extend(r);
        self.remove(seed);
        res
    }

    fn extend(&mut self, r: usize) -> Result<Option<Vec<usize>>, GraphError> {
        self.tick()?;
        if self.bad == 0 {
            return Ok(Some(self.members.clone()));
        }
        if self.members.len() == r {
            return Ok(None);
        }
        let mut best: Option<Vec<usize>> = None;
        for &u in &self.members {
            for &d in &self.g.adj[u] {
                if self.in_j[d] || self.cnt[d] != 1 {
                    continue;
                }
                let opts: Vec<usize> =
                    self.g.radj[d].iter().copied().filter(|&w| self.allowed[w] && !self.inset[w]).collect();
                if best.as_ref().is_none_or(|b| opts.len() < b.len()) {
                    best = Some(opts);
                }
            }
        }
        for w in best.unwrap_or_default() {
            self.add(w);
            let res = self.extend(r);
            self.remove(w);
            if let Some(found) = res? {
                return Ok(Some(found));
            }
        }
        Ok(None)
    }

    /// Lexicographically first maximum contained subset of `cands` of size `≤ r`.
    fn best_subset(&mut self, cands: &[usize], r: usize) -> Vec<usize> {
        let mut best: Vec<usize> = Vec::new();
        self.branch(cands, 0, r, &mut best);
        best
    }

    fn branch(&mut self, cands: &[usize], pos: usize, r: usize, best: &mut Vec<usize>) {
        if self.bad == 0 && self.members.len() > best.len() {
            *best = self.members.clone();
        }
        if self.members.len() == r || self.members.len() + (cands.len() - pos) <= best.len() {
            return;
        }
        for k in pos..cands.len() {
            if self.members.len() + (cands.len() - k) <= best.len() {
                return;
            }
            self.add(cands[k]);
            self.branch(cands, k + 1, r, best);
            self.remove(cands[k]);
        }
    }
}
