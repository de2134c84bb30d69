//! Greedy regularization of bounded-depth proofs: high in-degree live
//! subformulas are satisfied by variable assignments, forced subformulas are
//! fixed by a formula assignment, phase by phase.

use std::collections::{BTreeSet, HashMap, HashSet};

use num_rational::Ratio;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::assign::{compose_restrict, AssignError, FormulaAssignment, Restriction, VarAssignment};
use crate::classify::{Classification, ClassifyContext, ClassifyError, Strictness};
use crate::f2sys::{F2Error, GaussResult, LinSystem};
use crate::formula::{subformulas_of, Formula, Kind, Var, DEFAULT_MAX_SUPPORT};
use crate::frege::{is_d_regular, FregeProof, LevelMap, ProofError, ThresholdVector};
use crate::graph::{BipartiteGraph, CheckMode, ClosureConfig, ExpanderParams, ExpansionOutcome, GraphError};

#[derive(Debug, Error)]
pub enum RegularizeError {
    #[error("input proof: {0}")]
    Proof(#[from] ProofError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    System(#[from] F2Error),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error("the system is not a certified boundary expander: {0:?}")]
    NotCertified(ExpansionOutcome),
    #[error("no assignment satisfies {formula} = {alpha} with the closure equations")]
    NoSatisfyingAssignment { formula: Formula, alpha: bool },
    #[error("formula assignment construction exceeded {0} iterations")]
    NonTermination(usize),
}

/// `m = ⌈n^{1/(2^k+1)}⌉`, `d_i = m^{2^{i-1}}`, `ε_k = 1/2^{k+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub n: usize,
    pub k: usize,
    pub m: u64,
    pub d: ThresholdVector,
    #[serde(serialize_with = "ser_ratio")]
    pub eps: Ratio<u64>,
}

fn ser_ratio<S: serde::Serializer>(c: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(&format!("{}/{}", c.numer(), c.denom()))
}

/// The threshold schedule, with `m` the least integer such that `m^{2^k+1} ≥ n`.
pub fn schedule(n: usize, k: usize) -> Schedule {
    assert!(n >= 2 && k >= 1, "schedule needs n >= 2 and k >= 1");
    let e = (1u32 << k) + 1;
    let mut m: u64 = 1;
    while (m as u128).checked_pow(e).is_some_and(|p| p < n as u128) {
        m += 1;
    }
    let mut d = vec![1u64];
    for i in 1..=k {
        d.push(m.saturating_pow(1 << (i - 1)));
    }
    Schedule { n, k, m, d: ThresholdVector::new(d).unwrap(), eps: Ratio::new(1, 1 << (k + 1)) }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RegularizeConfig {
    /// Strict mode requires an exhaustive boundary-expansion certificate.
    pub strictness: Strictness,
    pub closure: ClosureConfig,
    pub max_support: usize,
    /// Formulas sampled for the consistency check after each phase.
    pub consistency_samples: usize,
    pub seed: u64,
    /// Subsets an exhaustive weak-expansion check may visit before it is skipped.
    pub expansion_budget: u64,
    pub step_cap: usize,
}

impl Default for RegularizeConfig {
    fn default() -> Self {
        RegularizeConfig {
            strictness: Strictness::Permissive,
            closure: ClosureConfig::default(),
            max_support: DEFAULT_MAX_SUPPORT,
            consistency_samples: 100,
            seed: 0,
            expansion_budget: 5_000_000,
            step_cap: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub phase: usize,
    pub step: usize,
    pub chosen: Formula,
    pub alpha: bool,
    pub eliminated: usize,
    pub h_before: usize,
    pub h_after: usize,
    pub tau: Vec<(String, bool)>,
    /// `|Ext_G(𝒥)|` after the step.
    pub extension: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Pass,
    Fail,
    /// Not decided within the configured budget.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AssertionRecord {
    pub name: String,
    pub phase: usize,
    pub step: Option<usize>,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Completed,
    BudgetExceeded { phase: usize, step: usize, detail: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub phase: usize,
    pub steps: usize,
    pub psz: usize,
    pub step_bound: f64,
    pub sigma: Vec<(Formula, bool)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularizationResult {
    pub d: ThresholdVector,
    #[serde(serialize_with = "ser_rho")]
    pub rho: VarAssignment,
    #[serde(serialize_with = "ser_sigma")]
    pub sigma: FormulaAssignment,
    /// `Π|ρ|σ`, line by line.
    pub lines: Vec<Formula>,
    #[serde(skip)]
    pub levels: LevelMap,
    pub trace: Vec<StepRecord>,
    pub phases: Vec<PhaseRecord>,
    pub assertions: Vec<AssertionRecord>,
    pub deviations: Vec<String>,
    pub outcome: Outcome,
    pub psz_initial: usize,
}

fn ser_rho<S: serde::Serializer>(r: &VarAssignment, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&r.to_entries(), s)
}

fn ser_sigma<S: serde::Serializer>(r: &FormulaAssignment, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&r.to_entries(), s)
}

impl RegularizationResult {
    pub fn completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.status != Status::Fail)
    }

    pub fn failures(&self) -> Vec<&AssertionRecord> {
        self.assertions.iter().filter(|a| a.status == Status::Fail).collect()
    }

    /// Whether every assertion with this name passed (and at least one ran).
    pub fn passed(&self, name: &str) -> bool {
        let mut it = self.assertions.iter().filter(|a| a.name == name).peekable();
        it.peek().is_some() && it.all(|a| a.status == Status::Pass)
    }
}

/// Replaces every occurrence of `d` in `c` by the constant `alpha`.
pub fn substitute(c: &Formula, d: &Formula, alpha: bool) -> Formula {
    fn go(c: &Formula, d: &Formula, alpha: bool, memo: &mut HashMap<u64, Formula>) -> Formula {
        if c == d {
            return Formula::constant(alpha);
        }
        if let Some(g) = memo.get(&c.id()) {
            return g.clone();
        }
        let g = match c.kind() {
            Kind::Const(_) | Kind::Var(_) => c.clone(),
            Kind::Neg(x) => Formula::neg(&go(x, d, alpha, memo)),
            Kind::Or(cs) => {
                let merged = Formula::or(cs.iter().map(|x| go(x, d, alpha, memo)));
                if d.is_or() && merged.weakening_of(d) {
                    if alpha {
                        Formula::one()
                    } else {
                        Formula::or(merged.disjuncts().iter().filter(|x| !d.disjuncts().contains(x)).cloned())
                    }
                } else {
                    merged
                }
            }
        };
        memo.insert(c.id(), g.clone());
        g
    }
    go(c, d, alpha, &mut HashMap::new())
}

/// Formulas appearing on `level` with more than `threshold` live children.
pub fn high_indegree_set(
    levels: &LevelMap,
    level: usize,
    threshold: u64,
    ctx: &ClassifyContext,
) -> Result<Vec<Formula>, ClassifyError> {
    let mut out = Vec::new();
    for c in levels.at_level(level) {
        if c.is_const() || (c.in_degree() as u64) <= threshold {
            continue;
        }
        let mut live = 0u64;
        for ch in c.children() {
            if ctx.classify(ch)?.is_live() {
                live += 1;
            }
        }
        if live > threshold {
            out.push(c);
        }
    }
    Ok(out)
}

/// The pair `(D, α)`, `D` a live child of a member of `h`, making the most
/// members constant; ties by printed formula, then `α`.
pub fn pick_pair(h: &[Formula], ctx: &ClassifyContext) -> Result<Option<(Formula, bool, usize)>, ClassifyError> {
    let mut cands: BTreeSet<(String, Formula)> = BTreeSet::new();
    for c in h {
        for ch in c.children() {
            if ctx.classify(ch)?.is_live() {
                cands.insert((ch.to_string(), ch.clone()));
            }
        }
    }
    let mut best: Option<(Formula, bool, usize)> = None;
    for (_, d) in cands {
        for alpha in [false, true] {
            let count = h.iter().filter(|c| substitute(c, &d, alpha).is_const()).count();
            if best.as_ref().is_none_or(|b| count > b.2) {
                best = Some((d.clone(), alpha, count));
            }
        }
    }
    Ok(best)
}

/// Lexicographically least assignment to `Ext(vars(D))` satisfying `D = α`
/// and the equations of `Cl(vars(D))`.
pub fn step_assignment(d: &Formula, alpha: bool, ctx: &ClassifyContext) -> Result<VarAssignment, RegularizeError> {
    let sys = ctx.system();
    let cols = ctx.columns(d);
    let closure = ctx.closure_of(d)?;
    let local = sys.subsystem(&closure);
    let mut ext: Vec<Var> = ctx.graph().neighbourhood(&closure).into_iter().map(|c| sys.vars()[c].clone()).collect();
    ext.extend(cols.iter().map(|&c| sys.vars()[c].clone()));
    ext.extend(d.vars().iter().filter(|v| sys.col(v).is_none()).cloned());
    ext.sort();
    ext.dedup();
    let dvars = d.vars().to_vec();
    let feasible = |fixed: &VarAssignment| -> bool {
        let free: Vec<&Var> = dvars.iter().filter(|v| !fixed.contains(v)).collect();
        for bits in 0u64..(1 << free.len()) {
            let mut full = fixed.clone();
            for (t, v) in free.iter().enumerate() {
                full.insert((*v).clone(), (bits >> t) & 1 == 1);
            }
            if d.evaluate(&full).ok() != Some(alpha) {
                continue;
            }
            if let Ok(rest) = local.restrict(&full) {
                if matches!(rest.gaussian_sat(), GaussResult::Sat(_)) {
                    return true;
                }
            }
        }
        false
    };
    let mut tau = VarAssignment::new();
    if !feasible(&tau) {
        return Err(RegularizeError::NoSatisfyingAssignment { formula: d.clone(), alpha });
    }
    for v in ext {
        tau.insert(v.clone(), false);
        if !feasible(&tau) {
            tau.insert(v, true);
        }
    }
    Ok(tau)
}

struct Run<'a> {
    proof: &'a FregeProof,
    system: &'a LinSystem,
    params: ExpanderParams,
    weak: ExpanderParams,
    d: ThresholdVector,
    cfg: RegularizeConfig,
    g0: BipartiteGraph,
    originals: Vec<Formula>,
    depths: Vec<usize>,
    rho: VarAssignment,
    sigma: FormulaAssignment,
    images: Vec<Formula>,
    j_all: Vec<usize>,
    trace: Vec<StepRecord>,
    phases: Vec<PhaseRecord>,
    assertions: Vec<AssertionRecord>,
    deviations: Vec<String>,
    wide: HashSet<u64>,
}

enum Halt {
    Budget { phase: usize, step: usize, detail: String },
    Error(RegularizeError),
}

impl From<RegularizeError> for Halt {
    fn from(e: RegularizeError) -> Self {
        Halt::Error(e)
    }
}

impl From<ClassifyError> for Halt {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Graph(GraphError::BudgetExceeded(s)) => Halt::Budget { phase: 0, step: 0, detail: s },
            e => Halt::Error(e.into()),
        }
    }
}

impl From<GraphError> for Halt {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::BudgetExceeded(s) => Halt::Budget { phase: 0, step: 0, detail: s },
            e => Halt::Error(e.into()),
        }
    }
}

impl Run<'_> {
    fn check(&mut self, name: &str, phase: usize, step: Option<usize>, ok: bool, detail: impl Into<String>) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.assertions.push(AssertionRecord { name: name.into(), phase, step, status, detail: detail.into() });
    }

    fn skip(&mut self, name: &str, phase: usize, step: Option<usize>, detail: impl Into<String>) {
        self.assertions.push(AssertionRecord {
            name: name.into(),
            phase,
            step,
            status: Status::Skipped,
            detail: detail.into(),
        });
    }

    fn context(&self, sys: LinSystem) -> Result<ClassifyContext, ClassifyError> {
        ClassifyContext::with_config(sys, self.weak, Strictness::Permissive, self.cfg.closure, self.cfg.max_support)
    }

    fn classify(&mut self, ctx: &ClassifyContext, f: &Formula) -> Result<Classification, ClassifyError> {
        let r = ctx.report(f)?;
        if !r.width_ok {
            self.wide.insert(f.id());
        }
        Ok(r.class)
    }

    fn level_map(&self, images: &[Formula]) -> LevelMap {
        let mut m = LevelMap::new();
        for (f, &dp) in images.iter().zip(&self.depths) {
            m.add(f, dp);
        }
        m
    }

    /// Weak expansion `(r, Δ, c/2)` of the graph of `sys` on its live variables.
    fn weak_expansion(&mut self, name: &str, phase: usize, step: Option<usize>, g: &BipartiteGraph) {
        match g.check_expansion(&self.weak, CheckMode::Exhaustive, true, self.cfg.expansion_budget) {
            Ok(ExpansionOutcome::Certified { subsets_checked }) => {
                self.check(name, phase, step, true, format!("{subsets_checked} subsets"))
            }
            Ok(other) => self.check(name, phase, step, false, format!("{other:?}")),
            Err(e) => self.skip(name, phase, step, e.to_string()),
        }
    }

    fn current_graph(&self, sys: &LinSystem) -> BipartiteGraph {
        let g = sys.incidence_graph();
        let live: Vec<usize> = (0..sys.n()).filter(|&c| !self.rho.contains(&sys.vars()[c])).collect();
        g.induced(g.left(), &live)
    }

    fn run(&mut self) -> Result<(), Halt> {
        let mut l_cur = self.system.clone();
        for i in 1..=self.d.k() {
            let di = self.d.get(i).unwrap();
            let rho_prev = self.rho.clone();
            let sigma_prev = self.sigma.clone();
            let s = subformulas_of(self.images.iter()).len().max(2);
            let bound = 2.0 * s as f64 / di as f64 * (s as f64).log2();
            let mut ctx = self.context(l_cur.clone())?;
            let mut levels = self.level_map(&self.images);
            let mut h = high_indegree_set(&levels, i, di, &ctx)?;
            for c in &h {
                for ch in c.children() {
                    self.classify(&ctx, ch)?;
                }
            }
            let mut q = 0;
            while !h.is_empty() {
                q += 1;
                if q > self.cfg.step_cap {
                    return Err(Halt::Budget { phase: i, step: q, detail: format!("step cap {}", self.cfg.step_cap) });
                }
                let (dd, alpha, count) = pick_pair(&h, &ctx)?.expect("nonempty H has a live child");
                self.check(
                    "frequency",
                    i,
                    Some(q),
                    count as u128 * 2 * s as u128 >= di as u128,
                    format!("{count} eliminations, d_i = {di}, s = {s}"),
                );
                let jq = ctx.columns(&dd);
                self.check(
                    "claim1_domain",
                    i,
                    Some(q),
                    dd.vars().len() as u64 <= self.d.prefix_product(i - 1),
                    format!("|vars(D)| = {}, d_1..d_{} = {}", dd.vars().len(), i - 1, self.d.prefix_product(i - 1)),
                );
                let mut j_next = self.j_all.clone();
                j_next.extend(&jq);
                j_next.sort_unstable();
                j_next.dedup();
                let ext0 = self
                    .g0
                    .extension_with(&j_next, self.params.r, self.cfg.closure)
                    .map_err(|e| Halt::Budget { phase: i, step: q, detail: e.to_string() })?;
                if !self.params.within(ext0.len(), 4) {
                    return Err(Halt::Budget {
                        phase: i,
                        step: q,
                        detail: format!(
                            "|Ext(J)| = {} exceeds cr/4 = {} choosing {dd} = {}",
                            ext0.len(),
                            self.params.c * Ratio::from_integer(self.params.r as u64) / 4,
                            alpha as u8
                        ),
                    });
                }
                let closure = ctx.closure_of(&dd).map_err(Halt::from)?;
                let tau = step_assignment(&dd, alpha, &ctx).map_err(|e| match e {
                    RegularizeError::Classify(c) => Halt::from(c),
                    e => Halt::Error(e),
                })?;
                let mut fixed = HashMap::new();
                for (v, b) in tau.iter() {
                    fixed.insert(v.clone(), b);
                }
                let sat_d = dd.evaluate(&fixed).ok() == Some(alpha);
                let sat_cl = closure.iter().all(|idx| {
                    let e = l_cur.equation(*idx).unwrap();
                    let a: Vec<bool> =
                        (0..l_cur.n()).map(|c| fixed.get(&l_cur.vars()[c]).copied().unwrap_or(false)).collect();
                    e.satisfied_by(&a)
                });
                self.check("tau_satisfies", i, Some(q), sat_d && sat_cl, format!("{dd} = {}", alpha as u8));
                let l_next = match l_cur.restrict(&tau) {
                    Ok(l) => l,
                    Err(e) => {
                        self.check("tau_consistent", i, Some(q), false, e.to_string());
                        return Err(Halt::Error(e.into()));
                    }
                };
                let before: BTreeSet<usize> = l_cur.indices().into_iter().collect();
                let after: BTreeSet<usize> = l_next.indices().into_iter().collect();
                let dropped: Vec<usize> = before.difference(&after).copied().collect();
                self.check(
                    "drops_closure",
                    i,
                    Some(q),
                    dropped == closure,
                    format!("dropped {dropped:?}, closure {closure:?}"),
                );
                self.rho.extend(&tau);
                self.j_all = j_next;
                l_cur = l_next;
                let h_prev: HashSet<Formula> = tau.restrict_all(&h).into_iter().collect();
                self.images = tau.restrict_all(&self.images);
                ctx = self.context(l_cur.clone())?;
                levels = self.level_map(&self.images);
                let h_new = high_indegree_set(&levels, i, di, &ctx)?;
                for c in &h_new {
                    for ch in c.children() {
                        self.classify(&ctx, ch)?;
                    }
                }
                let shrinks = h_new.iter().all(|c| h_prev.contains(c)) && h_new.len() < h.len();
                self.check("claim2_shrinks", i, Some(q), shrinks, format!("|H| {} -> {}", h.len(), h_new.len()));
                let g_cur = self.current_graph(&l_cur);
                let dom: Vec<usize> = (0..l_cur.n()).filter(|&c| self.rho.contains(&l_cur.vars()[c])).collect();
                let expected = self.g0.delete(&ext0);
                self.check(
                    "claim4_coincides",
                    i,
                    Some(q),
                    g_cur == expected && dom == ext0,
                    format!("|dom ρ| = {}, |Ext(J)| = {}", dom.len(), ext0.len()),
                );
                self.weak_expansion("claim4_weak", i, Some(q), &g_cur);
                self.check("ext_budget", i, Some(q), true, format!("|Ext(J)| = {}", ext0.len()));
                self.trace.push(StepRecord {
                    phase: i,
                    step: q,
                    chosen: dd,
                    alpha,
                    eliminated: count,
                    h_before: h.len(),
                    h_after: h_new.len(),
                    tau: tau.iter().map(|(v, b)| (v.to_string(), b)).collect(),
                    extension: ext0.len(),
                });
                h = h_new;
            }
            self.check("claim3_steps", i, None, q as f64 <= bound, format!("q = {q}, bound = {bound:.2}"));
            let sigma_i = self.build_sigma(i, &ctx, &sigma_prev)?;
            let seq_long = [
                Restriction::Vars(rho_prev.clone()),
                Restriction::Formulas(sigma_prev.clone()),
                Restriction::Vars(self.rho.clone()),
                Restriction::Formulas(sigma_i.clone()),
            ];
            let seq_short = [Restriction::Vars(self.rho.clone()), Restriction::Formulas(sigma_i.clone())];
            let sampled = self.consistency_sample(i);
            let bad: Vec<&Formula> =
                sampled.iter().filter(|f| compose_restrict(f, &seq_long) != compose_restrict(f, &seq_short)).collect();
            self.check(
                "consistency",
                i,
                None,
                bad.is_empty(),
                format!(
                    "{} sampled, {} inconsistent{}",
                    sampled.len(),
                    bad.len(),
                    bad.first().map(|f| format!(", e.g. {f}")).unwrap_or_default()
                ),
            );
            self.sigma = sigma_i;
            let by_rho = self.rho.restrict_all(&self.originals);
            self.images = by_rho.iter().map(|f| self.sigma.restrict(f)).collect();
            levels = self.level_map(&self.images);
            self.claim5(i, &ctx, &levels)?;
            self.phases.push(PhaseRecord {
                phase: i,
                steps: q,
                psz: s,
                step_bound: bound,
                sigma: self.sigma.pairs().map(|(f, b)| (f.clone(), b)).collect(),
            });
        }
        Ok(())
    }

    fn consistency_sample(&self, phase: usize) -> Vec<Formula> {
        let want = self.cfg.consistency_samples;
        let n = self.originals.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ (phase as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut out: Vec<Formula> = if n <= want {
            self.originals.clone()
        } else {
            sample(&mut rng, n, want).into_iter().map(|k| self.originals[k].clone()).collect()
        };
        let mut k = 0;
        while out.len() < want && n > 0 {
            let a = &self.originals[k % n];
            let b = &self.originals[(k * 7 + 3) % n];
            out.push(if k % 2 == 0 { Formula::or2(a, b) } else { Formula::neg(&Formula::or2(a, b)) });
            k += 1;
        }
        out
    }

    /// Forced subformulas are fixed one minimal formula at a time.
    fn build_sigma(
        &mut self,
        i: usize,
        ctx: &ClassifyContext,
        sigma_prev: &FormulaAssignment,
    ) -> Result<FormulaAssignment, Halt> {
        let by_rho = self.rho.restrict_all(&self.originals);
        let low: Vec<Formula> =
            by_rho.iter().zip(&self.depths).filter(|(_, &dp)| dp < i).map(|(f, _)| f.clone()).collect();
        let b0: Vec<(Formula, bool)> = sigma_prev.pairs().map(|(f, b)| (self.rho.restrict(f), b)).collect();
        let mut b = b0.clone();
        let mut mu = FormulaAssignment::empty();
        let cap = 2 * subformulas_of(by_rho.iter()).len().max(1) + 2 * b0.len() + 2;
        for _ in 0..cap {
            let mut pick: Option<(Formula, bool)> = None;
            'outer: for (e, _) in &b {
                if e.is_const() {
                    continue;
                }
                for g in e.subformulas() {
                    if let Some(v) = self.classify(ctx, &g)?.forced_value() {
                        pick = Some((g, v));
                        break 'outer;
                    }
                }
            }
            if pick.is_none() {
                let current: Vec<Formula> = low.iter().map(|f| mu.restrict(f)).collect();
                'scan: for f in subformulas_of(current.iter()) {
                    if f.is_const() {
                        continue;
                    }
                    if let Some(v) = self.classify(ctx, &f)?.forced_value() {
                        pick = Some((f, v));
                        break 'scan;
                    }
                }
            }
            let Some((g, v)) = pick else {
                self.check(
                    "sigma_consistent_with_previous",
                    i,
                    None,
                    b0.iter().all(|(e, beta)| mu.restrict(e).as_const() == Some(*beta)),
                    format!("{} inherited pairs", b0.len()),
                );
                return Ok(mu);
            };
            let single = FormulaAssignment::validate([(g.clone(), v)]).map_err(|e| Halt::Error(e.into()))?;
            mu.insert(g, v).map_err(|e| Halt::Error(e.into()))?;
            b = b.iter().map(|(e, beta)| (single.restrict(e), *beta)).collect();
        }
        Err(Halt::Error(RegularizeError::NonTermination(cap)))
    }

    fn claim5(&mut self, i: usize, ctx: &ClassifyContext, levels: &LevelMap) -> Result<(), Halt> {
        let mut forced_left = Vec::new();
        let low: Vec<Formula> = levels.up_to_level(i - 1);
        for f in subformulas_of(low.iter()) {
            if !f.is_const() && !self.classify(ctx, &f)?.is_live() {
                forced_left.push(f);
            }
        }
        self.check(
            "claim5a_no_forced",
            i,
            None,
            forced_left.is_empty(),
            forced_left.first().map(|f| format!("{} forced, e.g. {f}", forced_left.len())).unwrap_or_default(),
        );
        let mut bad = Vec::new();
        for j in 0..=i {
            let dj = self.d.get(j).unwrap();
            for f in levels.at_level(j) {
                if f.in_degree() as u64 > dj {
                    bad.push(format!("{f} at level {j}"));
                }
            }
        }
        self.check("claim5b_indegree", i, None, bad.is_empty(), bad.first().cloned().unwrap_or_default());
        let cap = self.d.prefix_product(i - 1);
        let mut bad = Vec::new();
        let pairs: Vec<(Formula, bool)> = self.sigma.pairs().map(|(f, b)| (f.clone(), b)).collect();
        for (f, v) in &pairs {
            let class = self.classify(ctx, f)?;
            let (w, _) = f.width_or_bound(self.cfg.max_support);
            if class != Classification::Forced(*v) || w as u64 > cap {
                bad.push(format!("{f} -> {}: {class:?}, width {w}", *v as u8));
            }
        }
        self.check("claim5c_sigma_forced", i, None, bad.is_empty(), bad.first().cloned().unwrap_or_default());
        Ok(())
    }

    fn conclusions(&mut self, lines: &[Formula], levels: &LevelMap) -> Result<(), Halt> {
        let k = self.d.k();
        let occurring = self.sigma.occurring_vars();
        let clash: Vec<&Var> = self.rho.domain().filter(|v| occurring.contains(*v)).collect();
        let unchanged = self.sigma.domain().all(|f| self.rho.restrict(f) == *f);
        self.check(
            "lemma1_disjoint",
            k,
            None,
            clash.is_empty() && unchanged,
            format!("{} shared variables", clash.len()),
        );
        let l_rho = self.system.restrict(&self.rho).map_err(|e| Halt::Error(e.into()))?;
        let g = self.current_graph(&l_rho);
        self.weak_expansion("lemma2_weak_expansion", k, None, &g);
        let ctx = self.context(l_rho)?;
        let cap = self.d.prefix_product(k);
        let pairs: Vec<(Formula, bool)> = self.sigma.pairs().map(|(f, b)| (f.clone(), b)).collect();
        let mut bad = Vec::new();
        for (f, v) in &pairs {
            let class = self.classify(&ctx, f)?;
            if class != Classification::Forced(*v) || f.width_or_bound(self.cfg.max_support).0 as u64 > cap {
                bad.push(f.to_string());
            }
        }
        self.check("lemma3_sigma_forced", k, None, bad.is_empty(), bad.first().cloned().unwrap_or_default());
        match is_d_regular(lines, levels, &self.d) {
            Ok(v) => self.check(
                "lemma4_d_regular",
                k,
                None,
                v.is_empty(),
                v.first().map(|x| format!("{} at level {}", x.formula, x.level)).unwrap_or_default(),
            ),
            Err(e) => self.check("lemma4_d_regular", k, None, false, e.to_string()),
        }
        Ok(())
    }
}

/// Runs the phases for thresholds `d` and checks every claim on the way.
pub fn regularize(
    proof: &FregeProof,
    system: &LinSystem,
    params: ExpanderParams,
    d: &ThresholdVector,
    cfg: &RegularizeConfig,
) -> Result<RegularizationResult, RegularizeError> {
    proof.check()?;
    let g0 = system.incidence_graph();
    let g0 = g0.induced(g0.left(), &(0..system.n()).collect::<Vec<_>>());
    if cfg.strictness == Strictness::Strict {
        let out = g0.is_boundary_expander(&params, CheckMode::Exhaustive)?;
        if !out.is_certified() {
            return Err(RegularizeError::NotCertified(out));
        }
    }
    let originals = subformulas_of(proof.lines.iter().map(|l| &l.formula));
    let depths = originals.iter().map(Formula::depth).collect();
    let mut run = Run {
        proof,
        system,
        params,
        weak: params.halved(),
        d: d.clone(),
        cfg: *cfg,
        g0,
        images: originals.clone(),
        originals,
        depths,
        rho: VarAssignment::new(),
        sigma: FormulaAssignment::empty(),
        j_all: Vec::new(),
        trace: Vec::new(),
        phases: Vec::new(),
        assertions: Vec::new(),
        deviations: Vec::new(),
        wide: HashSet::new(),
    };
    if cfg.strictness == Strictness::Permissive {
        run.deviations.push("expansion of the input system was not certified (permissive mode)".into());
    }
    let psz_initial = proof.psz();
    let outcome = match run.run() {
        Ok(()) => Outcome::Completed,
        Err(Halt::Budget { phase, step, detail }) => Outcome::BudgetExceeded { phase, step, detail },
        Err(Halt::Error(e)) => return Err(e),
    };
    let lines: Vec<Formula> = proof.lines.iter().map(|l| run.sigma.restrict(&run.rho.restrict(&l.formula))).collect();
    let mut levels = run.level_map(&run.images);
    let mut unlevelled = 0;
    for f in subformulas_of(lines.iter()) {
        if levels.levels(&f).is_none() {
            levels.add(&f, f.depth());
            unlevelled += 1;
        }
    }
    if unlevelled > 0 {
        run.deviations.push(format!("{unlevelled} restricted subformulas had no preimage level; their depth was used"));
    }
    if outcome == Outcome::Completed {
        if let Err(h) = run.conclusions(&lines, &levels) {
            match h {
                Halt::Error(e) => return Err(e),
                Halt::Budget { detail, .. } => run.skip("conclusions", d.k(), None, detail),
            }
        }
    }
    if !run.wide.is_empty() {
        run.deviations.push(format!(
            "{} classified formulas exceed the width bound cr/2 (permissive classification)",
            run.wide.len()
        ));
    }
    let _ = run.proof;
    Ok(RegularizationResult {
        d: d.clone(),
        rho: run.rho,
        sigma: run.sigma,
        lines,
        levels,
        trace: run.trace,
        phases: run.phases,
        assertions: run.assertions,
        deviations: run.deviations,
        outcome,
        psz_initial,
    })
}
