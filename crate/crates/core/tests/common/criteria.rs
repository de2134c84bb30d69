//! Property sweeps shared by the module tests (at reduced size) and the
//! acceptance runner (at full size).

use std::collections::HashMap;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use proofreg::assign::{compose_restrict, FormulaAssignment, Restriction, VarAssignment};
use proofreg::classify::{Classification, ClassifyContext, ClassifyError, Strictness};
use proofreg::f2sys::{
    default_vars, random_regular_graph, tseitin, Cnf, GaussResult, LinSystem, Lit, DEFAULT_WIDTH_LIMIT,
};
use proofreg::formula::{Formula, Var};
use proofreg::frege::build::{add_detours, random_proof, refute_parity};
use proofreg::frege::{FregeProof, ThresholdVector};
use proofreg::graph::{BipartiteGraph, CheckMode, ExpanderParams};
use proofreg::regularize::{regularize, schedule, Outcome, RegularizationResult, RegularizeConfig};
use proofreg::semantic::{
    check_semantic, refutable_within, resolution_width_saturation, transform, Justification, SemanticConfig,
    SemanticDerivation, SemanticLine,
};

use super::{
    bits, clause_sat, lit, mask_of, members, oracle_class, random_sigma, random_tree, satisfies, small_subsets, system,
    valuation, values_on, ClosureOracle, SmallGraph, Tree,
};

/// Outcome of one sweep.
#[derive(Debug, Default)]
pub struct Tally {
    pub cases: u64,
    pub checks: u64,
    pub failed: u64,
    pub samples: Vec<String>,
    pub notes: Vec<String>,
}

impl Tally {
    pub fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failed += 1;
            if self.samples.len() < 10 {
                self.samples.push(what());
            }
        }
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn passed(&self) -> bool {
        self.failed == 0
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} cases, {} checks, {} violations", self.cases, self.checks, self.failed);
        for n in &self.notes {
            s.push_str("; ");
            s.push_str(n);
        }
        s
    }

    /// Panics with the first violations when any check failed.
    pub fn assert_clean(&self) {
        assert!(self.passed(), "{}\n{}", self.summary(), self.samples.join("\n"));
    }
}

/// Idempotence, distributivity and soundness of formula restriction.
pub fn restriction_algebra(cases: u64, seed: u64) -> Tally {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        t.cases += 1;
        let n = rng.gen_range(2..=10);
        let f = random_tree(&mut rng, n, 30).formula();
        let g = random_tree(&mut rng, n, 30).formula();
        let s = random_sigma(&mut rng, &[f.clone(), g.clone()], 4);

        let once = s.restrict(&f);
        t.check(s.restrict(&once) == once, || format!("not idempotent: {f} under {s:?}"));
        let twice = compose_restrict(&f, &[Restriction::Formulas(s.clone()), Restriction::Formulas(s.clone())]);
        t.check(twice == once, || format!("composed restriction differs: {f}"));

        let whole = s.restrict(&Formula::or2(&f, &g));
        let parts = Formula::or2(&once, &s.restrict(&g));
        t.check(whole == s.restrict(&parts), || format!("distributivity fails: {f} | {g}"));
        if !whole.is_const() {
            t.check(whole == parts, || {
                format!("restricted disjunction is not the disjunction of restrictions: {f} | {g}")
            });
        }

        for a in 0u64..1 << n {
            let v = valuation(n, a);
            if s.pairs().all(|(d, b)| d.evaluate(&v).unwrap() == b) {
                t.check(once.evaluate(&v).unwrap() == f.evaluate(&v).unwrap(), || format!("unsound: {f} at {a:b}"));
            }
        }
    }
    t
}

fn labels(mask: u32) -> Vec<usize> {
    members(mask)
}

fn closure_mask(g: &BipartiteGraph, j: u32, r: usize) -> u32 {
    mask_of(&g.closure(&labels(j), r).expect("closure within budget"))
}

/// Library closure against brute force, plus uniqueness, monotonicity and
/// the size bounds on graphs that are certified expanders.
pub fn closure_equivalence(graphs: usize, seed: u64) -> Tally {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut weak_count, mut strong_count) = (0, 0);
    for _ in 0..graphs {
        t.cases += 1;
        let nl = rng.gen_range(3..=12);
        let sg = if rng.gen_bool(0.5) {
            let nr = rng.gen_range(3..=12);
            SmallGraph::random(&mut rng, nl, nr, 1, 4)
        } else {
            let nr = rng.gen_range(nl.min(10)..=12);
            SmallGraph::random(&mut rng, nl, nr, 2, 3)
        };
        let r = rng.gen_range(2..=nl.min(6));
        let c = if rng.gen_bool(0.5) { Ratio::new(1, 2) } else { Ratio::from_integer(1) };
        let delta = sg.max_degree().max(1);
        let p = ExpanderParams::new(r, delta, c);
        let g = sg.to_graph();
        let oracle = ClosureOracle::new(&sg, r);

        let weak = sg.is_weak_expander(r, delta, c);
        let strong = sg.is_boundary_expander(r, delta, c);
        let lib_weak = g.is_weak_expander(&p, CheckMode::Exhaustive).unwrap().is_certified();
        let lib_strong = g.is_boundary_expander(&p, CheckMode::Exhaustive).unwrap().is_certified();
        t.check(weak == lib_weak && strong == lib_strong, || format!("expansion verdict differs on {sg:?} {p:?}"));
        weak_count += weak as usize;
        strong_count += strong as usize;

        let mut memo: HashMap<u32, u32> = HashMap::new();
        for j in small_subsets(sg.nr, p.ceil_cr_over(2)) {
            let got = closure_mask(&g, j, r);
            let want = oracle.closure(j);
            t.check(got == want, || {
                format!("closure {:?} of {:?} on {sg:?} r={r}: want {:?}", labels(got), labels(j), labels(want))
            });
            memo.insert(j, got);
            let size = j.count_ones() as usize;
            if !weak || !p.within(size, 2) {
                continue;
            }
            let union = oracle.union(j);
            let contained = union.count_ones() as usize <= r && sg.boundary(union) & !j == 0;
            t.check(contained && union == want, || format!("closure of {:?} not unique on {sg:?}", labels(j)));
            let k = want.count_ones() as usize;
            let small = (c * Ratio::from_integer(k as u64) <= Ratio::from_integer(size as u64)) || 2 * k <= r;
            t.check(small, || format!("weak closure size bound fails for {:?} on {sg:?}", labels(j)));
            if strong {
                t.check(c * Ratio::from_integer(k as u64) <= Ratio::from_integer(size as u64), || {
                    format!("closure size bound fails for {:?} on {sg:?}", labels(j))
                });
            }
            for v in members(j) {
                let sub = memo[&(j & !(1 << v))];
                t.check(sub & !got == 0, || format!("closure not monotone at {:?} on {sg:?}", labels(j)));
            }
        }
    }
    t.note(format!("{weak_count} weak expanders, {strong_count} boundary expanders"));
    t
}

/// `(r, c)` pairs tried for the generated expanders, largest `cr` first; `Δ = 3`.
const EXPANDER_PARAMS: [(usize, u64, u64); 6] = [(12, 1, 1), (10, 1, 1), (8, 1, 1), (12, 1, 2), (8, 1, 2), (4, 1, 1)];

/// A boundary expander on at most 14 left vertices, certified by brute force.
pub fn random_boundary_expander(rng: &mut ChaCha8Rng) -> (SmallGraph, ExpanderParams) {
    loop {
        let nl = rng.gen_range(4..=14);
        let nr = rng.gen_range(nl..=(nl + 8).min(22));
        let sg = SmallGraph::random(rng, nl, nr, 1, 3);
        for &(r, num, den) in &EXPANDER_PARAMS {
            let c = Ratio::new(num, den);
            let p = ExpanderParams::new(r, 3, c);
            if r > nl || p.floor_cr_over(4) == 0 || !sg.is_boundary_expander(r, 3, c) {
                continue;
            }
            return (sg, p);
        }
    }
}

/// Deletion and extension lemmas over every `J` with `|Ext(J)| ≤ cr/4`.
pub fn deletion_lemmas(count: usize, seed: u64) -> Tally {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut nonempty, mut staged) = (0u64, 0u64);
    for _ in 0..count {
        t.cases += 1;
        let (sg, p) = random_boundary_expander(&mut rng);
        let (r, c) = (p.r, p.c);
        let g = sg.to_graph();
        t.check(g.is_boundary_expander(&p, CheckMode::Exhaustive).unwrap().is_certified(), || {
            format!("library rejects expander {sg:?} {p:?}")
        });
        let oracle = ClosureOracle::new(&sg, r);
        let k = p.floor_cr_over(4);
        let ext_of = |j: u32| j | sg.neighbourhood(oracle.closure(j));
        let small_ext = |e: u32| p.within(e.count_ones() as usize, 4);

        for j in small_subsets(sg.nr, k) {
            let cl = oracle.closure(j);
            let ext = ext_of(j);
            if !small_ext(ext) {
                continue;
            }
            nonempty += (cl != 0) as u64;
            let js = labels(j);
            t.check(closure_mask(&g, j, r) == cl, || format!("closure of {js:?} differs on {sg:?}"));
            t.check(mask_of(&g.extension(&js, r).unwrap()) == ext, || format!("extension of {js:?} differs on {sg:?}"));

            let (je, ee) = (j.count_ones() as u64, ext.count_ones() as u64);
            let fact =
                Ratio::from_integer(2 * ee) * c <= Ratio::from_integer(je) * (c + Ratio::from_integer(p.delta as u64));
            t.check(fact, || format!("extension of {js:?} is too large on {sg:?} {p:?}"));

            t.check(oracle.closure(ext) == cl, || format!("Cl(Ext({js:?})) != Cl on {sg:?}"));
            t.check(closure_mask(&g, ext, r) == cl, || format!("library Cl(Ext({js:?})) != Cl on {sg:?}"));

            let gd = g.delete(&labels(ext));
            let all_left: u32 = (1u32 << sg.nl()) - 1;
            let all_right: u32 = (1u32 << sg.nr) - 1;
            let induced = g.induced(&labels(all_left & !cl), &labels(all_right & !ext));
            t.check(gd == induced, || format!("deleting Ext({js:?}) is not the induced subgraph on {sg:?}"));

            let half = p.halved();
            let sd = SmallGraph::from_graph(&gd);
            t.check(sd.is_weak_expander(r, p.delta, half.c), || {
                format!("G minus Ext({js:?}) not weakly expanding on {sg:?}")
            });
            t.check(gd.is_weak_expander(&half, CheckMode::Exhaustive).unwrap().is_certified(), || {
                format!("library rejects G minus Ext({js:?}) on {sg:?}")
            });

            let rest = all_right & !ext;
            for jp in small_subsets(sg.nr, k - j.count_ones() as usize) {
                if jp & !rest != 0 {
                    continue;
                }
                let both = j | jp;
                let ext_both = ext_of(both);
                if !small_ext(ext_both) {
                    continue;
                }
                staged += 1;
                let one_shot = oracle.closure(both);
                let second = mask_of(&gd.closure(&labels(jp), r).unwrap());
                t.check(one_shot == cl | second, || {
                    format!("staged closure differs for {js:?} then {:?} on {sg:?}", labels(jp))
                });
                let twice = gd.delete(&gd.extension(&labels(jp), r).unwrap());
                t.check(twice == g.delete(&labels(ext_both)), || {
                    format!("staged deletion differs for {js:?} then {:?} on {sg:?}", labels(jp))
                });
            }
        }
    }
    t.note(format!("{nonempty} sets with nonempty closure, {staged} staged pairs"));
    t
}

/// Every 3-clause over three variables, in every literal order: the equation
/// it becomes is the expected parity and implies the clause.
pub fn xor_translation() -> Tally {
    let mut t = Tally::default();
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for signs in 0u8..8 {
        for order in &orders {
            t.cases += 1;
            let clause: Vec<(usize, bool)> = order.iter().map(|&v| (v, (signs >> v) & 1 == 1)).collect();
            let cnf =
                Cnf { vars: default_vars(3), clauses: vec![clause.iter().map(|&(v, p)| Lit::new(v, p)).collect()] };
            let sys = LinSystem::from_3cnf(&cnf).expect("three distinct variables");
            let rhs = signs.count_ones() % 2 == 1;
            let eq = (vec![0, 1, 2], rhs);
            t.check(sys.m() == 1 && sys.equations()[0].cols() == eq.0 && sys.equations()[0].rhs == rhs, || {
                format!("clause {clause:?} became {}", sys.to_xor())
            });
            for a in 0u64..8 {
                let a = bits(3, a);
                if satisfies(std::slice::from_ref(&eq), 1, &a) {
                    t.check(clause_sat(&clause, &a), || {
                        format!("{a:?} solves the equation of {clause:?} but not the clause")
                    });
                }
                t.check(sys.satisfied_by(&a) == satisfies(std::slice::from_ref(&eq), 1, &a), || {
                    format!("library equation of {clause:?} disagrees at {a:?}")
                });
            }
        }
    }
    t
}

/// Depth-≤2 formulas over `x1..x4`: literals, disjunctions of two to four
/// literals on distinct variables, their negations, and `ℓ ∨ ¬(ℓ' ∨ ℓ'')`.
pub fn depth2_family() -> Vec<Tree> {
    let lits: Vec<Tree> = (0..4).flat_map(|v| [lit(v, true), lit(v, false)]).collect();
    let mut ors = Vec::new();
    for vars in 3u32..16 {
        let vs = members(vars);
        if vs.len() < 2 {
            continue;
        }
        for signs in 0u32..1 << vs.len() {
            ors.push(Tree::Or(vs.iter().enumerate().map(|(t, &v)| lit(v, (signs >> t) & 1 == 1)).collect()));
        }
    }
    let mut out = lits.clone();
    out.extend(ors.iter().cloned());
    out.extend(ors.iter().map(|o| Tree::Neg(Box::new(o.clone()))));
    for l in &lits {
        for o in ors.iter().filter(|o| matches!(o, Tree::Or(ks) if ks.len() == 2)) {
            out.push(Tree::Or(vec![l.clone(), Tree::Neg(Box::new(o.clone()))]));
        }
    }
    out
}

/// All equations of width 1 to 3 over `n` variables, both right-hand sides.
pub fn equation_universe(n: usize) -> Vec<(Vec<usize>, bool)> {
    let mut out = Vec::new();
    for s in 1u32..1 << n {
        if s.count_ones() <= 3 {
            out.push((members(s), false));
            out.push((members(s), true));
        }
    }
    out
}

/// Values of `f` on the solutions of the equations in `idx`, evaluated
/// through the library's evaluator.
fn values_of_formula(eqs: &[(Vec<usize>, bool)], n: usize, idx: u32, f: &Formula) -> [bool; 2] {
    let mut seen = [false; 2];
    for a in 0u64..1 << n {
        if satisfies(eqs, idx, &bits(n, a)) {
            seen[f.evaluate(&valuation(n, a)).unwrap() as usize] = true;
        }
    }
    seen
}

fn columns(f: &Formula) -> u32 {
    f.vars().iter().fold(0, |m, v| m | 1 << (v.name()[1..].parse::<usize>().unwrap() - 1))
}

fn library_class(ctx: &ClassifyContext, f: &Formula) -> Result<Option<Classification>, String> {
    match ctx.classify(f) {
        Ok(c) => Ok(Some(c)),
        Err(ClassifyError::VacuousClosure(_)) => Ok(None),
        Err(e) => Err(e.to_string()),
    }
}

/// Checks a derivation line by line on every point of `{0,1}^n`: each rule
/// line contains the common points of its premises.
pub fn derivation_is_sound(d: &SemanticDerivation, n: usize) -> Result<(), String> {
    let points: Vec<HashMap<Var, bool>> = (0u64..1 << n).map(|a| valuation(n, a)).collect();
    for (k, l) in d.lines.iter().enumerate() {
        if let Justification::Rule(prem) = &l.just {
            if prem.iter().any(|&p| p == 0 || p > k) {
                return Err(format!("line {} cites a later line", k + 1));
            }
            for a in &points {
                if prem.iter().all(|&p| d.lines[p - 1].line.contains_point(a)) && !l.line.contains_point(a) {
                    return Err(format!("line {} does not follow from its premises", k + 1));
                }
            }
        }
    }
    Ok(())
}

fn support_mask(l: &SemanticLine) -> u32 {
    l.support().iter().fold(0, |m, v| m | 1 << (v.name()[1..].parse::<usize>().unwrap() - 1))
}

/// Certificate for `f` forced to `alpha`, checked by the library checker and
/// independently against the closure equations.
fn check_certificate(
    t: &mut Tally,
    ctx: &ClassifyContext,
    eqs: &[(Vec<usize>, bool)],
    cl: u32,
    ext: u32,
    f: &Formula,
    alpha: bool,
) {
    let n = ctx.system().n();
    let cert = match ctx.forced_axiom_certificate(f, alpha) {
        Ok(c) => c,
        Err(e) => return t.check(false, || format!("no certificate for {f} = {alpha}: {e}")),
    };
    let d = &cert.derivation;
    t.check(check_semantic(d, &cert.axioms, &SemanticConfig { c_max: 2, w_max: 16 }).is_ok(), || {
        format!("certificate for {f} rejected")
    });
    t.check(derivation_is_sound(d, n).is_ok(), || format!("certificate for {f} is unsound"));
    let bound = ext.count_ones() as usize;
    t.check(cert.bound == bound, || format!("bound {} for {f}, expected |Ext| = {bound}", cert.bound));
    t.check(d.max_width() <= bound, || format!("certificate for {f} has width {} > {bound}", d.max_width()));
    for l in &d.lines {
        t.check(support_mask(&l.line) & !ext == 0, || format!("certificate line for {f} leaves Ext"));
    }
    let axioms_ok = cert.axioms.len() == cl.count_ones() as usize
        && cert.axioms.iter().zip(members(cl)).all(|(ax, i)| {
            (0u64..1 << n).all(|a| ax.contains_point(&valuation(n, a)) == satisfies(eqs, 1 << i, &bits(n, a)))
        });
    t.check(axioms_ok, || format!("certificate axioms for {f} are not the closure equations"));
    let last_ok = d.last().is_some_and(|l| {
        (0u64..1 << n).all(|a| {
            let v = valuation(n, a);
            l.contains_point(&v) == (f.evaluate(&v).unwrap() == alpha)
        })
    });
    t.check(last_ok, || format!("certificate for {f} does not end in its forced value"));
}

/// Per-system state for the classification sweep.
struct SystemCase<'a> {
    eqs: &'a [(Vec<usize>, bool)],
    sg: SmallGraph,
    oracle: ClosureOracle,
    ctx: ClassifyContext,
    p: ExpanderParams,
}

impl SystemCase<'_> {
    fn oracle_class(&self, f: &Formula) -> Option<Classification> {
        oracle_class(values_of_formula(self.eqs, N_CLASSIFY, self.oracle.closure(columns(f)), f))
    }
}

const N_CLASSIFY: usize = 6;

/// Classification against the solution-set oracle, the lemmas on certified
/// weak expanders, and forced-value certificates.
pub fn classification_sweep(exhaustive_m: usize, random_systems: usize, seed: u64) -> (Tally, Tally) {
    let mut t4 = Tally::default();
    let mut t6 = Tally::default();
    let family = depth2_family();
    let universe = equation_universe(N_CLASSIFY);
    let mut systems: Vec<Vec<(Vec<usize>, bool)>> = vec![vec![]];
    for m in 1..=exhaustive_m {
        let mut next = Vec::new();
        for s in systems.iter().filter(|s| s.len() == m - 1) {
            let start = s.last().map_or(0, |e| universe.iter().position(|u| u == e).unwrap() + 1);
            for e in &universe[start..] {
                let mut t = s.clone();
                t.push(e.clone());
                next.push(t);
            }
        }
        systems.extend(next);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_systems {
        let m = rng.gen_range(3..=5);
        systems.push((0..m).map(|_| universe[rng.gen_range(0..universe.len())].clone()).collect());
    }
    let (mut certified, mut lemma_formulas, mut forced) = (0u64, 0u64, 0u64);
    for eqs in &systems {
        let sys = system(N_CLASSIFY, eqs);
        for r in [2usize, 4] {
            t4.cases += 1;
            let p = ExpanderParams::new(r, 3, Ratio::from_integer(1));
            let sg = SmallGraph::from_system(&sys);
            let case = SystemCase {
                eqs,
                oracle: ClosureOracle::new(&sg, r),
                ctx: ClassifyContext::new(sys.clone(), p, Strictness::Permissive).unwrap(),
                sg,
                p,
            };
            let weak = case.sg.is_weak_expander(r, 3, p.c);
            certified += weak as u64;
            for tree in &family {
                let f = tree.formula();
                let cl = case.oracle.closure(columns(&f));
                let want = oracle_class(values_on(eqs, N_CLASSIFY, cl, tree));
                match library_class(&case.ctx, &f) {
                    Ok(got) => t4.check(got == want, || format!("{f} on {eqs:?} r={r}: got {got:?}, want {want:?}")),
                    Err(e) => t4.check(false, || format!("{f} on {eqs:?}: {e}")),
                }
                if let Some(Classification::Forced(alpha)) = want {
                    forced += 1;
                    t6.cases += 1;
                    let ext = columns(&f) | case.sg.neighbourhood(cl);
                    check_certificate(&mut t6, &case.ctx, eqs, cl, ext, &f, alpha);
                }
                if weak && p.within(f.vars().len(), 2) {
                    lemma_formulas += 1;
                    lemma_checks(&mut t4, &case, &sys, tree, &f, want);
                }
            }
        }
    }
    t4.note(format!("{} systems, {certified} certified weak expanders, {lemma_formulas} lemma cases", systems.len()));
    t6.note(format!("{forced} forced formulas"));
    (t4, t6)
}

fn lemma_checks(
    t: &mut Tally,
    case: &SystemCase<'_>,
    sys: &LinSystem,
    tree: &Tree,
    f: &Formula,
    want: Option<Classification>,
) {
    let (eqs, r) = (case.eqs, case.p.r);
    let Some(class) = want else {
        return t.check(false, || format!("closure of {f} is vacuous on weakly expanding {eqs:?}"));
    };
    let cl = case.oracle.closure(columns(f));
    let on_cl = values_on(eqs, N_CLASSIFY, cl, tree);
    let small: Vec<u32> = small_subsets(eqs.len(), r / 2);
    let on_small: Vec<[bool; 2]> = small.iter().map(|&i| values_on(eqs, N_CLASSIFY, i, tree)).collect();
    for alpha in [false, true] {
        if on_cl[alpha as usize] {
            t.check(on_small.iter().all(|v| v[alpha as usize]), || {
                format!("({f} = {alpha}) is consistent with the closure but not with a small subsystem of {eqs:?}")
            });
        }
        if on_small.iter().any(|v| !v[!alpha as usize]) {
            t.check(class == Classification::Forced(alpha), || {
                format!("a small subsystem of {eqs:?} refutes {f} = {}, but it is {class:?}", !alpha)
            });
        }
    }
    let Classification::Forced(alpha) = class else { return };

    for v in 0..N_CLASSIFY {
        for b in [false, true] {
            let rho: VarAssignment = [(Var::new(&super::var_name(v)), b)].into_iter().collect();
            let Ok(restricted) = sys.restrict(&rho) else { continue };
            let rsg = SmallGraph::from_system(&restricted);
            if !rsg.is_weak_expander(r, 3, case.p.c) {
                continue;
            }
            let reqs: Vec<(Vec<usize>, bool)> = restricted.equations().iter().map(|e| (e.cols(), e.rhs)).collect();
            let g = rho.restrict(f);
            let roracle = ClosureOracle::new(&rsg, r);
            let truth = oracle_class(values_of_formula(&reqs, N_CLASSIFY, roracle.closure(columns(&g)), &g));
            let rctx = ClassifyContext::new(restricted.clone(), case.p, Strictness::Permissive).unwrap();
            let got = library_class(&rctx, &g);
            t.check(truth == Some(class) && got == Ok(Some(class)), || {
                format!("{f} forced to {alpha} on {eqs:?} but {g} is {truth:?}/{got:?} after x{}={b}", v + 1)
            });
        }
    }

    for d in f.subformulas() {
        let Some(Classification::Forced(beta)) = case.oracle_class(&d) else { continue };
        let Ok(sigma) = FormulaAssignment::validate([(d.clone(), beta)]) else { continue };
        let g = sigma.restrict(f);
        let truth = case.oracle_class(&g);
        let got = library_class(&case.ctx, &g);
        t.check(truth == Some(class) && got == Ok(Some(class)), || {
            format!("{f} forced to {alpha} on {eqs:?} but {g} is {truth:?}/{got:?} after {d} = {beta}")
        });
    }

    if f.is_neg() {
        let d = &f.children()[0];
        t.check(case.oracle_class(d) == Some(Classification::Forced(!alpha)), || {
            format!("{f} forced to {alpha} but its negand is not forced to {}", !alpha)
        });
    }
    if f.is_or() && !alpha {
        for c in f.children() {
            t.check(case.oracle_class(c) == Some(Classification::Forced(false)), || {
                format!("{f} forced to 0 but its child {c} is not")
            });
        }
    }
}

/// Random proofs restricted by random formula assignments, rebuilt as
/// semantic derivations.
pub fn transform_sweep(count: u64, seed: u64) -> Tally {
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SemanticConfig::default();
    let mut worst = Ratio::from_integer(0u64);
    for _ in 0..count {
        t.cases += 1;
        let n = rng.gen_range(2..=10);
        let lines = rng.gen_range(1..=50);
        let proof = random_proof(&mut rng, n, lines);
        t.check(proof.check().is_ok() && proof.lines.len() <= 50, || "generator produced an invalid proof".into());
        let pool: Vec<Formula> = proof.lines.iter().map(|l| l.formula.clone()).collect();
        let sigma = random_sigma(&mut rng, &pool, 4);
        let report = match transform(&proof, &sigma, &cfg) {
            Ok(r) => r,
            Err(e) => {
                t.check(false, || format!("transform failed: {e}"));
                continue;
            }
        };
        let d = &report.derivation;
        t.check(check_semantic(d, &report.axioms, &cfg).is_ok(), || format!("derivation rejected under {sigma:?}"));
        t.check(derivation_is_sound(d, n).is_ok(), || format!("derivation unsound under {sigma:?}"));

        let line = |f: &Formula| SemanticLine::from_formula(f, cfg.w_max).unwrap();
        let mut expected: Vec<SemanticLine> = proof.inputs.iter().map(|f| line(&sigma.restrict(f))).collect();
        expected.extend(sigma.pairs().map(|(f, b)| line(&f.power(b))));
        t.check(report.axioms == expected, || format!("axiom set differs under {sigma:?}"));
        let axioms_used = d.lines.iter().all(|l| match &l.just {
            Justification::Axiom(_) => expected.contains(&l.line),
            Justification::Rule(p) => p.len() <= cfg.c_max,
        });
        t.check(axioms_used, || "derivation uses a foreign axiom or too many premises".into());
        for (k, l) in proof.lines.iter().enumerate() {
            let id = report.line_map[k];
            t.check(d.lines[id - 1].line == line(&sigma.restrict(&l.formula)), || {
                format!("line {} is not mapped to its restriction", k + 1)
            });
        }

        let proof_width = proof.lines.iter().map(|l| l.formula.semantic_width(cfg.w_max).unwrap()).max().unwrap_or(0);
        let axiom_width = sigma.pairs().map(|(f, b)| f.power(b).semantic_width(cfg.w_max).unwrap()).max().unwrap_or(0);
        let ratio = Ratio::new(d.max_width() as u64, proof_width.max(axiom_width).max(1) as u64);
        t.check(ratio == report.ratio, || format!("reported ratio {} but measured {ratio}", report.ratio));
        t.check(ratio <= Ratio::from_integer(3), || format!("width ratio {ratio} above 3"));
        worst = worst.max(ratio);
    }
    t.note(format!("largest width ratio {worst}"));
    t
}

/// An unsatisfiable system with the `(r, Δ, c)` of largest `⌈cr/2⌉` for which
/// its incidence graph is a weak expander.
pub struct WidthInstance {
    pub name: String,
    pub eqs: Vec<(Vec<usize>, bool)>,
    pub n: usize,
    pub params: Option<ExpanderParams>,
}

fn best_weak_params(sg: &SmallGraph) -> Option<ExpanderParams> {
    let delta = sg.max_degree();
    let mut best: Option<ExpanderParams> = None;
    for r in 1..=sg.nl() {
        for (a, b) in [(1, 2), (1, 1), (3, 2), (2, 1), (5, 2), (3, 1)] {
            let p = ExpanderParams::new(r, delta, Ratio::new(a, b));
            if best.is_some_and(|q| q.ceil_cr_over(2) >= p.ceil_cr_over(2)) {
                continue;
            }
            if sg.is_weak_expander(r, delta, p.c) {
                best = Some(p);
            }
        }
    }
    best
}

pub fn width_instances(random: usize, seed: u64) -> Vec<WidthInstance> {
    let mut out = Vec::new();
    let mut push = |name: String, n: usize, eqs: Vec<(Vec<usize>, bool)>| {
        let sg = SmallGraph::from_system(&system(n, &eqs));
        out.push(WidthInstance { name, params: best_weak_params(&sg), eqs, n });
    };
    let k4 = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    push("K4 Tseitin".into(), 6, tseitin_eqs(4, &k4));
    for (nv, s) in [(6, 1), (8, 2), (10, 3)] {
        let edges = random_regular_graph(nv, 3, s).expect("cubic graph exists");
        push(format!("cubic Tseitin on {nv} vertices"), edges.len(), tseitin_eqs(nv, &edges));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = 0;
    while found < random {
        let n = rng.gen_range(6..=12);
        let m = rng.gen_range(n..=n + 2);
        let eqs: Vec<(Vec<usize>, bool)> = (0..m)
            .map(|_| {
                let mut cols: Vec<usize> = (0..n).collect();
                cols.shuffle(&mut rng);
                cols.truncate(3);
                cols.sort_unstable();
                (cols, rng.gen())
            })
            .collect();
        if (0u64..1 << n).any(|a| satisfies(&eqs, ((1u64 << m) - 1) as u32, &bits(n, a))) {
            continue;
        }
        let sg = SmallGraph::from_system(&system(n, &eqs));
        if best_weak_params(&sg).is_none_or(|p| p.ceil_cr_over(2) < 2) {
            continue;
        }
        found += 1;
        push(format!("random 3-XOR system {found}"), n, eqs);
    }
    out
}

fn tseitin_eqs(nv: usize, edges: &[(usize, usize)]) -> Vec<(Vec<usize>, bool)> {
    (0..nv)
        .map(|v| {
            let cols = edges.iter().enumerate().filter(|(_, e)| e.0 == v || e.1 == v).map(|(i, _)| i).collect();
            (cols, v == 0)
        })
        .collect()
}

/// Width-bounded resolution on the canonical encoding of each instance:
/// no refutation below `⌈cr/2⌉`, some refutation at width at most `n`.
pub fn width_law(random: usize, seed: u64) -> Tally {
    let mut t = Tally::default();
    let mut widths = Vec::new();
    for inst in width_instances(random, seed) {
        let Some(p) = inst.params else { continue };
        t.cases += 1;
        let sys = system(inst.n, &inst.eqs);
        t.check(matches!(sys.gaussian_sat(), GaussResult::Unsat(_)), || format!("{} is satisfiable", inst.name));
        t.check(sys.incidence_graph().is_weak_expander(&p, CheckMode::Exhaustive).unwrap().is_certified(), || {
            format!("library rejects {} as {p:?}", inst.name)
        });
        let cnf = sys.cnf_encoding(DEFAULT_WIDTH_LIMIT).unwrap();
        let bound = p.ceil_cr_over(2);
        let initial = cnf.max_width();
        let mut first = None;
        for w in 0..=inst.n {
            let ok = refutable_within(&cnf, w).unwrap();
            if w >= initial {
                t.check(resolution_width_saturation(&cnf, w).unwrap().refutable == ok, || {
                    format!("{}: saturation entry points disagree at width {w}", inst.name)
                });
            }
            if w < bound {
                t.check(!ok, || format!("{} refuted at width {w} < {bound} with {p:?}", inst.name));
            }
            if ok {
                first = Some(w);
                break;
            }
        }
        t.check(first.is_some(), || format!("{} not refuted at any width up to {}", inst.name, inst.n));
        widths.push(format!(
            "{}: ⌈cr/2⌉={bound}, refuted at {}",
            inst.name,
            first.map_or("-".into(), |w| w.to_string())
        ));
    }
    t.note(widths.into_iter().take(4).collect::<Vec<_>>().join(", "));
    t
}

/// The 24-variable Tseitin system of a cubic graph on 16 vertices with one
/// odd vertex, and its depth-2 refutation with detours.
pub fn regularizer_instance() -> (LinSystem, FregeProof) {
    let edges = random_regular_graph(16, 3, 1).expect("cubic graph exists");
    let mut charges = vec![false; 16];
    charges[0] = true;
    let sys = tseitin(16, &edges, &charges).unwrap();
    let GaussResult::Unsat(cert) = sys.gaussian_sat() else { panic!("odd total charge is unsatisfiable") };
    let proof = add_detours(&refute_parity(&sys, &cert, DEFAULT_WIDTH_LIMIT).unwrap(), 3);
    (sys, proof)
}

const CONCLUSIONS: [&str; 13] = [
    "lemma1_disjoint",
    "lemma2_weak_expansion",
    "lemma3_sigma_forced",
    "lemma4_d_regular",
    "claim1_domain",
    "claim2_shrinks",
    "claim3_steps",
    "claim4_coincides",
    "claim4_weak",
    "claim5a_no_forced",
    "claim5b_indegree",
    "claim5c_sigma_forced",
    "consistency",
];

fn regularizer_params() -> ExpanderParams {
    ExpanderParams::new(8, 3, Ratio::new(1, 2))
}

/// Trace coherence, no failed assertion, and `ρ` built from the step
/// assignments without falsifying an equation.
fn common_run_checks(t: &mut Tally, label: &str, sys: &LinSystem, res: &RegularizationResult) {
    let p = regularizer_params();
    t.check(res.all_passed(), || format!("{label}: failed assertions {:?}", res.failures()));
    let mut from_steps = VarAssignment::new();
    for s in &res.trace {
        for (v, b) in &s.tau {
            from_steps.insert(Var::new(v), *b);
        }
        t.check(Ratio::from_integer(4 * s.extension as u64) <= p.c * Ratio::from_integer(p.r as u64), || {
            format!("{label}: |Ext| = {} over cr/4 at step {}.{}", s.extension, s.phase, s.step)
        });
        t.check(s.h_after < s.h_before, || format!("{label}: H did not shrink at step {}.{}", s.phase, s.step));
    }
    t.check(from_steps == res.rho, || format!("{label}: ρ differs from the union of step assignments"));
    t.check(sys.restrict(&res.rho).is_ok(), || format!("{label}: ρ falsifies an equation"));
    let mut phase = 0;
    let mut step = 0;
    for s in &res.trace {
        if s.phase != phase {
            (phase, step) = (s.phase, 0);
        }
        step += 1;
        t.check(s.step == step, || format!("{label}: step {}.{} out of order", s.phase, s.step));
    }
    if let Outcome::BudgetExceeded { phase: hp, step: hs, .. } = &res.outcome {
        let done = res.trace.iter().filter(|s| s.phase == *hp).count();
        t.check(*hs == done + 1 && res.phases.len() + 1 == *hp, || {
            format!("{label}: halt at {hp}.{hs} after {done} steps and {} phases", res.phases.len())
        });
    }
}

/// Thresholds from the schedule may overrun `cr/4`; explicit thresholds
/// `(1, 8, 64)` complete with every conclusion, claim and consistency check.
pub fn regularizer_e2e() -> Tally {
    let mut t = Tally::default();
    let (sys, proof) = regularizer_instance();
    t.check(sys.n() == 24 && sys.m() == 16, || format!("instance has n = {}, m = {}", sys.n(), sys.m()));
    t.check(proof.check().is_ok(), || "input proof does not check".into());
    t.check(proof.depth() <= 2, || format!("input proof has depth {}", proof.depth()));
    t.check(proof.target == Formula::zero(), || "input proof is not a refutation".into());
    let cfg = RegularizeConfig { consistency_samples: 100, ..RegularizeConfig::default() };

    t.cases += 1;
    let sched = schedule(sys.n(), 2);
    match regularize(&proof, &sys, regularizer_params(), &sched.d, &cfg) {
        Ok(res) => {
            common_run_checks(&mut t, "scheduled", &sys, &res);
            t.note(format!("schedule d = {:?}: {:?} after {} steps", sched.d.as_slice(), res.outcome, res.trace.len()));
        }
        Err(e) => t.check(false, || format!("scheduled run errored: {e}")),
    }

    t.cases += 1;
    let d = ThresholdVector::new(vec![1, 8, 64]).unwrap();
    let res = match regularize(&proof, &sys, regularizer_params(), &d, &cfg) {
        Ok(r) => r,
        Err(e) => {
            t.check(false, || format!("explicit run errored: {e}"));
            return t;
        }
    };
    common_run_checks(&mut t, "explicit", &sys, &res);
    t.check(res.completed(), || format!("explicit run stopped: {:?}", res.outcome));
    for name in CONCLUSIONS {
        t.check(res.passed(name), || format!("{name} did not pass"));
    }
    for a in res.assertions.iter().filter(|a| a.name == "consistency") {
        let n: usize = a.detail.split_whitespace().next().and_then(|x| x.parse().ok()).unwrap_or(0);
        t.check(n >= 100, || format!("consistency sampled only {n} formulas"));
    }
    for (line, got) in proof.lines.iter().zip(&res.lines) {
        let want = res.sigma.restrict(&res.rho.restrict(&line.formula));
        t.check(&want == got, || format!("line {} is not Π|ρ|σ", line.id));
        t.check(res.sigma.restrict(&res.rho.restrict(got)) == *got, || format!("line {} is not a fixpoint", line.id));
    }
    let mut seen = std::collections::HashSet::new();
    for f in res.lines.iter().flat_map(|l| l.subformulas()) {
        if !seen.insert(f.clone()) {
            continue;
        }
        match res.levels.levels(&f) {
            None => t.check(false, || format!("{f} has no level")),
            Some(ls) => {
                for &l in ls {
                    let dl = d.get(l).unwrap_or(0);
                    t.check(f.in_degree() as u64 <= dl, || format!("{f} has in-degree {} at level {l}", f.in_degree()));
                }
            }
        }
    }

    let again = regularize(&proof, &sys, regularizer_params(), &d, &cfg).unwrap();
    t.check(
        again.trace == res.trace
            && again.rho.to_entries() == res.rho.to_entries()
            && again.sigma.to_entries() == res.sigma.to_entries()
            && again.lines == res.lines,
        || "regularization is not deterministic".into(),
    );
    t.note(format!(
        "d = (1, 8, 64): {} steps, |ρ| = {}, |σ| = {}, psz {} -> {:?}",
        res.trace.len(),
        res.rho.len(),
        res.sigma.len(),
        res.psz_initial,
        res.phases.iter().map(|p| p.psz).collect::<Vec<_>>()
    ));
    t
}
