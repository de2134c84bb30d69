use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use proofreg::assign::{AssignmentEntry, FormulaAssignment, VarAssignment};
use proofreg::classify::{ClassifyContext, ClassifyError, Strictness};
use proofreg::f2sys::{
    clause_count, density_threshold, random_3cnf, random_regular_graph, Cnf, F2Error, GaussResult, LinSystem,
};
use proofreg::formula::{parse_formula, Formula};
use proofreg::frege::build::{add_detours, refute_parity};
use proofreg::frege::{FregeProof, ThresholdVector};
use proofreg::graph::{CheckMode, ClosureConfig, ExpanderParams, ExpansionOutcome, GraphError};
use proofreg::regularize::{self as reg, Outcome, RegularizationResult, RegularizeConfig, RegularizeError};
use proofreg::semantic::{check_semantic, refutable_within, resolution_width_saturation, SemanticConfig};

use crate::report::{Failure, Report, EXIT_ASSERTION, EXIT_BUDGET};
use crate::{Budgets, ExpansionArgs, KindArg, ModeArg, ThresholdArgs};

/// Stage seed derived from the run seed and a label.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(seed.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn read(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

fn write(p: &Path, text: &str) -> Result<(), Failure> {
    fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn read_xor(p: &Path) -> Result<LinSystem, Failure> {
    LinSystem::from_xor(&read(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

fn read_cnf(p: &Path) -> Result<Cnf, Failure> {
    Cnf::from_dimacs(&read(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

fn params(s: &str) -> Result<ExpanderParams, Failure> {
    ExpanderParams::parse(s).ok_or_else(|| Failure::input(format!("bad --params {s:?}; expected r,Δ,p/q")))
}

fn encoding_inputs(sys: &LinSystem, width: usize) -> Result<Vec<Formula>, Failure> {
    let cnf = sys.cnf_encoding(width).map_err(Failure::input)?;
    let mut f = cnf.formulas();
    f.sort();
    f.dedup();
    Ok(f)
}

fn read_proof(p: &Path, inputs: Option<Vec<Formula>>) -> Result<FregeProof, Failure> {
    FregeProof::from_jsonl(&read(p)?, inputs).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

fn read_entries(p: &Path) -> Result<Vec<AssignmentEntry>, Failure> {
    serde_json::from_str(&read(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

fn strictness(e: &ExpansionArgs) -> Strictness {
    if e.permissive {
        Strictness::Permissive
    } else {
        Strictness::Strict
    }
}

fn closure_cfg(b: &Budgets) -> ClosureConfig {
    ClosureConfig { exhaustive_limit: b.budget_exhaustive, node_budget: b.budget_nodes }
}

fn graph_failure(e: GraphError) -> Failure {
    match e {
        GraphError::BudgetExceeded(_) => Failure::budget(e),
        e => Failure::input(e),
    }
}

fn classify_failure(e: ClassifyError) -> Failure {
    match e {
        ClassifyError::Graph(g) => graph_failure(g),
        ClassifyError::NotCertified(_) | ClassifyError::WidthBound { .. } | ClassifyError::VacuousClosure(_) => {
            Failure::budget(e)
        }
        ClassifyError::WidthOverflow { .. } => Failure { code: EXIT_ASSERTION, message: e.to_string() },
        e => Failure::input(e),
    }
}

fn regularize_failure(e: RegularizeError) -> Failure {
    match e {
        RegularizeError::Graph(g) => graph_failure(g),
        RegularizeError::Classify(c) => classify_failure(c),
        RegularizeError::NotCertified(_)
        | RegularizeError::NoSatisfyingAssignment { .. }
        | RegularizeError::NonTermination(_) => Failure::budget(e),
        RegularizeError::Proof(_) => Failure { code: EXIT_ASSERTION, message: e.to_string() },
        e => Failure::input(e),
    }
}

fn done(mut r: Report, res: Result<(), Failure>) -> Report {
    if let Err(f) = res {
        r = r.fail(f);
    }
    r.finish()
}

pub fn gen(n: usize, density: f64, seed: u64, out: &Path) -> Report {
    let mut r = Report::new("gen", json!({ "n": n, "density": density, "seed": seed, "out": out }));
    let res = (|| {
        let below = density < density_threshold();
        if below {
            r.warnings.push(format!("density {density} is below 8 ln 2 = {:.6}", density_threshold()));
        }
        let cnf = random_3cnf(n, density, sub_seed(seed, "gen/cnf")).map_err(Failure::input)?;
        let sys = LinSystem::from_3cnf(&cnf).map_err(Failure::input)?;
        write(&with_ext(out, ".cnf"), &cnf.to_dimacs())?;
        write(&with_ext(out, ".xor"), &sys.to_xor())?;
        r.stage(
            "gen",
            "pass",
            json!({
                "clauses": cnf.clauses.len(),
                "expected_clauses": clause_count(n, density),
                "equations": sys.m(),
                "below_threshold": below,
            }),
        );
        Ok(())
    })();
    done(r, res)
}

pub fn tseitin(n: usize, degree: usize, seed: u64, out: &Path) -> Report {
    let mut r = Report::new("tseitin", json!({ "n": n, "degree": degree, "seed": seed, "out": out }));
    let res = (|| {
        let edges = random_regular_graph(n, degree, sub_seed(seed, "tseitin/graph"))
            .ok_or_else(|| Failure::input(format!("no simple {degree}-regular graph on {n} vertices")))?;
        let mut charges = vec![false; n];
        charges[0] = true;
        let sys = proofreg::f2sys::tseitin(n, &edges, &charges).map_err(Failure::input)?;
        write(out, &sys.to_xor())?;
        r.stage("tseitin", "pass", json!({ "variables": sys.n(), "equations": sys.m(), "edges": edges }));
        Ok(())
    })();
    done(r, res)
}

pub fn cnf2xor(cnf: &Path, out: &Path) -> Report {
    let mut r = Report::new("cnf2xor", json!({ "cnf": cnf, "out": out }));
    let res = (|| {
        let f = read_cnf(cnf)?;
        let sys = LinSystem::from_3cnf(&f).map_err(Failure::input)?;
        write(out, &sys.to_xor())?;
        r.stage("cnf2xor", "pass", json!({ "variables": sys.n(), "equations": sys.m() }));
        Ok(())
    })();
    done(r, res)
}

fn outcome_status(o: &ExpansionOutcome) -> &'static str {
    match o {
        ExpansionOutcome::Certified { .. } => "certified",
        ExpansionOutcome::NoCounterexampleFound { .. } => "no-counterexample",
        ExpansionOutcome::Counterexample(_) => "counterexample",
    }
}

pub fn certify(xor: &Path, p: &str, mode: ModeArg, kind: KindArg, samples: u64, seed: u64, budget: u64) -> Report {
    let mut r = Report::new(
        "certify",
        json!({ "xor": xor, "params": p, "mode": mode, "kind": kind, "samples": samples, "seed": seed, "budget_subsets": budget }),
    );
    let res = (|| {
        let sys = read_xor(xor)?;
        let params = params(p)?;
        let g = sys.incidence_graph();
        let mode = match mode {
            ModeArg::Exhaustive => CheckMode::Exhaustive,
            ModeArg::Sampled => CheckMode::Sampled { samples, seed: sub_seed(seed, "certify/sample") },
        };
        let kinds: &[(&str, bool)] = match kind {
            KindArg::Boundary => &[("boundary", false)],
            KindArg::Weak => &[("weak", true)],
            KindArg::Both => &[("boundary", false), ("weak", true)],
        };
        for &(name, weak) in kinds {
            let t = Instant::now();
            match g.check_expansion(&params, mode, weak, budget) {
                Ok(o) => {
                    let status = outcome_status(&o);
                    r.check(name, !matches!(o, ExpansionOutcome::Counterexample(_)), status);
                    r.stage(name, status, o);
                }
                Err(e) => {
                    r.skip(name, e.to_string());
                    r.stage(name, "budget-exceeded", e.to_string());
                    r.escalate(EXIT_BUDGET);
                }
            }
            r.time(name, t);
        }
        Ok(())
    })();
    done(r, res)
}

pub fn closure(xor: &Path, p: &str, vars: &str, b: &Budgets) -> Report {
    let mut r = Report::new("closure", json!({ "xor": xor, "params": p, "vars": vars, "budgets": b }));
    let res = (|| {
        let sys = read_xor(xor)?;
        let params = params(p)?;
        let g = sys.incidence_graph();
        let mut cols = Vec::new();
        for v in vars.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let f = parse_formula(v).map_err(Failure::input)?;
            let x = f.as_var().ok_or_else(|| Failure::input(format!("{v} is not a variable")))?;
            cols.push(sys.col(x).ok_or_else(|| Failure::input(format!("{v} does not occur in the system")))?);
        }
        cols.sort_unstable();
        cols.dedup();
        let cl = g.closure_with(&cols, params.r, closure_cfg(b)).map_err(graph_failure)?;
        let ext = g.extension_with(&cols, params.r, closure_cfg(b)).map_err(graph_failure)?;
        let ext_names: Vec<String> = ext.iter().map(|&c| sys.vars()[c].to_string()).collect();
        let eqs: Vec<String> = cl.iter().map(|&i| sys.render(sys.equation(i).expect("closure index"))).collect();
        r.stage("closure", "pass", json!({ "closure": cl, "equations": eqs, "extension": ext_names }));
        Ok(())
    })();
    done(r, res)
}

pub fn classify(xor: &Path, formula: &str, e: &ExpansionArgs, b: &Budgets, out: Option<&Path>) -> Report {
    let mut r =
        Report::new("classify", json!({ "xor": xor, "formula": formula, "expansion": e, "budgets": b, "out": out }));
    let res = (|| {
        let sys = read_xor(xor)?;
        let params = params(&e.params)?;
        let f = parse_formula(formula).map_err(Failure::input)?;
        let mode = strictness(e);
        if mode == Strictness::Permissive {
            r.deviations.push("weak expansion not certified (permissive mode)".into());
        }
        let ctx = ClassifyContext::with_config(sys, params, mode, closure_cfg(b), b.budget_support)
            .map_err(classify_failure)?;
        let rep = ctx.report(&f).map_err(classify_failure)?;
        if !rep.width_ok {
            r.deviations.push(format!("width {} exceeds cr/2", rep.width));
        }
        r.stage("classify", "pass", &rep);
        if let Some(alpha) = rep.class.forced_value() {
            let cert = ctx.forced_axiom_certificate(&f, alpha).map_err(classify_failure)?;
            let w = cert.derivation.max_width();
            r.check("certificate_width", w <= cert.bound, format!("width {w}, |Ext| = {}", cert.bound));
            if let Some(p) = out {
                write(p, &cert.derivation.to_jsonl())?;
            }
            r.stage("certificate", "pass", json!({ "lines": cert.derivation.len(), "width": w, "bound": cert.bound }));
        }
        Ok(())
    })();
    done(r, res)
}

pub fn check_proof(proof: &Path, xor: Option<&Path>, width: usize) -> Report {
    let mut r = Report::new("check-proof", json!({ "proof": proof, "xor": xor, "budget_width": width }));
    let res = (|| {
        let inputs = match xor {
            Some(x) => Some(encoding_inputs(&read_xor(x)?, width)?),
            None => None,
        };
        let p = read_proof(proof, inputs)?;
        let ok = match p.check() {
            Ok(()) => r.check("check_proof", true, ""),
            Err(e) => r.check("check_proof", false, e.to_string()),
        };
        if ok {
            r.stage(
                "check_proof",
                "pass",
                json!({ "pln": p.pln().ok(), "psz": p.psz(), "depth": p.depth(), "width": p.width(), "target": p.target.to_string() }),
            );
        }
        Ok(())
    })();
    done(r, res)
}

pub fn refute(xor: &Path, detours: usize, width: usize, out: &Path) -> Report {
    let mut r = Report::new("refute", json!({ "xor": xor, "detours": detours, "budget_width": width, "out": out }));
    let res = (|| {
        let sys = read_xor(xor)?;
        let cert = match sys.gaussian_sat() {
            GaussResult::Unsat(c) => c,
            GaussResult::Sat(_) => return Err(Failure::budget("the system is satisfiable")),
        };
        let mut p = refute_parity(&sys, &cert, width).map_err(|e: F2Error| Failure::input(e))?;
        if detours > 0 {
            p = add_detours(&p, detours);
        }
        r.check("check_proof", p.check().is_ok(), "");
        write(out, &p.to_jsonl())?;
        r.stage(
            "refute",
            "pass",
            json!({ "pln": p.pln().ok(), "psz": p.psz(), "depth": p.depth(), "certificate": cert }),
        );
        Ok(())
    })();
    done(r, res)
}

fn thresholds(t: &ThresholdArgs, n: usize) -> Result<(ThresholdVector, serde_json::Value), Failure> {
    match &t.thresholds {
        Some(s) => {
            let d: Result<Vec<u64>, _> = s.split(',').map(|x| x.trim().parse::<u64>()).collect();
            let d = d.map_err(|e| Failure::input(format!("bad --thresholds: {e}")))?;
            let v = ThresholdVector::new(d).map_err(Failure::input)?;
            Ok((v.clone(), json!({ "explicit": v.as_slice() })))
        }
        None => {
            if n < 2 || t.depth == 0 {
                return Err(Failure::input("the schedule needs n >= 2 and depth >= 1"));
            }
            let s = reg::schedule(n, t.depth);
            Ok((s.d.clone(), serde_json::to_value(&s).unwrap()))
        }
    }
}

fn reg_config(e: &ExpansionArgs, b: &Budgets, seed: u64) -> RegularizeConfig {
    RegularizeConfig {
        strictness: strictness(e),
        closure: closure_cfg(b),
        max_support: b.budget_support,
        consistency_samples: 100,
        seed: sub_seed(seed, "regularize/consistency"),
        expansion_budget: b.budget_subsets.min(5_000_000),
        step_cap: b.budget_steps,
    }
}

#[derive(Serialize)]
struct RegularizeSummary<'a> {
    outcome: &'a Outcome,
    psz_initial: usize,
    steps: usize,
    trace: &'a [reg::StepRecord],
    phases: &'a [reg::PhaseRecord],
    rho: Vec<AssignmentEntry>,
    sigma: Vec<AssignmentEntry>,
}

fn record_regularization(r: &mut Report, res: &RegularizationResult) {
    for a in &res.assertions {
        let name = match a.step {
            Some(q) => format!("{}[{}.{}]", a.name, a.phase, q),
            None => format!("{}[{}]", a.name, a.phase),
        };
        match a.status {
            reg::Status::Pass => r.check(name, true, &a.detail),
            reg::Status::Fail => r.check(name, false, &a.detail),
            reg::Status::Skipped => {
                r.skip(name, &a.detail);
                true
            }
        };
    }
    r.deviations.extend(res.deviations.iter().cloned());
    let status = if res.completed() { "completed" } else { "budget-exceeded" };
    r.stage(
        "regularize",
        status,
        RegularizeSummary {
            outcome: &res.outcome,
            psz_initial: res.psz_initial,
            steps: res.trace.len(),
            trace: &res.trace,
            phases: &res.phases,
            rho: res.rho.to_entries(),
            sigma: res.sigma.to_entries(),
        },
    );
    if !res.completed() {
        r.escalate(EXIT_BUDGET);
    }
}

pub fn regularize(
    proof: &Path,
    xor: &Path,
    e: &ExpansionArgs,
    t: &ThresholdArgs,
    b: &Budgets,
    seed: u64,
    out: Option<&Path>,
) -> Report {
    let mut r = Report::new(
        "regularize",
        json!({ "proof": proof, "xor": xor, "expansion": e, "thresholds": t, "budgets": b, "seed": seed, "out": out }),
    );
    let res = (|| {
        let sys = read_xor(xor)?;
        let params = params(&e.params)?;
        let p = read_proof(proof, Some(encoding_inputs(&sys, b.budget_width)?))?;
        let (d, sched) = thresholds(t, sys.n())?;
        r.stage("schedule", "pass", sched);
        let start = Instant::now();
        let res = reg::regularize(&p, &sys, params, &d, &reg_config(e, b, seed)).map_err(regularize_failure)?;
        r.time("regularize", start);
        record_regularization(&mut r, &res);
        if let Some(prefix) = out {
            write(&with_ext(prefix, ".rho.json"), &serde_json::to_string_pretty(&res.rho.to_entries()).unwrap())?;
            write(&with_ext(prefix, ".sigma.json"), &serde_json::to_string_pretty(&res.sigma.to_entries()).unwrap())?;
        }
        Ok(())
    })();
    done(r, res)
}

#[allow(clippy::too_many_arguments)]
pub fn transform(
    proof: &Path,
    sigma: &Path,
    rho: Option<&Path>,
    xor: Option<&Path>,
    width: usize,
    support: usize,
    out: Option<&Path>,
) -> Report {
    let mut r = Report::new(
        "transform",
        json!({ "proof": proof, "sigma": sigma, "rho": rho, "xor": xor, "budget_width": width, "budget_support": support, "out": out }),
    );
    let res = (|| {
        let inputs = match xor {
            Some(x) => Some(encoding_inputs(&read_xor(x)?, width)?),
            None => None,
        };
        let mut p = read_proof(proof, inputs)?;
        if let Err(e) = p.check() {
            r.check("check_proof", false, e.to_string());
            return Ok(());
        }
        if let Some(rp) = rho {
            let rho = VarAssignment::from_entries(&read_entries(rp)?).map_err(Failure::input)?;
            p = p.restrict_vars(&rho);
        }
        let sigma = FormulaAssignment::from_entries(&read_entries(sigma)?).map_err(Failure::input)?;
        let cfg = SemanticConfig { w_max: support, ..SemanticConfig::default() };
        transform_stage(&mut r, &p, &sigma, &cfg, out)
    })();
    done(r, res)
}

fn transform_stage(
    r: &mut Report,
    p: &FregeProof,
    sigma: &FormulaAssignment,
    cfg: &SemanticConfig,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let start = Instant::now();
    let rep = match proofreg::semantic::transform(p, sigma, cfg) {
        Ok(rep) => rep,
        Err(e) => {
            r.check("transform", false, e.to_string());
            return Ok(());
        }
    };
    r.time("transform", start);
    match check_semantic(&rep.derivation, &rep.axioms, cfg) {
        Ok(()) => r.check("check_semantic", true, ""),
        Err(e) => r.check("check_semantic", false, e.to_string()),
    };
    let ratio = format!("{}/{}", rep.ratio.numer(), rep.ratio.denom());
    r.check("width_ratio", *rep.ratio.numer() <= 3 * *rep.ratio.denom(), format!("K = {ratio}"));
    r.stage(
        "transform",
        "pass",
        json!({
            "lines": rep.derivation.len(),
            "proof_width": rep.proof_width,
            "axiom_width": rep.axiom_width,
            "max_width": rep.max_width,
            "ratio": ratio,
            "refutation": rep.derivation.last().is_some_and(|l| l.is_empty()),
        }),
    );
    if let Some(o) = out {
        write(o, &rep.derivation.to_jsonl())?;
    }
    Ok(())
}

pub fn saturate(input: &Path, xor_input: bool, width: Option<usize>, max_width: usize, bw: usize) -> Report {
    let mut r = Report::new(
        "saturate",
        json!({ "input": input, "xor_input": xor_input, "width": width, "max_width": max_width, "budget_width": bw }),
    );
    let res = (|| {
        let cnf = if xor_input { read_xor(input)?.cnf_encoding(bw).map_err(Failure::input)? } else { read_cnf(input)? };
        match width {
            Some(w) => {
                let s = resolution_width_saturation(&cnf, w).map_err(Failure::input)?;
                r.stage("saturate", if s.refutable { "refutable" } else { "not-refutable" }, &s);
            }
            None => {
                let mut first = None;
                let mut per_width = Vec::new();
                for w in 0..=max_width {
                    let ok = refutable_within(&cnf, w).map_err(Failure::input)?;
                    per_width.push(json!({ "width": w, "refutable": ok }));
                    if ok {
                        first = Some(w);
                        break;
                    }
                }
                r.stage("saturate", "pass", json!({ "min_width": first, "widths": per_width }));
            }
        }
        Ok(())
    })();
    done(r, res)
}

pub fn pipeline(
    proof: &Path,
    xor: &Path,
    e: &ExpansionArgs,
    t: &ThresholdArgs,
    b: &Budgets,
    seed: u64,
    probe: usize,
) -> Report {
    let mut r = Report::new(
        "pipeline",
        json!({ "proof": proof, "xor": xor, "expansion": e, "thresholds": t, "budgets": b, "seed": seed, "probe_width": probe }),
    );
    let res = (|| {
        let sys = read_xor(xor)?;
        let params = params(&e.params)?;
        let p = read_proof(proof, Some(encoding_inputs(&sys, b.budget_width)?))?;
        if let Err(err) = p.check() {
            r.check("check_proof", false, err.to_string());
            r.stage("check_proof", "fail", err.to_string());
            return Ok(());
        }
        r.check("check_proof", true, "");
        r.stage("check_proof", "pass", json!({ "pln": p.pln().ok(), "psz": p.psz(), "depth": p.depth() }));
        let (d, sched) = thresholds(t, sys.n())?;
        r.stage("schedule", "pass", sched);
        let start = Instant::now();
        let res = reg::regularize(&p, &sys, params, &d, &reg_config(e, b, seed)).map_err(regularize_failure)?;
        r.time("regularize", start);
        record_regularization(&mut r, &res);
        if !res.completed() {
            return Ok(());
        }
        let restricted = p.restrict_vars(&res.rho);
        let cfg = SemanticConfig { w_max: b.budget_support, ..SemanticConfig::default() };
        transform_stage(&mut r, &restricted, &res.sigma, &cfg, None)?;

        let l_rho = sys.restrict(&res.rho).map_err(Failure::input)?;
        let weak = params.halved();
        let ctx =
            ClassifyContext::with_config(l_rho.clone(), weak, Strictness::Permissive, closure_cfg(b), b.budget_support)
                .map_err(classify_failure)?;
        let start = Instant::now();
        let mut cert_width = 0;
        for (f, alpha) in res.sigma.pairs() {
            match ctx.forced_axiom_certificate(f, alpha) {
                Ok(c) => {
                    let w = c.derivation.max_width();
                    cert_width = cert_width.max(w);
                    r.check(format!("axiom_derivable[{f}]"), w <= c.bound, format!("width {w}, |Ext| = {}", c.bound));
                }
                Err(err) => {
                    r.check(format!("axiom_derivable[{f}]"), false, err.to_string());
                }
            }
        }
        r.time("certificates", start);

        let start = Instant::now();
        let cnf = l_rho.cnf_encoding(b.budget_width).map_err(Failure::input)?;
        let floor = weak.ceil_cr_over(2);
        let mut min_width = None;
        let mut probed = Vec::new();
        for w in 0..=probe {
            match refutable_within(&cnf, w) {
                Ok(ok) => {
                    probed.push(w);
                    if ok {
                        min_width = Some(w);
                        break;
                    }
                }
                Err(err) => {
                    r.skip("width_probe", err.to_string());
                    break;
                }
            }
        }
        r.time("width_probe", start);
        let below = probed.iter().filter(|&&w| w < floor).count();
        let law = min_width.is_none_or(|w| w >= floor);
        r.check("width_law", law, format!("no refutation below ⌈(c/2)r/2⌉ = {floor}; {below} widths probed below it"));
        r.stage(
            "width_probe",
            "pass",
            json!({ "floor": floor, "min_refuting_width": min_width, "probed": probed, "certificate_width": cert_width }),
        );
        Ok(())
    })();
    done(r, res)
}
