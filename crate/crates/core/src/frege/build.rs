//! Proof constructions: parity refutations, depth-raising detours, random proofs.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{FregeProof, ProofBuilder, RuleName};
use crate::f2sys::{F2Error, LinSystem, Lit};
use crate::formula::{Formula, Var};

fn clause(vars: &[Var], lits: &[Lit]) -> Formula {
    Formula::or(lits.iter().map(|l| Formula::from_var(vars[l.var].clone()).power(l.positive)))
}

/// Literals excluding the pattern `bits` (bit `t` for `cols[t]`).
fn forbid(cols: &[usize], bits: u64) -> Vec<Lit> {
    cols.iter().enumerate().map(|(t, &c)| Lit::new(c, (bits >> t) & 1 == 0)).collect()
}

fn parity(bits: u64) -> bool {
    bits.count_ones() % 2 == 1
}

/// Spreads the low bits of `bits` over the positions `pos` of a wider pattern.
fn scatter(bits: u64, pos: &[usize]) -> u64 {
    pos.iter().enumerate().fold(0, |acc, (t, &p)| acc | (((bits >> t) & 1) << p))
}

struct ParityRow {
    cols: Vec<usize>,
    rhs: bool,
    /// Line ids of the clauses excluding each wrong-parity pattern.
    lines: HashMap<u64, usize>,
}

/// Resolution refutation of the canonical CNF encoding, obtained by summing
/// the equations listed in `cert` (which must sum to `0 = 1`).
///
/// Every clause of the running sum is derived from one clause per pattern of
/// the shared variables, weakened to a common shape and cut on the shared
/// variables in turn. Inputs are the whole encoding of `system`.
pub fn refute_parity(system: &LinSystem, cert: &[usize], width_limit: usize) -> Result<FregeProof, F2Error> {
    if !system.certifies_unsat(cert) {
        return Err(F2Error::Parse { line: 0, msg: "certificate does not sum to 0 = 1".into() });
    }
    let encoding = system.cnf_encoding(width_limit)?;
    let vars = system.vars().to_vec();
    let order = greedy_order(system, cert);
    let mut b = ProofBuilder::new();
    let input_line = |b: &mut ProofBuilder, lits: &[Lit]| {
        let f = clause(&vars, lits);
        match b.find(&f) {
            Some(id) if matches!(b.lines[id - 1].rule, RuleName::Input) => id,
            _ => b.input(f),
        }
    };
    let first = system.equation(order[0]).unwrap();
    let mut acc = ParityRow { cols: first.cols(), rhs: first.rhs, lines: HashMap::new() };
    for bits in 0..(1u64 << acc.cols.len()) {
        if parity(bits) != acc.rhs {
            let id = input_line(&mut b, &forbid(&acc.cols, bits));
            acc.lines.insert(bits, id);
        }
    }
    for &idx in &order[1..] {
        let e = system.equation(idx).unwrap();
        let eb = e.cols();
        let shared: Vec<usize> = acc.cols.iter().copied().filter(|c| eb.contains(c)).collect();
        let a_only: Vec<usize> = acc.cols.iter().copied().filter(|c| !eb.contains(c)).collect();
        let b_only: Vec<usize> = eb.iter().copied().filter(|c| !acc.cols.contains(c)).collect();
        let mut cols: Vec<usize> = a_only.iter().chain(&b_only).copied().collect();
        cols.sort_unstable();
        let rhs = acc.rhs ^ e.rhs;
        let pos = |set: &[usize], within: &[usize]| -> Vec<usize> {
            set.iter().map(|c| within.iter().position(|x| x == c).unwrap()).collect()
        };
        let (a_in_t, a_in_a) = (pos(&a_only, &cols), pos(&a_only, &acc.cols));
        let (b_in_t, b_in_b) = (pos(&b_only, &cols), pos(&b_only, &eb));
        let (w_in_a, w_in_b) = (pos(&shared, &acc.cols), pos(&shared, &eb));
        let mut next = ParityRow { cols: cols.clone(), rhs, lines: HashMap::new() };
        for beta in 0..(1u64 << cols.len()) {
            if parity(beta) == rhs {
                continue;
            }
            let kappa = forbid(&cols, beta);
            let beta_a = a_in_t.iter().enumerate().fold(0u64, |s, (t, &p)| s | (((beta >> p) & 1) << a_in_a[t]));
            let beta_b = b_in_t.iter().enumerate().fold(0u64, |s, (t, &p)| s | (((beta >> p) & 1) << b_in_b[t]));
            let mut layer: Vec<usize> = Vec::with_capacity(1 << shared.len());
            for gamma in 0..(1u64 << shared.len()) {
                let pa = beta_a | scatter(gamma, &w_in_a);
                let leaf = if parity(pa) != acc.rhs {
                    acc.lines[&pa]
                } else {
                    let pb = beta_b | scatter(gamma, &w_in_b);
                    input_line(&mut b, &forbid(&eb, pb))
                };
                let mut want = kappa.clone();
                want.extend(forbid(&shared, gamma));
                let target = clause(&vars, &want);
                let have = b.formula(leaf).clone();
                let id = if have == target {
                    leaf
                } else {
                    let missing: Vec<Formula> =
                        target.disjuncts().iter().filter(|d| !have.disjuncts().contains(d)).cloned().collect();
                    b.weaken(leaf, Formula::or(missing))
                };
                debug_assert_eq!(*b.formula(id), target);
                layer.push(id);
            }
            for t in (0..shared.len()).rev() {
                let v = Formula::from_var(vars[shared[t]].clone());
                let half = 1usize << t;
                layer = (0..half).map(|g| b.cut(layer[g], layer[g | half], &v)).collect();
            }
            next.lines.insert(beta, layer[0]);
        }
        acc = next;
    }
    debug_assert!(acc.cols.is_empty() && acc.rhs);
    let mut proof = b.finish(Formula::zero());
    proof.inputs = encoding.formulas();
    proof.inputs.sort();
    proof.inputs.dedup();
    Ok(proof)
}

/// Greedy summation order keeping the running support small.
fn greedy_order(system: &LinSystem, cert: &[usize]) -> Vec<usize> {
    let mut left: Vec<usize> = cert.to_vec();
    left.sort_unstable();
    let mut out = vec![left.remove(0)];
    let mut support = system.equation(out[0]).unwrap().support.clone();
    while !left.is_empty() {
        let (k, _) = left
            .iter()
            .enumerate()
            .min_by_key(|(_, &idx)| {
                let mut s = support.clone();
                s.symmetric_difference_with(&system.equation(idx).unwrap().support);
                s.count_ones(..)
            })
            .unwrap();
        let idx = left.remove(k);
        support.symmetric_difference_with(&system.equation(idx).unwrap().support);
        out.push(idx);
    }
    out
}

/// Re-derives every `every`-th disjunctive line `C` through `¬D ∨ C` and a
/// cut on an earlier disjunctive line `D`, raising the proof depth to 2.
pub fn add_detours(proof: &FregeProof, every: usize) -> FregeProof {
    let mut b = ProofBuilder::new();
    let mut map = Vec::with_capacity(proof.lines.len());
    let mut last_or: Option<usize> = None;
    for (k, line) in proof.lines.iter().enumerate() {
        let prem: Vec<usize> = line.premises.iter().map(|j| map[j - 1]).collect();
        let s = line.sub.clone();
        let mut id = match line.rule {
            RuleName::Input => b.input(line.formula.clone()),
            RuleName::ExcludedMiddle => b.excluded_middle(s.p.unwrap()),
            RuleName::Weakening => b.weaken(prem[0], s.q.unwrap()),
            RuleName::Cut => b.cut_with(prem[0], prem[1], s.p.unwrap(), s.q.unwrap(), s.r.unwrap()),
            RuleName::Contraction => b.contraction(prem[0]),
            RuleName::Associative => match (s.p, s.q, s.r) {
                (Some(p), Some(q), Some(r)) => b.associative(prem[0], p, q, r),
                _ => b.contraction(prem[0]),
            },
        };
        if every > 0 && (k + 1) % every == 0 {
            if let Some(d) = last_or {
                let df = b.formula(d).clone();
                let c = b.formula(id).clone();
                if df != c && !c.is_const() {
                    let w = b.weaken(id, Formula::neg(&df));
                    id = b.cut_with(d, w, df, Formula::zero(), c);
                }
            }
        }
        if b.formula(id).is_or() {
            last_or = Some(id);
        }
        map.push(id);
    }
    let mut out = b.finish(proof.target.clone());
    out.inputs = proof.inputs.clone();
    out
}

/// A random literal or small disjunction, occasionally negated, over `vars`.
pub fn random_formula<R: Rng>(rng: &mut R, vars: &[Var], max_depth: usize) -> Formula {
    let atom = |rng: &mut R| Formula::from_var(vars[rng.gen_range(0..vars.len())].clone()).power(rng.gen());
    if max_depth == 0 || rng.gen_bool(0.4) {
        return atom(rng);
    }
    let n = rng.gen_range(2..=3);
    let kids: Vec<Formula> = (0..n).map(|_| random_formula(rng, vars, max_depth - 1)).collect();
    let f = Formula::or(kids);
    if max_depth >= 2 && rng.gen_bool(0.3) {
        Formula::neg(&f)
    } else {
        f
    }
}

/// A random valid proof over `x1..x{nvars}` with at most `max_lines` lines.
pub fn random_proof<R: Rng>(rng: &mut R, nvars: usize, max_lines: usize) -> FregeProof {
    let vars: Vec<Var> = (1..=nvars).map(|i| Var::new(&format!("x{i}"))).collect();
    let mut b = ProofBuilder::new();
    let n_inputs = rng.gen_range(1..=3).min(max_lines);
    for _ in 0..n_inputs {
        let f = random_formula(rng, &vars, 2);
        b.input(f);
    }
    while b.len() < max_lines {
        let roll: f64 = rng.gen();
        let pick = |rng: &mut R, b: &ProofBuilder| rng.gen_range(1..=b.len());
        if roll < 0.15 {
            b.excluded_middle(random_formula(rng, &vars, 1));
        } else if roll < 0.4 {
            let prem = pick(rng, &b);
            b.weaken(prem, random_formula(rng, &vars, 1));
        } else if roll < 0.5 {
            let prem = pick(rng, &b);
            let ds = b.formula(prem).disjuncts().to_vec();
            if ds.len() >= 3 {
                let mut ds = ds;
                ds.shuffle(rng);
                let cut1 = rng.gen_range(1..ds.len() - 1);
                let cut2 = rng.gen_range(cut1 + 1..ds.len());
                let p = Formula::or(ds[..cut1].iter().cloned());
                let q = Formula::or(ds[cut1..cut2].iter().cloned());
                let r = Formula::or(ds[cut2..].iter().cloned());
                b.associative(prem, p, q, r);
            } else {
                b.contraction(prem);
            }
        } else {
            if b.len() + 2 > max_lines {
                break;
            }
            let a = pick(rng, &b);
            let ds = b.formula(a).disjuncts().to_vec();
            if ds.is_empty() {
                continue;
            }
            let p = ds[rng.gen_range(0..ds.len())].clone();
            let np = Formula::neg(&p);
            let with_neg: Vec<usize> = (1..=b.len())
                .filter(|&j| {
                    let f = b.formula(j);
                    if np.is_or() {
                        np.disjuncts().iter().all(|d| f.disjuncts().contains(d))
                    } else {
                        f.disjuncts().contains(&np)
                    }
                })
                .collect();
            let other = if with_neg.is_empty() || rng.gen_bool(0.3) {
                let base = pick(rng, &b);
                b.weaken(base, np)
            } else {
                with_neg[rng.gen_range(0..with_neg.len())]
            };
            b.cut(a, other, &p);
        }
    }
    b.finish_last()
}
