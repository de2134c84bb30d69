//! Live and forced formulas relative to a weakly expanding linear system.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::f2sys::LinSystem;
use crate::formula::{Formula, FormulaError, DEFAULT_MAX_SUPPORT};
use crate::graph::{BipartiteGraph, CheckMode, ClosureConfig, ExpanderParams, ExpansionOutcome, GraphError};
use crate::semantic::{SemanticConfig, SemanticDerivation, SemanticError, SemanticLine};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Classification {
    Live,
    Forced(bool),
}

impl Classification {
    pub fn is_live(self) -> bool {
        self == Classification::Live
    }

    pub fn forced_value(self) -> Option<bool> {
        match self {
            Classification::Forced(b) => Some(b),
            Classification::Live => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Strictness {
    /// Requires a weak-expansion certificate and `w(C) ≤ cr/2`.
    Strict,
    /// Skips both requirements and records violations of the width bound.
    Permissive,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("{formula} has width {width}, above cr/2")]
    WidthBound { formula: Formula, width: usize },
    #[error("the system is not certified weakly expanding: {0:?}")]
    NotCertified(ExpansionOutcome),
    #[error("the equations in the closure of {0} have no common solution")]
    VacuousClosure(Formula),
    #[error("{0} is not forced")]
    NotForced(Formula),
    #[error("certificate line width {width} exceeds |Ext| = {bound}")]
    WidthOverflow { width: usize, bound: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

/// Classification together with the data it was computed from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassifyReport {
    pub class: Classification,
    /// `Cl(vars(C))` as equation indices.
    pub closure: Vec<usize>,
    /// Semantic width, or the syntactic count when `width_exact` is false.
    pub width: usize,
    pub width_exact: bool,
    /// Whether `w(C) ≤ cr/2`.
    pub width_ok: bool,
}

pub struct ClassifyContext {
    system: LinSystem,
    params: ExpanderParams,
    graph: BipartiteGraph,
    mode: Strictness,
    closure_cfg: ClosureConfig,
    max_support: usize,
    memo: Mutex<HashMap<u64, ClassifyReport>>,
}

impl ClassifyContext {
    pub fn new(system: LinSystem, params: ExpanderParams, mode: Strictness) -> Result<Self, ClassifyError> {
        Self::with_config(system, params, mode, ClosureConfig::default(), DEFAULT_MAX_SUPPORT)
    }

    pub fn with_config(
        system: LinSystem,
        params: ExpanderParams,
        mode: Strictness,
        closure_cfg: ClosureConfig,
        max_support: usize,
    ) -> Result<Self, ClassifyError> {
        let graph = system.incidence_graph();
        if mode == Strictness::Strict {
            let outcome = graph.is_weak_expander(&params, CheckMode::Exhaustive)?;
            if !outcome.is_certified() {
                return Err(ClassifyError::NotCertified(outcome));
            }
        }
        Ok(ClassifyContext { system, params, graph, mode, closure_cfg, max_support, memo: Mutex::new(HashMap::new()) })
    }

    pub fn system(&self) -> &LinSystem {
        &self.system
    }

    pub fn params(&self) -> &ExpanderParams {
        &self.params
    }

    pub fn graph(&self) -> &BipartiteGraph {
        &self.graph
    }

    pub fn mode(&self) -> Strictness {
        self.mode
    }

    pub fn closure_config(&self) -> ClosureConfig {
        self.closure_cfg
    }

    pub fn max_support(&self) -> usize {
        self.max_support
    }

    /// Columns of the variables of `f` that occur in the system.
    pub fn columns(&self, f: &Formula) -> Vec<usize> {
        f.vars().iter().filter_map(|v| self.system.col(v)).collect()
    }

    /// `Cl(vars(C))`.
    pub fn closure_of(&self, f: &Formula) -> Result<Vec<usize>, ClassifyError> {
        Ok(self.graph.closure_with(&self.columns(f), self.params.r, self.closure_cfg)?)
    }

    /// `|Ext(vars(C))|`, counting variables outside the system as members of `J`.
    pub fn extension_size(&self, f: &Formula) -> Result<usize, ClassifyError> {
        let cols = self.columns(f);
        let outside = f.vars().len() - cols.len();
        Ok(self.graph.extension_with(&cols, self.params.r, self.closure_cfg)?.len() + outside)
    }

    pub fn classify(&self, f: &Formula) -> Result<Classification, ClassifyError> {
        Ok(self.report(f)?.class)
    }

    pub fn report(&self, f: &Formula) -> Result<ClassifyReport, ClassifyError> {
        if let Some(r) = self.memo.lock().unwrap().get(&f.id()) {
            return Ok(r.clone());
        }
        let r = self.compute(f)?;
        self.memo.lock().unwrap().insert(f.id(), r.clone());
        Ok(r)
    }

    fn compute(&self, f: &Formula) -> Result<ClassifyReport, ClassifyError> {
        if let Some(b) = f.as_const() {
            return Ok(ClassifyReport {
                class: Classification::Forced(b),
                closure: vec![],
                width: 0,
                width_exact: true,
                width_ok: true,
            });
        }
        let (width, width_exact) = f.width_or_bound(self.max_support);
        let width_ok = self.params.within(width, 2);
        if self.mode == Strictness::Strict && !width_ok {
            return Err(ClassifyError::WidthBound { formula: f.clone(), width });
        }
        let closure = self.closure_of(f)?;
        let table = f.table(self.max_support)?;
        let vars = f.vars();
        let known: Vec<(usize, usize)> =
            vars.iter().enumerate().filter_map(|(i, v)| self.system.col(v).map(|c| (i, c))).collect();
        let cols: Vec<usize> = known.iter().map(|k| k.1).collect();
        let constraints = self
            .system
            .subsystem(&closure)
            .projection(&cols)
            .ok_or_else(|| ClassifyError::VacuousClosure(f.clone()))?;
        let constraints: Vec<(u64, bool)> = constraints
            .into_iter()
            .map(|(mask, rhs)| {
                let m = known.iter().enumerate().fold(0u64, |m, (t, (i, _))| m | (((mask >> t) & 1) << i));
                (m, rhs)
            })
            .collect();
        let mut seen = [false; 2];
        for a in 0..table.rows() {
            if constraints.iter().all(|&(m, rhs)| ((a as u64 & m).count_ones() % 2 == 1) == rhs) {
                seen[table.get(a) as usize] = true;
                if seen[0] && seen[1] {
                    break;
                }
            }
        }
        let class = match seen {
            [true, true] => Classification::Live,
            [false, true] => Classification::Forced(true),
            [true, false] => Classification::Forced(false),
            [false, false] => return Err(ClassifyError::VacuousClosure(f.clone())),
        };
        Ok(ClassifyReport { class, closure, width, width_exact, width_ok })
    }

    /// Forced, with every proper subformula live.
    pub fn minimally_forced(&self, f: &Formula) -> Result<bool, ClassifyError> {
        if self.classify(f)?.is_live() {
            return Ok(false);
        }
        for g in f.subformulas() {
            if g != *f && !self.classify(&g)?.is_live() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Semantic derivation of `C^α` from the equations of `L^{Cl(vars(C))}`:
    /// the equations are conjoined one by one, then weakened to `C^α`.
    pub fn forced_axiom_certificate(&self, f: &Formula, alpha: bool) -> Result<Certificate, ClassifyError> {
        if self.classify(f)? != Classification::Forced(alpha) {
            return Err(ClassifyError::NotForced(f.clone()));
        }
        let w_max = self.max_support;
        let mut d = SemanticDerivation::new();
        let mut axioms = Vec::new();
        if f.is_const() {
            return Ok(Certificate { derivation: d, axioms, bound: 0 });
        }
        let bound = self.extension_size(f)?;
        let closure = self.closure_of(f)?;
        let mut acc: Option<(usize, SemanticLine)> = None;
        for idx in closure {
            let e = self.system.equation(idx).expect("closure lists system equations");
            let line = SemanticLine::from_equation(self.system.vars(), e);
            axioms.push(line.clone());
            let id = d.axiom(line.clone(), format!("eq:{idx}"));
            acc = Some(match acc {
                None => (id, line),
                Some((prev, conj)) => {
                    let both = conj.intersect(&line, w_max)?;
                    (d.rule(both.clone(), vec![prev, id]), both)
                }
            });
        }
        let goal = SemanticLine::from_formula(&f.power(alpha), w_max)?;
        d.rule(goal, acc.map(|a| vec![a.0]).unwrap_or_default());
        let width = d.max_width();
        if width > bound {
            return Err(ClassifyError::WidthOverflow { width, bound });
        }
        crate::semantic::check_semantic(&d, &axioms, &SemanticConfig { c_max: 2, w_max })?;
        Ok(Certificate { derivation: d, axioms, bound })
    }
}

/// A checked derivation of a forced value, with its axiom lines and the
/// width bound `|Ext(vars(C))|`.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub derivation: SemanticDerivation,
    pub axioms: Vec<SemanticLine>,
    pub bound: usize,
}
