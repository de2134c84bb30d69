use super::Var;

/// Truth table of a Boolean function over an ordered list of variables.
///
/// Row `a` assigns bit `i` of `a` to `vars[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TruthTable {
    vars: Vec<Var>,
    bits: Vec<u64>,
}

const LOW_MASKS: [u64; 6] = [
    0x5555_5555_5555_5555,
    0x3333_3333_3333_3333,
    0x0f0f_0f0f_0f0f_0f0f,
    0x00ff_00ff_00ff_00ff,
    0x0000_ffff_0000_ffff,
    0x0000_0000_ffff_ffff,
];

fn words_for(n: usize) -> usize {
    if n <= 6 {
        1
    } else {
        1 << (n - 6)
    }
}

fn tail_mask(n: usize) -> u64 {
    if n >= 6 {
        u64::MAX
    } else {
        (1u64 << (1 << n)) - 1
    }
}

impl TruthTable {
    pub fn constant(vars: Vec<Var>, value: bool) -> Self {
        let n = vars.len();
        let fill = if value { tail_mask(n) } else { 0 };
        TruthTable { bits: vec![fill; words_for(n)], vars }
    }

    /// The projection onto `vars[i]`.
    pub fn projection(vars: Vec<Var>, i: usize) -> Self {
        let n = vars.len();
        assert!(i < n);
        let mut bits = vec![0u64; words_for(n)];
        if i < 6 {
            let pattern = !LOW_MASKS[i] & tail_mask(n);
            bits.iter_mut().for_each(|w| *w = pattern);
        } else {
            let stride = 1usize << (i - 6);
            for (w, word) in bits.iter_mut().enumerate() {
                if w & stride != 0 {
                    *word = u64::MAX;
                }
            }
        }
        TruthTable { vars, bits }
    }

    /// Builds a table from a row predicate.
    pub fn from_fn(vars: Vec<Var>, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut t = TruthTable::constant(vars, false);
        for a in 0..t.rows() {
            if f(a) {
                t.set(a, true);
            }
        }
        t
    }

    pub fn from_words(vars: Vec<Var>, mut bits: Vec<u64>) -> Option<Self> {
        let n = vars.len();
        if bits.len() != words_for(n) {
            return None;
        }
        bits[0] &= if n < 6 { tail_mask(n) } else { u64::MAX };
        Some(TruthTable { vars, bits })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    pub fn rows(&self) -> usize {
        1usize << self.vars.len()
    }

    pub fn get(&self, a: usize) -> bool {
        (self.bits[a >> 6] >> (a & 63)) & 1 == 1
    }

    pub fn set(&mut self, a: usize, v: bool) {
        if v {
            self.bits[a >> 6] |= 1 << (a & 63);
        } else {
            self.bits[a >> 6] &= !(1 << (a & 63));
        }
    }

    pub fn not(&self) -> Self {
        let m = tail_mask(self.arity());
        TruthTable { vars: self.vars.clone(), bits: self.bits.iter().map(|w| !w & m).collect() }
    }

    fn zip(&self, other: &Self, op: impl Fn(u64, u64) -> u64) -> Self {
        assert_eq!(self.vars, other.vars, "truth tables over different variables");
        TruthTable {
            vars: self.vars.clone(),
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| op(*a, *b)).collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a & b)
    }

    pub fn or(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a | b)
    }

    pub fn or_assign(&mut self, other: &Self) {
        assert_eq!(self.vars, other.vars);
        self.bits.iter_mut().zip(&other.bits).for_each(|(a, b)| *a |= b);
    }

    pub fn and_assign(&mut self, other: &Self) {
        assert_eq!(self.vars, other.vars);
        self.bits.iter_mut().zip(&other.bits).for_each(|(a, b)| *a &= b);
    }

    pub fn is_false(&self) -> bool {
        self.bits.iter().all(|w| *w == 0)
    }

    pub fn is_true(&self) -> bool {
        let m = tail_mask(self.arity());
        self.bits.iter().all(|w| *w == m)
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Set inclusion of the satisfying rows.
    pub fn implies(&self, other: &Self) -> bool {
        assert_eq!(self.vars, other.vars);
        self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    /// Whether flipping `vars[i]` changes the value on some row.
    pub fn depends_on(&self, i: usize) -> bool {
        if i < 6 {
            let s = 1u32 << i;
            self.bits.iter().any(|w| ((w >> s) ^ w) & LOW_MASKS[i] & tail_mask(self.arity()) != 0)
        } else {
            let stride = 1usize << (i - 6);
            (0..self.bits.len()).filter(|w| w & stride == 0).any(|w| self.bits[w] != self.bits[w | stride])
        }
    }

    /// Indices of the variables the function depends on.
    pub fn support(&self) -> Vec<usize> {
        (0..self.arity()).filter(|&i| self.depends_on(i)).collect()
    }

    pub fn width(&self) -> usize {
        self.support().len()
    }

    /// Re-expresses the table over `target`, a sorted superset or subset of the
    /// current variables; dropped variables must be dummies.
    pub fn reindex(&self, target: &[Var]) -> Self {
        let pos: Vec<Option<usize>> = self.vars.iter().map(|v| target.iter().position(|t| t == v)).collect();
        for (i, p) in pos.iter().enumerate() {
            assert!(p.is_some() || !self.depends_on(i), "dropping an essential variable");
        }
        TruthTable::from_fn(target.to_vec(), |a| {
            let mut src = 0usize;
            for (i, p) in pos.iter().enumerate() {
                if let Some(j) = p {
                    if (a >> j) & 1 == 1 {
                        src |= 1 << i;
                    }
                }
            }
            self.get(src)
        })
    }

    /// Removes every variable the function does not depend on.
    pub fn reduce(&self) -> Self {
        let keep: Vec<Var> = self.support().into_iter().map(|i| self.vars[i].clone()).collect();
        if keep.len() == self.vars.len() {
            return self.clone();
        }
        self.reindex(&keep)
    }

    /// Fixes `vars[i]` to `v` and drops it.
    pub fn cofactor(&self, i: usize, v: bool) -> Self {
        let mut vars = self.vars.clone();
        vars.remove(i);
        let low = (1usize << i) - 1;
        TruthTable::from_fn(vars, |a| {
            let src = (a & low) | ((a & !low) << 1) | ((v as usize) << i);
            self.get(src)
        })
    }
}
