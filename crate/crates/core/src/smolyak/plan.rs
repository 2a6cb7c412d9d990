use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

use super::nodes::{growth, LevelRule, NodeKey};

/// Level restriction rule. All three use the doubling growth on
/// Clenshaw–Curtis knots so that every plan is nested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    /// `sum (i_n - 1) <= w`.
    Smolyak,
    /// `sum (m(i_n) - 1) <= w`: the tensor spaces stay inside total degree `w`.
    TotalDegree,
    /// `prod m(i_n) <= w + 1`.
    HyperbolicCross,
}

impl Rule {
    fn admits(self, levels: &[usize], w: usize) -> bool {
        match self {
            Rule::Smolyak => levels.iter().map(|i| i - 1).sum::<usize>() <= w,
            Rule::TotalDegree => levels.iter().map(|&i| growth(i) - 1).sum::<usize>() <= w,
            Rule::HyperbolicCross => levels.iter().map(|&i| growth(i)).product::<usize>() <= w + 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Smolyak => "SM",
            Rule::TotalDegree => "TD",
            Rule::HyperbolicCross => "HC",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SM" => Ok(Rule::Smolyak),
            "TD" => Ok(Rule::TotalDegree),
            "HC" => Ok(Rule::HyperbolicCross),
            other => Err(Error::InvalidArgument(format!("unknown sparse-grid rule `{other}`"))),
        }
    }
}

/// Level multi-index `i` with `i_n >= 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

/// Cost `f(p)` of polynomial degree `p` under the doubling rule.
pub fn degree_cost(p: usize) -> usize {
    match p {
        0 => 0,
        1 => 1,
        p => (usize::BITS - (p - 1).leading_zeros()) as usize,
    }
}

/// Admissible level multi-indices, lexicographically sorted.
pub fn index_set(rule: Rule, w: usize, dim: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut cur = vec![1usize; dim];
    enumerate(rule, w, dim, 0, &mut cur, &mut out);
    out.sort();
    out
}

fn enumerate(rule: Rule, w: usize, dim: usize, pos: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    if pos == dim {
        if rule.admits(cur, w) {
            out.push(MultiIndex(cur.clone()));
        }
        return;
    }
    let mut level = 1;
    loop {
        cur[pos] = level;
        // all later entries at 1 is the cheapest completion
        let probe: Vec<usize> = cur.iter().enumerate().map(|(n, &v)| if n > pos { 1 } else { v }).collect();
        if !rule.admits(&probe, w) {
            break;
        }
        enumerate(rule, w, dim, pos + 1, cur, out);
        level += 1;
    }
    cur[pos] = 1;
}

/// Polynomial degree vectors reproduced exactly by the plan: the union of the
/// boxes `p <= m(i) - 1` over admissible levels.
pub fn polynomial_index_set(rule: Rule, w: usize, dim: usize) -> Vec<Vec<usize>> {
    let mut set = BTreeSet::new();
    for idx in index_set(rule, w, dim) {
        let maxdeg: Vec<usize> = idx.0.iter().map(|&i| growth(i) - 1).collect();
        let mut cur = vec![0usize; dim];
        loop {
            set.insert(cur.clone());
            let mut n = 0;
            while n < dim {
                cur[n] += 1;
                if cur[n] <= maxdeg[n] {
                    break;
                }
                cur[n] = 0;
                n += 1;
            }
            if n == dim {
                break;
            }
        }
    }
    set.into_iter().collect()
}

/// Canonical identity of a sparse-grid knot.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KnotKey(pub Vec<NodeKey>);

impl KnotKey {
    pub fn point(&self) -> Vec<f64> {
        self.0.iter().map(NodeKey::abscissa).collect()
    }
}

impl fmt::Display for KnotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, k) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for KnotKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(',').map(str::parse).collect::<Result<Vec<_>>>().map(KnotKey)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorTerm {
    pub levels: Vec<usize>,
    pub coefficient: i64,
}

/// Combination-technique form of the Smolyak operator.
#[derive(Clone, Debug)]
pub struct SparseGridPlan {
    rule: Rule,
    level: usize,
    dim: usize,
    terms: Vec<TensorTerm>,
    knots: Vec<KnotKey>,
    rules: Vec<LevelRule>,
}

impl SparseGridPlan {
    pub fn build(rule: Rule, level: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("sparse grid dimension must be >= 1".into()));
        }
        let set = index_set(rule, level, dim);
        let members: BTreeSet<&MultiIndex> = set.iter().collect();
        let mut terms = Vec::new();
        for idx in &set {
            let mut c = 0i64;
            for mask in 0u32..(1 << dim) {
                let shifted: Vec<usize> = (0..dim).map(|n| idx.0[n] + ((mask >> n) & 1) as usize).collect();
                if members.contains(&MultiIndex(shifted)) {
                    c += if mask.count_ones() % 2 == 0 { 1 } else { -1 };
                }
            }
            if c != 0 {
                terms.push(TensorTerm { levels: idx.0.clone(), coefficient: c });
            }
        }
        let max_level = set.iter().flat_map(|i| i.0.iter().copied()).max().unwrap_or(1);
        let rules = (1..=max_level).map(LevelRule::new).collect::<Result<Vec<_>>>()?;

        let mut knots = BTreeSet::new();
        for idx in &set {
            for_each_tensor_point(&idx.0, &rules, |cols| {
                knots.insert(KnotKey(cols.iter().map(|&(lvl, j)| rules[lvl - 1].keys[j]).collect()));
            });
        }
        Ok(Self { rule, level, dim, terms, knots: knots.into_iter().collect(), rules })
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[TensorTerm] {
        &self.terms
    }

    /// Knots in canonical (lexicographic abscissa) order.
    pub fn knots(&self) -> &[KnotKey] {
        &self.knots
    }

    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    pub fn level_rule(&self, level: usize) -> &LevelRule {
        &self.rules[level - 1]
    }

    /// Resolves every tensor term against stored knot values.
    pub fn bind(&self, store: &SurplusStore) -> Result<Interpolant> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let mut values = Vec::new();
            let mut missing = None;
            for_each_tensor_point(&t.levels, &self.rules, |cols| {
                let key = KnotKey(cols.iter().map(|&(lvl, j)| self.rules[lvl - 1].keys[j]).collect());
                match store.get(&key) {
                    Some(v) => values.push(v),
                    None => missing = Some(key),
                }
            });
            if let Some(key) = missing {
                return Err(Error::IncompleteStore(key.to_string()));
            }
            terms.push((t.coefficient as f64, t.levels.clone(), values));
        }
        Ok(Interpolant { dim: self.dim, rules: self.rules.clone(), terms })
    }

    pub fn interpolate(&self, store: &SurplusStore, y: &[f64]) -> Result<f64> {
        Ok(self.bind(store)?.eval(y))
    }

    /// Expectation under the uniform density on `[-1, 1]^N`.
    pub fn integrate(&self, store: &SurplusStore) -> Result<f64> {
        Ok(self.bind(store)?.integrate())
    }

    pub fn to_manifest(&self) -> String {
        let mut s = String::new();
        s.push_str("# sparse-grid plan\n");
        s.push_str(&format!("rule {}\nlevel {}\ndim {}\nknots {}\n", self.rule, self.level, self.dim, self.knots.len()));
        for k in &self.knots {
            let coords: Vec<String> = k.point().iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&format!("knot {k} {}\n", coords.join(" ")));
        }
        s
    }

    /// Rebuilds a plan from a manifest and checks its knot list.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut rule = None;
        let mut level = None;
        let mut dim = None;
        let mut count = None;
        let mut knots = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |reason: String| Error::Parse { line: n + 1, reason };
            let mut it = line.split_whitespace();
            let tag = it.next().unwrap_or_default();
            let val = it.next().ok_or_else(|| perr(format!("`{tag}` needs a value")))?;
            match tag {
                "rule" => rule = Some(val.parse::<Rule>()?),
                "level" => level = Some(val.parse::<usize>().map_err(|e| perr(e.to_string()))?),
                "dim" => dim = Some(val.parse::<usize>().map_err(|e| perr(e.to_string()))?),
                "knots" => count = Some(val.parse::<usize>().map_err(|e| perr(e.to_string()))?),
                "knot" => knots.push(val.parse::<KnotKey>().map_err(|e| perr(e.to_string()))?),
                other => return Err(perr(format!("unknown entry `{other}`"))),
            }
        }
        let missing = |f: &str| Error::Config(format!("manifest lacks `{f}`"));
        let plan = Self::build(rule.ok_or_else(|| missing("rule"))?, level.ok_or_else(|| missing("level"))?, dim.ok_or_else(|| missing("dim"))?)?;
        if count.is_some_and(|c| c != knots.len()) || knots != plan.knots {
            return Err(Error::Config("manifest knot list does not match the plan".into()));
        }
        Ok(plan)
    }
}

fn for_each_tensor_point(levels: &[usize], rules: &[LevelRule], mut f: impl FnMut(&[(usize, usize)])) {
    let dim = levels.len();
    let sizes: Vec<usize> = levels.iter().map(|&l| rules[l - 1].len()).collect();
    let mut cur = vec![0usize; dim];
    let mut cols: Vec<(usize, usize)> = levels.iter().map(|&l| (l, 0)).collect();
    loop {
        for n in 0..dim {
            cols[n].1 = cur[n];
        }
        f(&cols);
        // last dimension varies fastest
        let mut n = dim;
        loop {
            if n == 0 {
                return;
            }
            n -= 1;
            cur[n] += 1;
            if cur[n] < sizes[n] {
                break;
            }
            cur[n] = 0;
        }
    }
}

/// Evaluated quantity per knot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurplusStore {
    values: BTreeMap<KnotKey, f64>,
}

impl SurplusStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Evaluates `f` once on every knot of the plan.
    pub fn evaluate(plan: &SparseGridPlan, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = plan.knots().iter().map(|k| (k.clone(), f(&k.point()))).collect();
        Self { values }
    }

    pub fn insert(&mut self, key: KnotKey, value: f64) -> Option<f64> {
        self.values.insert(key, value)
    }

    pub fn get(&self, key: &KnotKey) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_complete(&self, plan: &SparseGridPlan) -> bool {
        plan.knots().iter().all(|k| self.values.contains_key(k))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&KnotKey, f64)> {
        self.values.iter().map(|(k, v)| (k, *v))
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} {v:?}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |reason: String| Error::Parse { line: n + 1, reason };
            let (k, v) = line.split_once(' ').ok_or_else(|| perr("expected `<knot> <value>`".into()))?;
            let key = k.parse::<KnotKey>().map_err(|e| perr(e.to_string()))?;
            let value = v.trim().parse::<f64>().map_err(|e| perr(e.to_string()))?;
            values.insert(key, value);
        }
        Ok(Self { values })
    }
}

/// A plan bound to knot values; cheap to evaluate repeatedly.
#[derive(Clone, Debug)]
pub struct Interpolant {
    dim: usize,
    rules: Vec<LevelRule>,
    terms: Vec<(f64, Vec<usize>, Vec<f64>)>,
}

impl Interpolant {
    pub fn eval(&self, y: &[f64]) -> f64 {
        let z: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.eval_complex(&z).re
    }

    pub fn eval_complex(&self, z: &[Complex64]) -> Complex64 {
        assert_eq!(z.len(), self.dim, "evaluation point has wrong dimension");
        let max_level = self.rules.len();
        // basis[level-1][dim] -> values
        let basis: Vec<Vec<Vec<Complex64>>> = (0..max_level)
            .map(|l| z.iter().map(|&zn| self.rules[l].basis(zn)).collect())
            .collect();
        let mut total = Complex64::new(0.0, 0.0);
        for (c, levels, values) in &self.terms {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut pos = 0;
            for_each_tensor_point(levels, &self.rules, |cols| {
                let mut w = Complex64::new(1.0, 0.0);
                for (n, &(lvl, j)) in cols.iter().enumerate() {
                    w *= basis[lvl - 1][n][j];
                }
                acc += w * values[pos];
                pos += 1;
            });
            total += acc * *c;
        }
        total
    }

    pub fn integrate(&self) -> f64 {
        let mut total = 0.0;
        for (c, levels, values) in &self.terms {
            let mut acc = 0.0;
            let mut pos = 0;
            for_each_tensor_point(levels, &self.rules, |cols| {
                let w: f64 = cols.iter().map(|&(lvl, j)| self.rules[lvl - 1].weights[j]).product();
                acc += w * values[pos];
                pos += 1;
            });
            total += c * acc;
        }
        total
    }
}
