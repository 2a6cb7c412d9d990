use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Doubling growth rule: `m(0) = 0`, `m(1) = 1`, `m(i) = 2^(i-1) + 1`.
pub fn growth(level: usize) -> usize {
    match level {
        0 => 0,
        1 => 1,
        i => (1usize << (i - 1)) + 1,
    }
}

/// Clenshaw–Curtis abscissas `-cos(pi (j-1)/(m-1))`, ascending.
pub fn cc_nodes(m: usize) -> Result<Vec<f64>> {
    match m {
        0 => Err(Error::InvalidArgument("node count must be positive".into())),
        1 => Ok(vec![0.0]),
        m if m % 2 == 0 => Err(Error::InvalidArgument(format!(
            "even node count {m} breaks nesting of Clenshaw–Curtis sets"
        ))),
        m => Ok((0..m).map(|j| NodeKey::reduced(j as u64, (m - 1) as u64).abscissa()).collect()),
    }
}

/// Exact identity of a Clenshaw–Curtis node: `t = num/den` in lowest terms
/// with abscissa `-cos(pi t)`. Equal across every level that contains it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeKey {
    pub num: u64,
    pub den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl NodeKey {
    pub fn reduced(num: u64, den: u64) -> Self {
        let g = gcd(num, den).max(1);
        Self { num: num / g, den: den / g }
    }

    /// Key of node `j` (0-based) on level `level`.
    pub fn at(level: usize, j: usize) -> Self {
        let m = growth(level);
        assert!(j < m, "node index {j} out of range for level {level}");
        if m == 1 {
            Self { num: 1, den: 2 }
        } else {
            Self::reduced(j as u64, (m - 1) as u64)
        }
    }

    /// `-cos(pi t)` written as `sin(pi (2t - 1) / 2)` so that the centre and
    /// end points are exact and the set is symmetric.
    pub fn abscissa(&self) -> f64 {
        let (n, d) = (self.num as f64, self.den as f64);
        (PI * (2.0 * n - d) / (2.0 * d)).sin()
    }
}

impl Ord for NodeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl PartialOrd for NodeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl std::str::FromStr for NodeKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (n, d) = s
            .split_once('/')
            .ok_or_else(|| Error::InvalidArgument(format!("bad node key `{s}`")))?;
        let num: u64 = n.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad node key `{s}`")))?;
        let den: u64 = d.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad node key `{s}`")))?;
        if den == 0 || num > den {
            return Err(Error::InvalidArgument(format!("bad node key `{s}`")));
        }
        let key = Self::reduced(num, den);
        if key != (Self { num, den }) {
            return Err(Error::InvalidArgument(format!("node key `{s}` is not in lowest terms")));
        }
        Ok(key)
    }
}

/// One-dimensional Lagrange interpolation on a Clenshaw–Curtis level, in
/// barycentric form.
#[derive(Clone, Debug)]
pub struct LevelRule {
    pub nodes: Vec<f64>,
    pub keys: Vec<NodeKey>,
    bary: Vec<f64>,
    /// Quadrature weights against the uniform density on [-1, 1].
    pub weights: Vec<f64>,
}

impl LevelRule {
    pub fn new(level: usize) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidArgument("levels start at 1".into()));
        }
        let m = growth(level);
        let keys: Vec<NodeKey> = (0..m).map(|j| NodeKey::at(level, j)).collect();
        let nodes: Vec<f64> = keys.iter().map(NodeKey::abscissa).collect();
        // Chebyshev–Gauss–Lobatto barycentric weights
        let bary = if m == 1 {
            vec![1.0]
        } else {
            (0..m)
                .map(|j| {
                    let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                    if j == 0 || j == m - 1 {
                        0.5 * s
                    } else {
                        s
                    }
                })
                .collect()
        };
        let weights = uniform_weights(&keys)?;
        Ok(Self { nodes, keys, bary, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of every Lagrange basis polynomial at `z`.
    pub fn basis(&self, z: Complex64) -> Vec<Complex64> {
        let m = self.nodes.len();
        if m == 1 {
            return vec![Complex64::new(1.0, 0.0)];
        }
        if let Some(j) = self.nodes.iter().position(|&x| z.im == 0.0 && z.re == x) {
            let mut out = vec![Complex64::new(0.0, 0.0); m];
            out[j] = Complex64::new(1.0, 0.0);
            return out;
        }
        let terms: Vec<Complex64> = self.nodes.iter().zip(&self.bary).map(|(&x, &w)| w / (z - x)).collect();
        let total: Complex64 = terms.iter().sum();
        terms.into_iter().map(|t| t / total).collect()
    }
}

/// Weights `w_j = ∫ l_j(y) dy / 2` from the Chebyshev moment system
/// `sum_j w_j T_k(y_j) = ∫ T_k / 2`, `k < m`.
fn uniform_weights(keys: &[NodeKey]) -> Result<Vec<f64>> {
    let m = keys.len();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    // T_k(-cos(pi t)) = cos(k pi (1 - t))
    let a = DMatrix::from_fn(m, m, |k, j| {
        let t = keys[j].num as f64 / keys[j].den as f64;
        (k as f64 * PI * (1.0 - t)).cos()
    });
    let b = DVector::from_fn(m, |k, _| if k % 2 == 0 { 1.0 / (1.0 - (k * k) as f64) } else { 0.0 });
    let w = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidArgument("singular moment system".into()))?;
    Ok(w.iter().copied().collect())
}
