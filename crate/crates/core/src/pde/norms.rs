//! Discrete Sobolev norms used to feed the perturbation bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Subdomain;

use super::grid::{Grid, GridField};

/// Piecewise-`H^2` norm `|u|_H = |u|_{H^1(U)} + sum_k |u|_{H^2(U_k)}`, with
/// the sum-of-norms convention for the derivative terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HNorm {
    pub h1: f64,
    pub h2: [f64; 3],
}

impl HNorm {
    pub fn total(&self) -> f64 {
        self.h1 + self.h2.iter().sum::<f64>()
    }
}

struct Accum {
    l2: f64,
    d1: [f64; 3],
    d2: [f64; 6],
}

impl Accum {
    fn new() -> Self {
        Self { l2: 0.0, d1: [0.0; 3], d2: [0.0; 6] }
    }

    fn h1(&self) -> f64 {
        self.l2.sqrt() + self.d1.iter().map(|v| v.sqrt()).sum::<f64>()
    }

    fn h2(&self) -> f64 {
        self.h1() + self.d2.iter().map(|v| v.sqrt()).sum::<f64>()
    }
}

const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

fn accumulate(u: &GridField, tags: &[Subdomain]) -> (Accum, [Accum; 3]) {
    let grid = u.grid();
    let [nx, ny, nz] = grid.dims();
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let v = u.values();
    let at = |i: usize, j: usize, k: usize| v[grid.index(i, j, k)];
    let mut all = Accum::new();
    let mut per = [Accum::new(), Accum::new(), Accum::new()];
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            for k in 1..nz - 1 {
                let idx = grid.index(i, j, k);
                let p = [i, j, k];
                let shift = |d: [i64; 3]| {
                    at((p[0] as i64 + d[0]) as usize, (p[1] as i64 + d[1]) as usize, (p[2] as i64 + d[2]) as usize)
                };
                let e = |a: usize, s: i64| {
                    let mut d = [0i64; 3];
                    d[a] = s;
                    d
                };
                let c = v[idx];
                let d1: [f64; 3] = [0, 1, 2].map(|a| (shift(e(a, 1)) - shift(e(a, -1))) / (2.0 * h[a]));
                let d2: [f64; 6] = PAIRS.map(|(a, b)| {
                    if a == b {
                        (shift(e(a, 1)) - 2.0 * c + shift(e(a, -1))) / (h[a] * h[a])
                    } else {
                        let mut pp = [0i64; 3];
                        pp[a] = 1;
                        pp[b] = 1;
                        let mut pm = pp;
                        pm[b] = -1;
                        let mut mp = pp;
                        mp[a] = -1;
                        let mut mm = pm;
                        mm[a] = -1;
                        (shift(pp) - shift(pm) - shift(mp) + shift(mm)) / (4.0 * h[a] * h[b])
                    }
                });
                let t = tags[idx].index();
                for acc in [&mut all, &mut per[t]] {
                    acc.l2 += c * c * vol;
                    for a in 0..3 {
                        acc.d1[a] += d1[a] * d1[a] * vol;
                    }
                    for a in 0..6 {
                        acc.d2[a] += d2[a] * d2[a] * vol;
                    }
                }
            }
        }
    }
    (all, per)
}

pub fn discrete_h_norm(u: &GridField, tags: &[Subdomain]) -> HNorm {
    let (all, per) = accumulate(u, tags);
    HNorm { h1: all.h1(), h2: [per[0].h2(), per[1].h2(), per[2].h2()] }
}

fn h2_on(u: &GridField, tags: &[Subdomain], sub: Subdomain) -> f64 {
    accumulate(u, tags).1[sub.index()].h2()
}

fn random_smooth_field(grid: &Grid, rng: &mut ChaCha8Rng) -> GridField {
    let lo = grid.point(0, 0, 0);
    let [nx, ny, nz] = grid.dims();
    let hi = grid.point(nx - 1, ny - 1, nz - 1);
    let terms: Vec<([f64; 3], [f64; 3], f64)> = (0..4)
        .map(|_| {
            let freq = [0, 1, 2].map(|_| rng.gen_range(0..3) as f64);
            let phase = [0, 1, 2].map(|_| rng.gen_range(0.0..std::f64::consts::TAU));
            (freq, phase, rng.gen_range(-1.0..1.0))
        })
        .collect();
    GridField::from_fn(grid, |r| {
        terms
            .iter()
            .map(|(f, ph, c)| {
                c * (0..3)
                    .map(|a| (std::f64::consts::PI * f[a] * (r[a] - lo[a]) / (hi[a] - lo[a]) + ph[a]).cos())
                    .product::<f64>()
            })
            .sum::<f64>()
            + 0.5
    })
}

/// Sampled lower estimate of the `H^2(U_k)` Banach-algebra constant:
/// `max |uv| / (|u| |v|)` over random smooth pairs, maximised over subdomains
/// that contain grid nodes.
pub fn algebra_constant_estimate(grid: &Grid, tags: &[Subdomain], trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..trials {
        let u = random_smooth_field(grid, &mut rng);
        let v = random_smooth_field(grid, &mut rng);
        let uv = u.zip_map(&v, |a, b| a * b);
        for sub in Subdomain::ALL {
            let (nu, nv) = (h2_on(&u, tags, sub), h2_on(&v, tags, sub));
            if nu > 0.0 && nv > 0.0 {
                best = best.max(h2_on(&uv, tags, sub) / (nu * nv));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn linear_field_norms() {
        let g = Grid::new(Vec3::zeros(), Vec3::repeat(1.0), [21, 21, 21]).unwrap();
        let tags = vec![Subdomain::U3; g.len()];
        let u = GridField::from_fn(&g, |r| r.x);
        let n = discrete_h_norm(&u, &tags);
        // 19 interior nodes per axis at spacing 0.05
        let h: f64 = 0.05;
        let sum_x2: f64 = (1..20).map(|i| (i as f64 * h).powi(2)).sum();
        let l2 = (sum_x2 * h * (19.0 * h).powi(2)).sqrt();
        let dx = (19.0 * h).powf(1.5);
        assert!((n.h1 - (l2 + dx)).abs() < 1e-12);
        assert!((n.h2[2] - n.h1).abs() < 1e-9, "second differences of a linear field vanish");
        assert_eq!(n.h2[0], 0.0);
    }

    #[test]
    fn algebra_constant_is_positive() {
        let g = Grid::new(Vec3::zeros(), Vec3::repeat(1.0), [9, 9, 9]).unwrap();
        let tags = vec![Subdomain::U1; g.len()];
        let c = algebra_constant_estimate(&g, &tags, 4, 3);
        assert!(c > 0.0 && c.is_finite());
    }
}
