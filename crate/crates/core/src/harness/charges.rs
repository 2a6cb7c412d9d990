use log::warn;

use crate::error::{Error, Result};
use crate::geometry::{ReferenceDomain, Vec3};
use crate::pde::Charge;

use super::config::RunConfig;

/// Reads `ATOM`/`HETATM` records of a PQR file. The last five fields are
/// `x y z charge radius`, which tolerates the loose column layout of most
/// writers.
pub fn parse_pqr(text: &str) -> Result<Vec<Charge>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let rec = line.split_whitespace().next().unwrap_or_default();
        if rec != "ATOM" && rec != "HETATM" {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 6 {
            return Err(Error::Parse { line: n + 1, reason: format!("expected at least 6 fields, got {}", fields.len()) });
        }
        let tail = &fields[fields.len() - 5..];
        let mut nums = [0.0; 5];
        for (slot, (name, tok)) in nums.iter_mut().zip(["x", "y", "z", "charge", "radius"].iter().zip(tail)) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line: n + 1, reason: format!("non-numeric {name} `{tok}`") })?;
        }
        out.push(Charge { position: Vec3::new(nums[0], nums[1], nums[2]), charge: nums[3] });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestReport {
    pub charges: Vec<Charge>,
    /// Charges dropped for lying outside the box interior, by input order.
    pub rejected: Vec<(usize, Vec3)>,
}

fn inside(domain: &ReferenceDomain, p: &Vec3, margin: f64) -> bool {
    let (lo, hi) = (domain.box_min(), domain.box_max());
    (0..3).all(|a| p[a] >= lo[a] + margin && p[a] <= hi[a] - margin)
}

/// Inline charges are taken in domain coordinates. PQR charges are
/// recentred so that their centroid sits at the domain centre.
pub fn ingest_charges(cfg: &RunConfig) -> Result<IngestReport> {
    let domain = cfg.domain()?;
    let mut raw: Vec<Charge> = cfg
        .charges
        .inline
        .iter()
        .map(|c| Charge { position: Vec3::from(c.position), charge: c.charge })
        .collect();
    if let Some(path) = &cfg.charges.pqr {
        let text = std::fs::read_to_string(cfg.resolve(path))?;
        let mut atoms = parse_pqr(&text)?;
        if !atoms.is_empty() {
            let centroid = atoms.iter().map(|c| c.position).sum::<Vec3>() / atoms.len() as f64;
            let shift = domain.center() - centroid;
            atoms.iter_mut().for_each(|c| c.position += shift);
        }
        raw.extend(atoms);
    }
    if raw.is_empty() {
        return Err(Error::EmptyCharges);
    }
    let mut charges = Vec::new();
    let mut rejected = Vec::new();
    for (k, c) in raw.into_iter().enumerate() {
        if inside(&domain, &c.position, cfg.charges.margin) {
            charges.push(c);
        } else {
            rejected.push((k, c.position));
        }
    }
    if !rejected.is_empty() {
        warn!("{} charge(s) outside the box interior were rejected: {:?}", rejected.len(), rejected);
    }
    if charges.is_empty() {
        return Err(Error::EmptyCharges);
    }
    Ok(IngestReport { charges, rejected })
}

/// Rigid shift `x -> x + sum_k alpha_k e_k Y_k`.
pub fn shifted_charges(
    charges: &[Charge],
    alpha: &[f64],
    big_y: &[f64],
    domain: &ReferenceDomain,
    margin: f64,
) -> Result<Vec<Charge>> {
    if alpha.len() != big_y.len() || alpha.len() > 3 {
        return Err(Error::InvalidArgument("alpha and Y must have equal length <= 3".into()));
    }
    if let Some(v) = big_y.iter().find(|v| v.abs() > 3f64.sqrt() * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("|Y_k| <= sqrt(3) violated by {v}")));
    }
    let mut d = Vec3::zeros();
    for (k, (a, yk)) in alpha.iter().zip(big_y).enumerate() {
        d[k] += a * yk;
    }
    charges
        .iter()
        .map(|c| {
            let p = c.position + d;
            if inside(domain, &p, margin) {
                Ok(Charge { position: p, charge: c.charge })
            } else {
                Err(Error::Config(format!(
                    "shifted charge at ({:.3}, {:.3}, {:.3}) leaves the box interior margin {margin}; reduce alpha",
                    p.x, p.y, p.z
                )))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pqr_fields() {
        let text = "REMARK x\nATOM      1  N   ALA A   1      1.000   2.000   3.000 -0.3000 1.8240\nHETATM 2 O HOH 5 4.0 5.0 6.0 0.5 1.4\nTER\n";
        let c = parse_pqr(text).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].position, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(c[1].charge, 0.5);
    }

    #[test]
    fn pqr_bad_number_names_line() {
        let text = "ATOM 1 N ALA 1 1.0 2.0 3.0 0.1 1.0\nATOM 2 N ALA 1 abc 2.0 3.0 0.1 1.0\n";
        match parse_pqr(text) {
            Err(Error::Parse { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("x"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shift_examples() {
        let d = ReferenceDomain::centered_cube(35.0, 10.0, 13.0).unwrap();
        let cs = vec![Charge { position: Vec3::new(1.0, 2.0, 3.0), charge: 1.0 }];
        assert_eq!(shifted_charges(&cs, &[10.0], &[0.0], &d, 2.0).unwrap(), cs);
        let s = shifted_charges(&cs, &[10.0], &[0.1], &d, 2.0).unwrap();
        assert!((s[0].position.x - 2.0).abs() < 1e-14);
        assert_eq!(s[0].position.y, 2.0);
        assert!(shifted_charges(&cs, &[20.0], &[1.7], &d, 2.0).is_err());
    }
}
