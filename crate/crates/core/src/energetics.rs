//! Defect formation energies, charge transition levels and cluster
//! dissociation energies.
//!
//! Stoichiometry convention: `count > 0` removes atoms from the supercell,
//! `count < 0` adds them, and the formation energy carries +Σ n_i(Δμ_i + E_i).

use std::collections::BTreeMap;

use crate::error::{ensure_finite, Error, Result};
use crate::model::{Correction, DefectEntry, HostReference};
use crate::units::{COULOMB_EV_A, MADELUNG_SIMPLE_CUBIC};

/// Point-charge image correction q²αe²/(8πε₀εL) with L = V^⅓.
pub fn analytic_correction(charge: i32, dielectric: f64, volume: f64) -> Result<f64> {
    if !(dielectric > 1.0) || !dielectric.is_finite() {
        return Err(Error::InvalidDielectric(dielectric));
    }
    if !(volume > 0.0) || !volume.is_finite() {
        return Err(Error::invalid("supercell_volume", format!("must be positive, got {volume}")));
    }
    let q = charge as f64;
    let l = volume.cbrt();
    Ok(q * q * MADELUNG_SIMPLE_CUBIC * COULOMB_EV_A / (2.0 * dielectric * l))
}

/// E_corr of an entry, resolving analytic corrections from the host data.
pub fn resolve_correction(entry: &DefectEntry, host: &HostReference) -> Result<f64> {
    match entry.correction {
        Correction::Explicit(c) => Ok(c),
        Correction::Analytic => match (host.dielectric, host.supercell_volume) {
            (Some(eps), Some(v)) => analytic_correction(entry.charge, eps, v),
            _ => Err(Error::UnresolvedCorrection {
                label: entry.label.clone(),
                charge: entry.charge,
            }),
        },
    }
}

/// E_f at E_Fermi = 0: E_d − E_host + Σ n_i(Δμ_i + E_i) + q·E_V + E_corr.
pub fn formation_intercept(entry: &DefectEntry, host: &HostReference) -> Result<f64> {
    let mut stoich = 0.0;
    for t in &entry.stoichiometry {
        let mu = host
            .chemical_potentials
            .get(&t.species)
            .ok_or_else(|| Error::MissingChemicalPotential(t.species.clone()))?;
        stoich += t.count as f64 * (mu.delta + mu.reference_energy);
    }
    let corr = resolve_correction(entry, host)?;
    Ok(entry.total_energy - host.host_energy + stoich + entry.charge as f64 * host.vbm + corr)
}

/// E_f(E_Fermi) with E_Fermi measured from the VBM.
pub fn formation_energy(entry: &DefectEntry, host: &HostReference, e_fermi: f64) -> Result<f64> {
    ensure_finite("e_fermi", &[e_fermi])?;
    if e_fermi < 0.0 || e_fermi > host.gap {
        log::warn!("Fermi level {e_fermi} eV lies outside the gap [0, {}]", host.gap);
    }
    Ok(formation_intercept(entry, host)? + entry.charge as f64 * e_fermi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationLine {
    pub label: String,
    pub charge: i32,
    /// E_f at E_Fermi = 0, eV.
    pub intercept: f64,
}

impl FormationLine {
    pub fn slope(&self) -> i32 {
        self.charge
    }

    pub fn at(&self, e_fermi: f64) -> f64 {
        self.intercept + self.charge as f64 * e_fermi
    }
}

/// ε(q/q′) = (E_f^q − E_f^{q′})/(q′ − q), both formation energies at E_Fermi = 0.
pub fn transition_level(a: (i32, f64), b: (i32, f64)) -> Result<f64> {
    if a.0 == b.0 {
        return Err(Error::EqualCharges(a.0));
    }
    Ok((a.1 - b.1) / (b.0 - a.0) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub charge: i32,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Stable charge below the level.
    pub from_charge: i32,
    /// Stable charge above the level.
    pub to_charge: i32,
    /// ε above the VBM, eV.
    pub level: f64,
    /// gap − ε, eV.
    pub below_cbm: f64,
}

/// Charge state q whose window closes before it opens: ε(q+1/q) ≥ ε(q/q−1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeU {
    pub charge: i32,
    pub upper_level: f64,
    pub lower_level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityDiagram {
    pub label: String,
    pub gap: f64,
    /// Sorted by descending charge.
    pub lines: Vec<FormationLine>,
    /// Lower envelope over [0, gap], left to right.
    pub envelope: Vec<Segment>,
    pub transitions: Vec<Transition>,
    pub negative_u: Vec<NegativeU>,
}

impl StabilityDiagram {
    pub fn envelope_at(&self, e_fermi: f64) -> f64 {
        self.lines.iter().map(|l| l.at(e_fermi)).fold(f64::INFINITY, f64::min)
    }

    /// Range of Fermi levels in which `charge` is the stable state.
    pub fn window(&self, charge: i32) -> Option<(f64, f64)> {
        self.envelope.iter().find(|s| s.charge == charge).map(|s| (s.from, s.to))
    }
}

fn lower_envelope(lines: &[FormationLine], gap: f64) -> Vec<Segment> {
    let pick = |cands: &mut dyn Iterator<Item = (usize, f64)>| {
        cands.fold(None::<(usize, f64)>, |best, (i, x)| match best {
            Some((j, y)) if y < x || (y == x && lines[j].charge <= lines[i].charge) => Some((j, y)),
            _ => Some((i, x)),
        })
    };
    let (mut cur, _) = pick(&mut lines.iter().enumerate().map(|(i, l)| (i, l.intercept))).unwrap();
    let mut x = 0.0;
    let mut segments = Vec::new();
    loop {
        let c = &lines[cur];
        let next = pick(&mut lines.iter().enumerate().filter(|(_, l)| l.charge < c.charge).filter_map(|(i, l)| {
            let cross = (l.intercept - c.intercept) / (c.charge - l.charge) as f64;
            (cross >= x).then_some((i, cross))
        }));
        match next {
            Some((i, cross)) if cross < gap => {
                if cross > x {
                    segments.push(Segment {
                        charge: c.charge,
                        from: x,
                        to: cross,
                    });
                }
                x = cross;
                cur = i;
            }
            _ => {
                segments.push(Segment {
                    charge: c.charge,
                    from: x,
                    to: gap,
                });
                return segments;
            }
        }
    }
}

/// Consecutive-charge triples whose middle state is never stable.
pub fn negative_u_states(lines: &[FormationLine]) -> Vec<NegativeU> {
    let by_q: BTreeMap<i32, f64> = lines.iter().map(|l| (l.charge, l.intercept)).collect();
    by_q.iter()
        .filter_map(|(&q, &e)| {
            let up = *by_q.get(&(q + 1))?;
            let down = *by_q.get(&(q - 1))?;
            let upper = transition_level((q + 1, up), (q, e)).ok()?;
            let lower = transition_level((q, e), (q - 1, down)).ok()?;
            (upper >= lower).then_some(NegativeU {
                charge: q,
                upper_level: upper,
                lower_level: lower,
            })
        })
        .collect()
}

/// Stability diagram for the ground-state entries of one defect label.
pub fn stability_diagram(label: &str, entries: &[&DefectEntry], host: &HostReference) -> Result<StabilityDiagram> {
    let mut lines = Vec::new();
    for e in entries.iter().filter(|e| !e.excited) {
        if lines.iter().any(|l: &FormationLine| l.charge == e.charge) {
            return Err(Error::DuplicateEntry(format!("{label} charge {}", e.charge)));
        }
        lines.push(FormationLine {
            label: label.to_string(),
            charge: e.charge,
            intercept: formation_intercept(e, host)?,
        });
    }
    if lines.is_empty() {
        return Err(Error::EmptyGroup(label.to_string()));
    }
    lines.sort_by(|a, b| b.charge.cmp(&a.charge));
    let envelope = lower_envelope(&lines, host.gap);
    let transitions = envelope
        .windows(2)
        .map(|w| Transition {
            from_charge: w[0].charge,
            to_charge: w[1].charge,
            level: w[0].to,
            below_cbm: host.gap - w[0].to,
        })
        .collect();
    let negative_u = negative_u_states(&lines);
    Ok(StabilityDiagram {
        label: label.to_string(),
        gap: host.gap,
        lines,
        envelope,
        transitions,
        negative_u,
    })
}

/// One diagram per label, in label order.
pub fn stability_diagrams(entries: &[DefectEntry], host: &HostReference) -> Result<Vec<StabilityDiagram>> {
    let mut groups: BTreeMap<&str, Vec<&DefectEntry>> = BTreeMap::new();
    for e in entries {
        groups.entry(e.label.as_str()).or_default().push(e);
    }
    groups.into_iter().map(|(label, es)| stability_diagram(label, &es, host)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissociation {
    /// E_D, eV.
    pub energy: f64,
    /// E_D < 0: the cluster would shed a carbon spontaneously.
    pub unstable: bool,
}

/// E_D = E(C_{n−1}) + E(C_sp) − E(C_n).
pub fn dissociation_energy(e_smaller: f64, e_split: f64, e_cluster: f64) -> Result<Dissociation> {
    ensure_finite("dissociation", &[e_smaller, e_split, e_cluster])?;
    let energy = e_smaller + e_split - e_cluster;
    Ok(Dissociation {
        energy,
        unstable: energy < 0.0,
    })
}
