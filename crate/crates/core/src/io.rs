//! Interchange formats.
//!
//! Every input is a self-describing JSON document whose `schema` field names
//! its kind and version. Documents deserialize into plain DTOs which are then
//! converted into validated model types; writers go the other way and emit
//! floats in shortest round-trip form, so `parse(write(x)) == x` bit for bit.
//! Tabular outputs are TSV with `#` header lines, nine significant digits
//! and LF endings. Units are fixed: eV, Å, amu, meV for phonon energies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energetics::StabilityDiagram;
use crate::error::{ensure_finite, Error, Result};
use crate::model::{
    ChemicalPotential, Correction, CrystalStructure, DefectEntry, ForceDelta, GeometryPair, Hessian,
    HostReference, HrDecomposition, HrEntry, Lineshape, Mode, PhononBasis, RelaxationInfo, Site,
    StoichiometryTerm, Vec3,
};
use crate::phonons::{classify_lvm, localization_table, AsrReport};
use crate::units::default_mass;

pub const STRUCTURE_SCHEMA: &str = "hrspec.structure/1";
pub const HESSIAN_SCHEMA: &str = "hrspec.hessian/1";
pub const GEOMETRY_PAIR_SCHEMA: &str = "hrspec.geometry-pair/1";
pub const FORCES_SCHEMA: &str = "hrspec.forces/1";
pub const MODES_SCHEMA: &str = "hrspec.modes/1";
pub const HR_SCHEMA: &str = "hrspec.hr/1";
pub const DEFECTS_SCHEMA: &str = "hrspec.defects/1";
pub const DISSOCIATION_SCHEMA: &str = "hrspec.dissociation/1";
pub const MANIFEST_SCHEMA: &str = "hrspec.manifest/1";

fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.inner();
        Error::parse(
            format!("{path} (line {}, column {})", inner.line(), inner.column()),
            inner.to_string(),
        )
    })?;
    de.end()
        .map_err(|e| Error::parse(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
    Ok(value)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("DTOs always serialize");
    s.push('\n');
    s
}

fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::parse("schema", format!("expected \"{expected}\", found \"{found}\"")))
    }
}

fn check_species(expected: &[String], found: &[String], what: &str) -> Result<()> {
    if expected.len() != found.len() {
        return Err(Error::DimensionMismatch {
            field: format!("{what} species"),
            expected: expected.len(),
            found: found.len(),
        });
    }
    match expected.iter().zip(found).position(|(a, b)| a != b) {
        Some(i) => Err(Error::SpeciesMismatch {
            index: i,
            expected: expected[i].clone(),
            found: found[i].clone(),
        }),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- structure

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteDoc {
    species: String,
    position: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureDoc {
    schema: String,
    lattice: [Vec3; 3],
    sites: Vec<SiteDoc>,
}

/// Masses default to isotope-averaged values for known species.
pub fn parse_structure(text: &str) -> Result<CrystalStructure> {
    let doc: StructureDoc = from_json(text)?;
    check_schema(&doc.schema, STRUCTURE_SCHEMA)?;
    let sites = doc
        .sites
        .into_iter()
        .map(|s| {
            let mass = match s.mass {
                Some(m) => m,
                None => default_mass(&s.species).ok_or_else(|| Error::UnknownSpecies(s.species.clone()))?,
            };
            Ok(Site {
                species: s.species,
                mass,
                position: s.position,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CrystalStructure::new(doc.lattice, sites)
}

pub fn write_structure(structure: &CrystalStructure) -> String {
    to_json(&StructureDoc {
        schema: STRUCTURE_SCHEMA.into(),
        lattice: *structure.lattice(),
        sites: structure
            .sites()
            .iter()
            .map(|s| SiteDoc {
                species: s.species.clone(),
                position: s.position,
                mass: Some(s.mass),
            })
            .collect(),
    })
}

// ------------------------------------------------------------------ hessian

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HessianDoc {
    schema: String,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    structure_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dense: Option<Vec<Vec<f64>>>,
    /// (row, column, value); absent entries are zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    triplets: Option<Vec<(usize, usize, f64)>>,
}

/// Dense or triplet Hessian in eV/Å². Asymmetric input is kept as given.
pub fn parse_hessian(text: &str, structure: Option<&CrystalStructure>) -> Result<Hessian> {
    let doc: HessianDoc = from_json(text)?;
    check_schema(&doc.schema, HESSIAN_SCHEMA)?;
    let n = doc.dim;
    if let Some(s) = structure {
        if n != 3 * s.n_atoms() {
            return Err(Error::DimensionMismatch {
                field: "hessian".into(),
                expected: 3 * s.n_atoms(),
                found: n,
            });
        }
    }
    let data = match (doc.dense, doc.triplets) {
        (Some(rows), None) => {
            if rows.len() != n {
                return Err(Error::DimensionMismatch {
                    field: "dense".into(),
                    expected: n,
                    found: rows.len(),
                });
            }
            let mut data = Vec::with_capacity(n * n);
            for (i, row) in rows.into_iter().enumerate() {
                if row.len() != n {
                    return Err(Error::DimensionMismatch {
                        field: format!("dense[{i}]"),
                        expected: n,
                        found: row.len(),
                    });
                }
                data.extend(row);
            }
            data
        }
        (None, Some(triplets)) => {
            let mut data = vec![0.0; n * n];
            let mut seen = BTreeSet::new();
            for (t, &(i, j, v)) in triplets.iter().enumerate() {
                for idx in [i, j] {
                    if idx >= n {
                        return Err(Error::IndexOutOfRange { index: idx, len: n });
                    }
                }
                if !seen.insert((i, j)) {
                    return Err(Error::DuplicateEntry(format!("triplets[{t}]: ({i}, {j}) given twice")));
                }
                data[i * n + j] = v;
            }
            data
        }
        _ => return Err(Error::parse("/", "exactly one of \"dense\" or \"triplets\" is required")),
    };
    let h = Hessian::new(n, data)?;
    Ok(match doc.structure_hash {
        Some(hash) => h.with_structure_hash(hash),
        None => h,
    })
}

pub fn write_hessian(h: &Hessian) -> String {
    to_json(&HessianDoc {
        schema: HESSIAN_SCHEMA.into(),
        dim: h.dim(),
        structure_hash: h.structure_hash().map(str::to_string),
        dense: Some((0..h.dim()).map(|i| h.row(i).to_vec()).collect()),
        triplets: None,
    })
}

// ------------------------------------------------------------ geometry pair

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RelaxationDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_force_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    excited_force_threshold: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryPairDoc {
    schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    species: Option<Vec<String>>,
    ground: Vec<Vec3>,
    excited: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relaxation: Option<RelaxationDoc>,
}

/// Ground/excited positions in Å. With a structure, atom count and species order are checked.
pub fn parse_geometry_pair(text: &str, structure: Option<&CrystalStructure>) -> Result<GeometryPair> {
    let doc: GeometryPairDoc = from_json(text)?;
    check_schema(&doc.schema, GEOMETRY_PAIR_SCHEMA)?;
    if let Some(sp) = &doc.species {
        if sp.len() != doc.ground.len() {
            return Err(Error::DimensionMismatch {
                field: "species".into(),
                expected: doc.ground.len(),
                found: sp.len(),
            });
        }
    }
    let mut pair = GeometryPair::new(doc.ground, doc.excited)?;
    if let Some(r) = doc.relaxation {
        pair = pair.with_relaxation(RelaxationInfo {
            ground_force_threshold: r.ground_force_threshold,
            excited_force_threshold: r.excited_force_threshold,
        });
    }
    if let Some(s) = structure {
        if pair.n_atoms() != s.n_atoms() {
            return Err(Error::DimensionMismatch {
                field: "geometry pair".into(),
                expected: s.n_atoms(),
                found: pair.n_atoms(),
            });
        }
        if let Some(sp) = &doc.species {
            check_species(&s.species(), sp, "geometry pair")?;
        }
    }
    Ok(pair)
}

pub fn write_geometry_pair(pair: &GeometryPair, species: Option<&[String]>) -> String {
    let r = pair.relaxation();
    let relaxation = (r.ground_force_threshold.is_some() || r.excited_force_threshold.is_some()).then(|| RelaxationDoc {
        ground_force_threshold: r.ground_force_threshold,
        excited_force_threshold: r.excited_force_threshold,
    });
    to_json(&GeometryPairDoc {
        schema: GEOMETRY_PAIR_SCHEMA.into(),
        species: species.map(<[String]>::to_vec),
        ground: pair.ground().to_vec(),
        excited: pair.excited().to_vec(),
        relaxation,
    })
}

// ------------------------------------------------------------------- forces

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForcesDoc {
    schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    species: Option<Vec<String>>,
    /// F_excited − F_ground per atom, eV/Å.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<Vec<Vec3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground: Option<Vec<Vec3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    excited: Option<Vec<Vec3>>,
}

/// Either `delta` or both `ground` and `excited` forces (eV/Å).
pub fn parse_force_delta(text: &str, structure: Option<&CrystalStructure>) -> Result<ForceDelta> {
    let doc: ForcesDoc = from_json(text)?;
    check_schema(&doc.schema, FORCES_SCHEMA)?;
    let delta: Vec<Vec3> = match (doc.delta, doc.ground, doc.excited) {
        (Some(d), None, None) => d,
        (None, Some(g), Some(e)) => {
            if g.len() != e.len() {
                return Err(Error::DimensionMismatch {
                    field: "excited".into(),
                    expected: g.len(),
                    found: e.len(),
                });
            }
            g.iter()
                .zip(&e)
                .map(|(g, e)| [e[0] - g[0], e[1] - g[1], e[2] - g[2]])
                .collect()
        }
        _ => {
            return Err(Error::parse(
                "/",
                "give either \"delta\" or both \"ground\" and \"excited\"",
            ))
        }
    };
    if let Some(sp) = &doc.species {
        if sp.len() != delta.len() {
            return Err(Error::DimensionMismatch {
                field: "species".into(),
                expected: delta.len(),
                found: sp.len(),
            });
        }
    }
    if let Some(s) = structure {
        if delta.len() != s.n_atoms() {
            return Err(Error::DimensionMismatch {
                field: "forces".into(),
                expected: s.n_atoms(),
                found: delta.len(),
            });
        }
        if let Some(sp) = &doc.species {
            check_species(&s.species(), sp, "forces")?;
        }
    }
    ForceDelta::new(delta.into_iter().flatten().collect())
}

pub fn write_force_delta(forces: &ForceDelta, species: Option<&[String]>) -> String {
    to_json(&ForcesDoc {
        schema: FORCES_SCHEMA.into(),
        species: species.map(<[String]>::to_vec),
        delta: Some(forces.values().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()),
        ground: None,
        excited: None,
    })
}

// -------------------------------------------------------------------- modes

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeDoc {
    omega_mev: f64,
    eigenvalue: f64,
    vector: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AsrDoc {
    applied: bool,
    pre_translational_norms_mev: [f64; 3],
    post_translational_norms_mev: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModesDoc {
    schema: String,
    species: Vec<String>,
    masses: Vec<f64>,
    cutoff_mev: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hessian_hash: Option<String>,
    modes: Vec<ModeDoc>,
    /// Derived on write; ignored on read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    asr: Option<AsrDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lvm: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    localization: Option<Vec<f64>>,
}

pub fn parse_modes(text: &str) -> Result<PhononBasis> {
    let doc: ModesDoc = from_json(text)?;
    check_schema(&doc.schema, MODES_SCHEMA)?;
    let modes = doc
        .modes
        .into_iter()
        .map(|m| Mode {
            omega_mev: m.omega_mev,
            eigenvalue: m.eigenvalue,
            vector: m.vector,
        })
        .collect();
    PhononBasis::new(modes, doc.species, doc.masses, doc.cutoff_mev, doc.hessian_hash)
}

/// Modes document with the LVM list and IPR table of the basis' own cutoff.
pub fn write_modes(basis: &PhononBasis, asr: Option<&AsrReport>) -> String {
    to_json(&ModesDoc {
        schema: MODES_SCHEMA.into(),
        species: basis.species().to_vec(),
        masses: basis.masses().to_vec(),
        cutoff_mev: basis.cutoff_mev(),
        hessian_hash: basis.hessian_hash().map(str::to_string),
        modes: basis
            .modes()
            .iter()
            .map(|m| ModeDoc {
                omega_mev: m.omega_mev,
                eigenvalue: m.eigenvalue,
                vector: m.vector.clone(),
            })
            .collect(),
        asr: asr.map(|a| AsrDoc {
            applied: a.applied,
            pre_translational_norms_mev: a.pre_asr_translational_norms,
            post_translational_norms_mev: a.post_asr_translational_norms,
        }),
        lvm: Some(classify_lvm(basis, basis.cutoff_mev())),
        localization: Some(localization_table(basis)),
    })
}

// ----------------------------------------------------------------------- hr

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HrEntryDoc {
    mode: usize,
    omega_mev: f64,
    qk: f64,
    sk: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HrDoc {
    schema: String,
    /// Informational; recomputed on read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    route: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    excluded_modes: Vec<usize>,
    entries: Vec<HrEntryDoc>,
}

/// Partial HR factors plus provenance of how they were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct HrDocument {
    pub hr: HrDecomposition,
    pub route: Option<String>,
    pub excluded_modes: Vec<usize>,
}

pub fn parse_hr(text: &str) -> Result<HrDocument> {
    let doc: HrDoc = from_json(text)?;
    check_schema(&doc.schema, HR_SCHEMA)?;
    let hr = HrDecomposition::new(
        doc.entries
            .into_iter()
            .map(|e| HrEntry {
                mode: e.mode,
                omega_mev: e.omega_mev,
                qk: e.qk,
                sk: e.sk,
            })
            .collect(),
    )?;
    Ok(HrDocument {
        hr,
        route: doc.route,
        excluded_modes: doc.excluded_modes,
    })
}

pub fn write_hr(doc: &HrDocument) -> String {
    to_json(&HrDoc {
        schema: HR_SCHEMA.into(),
        total_s: Some(doc.hr.total()),
        route: doc.route.clone(),
        excluded_modes: doc.excluded_modes.clone(),
        entries: doc
            .hr
            .entries()
            .iter()
            .map(|e| HrEntryDoc {
                mode: e.mode,
                omega_mev: e.omega_mev,
                qk: e.qk,
                sk: e.sk,
            })
            .collect(),
    })
}

// ------------------------------------------------------------------ defects

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct PotentialDoc {
    reference_energy: f64,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CarbonRichDoc {
    e_carbon: f64,
    e_silicon: f64,
    formation_enthalpy: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HostDoc {
    host_energy: f64,
    vbm: f64,
    gap: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    chemical_potentials: BTreeMap<String, PotentialDoc>,
    /// Shorthand for the carbon-rich SiC limit; merged under explicit entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    carbon_rich: Option<CarbonRichDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dielectric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    supercell_volume: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoichDoc {
    species: String,
    count: i32,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CorrectionDoc {
    Value(f64),
    Keyword(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefectDoc {
    label: String,
    charge: i32,
    total_energy: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    stoichiometry: Vec<StoichDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    correction: Option<CorrectionDoc>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    excited: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefectsDoc {
    schema: String,
    host: HostDoc,
    entries: Vec<DefectDoc>,
}

/// Defect table and its host reference.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectTable {
    pub host: HostReference,
    pub entries: Vec<DefectEntry>,
}

/// Defect entries must be unique per (label, charge, excited).
pub fn parse_defects(text: &str) -> Result<DefectTable> {
    let doc: DefectsDoc = from_json(text)?;
    check_schema(&doc.schema, DEFECTS_SCHEMA)?;
    let h = doc.host;
    let mut potentials = match h.carbon_rich {
        Some(c) => crate::model::carbon_rich_sic(c.e_carbon, c.e_silicon, c.formation_enthalpy),
        None => BTreeMap::new(),
    };
    for (s, p) in h.chemical_potentials {
        potentials.insert(
            s,
            ChemicalPotential {
                reference_energy: p.reference_energy,
                delta: p.delta,
            },
        );
    }
    let mut host = HostReference::new(h.host_energy, h.vbm, h.gap, potentials)?;
    match (h.dielectric, h.supercell_volume) {
        (Some(eps), Some(v)) => {
            ensure_finite("host.dielectric", &[eps, v])?;
            host = host.with_dielectric(eps, v);
        }
        (None, None) => {}
        _ => {
            return Err(Error::parse(
                "/host",
                "\"dielectric\" and \"supercell_volume\" must be given together",
            ))
        }
    }
    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(doc.entries.len());
    for (i, d) in doc.entries.into_iter().enumerate() {
        if !seen.insert((d.label.clone(), d.charge, d.excited)) {
            return Err(Error::DuplicateEntry(format!(
                "entries[{i}]: {} q={}{}",
                d.label,
                d.charge,
                if d.excited { " (excited)" } else { "" }
            )));
        }
        let correction = match d.correction {
            None => Correction::default(),
            Some(CorrectionDoc::Value(v)) => Correction::Explicit(v),
            Some(CorrectionDoc::Keyword(k)) if k == "analytic" => Correction::Analytic,
            Some(CorrectionDoc::Keyword(k)) => {
                return Err(Error::parse(
                    format!("/entries/{i}/correction"),
                    format!("expected a number or \"analytic\", found \"{k}\""),
                ))
            }
        };
        let stoich = d
            .stoichiometry
            .into_iter()
            .map(|s| StoichiometryTerm {
                species: s.species,
                count: s.count,
            })
            .collect();
        let entry = DefectEntry::new(d.label, d.charge, d.total_energy, stoich, correction)?;
        entries.push(if d.excited { entry.excited() } else { entry });
    }
    Ok(DefectTable { host, entries })
}

pub fn write_defects(table: &DefectTable) -> String {
    let h = &table.host;
    to_json(&DefectsDoc {
        schema: DEFECTS_SCHEMA.into(),
        host: HostDoc {
            host_energy: h.host_energy,
            vbm: h.vbm,
            gap: h.gap,
            chemical_potentials: h
                .chemical_potentials
                .iter()
                .map(|(s, p)| {
                    (
                        s.clone(),
                        PotentialDoc {
                            reference_energy: p.reference_energy,
                            delta: p.delta,
                        },
                    )
                })
                .collect(),
            carbon_rich: None,
            dielectric: h.dielectric,
            supercell_volume: h.supercell_volume,
        },
        entries: table
            .entries
            .iter()
            .map(|e| DefectDoc {
                label: e.label.clone(),
                charge: e.charge,
                total_energy: e.total_energy,
                stoichiometry: e
                    .stoichiometry
                    .iter()
                    .map(|s| StoichDoc {
                        species: s.species.clone(),
                        count: s.count,
                    })
                    .collect(),
                correction: Some(match e.correction {
                    Correction::Explicit(v) => CorrectionDoc::Value(v),
                    Correction::Analytic => CorrectionDoc::Keyword("analytic".into()),
                }),
                excited: e.excited,
            })
            .collect(),
    })
}

// -------------------------------------------------------------- dissociation

/// Total energies (eV) for one cluster dissociation C_n → C_{n−1} + C_sp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissociationRow {
    pub label: String,
    /// E_tot(C_{n−1})
    pub e_smaller: f64,
    /// E_tot(C_sp)
    pub e_split: f64,
    /// E_tot(C_n)
    pub e_cluster: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DissociationDoc {
    schema: String,
    rows: Vec<DissociationRow>,
}

pub fn parse_dissociation(text: &str) -> Result<Vec<DissociationRow>> {
    let doc: DissociationDoc = from_json(text)?;
    check_schema(&doc.schema, DISSOCIATION_SCHEMA)?;
    for (i, r) in doc.rows.iter().enumerate() {
        ensure_finite(&format!("rows[{i}]"), &[r.e_smaller, r.e_split, r.e_cluster])?;
    }
    Ok(doc.rows)
}

pub fn write_dissociation(rows: &[DissociationRow]) -> String {
    to_json(&DissociationDoc {
        schema: DISSOCIATION_SCHEMA.into(),
        rows: rows.to_vec(),
    })
}

// ----------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub tool_version: String,
    pub command_line: Vec<String>,
    pub timestamp_utc: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

impl Manifest {
    pub fn new(command_line: Vec<String>, inputs: Vec<FileDigest>, outputs: Vec<FileDigest>) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command_line,
            timestamp_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            inputs,
            outputs,
        }
    }

    /// Recompute every recorded input checksum, paths relative to `base`.
    pub fn verify(&self, base: &Path) -> Result<()> {
        for f in &self.inputs {
            let p = Path::new(&f.path);
            let full: PathBuf = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            let found = digest_file(&full)?.sha256;
            if found != f.sha256 {
                return Err(Error::HashMismatch {
                    expected: f.sha256.clone(),
                    found,
                });
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = from_json(text)?;
    check_schema(&m.schema, MANIFEST_SCHEMA)?;
    Ok(m)
}

pub fn write_manifest(m: &Manifest) -> String {
    to_json(m)
}

// ---------------------------------------------------------------------- tsv

/// One TSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Nine significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// Render a TSV table: `#`-prefixed header lines, a `#` column line, then rows.
pub fn format_tsv(header: &[String], columns: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut out = String::new();
    for h in header {
        for line in h.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(out, "# {}", columns.join("\t"));
    for (r, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                field: format!("row {r}"),
                expected: columns.len(),
                found: row.len(),
            });
        }
        let fields = row
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell {
                Cell::Int(i) => Ok(i.to_string()),
                Cell::Text(t) => Ok(t.clone()),
                Cell::Float(v) if v.is_finite() => Ok(format_float(*v)),
                Cell::Float(_) => Err(Error::NonFiniteValue {
                    field: format!("{}[{r}]", columns[c]),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    Ok(out)
}

/// Spectrum table: photon energy (eV) and normalized intensity L (1/eV).
pub fn write_spectrum_tsv(ls: &Lineshape, header: &[String]) -> Result<String> {
    let rows: Vec<Vec<Cell>> = ls
        .energies_ev()
        .iter()
        .zip(ls.intensity())
        .map(|(e, l)| vec![(*e).into(), (*l).into()])
        .collect();
    format_tsv(header, &["energy_ev", "intensity_per_ev"], &rows)
}

/// Stem table of partial HR factors: ℏω (meV), S_k and the running sum of S_k.
pub fn write_stem_tsv(hr: &HrDecomposition, header: &[String]) -> Result<String> {
    let mut acc = crate::numeric::CompensatedSum::new();
    let rows: Vec<Vec<Cell>> = hr
        .entries()
        .iter()
        .map(|e| {
            acc.add(e.sk);
            vec![e.omega_mev.into(), e.sk.into(), acc.value().into()]
        })
        .collect();
    format_tsv(header, &["omega_mev", "sk", "cumulative_s"], &rows)
}

/// Envelope samples of each diagram on `samples + 1` evenly spaced Fermi levels.
pub fn write_diagram_tsv(diagrams: &[StabilityDiagram], samples: usize, header: &[String]) -> Result<String> {
    let mut rows = Vec::new();
    for d in diagrams {
        for i in 0..=samples {
            let x = d.gap * i as f64 / samples as f64;
            let (q, e) = d
                .lines
                .iter()
                .map(|l| (l.charge, l.at(x)))
                .fold((0, f64::INFINITY), |acc, (q, e)| if e < acc.1 { (q, e) } else { acc });
            rows.push(vec![d.label.as_str().into(), x.into(), e.into(), q.into()]);
        }
    }
    format_tsv(header, &["label", "e_fermi_ev", "formation_energy_ev", "stable_charge"], &rows)
}

/// Transition levels, both above the VBM and below the CBM.
pub fn write_transitions_tsv(diagrams: &[StabilityDiagram], header: &[String]) -> Result<String> {
    let mut rows = Vec::new();
    for d in diagrams {
        for t in &d.transitions {
            rows.push(vec![
                d.label.as_str().into(),
                t.from_charge.into(),
                t.to_charge.into(),
                t.level.into(),
                t.below_cbm.into(),
            ]);
        }
    }
    format_tsv(
        header,
        &["label", "q", "q_prime", "level_above_vbm_ev", "level_below_cbm_ev"],
        &rows,
    )
}

/// First two numeric columns of a TSV, skipping `#` lines and blank lines.
pub fn read_spectrum_tsv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let mut next = |col: usize| -> Result<f64> {
            let f = fields
                .next()
                .ok_or_else(|| Error::parse(format!("line {}, column {col}", i + 1), "missing field"))?;
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("line {}, column {col}", i + 1), format!("not a number: {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    field: format!("line {}", i + 1),
                });
            }
            Ok(v)
        };
        x.push(next(1)?);
        y.push(next(2)?);
    }
    if let Some(i) = x.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid("spectrum", format!("energies not ascending at row {}", i + 1)));
    }
    Ok((x, y))
}

// ------------------------------------------------------------------- files

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write through a temporary file in the same directory and rename into place.
/// Without `overwrite`, an existing target is an error.
pub fn write_atomic(path: &Path, contents: &[u8], overwrite: bool) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    let persisted = if overwrite { tmp.persist(path) } else { tmp.persist_noclobber(path) };
    persisted.map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
