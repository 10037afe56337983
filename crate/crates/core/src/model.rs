//! Shared domain types.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards. Units follow [`crate::units`].

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::error::{ensure_finite, Error, Result};
use crate::numeric::compensated_sum;

pub type Vec3 = [f64; 3];

/// Default bulk phonon cutoff (meV) separating localized vibrational modes.
pub const DEFAULT_LVM_CUTOFF_MEV: f64 = 115.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub species: String,
    /// amu
    pub mass: f64,
    /// Cartesian, Å
    pub position: Vec3,
}

/// Supercell geometry: lattice rows are the cell vectors (Å).
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalStructure {
    lattice: [Vec3; 3],
    sites: Vec<Site>,
}

fn det3(m: &[Vec3; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

impl CrystalStructure {
    pub fn new(lattice: [Vec3; 3], sites: Vec<Site>) -> Result<Self> {
        ensure_finite("lattice", lattice.as_flattened())?;
        if det3(&lattice) <= 0.0 {
            return Err(Error::invalid(
                "lattice",
                "determinant must be positive (right-handed, non-degenerate)",
            ));
        }
        if sites.is_empty() {
            return Err(Error::invalid("sites", "at least one atom required"));
        }
        for (i, s) in sites.iter().enumerate() {
            ensure_finite(&format!("sites[{i}].position"), &s.position)?;
            if !s.mass.is_finite() {
                return Err(Error::NonFiniteValue {
                    field: format!("sites[{i}].mass"),
                });
            }
            if s.mass <= 0.0 {
                return Err(Error::invalid(
                    format!("sites[{i}].mass"),
                    "mass must be positive",
                ));
            }
            if s.species.is_empty() {
                return Err(Error::invalid(
                    format!("sites[{i}].species"),
                    "empty species",
                ));
            }
        }
        Ok(Self { lattice, sites })
    }

    pub fn lattice(&self) -> &[Vec3; 3] {
        &self.lattice
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn n_atoms(&self) -> usize {
        self.sites.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.mass).collect()
    }

    pub fn species(&self) -> Vec<String> {
        self.sites.iter().map(|s| s.species.clone()).collect()
    }

    /// Cell volume in Å³.
    pub fn volume(&self) -> f64 {
        det3(&self.lattice)
    }

    /// Checksum binding derived data (Hessians, mode sets) to this structure.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.lattice.as_flattened() {
            h.update(v.to_bits().to_le_bytes());
        }
        for s in &self.sites {
            h.update(s.species.as_bytes());
            h.update([0u8]);
            h.update(s.mass.to_bits().to_le_bytes());
            for x in s.position {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        format!("sha256:{}", hex::encode(h.finalize()))
    }
}

/// Second-derivative matrix in eV/Å², atom-major / xyz-minor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Hessian {
    dim: usize,
    data: Vec<f64>,
    structure_hash: Option<String>,
}

impl Hessian {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim % 3 != 0 {
            return Err(Error::DimensionMismatch {
                field: "hessian (dimension must be a positive multiple of 3)".into(),
                expected: dim.div_ceil(3).max(1) * 3,
                found: dim,
            });
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                field: "hessian entries".into(),
                expected: dim * dim,
                found: data.len(),
            });
        }
        ensure_finite("hessian", &data)?;
        Ok(Self {
            dim,
            data,
            structure_hash: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::DimensionMismatch {
                field: format!("hessian row {i}"),
                expected: n,
                found: r.len(),
            });
        }
        Self::new(n, rows.concat())
    }

    pub fn with_structure_hash(mut self, hash: impl Into<String>) -> Self {
        self.structure_hash = Some(hash.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_atoms(&self) -> usize {
        self.dim / 3
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn structure_hash(&self) -> Option<&str> {
        self.structure_hash.as_deref()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// H·x for a 3N vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| compensated_sum(self.row(i).iter().zip(x).map(|(a, b)| a * b)))
            .collect()
    }

    /// Content checksum recorded as provenance in derived documents.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for v in &self.data {
            h.update(v.to_bits().to_le_bytes());
        }
        format!("sha256:{}", hex::encode(h.finalize()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// ℏω in meV; negative for imaginary modes.
    pub omega_mev: f64,
    /// Eigenvalue of the mass-weighted Hessian, eV/(amu·Å²).
    pub eigenvalue: f64,
    /// Unit-normalized mass-weighted eigenvector of length 3N.
    pub vector: Vec<f64>,
}

/// Γ-point normal modes of a supercell.
#[derive(Debug, Clone, PartialEq)]
pub struct PhononBasis {
    modes: Vec<Mode>,
    species: Vec<String>,
    masses: Vec<f64>,
    cutoff_mev: f64,
    hessian_hash: Option<String>,
}

/// Orthonormality tolerance enforced when a basis is assembled from outside data.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

impl PhononBasis {
    /// Assemble a basis, checking count, lengths and orthonormality.
    pub fn new(
        modes: Vec<Mode>,
        species: Vec<String>,
        masses: Vec<f64>,
        cutoff_mev: f64,
        hessian_hash: Option<String>,
    ) -> Result<Self> {
        let n = masses.len();
        if species.len() != n {
            return Err(Error::DimensionMismatch {
                field: "species".into(),
                expected: n,
                found: species.len(),
            });
        }
        if modes.len() != 3 * n {
            return Err(Error::DimensionMismatch {
                field: "modes".into(),
                expected: 3 * n,
                found: modes.len(),
            });
        }
        ensure_finite("masses", &masses)?;
        if let Some(i) = masses.iter().position(|&m| m <= 0.0) {
            return Err(Error::invalid(format!("masses[{i}]"), "mass must be positive"));
        }
        for (k, m) in modes.iter().enumerate() {
            if m.vector.len() != 3 * n {
                return Err(Error::DimensionMismatch {
                    field: format!("modes[{k}].vector"),
                    expected: 3 * n,
                    found: m.vector.len(),
                });
            }
            ensure_finite(&format!("modes[{k}].vector"), &m.vector)?;
            ensure_finite(&format!("modes[{k}].omega"), &[m.omega_mev, m.eigenvalue])?;
        }
        let basis = Self {
            modes,
            species,
            masses,
            cutoff_mev,
            hessian_hash,
        };
        let err = basis.orthonormality_error();
        if err >= ORTHONORMALITY_TOL {
            return Err(Error::invalid(
                "modes",
                format!("eigenvectors not orthonormal (max deviation {err:e})"),
            ));
        }
        Ok(basis)
    }

    pub(crate) fn from_parts_unchecked(
        modes: Vec<Mode>,
        species: Vec<String>,
        masses: Vec<f64>,
        cutoff_mev: f64,
        hessian_hash: Option<String>,
    ) -> Self {
        Self {
            modes,
            species,
            masses,
            cutoff_mev,
            hessian_hash,
        }
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn n_atoms(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn cutoff_mev(&self) -> f64 {
        self.cutoff_mev
    }

    pub fn hessian_hash(&self) -> Option<&str> {
        self.hessian_hash.as_deref()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega_mev).collect()
    }

    /// max |eᵢ·eⱼ − δᵢⱼ| over all pairs.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.modes.iter().enumerate() {
            for (j, b) in self.modes.iter().enumerate().skip(i) {
                let d = crate::numeric::dot(&a.vector, &b.vector);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }
}

/// Relaxation metadata carried alongside a geometry pair; recorded, not enforced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelaxationInfo {
    /// eV/Å
    pub ground_force_threshold: Option<f64>,
    /// eV/Å
    pub excited_force_threshold: Option<f64>,
}

/// Ground- and excited-state geometries of one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryPair {
    ground: Vec<Vec3>,
    excited: Vec<Vec3>,
    delta: Vec<Vec3>,
    relaxation: RelaxationInfo,
}

impl GeometryPair {
    pub fn new(ground: Vec<Vec3>, excited: Vec<Vec3>) -> Result<Self> {
        if ground.len() != excited.len() {
            return Err(Error::DimensionMismatch {
                field: "excited positions".into(),
                expected: ground.len(),
                found: excited.len(),
            });
        }
        if ground.is_empty() {
            return Err(Error::invalid("ground", "no atoms"));
        }
        ensure_finite("ground", ground.as_flattened())?;
        ensure_finite("excited", excited.as_flattened())?;
        let delta = ground
            .iter()
            .zip(&excited)
            .map(|(g, e)| [e[0] - g[0], e[1] - g[1], e[2] - g[2]])
            .collect();
        Ok(Self {
            ground,
            excited,
            delta,
            relaxation: RelaxationInfo::default(),
        })
    }

    pub fn with_relaxation(mut self, info: RelaxationInfo) -> Self {
        self.relaxation = info;
        self
    }

    pub fn ground(&self) -> &[Vec3] {
        &self.ground
    }

    pub fn excited(&self) -> &[Vec3] {
        &self.excited
    }

    /// excited − ground, Å.
    pub fn delta(&self) -> &[Vec3] {
        &self.delta
    }

    pub fn relaxation(&self) -> &RelaxationInfo {
        &self.relaxation
    }

    pub fn n_atoms(&self) -> usize {
        self.ground.len()
    }
}

/// F_e − F_g at fixed atomic positions, eV/Å, flattened to 3N.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceDelta {
    values: Vec<f64>,
}

impl ForceDelta {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() % 3 != 0 {
            return Err(Error::DimensionMismatch {
                field: "force delta (length must be a positive multiple of 3)".into(),
                expected: values.len().div_ceil(3).max(1) * 3,
                found: values.len(),
            });
        }
        ensure_finite("force delta", &values)?;
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_atoms(&self) -> usize {
        self.values.len() / 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrEntry {
    /// Index of the mode in its phonon basis.
    pub mode: usize,
    pub omega_mev: f64,
    /// amu^½·Å
    pub qk: f64,
    pub sk: f64,
}

/// Per-mode Huang–Rhys decomposition, sorted by ascending frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct HrDecomposition {
    entries: Vec<HrEntry>,
    total: f64,
}

impl HrDecomposition {
    pub fn new(mut entries: Vec<HrEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            ensure_finite(&format!("entries[{i}]"), &[e.omega_mev, e.qk, e.sk])?;
            if e.sk < 0.0 {
                return Err(Error::invalid(
                    format!("entries[{i}].sk"),
                    "partial Huang-Rhys factor must be non-negative",
                ));
            }
            if e.omega_mev < 0.0 {
                return Err(Error::NegativeFrequency {
                    index: i,
                    omega_mev: e.omega_mev,
                });
            }
        }
        let mut seen = BTreeSet::new();
        if let Some(e) = entries.iter().find(|e| !seen.insert(e.mode)) {
            return Err(Error::DuplicateEntry(format!("mode {}", e.mode)));
        }
        entries.sort_by(|a, b| a.omega_mev.total_cmp(&b.omega_mev).then(a.mode.cmp(&b.mode)));
        let total = compensated_sum(entries.iter().map(|e| e.sk));
        Ok(Self { entries, total })
    }

    pub fn entries(&self) -> &[HrEntry] {
        &self.entries
    }

    /// Total Huang–Rhys factor S = Σ S_k.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest phonon energy carrying a non-zero S_k, meV.
    pub fn max_active_omega(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.sk > 0.0)
            .map(|e| e.omega_mev)
            .fold(0.0, f64::max)
    }

    /// Σ S_k ℏω_k in meV, the mean phonon energy released in emission.
    pub fn relaxation_energy_mev(&self) -> f64 {
        compensated_sum(self.entries.iter().map(|e| e.sk * e.omega_mev))
    }
}

/// Uniform energy grid: `start + i·step`, i in `0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl EnergyGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        ensure_finite("grid", &[start, step])?;
        if step <= 0.0 {
            return Err(Error::invalid("grid.step", "must be positive"));
        }
        if len < 2 {
            return Err(Error::GridTooNarrow("grid needs at least two points".into()));
        }
        Ok(Self { start, step, len })
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.point(self.len - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.point(i)).collect()
    }
}

/// Smeared partial Huang–Rhys spectrum S(ℏω), 1/meV on a meV grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub(crate) grid: EnergyGrid,
    pub(crate) values: Vec<f64>,
    pub(crate) sigma_mev: f64,
}

impl SpectralDensity {
    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sigma_mev(&self) -> f64 {
        self.sigma_mev
    }

    pub fn integral(&self) -> f64 {
        crate::numeric::trapezoid(&self.values, self.grid.step)
    }
}

/// Inputs of the emission lineshape calculation.
#[derive(Debug, Clone, PartialEq)]
pub struct LineshapeConfig {
    /// eV
    pub zpl_ev: f64,
    /// Lorentzian time-domain damping, meV.
    pub gamma_mev: f64,
    /// Gaussian smearing of S(ℏω), meV.
    pub sigma_mev: f64,
    /// fs
    pub time_step_fs: f64,
    /// Half-span T of the time grid −T..T, fs.
    pub time_span_fs: f64,
    /// Only scales the unnormalized intensity.
    pub refractive_index: Option<f64>,
    /// Only scales the unnormalized intensity (arbitrary units).
    pub dipole_magnitude: Option<f64>,
    pub omega_cubed: bool,
    /// Output window in eV; derived from the coupling when absent.
    pub window_ev: Option<(f64, f64)>,
}

/// Normalized emission lineshape on a uniform, ascending eV grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Lineshape {
    pub(crate) energies_ev: Vec<f64>,
    pub(crate) intensity: Vec<f64>,
    pub(crate) spectral_function: Vec<f64>,
    pub(crate) zpl_ev: f64,
    pub(crate) gamma_mev: f64,
    pub(crate) sigma_mev: f64,
    pub(crate) norm_constant: f64,
    pub(crate) omega_cubed: bool,
    pub(crate) diagnostics: LineshapeDiagnostics,
}

/// Numerical health figures gathered while building a lineshape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineshapeDiagnostics {
    /// Σ A ΔE over the full periodic FFT grid; 1 up to rounding.
    pub full_integral: f64,
    /// Largest |Im A| relative to max |A| before the real part was kept.
    pub max_imag_ratio: f64,
    /// Most negative intensity clipped to zero (≤ 0).
    pub min_clipped: f64,
    /// Fraction of A's mass that falls inside the output window.
    pub window_mass: f64,
}

impl Lineshape {
    pub fn energies_ev(&self) -> &[f64] {
        &self.energies_ev
    }

    /// Normalized L(E), 1/eV; unit trapezoid integral.
    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    /// Raw optical spectral function A(E), 1/eV, on the output window.
    pub fn spectral_function(&self) -> &[f64] {
        &self.spectral_function
    }

    pub fn zpl_ev(&self) -> f64 {
        self.zpl_ev
    }

    pub fn gamma_mev(&self) -> f64 {
        self.gamma_mev
    }

    pub fn sigma_mev(&self) -> f64 {
        self.sigma_mev
    }

    pub fn norm_constant(&self) -> f64 {
        self.norm_constant
    }

    pub fn omega_cubed(&self) -> bool {
        self.omega_cubed
    }

    pub fn diagnostics(&self) -> &LineshapeDiagnostics {
        &self.diagnostics
    }

    /// Grid spacing, eV.
    pub fn step_ev(&self) -> f64 {
        if self.energies_ev.len() < 2 {
            0.0
        } else {
            self.energies_ev[1] - self.energies_ev[0]
        }
    }

    pub fn integral(&self) -> f64 {
        crate::numeric::trapezoid(&self.intensity, self.step_ev())
    }
}

/// Finite-size correction attached to a charged defect entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correction {
    /// Explicit value in eV (e.g. from an FNV calculation).
    Explicit(f64),
    /// Leading-order point-charge estimate resolved from the host dielectric data.
    Analytic,
}

impl Default for Correction {
    fn default() -> Self {
        Correction::Explicit(0.0)
    }
}

/// Atoms exchanged with reservoirs. `count > 0` means removed from the
/// supercell, `count < 0` means added.
#[derive(Debug, Clone, PartialEq)]
pub struct StoichiometryTerm {
    pub species: String,
    pub count: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectEntry {
    pub label: String,
    pub charge: i32,
    /// E_d^q, eV
    pub total_energy: f64,
    pub stoichiometry: Vec<StoichiometryTerm>,
    pub correction: Correction,
    /// Excited-state entries carry their own correction but stay out of
    /// stability diagrams.
    pub excited: bool,
}

impl DefectEntry {
    pub fn new(
        label: impl Into<String>,
        charge: i32,
        total_energy: f64,
        stoichiometry: Vec<StoichiometryTerm>,
        correction: Correction,
    ) -> Result<Self> {
        let label = label.into();
        ensure_finite(&format!("{label}.total_energy"), &[total_energy])?;
        if let Correction::Explicit(c) = correction {
            ensure_finite(&format!("{label}.correction"), &[c])?;
        }
        let mut seen = BTreeSet::new();
        if let Some(t) = stoichiometry.iter().find(|t| !seen.insert(t.species.as_str())) {
            return Err(Error::DuplicateEntry(format!(
                "species {} in stoichiometry of {label}",
                t.species
            )));
        }
        Ok(Self {
            label,
            charge,
            total_energy,
            stoichiometry,
            correction,
            excited: false,
        })
    }

    pub fn excited(mut self) -> Self {
        self.excited = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemicalPotential {
    /// E_i: energy per atom of the elemental reference, eV.
    pub reference_energy: f64,
    /// Δμ_i relative to the reference, eV.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostReference {
    pub host_energy: f64,
    /// E_V, eV
    pub vbm: f64,
    /// Band gap, eV.
    pub gap: f64,
    pub chemical_potentials: BTreeMap<String, ChemicalPotential>,
    /// Static dielectric constant, needed only for analytic corrections.
    pub dielectric: Option<f64>,
    /// Supercell volume in Å³, needed only for analytic corrections.
    pub supercell_volume: Option<f64>,
}

impl HostReference {
    pub fn new(
        host_energy: f64,
        vbm: f64,
        gap: f64,
        chemical_potentials: BTreeMap<String, ChemicalPotential>,
    ) -> Result<Self> {
        ensure_finite("host", &[host_energy, vbm, gap])?;
        if gap <= 0.0 {
            return Err(Error::invalid("gap", "band gap must be positive"));
        }
        for (s, mu) in &chemical_potentials {
            ensure_finite(&format!("chemical_potentials.{s}"), &[mu.reference_energy, mu.delta])?;
        }
        Ok(Self {
            host_energy,
            vbm,
            gap,
            chemical_potentials,
            dielectric: None,
            supercell_volume: None,
        })
    }

    pub fn with_dielectric(mut self, dielectric: f64, supercell_volume: f64) -> Self {
        self.dielectric = Some(dielectric);
        self.supercell_volume = Some(supercell_volume);
        self
    }
}

/// Carbon-rich limit for SiC: Δμ_C = 0 and Δμ_Si = ΔH_f(SiC) (≤ 0).
pub fn carbon_rich_sic(e_carbon: f64, e_silicon: f64, formation_enthalpy: f64) -> BTreeMap<String, ChemicalPotential> {
    BTreeMap::from([
        (
            "C".to_string(),
            ChemicalPotential {
                reference_energy: e_carbon,
                delta: 0.0,
            },
        ),
        (
            "Si".to_string(),
            ChemicalPotential {
                reference_energy: e_silicon,
                delta: formation_enthalpy,
            },
        ),
    ])
}

/// Inputs that have been cross-checked against each other.
#[derive(Debug, Clone)]
pub struct ValidatedBundle {
    pub structure: CrystalStructure,
    pub hessian: Hessian,
    pub pair: GeometryPair,
}

/// Check that a structure, its Hessian and a geometry pair describe the same
/// atoms in the same order.
pub fn validate_bundle(
    structure: CrystalStructure,
    hessian: Hessian,
    pair: GeometryPair,
    pair_species: Option<&[String]>,
) -> Result<ValidatedBundle> {
    let n = structure.n_atoms();
    if hessian.dim() != 3 * n {
        return Err(Error::DimensionMismatch {
            field: "hessian".into(),
            expected: 3 * n,
            found: hessian.dim(),
        });
    }
    if pair.n_atoms() != n {
        return Err(Error::DimensionMismatch {
            field: "geometry pair".into(),
            expected: n,
            found: pair.n_atoms(),
        });
    }
    if let Some(expected) = hessian.structure_hash() {
        let found = structure.hash();
        if expected != found {
            return Err(Error::HashMismatch {
                expected: expected.to_string(),
                found,
            });
        }
    }
    if let Some(species) = pair_species {
        if species.len() != n {
            return Err(Error::DimensionMismatch {
                field: "geometry pair species".into(),
                expected: n,
                found: species.len(),
            });
        }
        for (i, (site, s)) in structure.sites().iter().zip(species).enumerate() {
            if &site.species != s {
                return Err(Error::SpeciesMismatch {
                    index: i,
                    expected: site.species.clone(),
                    found: s.clone(),
                });
            }
        }
    }
    Ok(ValidatedBundle {
        structure,
        hessian,
        pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(a: f64) -> [Vec3; 3] {
        [[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]]
    }

    fn two_carbon() -> CrystalStructure {
        let sites = vec![
            Site {
                species: "C".into(),
                mass: 12.011,
                position: [0.0; 3],
            },
            Site {
                species: "C".into(),
                mass: 12.011,
                position: [1.5, 0.0, 0.0],
            },
        ];
        CrystalStructure::new(cubic(10.0), sites).unwrap()
    }

    #[test]
    fn left_handed_lattice_rejected() {
        let mut l = cubic(5.0);
        l[2][2] = -5.0;
        let sites = two_carbon().sites().to_vec();
        assert!(CrystalStructure::new(l, sites).is_err());
    }

    #[test]
    fn bundle_accepts_consistent_inputs() {
        let s = two_carbon();
        let h = Hessian::new(6, vec![0.0; 36]).unwrap().with_structure_hash(s.hash());
        let g: Vec<Vec3> = s.sites().iter().map(|x| x.position).collect();
        let pair = GeometryPair::new(g.clone(), g).unwrap();
        let species = s.species();
        assert!(validate_bundle(s, h, pair, Some(&species)).is_ok());
    }

    #[test]
    fn five_by_five_hessian_rejected() {
        let err = Hessian::new(5, vec![0.0; 25]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn nan_coordinate_rejected() {
        let g = vec![[0.0; 3], [1.0, 0.0, 0.0]];
        let e = vec![[0.0; 3], [f64::NAN, 0.0, 0.0]];
        match GeometryPair::new(g, e).unwrap_err() {
            Error::NonFiniteValue { field } => assert_eq!(field, "excited[3]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn species_order_checked() {
        let s = two_carbon();
        let h = Hessian::new(6, vec![0.0; 36]).unwrap();
        let g: Vec<Vec3> = s.sites().iter().map(|x| x.position).collect();
        let pair = GeometryPair::new(g.clone(), g).unwrap();
        let species = vec!["C".to_string(), "Si".to_string()];
        match validate_bundle(s, h, pair, Some(&species)).unwrap_err() {
            Error::SpeciesMismatch { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stale_hessian_hash_rejected() {
        let s = two_carbon();
        let h = Hessian::new(6, vec![0.0; 36])
            .unwrap()
            .with_structure_hash("sha256:00");
        let g: Vec<Vec3> = s.sites().iter().map(|x| x.position).collect();
        let pair = GeometryPair::new(g.clone(), g).unwrap();
        assert!(matches!(
            validate_bundle(s, h, pair, None).unwrap_err(),
            Error::HashMismatch { .. }
        ));
    }

    #[test]
    fn delta_is_excited_minus_ground() {
        let pair = GeometryPair::new(vec![[1.0, 2.0, 3.0]], vec![[1.5, 1.0, 3.25]]).unwrap();
        assert_eq!(pair.delta(), &[[0.5, -1.0, 0.25]]);
    }

    #[test]
    fn hr_entries_sorted_and_summed() {
        let hr = HrDecomposition::new(vec![
            HrEntry { mode: 0, omega_mev: 150.0, qk: 0.1, sk: 0.5 },
            HrEntry { mode: 1, omega_mev: 60.0, qk: 0.2, sk: 1.25 },
        ])
        .unwrap();
        assert_eq!(hr.entries()[0].mode, 1);
        assert_eq!(hr.total(), 1.75);
        assert_eq!(hr.relaxation_energy_mev(), 0.5 * 150.0 + 1.25 * 60.0);
    }

    #[test]
    fn duplicate_stoichiometry_species_rejected() {
        let st = vec![
            StoichiometryTerm { species: "C".into(), count: 1 },
            StoichiometryTerm { species: "C".into(), count: -1 },
        ];
        assert!(DefectEntry::new("x", 0, -1.0, st, Correction::default()).is_err());
    }
}
