//! Brute-force Franck–Condon sums for a handful of displaced modes.
//!
//! Every vibrational final state m = (m₁…m_M) with Σm ≤ cap contributes a
//! line at E_ZPL − Σ m_k ℏω_k with weight Π_k e^{−S_k} S_k^{m_k}/m_k!. This
//! route shares nothing with the generating-function code and serves as its
//! cross-check.

use rayon::prelude::*;
use crate::error::{Error, Result};
use crate::model::{EnergyGrid, HrDecomposition};
use crate::numeric::CompensatedSum;
use crate::units::MEV_PER_EV;
use std::f64::consts::PI;

use crate::voigt::{voigt, voigt_far, voigt_mass};

pub const MAX_MODES: usize = 8;
pub const MAX_CAP: u32 = 24;
/// Branches whose partial weight drops below this are pruned.
pub const PRUNE_WEIGHT: f64 = 1e-16;
/// Residual mass above this means the cap truncates the ladder.
pub const TAIL_TOLERANCE: f64 = 1e-6;
/// Each line is evaluated only where its Lorentzian tail beyond still holds
/// more than this much mass.
pub const SKIPPED_MASS_PER_LINE: f64 = 1e-12;
/// Within this many widths of a line centre the exact Voigt is evaluated.
pub const VOIGT_CORE_WIDTHS: f64 = 40.0;
const EVAL_CHUNK: usize = 2048;
/// Lines lighter than this need not lie inside the evaluation grid.
pub const NEGLIGIBLE_LINE_WEIGHT: f64 = 1e-12;

/// One mode taking part in the enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderMode {
    pub mode: usize,
    pub omega_mev: f64,
    pub sk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcLine {
    pub quanta: Vec<u32>,
    pub weight: f64,
    /// Σ m_k ℏω_k, meV below the ZPL.
    pub offset_mev: f64,
}

impl FcLine {
    pub fn total_quanta(&self) -> u32 {
        self.quanta.iter().sum()
    }

    /// "m1,m2,…"
    pub fn label(&self) -> String {
        self.quanta.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcLadder {
    modes: Vec<LadderMode>,
    lines: Vec<FcLine>,
    tail: f64,
    cap: u32,
}

impl FcLadder {
    pub fn modes(&self) -> &[LadderMode] {
        &self.modes
    }

    /// Lines in lexicographic order of their quanta vectors.
    pub fn lines(&self) -> &[FcLine] {
        &self.lines
    }

    /// 1 − Σ weights: mass beyond the cap or pruned.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn total_weight(&self) -> f64 {
        self.lines.iter().map(|l| l.weight).collect::<CompensatedSum>().value()
    }

    /// Fails with `CapTooSmall` when the residual tail exceeds [`TAIL_TOLERANCE`].
    pub fn check_tail(&self) -> Result<()> {
        if self.tail > TAIL_TOLERANCE {
            Err(Error::CapTooSmall { tail: self.tail })
        } else {
            Ok(())
        }
    }

    /// Weight-averaged offset of the kept lines, meV.
    pub fn mean_offset_mev(&self) -> f64 {
        let num: CompensatedSum = self.lines.iter().map(|l| l.weight * l.offset_mev).collect();
        num.value() / self.total_weight()
    }

    /// Σ S_k ℏω_k over the enumerated modes, meV.
    pub fn expected_offset_mev(&self) -> f64 {
        self.modes.iter().map(|m| m.sk * m.omega_mev).collect::<CompensatedSum>().value()
    }

    /// Summed weight of all lines with `n` total quanta.
    pub fn weight_with_quanta(&self, n: u32) -> f64 {
        self.lines
            .iter()
            .filter(|l| l.total_quanta() == n)
            .map(|l| l.weight)
            .collect::<CompensatedSum>()
            .value()
    }
}

fn poisson(s: f64, m: u32) -> f64 {
    if s == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    // log form keeps large m finite
    let ln_fact: f64 = (1..=m).map(|k| (k as f64).ln()).sum();
    (-s + m as f64 * s.ln() - ln_fact).exp()
}

/// Enumerate all quanta vectors of the modes with S_k > 0 up to `cap` total quanta.
pub fn enumerate_fc(hr: &HrDecomposition, cap: u32) -> Result<FcLadder> {
    let modes: Vec<LadderMode> = hr
        .entries()
        .iter()
        .filter(|e| e.sk > 0.0)
        .map(|e| LadderMode {
            mode: e.mode,
            omega_mev: e.omega_mev,
            sk: e.sk,
        })
        .collect();
    if modes.len() > MAX_MODES {
        return Err(Error::TooManyModes {
            count: modes.len(),
            max: MAX_MODES,
        });
    }
    if cap > MAX_CAP {
        return Err(Error::CapOutOfRange {
            cap: cap as usize,
            max: MAX_CAP as usize,
        });
    }
    let mut lines = Vec::new();
    let mut quanta = vec![0u32; modes.len()];
    recurse(&modes, 0, cap, 1.0, 0.0, &mut quanta, &mut lines);
    let kept: CompensatedSum = lines.iter().map(|l| l.weight).collect();
    let tail = (1.0 - kept.value()).max(0.0);
    if tail > TAIL_TOLERANCE {
        log::warn!("cap {cap} leaves a tail mass of {tail:e}");
    }
    Ok(FcLadder { modes, lines, tail, cap })
}

fn recurse(
    modes: &[LadderMode],
    k: usize,
    remaining: u32,
    weight: f64,
    offset: f64,
    quanta: &mut Vec<u32>,
    out: &mut Vec<FcLine>,
) {
    if k == modes.len() {
        out.push(FcLine {
            quanta: quanta.clone(),
            weight,
            offset_mev: offset,
        });
        return;
    }
    let mode = modes[k];
    for m in 0..=remaining {
        let w = weight * poisson(mode.sk, m);
        if w < PRUNE_WEIGHT {
            if m as f64 > mode.sk {
                break;
            }
            continue;
        }
        quanta[k] = m;
        recurse(modes, k + 1, remaining - m, w, offset + m as f64 * mode.omega_mev, quanta, out);
    }
    quanta[k] = 0;
}

/// Broadened stick spectrum on a set of photon energies.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpectrum {
    pub energies_ev: Vec<f64>,
    /// Per eV.
    pub values: Vec<f64>,
    /// Weight of the kept lines falling outside the energy range.
    pub outside_mass: f64,
    /// Upper bound on the far-tail mass of light lines that was not evaluated.
    pub truncated_mass: f64,
    /// Ladder tail carried over unchanged.
    pub tail: f64,
}

impl OracleSpectrum {
    /// Trapezoid integral; for a uniform grid this plus `outside_mass` equals 1 − tail.
    pub fn integral(&self) -> f64 {
        self.energies_ev
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(e, v)| 0.5 * (v[0] + v[1]) * (e[1] - e[0]))
            .collect::<CompensatedSum>()
            .value()
    }
}

/// Broadening applied to each line: Lorentzian HWHM γ and, for a line with
/// n total quanta, Gaussian std σ√n. This is the line shape the
/// generating function produces from a Gaussian-smeared spectral density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Broadening {
    pub gamma_mev: f64,
    pub sigma_mev: f64,
}

impl Broadening {
    pub fn lorentzian(gamma_mev: f64) -> Self {
        Self {
            gamma_mev,
            sigma_mev: 0.0,
        }
    }

    fn line_sigma(&self, line: &FcLine) -> f64 {
        self.sigma_mev * (line.total_quanta() as f64).sqrt()
    }
}

/// Evaluate the broadened ladder at arbitrary ascending `energies_ev`.
pub fn oracle_on(ladder: &FcLadder, zpl_ev: f64, broadening: Broadening, energies_ev: &[f64]) -> Result<OracleSpectrum> {
    if !(broadening.gamma_mev > 0.0) {
        return Err(Error::NonPositiveGamma(broadening.gamma_mev));
    }
    if !(broadening.sigma_mev >= 0.0) {
        return Err(Error::invalid("sigma", "must be non-negative"));
    }
    let (lo, hi) = match (energies_ev.first(), energies_ev.last()) {
        (Some(&a), Some(&b)) if b > a => (a * MEV_PER_EV, b * MEV_PER_EV),
        _ => return Err(Error::GridTooNarrow("need at least two ascending energies".into())),
    };
    let zpl = zpl_ev * MEV_PER_EV;
    let margin = 10.0 * broadening.gamma_mev;
    for l in ladder.lines.iter().filter(|l| l.weight >= NEGLIGIBLE_LINE_WEIGHT) {
        let c = zpl - l.offset_mev;
        if c - margin < lo || c + margin > hi {
            return Err(Error::GridTooNarrow(format!(
                "line {} at {} eV (weight {:e}) is within 10γ of the grid edge [{}, {}] eV",
                l.label(),
                c / MEV_PER_EV,
                l.weight,
                lo / MEV_PER_EV,
                hi / MEV_PER_EV
            )));
        }
    }
    let gamma = broadening.gamma_mev;
    let x: Vec<f64> = energies_ev.iter().map(|e| e * MEV_PER_EV).collect();
    // (centre, σ_n, weight, first index, end index) per line
    let spans: Vec<(f64, f64, f64, usize, usize)> = ladder
        .lines
        .iter()
        .map(|l| {
            let c = zpl - l.offset_mev;
            let reach = 2.0 * gamma * l.weight / (PI * SKIPPED_MASS_PER_LINE);
            let i0 = x.partition_point(|&v| v < c - reach);
            let i1 = x.partition_point(|&v| v <= c + reach);
            (c, broadening.line_sigma(l), l.weight, i0, i1)
        })
        .collect();
    let mut values = vec![0.0; x.len()];
    values.par_chunks_mut(EVAL_CHUNK).enumerate().for_each(|(chunk, out)| {
        let start = chunk * EVAL_CHUNK;
        let end = start + out.len();
        for &(c, sigma, w, i0, i1) in &spans {
            let core = VOIGT_CORE_WIDTHS * sigma.max(gamma);
            for i in i0.max(start)..i1.min(end) {
                let d = x[i] - c;
                let v = if d.abs() <= core { voigt(d, sigma, gamma) } else { voigt_far(d, sigma, gamma) };
                out[i - start] += w * v * MEV_PER_EV;
            }
        }
    });
    let mut outside = CompensatedSum::new();
    let mut truncated = CompensatedSum::new();
    for (l, &(c, sigma, w, i0, i1)) in ladder.lines.iter().zip(&spans) {
        let inside = voigt_mass(lo - c, hi - c, sigma, gamma);
        outside.add(w * (1.0 - inside));
        if i1 > i0 {
            let covered = voigt_mass(x[i0] - c, x[i1 - 1] - c, sigma, gamma);
            truncated.add(w * (inside - covered).max(0.0));
        } else {
            truncated.add(w * inside);
        }
        debug_assert!(l.weight == w);
    }
    Ok(OracleSpectrum {
        energies_ev: energies_ev.to_vec(),
        values,
        outside_mass: outside.value(),
        truncated_mass: truncated.value(),
        tail: ladder.tail,
    })
}

/// Evaluate the broadened ladder on a uniform grid given in eV.
pub fn broadened_oracle_spectrum(
    ladder: &FcLadder,
    zpl_ev: f64,
    broadening: Broadening,
    grid: EnergyGrid,
) -> Result<OracleSpectrum> {
    oracle_on(ladder, zpl_ev, broadening, &grid.points())
}
