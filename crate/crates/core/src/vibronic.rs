//! Huang–Rhys decomposition and the generating-function route to the
//! zero-temperature emission lineshape.
//!
//! Pipeline: per-mode displacements q_k (from geometries or forces) →
//! partial factors S_k → Gaussian-smeared spectral density S(ℏω) → S(t) and
//! G(t) = exp(S(t) − S(0)) → A(E_ZPL − ℏω) = (1/2π)∫G(t)e^{iωt−γ|t|}dt →
//! normalized L(ℏω).
//!
//! Both q_k routes use mass-weighted eigenvectors r_k. The displacement route
//! is q_k = Σ √m_α ΔR_{αi} r_{k;αi}; the force route divides the forces by
//! √m_α and the eigenvalue of the mass-weighted Hessian, so the two agree
//! exactly for a harmonic surface with ΔF = H·ΔR. q_k is in amu^½·Å.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::{
    EnergyGrid, ForceDelta, GeometryPair, HrDecomposition, HrEntry, Lineshape, LineshapeConfig,
    LineshapeDiagnostics, PhononBasis, SpectralDensity,
};
use crate::numeric::{compensated_sum, is_power_of_two, trapezoid};
use crate::units::{HBAR_AMU_A2_PER_FS, HBAR_MEV_FS, MEV_PER_EV};

/// Modes with |ℏω| at or below this (meV) are treated as acoustic/zero modes.
pub const DEFAULT_ZERO_MODE_THRESHOLD_MEV: f64 = 0.01;
/// Default Gaussian smearing of S(ℏω), meV.
pub const DEFAULT_SIGMA_MEV: f64 = 2.0;
/// Default Lorentzian damping, meV.
pub const DEFAULT_GAMMA_MEV: f64 = 1.0;
/// Default energy resolution of the FFT grid, meV.
pub const DEFAULT_ENERGY_STEP_MEV: f64 = 0.1;
/// Modes with smaller S_k never receive a peak label.
pub const LABEL_THRESHOLD: f64 = 1e-4;
/// Smearing tails are carried this many σ past the outermost mode.
pub const SMEARING_SPAN_SIGMAS: f64 = 6.0;

const MAX_FFT_LEN: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrOptions {
    pub zero_mode_threshold_mev: f64,
}

impl Default for HrOptions {
    fn default() -> Self {
        Self {
            zero_mode_threshold_mev: DEFAULT_ZERO_MODE_THRESHOLD_MEV,
        }
    }
}

/// Per-mode q_k plus the modes that were left out of the force route.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeProjection {
    pub qk: Vec<f64>,
    /// Zero-frequency modes whose q_k was set to 0.
    pub excluded: Vec<usize>,
}

fn reject_imaginary(basis: &PhononBasis, opts: &HrOptions) -> Result<()> {
    match basis
        .modes()
        .iter()
        .position(|m| m.omega_mev < -opts.zero_mode_threshold_mev)
    {
        Some(k) => Err(Error::ImaginaryModePresent {
            mode: k,
            omega_mev: basis.modes()[k].omega_mev,
        }),
        None => Ok(()),
    }
}

/// q_k = Σ_{αi} √m_α ΔR_{αi} r_{k;αi}.
pub fn qk_from_displacement(basis: &PhononBasis, pair: &GeometryPair, opts: &HrOptions) -> Result<ModeProjection> {
    if pair.n_atoms() != basis.n_atoms() {
        return Err(Error::DimensionMismatch {
            field: "geometry pair".into(),
            expected: basis.n_atoms(),
            found: pair.n_atoms(),
        });
    }
    reject_imaginary(basis, opts)?;
    let weighted: Vec<f64> = pair
        .delta()
        .iter()
        .zip(basis.masses())
        .flat_map(|(d, &m)| {
            let s = m.sqrt();
            [s * d[0], s * d[1], s * d[2]]
        })
        .collect();
    let qk = basis
        .modes()
        .iter()
        .map(|m| crate::numeric::dot(&m.vector, &weighted))
        .collect();
    Ok(ModeProjection { qk, excluded: vec![] })
}

/// q_k = (1/λ_k) Σ_{αi} (F_e − F_g)_{αi} r_{k;αi} / √m_α, λ_k the eigenvalue
/// of the mass-weighted Hessian. Zero modes are excluded with a warning.
pub fn qk_from_forces(basis: &PhononBasis, forces: &ForceDelta, opts: &HrOptions) -> Result<ModeProjection> {
    if forces.n_atoms() != basis.n_atoms() {
        return Err(Error::DimensionMismatch {
            field: "force delta".into(),
            expected: basis.n_atoms(),
            found: forces.n_atoms(),
        });
    }
    reject_imaginary(basis, opts)?;
    let weighted: Vec<f64> = forces
        .values()
        .chunks_exact(3)
        .zip(basis.masses())
        .flat_map(|(f, &m)| {
            let s = 1.0 / m.sqrt();
            [s * f[0], s * f[1], s * f[2]]
        })
        .collect();
    let mut excluded = Vec::new();
    let qk = basis
        .modes()
        .iter()
        .enumerate()
        .map(|(k, m)| {
            if m.omega_mev.abs() <= opts.zero_mode_threshold_mev || m.eigenvalue <= 0.0 {
                excluded.push(k);
                0.0
            } else {
                crate::numeric::dot(&m.vector, &weighted) / m.eigenvalue
            }
        })
        .collect();
    if !excluded.is_empty() {
        log::warn!(
            "force route: {} zero-frequency mode(s) excluded: {:?}",
            excluded.len(),
            excluded
        );
    }
    Ok(ModeProjection { qk, excluded })
}

/// S_k = ω_k q_k² / (2ℏ) for paired slices of q_k (amu^½·Å) and ℏω_k (meV).
pub fn partial_hr(qk: &[f64], omega_mev: &[f64]) -> Result<HrDecomposition> {
    if qk.len() != omega_mev.len() {
        return Err(Error::DimensionMismatch {
            field: "omega".into(),
            expected: qk.len(),
            found: omega_mev.len(),
        });
    }
    let entries = qk
        .iter()
        .zip(omega_mev)
        .enumerate()
        .map(|(k, (&q, &w))| {
            if w < 0.0 {
                return Err(Error::NegativeFrequency { index: k, omega_mev: w });
            }
            let omega = w / HBAR_MEV_FS;
            Ok(HrEntry {
                mode: k,
                omega_mev: w,
                qk: q,
                sk: omega * q * q / (2.0 * HBAR_AMU_A2_PER_FS),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    HrDecomposition::new(entries)
}

/// Partial HR factors for a projection onto `basis`, zero modes pinned to ω = 0.
pub fn decompose(basis: &PhononBasis, projection: &ModeProjection, opts: &HrOptions) -> Result<HrDecomposition> {
    let omega: Vec<f64> = basis
        .modes()
        .iter()
        .map(|m| {
            if m.omega_mev.abs() <= opts.zero_mode_threshold_mev {
                0.0
            } else {
                m.omega_mev
            }
        })
        .collect();
    partial_hr(&projection.qk, &omega)
}

fn gaussian(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Smallest grid aligned to multiples of `step` that spans every coupled mode ± 6σ.
pub fn covering_grid(hr: &HrDecomposition, sigma_mev: f64, step_mev: f64) -> Result<EnergyGrid> {
    let active: Vec<f64> = hr.entries().iter().filter(|e| e.sk > 0.0).map(|e| e.omega_mev).collect();
    let (lo, hi) = if active.is_empty() {
        (0.0, 0.0)
    } else {
        (
            active.iter().copied().fold(f64::INFINITY, f64::min),
            active.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let margin = (SMEARING_SPAN_SIGMAS + 2.0) * sigma_mev;
    let first = ((lo - margin) / step_mev).floor();
    let last = ((hi + margin) / step_mev).ceil();
    EnergyGrid::new(first * step_mev, step_mev, (last - first) as usize + 1)
}

/// S(ℏω) = Σ_k S_k g(ℏω − ℏω_k; σ) on `grid` (meV).
pub fn spectral_density(hr: &HrDecomposition, sigma_mev: f64, grid: EnergyGrid) -> Result<SpectralDensity> {
    if !(sigma_mev > 0.0) {
        return Err(Error::invalid("sigma", format!("must be positive, got {sigma_mev}")));
    }
    let span = SMEARING_SPAN_SIGMAS * sigma_mev;
    for e in hr.entries().iter().filter(|e| e.sk > 0.0) {
        if e.omega_mev - span < grid.start - 1e-9 || e.omega_mev + span > grid.end() + 1e-9 {
            return Err(Error::GridTooNarrow(format!(
                "spectral grid [{}, {}] meV does not cover mode {} at {} meV ± {span} meV",
                grid.start,
                grid.end(),
                e.mode,
                e.omega_mev
            )));
        }
    }
    let active: Vec<&HrEntry> = hr.entries().iter().filter(|e| e.sk > 0.0).collect();
    let values = (0..grid.len)
        .map(|i| {
            let x = grid.point(i);
            compensated_sum(active.iter().map(|e| e.sk * gaussian(x - e.omega_mev, sigma_mev)))
        })
        .collect();
    Ok(SpectralDensity {
        grid,
        values,
        sigma_mev,
    })
}

/// Uniform time grid t_j = (j − n/2)·dt, j in 0..n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt_fs: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(dt_fs: f64, n: usize) -> Result<Self> {
        if !(dt_fs > 0.0) || !dt_fs.is_finite() {
            return Err(Error::invalid("time_step", format!("must be positive, got {dt_fs}")));
        }
        if !is_power_of_two(n) || n < 4 {
            return Err(Error::invalid("time grid", format!("length {n} must be a power of two ≥ 4")));
        }
        Ok(Self { dt_fs, n })
    }

    pub fn time(&self, j: usize) -> f64 {
        (j as f64 - (self.n / 2) as f64) * self.dt_fs
    }

    /// Energy spacing (meV) of the conjugate FFT grid, 2πℏ/(n·dt).
    pub fn energy_step_mev(&self) -> f64 {
        2.0 * PI * HBAR_MEV_FS / (self.n as f64 * self.dt_fs)
    }

    /// Half-span T, fs.
    pub fn half_span_fs(&self) -> f64 {
        self.n as f64 * self.dt_fs / 2.0
    }
}

/// G(t) = exp(S(t) − S(0)) on a symmetric time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingFunction {
    grid: TimeGrid,
    values: Vec<Complex64>,
    s0: f64,
    max_energy_mev: f64,
}

impl GeneratingFunction {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.grid.n).map(|j| self.grid.time(j)).collect()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// S(0) = ∫S(ℏω)d(ℏω) as evaluated on the spectral grid.
    pub fn s0(&self) -> f64 {
        self.s0
    }

    /// Largest |ℏω| on the spectral grid, meV.
    pub fn max_energy_mev(&self) -> f64 {
        self.max_energy_mev
    }

    /// Value at t = 0 (index n/2).
    pub fn at_zero(&self) -> Complex64 {
        self.values[self.grid.n / 2]
    }
}

fn fft_commensurate(sd: &SpectralDensity, tg: &TimeGrid) -> Option<i64> {
    let de = tg.energy_step_mev();
    if ((sd.grid.step - de) / de).abs() > 1e-9 {
        return None;
    }
    let offset = sd.grid.start / sd.grid.step;
    let rounded = offset.round();
    ((offset - rounded).abs() < 1e-6).then_some(rounded as i64)
}

fn direct_s_t(sd: &SpectralDensity, tg: &TimeGrid) -> Vec<Complex64> {
    let step = sd.grid.step;
    (0..tg.n)
        .map(|j| {
            let t = tg.time(j);
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in sd.values.iter().enumerate() {
                let phase = -sd.grid.point(i) / HBAR_MEV_FS * t;
                re += v * step * phase.cos();
                im += v * step * phase.sin();
            }
            Complex64::new(re, im)
        })
        .collect()
}

/// Evaluate G(t) on `time_grid`.
///
/// When the spectral grid spacing equals 2πℏ/(n·dt) and its origin is a
/// multiple of the spacing, S(t) is one FFT; otherwise it is summed directly.
pub fn generating_function(sd: &SpectralDensity, time_grid: TimeGrid) -> Result<GeneratingFunction> {
    let n = time_grid.n;
    let max_energy = sd.grid.start.abs().max(sd.grid.end().abs());
    let omega_max = max_energy / HBAR_MEV_FS;
    if omega_max > 0.0 && time_grid.dt_fs > PI / (4.0 * omega_max) {
        return Err(Error::AliasedGrid(format!(
            "time step {} fs exceeds π/(4ω_max) = {} fs",
            time_grid.dt_fs,
            PI / (4.0 * omega_max)
        )));
    }
    let step = sd.grid.step;
    let s0 = compensated_sum(sd.values.iter().map(|v| v * step));

    let mut s_t: Vec<Complex64> = match fft_commensurate(sd, &time_grid) {
        Some(first) => {
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for (j, v) in sd.values.iter().enumerate() {
                let idx = (first + j as i64).rem_euclid(n as i64) as usize;
                buf[idx].re += v * step;
            }
            FftPlanner::new().plan_fft_forward(n).process(&mut buf);
            // buf[m] = S(m·dt) for wrapped m; reorder to ascending t.
            (0..n).map(|j| buf[(j + n / 2) % n]).collect()
        }
        None => direct_s_t(sd, &time_grid),
    };
    for s in s_t.iter_mut() {
        *s = (*s - s0).exp();
    }
    s_t[n / 2] = Complex64::new(1.0, 0.0);
    Ok(GeneratingFunction {
        grid: time_grid,
        values: s_t,
        s0,
        max_energy_mev: max_energy,
    })
}

/// Required half-width (meV) of the FFT energy axis for a coupling of total
/// `s` with highest active phonon energy `e_max`.
fn sideband_reach_mev(s: f64, e_max: f64, gamma: f64) -> f64 {
    (10.0 * s).max(4.0).max(poisson_quantile(s, SIDEBAND_TAIL) as f64) * e_max + 50.0 * gamma
}

/// Multi-phonon mass left outside the default window.
const SIDEBAND_TAIL: f64 = 1e-12;

/// Smallest n with P(N > n) < `tail` for N ~ Poisson(s).
fn poisson_quantile(s: f64, tail: f64) -> u32 {
    let mut p = (-s).exp();
    let mut cdf = p;
    let mut n = 0;
    while 1.0 - cdf >= tail && p > 0.0 && n < 10_000 {
        n += 1;
        p *= s / n as f64;
        cdf += p;
    }
    n
}

impl LineshapeConfig {
    /// Config with the time grid derived from an energy resolution.
    ///
    /// The grid period is 2πℏ/Δε; the FFT length is the smallest power of two
    /// whose energy axis covers the sideband (≥ max(10S, 4) phonon quanta),
    /// the output window, and at least 5000γ on each side of the ZPL.
    pub fn auto(
        zpl_ev: f64,
        gamma_mev: f64,
        sigma_mev: f64,
        hr: &HrDecomposition,
        energy_step_mev: f64,
        window_ev: Option<(f64, f64)>,
    ) -> Result<Self> {
        if !(gamma_mev > 0.0) {
            return Err(Error::NonPositiveGamma(gamma_mev));
        }
        if !(energy_step_mev > 0.0) || !energy_step_mev.is_finite() {
            return Err(Error::invalid("step", format!("must be positive, got {energy_step_mev}")));
        }
        if !(zpl_ev > 0.0) || !zpl_ev.is_finite() {
            return Err(Error::invalid("zpl", format!("must be positive, got {zpl_ev}")));
        }
        let e_max = hr.max_active_omega();
        // extent of the smeared density on the covering grid
        let e_ext = e_max + (SMEARING_SPAN_SIGMAS + 2.0) * sigma_mev + energy_step_mev;
        let mut half = sideband_reach_mev(hr.total(), e_ext, gamma_mev) + 100.0 * gamma_mev;
        if let Some((lo, hi)) = window_ev {
            half = half.max((zpl_ev - lo).abs() * MEV_PER_EV + 100.0 * gamma_mev);
            half = half.max((hi - zpl_ev).abs() * MEV_PER_EV + 100.0 * gamma_mev);
        }
        half = half.max(5000.0 * gamma_mev).max(8.0 * (e_max + 8.0 * sigma_mev));
        let points = (2.0 * half / energy_step_mev).ceil() as usize;
        let n = points.max(4).next_power_of_two();
        if n > MAX_FFT_LEN {
            return Err(Error::invalid(
                "step",
                format!("energy step {energy_step_mev} meV needs an FFT of length {n}"),
            ));
        }
        let period = 2.0 * PI * HBAR_MEV_FS / energy_step_mev;
        Ok(Self {
            zpl_ev,
            gamma_mev,
            sigma_mev,
            time_step_fs: period / n as f64,
            time_span_fs: period / 2.0,
            refractive_index: None,
            dipole_magnitude: None,
            omega_cubed: true,
            window_ev,
        })
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let ratio = 2.0 * self.time_span_fs / self.time_step_fs;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::invalid(
                "time grid",
                "2·time_span/time_step must be an integer power of two",
            ));
        }
        TimeGrid::new(self.time_step_fs, n as usize)
    }

    /// Energy resolution of the output grid, meV.
    pub fn energy_step_mev(&self) -> Result<f64> {
        Ok(self.time_grid()?.energy_step_mev())
    }
}

/// Lineshape from a generating function.
pub fn lineshape(gf: &GeneratingFunction, config: &LineshapeConfig) -> Result<Lineshape> {
    if !(config.gamma_mev > 0.0) {
        return Err(Error::NonPositiveGamma(config.gamma_mev));
    }
    if !(config.zpl_ev > 0.0) || !config.zpl_ev.is_finite() {
        return Err(Error::invalid("zpl", format!("must be positive, got {}", config.zpl_ev)));
    }
    let tg = gf.grid;
    let n = tg.n;
    let gamma_t = config.gamma_mev / HBAR_MEV_FS;
    let half_span = tg.half_span_fs();
    if gamma_t * half_span < 10.0 {
        return Err(Error::GridTooNarrow(format!(
            "time span {half_span} fs is shorter than 10/γ = {} fs",
            10.0 / gamma_t
        )));
    }
    let de = tg.energy_step_mev();
    let half_energy = n as f64 / 2.0 * de;
    let e_max = gf.max_energy_mev;
    let quanta = (10.0 * gf.s0).max(4.0);
    if half_energy < quanta * e_max {
        return Err(Error::AliasedGrid(format!(
            "energy axis ±{half_energy} meV cannot hold {quanta:.1} quanta of {e_max} meV"
        )));
    }

    // f(t) = G(t)e^{−γ|t|} in wrapped order, then A_k = dt/(2π) Σ f e^{+iω_k t}.
    let mut buf: Vec<Complex64> = (0..n)
        .map(|m| {
            let j = (m + n / 2) % n;
            let t = tg.time(j);
            gf.values[j] * (-gamma_t * t.abs()).exp()
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    // per unit ω (fs) → per meV
    let scale = tg.dt_fs / (2.0 * PI) / HBAR_MEV_FS;
    let peak = buf.iter().map(|c| c.re.abs()).fold(0.0, f64::max) * scale;
    let max_imag = buf.iter().map(|c| c.im.abs()).fold(0.0, f64::max) * scale;
    let full_integral = compensated_sum(buf.iter().map(|c| c.re * scale * de));

    // k-th output bin sits at E_ZPL − k·Δε for k wrapped into [−n/2, n/2).
    let zpl_mev = config.zpl_ev * MEV_PER_EV;
    // ZPL plus sideband; beyond it only Lorentzian far tails remain
    let reach = sideband_reach_mev(gf.s0, e_max, config.gamma_mev);
    let axis_floor = zpl_mev - (n / 2 - 1) as f64 * de;
    let support = (
        ((zpl_mev - reach).max(axis_floor) / MEV_PER_EV).max(de / MEV_PER_EV),
        (zpl_mev + 50.0 * config.gamma_mev) / MEV_PER_EV,
    );
    let (lo_ev, hi_ev) = config.window_ev.unwrap_or(support);
    if !(lo_ev < hi_ev) {
        return Err(Error::invalid("window", format!("empty window [{lo_ev}, {hi_ev}] eV")));
    }
    if hi_ev < support.0 || lo_ev > support.1 {
        return Err(Error::GridTooNarrow(format!(
            "window [{lo_ev}, {hi_ev}] eV misses the spectral support [{}, {}] eV",
            support.0, support.1
        )));
    }
    if config.omega_cubed && lo_ev <= 0.0 {
        return Err(Error::invalid("window", "lower bound must be positive with ω³ weighting"));
    }
    let k_hi = ((zpl_mev - lo_ev * MEV_PER_EV) / de).floor() as i64;
    let k_lo = ((zpl_mev - hi_ev * MEV_PER_EV) / de).ceil() as i64;
    let half_n = (n / 2) as i64;
    if k_hi >= half_n || k_lo < -half_n {
        return Err(Error::GridTooNarrow(format!(
            "window [{lo_ev}, {hi_ev}] eV exceeds the FFT energy axis of ±{} eV around the ZPL",
            half_energy / MEV_PER_EV
        )));
    }
    if k_hi - k_lo < 1 {
        return Err(Error::GridTooNarrow("window holds fewer than two grid points".into()));
    }
    let per_ev = scale * MEV_PER_EV;
    let mut energies = Vec::with_capacity((k_hi - k_lo + 1) as usize);
    let mut spectral = Vec::with_capacity(energies.capacity());
    for k in (k_lo..=k_hi).rev() {
        let idx = k.rem_euclid(n as i64) as usize;
        energies.push((zpl_mev - k as f64 * de) / MEV_PER_EV);
        spectral.push(buf[idx].re * per_ev);
    }
    let step_ev = de / MEV_PER_EV;
    let window_mass = trapezoid(&spectral, step_ev);
    if !(window_mass > 1e-6) {
        return Err(Error::GridTooNarrow(format!(
            "window [{lo_ev}, {hi_ev}] eV holds {window_mass:e} of the spectral weight"
        )));
    }

    let weighted: Vec<f64> = if config.omega_cubed {
        energies.iter().zip(&spectral).map(|(e, a)| e.powi(3) * a).collect()
    } else {
        spectral.clone()
    };
    let norm_constant = 1.0 / trapezoid(&weighted, step_ev);
    let mut min_clipped: f64 = 0.0;
    let intensity = weighted
        .iter()
        .map(|w| {
            let v = w * norm_constant;
            if v < 0.0 {
                min_clipped = min_clipped.min(v);
                0.0
            } else {
                v
            }
        })
        .collect::<Vec<_>>();
    // Clipping can only remove ringing-sized mass; renormalize exactly.
    let renorm = trapezoid(&intensity, step_ev);
    let intensity = intensity.into_iter().map(|v| v / renorm).collect();

    Ok(Lineshape {
        energies_ev: energies,
        intensity,
        spectral_function: spectral,
        zpl_ev: config.zpl_ev,
        gamma_mev: config.gamma_mev,
        sigma_mev: config.sigma_mev,
        norm_constant: norm_constant / renorm,
        omega_cubed: config.omega_cubed,
        diagnostics: LineshapeDiagnostics {
            full_integral,
            max_imag_ratio: if peak > 0.0 { max_imag / peak } else { 0.0 },
            min_clipped,
            window_mass,
        },
    })
}

/// Full chain from HR factors to a normalized lineshape.
pub fn emission_lineshape(hr: &HrDecomposition, config: &LineshapeConfig) -> Result<(Lineshape, GeneratingFunction)> {
    let tg = config.time_grid()?;
    let grid = covering_grid(hr, config.sigma_mev, tg.energy_step_mev())?;
    let sd = spectral_density(hr, config.sigma_mev, grid)?;
    let integral = sd.integral();
    let total = hr.total();
    if total > 0.0 && ((integral - total) / total).abs() > 1e-6 {
        return Err(Error::GridTooNarrow(format!(
            "smeared spectral density integrates to {integral}, expected {total}; σ = {} meV is not resolved by the {} meV grid",
            config.sigma_mev,
            grid.step
        )));
    }
    let gf = generating_function(&sd, tg)?;
    let ls = lineshape(&gf, config)?;
    Ok((ls, gf))
}

/// Eq.-A1-style intensity before normalization: n_D·|μ|²·E³·A(E), arbitrary units.
pub fn unnormalized_intensity(ls: &Lineshape, config: &LineshapeConfig) -> Vec<f64> {
    let pre = config.refractive_index.unwrap_or(1.0) * config.dipole_magnitude.unwrap_or(1.0).powi(2);
    ls.energies_ev
        .iter()
        .zip(&ls.spectral_function)
        .map(|(e, a)| pre * e.powi(3) * a)
        .collect()
}

/// ∫_a^b of a piecewise-linear function sampled on ascending `x`.
pub fn integrate_between(x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len().saturating_sub(1) {
        let (x0, x1) = (x[i], x[i + 1]);
        let lo = a.max(x0);
        let hi = b.min(x1);
        if hi <= lo {
            continue;
        }
        let slope = (y[i + 1] - y[i]) / (x1 - x0);
        let y_lo = y[i] + slope * (lo - x0);
        let y_hi = y[i] + slope * (hi - x0);
        acc += 0.5 * (y_lo + y_hi) * (hi - lo);
    }
    acc
}

fn lorentz_mass(center: f64, gamma: f64, a: f64, b: f64) -> f64 {
    (((b - center) / gamma).atan() - ((a - center) / gamma).atan()) / PI
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Integrated weights of a ladder of replicas at E_ZPL − n·`spacing_mev`,
/// n in 0..`count`, from the raw spectral function.
///
/// Each replica owns the interval halfway to its neighbours (the ZPL owns
/// everything above, the last replica everything below). The Lorentzian
/// tails that leak across interval edges are undone by solving the linear
/// system of window-overlap fractions.
pub fn ladder_weights(ls: &Lineshape, spacing_mev: f64, count: usize) -> Vec<f64> {
    let x: Vec<f64> = ls.energies_ev.iter().map(|e| e * MEV_PER_EV).collect();
    let y: Vec<f64> = ls.spectral_function.iter().map(|a| a / MEV_PER_EV).collect();
    let (bottom, top) = (x[0], x[x.len() - 1]);
    let zpl = ls.zpl_ev * MEV_PER_EV;
    let centers: Vec<f64> = (0..count).map(|n| zpl - n as f64 * spacing_mev).collect();
    let windows: Vec<(f64, f64)> = centers
        .iter()
        .enumerate()
        .map(|(n, &c)| {
            let hi = if n == 0 { top } else { c + spacing_mev / 2.0 };
            let lo = if n + 1 == count { bottom } else { c - spacing_mev / 2.0 };
            (lo, hi)
        })
        .collect();
    let measured: Vec<f64> = windows.iter().map(|&(a, b)| integrate_between(&x, &y, a, b)).collect();
    let k: Vec<Vec<f64>> = windows
        .iter()
        .map(|&(a, b)| centers.iter().map(|&c| lorentz_mass(c, ls.gamma_mev, a, b)).collect())
        .collect();
    solve_dense(k, measured)
}

/// A sideband maximum attributed to one phonon mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivePeak {
    pub mode: usize,
    pub omega_mev: f64,
    /// E_ZPL − E_peak of the located maximum, meV.
    pub offset_mev: f64,
    pub energy_ev: f64,
    pub sk: f64,
    pub lvm: bool,
    /// "LM1", "LM2", … for localized modes (highest photon energy first), "M<k>" otherwise.
    pub label: String,
}

/// Label sideband maxima with the modes that produce them.
///
/// Modes with S_k ≥ [`LABEL_THRESHOLD`] are visited in order of decreasing
/// S_k; each claims the nearest unclaimed local maximum of L within
/// 3σ + 2γ (at least three grid steps) of its one-phonon replica.
pub fn effective_mode_report(hr: &HrDecomposition, ls: &Lineshape, lvm_indices: &[usize]) -> Vec<EffectivePeak> {
    let e = &ls.energies_ev;
    let y = &ls.intensity;
    let step_mev = ls.step_ev() * MEV_PER_EV;
    let zpl_mev = ls.zpl_ev * MEV_PER_EV;
    let exclusion = (5.0 * ls.gamma_mev).max(2.0 * step_mev);
    let maxima: Vec<usize> = (1..e.len().saturating_sub(1))
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1])
        .filter(|&i| e[i] * MEV_PER_EV < zpl_mev - exclusion)
        .collect();
    let tol = (3.0 * ls.sigma_mev + 2.0 * ls.gamma_mev).max(3.0 * step_mev);

    let mut candidates: Vec<&HrEntry> = hr.entries().iter().filter(|x| x.sk >= LABEL_THRESHOLD).collect();
    candidates.sort_by(|a, b| b.sk.total_cmp(&a.sk).then(a.mode.cmp(&b.mode)));

    let mut claimed = vec![false; maxima.len()];
    let mut peaks = Vec::new();
    for c in candidates {
        let target = zpl_mev - c.omega_mev;
        let best = maxima
            .iter()
            .enumerate()
            .filter(|(j, _)| !claimed[*j])
            .map(|(j, &i)| (j, i, (e[i] * MEV_PER_EV - target).abs()))
            .filter(|&(_, _, d)| d <= tol)
            .min_by(|a, b| a.2.total_cmp(&b.2));
        if let Some((j, i, _)) = best {
            claimed[j] = true;
            peaks.push(EffectivePeak {
                mode: c.mode,
                omega_mev: c.omega_mev,
                offset_mev: zpl_mev - e[i] * MEV_PER_EV,
                energy_ev: e[i],
                sk: c.sk,
                lvm: lvm_indices.contains(&c.mode),
                label: format!("M{}", c.mode),
            });
        }
    }
    let mut lvm: Vec<usize> = (0..peaks.len()).filter(|&i| peaks[i].lvm).collect();
    lvm.sort_by(|&a, &b| peaks[a].offset_mev.total_cmp(&peaks[b].offset_mev));
    for (rank, i) in lvm.into_iter().enumerate() {
        peaks[i].label = format!("LM{}", rank + 1);
    }
    peaks
}
