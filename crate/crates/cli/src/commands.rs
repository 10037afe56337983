use std::path::PathBuf;

use clap::Args;
use hrspec::energetics::{dissociation_energy, stability_diagrams};
use hrspec::fcoracle::{enumerate_fc, oracle_on, Broadening, MAX_CAP};
use hrspec::io::{self, Cell, DissociationRow, HrDocument};
use hrspec::phonons::{apply_asr, classify_lvm, diagonalize_with_cutoff, localization_table, symmetrize};
use hrspec::units::MEV_PER_EV;
use hrspec::vibronic::{
    decompose, effective_mode_report, emission_lineshape, ladder_weights, qk_from_displacement, qk_from_forces,
    HrOptions, DEFAULT_GAMMA_MEV, DEFAULT_SIGMA_MEV, DEFAULT_ZERO_MODE_THRESHOLD_MEV,
};
use hrspec::{Error, LineshapeConfig, Result, DEFAULT_LVM_CUTOFF_MEV};

use crate::output::{header, read_input, Outputs};
use crate::OutputArgs;

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidValue {
            field: field.into(),
            reason: format!("must be positive, got {v}"),
        })
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidValue {
            field: field.into(),
            reason: format!("must be non-negative, got {v}"),
        })
    }
}

/// `LO:HI` in eV.
fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
        return Err(format!("need 0 < LO < HI, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn fmt_window(w: Option<(f64, f64)>) -> String {
    match w {
        Some((a, b)) => format!("{a}:{b}"),
        None => "auto".into(),
    }
}

// -------------------------------------------------------------------- modes

#[derive(Args, Debug)]
pub struct ModesArgs {
    #[arg(long)]
    structure: PathBuf,
    #[arg(long)]
    hessian: PathBuf,
    /// Project rigid translations out of the Hessian.
    #[arg(long)]
    asr: bool,
    /// Bulk phonon cutoff for LVM classification, meV.
    #[arg(long, default_value_t = DEFAULT_LVM_CUTOFF_MEV)]
    cutoff: f64,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn modes(a: &ModesArgs) -> Result<()> {
    positive("--cutoff", a.cutoff)?;
    let mut inputs = Vec::new();
    let structure = io::parse_structure(&read_input(&a.structure, &mut inputs)?)?;
    let hessian = io::parse_hessian(&read_input(&a.hessian, &mut inputs)?, Some(&structure))?;
    let mut h = symmetrize(&hessian)?;
    let asr = if a.asr {
        let (projected, report) = apply_asr(&h, &structure.masses())?;
        h = projected;
        Some(report)
    } else {
        None
    };
    let basis = diagonalize_with_cutoff(&h, &structure, a.cutoff)?;
    let lvm = classify_lvm(&basis, a.cutoff);
    let loc = localization_table(&basis);

    let params = [("cutoff_mev", a.cutoff.to_string()), ("asr", a.asr.to_string())];
    let head = header("modes", &inputs, &params);
    let rows: Vec<Vec<Cell>> = basis
        .modes()
        .iter()
        .enumerate()
        .map(|(k, m)| {
            vec![
                k.into(),
                m.omega_mev.into(),
                m.eigenvalue.into(),
                loc[k].into(),
                Cell::Int(lvm.contains(&k) as i64),
            ]
        })
        .collect();
    let table = io::format_tsv(&head, &["mode", "omega_mev", "eigenvalue", "ipr", "lvm"], &rows)?;

    let mut out = Outputs::new(inputs);
    out.add("modes.json", io::write_modes(&basis, asr.as_ref()));
    out.add("modes.tsv", table);
    out.commit(&a.out)?;

    let near_zero = basis.modes().iter().filter(|m| m.omega_mev.abs() <= DEFAULT_ZERO_MODE_THRESHOLD_MEV).count();
    println!("modes\t{}", basis.len());
    println!("near_zero\t{near_zero}");
    println!("lvm\t{}", lvm.len());
    if let Some(r) = asr {
        println!(
            "asr_translational_norms_mev\t{:.3e} -> {:.3e}",
            r.pre_asr_translational_norms.iter().fold(0.0f64, |m, v| m.max(*v)),
            r.post_asr_translational_norms.iter().fold(0.0f64, |m, v| m.max(*v)),
        );
    }
    Ok(())
}

// ----------------------------------------------------------------------- hr

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["pair", "forces"])))]
pub struct HrArgs {
    /// Modes document from `hrspec modes`.
    #[arg(long)]
    modes: PathBuf,
    /// Ground/excited geometry pair (displacement route).
    #[arg(long)]
    pair: Option<PathBuf>,
    /// Force difference at the ground geometry (force route).
    #[arg(long)]
    forces: Option<PathBuf>,
    /// |ℏω| below which a mode counts as a zero mode, meV.
    #[arg(long, default_value_t = DEFAULT_ZERO_MODE_THRESHOLD_MEV)]
    zero_threshold: f64,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn hr(a: &HrArgs) -> Result<()> {
    non_negative("--zero-threshold", a.zero_threshold)?;
    let opts = HrOptions {
        zero_mode_threshold_mev: a.zero_threshold,
    };
    let mut inputs = Vec::new();
    let basis = io::parse_modes(&read_input(&a.modes, &mut inputs)?)?;
    let (projection, route) = match (&a.pair, &a.forces) {
        (Some(p), None) => {
            let pair = io::parse_geometry_pair(&read_input(p, &mut inputs)?, None)?;
            check_atoms(pair.n_atoms(), basis.n_atoms())?;
            (qk_from_displacement(&basis, &pair, &opts)?, "displacement")
        }
        (None, Some(f)) => {
            let forces = io::parse_force_delta(&read_input(f, &mut inputs)?, None)?;
            check_atoms(forces.n_atoms(), basis.n_atoms())?;
            (qk_from_forces(&basis, &forces, &opts)?, "forces")
        }
        _ => {
            return Err(Error::InvalidValue {
                field: "--pair/--forces".into(),
                reason: "give exactly one".into(),
            })
        }
    };
    let hr = decompose(&basis, &projection, &opts)?;
    let doc = HrDocument {
        hr,
        route: Some(route.into()),
        excluded_modes: projection.excluded.clone(),
    };
    let params = [
        ("route", route.to_string()),
        ("zero_threshold_mev", a.zero_threshold.to_string()),
        ("total_s", io::format_float(doc.hr.total())),
    ];
    let head = header("hr", &inputs, &params);
    let mut out = Outputs::new(inputs);
    out.add("hr.json", io::write_hr(&doc));
    out.add("stem.tsv", io::write_stem_tsv(&doc.hr, &head)?);
    out.commit(&a.out)?;

    println!("route\t{route}");
    println!("total_s\t{}", io::format_float(doc.hr.total()));
    println!("relaxation_energy_mev\t{}", io::format_float(doc.hr.relaxation_energy_mev()));
    if !doc.excluded_modes.is_empty() {
        println!("excluded_modes\t{:?}", doc.excluded_modes);
    }
    Ok(())
}

fn check_atoms(found: usize, expected: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            field: "atoms".into(),
            expected,
            found,
        })
    }
}

// ----------------------------------------------------------------- spectrum

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    /// HR document from `hrspec hr`.
    #[arg(long)]
    hr: PathBuf,
    /// Zero-phonon line, eV.
    #[arg(long)]
    zpl: f64,
    /// Lorentzian damping, meV.
    #[arg(long, default_value_t = DEFAULT_GAMMA_MEV)]
    gamma: f64,
    /// Gaussian smearing of the partial HR spectrum, meV.
    #[arg(long, default_value_t = DEFAULT_SIGMA_MEV)]
    sigma: f64,
    /// Output window LO:HI in eV.
    #[arg(long, value_parser = parse_window)]
    window: Option<(f64, f64)>,
    /// Energy grid step, meV.
    #[arg(long, default_value_t = hrspec::vibronic::DEFAULT_ENERGY_STEP_MEV)]
    step: f64,
    /// Plain spectral function, without the ω³ emission factor.
    #[arg(long)]
    no_omega_cubed: bool,
    /// Bulk phonon cutoff for labelling localized modes, meV.
    #[arg(long, default_value_t = DEFAULT_LVM_CUTOFF_MEV)]
    cutoff: f64,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn spectrum(a: &SpectrumArgs) -> Result<()> {
    positive("--zpl", a.zpl)?;
    positive("--gamma", a.gamma)?;
    non_negative("--sigma", a.sigma)?;
    positive("--step", a.step)?;
    positive("--cutoff", a.cutoff)?;
    let mut inputs = Vec::new();
    let doc = io::parse_hr(&read_input(&a.hr, &mut inputs)?)?;
    let hr = doc.hr;
    let mut cfg = LineshapeConfig::auto(a.zpl, a.gamma, a.sigma, &hr, a.step, a.window)?;
    cfg.omega_cubed = !a.no_omega_cubed;
    let (ls, _) = emission_lineshape(&hr, &cfg)?;

    let lvm: Vec<usize> = hr.entries().iter().filter(|e| e.omega_mev > a.cutoff).map(|e| e.mode).collect();
    let peaks = effective_mode_report(&hr, &ls, &lvm);
    let zpl_weight = zpl_peak_weight(&hr, &ls);

    let d = ls.diagnostics();
    let params = [
        ("zpl_ev", a.zpl.to_string()),
        ("gamma_mev", a.gamma.to_string()),
        ("sigma_mev", a.sigma.to_string()),
        ("step_mev", a.step.to_string()),
        ("window_ev", fmt_window(a.window)),
        ("omega_cubed", cfg.omega_cubed.to_string()),
        ("cutoff_mev", a.cutoff.to_string()),
        ("total_s", io::format_float(hr.total())),
        ("time_step_fs", io::format_float(cfg.time_step_fs)),
        ("time_span_fs", io::format_float(cfg.time_span_fs)),
        ("full_integral", io::format_float(d.full_integral)),
        ("max_imag_ratio", io::format_float(d.max_imag_ratio)),
        ("zpl_weight", zpl_weight.map_or("n/a".into(), io::format_float)),
        ("zpl_weight_poisson", io::format_float((-hr.total()).exp())),
    ];
    let head = header("spectrum", &inputs, &params);
    let rows: Vec<Vec<Cell>> = peaks
        .iter()
        .map(|p| {
            vec![
                p.label.as_str().into(),
                p.mode.into(),
                p.omega_mev.into(),
                p.offset_mev.into(),
                p.energy_ev.into(),
                p.sk.into(),
                Cell::Int(p.lvm as i64),
            ]
        })
        .collect();
    let peak_table = io::format_tsv(
        &head,
        &["label", "mode", "omega_mev", "offset_mev", "energy_ev", "sk", "lvm"],
        &rows,
    )?;
    let mut out = Outputs::new(inputs);
    out.add("spectrum.tsv", io::write_spectrum_tsv(&ls, &head)?);
    out.add("peaks.tsv", peak_table);
    out.commit(&a.out)?;

    println!("points\t{}", ls.energies_ev().len());
    println!("integral\t{}", io::format_float(ls.integral()));
    if let Some(w) = zpl_weight {
        println!("zpl_weight\t{}", io::format_float(w));
    }
    for p in &peaks {
        println!("peak\t{}\t{:.4}\t{:.2}", p.label, p.energy_ev, p.offset_mev);
    }
    Ok(())
}

/// Integrated ZPL weight, assuming replicas spaced by the lowest active mode.
/// None when the output window does not contain the ZPL peak.
fn zpl_peak_weight(hr: &hrspec::HrDecomposition, ls: &hrspec::Lineshape) -> Option<f64> {
    let e = ls.energies_ev();
    let spacing = hr
        .entries()
        .iter()
        .filter(|x| x.sk > 0.0)
        .map(|x| x.omega_mev)
        .min_by(f64::total_cmp);
    let half = spacing.unwrap_or(0.0) / 2.0 / MEV_PER_EV;
    let margin = 5.0 * ls.gamma_mev() / MEV_PER_EV;
    if e[0] > ls.zpl_ev() - half.max(margin) || e[e.len() - 1] < ls.zpl_ev() + margin {
        return None;
    }
    let Some(spacing) = spacing else {
        return Some(ls.integral());
    };
    let span = (ls.zpl_ev() - e[0]) * MEV_PER_EV;
    let count = ((span / spacing - 0.5).floor() as usize + 1).clamp(1, 64);
    Some(ladder_weights(ls, spacing, count)[0])
}

// ------------------------------------------------------------------- oracle

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// HR document from `hrspec hr`.
    #[arg(long)]
    hr: PathBuf,
    /// Zero-phonon line, eV.
    #[arg(long)]
    zpl: f64,
    /// Lorentzian half-width of every line, meV.
    #[arg(long, default_value_t = DEFAULT_GAMMA_MEV)]
    gamma: f64,
    /// Gaussian width per phonon, meV (an n-phonon line gets σ√n).
    #[arg(long, default_value_t = DEFAULT_SIGMA_MEV)]
    sigma: f64,
    /// Largest number of quanta per mode.
    #[arg(long, default_value_t = MAX_CAP)]
    max_quanta: u32,
    /// Output window LO:HI in eV.
    #[arg(long, value_parser = parse_window, conflicts_with = "reference")]
    window: Option<(f64, f64)>,
    /// Energy grid step, meV.
    #[arg(long, default_value_t = hrspec::vibronic::DEFAULT_ENERGY_STEP_MEV, conflicts_with = "reference")]
    step: f64,
    /// Plain spectral function, without the ω³ emission factor.
    #[arg(long)]
    no_omega_cubed: bool,
    /// Spectrum TSV to compare against; its energy grid is used.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Fail when the truncated Poisson tail exceeds tolerance.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn oracle(a: &OracleArgs) -> Result<()> {
    positive("--zpl", a.zpl)?;
    positive("--gamma", a.gamma)?;
    non_negative("--sigma", a.sigma)?;
    positive("--step", a.step)?;
    let mut inputs = Vec::new();
    let doc = io::parse_hr(&read_input(&a.hr, &mut inputs)?)?;
    let reference = match &a.reference {
        Some(p) => Some(io::read_spectrum_tsv(&read_input(p, &mut inputs)?)?),
        None => None,
    };
    let ladder = enumerate_fc(&doc.hr, a.max_quanta)?;
    match ladder.check_tail() {
        Err(e) if a.strict => return Err(e),
        Err(e) => log::warn!("{e}"),
        Ok(()) => {}
    }
    let broadening = Broadening {
        gamma_mev: a.gamma,
        sigma_mev: a.sigma,
    };
    let energies = match &reference {
        Some((x, _)) => x.clone(),
        None => oracle_grid(&ladder, a),
    };
    let spec = oracle_on(&ladder, a.zpl, broadening, &energies)?;
    // normalized on the output grid, like the FFT lineshape
    let mut values = spec.values.clone();
    if !a.no_omega_cubed {
        for (v, e) in values.iter_mut().zip(&energies) {
            *v *= e * e * e;
        }
    }
    let norm = trapezoid(&energies, &values);
    if !(norm > 0.0) {
        return Err(Error::GridTooNarrow("no spectral weight on the grid".into()));
    }
    values.iter_mut().for_each(|v| *v /= norm);
    let l1 = reference.as_ref().map(|(x, y)| {
        let diff: Vec<f64> = y.iter().zip(&values).map(|(r, v)| (r - v).abs()).collect();
        trapezoid(x, &diff)
    });

    let mut params = vec![
        ("zpl_ev", a.zpl.to_string()),
        ("gamma_mev", a.gamma.to_string()),
        ("sigma_mev", a.sigma.to_string()),
        ("max_quanta", a.max_quanta.to_string()),
        ("omega_cubed", (!a.no_omega_cubed).to_string()),
        ("active_modes", ladder.modes().len().to_string()),
        ("lines", ladder.lines().len().to_string()),
        ("tail", io::format_float(ladder.tail())),
        ("outside_mass", io::format_float(spec.outside_mass)),
        ("truncated_mass", io::format_float(spec.truncated_mass)),
        ("mean_offset_mev", io::format_float(ladder.mean_offset_mev())),
        ("expected_offset_mev", io::format_float(ladder.expected_offset_mev())),
    ];
    if reference.is_none() {
        params.push(("step_mev", a.step.to_string()));
        params.push(("window_ev", fmt_window(a.window)));
    }
    if let Some(l1) = l1 {
        params.push(("l1_vs_reference", io::format_float(l1)));
    }
    let head = header("oracle", &inputs, &params);
    let rows: Vec<Vec<Cell>> = energies.iter().zip(&values).map(|(e, v)| vec![(*e).into(), (*v).into()]).collect();
    let spectrum = io::format_tsv(&head, &["energy_ev", "intensity_per_ev"], &rows)?;
    let sticks: Vec<Vec<Cell>> = ladder
        .lines()
        .iter()
        .map(|l| {
            vec![
                l.label().into(),
                Cell::Int(l.total_quanta() as i64),
                l.offset_mev.into(),
                (a.zpl - l.offset_mev / MEV_PER_EV).into(),
                l.weight.into(),
            ]
        })
        .collect();
    let sticks = io::format_tsv(&head, &["quanta", "total_quanta", "offset_mev", "energy_ev", "weight"], &sticks)?;

    let mut out = Outputs::new(inputs);
    out.add("oracle.tsv", spectrum);
    out.add("sticks.tsv", sticks);
    out.commit(&a.out)?;

    println!("lines\t{}", ladder.lines().len());
    println!("tail\t{}", io::format_float(ladder.tail()));
    println!("mean_offset_mev\t{}", io::format_float(ladder.mean_offset_mev()));
    if let Some(l1) = l1 {
        println!("l1\t{}", io::format_float(l1));
    }
    Ok(())
}

/// ZPL-aligned grid covering every line of non-negligible weight.
fn oracle_grid(ladder: &hrspec::fcoracle::FcLadder, a: &OracleArgs) -> Vec<f64> {
    let step_ev = a.step / MEV_PER_EV;
    let (lo, hi) = a.window.unwrap_or_else(|| {
        let reach = ladder
            .lines()
            .iter()
            .filter(|l| l.weight >= hrspec::fcoracle::NEGLIGIBLE_LINE_WEIGHT)
            .map(|l| l.offset_mev + 8.0 * a.sigma * (l.total_quanta() as f64).sqrt())
            .fold(0.0, f64::max);
        (a.zpl - (reach + 50.0 * a.gamma) / MEV_PER_EV, a.zpl + 50.0 * a.gamma / MEV_PER_EV)
    });
    let first = ((lo - a.zpl) / step_ev).ceil() as i64;
    let last = ((hi - a.zpl) / step_ev).floor() as i64;
    (first..=last).map(|j| a.zpl + j as f64 * step_ev).collect()
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

// ------------------------------------------------------------------- thermo

#[derive(Args, Debug)]
pub struct ThermoArgs {
    /// Defect table with host reference.
    #[arg(long)]
    defects: PathBuf,
    /// Fermi-level samples across the gap for the diagram table.
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn thermo(a: &ThermoArgs) -> Result<()> {
    if a.samples == Some(0) {
        return Err(Error::InvalidValue {
            field: "--samples".into(),
            reason: "must be at least 1".into(),
        });
    }
    let mut inputs = Vec::new();
    let table = io::parse_defects(&read_input(&a.defects, &mut inputs)?)?;
    let diagrams = stability_diagrams(&table.entries, &table.host)?;
    // one sample per meV unless told otherwise
    let samples = a.samples.unwrap_or(((table.host.gap * MEV_PER_EV).round() as usize).max(1));
    let params = [
        ("vbm_ev", table.host.vbm.to_string()),
        ("gap_ev", table.host.gap.to_string()),
        ("samples", samples.to_string()),
    ];
    let head = header("thermo", &inputs, &params);
    let mut out = Outputs::new(inputs);
    out.add("diagram.tsv", io::write_diagram_tsv(&diagrams, samples, &head)?);
    out.add("transitions.tsv", io::write_transitions_tsv(&diagrams, &head)?);
    out.commit(&a.out)?;

    for d in &diagrams {
        for t in &d.transitions {
            println!(
                "{}\t({}/{})\tE_V + {:.6}\tE_C - {:.6}",
                d.label,
                charge(t.from_charge),
                charge(t.to_charge),
                t.level,
                t.below_cbm
            );
        }
        for u in &d.negative_u {
            println!(
                "{}\tnegative-U at q={}: ({}/{}) at {:.6} lies above ({}/{}) at {:.6}",
                d.label,
                charge(u.charge),
                charge(u.charge + 1),
                charge(u.charge),
                u.upper_level,
                charge(u.charge),
                charge(u.charge - 1),
                u.lower_level
            );
        }
    }
    Ok(())
}

fn charge(q: i32) -> String {
    if q == 0 {
        "0".into()
    } else {
        format!("{q:+}")
    }
}

// ------------------------------------------------------------------- dissoc

#[derive(Args, Debug)]
pub struct DissocArgs {
    /// Dissociation energy table.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn dissoc(a: &DissocArgs) -> Result<()> {
    let mut inputs = Vec::new();
    let rows: Vec<DissociationRow> = io::parse_dissociation(&read_input(&a.input, &mut inputs)?)?;
    let mut table = Vec::with_capacity(rows.len());
    for r in &rows {
        let d = dissociation_energy(r.e_smaller, r.e_split, r.e_cluster)?;
        table.push((r.label.clone(), d));
    }
    let head = header("dissoc", &inputs, &[]);
    let cells: Vec<Vec<Cell>> = table
        .iter()
        .map(|(l, d)| vec![l.as_str().into(), d.energy.into(), Cell::Int(d.unstable as i64)])
        .collect();
    let mut out = Outputs::new(inputs);
    out.add("dissociation.tsv", io::format_tsv(&head, &["label", "e_d_ev", "unstable"], &cells)?);
    out.commit(&a.out)?;

    for (l, d) in &table {
        println!("{l}\t{:.6}\t{}", d.energy, if d.unstable { "unstable" } else { "stable" });
    }
    Ok(())
}
