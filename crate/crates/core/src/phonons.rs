//! Hessian → normal modes: symmetrization, acoustic sum rule, mass-weighted
//! diagonalization, and classification of localized vibrational modes.

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::model::{CrystalStructure, Hessian, Mode, PhononBasis};
use crate::numeric::compensated_sum;
use crate::units::{eigenvalue_to_mev, EV_PER_AMU_A2_IN_FS2, HBAR_MEV_FS};

/// Changes smaller than this are not reported as an applied ASR correction.
pub const ASR_CHANGE_THRESHOLD: f64 = 1e-14;

/// Before/after translational residuals of an acoustic-sum-rule pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsrReport {
    /// ℏ√(‖D t‖/‖t‖) for the mass-weighted rigid translations x, y, z (meV).
    pub pre_asr_translational_norms: [f64; 3],
    pub post_asr_translational_norms: [f64; 3],
    pub applied: bool,
}

/// (H + Hᵀ)/2.
pub fn symmetrize(hessian: &Hessian) -> Result<Hessian> {
    let n = hessian.dim();
    let mut data = hessian.data().to_vec();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
            data[i * n + j] = avg;
            data[j * n + i] = avg;
        }
    }
    let out = Hessian::new(n, data)?;
    Ok(match hessian.structure_hash() {
        Some(h) => out.with_structure_hash(h),
        None => out,
    })
}

fn translational_norms(data: &[f64], n: usize, masses: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        // mass-weighted translation v_{αi} = √m_α δ_{ic}; D v = M^-½ H T_c
        let norm_v = compensated_sum(masses.iter().copied()).sqrt();
        let mut acc = 0.0;
        for i in 0..n {
            let row = &data[i * n..(i + 1) * n];
            let ht = compensated_sum((0..n / 3).map(|b| row[3 * b + c]));
            let dv = ht / masses[i / 3].sqrt();
            acc += dv * dv;
        }
        let rho = acc.sqrt() / norm_v;
        *slot = (rho * EV_PER_AMU_A2_IN_FS2).sqrt() * HBAR_MEV_FS;
    }
    out
}

/// Project the three rigid translations out of a symmetric Hessian.
///
/// Applies H ← P H P with P = 1 − Σ_c u_c u_cᵀ, where u_c is the normalized
/// Cartesian translation along c. The result is symmetric and annihilates
/// every rigid translation, so the mass-weighted matrix has three exact zero
/// modes whatever the masses.
pub fn apply_asr(hessian: &Hessian, masses: &[f64]) -> Result<(Hessian, AsrReport)> {
    let n = hessian.dim();
    let atoms = n / 3;
    if masses.len() != atoms {
        return Err(Error::DimensionMismatch {
            field: "masses".into(),
            expected: atoms,
            found: masses.len(),
        });
    }
    let h = hessian.data();
    let pre = translational_norms(h, n, masses);
    let inv_atoms = 1.0 / atoms as f64;

    // H1 = H (1 − Σ u uᵀ): subtract, per row, the atom-average over columns of the same component.
    let mut h1 = h.to_vec();
    for i in 0..n {
        let row = &mut h1[i * n..(i + 1) * n];
        for c in 0..3 {
            let avg = compensated_sum((0..atoms).map(|b| row[3 * b + c])) * inv_atoms;
            for b in 0..atoms {
                row[3 * b + c] -= avg;
            }
        }
    }
    // H2 = (1 − Σ u uᵀ) H1: same along columns.
    for c in 0..3 {
        for j in 0..n {
            let avg = compensated_sum((0..atoms).map(|a| h1[(3 * a + c) * n + j])) * inv_atoms;
            for a in 0..atoms {
                h1[(3 * a + c) * n + j] -= avg;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (h1[i * n + j] + h1[j * n + i]);
            h1[i * n + j] = avg;
            h1[j * n + i] = avg;
        }
    }

    let max_change = h.iter().zip(&h1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let post = translational_norms(&h1, n, masses);
    let improves = post.iter().zip(&pre).all(|(p, q)| p <= q);
    if max_change <= ASR_CHANGE_THRESHOLD || !improves {
        return Ok((
            hessian.clone(),
            AsrReport {
                pre_asr_translational_norms: pre,
                post_asr_translational_norms: pre,
                applied: false,
            },
        ));
    }
    let mut out = Hessian::new(n, h1)?;
    if let Some(hash) = hessian.structure_hash() {
        out = out.with_structure_hash(hash);
    }
    Ok((
        out,
        AsrReport {
            pre_asr_translational_norms: pre,
            post_asr_translational_norms: post,
            applied: true,
        },
    ))
}

/// Mass-weighted dynamical matrix D = M^-½ H M^-½, row-major.
pub fn mass_weighted(hessian: &Hessian, masses: &[f64]) -> Result<Vec<f64>> {
    let n = hessian.dim();
    if masses.len() * 3 != n {
        return Err(Error::DimensionMismatch {
            field: "hessian".into(),
            expected: masses.len() * 3,
            found: n,
        });
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / masses[i / 3].sqrt()).collect();
    let mut d = hessian.data().to_vec();
    for i in 0..n {
        let row = &mut d[i * n..(i + 1) * n];
        for (x, s) in row.iter_mut().zip(&inv_sqrt) {
            *x *= inv_sqrt[i] * s;
        }
    }
    Ok(d)
}

fn fix_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Diagonalize the mass-weighted Hessian of `structure`.
///
/// Modes come out in ascending ω, each eigenvector with its first
/// significant component positive. Imaginary modes are kept with negative ℏω.
pub fn diagonalize(hessian: &Hessian, structure: &CrystalStructure) -> Result<PhononBasis> {
    diagonalize_with_cutoff(hessian, structure, crate::model::DEFAULT_LVM_CUTOFF_MEV)
}

pub fn diagonalize_with_cutoff(
    hessian: &Hessian,
    structure: &CrystalStructure,
    cutoff_mev: f64,
) -> Result<PhononBasis> {
    let masses = structure.masses();
    let n = hessian.dim();
    let d = mass_weighted(hessian, &masses)?;
    let eig = symmetric_eigen(&d, n)?;
    let mut modes: Vec<Mode> = (0..n)
        .map(|k| {
            let mut vector = eig.vector(k).to_vec();
            fix_sign(&mut vector);
            Mode {
                omega_mev: eigenvalue_to_mev(eig.values[k]),
                eigenvalue: eig.values[k],
                vector,
            }
        })
        .collect();
    modes.sort_by(|a, b| {
        a.eigenvalue
            .total_cmp(&b.eigenvalue)
            .then_with(|| lexicographic(&b.vector, &a.vector))
    });
    Ok(PhononBasis::from_parts_unchecked(
        modes,
        structure.species(),
        masses,
        cutoff_mev,
        Some(hessian.hash()),
    ))
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// ‖D v − λ v‖ / ‖D‖_F for every mode.
pub fn residuals(hessian: &Hessian, basis: &PhononBasis) -> Result<Vec<f64>> {
    let n = hessian.dim();
    let d = mass_weighted(hessian, basis.masses())?;
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = if norm > 0.0 { norm } else { 1.0 };
    Ok(basis
        .modes()
        .iter()
        .map(|m| {
            let mut acc = 0.0;
            for i in 0..n {
                let dv: f64 = d[i * n..(i + 1) * n]
                    .iter()
                    .zip(&m.vector)
                    .map(|(a, b)| a * b)
                    .sum();
                acc += (dv - m.eigenvalue * m.vector[i]).powi(2);
            }
            acc.sqrt() / scale
        })
        .collect())
}

/// Indices of modes with ℏω strictly above `cutoff_mev`, ascending.
pub fn classify_lvm(basis: &PhononBasis, cutoff_mev: f64) -> Vec<usize> {
    basis
        .modes()
        .iter()
        .enumerate()
        .filter(|(_, m)| m.omega_mev > cutoff_mev)
        .map(|(i, _)| i)
        .collect()
}

/// Inverse participation ratio Σ_α (Σ_i v_{αi}²)² of one mode, in [1/N, 1].
pub fn localization(basis: &PhononBasis, mode: usize) -> Result<f64> {
    let m = basis.modes().get(mode).ok_or(Error::IndexOutOfRange {
        index: mode,
        len: basis.len(),
    })?;
    Ok(ipr(&m.vector))
}

pub fn ipr(vector: &[f64]) -> f64 {
    compensated_sum(vector.chunks_exact(3).map(|a| {
        let w = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
        w * w
    }))
}

pub fn localization_table(basis: &PhononBasis) -> Vec<f64> {
    basis.modes().iter().map(|m| ipr(&m.vector)).collect()
}

/// Rank-paired differences of the highest frequencies of two bases
/// (e.g. two supercell sizes), `count` modes from the top.
pub fn frequency_deltas(a: &PhononBasis, b: &PhononBasis, count: usize) -> Vec<f64> {
    let fa = a.frequencies();
    let fb = b.frequencies();
    fa.iter()
        .rev()
        .zip(fb.iter().rev())
        .take(count)
        .map(|(x, y)| x - y)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Site;

    fn structure(masses: &[f64]) -> CrystalStructure {
        let sites = masses
            .iter()
            .enumerate()
            .map(|(i, &m)| Site {
                species: "C".into(),
                mass: m,
                position: [i as f64 * 1.4, 0.0, 0.0],
            })
            .collect();
        CrystalStructure::new([[20.0, 0.0, 0.0], [0.0, 20.0, 0.0], [0.0, 0.0, 20.0]], sites).unwrap()
    }

    /// Harmonic springs between atoms a, b along their bond direction
    /// plus isotropic springs `iso`, translation invariant by construction.
    fn spring_hessian(positions: &[[f64; 3]], springs: &[(usize, usize, f64)], iso: f64) -> Hessian {
        let n = positions.len() * 3;
        let mut h = vec![0.0; n * n];
        for &(a, b, k) in springs {
            let d: Vec<f64> = (0..3).map(|c| positions[b][c] - positions[a][c]).collect();
            let len = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let d: Vec<f64> = d.iter().map(|x| x / len).collect();
            let len = 1.0;
            for i in 0..3 {
                for j in 0..3 {
                    let kk = k * (d[i] * d[j]) / (len * len) + if i == j { iso } else { 0.0 };
                    h[(3 * a + i) * n + 3 * a + j] += kk;
                    h[(3 * b + i) * n + 3 * b + j] += kk;
                    h[(3 * a + i) * n + 3 * b + j] -= kk;
                    h[(3 * b + i) * n + 3 * a + j] -= kk;
                }
            }
        }
        Hessian::new(n, h).unwrap()
    }

    #[test]
    fn symmetrize_averages_pairs() {
        let mut d = vec![0.0; 9];
        d[1] = 1.0;
        d[3] = 3.0;
        let h = Hessian::new(3, d).unwrap();
        let s = symmetrize(&h).unwrap();
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 0), 2.0);
        assert_eq!(symmetrize(&s).unwrap(), s);
    }

    #[test]
    fn symmetric_input_is_a_fixed_point() {
        let h = spring_hessian(&[[0.0; 3], [1.2, 0.3, 0.1]], &[(0, 1, 20.0)], 0.0);
        assert_eq!(symmetrize(&h).unwrap(), h);
    }

    #[test]
    fn single_atom_isotropic() {
        let h = Hessian::new(3, vec![5.805, 0.0, 0.0, 0.0, 5.805, 0.0, 0.0, 0.0, 5.805]).unwrap();
        let basis = diagonalize(&h, &structure(&[12.0])).unwrap();
        // ℏ√(k/m), 658.2119569 · √(5.805/12 · 9.64853322e-3), evaluated by hand
        for m in basis.modes() {
            assert!((m.omega_mev - 44.968_345_033_078_43).abs() < 1e-9);
        }
    }

    #[test]
    fn diatomic_matches_analytic() {
        let k = 30.0;
        let m = 12.011;
        let h = spring_hessian(&[[0.0; 3], [1.3, 0.0, 0.0]], &[(0, 1, k)], 0.0);
        let basis = diagonalize(&h, &structure(&[m, m])).unwrap();
        let analytic = ((2.0 * k / m) * EV_PER_AMU_A2_IN_FS2).sqrt() * HBAR_MEV_FS;
        let top = basis.modes().last().unwrap().omega_mev;
        assert!(((top - analytic) / analytic).abs() < 1e-10);
        for m in &basis.modes()[..5] {
            assert!(m.omega_mev.abs() < 1e-5);
        }
    }

    #[test]
    fn zero_hessian_gives_zero_frequencies() {
        let h = Hessian::new(6, vec![0.0; 36]).unwrap();
        let basis = diagonalize(&h, &structure(&[12.0, 28.0])).unwrap();
        assert!(basis.modes().iter().all(|m| m.omega_mev == 0.0));
        assert!(basis.orthonormality_error() < 1e-12);
    }

    #[test]
    fn asr_leaves_invariant_hessian_alone() {
        let pos = [[0.0; 3], [1.2, 0.3, 0.1], [0.1, 1.5, -0.4]];
        let h = spring_hessian(&pos, &[(0, 1, 20.0), (1, 2, 14.0), (0, 2, 9.0)], 0.0);
        let (out, _) = apply_asr(&h, &[12.0, 12.0, 28.0]).unwrap();
        for (a, b) in out.data().iter().zip(h.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn asr_removes_diagonal_noise() {
        let pos = [[0.0; 3], [1.2, 0.3, 0.1], [0.1, 1.5, -0.4]];
        let h = spring_hessian(&pos, &[(0, 1, 20.0), (1, 2, 14.0), (0, 2, 9.0)], 0.0);
        let mut d = h.data().to_vec();
        for i in 0..9 {
            d[i * 9 + i] += 1e-3;
        }
        let noisy = Hessian::new(9, d).unwrap();
        let masses = [12.0, 12.0, 28.0];
        let (fixed, report) = apply_asr(&noisy, &masses).unwrap();
        assert!(report.applied);
        assert!(fixed.is_symmetric());
        for (p, q) in report.post_asr_translational_norms.iter().zip(report.pre_asr_translational_norms) {
            assert!(*p <= q);
            assert!(*p < 0.01);
        }
        let basis = diagonalize(&fixed, &structure(&masses)).unwrap();
        let mut w: Vec<f64> = basis.frequencies().iter().map(|x| x.abs()).collect();
        w.sort_by(f64::total_cmp);
        assert!(w[..3].iter().all(|&x| x < 0.01), "{w:?}");
    }

    #[test]
    fn asr_without_perturbation_not_applied() {
        let h = Hessian::new(6, vec![0.0; 36]).unwrap();
        let (_, report) = apply_asr(&h, &[12.0, 12.0]).unwrap();
        assert!(!report.applied);
    }

    #[test]
    fn lvm_boundary_is_strict() {
        let omegas = [100.0, 115.0, 115.0000001];
        let modes = omegas
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let mut v = vec![0.0; 3];
                v[i] = 1.0;
                Mode { omega_mev: w, eigenvalue: 0.0, vector: v }
            })
            .collect();
        let b = PhononBasis::new(modes, vec!["C".into()], vec![12.0], 115.0, None).unwrap();
        assert_eq!(classify_lvm(&b, 115.0), vec![2]);
        assert!(classify_lvm(&b, 200.0).is_empty());
    }

    #[test]
    fn ipr_limits() {
        assert_eq!(ipr(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]), 1.0);
        let s = 0.5f64.sqrt();
        assert!((ipr(&[s, 0.0, 0.0, s, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        let n = 8;
        let u = (1.0 / n as f64).sqrt();
        let v: Vec<f64> = (0..3 * n).map(|i| if i % 3 == 0 { u } else { 0.0 }).collect();
        assert!((ipr(&v) - 1.0 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn localization_index_checked() {
        let h = Hessian::new(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let basis = diagonalize(&h, &structure(&[12.0])).unwrap();
        assert!(matches!(
            localization(&basis, 3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }
}
