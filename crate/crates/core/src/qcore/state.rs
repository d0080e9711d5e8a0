use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{
    MeasurementBasis, ProtocolBases, QError, RngStream, ALGEBRAIC_TOL, DEGENERATE_PROB, PSD_FLOOR,
};

type CMatrix = DMatrix<Complex64>;

/// Density operator on one (`dim = 2`) or two (`dim = 4`) qubits.
///
/// Two-qubit states use the ordering `|ab⟩ ↦ 2a + b`, so subsystem 0 is the
/// left tensor factor.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    m: CMatrix,
}

impl DensityOperator {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: CMatrix) -> Result<Self, QError> {
        let rho = DensityOperator { m };
        rho.validate()?;
        Ok(rho)
    }

    /// Pure state `|ψ⟩⟨ψ|`; the ket is normalised first.
    pub fn from_ket(ket: &[Complex64]) -> Result<Self, QError> {
        let dim = ket.len();
        check_dim(dim)?;
        let norm: f64 = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let m = CMatrix::from_fn(dim, dim, |i, j| ket[i] * ket[j].conj() / (norm * norm));
        Self::new(m)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self, QError> {
        check_dim(dim)?;
        let m = CMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0);
        Ok(DensityOperator { m })
    }

    /// `w·a + (1−w)·b`.
    pub fn mix(w: f64, a: &Self, b: &Self) -> Result<Self, QError> {
        if !(0.0..=1.0).contains(&w) {
            return Err(QError::BadWeight(w));
        }
        if a.dim() != b.dim() {
            return Err(QError::DimensionMismatch {
                expected: a.dim(),
                actual: b.dim(),
            });
        }
        let m = &a.m * Complex64::new(w, 0.0) + &b.m * Complex64::new(1.0 - w, 0.0);
        Self::new(m)
    }

    /// `self ⊗ other`; the result must still be at most two qubits.
    pub fn tensor(&self, other: &Self) -> Result<Self, QError> {
        let dim = self.dim() * other.dim();
        check_dim(dim)?;
        Ok(DensityOperator {
            m: self.m.kronecker(&other.m),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn qubits(&self) -> usize {
        if self.dim() == 4 {
            2
        } else {
            1
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.m[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.m
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest entrywise distance to another operator of the same dimension.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.m - &other.m)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), QError> {
        if self.m.nrows() != self.m.ncols() {
            return Err(QError::DimensionMismatch {
                expected: self.m.nrows(),
                actual: self.m.ncols(),
            });
        }
        check_dim(self.dim())?;
        let herm = (&self.m - self.m.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > ALGEBRAIC_TOL {
            return Err(QError::NotHermitian(herm));
        }
        let tr = self.m.trace();
        if (tr.re - 1.0).abs() > ALGEBRAIC_TOL || tr.im.abs() > ALGEBRAIC_TOL {
            return Err(QError::BadTrace(tr.re));
        }
        let lo = self.min_eigenvalue();
        if lo < PSD_FLOOR {
            return Err(QError::NotPositive(lo));
        }
        Ok(())
    }

    /// Wraps an operator produced by a trace-preserving operation on a valid
    /// state, removing rounding asymmetry.
    fn from_trusted(m: CMatrix) -> Self {
        let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let rho = DensityOperator { m };
        debug_assert!(rho.validate().is_ok(), "{:?}", rho.validate());
        rho
    }
}

fn check_dim(dim: usize) -> Result<(), QError> {
    match dim {
        2 | 4 => Ok(()),
        d => Err(QError::UnsupportedDimension(d)),
    }
}

/// `|Φ⁺⟩ = (|00⟩ + |11⟩)/√2`.
pub fn make_epr() -> DensityOperator {
    let a = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let z = Complex64::new(0.0, 0.0);
    DensityOperator::from_ket(&[a, z, z, a]).expect("EPR ket is valid")
}

/// `v·Φ⁺ + (1−v)·I/4`.
pub fn werner(v: f64) -> Result<DensityOperator, QError> {
    let mixed = DensityOperator::maximally_mixed(4)?;
    DensityOperator::mix(v, &make_epr(), &mixed)
}

/// Reduced state of a two-qubit operator on subsystem `keep` (0 or 1).
pub fn partial_trace(state: &DensityOperator, keep: usize) -> Result<DensityOperator, QError> {
    if state.dim() != 4 {
        return Err(QError::DimensionMismatch {
            expected: 4,
            actual: state.dim(),
        });
    }
    if keep > 1 {
        return Err(QError::SubsystemOutOfRange {
            index: keep,
            qubits: 2,
        });
    }
    let r = &state.m;
    let m = CMatrix::from_fn(2, 2, |i, j| {
        (0..2)
            .map(|k| {
                if keep == 0 {
                    r[(2 * i + k, 2 * j + k)]
                } else {
                    r[(2 * k + i, 2 * k + j)]
                }
            })
            .sum()
    });
    Ok(DensityOperator::from_trusted(m))
}

fn embedded_projector(
    state: &DensityOperator,
    basis: &MeasurementBasis,
    outcome: u8,
    subsystem: usize,
) -> Result<CMatrix, QError> {
    let qubits = state.qubits();
    if subsystem >= qubits {
        return Err(QError::SubsystemOutOfRange {
            index: subsystem,
            qubits,
        });
    }
    let p = basis.projector(outcome);
    Ok(match (qubits, subsystem) {
        (1, _) => p.clone(),
        (_, 0) => p.kronecker(&CMatrix::identity(2, 2)),
        _ => CMatrix::identity(2, 2).kronecker(p),
    })
}

/// Born-rule probabilities `tr((P_b ⊗ I) ρ)` for both outcomes.
pub fn outcome_probabilities(
    state: &DensityOperator,
    basis: &MeasurementBasis,
    subsystem: usize,
) -> Result<[f64; 2], QError> {
    let mut out = [0.0; 2];
    for (b, slot) in out.iter_mut().enumerate() {
        let p = embedded_projector(state, basis, b as u8, subsystem)?;
        *slot = (p * &state.m).trace().re.max(0.0);
    }
    Ok(out)
}

/// Samples a projective measurement on one qubit of `state` and returns the
/// outcome with the renormalised post-measurement state.
///
/// Exactly one uniform draw is consumed per call, whatever the probabilities,
/// so streams stay aligned across strategies that prepare identical states.
pub fn measure(
    state: &DensityOperator,
    basis: &MeasurementBasis,
    subsystem: usize,
    rng: &mut RngStream,
) -> Result<(u8, DensityOperator), QError> {
    let [p0, p1] = outcome_probabilities(state, basis, subsystem)?;
    if p0 < DEGENERATE_PROB && p1 < DEGENERATE_PROB {
        return Err(QError::DegenerateProbability(p0, p1));
    }
    let u = rng.uniform();
    let outcome = u8::from(u >= p0 / (p0 + p1));
    let prob = if outcome == 0 { p0 } else { p1 };
    let proj = embedded_projector(state, basis, outcome, subsystem)?;
    let post = &proj * &state.m * &proj * Complex64::new(1.0 / prob, 0.0);
    Ok((outcome, DensityOperator::from_trusted(post)))
}

/// Exact joint outcome table `[a][b]` for measuring subsystem 0 in `basis_a`
/// and subsystem 1 in `basis_b`.
pub fn outcome_distribution(
    state: &DensityOperator,
    basis_a: &MeasurementBasis,
    basis_b: &MeasurementBasis,
) -> Result<[[f64; 2]; 2], QError> {
    if state.dim() != 4 {
        return Err(QError::DimensionMismatch {
            expected: 4,
            actual: state.dim(),
        });
    }
    let mut table = [[0.0; 2]; 2];
    for a in 0..2u8 {
        for b in 0..2u8 {
            let op = basis_a.projector(a).kronecker(basis_b.projector(b));
            table[a as usize][b as usize] = (op * &state.m).trace().re.max(0.0);
        }
    }
    Ok(table)
}

/// CHSH win predicate `x ⊕ y = θ·θ̄`.
pub fn chsh_wins(x: u8, y: u8, theta: u8, theta_bar: u8) -> bool {
    (x ^ y) == (theta & theta_bar)
}

/// Win probability for each setting pair, indexed `[θ][θ̄]`.
pub fn chsh_cell_win_probabilities(
    state: &DensityOperator,
    bases: &ProtocolBases,
) -> Result<[[f64; 2]; 2], QError> {
    let mut cells = [[0.0; 2]; 2];
    for theta in 0..2u8 {
        for theta_bar in 0..2u8 {
            let table = outcome_distribution(
                state,
                &bases.main[theta as usize],
                &bases.test[theta_bar as usize],
            )?;
            let mut win = 0.0;
            for x in 0..2u8 {
                for y in 0..2u8 {
                    if chsh_wins(x, y, theta, theta_bar) {
                        win += table[x as usize][y as usize];
                    }
                }
            }
            cells[theta as usize][theta_bar as usize] = win;
        }
    }
    Ok(cells)
}

/// Win probability averaged over uniform settings, for arbitrary device bases.
pub fn chsh_win_probability_with(
    state: &DensityOperator,
    bases: &ProtocolBases,
) -> Result<f64, QError> {
    let cells = chsh_cell_win_probabilities(state, bases)?;
    Ok(cells.iter().flatten().sum::<f64>() / 4.0)
}

/// Win probability with the protocol's fixed bases.
pub fn chsh_win_probability(state: &DensityOperator) -> Result<f64, QError> {
    chsh_win_probability_with(state, &ProtocolBases::standard())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::BasisLabel;

    const P_WIN: f64 = 0.853_553_390_593_273_8;

    fn basis(label: BasisLabel) -> MeasurementBasis {
        MeasurementBasis::protocol(label)
    }

    fn ket0() -> DensityOperator {
        DensityOperator::from_ket(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap()
    }

    #[test]
    fn epr_is_pure_with_mixed_marginals() {
        let epr = make_epr();
        assert!((epr.trace() - 1.0).abs() < 1e-12);
        assert!((epr.purity() - 1.0).abs() < 1e-12);
        let half = DensityOperator::maximally_mixed(2).unwrap();
        for keep in 0..2 {
            let r = partial_trace(&epr, keep).unwrap();
            assert!(r.max_abs_diff(&half) < 1e-12);
        }
    }

    #[test]
    fn epr_standard_outcomes_agree() {
        let std = basis(BasisLabel::MainStandard);
        let t = outcome_distribution(&make_epr(), &std, &std).unwrap();
        assert!((t[0][0] - 0.5).abs() < 1e-12 && (t[1][1] - 0.5).abs() < 1e-12);
        assert!(t[0][1].abs() < 1e-12 && t[1][0].abs() < 1e-12);
    }

    #[test]
    fn product_of_mixed_is_uniform() {
        let half = DensityOperator::maximally_mixed(2).unwrap();
        let prod = half.tensor(&half).unwrap();
        let t = outcome_distribution(
            &prod,
            &basis(BasisLabel::MainHadamard),
            &basis(BasisLabel::TestTheta1),
        )
        .unwrap();
        for row in t {
            for p in row {
                assert!((p - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partial_trace_of_product_recovers_factor() {
        let plus = DensityOperator::from_ket(&[
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.0, FRAC_1_SQRT_2),
        ])
        .unwrap();
        let prod = plus.tensor(&ket0()).unwrap();
        assert!(partial_trace(&prod, 0).unwrap().max_abs_diff(&plus) < 1e-12);
        assert!(partial_trace(&prod, 1).unwrap().max_abs_diff(&ket0()) < 1e-12);
    }

    #[test]
    fn partial_trace_rejects_single_qubit() {
        let err = partial_trace(&ket0(), 0).unwrap_err();
        assert_eq!(
            err,
            QError::DimensionMismatch {
                expected: 4,
                actual: 2
            }
        );
    }

    #[test]
    fn eigenstate_measures_deterministically() {
        let mut rng = RngStream::new(1);
        for _ in 0..100 {
            let (b, post) =
                measure(&ket0(), &basis(BasisLabel::MainStandard), 0, &mut rng).unwrap();
            assert_eq!(b, 0);
            assert!(post.max_abs_diff(&ket0()) < 1e-12);
        }
    }

    #[test]
    fn mixed_qubit_is_fair_in_every_basis() {
        let half = DensityOperator::maximally_mixed(2).unwrap();
        for label in [
            BasisLabel::MainStandard,
            BasisLabel::MainHadamard,
            BasisLabel::TestTheta0,
            BasisLabel::TestTheta1,
        ] {
            let p = outcome_probabilities(&half, &basis(label), 0).unwrap();
            assert!((p[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn epr_hadamard_sequential_outcomes_agree() {
        let had = basis(BasisLabel::MainHadamard);
        let mut rng = RngStream::new(9);
        for _ in 0..200 {
            let (a, post) = measure(&make_epr(), &had, 0, &mut rng).unwrap();
            let (b, _) = measure(&post, &had, 1, &mut rng).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn subsystem_out_of_range() {
        let mut rng = RngStream::new(0);
        let err = measure(&make_epr(), &basis(BasisLabel::MainStandard), 2, &mut rng).unwrap_err();
        assert!(matches!(err, QError::SubsystemOutOfRange { .. }));
    }

    #[test]
    fn rejects_invalid_matrices() {
        let mut m = CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(matches!(
            DensityOperator::new(m).unwrap_err(),
            QError::NotHermitian(_)
        ));
        let m = CMatrix::identity(2, 2);
        assert!(matches!(
            DensityOperator::new(m).unwrap_err(),
            QError::BadTrace(_)
        ));
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = Complex64::new(1.5, 0.0);
        m[(1, 1)] = Complex64::new(-0.5, 0.0);
        assert!(matches!(
            DensityOperator::new(m).unwrap_err(),
            QError::NotPositive(_)
        ));
        assert!(matches!(
            DensityOperator::maximally_mixed(3).unwrap_err(),
            QError::UnsupportedDimension(3)
        ));
    }

    #[test]
    fn chsh_values() {
        assert!((chsh_win_probability(&make_epr()).unwrap() - P_WIN).abs() < 1e-12);
        let mixed = DensityOperator::maximally_mixed(4).unwrap();
        assert!((chsh_win_probability(&mixed).unwrap() - 0.5).abs() < 1e-12);
        let w = werner(0.9).unwrap();
        let expected = 0.5 + 0.9 / (2.0 * 2f64.sqrt());
        assert!((chsh_win_probability(&w).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn every_cell_wins_at_cos2_pi_8() {
        let cells = chsh_cell_win_probabilities(&make_epr(), &ProtocolBases::standard()).unwrap();
        for c in cells.iter().flatten() {
            assert!((c - P_WIN).abs() < 1e-12);
        }
    }
}
