use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{QError, ALGEBRAIC_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BasisLabel {
    /// Main device, `Θ = 0`: computational basis.
    MainStandard,
    /// Main device, `Θ = 1`: Hadamard basis.
    MainHadamard,
    /// Testing device, `Θ̄ = 0`.
    TestTheta0,
    /// Testing device, `Θ̄ = 1`.
    TestTheta1,
    /// Anything else, reachable only through the generic measurement API.
    Custom,
}

/// Rank-1 projective qubit measurement; `projectors[b]` corresponds to outcome `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementBasis {
    label: BasisLabel,
    vectors: [[Complex64; 2]; 2],
    projectors: [DMatrix<Complex64>; 2],
}

fn real(a: f64, b: f64) -> [Complex64; 2] {
    [Complex64::new(a, 0.0), Complex64::new(b, 0.0)]
}

fn outer(v: &[Complex64; 2]) -> DMatrix<Complex64> {
    DMatrix::from_fn(2, 2, |i, j| v[i] * v[j].conj())
}

impl MeasurementBasis {
    /// Builds a basis from two orthonormal vectors, outcome 0 first.
    pub fn from_vectors(
        label: BasisLabel,
        v0: [Complex64; 2],
        v1: [Complex64; 2],
    ) -> Result<Self, QError> {
        let n0 = v0[0].norm_sqr() + v0[1].norm_sqr();
        let n1 = v1[0].norm_sqr() + v1[1].norm_sqr();
        let overlap = (v0[0].conj() * v1[0] + v0[1].conj() * v1[1]).norm();
        let dev = (n0 - 1.0).abs().max((n1 - 1.0).abs()).max(overlap);
        if dev > ALGEBRAIC_TOL {
            return Err(QError::NotOrthonormal(dev));
        }
        Ok(MeasurementBasis {
            label,
            projectors: [outer(&v0), outer(&v1)],
            vectors: [v0, v1],
        })
    }

    /// The fixed basis the protocol assigns to `label`.
    ///
    /// # Panics
    /// On [`BasisLabel::Custom`], which has no fixed vectors.
    pub fn protocol(label: BasisLabel) -> Self {
        let (c1, s1) = ((PI / 8.0).cos(), (PI / 8.0).sin());
        let (c3, s3) = ((3.0 * PI / 8.0).cos(), (3.0 * PI / 8.0).sin());
        let (v0, v1) = match label {
            BasisLabel::MainStandard => (real(1.0, 0.0), real(0.0, 1.0)),
            BasisLabel::MainHadamard => (
                real(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
                real(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
            ),
            BasisLabel::TestTheta0 => (real(c1, s1), real(c3, -s3)),
            BasisLabel::TestTheta1 => (real(c1, -s1), real(c3, s3)),
            BasisLabel::Custom => panic!("custom bases have no fixed vectors"),
        };
        Self::from_vectors(label, v0, v1).expect("protocol bases are orthonormal")
    }

    pub fn label(&self) -> BasisLabel {
        self.label
    }

    pub fn vectors(&self) -> &[[Complex64; 2]; 2] {
        &self.vectors
    }

    pub fn projector(&self, outcome: u8) -> &DMatrix<Complex64> {
        &self.projectors[outcome as usize]
    }

    /// Same projectors under a different label. Used to build deliberately
    /// mislabelled device configurations.
    pub fn relabeled(&self, label: BasisLabel) -> Self {
        MeasurementBasis {
            label,
            ..self.clone()
        }
    }
}

/// The four bases a set of devices uses: `main[Θ]` and `test[Θ̄]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolBases {
    pub main: [MeasurementBasis; 2],
    pub test: [MeasurementBasis; 2],
}

impl ProtocolBases {
    pub fn standard() -> Self {
        ProtocolBases {
            main: [
                MeasurementBasis::protocol(BasisLabel::MainStandard),
                MeasurementBasis::protocol(BasisLabel::MainHadamard),
            ],
            test: [
                MeasurementBasis::protocol(BasisLabel::TestTheta0),
                MeasurementBasis::protocol(BasisLabel::TestTheta1),
            ],
        }
    }

    /// Testing device wired with its two settings exchanged.
    pub fn with_test_labels_swapped(&self) -> Self {
        let [t0, t1] = self.test.clone();
        ProtocolBases {
            main: self.main.clone(),
            test: [
                t1.relabeled(BasisLabel::TestTheta0),
                t0.relabeled(BasisLabel::TestTheta1),
            ],
        }
    }
}

impl Default for ProtocolBases {
    fn default() -> Self {
        Self::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn projectors_complete_idempotent_hermitian() {
        let id = DMatrix::<Complex64>::identity(2, 2);
        for label in [
            BasisLabel::MainStandard,
            BasisLabel::MainHadamard,
            BasisLabel::TestTheta0,
            BasisLabel::TestTheta1,
        ] {
            let b = MeasurementBasis::protocol(label);
            let sum = b.projector(0) + b.projector(1);
            assert!(max_abs(&(sum - &id)) < ALGEBRAIC_TOL, "{label:?}");
            for o in 0..2 {
                let p = b.projector(o);
                assert!(max_abs(&(p * p - p)) < ALGEBRAIC_TOL);
                assert!(max_abs(&(p.adjoint() - p)) < ALGEBRAIC_TOL);
            }
        }
    }

    #[test]
    fn rejects_non_orthogonal_vectors() {
        let err = MeasurementBasis::from_vectors(
            BasisLabel::Custom,
            real(1.0, 0.0),
            real(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
        )
        .unwrap_err();
        assert!(matches!(err, QError::NotOrthonormal(_)));
    }

    #[test]
    fn swapping_exchanges_test_projectors_only() {
        let std = ProtocolBases::standard();
        let sw = std.with_test_labels_swapped();
        assert_eq!(sw.main, std.main);
        assert_eq!(sw.test[0].projector(0), std.test[1].projector(0));
        assert_eq!(sw.test[0].label(), BasisLabel::TestTheta0);
    }
}
