//! Device strategies for the untrusted-device model.
//!
//! A [`DeviceStrategy`] bundles everything an adversarial manufacturer (or an
//! honest one) controls: Alice's source, main device and testing device, plus
//! Bob's behaviour on the systems he receives. The protocol engines in
//! [`crate::wse`] and [`crate::pv`] drive strategies round by round and never
//! look inside them.

use serde::Serialize;
use thiserror::Error;

use crate::qcore::{
    chsh_cell_win_probabilities, make_epr, measure, werner, DensityOperator, ProtocolBases, QError,
    RngStream,
};
use crate::symbols::Trit;

/// Optimal quantum CHSH win probability `1/2 + 1/(2√2)`.
pub const CHSH_QUANTUM_WIN: f64 = 0.853_553_390_593_273_8;
/// Calibration tolerance on the honest win probability.
pub const CALIBRATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error(transparent)]
    Quantum(#[from] QError),
    #[error(
        "calibration failed in cell (Θ={theta}, Θ̄={theta_bar}): win probability {value}, expected {expected}"
    )]
    Calibration {
        theta: u8,
        theta_bar: u8,
        value: f64,
        expected: f64,
    },
    #[error("visibility {0} outside [0, 1]")]
    Visibility(f64),
    #[error("inconsistent device input: {0}")]
    Inconsistent(String),
    #[error("quantum memory holds at most one qubit, got a {0}-dimensional system")]
    MemoryCapacity(usize),
}

/// Classical record riding along with the B system. Carries the main device's
/// raw outcomes `X′_1^{i−1}` in the sequential-source attack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SideRecord(pub Vec<u8>);

#[derive(Clone, Debug)]
pub struct SourceOutput {
    pub state: DensityOperator,
    pub side: Option<SideRecord>,
}

/// What the switch forwards on a non-test round.
#[derive(Clone, Debug)]
pub struct Transmitted {
    pub qubit: DensityOperator,
    pub side: Option<SideRecord>,
}

/// Raw main-device outputs so far. A source that is not isolated from the
/// main device can read this; an honest source ignores it.
#[derive(Clone, Debug, Default)]
pub struct DeviceLog {
    pub raw_outcomes: Vec<u8>,
}

/// Bob's contribution to the protocol transcript for one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BobView {
    pub theta_hat: Trit,
    pub x_hat: Trit,
}

impl BobView {
    pub const NONE: BobView = BobView {
        theta_hat: Trit::Bot,
        x_hat: Trit::Bot,
    };
}

#[derive(Clone, Debug)]
struct StoredQubit {
    round: usize,
    state: DensityOperator,
}

/// Bob's memory between reception and the basis announcement: at most one
/// stored qubit plus a classical record `K` (one trit per round).
#[derive(Clone, Debug)]
pub struct AdversaryMemory {
    qubit: Option<StoredQubit>,
    pub classical: Vec<Trit>,
    /// Basis Bob measured in on each round, when he measured at all.
    pub bases: Vec<Trit>,
    peak_qubits: usize,
    quantum_writes: usize,
}

impl AdversaryMemory {
    pub fn new(rounds: usize) -> Self {
        AdversaryMemory {
            qubit: None,
            classical: vec![Trit::Bot; rounds],
            bases: vec![Trit::Bot; rounds],
            peak_qubits: 0,
            quantum_writes: 0,
        }
    }

    /// Stores a qubit, erasing whatever was held before.
    pub fn store_qubit(&mut self, round: usize, state: DensityOperator) -> Result<(), DeviceError> {
        if state.dim() != 2 {
            return Err(DeviceError::MemoryCapacity(state.dim()));
        }
        self.qubit = Some(StoredQubit { round, state });
        self.quantum_writes += 1;
        self.peak_qubits = self.peak_qubits.max(self.held_qubits());
        Ok(())
    }

    pub fn take_qubit(&mut self) -> Option<(usize, DensityOperator)> {
        self.qubit.take().map(|q| (q.round, q.state))
    }

    pub fn stored_round(&self) -> Option<usize> {
        self.qubit.as_ref().map(|q| q.round)
    }

    pub fn held_qubits(&self) -> usize {
        usize::from(self.qubit.is_some())
    }

    pub fn peak_qubits(&self) -> usize {
        self.peak_qubits
    }

    pub fn quantum_touched(&self) -> bool {
        self.quantum_writes > 0
    }
}

/// Exact check that a set of device bases reproduces the optimal CHSH
/// statistics on `Φ⁺`, cell by cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub win_probability: f64,
    /// Indexed `[Θ][Θ̄]`.
    pub cells: [[f64; 2]; 2],
    pub max_deviation: f64,
}

pub fn calibrate_bases(bases: &ProtocolBases) -> Result<CalibrationReport, DeviceError> {
    let cells = chsh_cell_win_probabilities(&make_epr(), bases)?;
    let mut max_deviation: f64 = 0.0;
    for theta in 0..2u8 {
        for theta_bar in 0..2u8 {
            let value = cells[theta as usize][theta_bar as usize];
            let dev = (value - CHSH_QUANTUM_WIN).abs();
            if dev > CALIBRATION_TOL {
                return Err(DeviceError::Calibration {
                    theta,
                    theta_bar,
                    value,
                    expected: CHSH_QUANTUM_WIN,
                });
            }
            max_deviation = max_deviation.max(dev);
        }
    }
    let win_probability = cells.iter().flatten().sum::<f64>() / 4.0;
    Ok(CalibrationReport {
        win_probability,
        cells,
        max_deviation,
    })
}

/// Calibration of the protocol's own bases.
pub fn calibrate() -> Result<CalibrationReport, DeviceError> {
    calibrate_bases(&ProtocolBases::standard())
}

/// Round-by-round contract between the protocol engines and the devices.
///
/// Rounds are 1-indexed. The default measurement methods are the honest ones
/// for [`Self::bases`].
pub trait DeviceStrategy: Send + Sync {
    fn name(&self) -> String;

    fn bases(&self) -> &ProtocolBases;

    /// Source output for `round`. `log` holds the main device's earlier raw
    /// outcomes.
    fn prepare(&self, round: usize, log: &DeviceLog) -> Result<SourceOutput, DeviceError>;

    /// Measures subsystem A of the joint state in basis `Θ`.
    fn main_measure(
        &self,
        theta: u8,
        joint: &DensityOperator,
        rng: &mut RngStream,
    ) -> Result<(u8, DensityOperator), DeviceError> {
        Ok(measure(joint, &self.bases().main[theta as usize], 0, rng)?)
    }

    /// Testing device on the `B̄` register; `⊥` in, `⊥` out.
    fn test_measure(
        &self,
        theta_bar: Trit,
        qubit: Option<&DensityOperator>,
        rng: &mut RngStream,
    ) -> Result<Trit, DeviceError> {
        match (theta_bar.bit(), qubit) {
            (None, _) => Ok(Trit::Bot),
            (Some(b), Some(q)) => {
                let (y, _) = measure(q, &self.bases().test[b as usize], 0, rng)?;
                Ok(Trit::from_bit(y))
            }
            (Some(_), None) => Err(DeviceError::Inconsistent(
                "testing device got a setting but no system".into(),
            )),
        }
    }

    /// Bob's processing of what the switch sent him (`None` is `⊥`).
    fn bob_act(
        &self,
        received: Option<&Transmitted>,
        round: usize,
        rng: &mut RngStream,
        memory: &mut AdversaryMemory,
    ) -> Result<BobView, DeviceError>;

    /// Bob's guess of `X_1^n` once `Θ_1^n` is announced.
    fn bob_guess(
        &self,
        thetas: &[u8],
        memory: &mut AdversaryMemory,
        rng: &mut RngStream,
    ) -> Result<Vec<Trit>, DeviceError>;

    fn calibration(&self) -> Result<CalibrationReport, DeviceError> {
        calibrate_bases(self.bases())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Source {
    Epr,
    Werner(f64),
}

/// Honest devices with an honest Bob, optionally with a depolarized source.
#[derive(Clone, Debug)]
pub struct HonestDevices {
    source: Source,
    bases: ProtocolBases,
}

impl HonestDevices {
    /// Same devices with different measurement wiring.
    pub fn with_bases(mut self, bases: ProtocolBases) -> Self {
        self.bases = bases;
        self
    }
}

pub fn honest_strategy() -> HonestDevices {
    HonestDevices {
        source: Source::Epr,
        bases: ProtocolBases::standard(),
    }
}

/// Source emits `v·Φ⁺ + (1−v)·I/4`; everything else honest.
pub fn depolarized_strategy(visibility: f64) -> Result<HonestDevices, DeviceError> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(DeviceError::Visibility(visibility));
    }
    Ok(HonestDevices {
        source: Source::Werner(visibility),
        bases: ProtocolBases::standard(),
    })
}

/// Honest Bob: measure in a uniformly random BB84 basis immediately.
fn honest_bob_act(
    bases: &ProtocolBases,
    received: Option<&Transmitted>,
    round: usize,
    rng: &mut RngStream,
    memory: &mut AdversaryMemory,
) -> Result<BobView, DeviceError> {
    let Some(t) = received else {
        return Ok(BobView::NONE);
    };
    let theta_hat = rng.bit();
    let (x_hat, _) = measure(&t.qubit, &bases.main[theta_hat as usize], 0, rng)?;
    memory.classical[round - 1] = Trit::from_bit(x_hat);
    memory.bases[round - 1] = Trit::from_bit(theta_hat);
    Ok(BobView {
        theta_hat: Trit::from_bit(theta_hat),
        x_hat: Trit::from_bit(x_hat),
    })
}

impl DeviceStrategy for HonestDevices {
    fn name(&self) -> String {
        match self.source {
            Source::Epr => "honest".into(),
            Source::Werner(v) => format!("depolarized(v={v})"),
        }
    }

    fn bases(&self) -> &ProtocolBases {
        &self.bases
    }

    fn prepare(&self, _round: usize, _log: &DeviceLog) -> Result<SourceOutput, DeviceError> {
        let state = match self.source {
            Source::Epr => make_epr(),
            Source::Werner(v) => werner(v)?,
        };
        Ok(SourceOutput { state, side: None })
    }

    fn bob_act(
        &self,
        received: Option<&Transmitted>,
        round: usize,
        rng: &mut RngStream,
        memory: &mut AdversaryMemory,
    ) -> Result<BobView, DeviceError> {
        honest_bob_act(&self.bases, received, round, rng, memory)
    }

    /// Honest Bob's "guess" is simply his measured string.
    fn bob_guess(
        &self,
        _thetas: &[u8],
        memory: &mut AdversaryMemory,
        _rng: &mut RngStream,
    ) -> Result<Vec<Trit>, DeviceError> {
        Ok(memory.classical.clone())
    }
}

/// Sequential-source attack with one qubit of memory.
///
/// The source sits inside the main device, so round `i` ships `Φ⁺` together
/// with a classical copy of `X′_1^{i−1}`. Bob reads the earlier outcomes off
/// the record, keeps only the newest non-test qubit and measures it in the
/// announced basis.
#[derive(Clone, Debug, Default)]
pub struct SequentialSourceAttack {
    bases: ProtocolBases,
}

pub fn sequential_source_attack() -> SequentialSourceAttack {
    SequentialSourceAttack::default()
}

impl DeviceStrategy for SequentialSourceAttack {
    fn name(&self) -> String {
        "sequential-source-attack".into()
    }

    fn bases(&self) -> &ProtocolBases {
        &self.bases
    }

    fn prepare(&self, _round: usize, log: &DeviceLog) -> Result<SourceOutput, DeviceError> {
        Ok(SourceOutput {
            state: make_epr(),
            side: Some(SideRecord(log.raw_outcomes.clone())),
        })
    }

    fn bob_act(
        &self,
        received: Option<&Transmitted>,
        round: usize,
        _rng: &mut RngStream,
        memory: &mut AdversaryMemory,
    ) -> Result<BobView, DeviceError> {
        let Some(t) = received else {
            return Ok(BobView::NONE);
        };
        let record = t.side.as_ref().ok_or_else(|| {
            DeviceError::Inconsistent("attack expects a side record on every B system".into())
        })?;
        if record.0.len() != round - 1 {
            return Err(DeviceError::Inconsistent(format!(
                "side record of round {round} has {} outcomes",
                record.0.len()
            )));
        }
        // Earlier non-test rounds: the record is exact. Test rounds stay ⊥.
        if let Some(prev) = memory.stored_round() {
            memory.classical[prev - 1] = Trit::from_bit(record.0[prev - 1]);
        }
        memory.store_qubit(round, t.qubit.clone())?;
        Ok(BobView::NONE)
    }

    fn bob_guess(
        &self,
        thetas: &[u8],
        memory: &mut AdversaryMemory,
        rng: &mut RngStream,
    ) -> Result<Vec<Trit>, DeviceError> {
        if let Some((round, qubit)) = memory.take_qubit() {
            let basis = &self.bases.main[thetas[round - 1] as usize];
            let (x, _) = measure(&qubit, basis, 0, rng)?;
            memory.classical[round - 1] = Trit::from_bit(x);
        }
        Ok(memory.classical.clone())
    }
}

/// Classical Bob policies: each received qubit is measured (or ignored) on
/// arrival, leaving only a classical record `K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassicalPolicy {
    /// Measure every qubit in the computational basis; guess `K`.
    StandardBasis,
    /// Ignore the qubit; `K` is a fresh coin flip.
    RandomGuess,
    /// Measure round `i` in basis `i mod 2`; after the announcement, guess
    /// `K` where the basis matched `Θ` and `0` elsewhere.
    ThetaDependent,
}

#[derive(Clone, Debug)]
pub struct ClassicalBob {
    policy: ClassicalPolicy,
    bases: ProtocolBases,
}

impl ClassicalBob {
    pub fn policy(&self) -> ClassicalPolicy {
        self.policy
    }
}

/// Honest devices against a Bob without quantum memory.
pub fn classical_bob(policy: ClassicalPolicy) -> ClassicalBob {
    ClassicalBob {
        policy,
        bases: ProtocolBases::standard(),
    }
}

impl DeviceStrategy for ClassicalBob {
    fn name(&self) -> String {
        match self.policy {
            ClassicalPolicy::StandardBasis => "classical-bob(standard-basis)",
            ClassicalPolicy::RandomGuess => "classical-bob(random-guess)",
            ClassicalPolicy::ThetaDependent => "classical-bob(theta-dependent)",
        }
        .into()
    }

    fn bases(&self) -> &ProtocolBases {
        &self.bases
    }

    fn prepare(&self, _round: usize, _log: &DeviceLog) -> Result<SourceOutput, DeviceError> {
        Ok(SourceOutput {
            state: make_epr(),
            side: None,
        })
    }

    fn bob_act(
        &self,
        received: Option<&Transmitted>,
        round: usize,
        rng: &mut RngStream,
        memory: &mut AdversaryMemory,
    ) -> Result<BobView, DeviceError> {
        let Some(t) = received else {
            return Ok(BobView::NONE);
        };
        let basis = match self.policy {
            ClassicalPolicy::StandardBasis => Some(0u8),
            ClassicalPolicy::RandomGuess => None,
            ClassicalPolicy::ThetaDependent => Some((round % 2) as u8),
        };
        let k = match basis {
            Some(b) => measure(&t.qubit, &self.bases.main[b as usize], 0, rng)?.0,
            None => rng.bit(),
        };
        memory.classical[round - 1] = Trit::from_bit(k);
        memory.bases[round - 1] = basis.into();
        Ok(BobView {
            theta_hat: basis.into(),
            x_hat: basis.map_or(Trit::Bot, |_| Trit::from_bit(k)),
        })
    }

    fn bob_guess(
        &self,
        thetas: &[u8],
        memory: &mut AdversaryMemory,
        _rng: &mut RngStream,
    ) -> Result<Vec<Trit>, DeviceError> {
        let guess = match self.policy {
            ClassicalPolicy::StandardBasis | ClassicalPolicy::RandomGuess => {
                memory.classical.clone()
            }
            ClassicalPolicy::ThetaDependent => memory
                .classical
                .iter()
                .zip(&memory.bases)
                .zip(thetas)
                .map(|((&k, &b), &theta)| match (k, b.bit()) {
                    (Trit::Bot, _) => Trit::Bot,
                    (k, Some(b)) if b == theta => k,
                    _ => Trit::Zero,
                })
                .collect(),
        };
        Ok(guess)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::chsh_win_probability;

    #[test]
    fn honest_calibration_passes() {
        let r = calibrate().unwrap();
        assert!((r.win_probability - 0.853_553_390_6).abs() < 1e-9);
        assert!(r.max_deviation < 1e-12);
    }

    #[test]
    fn swapped_test_labels_fail_naming_a_cell() {
        let swapped = ProtocolBases::standard().with_test_labels_swapped();
        match calibrate_bases(&swapped).unwrap_err() {
            DeviceError::Calibration {
                theta,
                theta_bar,
                value,
                ..
            } => {
                assert_eq!((theta, theta_bar), (1, 0));
                assert!((value - (1.0 - CHSH_QUANTUM_WIN)).abs() < 1e-12);
            }
            e => panic!("unexpected {e:?}"),
        }
        let devices = honest_strategy().with_bases(swapped);
        assert!(devices.calibration().is_err());
    }

    #[test]
    fn depolarized_one_calibrates_like_honest() {
        let a = honest_strategy().calibration().unwrap();
        let b = depolarized_strategy(1.0).unwrap().calibration().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depolarized_win_probabilities() {
        let log = DeviceLog::default();
        let s0 = depolarized_strategy(0.0).unwrap().prepare(1, &log).unwrap();
        assert!((chsh_win_probability(&s0.state).unwrap() - 0.5).abs() < 1e-12);
        let s9 = depolarized_strategy(0.9).unwrap().prepare(1, &log).unwrap();
        // 1/2 + 0.9/(2√2), evaluated at 50 digits.
        assert!((chsh_win_probability(&s9.state).unwrap() - 0.818_198_051_533_946_4).abs() < 1e-12);
        let s1 = depolarized_strategy(1.0).unwrap().prepare(1, &log).unwrap();
        assert_eq!(s1.state, make_epr());
    }

    #[test]
    fn visibility_out_of_range() {
        assert_eq!(
            depolarized_strategy(1.5).unwrap_err(),
            DeviceError::Visibility(1.5)
        );
        assert!(depolarized_strategy(-0.1).is_err());
    }

    #[test]
    fn memory_holds_one_qubit_and_rejects_pairs() {
        let mut mem = AdversaryMemory::new(3);
        let q = crate::qcore::partial_trace(&make_epr(), 1).unwrap();
        mem.store_qubit(1, q.clone()).unwrap();
        mem.store_qubit(2, q).unwrap();
        assert_eq!(mem.peak_qubits(), 1);
        assert_eq!(mem.stored_round(), Some(2));
        assert_eq!(
            mem.store_qubit(3, make_epr()).unwrap_err(),
            DeviceError::MemoryCapacity(4)
        );
    }

    #[test]
    fn test_device_rejects_missing_system() {
        let h = honest_strategy();
        let mut rng = RngStream::new(0);
        assert_eq!(
            h.test_measure(Trit::Bot, None, &mut rng).unwrap(),
            Trit::Bot
        );
        assert!(h.test_measure(Trit::One, None, &mut rng).is_err());
    }
}
