//! Device-independent weak string erasure, round by round.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{bob_abort_threshold, P_MAX};
use crate::devices::{AdversaryMemory, DeviceError, DeviceLog, DeviceStrategy, Transmitted};
use crate::qcore::{partial_trace, RngStream};
use crate::symbols::Trit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("n must be at least 1")]
    Rounds,
    #[error("mu = {0} must lie in (0, 1)")]
    TestProbability(f64),
    #[error("delta = {0} must lie in the open interval (0.75, 0.8535533906)")]
    Threshold(f64),
    #[error("eps = {0} must lie in (0, 1)")]
    Epsilon(f64),
    #[error("d must be at least 1")]
    MemoryDimension,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("inconsistent round data: {0}")]
    Inconsistent(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

fn default_d() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WseParams {
    pub n: usize,
    pub mu: f64,
    pub delta: f64,
    pub eps: f64,
    /// Bound on Bob's memory dimension; only the analytic bounds use it.
    #[serde(default = "default_d")]
    pub d: u64,
}

impl WseParams {
    pub fn new(n: usize, mu: f64, delta: f64, eps: f64, d: u64) -> Result<Self, ParamError> {
        let p = WseParams {
            n,
            mu,
            delta,
            eps,
            d,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.n == 0 {
            return Err(ParamError::Rounds);
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(ParamError::TestProbability(self.mu));
        }
        if !(self.delta > 0.75 && self.delta < P_MAX) {
            return Err(ParamError::Threshold(self.delta));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(ParamError::Epsilon(self.eps));
        }
        if self.d == 0 {
            return Err(ParamError::MemoryDimension);
        }
        Ok(())
    }
}

/// Classical transcript of one round. Bob's fields are `⊥` on test rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    #[serde(rename = "T")]
    pub t: u8,
    pub theta: u8,
    pub theta_bar: Trit,
    pub x_raw: u8,
    pub y: Trit,
    pub c: Trit,
    pub x: Trit,
    pub theta_hat: Trit,
    pub x_hat: Trit,
}

impl RoundRecord {
    pub fn is_test(&self) -> bool {
        self.t == 1
    }

    /// Checks the field relations every round must satisfy.
    pub fn check(&self) -> Result<(), String> {
        let bits = |v: u8, name: &str| {
            if v > 1 {
                Err(format!("{name} = {v} is not a bit"))
            } else {
                Ok(())
            }
        };
        bits(self.t, "T")?;
        bits(self.theta, "theta")?;
        bits(self.x_raw, "x_raw")?;
        if self.is_test() {
            let all_set = !self.theta_bar.is_bot() && !self.y.is_bot() && !self.c.is_bot();
            let bob_blank = self.x.is_bot() && self.theta_hat.is_bot() && self.x_hat.is_bot();
            if !all_set || !bob_blank {
                return Err(format!("test round with wrong ⊥ pattern: {self:?}"));
            }
            let expect = chsh_outcome_bit(self.x_raw, self.y, self.theta, self.theta_bar, 1)
                .map_err(|e| e.to_string())?;
            if expect != self.c {
                return Err(format!(
                    "C = {} but the CHSH predicate gives {expect}",
                    self.c
                ));
            }
        } else {
            if !(self.theta_bar.is_bot() && self.y.is_bot() && self.c.is_bot()) {
                return Err(format!("non-test round with test data: {self:?}"));
            }
            if self.x != Trit::from_bit(self.x_raw) {
                return Err("X differs from X′ on a non-test round".into());
            }
        }
        Ok(())
    }
}

/// CHSH score `C`: `⊥` on non-test rounds, else `[X′ ⊕ Y = Θ·Θ̄]`.
pub fn chsh_outcome_bit(
    x_raw: u8,
    y: Trit,
    theta: u8,
    theta_bar: Trit,
    t: u8,
) -> Result<Trit, ProtocolError> {
    match (t, y.bit(), theta_bar.bit()) {
        (0, None, None) => Ok(Trit::Bot),
        (1, Some(y), Some(tb)) => Ok(Trit::from_bit(u8::from((x_raw ^ y) == (theta & tb)))),
        _ => Err(ProtocolError::Inconsistent(format!(
            "T={t}, Y={y}, Θ̄={theta_bar}"
        ))),
    }
}

/// `I = {i : Θ_i = Θ̂_i ∧ T_i = 0}`, 1-indexed.
pub fn compute_index_set(
    theta: &[u8],
    theta_hat: &[Trit],
    t: &[u8],
) -> Result<Vec<usize>, ProtocolError> {
    if theta.len() != theta_hat.len() || theta.len() != t.len() {
        return Err(ProtocolError::LengthMismatch(format!(
            "Θ has {}, Θ̂ has {}, T has {} entries",
            theta.len(),
            theta_hat.len(),
            t.len()
        )));
    }
    Ok((0..theta.len())
        .filter(|&i| t[i] == 0 && theta_hat[i].bit() == Some(theta[i]))
        .map(|i| i + 1)
        .collect())
}

/// Alice aborts iff `ω < δ`.
pub fn alice_abort_decision(omega: f64, delta: f64) -> bool {
    omega < delta
}

/// Bob aborts iff `ω′ > μn + √(n·ln(1/ε)/2)`, compared on reals.
pub fn bob_abort_decision(test_rounds: usize, n: usize, mu: f64, eps: f64) -> bool {
    test_rounds as f64 > bob_abort_threshold(n, mu, eps)
}

/// `(wins, tests, ω)`; `ω = 0` when no round was tested.
pub fn score(rounds: &[RoundRecord]) -> (usize, usize, f64) {
    let tests = rounds.iter().filter(|r| r.is_test()).count();
    let wins = rounds.iter().filter(|r| r.c == Trit::One).count();
    let omega = if tests == 0 {
        0.0
    } else {
        wins as f64 / tests as f64
    };
    (wins, tests, omega)
}

/// Independent random streams for one run. Alice's choices never share a
/// stream with Bob's, so changing Bob cannot change Alice's view.
#[derive(Clone, Debug)]
pub struct RunStreams {
    pub alice: RngStream,
    pub devices: RngStream,
    pub bob: RngStream,
    pub output: RngStream,
}

impl RunStreams {
    pub fn derive(rng: &RngStream) -> Self {
        RunStreams {
            alice: rng.child(0),
            devices: rng.child(1),
            bob: rng.child(2),
            output: rng.child(3),
        }
    }
}

/// Alice's side of one round: source, switch, main and testing devices.
/// Bob's fields come back `⊥`; the B system is returned on non-test rounds.
pub(crate) fn alice_round(
    mu: f64,
    strategy: &dyn DeviceStrategy,
    round: usize,
    log: &mut DeviceLog,
    alice: &mut RngStream,
    devices: &mut RngStream,
) -> Result<(RoundRecord, Option<Transmitted>), ProtocolError> {
    let source = strategy.prepare(round, log)?;
    source.state.validate().map_err(DeviceError::from)?;
    let t = u8::from(alice.bernoulli(mu));
    let theta = alice.bit();
    let theta_bar = if t == 1 {
        Trit::from_bit(alice.bit())
    } else {
        Trit::Bot
    };
    let (x_raw, post) = strategy.main_measure(theta, &source.state, devices)?;
    log.raw_outcomes.push(x_raw);
    let b = partial_trace(&post, 1).map_err(DeviceError::from)?;
    let (y, routed) = if t == 1 {
        (strategy.test_measure(theta_bar, Some(&b), devices)?, None)
    } else {
        let y = strategy.test_measure(Trit::Bot, None, devices)?;
        (
            y,
            Some(Transmitted {
                qubit: b,
                side: source.side,
            }),
        )
    };
    let c = chsh_outcome_bit(x_raw, y, theta, theta_bar, t)?;
    let record = RoundRecord {
        t,
        theta,
        theta_bar,
        x_raw,
        y,
        c,
        x: if t == 1 {
            Trit::Bot
        } else {
            Trit::from_bit(x_raw)
        },
        theta_hat: Trit::Bot,
        x_hat: Trit::Bot,
    };
    Ok((record, routed))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WseTranscript {
    pub params: WseParams,
    pub strategy: String,
    pub rounds: Vec<RoundRecord>,
    pub omega: f64,
    /// `ω′`, the number of test rounds.
    pub test_rounds: usize,
    pub wins: usize,
    pub alice_aborted: bool,
    pub bob_aborted: bool,
    /// Alice's output `X_1^k` (uniformly random if she aborted).
    pub x_out: Vec<u8>,
    /// `I` as round numbers.
    pub index_set: Vec<usize>,
    /// `I` as 1-indexed positions inside `x_out`.
    pub index_set_compact: Vec<usize>,
    /// Bob's output `X_I` (uniformly random if he aborted).
    pub x_i: Vec<u8>,
    /// Bob's guess of `X_1^n` after the waiting time.
    pub bob_guess: Vec<Trit>,
    /// Bob's classical record `K` just before the guess.
    pub adversary_record: Vec<Trit>,
    pub peak_stored_qubits: usize,
    pub quantum_memory_used: bool,
}

impl WseTranscript {
    pub fn k(&self) -> usize {
        self.rounds.len() - self.test_rounds
    }

    pub fn aborted(&self) -> bool {
        self.alice_aborted || self.bob_aborted
    }

    /// `X_1^n` with `⊥` on test rounds.
    pub fn x_full(&self) -> Vec<Trit> {
        self.rounds.iter().map(|r| r.x).collect()
    }

    /// `X_i = X̂_i` for every `i ∈ I`, read off the round records.
    pub fn substring_matches(&self) -> bool {
        self.index_set.iter().all(|&i| {
            let r = &self.rounds[i - 1];
            r.x == r.x_hat
        })
    }

    /// Bob's guess equals `X_1^n` on every non-test round.
    pub fn guess_is_perfect(&self) -> bool {
        self.rounds
            .iter()
            .zip(&self.bob_guess)
            .all(|(r, g)| r.is_test() || r.x == *g)
    }
}

fn random_bits(rng: &mut RngStream, len: usize) -> Vec<u8> {
    (0..len).map(|_| rng.bit()).collect()
}

/// Executes one run of the protocol.
///
/// Errors are reserved for invalid parameters, failed calibration and
/// strategies that violate the device contract; aborts are outcomes.
pub fn run_wse(
    params: &WseParams,
    strategy: &dyn DeviceStrategy,
    rng: &RngStream,
) -> Result<WseTranscript, ProtocolError> {
    params.validate()?;
    strategy.calibration()?;
    let mut s = RunStreams::derive(rng);
    let n = params.n;
    let mut memory = AdversaryMemory::new(n);
    let mut log = DeviceLog::default();
    let mut rounds = Vec::with_capacity(n);

    for round in 1..=n {
        let (mut record, routed) = alice_round(
            params.mu,
            strategy,
            round,
            &mut log,
            &mut s.alice,
            &mut s.devices,
        )?;
        let view = strategy.bob_act(routed.as_ref(), round, &mut s.bob, &mut memory)?;
        if record.is_test() && view != crate::devices::BobView::NONE {
            return Err(ProtocolError::Inconsistent(format!(
                "Bob reported data on test round {round}"
            )));
        }
        record.theta_hat = view.theta_hat;
        record.x_hat = view.x_hat;
        rounds.push(record);
    }

    let (wins, test_rounds, omega) = score(&rounds);
    let alice_aborted = alice_abort_decision(omega, params.delta);
    let bob_aborted = bob_abort_decision(test_rounds, n, params.mu, params.eps);

    // The waiting time ends here; only now are the bases announced.
    let adversary_record = memory.classical.clone();
    let thetas: Vec<u8> = rounds.iter().map(|r| r.theta).collect();
    let bob_guess = strategy.bob_guess(&thetas, &mut memory, &mut s.bob)?;
    if bob_guess.len() != n {
        return Err(ProtocolError::LengthMismatch(format!(
            "Bob guessed {} of {n} bits",
            bob_guess.len()
        )));
    }

    let theta_hat: Vec<Trit> = rounds.iter().map(|r| r.theta_hat).collect();
    let t: Vec<u8> = rounds.iter().map(|r| r.t).collect();
    let index_set = compute_index_set(&thetas, &theta_hat, &t)?;
    let mut compact_pos = vec![0usize; n];
    let mut k = 0;
    for (i, r) in rounds.iter().enumerate() {
        if !r.is_test() {
            k += 1;
            compact_pos[i] = k;
        }
    }
    let index_set_compact = index_set.iter().map(|&i| compact_pos[i - 1]).collect();

    let x_out = if alice_aborted {
        random_bits(&mut s.output, k)
    } else {
        rounds.iter().filter_map(|r| r.x.bit()).collect()
    };
    let x_i = if bob_aborted {
        random_bits(&mut s.output, index_set.len())
    } else {
        index_set
            .iter()
            .map(|&i| rounds[i - 1].x_hat.bit().unwrap_or(0))
            .collect()
    };

    Ok(WseTranscript {
        params: *params,
        strategy: strategy.name(),
        rounds,
        omega,
        test_rounds,
        wins,
        alice_aborted,
        bob_aborted,
        x_out,
        index_set,
        index_set_compact,
        x_i,
        bob_guess,
        adversary_record,
        peak_stored_qubits: memory.peak_qubits(),
        quantum_memory_used: memory.quantum_touched(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{depolarized_strategy, honest_strategy, sequential_source_attack};

    fn params(n: usize) -> WseParams {
        WseParams::new(n, 0.2, 0.8, 0.05, 2).unwrap()
    }

    #[test]
    fn chsh_outcome_examples() {
        assert_eq!(
            chsh_outcome_bit(1, Trit::Zero, 1, Trit::One, 1).unwrap(),
            Trit::One
        );
        assert_eq!(
            chsh_outcome_bit(1, Trit::One, 1, Trit::One, 1).unwrap(),
            Trit::Zero
        );
        assert_eq!(
            chsh_outcome_bit(0, Trit::Bot, 1, Trit::Bot, 0).unwrap(),
            Trit::Bot
        );
        assert!(chsh_outcome_bit(0, Trit::Bot, 1, Trit::One, 1).is_err());
        assert!(chsh_outcome_bit(0, Trit::One, 1, Trit::Bot, 0).is_err());
    }

    #[test]
    fn index_set_examples() {
        use Trit::*;
        assert_eq!(
            compute_index_set(&[0, 1, 1, 0], &[Zero, Zero, One, Bot], &[0, 0, 0, 1]).unwrap(),
            vec![1, 3]
        );
        assert!(compute_index_set(&[0, 1], &[Bot, Bot], &[1, 1])
            .unwrap()
            .is_empty());
        assert!(compute_index_set(&[0], &[], &[0]).is_err());
    }

    #[test]
    fn abort_decisions() {
        assert!(!alice_abort_decision(0.80, 0.80));
        assert!(alice_abort_decision(0.79, 0.80));
        assert!(bob_abort_decision(36, 100, 0.2, 0.01));
        assert!(!bob_abort_decision(35, 100, 0.2, 0.01));
    }

    #[test]
    fn param_validation_names_fields() {
        let e = WseParams::new(10, 0.2, 0.9, 0.05, 1).unwrap_err();
        assert!(e.to_string().contains("(0.75, 0.8535533906)"));
        assert_eq!(
            WseParams::new(0, 0.2, 0.8, 0.05, 1),
            Err(ParamError::Rounds)
        );
        assert!(WseParams::new(5, 1.0, 0.8, 0.05, 1).is_err());
        assert!(WseParams::new(5, 0.2, 0.8, 0.0, 1).is_err());
        assert!(WseParams::new(5, 0.2, 0.8, 0.5, 0).is_err());
    }

    #[test]
    fn params_reject_unknown_json_keys() {
        let ok: WseParams =
            serde_json::from_str(r#"{"n":5,"mu":0.2,"delta":0.8,"eps":0.05}"#).unwrap();
        assert_eq!(ok.d, 1);
        assert!(serde_json::from_str::<WseParams>(
            r#"{"n":5,"mu":0.2,"delta":0.8,"eps":0.05,"x":1}"#
        )
        .is_err());
    }

    #[test]
    fn honest_run_is_consistent() {
        let tr = run_wse(&params(300), &honest_strategy(), &RngStream::new(1)).unwrap();
        for r in &tr.rounds {
            r.check().unwrap();
        }
        assert_eq!(tr.k(), tr.x_out.len());
        assert_eq!(tr.k(), 300 - tr.test_rounds);
        assert!(tr.substring_matches());
        assert!(!tr.quantum_memory_used);
        for (&i, &c) in tr.index_set.iter().zip(&tr.index_set_compact) {
            if !tr.alice_aborted {
                assert_eq!(Trit::from_bit(tr.x_out[c - 1]), tr.rounds[i - 1].x);
            }
        }
    }

    #[test]
    fn zero_tests_forces_alice_abort() {
        let (_, tests, omega) = score(&[]);
        assert_eq!((tests, omega), (0, 0.0));
        assert!(alice_abort_decision(omega, 0.8));
    }

    #[test]
    fn depolarized_one_matches_honest_transcript() {
        let p = params(100);
        let rng = RngStream::new(42);
        let a = run_wse(&p, &honest_strategy(), &rng).unwrap();
        let mut b = run_wse(&p, &depolarized_strategy(1.0).unwrap(), &rng).unwrap();
        b.strategy = a.strategy.clone();
        assert_eq!(a, b);
    }

    #[test]
    fn attack_stores_at_most_one_qubit() {
        let tr = run_wse(
            &params(200),
            &sequential_source_attack(),
            &RngStream::new(5),
        )
        .unwrap();
        assert_eq!(tr.peak_stored_qubits, 1);
        assert!(tr.guess_is_perfect());
    }

    #[test]
    fn miscalibrated_devices_refused() {
        let bad = honest_strategy()
            .with_bases(crate::qcore::ProtocolBases::standard().with_test_labels_swapped());
        assert!(matches!(
            run_wse(&params(10), &bad, &RngStream::new(0)),
            Err(ProtocolError::Device(DeviceError::Calibration { .. }))
        ));
    }
}
