//! Device-independent position verification on a line.
//!
//! Signals travel at unit speed. Verifier V1 holds the devices and sends the
//! B systems, V2 sends the bases `Θ`; both leave so that they meet at the
//! claimed position. All `n` rounds share one geometry and one time window
//! `Δt`, measured from the earliest send.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{honest_strategy, DeviceError, DeviceLog, DeviceStrategy};
use crate::qcore::{measure, DensityOperator, MeasurementBasis, ProtocolBases, RngStream};
use crate::symbols::Trit;
use crate::wse::{
    alice_abort_decision, alice_round, score, ParamError, ProtocolError, RoundRecord, RunStreams,
    WseParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PvError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error(
        "infeasible timing: an honest prover's replies need {needed} time units \
         (signals must reach the claimed position and come back), but the window is {delta_t}"
    )]
    Infeasible { needed: f64, delta_t: f64 },
    #[error("cheaters tried to send a quantum system between M1 and M2")]
    QuantumPayload,
    #[error("cheating strategy misbehaved: {0}")]
    Strategy(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvScenario {
    pub x_v1: f64,
    pub x_p: f64,
    pub x_v2: f64,
    pub delta_t: f64,
    pub wse: WseParams,
    /// Where the prover really is; defaults to the claimed position.
    #[serde(default)]
    pub x_p_actual: Option<f64>,
}

impl PvScenario {
    pub fn validate(&self) -> Result<(), PvError> {
        let finite = [self.x_v1, self.x_p, self.x_v2, self.delta_t]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(PvError::Geometry(
                "positions and window must be finite".into(),
            ));
        }
        if !(self.x_v1 < self.x_p && self.x_p < self.x_v2) {
            return Err(PvError::Geometry(format!(
                "need x_V1 < x_P < x_V2, got {} , {}, {}",
                self.x_v1, self.x_p, self.x_v2
            )));
        }
        if let Some(a) = self.x_p_actual {
            if !(a.is_finite() && self.x_v1 <= a && a <= self.x_v2) {
                return Err(PvError::Geometry(format!(
                    "actual prover position {a} outside [x_V1, x_V2]"
                )));
            }
        }
        if self.delta_t.is_nan() || self.delta_t <= 0.0 {
            return Err(PvError::Geometry("delta_t must be positive".into()));
        }
        self.wse.validate()?;
        Ok(())
    }

    /// Send times `(V1, V2)` that make both signals reach `x_P` together.
    pub fn send_times(&self) -> (f64, f64) {
        let (d1, d2) = (self.x_p - self.x_v1, self.x_v2 - self.x_p);
        let meet = d1.max(d2);
        (meet - d1, meet - d2)
    }

    fn window_end(&self) -> f64 {
        let (s1, s2) = self.send_times();
        s1.min(s2) + self.delta_t
    }

    /// Time an honest prover at `x_P` needs, from the first send until both
    /// replies are home.
    pub fn honest_round_trip(&self) -> f64 {
        2.0 * (self.x_p - self.x_v1).max(self.x_v2 - self.x_p)
    }
}

/// Whether an honest prover at the claimed position can answer in time.
pub fn timing_feasible(scenario: &PvScenario) -> bool {
    scenario.honest_round_trip() <= scenario.delta_t
}

/// Classical (or forbidden quantum) message between the cheaters.
#[derive(Clone, Debug)]
pub enum Payload {
    Classical(Vec<u8>),
    Quantum(DensityOperator),
}

/// Whatever a cheater keeps locally between its two phases.
#[derive(Clone, Debug, Default)]
pub struct LocalState {
    pub classical: Vec<u8>,
    pub quantum: Vec<Option<DensityOperator>>,
}

/// Two colluding cheaters around the claimed position. M1 (towards V1)
/// intercepts the systems, M2 (towards V2) the bases. Each sends the other
/// one message, then both answer.
pub trait CheatStrategy: Send + Sync {
    fn name(&self) -> String;

    /// M1 on the intercepted systems (`None` where V1 sent nothing).
    fn e1(
        &self,
        systems: &[Option<DensityOperator>],
        rng: &mut RngStream,
    ) -> Result<(LocalState, Payload), PvError>;

    /// M2 on the intercepted bases.
    fn e2(&self, thetas: &[u8], rng: &mut RngStream) -> Result<(LocalState, Payload), PvError>;

    /// M1's answers to V1 after hearing from M2.
    fn d1(
        &self,
        local: LocalState,
        from_m2: &[u8],
        rng: &mut RngStream,
    ) -> Result<Vec<Trit>, PvError>;

    /// M2's answers to V2 after hearing from M1.
    fn d2(
        &self,
        local: LocalState,
        from_m1: &[u8],
        rng: &mut RngStream,
    ) -> Result<Vec<Trit>, PvError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheatPolicy {
    /// M1 measures every system in the computational basis at once.
    MeasureImmediately,
    /// M1 ignores the systems and flips coins.
    RandomGuess,
    /// M1 tries to ship its first system to M2. Always rejected.
    QuantumForwarder,
}

/// Built-in cheating strategies.
#[derive(Clone, Debug)]
pub struct SimpleCheat {
    policy: CheatPolicy,
    standard: MeasurementBasis,
}

impl SimpleCheat {
    pub fn new(policy: CheatPolicy) -> Self {
        SimpleCheat {
            policy,
            standard: ProtocolBases::standard().main[0].clone(),
        }
    }
}

const NOTHING: u8 = 2;

fn encode(t: Trit) -> u8 {
    t.bit().unwrap_or(NOTHING)
}

fn decode(b: u8) -> Trit {
    if b == NOTHING {
        Trit::Bot
    } else {
        Trit::from_bit(b)
    }
}

impl CheatStrategy for SimpleCheat {
    fn name(&self) -> String {
        match self.policy {
            CheatPolicy::MeasureImmediately => "measure-immediately",
            CheatPolicy::RandomGuess => "random-guess",
            CheatPolicy::QuantumForwarder => "quantum-forwarder",
        }
        .into()
    }

    fn e1(
        &self,
        systems: &[Option<DensityOperator>],
        rng: &mut RngStream,
    ) -> Result<(LocalState, Payload), PvError> {
        if self.policy == CheatPolicy::QuantumForwarder {
            let q = match systems.iter().flatten().next() {
                Some(q) => q.clone(),
                None => DensityOperator::maximally_mixed(2).map_err(DeviceError::from)?,
            };
            return Ok((LocalState::default(), Payload::Quantum(q)));
        }
        let mut k = Vec::with_capacity(systems.len());
        for s in systems {
            let bit = match (s, self.policy) {
                (None, _) => Trit::Bot,
                (Some(_), CheatPolicy::RandomGuess) => Trit::from_bit(rng.bit()),
                (Some(q), _) => Trit::from_bit(
                    measure(q, &self.standard, 0, rng)
                        .map_err(DeviceError::from)?
                        .0,
                ),
            };
            k.push(encode(bit));
        }
        let local = LocalState {
            classical: k.clone(),
            quantum: Vec::new(),
        };
        Ok((local, Payload::Classical(k)))
    }

    fn e2(&self, thetas: &[u8], _rng: &mut RngStream) -> Result<(LocalState, Payload), PvError> {
        Ok((LocalState::default(), Payload::Classical(thetas.to_vec())))
    }

    fn d1(
        &self,
        local: LocalState,
        _from_m2: &[u8],
        _rng: &mut RngStream,
    ) -> Result<Vec<Trit>, PvError> {
        Ok(local.classical.into_iter().map(decode).collect())
    }

    fn d2(
        &self,
        _local: LocalState,
        from_m1: &[u8],
        _rng: &mut RngStream,
    ) -> Result<Vec<Trit>, PvError> {
        Ok(from_m1.iter().copied().map(decode).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheatScenario {
    pub x_m1: f64,
    pub x_m2: f64,
    pub policy: CheatPolicy,
    /// Claimed entanglement bound; analytic input only.
    #[serde(default = "one")]
    pub d: u64,
}

fn one() -> u64 {
    1
}

impl CheatScenario {
    pub fn validate(&self, scenario: &PvScenario) -> Result<(), PvError> {
        let ok = scenario.x_v1 < self.x_m1
            && self.x_m1 < scenario.x_p
            && scenario.x_p < self.x_m2
            && self.x_m2 < scenario.x_v2;
        if ok {
            Ok(())
        } else {
            Err(PvError::Geometry(format!(
                "need x_V1 < x_M1 < x_P < x_M2 < x_V2, got M1 = {}, M2 = {}",
                self.x_m1, self.x_m2
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PvTranscript {
    pub strategy: String,
    pub rounds: Vec<RoundRecord>,
    pub answers_v1: Vec<Trit>,
    pub answers_v2: Vec<Trit>,
    /// Reply arrival times `[at V1, at V2]` for each round.
    pub round_reply_times: Vec<[f64; 2]>,
    pub reply_time_v1: f64,
    pub reply_time_v2: f64,
    pub window_end: f64,
    pub omega: f64,
    pub test_rounds: usize,
    pub aborted: bool,
    pub timing_ok: bool,
    pub answers_ok: bool,
    pub accepted: bool,
}

impl PvTranscript {
    pub fn non_test_rounds(&self) -> usize {
        self.rounds.len() - self.test_rounds
    }
}

struct VerifierRounds {
    rounds: Vec<RoundRecord>,
    systems: Vec<Option<DensityOperator>>,
    omega: f64,
    test_rounds: usize,
    aborted: bool,
}

fn verifier_rounds(
    params: &WseParams,
    devices: &dyn DeviceStrategy,
    s: &mut RunStreams,
) -> Result<VerifierRounds, PvError> {
    devices.calibration()?;
    let mut log = DeviceLog::default();
    let mut rounds = Vec::with_capacity(params.n);
    let mut systems = Vec::with_capacity(params.n);
    for round in 1..=params.n {
        let (record, routed) = alice_round(
            params.mu,
            devices,
            round,
            &mut log,
            &mut s.alice,
            &mut s.devices,
        )?;
        rounds.push(record);
        systems.push(routed.map(|t| t.qubit));
    }
    let (_, test_rounds, omega) = score(&rounds);
    Ok(VerifierRounds {
        aborted: alice_abort_decision(omega, params.delta),
        rounds,
        systems,
        omega,
        test_rounds,
    })
}

fn answers_match(rounds: &[RoundRecord], answers: &[Trit]) -> bool {
    answers.len() == rounds.len()
        && rounds
            .iter()
            .zip(answers)
            .all(|(r, a)| r.is_test() || r.x == *a)
}

fn finish(
    strategy: String,
    v: VerifierRounds,
    answers_v1: Vec<Trit>,
    answers_v2: Vec<Trit>,
    times: [f64; 2],
    window_end: f64,
) -> PvTranscript {
    let timing_ok = times[0] <= window_end && times[1] <= window_end;
    let answers_ok = answers_match(&v.rounds, &answers_v1) && answers_match(&v.rounds, &answers_v2);
    let mut rounds = v.rounds;
    for (r, a) in rounds.iter_mut().zip(&answers_v1) {
        if !r.is_test() {
            r.theta_hat = Trit::from_bit(r.theta);
            r.x_hat = *a;
        }
    }
    PvTranscript {
        strategy,
        round_reply_times: vec![times; rounds.len()],
        rounds,
        answers_v1,
        answers_v2,
        reply_time_v1: times[0],
        reply_time_v2: times[1],
        window_end,
        omega: v.omega,
        test_rounds: v.test_rounds,
        aborted: v.aborted,
        timing_ok,
        answers_ok,
        accepted: !v.aborted && timing_ok && answers_ok,
    }
}

/// Honest execution with the prover at `x_p_actual` (or the claimed spot).
pub fn run_pv_honest(
    scenario: &PvScenario,
    devices: &dyn DeviceStrategy,
    rng: &RngStream,
) -> Result<PvTranscript, PvError> {
    scenario.validate()?;
    if !timing_feasible(scenario) {
        return Err(PvError::Infeasible {
            needed: scenario.honest_round_trip(),
            delta_t: scenario.delta_t,
        });
    }
    let mut s = RunStreams::derive(rng);
    let v = verifier_rounds(&scenario.wse, devices, &mut s)?;

    let mut answers = Vec::with_capacity(v.rounds.len());
    for (r, sys) in v.rounds.iter().zip(&v.systems) {
        let a = match sys {
            None => Trit::Bot,
            Some(q) => {
                let basis = &devices.bases().main[r.theta as usize];
                Trit::from_bit(
                    measure(q, basis, 0, &mut s.bob)
                        .map_err(DeviceError::from)?
                        .0,
                )
            }
        };
        answers.push(a);
    }

    let x = scenario.x_p_actual.unwrap_or(scenario.x_p);
    let (s1, s2) = scenario.send_times();
    let (to_v1, to_v2) = (x - scenario.x_v1, scenario.x_v2 - x);
    let respond = (s1 + to_v1).max(s2 + to_v2);
    let times = [respond + to_v1, respond + to_v2];
    Ok(finish(
        devices.name(),
        v,
        answers.clone(),
        answers,
        times,
        scenario.window_end(),
    ))
}

fn classical(p: Payload) -> Result<Vec<u8>, PvError> {
    match p {
        Payload::Classical(m) => Ok(m),
        Payload::Quantum(_) => Err(PvError::QuantumPayload),
    }
}

/// Two cheaters against honest verifier devices.
pub fn run_pv_cheat(
    scenario: &PvScenario,
    cheat: &CheatScenario,
    rng: &RngStream,
) -> Result<PvTranscript, PvError> {
    run_pv_cheat_with(scenario, cheat, &SimpleCheat::new(cheat.policy), rng)
}

/// As [`run_pv_cheat`] with an arbitrary strategy.
pub fn run_pv_cheat_with(
    scenario: &PvScenario,
    cheat: &CheatScenario,
    strategy: &dyn CheatStrategy,
    rng: &RngStream,
) -> Result<PvTranscript, PvError> {
    scenario.validate()?;
    cheat.validate(scenario)?;
    let mut s = RunStreams::derive(rng);
    let v = verifier_rounds(&scenario.wse, &honest_strategy(), &mut s)?;
    let thetas: Vec<u8> = v.rounds.iter().map(|r| r.theta).collect();

    let mut m1_rng = s.bob.child(1);
    let mut m2_rng = s.bob.child(2);
    let (local1, msg1) = strategy.e1(&v.systems, &mut m1_rng)?;
    let (local2, msg2) = strategy.e2(&thetas, &mut m2_rng)?;
    let msg1 = classical(msg1)?;
    let msg2 = classical(msg2)?;
    let y = strategy.d1(local1, &msg2, &mut m1_rng)?;
    let z = strategy.d2(local2, &msg1, &mut m2_rng)?;
    for (who, ans) in [("M1", &y), ("M2", &z)] {
        if ans.len() != v.rounds.len() {
            return Err(PvError::Strategy(format!(
                "{who} answered {} of {} rounds",
                ans.len(),
                v.rounds.len()
            )));
        }
    }

    let (s1, s2) = scenario.send_times();
    let gap = cheat.x_m2 - cheat.x_m1;
    let t1 = s1 + (cheat.x_m1 - scenario.x_v1);
    let t2 = s2 + (scenario.x_v2 - cheat.x_m2);
    let ready1 = t1.max(t2 + gap);
    let ready2 = t2.max(t1 + gap);
    let times = [
        ready1 + (cheat.x_m1 - scenario.x_v1),
        ready2 + (scenario.x_v2 - cheat.x_m2),
    ];
    Ok(finish(
        strategy.name(),
        v,
        y,
        z,
        times,
        scenario.window_end(),
    ))
}
