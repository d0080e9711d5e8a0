//! The five commands. Runs fan out over rayon; run `r` always draws from
//! `RngStream::new(seed).child(r)` and results are kept in run order.

use rayon::prelude::*;
use serde::Serialize;

use diwse::bounds::{
    self, alice_abort_bound, alice_abort_exact, alice_abort_exact_strict, lambda_rate, BoundsError,
    PvComposition, RateReport, EXACT_ABORT_MAX_N, P_MAX,
};
use diwse::devices::{
    calibrate_bases, sequential_source_attack, DeviceLog, DeviceStrategy, CALIBRATION_TOL,
};
use diwse::pv::{
    run_pv_cheat, run_pv_honest, timing_feasible, CheatPolicy, CheatScenario, PvError, PvScenario,
    PvTranscript,
};
use diwse::qcore::{chsh_win_probability_with, ProtocolBases, RngStream};
use diwse::stats::{binomial_tail_exact, fraction_with_ci, hoeffding_tail, EstimateWithCI};
use diwse::wse::{run_wse, ProtocolError, WseParams, WseTranscript};

use crate::format::{fmt_g, Csv};
use crate::{render_json, CliError, Command, ExperimentConfig, Format, Output, CONFIDENCE};

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn protocol_error(e: ProtocolError) -> CliError {
    match e {
        ProtocolError::Params(p) => CliError::Config(format!("params: {p}")),
        other => CliError::Runtime(other.to_string()),
    }
}

fn pv_error(e: PvError) -> CliError {
    match e {
        PvError::Params(p) => CliError::Config(format!("params: {p}")),
        e @ (PvError::Geometry(_) | PvError::Infeasible { .. } | PvError::QuantumPayload) => {
            CliError::Config(format!("pv: {e}"))
        }
        other => CliError::Runtime(other.to_string()),
    }
}

fn ci(flags: &[bool]) -> Result<EstimateWithCI, CliError> {
    fraction_with_ci(flags, CONFIDENCE).map_err(runtime)
}

fn output(text: String) -> Output {
    Output {
        text,
        note: None,
        failed: None,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_g)
}

/// Exact CHSH win probability of the strategy's first source output.
fn device_win_probability(strategy: &dyn DeviceStrategy) -> Result<f64, CliError> {
    let src = strategy
        .prepare(1, &DeviceLog::default())
        .map_err(runtime)?;
    chsh_win_probability_with(&src.state, strategy.bases()).map_err(runtime)
}

fn run_many(
    params: &WseParams,
    strategy: &dyn DeviceStrategy,
    seed: u64,
    runs: usize,
) -> Result<Vec<WseTranscript>, CliError> {
    let root = RngStream::new(seed);
    (0..runs)
        .into_par_iter()
        .map(|r| run_wse(params, strategy, &root.child(r as u64)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(protocol_error)
}

#[derive(Serialize)]
struct WseRunRow {
    run: usize,
    alice_aborted: bool,
    bob_aborted: bool,
    omega: f64,
    test_rounds: usize,
    k: usize,
    index_set_size: usize,
    /// Fraction of `I` with `X_i = X̂_i`; absent when `I` is empty.
    match_rate: Option<f64>,
    /// Fraction of non-test rounds where Bob's guess equals `X_i`.
    guess_accuracy: Option<f64>,
}

fn wse_row(run: usize, t: &WseTranscript) -> WseRunRow {
    let matches = t
        .index_set
        .iter()
        .filter(|&&i| t.rounds[i - 1].x == t.rounds[i - 1].x_hat)
        .count();
    let k = t.k();
    let correct = t
        .rounds
        .iter()
        .zip(&t.bob_guess)
        .filter(|(r, g)| !r.is_test() && r.x == **g)
        .count();
    WseRunRow {
        run,
        alice_aborted: t.alice_aborted,
        bob_aborted: t.bob_aborted,
        omega: t.omega,
        test_rounds: t.test_rounds,
        k,
        index_set_size: t.index_set.len(),
        match_rate: (!t.index_set.is_empty()).then(|| matches as f64 / t.index_set.len() as f64),
        guess_accuracy: (k > 0).then(|| correct as f64 / k as f64),
    }
}

#[derive(Serialize)]
struct WseAnalytic {
    rate: RateReport,
    device_win_probability: f64,
    /// Hoeffding bound on Alice's abort probability at the device's win rate.
    alice_abort_bound: f64,
    /// Exact probability of `ω < δ` at the device's win rate (`n ≤ 5000`).
    alice_abort_exact: Option<f64>,
    bob_abort_bound: f64,
    total_abort_bound: f64,
}

#[derive(Serialize)]
struct WseResult<'a> {
    strategy: String,
    abort_fraction: EstimateWithCI,
    alice_abort_fraction: EstimateWithCI,
    bob_abort_fraction: EstimateWithCI,
    non_aborted_runs: usize,
    /// Mean `X_I = X̂_I` rate over non-aborted runs with nonempty `I`.
    match_rate: Option<f64>,
    runs_with_mismatch: usize,
    analytic: WseAnalytic,
    runs: Vec<WseRunRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transcripts: Option<&'a [WseTranscript]>,
}

pub fn simulate_wse(config: &ExperimentConfig) -> Result<Output, CliError> {
    let params = config.params()?;
    let strategy = config.strategy.build()?;
    let transcripts = run_many(&params, strategy.as_ref(), config.seed, config.runs)?;
    let rows: Vec<WseRunRow> = transcripts
        .iter()
        .enumerate()
        .map(|(i, t)| wse_row(i, t))
        .collect();

    if config.format == Format::Csv {
        let mut csv = Csv::new(&[
            "run",
            "alice_aborted",
            "bob_aborted",
            "omega",
            "test_rounds",
            "k",
            "index_set_size",
            "match_rate",
            "guess_accuracy",
        ]);
        for r in &rows {
            csv.row([
                r.run.to_string(),
                r.alice_aborted.to_string(),
                r.bob_aborted.to_string(),
                fmt_g(r.omega),
                r.test_rounds.to_string(),
                r.k.to_string(),
                r.index_set_size.to_string(),
                opt(r.match_rate),
                opt(r.guess_accuracy),
            ]);
        }
        return Ok(output(csv.finish()));
    }

    let aborted: Vec<bool> = transcripts.iter().map(|t| t.aborted()).collect();
    let alice: Vec<bool> = transcripts.iter().map(|t| t.alice_aborted).collect();
    let bob: Vec<bool> = transcripts.iter().map(|t| t.bob_aborted).collect();
    let kept: Vec<&WseRunRow> = rows
        .iter()
        .filter(|r| !r.alice_aborted && !r.bob_aborted)
        .collect();
    let rates: Vec<f64> = kept.iter().filter_map(|r| r.match_rate).collect();
    let match_rate = (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64);
    let runs_with_mismatch = kept
        .iter()
        .filter(|r| r.match_rate.is_some_and(|m| m < 1.0))
        .count();

    let p = device_win_probability(strategy.as_ref())?;
    let exact = if params.n <= EXACT_ABORT_MAX_N {
        Some(alice_abort_exact_strict(params.n, params.mu, params.delta, p).map_err(runtime)?)
    } else {
        None
    };
    let bound = alice_abort_bound(params.n, params.mu, params.delta, p);
    let result = WseResult {
        strategy: strategy.name(),
        abort_fraction: ci(&aborted)?,
        alice_abort_fraction: ci(&alice)?,
        bob_abort_fraction: ci(&bob)?,
        non_aborted_runs: kept.len(),
        match_rate,
        runs_with_mismatch,
        analytic: WseAnalytic {
            rate: lambda_rate(&params).map_err(runtime)?,
            device_win_probability: p,
            alice_abort_bound: bound,
            alice_abort_exact: exact,
            bob_abort_bound: params.eps,
            total_abort_bound: bound + params.eps,
        },
        runs: rows,
        transcripts: config.include_transcripts.then_some(&transcripts[..]),
    };
    Ok(output(render_json(Command::SimulateWse, config, result)?))
}

const RATE_HEADER: [&str; 14] = [
    "n",
    "mu",
    "delta",
    "eps",
    "d",
    "h",
    "grad_norm",
    "vbar",
    "lambda",
    "n_tilde",
    "hmax_bound",
    "alice_abort_bound",
    "bob_threshold",
    "min_n",
];

/// Column names of the rate table, in order.
pub fn rate_header() -> String {
    RATE_HEADER.join(",")
}

#[derive(Serialize)]
struct RatesResult {
    rows: Vec<RateReport>,
    /// Smallest `n` in the sweep with `λ > 0`.
    smallest_n_positive_lambda: Option<usize>,
}

pub fn rates(config: &ExperimentConfig) -> Result<Output, CliError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep is required for rates".into()))?;
    let lists = [
        ("n", sweep.n.len()),
        ("mu", sweep.mu.len()),
        ("delta", sweep.delta.len()),
        ("eps", sweep.eps.len()),
        ("d", sweep.d.len()),
    ];
    if let Some((name, _)) = lists.iter().find(|(_, l)| *l == 0) {
        return Err(CliError::Config(format!("sweep.{name} is empty")));
    }
    let mut rows = Vec::new();
    for &n in &sweep.n {
        for &mu in &sweep.mu {
            for &delta in &sweep.delta {
                for &eps in &sweep.eps {
                    for &d in &sweep.d {
                        let p = WseParams::new(n, mu, delta, eps, d).map_err(|e| {
                            CliError::Config(format!(
                                "sweep point (n={n}, mu={mu}, delta={delta}, eps={eps}, d={d}): {e}"
                            ))
                        })?;
                        rows.push(lambda_rate(&p).map_err(|e| {
                            CliError::Config(format!("sweep point (n={n}, delta={delta}): {e}"))
                        })?);
                    }
                }
            }
        }
    }
    let smallest = rows
        .iter()
        .filter(|r| r.lambda > 0.0)
        .map(|r| r.params.n)
        .min();

    match config.format {
        Format::Csv => {
            let mut csv = Csv::new(&RATE_HEADER);
            for r in &rows {
                let p = &r.params;
                csv.row([
                    p.n.to_string(),
                    fmt_g(p.mu),
                    fmt_g(p.delta),
                    fmt_g(p.eps),
                    p.d.to_string(),
                    fmt_g(r.h),
                    fmt_g(r.grad_inf_norm),
                    fmt_g(r.vbar),
                    fmt_g(r.lambda),
                    fmt_g(r.n_tilde),
                    fmt_g(r.hmax_bound),
                    fmt_g(r.alice_abort_bound),
                    fmt_g(r.bob_threshold),
                    r.min_n_correctness.to_string(),
                ]);
            }
            Ok(Output {
                text: csv.finish(),
                note: Some(match smallest {
                    Some(n) => format!("smallest n with lambda > 0: {n}"),
                    None => "no n in the sweep has lambda > 0".into(),
                }),
                failed: None,
            })
        }
        Format::Json => Ok(output(render_json(
            Command::Rates,
            config,
            RatesResult {
                rows,
                smallest_n_positive_lambda: smallest,
            },
        )?)),
    }
}

#[derive(Serialize)]
struct AttackRow {
    run: usize,
    alice_aborted: bool,
    bob_aborted: bool,
    omega: f64,
    test_rounds: usize,
    guess_perfect: bool,
    peak_stored_qubits: usize,
}

#[derive(Serialize)]
struct AttackResult {
    strategy: String,
    /// Runs where Bob's guess equals `X_1^n` on every non-test round.
    guess_success: EstimateWithCI,
    /// Alice's aborts; Bob is the attacker and never needs to abort.
    abort_fraction: EstimateWithCI,
    bob_threshold_exceeded: EstimateWithCI,
    max_stored_qubits: usize,
    eps: f64,
    runs: Vec<AttackRow>,
}

/// Sequential-source attack; `strategy` in the config is ignored.
pub fn attack_demo(config: &ExperimentConfig) -> Result<Output, CliError> {
    let params = config.params()?;
    let strategy = sequential_source_attack();
    let transcripts = run_many(&params, &strategy, config.seed, config.runs)?;
    let rows: Vec<AttackRow> = transcripts
        .iter()
        .enumerate()
        .map(|(run, t)| AttackRow {
            run,
            alice_aborted: t.alice_aborted,
            bob_aborted: t.bob_aborted,
            omega: t.omega,
            test_rounds: t.test_rounds,
            guess_perfect: t.guess_is_perfect(),
            peak_stored_qubits: t.peak_stored_qubits,
        })
        .collect();
    if config.format == Format::Csv {
        let mut csv = Csv::new(&[
            "run",
            "alice_aborted",
            "bob_aborted",
            "omega",
            "test_rounds",
            "guess_perfect",
            "peak_stored_qubits",
        ]);
        for r in &rows {
            csv.row([
                r.run.to_string(),
                r.alice_aborted.to_string(),
                r.bob_aborted.to_string(),
                fmt_g(r.omega),
                r.test_rounds.to_string(),
                r.guess_perfect.to_string(),
                r.peak_stored_qubits.to_string(),
            ]);
        }
        return Ok(output(csv.finish()));
    }
    let guess: Vec<bool> = rows.iter().map(|r| r.guess_perfect).collect();
    let alice: Vec<bool> = rows.iter().map(|r| r.alice_aborted).collect();
    let bob: Vec<bool> = rows.iter().map(|r| r.bob_aborted).collect();
    let result = AttackResult {
        strategy: strategy.name(),
        guess_success: ci(&guess)?,
        abort_fraction: ci(&alice)?,
        bob_threshold_exceeded: ci(&bob)?,
        max_stored_qubits: rows.iter().map(|r| r.peak_stored_qubits).max().unwrap_or(0),
        eps: params.eps,
        runs: rows,
    };
    Ok(output(render_json(Command::AttackDemo, config, result)?))
}

#[derive(Serialize)]
struct Timing {
    send_v1: f64,
    send_v2: f64,
    honest_round_trip: f64,
    delta_t: f64,
    feasible: bool,
}

#[derive(Serialize)]
struct HonestPv {
    abort_fraction: EstimateWithCI,
    accepted_fraction: EstimateWithCI,
    /// Acceptance rate among runs that did not abort.
    acceptance_among_non_aborted: Option<f64>,
    timing_ok_runs: usize,
}

/// Per-round probability that a cheater's answer is right.
fn per_round_accuracy(policy: CheatPolicy) -> Option<f64> {
    match policy {
        CheatPolicy::MeasureImmediately => Some(0.75),
        CheatPolicy::RandomGuess => Some(0.5),
        CheatPolicy::QuantumForwarder => None,
    }
}

#[derive(Serialize)]
pub struct CheatSummary {
    pub policy: CheatPolicy,
    pub x_m1: f64,
    pub x_m2: f64,
    pub n: usize,
    /// Runs where both answer strings were right and on time.
    pub success: EstimateWithCI,
    /// Runs the verifiers accepted (success and no abort).
    pub accepted: EstimateWithCI,
    /// Mean over runs of `accuracy^{#non-test}`.
    pub oracle_success: Option<f64>,
    /// Standard error of the success fraction under the oracle.
    pub oracle_sigma: Option<f64>,
    pub mean_non_test_rounds: f64,
    pub timing_ok: bool,
}

/// Cheat success over `runs` runs at `n` rounds, against the product rule.
pub fn cheat_summary(
    scenario: &PvScenario,
    cheat: &CheatScenario,
    seed: u64,
    runs: usize,
) -> Result<(CheatSummary, Vec<PvTranscript>), CliError> {
    let root = RngStream::new(seed);
    let trs = (0..runs)
        .into_par_iter()
        .map(|r| run_pv_cheat(scenario, cheat, &root.child(r as u64)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(pv_error)?;
    let success: Vec<bool> = trs.iter().map(|t| t.answers_ok && t.timing_ok).collect();
    let accepted: Vec<bool> = trs.iter().map(|t| t.accepted).collect();
    let probs: Option<Vec<f64>> = per_round_accuracy(cheat.policy).map(|a| {
        trs.iter()
            .map(|t| a.powi(t.non_test_rounds() as i32))
            .collect()
    });
    let r = runs as f64;
    let summary = CheatSummary {
        policy: cheat.policy,
        x_m1: cheat.x_m1,
        x_m2: cheat.x_m2,
        n: scenario.wse.n,
        success: ci(&success)?,
        accepted: ci(&accepted)?,
        oracle_success: probs.as_ref().map(|p| p.iter().sum::<f64>() / r),
        oracle_sigma: probs
            .as_ref()
            .map(|p| p.iter().map(|q| q * (1.0 - q)).sum::<f64>().sqrt() / r),
        mean_non_test_rounds: trs.iter().map(|t| t.non_test_rounds() as f64).sum::<f64>() / r,
        timing_ok: trs.iter().all(|t| t.timing_ok),
    };
    Ok((summary, trs))
}

#[derive(Serialize)]
#[serde(untagged)]
enum Analytic {
    Bound(PvComposition),
    Unavailable { error: String },
}

#[derive(Serialize)]
struct PvResult {
    timing: Timing,
    honest: HonestPv,
    cheats: Vec<CheatSummary>,
    analytic_cheat_bound: Analytic,
}

pub fn simulate_pv(config: &ExperimentConfig) -> Result<Output, CliError> {
    let params = config.params()?;
    let pv = config
        .pv
        .as_ref()
        .ok_or_else(|| CliError::Config("pv is required for simulate-pv".into()))?;
    let scenario = PvScenario {
        x_v1: pv.x_v1,
        x_p: pv.x_p,
        x_v2: pv.x_v2,
        delta_t: pv.delta_t,
        wse: params,
        x_p_actual: pv.x_p_actual,
    };
    scenario.validate().map_err(pv_error)?;
    let strategy = config.strategy.build()?;
    let root = RngStream::new(config.seed);
    let honest = (0..config.runs)
        .into_par_iter()
        .map(|r| run_pv_honest(&scenario, strategy.as_ref(), &root.child(r as u64)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(pv_error)?;

    let mut cheats = Vec::new();
    let rounds = if pv.cheat_rounds.is_empty() {
        vec![params.n]
    } else {
        pv.cheat_rounds.clone()
    };
    for (ci_idx, cheat) in pv.cheats.iter().enumerate() {
        for (ni, &n) in rounds.iter().enumerate() {
            let mut s = scenario;
            s.wse.n = n;
            // Distinct seed block per (cheat, n) so runs never share streams.
            let seed = config
                .seed
                .wrapping_add(1 + ((ci_idx as u64) << 32) + ni as u64);
            cheats.push(cheat_summary(&s, cheat, seed, config.runs)?.0);
        }
    }

    if config.format == Format::Csv {
        let mut csv = Csv::new(&[
            "kind", "policy", "n", "runs", "success", "accepted", "oracle",
        ]);
        let acc: Vec<bool> = honest.iter().map(|t| t.accepted).collect();
        let ok = acc.iter().filter(|&&b| b).count() as f64 / acc.len() as f64;
        csv.row([
            "honest".into(),
            strategy.name(),
            params.n.to_string(),
            config.runs.to_string(),
            fmt_g(ok),
            fmt_g(ok),
            String::new(),
        ]);
        for c in &cheats {
            csv.row([
                "cheat".into(),
                serde_json::to_value(c.policy)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                c.n.to_string(),
                config.runs.to_string(),
                fmt_g(c.success.point),
                fmt_g(c.accepted.point),
                opt(c.oracle_success),
            ]);
        }
        return Ok(output(csv.finish()));
    }

    let aborted: Vec<bool> = honest.iter().map(|t| t.aborted).collect();
    let accepted: Vec<bool> = honest.iter().map(|t| t.accepted).collect();
    let kept: Vec<&PvTranscript> = honest.iter().filter(|t| !t.aborted).collect();
    let (s1, s2) = scenario.send_times();
    let d = pv.cheats.first().map_or(1, |c| c.d);
    let analytic =
        match bounds::compose_pv_bound(params.n, params.mu, params.delta, d, pv.alpha_decay) {
            Ok(b) => Analytic::Bound(b),
            Err(e) => Analytic::Unavailable {
                error: e.to_string(),
            },
        };
    let result = PvResult {
        timing: Timing {
            send_v1: s1,
            send_v2: s2,
            honest_round_trip: scenario.honest_round_trip(),
            delta_t: scenario.delta_t,
            feasible: timing_feasible(&scenario),
        },
        honest: HonestPv {
            abort_fraction: ci(&aborted)?,
            accepted_fraction: ci(&accepted)?,
            acceptance_among_non_aborted: (!kept.is_empty())
                .then(|| kept.iter().filter(|t| t.accepted).count() as f64 / kept.len() as f64),
            timing_ok_runs: honest.iter().filter(|t| t.timing_ok).count(),
        },
        cheats,
        analytic_cheat_bound: analytic,
    };
    Ok(output(render_json(Command::SimulatePv, config, result)?))
}

/// Outcome of one named invariant.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Distance from failure; negative when failed.
    pub margin: f64,
    pub detail: String,
}

fn check(name: &'static str, margin: f64, detail: String) -> Check {
    Check {
        name,
        passed: margin >= 0.0,
        margin,
        detail,
    }
}

fn bounds_failed(name: &'static str, e: BoundsError) -> Check {
    Check {
        name,
        passed: false,
        margin: f64::NEG_INFINITY,
        detail: e.to_string(),
    }
}

fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| a + (b - a) * i as f64 / (k - 1) as f64)
        .collect()
}

fn calibration_check(swap: bool) -> Check {
    let bases = if swap {
        ProtocolBases::standard().with_test_labels_swapped()
    } else {
        ProtocolBases::standard()
    };
    match calibrate_bases(&bases) {
        Ok(r) => check(
            "calibration",
            CALIBRATION_TOL - r.max_deviation,
            format!("win probability {}", r.win_probability),
        ),
        Err(e) => Check {
            name: "calibration",
            passed: false,
            margin: -1.0,
            detail: e.to_string(),
        },
    }
}

fn gradient_check() -> Result<Check, BoundsError> {
    let mut worst: f64 = 0.0;
    for &delta in &linspace(0.76, 0.84, 10) {
        for &mu in &linspace(0.05, 0.5, 10) {
            let a = bounds::affine_tradeoff_at(delta, mu)?;
            let q = [a.point.q0, a.point.q1, a.point.q_bot];
            let f = |q: [f64; 3]| bounds::tradeoff_f_at_p(q[1] / (1.0 - q[2]), mu);
            // Step relative to the denominator μ = 1 − q⊥ of the ratio f sees.
            let h = 1e-6 * (1.0 - q[2]);
            for c in 0..3 {
                let (mut up, mut dn) = (q, q);
                up[c] += h;
                dn[c] -= h;
                let fd = (f(up)? - f(dn)?) / (2.0 * h);
                let err = if a.gradient[c] == 0.0 {
                    fd.abs()
                } else {
                    ((a.gradient[c] - fd) / a.gradient[c]).abs()
                };
                worst = worst.max(err);
            }
        }
    }
    Ok(check(
        "gradient-finite-difference",
        1e-6 - worst,
        format!("max relative error {worst:e} on a 10x10 (delta, mu) grid"),
    ))
}

fn abort_dominance_check() -> Result<Check, BoundsError> {
    let mut margin = f64::INFINITY;
    for n in [50, 200, 1000] {
        for mu in [0.1, 0.3] {
            let b = alice_abort_bound(n, mu, 0.8, 0.8536);
            let e = alice_abort_exact(n, mu, 0.8, 0.8536)?;
            let s = alice_abort_exact_strict(n, mu, 0.8, 0.8536)?;
            margin = margin.min(b - e).min(b - s);
        }
    }
    Ok(check(
        "abort-exact-vs-bound",
        margin,
        "n in {50,200,1000}, mu in {0.1,0.3}, delta 0.8, p 0.8536".into(),
    ))
}

fn hoeffding_dominance_check() -> Check {
    let mut margin = f64::INFINITY;
    for n in [20usize, 100, 500] {
        for p in [0.3, 0.5, 0.8] {
            for t in [0.05, 0.1, 0.2] {
                let q: f64 = p - t;
                let k = (q * n as f64).floor() as usize;
                let exact = binomial_tail_exact(n, k, p);
                margin = margin.min(hoeffding_tail(n as u64, t) - exact);
            }
        }
    }
    check(
        "binomial-vs-hoeffding",
        margin,
        "n in {20,100,500}, p in {0.3,0.5,0.8}, t in {0.05,0.1,0.2}".into(),
    )
}

fn convexity_check() -> Result<Check, BoundsError> {
    let ps = linspace(0.75, P_MAX, 201);
    let mut worst = f64::INFINITY;
    for w in ps.windows(3) {
        let f = |p| bounds::tradeoff_f_at_p(p, 0.2);
        let second = f(w[0])? - 2.0 * f(w[1])? + f(w[2])?;
        worst = worst.min(second);
    }
    Ok(check(
        "tradeoff-convexity",
        worst + 1e-9,
        format!("smallest second difference {worst:e}"),
    ))
}

fn zeta_s_check() -> Result<Check, BoundsError> {
    let mut worst: f64 = 0.0;
    for p in linspace(0.75, P_MAX, 101) {
        let s = 8.0 * p - 4.0;
        let alt = s / 4.0 * (8.0 - s * s).max(0.0).sqrt();
        worst = worst.max((alt - bounds::zeta(p)?).abs());
    }
    Ok(check(
        "zeta-chsh-value-consistency",
        1e-12 - worst,
        format!("max deviation {worst:e}"),
    ))
}

fn rate_consistency_check() -> Result<Check, BoundsError> {
    let mut worst: f64 = 0.0;
    for (n, mu, delta, eps, d) in [
        (10_000, 0.2, 0.8, 0.05, 2),
        (1_000_000, 0.01, 0.85, 1e-6, 2),
        (500, 0.3, 0.76, 0.5, 1),
    ] {
        let r = lambda_rate(&WseParams {
            n,
            mu,
            delta,
            eps,
            d,
        })?;
        worst = worst.max((r.recomputed_lambda() - r.lambda).abs());
    }
    Ok(check(
        "rate-report-consistency",
        1e-9 - worst,
        format!("max |lambda - recomputed| {worst:e}"),
    ))
}

fn shannon_check() -> Result<Check, BoundsError> {
    let mut margin = f64::INFINITY;
    for i in 0..=10 {
        let b = bounds::shannon_lower_from_zeta(i as f64 / 10.0)?;
        margin = margin.min(b.tight - b.loose);
    }
    Ok(check(
        "shannon-tight-vs-loose",
        margin + 1e-15,
        "zeta in {0, 0.1, ..., 1}".into(),
    ))
}

type CheckFn = fn() -> Result<Check, BoundsError>;

/// Runs every invariant; failures are reported, not raised.
pub fn invariant_suite(swap_test_labels: bool) -> Vec<Check> {
    let mut out = vec![calibration_check(swap_test_labels)];
    let fallible: [(&str, CheckFn); 6] = [
        ("gradient-finite-difference", gradient_check),
        ("abort-exact-vs-bound", abort_dominance_check),
        ("tradeoff-convexity", convexity_check),
        ("zeta-chsh-value-consistency", zeta_s_check),
        ("rate-report-consistency", rate_consistency_check),
        ("shannon-tight-vs-loose", shannon_check),
    ];
    for (name, f) in fallible {
        out.push(f().unwrap_or_else(|e| bounds_failed(name, e)));
    }
    out.push(hoeffding_dominance_check());
    out
}

#[derive(Serialize)]
struct CheckResult {
    all_passed: bool,
    checks: Vec<Check>,
}

pub fn check_bounds(config: &ExperimentConfig) -> Result<Output, CliError> {
    let checks = invariant_suite(config.checks.swap_test_labels);
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    let text = match config.format {
        Format::Csv => {
            let mut csv = Csv::new(&["name", "passed", "margin", "detail"]);
            for c in &checks {
                csv.row([
                    c.name.to_string(),
                    c.passed.to_string(),
                    fmt_g(c.margin),
                    c.detail.replace(',', ";"),
                ]);
            }
            csv.finish()
        }
        Format::Json => render_json(
            Command::CheckBounds,
            config,
            CheckResult {
                all_passed: failed.is_empty(),
                checks: checks.clone(),
            },
        )?,
    };
    Ok(Output {
        text,
        note: None,
        failed: (!failed.is_empty()).then(|| failed.join(", ")),
    })
}
