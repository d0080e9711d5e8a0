//! Whole-protocol behaviour: aborts, the one-qubit attack, Bob's privacy,
//! determinism and position verification.

use diwse::bounds;
use diwse::devices::{depolarized_strategy, honest_strategy, sequential_source_attack};
use diwse::pv::{
    run_pv_cheat, run_pv_cheat_with, run_pv_honest, timing_feasible, CheatPolicy, CheatScenario,
    PvError, PvScenario, SimpleCheat,
};
use diwse::qcore::{ProtocolBases, RngStream};
use diwse::stats::hoeffding_half_width;
use diwse::wse::{run_wse, ProtocolError, WseParams};
use diwse::Trit;

#[test]
fn fully_depolarized_devices_abort() {
    let params = WseParams::new(500, 0.2, 0.8, 0.05, 1).unwrap();
    let dev = depolarized_strategy(0.0).unwrap();
    let root = RngStream::new(11);
    let aborted = (0..200)
        .filter(|&i| {
            run_wse(&params, &dev, &root.child(i))
                .unwrap()
                .alice_aborted
        })
        .count();
    assert!(aborted as f64 / 200.0 >= 0.99, "{aborted}/200 aborted");
}

#[test]
fn bob_basis_choices_are_uniform_and_independent_of_alice() {
    // Counts of (Θ, Θ̂) over non-test rounds; each cell should hold a
    // quarter of them.
    let params = WseParams::new(2000, 0.2, 0.8, 0.05, 1).unwrap();
    let root = RngStream::new(12);
    let mut cells = [[0usize; 2]; 2];
    for i in 0..20 {
        let t = run_wse(&params, &honest_strategy(), &root.child(i)).unwrap();
        for r in t.rounds.iter().filter(|r| !r.is_test()) {
            let hat = r.theta_hat.bit().expect("honest Bob always announces");
            cells[r.theta as usize][hat as usize] += 1;
        }
    }
    let total: usize = cells.iter().flatten().sum();
    let sigma = (0.25 * 0.75 / total as f64).sqrt();
    for row in cells {
        for c in row {
            let f = c as f64 / total as f64;
            assert!((f - 0.25).abs() <= 4.0 * sigma, "cell fraction {f}");
        }
    }
}

#[test]
fn attack_guesses_everything_with_one_qubit() {
    let params = WseParams::new(200, 0.2, 0.755, 0.05, 1).unwrap();
    let attack = sequential_source_attack();
    let root = RngStream::new(13);
    let runs = 500;
    let mut aborts = 0;
    for i in 0..runs {
        let t = run_wse(&params, &attack, &root.child(i)).unwrap();
        assert!(t.peak_stored_qubits <= 1);
        assert!(t.quantum_memory_used);
        assert!(t.guess_is_perfect(), "run {i}");
        assert!(t.index_set.is_empty());
        aborts += usize::from(t.alice_aborted);
    }
    // The attack plays the honest statistics on test rounds, so Alice
    // aborts at the honest rate.
    let expected = bounds::alice_abort_exact_strict(200, 0.2, 0.755, bounds::P_MAX).unwrap();
    let rate = aborts as f64 / runs as f64;
    assert!((rate - expected).abs() <= hoeffding_half_width(runs as usize, 0.99));
}

#[test]
fn same_seed_same_transcript() {
    let params = WseParams::new(300, 0.3, 0.8, 0.05, 1).unwrap();
    let a = run_wse(&params, &honest_strategy(), &RngStream::new(5)).unwrap();
    let b = run_wse(&params, &honest_strategy(), &RngStream::new(5)).unwrap();
    assert_eq!(a, b);
    let c = run_wse(&params, &honest_strategy(), &RngStream::new(6)).unwrap();
    assert_ne!(a.rounds, c.rounds);
}

#[test]
fn alice_choices_do_not_depend_on_devices() {
    let params = WseParams::new(300, 0.3, 0.8, 0.05, 1).unwrap();
    let rng = RngStream::new(21);
    let a = run_wse(&params, &honest_strategy(), &rng).unwrap();
    let b = run_wse(&params, &depolarized_strategy(0.3).unwrap(), &rng).unwrap();
    let c = run_wse(&params, &sequential_source_attack(), &rng).unwrap();
    for t in [&b, &c] {
        for (x, y) in a.rounds.iter().zip(&t.rounds) {
            assert_eq!((x.t, x.theta, x.theta_bar), (y.t, y.theta, y.theta_bar));
        }
    }
}

#[test]
fn miswired_testing_device_fails_calibration() {
    let params = WseParams::new(50, 0.3, 0.8, 0.05, 1).unwrap();
    let dev = honest_strategy().with_bases(ProtocolBases::standard().with_test_labels_swapped());
    let e = run_wse(&params, &dev, &RngStream::new(1)).unwrap_err();
    assert!(matches!(e, ProtocolError::Device(_)), "{e}");
}

fn scenario() -> PvScenario {
    PvScenario {
        x_v1: 0.0,
        x_p: 1.0,
        x_v2: 2.0,
        delta_t: 2.0,
        wse: WseParams::new(200, 0.2, 0.755, 0.05, 1).unwrap(),
        x_p_actual: None,
    }
}

#[test]
fn honest_prover_answers_on_time() {
    let s = scenario();
    assert!(timing_feasible(&s));
    let root = RngStream::new(31);
    for i in 0..50 {
        let t = run_pv_honest(&s, &honest_strategy(), &root.child(i)).unwrap();
        assert!(t.timing_ok && t.answers_ok);
        assert_eq!(t.accepted, !t.aborted);
        assert_eq!(t.answers_v1, t.answers_v2);
    }
}

#[test]
fn displaced_prover_misses_the_window() {
    for actual in [0.5, 1.2, 1.9] {
        let s = PvScenario {
            x_p_actual: Some(actual),
            ..scenario()
        };
        let t = run_pv_honest(&s, &honest_strategy(), &RngStream::new(32)).unwrap();
        assert!(!t.timing_ok, "prover at {actual}");
        assert!(!t.accepted);
    }
}

#[test]
fn window_too_short_is_infeasible() {
    let s = PvScenario {
        delta_t: 1.5,
        ..scenario()
    };
    assert!(!timing_feasible(&s));
    let e = run_pv_honest(&s, &honest_strategy(), &RngStream::new(1)).unwrap_err();
    assert!(matches!(e, PvError::Infeasible { .. }));
}

#[test]
fn cheaters_cannot_send_quantum_states() {
    let s = scenario();
    let cheat = CheatScenario {
        x_m1: 0.5,
        x_m2: 1.5,
        policy: CheatPolicy::QuantumForwarder,
        d: 1,
    };
    let root = RngStream::new(33);
    for i in 0..100 {
        let n = 1 + (i as usize * 7) % 60;
        let s = PvScenario {
            wse: WseParams::new(n, 0.5, 0.755, 0.05, 1).unwrap(),
            ..s
        };
        let e = run_pv_cheat(&s, &cheat, &root.child(i)).unwrap_err();
        assert!(matches!(e, PvError::QuantumPayload), "{e}");
    }
}

#[test]
fn cheaters_reply_on_time_but_guess() {
    let s = scenario();
    let cheat = CheatScenario {
        x_m1: 0.5,
        x_m2: 1.5,
        policy: CheatPolicy::MeasureImmediately,
        d: 1,
    };
    let strategy = SimpleCheat::new(cheat.policy);
    let root = RngStream::new(34);
    let mut correct = 0usize;
    let mut asked = 0usize;
    for i in 0..40 {
        let t = run_pv_cheat_with(&s, &cheat, &strategy, &root.child(i)).unwrap();
        assert!(t.timing_ok);
        assert_eq!(t.answers_v1, t.answers_v2);
        for (r, a) in t.rounds.iter().zip(&t.answers_v1) {
            if r.is_test() {
                assert_eq!(*a, Trit::Bot);
            } else {
                asked += 1;
                correct += usize::from(*a == r.x);
            }
        }
    }
    // Measuring in the computational basis is right always when Θ = 0 and
    // half the time when Θ = 1.
    let f = correct as f64 / asked as f64;
    let sigma = (0.75 * 0.25 / asked as f64).sqrt();
    assert!((f - 0.75).abs() <= 4.0 * sigma, "per-round accuracy {f}");
}

#[test]
fn misplaced_cheaters_rejected() {
    let bad = CheatScenario {
        x_m1: 1.5,
        x_m2: 0.5,
        policy: CheatPolicy::RandomGuess,
        d: 1,
    };
    let e = run_pv_cheat(&scenario(), &bad, &RngStream::new(1)).unwrap_err();
    assert!(matches!(e, PvError::Geometry(_)));
}
