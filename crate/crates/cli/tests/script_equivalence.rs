use ionsim::motional::ModeParams;
use ionsim::protocol::{self, InputQubit, InputSpec, PhaseConfig, TeleportParams};
use ionsim_cli::script::{execute, parse_pulse_script, teleport_script, ScriptContext};

fn context(params: &TeleportParams) -> ScriptContext {
    ScriptContext {
        modes: params.modes,
        nbar: params.nbar,
        tail_tol: params.tail_tol,
        cutoff: params.cutoff,
        trap_b: params.trap_b.clone(),
        correction_eps: params.epsilon,
    }
}

#[test]
fn teleport_script_matches_protocol_for_every_input() {
    for (eta, nbar, eps) in [(0.15, 0.0, 0.0), (0.15, 0.11, 0.0), (0.2, 0.4, 0.05), (0.1, 1.0, -0.03)] {
        let params = TeleportParams::new(eta, nbar, eps).unwrap();
        let ph = PhaseConfig::default();
        let script = parse_pulse_script(&teleport_script(ph.phi_a, ph.phi0_a, eps)).unwrap();
        let ctx = context(&params);
        let mut mean = 0.0;
        for (name, q) in InputQubit::cardinal() {
            let run = execute(&script, &q, &ctx).unwrap();
            let reference = protocol::teleport(&q, &params).unwrap();
            let branches = run.branches.as_ref().unwrap();
            for (b, r) in branches.iter().zip(&reference.branches) {
                assert_eq!(b.outcome, r.outcome);
                assert!((b.probability - r.probability).abs() < 1e-12, "{name} {}", b.outcome);
                assert_eq!(b.correction, r.correction);
                if let (Some(f), Some(g)) = (b.fidelity, r.fidelity) {
                    assert!((f - g).abs() < 1e-12, "{name} {}: {f} vs {g}", b.outcome);
                }
            }
            let agg = run.aggregate_fidelity().unwrap();
            assert!((agg - reference.aggregate()).abs() < 1e-12);
            mean += agg / 6.0;
        }
        let report = protocol::teleport_fidelity(&InputSpec::Average, &params).unwrap();
        assert!((mean - report.aggregate).abs() < 1e-12, "eta {eta} nbar {nbar} eps {eps}");
    }
}

#[test]
fn rotation_then_undo_is_identity() {
    let script = parse_pulse_script("rotate ion=1 axis=y angle=pi/3\nrotate ion=1 axis=y angle=-pi/3\n").unwrap();
    let params = TeleportParams::new(0.15, 0.0, 0.0).unwrap();
    let q = InputQubit::cardinal()[4].1;
    let run = execute(&script, &q, &context(&params)).unwrap();
    let rho = run.final_state.unwrap();
    let f = ionsim::linalg::fidelity(&q.density(), &rho).unwrap();
    assert!((f - 1.0).abs() < 1e-14);
}

#[test]
fn ground_state_pair_pulse_is_a_pure_gate() {
    // a quarter-area pulse at n = n_r = 0 leaves a pure state
    let script = parse_pulse_script("pulse ions=1,2 k=1 area=pi/4 phi=pi/4 phi0=3*pi/2 nbar=0\n").unwrap();
    let params = TeleportParams::with_modes(ModeParams::with_eta(0.2).unwrap(), 0.0, 0.0).unwrap();
    let run = execute(&script, &InputQubit::cardinal()[0].1, &context(&params)).unwrap();
    let rho = run.final_state.unwrap();
    let purity = rho.matmul(&rho).unwrap().trace().re;
    assert!((purity - 1.0).abs() < 1e-12);
}
