use puppeteer_core::config::{EnvConfig, TaskConfig, TaskKind};
use puppeteer_core::env::physics::{self, integrate, PuppetState, FOOT_L, HEAD, REST_OFFSETS, TORSO};
use puppeteer_core::env::terrain::Segment;
use puppeteer_core::env::{PuppetEnv, Terrain};

fn cfg() -> EnvConfig {
    EnvConfig::default()
}

#[test]
fn free_fall_matches_closed_form_over_one_second() {
    let c = cfg();
    let mut s = PuppetState::unloaded(0.0, 20.0);
    s.vel = [[0.0, 1.5]; 4];
    let z0: Vec<f64> = s.pos.iter().map(|p| p[1]).collect();
    let steps = (1.0 / c.dt).round() as usize;
    let mut worst = 0.0f64;
    for n in 1..=steps {
        integrate(&mut s, REST_OFFSETS, &Terrain::void(), &c);
        let t = n as f64 * c.dt;
        for b in 0..4 {
            let z = z0[b] + 1.5 * t - 0.5 * c.gravity * t * t;
            worst = worst.max((s.pos[b][1] - z).abs());
        }
    }
    assert!(worst < 1e-6, "max deviation {worst:e}");
}

#[test]
fn rest_pose_drift_is_below_a_millimetre() {
    let task = TaskConfig::for_task(TaskKind::Stand);
    let mut env = PuppetEnv::reset(&task, &cfg(), 0).unwrap();
    let start = env.state().clone();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let out = env.step(&[0.0; 6]).unwrap();
        assert!(!out.terminated);
        for b in 0..4 {
            for k in 0..2 {
                worst = worst.max((env.state().pos[b][k] - start.pos[b][k]).abs());
            }
        }
    }
    assert!(worst < 1e-3, "drift {worst:e}");
}

#[test]
fn falling_into_a_gap_terminates_near_the_ballistic_time() {
    let c = cfg();
    let task = TaskConfig::for_task(TaskKind::Gaps);
    let terrain = Terrain::from_segments(vec![
        Segment { x0: -1e6, x1: -5.0, height: Some(0.0) },
        Segment { x0: -5.0, x1: 5.0, height: None },
        Segment { x0: 5.0, x1: 1e6, height: Some(0.0) },
    ]);
    let standing = PuppetState::standing(0.0, 0.0, c.gravity);
    let mut env = PuppetEnv::with_terrain(&task, &c, terrain, standing.clone());
    // Torso clearance threshold is half the rest height above the support.
    let drop = 0.5 * physics::rest_torso_height(c.gravity);
    let t_fall = (2.0 * drop / c.gravity).sqrt();
    let mut steps = 0;
    loop {
        steps += 1;
        if env.step(&[0.0; 6]).unwrap().terminated {
            break;
        }
        assert!(steps < 200);
    }
    let t = steps as f64 * c.dt;
    assert!(t >= t_fall - 1e-9 && t < t_fall + c.dt + 1e-9, "terminated at {t}, ballistic {t_fall}");
}

#[test]
fn energy_is_non_increasing_without_contact() {
    let c = cfg();
    let mut s = PuppetState::unloaded(0.0, 50.0);
    s.vel = [[0.3, 0.0], [-1.0, 2.0], [0.5, -0.5], [2.0, 1.0]];
    s.pos[HEAD][0] += 0.1;
    let mut e = s.energy(c.gravity);
    for _ in 0..100 {
        integrate(&mut s, REST_OFFSETS, &Terrain::void(), &c);
        let e2 = s.energy(c.gravity);
        assert!(e2 <= e + 1e-9 * e.abs().max(1.0), "{e} -> {e2}");
        e = e2;
    }
}

#[test]
fn saturated_action_approaches_the_box_limit_monotonically() {
    let c = cfg();
    let mut s = PuppetState::unloaded(0.0, 50.0);
    let mut action = [0.0; 6];
    action[2] = 1.0;
    let cmd = physics::action_to_offsets(&action);
    let limit = cmd[FOOT_L - 1][0];
    let mut prev = s.offsets()[FOOT_L - 1][0];
    for _ in 0..100 {
        integrate(&mut s, cmd, &Terrain::void(), &c);
        let x = s.offsets()[FOOT_L - 1][0];
        assert!(x >= prev - 1e-12 && x <= limit + 1e-12, "{prev} -> {x} (limit {limit})");
        prev = x;
    }
    assert!((prev - limit).abs() < 1e-3);
    assert!(s.pos[TORSO][1] < 50.0);
}

#[test]
fn same_actions_give_bit_identical_trajectories() {
    let task = TaskConfig::for_task(TaskKind::Hurdles);
    let run = || {
        let mut env = PuppetEnv::reset(&task, &cfg(), 42).unwrap();
        let mut trace = Vec::new();
        for t in 0..200 {
            let a: Vec<f64> = (0..6).map(|i| ((t * 7 + i * 3) as f64 * 0.37).sin()).collect();
            match env.step(&a) {
                Ok(o) => trace.push((env.state().clone(), o)),
                Err(_) => break,
            }
        }
        trace
    };
    assert_eq!(run(), run());
}
