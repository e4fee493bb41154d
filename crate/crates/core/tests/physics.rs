use amp_biped::sim::{
    apply_push, randomize_domain, DomainParams, DomainRanges, PdCommand, RobotModel, SimConfig, SimState, Simulator,
    CONTROL_DT, NQ,
};
use amp_biped::terrain::{generate_terrain, HeightField, TerrainKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn airborne(sim: &Simulator, rng: &mut ChaCha8Rng) -> SimState {
    let terrain = HeightField::flat(10.0);
    let mut st = sim.standing_state(&terrain, 2.0);
    st.q[1] += 20.0;
    for j in 0..NQ {
        st.qd[j] = rng.gen_range(-2.0..2.0);
    }
    st
}

fn momentum(sim: &Simulator, st: &SimState) -> ([f64; 2], f64) {
    let kin = sim.kinematics(&st.q);
    (kin.linear_momentum(&st.qd), kin.angular_momentum(&st.qd))
}

#[test]
fn free_flight_conserves_momentum() {
    let cfg = SimConfig { gravity: 0.0, ..SimConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let terrain = HeightField::flat(10.0);
    for seed in 0..20 {
        let domain = randomize_domain(seed, &DomainRanges { push_force: [0.0, 0.0], ..DomainRanges::default() })
            .unwrap();
        let sim = Simulator::new(RobotModel::default(), domain, cfg).unwrap();
        let mut st = airborne(&sim, &mut rng);
        let cmd = PdCommand::new([0.3, -0.2, 0.1, 0.4], 1.0);
        let (p0, l0) = momentum(&sim, &st);
        for _ in 0..50 {
            let next = sim.step(&st, &cmd, &terrain, CONTROL_DT).unwrap();
            let (p1, l1) = momentum(&sim, &next);
            let (pa, la) = momentum(&sim, &st);
            let scale = 1.0 + p0[0].abs() + p0[1].abs() + l0.abs();
            assert!((p1[0] - pa[0]).abs() < 1e-10 * scale);
            assert!((p1[1] - pa[1]).abs() < 1e-10 * scale);
            assert!((l1 - la).abs() < 1e-10 * scale, "{} vs {}", l1, la);
            st = next;
        }
        let (p1, l1) = momentum(&sim, &st);
        assert!((p1[0] - p0[0]).abs() < 1e-9 && (p1[1] - p0[1]).abs() < 1e-9 && (l1 - l0).abs() < 1e-9);
    }
}

#[test]
fn free_fall_matches_gravity() {
    let sim = Simulator::new(RobotModel::default(), DomainParams::nominal(), SimConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let terrain = HeightField::flat(10.0);
    let mut st = airborne(&sim, &mut rng);
    for _ in 0..10 {
        let next = sim.step(&st, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
        assert!((next.qd[1] - st.qd[1] + 9.81 * CONTROL_DT).abs() < 1e-12);
        assert!((next.qd[0] - st.qd[0]).abs() < 1e-12);
        st = next;
    }
}

fn spring_energy(sim: &Simulator, st: &SimState) -> f64 {
    let nominal = sim.model.nominal_joints();
    let kp = sim.model.kp;
    (0..4).map(|i| 0.5 * kp * (st.q[3 + i] - nominal[i]).powi(2)).sum()
}

#[test]
fn passive_energy_does_not_grow() {
    // negligible joint damping and no gravity: kinetic plus PD spring energy is conserved
    let model = RobotModel { kd: 1e-12, ..RobotModel::default() };
    let cfg = SimConfig { gravity: 0.0, ..SimConfig::default() };
    let sim = Simulator::new(model, DomainParams::nominal(), cfg).unwrap();
    let terrain = HeightField::flat(10.0);
    let mut st = sim.standing_state(&terrain, 2.0);
    st.q[1] += 20.0;
    st.q[3] += 0.2;
    st.q[6] -= 0.15;
    st.qd[2] = 0.5;
    st.qd[3] = 1.0;
    let energy = |s: &SimState| sim.kinetic_energy(s) + spring_energy(&sim, s);
    let mut trace = vec![energy(&st)];
    for _ in 0..50 {
        st = sim.step(&st, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
        trace.push(energy(&st));
    }
    // compare window means so the bounded per-step oscillation cancels
    let head: f64 = trace[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = trace[trace.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(tail - head < 0.01 * head, "{tail} vs {head}");
    assert!(trace.iter().all(|e| (e - head).abs() < 0.05 * head));
}

#[test]
fn substep_convergence() {
    let terrain = HeightField::flat(10.0);
    let coarse = Simulator::new(RobotModel::default(), DomainParams::nominal(), SimConfig::default()).unwrap();
    let fine = Simulator::new(
        RobotModel::default(),
        DomainParams::nominal(),
        SimConfig { substep: 1e-4, ..SimConfig::default() },
    )
    .unwrap();
    let mut a = coarse.standing_state(&terrain, 2.0);
    a.q[1] += 20.0;
    a.q[3] += 0.5;
    a.qd[5] = 1.0;
    let mut b = a.clone();
    for _ in 0..50 {
        a = coarse.step(&a, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
        b = fine.step(&b, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
    }
    for j in 2..NQ {
        assert!((a.q[j] - b.q[j]).abs() < 1e-3, "coordinate {j}: {} vs {}", a.q[j], b.q[j]);
    }
}

#[test]
fn ground_forces_stay_in_friction_cone() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let terrains: Vec<HeightField> = TerrainKind::ALL
        .iter()
        .enumerate()
        .map(|(i, k)| generate_terrain(*k, 0.7, i as u64, 12.0).unwrap())
        .collect();
    let mut steps = 0;
    let mut seed = 0;
    while steps < 10_000 {
        let domain = randomize_domain(seed, &DomainRanges::default()).unwrap();
        let terrain = &terrains[seed as usize % terrains.len()];
        seed += 1;
        let sim = Simulator::new(RobotModel::default(), domain, SimConfig::default()).unwrap();
        let mut st = sim.standing_state(terrain, 1.0);
        for _ in 0..200 {
            let offsets = [0; 4].map(|_| rng.gen_range(-0.6..0.6));
            st = match sim.step(&st, &PdCommand::new(offsets, 1.0), terrain, CONTROL_DT) {
                Ok(s) => s,
                Err(_) => break,
            };
            steps += 1;
            for f in &st.foot_force_local {
                assert!(f[1] >= 0.0);
                assert!(f[0].abs() <= sim.domain.friction * f[1] + 1e-9, "{:?} mu {}", f, sim.domain.friction);
            }
            if sim.check_termination(&st, terrain).is_some() {
                break;
            }
        }
    }
}

#[test]
fn push_gives_expected_velocity_change() {
    let cfg = SimConfig { gravity: 0.0, ..SimConfig::default() };
    let sim = Simulator::new(RobotModel::default(), DomainParams::nominal(), cfg).unwrap();
    let terrain = HeightField::flat(10.0);
    let mut st = sim.standing_state(&terrain, 2.0);
    st.q[1] += 20.0;
    let mut plain = st.clone();
    apply_push(&mut st, [10.0 * sim.total_mass(), 0.0], 0.1).unwrap();
    for _ in 0..10 {
        st = sim.step(&st, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
        plain = sim.step(&plain, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
    }
    assert!((st.qd[0] - plain.qd[0] - 1.0).abs() < 0.05);
}

#[test]
fn zero_push_changes_nothing() {
    let sim = Simulator::new(RobotModel::default(), DomainParams::nominal(), SimConfig::default()).unwrap();
    let terrain = HeightField::flat(10.0);
    let mut a = sim.standing_state(&terrain, 2.0);
    let mut b = a.clone();
    apply_push(&mut b, [0.0, 0.0], 0.1).unwrap();
    for _ in 0..20 {
        a = sim.step(&a, &PdCommand::new([0.1, 0.0, -0.1, 0.2], 1.0), &terrain, CONTROL_DT).unwrap();
        b = sim.step(&b, &PdCommand::new([0.1, 0.0, -0.1, 0.2], 1.0), &terrain, CONTROL_DT).unwrap();
    }
    assert_eq!(a.q, b.q);
    assert_eq!(a.qd, b.qd);
}

#[test]
fn stepping_is_deterministic() {
    let domain = randomize_domain(9, &DomainRanges::default()).unwrap();
    let sim = Simulator::new(RobotModel::default(), domain, SimConfig::default()).unwrap();
    let terrain = generate_terrain(TerrainKind::Slope, 0.5, 4, 10.0).unwrap();
    let run = || {
        let mut st = sim.standing_state(&terrain, 1.0);
        for k in 0..100 {
            let a = (k as f64 * 0.3).sin() * 0.3;
            st = sim.step(&st, &PdCommand::new([a, -a, -a, a], 1.0), &terrain, CONTROL_DT).unwrap();
        }
        st
    };
    let (a, b) = (run(), run());
    assert_eq!(a.q.map(f64::to_bits), b.q.map(f64::to_bits));
    assert_eq!(a.qd.map(f64::to_bits), b.qd.map(f64::to_bits));
}

#[test]
fn settled_feet_carry_body_weight() {
    let sim = Simulator::new(RobotModel::default(), DomainParams::nominal(), SimConfig::default()).unwrap();
    let terrain = HeightField::flat(10.0);
    let mut st = sim.standing_state(&terrain, 2.0);
    let mut fz = 0.0;
    for _ in 0..25 {
        st = sim.step(&st, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
        fz += st.foot_force.iter().map(|f| f[1]).sum::<f64>() / 25.0;
    }
    assert_eq!(st.foot_contact, [true, true]);
    assert!((fz - sim.total_mass() * 9.81).abs() < 0.1 * sim.total_mass() * 9.81, "fz {fz}");
}
