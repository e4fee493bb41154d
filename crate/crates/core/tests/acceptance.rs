//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use amp_biped::amp::{
    shuffled_impostors, stack_features, style_reward, AmpTransition, DiscriminatorConfig,
    DiscriminatorTrainer, TransitionDataset,
};
use amp_biped::distill::{DistillConfig, Distiller, StudentPolicy};
use amp_biped::harness::{
    eval_sweep, run_episode, run_push_test, write_sweep_csv, EvalConfig, Policy, StudentController,
};
use amp_biped::refgen::{
    build_dataset, forward_kinematics, generate_reference_clips, inverse_kinematics, ReferenceTrajectory,
    TrajOptConfig,
};
use amp_biped::rl::{
    compose_reward, task_reward, CommandRanges, EnvConfig, EpisodeSetup, TeacherPolicy, TeacherTrainer, TrainConfig, TrainLogRow,
    TrainLogWriter,
};
use amp_biped::sim::{
    randomize_domain, DomainParams, DomainRanges, PdCommand, RobotModel, SimConfig, SimState, Simulator, CONTROL_DT,
    NQ,
};
use amp_biped::terrain::{generate_terrain, HeightField, TerrainKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMOKE_SEEDS: [u64; 3] = [0, 1, 2];
const SMOKE_MAX_ITERATIONS: usize = 2000;
const SMOKE_BUDGET_S: f64 = 2.0 * 3600.0;
const SMOKE_WINDOW: usize = 10;
const DETERMINISM_ITERATIONS: usize = 20;
const TEACHER_ITERATIONS: usize = 300;

type Check = Result<String, String>;

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn formulas() -> Check {
    for (d, want) in [(-1.0, 0.0), (0.0, 0.75), (1.0, 1.0), (5.0, 0.0)] {
        ensure(style_reward(d) == want, || format!("style({d}) = {}", style_reward(d)))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (t, s, g) = (rng.gen_range(-5.0..5.0), rng.gen_range(0.0..1.0), rng.gen_range(-5.0..0.0));
        worst = worst.max((compose_reward(t, s, g) - (t + s + g)).abs());
    }
    ensure(worst <= 1e-12, || format!("additivity error {worst:e}"))?;
    let ln2 = std::f64::consts::LN_2;
    let v = [task_reward(0.5, 0.5, 0.0, 0.0, 1.0, 0.0), task_reward(0.5, 0.5 + ln2, 0.0, 0.0, 1.0, 0.0)];
    let w = [task_reward(0.0, 0.0, 0.3, 0.3, 0.0, 1.0), task_reward(0.0, 0.0, 0.3, 0.3 - ln2, 0.0, 1.0)];
    for (got, want) in v.iter().chain(&w).zip([1.0, 0.5, 1.0, 0.5]) {
        ensure((got - want).abs() <= 1e-15, || format!("kernel {got} vs {want}"))?;
    }
    Ok(format!("style exact, additivity {worst:.1e}, kernels exact"))
}

fn gradients() -> Check {
    for seed in 0..3 {
        common::check_discriminator_gradient(seed).map_err(|e| format!("discriminator: {e}"))?;
        common::check_ppo_gradient(seed).map_err(|e| format!("ppo: {e}"))?;
    }
    Ok(format!("3 seeds each, rtol {:.0e}", common::RTOL))
}

fn airborne(sim: &Simulator, rng: &mut ChaCha8Rng) -> SimState {
    let mut st = sim.standing_state(&HeightField::flat(10.0), 2.0);
    st.q[1] += 20.0;
    for j in 0..NQ {
        st.qd[j] = rng.gen_range(-2.0..2.0);
    }
    st
}

fn physics() -> Check {
    let terrain = HeightField::flat(10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let no_gravity = SimConfig { gravity: 0.0, ..SimConfig::default() };
    let mut worst_momentum = 0.0f64;
    for seed in 0..20 {
        let domain = randomize_domain(seed, &DomainRanges { push_force: [0.0, 0.0], ..DomainRanges::default() })
            .map_err(|e| e.to_string())?;
        let sim = Simulator::new(RobotModel::default(), domain, no_gravity).map_err(|e| e.to_string())?;
        let mut st = airborne(&sim, &mut rng);
        let cmd = PdCommand::new([0.3, -0.2, 0.1, 0.4], 1.0);
        for _ in 0..50 {
            let next = sim.step(&st, &cmd, &terrain, CONTROL_DT).map_err(|e| e.to_string())?;
            let (a, b) = (sim.kinematics(&st.q), sim.kinematics(&next.q));
            let (p0, l0) = (a.linear_momentum(&st.qd), a.angular_momentum(&st.qd));
            let (p1, l1) = (b.linear_momentum(&next.qd), b.angular_momentum(&next.qd));
            let scale = 1.0 + p0[0].abs() + p0[1].abs() + l0.abs();
            worst_momentum = worst_momentum.max(((p1[0] - p0[0]).abs().max((p1[1] - p0[1]).abs()).max((l1 - l0).abs())) / scale);
            st = next;
        }
    }
    ensure(worst_momentum < 1e-10, || format!("momentum drift {worst_momentum:e} per step"))?;

    let terrains: Vec<HeightField> = TerrainKind::ALL
        .iter()
        .enumerate()
        .map(|(i, k)| generate_terrain(*k, 0.7, i as u64, 12.0).unwrap())
        .collect();
    let (mut steps, mut contact_steps, mut seed) = (0usize, 0usize, 0u64);
    while steps < 10_000 {
        let domain = randomize_domain(seed, &DomainRanges::default()).map_err(|e| e.to_string())?;
        let terrain = &terrains[seed as usize % terrains.len()];
        seed += 1;
        let sim = Simulator::new(RobotModel::default(), domain, SimConfig::default()).map_err(|e| e.to_string())?;
        let mut st = sim.standing_state(terrain, 1.0);
        for _ in 0..200 {
            let offsets = [0; 4].map(|_| rng.gen_range(-0.6..0.6));
            st = match sim.step(&st, &PdCommand::new(offsets, 1.0), terrain, CONTROL_DT) {
                Ok(s) => s,
                Err(_) => break,
            };
            steps += 1;
            let mut touching = false;
            for f in &st.foot_force_local {
                touching |= f[1] > 0.0;
                ensure(f[1] >= 0.0 && f[0].abs() <= sim.domain.friction * f[1] + 1e-9, || {
                    format!("force {f:?} outside cone mu {}", sim.domain.friction)
                })?;
            }
            contact_steps += usize::from(touching);
            if sim.check_termination(&st, terrain).is_some() {
                break;
            }
        }
    }

    let sim = Simulator::new(RobotModel::default(), DomainParams::nominal(), SimConfig::default()).unwrap();
    let mut st = airborne(&sim, &mut rng);
    let mut worst_fall = 0.0f64;
    for _ in 0..10 {
        let next = sim.step(&st, &PdCommand::zero(), &terrain, CONTROL_DT).map_err(|e| e.to_string())?;
        worst_fall = worst_fall
            .max((next.qd[1] - st.qd[1] + sim.config.gravity * CONTROL_DT).abs())
            .max((next.qd[0] - st.qd[0]).abs());
        st = next;
    }
    ensure(worst_fall < 1e-12, || format!("free-fall error {worst_fall:e}"))?;
    Ok(format!(
        "momentum {worst_momentum:.1e}/step, cone held over {steps} steps ({contact_steps} in contact), free fall {worst_fall:.1e}"
    ))
}

fn reference_generation(model: &RobotModel) -> Result<(String, Vec<ReferenceTrajectory>), String> {
    let clips = generate_reference_clips(model, &TrajOptConfig::default()).map_err(|e| e.to_string())?;
    ensure(clips.len() == 3, || format!("{} clips", clips.len()))?;
    let mut defects = Vec::new();
    for (traj, reference) in &clips {
        ensure(traj.report.max_dynamics_defect < 1e-3, || format!("defect {}", traj.report.max_dynamics_defect))?;
        ensure(reference.frames.len() == 120, || format!("{} frames", reference.frames.len()))?;
        let n = build_dataset(std::slice::from_ref(reference)).map_err(|e| e.to_string())?.len();
        ensure(n == 119, || format!("{n} transitions from one clip"))?;
        defects.push(traj.report.max_dynamics_defect);
    }
    let (l1, l2) = (model.thigh_length, model.calf_length);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let hip = [rng.gen_range(-1.0..1.0), rng.gen_range(0.2..0.6)];
        let pitch = rng.gen_range(-0.5..0.5);
        let dist = rng.gen_range(0.05..0.999 * (l1 + l2));
        let ang = rng.gen_range(-2.5..2.5f64) - std::f64::consts::FRAC_PI_2;
        let foot = [hip[0] + dist * ang.cos(), hip[1] + dist * ang.sin()];
        let (t, c) = inverse_kinematics(hip, pitch, foot, l1, l2).map_err(|e| e.to_string())?;
        let back = forward_kinematics(hip, pitch, t, c, l1, l2);
        worst = worst.max((back[0] - foot[0]).abs().max((back[1] - foot[1]).abs()));
    }
    ensure(worst < 1e-9, || format!("IK/FK error {worst:e}"))?;
    let refs: Vec<ReferenceTrajectory> = clips.into_iter().map(|(_, r)| r).collect();
    let detail = format!(
        "defects {}, IK/FK {worst:.1e} m, 3x119 transitions",
        defects.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>().join("/")
    );
    Ok((detail, refs))
}

fn separability(refs: &[ReferenceTrajectory]) -> Check {
    let demo = build_dataset(refs).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut all: Vec<AmpTransition> = demo.transitions().to_vec();
    all.shuffle(&mut rng);
    let split = all.len() * 4 / 5;
    let (train, held) = all.split_at(split);
    let train_ds = TransitionDataset::new(train.to_vec()).map_err(|e| e.to_string())?;
    let mut trainer =
        DiscriminatorTrainer::new(DiscriminatorConfig::default(), &train_ds, 22).map_err(|e| e.to_string())?;
    for _ in 0..8 {
        for t in shuffled_impostors(train, &mut rng) {
            trainer.buffer.push(t);
        }
    }
    for _ in 0..400 {
        trainer.update(&train_ds, &mut rng).map_err(|e| e.to_string())?;
    }
    let impostors = shuffled_impostors(held, &mut rng);
    let real = trainer.disc.scores(stack_features(held).view()).map_err(|e| e.to_string())?;
    let fake = trainer.disc.scores(stack_features(&impostors).view()).map_err(|e| e.to_string())?;
    let correct = real.iter().filter(|s| **s > 0.0).count() + fake.iter().filter(|s| **s < 0.0).count();
    let acc = 100.0 * correct as f64 / (real.len() + fake.len()) as f64;
    ensure(acc > 90.0, || format!("held-out accuracy {acc:.1}%"))?;
    Ok(format!("held-out accuracy {acc:.1}% on {} pairs", real.len() + fake.len()))
}

fn smoke_config() -> TrainConfig {
    let mut cfg = TrainConfig { iterations: SMOKE_MAX_ITERATIONS, n_envs: 64, ..TrainConfig::default() };
    cfg.env.commands = CommandRanges::fixed(0.5);
    cfg
}

struct SmokeRun {
    seed: u64,
    rows: Vec<TrainLogRow>,
    reached: Option<usize>,
    trainer: TeacherTrainer,
}

fn rolling(rows: &[TrainLogRow], f: impl Fn(&TrainLogRow) -> f64) -> f64 {
    let tail = &rows[rows.len().saturating_sub(SMOKE_WINDOW)..];
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}

/// Trains until the rolling thresholds hold; with `extend` set, keeps going
/// to `TEACHER_ITERATIONS` so the policy can serve as the frozen teacher.
fn smoke_run(
    model: &RobotModel,
    sim: &SimConfig,
    demo: &TransitionDataset,
    seed: u64,
    deadline: Instant,
    extend: bool,
) -> Result<SmokeRun, String> {
    let mut trainer = TeacherTrainer::new(smoke_config(), model, sim, demo.clone(), seed).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut reached = None;
    while rows.len() < SMOKE_MAX_ITERATIONS && Instant::now() < deadline {
        rows.push(trainer.iterate().map_err(|e| e.to_string())?);
        if rows.len() % 50 == 0 {
            eprintln!(
                "  seed {seed} iteration {}: length {:.0}, style {:.3}",
                rows.len(),
                rolling(&rows, |r| r.episode_length),
                rolling(&rows, |r| r.style)
            );
        }
        if reached.is_none()
            && rows.len() >= SMOKE_WINDOW
            && rolling(&rows, |r| r.episode_length) >= 500.0
            && rolling(&rows, |r| r.style) >= 0.3
        {
            reached = Some(rows.len());
        }
        if reached.is_some() && (!extend || rows.len() >= TEACHER_ITERATIONS) {
            break;
        }
    }
    Ok(SmokeRun { seed, rows, reached, trainer })
}

fn smoke_training(runs: &[SmokeRun], elapsed: f64) -> Check {
    let mut parts = Vec::new();
    let mut ok = elapsed <= SMOKE_BUDGET_S;
    for r in runs {
        let init = r.rows.first().map_or(f64::NAN, |x| x.episode_length);
        let pass = r.reached.is_some() && init < 100.0;
        ok &= pass;
        parts.push(match r.reached {
            Some(it) => format!(
                "seed {}: length {:.0} -> {:.0}, style {:.2} at iteration {it}",
                r.seed,
                init,
                rolling(&r.rows[..it], |x| x.episode_length),
                rolling(&r.rows[..it], |x| x.style)
            ),
            None => format!(
                "seed {}: not reached after {} iterations (length {:.0}, style {:.2})",
                r.seed,
                r.rows.len(),
                rolling(&r.rows, |x| x.episode_length),
                rolling(&r.rows, |x| x.style)
            ),
        });
    }
    if runs.len() < SMOKE_SEEDS.len() {
        ok = false;
        parts.push("not all seeds ran".into());
    }
    let detail = format!("{}; {:.0} s", parts.join("; "), elapsed);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn flat_setup(speed: f64, horizon: usize) -> EpisodeSetup {
    EpisodeSetup {
        terrain: HeightField::flat(1.0 + speed * horizon as f64 * CONTROL_DT * 1.5 + 5.0),
        domain: DomainParams::nominal(),
        command: [speed, 0.0],
    }
}

fn distillation(teacher: &TeacherPolicy, model: &RobotModel, sim: &SimConfig) -> Check {
    let env = smoke_config().env;
    let cfg = DistillConfig { env: env.clone(), ..DistillConfig::default() };
    let epochs = cfg.epochs;
    let mut distiller = Distiller::new(cfg, teacher.clone(), model, sim, 31).map_err(|e| e.to_string())?;
    let mut last = None;
    for _ in 0..epochs {
        last = Some(distiller.iterate().map_err(|e| e.to_string())?);
    }
    let row = last.ok_or("no epochs")?;
    let student: StudentPolicy = distiller.student.clone();
    let horizon = 1000;
    let env_cfg = EnvConfig { max_episode_steps: horizon, init_noise: 0.0, ..env };
    let lengths: Vec<usize> = (0..10)
        .map(|k| {
            let mut ctl = StudentController::new(&student);
            run_episode(model, sim, &env_cfg, flat_setup(0.5, horizon), &mut ctl, None, None, 100 + k)
                .map(|log| log.rows.len())
        })
        .collect::<amp_biped::Result<_>>()
        .map_err(|e| e.to_string())?;
    let mean_len = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
    let detail = format!(
        "action MSE {:.4} rad^2, latent MSE {:.4}, student episode length {:.0}",
        row.action_mse, row.latent_mse, mean_len
    );
    if row.action_mse <= 0.01 && row.latent_mse <= 0.05 && mean_len >= 400.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn push_test(teacher: &TeacherPolicy, model: &RobotModel, sim: &SimConfig) -> Check {
    let policy = Policy::Teacher(teacher.clone());
    let trials = run_push_test(&policy, model, sim, &EvalConfig::default(), 41).map_err(|e| e.to_string())?;
    let n = trials.iter().filter(|t| t.recovered).count();
    let detail = format!("recovered {n}/{}", trials.len());
    if n >= 7 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn log_bytes(rows: &[TrainLogRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut w = TrainLogWriter::new(&mut buf).unwrap();
    for r in rows {
        w.write(r).unwrap();
    }
    drop(w);
    buf
}

fn determinism(first: &SmokeRun, model: &RobotModel, sim: &SimConfig, demo: &TransitionDataset) -> Check {
    let k = DETERMINISM_ITERATIONS.min(first.rows.len());
    let mut again = TeacherTrainer::new(smoke_config(), model, sim, demo.clone(), first.seed).map_err(|e| e.to_string())?;
    let rerun: Vec<TrainLogRow> = (0..k).map(|_| again.iterate()).collect::<amp_biped::Result<_>>().map_err(|e| e.to_string())?;
    ensure(log_bytes(&first.rows[..k]) == log_bytes(&rerun), || format!("training log differs within {k} iterations"))?;

    let policy = Policy::Teacher(first.trainer.policy.clone());
    let cfg = EvalConfig { episodes: 2, horizon_steps: 200, ..EvalConfig::default() };
    let sweep = || -> Result<Vec<u8>, String> {
        let rows = eval_sweep(&policy, model, sim, &cfg, 51).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let (a, b) = (sweep()?, sweep()?);
    ensure(a == b, || "eval sweep differs".into())?;
    Ok(format!("{k}-iteration training log and {}-byte eval sweep identical", a.len()))
}

fn report(id: usize, name: &str, started: Instant, result: &Check) -> bool {
    let secs = started.elapsed().as_secs_f64();
    let (tag, detail) = match result {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("[{tag}] {id} {name}: {detail} ({secs:.1} s)");
    result.is_ok()
}

fn main() {
    let model = RobotModel::default();
    let sim = SimConfig::default();
    let mut all_ok = true;

    let t = Instant::now();
    all_ok &= report(1, "formula suite", t, &guarded(formulas));
    let t = Instant::now();
    all_ok &= report(2, "gradient integrity", t, &guarded(gradients));
    let t = Instant::now();
    all_ok &= report(3, "physics invariants", t, &guarded(physics));

    let t = Instant::now();
    let refgen = catch_unwind(AssertUnwindSafe(|| reference_generation(&model))).unwrap_or_else(|_| Err("panic".into()));
    let refs = match refgen {
        Ok((detail, refs)) => {
            all_ok &= report(4, "reference generation", t, &Ok(detail));
            Some(refs)
        }
        Err(e) => {
            all_ok &= report(4, "reference generation", t, &Err(e));
            None
        }
    };

    let t = Instant::now();
    let sep = match &refs {
        Some(r) => guarded(|| separability(r)),
        None => Err("no reference clips".into()),
    };
    all_ok &= report(5, "discriminator separability", t, &sep);

    let t = Instant::now();
    let mut runs = Vec::new();
    let mut demo = None;
    if let Some(r) = &refs {
        let deadline = t + std::time::Duration::from_secs_f64(SMOKE_BUDGET_S);
        match build_dataset(r) {
            Ok(d) => {
                for seed in SMOKE_SEEDS {
                    match catch_unwind(AssertUnwindSafe(|| smoke_run(&model, &sim, &d, seed, deadline, seed == 0))) {
                        Ok(Ok(run)) => runs.push(run),
                        Ok(Err(e)) => eprintln!("  seed {seed} failed: {e}"),
                        Err(_) => eprintln!("  seed {seed} panicked"),
                    }
                }
                demo = Some(d);
            }
            Err(e) => eprintln!("  demo dataset: {e}"),
        }
    }
    let smoke = smoke_training(&runs, t.elapsed().as_secs_f64());
    all_ok &= report(6, "smoke training", t, &smoke);

    let teacher = runs.iter().find(|r| r.seed == 0).map(|r| r.trainer.policy.clone());
    let t = Instant::now();
    let distill = match &teacher {
        Some(p) => guarded(|| distillation(p, &model, &sim)),
        None => Err("no trained teacher".into()),
    };
    all_ok &= report(7, "distillation", t, &distill);

    let t = Instant::now();
    let push = match &teacher {
        Some(p) => guarded(|| push_test(p, &model, &sim)),
        None => Err("no trained teacher".into()),
    };
    all_ok &= report(8, "push recovery", t, &push);

    let t = Instant::now();
    let det = match (runs.iter().find(|r| r.seed == 0), &demo) {
        (Some(run), Some(d)) => guarded(|| determinism(run, &model, &sim, d)),
        _ => Err("no training run to compare".into()),
    };
    all_ok &= report(9, "determinism", t, &det);

    if !all_ok {
        std::process::exit(1);
    }
}
