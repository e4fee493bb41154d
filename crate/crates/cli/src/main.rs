use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amp_biped::amp::Discriminator;
use amp_biped::distill::{DistillLogWriter, Distiller};
use amp_biped::harness::{
    emit_plots, eval_sweep, read_train_log, run_episode, run_push_test, write_push_csv, write_sweep_csv, Policy,
    RunConfig,
};
use amp_biped::nn::Checkpoint;
use amp_biped::refgen::{build_dataset, generate_reference_clips, load_reference_file, save_reference_file};
use amp_biped::rl::{EnvConfig, EpisodeSetup, TeacherPolicy, TeacherTrainer, TrainLogWriter};
use amp_biped::sim::{randomize_domain, CONTROL_DT};
use amp_biped::terrain::HeightField;
use amp_biped::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "amp-biped", version, about = "Planar biped locomotion: reference generation, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Input checkpoint (policy for evaluation, teacher for distillation).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the reference gaits and write the reference dataset.
    Refgen(Common),
    /// Train the privileged teacher policy with the style reward.
    TrainTeacher(Common),
    /// Distill a teacher checkpoint into the history-based student.
    DistillStudent(Common),
    /// Tracking accuracy and success rate across terrains and speeds.
    Eval(Common),
    /// Flat-ground push recovery trials.
    PushTest(Common),
    /// Plot one flat-ground episode and any training log next to the checkpoint.
    Plot(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Refgen(c) => refgen(&c),
        Command::TrainTeacher(c) => train_teacher(&c),
        Command::DistillStudent(c) => distill_student(&c),
        Command::Eval(c) => eval(&c),
        Command::PushTest(c) => push_test(&c),
        Command::Plot(c) => plot(&c),
    }
}

fn setup(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.snapshot(&c.out)?;
    Ok(cfg)
}

fn checkpoint(c: &Common) -> Result<Checkpoint> {
    let p = c.checkpoint.as_ref().ok_or_else(|| Error::Config("--checkpoint is required".into()))?;
    Checkpoint::load(p)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn refgen(c: &Common) -> Result<()> {
    let cfg = setup(c)?;
    let clips = generate_reference_clips(&cfg.model, &cfg.refgen)?;
    for (traj, r) in &clips {
        let rep = traj.report;
        println!(
            "{:<12} frames {:4}  defect {:.2e}  violation {:.2e}  iterations {}",
            r.clip_id,
            r.frames.len(),
            rep.max_dynamics_defect,
            rep.max_constraint_violation,
            rep.iterations
        );
    }
    let refs: Vec<_> = clips.into_iter().map(|(_, r)| r).collect();
    let path = c.out.join("reference.csv");
    save_reference_file(&refs, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn train_teacher(c: &Common) -> Result<()> {
    let cfg = setup(c)?;
    let ref_path = c.out.join("reference.csv");
    let refs = if ref_path.exists() {
        load_reference_file(&ref_path)?
    } else {
        let refs: Vec<_> = generate_reference_clips(&cfg.model, &cfg.refgen)?.into_iter().map(|(_, r)| r).collect();
        save_reference_file(&refs, &ref_path)?;
        refs
    };
    let demo = build_dataset(&refs)?;
    let mut trainer = TeacherTrainer::new(cfg.train.clone(), &cfg.model, &cfg.sim, demo, cfg.seed)?;
    let mut log = TrainLogWriter::new(create(&c.out.join("train_log.csv"))?)?;
    let ckpt_path = c.out.join("teacher.ckpt");
    for _ in 0..cfg.train.iterations {
        let row = trainer.iterate()?;
        log.write(&row)?;
        if row.iteration % 10 == 0 {
            println!(
                "iter {:5}  task {:.3}  style {:.3}  reg {:.3}  episode length {:.1}",
                row.iteration, row.task, row.style, row.regularization, row.episode_length
            );
        }
        if (row.iteration + 1) % 100 == 0 {
            trainer.checkpoint().save(&ckpt_path)?;
        }
    }
    trainer.checkpoint().save(&ckpt_path)?;
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn distill_student(c: &Common) -> Result<()> {
    let cfg = setup(c)?;
    let teacher = TeacherPolicy::from_checkpoint(&checkpoint(c)?)?;
    let mut d = Distiller::new(cfg.distill.clone(), teacher, &cfg.model, &cfg.sim, cfg.seed)?;
    let mut log = DistillLogWriter::new(create(&c.out.join("distill_log.csv"))?)?;
    for _ in 0..cfg.distill.epochs {
        let row = d.iterate()?;
        log.write(&row)?;
        println!(
            "epoch {:4}  action mse {:.5}  latent mse {:.5}  beta {:.2}",
            row.epoch, row.action_mse, row.latent_mse, row.beta
        );
    }
    let path = c.out.join("student.ckpt");
    d.checkpoint().save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn eval(c: &Common) -> Result<()> {
    let cfg = setup(c)?;
    let policy = Policy::from_checkpoint(&checkpoint(c)?)?;
    let rows = eval_sweep(&policy, &cfg.model, &cfg.sim, &cfg.eval, cfg.seed)?;
    for r in &rows {
        println!("{:<16} {:.1} m/s  acc {:6.2}%  succ {:6.2}%", r.terrain.name(), r.speed, r.accuracy, r.success);
    }
    let path = c.out.join("eval_sweep.csv");
    write_sweep_csv(&rows, create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn push_test(c: &Common) -> Result<()> {
    let cfg = setup(c)?;
    let policy = Policy::from_checkpoint(&checkpoint(c)?)?;
    let trials = run_push_test(&policy, &cfg.model, &cfg.sim, &cfg.eval, cfg.seed)?;
    let path = c.out.join("push_test.csv");
    write_push_csv(&trials, create(&path)?)?;
    let n = trials.iter().filter(|t| t.recovered).count();
    println!("recovered {n}/{} pushes; wrote {}", trials.len(), path.display());
    Ok(())
}

fn plot(c: &Common) -> Result<()> {
    let cfg = setup(c)?;
    let ckpt = checkpoint(c)?;
    let policy = Policy::from_checkpoint(&ckpt)?;
    let disc = Discriminator::from_checkpoint(&ckpt).ok();
    let speed = cfg.eval.speeds.first().copied().unwrap_or(0.5);
    let env_cfg = EnvConfig { max_episode_steps: cfg.eval.horizon_steps, init_noise: 0.0, ..cfg.train.env.clone() };
    let length = env_cfg.spawn_x + speed.abs() * cfg.eval.horizon_steps as f64 * CONTROL_DT * 1.5 + 5.0;
    let setup = EpisodeSetup {
        terrain: HeightField::flat(length),
        domain: randomize_domain(cfg.seed, &cfg.eval.domain)?,
        command: [speed, 0.0],
    };
    let mut ctrl = policy.controller();
    let log = run_episode(&cfg.model, &cfg.sim, &env_cfg, setup, ctrl.as_mut(), disc.as_ref(), None, cfg.seed)?;
    let train_log = c
        .checkpoint
        .as_ref()
        .and_then(|p| p.parent())
        .map(|d| d.join("train_log.csv"))
        .filter(|p| p.exists());
    let rows = match train_log {
        Some(p) => Some(read_train_log(File::open(p)?)?),
        None => None,
    };
    let written = emit_plots(&log, rows.as_deref(), &c.out)?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
