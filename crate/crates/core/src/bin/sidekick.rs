use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use viewgrid_sidekick::agent::{rollout, save_episode, ActionSource, Agent};
use viewgrid_sidekick::env::{load_dataset, write_previews, Dataset, GridGeometry, Pose, Split, SynthSpec};
use viewgrid_sidekick::eval::{
    episode_heatmaps, render_episode, save_png, start_errors, EvalReport, EvalSettings, MethodResult, PerturbConfig,
};
use viewgrid_sidekick::pipeline::{
    gen_data_stage, pretrain_stage, run_study, sidekick_stage, train_stage, StudySpec,
};
use viewgrid_sidekick::sidekick::{load_cache, SidekickCache, SidekickConfig};
use viewgrid_sidekick::train::{method_eval_policy, Method, TrainConfig, TrainInputs};
use viewgrid_sidekick::{Error, Result};

/// Sidekick policy learning for active exploration on viewgrids.
///
/// Relative output paths are resolved under $SIDEKICK_OUT_ROOT when set.
/// Exit codes: 0 success, 2 usage, 3 missing stage dependency, 4 data error.
#[derive(Parser)]
#[command(name = "sidekick", version)]
struct Cli {
    /// Worker threads for evaluation and sidekick precomputation
    /// [env: SIDEKICK_JOBS]. Results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic viewgrid dataset.
    GenData {
        /// Geometry as NxMxCxHxW (elevations x azimuths x channels x height x width).
        #[arg(long, default_value = "4x8x1x16x16")]
        geom: GridGeometry,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "train")]
        split: Split,
        /// Also write this many preview montages.
        #[arg(long, default_value_t = 0)]
        preview: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the one-view completion model (T = 1).
    Pretrain {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precompute sidekick scores and coverage with a pretrained model.
    Sidekick {
        #[arg(long)]
        data: PathBuf,
        /// Pretrain stage directory or checkpoint directory.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = SidekickProfile::Desk)]
        profile: SidekickProfile,
        /// Number of rewarded views (overrides the profile).
        #[arg(long)]
        k: Option<usize>,
        /// Suppression neighborhood (overrides the profile).
        #[arg(long)]
        radius: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one method starting from the pretrained model.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        pretrained: PathBuf,
        /// Sidekick cache of the training split (ours-* and demo methods).
        #[arg(long)]
        sidekick: Option<PathBuf>,
        /// Sidekick cache of the validation split (demo-actions).
        #[arg(long)]
        val_sidekick: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate trained models and write the avg/adv report.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Models as METHOD=DIR, repeatable. Include one-view for the
        /// improvement columns.
        #[arg(long = "model", required = true, value_parser = parse_model)]
        models: Vec<(Method, PathBuf)>,
        /// `adv` always enumerates all MN starts per sample.
        #[arg(long, value_enum, default_value_t = EvalMode::Avg)]
        mode: EvalMode,
        /// Start poses per sample for `avg` (default all).
        #[arg(long)]
        starts: Option<usize>,
        #[arg(long, default_value_t = 4)]
        budget: usize,
        /// Sidekick cache of the evaluated split (demo-actions).
        #[arg(long)]
        sidekick: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render heatmap montages for one episode.
    Visualize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        sample: usize,
        /// Start pose as ELEV,AZIM.
        #[arg(long, default_value = "0,0", value_parser = parse_pose)]
        start: Pose,
        #[arg(long, default_value_t = 4)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full study: data, pretraining, sidekicks, training and
    /// evaluation for several methods and seeds. Finished stages are reused.
    Experiment {
        /// Study spec as JSON (default: the desk-scale ordering study).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SidekickProfile {
    Desk,
    ModelnetHard,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum EvalMode {
    Avg,
    Adv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Halved widths for single-core runs.
    Desk,
    /// Full-width layers.
    Full,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON training config; missing fields take profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
                serde_json::from_str(&text).map_err(|e| Error::Json {
                    context: p.display().to_string(),
                    source: e,
                })?
            }
            None => match self.profile {
                Profile::Desk => TrainConfig::desk(),
                Profile::Full => TrainConfig::default(),
            },
        };
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
            cfg.pretrain_epochs = e;
        }
        cfg.budget = self.budget.unwrap_or(cfg.budget);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.lr = self.lr.unwrap_or(cfg.lr);
        cfg.batch_size = self.batch_size.unwrap_or(cfg.batch_size);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_model(s: &str) -> std::result::Result<(Method, PathBuf), String> {
    let (m, p) = s.split_once('=').ok_or("expected METHOD=DIR")?;
    Ok((m.parse::<Method>().map_err(|e| e.to_string())?, PathBuf::from(p)))
}

fn parse_pose(s: &str) -> std::result::Result<Pose, String> {
    let (e, a) = s.split_once(',').ok_or("expected ELEV,AZIM")?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok(Pose::new(num(e)?, num(a)?))
}

fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os("SIDEKICK_OUT_ROOT") {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

/// Accepts either a stage directory (with `model/`) or a checkpoint.
fn load_model(p: &Path) -> Result<Agent<f32>> {
    let nested = p.join(viewgrid_sidekick::pipeline::MODEL_DIR);
    Agent::load(if nested.is_dir() { &nested } else { p })
}

fn load_opt_cache(p: &Option<PathBuf>) -> Result<Option<SidekickCache>> {
    p.as_deref().map(load_cache).transpose()
}

fn load_opt_data(p: &Option<PathBuf>) -> Result<Option<Dataset>> {
    p.as_deref().map(load_dataset).transpose()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn run(cli: Cli) -> Result<()> {
    let jobs = cli
        .jobs
        .or_else(|| std::env::var("SIDEKICK_JOBS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::GenData {
            geom,
            n,
            seed,
            split,
            preview,
            out,
        } => {
            let out = out_path(&out);
            let ds = gen_data_stage(&SynthSpec::new(geom, n, seed).with_split(split), &out)?.value;
            if preview > 0 {
                write_previews(&ds, &out, preview)?;
            }
            println!("{} {} samples, geometry {geom} ({} views of {} values)", split, ds.len(), geom.n_views(), geom.view_len());
        }
        Command::Pretrain { train, val, cfg, out } => {
            let cfg = cfg.resolve()?;
            let (train, val) = (load_dataset(&train)?, load_opt_data(&val)?);
            let run = pretrain_stage(&cfg, &train, val.as_ref(), &out_path(&out))?;
            report_curve("pretrain", &run.value.val_curve(), run.reused);
        }
        Command::Sidekick {
            data,
            model,
            profile,
            k,
            radius,
            out,
        } => {
            let mut cfg = match profile {
                SidekickProfile::Desk => SidekickConfig::desk(),
                SidekickProfile::ModelnetHard => SidekickConfig::modelnet_hard(),
            };
            cfg.k = k.unwrap_or(cfg.k);
            cfg.nms_radius = radius.unwrap_or(cfg.nms_radius);
            let ds = load_dataset(&data)?;
            let staged = sidekick_stage(&ds, &load_model(&model)?, &cfg, &out_path(&out))?;
            let relaxed = (0..staged.value.len())
                .filter(|&i| staged.value.scores(i).is_ok_and(|s| s.relaxed))
                .count();
            println!(
                "sidekick cache for {} samples{} ({relaxed} relaxed selections)",
                staged.value.len(),
                if staged.reused { " (reused)" } else { "" }
            );
        }
        Command::Train {
            train,
            val,
            pretrained,
            sidekick,
            val_sidekick,
            cfg,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let (train, val) = (load_dataset(&train)?, load_opt_data(&val)?);
            let pre = load_model(&pretrained).map_err(|e| match e {
                Error::NotFound(p) => Error::MissingDependency {
                    stage: "pretrain".into(),
                    hint: format!("no checkpoint at {}; run `sidekick pretrain` first", p.display()),
                },
                e => e,
            })?;
            let (cache, val_cache) = (load_opt_cache(&sidekick)?, load_opt_cache(&val_sidekick)?);
            let inputs = TrainInputs {
                val: val.as_ref(),
                pretrained: Some(&pre),
                sidekick: cache.as_ref(),
                val_sidekick: val_cache.as_ref(),
                ..TrainInputs::new(&train)
            };
            let run = train_stage(&cfg, inputs, &out_path(&out))?;
            report_curve(cfg.method.name(), &run.value.val_curve(), run.reused);
        }
        Command::Eval {
            data,
            models,
            mode,
            starts,
            budget,
            sidekick,
            seed,
            out,
        } => {
            if mode == EvalMode::Adv && starts.is_some() {
                return Err(Error::InvalidArgument("--mode adv evaluates every start; drop --starts".into()));
            }
            let ds = load_dataset(&data)?;
            let cache = load_opt_cache(&sidekick)?;
            let mut rows = Vec::new();
            for (method, dir) in models {
                let agent = load_model(&dir)?;
                let settings = EvalSettings {
                    starts,
                    policy: method_eval_policy(method, seed, cache.as_ref())?,
                    ..EvalSettings::new(if method == Method::OneView { 1 } else { budget })
                };
                let mut r = MethodResult::from_errors(method.name(), start_errors(&agent, &ds, &settings)?, vec![seed]);
                r.full_observability = method.full_observability_at_test();
                rows.push(r);
            }
            let report = EvalReport::new(*ds.geometry(), ds.split(), budget, rows)?;
            let out = out_path(&out);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Json {
                context: "report".into(),
                source: e,
            })?;
            write_text(&out.join("report.json"), &json)?;
            let table = report.to_table();
            write_text(&out.join("report.txt"), &table)?;
            print!("{table}");
        }
        Command::Visualize {
            model,
            data,
            sample,
            start,
            budget,
            seed,
            out,
        } => {
            let agent = load_model(&model)?;
            let ds = load_dataset(&data)?;
            let grid = ds
                .samples()
                .get(sample)
                .ok_or_else(|| Error::InvalidArgument(format!("sample {sample} of {}", ds.len())))?;
            let mut rng = viewgrid_sidekick::rng::stream(seed, "visualize");
            let ep = rollout(&agent, grid, start, budget, &ActionSource::argmax(), &mut rng)?;
            let maps = episode_heatmaps(&agent, &ep, &PerturbConfig { seed, ..PerturbConfig::default() })?;
            let out = out_path(&out);
            save_episode(&ep, &out.join("episode"))?;
            for (t, (p, _)) in maps.iter().enumerate() {
                println!(
                    "step {t}: action {} |da|/|a| {:.4} objective {:.3e} ({} iterations)",
                    ep.actions[t], p.ratio, p.objective, p.iterations
                );
            }
            let heat: Vec<_> = maps.into_iter().map(|(_, h)| Some(h)).collect();
            let path = out.join("heatmaps.png");
            save_png(&render_episode(&ep, Some(grid), &heat)?, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Experiment {
            spec,
            methods,
            seeds,
            epochs,
            out,
        } => {
            let mut study = match spec {
                Some(p) => {
                    let text =
                        std::fs::read_to_string(&p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
                    serde_json::from_str(&text).map_err(|e| Error::Json {
                        context: p.display().to_string(),
                        source: e,
                    })?
                }
                None => StudySpec::desk(),
            };
            if let Some(m) = methods {
                study.methods = m;
            }
            if let Some(s) = seeds {
                study.seeds = s;
            }
            if let Some(e) = epochs {
                study.config.epochs = e;
                study.config.pretrain_epochs = e;
            }
            let outcome = run_study(&study, &out_path(&out), |line| eprintln!("{line}"))?;
            print!("{}", outcome.report.to_table());
        }
    }
    Ok(())
}

fn report_curve(name: &str, curve: &[(usize, f64)], reused: bool) {
    match curve.last() {
        Some((e, v)) => println!("{name}: val avg {v:.2} after epoch {}{}", e + 1, if reused { " (reused)" } else { "" }),
        None => println!("{name}: done{}", if reused { " (reused)" } else { "" }),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
