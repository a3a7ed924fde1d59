//! Single-binary front end over the pipeline stages.
//!
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

mod args;

use std::path::PathBuf;

use args::Args;
use lamlab_core::lam::{TrainConfig, TrainMode};
use lamlab_core::mi::EstimatorKind;
use lamlab_core::runner::{
    run_ablate, run_eval_mi, run_gen_data, run_probe, run_report, run_train_lam, run_vp_eval,
    AblateConfig, EvalMiConfig, GenDataConfig, ProbeRunConfig, ProbeSolver, TrainLamConfig,
    VpEvalRunConfig,
};
use lamlab_core::worldgen::dataset::DatasetConfig;
use lamlab_core::{Error, Result};

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Io(_) | Error::Shape { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(argv) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

fn dispatch(argv: Vec<String>) -> Result<()> {
    if argv.first().map(|s| s.as_str()) == Some("--help") || argv.is_empty() {
        print_help();
        return Ok(());
    }
    let args = Args::parse(argv)?;
    match args.subcommand.as_str() {
        "gen-data" => cmd_gen_data(&args)?,
        "train-lam" => cmd_train_lam(&args)?,
        "eval-mi" => cmd_eval_mi(&args)?,
        "probe" => cmd_probe(&args)?,
        "vp-eval" => cmd_vp_eval(&args)?,
        "ablate" => cmd_ablate(&args)?,
        "report" => cmd_report(&args)?,
        other => {
            return Err(Error::config(format!(
                "unknown subcommand `{other}` (gen-data | train-lam | eval-mi | probe | vp-eval | ablate | report)"
            )))
        }
    }
    args.finish()
}

fn print_help() {
    println!(
        "lamlab — synthetic multi-view latent action laboratory

USAGE: lamlab <subcommand> [--flag value]... [--config FILE]

SUBCOMMANDS
  gen-data   --out DIR [--name ds] --views N --trajectories T --len L
             [--stride H] [--mixture E:P] [--seed S] [--d-obs D]
             [--camera-jitter BOOL] [--render-seed S]
             [--cam-motion-sigma-theta X] [--cam-motion-sigma-pos X]
  train-lam  --data DIR/NAME --out DIR [--name m] [--mode MODE]
             [--steps N] [--batch N] [--lr X] [--weight-decay X]
             [--grad-clip X] [--seed S] [--init-seed S] [--view-index V]
             [--beta X] [--codebook-size K] [--code-len L] [--code-dim D]
  eval-mi    --model DIR/NAME --data DIR/NAME --out DIR [--name eval]
             [--estimators ksg,mine,ba] [--seeds 0,1,..] [--view V]
             [--max-samples N] [--project-dim D] [--permutation BOOL]
  probe      --model DIR/NAME --data DIR/NAME --out DIR [--name probe]
             [--keep-d D] [--seeds 0,1,..] [--solver closed|gd] [--view V]
             [--max-samples N]
  vp-eval    --model DIR/NAME --data DIR/NAME --out DIR [--name vp]
             [--sigmas-theta 0.075,0.15] [--sigma-pos X] [--per-step N]
             [--seed S] [--max-records N] [--view V] [--project-dim D]
  ablate     --out DIR [--seeds 0,1,2,3] [--steps N]
             [--train-trajectories N] [--eval-trajectories N] [--lr X]
  report     --in DIR [--out FILE.md]

Modes: single_view | multi_view_self_only | mvp.
Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure."
    );
}

fn cmd_gen_data(args: &Args) -> Result<()> {
    let defaults = DatasetConfig::default();
    let dataset = DatasetConfig {
        num_views: args.parse_or("views", defaults.num_views)?,
        trajectories: args.parse_or("trajectories", defaults.trajectories)?,
        traj_len: args.parse_or("len", defaults.traj_len)?,
        stride: args.parse_or("stride", defaults.stride)?,
        mixture_expert: args.mixture_or("mixture", defaults.mixture_expert)?,
        seed: args.parse_or("seed", defaults.seed)?,
        d_obs: args.parse_or("d_obs", defaults.d_obs)?,
        render_seed: args.parse_or("render_seed", defaults.render_seed)?,
        camera_jitter: args.parse_or("camera_jitter", defaults.camera_jitter)?,
        jitter_sigma_theta: args.parse_or("jitter_sigma_theta", defaults.jitter_sigma_theta)?,
        jitter_sigma_pos: args.parse_or("jitter_sigma_pos", defaults.jitter_sigma_pos)?,
        cam_motion_sigma_theta: args
            .parse_or("cam_motion_sigma_theta", defaults.cam_motion_sigma_theta)?,
        cam_motion_sigma_pos: args.parse_or("cam_motion_sigma_pos", defaults.cam_motion_sigma_pos)?,
        world: defaults.world,
    };
    let cfg = GenDataConfig {
        out_dir: args.req_path("out")?,
        name: args.get("name").unwrap_or("ds").to_string(),
        dataset,
    };
    let out = run_gen_data(&cfg)?;
    println!(
        "wrote {} records to {}",
        out.record_count,
        out.manifest_path.display()
    );
    Ok(())
}

fn cmd_train_lam(args: &Args) -> Result<()> {
    let (data_dir, data_name) = args.dataset_ref("data")?;
    let out_dir = args.req_path("out")?;
    let name = args.get("name").unwrap_or("model").to_string();
    let mut cfg = TrainLamConfig::desk_default(data_dir, data_name, out_dir, name);
    cfg.codebook_size = args.parse_or("codebook_size", cfg.codebook_size)?;
    cfg.code_len = args.parse_or("code_len", cfg.code_len)?;
    cfg.code_dim = args.parse_or("code_dim", cfg.code_dim)?;
    cfg.beta = args.parse_or("beta", cfg.beta)?;
    cfg.init_seed = args.parse_or("init_seed", cfg.init_seed)?;
    let defaults = TrainConfig::default();
    cfg.train = TrainConfig {
        mode: TrainMode::parse(args.get("mode").unwrap_or("mvp"))?,
        lr: args.parse_or("lr", defaults.lr)?,
        weight_decay: args.parse_or("weight_decay", defaults.weight_decay)?,
        grad_clip: args.parse_or("grad_clip", defaults.grad_clip)?,
        batch_size: args.parse_or("batch", defaults.batch_size)?,
        steps: args.parse_or("steps", defaults.steps)?,
        seed: args.parse_or("seed", defaults.seed)?,
        view_index: args.parse_or("view_index", defaults.view_index)?,
        ..defaults
    };
    let out = run_train_lam(&cfg)?;
    println!(
        "checkpoint at {}; loss curve at {}",
        out.checkpoint_manifest.display(),
        out.loss_csv.display()
    );
    for w in &out.collapse_warnings {
        println!("collapse-guard: {w}");
    }
    Ok(())
}

fn parse_estimators(raw: Option<&str>) -> Result<Vec<EstimatorKind>> {
    raw.unwrap_or("ksg,mine,ba")
        .split(',')
        .map(|tok| EstimatorKind::parse(tok.trim()))
        .collect()
}

fn cmd_eval_mi(args: &Args) -> Result<()> {
    let (model_dir, model_name) = args.dataset_ref("model")?;
    let (data_dir, data_name) = args.dataset_ref("data")?;
    let cfg = EvalMiConfig {
        model_dir,
        model_name,
        data_dir,
        data_name,
        view: args.parse_or("view", 0)?,
        estimators: parse_estimators(args.get("estimators"))?,
        seeds: args.seeds_or("seeds", &[0, 1, 2, 3])?,
        max_samples: args.parse_or("max_samples", 4000)?,
        project_dim: Some(args.parse_or("project_dim", 32)?),
        with_permutation: args.parse_or("permutation", true)?,
        out_dir: args.req_path("out")?,
        name: args.get("name").unwrap_or("eval").to_string(),
    };
    let out = run_eval_mi(&cfg)?;
    println!(
        "wrote {} rows to {} (summary {})",
        out.rows.len(),
        out.csv_path.display(),
        out.md_path.display()
    );
    Ok(())
}

fn cmd_probe(args: &Args) -> Result<()> {
    let (model_dir, model_name) = args.dataset_ref("model")?;
    let (data_dir, data_name) = args.dataset_ref("data")?;
    let cfg = ProbeRunConfig {
        model_dir,
        model_name,
        data_dir,
        data_name,
        view: args.parse_or("view", 0)?,
        keep_d: args.parse_or("keep_d", 32)?,
        seeds: args.seeds_or("seeds", &[0, 1, 2, 3])?,
        solver: ProbeSolver::parse(args.get("solver").unwrap_or("closed"))?,
        max_samples: args.parse_or("max_samples", 4000)?,
        out_dir: args.req_path("out")?,
        name: args.get("name").unwrap_or("probe").to_string(),
    };
    let out = run_probe(&cfg)?;
    println!("wrote {} rows to {}", out.rows.len(), out.csv_path.display());
    Ok(())
}

fn cmd_vp_eval(args: &Args) -> Result<()> {
    let (model_dir, model_name) = args.dataset_ref("model")?;
    let (data_dir, data_name) = args.dataset_ref("data")?;
    let max_records = match args.get("max_records") {
        None => Some(740),
        Some(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| Error::config(format!("bad --max-records `{raw}`")))?;
            if n == 0 {
                None
            } else {
                Some(n)
            }
        }
    };
    let cfg = VpEvalRunConfig {
        model_dir,
        model_name,
        data_dir,
        data_name,
        view: args.parse_or("view", 0)?,
        sigmas_theta: args.floats_or("sigmas_theta", &[0.075])?,
        sigma_pos: args.parse_or("sigma_pos", 0.03)?,
        per_step: args.parse_or("per_step", 5)?,
        seed: args.parse_or("seed", 0)?,
        max_records,
        project_dim: Some(args.parse_or("project_dim", 32)?),
        out_dir: args.req_path("out")?,
        name: args.get("name").unwrap_or("vp").to_string(),
    };
    let out = run_vp_eval(&cfg)?;
    for r in &out.reports {
        println!(
            "sigma_theta {:.3}: MSE {:.4} MSE~ {:.4} KSG {:.3} bits probe NMSE {:.4}",
            r.sigma_theta, r.mse_mean, r.mse_tilde_mean, r.ksg_bits, r.probe_nmse
        );
    }
    println!("wrote {}", out.csv_path.display());
    Ok(())
}

fn cmd_ablate(args: &Args) -> Result<()> {
    let defaults = AblateConfig::default();
    let cfg = AblateConfig {
        out_dir: args.req_path("out")?,
        seeds: args.seeds_or("seeds", &defaults.seeds)?,
        train_trajectories: args.parse_or("train_trajectories", defaults.train_trajectories)?,
        eval_trajectories: args.parse_or("eval_trajectories", defaults.eval_trajectories)?,
        traj_len: args.parse_or("traj_len", defaults.traj_len)?,
        steps: args.parse_or("steps", defaults.steps)?,
        batch_size: args.parse_or("batch", defaults.batch_size)?,
        lr: args.parse_or("lr", defaults.lr)?,
        d_obs: args.parse_or("d_obs", defaults.d_obs)?,
        eval_seed: args.parse_or("eval_seed", defaults.eval_seed)?,
        max_samples: args.parse_or("max_samples", defaults.max_samples)?,
    };
    let out = run_ablate(&cfg)?;
    println!("wrote {} cells to {}", out.cells.len(), out.csv_path.display());
    Ok(())
}

fn cmd_report(args: &Args) -> Result<()> {
    let in_dir = args.req_path("in")?;
    let out_md: PathBuf = args.path_or("out", "report.md");
    let md = run_report(&in_dir, &out_md)?;
    println!("{md}");
    println!("wrote {}", out_md.display());
    Ok(())
}
