use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use voxfuse_core::fusion::{FusionStrategy, WeatherCondition};
use voxfuse_core::gradcheck::{run_suite, FD_STEP};
use voxfuse_core::pipeline::{
    infer_sequence, make_encoder, make_scene, rows_csv, run_ablation, run_adverse, run_fusion_comparison, scene_seed, train,
    ExperimentConfig, Split,
};
use voxfuse_core::Model64;

#[derive(Parser)]
#[command(name = "voxfuse", version, about = "Train and evaluate weather-aware voxel occupancy fusion on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write report.json, metrics.csv, losses.csv and model.json.
    Train(Common),
    /// Sweep all eight module on/off combinations.
    Ablate(Common),
    /// Compare addition, concat, conv3d and weather-gated fusion.
    FusionBench(Common),
    /// Weather-gated against static fusion under clear, rain and night.
    Adverse(Common),
    /// Run the recursive instance prompt over a static frame sequence.
    InferSeq {
        #[command(flatten)]
        common: Common,
        /// Trained model.json; trains one first when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        frames: usize,
    },
    /// Central-difference gradient checks of every differentiable op.
    GradCheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    no_instvlm: bool,
    #[arg(long)]
    no_weathfusion: bool,
    #[arg(long)]
    no_daga: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// addition, concat, conv3d or weathfusion.
    #[arg(long)]
    fusion: Option<FusionStrategy>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.toggles.instvlm &= !self.no_instvlm;
        cfg.toggles.weathfusion &= !self.no_weathfusion;
        cfg.toggles.daga &= !self.no_daga;
        if let Some(lr) = self.lr {
            cfg.train.adam.lr = lr;
        }
        if let Some(s) = self.steps {
            cfg.train.steps = s;
        }
        if let Some(f) = self.fusion {
            cfg.fusion = f;
        }
        cfg.out_dir = Some(self.out.clone());
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents).with_context(|| format!("writing {name}"))
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(c) => {
            let cfg = c.config()?;
            let outcome = train::<f64>(&cfg)?;
            let r = &outcome.report;
            r.write(&c.out)?;
            write(&c.out, "model.json", &serde_json::to_string(&outcome.model)?)?;
            println!("loss {:.4} -> {:.4}", r.initial_loss.total, r.final_loss.total);
            println!("iou {}  miou {}", fmt(r.metrics.iou), fmt(r.metrics.miou));
            for w in &r.fusion_weights {
                println!("{:<10} w_cam {:.4}  w_pts {:.4}", w.condition.as_str(), w.w_cam, w.w_pts);
            }
            println!("wrote {}", c.out.display());
        }
        Command::Ablate(c) => {
            let rows = run_ablation(&c.config()?)?;
            let csv = rows_csv(&rows);
            write(&c.out, "ablation.csv", &csv)?;
            print!("{csv}");
        }
        Command::FusionBench(c) => {
            let rows = run_fusion_comparison(&c.config()?)?;
            let csv = rows_csv(&rows);
            write(&c.out, "fusion.csv", &csv)?;
            print!("{csv}");
        }
        Command::Adverse(c) => {
            let table = run_adverse(&c.config()?)?;
            write(&c.out, "adverse.csv", &table.csv())?;
            write(&c.out, "adverse.json", &serde_json::to_string_pretty(&table)?)?;
            print!("{}", table.csv());
            println!(
                "corrupted miou: weathfusion {}  concat {}",
                fmt(table.corrupted_miou_weathfusion),
                fmt(table.corrupted_miou_concat)
            );
        }
        Command::InferSeq { common, model, frames } => {
            let cfg = common.config()?;
            let model: Model64 = match model {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => train::<f64>(&cfg)?.model,
            };
            if frames == 0 {
                bail!("--frames must be at least 1");
            }
            let condition = cfg.weather_mix.first().copied().unwrap_or(WeatherCondition::ClearDay);
            let scene = make_scene(&cfg, condition, scene_seed(cfg.seed, condition, 0, Split::Eval))?;
            let seq = vec![scene; frames];
            let encoder = make_encoder(&cfg)?;
            let preds = infer_sequence(&seq, &cfg, &model, encoder.as_ref())?;
            for p in &preds {
                println!("frame {}: {}  -> predicted {:?}", p.t, p.prompt, p.predicted_classes);
            }
            write(&common.out, "sequence.json", &serde_json::to_string_pretty(&preds)?)?;
        }
        Command::GradCheck { tolerance } => {
            let report = run_suite(FD_STEP)?;
            let mut ok = true;
            for e in &report.entries {
                let pass = e.max_rel_err <= tolerance;
                ok &= pass;
                println!("{:<24} seeds {:>3}  max rel err {:.3e}  {}", e.name, e.seeds, e.max_rel_err, if pass { "ok" } else { "FAIL" });
            }
            println!("total {:.2}s", report.elapsed_s);
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
