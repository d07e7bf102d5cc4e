use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use cfbound::training::{train_bounds_observed, TrajectoryPoint};
use cfbound::{read_csv, BoundsResult, CfQuery, Preset, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::commands::{arm, write_text};
use crate::failure::Failure;
use crate::manifest::{write_json, RunManifest};
use crate::{ApidArgs, PresetArg};

/// Iterations at the end of each bound's trajectory over which the spread of
/// the per-step `Q̂` is reported.
const STEP_SD_WINDOW: usize = 50;

#[derive(Serialize)]
struct Output<'a> {
    manifest: String,
    results: &'a [BoundsResult],
}

#[derive(Serialize)]
struct Step<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    y_prime: f64,
    phase: &'static str,
    #[serde(flatten)]
    point: &'a TrajectoryPoint,
}

#[derive(Serialize)]
struct Summary {
    #[serde(rename = "type")]
    kind: &'static str,
    y_prime: f64,
    lower: f64,
    upper: f64,
    burn_in_q_hat: f64,
    support_estimate: [f64; 2],
    /// Standard deviation of the per-step `Q̂` over the final iterations of
    /// either bound, whichever is larger: the noise scale of the bound estimates.
    q_hat_step_sd: f64,
}

fn step_sd(traj: &[TrajectoryPoint]) -> f64 {
    let qs: Vec<f64> = traj.iter().filter_map(|p| p.q_hat).collect();
    let tail = &qs[qs.len().saturating_sub(STEP_SD_WINDOW)..];
    if tail.len() < 2 {
        return 0.0;
    }
    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    (tail.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn line(text: &mut String, v: &impl Serialize) {
    let _ = writeln!(
        text,
        "{}",
        serde_json::to_string(v).expect("log lines serialize")
    );
}

fn log_text(manifest: &str, results: &[BoundsResult]) -> String {
    let mut text = String::new();
    line(
        &mut text,
        &json!({ "type": "manifest", "manifest": manifest }),
    );
    for r in results {
        let y = r.query.y_prime;
        for (phase, traj) in [
            ("burn_in", &r.burn_in_trajectory),
            ("upper", &r.upper_trajectory),
            ("lower", &r.lower_trajectory),
        ] {
            for point in traj.iter() {
                line(
                    &mut text,
                    &Step {
                        kind: "step",
                        y_prime: y,
                        phase,
                        point,
                    },
                );
            }
        }
        line(
            &mut text,
            &Summary {
                kind: "summary",
                y_prime: y,
                lower: r.lower,
                upper: r.upper,
                burn_in_q_hat: r.burn_in_q_hat,
                support_estimate: r.support_estimate,
                q_hat_step_sd: step_sd(&r.upper_trajectory).max(step_sd(&r.lower_trajectory)),
            },
        );
    }
    text
}

pub fn run(args: &ApidArgs) -> Result<(), Failure> {
    if args.aprime == args.a {
        return Err(Failure::Usage(
            "--aprime and --a must name different arms".into(),
        ));
    }
    let data = read_csv(&args.data).map_err(|e| Failure::reading(&args.data, e))?;
    let preset = match args.preset {
        PresetArg::Desk => Preset::Desk,
        PresetArg::Paper => Preset::Paper,
    };
    let cfg = TrainConfig {
        lambda_q: args.lambda_q,
        lambda_kappa: args.lambda_kappa,
        seed: args.seed,
        ..TrainConfig::preset(preset)
    };
    cfg.validate()?;
    let log = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("jsonl"));
    let checkpoints: Vec<(PathBuf, PathBuf)> = match &args.checkpoint_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
            (0..args.yprime.len())
                .map(|i| {
                    (
                        dir.join(format!("upper_{i}.json")),
                        dir.join(format!("lower_{i}.json")),
                    )
                })
                .collect()
        }
        None => Vec::new(),
    };
    let mut manifest = RunManifest::new(
        "apid",
        json!({ "flags": args, "train_config": cfg }),
        Some(args.seed),
    )
    .output(&args.out)
    .output(&log);
    for (u, l) in &checkpoints {
        manifest = manifest.output(u).output(l);
    }
    let manifest = manifest.write(&args.out)?;

    let progress = |y: f64| {
        move |p: &TrajectoryPoint| {
            if p.iteration.is_multiple_of(50) {
                let bound = p
                    .direction
                    .map_or("both".to_string(), |d| format!("{d:?}").to_lowercase());
                eprintln!(
                    "y'={y}: {:?} {bound} arm {} iteration {}",
                    p.stage, p.arm, p.iteration
                );
            }
        }
    };
    let results: Vec<BoundsResult> = args
        .yprime
        .par_iter()
        .map(|&y_prime| {
            let query = CfQuery {
                a_prime: arm(args.aprime),
                y_prime,
                a: arm(args.a),
            };
            let report = progress(y_prime);
            let observer: Option<&(dyn Fn(&TrajectoryPoint) + Sync)> =
                if args.progress { Some(&report) } else { None };
            train_bounds_observed(&data, query, &cfg, observer)
        })
        .collect::<Result<_, _>>()?;

    write_json(
        &args.out,
        &Output {
            manifest: manifest.clone(),
            results: &results,
        },
    )?;
    write_text(&log, &log_text(&manifest, &results))?;
    for ((u, l), r) in checkpoints.iter().zip(&results) {
        write_text(u, &r.upper_model.to_json())?;
        write_text(l, &r.lower_model.to_json())?;
    }
    Ok(())
}
