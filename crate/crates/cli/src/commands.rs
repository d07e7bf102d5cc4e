use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cfbound::{
    bgm_curve, ecou_oracle, generate, read_csv, write_csv, AnalyticScmId, Arm, DatasetSpec,
    DatasetTag, LevelOracle, OracleConfig, Scm2D,
};
use serde::Serialize;

use crate::failure::Failure;
use crate::grid;
use crate::manifest::{write_json, RunManifest};
use crate::{BgmArgs, DirectionArg, GenDataArgs, OracleArgs, ScmName};

pub fn arm(i: u8) -> Arm {
    Arm::from_index(i).expect("arm flags are range-checked")
}

pub fn gen_data(args: &GenDataArgs) -> Result<(), Failure> {
    let tag = match args.dataset {
        1 => DatasetTag::Dataset1,
        _ => DatasetTag::Dataset2,
    };
    let d = generate(&DatasetSpec {
        tag,
        n_per_arm: args.n_per_arm,
        seed: args.seed,
    })?;
    RunManifest::new("gen-data", args, Some(args.seed))
        .output(&args.out)
        .write(&args.out)?;
    write_csv(&d, &args.out).map_err(|e| Failure::reading(&args.out, e))
}

fn scm(name: ScmName) -> Scm2D {
    match name {
        ScmName::M1 => Scm2D::m1(),
        ScmName::M2 => Scm2D::m2(),
        ScmName::Boxmuller => Scm2D::box_muller(),
        ScmName::Mperp => Scm2D::new(AnalyticScmId::mperp_default()).expect("valid fixture"),
    }
}

#[derive(Debug, Serialize)]
struct DensityCurve {
    arm: u8,
    y: Vec<f64>,
    density: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct OracleOutput {
    manifest: Option<String>,
    scm: ScmName,
    a_prime: u8,
    y_prime: f64,
    a: u8,
    grid_resolution: usize,
    q: f64,
    density_curve: DensityCurve,
}

pub fn oracle(args: &OracleArgs) -> Result<(), Failure> {
    let model = scm(args.scm);
    let cfg = OracleConfig {
        grid_resolution: args.grid_res,
        ..OracleConfig::default()
    };
    cfg.validate()?;
    let factual = arm(args.aprime);
    let (lo, hi) = model.support(factual);
    let ys = match &args.density_grid {
        Some(g) => grid::parse(g)?,
        None => grid::parse(&format!("{}:{}:101", lo.max(-4.0), hi.min(4.0)))?,
    };
    let manifest = match &args.out {
        Some(out) => Some(
            RunManifest::new("oracle", args, None)
                .output(out)
                .write(out)?,
        ),
        None => None,
    };
    let q = ecou_oracle(&model, factual, args.yprime, arm(args.a), &cfg)?;
    // the density vanishes off the support; support endpoints are nudged inside
    let inside: Vec<f64> = ys
        .iter()
        .filter(|&&y| y >= lo && y <= hi)
        .map(|y| y.clamp(lo + 1e-9, hi - 1e-9))
        .collect();
    let mut values = LevelOracle::new(&model, factual, cfg)?
        .density_curve(&inside)?
        .into_iter();
    let density = ys
        .iter()
        .map(|&y| {
            if y >= lo && y <= hi {
                values.next().unwrap_or(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let out = OracleOutput {
        manifest,
        scm: args.scm,
        a_prime: args.aprime,
        y_prime: args.yprime,
        a: args.a,
        grid_resolution: args.grid_res,
        q,
        density_curve: DensityCurve {
            arm: args.aprime,
            y: ys,
            density,
        },
    };
    match &args.out {
        Some(path) => write_json(path, &out),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&out).expect("outputs serialize")
            );
            Ok(())
        }
    }
}

pub fn bgm(args: &BgmArgs) -> Result<(), Failure> {
    let ys = grid::parse(&args.grid)?;
    let data = read_csv(&args.data).map_err(|e| Failure::reading(&args.data, e))?;
    let factual = match args.direction {
        DirectionArg::ZeroToOne => Arm::Control,
        DirectionArg::OneToZero => Arm::Treated,
    };
    let d0 = data
        .empirical(Arm::Control)
        .map_err(|e| Failure::reading(&args.data, e))?;
    let d1 = data
        .empirical(Arm::Treated)
        .map_err(|e| Failure::reading(&args.data, e))?;
    let curves = bgm_curve(&d0, &d1, &ys, factual);
    let mut csv = String::from("y_prime,q_inc,q_dec\n");
    for ((y, inc), dec) in curves
        .y_prime
        .iter()
        .zip(&curves.increasing)
        .zip(&curves.decreasing)
    {
        let _ = writeln!(csv, "{y},{inc},{dec}");
    }
    match &args.out {
        Some(path) => {
            RunManifest::new("bgm", args, None)
                .output(path)
                .write(path)?;
            write_text(path, &csv)
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}
