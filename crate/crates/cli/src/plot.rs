use std::fs;
use std::path::{Path, PathBuf};

use cfbound::oracle::FieldGrid;
use cfbound::{ApidModel, Arm, OracleConfig};
use serde_json::Value;

use crate::commands::{arm, write_text};
use crate::failure::Failure;
use crate::manifest::RunManifest;
use crate::svg::{diverging, escape, tick_label, ticks, Frame, Stroke, Svg, PALETTE};
use crate::PlotArgs;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 520.0;

/// Bound intervals of one `apid` output, sorted by `y′`.
struct Bounds {
    label: String,
    rows: Vec<(f64, f64, f64)>,
}

/// Rows `(y′, Q_inc, Q_dec)` of one `bgm` output.
struct BgmCurves {
    rows: Vec<(f64, f64, f64)>,
}

enum Input {
    Bounds(Bounds),
    Bgm(BgmCurves),
    Checkpoint(Box<ApidModel>),
}

fn number(v: &Value, path: &Path, what: &str) -> Result<f64, Failure> {
    v.as_f64()
        .ok_or_else(|| Failure::Usage(format!("{}: `{what}` is not a number", path.display())))
}

fn parse_bounds(v: &Value, path: &Path) -> Result<Bounds, Failure> {
    let results = v["results"]
        .as_array()
        .ok_or_else(|| Failure::Usage(format!("{}: `results` is not an array", path.display())))?;
    let mut rows = Vec::with_capacity(results.len());
    let mut kappa = None;
    for r in results {
        rows.push((
            number(&r["query"]["y_prime"], path, "query.y_prime")?,
            number(&r["lower"], path, "lower")?,
            number(&r["upper"], path, "upper")?,
        ));
        kappa = r["config"]["lambda_kappa"].as_f64().or(kappa);
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let label = match kappa {
        Some(k) => format!("bounds, λκ = {}", tick_label(k)),
        None => format!("bounds, {}", path.display()),
    };
    Ok(Bounds { label, rows })
}

fn parse_bgm(text: &str, path: &Path) -> Result<BgmCurves, Failure> {
    let bad =
        |line: usize, why: &str| Failure::Usage(format!("{}: line {line}: {why}", path.display()));
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some("y_prime,q_inc,q_dec") {
        return Err(bad(1, "expected header `y_prime,q_inc,q_dec`"));
    }
    let mut rows = Vec::new();
    for (i, l) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<f64> = l
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(i + 1, "not a number"))?;
        let [y, inc, dec] = f[..] else {
            return Err(bad(i + 1, "expected three fields"));
        };
        rows.push((y, inc, dec));
    }
    Ok(BgmCurves { rows })
}

fn load(path: &Path) -> Result<Input, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    if text.starts_with("y_prime,") {
        return parse_bgm(&text, path).map(Input::Bgm);
    }
    let v: Value = serde_json::from_str(&text).map_err(|e| {
        Failure::Usage(format!(
            "{}: neither a BGM CSV nor JSON: {e}",
            path.display()
        ))
    })?;
    if v.get("results").is_some() {
        parse_bounds(&v, path).map(Input::Bounds)
    } else if v.get("model").is_some() {
        ApidModel::from_json(&text)
            .map(|m| Input::Checkpoint(Box::new(m)))
            .map_err(|e| Failure::reading(path, e))
    } else {
        Err(Failure::Usage(format!(
            "{}: not a bounds file, BGM CSV or checkpoint",
            path.display()
        )))
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Legend to the right of the frame.
fn legend(svg: &mut Svg, f: &Frame, entries: &[(String, Stroke)]) {
    let (x, mut y) = (f.left + f.width + 16.0, f.top + 12.0);
    for (label, stroke) in entries {
        svg.line((x, y - 4.0), (x + 26.0, y - 4.0), *stroke);
        svg.text((x + 32.0, y), label, 12.0, "start");
        y += 18.0;
    }
}

fn curves(bounds: &[Bounds], bgm: &[BgmCurves], title: &str) -> Svg {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for b in bounds {
        for &(y, lo, hi) in &b.rows {
            xs.push(y);
            ys.extend([lo, hi]);
        }
    }
    for c in bgm {
        for &(y, inc, dec) in &c.rows {
            xs.push(y);
            ys.extend([inc, dec]);
        }
    }
    let range = |v: &[f64]| {
        padded(
            v.iter().copied().fold(f64::INFINITY, f64::min),
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let f = Frame {
        left: 80.0,
        top: 50.0,
        width: WIDTH - 290.0,
        height: HEIGHT - 120.0,
        x: range(&xs),
        y: range(&ys),
    };
    let mut svg = Svg::new(WIDTH, HEIGHT);
    svg.text((WIDTH / 2.0, 28.0), title, 15.0, "middle");
    svg.axes(&f, "y′ (factual outcome)", "counterfactual outcome", true);
    let mut entries = Vec::new();
    for (i, b) in bounds.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let lower: Vec<(f64, f64)> = b.rows.iter().map(|r| (f.px(r.0), f.py(r.1))).collect();
        let upper: Vec<(f64, f64)> = b.rows.iter().map(|r| (f.px(r.0), f.py(r.2))).collect();
        let mut band = upper.clone();
        band.extend(lower.iter().rev());
        svg.polygon(&band, color, 0.15);
        let stroke = Stroke {
            color,
            width: 2.0,
            dash: None,
        };
        svg.polyline(&lower, stroke);
        svg.polyline(&upper, stroke);
        for (l, u) in lower.iter().zip(&upper) {
            svg.line(
                *l,
                *u,
                Stroke {
                    color,
                    width: 1.0,
                    dash: None,
                },
            );
            svg.circle(*l, 3.0, color);
            svg.circle(*u, 3.0, color);
        }
        entries.push((b.label.clone(), stroke));
    }
    for c in bgm {
        let inc = Stroke {
            color: "#000",
            width: 1.5,
            dash: Some("6 4"),
        };
        let dec = Stroke {
            color: "#777",
            width: 1.5,
            dash: Some("2 3"),
        };
        svg.polyline(
            &c.rows
                .iter()
                .map(|r| (f.px(r.0), f.py(r.1)))
                .collect::<Vec<_>>(),
            inc,
        );
        svg.polyline(
            &c.rows
                .iter()
                .map(|r| (f.px(r.0), f.py(r.2)))
                .collect::<Vec<_>>(),
            dec,
        );
        if !entries.iter().any(|e| e.0.starts_with("BGM")) {
            entries.push(("BGM, increasing".into(), inc));
            entries.push(("BGM, decreasing".into(), dec));
        }
    }
    legend(&mut svg, &f, &entries);
    svg
}

fn heatmap(
    model: &ApidModel,
    a: Arm,
    res: usize,
    levels: usize,
    title: &str,
) -> Result<Svg, Failure> {
    let size = HEIGHT - 120.0;
    let f = Frame {
        left: 80.0,
        top: 50.0,
        width: size,
        height: size,
        x: (0.0, 1.0),
        y: (0.0, 1.0),
    };
    let kappa: Vec<f64> = (0..res * res)
        .map(|k| {
            let u = [
                ((k % res) as f64 + 0.5) / res as f64,
                ((k / res) as f64 + 0.5) / res as f64,
            ];
            model.curvature_at(a, u).unwrap_or(f64::NAN)
        })
        .collect();
    let mut mags: Vec<f64> = kappa
        .iter()
        .filter(|k| k.is_finite())
        .map(|k| k.abs())
        .collect();
    mags.sort_by(f64::total_cmp);
    let scale = mags
        .get(mags.len().saturating_sub(1) * 95 / 100)
        .copied()
        .filter(|s| *s > 0.0)
        .unwrap_or(1.0);

    let mut svg = Svg::new(WIDTH, HEIGHT);
    svg.text((WIDTH / 2.0, 28.0), title, 15.0, "middle");
    let cell = size / res as f64;
    for (k, v) in kappa.iter().enumerate() {
        let (i, j) = (k % res, k / res);
        let fill = if v.is_finite() {
            diverging(v / scale)
        } else {
            "#999999".into()
        };
        svg.rect(
            f.left + i as f64 * cell,
            f.top + size - (j + 1) as f64 * cell,
            cell + 0.3,
            cell + 0.3,
            &fill,
        );
    }

    // level sets of the modelled outcome, the boundary nudged into the open square
    let flow = model.flow(a);
    let field =
        |u: [f64; 2]| flow.outcome([u[0].clamp(1e-9, 1.0 - 1e-9), u[1].clamp(1e-9, 1.0 - 1e-9)]);
    let grid = FieldGrid::sample(&field, 128)?;
    let n = grid.resolution();
    let mut values: Vec<f64> = (0..=n)
        .flat_map(|j| (0..=n).map(move |i| (i, j)))
        .map(|(i, j)| grid.at(i, j))
        .collect();
    values.sort_by(f64::total_cmp);
    let line = Stroke {
        color: "#000",
        width: 1.0,
        dash: None,
    };
    for l in 1..=levels {
        // equally spaced quantiles of the outcome under the uniform latent law
        let level = values[(values.len() - 1) * l / (levels + 1)];
        match grid.trace(&field, level, &OracleConfig::default()) {
            Ok(parts) => {
                for part in parts {
                    svg.polyline(
                        &part
                            .iter()
                            .map(|p| (f.px(p[0]), f.py(p[1])))
                            .collect::<Vec<_>>(),
                        line,
                    );
                }
            }
            Err(cfbound::Error::EmptyLevelSet { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    svg.axes(&f, "u₁", "u₂", false);

    // colour bar
    let (bx, bw) = (f.left + size + 40.0, 18.0);
    let steps = 100;
    for s in 0..steps {
        let t = 1.0 - 2.0 * (s as f64 + 0.5) / steps as f64;
        svg.rect(
            bx,
            f.top + s as f64 * size / steps as f64,
            bw,
            size / steps as f64 + 0.3,
            &diverging(t),
        );
    }
    svg.outline(
        bx,
        f.top,
        bw,
        size,
        Stroke {
            color: "#000",
            width: 1.0,
            dash: None,
        },
    );
    for t in ticks(-scale, scale, 4) {
        let y = f.top + (1.0 - (t + scale) / (2.0 * scale)) * size;
        svg.text((bx + bw + 6.0, y + 4.0), &tick_label(t), 11.0, "start");
    }
    svg.text((bx + bw / 2.0, f.top - 8.0), "κ", 13.0, "middle");
    Ok(svg)
}

pub fn run(args: &PlotArgs) -> Result<(), Failure> {
    let inputs: Vec<(PathBuf, Input)> = args
        .inputs
        .iter()
        .map(|p| load(p).map(|i| (p.clone(), i)))
        .collect::<Result<_, _>>()?;
    let manifest = RunManifest::new("plot", args, None)
        .output(&args.out)
        .write(&args.out)?;
    let n_checkpoints = inputs
        .iter()
        .filter(|i| matches!(i.1, Input::Checkpoint(_)))
        .count();
    let mut svg = if n_checkpoints > 0 {
        let [(_, Input::Checkpoint(model))] = &inputs[..] else {
            return Err(Failure::Usage(
                "a checkpoint heatmap takes exactly one input".into(),
            ));
        };
        let a = arm(args.arm);
        let title = args
            .title
            .clone()
            .unwrap_or_else(|| format!("Level-set curvature, arm {a}"));
        heatmap(model, a, args.resolution.max(1), args.levels, &title)?
    } else {
        let mut bounds = Vec::new();
        let mut bgm = Vec::new();
        for (_, i) in inputs {
            match i {
                Input::Bounds(b) => bounds.push(b),
                Input::Bgm(c) => bgm.push(c),
                Input::Checkpoint(_) => unreachable!("no checkpoints here"),
            }
        }
        curves(
            &bounds,
            &bgm,
            args.title.as_deref().unwrap_or("Counterfactual bounds"),
        )
    };
    svg.comment(&format!("manifest: {}", escape(&manifest)));
    write_text(&args.out, &svg.finish())
}
