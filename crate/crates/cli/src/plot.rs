use std::fmt::Write as _;
use std::path::Path;

use puppeteer_core::agents::EvalStepRecord;
use puppeteer_core::env::PuppetEnv;
use puppeteer_core::metrics::io::read_jsonl;
use puppeteer_core::{Error, Result};

use crate::commands::load_config;
use crate::{Common, PlotArgs};

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !f.x0.is_finite() {
            (f.x0, f.x1, f.y0, f.y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if f.x1 <= f.x0 {
            f.x1 = f.x0 + 1.0;
        }
        if f.y1 <= f.y0 {
            f.y1 = f.y0 + 1.0;
        }
        f
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD),
            H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD),
        )
    }

    fn polyline(&self, pts: &[(f64, f64)], color: &str) -> String {
        let mut s = String::new();
        for &(x, y) in pts {
            let (a, b) = self.px(x, y);
            let _ = write!(s, "{a:.2},{b:.2} ");
        }
        format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", s.trim_end())
    }

    fn axes(&self, xlabel: &str, ylabel: &str) -> String {
        let (l, b) = (PAD, H - PAD);
        format!(
            "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <line x1=\"{l}\" y1=\"{b}\" x2=\"{l}\" y2=\"{PAD}\" stroke=\"black\"/>\n\
             <text x=\"{l}\" y=\"{tb}\" font-size=\"11\">{x0:.3}</text>\n\
             <text x=\"{r}\" y=\"{tb}\" font-size=\"11\" text-anchor=\"end\">{x1:.3}</text>\n\
             <text x=\"{lx}\" y=\"{b}\" font-size=\"11\" text-anchor=\"end\">{y0:.3}</text>\n\
             <text x=\"{lx}\" y=\"{PAD}\" font-size=\"11\" text-anchor=\"end\">{y1:.3}</text>\n\
             <text x=\"{cx}\" y=\"{xl}\" font-size=\"12\" text-anchor=\"middle\">{xlabel}</text>\n\
             <text x=\"12\" y=\"{cy}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 {cy})\">{ylabel}</text>\n",
            r = W - PAD,
            tb = b + 15.0,
            lx = l - 4.0,
            cx = W / 2.0,
            xl = H - 10.0,
            cy = H / 2.0,
            x0 = self.x0,
            x1 = self.x1,
            y0 = self.y0,
            y1 = self.y1,
        )
    }
}

fn svg(body: &str) -> String {
    format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n")
}

fn write(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// `(step, episode_return)` of every episode record in a training log.
fn returns(path: &Path) -> Result<Vec<(f64, f64)>> {
    let lines: Vec<serde_json::Value> = read_jsonl(path)?;
    Ok(lines
        .iter()
        .filter_map(|v| Some((v.get("step")?.as_f64()?, v.get("episode_return")?.as_f64()?)))
        .collect())
}

pub fn learning_svg(logs: &[(String, Vec<(f64, f64)>)]) -> String {
    let f = Frame::fit(logs.iter().flat_map(|(_, p)| p.iter().copied()));
    let mut body = f.axes("environment step", "episode return");
    for (i, (name, pts)) in logs.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        body.push_str(&f.polyline(pts, c));
        let _ = writeln!(
            body,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{c}\">{name}</text>",
            W - PAD - 4.0,
            PAD + 14.0 * i as f64,
        );
    }
    svg(&body)
}

pub fn run(common: &Common, args: &PlotArgs) -> Result<()> {
    match args {
        PlotArgs::Learning { logs, out } => {
            let series = logs
                .iter()
                .map(|p| Ok((p.file_stem().and_then(|s| s.to_str()).unwrap_or("log").to_string(), returns(p)?)))
                .collect::<Result<Vec<_>>>()?;
            write(out, &learning_svg(&series))
        }
        PlotArgs::Trajectory { dump, episode, out } => {
            let cfg = load_config(common)?;
            let recs: Vec<EvalStepRecord> = read_jsonl(dump)?;
            let mut path = Vec::new();
            let mut seed = None;
            for r in &recs {
                match r {
                    EvalStepRecord::Step {
                        episode: e,
                        torso_x,
                        torso_height,
                        ..
                    } if e == episode => path.push((*torso_x, *torso_height)),
                    EvalStepRecord::Episode { episode: e, seed: s, .. } if e == episode => seed = Some(*s),
                    _ => {}
                }
            }
            let seed = seed.ok_or_else(|| Error::contract(format!("episode {episode} not found in {}", dump.display())))?;
            let env = PuppetEnv::reset(&cfg.task, &cfg.env, seed)?;
            let terrain = env.terrain();
            let world: Vec<(f64, f64)> = path.iter().map(|&(x, h)| (x, h + terrain.support_height(x))).collect();
            let x_max = world.iter().map(|p| p.0).fold(2.0, f64::max) + 1.0;
            let mut ground = Vec::new();
            let n = 800;
            for i in 0..=n {
                let x = -1.0 + (x_max + 1.0) * i as f64 / n as f64;
                ground.push((x, terrain.height_at(x).unwrap_or(-0.5)));
            }
            let f = Frame::fit(ground.iter().chain(&world).copied());
            let mut body = f.axes("x (m)", "z (m)");
            body.push_str(&f.polyline(&ground, "#555555"));
            body.push_str(&f.polyline(&world, COLORS[0]));
            write(out, &svg(&body))
        }
    }
}
