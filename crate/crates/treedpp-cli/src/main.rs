//! Command-line driver: partitions, bases, kernel projection, sampling,
//! verification, and plots, all from one config.
//!
//! Exit codes: 0 success, 1 verification failure, 2 config error,
//! 3 numeric failure.

mod svg;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use treedpp::config::{parse_index, RunConfig};
use treedpp::dpp::DiscreteDpp;
use treedpp::error::Error;
use treedpp::geom::{CellGeometry, Point, Window};
use treedpp::kernel::ContinuousKernel;
use treedpp::lift::{consistency_experiment, ConsistencyConfig, LiftSampler};
use treedpp::partition::TreeSpace;
use treedpp::project::{project_kernel, ProjectedKernel, ProjectedKernelFile};
use treedpp::stream::replica_rng;
use treedpp::verify::{
    correlation_identity, factorial_moment_check, refinement_check, trichotomy_sweep,
};

#[derive(Parser)]
#[command(
    name = "treedpp",
    version,
    about = "Tree discretization and exact sampling of determinantal point processes"
)]
struct Cli {
    /// TOML config file; falls back to $TREEDPP_CONFIG, then to defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Kernel name: sine | airy | bessel | ginibre | finite-rank.
    #[arg(long, global = true)]
    kernel: Option<String>,

    /// Bessel order (>= 1).
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Window a..b with integer bounds (line kernels).
    #[arg(long, global = true, allow_hyphen_values = true)]
    window: Option<String>,

    /// Half width of the square window (ginibre).
    #[arg(long, global = true)]
    half_width: Option<i64>,

    /// Partition level (>= 1).
    #[arg(long, global = true)]
    level: Option<u8>,

    /// Basis rank bound (>= 1).
    #[arg(long, global = true)]
    rank_max: Option<u8>,

    /// Gauss-Legendre order per axis.
    #[arg(long, global = true)]
    quad_order: Option<usize>,

    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Sample count for sampling and Monte Carlo verification.
    #[arg(long, short = 'n', global = true)]
    n: Option<u64>,

    /// Worker threads; 0 = available parallelism, 1 = single-threaded.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the level partition as CSV.
    Partition {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the truncated basis table as CSV.
    Basis {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the projected kernel and write it with its eigendecomposition.
    Project {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Read a projection file back and print its spectrum report.
    Spectrum {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Draw configurations of the discrete process, one per line.
    Sample {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output format: csv | jsonl.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Draw lifted samples: (index, mark) pairs plus unlabeled points.
    LiftSample {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Numerical verification; exit code 1 on any failed tolerance.
    Verify {
        #[command(subcommand)]
        what: VerifyCommand,
        /// Report file; defaults to <output.dir>/verify-<name>.json.
        #[arg(long, global = true)]
        report: Option<PathBuf>,
    },
    /// Render samples to SVG: histogram and rug in 1D, scatter in 2D.
    Plot {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Correlation identity over level cells (m = number of cells <= 3).
    Corr {
        /// Comma-separated level-cell indices root[.bits]; default: the
        /// first window cell (m = 1).
        #[arg(long, allow_hyphen_values = true)]
        cells: Option<String>,
        /// Extra tolerance on top of the quadrature estimate.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Orthogonality trichotomy sweep over the truncated basis.
    Ortho,
    /// Factorial moments of lifted samples: cell:k pairs.
    Moments {
        /// Comma-separated cell:multiplicity pairs, e.g. "0:1,1:1".
        #[arg(long, allow_hyphen_values = true)]
        moment: String,
    },
    /// Coarse counts recomputed from fine counts on random configurations.
    Refine {
        #[arg(long)]
        coarse: Option<u8>,
        #[arg(long)]
        fine: Option<u8>,
        #[arg(long, default_value_t = 1000)]
        configs: u64,
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Two-level lift consistency of the coarse cell-count law.
    Consistency {
        #[arg(long)]
        coarse: Option<u8>,
        #[arg(long)]
        fine: Option<u8>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Domain(_) => 2,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

/// Ok(true) = success, Ok(false) = verification failure.
fn run(cli: Cli) -> treedpp::Result<bool> {
    let cfg = load_config(&cli)?;
    if let Some(t) = threads(&cfg) {
        // ignore the error when a pool already exists (tests call run twice)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let space = cfg.build_space()?;
    let kernel = cfg.build_kernel(&space)?;

    match &cli.command {
        Command::Partition { out } => {
            let mut text = artifact_header(&cfg);
            match space.window() {
                Window::One { .. } => text.push_str("level,root,bits,left,right,mass\n"),
                Window::Two { .. } => text.push_str("level,root,bits,x0,x1,y0,y1,mass\n"),
            }
            for cell in space.cells(cfg.discretization.level)? {
                let i = cell.index;
                match cell.geometry {
                    CellGeometry::Interval { lo, hi } => {
                        text.push_str(&format!(
                            "{},{},{},{},{},{}\n",
                            i.level, i.root, i.path, lo, hi, cell.mass
                        ));
                    }
                    CellGeometry::Rect { x0, x1, y0, y1 } => {
                        text.push_str(&format!(
                            "{},{},{},{},{},{},{},{}\n",
                            i.level, i.root, i.path, x0, x1, y0, y1, cell.mass
                        ));
                    }
                }
            }
            emit(out.as_deref(), &text)?;
            Ok(true)
        }

        Command::Basis { out } => {
            let mut text = artifact_header(&cfg);
            text.push_str("index,level,rank,support,piece0,coeff0,piece1,coeff1\n");
            let basis = space.basis(cfg.discretization.level, cfg.discretization.rank_max)?;
            for f in &basis {
                let p0 = &f.pieces[0];
                let (p1g, p1c) = match f.pieces.get(1) {
                    Some((c, a)) => (c.geometry.to_string(), a.to_string()),
                    None => (String::new(), String::new()),
                };
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    f.index.display_compact(),
                    f.index.level,
                    f.index.rank(),
                    f.support.geometry,
                    p0.0.geometry,
                    p0.1,
                    p1g,
                    p1c
                ));
            }
            emit(out.as_deref(), &text)?;
            Ok(true)
        }

        Command::Project { out } => {
            let projected = project_kernel(&space, &kernel, &cfg.projection_config())?;
            let mut model = projected.to_file_model();
            model.generator = generator_string();
            let payload = serde_json::json!({
                "config": cfg.content_echo(),
                "projection": model,
            });
            let path = out
                .clone()
                .unwrap_or_else(|| Path::new(&cfg.output.dir).join("projection.json"));
            write_file(
                &path,
                &format!("{}\n", serde_json::to_string_pretty(&payload).unwrap()),
            )?;
            println!(
                "projected {} at level {} rank_max {}: n = {}, trace = {:.6}, written to {}",
                kernel.name(),
                cfg.discretization.level,
                cfg.discretization.rank_max,
                projected.n(),
                projected.trace(),
                path.display()
            );
            Ok(true)
        }

        Command::Spectrum { input } => {
            let text = std::fs::read_to_string(input)?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad projection file: {e}")))?;
            let model: ProjectedKernelFile = serde_json::from_value(value["projection"].clone())
                .map_err(|e| Error::Config(format!("bad projection file: {e}")))?;
            let n = model.n;
            let min = model.raw_eigenvalues.last().copied().unwrap_or(0.0);
            let max = model.raw_eigenvalues.first().copied().unwrap_or(0.0);
            let trace: f64 = (0..n).map(|i| model.matrix[i * n + i][0]).sum();
            println!("kernel: {}", model.meta.kernel);
            println!("n: {n}");
            println!("eigenvalue range: [{min:.12}, {max:.12}]");
            println!("trace: {trace:.12}");
            println!(
                "clipped: {} (max excess {:.3e})",
                model.clip_count, model.max_clip_excess
            );
            for (k, l) in model.raw_eigenvalues.iter().take(12).enumerate() {
                println!("lambda[{k}] = {l:.12}");
            }
            if min < -1e-8 || max > 1.0 + 1e-8 {
                return Err(Error::Spectrum {
                    value: if min < -1e-8 { min } else { max },
                    lo: -1e-8,
                    hi: 1.0 + 1e-8,
                });
            }
            Ok(true)
        }

        Command::Sample { out, format } => {
            let projected = project_kernel(&space, &kernel, &cfg.projection_config())?;
            let dpp = DiscreteDpp::from_projected(&projected);
            let draws = cfg.run.samples;
            let seed = cfg.run.seed;
            let lines = sample_lines(&projected, &dpp, draws, seed, format)?;
            let mut text = if format == "jsonl" {
                format!(
                    "{}\n",
                    serde_json::json!({"schema_version": 1, "generator": generator_string(), "config": cfg.content_echo()})
                )
            } else {
                artifact_header(&cfg) + "draw,indices\n"
            };
            text.push_str(&lines);
            emit(out.as_deref(), &text)?;
            Ok(true)
        }

        Command::LiftSample { out } => {
            let projected = project_kernel(&space, &kernel, &cfg.projection_config())?;
            let sampler = LiftSampler::new(&space, &projected);
            let mut text = format!(
                "{}\n",
                serde_json::json!({"schema_version": 1, "generator": generator_string(), "config": cfg.content_echo()})
            );
            for draw in 0..cfg.run.samples {
                let mut rng = replica_rng(cfg.run.seed, draw);
                let s = sampler.sample(&mut rng)?;
                let pairs: Vec<serde_json::Value> = s
                    .pairs
                    .iter()
                    .map(|(i, p)| {
                        serde_json::json!({"index": i.display_compact(), "point": p.to_string()})
                    })
                    .collect();
                let points: Vec<String> = s.pairs.iter().map(|(_, p)| p.to_string()).collect();
                text.push_str(&format!(
                    "{}\n",
                    serde_json::json!({"draw": draw, "pairs": pairs, "points": points})
                ));
            }
            emit(out.as_deref(), &text)?;
            Ok(true)
        }

        Command::Verify { what, report } => run_verify(&cli, &cfg, &space, &kernel, what, report),

        Command::Plot { out } => {
            let projected = project_kernel(&space, &kernel, &cfg.projection_config())?;
            let sampler = LiftSampler::new(&space, &projected);
            let path = out
                .clone()
                .unwrap_or_else(|| Path::new(&cfg.output.dir).join("plot.svg"));
            let content = match space.window() {
                Window::One { lo, hi } => plot_line(&cfg, &sampler, lo as f64, hi as f64)?,
                Window::Two { x0, x1, y0, y1 } => plot_plane(
                    &cfg,
                    &sampler,
                    (x0 as f64, x1 as f64),
                    (y0 as f64, y1 as f64),
                )?,
            };
            write_file(&path, &content)?;
            println!("plot written to {}", path.display());
            Ok(true)
        }
    }
}

fn run_verify(
    _cli: &Cli,
    cfg: &RunConfig,
    space: &TreeSpace,
    kernel: &ContinuousKernel,
    what: &VerifyCommand,
    report_path: &Option<PathBuf>,
) -> treedpp::Result<bool> {
    let level = cfg.discretization.level;
    let (name, report_json, pass, summary) = match what {
        VerifyCommand::Corr { cells, tolerance } => {
            let projected = project_kernel(space, kernel, &cfg.projection_config())?;
            let cell_list = match cells {
                Some(list) => list
                    .split(',')
                    .map(|s| parse_index(s.trim(), level))
                    .collect::<treedpp::Result<Vec<_>>>()?,
                None => vec![space.cells(level)?[0].index],
            };
            let r = correlation_identity(space, kernel, &projected, &cell_list, *tolerance)?;
            (
                "corr".to_string(),
                serde_json::to_value(&r).unwrap(),
                r.pass,
                r.summary(),
            )
        }
        VerifyCommand::Ortho => {
            let r = trichotomy_sweep(space, level, cfg.discretization.rank_max)?;
            let summary = format!(
                "orthogonality trichotomy: {} integrals, max error {:.3e} -> {}",
                r.pairs_checked,
                r.max_error,
                if r.pass { "pass" } else { "FAIL" }
            );
            (
                "ortho".to_string(),
                serde_json::to_value(&r).unwrap(),
                r.pass,
                summary,
            )
        }
        VerifyCommand::Moments { moment } => {
            let projected = project_kernel(space, kernel, &cfg.projection_config())?;
            let mut cells = Vec::new();
            for part in moment.split(',') {
                let (cell, k) = part
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("bad moment argument {part:?}")))?;
                cells.push((
                    parse_index(cell.trim(), level)?,
                    k.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::Config(format!("bad multiplicity in {part:?}")))?,
                ));
            }
            let r = factorial_moment_check(
                space,
                kernel,
                &projected,
                &cells,
                cfg.run.samples,
                cfg.run.seed,
            )?;
            (
                "moments".to_string(),
                serde_json::to_value(&r).unwrap(),
                r.pass,
                r.summary(),
            )
        }
        VerifyCommand::Refine {
            coarse,
            fine,
            configs,
            points,
        } => {
            let c = coarse.unwrap_or(level);
            let f = fine.unwrap_or(level + 2);
            let r = refinement_check(space, c, f, *configs, *points, cfg.run.seed)?;
            let summary = format!(
                "refinement {} -> {}: {} configurations, {} mismatches -> {}",
                f,
                c,
                r.configurations,
                r.mismatches,
                if r.pass { "pass" } else { "FAIL" }
            );
            (
                "refine".to_string(),
                serde_json::to_value(&r).unwrap(),
                r.pass,
                summary,
            )
        }
        VerifyCommand::Consistency { coarse, fine } => {
            let c = coarse.unwrap_or(level);
            let f = fine.unwrap_or(level + 2);
            let r = consistency_experiment(
                space,
                kernel,
                &ConsistencyConfig {
                    coarse_level: c,
                    fine_level: f,
                    rank_max: cfg.discretization.rank_max,
                    draws: cfg.run.samples,
                    seed: cfg.run.seed,
                    quad_order: cfg.discretization.quad_order,
                },
            )?;
            let summary = format!(
                "consistency level {} vs {}: chi2 = {:.3} (dof {}), p = {:.4}{} -> {}",
                c,
                f,
                r.chi_square,
                r.dof,
                r.p_value,
                match r.exact_distance {
                    Some(d) => format!(", exact TV = {d:.3e}"),
                    None => String::new(),
                },
                if r.pass { "pass" } else { "FAIL" }
            );
            // outcome frequencies as CSV next to the JSON report
            let mut csv = artifact_header(cfg);
            csv.push_str("counts,coarse_freq,fine_freq,band,within\n");
            for row in &r.outcomes {
                let key: Vec<String> = row.counts.iter().map(|c| c.to_string()).collect();
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    key.join(";"),
                    row.coarse_freq,
                    row.fine_freq,
                    row.band,
                    row.within_band
                ));
            }
            let csv_path = Path::new(&cfg.output.dir).join("verify-consistency.csv");
            write_file(&csv_path, &csv)?;
            (
                "consistency".to_string(),
                serde_json::to_value(&r).unwrap(),
                r.pass,
                summary,
            )
        }
    };

    let payload = serde_json::json!({
        "schema_version": 1,
        "generator": generator_string(),
        "config": cfg.content_echo(),
        "report": report_json,
    });
    let path = report_path
        .clone()
        .unwrap_or_else(|| Path::new(&cfg.output.dir).join(format!("verify-{name}.json")));
    write_file(
        &path,
        &format!("{}\n", serde_json::to_string_pretty(&payload).unwrap()),
    )?;
    println!("{summary}");
    println!("report written to {}", path.display());
    Ok(pass)
}

/// Draws are split one replica stream per draw, so the output is identical
/// no matter how many threads execute them.
fn sample_lines(
    projected: &ProjectedKernel,
    dpp: &DiscreteDpp,
    draws: u64,
    seed: u64,
    format: &str,
) -> treedpp::Result<String> {
    use rayon::prelude::*;
    let lines: Vec<String> = (0..draws)
        .into_par_iter()
        .map(|draw| {
            let mut rng = replica_rng(seed, draw);
            let positions = dpp.sample(&mut rng)?;
            let indices: Vec<String> = positions
                .iter()
                .map(|&p| projected.indices[p].display_compact())
                .collect();
            Ok(if format == "jsonl" {
                format!(
                    "{}\n",
                    serde_json::json!({"draw": draw, "indices": indices})
                )
            } else {
                format!("{},{}\n", draw, indices.join(" "))
            })
        })
        .collect::<treedpp::Result<Vec<_>>>()?;
    Ok(lines.concat())
}

fn plot_line(
    cfg: &RunConfig,
    sampler: &LiftSampler<'_>,
    lo: f64,
    hi: f64,
) -> treedpp::Result<String> {
    let (w, h) = (640.0, 360.0);
    let margin = 40.0;
    let mut points = Vec::new();
    for draw in 0..cfg.run.samples {
        let mut rng = replica_rng(cfg.run.seed, draw);
        for (_, p) in sampler.sample(&mut rng)?.pairs {
            if let Point::One(x) = p {
                points.push(x);
            }
        }
    }
    let bins = 64usize;
    let mut hist = vec![0u32; bins];
    for &x in &points {
        let b = (((x - lo) / (hi - lo)) * bins as f64).floor() as usize;
        hist[b.min(bins - 1)] += 1;
    }
    let peak = hist.iter().copied().max().unwrap_or(1).max(1) as f64;
    let mut svg = svg::Svg::new(w, h);
    svg.comment(&format!("generator: {}", generator_string()));
    svg.comment(&format!(
        "config: {}",
        serde_json::json!(cfg.content_echo())
    ));
    svg.rect(0.0, 0.0, w, h, "white");
    let plot_w = w - 2.0 * margin;
    let plot_h = h - 2.0 * margin;
    for (b, &c) in hist.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let bh = plot_h * c as f64 / peak;
        svg.rect(
            margin + plot_w * b as f64 / bins as f64,
            margin + plot_h - bh,
            plot_w / bins as f64,
            bh,
            "#4878a8",
        );
    }
    for &x in points.iter().take(2000) {
        let px = margin + plot_w * (x - lo) / (hi - lo);
        svg.line(px, h - margin + 2.0, px, h - margin + 10.0, "#333333", 0.5);
    }
    svg.line(margin, h - margin, w - margin, h - margin, "black", 1.0);
    svg.text(
        margin,
        margin - 10.0,
        12.0,
        &format!(
            "{} lift samples, n = {}, seed = {}",
            cfg.kernel.name, cfg.run.samples, cfg.run.seed
        ),
    );
    svg.text(margin, h - margin + 24.0, 10.0, &format!("{lo}"));
    svg.text(w - margin - 20.0, h - margin + 24.0, 10.0, &format!("{hi}"));
    Ok(svg.finish())
}

fn plot_plane(
    cfg: &RunConfig,
    sampler: &LiftSampler<'_>,
    x: (f64, f64),
    y: (f64, f64),
) -> treedpp::Result<String> {
    let (w, h) = (480.0, 480.0);
    let margin = 30.0;
    let mut rng = replica_rng(cfg.run.seed, 0);
    let sample = sampler.sample(&mut rng)?;
    let mut svg = svg::Svg::new(w, h);
    svg.comment(&format!("generator: {}", generator_string()));
    svg.comment(&format!(
        "config: {}",
        serde_json::json!(cfg.content_echo())
    ));
    svg.rect(0.0, 0.0, w, h, "white");
    svg.rect(
        margin,
        margin,
        w - 2.0 * margin,
        h - 2.0 * margin,
        "#f5f5f5",
    );
    for (_, p) in &sample.pairs {
        if let Point::Two(px, py) = p {
            let cx = margin + (w - 2.0 * margin) * (px - x.0) / (x.1 - x.0);
            let cy = h - margin - (h - 2.0 * margin) * (py - y.0) / (y.1 - y.0);
            svg.circle(cx, cy, 2.5, "#a83248");
        }
    }
    svg.text(
        margin,
        margin - 8.0,
        12.0,
        &format!(
            "{} lifted sample: {} points, seed = {}",
            cfg.kernel.name,
            sample.pairs.len(),
            cfg.run.seed
        ),
    );
    Ok(svg.finish())
}

fn load_config(cli: &Cli) -> treedpp::Result<RunConfig> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var("TREEDPP_CONFIG").ok().map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    // flag overrides, field by field
    if let Some(k) = &cli.kernel {
        cfg.kernel.name = k.clone();
    }
    if let Some(a) = cli.alpha {
        cfg.kernel.alpha = Some(a);
    }
    if let Some(w) = &cli.window {
        cfg.domain.window = Some(w.clone());
    }
    if let Some(hw) = cli.half_width {
        cfg.domain.half_width = Some(hw);
    }
    if let Some(l) = cli.level {
        cfg.discretization.level = l;
    }
    if let Some(r) = cli.rank_max {
        cfg.discretization.rank_max = r;
    }
    if let Some(q) = cli.quad_order {
        cfg.discretization.quad_order = q;
    }
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(n) = cli.n {
        cfg.run.samples = n;
    }
    if let Some(t) = cli.threads {
        cfg.run.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn threads(cfg: &RunConfig) -> Option<usize> {
    (cfg.run.threads > 0).then_some(cfg.run.threads)
}

fn generator_string() -> String {
    format!("treedpp {}", env!("CARGO_PKG_VERSION"))
}

fn artifact_header(cfg: &RunConfig) -> String {
    format!(
        "# {}\n# config: {}\n",
        generator_string(),
        serde_json::json!(cfg.content_echo())
    )
}

fn emit(path: Option<&Path>, text: &str) -> treedpp::Result<()> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> treedpp::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}
