use std::fs;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gard_bench::experiments::{run_named, NAMED};
use gard_bench::Options;
use gard_cli::config::SessionFile;
use gard_core::impedance::{build_spring_map, expand_map, ConvolutionKernel, ImpedanceParams};
use gard_core::map::{ImplicitCurveSpec, Region, RegionInequalitySpec};
use gard_core::metrics::{max_violation, mean_absolute_error};
use gard_core::session::{run_session, Session};
use gard_core::{pgm, Cell, GridGeometry, MotionRestrictionMap, Vec2};

#[derive(Parser)]
#[command(name = "gard", version, about = "Motion restriction control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate or edit motion restriction maps (binary PGM).
    #[command(subcommand)]
    Map(MapCmd),
    /// Spring force maps.
    #[command(subcommand)]
    Impedance(ImpedanceCmd),
    /// Run an experiment by name, or `all`.
    Bench {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Serve the live control loop.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a batch session and write its trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Trace CSV; summary only when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MapCmd {
    Gen(MapGen),
    /// Overwrite a cell rectangle of an existing map.
    Edit {
        map: PathBuf,
        /// Inclusive cell rectangle `x0,y0,x1,y1` (column, row; row 0 at the smallest y).
        #[arg(long, value_parser = parse_rect)]
        rect: [i64; 4],
        /// 0 (prohibited) or 255 (permitted).
        #[arg(long, value_parser = parse_value)]
        value: u8,
        /// Defaults to editing in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct Source {
    /// Trajectory `f(x, y)`; cells with `|f| < es` are permitted.
    #[arg(long, allow_hyphen_values = true)]
    implicit: Option<String>,
    /// Area component `f(x, y)`; repeat for several. Cells where all are negative are permitted.
    #[arg(long, allow_hyphen_values = true)]
    inequality: Vec<String>,
    /// Range-of-motion trace CSV with `x,y` or `px,py` columns (mm).
    #[arg(long)]
    rom: Option<PathBuf>,
}

/// Generate a map over the 650 x 550 mm workspace.
#[derive(Args)]
struct MapGen {
    #[command(flatten)]
    source: Source,
    /// Trajectory half-width E_s (mm) for `--implicit`.
    #[arg(long)]
    es: Option<f64>,
    /// mm per cell.
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long, default_value = "map.pgm")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ImpedanceCmd {
    /// Build the spring depth map for a restriction map.
    Build {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 6)]
        kernel_radius: u32,
        /// Impedance zone width L_max (mm); must equal 2 * kernel radius * resolution.
        #[arg(long)]
        lmax: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        resolution: f64,
        #[arg(long, default_value = "spring.bin")]
        out: PathBuf,
    },
}

fn parse_rect(s: &str) -> Result<[i64; 4], String> {
    let v: Vec<i64> = s
        .split(',')
        .map(|p| p.trim().parse::<i64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected x0,y0,x1,y1".to_string())
}

fn parse_value(s: &str) -> Result<u8, String> {
    match s {
        "0" => Ok(0),
        "255" => Ok(255),
        _ => Err(format!("value must be 0 or 255, got {s}")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Map(MapCmd::Gen(g)) => map_gen(g)?,
        Cmd::Map(MapCmd::Edit { map, rect, value, out }) => {
            let mut m = pgm::load_pgm(&map, 1.0)?;
            let n = m.edit_region(
                &Region::Rect {
                    a: Cell::new(rect[0], rect[1]),
                    b: Cell::new(rect[2], rect[3]),
                },
                value,
            );
            let out = out.unwrap_or(map);
            pgm::store_pgm(&m, &out)?;
            println!("wrote {n} cells to {}", out.display());
        }
        Cmd::Impedance(ImpedanceCmd::Build {
            map,
            kernel_radius,
            lmax,
            resolution,
            out,
        }) => impedance_build(&map, kernel_radius, lmax, resolution, &out)?,
        Cmd::Bench { name, out, seed } => return bench(&name, out, seed),
        Cmd::Serve { bind, config } => serve(&bind, &config)?,
        Cmd::Run { config, out } => batch(&config, out.as_deref())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn map_gen(g: MapGen) -> Result<()> {
    let geometry = GridGeometry::workspace(g.resolution)?;
    let map = if let Some(expr) = &g.source.implicit {
        let es = g.es.context("--implicit needs --es")?;
        MotionRestrictionMap::from_implicit(&ImplicitCurveSpec::from_expression(expr, es)?, geometry)?
    } else if let Some(path) = &g.source.rom {
        MotionRestrictionMap::rom_from_trace(&read_trace(path)?, geometry)?
    } else {
        MotionRestrictionMap::from_inequalities(&RegionInequalitySpec::from_expressions(&g.source.inequality)?, geometry)?
    };
    pgm::store_pgm(&map, &g.out)?;
    println!(
        "wrote {}x{} map ({} permitted cells) to {}",
        geometry.width(),
        geometry.height(),
        map.count_permitted(),
        g.out.display()
    );
    Ok(())
}

fn read_trace(path: &Path) -> Result<Vec<Vec2>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |names: [&str; 2]| headers.iter().position(|h| names.contains(&h.trim()));
    let (Some(ix), Some(iy)) = (col(["x", "px"]), col(["y", "py"])) else {
        bail!("{}: need x,y or px,py columns", path.display());
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let x: f64 = rec[ix].trim().parse().with_context(|| format!("bad x {:?}", &rec[ix]))?;
        let y: f64 = rec[iy].trim().parse().with_context(|| format!("bad y {:?}", &rec[iy]))?;
        out.push(Vec2::new(x, y));
    }
    Ok(out)
}

fn impedance_build(map: &Path, kernel_radius: u32, lmax: Option<f64>, resolution: f64, out: &Path) -> Result<()> {
    let m = pgm::load_pgm(map, resolution)?;
    let mut p = ImpedanceParams::for_resolution(ImpedanceParams::default().stiffness, 0.0, kernel_radius, resolution);
    if let Some(l) = lmax {
        p.zone_width = l;
    }
    p.validate(resolution)?;
    let kernel = ConvolutionKernel::disk(kernel_radius);
    let spring = build_spring_map(&expand_map(&m, &kernel)?, &kernel, &p)?;
    spring.save(out)?;
    let deepest = spring.depths().iter().cloned().fold(0.0, f64::max);
    println!("wrote spring map to {} (deepest {deepest:.3} mm)", out.display());
    Ok(())
}

fn bench(name: &str, out: Option<PathBuf>, seed: u64) -> Result<ExitCode> {
    let names: Vec<&str> = if name == "all" { NAMED.to_vec() } else { vec![name] };
    let opts = Options { seed, out: out.clone() };
    let mut ok = true;
    for n in names {
        for report in run_named(n, &opts)? {
            print!("{}", report.summary());
            if let Some(dir) = &out {
                for f in report.write(dir)? {
                    println!("  wrote {}", f.display());
                }
            }
            ok &= report.passed();
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn serve(bind: &str, config: &Path) -> Result<()> {
    let file = SessionFile::load(config)?;
    let map = file.map.load()?;
    let listener = TcpListener::bind(bind).with_context(|| format!("binding {bind}"))?;
    let handle = gard_service::serve(listener, file.service_config(), map)?;
    println!("listening on {}", handle.local_addr());
    std::io::stdout().flush()?;
    handle.wait();
    Ok(())
}

fn batch(config: &Path, out: Option<&Path>) -> Result<()> {
    let file = SessionFile::load(config)?;
    let map = file.map.load()?;
    let schedule = file.schedule(map.geometry())?;
    let mut session = Session::new(file.session_config(), map.clone())?;
    let mut user = file.user();
    let trace = run_session(&mut session, file.steps(), user.as_mut(), schedule)?;
    if let Some(path) = out {
        let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        trace.write_csv(&mut w)?;
        w.flush()?;
    }
    let positions = trace.positions();
    let active = session.active_map();
    println!(
        "{} steps in {} mode; MAE {:.4} mm, max outside {:.4} mm (against the final map)",
        trace.len(),
        session.mode(),
        mean_absolute_error(active, &positions),
        max_violation(active, &positions)
    );
    if let Some((step, fault)) = trace.fault {
        bail!("session ended at step {step}: {fault}");
    }
    Ok(())
}
