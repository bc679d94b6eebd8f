mod config;

use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use fracdens::density::{lower_bound_check, varadhan_diagnostic};
use fracdens::distance::{comparison_sweep, distance_optimize, unit_directions, OptimizeOptions};
use fracdens::fbm::{sample_paths, CovarianceCheck};
use fracdens::report::{
    covariance_table, fmt_g17, lower_bound_table, paths_table, sweep_table, Cell, CsvTable, Plot,
    Series, Style,
};
use fracdens::verify::{run_suite, VerifyConfig};
use fracdens::{registry_build, TimeGrid, VectorFieldSet};

use config::{ConfigError, Flags, Settings};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "fracdens",
    version,
    about = "Small-time density experiments for SDEs driven by fractional Brownian motion"
)]
struct Cli {
    /// TOML config file; defaults to ./fracdens.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample fBm paths and check their covariance.
    FbmSim(Flags),
    /// Sweep the control distance against the Euclidean distance.
    Distance(Flags),
    /// Density lower bound p̂(t, x, x + t^H u) t^{NH} over a list of horizons.
    Density(Flags),
    /// Run the acceptance suite.
    Verify {
        #[command(flatten)]
        flags: Flags,
        /// Criterion ids to run, comma-separated (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
    },
}

enum Failure {
    Validation(String),
    Runtime(anyhow::Error),
    Verification,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.0)
    }
}

impl From<fracdens::Error> for Failure {
    fn from(e: fracdens::Error) -> Self {
        use fracdens::Error as E;
        match e {
            E::InvalidParameter { .. }
            | E::UnknownField(_)
            | E::NotElliptic(_)
            | E::Dimension(_)
            | E::Unsupported(_) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::FbmSim(f) => with_settings("fbm-sim", &cli, f, fbm_sim),
        Command::Distance(f) => with_settings("distance", &cli, f, distance),
        Command::Density(f) => with_settings("density", &cli, f, density),
        Command::Verify { flags, only } => {
            with_settings("verify", &cli, flags, |s| verify(s, only.clone()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Verification) => ExitCode::from(EXIT_VERIFY),
    }
}

fn with_settings(
    command: &'static str,
    cli: &Cli,
    flags: &Flags,
    run: impl FnOnce(&Settings) -> Outcome + Send,
) -> Outcome {
    let settings = Settings::load(command, cli.config.as_deref(), flags)?;
    match settings.opt_usize("threads")? {
        Some(0) => Err(ConfigError("`threads` must be at least 1".into()).into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building the worker pool")?;
            pool.install(|| run(&settings))
        }
        None => run(&settings),
    }
}

struct Common {
    hurst: fracdens::Hurst,
    grid: TimeGrid,
    seed: u64,
    out_dir: PathBuf,
}

fn common(s: &Settings, sde: bool) -> Result<Common, Failure> {
    let hurst = if sde {
        s.hurst(1.0 / 3.0, "1/3")?
    } else {
        s.hurst(0.0, "0")?
    };
    let n = s.usize("grid_n")?;
    let grid = TimeGrid::new(n).map_err(|e| ConfigError(format!("invalid `grid_n`: {e}")))?;
    let seed = s.u64("seed")?;
    let out_dir = s.path("out_dir")?;
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    Ok(Common {
        hurst,
        grid,
        seed,
        out_dir,
    })
}

struct Field {
    name: String,
    params: String,
    v: VectorFieldSet,
}

fn field(s: &Settings, dim: usize) -> Result<Field, Failure> {
    let name = s.string("field")?;
    let params = s.field_params()?;
    let v = registry_build(&name, &params, dim)?;
    let params = params
        .iter()
        .map(|(k, v)| format!("{k}={}", fmt_g17(*v)))
        .collect::<Vec<_>>()
        .join(";");
    Ok(Field { name, params, v })
}

fn write_csv(
    c: &Common,
    name: &str,
    mut table: CsvTable,
    meta: &[(&str, String)],
) -> Result<PathBuf, Failure> {
    let mut head = CsvTable::default();
    head.meta("H", fmt_g17(c.hurst.value()));
    head.meta("n", c.grid.n());
    head.meta("seed", c.seed);
    for (k, v) in meta {
        head.meta(k, v);
    }
    head.meta.append(&mut table.meta);
    table.meta = head.meta;
    let path = c.out_dir.join(name);
    table
        .write(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn write_svg(c: &Common, name: &str, plot: &Plot) -> Result<(), Failure> {
    let path = c.out_dir.join(name);
    plot.write(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn list_text(v: &[f64]) -> String {
    v.iter().map(|x| fmt_g17(*x)).collect::<Vec<_>>().join(";")
}

fn fbm_sim(s: &Settings) -> Outcome {
    let c = common(s, false)?;
    let count = s.usize("count")?;
    let dim = s.usize_or("dim", 1)?;
    let saved = s.usize_or("save_paths", 10)?.min(count);
    let paths = sample_paths(c.grid, c.hurst, dim, saved, c.seed, 0)?;
    let meta = [
        ("field", "none".to_string()),
        ("dim", dim.to_string()),
        ("count", saved.to_string()),
    ];
    write_csv(&c, "paths.csv", paths_table(&paths), &meta)?;
    let check = CovarianceCheck::run(c.grid, c.hurst, count, c.seed, 0)?;
    let meta = [
        ("field", "none".to_string()),
        ("count", count.to_string()),
        ("max_z", fmt_g17(check.max_z())),
        ("max_abs_error", fmt_g17(check.max_abs_error())),
    ];
    write_csv(&c, "cov_report.csv", covariance_table(&check), &meta)?;
    let series = paths
        .iter()
        .take(6)
        .enumerate()
        .map(|(i, p)| Series {
            name: format!("path {i}"),
            points: (0..p.grid().len())
                .map(|k| (p.grid().node(k), p.at(k)[0]))
                .collect(),
            style: Style::Line,
        })
        .collect();
    let plot = Plot {
        title: format!("fBm paths, H = {}", c.hurst.value()),
        x_label: "t".into(),
        y_label: "B_t (component 1)".into(),
        log_x: false,
        series,
    };
    write_svg(&c, "paths.svg", &plot)?;
    println!(
        "covariance check: max |emp - R| / se = {:.3} over {} entries",
        check.max_z(),
        check.rows.len()
    );
    Ok(())
}

fn distance(s: &Settings) -> Outcome {
    let c = common(s, true)?;
    let x = s.list("x")?;
    let f = field(s, x.len())?;
    let radii = s.list("radii")?;
    let dirs = unit_directions(x.len(), s.usize_or("directions", 4)?);
    let opts = OptimizeOptions::default();
    let sweep = comparison_sweep(&x, &radii, &dirs, &f.v, c.grid, c.hurst, &opts)?;
    let meta = [
        ("field", f.name.clone()),
        ("field_params", f.params.clone()),
        ("x", list_text(&x)),
        ("min_ratio", fmt_g17(sweep.min_ratio())),
        ("max_ratio", fmt_g17(sweep.max_ratio())),
        ("fitted_C", fmt_g17(sweep.fitted_constant())),
        ("max_residual", fmt_g17(sweep.max_residual())),
    ];
    write_csv(&c, "sweep.csv", sweep_table(&sweep), &meta)?;
    let series = (0..dirs.len())
        .map(|d| Series {
            name: format!("direction {d}"),
            points: sweep
                .cells
                .iter()
                .filter(|cell| cell.dir_index == d)
                .map(|cell| (cell.radius, cell.result.ratio))
                .collect(),
            style: Style::Points,
        })
        .collect();
    let plot = Plot {
        title: format!(
            "control distance / |x - y|, {} field, H = {}",
            f.name,
            c.hurst.value()
        ),
        x_label: "radius |x - y|".into(),
        y_label: "ratio".into(),
        log_x: true,
        series,
    };
    write_svg(&c, "sweep.svg", &plot)?;
    if let Some(y) = s.opt_list("y")? {
        let r = distance_optimize(&x, &y, &f.v, c.grid, c.hurst, &opts)?;
        let mut table = CsvTable::new(&[
            "r",
            "dir_index",
            "upper",
            "optimized",
            "residual",
            "ratio",
            "converged",
        ]);
        let radius = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        table.push(vec![
            radius.into(),
            Cell::Text(String::new()),
            r.upper_bound.into(),
            r.optimized.into(),
            r.endpoint_residual.into(),
            r.ratio.into(),
            r.converged.into(),
        ]);
        let meta = [
            ("field", f.name.clone()),
            ("field_params", f.params.clone()),
            ("x", list_text(&x)),
            ("y", list_text(&y)),
            ("iterations", r.iterations.to_string()),
        ];
        write_csv(&c, "pair.csv", table, &meta)?;
        println!(
            "d(x, y) <= {:.6} (connecting path {:.6})",
            r.optimized, r.upper_bound
        );
    }
    println!(
        "sweep ratios in [{:.4}, {:.4}], fitted C = {:.4}, max residual {:.1e}",
        sweep.min_ratio(),
        sweep.max_ratio(),
        sweep.fitted_constant(),
        sweep.max_residual()
    );
    Ok(())
}

fn density(s: &Settings) -> Outcome {
    let c = common(s, true)?;
    let x = s.list("x")?;
    let y = s.list("y")?;
    if y.len() != x.len() {
        return Err(ConfigError(format!(
            "`y` has {} components but `x` has {}",
            y.len(),
            x.len()
        ))
        .into());
    }
    let diff: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
    let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(ConfigError(
            "`y` must differ from `x`; the offset direction is (y - x)/|y - x|".into(),
        )
        .into());
    }
    let u: Vec<f64> = diff.iter().map(|d| d / norm).collect();
    let f = field(s, x.len())?;
    let t_list = s.list("t_list")?;
    let count = s.usize("count")?;
    let lb = lower_bound_check(&x, &u, &f.v, c.grid, c.hurst, &t_list, count, c.seed)?;
    let meta = [
        ("field", f.name.clone()),
        ("field_params", f.params.clone()),
        ("x", list_text(&x)),
        ("u", list_text(&u)),
        ("N", x.len().to_string()),
        ("count", count.to_string()),
        ("min_lower", fmt_g17(lb.min_lower())),
        ("last_over_first", fmt_g17(lb.last_over_first())),
    ];
    write_csv(&c, "density.csv", lower_bound_table(&lb), &meta)?;
    let plot = Plot {
        title: format!("p̂ t^(NH), {} field, H = {}", f.name, c.hurst.value()),
        x_label: "t".into(),
        y_label: "p̂ t^(NH)".into(),
        log_x: true,
        series: vec![
            Series {
                name: "estimate".into(),
                points: lb.rows.iter().map(|r| (r.t, r.scaled)).collect(),
                style: Style::Line,
            },
            Series {
                name: "estimate - 3 se".into(),
                points: lb
                    .rows
                    .iter()
                    .map(|r| (r.t, r.scaled - 3.0 * r.scaled_stderr))
                    .collect(),
                style: Style::Points,
            },
        ],
    };
    write_svg(&c, "density.svg", &plot)?;
    if s.bool_or("varadhan", false)? {
        let vt = varadhan_diagnostic(
            &x,
            &y,
            &f.v,
            c.grid,
            c.hurst,
            &t_list,
            count,
            c.seed,
            &OptimizeOptions::default(),
        )?;
        let mut table = CsvTable::new(&["t", "phat", "stderr", "t2H_log_phat"]);
        for r in &vt.rows {
            table.push(vec![
                r.t.into(),
                r.estimate.value.into(),
                r.estimate.mc_stderr.into(),
                r.scaled_log.map_or(Cell::Text(String::new()), Cell::Num),
            ]);
        }
        let meta = [
            ("field", f.name.clone()),
            ("field_params", f.params.clone()),
            ("x", list_text(&x)),
            ("y", list_text(&y)),
            ("count", count.to_string()),
            ("distance", fmt_g17(vt.distance.optimized)),
            ("target", fmt_g17(vt.target)),
        ];
        write_csv(&c, "varadhan.csv", table, &meta)?;
    }
    println!(
        "min(p̂ t^NH - 3 se) = {:.4e}, last/first = {:.3}: {}",
        lb.min_lower(),
        lb.last_over_first(),
        if lb.passed() {
            "bounded below"
        } else {
            "not certified"
        }
    );
    Ok(())
}

fn verify(s: &Settings, only: Option<Vec<u8>>) -> Outcome {
    let seed = s.u64("seed")?;
    let out_dir = s.path("out_dir")?;
    let mut cfg = VerifyConfig::new(&out_dir);
    cfg.seed = seed;
    cfg.only = only;
    let outcomes = run_suite(&cfg)?;
    println!(
        "{:<3} {:<4} {:<34} {:>8}  detail",
        "id", "", "criterion", "seconds"
    );
    for o in &outcomes {
        println!(
            "{:<3} {:<4} {:<34} {:>8.1}  {}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.title,
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!(
        "{} passed, {failed} failed; CSV evidence in {}",
        outcomes.len() - failed,
        display(&out_dir)
    );
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn display(p: &FsPath) -> String {
    p.display().to_string()
}
