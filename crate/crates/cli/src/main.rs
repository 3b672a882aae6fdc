use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wtgfm::control::Mode;
use wtgfm::curtailment::{build_table, default_eta_grid, default_v_grid};
use wtgfm::gaindesign::{droop_map, DesignSpec, Designer};
use wtgfm::harness::{
    compare_modes, emit_comparison, emit_run, report_run, run_scenario, smallsignal_report, Config,
};
use wtgfm::{svg, Error};

const EXIT_ASSERTION: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "wtgfm", version, about = "Dual-port grid-forming wind turbine simulator and analysis tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario JSON file (defaults are used for missing keys)
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a setting, e.g. `--set scenario.v_w=10`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> wtgfm::Result<Config> {
        Config::load(self.config.as_deref(), &self.set)
    }
}

#[derive(Args)]
struct GridArgs {
    /// Wind speeds (m/s), comma separated
    #[arg(long, value_delimiter = ',')]
    v_grid: Option<Vec<f64>>,
    /// Deloading factors, comma separated
    #[arg(long, value_delimiter = ',')]
    eta_grid: Option<Vec<f64>>,
}

impl GridArgs {
    fn grids(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.v_grid.clone().unwrap_or_else(default_v_grid),
            self.eta_grid.clone().unwrap_or_else(default_eta_grid),
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write the trace and metrics
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Also write an SVG plot
        #[arg(long)]
        plot: bool,
        /// Do not fail on steady-state check violations
        #[arg(long)]
        no_check: bool,
    },
    /// Run GFL_MPPT, GFM_MPPT and GFM_FR on the same events
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        no_check: bool,
    },
    /// Tabulate deloaded operating points
    DeloadTable {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short, long, default_value = "deload_table.csv")]
        out: PathBuf,
    },
    /// Design gains at the scenario wind speed and deloading factor
    GainDesign {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Excursion-limit preset (table3 or fig7) replacing control.design
        #[arg(long)]
        preset: Option<String>,
        /// Write JSON here instead of stdout
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Designed droop over a wind speed and deloading grid
    DroopMap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        preset: Option<String>,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        plot: bool,
    },
    /// Linear model, spectrum and LaSalle check at the scenario operating point
    Smallsignal {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// GFM_MPPT or GFM_FR; defaults to the scenario mode
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Assertion(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn design_spec(cfg: &Config, preset: Option<&str>) -> wtgfm::Result<DesignSpec> {
    match preset {
        Some(p) => DesignSpec::preset(p),
        None => Ok(cfg.control.design),
    }
}

fn write_json(out: Option<&Path>, v: &serde_json::Value) -> wtgfm::Result<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        eprintln!("wrote {}", f.display());
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate { cfg, out, plot, no_check } => {
            let config = cfg.load()?;
            let run = run_scenario(&config)?;
            let report = report_run(&config, &run)?;
            report_files(&emit_run(&out, &run, &report, plot)?.files);
            let m = &report.metrics;
            println!(
                "{} at {} m/s: nadir {:.4} Hz at {:.3} s, RoCoF {:.3} Hz/s, steady state {:.4} Hz",
                report.mode.name(),
                report.v_w,
                m.nadir_hz,
                m.t_nadir,
                m.rocof_max,
                m.steady_state_hz
            );
            for c in &report.checks {
                println!("  {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            if !no_check && !report.passed() {
                return Err(Failure::Assertion("steady-state checks failed".into()));
            }
        }
        Command::Compare { cfg, out, plot, no_check } => {
            let config = cfg.load()?;
            let (cmp, runs) = compare_modes(&config)?;
            report_files(&emit_comparison(&out, &cmp, &runs, plot)?.files);
            println!("{:<10} {:>10} {:>10} {:>10}", "mode", "nadir Hz", "ss Hz", "RoCoF");
            for r in &cmp.runs {
                println!(
                    "{:<10} {:>10.4} {:>10.4} {:>10.3}",
                    r.mode.name(),
                    r.metrics.nadir_hz,
                    r.metrics.steady_state_hz,
                    r.metrics.rocof_max
                );
            }
            for c in &cmp.checks {
                println!("  {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            if !no_check && !cmp.passed() {
                return Err(Failure::Assertion("mode comparison checks failed".into()));
            }
        }
        Command::DeloadTable { cfg, grid, out } => {
            let config = cfg.load()?;
            let (v, e) = grid.grids();
            let table = build_table(&config.turbine, &config.surface(), &v, &e)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(Error::from)?;
            }
            table.write_csv_path(&out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::GainDesign { cfg, preset, out } => {
            let config = cfg.load()?;
            let spec = design_spec(&config, preset.as_deref())?;
            let mut designer = Designer::new(&config.turbine, &config.surface(), &spec)?;
            designer.k_d_gsc = config.control.gsc.k_d;
            let d = designer.design(config.scenario.v_w, config.scenario.eta)?;
            write_json(out.as_deref(), &serde_json::to_value(d).map_err(Error::from)?)?;
        }
        Command::DroopMap { cfg, grid, preset, out, plot } => {
            let config = cfg.load()?;
            let spec = design_spec(&config, preset.as_deref())?;
            let (v, e) = grid.grids();
            let map = droop_map(&config.turbine, &config.surface(), &v, &e, &spec)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let csv = out.join("droop_map.csv");
            map.write_csv_path(&csv)?;
            eprintln!("wrote {}", csv.display());
            if plot {
                let svg = svg::heatmap("Designed droop m_p (pu)", "v_w (m/s)", "eta", &map.v_grid, &map.eta_grid, |i, j| {
                    map.cell(i, j).m_p
                });
                let path = out.join("droop_map.svg");
                std::fs::write(&path, svg).map_err(Error::from)?;
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Smallsignal { cfg, mode, out } => {
            let config = cfg.load()?;
            let report = smallsignal_report(&config, mode.unwrap_or(config.scenario.mode))?;
            write_json(out.as_deref(), &report.to_json()?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ASSERTION)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParam(_) | Error::Json(_) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
