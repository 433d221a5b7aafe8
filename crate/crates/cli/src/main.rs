use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qdspin_core::experiments::{self, Config, ExperimentError, RunMeta, RunOptions, ScenarioOutput};

mod svg;

#[derive(Parser)]
#[command(name = "qdspin", version, about = "Hole-spin initialization scenarios for quantum dots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fidelity against fine-structure splitting.
    Fig3(Preset),
    /// Fidelity and timescales against DC field.
    Fig4(Preset),
    /// Splitting against CW intensity.
    Fig5b(Preset),
    /// Fidelity against CW intensity.
    Fig5c(Preset),
    /// Exciton spin beats and damped-sine fit.
    Beats(Preset),
    /// Two-color spectra and fidelity extraction.
    Spectrum(Preset),
    /// Fit a model to CSV data.
    Fit(Preset),
    /// Print the built-in config of a scenario.
    ShowConfig { scenario: String },
}

#[derive(Args)]
struct Preset {
    /// Config file; the built-in example is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-check closed-form points against the dynamics engine.
    #[arg(long)]
    verify: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

const BUILTIN: [(&str, &str); 7] = [
    ("fig3", include_str!("../configs/fig3.json")),
    ("fig4", include_str!("../configs/fig4.json")),
    ("fig5b", include_str!("../configs/fig5b.json")),
    ("fig5c", include_str!("../configs/fig5c.json")),
    ("beats", include_str!("../configs/beats.json")),
    ("spectrum", include_str!("../configs/spectrum.json")),
    ("fit", include_str!("../configs/fit.json")),
];

fn builtin(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn io_err(path: &Path, e: impl ToString) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

struct Job {
    text: String,
    stem: String,
    base_dir: PathBuf,
    expect: Option<&'static str>,
}

fn load(path: &Path, expect: Option<&'static str>) -> Result<Job, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(Job {
        text,
        stem: path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned()),
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        expect,
    })
}

fn job_for(name: &'static str, preset: &Preset) -> Result<Job, ExperimentError> {
    match &preset.config {
        Some(p) => load(p, Some(name)),
        None => Ok(Job {
            text: builtin(name).expect("every scenario has a built-in config").into(),
            stem: name.into(),
            base_dir: Path::new(env!("CARGO_MANIFEST_DIR")).join("configs"),
            expect: Some(name),
        }),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn emit(config: &Config, opts: &RunOptions, out: &ScenarioOutput, stem: &str, common: &Common) -> Result<Vec<PathBuf>, ExperimentError> {
    let dir = &common.out_dir;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut names = Vec::new();
    match common.format {
        Format::Csv => {
            for (i, t) in out.tables.iter().enumerate() {
                let name = if i == 0 {
                    format!("{stem}.csv")
                } else {
                    format!("{stem}.{}.csv", t.name)
                };
                write(&dir.join(&name), &t.to_csv_string())?;
                names.push(name);
            }
        }
        Format::Json => {
            let name = format!("{stem}.json");
            let body = serde_json::to_string_pretty(&out.tables).map_err(ExperimentError::numerical)?;
            write(&dir.join(&name), &(body + "\n"))?;
            names.push(name);
        }
    }
    let svg_name = format!("{stem}.svg");
    write(&dir.join(&svg_name), &svg::render(&out.plot))?;
    names.push(svg_name);
    let meta_name = format!("{stem}.meta.json");
    let mut all = names.clone();
    all.push(meta_name.clone());
    let meta = RunMeta::new(config, opts, out, all);
    let body = serde_json::to_string_pretty(&meta).map_err(ExperimentError::numerical)?;
    write(&dir.join(&meta_name), &(body + "\n"))?;
    names.push(meta_name);
    Ok(names.into_iter().map(|n| dir.join(n)).collect())
}

fn execute(job: Job, common: &Common) -> Result<Vec<PathBuf>, ExperimentError> {
    let config = experiments::parse_config(&job.text)?;
    if let Some(expect) = job.expect {
        if config.scenario.name() != expect {
            return Err(ExperimentError::config(
                "/scenario",
                format!("expected `{expect}`, the config describes `{}`", config.scenario.name()),
            ));
        }
    }
    let opts = RunOptions {
        seed: common.seed,
        verify: common.verify,
        base_dir: job.base_dir,
    };
    let out = experiments::run(&config, &opts)?;
    emit(&config, &opts, &out, &job.stem, common)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ShowConfig { scenario } => match builtin(scenario) {
            Some(text) => {
                print!("{text}");
                return ExitCode::SUCCESS;
            }
            None => Err(ExperimentError::config(
                "/scenario",
                format!("unknown scenario `{scenario}` (expected one of {})", experiments::SCENARIOS.join(", ")),
            )),
        },
        Command::Run { config, common } => load(config, None).and_then(|job| execute(job, common)),
        Command::Fig3(p) => job_for("fig3", p).and_then(|j| execute(j, &p.common)),
        Command::Fig4(p) => job_for("fig4", p).and_then(|j| execute(j, &p.common)),
        Command::Fig5b(p) => job_for("fig5b", p).and_then(|j| execute(j, &p.common)),
        Command::Fig5c(p) => job_for("fig5c", p).and_then(|j| execute(j, &p.common)),
        Command::Beats(p) => job_for("beats", p).and_then(|j| execute(j, &p.common)),
        Command::Spectrum(p) => job_for("spectrum", p).and_then(|j| execute(j, &p.common)),
        Command::Fit(p) => job_for("fit", p).and_then(|j| execute(j, &p.common)),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_configs_parse() {
        for (name, text) in BUILTIN {
            let c = experiments::parse_config(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(c.scenario.name(), name);
        }
    }
}
