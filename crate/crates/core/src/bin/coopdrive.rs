use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use coopdrive::harness::{
    emit_plots, evaluate, generate_scenario, run_batch, Config, RunRecord, Scenario, Template,
};
use coopdrive::{Error, Result};

#[derive(Parser)]
#[command(name = "coopdrive", version, about = "Cooperative BEV perception to accident prediction on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(clap::Args)]
struct Common {
    /// TOML config; omitted keys take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// overrides `accident.threshold`, meters
    #[arg(long)]
    threshold: Option<f64>,
    /// overrides `run.v2x`
    #[arg(long, value_enum)]
    v2x: Option<Switch>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(t) = self.threshold {
            cfg.accident.threshold = t;
        }
        if let Some(v) = self.v2x {
            cfg.run.v2x = matches!(v, Switch::On);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Verb {
    /// Write a scenario file
    Generate {
        #[arg(long, default_value = "crossing")]
        template: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// scenario file to write; stdout if omitted
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the pipeline and write run records
    Run {
        /// scenario file; generated from --template/--seed if omitted
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "crossing")]
        template: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// run seeds seed..seed+count, one record directory each
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// worker threads for batches, 0 for all cores
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score run records and print the report
    Eval {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// also write the report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-frame SVG plots of a run record
    Plot {
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle and gradient suites
    Selftest,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn execute(verb: Verb) -> Result<bool> {
    match verb {
        Verb::Generate {
            template,
            seed,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let s = generate_scenario(seed, template.parse()?, &cfg)?;
            match out {
                Some(p) => write_text(&p, &s.to_toml())?,
                None => print!("{}", s.to_toml()),
            }
        }
        Verb::Run {
            scenario,
            template,
            seed,
            count,
            threads,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let scenarios: Vec<Scenario> = match scenario {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                    vec![Scenario::parse(&text)?]
                }
                None => {
                    let t: Template = template.parse()?;
                    (seed..seed + count.max(1))
                        .map(|s| generate_scenario(s, t, &cfg))
                        .collect::<Result<_>>()?
                }
            };
            let records = run_batch(&scenarios, &cfg, threads)?;
            let single = records.len() == 1;
            for r in &records {
                let dir = if single {
                    out.clone()
                } else {
                    out.join(format!("{}_{}", r.template, r.seed))
                };
                r.write(&dir)?;
                println!(
                    "{}: {} frames, {} predicted / {} ground-truth events",
                    dir.display(),
                    r.frames.len(),
                    r.events_pred.len(),
                    r.events_gt.len()
                );
            }
        }
        Verb::Eval { records, out } => {
            let loaded = records.iter().map(|p| RunRecord::read(p)).collect::<Result<Vec<_>>>()?;
            let report = evaluate(&loaded)?.to_string();
            print!("{report}");
            if let Some(p) = out {
                write_text(&p, &report)?;
            }
        }
        Verb::Plot { record, out } => {
            let r = RunRecord::read(&record)?;
            let paths = emit_plots(&r, &out)?;
            println!("wrote {} files to {}", paths.len(), out.display());
        }
        Verb::Selftest => {
            let (reports, elapsed) = coopdrive::verify::run_selftest_timed()?;
            for r in &reports {
                println!("{r}");
            }
            println!("selftest finished in {:.1}s", elapsed.as_secs_f64());
            return Ok(reports.iter().all(|r| r.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.verb) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
