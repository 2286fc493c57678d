//! `cvqkd` command-line front end.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use cvqkd::channel::ChannelModel;
use cvqkd::encoding::{DecodeRule, Labeling};
use cvqkd::math::loss_db_to_transmittance;
use cvqkd::phase::{build_gamma, default_halfwidth, design_probes, roundtrip, Roundtrip};
use cvqkd::protocol::{run_session, stream_rng, SessionConfig, Stream};
use cvqkd::rates::{critical_symmetric_error, gaussian_mutual_info, slice_rates, threshold_for_model, ErrorModel};
use cvqkd::table::{compute_row, to_csv, EbSource, EpSource, TableOptions, PUBLISHED};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\n",
    "embedded constants:\n",
    "  published two-slice rate table: e_b, e_p and net rates per slice at 0.0, 0.4, 0.7, 1.0 and 1.4 dB loss,\n",
    "    transcribed as printed; the zero-loss e_p1 of 5.33% is replaced by 0.533% (the value consistent\n",
    "    with the printed slice-1 rate 0.752 and the quoted total 1.69)\n",
    "  modulation variance 31 vacuum units, four equiprobable intervals, S1 least significant\n",
    "  vacuum quadrature variance 1/2"
);

#[derive(Parser)]
#[command(name = "cvqkd", version, long_version = LONG_VERSION, about = "Coherent-state CV-QKD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Net key rates of the two-slice encoding as CSV.
    Table {
        /// Comma-separated loss values in dB; defaults to the published rows.
        #[arg(long)]
        loss_db: Option<String>,
        #[arg(long, default_value = "paper")]
        ep_source: EpSource,
        #[arg(long, default_value = "computed")]
        eb_source: EbSource,
        #[arg(long, default_value = "binary")]
        labeling: Labeling,
        #[arg(long, default_value = "remainder-map")]
        rule: DecodeRule,
        /// Keep the printed zero-loss slice-1 phase error rate.
        #[arg(long)]
        printed_ep1: bool,
    },
    /// Per-slice and total rates from error rates, plus the Gaussian mutual information.
    Rates {
        /// Comma-separated bit error rates, one per slice.
        #[arg(long, value_delimiter = ',', required = true)]
        eb: Vec<f64>,
        /// Comma-separated phase error rates, one per slice.
        #[arg(long, value_delimiter = ',', required = true)]
        ep: Vec<f64>,
        /// Signal-to-noise ratio for the mutual information.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Runs one session from a JSON config and prints the JSON report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the session seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Writes the public transcript as newline-delimited JSON.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Designs coherent probes for a Fock cutoff.
    ProbeDesign {
        #[arg(long)]
        cutoff: usize,
        #[arg(long, default_value_t = 0.09)]
        eps: f64,
        #[arg(long, default_value_t = 1e9)]
        cond_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimates the phase error of a displaced squeezed target through a
    /// lossy channel and compares it with the exact value.
    EstimateDemo {
        #[arg(long, default_value_t = 0.0)]
        loss_db: f64,
        /// Copies M of each probe.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        cutoff: usize,
        #[arg(long, default_value_t = 0.09)]
        eps: f64,
        #[arg(long, default_value_t = 3.0)]
        squeezing_db: f64,
        #[arg(long, default_value_t = 0.3)]
        center: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Squeezing threshold under an error model.
    Threshold {
        #[arg(long, default_value = "symmetric-erfc")]
        model: ErrorModel,
    },
}

fn parse_losses(s: Option<&str>) -> Result<Vec<f64>> {
    match s {
        None => Ok(PUBLISHED.iter().map(|r| r.loss_db).collect()),
        Some(t) if t.trim().is_empty() => Ok(Vec::new()),
        Some(t) => t
            .split(',')
            .map(|v| {
                let x: f64 = v.trim().parse().with_context(|| format!("bad loss value '{v}'"))?;
                if !(x >= 0.0) {
                    bail!("loss values must be nonnegative, got {x}");
                }
                Ok(x)
            })
            .collect(),
    }
}

fn run(cli: Cli, out: &mut impl Write) -> Result<i32> {
    match cli.command {
        Command::Table {
            loss_db,
            ep_source,
            eb_source,
            labeling,
            rule,
            printed_ep1,
        } => {
            let opts = TableOptions {
                eb_source,
                ep_source,
                labeling,
                rule,
                printed_ep1,
            };
            let rows = parse_losses(loss_db.as_deref())?
                .into_iter()
                .map(|db| compute_row(db, &opts))
                .collect::<cvqkd::Result<Vec<_>>>()?;
            write!(out, "{}", to_csv(&rows, eb_source)?)?;
        }
        Command::Rates { eb, ep, snr } => {
            let r = slice_rates(&eb, &ep)?;
            let mut v = serde_json::to_value(&r)?;
            if let Some(snr) = snr {
                v["mutual_information"] = serde_json::json!(gaussian_mutual_info(snr)?);
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        }
        Command::Simulate {
            config,
            seed,
            transcript,
        } => {
            let mut cfg = SessionConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let res = run_session(&cfg)?;
            if let Some(path) = transcript {
                std::fs::write(&path, res.transcript.to_ndjson())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            writeln!(out, "{}", res.report.to_json())?;
            return Ok(res.report.exit_code());
        }
        Command::ProbeDesign {
            cutoff,
            eps,
            cond_max,
            seed,
        } => {
            let p = design_probes(cutoff, eps, cond_max, &mut stream_rng(seed, Stream::ProbeDesign))?;
            let g = build_gamma(&p);
            let v = serde_json::json!({
                "cutoff": cutoff,
                "k": p.k(),
                "alphas": p.alphas.iter().map(|a| [a.re, a.im]).collect::<Vec<_>>(),
                "deficits": g.deficits,
                "max_deficit": p.max_deficit(),
                "condition_number": g.condition_number,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        }
        Command::EstimateDemo {
            loss_db,
            samples,
            cutoff,
            eps,
            squeezing_db,
            center,
            seed,
            json,
        } => {
            if !(loss_db >= 0.0) {
                bail!("loss must be nonnegative");
            }
            if samples == 0 {
                bail!("samples must be at least 1");
            }
            let setup = Roundtrip {
                cutoff,
                eps_max: eps,
                cond_max: 1e9,
                copies: samples,
                squeezing_db,
                center,
                halfwidth: default_halfwidth(),
            };
            let channel = ChannelModel::beam_splitter(loss_db_to_transmittance(loss_db));
            let r = roundtrip(&setup, &channel, &mut stream_rng(seed, Stream::ProbeDesign))?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&r)?)?;
            } else {
                writeln!(out, "estimate          {:.6}", r.estimate)?;
                writeln!(out, "oracle            {:.6}", r.oracle)?;
                writeln!(out, "|error|           {:.6}", r.error())?;
                writeln!(out, "band eps+2sqrt(eps) {:.6}", r.truncation_band)?;
                writeln!(out, "statistical sigma {:.6}", r.statistical_sigma)?;
                writeln!(out, "condition number  {:.4e}", r.condition_number)?;
                writeln!(out, "within band+3sigma {}", if r.within_band() { "yes" } else { "no" })?;
            }
        }
        Command::Threshold { model } => {
            let t = threshold_for_model(model)?;
            writeln!(out, "model             {}", model.name())?;
            writeln!(out, "critical e        {:.6}", critical_symmetric_error())?;
            writeln!(out, "sigma_tilde       {:.6}", t.sigma_tilde)?;
            writeln!(out, "e_b at threshold  {:.6}", t.error_rate_b)?;
            writeln!(out, "e_p at threshold  {:.6}", t.error_rate_p)?;
            writeln!(out, "squeezing dB      {:.4}", t.squeezing_db)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
