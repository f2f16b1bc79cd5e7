use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ldp_audit::adversary::{worst_case_success_prob, CrafterKind};
use ldp_audit::audit::{run_measurement, AuditConfig, Mode};
use ldp_audit::data::{generate_blobs, SyntheticSpec};
use ldp_audit_cli::parse_config;

#[derive(Parser)]
#[command(name = "audit", version, about = "Empirical privacy audits of LDP-SGD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every audit of a TOML experiment plan.
    Run {
        config: PathBuf,
        /// Overrides `master_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for trials (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare the worst-case attack with its analytic success probability.
    Oracle {
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            threads,
        } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .context("configuring the thread pool")?;
            }
            let mut plan = parse_config(&config).with_context(|| format!("reading {}", config.display()))?;
            if let Some(seed) = seed {
                plan = plan.with_seed(seed);
            }
            if let Some(out) = out {
                plan.output_dir = out;
            }
            let total = plan.entries.len();
            let start = Instant::now();
            let (_, written) = ldp_audit_cli::run_plan(&plan, |i, id, r| {
                eprintln!(
                    "[{}/{total}] {id}: eps_empirical {:.4} ± {:.4} ({:.0?})",
                    i + 1,
                    r.eps_mean,
                    r.eps_std,
                    start.elapsed()
                );
            })?;
            for path in written {
                println!("{}", path.display());
            }
        }
        Command::Oracle { epsilon, trials, seed } => {
            let data = SyntheticSpec {
                num_classes: 2,
                input_dim: 2,
                examples_per_class: 2,
                ..SyntheticSpec::default()
            };
            let ds = generate_blobs(&data)?;
            let mut c = AuditConfig::new(CrafterKind::DummyGradient, Mode::WhiteBox, epsilon, 2, 2)?;
            c.trials = trials;
            c.master_seed = seed;
            let r = run_measurement(&c, &ds, 0)?;
            let n = (r.trials_g1 + r.trials_g2) as f64;
            let accuracy = 1.0 - (r.fp_count + r.fn_count) as f64 / n;
            let p = worst_case_success_prob(epsilon);
            println!("epsilon            {epsilon}");
            println!("analytic accuracy  {p:.6}");
            println!("measured accuracy  {accuracy:.6}  ({} trials)", trials);
            println!("binomial sigma     {:.6}", (p * (1.0 - p) / n).sqrt());
            println!(
                "eps_empirical      {:.6}{}",
                r.eps_empirical,
                if r.clamped { " (clamped)" } else { "" }
            );
        }
    }
    Ok(())
}
