use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sdg_gan_core::experiment::{
    apply_config_key, dataset_path, format_table, parse_config, run_table1, sweep_medians,
    sweep_width, table1_config, write_eval_scatter, write_metrics_csv, ModelKind,
};
use sdg_gan_core::nn;
use sdg_gan_core::synth::{self, SynthSpec};
use sdg_gan_core::train::{evaluate_model, train_gan};

#[derive(Parser)]
#[command(
    name = "sdg-gan",
    about = "Synthetic-data adversarial training study: generate datasets, train generators, evaluate JS divergence, sweep widths"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one of the synthetic datasets and write it as CSV.
    GenData {
        /// data1, data2 or data3
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample count (default 10000)
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Train one generator against a dataset file.
    Train {
        /// Dataset CSV produced by gen-data
        #[arg(long)]
        data: PathBuf,
        /// Model preset: nsgan-100, nsgan-200 or sdg-nsgan
        #[arg(long, default_value = "nsgan-100")]
        model: String,
        /// Plain-text config file of key=value lines
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Base name of the output files (defaults to <model>_seed<seed>)
        #[arg(long)]
        run_name: Option<String>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Evaluate trained generator parameters against a dataset.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Fit quantile-regression networks of growing width on the bimodal
    /// target and report JS per width.
    SweepWidth {
        #[arg(long, default_value = "4,16,64,256")]
        widths: String,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// The full 3x3 study: three datasets, three models, several seeds.
    ReproTable1 {
        #[arg(long, default_value_t = 5_000)]
        iters: usize,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Individual overrides for TrainConfig fields; same keys as the config
/// file.
#[derive(Args)]
struct ConfigOverrides {
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    discriminator: Option<String>,
    #[arg(long)]
    latent_dim: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    #[arg(long)]
    adam_eps: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    n_critic: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl ConfigOverrides {
    fn entries(&self) -> Vec<(&'static str, &String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    out.push((stringify!($field), v));
                }
            };
        }
        push!(loss);
        push!(generator);
        push!(discriminator);
        push!(latent_dim);
        push!(lr);
        push!(beta1);
        push!(beta2);
        push!(adam_eps);
        push!(batch);
        push!(max_iters);
        push!(eval_every);
        push!(n_critic);
        push!(seed);
        out
    }
}

fn parse_kind(kind: &str) -> Result<usize> {
    match kind {
        "data1" | "1" => Ok(1),
        "data2" | "2" => Ok(2),
        "data3" | "3" => Ok(3),
        _ => bail!("unknown dataset kind {kind:?}; expected data1, data2 or data3"),
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData {
            kind,
            seed,
            n,
            out_dir,
        } => {
            let which = parse_kind(&kind)?;
            let mut spec = SynthSpec::preset(which, seed);
            if let Some(n) = n {
                spec.n = n;
            }
            let dataset = synth::generate(spec)?;
            let path = dataset_path(&out_dir, which, seed);
            synth::write_dataset_file(&dataset, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Train {
            data,
            model,
            config,
            out_dir,
            run_name,
            overrides,
        } => {
            let dataset = synth::read_dataset_file(&data)
                .with_context(|| format!("reading dataset {}", data.display()))?;
            let model = ModelKind::parse(&model)
                .with_context(|| format!("unknown model {model:?}"))?;
            let mut cfg = table1_config(model, 5_000, 0);
            if let Some(path) = config {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                cfg = parse_config(&text, cfg)?;
            }
            for (key, value) in overrides.entries() {
                apply_config_key(&mut cfg, key, value)?;
            }
            let result = train_gan(&cfg, &dataset)?;
            let run = run_name.unwrap_or_else(|| format!("{model}_seed{}", cfg.seed));
            std::fs::create_dir_all(&out_dir)?;
            let metrics_path = out_dir.join(format!("metrics_{run}.csv"));
            write_metrics_csv(&result, &metrics_path)?;
            let params_path = out_dir.join(format!("params_{run}.bin"));
            let file = std::fs::File::create(&params_path)?;
            let mut buf = std::io::BufWriter::new(file);
            nn::write_params(&result.generator, &mut buf)?;
            println!(
                "run {run}: final telemetry js {:.4}; wrote {} and {}",
                result.final_js,
                metrics_path.display(),
                params_path.display()
            );
        }
        Command::Eval {
            params,
            data,
            n,
            seed,
            out_dir,
        } => {
            let dataset = synth::read_dataset_file(&data)
                .with_context(|| format!("reading dataset {}", data.display()))?;
            let file = std::fs::File::open(&params)
                .with_context(|| format!("opening params {}", params.display()))?;
            let generator = nn::read_params(
                std::io::BufReader::new(file),
                &params.display().to_string(),
            )?;
            let latent_dim = generator.spec()[0].in_dim;
            let eval = evaluate_model(&generator, latent_dim, &dataset, n, seed)?;
            let stem = params
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "eval".into());
            let scatter = out_dir.join(format!("scatter_{stem}.csv"));
            write_eval_scatter(&eval, &scatter)?;
            println!("js {:.6} over {n} samples; wrote {}", eval.js, scatter.display());
        }
        Command::SweepWidth {
            widths,
            seeds,
            steps,
            out_dir,
            threads,
        } => {
            let widths: Vec<usize> = widths
                .split(',')
                .map(|w| w.trim().parse().context("parsing --widths"))
                .collect::<Result<_>>()?;
            if widths.is_empty() {
                bail!("--widths must name at least one width");
            }
            let rows = sweep_width(
                &widths,
                seeds,
                steps,
                &out_dir,
                threads.unwrap_or_else(default_threads),
            )?;
            let medians = sweep_medians(&rows, &widths);
            for (w, m) in widths.iter().zip(&medians) {
                println!("width {w:>4}: median js {m:.4}");
            }
            println!("wrote {}", out_dir.join("width_sweep.csv").display());
        }
        Command::ReproTable1 {
            iters,
            seeds,
            out_dir,
            threads,
        } => {
            let table = run_table1(
                iters,
                seeds,
                &out_dir,
                threads.unwrap_or_else(default_threads),
            )?;
            print!("{}", format_table(&table));
            println!("wrote {}", out_dir.join("summary.csv").display());
        }
    }
    Ok(())
}
