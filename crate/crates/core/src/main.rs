use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use subscan::eval::{
    anomalous_nodes, detection_power, load_labels, save_labels, EvalConfig, EvalReport, Label,
    LabeledPool, PcaNodes,
};
use subscan::matrix::{
    load_activation_matrix, load_pvalue_matrix, save_matrix, write_atomic, PValueMatrix,
};
use subscan::pca::pca_project;
use subscan::pvalue::{compute_pvalues, uniformity_diagnostic};
use subscan::scan::{scan_group, scan_individual, ScanConfig, ScanResult};
use subscan::synth::{save_truth, synth_generate, SynthSpec};

/// Subset scanning for anomalous patterns in activation matrices
#[derive(Parser, Debug)]
#[command(version, about, term_width = 80)]
struct Cli {
    /// Summary format written to stderr
    #[arg(long, value_enum, global = true, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// empirical p-values of test activations against a background
    Pvalues(PvaluesArgs),
    /// find the most anomalous samples x nodes subset
    Scan(ScanArgs),
    /// detection power (AUC), subset cardinalities and PCA coordinates
    Eval(EvalArgs),
    /// synthetic background/test matrices with a planted anomaly
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct PvaluesArgs {
    #[arg(long)]
    background: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ScanFlags {
    #[arg(long, default_value_t = 0.5)]
    alpha_max: f64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 30)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ScanFlags {
    fn config(&self) -> ScanConfig {
        ScanConfig {
            alpha_max: self.alpha_max,
            restarts: self.restarts,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// p-value matrix; alternatively give --background and --test
    #[arg(long, conflicts_with_all = ["background", "test"])]
    pvalues: Option<PathBuf>,
    #[arg(long, requires = "test")]
    background: Option<PathBuf>,
    #[arg(long, requires = "background")]
    test: Option<PathBuf>,
    /// score each sample on its own instead of scanning the group
    #[arg(long)]
    individual: bool,
    #[command(flatten)]
    scan: ScanFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum PcaSource {
    Union,
    Best,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// labeled test activations
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    background: PathBuf,
    #[arg(long, default_value_t = 50)]
    group_size: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.1], value_parser = parse_fraction)]
    proportions: Vec<f64>,
    #[arg(long, default_value_t = 40)]
    trials: usize,
    /// label mixed into anomaly-bearing groups
    #[arg(long, default_value = "creative", value_parser = parse_label)]
    target: Label,
    /// node subset projected for the PCA table
    #[arg(long, value_enum, default_value_t = PcaSource::Union)]
    pca_nodes: PcaSource,
    #[command(flatten)]
    scan: ScanFlags,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 250)]
    z: usize,
    #[arg(long, default_value_t = 200)]
    m: usize,
    #[arg(long, default_value_t = 64)]
    j: usize,
    #[arg(long, default_value_t = 0.5, value_parser = parse_fraction)]
    sample_fraction: f64,
    #[arg(long, default_value_t = 0.25, value_parser = parse_fraction)]
    node_fraction: f64,
    #[arg(long, default_value_t = 2.0)]
    shift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// clamp activations at zero
    #[arg(long)]
    rectified: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_label(s: &str) -> std::result::Result<Label, String> {
    s.parse().map_err(|e: subscan::Error| e.to_string())
}

fn summary(format: Format, fields: &[(&str, serde_json::Value)]) {
    let line = match format {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = fields
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect();
            serde_json::Value::Object(map).to_string()
        }
        Format::Text => fields
            .iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join("  "),
    };
    eprintln!("{line}");
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    write_atomic(path, |out| writeln!(out, "{json}"))?;
    Ok(())
}

fn cmd_pvalues(args: &PvaluesArgs, format: Format) -> Result<()> {
    let background = load_activation_matrix(&args.background)
        .with_context(|| format!("loading {}", args.background.display()))?;
    let test = load_activation_matrix(&args.test)
        .with_context(|| format!("loading {}", args.test.display()))?;
    let pvalues = compute_pvalues(&background, &test)?;
    save_matrix(&pvalues, &args.out)?;
    summary(
        format,
        &[
            ("z", background.rows().into()),
            ("m", test.rows().into()),
            ("j", test.cols().into()),
            ("ks_uniform", uniformity_diagnostic(&pvalues).into()),
        ],
    );
    Ok(())
}

fn scan_input(args: &ScanArgs) -> Result<PValueMatrix> {
    match (&args.pvalues, &args.background, &args.test) {
        (Some(p), _, _) => {
            load_pvalue_matrix(p).with_context(|| format!("loading {}", p.display()))
        }
        (None, Some(b), Some(t)) => {
            let background =
                load_activation_matrix(b).with_context(|| format!("loading {}", b.display()))?;
            let test =
                load_activation_matrix(t).with_context(|| format!("loading {}", t.display()))?;
            Ok(compute_pvalues(&background, &test)?)
        }
        _ => bail!("give either --pvalues or both --background and --test"),
    }
}

fn result_summary(r: &ScanResult) -> Vec<(&'static str, serde_json::Value)> {
    vec![
        ("score", r.score.into()),
        ("alpha_star", r.alpha_star.into()),
        ("samples", r.subset.samples().len().into()),
        ("nodes", r.subset.nodes().len().into()),
    ]
}

fn cmd_scan(args: &ScanArgs, format: Format) -> Result<()> {
    let pvalues = scan_input(args)?;
    let config = args.scan.config();
    if args.individual {
        let results = scan_individual(&pvalues, &config)?;
        write_json(&args.out, &results)?;
        for r in &results {
            let mut fields = vec![("sample", r.subset.samples()[0].into())];
            fields.extend(result_summary(r));
            summary(format, &fields);
        }
    } else {
        let result = scan_group(&pvalues, &config)?;
        write_json(&args.out, &result)?;
        summary(format, &result_summary(&result));
    }
    Ok(())
}

fn write_cardinality(path: &Path, report: &EvalReport) -> Result<()> {
    write_atomic(path, |out| {
        writeln!(out, "proportion,condition,axis,size,count")?;
        for g in &report.groups {
            for (condition, dist) in [
                ("anomalous", &g.positive_cardinality),
                ("null", &g.null_cardinality),
            ] {
                for (axis, summary) in [("nodes", &dist.nodes), ("samples", &dist.samples)] {
                    for (size, count) in &summary.histogram {
                        writeln!(out, "{:?},{condition},{axis},{size},{count}", g.proportion)?;
                    }
                }
            }
        }
        Ok(())
    })?;
    Ok(())
}

fn write_pca(
    path: &Path,
    pool: &LabeledPool,
    report: &EvalReport,
    source: PcaNodes,
) -> Result<usize> {
    let nodes = anomalous_nodes(report, source);
    let rows: Vec<usize> = (0..pool.labels().len())
        .filter(|&i| pool.labels()[i] != Label::Inconclusive)
        .collect();
    let activations = pool.activations().select_rows(&rows)?;
    let components = nodes.len().min(2);
    let projection = pca_project(&activations, &nodes, components)?;
    write_atomic(path, |out| {
        let header: Vec<String> = (1..=components).map(|c| format!("pc{c}")).collect();
        writeln!(out, "sample_id,label,{}", header.join(","))?;
        for (r, &i) in rows.iter().enumerate() {
            write!(
                out,
                "{},{}",
                pool.activations().sample_label(i),
                pool.labels()[i]
            )?;
            for c in 0..components {
                write!(out, ",{:?}", projection.coordinates[(r, c)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    })?;
    Ok(nodes.len())
}

fn cmd_eval(args: &EvalArgs, format: Format) -> Result<()> {
    let activations = load_activation_matrix(&args.pool)
        .with_context(|| format!("loading {}", args.pool.display()))?;
    let labels =
        load_labels(&args.labels).with_context(|| format!("loading {}", args.labels.display()))?;
    let background = load_activation_matrix(&args.background)
        .with_context(|| format!("loading {}", args.background.display()))?;
    let pool = LabeledPool::new(activations, labels)?;
    let config = EvalConfig {
        group_size: args.group_size,
        proportions: args.proportions.clone(),
        trials_per_proportion: args.trials,
        seed: args.scan.seed,
        scan: args.scan.config(),
        target: args.target,
    };
    let report = detection_power(&pool, &background, &config)?;

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_json(&args.out_dir.join("report.json"), &report)?;
    write_cardinality(&args.out_dir.join("cardinality.csv"), &report)?;
    let source = match args.pca_nodes {
        PcaSource::Union => PcaNodes::Union,
        PcaSource::Best => PcaNodes::Best,
    };
    let pca_nodes = write_pca(&args.out_dir.join("pca.csv"), &pool, &report, source)?;

    let mut fields: Vec<(&str, serde_json::Value)> = Vec::new();
    let row = report.auc_row();
    for (column, auc) in &row {
        fields.push((column.as_str(), (*auc).into()));
    }
    fields.push(("pca_nodes", pca_nodes.into()));
    summary(format, &fields);
    Ok(())
}

fn cmd_synth(args: &SynthArgs, format: Format) -> Result<()> {
    let spec = SynthSpec {
        z: args.z,
        m: args.m,
        j: args.j,
        anomalous_sample_fraction: args.sample_fraction,
        anomalous_node_fraction: args.node_fraction,
        shift: args.shift,
        seed: args.seed,
        rectified: args.rectified,
    };
    let data = synth_generate(&spec)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    save_matrix(&data.background, args.out_dir.join("background.csv"))?;
    save_matrix(&data.test, args.out_dir.join("test.csv"))?;
    save_truth(data.truth.as_ref(), args.out_dir.join("truth.json"))?;
    save_labels(&data.pool, args.out_dir.join("labels.csv"))?;
    summary(
        format,
        &[
            ("planted_samples", spec.planted_samples().into()),
            ("planted_nodes", spec.planted_nodes().into()),
        ],
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Pvalues(args) => cmd_pvalues(args, cli.format),
        Command::Scan(args) => cmd_scan(args, cli.format),
        Command::Eval(args) => cmd_eval(args, cli.format),
        Command::Synth(args) => cmd_synth(args, cli.format),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
