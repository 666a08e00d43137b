use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use recondet_core::harness::mini::{generate_mini_dataset, MiniSpec};
use recondet_core::harness::{
    comment_line, confidence_correlations, correlation_matrix, evaluate_testset, group_analysis, read_box_observations_csv,
    read_e3_csv, read_partition_csv, read_slice_metrics_csv, read_table2_csv, scenario_correlations, sha256_hex,
    table_e3_experiment, write_box_observations_csv, write_e3_csv, write_partition_csv, write_slice_metrics_csv,
    write_table2_csv, DetectionColumns, EvalConfig, ScenarioCorrelation,
};
use recondet_core::kspace::phantom::{phantom_kspace, shepp_logan};
use recondet_core::kspace::{load_kspace, load_mask, poisson_mask, save_kspace, save_mask, zero_fill_recon, PoissonParams};
use recondet_core::manifest::DatasetManifest;
use recondet_core::metrics::SsimParams;
use recondet_core::perturb::build_suite;
use recondet_core::stats::{
    chi2_contingency, cohens_kappa, one_way_anova, spearman, t_test_two_sample, ContingencyTable, Variance,
};
use recondet_core::{load_volume, save_volume, ImageVolume};
use recondet_reader::{StudyConfig, StudyService, SystemClock};
use serde_json::json;

mod columns;
use columns::Columns;

#[derive(Parser)]
#[command(name = "recondet", version, about = "MR reconstruction quality and detection evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Variable-density Poisson-disc mask over ky-kz.
    MaskGen {
        #[arg(long)]
        ky: usize,
        #[arg(long)]
        kz: usize,
        #[arg(long)]
        accel: f64,
        #[arg(long, default_value_t = 0.05)]
        center_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero-filled RSS reconstruction of masked multicoil k-space.
    ZeroFill {
        #[arg(long)]
        kspace: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "")]
        patient: String,
    },
    /// Synthetic multicoil Shepp-Logan k-space.
    Phantom {
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 64)]
        ny: usize,
        #[arg(long, default_value_t = 16)]
        nz: usize,
        #[arg(long, default_value_t = 4)]
        coils: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the magnitude phantom as a volume.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Noise and Const variants of a volume plus their metrics.
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1.0,1.5,2.0")]
        magnitudes: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        peak: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Evaluate manifest rows into a Table 2 shaped CSV.
    Eval(EvalArgs),
    /// Spearman matrix over Table 2 rows.
    Corr {
        #[arg(long)]
        rows: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// TP / FP / FN slice group comparison.
    Groups {
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        /// Box observations for confidence correlations.
        #[arg(long)]
        boxes: Option<PathBuf>,
        #[arg(long, default_value = "model")]
        model: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturbation experiment over a directory of reference volumes.
    E3 {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1.0,1.5,2.0")]
        mags: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        peak: f64,
        /// E3-layout CSV whose detection columns are attached by label.
        #[arg(long)]
        detection: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        corr_out: Option<PathBuf>,
    },
    /// Per-scenario correlations from an existing E3-layout CSV.
    E3Corr {
        #[arg(long)]
        rows: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reader study HTTP service.
    Serve {
        #[arg(long)]
        study: PathBuf,
        /// Response log directory; defaults to `responses/` next to the study file.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Small synthetic dataset with a manifest, for trying the pipeline.
    MiniDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        patients: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        slices: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Reconstruction to evaluate; repeatable.
    #[arg(long)]
    model: Vec<String>,
    /// Every model in the manifest plus the fully sampled row.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    fully_sampled: bool,
    /// PSNR peak; defaults to each reference maximum.
    #[arg(long)]
    peak: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Writes `<model>.partition.csv`, `<model>.slices.csv` and `<model>.boxes.csv` here.
    #[arg(long)]
    detail_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum StatsCommand {
    Corr {
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        csv: PathBuf,
    },
    Kappa {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Rows of the CSV, after its header, are the contingency table rows.
    Chi2 {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        no_yates: bool,
    },
    /// Each listed column is one group.
    Anova {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
    },
    Ttest {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        welch: bool,
    },
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).with_context(|| format!("reading {}", path.display()))?))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn file_label(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn volume_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "f32raw"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .f32raw volumes in {}", dir.display());
    }
    Ok(paths)
}

fn correlations_csv(cors: &[ScenarioCorrelation]) -> String {
    let mut out = String::from("scenario,recon_metric,detection_metric,r,p_value,n,note\n");
    for c in cors {
        let scenario = c.mode.label_prefix();
        match &c.result {
            Ok(r) => out.push_str(&format!(
                "{scenario},{},{},{:?},{:?},{},\n",
                c.recon_metric, c.detection_metric, r.r, r.p_value, r.n
            )),
            Err(e) => out.push_str(&format!("{scenario},{},{},,,,{e}\n", c.recon_metric, c.detection_metric)),
        }
    }
    out
}

fn eval(a: EvalArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let mut models: Vec<Option<String>> = a.model.iter().cloned().map(Some).collect();
    if a.all {
        models = manifest.models().into_iter().map(Some).collect();
    }
    if a.all || a.fully_sampled {
        models.push(None);
    }
    if models.is_empty() {
        bail!("nothing to evaluate: pass --model, --fully-sampled or --all");
    }
    let cfg = EvalConfig {
        peak: a.peak,
        ..EvalConfig::default()
    };
    let mut reports = Vec::new();
    for m in &models {
        log::info!("evaluating {}", m.as_deref().unwrap_or("fully sampled"));
        reports.push(evaluate_testset(&manifest, m.as_deref(), &cfg)?);
    }
    if let Some(dir) = &a.detail_dir {
        fs::create_dir_all(dir)?;
        for r in &reports {
            let head = comment_line(&[(r.model_name.as_str(), r.provenance.as_str())]);
            let name = &r.model_name;
            fs::write(dir.join(format!("{name}.partition.csv")), head.clone() + &write_partition_csv(&r.partition)?)?;
            fs::write(dir.join(format!("{name}.slices.csv")), head.clone() + &write_slice_metrics_csv(&r.slice_triples())?)?;
            fs::write(dir.join(format!("{name}.boxes.csv")), head + &write_box_observations_csv(&r.box_observations)?)?;
        }
    }
    emit(a.out.as_deref(), &write_table2_csv(&reports)?)
}

fn groups(partition: &Path, metrics: &Path, boxes: Option<&Path>, model: &str, out: Option<&Path>) -> Result<()> {
    let part = read_partition_csv(&fs::read_to_string(partition)?)?;
    let slices = read_slice_metrics_csv(&fs::read_to_string(metrics)?)?;
    let mut inputs = vec![
        (file_label(partition), hash_file(partition)?),
        (file_label(metrics), hash_file(metrics)?),
    ];
    let mut text = String::from("kind,metric,group,other,n,mean,std,statistic,df,p_value,significant,note\n");
    for g in group_analysis(&part, &slices) {
        let m = g.metric;
        for s in &g.groups {
            text.push_str(&format!("group,{m},{},,{},{:?},{:?},,,,,\n", s.outcome, s.n, s.mean, s.std));
        }
        for (o, why) in &g.excluded {
            text.push_str(&format!("excluded,{m},{o},,,,,,,,,{why}\n"));
        }
        match &g.anova {
            Ok(a) => text.push_str(&format!(
                "anova,{m},,,,,,{:?},{}/{},{:?},{},\n",
                a.f,
                a.df_between,
                a.df_within,
                a.p_value,
                a.p_value < recondet_core::harness::ALPHA
            )),
            Err(e) => text.push_str(&format!("anova,{m},,,,,,,,,,{e}\n")),
        }
        for p in &g.pairwise {
            match p {
                Ok(t) => text.push_str(&format!(
                    "t_test,{m},{},{},,,,{:?},{:?},{:?},{},\n",
                    t.a, t.b, t.test.t, t.test.df, t.test.p_value, t.significant
                )),
                Err((a, b, e)) => text.push_str(&format!("t_test,{m},{a},{b},,,,,,,,{e}\n")),
            }
        }
    }
    if let Some(b) = boxes {
        let obs = read_box_observations_csv(&fs::read_to_string(b)?)?;
        inputs.push((file_label(b), hash_file(b)?));
        for c in confidence_correlations(model, &obs) {
            match &c.result {
                Ok(r) => text.push_str(&format!(
                    "confidence,{},{},{},{},,,{:?},,{:?},{},\n",
                    c.metric,
                    c.outcome,
                    c.model,
                    r.n,
                    r.r,
                    r.p_value,
                    r.p_value < recondet_core::harness::ALPHA
                )),
                Err(e) => text.push_str(&format!("confidence,{},{},{},,,,,,,,{e}\n", c.metric, c.outcome, c.model)),
            }
        }
    }
    let refs: Vec<(&str, &str)> = inputs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    emit(out, &(comment_line(&refs) + &text))
}

#[allow(clippy::too_many_arguments)]
fn e3(
    reference: &Path,
    mags: &[f64],
    seed: u64,
    peak: f64,
    detection: Option<&Path>,
    out: Option<&Path>,
    corr_out: Option<&Path>,
) -> Result<()> {
    let paths = volume_paths(reference)?;
    let mut inputs = Vec::new();
    let mut vols = Vec::new();
    for p in &paths {
        vols.push(load_volume(p)?);
        inputs.push((file_label(p), hash_file(p)?));
    }
    let det = match detection {
        Some(d) => {
            inputs.push((file_label(d), hash_file(d)?));
            let rows = read_e3_csv(&fs::read_to_string(d)?)?;
            let map: BTreeMap<String, DetectionColumns> =
                rows.into_iter().filter_map(|r| r.detection.map(|c| (r.label, c))).collect();
            Some(map)
        }
        None => None,
    };
    let report = table_e3_experiment(&vols, mags, seed, peak, &SsimParams::default(), det.as_ref())?;
    let refs: Vec<(&str, &str)> = inputs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let head = comment_line(&refs);
    emit(out, &(head.clone() + &write_e3_csv(&report.rows)?))?;
    if det.is_some() {
        let text = head + &correlations_csv(&report.correlations);
        match corr_out {
            Some(p) => emit(Some(p), &text)?,
            None => eprint!("{text}"),
        }
    }
    Ok(())
}

fn perturb_cmd(input: &Path, mags: &[f64], seed: u64, peak: f64, out_dir: &Path) -> Result<()> {
    let v = load_volume(input)?;
    fs::create_dir_all(out_dir)?;
    for (label, vol) in build_suite(&v, mags, seed)? {
        let name: String = label
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c.to_ascii_lowercase() } else { '_' })
            .collect();
        save_volume(&vol, &out_dir.join(format!("{name}.f32raw")))?;
    }
    let report = table_e3_experiment(std::slice::from_ref(&v), mags, seed, peak, &SsimParams::default(), None)?;
    let hash = hash_file(&input.with_extension("f32raw")).or_else(|_| hash_file(input))?;
    let text = comment_line(&[(&file_label(input), &hash)]) + &write_e3_csv(&report.rows)?;
    emit(Some(&out_dir.join("metrics.csv")), &text)
}

fn stats(cmd: StatsCommand) -> Result<()> {
    let value = match cmd {
        StatsCommand::Corr { x, y, csv } => {
            let (a, b) = Columns::read(&csv)?.paired(&x, &y)?;
            let r = spearman(&a, &b)?;
            json!({ "r": r.r, "p_value": r.p_value, "n": r.n })
        }
        StatsCommand::Kappa { a, b, csv } => {
            let cols = Columns::read(&csv)?;
            let (xa, xb) = (cols.text(&a)?, cols.text(&b)?);
            json!({ "kappa": cohens_kappa(xa, xb)?, "n": xa.len() })
        }
        StatsCommand::Chi2 { csv, no_yates } => {
            let table = ContingencyTable::new(Columns::read(&csv)?.count_rows()?)?;
            let r = chi2_contingency(&table, !no_yates)?;
            json!({ "chi2": r.chi2, "p_value": r.p_value, "dof": r.dof, "yates_applied": r.yates_applied, "expected": r.expected })
        }
        StatsCommand::Anova { csv, columns } => {
            let cols = Columns::read(&csv)?;
            let names = if columns.is_empty() { cols.names.clone() } else { columns };
            let groups: Vec<Vec<f64>> = names.iter().map(|n| cols.numbers(n)).collect::<Result<_>>()?;
            let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
            let r = one_way_anova(&refs)?;
            json!({ "f": r.f, "p_value": r.p_value, "df_between": r.df_between, "df_within": r.df_within })
        }
        StatsCommand::Ttest { a, b, csv, welch } => {
            let cols = Columns::read(&csv)?;
            let var = if welch { Variance::Welch } else { Variance::Pooled };
            let r = t_test_two_sample(&cols.numbers(&a)?, &cols.numbers(&b)?, var)?;
            json!({ "t": r.t, "p_value": r.p_value, "df": r.df })
        }
    };
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MaskGen {
            ky,
            kz,
            accel,
            center_frac,
            seed,
            out,
        } => {
            let mask = poisson_mask(ky, kz, PoissonParams::new(accel, center_frac, seed))?;
            save_mask(&mask, &out)?;
            eprintln!("kept fraction {:.4}", mask.kept_fraction());
        }
        Command::ZeroFill {
            kspace,
            mask,
            out,
            patient,
        } => {
            let k = load_kspace(&kspace)?;
            let m = load_mask(&mask)?;
            let mut v = zero_fill_recon(&k, &m)?;
            v.patient_id = patient;
            save_volume(&v, &out)?;
        }
        Command::Phantom {
            nx,
            ny,
            nz,
            coils,
            out,
            reference,
        } => {
            save_kspace(&phantom_kspace(coils, nx, ny, nz), &out)?;
            if let Some(r) = reference {
                let img = shepp_logan(nx, ny, nz);
                let v = ImageVolume::new(img, "phantom", "reference")?;
                save_volume(&v, &r)?;
            }
        }
        Command::Perturb {
            input,
            magnitudes,
            seed,
            peak,
            out_dir,
        } => perturb_cmd(&input, &magnitudes, seed, peak, &out_dir)?,
        Command::Stats(cmd) => stats(cmd)?,
        Command::Eval(a) => eval(a)?,
        Command::Corr { rows, out } => {
            let table = read_table2_csv(&fs::read_to_string(&rows)?)?;
            let m = correlation_matrix(&table)?;
            let head = comment_line(&[(&file_label(&rows), &hash_file(&rows)?)]);
            emit(out.as_deref(), &(head + &m.to_csv()))?;
        }
        Command::Groups {
            partition,
            metrics,
            boxes,
            model,
            out,
        } => groups(&partition, &metrics, boxes.as_deref(), &model, out.as_deref())?,
        Command::E3 {
            reference,
            mags,
            seed,
            peak,
            detection,
            out,
            corr_out,
        } => e3(&reference, &mags, seed, peak, detection.as_deref(), out.as_deref(), corr_out.as_deref())?,
        Command::E3Corr { rows, out } => {
            let table = read_e3_csv(&fs::read_to_string(&rows)?)?;
            let head = comment_line(&[(&file_label(&rows), &hash_file(&rows)?)]);
            emit(out.as_deref(), &(head + &correlations_csv(&scenario_correlations(&table))))?;
        }
        Command::Serve { study, store, addr } => {
            let cfg = StudyConfig::load(&study)?;
            let store = store.unwrap_or_else(|| cfg.base_dir.join("responses"));
            let svc = Arc::new(StudyService::new(cfg, &store, Arc::new(SystemClock))?);
            tokio::runtime::Runtime::new()?.block_on(recondet_reader::serve(addr, svc))?;
        }
        Command::MiniDataset {
            out,
            patients,
            size,
            slices,
            seed,
        } => {
            let spec = MiniSpec {
                patients,
                size,
                slices,
                seed,
                ..MiniSpec::default()
            };
            let manifest = generate_mini_dataset(&out, &spec)?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
