use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use neurank::data::{
    align_annotations, class_means, read_repr_file, synth_generate, write_repr_file,
    AnnotationTable, AttributeDataset, Lexicon, SynthSpec,
};
use neurank::eval::{
    cluster_patterns, curves_to_csv, default_k_grid, default_significance_ks, make_control,
    pattern_matrix, significance_matrix, topk_curve, AccuracyCurve,
};
use neurank::interventions::{run_intervention, Intervention, ToyLinearDecoder};
use neurank::overlap::{
    expected_overlap_closed_exact, expected_overlap_exact, overlap_matrix, rational_to_f64,
    EXACT_CAP,
};
use neurank::probes::train_linear;
use neurank::rankings::{
    gaussian_greedy_rank, linear_rank, probeless_rank, random_rank, reverse, Method, RankConfig,
    Ranking,
};

use crate::{
    svg, Common, DataArgs, InterveneArgs, InterventionKind, OverlapArgs, ProbeArgs, RankArgs,
    ReportArgs, SynthArgs,
};

fn setup(common: &Common) -> Result<()> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn load(data: &DataArgs) -> Result<AttributeDataset> {
    let table = AnnotationTable::read(&data.annotations)?;
    let reprs = read_repr_file(&data.reprs)?
        .attach_tokens(&table)
        .context("pairing representation rows with annotation rows")?;
    Ok(align_annotations(&reprs, &table, &data.attribute)?)
}

fn rank_config(data: &DataArgs) -> RankConfig {
    RankConfig::new(&data.corpus, &data.attribute, &data.layer)
}

/// Ranking files named directly plus every `.json` directly inside the
/// named directories, sorted.
fn ranking_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inside: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "json"))
                .collect();
            inside.sort();
            files.extend(inside);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no ranking files found");
    }
    Ok(files)
}

fn read_rankings(paths: &[PathBuf]) -> Result<Vec<(String, Ranking)>> {
    ranking_files(paths)?
        .into_iter()
        .map(|f| {
            let r =
                Ranking::read(&f).with_context(|| format!("reading ranking {}", f.display()))?;
            let stem = f
                .file_stem()
                .map_or_else(|| r.label(), |s| s.to_string_lossy().into_owned());
            Ok((stem, r))
        })
        .collect()
}

pub fn synth(args: SynthArgs) -> Result<()> {
    setup(&args.common)?;
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let mut spec =
        SynthSpec::parse(&text).with_context(|| format!("in {}", args.spec.display()))?;
    if let Some(seed) = args.synth_seed {
        spec.seed = seed;
    }
    let out = synth_generate(&spec)?;
    let dir = &args.common.out;
    write_repr_file(&out.reprs, dir.join("reprs.nrt"))?;
    println!("wrote {}", dir.join("reprs.nrt").display());
    write(&dir.join("annotations.tsv"), out.annotations.to_tsv())?;
    write(&dir.join("lexicon.tsv"), out.lexicon.to_tsv())?;
    write_json(&dir.join("truth.json"), &out.truth)?;
    let (vocab, prototypes): (Vec<String>, Vec<Vec<f64>>) = out.prototypes.into_iter().unzip();
    let decoder = ToyLinearDecoder::nearest_prototype(vocab, &prototypes)?;
    write(&dir.join("decoder.json"), decoder.to_json()? + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct GreedySummary<'a> {
    step_accuracies: &'a [f64],
    single_accuracies: &'a [Option<f64>],
    diagnostics: &'a [String],
}

pub fn rank(args: RankArgs) -> Result<()> {
    setup(&args.common)?;
    let dataset = load(&args.data)?;
    let splits = dataset.split(args.data.train_frac, args.data.dev_frac, args.common.seed)?;
    let config = rank_config(&args.data);
    let d = dataset.dims();
    let dir = &args.common.out;

    for &method in &args.methods {
        let ranking = match method {
            Method::Probeless => probeless_rank(&splits.train).context("probeless ranking")?,
            Method::Linear => {
                let all: Vec<usize> = (0..d).collect();
                let probe = train_linear(&splits.train, &all, args.hyper.hyper(args.common.seed))
                    .context("linear ranking")?;
                linear_rank(&probe)?
            }
            Method::Gaussian => {
                let k_max = args.k_max.unwrap_or(d);
                let g = gaussian_greedy_rank(&splits.train, &splits.dev, k_max)
                    .context("gaussian ranking")?;
                for line in &g.diagnostics {
                    eprintln!("gaussian: {line}");
                }
                let diag_dir = dir.join("diagnostics");
                fs::create_dir_all(&diag_dir)?;
                write_json(
                    &diag_dir.join("gaussian.json"),
                    &GreedySummary {
                        step_accuracies: &g.step_accuracies,
                        single_accuracies: &g.single_accuracies,
                        diagnostics: &g.diagnostics,
                    },
                )?;
                g.ranking
            }
            Method::Random => random_rank(d, args.common.seed)?,
        }
        .with_config(config.clone());
        write(
            &dir.join(format!("{}.json", ranking.label())),
            ranking.to_json()? + "\n",
        )?;
        if method != Method::Random {
            let flipped = reverse(&ranking);
            write(
                &dir.join(format!("{}.json", flipped.label())),
                flipped.to_json()? + "\n",
            )?;
        }
    }
    Ok(())
}

pub fn probe(args: ProbeArgs) -> Result<()> {
    setup(&args.common)?;
    let dataset = load(&args.data)?;
    let seed = args.common.seed;
    let (train, dev) = (args.data.train_frac, args.data.dev_frac);
    let splits = dataset.split(train, dev, seed)?;
    let control = if args.no_control {
        None
    } else {
        Some(make_control(&dataset, seed)?.split(train, dev, seed)?)
    };
    let d = dataset.dims();
    let ks = if args.ks.is_empty() {
        default_k_grid(d)
    } else {
        args.ks.clone()
    };
    let config = rank_config(&args.data);
    let rankings: Vec<Ranking> = read_rankings(&args.rankings)?
        .into_iter()
        .map(|(_, r)| r.with_config(config.clone()))
        .collect();
    let hyper = args.hyper.hyper(seed);

    let jobs: Vec<_> = args
        .probes
        .iter()
        .flat_map(|&p| rankings.iter().map(move |r| (p, r)))
        .collect();
    let curves: Vec<AccuracyCurve> = jobs
        .par_iter()
        .map(|&(probe, ranking)| {
            let mut curve = topk_curve(&splits, probe, ranking, &ks, hyper)?;
            if let Some(c) = &control {
                let ctrl = topk_curve(c, probe, ranking, &curve.ks, hyper)?;
                if ctrl.ks == curve.ks {
                    curve.attach_control(&ctrl)?;
                } else {
                    eprintln!(
                        "{}: control task failed at some k; no selectivity",
                        curve.combination()
                    );
                }
            }
            Ok(curve)
        })
        .collect::<neurank::Result<_>>()?;
    for c in &curves {
        for f in &c.failed {
            eprintln!("{} k={}: {}", c.combination(), f.k, f.error);
        }
    }

    let dir = &args.common.out;
    write(&dir.join("curves.csv"), curves_to_csv(&curves))?;
    write_json(&dir.join("curves.json"), &curves)?;
    let sig_ks = if args.significance_ks.is_empty() {
        default_significance_ks(d)
    } else {
        args.significance_ks.clone()
    };
    write(
        &dir.join("significance.csv"),
        significance_matrix(&curves, &sig_ks)?.to_csv(),
    )?;
    write(&dir.join("curves.svg"), curves_svg(&config, &curves))?;
    Ok(())
}

fn curves_svg(config: &RankConfig, curves: &[AccuracyCurve]) -> String {
    let series: Vec<(String, Vec<(f64, f64)>)> = curves
        .iter()
        .filter(|c| &c.config == config)
        .map(|c| {
            let pts =
                c.ks.iter()
                    .zip(&c.accuracies)
                    .map(|(&k, &a)| (k as f64, a))
                    .collect();
            (c.combination(), pts)
        })
        .collect();
    svg::line_chart(&config.to_string(), "neurons (k)", "test accuracy", &series)
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn report(args: ReportArgs) -> Result<()> {
    setup(&args.common)?;
    let mut curves: Vec<AccuracyCurve> = Vec::new();
    for path in &args.curves {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let batch: Vec<AccuracyCurve> =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        curves.extend(batch);
    }
    let dir = &args.common.out;
    let Some(first) = curves.first() else {
        bail!("no curves in the given files");
    };
    let sig_ks = if args.significance_ks.is_empty() {
        default_significance_ks(first.dims)
    } else {
        args.significance_ks.clone()
    };
    write(&dir.join("curves.csv"), curves_to_csv(&curves))?;
    write(
        &dir.join("significance.csv"),
        significance_matrix(&curves, &sig_ks)?.to_csv(),
    )?;

    let mut configs: Vec<&RankConfig> = curves.iter().map(|c| &c.config).collect();
    configs.sort();
    configs.dedup();
    for config in configs {
        let name = format!("curves-{}.svg", file_safe(&config.to_string()));
        write(&dir.join(name), curves_svg(config, &curves))?;
    }

    let patterns = pattern_matrix(&curves)?;
    let clusters = cluster_patterns(&patterns, args.clusters, args.common.seed)
        .context("clustering accuracy patterns")?;
    write(&dir.join("clusters.csv"), clusters.to_csv())?;
    write_json(&dir.join("clusters.json"), &clusters)?;
    let labels: Vec<String> = clusters.configs.iter().map(ToString::to_string).collect();
    write(
        &dir.join("clusters.svg"),
        svg::scatter(
            "accuracy patterns",
            &clusters.projection,
            &clusters.assignments,
            &labels,
        ),
    )?;
    Ok(())
}

pub fn intervene(args: InterveneArgs) -> Result<()> {
    setup(&args.common)?;
    let dataset = load(&args.data)?;
    let splits = dataset.split(args.data.train_frac, args.data.dev_frac, args.common.seed)?;
    let lexicon = Lexicon::read(&args.lexicon)?;
    let decoder = ToyLinearDecoder::read(&args.decoder)?;
    let ranking = Ranking::read(&args.ranking)?;
    let d = dataset.dims();
    let ks = if args.ks.is_empty() {
        std::iter::once(0).chain(default_k_grid(d)).collect()
    } else {
        args.ks.clone()
    };
    let means = class_means(&splits.train)?;
    let intervention = match args.method {
        InterventionKind::Ablation => Intervention::Ablation,
        InterventionKind::Translation => Intervention::Translation {
            beta: args.beta,
            means: &means,
        },
    };
    let report = run_intervention(
        &decoder,
        &lexicon,
        &splits.test,
        &ranking,
        intervention,
        &ks,
    )?;
    let dir = &args.common.out;
    write(&dir.join("report.csv"), report.to_csv())?;
    write(&dir.join("report.json"), report.to_json()? + "\n")?;
    let series = vec![
        (
            "error rate".to_string(),
            ks.iter()
                .map(|&k| k as f64)
                .zip(report.error_rate.iter().copied())
                .collect(),
        ),
        (
            "CLWV".to_string(),
            ks.iter()
                .map(|&k| k as f64)
                .zip(report.clwv.iter().copied())
                .collect(),
        ),
    ];
    let title = format!("{} ({})", report.method, report.ranking);
    write(
        &dir.join("report.svg"),
        svg::line_chart(&title, "neurons modified (k)", "fraction", &series),
    )?;
    if let Some(s) = &report.saturation {
        println!(
            "saturation: k = {} clwv = {}{}",
            s.k,
            s.clwv,
            if s.saturated { "" } else { " (not saturated)" }
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Expected {
    rankings: usize,
    fraction: String,
    decimal: f64,
}

#[derive(Serialize)]
struct OverlapSummary {
    d: usize,
    m: usize,
    expected: Vec<Expected>,
}

pub fn overlap(args: OverlapArgs) -> Result<()> {
    setup(&args.common)?;
    let (labels, rankings): (Vec<String>, Vec<Ranking>) =
        read_rankings(&args.rankings)?.into_iter().unzip();
    let d = rankings[0].len();
    let m = args.m.unwrap_or(d.min(100));
    let matrix = overlap_matrix(&rankings, &labels, m)?;
    let dir = &args.common.out;
    write(&dir.join("overlap.csv"), matrix.to_csv())?;
    write(
        &dir.join("overlap.svg"),
        svg::grid(
            &format!("top-{m} overlap (expected {:.2})", matrix.expected),
            &matrix.labels,
            &matrix.counts,
            |a, b| matrix.above_expected(a, b),
        ),
    )?;
    let mut expected = Vec::new();
    for i in [2, 3] {
        let exact = if d <= EXACT_CAP {
            expected_overlap_exact(d, m, i)?
        } else {
            expected_overlap_closed_exact(d, m, i)?
        };
        println!("E_{i}({d}, {m}) = {exact} = {:.6}", rational_to_f64(&exact));
        expected.push(Expected {
            rankings: i,
            fraction: exact.to_string(),
            decimal: rational_to_f64(&exact),
        });
    }
    write_json(
        &dir.join("expected.json"),
        &OverlapSummary { d, m, expected },
    )?;
    Ok(())
}
