//! Command-line front end: detectors, trackers, synthetic cases and batch
//! evaluation runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ewb_core::ar_tracker::{detect_ar_objects, write_ar_objects_jsonl};
use ewb_core::climatology::{
    build_percentile_climatology, detect_freeze_days, detect_heatwave_days, detect_marginal_regions, detect_seeded_case,
    PercentileClimatology, TemperatureEvent,
};
use ewb_core::convective::{compute_pph, pph_bounding_box, read_reports_csv, reports_in_window};
use ewb_core::grid::{load_cube, write_cube, FieldCube, GridSpec, LandMask, LatLon};
use ewb_core::harness::pipeline::{ivt_fields, landfalls, tc_fields};
use ewb_core::harness::{
    aggregate, generate_synthetic, load_catalog, parse_group_keys, replay, run_evaluation, write_case, write_summary_csv,
    CaseIndex, CaseStudy, Config, RunInputs, RunManifest, SynthKind, SynthParams, TemperatureVariant, CASE_SCHEMA,
};
use ewb_core::landfall::{filter_landfalls, landfall_metrics, read_landfalls_csv, write_landfalls_csv};
use ewb_core::metrics::{read_records_csv, read_records_jsonl, MetricRecord};
use ewb_core::tc_tracker::{find_candidates_series, read_tracks_csv, stitch_tracks, write_tracks_csv, TrackSource};
use ewb_core::timefmt;

const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "ewb", version, about = "Extreme-weather event detection and forecast verification")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML file overriding the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `section.key=value` override, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Detect a temperature case.
    Detect(DetectArgs),
    /// Track atmospheric rivers or tropical cyclones.
    Track {
        #[command(subcommand)]
        what: TrackCommand,
    },
    /// Interpolated landfalls of tracks, optionally scored against a target.
    Landfall(LandfallArgs),
    /// Practically perfect hindcast from storm reports.
    Pph(PphArgs),
    /// Percentile climatology from a multi-year history.
    Climatology(ClimatologyArgs),
    /// Evaluate every catalog case for every model.
    Evaluate(EvaluateArgs),
    /// Write a synthetic case with known answers.
    Synth(SynthArgs),
    /// Group-wise means of metric records.
    Aggregate(AggregateArgs),
    /// Rerun an evaluation from its manifest and compare outputs.
    Replay(ReplayArgs),
    /// Print the case JSON schema or the resolved configuration.
    Show {
        #[arg(value_enum)]
        what: ShowWhat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectKind {
    Heat,
    Freeze,
    Marginal,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(value_enum)]
    kind: DetectKind,
    /// Temperature cube (K).
    #[arg(long)]
    temp: PathBuf,
    /// Percentile climatology (p85 for heat, p15 for freeze, p16 for marginal).
    #[arg(long)]
    clim: PathBuf,
    /// Upper climatology for marginal days (p84).
    #[arg(long)]
    clim_high: Option<PathBuf>,
    #[arg(long)]
    land: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    seed_lat: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    seed_lon: Option<f64>,
    #[arg(long, default_value = "case")]
    id: String,
    /// Directory that receives one case document per detected event.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TrackCommand {
    /// AR objects at every time of an IVT cube or of q, u, v cubes.
    Ar {
        /// Directory holding ivt.json or q.json, u.json and v.json.
        #[arg(long)]
        fields: PathBuf,
        #[arg(long)]
        land: PathBuf,
        /// JSON-lines output, one object per line.
        #[arg(long)]
        out: PathBuf,
    },
    /// TC tracks from mslp, z300, z500, u10 and v10 cubes.
    Tc {
        #[arg(long)]
        fields: PathBuf,
        /// Reference tracks; the longest one constrains candidates.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "forecast")]
        source: SourceArg,
        #[arg(long, default_value = "")]
        prefix: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Forecast,
    Analysis,
}

#[derive(Args)]
struct LandfallArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    land: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Target landfalls CSV to pair against.
    #[arg(long, requires = "init")]
    target: Option<PathBuf>,
    #[arg(long, value_parser = parse_time)]
    init: Option<DateTime<Utc>>,
    /// First forecast valid time; defaults to the initialisation.
    #[arg(long, value_parser = parse_time)]
    forecast_start: Option<DateTime<Utc>>,
}

#[derive(Args)]
struct PphArgs {
    #[arg(long)]
    reports: PathBuf,
    /// Any cube on the output grid.
    #[arg(long)]
    like: PathBuf,
    #[arg(long, value_parser = parse_time)]
    start: Option<DateTime<Utc>>,
    #[arg(long, value_parser = parse_time)]
    end: Option<DateTime<Utc>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClimatologyArgs {
    #[arg(long)]
    history: PathBuf,
    /// Fraction in (0, 1).
    #[arg(long)]
    percentile: f64,
    #[arg(long, default_value_t = 21)]
    half_window_days: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    forecasts: PathBuf,
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(value_enum)]
    kind: SynthArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    depth_hpa: Option<f64>,
    #[arg(long)]
    peak_wind_ms: Option<f64>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long)]
    peak_day: Option<usize>,
    #[arg(long)]
    anomaly_k: Option<f64>,
    #[arg(long)]
    reports: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthArg {
    Vortex,
    ArPlume,
    HeatSeries,
    Sounding,
    Reports,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Heat,
    Freeze,
    Marginal,
}

#[derive(Args)]
struct AggregateArgs {
    /// records.csv or records.jsonl files.
    #[arg(long, required = true, num_args = 1..)]
    records: Vec<PathBuf>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Comma-separated subset of event_type, region, lead, model.
    #[arg(long, default_value = "event_type,lead,model")]
    group_by: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; defaults to a `replay` directory beside the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShowWhat {
    Schema,
    Config,
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, String> {
    timefmt::parse(s).map_err(|e| e.to_string())
}

fn print_json(v: &serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load(path: &Path) -> anyhow::Result<FieldCube> {
    load_cube(path).with_context(|| format!("reading {}", path.display()))
}

fn load_land(path: &Path, spec: &GridSpec) -> anyhow::Result<LandMask> {
    Ok(LandMask::from_cube(&load(path)?)?.resample(spec))
}

fn detect(cfg: &Config, a: &DetectArgs) -> anyhow::Result<u8> {
    let temp = load(&a.temp)?;
    let clim = PercentileClimatology::from_cube(&load(&a.clim)?)?;
    let land = a.land.as_deref().map(|p| load_land(p, &temp.spec)).transpose()?;
    let cases: Vec<CaseStudy> = match a.kind {
        DetectKind::Heat | DetectKind::Freeze => {
            let (Some(lat), Some(lon)) = (a.seed_lat, a.seed_lon) else {
                bail!("heat and freeze detection need --seed-lat and --seed-lon");
            };
            let (event, runs) = match a.kind {
                DetectKind::Heat => (TemperatureEvent::HeatWave, detect_heatwave_days(&temp, &clim)?),
                _ => (TemperatureEvent::Freeze, detect_freeze_days(&temp, &clim)?),
            };
            let seed = LatLon::new(lat, lon);
            let found = detect_seeded_case(&a.id, event, &runs, seed, &cfg.grow, land.as_ref())?;
            let mut case = CaseStudy::from_event(&found);
            case.seed = Some(seed);
            vec![case]
        }
        DetectKind::Marginal => {
            let high = a.clim_high.as_deref().context("marginal detection needs --clim-high")?;
            let high = PercentileClimatology::from_cube(&load(high)?)?;
            let land = land.unwrap_or_else(|| LandMask::all_land(temp.spec));
            detect_marginal_regions(&temp, &clim, &high, &land, &cfg.marginal)?
                .iter()
                .enumerate()
                .map(|(k, e)| {
                    let mut c = CaseStudy::from_event(e);
                    c.id = format!("{}-{:03}", a.id, k + 1);
                    c
                })
                .collect()
        }
    };
    fs::create_dir_all(&a.out)?;
    for c in &cases {
        write_case(a.out.join(format!("{}.json", c.id)), c)?;
    }
    print_json(&serde_json::to_value(&cases)?)?;
    Ok(0)
}

fn track(cfg: &Config, what: &TrackCommand) -> anyhow::Result<u8> {
    match what {
        TrackCommand::Ar { fields, land, out } => {
            let cube = |v: &str| load_cube(fields.join(format!("{v}.json")));
            let ivt = ivt_fields(cube, fields.join("ivt.json").is_file(), |_| true)?;
            let Some(first) = ivt.first() else { bail!("no IVT times in {}", fields.display()) };
            let land = load_land(land, &first.spec)?;
            let mut objects = Vec::new();
            let mut summary = Vec::new();
            for f in &ivt {
                let found = detect_ar_objects(f, &cfg.ar, &land)?;
                summary.push(json!({
                    "time": timefmt::format(&f.time),
                    "objects": found.len(),
                    "land_objects": found.iter().filter(|o| o.intersects_land()).count(),
                }));
                objects.extend(found);
            }
            write_ar_objects_jsonl(out, &objects)?;
            print_json(&json!(summary))?;
        }
        TrackCommand::Tc { fields, reference, source, prefix, out } => {
            let tc = tc_fields(|v| load_cube(fields.join(format!("{v}.json"))))?;
            let reference = match reference {
                Some(p) => Some(
                    read_tracks_csv(p)?
                        .into_iter()
                        .max_by_key(|t| t.points.len())
                        .context("reference file holds no tracks")?,
                ),
                None => None,
            };
            let source = match source {
                SourceArg::Forecast => TrackSource::Forecast,
                SourceArg::Analysis => TrackSource::Analysis,
            };
            let cands = find_candidates_series(&tc, &cfg.tc, reference.as_ref())?;
            let tracks = stitch_tracks(&cands, &cfg.tc, reference.as_ref(), source, prefix)?;
            write_tracks_csv(out, &tracks)?;
            let summary: Vec<_> = tracks
                .iter()
                .map(|t| json!({"storm_id": t.storm_id, "points": t.points.len()}))
                .collect();
            print_json(&json!(summary))?;
        }
    }
    Ok(0)
}

fn landfall(cfg: &Config, a: &LandfallArgs) -> anyhow::Result<u8> {
    let tracks = read_tracks_csv(&a.tracks)?;
    let land = LandMask::from_cube(&load(&a.land)?)?.without_small_features(cfg.evaluation.min_land_cells);
    let events = landfalls(&tracks, &land)?;
    write_landfalls_csv(&a.out, &events)?;
    if let (Some(target), Some(init)) = (&a.target, a.init) {
        let target = read_landfalls_csv(target)?;
        let outcome = filter_landfalls(&events, &target, init, a.forecast_start.unwrap_or(init), &cfg.landfall);
        let metrics = match landfall_metrics(&outcome.pairs) {
            Ok(m) => serde_json::to_value(m)?,
            Err(e) if e.is_undefined() => serde_json::Value::Null,
            Err(e) => return Err(e.into()),
        };
        print_json(&json!({
            "landfalls": events.len(),
            "pairs": outcome.pairs.len(),
            "dropped": serde_json::to_value(&outcome.dropped)?,
            "metrics": metrics,
        }))?;
    } else {
        print_json(&json!({"landfalls": events.len()}))?;
    }
    Ok(0)
}

fn pph(cfg: &Config, a: &PphArgs) -> anyhow::Result<u8> {
    let like = load(&a.like)?;
    let mut reports = read_reports_csv(&a.reports)?;
    if let (Some(s), Some(e)) = (a.start, a.end) {
        reports = reports_in_window(&reports, s, e);
    }
    let field = compute_pph(&reports, &like.spec, &cfg.pph)?;
    let time = a.start.or_else(|| like.times.first().copied()).context("no time for the output cube")?;
    let cube = FieldCube::new(
        "pph",
        "1",
        field.spec,
        vec![time],
        vec![],
        None,
        field.probability.as_slice().iter().map(|&v| v as f32).collect(),
    )?;
    write_cube(&cube, &a.out)?;
    let bbox = match pph_bounding_box(&field, cfg.evaluation.pph_threshold) {
        Ok(r) => serde_json::to_value(r)?,
        Err(e) if e.is_undefined() => serde_json::Value::Null,
        Err(e) => return Err(e.into()),
    };
    print_json(&json!({"reports": reports.len(), "sigma": field.sigma, "bounding_box": bbox}))?;
    Ok(0)
}

fn climatology(a: &ClimatologyArgs) -> anyhow::Result<u8> {
    let history = load(&a.history)?;
    let clim = build_percentile_climatology(&history, a.percentile, a.half_window_days)?;
    write_cube(&clim.to_cube(), &a.out)?;
    Ok(0)
}

fn evaluate(cfg: &Config, a: &EvaluateArgs) -> anyhow::Result<u8> {
    let inputs = RunInputs {
        catalog: a.catalog.clone(),
        forecasts: a.forecasts.clone(),
        targets: a.targets.clone(),
    };
    let res = run_evaluation(&inputs, cfg, &a.out)?;
    for m in &res.messages {
        eprintln!("{m}");
    }
    let defined = res.records.iter().filter(|r| !r.is_diagnostic() && !r.undefined).count();
    print_json(&json!({
        "cases": res.manifest.case_ids.len(),
        "models": res.manifest.models,
        "records": res.records.len(),
        "defined": defined,
        "partial": res.manifest.partial,
    }))?;
    Ok(if res.is_partial() { EXIT_PARTIAL } else { 0 })
}

fn synth(a: &SynthArgs) -> anyhow::Result<u8> {
    let d = SynthParams::default();
    let params = SynthParams {
        seed: a.seed.unwrap_or(d.seed),
        steps: a.steps.unwrap_or(d.steps),
        depth_hpa: a.depth_hpa.unwrap_or(d.depth_hpa),
        peak_wind_ms: a.peak_wind_ms.unwrap_or(d.peak_wind_ms),
        variant: match a.variant {
            Some(VariantArg::Heat) | None => TemperatureVariant::Heat,
            Some(VariantArg::Freeze) => TemperatureVariant::Freeze,
            Some(VariantArg::Marginal) => TemperatureVariant::Marginal,
        },
        peak_day: a.peak_day.unwrap_or(d.peak_day),
        anomaly_k: a.anomaly_k.unwrap_or(d.anomaly_k),
        reports: a.reports.unwrap_or(d.reports),
    };
    let kind = match a.kind {
        SynthArg::Vortex => SynthKind::Vortex,
        SynthArg::ArPlume => SynthKind::ArPlume,
        SynthArg::HeatSeries => SynthKind::HeatSeries,
        SynthArg::Sounding => SynthKind::Sounding,
        SynthArg::Reports => SynthKind::Reports,
    };
    let out = generate_synthetic(kind, &params, &a.out)?;
    print_json(&json!({"case_ids": out.case_ids, "truth": a.out.join("truth.json")}))?;
    Ok(0)
}

fn read_records(path: &Path) -> anyhow::Result<Vec<MetricRecord>> {
    let r = if path.extension().is_some_and(|e| e == "jsonl") {
        read_records_jsonl(path)
    } else {
        read_records_csv(path)
    };
    r.with_context(|| format!("reading {}", path.display()))
}

fn aggregate_cmd(a: &AggregateArgs) -> anyhow::Result<u8> {
    let mut records = Vec::new();
    for p in &a.records {
        records.extend(read_records(p)?);
    }
    let index = match &a.catalog {
        Some(dir) => CaseIndex::new(&load_catalog(dir)?),
        None => CaseIndex::default(),
    };
    let rows = aggregate(&records, &index, &parse_group_keys(&a.group_by)?);
    write_summary_csv(&a.out, &rows)?;
    print_json(&json!({"records": records.len(), "rows": rows.len()}))?;
    Ok(0)
}

fn replay_cmd(a: &ReplayArgs) -> anyhow::Result<u8> {
    let manifest = RunManifest::read(&a.manifest)?;
    let out = match &a.out {
        Some(o) => o.clone(),
        None => a.manifest.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    let (res, report) = replay(&manifest, &out)?;
    print_json(&json!({"out": out, "mismatched": report.mismatched}))?;
    if !report.mismatched.is_empty() {
        bail!("replay differs from the manifest in {:?}", report.mismatched);
    }
    Ok(if res.is_partial() { EXIT_PARTIAL } else { 0 })
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = Config::resolve(cli.global.config.as_deref(), &cli.global.sets)?;
    match &cli.command {
        Command::Detect(a) => detect(&cfg, a),
        Command::Track { what } => track(&cfg, what),
        Command::Landfall(a) => landfall(&cfg, a),
        Command::Pph(a) => pph(&cfg, a),
        Command::Climatology(a) => climatology(a),
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::Synth(a) => synth(a),
        Command::Aggregate(a) => aggregate_cmd(a),
        Command::Replay(a) => replay_cmd(a),
        Command::Show { what } => {
            match what {
                ShowWhat::Schema => print!("{CASE_SCHEMA}"),
                ShowWhat::Config => print_json(&cfg.to_json())?,
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // usage errors exit 1; 2 is reserved for partial runs
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
