use crate::error::CliError;
use crate::{
    Cli, Command, EvaluateArgs, ImportArgs, PumpCommand, ServeArgs, SynthArgs, TrainArgs, ValidateArgs, WindkesselArgs,
};
use podi_core::pipeline::{self, load_model, save_model, TrainConfig};
use podi_core::pump::{self, PumpCurve};
use podi_core::rbf::RbfConfig;
use podi_core::snapshot::{
    generate_synthetic_set, import_csv_set, read_snapshot_set, write_snapshot_set, SnapshotSet, SyntheticManifoldSpec,
};
use podi_core::windkessel::{self, outlets, WindkesselParams, WindkesselState};
use podi_service::{FieldResponse, FieldStats, ServiceConfig};
use serde::Serialize;
use serde_json::json;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Seed of the built-in LVAD-like manifold when `--seed` is absent.
pub const DEFAULT_SEED: u64 = 20_250_101;

const HM3: PumpCurve = PumpCurve::HEARTMATE3;

pub fn run(cli: Cli) -> Result<(), CliError> {
    let out = Output { json: cli.json };
    match cli.command {
        Command::Synth(args) => synth(&out, args, cli.seed),
        Command::Import(args) => import(&out, args),
        Command::Train(args) => train(&out, args),
        Command::Validate(args) => validate(&out, args),
        Command::Evaluate(args) => evaluate(&out, args),
        Command::Pump(cmd) => pump(&out, cmd),
        Command::Windkessel(args) => windkessel(&out, args),
        Command::Serve(args) => serve(args),
    }
}

struct Output {
    json: bool,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string(value).expect("output is serializable"));
        } else {
            print!("{}", text());
        }
    }
}

fn parse_point(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::usage(format!("invalid parameter coordinate {c:?} in {s:?}")))
        })
        .collect()
}

fn parse_pair<'a>(s: &'a str, sep: char, what: &str) -> Result<(&'a str, &'a str), CliError> {
    s.split_once(sep)
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| CliError::usage(format!("expected {what}, got {s:?}")))
}

fn set_summary(set: &SnapshotSet) -> serde_json::Value {
    let fields: Vec<_> = set
        .fields()
        .iter()
        .map(|(label, m)| json!({ "label": label, "n_dof": m.n_dof() }))
        .collect();
    json!({
        "n_snapshots": set.n_snapshots(),
        "n_params": set.n_params(),
        "fields": fields,
    })
}

fn write_set(out: &Output, set: &SnapshotSet, dir: &Path) -> Result<(), CliError> {
    write_snapshot_set(set, dir)?;
    let mut summary = set_summary(set);
    summary["out"] = json!(dir.display().to_string());
    out.emit(&summary, || {
        let mut s = format!("wrote {} snapshots to {}\n", set.n_snapshots(), dir.display());
        for (label, m) in set.fields() {
            let _ = writeln!(s, "  {label}: N = {}", m.n_dof());
        }
        s
    });
    Ok(())
}

fn synth(out: &Output, args: SynthArgs, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            toml::from_str::<SyntheticManifoldSpec>(&text)
                .map_err(|e| CliError::new("invalid_spec", format!("{}: {e}", path.display())))?
        }
        None => SyntheticManifoldSpec::lvad_like(args.n_dof, DEFAULT_SEED),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(noise) = args.noise {
        spec.noise_amplitude = noise;
    }
    if !args.params.is_empty() {
        spec.parameter_samples = args.params.iter().map(|p| parse_point(p)).collect::<Result<_, _>>()?;
    }
    let (set, _) = generate_synthetic_set(&spec)?;
    write_set(out, &set, &args.out)
}

fn import(out: &Output, args: ImportArgs) -> Result<(), CliError> {
    let fields = args
        .fields
        .iter()
        .map(|f| parse_pair(f, '=', "LABEL=PATH").map(|(l, p)| (l.to_string(), PathBuf::from(p))))
        .collect::<Result<Vec<_>, _>>()?;
    let set = import_csv_set(&args.params, &fields)?;
    write_set(out, &set, &args.out)
}

fn train(out: &Output, args: TrainArgs) -> Result<(), CliError> {
    let set = read_snapshot_set(&args.snapshots)?;
    let mut config = TrainConfig {
        energy_threshold: args.energy,
        rbf: RbfConfig {
            shape: args.shape,
            ridge: args.ridge,
            normalize: !args.no_normalize,
        },
        ..TrainConfig::default()
    };
    for r in &args.ranks {
        let (field, k) = parse_pair(r, '=', "FIELD=K")?;
        let k = k
            .parse::<usize>()
            .map_err(|_| CliError::usage(format!("invalid rank {k:?} for field {field:?}")))?;
        config.rank_override.insert(field.to_string(), k);
    }
    if !args.ranges.is_empty() {
        let ranges = args
            .ranges
            .iter()
            .map(|r| {
                let (lo, hi) = parse_pair(r, ':', "MIN:MAX")?;
                match (lo.parse::<f64>(), hi.parse::<f64>()) {
                    (Ok(lo), Ok(hi)) => Ok((lo, hi)),
                    _ => Err(CliError::usage(format!("invalid range {r:?}"))),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        config.parameter_range = Some(ranges);
    }
    let model = pipeline::train(&set, &config)?;
    save_model(&model, &args.out)?;
    let mut meta = serde_json::to_value(model.metadata()).expect("metadata is serializable");
    meta["out"] = json!(args.out.display().to_string());
    out.emit(&meta, || {
        let mut s = format!(
            "trained on {} snapshots, energy threshold {}\n{:<12} {:>10} {:>4} {:>16}\n",
            set.n_snapshots(),
            config.energy_threshold,
            "field",
            "N",
            "k",
            "captured energy"
        );
        for (label, f) in model.fields() {
            let _ = writeln!(
                s,
                "{label:<12} {:>10} {:>4} {:>16.10}",
                f.n_dof(),
                f.rank(),
                f.captured_energy()
            );
        }
        let _ = writeln!(s, "model written to {}", args.out.display());
        s
    });
    Ok(())
}

fn format_point(p: &[f64]) -> String {
    p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn validate(out: &Output, args: ValidateArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let heldout = read_snapshot_set(&args.heldout)?;
    let report = pipeline::validate(&model, &heldout)?;
    out.emit(&report, || {
        let mut s = format!(
            "{:<12} {:>12} {:>14} {:>14}\n",
            "field", "parameter", "E_X (%)", "t_eval (ms)"
        );
        for e in &report.entries {
            let _ = writeln!(
                s,
                "{:<12} {:>12} {:>14.6e} {:>14.4}",
                e.field,
                format_point(&e.parameter),
                e.error_percent,
                e.eval_seconds * 1e3
            );
        }
        let ranks: Vec<String> = report.ranks.iter().map(|(f, k)| format!("{f}={k}")).collect();
        let _ = writeln!(s, "ranks: {}", ranks.join(" "));
        s
    });
    Ok(())
}

fn evaluate(out: &Output, args: EvaluateArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let param = parse_point(&args.param)?;
    if args.stride == Some(0) {
        return Err(CliError::new("invalid_stride", "stride must be at least 1"));
    }
    model.check_parameter_range(&param)?;
    let eval = model.evaluate_field_detailed(&args.field, &param)?;
    if let Some(path) = &args.out {
        let mut text = String::with_capacity(eval.values.len() * 24);
        for v in &eval.values {
            let _ = writeln!(text, "{v}");
        }
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    }
    let response = FieldResponse {
        field: args.field.clone(),
        parameter: param.clone(),
        n_dof: eval.values.len(),
        stats: FieldStats::of(&eval.values),
        stride: args.stride,
        values: args.stride.map(|k| eval.values.iter().step_by(k).copied().collect()),
        extrapolated: eval.extrapolated,
    };
    out.emit(&response, || {
        let s = &response.stats;
        let mut t = format!(
            "field {} at {}: N = {}\n  min {}\n  max {}\n  mean {}\n",
            response.field,
            format_point(&response.parameter),
            response.n_dof,
            s.min,
            s.max,
            s.mean
        );
        if response.extrapolated {
            t.push_str("  warning: parameter lies outside the training samples (extrapolation)\n");
        }
        if let Some(path) = &args.out {
            let _ = writeln!(t, "values written to {}", path.display());
        }
        t
    });
    Ok(())
}

fn pump(out: &Output, cmd: PumpCommand) -> Result<(), CliError> {
    match cmd {
        PumpCommand::Forward { omega, pf } => {
            let dp = pump::head_from_speed_flow(&HM3, omega, pf)?;
            out.emit(&json!({ "omega": omega, "pf": pf, "dp": dp }), || {
                format!("dP = {dp} mmHg\n")
            });
        }
        PumpCommand::Inverse { omega, dp } => {
            let p = pump::panel1(&HM3, dp, omega)?;
            out.emit(&json!({ "omega": p.speed, "pf": p.flow, "dp": p.head }), || {
                format!("PF = {} l/min\n", p.flow)
            });
        }
        PumpCommand::Calibrate { omega, pf, omega_new } => {
            let dp = pump::panel2_calibrate(&HM3, omega, pf)?;
            match omega_new {
                None => out.emit(&json!({ "omega": omega, "pf": pf, "dp": dp }), || {
                    format!("calibrated dP = {dp} mmHg\n")
                }),
                Some(w) => {
                    let p = pump::panel2_predict(&HM3, dp, w)?;
                    out.emit(
                        &json!({ "omega": omega, "pf": pf, "dp": dp, "omega_new": w, "pf_new": p.flow }),
                        || format!("calibrated dP = {dp} mmHg\nPF = {} l/min at {w} rpm\n", p.flow),
                    );
                }
            }
        }
        PumpCommand::Curve { omega, n } => {
            let samples = pump::curve_samples(&HM3, omega, n)?;
            let points: Vec<_> = samples.iter().map(|&(pf, dp)| json!({ "pf": pf, "dp": dp })).collect();
            out.emit(
                &json!({ "omega": omega, "pf_min": HM3.pf_min, "pf_max": HM3.pf_max, "points": points }),
                || {
                    let mut s = String::from("pf,dp\n");
                    for (pf, dp) in &samples {
                        let _ = writeln!(s, "{pf},{dp}");
                    }
                    s
                },
            );
        }
    }
    Ok(())
}

fn windkessel(out: &Output, args: WindkesselArgs) -> Result<(), CliError> {
    let base = outlets::by_name(&args.outlet).ok_or_else(|| {
        let names: Vec<&str> = outlets::ALL.iter().map(|(n, _)| *n).collect();
        CliError::usage(format!("unknown outlet {:?}; known: {}", args.outlet, names.join(", ")))
    })?;
    let params = WindkesselParams::new(
        args.rp.unwrap_or(base.r_proximal),
        args.rd.unwrap_or(base.r_distal),
        args.c.unwrap_or(base.compliance),
        args.pd.unwrap_or(base.p_distal),
    )?;
    let tau = params.time_constant();
    let dt = args.dt.unwrap_or(tau / 20.0);
    let t_end = args.t_end.unwrap_or(5.0 * tau);
    let q = args.flow;
    let trace = windkessel::simulate(&params, &|_: f64| q, dt, t_end, WindkesselState::new(args.p0, 0.0))?;
    if let Some(path) = &args.out {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        windkessel::write_trace_csv(&trace, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(path, e))?;
    }
    let last = trace.last().expect("trace holds the initial state");
    let (steady_p, steady_outlet) = windkessel::steady_state(&params, q);
    let summary = json!({
        "tau": tau,
        "dt": dt,
        "steps": trace.len() - 1,
        "t_end": last.t,
        "p_proximal": last.p_proximal,
        "p_outlet": last.p_outlet,
        "steady_p_proximal": steady_p,
        "steady_p_outlet": steady_outlet,
    });
    out.emit(&summary, || {
        format!(
            "tau = {tau} s, {} steps of {dt} s\nat t = {}: P_p = {} dyne/cm^2 ({} mmHg), P = {} dyne/cm^2\nsteady state: P_p = {steady_p}, P = {steady_outlet}\n",
            trace.len() - 1,
            last.t,
            last.p_proximal,
            windkessel::dyne_per_cm2_to_mmhg(last.p_proximal),
            last.p_outlet,
        )
    });
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let config = ServiceConfig {
        bind: args.bind,
        port: args.port,
        model_dir: args.models,
        max_payload: args.max_payload,
        ..ServiceConfig::default()
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new("runtime", e.to_string()))?;
    runtime
        .block_on(podi_service::run(config))
        .map_err(|e| CliError::new("serve_failed", e.to_string()))
}
