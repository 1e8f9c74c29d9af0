//! Subcommand implementations. Each returns the text to print on stdout.

use std::fs;
use std::path::{Path, PathBuf};

use ccm_core::dataprep::{dynamic_data_reduce, under_penalized_rmse, SampleTable};
use ccm_core::exact::{assignment_count, evaluate_assignment, solve_exact, ExactLimits, ExactResult};
use ccm_core::milp::matrix::chi_of;
use ccm_core::milp::{build_comcp, build_fwmp, export_lp, gap, verify_theorems, MilpInstance};
use ccm_core::stats::{median, off_home_blocks, spearman};
use ccm_core::{ccm_lb, Assignment, LbParams, PhaseSpec, RankId, WorkCoefficients};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{BalanceArgs, Command, KindArg, ModelArgs};
use crate::error::{CliError, CliResult, ExitStatus};

pub const FORMAT_VERSION: u32 = 1;

/// Every option a run was started with, echoed into its artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub format_version: u32,
    pub subcommand: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<WorkCoefficients>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balance: Option<LbParams>,
    /// Subcommand-specific options.
    pub options: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl RunConfig {
    fn new(subcommand: &'static str) -> Self {
        RunConfig {
            format_version: FORMAT_VERSION,
            subcommand,
            spec: None,
            coeffs: None,
            balance: None,
            options: json!({}),
            out: None,
        }
    }

    fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

fn path_text(p: &Path) -> String {
    p.display().to_string()
}

fn coefficients(m: &ModelArgs) -> CliResult<WorkCoefficients> {
    WorkCoefficients::new(m.alpha, m.beta, m.gamma, m.delta, m.enforce_memory)
        .map_err(|e| CliError::config(format!("--alpha/--beta/--gamma/--delta: {e}")))
}

fn load_spec(path: &Path) -> CliResult<PhaseSpec> {
    PhaseSpec::from_path(path).map_err(|e| CliError::new(ExitStatus::Input, format!("{}: {e}", path.display())))
}

fn balance_params(lb: &BalanceArgs, spec: &PhaseSpec) -> CliResult<LbParams> {
    let ranks = spec.rank_count();
    if lb.rounds == 0 {
        return Err(CliError::config("--rounds must be at least 1"));
    }
    if ranks >= 2 && (lb.fanout == 0 || lb.fanout >= ranks) {
        return Err(CliError::config(format!(
            "--fanout must lie in [1, {ranks}) for {ranks} ranks, got {}",
            lb.fanout
        )));
    }
    Ok(LbParams {
        n_iter: lb.iters,
        k_rounds: lb.rounds,
        fanout: lb.fanout,
        seed: lb.seed,
        comm_threshold: lb.comm_threshold,
        verbose: lb.verbose,
    })
}

/// `{"format_version", "config", ...payload}`.
fn artifact(config: &RunConfig, payload: Value) -> Value {
    let mut doc = serde_json::Map::new();
    doc.insert("format_version".into(), json!(FORMAT_VERSION));
    doc.insert(
        "config".into(),
        serde_json::to_value(config).expect("config serializes"),
    );
    match payload {
        Value::Object(map) => doc.extend(map),
        other => {
            doc.insert("result".into(), other);
        }
    }
    Value::Object(doc)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes") + "\n"
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

/// Writes the document to `out` when given and returns what to print.
fn emit(doc: Value, out: Option<&PathBuf>, summary: String) -> CliResult<String> {
    match out {
        Some(p) => {
            write(p, &pretty(&doc))?;
            Ok(summary)
        }
        None => Ok(pretty(&doc)),
    }
}

pub fn run(command: Command) -> CliResult<String> {
    match command {
        Command::Simulate { model, lb, out } => simulate(&model, &lb, &out),
        Command::ExportMilp { model, kind, out } => export_milp(&model, kind, &out),
        Command::SolveExact {
            model,
            limit,
            symmetry,
            out,
        } => solve(&model, limit, symmetry, out.as_ref()),
        Command::Compare {
            model,
            lb,
            repeats,
            deltas,
            limit,
            out,
        } => compare(&model, &lb, repeats, &deltas, limit, out.as_ref()),
        Command::SweepDelta {
            model,
            lb,
            deltas,
            repeats,
            out,
        } => sweep_delta(&model, &lb, &deltas, repeats, out.as_ref()),
        Command::Datared {
            input,
            bins,
            theta,
            target,
            seed,
            out,
        } => datared(&input, bins, theta, target, seed, &out),
        Command::Loss { input, penalty, out } => loss(&input, penalty, out.as_ref()),
        Command::VerifyTheorems {
            spec,
            assignment,
            all,
            limit,
            out,
        } => verify(&spec, &assignment, all, limit, out.as_ref()),
    }
}

fn model_config(name: &'static str, model: &ModelArgs, coeffs: WorkCoefficients) -> RunConfig {
    RunConfig {
        spec: Some(path_text(&model.spec)),
        coeffs: Some(coeffs),
        ..RunConfig::new(name)
    }
}

fn simulate(model: &ModelArgs, lb: &BalanceArgs, out: &Path) -> CliResult<String> {
    let coeffs = coefficients(model)?;
    let spec = load_spec(&model.spec)?;
    let params = balance_params(lb, &spec)?;
    let config = RunConfig {
        balance: Some(params),
        out: Some(path_text(out)),
        ..model_config("simulate", model, coeffs)
    };
    let result = ccm_lb(&spec, &coeffs, &params)?;
    fs::create_dir_all(out).map_err(|e| CliError::internal(format!("{}: {e}", out.display())))?;

    let doc = artifact(
        &config,
        json!({
            "initially_feasible": result.stats.initially_feasible,
            "initial": result.stats.initial,
            "per_iteration": result.stats.per_iteration,
            "final": result.stats.final_,
            "assignment": result.assignment.as_ranks(),
        }),
    );
    write(&out.join("stats.json"), &pretty(&doc))?;
    let header = [
        format!("format_version={FORMAT_VERSION}"),
        format!("config={}", config.to_json()),
    ];
    write(&out.join("trace.log"), &result.trace.to_text(&header))?;

    let f = &result.stats.final_;
    let mut summary = format!(
        "iterations={} transfers={} max_work_s={:?} initial_max_work_s={:?}",
        result.stats.per_iteration.len(),
        f.transfers,
        f.max_work_s,
        result.stats.initial.max_work_s
    );
    if let Some(imb) = f.imbalance {
        summary.push_str(&format!(" imbalance={imb:?}"));
    }
    if !result.stats.initially_feasible && coeffs.enforce_memory {
        summary.push_str("\nwarning: initial assignment violates memory limits");
    }
    Ok(summary + "\n")
}

fn build(spec: &PhaseSpec, coeffs: &WorkCoefficients, kind: KindArg) -> CliResult<MilpInstance> {
    match kind {
        KindArg::Comcp => build_comcp(spec, coeffs).map_err(|e| match e {
            ccm_core::CcmError::Config(m) => CliError::config(format!("--kind comcp: {m}")),
            other => other.into(),
        }),
        KindArg::Fwmp => Ok(build_fwmp(spec, coeffs)?),
    }
}

fn export_milp(model: &ModelArgs, kind: KindArg, out: &Path) -> CliResult<String> {
    let coeffs = coefficients(model)?;
    let spec = load_spec(&model.spec)?;
    let config = RunConfig {
        options: json!({ "kind": format!("{kind:?}").to_lowercase() }),
        out: Some(path_text(out)),
        ..model_config("export-milp", model, coeffs)
    };
    let inst = build(&spec, &coeffs, kind)?;
    let header = [
        format!("format_version={FORMAT_VERSION}"),
        format!("config={}", config.to_json()),
    ];
    export_lp(&inst, out, &header).map_err(|e| CliError::internal(format!("{}: {e}", out.display())))?;
    let meta = inst.metadata();
    Ok(format!(
        "kind={:?} rows_eq={} rows_ineq={} binaries={} variables={}\n",
        meta.kind,
        meta.rows_eq,
        meta.rows_ineq,
        meta.binaries,
        inst.layout.len()
    ))
}

fn exact_for(spec: &PhaseSpec, coeffs: &WorkCoefficients, limit: u128, symmetry: bool) -> CliResult<ExactResult> {
    Ok(solve_exact(
        spec,
        coeffs,
        &ExactLimits {
            max_enumeration: limit,
            symmetry_pruning: symmetry,
        },
    )?)
}

fn infeasible() -> CliError {
    CliError::new(ExitStatus::Refused, "no assignment satisfies the memory constraints")
}

fn solve(model: &ModelArgs, limit: u128, symmetry: bool, out: Option<&PathBuf>) -> CliResult<String> {
    let coeffs = coefficients(model)?;
    let spec = load_spec(&model.spec)?;
    let config = RunConfig {
        options: json!({ "limit": limit, "symmetry": symmetry }),
        out: out.map(|p| path_text(p)),
        ..model_config("solve-exact", model, coeffs)
    };
    let res = exact_for(&spec, &coeffs, limit, symmetry)?;
    if !res.w_max_s.is_finite() {
        return Err(infeasible());
    }
    let summary = format!("w_max_s={:?} evaluated={}\n", res.w_max_s, res.evaluated);
    emit(
        artifact(&config, serde_json::to_value(&res).expect("result serializes")),
        out,
        summary,
    )
}

#[derive(Debug, Serialize)]
struct DeltaComparison {
    delta: f64,
    w_opt_s: f64,
    n_off_opt: usize,
    runs: Vec<HeuristicRun>,
    gap_min: f64,
    gap_max: f64,
    gap_median: f64,
    dwmax_pct_min: f64,
    dwmax_pct_max: f64,
    n_off_median: f64,
}

#[derive(Debug, Serialize)]
struct HeuristicRun {
    seed: u64,
    w_max_s: f64,
    gap: f64,
    n_off: usize,
}

fn relative_gap(w: f64, opt: f64) -> CliResult<f64> {
    if opt == 0.0 && w == 0.0 {
        return Ok(0.0);
    }
    Ok(gap(w, opt)?)
}

fn compare_one(
    spec: &PhaseSpec,
    coeffs: &WorkCoefficients,
    params: &LbParams,
    repeats: u64,
    limit: u128,
) -> CliResult<DeltaComparison> {
    let opt = exact_for(spec, coeffs, limit, false)?;
    if !opt.w_max_s.is_finite() {
        return Err(infeasible());
    }
    let opt_ranks: Vec<RankId> = opt.assignment.iter().map(|&r| RankId(r)).collect();
    let n_off_opt = off_home_blocks(spec, &Assignment::new(spec, &opt_ranks)?);

    let mut runs = Vec::new();
    for seed in params.seed..params.seed + repeats {
        let p = LbParams { seed, ..*params };
        let out = ccm_lb(spec, coeffs, &p)?;
        let w = evaluate_assignment(spec, coeffs, out.assignment.as_ranks())?.w_max;
        if w < opt.w_max_s * (1.0 - 1e-12) {
            return Err(CliError::internal(format!(
                "balancer result {w:?} below the exact optimum {:?}",
                opt.w_max_s
            )));
        }
        runs.push(HeuristicRun {
            seed,
            w_max_s: w,
            gap: relative_gap(w, opt.w_max_s)?.max(0.0),
            n_off: off_home_blocks(spec, &out.assignment),
        });
    }
    let gaps: Vec<f64> = runs.iter().map(|r| r.gap).collect();
    let fold = |f: fn(f64, f64) -> f64, init| gaps.iter().copied().fold(init, f);
    let n_offs: Vec<f64> = runs.iter().map(|r| r.n_off as f64).collect();
    Ok(DeltaComparison {
        delta: coeffs.delta,
        w_opt_s: opt.w_max_s,
        n_off_opt,
        gap_min: fold(f64::min, f64::INFINITY),
        gap_max: fold(f64::max, 0.0),
        gap_median: median(&gaps).unwrap_or(0.0),
        dwmax_pct_min: 100.0 * fold(f64::min, f64::INFINITY),
        dwmax_pct_max: 100.0 * fold(f64::max, 0.0),
        n_off_median: median(&n_offs).unwrap_or(0.0),
        runs,
    })
}

fn compare(
    model: &ModelArgs,
    lb: &BalanceArgs,
    repeats: u64,
    deltas: &[f64],
    limit: u128,
    out: Option<&PathBuf>,
) -> CliResult<String> {
    let coeffs = coefficients(model)?;
    let spec = load_spec(&model.spec)?;
    let params = balance_params(lb, &spec)?;
    if repeats == 0 {
        return Err(CliError::config("--repeats must be at least 1"));
    }
    let config = RunConfig {
        balance: Some(params),
        options: json!({ "repeats": repeats, "deltas": deltas, "limit": limit }),
        out: out.map(|p| path_text(p)),
        ..model_config("compare", model, coeffs)
    };
    let grid: Vec<f64> = if deltas.is_empty() {
        vec![coeffs.delta]
    } else {
        deltas.to_vec()
    };
    let mut rows = Vec::new();
    for &delta in &grid {
        let c = WorkCoefficients::new(coeffs.alpha, coeffs.beta, coeffs.gamma, delta, coeffs.enforce_memory)
            .map_err(|e| CliError::config(format!("--deltas: {e}")))?;
        rows.push(compare_one(&spec, &c, &params, repeats, limit)?);
    }
    let mut summary =
        String::from("delta w_opt_s gap_min gap_max dwmax_pct_min dwmax_pct_max n_off_opt n_off_median\n");
    for r in &rows {
        summary.push_str(&format!(
            "{:e} {:?} {:.3e} {:.3e} {:.3} {:.3} {} {}\n",
            r.delta, r.w_opt_s, r.gap_min, r.gap_max, r.dwmax_pct_min, r.dwmax_pct_max, r.n_off_opt, r.n_off_median
        ));
    }
    let mut payload = json!({ "comparisons": rows });
    if grid.len() > 1 {
        let n_off: Vec<f64> = rows.iter().map(|r| r.n_off_median).collect();
        let rho = spearman(&grid, &n_off).unwrap_or(0.0);
        payload["spearman_delta_n_off"] = json!(rho);
        summary.push_str(&format!("spearman_delta_n_off={rho:?}\n"));
    }
    emit(artifact(&config, payload), out, summary)
}

#[derive(Debug, Serialize)]
struct SweepRun {
    seed: u64,
    n_off: Vec<usize>,
    w_max_s: Vec<f64>,
    /// Rank correlation of delta with n_off; 0 when either is constant.
    spearman: f64,
}

fn sweep_delta(
    model: &ModelArgs,
    lb: &BalanceArgs,
    deltas: &[f64],
    repeats: u64,
    out: Option<&PathBuf>,
) -> CliResult<String> {
    let coeffs = coefficients(model)?;
    let spec = load_spec(&model.spec)?;
    let params = balance_params(lb, &spec)?;
    if deltas.len() < 2 {
        return Err(CliError::config("--deltas needs at least two values"));
    }
    let config = RunConfig {
        balance: Some(params),
        options: json!({ "deltas": deltas, "repeats": repeats }),
        out: out.map(|p| path_text(p)),
        ..model_config("sweep-delta", model, coeffs)
    };
    let mut runs = Vec::new();
    for seed in params.seed..params.seed + repeats {
        let mut n_off = Vec::new();
        let mut w = Vec::new();
        for &delta in deltas {
            let c = WorkCoefficients::new(coeffs.alpha, coeffs.beta, coeffs.gamma, delta, coeffs.enforce_memory)
                .map_err(|e| CliError::config(format!("--deltas: {e}")))?;
            let res = ccm_lb(&spec, &c, &LbParams { seed, ..params })?;
            n_off.push(off_home_blocks(&spec, &res.assignment));
            w.push(res.stats.final_.max_work_s);
        }
        let counts: Vec<f64> = n_off.iter().map(|&n| n as f64).collect();
        runs.push(SweepRun {
            seed,
            spearman: spearman(deltas, &counts).unwrap_or(0.0),
            n_off,
            w_max_s: w,
        });
    }
    let nonpositive = runs.iter().filter(|r| r.spearman <= 0.0).count();
    let summary = runs
        .iter()
        .map(|r| format!("seed={} n_off={:?} spearman={:?}\n", r.seed, r.n_off, r.spearman))
        .collect::<String>()
        + &format!("nonpositive={nonpositive}/{}\n", runs.len());
    emit(
        artifact(
            &config,
            json!({ "deltas": deltas, "runs": runs, "nonpositive": nonpositive }),
        ),
        out,
        summary,
    )
}

fn read_table(input: &Path) -> CliResult<SampleTable> {
    SampleTable::from_path(input).map_err(|e| match e {
        ccm_core::CcmError::Domain(m) => CliError::new(ExitStatus::Input, m),
        other => {
            let mut err = CliError::from(other);
            err.message = format!("{}: {}", input.display(), err.message);
            err
        }
    })
}

fn datared(input: &Path, bins: usize, theta: f64, target: usize, seed: u64, out: &Path) -> CliResult<String> {
    let table = read_table(input)?;
    let config = RunConfig {
        options: json!({
            "input": path_text(input), "bins": bins, "theta": theta, "target": target, "seed": seed
        }),
        out: Some(path_text(out)),
        ..RunConfig::new("datared")
    };
    let red = dynamic_data_reduce(&table, bins, theta, target, seed)
        .map_err(|e| CliError::config(format!("--bins/--theta/--target: {e}")))?;
    let mut buf = Vec::new();
    red.table.write_csv(&mut buf)?;
    write(out, &String::from_utf8(buf).expect("csv is utf-8"))?;
    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".json");
    let doc = artifact(
        &config,
        json!({ "rows_in": table.len(), "rows_out": red.table.len(), "kept": red.kept, "log": red.log }),
    );
    write(Path::new(&sidecar), &pretty(&doc))?;
    Ok(format!(
        "rows_in={} rows_out={} passes={}\n",
        table.len(),
        red.table.len(),
        red.log.len()
    ))
}

fn loss(input: &Path, penalty: f64, out: Option<&PathBuf>) -> CliResult<String> {
    let table = read_table(input)?;
    if table.headers.len() != 2 {
        return Err(CliError::new(
            ExitStatus::Input,
            format!("{}: expected columns prediction,truth", input.display()),
        ));
    }
    let predictions: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let truths: Vec<f64> = table.rows.iter().map(|r| r[1]).collect();
    let value = under_penalized_rmse(&predictions, &truths, penalty)
        .map_err(|e| CliError::config(format!("--penalty: {e}")))?;
    let config = RunConfig {
        options: json!({ "input": path_text(input), "penalty": penalty }),
        out: out.map(|p| path_text(p)),
        ..RunConfig::new("loss")
    };
    let line = format!("{value:?}\n");
    match out {
        Some(p) => {
            write(
                p,
                &pretty(&artifact(
                    &config,
                    json!({ "under_penalized_rmse": value, "samples": predictions.len() }),
                )),
            )?;
            Ok(line)
        }
        None => Ok(line),
    }
}

fn verify(spec_path: &Path, assignment: &[usize], all: bool, limit: u128, out: Option<&PathBuf>) -> CliResult<String> {
    let spec = load_spec(spec_path)?;
    let config = RunConfig {
        spec: Some(path_text(spec_path)),
        options: json!({ "assignment": assignment, "all": all, "limit": limit }),
        out: out.map(|p| path_text(p)),
        ..RunConfig::new("verify-theorems")
    };
    let candidates: Vec<Vec<RankId>> = if all {
        let required = assignment_count(spec.rank_count(), spec.task_count());
        if required > limit {
            return Err(ccm_core::CcmError::EnumerationLimit { required, limit }.into());
        }
        let mut list = Vec::new();
        let mut digits = vec![0usize; spec.task_count()];
        loop {
            list.push(digits.iter().map(|&d| RankId(d)).collect());
            let Some(pos) = (0..digits.len()).rev().find(|&p| digits[p] + 1 < spec.rank_count()) else {
                break;
            };
            digits[pos] += 1;
            digits[pos + 1..].iter_mut().for_each(|d| *d = 0);
        }
        list
    } else if assignment.is_empty() {
        vec![spec.initial_assignment().to_vec()]
    } else {
        if assignment.len() != spec.task_count() {
            return Err(CliError::config(format!(
                "--assignment lists {} ranks for {} tasks",
                assignment.len(),
                spec.task_count()
            )));
        }
        if let Some(&bad) = assignment.iter().find(|&&r| r >= spec.rank_count()) {
            return Err(CliError::config(format!(
                "--assignment names rank {bad} of {}",
                spec.rank_count()
            )));
        }
        vec![assignment.iter().map(|&r| RankId(r)).collect()]
    };

    let mut failures = Vec::new();
    let mut last = None;
    for ranks in &candidates {
        let report = verify_theorems(&spec, &chi_of(spec.rank_count(), ranks))?;
        if !report.holds() {
            failures.push(ranks.iter().map(|r| r.0).collect::<Vec<_>>());
        }
        last = Some(report);
    }
    let mut payload = json!({ "checked": candidates.len(), "failures": failures });
    if !all {
        payload["report"] = serde_json::to_value(last.expect("one candidate")).expect("report serializes");
    }
    let text = emit(
        artifact(&config, payload),
        out,
        format!("checked={} failures={}\n", candidates.len(), failures.len()),
    )?;
    if failures.is_empty() {
        Ok(text)
    } else {
        Err(CliError::internal(format!(
            "linking relations fail for {} assignments",
            failures.len()
        )))
    }
}
