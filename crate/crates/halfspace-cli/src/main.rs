mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{parse_range, Format, ModelName, ProblemKind, RunConfig};
use halfspace::collision_operator::{build_bgk_operator, coercivity_gamma, validate_assumptions, NuProfile};
use halfspace::halfspace_solver::{
    residual_samples, solve_kramer, solve_milne, ModelProblem, SolverOptions, SourceTerm, TransportSolution,
};
use halfspace::kernel_spectral::{basis_residuals, degenerate_speeds, model_speeds, orthogonal_kernel_basis, BasisOptions};
use halfspace::model_catalog::{build_space, equilibrium, ModelSpec, WallState};
use halfspace::penalization::{build_penalized_operator, coercivity_check, penalty_constants};
use halfspace::regime_analysis::{measure_decay, signature_regimes, sweep_signature, uniform_decay_study, DegenerateTarget, StudyOptions};
use halfspace::velocity_space::split_half_spaces;
use halfspace::{GridSpec, Vector};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "halfspace", version, about = "Half-space problems for linearized kinetic models on discrete velocity grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model preset, used when no config is given.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Flow speed.
    #[arg(long, global = true, allow_hyphen_values = true)]
    u: Option<f64>,
    /// Speed range `a:b:n`.
    #[arg(long = "u-range", global = true, allow_hyphen_values = true)]
    u_range: Option<String>,
    /// Impose the extra conditions near a degenerate speed.
    #[arg(long = "extra-conditions", global = true)]
    extra_conditions: bool,
    /// Output directory; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Degenerate speeds of the model against the closed form.
    Speeds,
    /// Signature at one speed or over a range.
    Signature,
    /// Kernel basis adapted to the transport form, with identity residuals.
    Basis,
    /// Penalty constants and the coercivity check.
    Coercivity,
    /// Solve a half-space problem.
    Solve,
    /// Signature sweep, plus the decay study near a degenerate speed.
    Sweep,
    /// Check the operator hypotheses and coercivity.
    Validate,
    /// Print the resolved configuration as TOML.
    Config,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Speeds => "speeds",
            Command::Signature => "signature",
            Command::Basis => "basis",
            Command::Coercivity => "coercivity",
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Validate => "validate",
            Command::Config => "config",
        }
    }
}

/// Failed hypothesis or numerical check; exit code 2.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

struct Output {
    json: Value,
    /// Header and rows for the CSV form.
    table: (Vec<String>, Vec<Vec<Value>>),
    failed: Option<String>,
}

fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn fmt12(x: f64) -> String {
    let r = round12(x);
    if r == 0.0 {
        "0".into()
    } else if !r.is_finite() {
        format!("{r}")
    } else if r.abs() < 1e-4 || r.abs() >= 1e15 {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if !n.is_i64() && !n.is_u64() => {
            n.as_f64().map(|x| json!(round12(x))).unwrap_or(Value::Number(n))
        }
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize(v))).collect()),
        other => other,
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_i64() || n.is_u64() => n.to_string(),
        Value::Number(n) => fmt12(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, &cli.model) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(m)) => RunConfig::preset(m.parse::<ModelName>()?),
        (None, None) => bail!("either --config or --model is required"),
    };
    if cli.config.is_some() {
        if let Some(m) = &cli.model {
            cfg.model.name = m.parse()?;
        }
    }
    if let Some(u) = cli.u {
        cfg.run.u = Some(u);
    }
    if let Some(r) = &cli.u_range {
        cfg.run.u_range = Some(parse_range(r)?);
    }
    if cli.extra_conditions {
        cfg.run.extra_conditions = true;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = Some(o.display().to_string());
    }
    if let Some(f) = cli.format {
        cfg.output.format = Some(f);
    }
    Ok(cfg)
}

struct Setup {
    model: ModelSpec,
    grid: GridSpec,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    Ok(Setup { model: cfg.model.build()?, grid: cfg.grid.build(&cfg.model) })
}

fn require_u(cfg: &RunConfig) -> Result<f64> {
    cfg.run.u.ok_or_else(|| anyhow!(halfspace::Error::InvalidInput("this command needs --u (or run.u in the config)".into())))
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions { penalty: cfg.penalty, ..Default::default() }
}

fn cmd_speeds(s: &Setup) -> Result<Output> {
    let r = model_speeds(&s.model, &s.grid, 1e-6)?;
    let json = serde_json::to_value(&r)?;
    let table = (
        ["family", "u0", "u_plus", "u_minus", "closed_form_u_plus", "deviation"].map(String::from).to_vec(),
        vec![vec![json!(r.family), json!(r.u0), json!(r.u_plus), json!(r.u_minus), json!(r.closed_form_u_plus), json!(r.deviation)]],
    );
    Ok(Output { json, table, failed: None })
}

fn signature_header() -> Vec<String> {
    ["u", "k_plus", "k_minus", "l", "degenerate"].map(String::from).to_vec()
}

fn cmd_signature(s: &Setup, cfg: &RunConfig) -> Result<Output> {
    if let Some((a, b, n)) = cfg.run.u_range {
        let rows = sweep_signature(&s.model, &s.grid, a, b, n)?;
        let table = rows.iter().map(|r| vec![json!(r.u), json!(r.k_plus), json!(r.k_minus), json!(r.l), json!(r.degenerate)]).collect();
        let json = json!({ "rows": rows, "regimes": signature_regimes(&rows) });
        return Ok(Output { json, table: (signature_header(), table), failed: None });
    }
    let u = require_u(cfg)?;
    let space = build_space(&s.model, &s.grid)?;
    let eq = equilibrium(&s.model, &space)?;
    let op = build_bgk_operator(&s.model, &space, &eq, &NuProfile::hard_sphere_like(), u)?;
    let sig = halfspace::kernel_spectral::signature(&op)?.signature;
    Ok(Output {
        json: json!({ "u": u, "k_plus": sig.k_plus, "k_minus": sig.k_minus, "l": sig.l }),
        table: (signature_header(), vec![vec![json!(u), json!(sig.k_plus), json!(sig.k_minus), json!(sig.l), json!(false)]]),
        failed: None,
    })
}

fn cmd_basis(s: &Setup, cfg: &RunConfig) -> Result<Output> {
    let u = require_u(cfg)?;
    let space = build_space(&s.model, &s.grid)?;
    let eq = equilibrium(&s.model, &space)?;
    let op = build_bgk_operator(&s.model, &space, &eq, &NuProfile::hard_sphere_like(), u)?;
    let kb = orthogonal_kernel_basis(&op, BasisOptions::default())?;
    let res = basis_residuals(&op, &kb);
    let json = json!({
        "u": u,
        "signature": kb.signature,
        "beta": kb.beta,
        "alpha": kb.alpha,
        "gamma": kb.gamma,
        "beta_min": kb.beta_min,
        "beta_hat_max": kb.beta_hat_max,
        "range_residual": kb.range_residual,
        "residuals": res,
    });
    let mut rows = Vec::new();
    for (i, b) in kb.beta.iter().enumerate() {
        rows.push(vec![json!("beta"), json!(i + 1), json!(b)]);
    }
    for (r, a) in kb.alpha.iter().enumerate() {
        rows.push(vec![json!("alpha"), json!(r + 1), json!(a)]);
    }
    for (r, g) in kb.gamma.iter().enumerate() {
        rows.push(vec![json!("gamma"), json!(r + 1), json!(g)]);
    }
    rows.push(vec![json!("residual_max"), json!(0), json!(res.max)]);
    Ok(Output { json, table: (["quantity", "index", "value"].map(String::from).to_vec(), rows), failed: None })
}

fn cmd_coercivity(s: &Setup, cfg: &RunConfig) -> Result<Output> {
    let u = require_u(cfg)?;
    let space = build_space(&s.model, &s.grid)?;
    let eq = equilibrium(&s.model, &space)?;
    let op = build_bgk_operator(&s.model, &space, &eq, &NuProfile::hard_sphere_like(), u)?;
    let kb = orthogonal_kernel_basis(&op, BasisOptions::default())?;
    let gamma = coercivity_gamma(&op);
    let pc = penalty_constants(&kb, gamma, cfg.penalty)?;
    let rep = coercivity_check(&build_penalized_operator(&op, &kb, &pc));
    let failed = (!rep.pass).then(|| format!("coercivity fails: min eig(sym Λ) = {} < μ = {}", rep.min_eig, rep.mu));
    let json = json!({ "u": u, "constants": pc, "check": rep });
    let table = (
        ["u", "sigma", "alpha", "beta", "mu", "min_eig", "pass"].map(String::from).to_vec(),
        vec![vec![json!(u), json!(rep.sigma), json!(rep.alpha), json!(rep.beta), json!(rep.mu), json!(rep.min_eig), json!(rep.pass)]],
    );
    Ok(Output { json, table, failed })
}

/// Generic source profile in the range of `L`, unit norm.
fn generic_source(p: &ModelProblem, amplitude: f64, salt: f64) -> Vector {
    let op = &p.ctx.op;
    let mut v = Vector::from_fn(op.dim(), |k, _| op.sqrt_weights[k] * ((0.37 + salt) * k as f64).sin());
    v -= op.kernel_projection(&v);
    let n = v.norm();
    if n > 0.0 {
        v *= amplitude / n;
    }
    v
}

fn default_wall(model: &ModelSpec, u: f64) -> WallState {
    let mut w = WallState::far_field(model, u);
    w.temperature *= 1.05;
    for d in w.densities.iter_mut() {
        *d *= 1.02;
    }
    w
}

fn cmd_solve(s: &Setup, cfg: &RunConfig) -> Result<Output> {
    let u = require_u(cfg)?;
    let p = ModelProblem::new(&s.model, &s.grid, u, cfg.boundary, &solver_options(cfg))?;
    let wall = cfg.run.wall.clone().unwrap_or_else(|| default_wall(&s.model, u));
    let fb = p.wall_data(&wall)?;
    let mut source = SourceTerm::zero();
    for (i, src) in cfg.run.sources.iter().enumerate() {
        source.terms.push((src.rate, generic_source(&p, src.amplitude, i as f64 * 0.11)));
    }
    let kb = &p.ctx.basis;
    let sol: TransportSolution = match cfg.run.problem {
        ProblemKind::Decaying => p.solve(&wall, &source)?,
        ProblemKind::Milne => {
            let m = if cfg.run.moments.is_empty() { vec![1.0; kb.signature.k_minus] } else { cfg.run.moments.clone() };
            solve_milne(&p.ctx, &fb, &source, &m)?
        }
        ProblemKind::Kramer => {
            if !source.is_empty() {
                bail!(halfspace::Error::InvalidInput("the linear-growth problem takes no source".into()));
            }
            let m = if cfg.run.moments.is_empty() { vec![1.0; kb.signature.k_minus] } else { cfg.run.moments.clone() };
            let g = if cfg.run.growth.is_empty() { vec![1.0; kb.l()] } else { cfg.run.growth.clone() };
            solve_kramer(&p.ctx, &fb, &m, &g, cfg.run.pairing)?
        }
    };
    let decay = if cfg.run.problem == ProblemKind::Decaying { measure_decay(&sol.profile).ok() } else { None };
    let corrected_wall = sol.admissible.as_ref().filter(|a| !a.used_unit_directions).map(|a| {
        wall.params().iter().zip(&a.delta).map(|(p, d)| p + d).collect::<Vec<f64>>()
    });
    let json = json!({
        "u": u,
        "problem": cfg.run.problem,
        "signature": sol.signature,
        "sigma": sol.sigma,
        "conditions": sol.conditions,
        "free_parameters": p.free_parameters(&sol),
        "boundary_fit_condition": sol.damped.fit_condition,
        "residuals": {
            "equation": sol.equation_residual,
            "penalized": sol.penalized_residual,
            "undamped": sol.undamped_residual,
            "boundary": sol.boundary_residual,
        },
        "removal": sol.removal,
        "admissible": sol.admissible,
        "wall_parameters": wall.params(),
        "corrected_wall_parameters": corrected_wall,
        "asymptotic": sol.asymptotic,
        "decay": decay,
    });
    let rows = residual_samples(sol.sigma)
        .into_iter()
        .map(|x| {
            let f = sol.profile.eval(x);
            vec![json!(x), json!(f.norm()), json!(sol.damped.at(x).norm())]
        })
        .collect();
    let failed = (sol.equation_residual > 1e-8).then(|| format!("equation residual {} exceeds 1e-8", sol.equation_residual));
    Ok(Output { json, table: (["x", "norm_f", "norm_g"].map(String::from).to_vec(), rows), failed })
}

fn cmd_sweep(s: &Setup, cfg: &RunConfig) -> Result<Output> {
    let (a, b, n) = cfg.run.u_range.unwrap_or((-2.0, 2.0, 81));
    let rows = sweep_signature(&s.model, &s.grid, a, b, n)?;
    let study = if cfg.run.extra_conditions || cfg.run.target.is_some() {
        let opts = StudyOptions {
            target: cfg.run.target.unwrap_or(DegenerateTarget::Plus),
            delta: cfg.run.delta,
            samples_per_side: 9,
            extra_conditions: cfg.run.extra_conditions,
        };
        Some(uniform_decay_study(&s.model, &s.grid, &opts)?)
    } else {
        None
    };
    let json = json!({ "rows": rows, "regimes": signature_regimes(&rows), "study": study });
    let table = match &study {
        Some(r) => (
            ["u", "k_plus", "k_minus", "l", "sigma_u_flag_on", "sigma_u_flag_off"].map(String::from).to_vec(),
            r.samples
                .iter()
                .map(|x| vec![json!(x.u), json!(x.signature.k_plus), json!(x.signature.k_minus), json!(x.signature.l), json!(x.sigma_on), json!(x.sigma_off)])
                .collect(),
        ),
        None => (signature_header(), rows.iter().map(|r| vec![json!(r.u), json!(r.k_plus), json!(r.k_minus), json!(r.l), json!(r.degenerate)]).collect()),
    };
    let failed = study.as_ref().filter(|r| !r.uniform).map(|r| {
        format!("decay is not uniform near u0 = {}: min σ_u / edge σ_u = {}", r.u0, r.on_min_over_edges)
    });
    Ok(Output { json, table, failed })
}

fn cmd_validate(s: &Setup, cfg: &RunConfig) -> Result<Output> {
    let space = build_space(&s.model, &s.grid)?;
    let eq = equilibrium(&s.model, &space)?;
    let op0 = build_bgk_operator(&s.model, &space, &eq, &NuProfile::hard_sphere_like(), 0.0)?;
    let u = match cfg.run.u {
        Some(u) => u,
        None => 0.5 * degenerate_speeds(&op0)?.u_plus(),
    };
    split_half_spaces(&space, u).map_err(|e| CheckFailed(format!("{e}")))?;
    let op = op0.with_transport(&space, u);
    let rep = validate_assumptions(&op);
    let mut failed = (!rep.pass).then(|| format!("operator hypotheses fail: {}", serde_json::to_string(&rep).unwrap_or_default()));
    let coercivity = match orthogonal_kernel_basis(&op, BasisOptions::default())
        .and_then(|kb| penalty_constants(&kb, rep.gamma, cfg.penalty).map(|pc| coercivity_check(&build_penalized_operator(&op, &kb, &pc))))
    {
        Ok(c) => {
            if !c.pass && failed.is_none() {
                failed = Some(format!("coercivity fails: min eig(sym Λ) = {} < μ = {}", c.min_eig, c.mu));
            }
            Some(c)
        }
        Err(e) => {
            failed.get_or_insert_with(|| format!("{e}"));
            None
        }
    };
    let json = json!({ "u": u, "assumptions": rep, "coercivity": coercivity, "pass": failed.is_none() });
    let table = (
        ["u", "symmetry_residual", "min_eigenvalue", "kernel_residual", "gamma", "coercive", "pass"].map(String::from).to_vec(),
        vec![vec![
            json!(u),
            json!(rep.symmetry_residual),
            json!(rep.min_eigenvalue),
            json!(rep.kernel_residual),
            json!(rep.gamma),
            json!(coercivity.as_ref().is_some_and(|c| c.pass)),
            json!(failed.is_none()),
        ]],
    );
    Ok(Output { json, table, failed })
}

fn emit(command: Command, out: &Output, dir: Option<&str>, format: Format) -> Result<()> {
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&normalize(out.json.clone()))? + "\n",
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&out.table.0)?;
            for row in &out.table.1 {
                w.write_record(row.iter().map(cell))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?
        }
    };
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d).with_context(|| format!("cannot create {d}"))?;
            let ext = if format == Format::Json { "json" } else { "csv" };
            let path = Path::new(d).join(format!("{}.{ext}", command.name()));
            std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Option<String>> {
    let cfg = load_config(cli)?;
    if cli.command == Command::Config {
        print!("{}", cfg.to_toml()?);
        return Ok(None);
    }
    let s = setup(&cfg)?;
    let out = match cli.command {
        Command::Speeds => cmd_speeds(&s)?,
        Command::Signature => cmd_signature(&s, &cfg)?,
        Command::Basis => cmd_basis(&s, &cfg)?,
        Command::Coercivity => cmd_coercivity(&s, &cfg)?,
        Command::Solve => cmd_solve(&s, &cfg)?,
        Command::Sweep => cmd_sweep(&s, &cfg)?,
        Command::Validate => cmd_validate(&s, &cfg)?,
        Command::Config => unreachable!(),
    };
    emit(cli.command, &out, cfg.output.dir.as_deref(), cfg.output.format.unwrap_or_default())?;
    Ok(out.failed)
}

/// Input problems exit with 1, failed checks with 2.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<CheckFailed>().is_some() {
        return 2;
    }
    match e.downcast_ref::<halfspace::Error>() {
        Some(halfspace::Error::InvalidInput(_) | halfspace::Error::DimensionMismatch { .. } | halfspace::Error::Unsupported(_)) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
