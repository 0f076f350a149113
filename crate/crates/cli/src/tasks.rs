use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use cpp_core::complex::Chain;
use cpp_core::duality::{dual_params, verify_duality_exact, verify_duality_mc, DualParams};
use cpp_core::homology::min_area;
use cpp_core::measures::{
    enumerate_kappa_joint, enumerate_mu, enumerate_rho, exact_wilson, rational_to_f64, EnumGuard, ModelParams,
};
use cpp_core::observables::{mf_ratio, perimeter, rect_loop, square_loop, Estimate};
use cpp_core::sampler::{run_chain, McParams, Observable, RunConfig};
use cpp_core::selftest;
use cpp_core::Error;
use serde::Serialize;
use serde_json::json;

use crate::config::{GeometryKind, Measure, Opts};

pub const SCHEMA_VERSION: u32 = 1;

struct Output {
    body: String,
    code: u8,
    extra_files: Vec<PathBuf>,
}

impl Output {
    fn ok(body: String) -> Self {
        Output {
            body,
            code: 0,
            extra_files: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    task: &'a str,
    config: &'a Opts,
    seed: Option<u64>,
    started_unix_ms: u128,
    elapsed_ms: u128,
    outputs: Vec<String>,
    warnings: &'a [String],
    exit_code: u8,
}

fn is_randomized(task: &str, opts: &Opts) -> bool {
    match task {
        "sample" | "mf-ratio" => true,
        "wilson" => !Opts::flag(opts.exact),
        "duality-check" => Opts::flag(opts.mc),
        _ => false,
    }
}

pub fn dispatch(task: &str, opts: Opts) -> anyhow::Result<u8> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut opts = opts.resolve()?;
    let task = match task {
        "run" => opts
            .task
            .clone()
            .ok_or_else(|| Error::InvalidParameter("config has no \"task\"".into()))?,
        t => t.to_string(),
    };
    opts.task = Some(task.clone());
    opts.prime()?;
    if is_randomized(&task, &opts) && opts.seed.is_none() {
        let seed = started.duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0);
        eprintln!("seed: {seed}");
        opts.seed = Some(seed);
    }
    let mut warnings = Vec::new();
    if opts.geometry == Some(GeometryKind::Torus) && opts.side == Some(1) {
        let w = "torus of period 1: every boundary map is zero".to_string();
        eprintln!("warning: {w}");
        warnings.push(w);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(1).max(1))
        .build()
        .context("building thread pool")?;
    let out = pool.install(|| match task.as_str() {
        "enumerate" => enumerate(&opts),
        "sample" => sample(&opts),
        "wilson" => wilson(&opts),
        "mf-ratio" => mf_ratio_scan(&opts, &mut warnings),
        "duality-check" => duality_check(&opts),
        "selftest" => Ok(selftest_report()),
        "min-area" => min_area_task(&opts),
        other => Err(Error::InvalidParameter(format!("unknown task {other:?}")).into()),
    })?;

    let mut outputs = Vec::new();
    match &opts.out {
        Some(path) => {
            std::fs::write(path, &out.body).with_context(|| format!("writing {}", path.display()))?;
            outputs.push(path.display().to_string());
        }
        None => print!("{}", out.body),
    }
    outputs.extend(out.extra_files.iter().map(|p| p.display().to_string()));
    let manifest_path = opts.manifest.clone().or_else(|| {
        opts.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    });
    if let Some(path) = manifest_path {
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            tool: "cpp-lab",
            version: env!("CARGO_PKG_VERSION"),
            task: &task,
            config: &opts,
            seed: opts.seed,
            started_unix_ms: started.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
            elapsed_ms: clock.elapsed().as_millis(),
            outputs,
            warnings: &warnings,
            exit_code: out.code,
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(out.code)
}

fn json_body(v: serde_json::Value) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn params_json(p: &ModelParams) -> serde_json::Value {
    json!({
        "q": p.q.get(),
        "i": p.i,
        "k2": p.k2.to_string(),
        "k1": p.k1.to_string(),
        "p2": p.k2.p().to_string(),
        "p1": p.k1.p().to_string(),
        "r": p.r_or_q().to_string(),
    })
}

fn dual_json(d: &DualParams) -> serde_json::Value {
    json!({
        "i": d.i_dual,
        "k2": d.k2.to_string(),
        "k1": d.k1.to_string(),
        "p2": d.p2_dual().to_string(),
        "p1": d.p1_dual().to_string(),
    })
}

fn run_config(opts: &Opts, params: &ModelParams) -> cpp_core::Result<RunConfig> {
    if params.r.is_some() {
        return Err(Error::InvalidParameter("the sampler targets r = q; drop --r".into()));
    }
    let mut cfg = RunConfig::new(McParams::from_model(params)?, opts.samples.unwrap_or(10_000), opts.seed.unwrap_or(0));
    if let Some(b) = opts.burn_in {
        cfg.burn_in = b;
    }
    if let Some(t) = opts.thinning {
        cfg.thinning = t;
    }
    if let Some(c) = opts.chains {
        cfg.n_chains = c;
    }
    if let Some(b) = opts.batches {
        cfg.n_batches = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_loop_degree(params: &ModelParams) -> cpp_core::Result<()> {
    if params.i != 1 {
        return Err(Error::InvalidParameter(format!("loops are 1-chains; got i = {}", params.i)));
    }
    Ok(())
}

fn enumerate(opts: &Opts) -> anyhow::Result<Output> {
    let x = opts.complex(2)?;
    let params = opts.model()?;
    params.validate(&x)?;
    let guard = EnumGuard::default();
    let dist = match opts.measure.unwrap_or(Measure::Rho) {
        Measure::Mu => enumerate_mu(&params, &x, &guard)?,
        Measure::Rho => enumerate_rho(&params, &x, &guard)?,
        Measure::Kappa => enumerate_kappa_joint(&params, &x, &guard)?,
    };
    Ok(Output::ok(dist.to_csv()))
}

fn estimates_csv(names: &[String], est: &[Estimate]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["observable", "mean", "std_err", "n_samples"])?;
    for (name, e) in names.iter().zip(est) {
        w.write_record([name.clone(), e.mean.to_string(), e.std_err.to_string(), e.n_samples.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn sample(opts: &Opts) -> anyhow::Result<Output> {
    let x = opts.complex(2)?;
    let params = opts.model()?;
    params.validate(&x)?;
    let mut cfg = run_config(opts, &params)?;
    cfg.keep_series = opts.series.is_some();
    let mut obs = vec![Observable::OpenUpper, Observable::OpenLower];
    if let Some(n) = opts.loop_side {
        require_loop_degree(&params)?;
        let fam = rect_loop(n, x.ambient_dim(), &x, params.q)?;
        obs.extend([
            Observable::VEvent(fam.gamma.clone()),
            Observable::WilsonRe(fam.gamma.clone()),
            Observable::WilsonIm(fam.gamma),
        ]);
    }
    let res = run_chain(&cfg, &x, &obs)?;
    let names: Vec<String> = obs.iter().map(|o| o.name().to_string()).collect();
    let mut out = Output::ok(estimates_csv(&names, &res.estimates)?);
    if let (Some(path), Some(series)) = (&opts.series, &res.series) {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["chain", "sweep", "observable", "value"])?;
        for (c, chain) in series.iter().enumerate() {
            for k in 0..cfg.n_samples as usize {
                let sweep = cfg.burn_in + (k as u64 + 1) * cfg.thinning;
                for (o, name) in names.iter().enumerate() {
                    w.write_record([c.to_string(), sweep.to_string(), name.clone(), chain[o][k].to_string()])?;
                }
            }
        }
        w.flush()?;
        out.extra_files.push(path.clone());
    }
    Ok(out)
}

fn wilson(opts: &Opts) -> anyhow::Result<Output> {
    let n = opts.loop_side.unwrap_or(2);
    let x = opts.complex(n)?;
    let params = opts.model()?;
    params.validate(&x)?;
    require_loop_degree(&params)?;
    let gamma = rect_loop(n, x.ambient_dim(), &x, params.q)?.gamma;
    let body = if Opts::flag(opts.exact) {
        let w = exact_wilson(&params, &x, &gamma, &EnumGuard::default())?;
        let rhs = rational_to_f64(&w.rhs);
        let difference = match &w.lhs_exact {
            Some(l) => (l - &w.rhs).to_string(),
            None => ((w.lhs.re - rhs).hypot(w.lhs.im)).to_string(),
        };
        json!({
            "params": params_json(&params),
            "loop": n,
            "perimeter": perimeter(&gamma),
            "expected_wilson": {"re": w.lhs.re, "im": w.lhs.im, "exact": w.lhs_exact.map(|r| r.to_string())},
            "v_probability": {"exact": w.rhs.to_string(), "value": rhs},
            "difference": difference,
        })
    } else {
        let cfg = run_config(opts, &params)?;
        let obs = [
            Observable::WilsonRe(gamma.clone()),
            Observable::WilsonIm(gamma.clone()),
            Observable::VEvent(gamma.clone()),
        ];
        let res = run_chain(&cfg, &x, &obs)?;
        let (w, v) = (res.estimates[0], res.estimates[2]);
        let se = w.std_err.hypot(v.std_err);
        json!({
            "params": params_json(&params),
            "loop": n,
            "perimeter": perimeter(&gamma),
            "expected_wilson": {"re": w, "im": res.estimates[1]},
            "v_probability": v,
            "difference": w.mean - v.mean,
            "z": if se > 0.0 { (w.mean - v.mean).abs() / se } else { 0.0 },
        })
    };
    Ok(Output::ok(json_body(body)?))
}

fn mf_ratio_scan(opts: &Opts, warnings: &mut Vec<String>) -> anyhow::Result<Output> {
    let x = opts.complex(12)?;
    let params = opts.model()?;
    params.validate(&x)?;
    require_loop_degree(&params)?;
    let sides = opts.loop_sides.clone().unwrap_or_else(|| vec![2, 4, 6]);
    let topological = Opts::flag(opts.topological);
    let mut obs = Vec::new();
    for &n in &sides {
        let fam = rect_loop(n, x.ambient_dim(), &x, params.q)?;
        let half = |c: Chain| if topological { Observable::VEvent(c) } else { Observable::WilsonRe(c) };
        obs.push(half(fam.gamma_prime));
        obs.push(half(fam.gamma));
    }
    let cfg = run_config(opts, &params)?;
    let res = run_chain(&cfg, &x, &obs)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "p2", "p1", "q", "estimate", "std_err"])?;
    for (k, &n) in sides.iter().enumerate() {
        let (half, full) = (&res.estimates[2 * k], &res.estimates[2 * k + 1]);
        let (mean, se) = match mf_ratio(half, full) {
            Ok(r) => {
                if r.near_degenerate {
                    warnings.push(format!("n = {n}: denominator within two standard errors of zero"));
                }
                (r.estimate.mean, r.estimate.std_err)
            }
            Err(e @ Error::DegenerateDenominator { .. }) => {
                warnings.push(format!("n = {n}: {e}"));
                (f64::NAN, f64::NAN)
            }
            Err(e) => return Err(e.into()),
        };
        w.write_record([
            n.to_string(),
            params.k2.p_f64().to_string(),
            params.k1.p_f64().to_string(),
            params.q.get().to_string(),
            mean.to_string(),
            se.to_string(),
        ])?;
    }
    for warning in warnings.iter() {
        eprintln!("warning: {warning}");
    }
    Ok(Output::ok(String::from_utf8(w.into_inner()?)?))
}

fn duality_check(opts: &Opts) -> anyhow::Result<Output> {
    let mut o = opts.clone();
    o.geometry.get_or_insert(GeometryKind::Torus);
    let x = o.complex(2)?;
    let params = o.model()?;
    params.validate(&x)?;
    let dual = dual_params(&params, x.ambient_dim())?;
    let body = if Opts::flag(o.mc) {
        let cfg = run_config(&o, &params)?;
        let comparisons = verify_duality_mc(&params, &x, &cfg)?;
        let max_z = comparisons.iter().map(|c| c.z).fold(0.0, f64::max);
        json!({
            "params": params_json(&params),
            "dual_params": dual_json(&dual),
            "comparisons": comparisons,
            "max_z": max_z,
        })
    } else {
        let rep = verify_duality_exact(&params, &x, &EnumGuard::default())?;
        json!({
            "params": params_json(&params),
            "dual_params": dual_json(&rep.dual),
            "max_discrepancy": rep.max_discrepancy.to_string(),
            "states_checked": rep.states_checked,
        })
    };
    Ok(Output::ok(json_body(body)?))
}

fn selftest_report() -> Output {
    let results = selftest::run_all();
    let mut body = String::new();
    for r in &results {
        body.push_str(&format!("{} {}: {}\n", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail));
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    body.push_str(&format!("{} checks, {failed} failed\n", results.len()));
    Output {
        body,
        code: u8::from(failed > 0),
        extra_files: Vec::new(),
    }
}

fn min_area_task(opts: &Opts) -> anyhow::Result<Output> {
    let n = opts.loop_side.unwrap_or(2);
    let x = opts.complex(n)?;
    let q = opts.prime()?;
    let gamma = square_loop(n, x.ambient_dim(), &x, q)?;
    let area = min_area(&x, &gamma, q, opts.budget.unwrap_or(1 << 24))?;
    let d = x.ambient_dim() as f64;
    let len = perimeter(&gamma);
    let bound = (d - 1.0) / (8.0 * d) * (len * len) as f64;
    Ok(Output::ok(json_body(json!({
        "loop": n,
        "perimeter": len,
        "min_area": area,
        "isoperimetric_bound": bound,
    }))?))
}
