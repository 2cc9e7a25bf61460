use std::fs;
use std::path::{Path, PathBuf};

use mweyl_core::dynamics::{omega_limit, OmegaMethod, OmegaOptions};
use mweyl_core::experiments::{
    bp_defect, describe_scan, fmt_f64, reflectionless_scan, trace_csv, BpOptions, MinusSeed, Provenance,
};
use mweyl_core::harmonic::harmonic_measure;
use mweyl_core::matcore::operator_norm;
use mweyl_core::siegel::{
    hyperbolic_distance, mobius, random_real_symplectic, random_siegel_point, segment_length, siegel_distance,
    siegel_distance_report, SiegelPoint,
};
use mweyl_core::weyl::{m_minus, m_plus, m_plus_at, m_tilde_minus, resolvent_oracle, WeylEvaluation};
use mweyl_core::{CMatrix, IntervalUnion, PotentialSpec, Support, WeylOptions};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{parse_complex, parse_intervals, MatrixJson, RunConfig, SpecSource};
use crate::{BpArgs, Cli, CliError, Command, MfunctionArgs, OmegaArgs, ReflectionlessArgs, SiegelArgs};

struct Outputs {
    dir: PathBuf,
    prov: Provenance,
    verbose: bool,
}

impl Outputs {
    fn write(&self, experiment: &str, params: &str, ext: &str, content: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", self.dir.display())))?;
        let path = self.prov.path(&self.dir, experiment, params, ext);
        fs::write(&path, content).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn json(&self, experiment: &str, params: &str, summary: &Value) -> Result<PathBuf, CliError> {
        let mut v = summary.clone();
        if let Value::Object(map) = &mut v {
            map.insert("version".into(), json!(self.prov.version));
            map.insert("config_hash".into(), json!(self.prov.config_hash));
        }
        let text = serde_json::to_string_pretty(&v).expect("summary serializes");
        println!("{text}");
        self.write(experiment, params, "json", &(text + "\n"))
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (mut cfg, base) = match &cli.config {
        Some(p) => (
            RunConfig::from_file(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (RunConfig::default(), PathBuf::new()),
    };
    match &cli.command {
        Command::Mfunction(a) => mfunction(cli, merge_m(&mut cfg, a), &base),
        Command::Reflectionless(a) => {
            merge_r(&mut cfg, a)?;
            reflectionless(cli, &cfg, &base)
        }
        Command::BpDefect(a) => {
            merge_bp(&mut cfg, a)?;
            bp(cli, &cfg, &base)
        }
        Command::Omega(a) => omega(cli, merge_o(&mut cfg, a), &base),
        Command::SiegelDist(a) => {
            merge_s(&mut cfg, a)?;
            siegel(cli, &cfg)
        }
        Command::Selftest => selftest(),
    }
}

fn set_spec(cfg: &mut RunConfig, spec: &Option<PathBuf>) {
    if let Some(p) = spec {
        cfg.spec = Some(SpecSource::Path(std::env::current_dir().unwrap_or_default().join(p)));
    }
}

fn merge_m<'a>(cfg: &'a mut RunConfig, a: &MfunctionArgs) -> &'a RunConfig {
    set_spec(cfg, &a.spec.spec);
    cfg.z = a.z.clone().or(cfg.z.take());
    cfg.side = a.side.clone().or(cfg.side.take());
    cfg.site = a.site.or(cfg.site);
    cfg.tol = a.tol.or(cfg.tol);
    cfg
}

fn merge_r(cfg: &mut RunConfig, a: &ReflectionlessArgs) -> Result<(), CliError> {
    set_spec(cfg, &a.spec.spec);
    if let Some(s) = &a.a {
        cfg.a = Some(parse_intervals(s)?);
    }
    cfg.eps = a.eps.clone().or(cfg.eps.take());
    cfg.grid_step = a.grid_step.or(cfg.grid_step);
    Ok(())
}

fn merge_bp(cfg: &mut RunConfig, a: &BpArgs) -> Result<(), CliError> {
    set_spec(cfg, &a.spec.spec);
    cfg.n_list = a.n_list.clone().or(cfg.n_list.take());
    if let Some(s) = &a.a {
        cfg.a = Some(parse_intervals(s)?);
    }
    if let Some(s) = &a.s {
        cfg.s = Some(parse_intervals(s)?);
    }
    cfg.c = a.c.clone().or(cfg.c.take());
    if let Some(e) = a.eps {
        cfg.eps = Some(vec![e]);
    }
    if let Some(m) = &a.minus_seed {
        cfg.minus_seed = Some(match m.as_str() {
            "dirichlet" => MinusSeed::Dirichlet,
            "deep" => MinusSeed::Deep,
            other => return Err(config_error(format!("unknown minus seed '{other}'"))),
        });
    }
    cfg.points_per_unit = a.points_per_unit.or(cfg.points_per_unit);
    Ok(())
}

fn merge_o<'a>(cfg: &'a mut RunConfig, a: &OmegaArgs) -> &'a RunConfig {
    set_spec(cfg, &a.spec.spec);
    cfg.n_max = a.n_max.or(cfg.n_max);
    cfg.cluster_tol = a.cluster_tol.or(cfg.cluster_tol);
    cfg
}

fn parse_point(text: &str) -> Result<MatrixJson, CliError> {
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| config_error(format!("bad matrix JSON: {e}")))
    } else {
        let z = parse_complex(text)?;
        Ok(MatrixJson {
            re: vec![vec![z.re]],
            im: vec![vec![z.im]],
        })
    }
}

fn merge_s(cfg: &mut RunConfig, a: &SiegelArgs) -> Result<(), CliError> {
    if let Some(s) = &a.z1 {
        cfg.z1 = Some(parse_point(s)?);
    }
    if let Some(s) = &a.z2 {
        cfg.z2 = Some(parse_point(s)?);
    }
    cfg.trials = a.trials.or(cfg.trials);
    cfg.seed = a.seed.or(cfg.seed);
    Ok(())
}

fn load_spec(cfg: &RunConfig, base: &Path) -> Result<PotentialSpec, CliError> {
    cfg.spec
        .as_ref()
        .ok_or_else(|| config_error("a potential spec is required (--spec or \"spec\" in the config)"))?
        .load(base)
}

fn outputs(cli: &Cli, command: &str, cfg: &RunConfig, spec: Option<&PotentialSpec>) -> Outputs {
    Outputs {
        dir: cli.out.clone(),
        prov: Provenance::new(&format!("{command}:{}", cfg.canonical(spec))),
        verbose: cli.verbose,
    }
}

fn positive(x: f64, what: &str) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(config_error(format!("{what} must be positive")))
    }
}

fn compression(cfg: &RunConfig, d: usize) -> Result<Vec<Complex64>, CliError> {
    let c = match &cfg.c {
        Some(v) => v.iter().map(|s| parse_complex(s)).collect::<Result<Vec<_>, _>>()?,
        None => {
            let mut e = vec![Complex64::new(0.0, 0.0); d];
            e[0] = Complex64::new(1.0, 0.0);
            e
        }
    };
    if c.len() != d {
        return Err(config_error(format!("c has {} entries, the spec has dimension {d}", c.len())));
    }
    if c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() > 1.0 + 1e-12 {
        return Err(config_error("‖c‖ must be at most 1"));
    }
    Ok(c)
}

fn matrix_columns(prefix: &str, d: usize) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in 0..d {
            out.push(format!("{prefix}{i}{j}_re"));
            out.push(format!("{prefix}{i}{j}_im"));
        }
    }
    out
}

fn matrix_cells(m: &CMatrix) -> Vec<String> {
    m.as_slice().iter().flat_map(|z| [fmt_f64(z.re), fmt_f64(z.im)]).collect()
}

fn mfunction(cli: &Cli, cfg: &RunConfig, base: &Path) -> Result<(), CliError> {
    let spec = load_spec(cfg, base)?;
    let zs = cfg
        .z
        .as_ref()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| config_error("at least one z is required"))?
        .iter()
        .map(|s| parse_complex(s))
        .collect::<Result<Vec<_>, _>>()?;
    if zs.iter().any(|z| z.im == 0.0) {
        return Err(config_error("z must be off the real axis"));
    }
    let side = cfg.side.clone().unwrap_or_else(|| "plus".into());
    let site = cfg.site.unwrap_or(0);
    let mut opts = WeylOptions::default();
    if let Some(t) = cfg.tol {
        opts = opts.with_tol(positive(t, "tol")?);
    }
    let eval = |z: Complex64| -> mweyl_core::Result<WeylEvaluation> {
        match side.as_str() {
            "minus" => m_minus(&spec, z, &opts),
            "tilde-minus" => m_tilde_minus(&spec, site, z, &opts),
            _ => m_plus_at(&spec, site, z, &opts),
        }
    };
    if !matches!(side.as_str(), "plus" | "minus" | "tilde-minus") {
        return Err(config_error(format!("unknown side '{side}'")));
    }
    let evals = zs.par_iter().map(|&z| eval(z)).collect::<mweyl_core::Result<Vec<_>>>()?;

    let out = outputs(cli, "mfunction", cfg, Some(&spec));
    let d = spec.dim();
    let mut csv = out.prov.header();
    let mut header = vec!["z_re".to_string(), "z_im".into(), "side".into(), "site".into(), "depth".into(), "converged".into()];
    header.extend(matrix_columns("m", d));
    csv.push_str(&header.join(","));
    csv.push('\n');
    for e in &evals {
        let mut row = vec![
            fmt_f64(e.z.re),
            fmt_f64(e.z.im),
            side.clone(),
            e.site.to_string(),
            e.depth.to_string(),
            e.converged.to_string(),
        ];
        row.extend(matrix_cells(&e.value));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let params = format!("{side}-n{}", evals.len());
    let path = out.write("mfunction", &params, "csv", &csv)?;
    let records: Vec<_> = evals.iter().map(WeylEvaluation::record).collect();
    out.json("mfunction", &params, &json!({ "experiment": "mfunction", "records": records }))?;
    out.note(format!("wrote {}", path.display()));
    let failed: Vec<String> = evals
        .iter()
        .filter(|e| !e.converged)
        .map(|e| format!("z={} depth={} last step={:.3e}", e.z, e.depth, e.last_step))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("no convergence at {}", failed.join("; "))))
    }
}

fn reflectionless(cli: &Cli, cfg: &RunConfig, base: &Path) -> Result<(), CliError> {
    let spec = load_spec(cfg, base)?;
    let a = cfg.a.clone().ok_or_else(|| config_error("the set A is required"))?;
    let eps = cfg.eps.clone().unwrap_or_else(|| vec![1e-4]);
    if eps.is_empty() {
        return Err(config_error("eps schedule is empty"));
    }
    for &e in &eps {
        positive(e, "eps")?;
    }
    let step = positive(cfg.grid_step.unwrap_or(1e-3), "grid_step")?;
    let scan = reflectionless_scan(&spec, &a, &eps, step, &WeylOptions::boundary())?;
    let out = outputs(cli, "reflectionless", cfg, Some(&spec));
    let params = format!("eps{}", eps.iter().map(|e| fmt_f64(*e)).collect::<Vec<_>>().join("_"));
    let path = out.write("reflectionless", &params, "csv", &scan.to_csv(&out.prov))?;
    let unconverged: usize = scan.reports.iter().map(|r| r.converged.iter().filter(|c| !**c).count()).sum();
    out.json(
        "reflectionless",
        &params,
        &json!({
            "experiment": "reflectionless",
            "a": a,
            "eps": eps,
            "max": scan.reports.iter().map(|r| r.max).collect::<Vec<_>>(),
            "mean": scan.reports.iter().map(|r| r.mean).collect::<Vec<_>>(),
            "decay_order": scan.decay_order,
            "unconverged_points": unconverged,
        }),
    )?;
    out.note(describe_scan(&scan));
    out.note(format!("wrote {}", path.display()));
    if unconverged > 0 {
        eprintln!("warning: {unconverged} grid points did not converge (flagged in the CSV)");
    }
    Ok(())
}

fn bp(cli: &Cli, cfg: &RunConfig, base: &Path) -> Result<(), CliError> {
    let spec = load_spec(cfg, base)?;
    let a = cfg.a.clone().ok_or_else(|| config_error("the set A is required"))?;
    let s = match &cfg.s {
        Some(s) => s.clone(),
        None => IntervalUnion::new([(0.0, f64::INFINITY)])?,
    };
    let n_list = cfg.n_list.clone().unwrap_or_else(|| vec![4, 16, 64, 256]);
    if n_list.is_empty() {
        return Err(config_error("N list is empty"));
    }
    let c = compression(cfg, spec.dim())?;
    let eps = match cfg.eps.as_deref() {
        None => 1e-4,
        Some([e]) => positive(*e, "eps")?,
        Some(_) => return Err(config_error("bp-defect takes a single eps")),
    };
    let opts = BpOptions {
        eps,
        minus_seed: cfg.minus_seed.unwrap_or(MinusSeed::Dirichlet),
        points_per_unit: cfg.points_per_unit.unwrap_or(BpOptions::default().points_per_unit),
        ..BpOptions::default()
    };
    let report = bp_defect(&spec, &n_list, &a, &s, &c, &opts)?;
    let out = outputs(cli, "bp-defect", cfg, Some(&spec));
    let params = format!("eps{}", fmt_f64(eps));
    let path = out.write("bp-defect", &params, "csv", &report.to_csv(&out.prov))?;
    out.json(
        "bp-defect",
        &params,
        &json!({
            "experiment": "bp-defect",
            "n": n_list,
            "defect": report.defects(),
            "floor": report.rows.iter().map(|r| r.floor).collect::<Vec<_>>(),
            "full_rank_fraction": report.full_rank_fraction,
            "hypothesis_holds": report.hypothesis_holds,
            "identity_residual": report.identity_residual,
        }),
    )?;
    out.note(format!("wrote {}", path.display()));
    if !report.hypothesis_holds {
        eprintln!(
            "warning: A is not inside the estimated full-multiplicity a.c. spectrum ({:.0}% of sampled points)",
            100.0 * report.full_rank_fraction
        );
    }
    match report.identity_residual {
        Some(r) if r > 1e-8 => Err(CliError::Numerical(format!("transfer conjugation identity residual {r:.3e}"))),
        _ => Ok(()),
    }
}

fn omega(cli: &Cli, cfg: &RunConfig, base: &Path) -> Result<(), CliError> {
    let spec = load_spec(cfg, base)?;
    let defaults = OmegaOptions::default();
    let opts = OmegaOptions {
        n_max: cfg.n_max.unwrap_or(defaults.n_max),
        cluster_tol: positive(cfg.cluster_tol.unwrap_or(defaults.cluster_tol), "cluster_tol")?,
        ..defaults
    };
    let omega = omega_limit(&spec, &opts)?;
    let out = outputs(cli, "omega", cfg, Some(&spec));
    let params = format!("nmax{}", opts.n_max);
    let path = out.write("omega", &params, "csv", &trace_csv(&out.prov, &omega.convergence_trace))?;
    let method = match omega.method {
        OmegaMethod::ExactPeriodic => "exact-periodic",
        OmegaMethod::NumericClustering => "numeric-clustering",
    };
    out.json(
        "omega",
        &params,
        &json!({
            "experiment": "omega",
            "method": method,
            "stable": omega.stable,
            "representatives": omega.representatives.len(),
            "hashes": omega.representatives.iter().map(PotentialSpec::content_hash).collect::<Vec<_>>(),
            "specs": omega.representatives,
        }),
    )?;
    out.note(format!("wrote {}", path.display()));
    if !omega.stable {
        eprintln!("warning: the clustering did not stabilise; the approximation is unreliable");
    }
    Ok(())
}

fn siegel(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    let out = outputs(cli, "siegel-dist", cfg, None);
    if let Some(trials) = cfg.trials {
        return siegel_battery(&out, trials, cfg.seed.unwrap_or(0));
    }
    let (Some(a), Some(b)) = (&cfg.z1, &cfg.z2) else {
        return Err(config_error("need --z1 and --z2, or --trials"));
    };
    let p = SiegelPoint::new(a.to_matrix()?)?;
    let q = SiegelPoint::new(b.to_matrix()?)?;
    if p.dim() != q.dim() {
        return Err(config_error("points have different dimensions"));
    }
    let r = siegel_distance_report(&p, &q)?;
    out.json(
        "siegel-dist",
        "pair",
        &json!({
            "experiment": "siegel-dist",
            "distance": r.value,
            "max_ratio": r.max_ratio,
            "saturated": r.saturated,
        }),
    )?;
    Ok(())
}

fn siegel_battery(out: &Outputs, trials: usize, seed: u64) -> Result<(), CliError> {
    if trials == 0 {
        return Err(config_error("trials must be positive"));
    }
    let rows = (0..trials)
        .into_par_iter()
        .map(|k| -> mweyl_core::Result<[f64; 5]> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let d = 1 + k % 3;
            let p: Vec<SiegelPoint> = (0..3).map(|_| random_siegel_point(d, 1.0, &mut rng)).collect();
            let map = random_real_symplectic(d, &mut rng);
            let d01 = siegel_distance(&p[0], &p[1])?;
            let moved = siegel_distance(&mobius(&map, &p[0])?, &mobius(&map, &p[1])?)?;
            let slack = siegel_distance(&p[0], &p[2])? - d01 - siegel_distance(&p[1], &p[2])?;
            let path = d01 - segment_length(&p[0], &p[1], 64)?;
            let z = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.1..3.0));
            let w = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.1..3.0));
            let scalar = (siegel_distance(&SiegelPoint::scalar(z)?, &SiegelPoint::scalar(w)?)?
                - (1.0 + (z - w).norm_sqr() / (2.0 * z.im * w.im)).acosh())
            .abs();
            Ok([d01, (moved - d01).abs(), slack, path, scalar])
        })
        .collect::<mweyl_core::Result<Vec<_>>>()?;
    let mut csv = out.prov.header();
    csv.push_str("trial,dim,distance,invariance_gap,triangle_slack,segment_gap,scalar_gap\n");
    for (k, r) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{k},{},{}\n",
            1 + k % 3,
            r.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
        ));
    }
    let params = format!("battery{trials}-seed{seed}");
    out.write("siegel-dist", &params, "csv", &csv)?;
    let max = |i: usize| rows.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max);
    let (inv, slack, path, scalar) = (max(1), max(2), max(3), max(4));
    let pass = inv <= 1e-8 && slack <= 1e-9 && path <= 1e-9 && scalar <= 1e-10;
    out.json(
        "siegel-dist",
        &params,
        &json!({
            "experiment": "siegel-dist",
            "trials": trials,
            "max_invariance_gap": inv,
            "max_triangle_slack": slack,
            "max_segment_gap": path,
            "max_scalar_gap": scalar,
            "pass": pass,
        }),
    )?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Numerical("Siegel distance battery failed".into()))
    }
}

fn selftest() -> Result<(), CliError> {
    let mut failures = 0;
    let mut check = |name: &str, value: f64, tol: f64| {
        let ok = value.is_finite() && value <= tol;
        println!("{} {name}: {value:.3e} (tol {tol:.0e})", if ok { "ok  " } else { "FAIL" });
        failures += usize::from(!ok);
    };
    let zero = PotentialSpec::zero(1, Support::WholeLine);
    let half = PotentialSpec::zero(1, Support::HalfLine);
    let opts = WeylOptions::default();
    let z = Complex64::new(0.0, 2.0);
    let m = m_plus(&zero, z, &opts)?.value[(0, 0)];
    check("free m+(2i) = i(√2−1)", (m - Complex64::new(0.0, 2f64.sqrt() - 1.0)).norm(), 1e-10);
    let mt = m_tilde_minus(&zero, 0, z, &opts)?.value[(0, 0)];
    check("free m̃−(2i) = i(1+√2)", (mt - Complex64::new(0.0, 1.0 + 2f64.sqrt())).norm(), 1e-10);
    let mm = m_minus(&zero, z, &opts)?.value[(0, 0)];
    check("free m−(2i) = i(√2−1)", (mm - Complex64::new(0.0, 2f64.sqrt() - 1.0)).norm(), 1e-10);
    let big = Complex64::new(0.0, 100.0);
    let mb = m_plus(&zero, big, &opts)?.value[(0, 0)];
    check("m+(100i) ≈ −1/z", (mb + 1.0 / big).norm(), 1e-3);
    let oracle = resolvent_oracle(&half, z, 200)?;
    check("truncated resolvent at N=200", operator_norm(&(&oracle - &CMatrix::scalar(1, m)))?, 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut scalar, mut inv, mut slack, mut path) = (0.0f64, 0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..200 {
        let a = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.1..3.0));
        let b = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.1..3.0));
        let rho = (1.0 + (a - b).norm_sqr() / (2.0 * a.im * b.im)).acosh();
        scalar = scalar
            .max((siegel_distance(&SiegelPoint::scalar(a)?, &SiegelPoint::scalar(b)?)? - rho).abs())
            .max((hyperbolic_distance(a, b)? - rho).abs());
        let d = 1 + k % 3;
        let p: Vec<SiegelPoint> = (0..3).map(|_| random_siegel_point(d, 1.0, &mut rng)).collect();
        let map = random_real_symplectic(d, &mut rng);
        let d01 = siegel_distance(&p[0], &p[1])?;
        inv = inv.max((siegel_distance(&mobius(&map, &p[0])?, &mobius(&map, &p[1])?)? - d01).abs());
        slack = slack.max(siegel_distance(&p[0], &p[2])? - d01 - siegel_distance(&p[1], &p[2])?);
        if k % 20 == 0 {
            path = path.max(d01 - segment_length(&p[0], &p[1], 64)?);
        }
    }
    check("d=1 Siegel distance vs arccosh", scalar, 1e-10);
    check("symplectic invariance", inv, 1e-8);
    check("triangle inequality slack", slack.max(0.0), 1e-9);
    check("segment length below distance", path.max(0.0), 1e-9);
    let iv = IntervalUnion::interval(-1.0, 1.0)?;
    check("ω_i([−1,1]) = 1/2", (harmonic_measure(Complex64::new(0.0, 1.0), &iv)? - 0.5).abs(), 1e-14);
    if failures == 0 {
        println!("selftest passed");
        Ok(())
    } else {
        Err(CliError::Numerical(format!("{failures} self-test checks failed")))
    }
}
