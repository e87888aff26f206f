use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use softmax_newton::io::{read_vector, write_key_values, write_text, write_vector};
use softmax_newton::problem::{generate_oracle, generate_trivial, random_offset, validate, Generated, ValidationMode};
use softmax_newton::solver::{solve as run_solver, SolveOutcome, SolverTrace, Status};
use softmax_newton::verify::{self, Cases, Check, VerifyOptions};
use softmax_newton::{Bundle, Error, SketchConfig, SolverConfig, SolverMode, StopRule};

use crate::{BenchArgs, Failure, GenMode, GenerateArgs, SolveArgs, VerifyArgs};

fn print_pairs(pairs: &[(String, String)]) {
    print!("{}", write_key_values(pairs));
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

pub fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let g: Generated = match a.mode {
        GenMode::Trivial => generate_trivial(a.n, a.d, a.radius, a.l, a.seed)?,
        GenMode::Oracle => generate_oracle(a.n, a.d, a.radius, a.l, a.target_radius, a.seed)?,
    };
    let kind = match a.mode {
        GenMode::Trivial => "trivial",
        GenMode::Oracle => "oracle",
    };
    Bundle::from_generated(&g, kind).write(&a.out)?;
    let mut out = vec![kv("out", a.out.display()), kv("kind", kind), kv("n", a.n), kv("d", a.d), kv("seed", a.seed)];
    if let Some(gn) = g.oracle_grad_norm {
        out.push(kv("oracle_grad_norm", gn));
    }
    if a.radius < 10.0 {
        out.push(kv("note", "R below 10 is outside the convergence theorem's range"));
    }
    print_pairs(&out);
    Ok(())
}

fn write_trace(trace: &SolverTrace, path: &Path) -> Result<(), Failure> {
    if path.as_os_str() == "-" {
        print!("{}", trace.to_csv());
        Ok(())
    } else {
        Ok(write_text(path, &trace.to_csv())?)
    }
}

fn summary(trace: &SolverTrace, x: Option<&DVector<f64>>) -> Vec<(String, String)> {
    let last = trace.last();
    let status = match trace.status {
        Status::Converged => "converged",
        Status::Diverged => "diverged",
        Status::IterationCap => "iteration_cap",
    };
    let mut out = vec![
        kv("status", status),
        kv("mode", trace.mode),
        kv("iterations", trace.iterations()),
        kv("loss", last.loss),
        kv("grad_norm", last.grad_norm),
    ];
    if let Some(r) = last.r {
        out.push(kv("r_final", r));
    }
    if let Some(c) = trace.max_contraction() {
        out.push(kv("max_contraction", c));
    }
    if let Some(t) = trace.budget {
        out.push(kv("T", t));
    }
    if trace.records.iter().any(|r| r.used_fallback) {
        out.push(kv("diag_fallback", "used"));
    }
    if let Some(x) = x {
        out.push(kv("x_norm", x.norm()));
    }
    out
}

pub fn solve(a: SolveArgs) -> Result<(), Failure> {
    let bundle = Bundle::read(&a.instance)?;
    let inst = &bundle.instance;
    let mode: SolverMode = a.mode.parse()?;
    let stop_rule: StopRule = a.stop.parse()?;
    let l = a.l.unwrap_or(bundle.l);
    let radius = a.radius.unwrap_or(bundle.radius);
    let vmode: ValidationMode = match &a.validation {
        Some(v) => v.parse()?,
        None if mode == SolverMode::SketchedDiag => ValidationMode::Sketch,
        None => ValidationMode::Convexity,
    };
    let report = validate(inst, l, vmode, Some(radius))?;
    if !report.passed() && !a.allow_unsafe {
        return Err(Error::Assumption(format!(
            "{} ({vmode} mode); pass --unsafe to solve anyway",
            report.failures().join(", ")
        ))
        .into());
    }
    let cfg = SolverConfig {
        epsilon: a.eps,
        delta: a.delta,
        l,
        mode,
        max_iters: a.max_iters,
        stop_rule,
        grad_tol: a.grad_tol,
        radius,
        sketch: SketchConfig {
            epsilon0: a.eps0,
            delta: a.delta,
            oversample: a.oversample,
            seed: a.seed,
            enabled: !a.no_sampling,
        },
    };
    let d = inst.d();
    let x0 = match (&a.x0, a.init_radius) {
        (Some(path), _) => read_vector(path)?,
        (None, Some(r)) => {
            let centre = bundle.x_star.clone().unwrap_or_else(|| DVector::zeros(d));
            centre + random_offset(d, r, a.seed)
        }
        (None, None) => DVector::zeros(d),
    };
    match run_solver(inst, &x0, &cfg, bundle.x_star.as_ref()) {
        Ok(SolveOutcome { x, trace }) => {
            if let Some(p) = &a.trace {
                write_trace(&trace, p)?;
            }
            if let Some(p) = &a.out {
                write_text(p, &write_vector(&x))?;
            }
            if a.trace.as_deref().is_none_or(|p| p.as_os_str() != "-") {
                print_pairs(&summary(&trace, Some(&x)));
            }
            Ok(())
        }
        Err(Error::Diverged { trace }) | Err(Error::IterationCap { trace, .. }) => {
            if let Some(p) = &a.trace {
                write_trace(&trace, p)?;
            }
            let msg = match trace.status {
                Status::Diverged => "loss grew more than 5x from the start".to_string(),
                _ => format!("stopping rule not met after {} iterations", trace.iterations()),
            };
            eprint!("{}", write_key_values(&summary(&trace, None)));
            Err(Failure::numerical(msg))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let checks: Vec<Check> = if a.check.is_empty() {
        Check::ALL.to_vec()
    } else {
        a.check.iter().map(|c| c.parse()).collect::<Result<_, _>>()?
    };
    if a.trials == 0 || a.jobs == 0 || a.probes == 0 {
        return Err(Failure::validation("--trials, --jobs and --probes must be at least 1"));
    }
    let mut opts = VerifyOptions {
        l: a.l.unwrap_or(1.0),
        radius: a.radius.unwrap_or(2.0),
        probes: a.probes,
        epsilon0: a.eps0,
        delta: a.delta,
        oversample: a.oversample,
        trials: a.trials,
        jobs: a.jobs,
    };
    SketchConfig { epsilon0: a.eps0, delta: a.delta, oversample: a.oversample, seed: 0, enabled: true }.validate()?;
    let cases = match (&a.random, &a.instance) {
        (Some(r), _) => {
            let (n, d, count) = (r[0], r[1], r[2]);
            if d == 0 || n < d || count == 0 {
                return Err(Failure::validation("--random needs n >= d >= 1 and at least one seed"));
            }
            Cases::Random((0..count as u64).map(|s| verify::CaseSpec { n, d, seed: a.seed + s }).collect())
        }
        (None, Some(dir)) => {
            let bundle = Bundle::read(dir)?;
            opts.l = a.l.unwrap_or(bundle.l);
            opts.radius = a.radius.unwrap_or(bundle.radius);
            Cases::Instance {
                instance: bundle.instance,
                points: (0..a.points as u64).map(|s| a.seed + s).collect(),
            }
        }
        (None, None) => Cases::random(10, 4, 100),
    };
    let mut failed: Vec<Check> = Vec::new();
    let mut text = String::new();
    for check in checks {
        let rep = verify::run(check, &cases, &opts)?;
        write!(text, "{rep}").unwrap();
        if !rep.passed() {
            failed.push(check);
        }
    }
    print!("{text}");
    match failed.as_slice() {
        [] => {
            println!("overall=PASS");
            Ok(())
        }
        [Check::Assumptions] => {
            println!("overall=FAIL");
            Err(Failure::validation("assumption check failed"))
        }
        _ => {
            println!("overall=FAIL");
            let names: Vec<_> = failed.iter().map(|c| c.name()).collect();
            Err(Failure::numerical(format!("failed checks: {}", names.join(", "))))
        }
    }
}

pub const BENCH_HEADER: &str = "n,d,mode,iterations,total_ms,step_ms_mean,final_grad_norm,final_error,nnz_mean,status";

pub fn bench(a: BenchArgs) -> Result<(), Failure> {
    let modes: Vec<SolverMode> = a.modes.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    if a.n_grid.is_empty() || modes.is_empty() {
        return Err(Failure::validation("--n-grid and --modes must not be empty"));
    }
    let mut csv = format!("{BENCH_HEADER}\n");
    for &n in &a.n_grid {
        let g = generate_oracle(n, a.d, a.radius, a.l, a.target_radius, a.seed)?;
        for &mode in &modes {
            let cfg = SolverConfig {
                epsilon: a.eps,
                l: a.l,
                mode,
                max_iters: a.max_iters,
                radius: a.radius,
                sketch: SketchConfig {
                    epsilon0: a.eps0,
                    oversample: a.oversample,
                    seed: a.seed,
                    ..SketchConfig::default()
                },
                ..SolverConfig::default()
            };
            let (x, trace) = match run_solver(&g.instance, &DVector::zeros(a.d), &cfg, Some(&g.x_star)) {
                Ok(o) => (Some(o.x), o.trace),
                Err(Error::Diverged { trace }) | Err(Error::IterationCap { trace, .. }) => (None, *trace),
                Err(e) => return Err(e.into()),
            };
            let steps = &trace.records[1..];
            let total_ms: f64 = steps.iter().map(|r| r.ms).sum();
            let mean = |v: f64| if steps.is_empty() { 0.0 } else { v / steps.len() as f64 };
            let nnz: Vec<usize> = steps.iter().filter_map(|r| r.nnz).collect();
            let nnz_mean = if nnz.is_empty() {
                String::new()
            } else {
                (nnz.iter().sum::<usize>() as f64 / nnz.len() as f64).to_string()
            };
            let last = trace.last();
            let err = x.map(|x| (x - &g.x_star).norm()).or(last.r);
            let status = match trace.status {
                Status::Converged => "converged",
                Status::Diverged => "diverged",
                Status::IterationCap => "iteration_cap",
            };
            writeln!(
                csv,
                "{n},{},{mode},{},{total_ms:.3},{:.3},{},{},{nnz_mean},{status}",
                a.d,
                trace.iterations(),
                mean(total_ms),
                last.grad_norm,
                err.map(|e| e.to_string()).unwrap_or_default(),
            )
            .unwrap();
        }
    }
    match &a.out {
        Some(p) => write_text(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
