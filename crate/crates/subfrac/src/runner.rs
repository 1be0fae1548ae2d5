//! Command execution.

use std::fs::File;
use std::io::{self, BufWriter, Write};

use serde_json::json;
use subfrac_core::convergence::{
    check_p_class, convergence_experiment, estimate_rate, prescribed_rate_construct,
    InitialDatum, PClassGrid, Profile, SupGrid,
};
use subfrac_core::hyperbolic::{
    asymptotic_constant_closed, asymptotic_constant_published, asymptotic_shape_ratio,
    boundary_mean, bound_shape_ratio, busemann_gap, critical_region_mass, deficiency,
    kernel_quotient, l1_gap_trajectory, sphere_directions, CriticalRegion,
};
use subfrac_core::manifolds::{ball_point, Point};
use subfrac_core::special_fn::{eta_envelope, stable_density, StableParams};
use subfrac_core::subordination::{kernel_envelope, FamilyId, Kernel, KernelFamily};

use crate::config::{CliError, Command, Datum, Exit, HyperbolicTask, Phi, RunConfig};
use crate::report::{Cell, Outcome, Table};

type Res<T> = Result<T, CliError>;

/// Spread limit for kernel-to-envelope ratios.
const ENVELOPE_SPREAD_LIMIT: f64 = 100.0;
const L1_SLOPE_TOL: f64 = 0.15;
const SUP_SLOPE_TOL: f64 = 0.2;

fn family(c: &RunConfig) -> Res<KernelFamily> {
    c.family
        .ok_or_else(|| CliError::input("--family (or --sigma/--alpha) is required"))
}

fn need_t(c: &RunConfig) -> Res<f64> {
    c.params.t.ok_or_else(|| CliError::input("--t is required"))
}

fn family_cells(f: &KernelFamily) -> Vec<Cell> {
    vec![f.name().into(), f.param().unwrap_or(f64::NAN).into()]
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::MIN, f64::max);
    let lo = v.iter().cloned().fold(f64::MAX, f64::min);
    hi / lo
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// The point at distance `y` from the base point along the last axis.
fn point_at(c: &RunConfig, y: f64) -> Res<Point> {
    if c.model.is_hyperbolic() {
        Ok(ball_point(y, [0.0, 0.0, 1.0])?)
    } else {
        Ok(Point::on_axis(c.model.dim, y))
    }
}

fn datum(c: &RunConfig) -> Res<InitialDatum> {
    Ok(match c.datum {
        Datum::Dirac => {
            let y = c.params.y.unwrap_or(1.0);
            InitialDatum::dirac(c.model, point_at(c, y)?, 1.0)?
        }
        Datum::Bump => InitialDatum::radial_bump(
            c.model,
            c.params.radius.unwrap_or(1.0),
            Profile::CosineTaper,
            1.0,
        )?,
    })
}

fn kernel(c: &RunConfig) -> Res<Outcome> {
    let fam = family(c)?;
    let t = need_t(c)?;
    let r = c.params.r.unwrap_or(0.0);
    let k = Kernel::new(fam)?;
    let mut table = Table::new(&["family", "param", "model", "t", "r", "value"]);
    let mut row = family_cells(&fam);
    row.extend([c.model_name.clone().into(), t.into(), r.into(), k.at(t, r).into()]);
    table.push(row);
    Ok(Outcome::table(table))
}

fn subordinator(c: &RunConfig) -> Res<Outcome> {
    let alpha = match (c.params.alpha, c.family.map(|f| f.id)) {
        (Some(a), _) => a,
        (None, Some(FamilyId::FracHeat { alpha })) => alpha,
        _ => return Err(CliError::input("--alpha is required")),
    };
    let t = c.params.t.unwrap_or(1.0);
    let us = match c.params.u {
        Some(u) => vec![u],
        None => {
            let scale = t.powf(2.0 / alpha);
            log_grid(1e-2 * scale, 1e2 * scale, 41)
        }
    };
    let mut table =
        Table::new(&["alpha", "t", "u", "density", "envelope", "ratio", "underflow"]);
    for u in us {
        let p = StableParams::new(alpha, t, u)?;
        let d = stable_density(p)?;
        let e = eta_envelope(p)?.upper;
        table.push(vec![
            alpha.into(),
            t.into(),
            u.into(),
            d.value.into(),
            e.into(),
            (d.value / e).into(),
            d.underflow.into(),
        ]);
    }
    Ok(Outcome::table(table))
}

fn bounds(c: &RunConfig) -> Res<Outcome> {
    let fam = family(c)?;
    let k = Kernel::new(fam)?;
    let times = c.params.times.clone().unwrap_or_else(|| vec![0.1, 1.0, 10.0, 100.0]);
    let mut table = Table::new(&["t", "s", "kernel", "envelope", "ratio"]);
    let mut ratios = Vec::new();
    for t in times {
        let l = fam.length_scale(t);
        let mut ss = vec![0.0];
        ss.extend((0..=12).map(|j| l * 10f64.powf(-2.0 + 0.5 * j as f64)));
        for s in ss {
            let v = k.at(t, s);
            let e = kernel_envelope(&fam, t, s)?;
            if v > 0.0 {
                ratios.push(v / e);
            }
            table.push(vec![t.into(), s.into(), v.into(), e.into(), (v / e).into()]);
        }
    }
    let sp = spread(&ratios);
    let verified = sp <= ENVELOPE_SPREAD_LIMIT;
    let json = json!({
        "family": fam.name(),
        "param": fam.param(),
        "model": c.model_name,
        "spread": sp,
        "spread_limit": ENVELOPE_SPREAD_LIMIT,
        "pass": verified,
        "rows": table.to_json(),
    });
    Ok(Outcome {
        table,
        json: Some(json),
        verified,
        summary: format!("envelope ratio spread {sp:.3} exceeds {ENVELOPE_SPREAD_LIMIT}"),
    })
}

fn class_check(c: &RunConfig) -> Res<Outcome> {
    let fam = family(c)?;
    let mut grid = PClassGrid::default();
    if let Some(ts) = &c.params.times {
        grid.times = ts.clone();
    }
    let rep = check_p_class(&Kernel::new(fam)?, &grid)?;
    let mut table = Table::new(&["axiom", "pass", "value", "detail"]);
    for (name, a) in [
        ("P1", &rep.positivity_symmetry),
        ("P2", &rep.normalization),
        ("P3", &rep.quotient),
        ("P4", &rep.hoelder),
    ] {
        table.push(vec![name.into(), a.pass.into(), a.value.into(), a.detail.clone().into()]);
    }
    let failed: Vec<_> = table
        .rows
        .iter()
        .filter(|r| r[1] == Cell::Bool(false))
        .map(|r| match &r[0] {
            Cell::Text(s) => s.clone(),
            _ => String::new(),
        })
        .collect();
    Ok(Outcome {
        table,
        json: Some(serde_json::to_value(&rep).map_err(|e| CliError::input(e.to_string()))?),
        verified: rep.all_pass(),
        summary: format!("axioms failing: {}", failed.join(", ")),
    })
}

fn default_times(c: &RunConfig) -> Vec<f64> {
    c.params.times.clone().unwrap_or_else(|| {
        if c.model.is_hyperbolic() {
            vec![2.0, 5.0, 10.0, 20.0]
        } else {
            (0..5).map(|i| 10f64.powf(2.0 + 0.5 * i as f64)).collect()
        }
    })
}

fn converge(c: &RunConfig) -> Res<Outcome> {
    let fam = family(c)?;
    let f = datum(c)?;
    let times = default_times(c);
    let rep = if c.model.is_hyperbolic() {
        if fam.id != FamilyId::HypPoisson {
            return Err(CliError::input("on h3 the experiment runs the hyp-poisson family"));
        }
        l1_gap_trajectory(&f, &times, &c.quad)?
    } else {
        let k = Kernel::new(fam)?;
        let o = Point::origin(c.model.dim);
        convergence_experiment(&k, &times, &f, &o, &c.quad, &SupGrid::default())?
    };
    let mut table = Table::new(&["t", "l1", "weighted_sup"]);
    for (i, &t) in rep.times.iter().enumerate() {
        let sup = rep.weighted_sup_values[i].unwrap_or(f64::NAN);
        table.push(vec![t.into(), rep.l1_values[i].into(), sup.into()]);
    }
    let failed: Vec<_> = rep.flags.iter().filter(|(_, v)| !**v).map(|(k, _)| k.clone()).collect();
    Ok(Outcome {
        table,
        json: Some(serde_json::to_value(&rep).map_err(|e| CliError::input(e.to_string()))?),
        verified: rep.passed(),
        summary: format!("flags failing: {}", failed.join(", ")),
    })
}

fn rate(c: &RunConfig) -> Res<Outcome> {
    let fam = family(c)?;
    if !c.model.is_euclidean() {
        return Err(CliError::input("rates are fitted on Euclidean models"));
    }
    let f = datum(c)?;
    let times = default_times(c);
    let k = Kernel::new(fam)?;
    let o = Point::origin(c.model.dim);
    let rep = convergence_experiment(&k, &times, &f, &o, &c.quad, &SupGrid::default())?;
    let expected = -1.0 / fam.gamma;
    let sup: Vec<f64> = rep.weighted_sup_values.iter().flatten().copied().collect();
    let mut table = Table::new(&["quantity", "slope", "stderr", "expected", "tolerance", "pass"]);
    let mut verified = true;
    for (name, vals, tol) in [
        ("l1", &rep.l1_values, L1_SLOPE_TOL),
        ("weighted_sup", &sup, SUP_SLOPE_TOL),
    ] {
        let fit = estimate_rate(&times, vals)?;
        let pass = (fit.slope - expected).abs() <= tol;
        verified &= pass;
        table.push(vec![
            name.into(),
            fit.slope.into(),
            fit.stderr.into(),
            expected.into(),
            tol.into(),
            pass.into(),
        ]);
    }
    Ok(Outcome {
        json: Some(json!({
            "family": fam.name(),
            "param": fam.param(),
            "expected_slope": expected,
            "fits": table.to_json(),
            "report": rep,
        })),
        table,
        verified,
        summary: format!("fitted slopes deviate from {expected} beyond tolerance"),
    })
}

fn hyperbolic(c: &RunConfig) -> Res<Outcome> {
    if !c.model.is_hyperbolic() {
        return Err(CliError::input("the hyperbolic command needs --model h3"));
    }
    let p = &c.params;
    let y_dist = p.y.unwrap_or(1.0);
    let out = match c.task {
        HyperbolicTask::CriticalRegion => {
            let (t, eps) = (p.t.unwrap_or(10.0), p.eps.unwrap_or(1.0));
            let region = CriticalRegion::new(t, eps)?;
            let m = critical_region_mass(t, eps, &c.quad)?;
            let mut table =
                Table::new(&["t", "eps", "r_min", "r_max", "inside", "below", "above"]);
            table.push(vec![
                t.into(),
                eps.into(),
                region.r_min.into(),
                region.r_max.into(),
                m.inside.into(),
                m.below.into(),
                m.above.into(),
            ]);
            Outcome::table(table)
        }
        HyperbolicTask::Shape => {
            let (t, eps) = (p.t.unwrap_or(40.0), p.eps.unwrap_or(1.0));
            let region = CriticalRegion::new(t, eps)?;
            let mut table = Table::new(&["t", "r", "bound_ratio", "asymptotic_ratio"]);
            let (mut b, mut a) = (Vec::new(), Vec::new());
            for r in region.log_grid(40) {
                b.push(bound_shape_ratio(t, r));
                a.push(asymptotic_shape_ratio(t, r));
                table.push(vec![t.into(), r.into(), (*b.last().unwrap()).into(), (*a.last().unwrap()).into()]);
            }
            let json = json!({
                "t": t,
                "eps": eps,
                "bound_spread": spread(&b),
                "asymptotic_spread": spread(&a) - 1.0,
                "measured_constant": a[a.len() / 2],
                "bessel_constant": asymptotic_constant_closed(),
                "published_constant": asymptotic_constant_published(),
                "rows": table.to_json(),
            });
            Outcome {
                table,
                json: Some(json),
                verified: true,
                summary: String::new(),
            }
        }
        HyperbolicTask::Quotient => {
            let (t, eps) = (p.t.unwrap_or(32.0), p.eps.unwrap_or(0.25));
            let region = CriticalRegion::new(t, eps)?;
            let y = ball_point(y_dist, [0.0, 0.0, 1.0])?;
            let mut table = Table::new(&[
                "t", "r", "direction", "measured", "predicted", "rel_error", "underflow",
            ]);
            for r in region.log_grid(20) {
                for (i, b) in sphere_directions(8).into_iter().enumerate() {
                    let q = kernel_quotient(t, r, &y, b)?;
                    table.push(vec![
                        t.into(),
                        r.into(),
                        i.into(),
                        q.measured.into(),
                        q.predicted.into(),
                        ((q.measured - q.predicted) / q.predicted).abs().into(),
                        q.underflow.into(),
                    ]);
                }
            }
            Outcome::table(table)
        }
        HyperbolicTask::Busemann => {
            let eps = p.eps.unwrap_or(0.25);
            let times = p.times.clone().unwrap_or_else(|| vec![4.0, 8.0, 16.0]);
            let y = ball_point(y_dist, [0.0, 0.0, 1.0])?;
            let mut table = Table::new(&["t", "direction", "gap"]);
            for t in times {
                for (i, b) in sphere_directions(8).into_iter().enumerate() {
                    table.push(vec![t.into(), i.into(), busemann_gap(t, eps, &y, b)?.into()]);
                }
            }
            Outcome::table(table)
        }
        HyperbolicTask::Deficiency => {
            let y = ball_point(y_dist, [0.0, 0.0, 1.0])?;
            let mut table = Table::new(&["y", "deficiency", "boundary_mean"]);
            table.push(vec![
                y_dist.into(),
                deficiency(&y, &c.quad)?.into(),
                boundary_mean(&y, &c.quad)?.into(),
            ]);
            Outcome::table(table)
        }
    };
    Ok(out)
}

fn prescribe_rate(c: &RunConfig) -> Res<Outcome> {
    let alpha = match (c.params.alpha, c.family.map(|f| f.id)) {
        (Some(a), _) => a,
        (None, Some(FamilyId::FracHeat { alpha })) => alpha,
        _ => 1.0,
    };
    let k = Kernel::new(KernelFamily::frac_heat(alpha, c.model)?)?;
    let k_max = c.params.k.unwrap_or(5);
    let power = c.params.p.unwrap_or(0.5);
    let phi: Box<dyn Fn(f64) -> f64> = match c.phi {
        Phi::InvLog => Box::new(|t: f64| 1.0 / t.ln()),
        Phi::Power => Box::new(move |t: f64| t.powf(-power)),
    };
    let o = Point::origin(c.model.dim);
    let rep = prescribed_rate_construct(&phi, k_max, &k, &o)?;
    let mut table =
        Table::new(&["k", "m_k", "ln_t", "ln_r", "phi_t", "lhs", "rhs", "holds"]);
    for s in &rep.steps {
        table.push(vec![
            s.k.into(),
            s.m_k.into(),
            s.ln_t.into(),
            s.ln_r.into(),
            s.phi_t.into(),
            s.lhs.into(),
            s.rhs.into(),
            s.holds.into(),
        ]);
    }
    Ok(Outcome {
        table,
        json: Some(serde_json::to_value(&rep).map_err(|e| CliError::input(e.to_string()))?),
        verified: rep.all_hold(),
        summary: "the lower bound fails at some k".to_string(),
    })
}

/// Runs a validated configuration and returns its outcome without writing.
pub fn execute(c: &RunConfig) -> Result<Outcome, CliError> {
    match c.command {
        Command::Kernel => kernel(c),
        Command::Subordinator => subordinator(c),
        Command::Bounds => bounds(c),
        Command::ClassCheck => class_check(c),
        Command::Converge => converge(c),
        Command::Rate => rate(c),
        Command::Hyperbolic => hyperbolic(c),
        Command::PrescribeRate => prescribe_rate(c),
    }
}

fn emit(c: &RunConfig, out: &Outcome) -> io::Result<()> {
    match &c.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            out.write(c.format, &mut w)?;
            w.flush()
        }
        None => out.write(c.format, io::stdout().lock()),
    }
}

/// Executes, writes the result and maps the outcome to an exit code.
pub fn run(c: &RunConfig) -> Exit {
    match execute(c) {
        Ok(out) => {
            if let Err(e) = emit(c, &out) {
                eprintln!("error: cannot write output: {e}");
                return Exit::InputError;
            }
            if out.verified {
                Exit::Ok
            } else {
                eprintln!("verification failed: {}", out.summary);
                Exit::VerificationFailed
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit
        }
    }
}
