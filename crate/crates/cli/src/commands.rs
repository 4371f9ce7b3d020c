use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nfpe::appendix::verify_balance_condition;
use nfpe::equilibrium::{convergence_to_equilibrium, solve_mu, stationarity_residual};
use nfpe::grid::{l1_distance, mass, DensityField};
use nfpe::hypotheses::{check_hypotheses, HypothesisOptions};
use nfpe::io::{fmt_f64, read_field, write_diagnostics_header, write_diagnostics_row, write_ensemble, write_field, write_lyapunov, write_radial_table};
use nfpe::lyapunov::{check_h_theorem, rho_on_grid, HTheoremOptions};
use nfpe::operator::FvOperator;
use nfpe::particles::{sample_from_density, simulate, ParticleOptions};
use nfpe::resolvent::{evolve, evolve_with, Diagnostics, EvolveOptions};

use crate::config::{InitialConfig, RunConfig};
use crate::CliError;

/// Whether the command's checks passed, plus a line for stdout.
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn save_field(dir: &Path, name: &str, u: &DensityField) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    write_field(&mut w, u)?;
    w.flush()?;
    Ok(())
}

fn save_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn operator(cfg: &RunConfig) -> Result<FvOperator, CliError> {
    Ok(FvOperator::new(cfg.coefficients()?, cfg.grid()?, cfg.scheme())?)
}

fn evolve_options(cfg: &RunConfig, diagnostics: Diagnostics) -> EvolveOptions {
    EvolveOptions {
        solver: cfg.solver_options(),
        diagnostics,
        snapshot_stride: cfg.run.as_ref().map_or(1, |r| r.snapshot_stride),
        max_step_splits: cfg.solver.max_step_splits,
    }
}

fn initial_field(cfg: &RunConfig, op: &FvOperator) -> Result<DensityField, CliError> {
    match cfg.require_initial()? {
        InitialConfig::Gaussian { center, sigma, mass: m } => {
            let u = DensityField::from_fn(op.grid.clone(), |x| {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                (-r2 / (2.0 * sigma * sigma)).exp()
            })?;
            let total = mass(&u);
            if !(total > 0.0) {
                return Err(CliError::Config("initial Gaussian has no mass on the grid".into()));
            }
            Ok(u.scaled(m / total))
        }
        InitialConfig::Equilibrium { mass: m } => Ok(solve_mu(op, *m)?.field),
        InitialConfig::File { path } => {
            let file = File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
            let u = read_field(std::io::BufReader::new(file))?;
            if **u.grid() != *op.grid {
                return Err(nfpe::Error::GridMismatch(format!("{} was written on a different grid", path.display())).into());
            }
            Ok(u)
        }
    }
}

pub fn verify_hypotheses(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let cs = cfg.coefficients()?;
    let sample_box: Vec<(f64, f64)> = cfg.grid.lo.iter().zip(&cfg.grid.hi).map(|(a, b)| (*a, *b)).collect();
    let h = &cfg.hypotheses;
    let opts = HypothesisOptions {
        r_max: h.r_max,
        density_samples: h.density_samples,
        growth_radius: h.growth_radius,
    };
    let rep = check_hypotheses(&cs, &sample_box, h.samples, &opts)?;
    save_text(out, "hypotheses.txt", &rep.to_string())?;
    let failed: Vec<&str> = rep.checks().iter().filter(|c| !c.passed).map(|c| c.name).collect();
    Ok(Outcome {
        passed: rep.passes(),
        summary: if failed.is_empty() {
            "all hypotheses hold on the sample lattice".into()
        } else {
            format!("failed: {}", failed.join("; "))
        },
    })
}

pub fn build_potential(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let pot = cfg
        .confining_potential()?
        .ok_or_else(|| CliError::Config("build-potential needs potential.kind = \"confining\"".into()))?;
    let cs = cfg.coefficients()?;
    let r_max = cfg
        .grid
        .lo
        .iter()
        .zip(&cfg.grid.hi)
        .map(|(a, b)| a.abs().max(b.abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut w = create(out, "potential.txt")?;
    write_radial_table(&mut w, &pot.radial_table(2001, r_max))?;
    w.flush()?;

    let d = pot.dimension() as f64;
    let delta = pot.delta();
    let mut ode: f64 = 0.0;
    for i in 0..100 {
        let r = delta * 1.01 * (r_max.max(2.0 * delta) / (1.01 * delta)).powf(i as f64 / 99.0);
        let e = 1e-5 * r;
        let fd = (pot.h_closed_form(r + e)? - pot.h_closed_form(r - e)?) / (2.0 * e);
        let h = pot.h_closed_form(r)?;
        ode = ode.max((fd - (pot.alpha() * h * h - (d - 1.0) * h / r)).abs());
    }
    let above = f64::from_bits(delta.to_bits() + 1);
    let jump = (pot.radial_value(above) - pot.radial_value(delta))
        .abs()
        .max((pot.radial_derivative(above) - pot.radial_derivative(delta)).abs());
    let bal = verify_balance_condition(&pot, &cs, 10_000)?;
    let report = format!(
        "dimension {}\nalpha {}\ndelta {}\neta {}\nmu {}\node_residual {}\njump_at_delta {}\nbalance_max {}\nbalance_argmax_radius {}\nbalance_radii {} in [{}, {}]\n{} ode residual <= 1e-6\n{} continuity at delta <= 1e-10\n{} gamma1*Lap(Phi) - b0*|grad Phi|^2 <= 1e-10\n",
        pot.dimension(),
        fmt_f64(pot.alpha()),
        fmt_f64(delta),
        fmt_f64(pot.eta()),
        fmt_f64(pot.mu()),
        fmt_f64(ode),
        fmt_f64(jump),
        fmt_f64(bal.max_value),
        fmt_f64(bal.argmax_radius),
        bal.n_radii,
        fmt_f64(bal.r_min),
        fmt_f64(bal.r_max),
        pass_word(ode <= 1e-6),
        pass_word(jump <= 1e-10),
        pass_word(bal.passes),
    );
    save_text(out, "certification.txt", &report)?;
    Ok(Outcome {
        passed: ode <= 1e-6 && jump <= 1e-10 && bal.passes,
        summary: format!(
            "eta={} mu={} ode_residual={:.3e} jump={:.3e} balance_max={:.3e}",
            pot.eta(),
            pot.mu(),
            ode,
            jump,
            bal.max_value
        ),
    })
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn evolve_cmd(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let run = cfg.require_run()?;
    let op = operator(cfg)?;
    let u0 = initial_field(cfg, &op)?;
    let opts = evolve_options(cfg, Diagnostics::Full);
    let mut diag = create(out, "diagnostics.txt")?;
    write_diagnostics_header(&mut diag)?;
    let mut io_err: Option<CliError> = None;
    let stride = run.snapshot_stride;
    let result = evolve_with(&op, &u0, run.t_final, run.steps, &opts, |d, u| {
        if io_err.is_some() {
            return;
        }
        let r = write_diagnostics_row(&mut diag, d)
            .and_then(|_| diag.flush().map_err(Into::into))
            .map_err(CliError::from)
            .and_then(|_| {
                if d.step % stride == 0 || d.step == run.steps {
                    save_field(out, &format!("field_{:06}.txt", d.step), u)
                } else {
                    Ok(())
                }
            });
        if let Err(e) = r {
            io_err = Some(e);
        }
    });
    if let Some(e) = io_err {
        return Err(e);
    }
    let traj = result?;
    let rho = rho_on_grid(&op);
    let rep = check_h_theorem(&traj, &HTheoremOptions { balance_certified: false, rho: Some(rho) })?;
    let mut w = create(out, "lyapunov.txt")?;
    write_lyapunov(&mut w, &rep)?;
    w.flush()?;
    save_field(out, "final.txt", &traj.last)?;

    let m0 = traj.diagnostics[0].mass;
    let drift = traj.diagnostics.iter().map(|d| (d.mass - m0).abs()).fold(0.0, f64::max);
    let mass_ok = drift <= 1e-11 * m0.abs().max(f64::MIN_POSITIVE);
    let min_slack = rep.slack.iter().copied().fold(f64::INFINITY, f64::min);
    let summary = format!(
        "steps={} mass_drift={} monotonicity_violations={} min_energy_slack={} min_u={}",
        run.steps,
        fmt_f64(drift),
        rep.monotonicity_violations.len(),
        fmt_f64(min_slack),
        fmt_f64(traj.diagnostics.iter().map(|d| d.min_u).fold(f64::INFINITY, f64::min)),
    );
    save_text(out, "summary.txt", &format!("{summary}\n"))?;
    Ok(Outcome {
        passed: mass_ok && rep.monotone(),
        summary,
    })
}

pub fn equilibrium_cmd(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let eqc = cfg
        .equilibrium
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs an [equilibrium] section".into()))?;
    let op = operator(cfg)?;
    let eq = solve_mu(&op, eqc.target_mass)?;
    let residual = stationarity_residual(&op, &eq)?;
    save_field(out, "equilibrium.txt", &eq.field)?;
    let mut summary = format!(
        "mu={} mass={} max={} sup_bound={} residual={}",
        fmt_f64(eq.mu),
        fmt_f64(mass(&eq.field)),
        fmt_f64(eq.field.max()),
        fmt_f64(eq.sup_bound),
        fmt_f64(residual)
    );
    let mut passed = eq.field.max() <= eq.sup_bound;
    if eqc.convergence {
        let run = cfg.require_run()?;
        let u0 = initial_field(cfg, &op)?;
        let u0 = u0.scaled(eqc.target_mass / mass(&u0));
        let rep = convergence_to_equilibrium(&op, &u0, run.t_final, run.steps, &evolve_options(cfg, Diagnostics::Basic), eqc.tol_conv, false)?;
        let mut w = create(out, "convergence.txt")?;
        writeln!(w, "# t l1_distance")?;
        for (t, d) in rep.times.iter().zip(&rep.distances) {
            writeln!(w, "{} {}", fmt_f64(*t), fmt_f64(*d))?;
        }
        w.flush()?;
        save_field(out, "final.txt", &rep.final_field)?;
        summary.push_str(&format!(" final_distance={} eventually_decreasing={}", fmt_f64(rep.final_distance), rep.eventually_decreasing));
        passed &= rep.passed;
    }
    save_text(out, "summary.txt", &format!("{summary}\n"))?;
    Ok(Outcome { passed, summary })
}

pub fn particles_cmd(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let p = cfg
        .particles
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a [particles] section".into()))?;
    let op = operator(cfg)?;
    let u0 = initial_field(cfg, &op)?;
    let ens = sample_from_density(&u0, p.n, p.seed)?;
    let opts = ParticleOptions {
        bandwidth: p.bandwidth_rule(),
        snapshot_every: p.snapshot_every,
        noise_scale: p.noise_scale,
    };
    let sim = simulate(&op.cs, &op.grid, &ens, p.t_final, p.dt, &opts)?;
    let mut w = create(out, "ensemble_final.txt")?;
    write_ensemble(&mut w, &sim.ensemble)?;
    w.flush()?;
    for (k, (_, kde)) in sim.kde_history.iter().enumerate() {
        save_field(out, &format!("kde_{k:06}.txt"), &kde.field)?;
    }
    let (t_end, last) = sim.kde_history.last().expect("history holds the initial estimate");
    let mut summary = format!("n={} t={} bandwidth={}", p.n, fmt_f64(*t_end), fmt_f64(last.bandwidth));
    if p.cross_check {
        let run = cfg.require_run()?;
        let pde = evolve(&op, &u0, p.t_final, run.steps, &evolve_options(cfg, Diagnostics::Basic))?.last;
        save_field(out, "pde_final.txt", &pde)?;
        let mass0 = mass(&u0);
        summary.push_str(&format!(" l1_kde_pde={}", fmt_f64(l1_distance(&last.field.scaled(mass0), &pde)?)));
    }
    save_text(out, "summary.txt", &format!("{summary}\n"))?;
    Ok(Outcome { passed: true, summary })
}
