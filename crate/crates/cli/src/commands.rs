//! The six commands. Each reads its section of the resolved configuration,
//! writes fixed-name files under `--out` and prints a one-line summary.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use phasespace::capacity::{ellipsoid_capacity, ellipsoid_volume, nonsqueezing_report, squeeze_matrix, Ellipsoid, ShadowReport};
use phasespace::flows::{classical_trajectory, ehrenfest_classical, NamedHamiltonian};
use phasespace::geometry::{convex_hull_2d, john_ellipsoid_certified, JohnEllipsoid, JohnOptions, PointCloud2D, Polytope};
use phasespace::grid::GridWavefunction;
use phasespace::linalg;
use phasespace::metaplectic::{
    ehrenfest_means, gaussian_propagate, kernel_propagate_with, nearby_orbit_propagate, GaussianWavepacket, KernelSpec,
    Moments,
};
use phasespace::reference::{phase_aligned_distance, l2_distance, split_step_evolve, PotentialSpec, SplitStepper};
use phasespace::symplectic::{random_symplectic, symplectic_defect, symplectic_eigenvalues, PhasePoint};
use phasespace::uncertainty::{certify_cloud, verdicts, CloudCertificate, CovarianceMatrix, Verdicts};
use phasespace::{Error, FORMAT_VERSION};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{finite, positive, Format, GridConfig, Method, PacketConfig, RunConfig};
use crate::output::Outputs;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::InvalidDimension(_) | Error::Format(_) => Failure::config(e.to_string()),
            _ => Failure::numerical(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn require_input<'a>(input: &'a Option<PathBuf>, command: &str) -> Result<&'a PathBuf, Failure> {
    input.as_ref().ok_or_else(|| Failure::config(format!("{command} needs --input")))
}

fn coherent(packet: &PacketConfig, hbar: f64) -> Result<GaussianWavepacket, Failure> {
    Ok(GaussianWavepacket::coherent(&PhasePoint::one(packet.x0, packet.p0), packet.sigma, hbar)?)
}

fn sample(wp: &GaussianWavepacket, grid: &GridConfig) -> Result<GridWavefunction, Failure> {
    Ok(wp.sample_on_grid(grid.x_min, grid.x_max, grid.n)?)
}

fn potential(h: &NamedHamiltonian) -> Result<PotentialSpec, Failure> {
    match *h {
        NamedHamiltonian::Free { .. } => Ok(PotentialSpec::Zero),
        NamedHamiltonian::Oscillator { m, omega } => Ok(PotentialSpec::Harmonic { m, omega }),
        NamedHamiltonian::Quartic { g, .. } => Ok(PotentialSpec::Quartic { g }),
        NamedHamiltonian::Pendulum { k, .. } => Ok(PotentialSpec::Pendulum { k }),
        NamedHamiltonian::HenonHeiles { .. } => Err(Failure::config("the reference solver is one-dimensional")),
    }
}

fn write_grid(out: &Outputs, stem: &str, fmt: Format, psi: &GridWavefunction) -> Result<PathBuf, Failure> {
    let name = format!("{stem}.{}", fmt.ext());
    match fmt {
        Format::Json => out.write_bytes(&name, format!("{}\n", psi.to_json()?).as_bytes()),
        Format::Csv => out.write_with(&name, |buf| psi.write_csv(buf)),
    }
}

fn write_report<T: Serialize>(out: &Outputs, stem: &str, fmt: Format, report: &T) -> Result<PathBuf, Failure> {
    let name = format!("{stem}.{}", fmt.ext());
    match fmt {
        Format::Json => out.write_json(&name, report),
        Format::Csv => out.write_flat_csv(&name, report),
    }
}

#[derive(Serialize)]
struct GridSummary {
    n: usize,
    x_min: f64,
    dx: f64,
}

#[derive(Serialize)]
struct OracleSummary {
    dt: f64,
    steps: usize,
    l2_distance: f64,
    phase_aligned_l2: f64,
    phase: f64,
}

#[derive(Serialize)]
struct PropagateSummary {
    format_version: u32,
    method: Method,
    hamiltonian: NamedHamiltonian,
    t: f64,
    hbar: f64,
    grid: GridSummary,
    initial_norm2: f64,
    final_norm2: f64,
    final_moments: Moments,
    #[serde(skip_serializing_if = "Option::is_none")]
    packet_center: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleSummary>,
}

fn read_grid(path: &Path, hbar: f64) -> Result<GridWavefunction, Failure> {
    let psi = match extension(path).as_str() {
        "json" => GridWavefunction::from_json(&read_text(path)?)?,
        "csv" => GridWavefunction::read_csv(read_text(path)?.as_bytes(), hbar)?,
        other => return Err(Failure::config(format!("unknown wavefunction format '.{other}'"))),
    };
    if psi.hbar() != hbar {
        return Err(Failure::config(format!("input has hbar = {}, run uses {hbar}", psi.hbar())));
    }
    Ok(psi)
}

pub fn propagate(cfg: &RunConfig) -> Outcome {
    let pc = &cfg.propagate;
    let hbar = cfg.hbar;
    pc.hamiltonian.validate().map_err(Failure::config)?;
    pc.grid.validate().map_err(Failure::config)?;
    pc.packet.validate().map_err(Failure::config)?;
    finite("t", pc.t).map_err(Failure::config)?;
    positive("dt", pc.dt).map_err(Failure::config)?;
    positive("oracle_dt", pc.oracle_dt).map_err(Failure::config)?;
    if pc.oracle && pc.t < 0.0 {
        return Err(Failure::config("the reference solver runs forward in time only"));
    }
    let fmt = cfg.format.unwrap_or(Format::Json);
    let out = Outputs::new(&cfg.out, pc.input.iter())?;
    let h = pc.hamiltonian.named();

    let (psi0, psi1, packet) = match pc.method {
        Method::Kernel => {
            let psi0 = match &pc.input {
                Some(path) => read_grid(path, hbar)?,
                None => sample(&coherent(&pc.packet, hbar)?, &pc.grid)?,
            };
            let spec = match h {
                NamedHamiltonian::Free { m } => KernelSpec::free(m, pc.t, hbar),
                NamedHamiltonian::Oscillator { m, omega } => KernelSpec::oscillator(m, omega, pc.t, hbar),
                _ => return Err(Failure::config("the kernel method needs --h free or --h oscillator")),
            };
            let psi1 = kernel_propagate_with(&psi0, &spec, &cfg.tolerances.kernel())?;
            (psi0, psi1, None)
        }
        Method::Gaussian | Method::NearbyOrbit => {
            let wp0 = match &pc.input {
                Some(path) => {
                    if extension(path) != "json" {
                        return Err(Failure::config("packet methods read a Gaussian wavepacket JSON"));
                    }
                    GaussianWavepacket::from_json(&read_text(path)?)?
                }
                None => coherent(&pc.packet, hbar)?,
            };
            if wp0.hbar() != hbar || wp0.dof() != 1 {
                return Err(Failure::config(format!(
                    "need a one-dimensional packet with hbar = {hbar}, got dof {} and hbar {}",
                    wp0.dof(),
                    wp0.hbar()
                )));
            }
            let wp1 = if pc.method == Method::Gaussian {
                let q = h
                    .as_quadratic()
                    .ok_or_else(|| Failure::config("the gaussian method needs a quadratic Hamiltonian; use nearby-orbit"))?;
                gaussian_propagate(&wp0, &q, pc.t)?
            } else {
                nearby_orbit_propagate(&h, &wp0, pc.t, pc.dt)?
            };
            (sample(&wp0, &pc.grid)?, sample(&wp1, &pc.grid)?, Some(wp1))
        }
    };

    let (reference, oracle) = if pc.oracle {
        let steps = if pc.t == 0.0 { 0 } else { ((pc.t / pc.oracle_dt).round() as usize).max(1) };
        let dt = if steps == 0 { pc.oracle_dt } else { pc.t / steps as f64 };
        let reference = split_step_evolve(&psi0, &potential(&h)?, h.mass(), dt, steps)?;
        let (aligned, phase) = phase_aligned_distance(&psi1, &reference)?;
        let summary = OracleSummary {
            dt,
            steps,
            l2_distance: l2_distance(&psi1, &reference)?,
            phase_aligned_l2: aligned,
            phase,
        };
        (Some(reference), Some(summary))
    } else {
        (None, None)
    };

    let summary = PropagateSummary {
        format_version: FORMAT_VERSION,
        method: pc.method,
        hamiltonian: h,
        t: pc.t,
        hbar,
        grid: GridSummary {
            n: psi1.len(),
            x_min: psi1.x0(),
            dx: psi1.dx(),
        },
        initial_norm2: psi0.norm2(),
        final_norm2: psi1.norm2(),
        final_moments: ehrenfest_means(&psi1)?,
        packet_center: packet.as_ref().map(|wp| [wp.center_x()[0], wp.center_p()[0]]),
        oracle,
    };

    write_grid(&out, "propagate_final", fmt, &psi1)?;
    if let Some(reference) = &reference {
        write_grid(&out, "propagate_oracle", fmt, reference)?;
    }
    if let Some(wp) = &packet {
        out.write_bytes("propagate_packet.json", format!("{}\n", wp.to_json()?).as_bytes())?;
    }
    write_report(&out, "propagate_summary", fmt, &summary)?;
    match &summary.oracle {
        Some(o) => println!("propagated to t = {}; phase-aligned L2 to reference {:e}", pc.t, o.phase_aligned_l2),
        None => println!("propagated to t = {}", pc.t),
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    #[serde(default)]
    format_version: Option<u32>,
    matrix: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct TrialRow {
    trial: usize,
    seed: u64,
    min_conjugate_area: f64,
    min_area: f64,
}

#[derive(Serialize)]
struct RandomSqueezeReport {
    format_version: u32,
    dof: usize,
    radius: f64,
    seed: u64,
    tolerance: f64,
    violations: usize,
    /// Smallest conjugate shadow over all trials, divided by `π r²`.
    min_conjugate_ratio: f64,
    trials: Vec<TrialRow>,
}

fn read_symplectic(path: &Path, tol: f64) -> Result<nalgebra::DMatrix<f64>, Failure> {
    let file: MatrixFile =
        serde_json::from_str(&read_text(path)?).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    if let Some(v) = file.format_version {
        if v != FORMAT_VERSION {
            return Err(Failure::config(format!("unsupported format_version {v}")));
        }
    }
    let s = linalg::from_rows(&file.matrix)?;
    let defect = symplectic_defect(&s)?;
    if !(defect <= tol) {
        return Err(Failure::config(format!("input matrix is not symplectic: defect {defect:e} exceeds {tol:e}")));
    }
    Ok(s)
}

fn violation(count: usize) -> Outcome {
    if count > 0 {
        return Err(Failure {
            code: 4,
            message: format!("{count} conjugate shadow(s) below the ball's area"),
        });
    }
    Ok(())
}

pub fn squeeze(cfg: &RunConfig) -> Outcome {
    let sc = &cfg.squeeze;
    positive("radius", sc.radius).map_err(Failure::config)?;
    positive("lambda", sc.lambda).map_err(Failure::config)?;
    if sc.n == 0 || sc.n > 3 {
        return Err(Failure::config(format!("n must be 1, 2 or 3, got {}", sc.n)));
    }
    let fmt = cfg.format.unwrap_or(Format::Csv);
    let out = Outputs::new(&cfg.out, sc.input.iter())?;
    let tol = cfg.tolerances.shadow;

    if sc.random {
        if sc.trials == 0 {
            return Err(Failure::config("trials must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut trials = Vec::with_capacity(sc.trials);
        let mut violations = 0;
        for trial in 0..sc.trials {
            let seed = rng.next_u64();
            let report = nonsqueezing_report(random_symplectic(sc.n, seed)?.matrix(), sc.radius)?;
            violations += report.violations(tol);
            trials.push(TrialRow {
                trial,
                seed,
                min_conjugate_area: report.min_conjugate_area,
                min_area: report.planes.iter().map(|p| p.area).fold(f64::INFINITY, f64::min),
            });
        }
        let ball = PI * sc.radius * sc.radius;
        let report = RandomSqueezeReport {
            format_version: FORMAT_VERSION,
            dof: sc.n,
            radius: sc.radius,
            seed: cfg.seed,
            tolerance: tol,
            violations,
            min_conjugate_ratio: trials.iter().map(|t| t.min_conjugate_area / ball).fold(f64::INFINITY, f64::min),
            trials,
        };
        match fmt {
            Format::Json => out.write_json("squeeze_random.json", &report)?,
            Format::Csv => out.write_with("squeeze_random.csv", |buf| {
                let mut w = csv::Writer::from_writer(buf);
                for row in &report.trials {
                    w.serialize(row)?;
                }
                w.flush().map_err(|e| Error::Format(e.to_string()))?;
                Ok(())
            })?,
        };
        println!(
            "{} trials, {violations} violations, smallest conjugate shadow {} of the ball's area",
            sc.trials, report.min_conjugate_ratio
        );
        return violation(violations);
    }

    let s = match &sc.input {
        Some(path) => read_symplectic(path, cfg.tolerances.symplectic)?,
        None => squeeze_matrix(sc.n, sc.lambda)?,
    };
    let report: ShadowReport = nonsqueezing_report(&s, sc.radius)?;
    match fmt {
        Format::Json => out.write_json("shadows.json", &report)?,
        Format::Csv => out.write_with("shadows.csv", |buf| report.write_csv(buf))?,
    };
    let violations = report.violations(tol);
    println!("smallest conjugate shadow {}, {violations} violations", report.min_conjugate_area);
    violation(violations)
}

#[derive(Serialize)]
struct CovarianceReport {
    format_version: u32,
    hbar: f64,
    covariance: CovarianceMatrix,
    verdicts: Verdicts,
}

pub fn certify(cfg: &RunConfig) -> Outcome {
    let input = require_input(&cfg.certify.input, "certify")?;
    let fmt = cfg.format.unwrap_or(Format::Json);
    let out = Outputs::new(&cfg.out, [input])?;
    let text = read_text(input)?;
    let v = match extension(input).as_str() {
        "csv" => {
            let cloud = PointCloud2D::read_csv(text.as_bytes())?;
            let cert: CloudCertificate = certify_cloud(&cloud, cfg.hbar)?;
            write_report(&out, "certificate", fmt, &cert)?;
            cert.verdicts
        }
        "json" => {
            let covariance = CovarianceMatrix::from_json(&text)?;
            let report = CovarianceReport {
                format_version: FORMAT_VERSION,
                hbar: cfg.hbar,
                verdicts: verdicts(&covariance, cfg.hbar)?,
                covariance,
            };
            write_report(&out, "certificate", fmt, &report)?;
            report.verdicts
        }
        other => return Err(Failure::config(format!("certify reads .csv clouds or .json covariances, got '.{other}'"))),
    };
    if fmt == Format::Csv {
        out.write_with("rsup.csv", |buf| v.rsup.write_csv(buf))?;
    }
    println!(
        "rsup {}, positivity {}, blob {} (capacity {} vs {})",
        v.rsup.all_pass, v.quantum.pass, v.blob.is_blob, v.blob.capacity, v.blob.threshold
    );
    Ok(())
}

#[derive(Serialize)]
struct EhrenfestRow {
    t: f64,
    x_quantum: f64,
    p_quantum: f64,
    x_classical: f64,
    p_classical: f64,
    deviation: f64,
}

#[derive(Serialize)]
struct EhrenfestReport {
    format_version: u32,
    hamiltonian: NamedHamiltonian,
    hbar: f64,
    dt: f64,
    rows: Vec<EhrenfestRow>,
}

fn row(t: f64, q: &Moments, c: &PhasePoint) -> EhrenfestRow {
    let (dx, dp) = (q.mean_x - c.x[0], q.mean_p - c.p[0]);
    EhrenfestRow {
        t,
        x_quantum: q.mean_x,
        p_quantum: q.mean_p,
        x_classical: c.x[0],
        p_classical: c.p[0],
        deviation: dx.hypot(dp),
    }
}

pub fn ehrenfest(cfg: &RunConfig) -> Outcome {
    let ec = &cfg.ehrenfest;
    ec.hamiltonian.validate().map_err(Failure::config)?;
    ec.grid.validate().map_err(Failure::config)?;
    ec.packet.validate().map_err(Failure::config)?;
    positive("t", ec.t).map_err(Failure::config)?;
    positive("dt", ec.dt).map_err(Failure::config)?;
    if ec.samples == 0 {
        return Err(Failure::config("samples must be at least 1"));
    }
    let fmt = cfg.format.unwrap_or(Format::Csv);
    let out = Outputs::new(&cfg.out, [])?;
    let h = ec.hamiltonian.named();
    let psi0 = sample(&coherent(&ec.packet, cfg.hbar)?, &ec.grid)?;

    // Whole split steps per output interval, no larger than the requested dt.
    let interval = ec.t / ec.samples as f64;
    let per = (interval / ec.dt).ceil().max(1.0) as usize;
    let dt = interval / per as f64;
    let mut stepper = SplitStepper::new(&psi0, &potential(&h)?, h.mass(), dt)?;

    let m0 = ehrenfest_means(&psi0)?;
    let mean0 = PhasePoint::one(m0.mean_x, m0.mean_p);
    let quadratic = h.as_quadratic();
    let mut classical = mean0.clone();
    let mut rows = vec![row(0.0, &m0, &mean0)];
    for k in 1..=ec.samples {
        let t = k as f64 * interval;
        stepper.advance(per);
        let psi = stepper.current();
        if !psi.values().iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp {
                last_valid_time: (k - 1) as f64 * interval,
            }
            .into());
        }
        classical = match &quadratic {
            Some(q) => ehrenfest_classical(q, &mean0, t),
            None => classical_trajectory(&h, &classical, interval, dt)?.endpoint().clone(),
        };
        rows.push(row(t, &ehrenfest_means(&psi)?, &classical));
    }

    let report = EhrenfestReport {
        format_version: FORMAT_VERSION,
        hamiltonian: h,
        hbar: cfg.hbar,
        dt,
        rows,
    };
    match fmt {
        Format::Json => out.write_json("ehrenfest.json", &report)?,
        Format::Csv => out.write_with("ehrenfest.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            for r in &report.rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::Format(e.to_string()))?;
            Ok(())
        })?,
    };
    let worst = report.rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    println!("{} rows, largest deviation {worst:e}", report.rows.len());
    Ok(())
}

#[derive(Serialize)]
struct CapacityReport {
    format_version: u32,
    dim: usize,
    capacity: f64,
    volume: f64,
    symplectic_eigenvalues: Vec<f64>,
    ellipsoid: Ellipsoid,
}

pub fn capacity(cfg: &RunConfig) -> Outcome {
    let cc = &cfg.capacity;
    let fmt = cfg.format.unwrap_or(Format::Json);
    let out = Outputs::new(&cfg.out, cc.input.iter())?;
    let e = match (&cc.input, &cc.semiaxes, cc.radius) {
        (Some(path), None, None) => Ellipsoid::from_json(&read_text(path)?)?,
        (None, Some(axes), None) => Ellipsoid::from_semiaxes(DVector::zeros(axes.len()), axes)?,
        (None, None, Some(r)) => {
            let dim = cc.dim.ok_or_else(|| Failure::config("a ball needs --dim"))?;
            Ellipsoid::ball(dim, r)?
        }
        _ => return Err(Failure::config("give exactly one of --input, --semiaxes or --radius")),
    };
    let report = CapacityReport {
        format_version: FORMAT_VERSION,
        dim: e.dim(),
        capacity: ellipsoid_capacity(&e)?,
        volume: ellipsoid_volume(&e)?,
        symplectic_eigenvalues: symplectic_eigenvalues(e.shape())?,
        ellipsoid: e,
    };
    write_report(&out, "capacity", fmt, &report)?;
    println!("capacity {}, volume {}", report.capacity, report.volume);
    Ok(())
}

#[derive(Serialize)]
struct JohnReport {
    format_version: u32,
    polytope: Polytope,
    john: JohnEllipsoid,
}

pub fn john(cfg: &RunConfig) -> Outcome {
    let input = require_input(&cfg.john.input, "john")?;
    let fmt = cfg.format.unwrap_or(Format::Json);
    let out = Outputs::new(&cfg.out, [input])?;
    let text = read_text(input)?;
    let polytope = match extension(input).as_str() {
        "json" => Polytope::from_json(&text)?,
        "csv" => convex_hull_2d(&PointCloud2D::read_csv(text.as_bytes())?)?,
        other => return Err(Failure::config(format!("john reads .json polytopes or .csv clouds, got '.{other}'"))),
    };
    let opts = JohnOptions {
        gap_tol: cfg.tolerances.john_gap,
        ..JohnOptions::default()
    };
    let john = john_ellipsoid_certified(&polytope, &opts)?;
    println!("log det {}, duality gap {:e}", john.log_det, john.duality_gap);
    write_report(&out, "john", fmt, &JohnReport {
        format_version: FORMAT_VERSION,
        polytope,
        john,
    })?;
    Ok(())
}
