//! `phasespace`: metaplectic propagation, non-squeezing demos and
//! uncertainty certification from the command line.
//!
//! Exit codes: 0 success (whatever the verdicts), 1 output I/O failure,
//! 2 invalid configuration or input, 3 numerical failure, 4 a non-squeezing
//! violation.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;
use crate::config::{Format, HamiltonianConfig, HamiltonianName, Method, PacketConfig, RunConfig};

#[derive(Parser)]
#[command(name = "phasespace", version, about = "Symplectic and metaplectic tools for phase-space computations")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[arg(long, global = true, allow_hyphen_values = true)]
    hbar: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker thread cap for the parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    tol_phase_limit: Option<f64>,
    #[arg(long, global = true)]
    tol_quadrature: Option<f64>,
    #[arg(long, global = true)]
    tol_edge: Option<f64>,
    #[arg(long, global = true)]
    tol_support: Option<f64>,
    #[arg(long, global = true)]
    tol_symplectic: Option<f64>,
    #[arg(long, global = true)]
    tol_shadow: Option<f64>,
    #[arg(long, global = true)]
    tol_john_gap: Option<f64>,
}

#[derive(Args)]
struct HamiltonianArgs {
    /// Hamiltonian.
    #[arg(long = "h", value_enum)]
    name: Option<HamiltonianName>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    /// Quartic coupling in g x^4.
    #[arg(long)]
    g: Option<f64>,
    /// Pendulum strength in -k cos x.
    #[arg(long)]
    k: Option<f64>,
}

#[derive(Args)]
struct GridArgs {
    /// Number of grid points (a power of two).
    #[arg(long = "grid-n")]
    n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x_max: Option<f64>,
}

#[derive(Args)]
struct PacketArgs {
    /// Initial position of the built-in Gaussian.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// Initial momentum of the built-in Gaussian.
    #[arg(long, allow_hyphen_values = true)]
    p0: Option<f64>,
    /// Position spread of the built-in Gaussian.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate a wavefunction under a Hamiltonian.
    Propagate {
        #[command(flatten)]
        h: HamiltonianArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        packet: PacketArgs,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long, allow_hyphen_values = true)]
        t: Option<f64>,
        /// Step of the nearby-orbit integrator.
        #[arg(long)]
        dt: Option<f64>,
        /// Also run the split-step reference solver and compare.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        oracle_dt: Option<f64>,
        /// Initial state: grid JSON/CSV for the kernel method, packet JSON otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Shadows of a symplectic image of a ball on the coordinate planes.
    Squeeze {
        /// Squeeze factor of the built-in demo.
        #[arg(long)]
        lambda: Option<f64>,
        /// Degrees of freedom.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        /// Check many seeded random symplectic matrices instead.
        #[arg(long)]
        random: bool,
        #[arg(long)]
        trials: Option<usize>,
        /// JSON file holding the matrix as {"matrix": [[..], ..]}.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Uncertainty verdicts for a point cloud (CSV) or a covariance matrix (JSON).
    Certify {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Quantum and classical means side by side.
    Ehrenfest {
        #[command(flatten)]
        h: HamiltonianArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        packet: PacketArgs,
        #[arg(long)]
        t: Option<f64>,
        /// Largest split-step size.
        #[arg(long)]
        dt: Option<f64>,
        /// Output rows after t = 0.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Capacity and volume of an ellipsoid.
    Capacity {
        /// Ellipsoid JSON.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Radius of a ball of dimension --dim.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        /// Comma-separated semiaxes a_1..a_n,b_1..b_n of a centered ellipsoid.
        #[arg(long, value_delimiter = ',')]
        semiaxes: Option<Vec<f64>>,
    },
    /// Maximal-volume inscribed ellipsoid of a polytope (JSON) or point cloud (CSV).
    John {
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl HamiltonianArgs {
    fn apply(self, h: &mut HamiltonianConfig) {
        set!(h.name, self.name);
        set!(h.mass, self.mass);
        set!(h.omega, self.omega);
        set!(h.g, self.g);
        set!(h.k, self.k);
    }
}

impl GridArgs {
    fn apply(self, g: &mut config::GridConfig) {
        set!(g.n, self.n);
        set!(g.x_min, self.x_min);
        set!(g.x_max, self.x_max);
    }
}

impl PacketArgs {
    fn apply(self, p: &mut PacketConfig) {
        set!(p.x0, self.x0);
        set!(p.p0, self.p0);
        set!(p.sigma, self.sigma);
    }
}

#[derive(Clone, Copy)]
enum Which {
    Propagate,
    Squeeze,
    Certify,
    Ehrenfest,
    Capacity,
    John,
}

fn resolve(cli: Cli) -> Result<(RunConfig, Which, bool), Failure> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path).map_err(Failure::config)?,
        None => RunConfig::default(),
    };
    set!(cfg.hbar, g.hbar);
    set!(cfg.seed, g.seed);
    set!(cfg.out, g.out);
    if g.format.is_some() {
        cfg.format = g.format;
    }
    if g.threads.is_some() {
        cfg.threads = g.threads;
    }
    let tol = &mut cfg.tolerances;
    set!(tol.phase_limit, g.tol_phase_limit);
    set!(tol.quadrature, g.tol_quadrature);
    set!(tol.edge, g.tol_edge);
    set!(tol.support, g.tol_support);
    set!(tol.symplectic, g.tol_symplectic);
    set!(tol.shadow, g.tol_shadow);
    set!(tol.john_gap, g.tol_john_gap);

    let which = match cli.command {
        Command::Propagate { h, grid, packet, method, t, dt, oracle, oracle_dt, input } => {
            let pc = &mut cfg.propagate;
            h.apply(&mut pc.hamiltonian);
            grid.apply(&mut pc.grid);
            packet.apply(&mut pc.packet);
            set!(pc.method, method);
            set!(pc.t, t);
            set!(pc.dt, dt);
            pc.oracle |= oracle;
            set!(pc.oracle_dt, oracle_dt);
            if input.is_some() {
                pc.input = input;
            }
            Which::Propagate
        }
        Command::Squeeze { lambda, n, radius, random, trials, input } => {
            let sc = &mut cfg.squeeze;
            set!(sc.lambda, lambda);
            set!(sc.n, n);
            set!(sc.radius, radius);
            sc.random |= random;
            set!(sc.trials, trials);
            if input.is_some() {
                sc.input = input;
            }
            Which::Squeeze
        }
        Command::Certify { input } => {
            if input.is_some() {
                cfg.certify.input = input;
            }
            Which::Certify
        }
        Command::Ehrenfest { h, grid, packet, t, dt, samples } => {
            let ec = &mut cfg.ehrenfest;
            h.apply(&mut ec.hamiltonian);
            grid.apply(&mut ec.grid);
            packet.apply(&mut ec.packet);
            set!(ec.t, t);
            set!(ec.dt, dt);
            set!(ec.samples, samples);
            Which::Ehrenfest
        }
        Command::Capacity { input, radius, dim, semiaxes } => {
            let cc = &mut cfg.capacity;
            if input.is_some() {
                cc.input = input;
            }
            if radius.is_some() {
                cc.radius = radius;
            }
            if dim.is_some() {
                cc.dim = dim;
            }
            if semiaxes.is_some() {
                cc.semiaxes = semiaxes;
            }
            Which::Capacity
        }
        Command::John { input } => {
            if input.is_some() {
                cfg.john.input = input;
            }
            Which::John
        }
    };
    Ok((cfg, which, g.dump_config))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (cfg, which, dump) = resolve(cli)?;
    if dump {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    cfg.validate_common().map_err(Failure::config)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("cannot set up {n} threads: {e}")))?;
    }
    match which {
        Which::Propagate => commands::propagate(&cfg),
        Which::Squeeze => commands::squeeze(&cfg),
        Which::Certify => commands::certify(&cfg),
        Which::Ehrenfest => commands::ehrenfest(&cfg),
        Which::Capacity => commands::capacity(&cfg),
        Which::John => commands::john(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
