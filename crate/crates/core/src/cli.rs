//! Command-line front end.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abstraction::{build_symbolic_model, load_model, save_model, SymbolicModel};
use crate::config::RunConfig;
use crate::dynamics::{integrate_f, State};
use crate::error::{Error, Result};
use crate::games::{synthesize, verify_synthesis, Synthesis};
use crate::reach::{lipschitz_ball_reach, over_approx_reach, IntervalBox};
use crate::refine::{check_initial_coverage, Controller};
use crate::runtime::{
    monitor, simulate_batch, write_events_csv, write_report_json, write_trace_csv,
    MonitorReport, Selector,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STALE: i32 = 3;
pub const EXIT_DOMAIN: i32 = 4;
pub const EXIT_IO: i32 = 5;
pub const EXIT_SYNTHESIS: i32 = 6;
pub const EXIT_CHECK_FAILED: i32 = 7;

pub const OUT_DIR_ENV: &str = "SIRS_ETC_OUT_DIR";

const MODEL_FILE: &str = "model.bin";
const SYNTH_FILE: &str = "synthesis.json";

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParams(_) | Error::Integrator(_) => EXIT_CONFIG,
        Error::StaleModel(_) | Error::CorruptModel(_) | Error::Version { .. } => EXIT_STALE,
        Error::Domain { .. } => EXIT_DOMAIN,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        Error::Synthesis(_) | Error::Infeasible(_) | Error::EmptyCandidates | Error::EnvelopeOrder { .. } => {
            EXIT_SYNTHESIS
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sirs-etc", version, about = "Event-triggered controller synthesis for SIRS models")]
pub struct Cli {
    /// TOML configuration; built-in Tokyo defaults when omitted.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, global = true, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the symbolic model and save it.
    Abstract {
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Solve both games on the saved model.
    Synth,
    /// Closed-loop simulation from one initial state or a grid over X_0.
    Simulate {
        /// Initial state as `S,I`.
        #[arg(long, value_parser = parse_state, conflicts_with = "batch")]
        x0: Option<State>,
        /// Simulate an `N × N` grid over the initial box.
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Sampled endpoints, mixed-monotone box and Lipschitz ball for one box.
    CompareReach {
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0.17)]
        u: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Coverage of X_0 and closure of the synthesized policies.
    Check,
}

fn parse_state(s: &str) -> std::result::Result<State, String> {
    let (a, b) = s.split_once(',').ok_or("expected S,I")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("S: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("I: {e}"))?;
    Ok(State::new(a, b))
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
}

impl Context {
    fn model_path(&self) -> PathBuf {
        self.out.join(MODEL_FILE)
    }

    fn load_model(&self) -> Result<SymbolicModel> {
        load_model(&self.model_path(), Some(&self.cfg.abstraction()?))
    }

    fn load_synthesis(&self, model: &SymbolicModel) -> Result<Synthesis> {
        let text = std::fs::read_to_string(self.out.join(SYNTH_FILE))?;
        let syn: Synthesis = serde_json::from_str(&text)?;
        let want = crate::abstraction::config_digest(&model.config);
        if syn.model_digest != want || syn.winning_set.len() != model.states.len() {
            return Err(Error::StaleModel("synthesis result does not belong to the current model".into()));
        }
        Ok(syn)
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Context { cfg, out: cli.out };
    match cli.command {
        Command::Abstract { workers } => cmd_abstract(&ctx, workers),
        Command::Synth => cmd_synth(&ctx),
        Command::Simulate { x0, batch } => cmd_simulate(&ctx, x0, batch),
        Command::CompareReach { samples, u, t } => cmd_compare(&ctx, samples, u, t),
        Command::Check => cmd_check(&ctx),
    }
}

fn cmd_abstract(ctx: &Context, workers: Option<usize>) -> Result<i32> {
    let acfg = ctx.cfg.abstraction()?;
    let model = build_symbolic_model(&acfg, workers)?;
    save_model(&model, &ctx.model_path())?;
    let pairs: usize = model
        .trans
        .iter()
        .map(|r| r.iter().filter(|v| !v.is_empty()).count())
        .sum();
    println!(
        "states {}  initial {}  safe {}  terminal {}  actionable pairs {}",
        model.states.len(),
        model.count(&model.init),
        model.count(&model.safe),
        model.count(&model.target),
        pairs
    );
    println!("wrote {}", ctx.model_path().display());
    Ok(0)
}

fn cmd_synth(ctx: &Context) -> Result<i32> {
    let model = ctx.load_model()?;
    let syn = synthesize(&model);
    let path = ctx.out.join(SYNTH_FILE);
    std::fs::write(&path, serde_json::to_string(&syn)?)?;
    let count = |v: &[bool]| v.iter().filter(|&&b| b).count();
    println!(
        "X'_F {}  X' {}  X'_0 {}  max rank {}  ({} safety / {} reach iterations)",
        count(&syn.terminal_set),
        count(&syn.winning_set),
        count(&syn.initial_set),
        syn.ranks.initial_rank.saturating_sub(1),
        syn.safety_iterations,
        syn.reach_iterations
    );
    println!("wrote {}", path.display());
    if !syn.is_feasible() {
        return Err(Error::Synthesis("empty terminal or initial winning set".into()));
    }
    Ok(0)
}

fn label(x: State) -> String {
    format!("S{:.4}_I{:.4}", x.s, x.i)
}

fn emit(ctx: &Context, x0: State, trace: &crate::runtime::SimulationTrace, rep: &MonitorReport) -> Result<()> {
    let l = label(x0);
    write_trace_csv(trace, &ctx.out.join(format!("trace_{l}.csv")))?;
    write_events_csv(trace, &ctx.out.join(format!("events_{l}.csv")))?;
    write_report_json(rep, &ctx.out.join(format!("report_{l}.json")))?;
    Ok(())
}

fn cmd_simulate(ctx: &Context, x0: Option<State>, batch: Option<usize>) -> Result<i32> {
    let model = ctx.load_model()?;
    let syn = ctx.load_synthesis(&model)?;
    let acfg = &model.config;
    let selector = Selector::new(
        Controller::new(&model, &syn),
        ctx.cfg.selection(),
        &acfg.params,
        &acfg.integrator,
    );
    let starts: Vec<State> = match (x0, batch) {
        (Some(x), _) => vec![x],
        (None, Some(n)) => {
            let b = &acfg.bounds;
            let n = n.max(1);
            let at = |lo: f64, hi: f64, k: usize| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 };
            (0..n)
                .flat_map(|a| (0..n).map(move |c| (a, c)))
                .map(|(a, c)| State::new(at(b.s0_lower, b.s0_upper, a), at(b.i0_lower, b.i0_upper, c)))
                .collect()
        }
        (None, None) => vec![State::new(0.80, 0.07)],
    };
    let results = simulate_batch(&starts, &selector, ctx.cfg.t_end);
    let mut all_passed = true;
    for (x0, res) in starts.iter().zip(results) {
        let trace = res?;
        let rep = monitor(&trace, &acfg.bounds, &acfg.grid);
        emit(ctx, *x0, &trace, &rep)?;
        println!(
            "x0 = ({:.4}, {:.4})  events {}  X_F entry {}  min S {:.4}  max I {:.4}  {}",
            x0.s,
            x0.i,
            rep.event_count,
            rep.settle_time.map_or("never".into(), |t| format!("{t:.2}")),
            rep.min_s,
            rep.max_i,
            if rep.passed() { "ok" } else { "FAILED" }
        );
        all_passed &= rep.passed();
    }
    Ok(if all_passed { 0 } else { EXIT_CHECK_FAILED })
}

/// Sampled true endpoints alongside both over-approximations.
pub struct ReachComparison {
    pub start: IntervalBox,
    pub samples: Vec<State>,
    pub mixed_monotone: IntervalBox,
    pub ball: IntervalBox,
}

/// Compare the two reachable-set bounds on `start` against random samples.
pub fn compare_reach(cfg: &RunConfig, start: IntervalBox, u: f64, t: f64, n: usize) -> Result<ReachComparison> {
    let p = cfg.params()?;
    let ic = cfg.integrator();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = (0..n)
        .map(|_| {
            let x = State::new(
                rng.random_range(start.lo.s..=start.hi.s),
                rng.random_range(start.lo.i..=start.hi.i),
            );
            integrate_f(x, u, t, &p, &ic)
        })
        .collect::<Result<Vec<_>>>()?;
    let mm = over_approx_reach(&start, u, t, &p, &ic)?;
    let center = State::new(0.5 * (start.lo.s + start.hi.s), 0.5 * (start.lo.i + start.hi.i));
    let radius = 0.5 * start.width_s().max(start.width_i());
    let ball = lipschitz_ball_reach(center, radius, u, t, &p, &ic)?.bounding_box();
    Ok(ReachComparison {
        start,
        samples,
        mixed_monotone: mm,
        ball,
    })
}

fn cmd_compare(ctx: &Context, n: usize, u: f64, t: f64) -> Result<i32> {
    let start = IntervalBox::new(State::new(0.595, 0.045), State::new(0.605, 0.055))?;
    let cmp = compare_reach(&ctx.cfg, start, u, t, n)?;
    let path = ctx.out.join("compare_reach.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["kind", "S", "I"])?;
    for x in &cmp.samples {
        w.serialize(("sample", x.s, x.i))?;
    }
    for (kind, bx) in [("initial", cmp.start), ("mixed_monotone", cmp.mixed_monotone), ("lipschitz", cmp.ball)] {
        for c in bx.corners() {
            w.serialize((kind, c.s, c.i))?;
        }
    }
    w.flush()?;
    let inside = cmp.samples.iter().filter(|x| cmp.mixed_monotone.contains(**x, 1e-12)).count();
    println!(
        "{inside}/{} samples inside the mixed-monotone box; box area {:.3e}, ball box area {:.3e}",
        cmp.samples.len(),
        cmp.mixed_monotone.area(),
        cmp.ball.area()
    );
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_check(ctx: &Context) -> Result<i32> {
    let model = ctx.load_model()?;
    let syn = ctx.load_synthesis(&model)?;
    let init = Synthesis::states_in(&model, &syn.initial_set);
    let cov = check_initial_coverage(&model.config.bounds, &init, model.grid());
    let closure = verify_synthesis(&model, &syn);
    println!("coverage of X_0: {}", if cov.covered { "ok" } else { "FAILED" });
    for c in cov.uncovered.iter().take(20) {
        println!("  uncovered [{:.4}, {:.4}] x [{:.4}, {:.4}]", c.lo.s, c.hi.s, c.lo.i, c.hi.i);
    }
    match &closure {
        Ok(()) => println!("policy closure and rank descent: ok"),
        Err(m) => println!("policy closure and rank descent: FAILED ({m})"),
    }
    Ok(if cov.covered && closure.is_ok() { 0 } else { EXIT_CHECK_FAILED })
}
