//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sirs_etc::abstraction::{build_symbolic_model, Label, SymbolicModel};
use sirs_etc::dynamics::{concrete_event_time, eval_d, eval_f, IntegratorConfig, ModelParams, State};
use sirs_etc::games::{reachability_game, safety_game, synthesize, Synthesis};
use sirs_etc::reach::{lipschitz_ball_reach, over_approx_reach, IntervalBox};
use sirs_etc::refine::{check_initial_coverage, Controller, Relation, RelationKind};
use sirs_etc::runtime::{monitor, simulate_closed_loop, Phase, SelectionConfig, Selector, SimulationTrace};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, elapsed: Duration, limit: Duration, out: Outcome) -> bool {
    let pass = out.pass && elapsed <= limit;
    println!(
        "criterion {n} [{name}]: {}  ({}; {:.2} s, limit {} s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    let p = ModelParams::tokyo();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let simplex = |rng: &mut ChaCha8Rng| loop {
        let (s, i): (f64, f64) = (rng.random(), rng.random());
        if s + i <= 1.0 {
            return State::new(s, i);
        }
    };
    let mut max_err: f64 = 0.0;
    for _ in 0..100_000 {
        let x = simplex(&mut rng);
        let u = rng.random_range(0.17..=0.26);
        let (d1, d2) = eval_d(x, u, x, u, &p);
        let (f1, f2) = eval_f(x, u, &p);
        max_err = max_err.max((d1 - f1).abs()).max((d2 - f2).abs());
    }
    let h = 1e-6;
    let (mut checked, mut ok) = (0usize, 0usize);
    while checked < 100_000 {
        let x = simplex(&mut rng);
        let xh = simplex(&mut rng);
        let u = rng.random_range(0.17..=0.26);
        let uh = rng.random_range(0.17..=0.26);
        // stay clear of the uS = γ switching surface for the central differences
        if (u * x.s - p.gamma).abs() < 1e-3 || (u * (x.s + h) - p.gamma).abs() < 1e-3 {
            continue;
        }
        checked += 1;
        let d = |x: State, u: f64, xh: State, uh: f64| eval_d(x, u, xh, uh, &p);
        let cd = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0) / (2.0 * h), (a.1 - b.1) / (2.0 * h));
        let dx_s = cd(d(State::new(x.s + h, x.i), u, xh, uh), d(State::new(x.s - h, x.i), u, xh, uh));
        let dx_i = cd(d(State::new(x.s, x.i + h), u, xh, uh), d(State::new(x.s, x.i - h), u, xh, uh));
        let dxh_s = cd(d(x, u, State::new(xh.s + h, xh.i), uh), d(x, u, State::new(xh.s - h, xh.i), uh));
        let dxh_i = cd(d(x, u, State::new(xh.s, xh.i + h), uh), d(x, u, State::new(xh.s, xh.i - h), uh));
        let du = cd(d(x, u + h, xh, uh), d(x, u - h, xh, uh));
        let duh = cd(d(x, u, xh, uh + h), d(x, u, xh, uh - h));
        let tol = 1e-9;
        let good = dx_i.0 >= -tol
            && dx_s.1 >= -tol
            && dxh_i.0 <= tol
            && dxh_s.1 <= tol
            && du.0 >= -tol
            && du.1 >= -tol
            && duh.0 <= tol
            && duh.1 <= tol;
        ok += good as usize;
    }
    let frac = ok as f64 / checked as f64;
    Outcome {
        pass: max_err <= 1e-12 && frac >= 0.99,
        detail: format!("max |d(x,u,x,u) - f| = {max_err:.2e}, sign conditions at {:.2}% of {checked} points", 100.0 * frac),
    }
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let p = ModelParams::tokyo();
    let cfg = IntegratorConfig::default();
    let start = IntervalBox::new(State::new(0.595, 0.045), State::new(0.605, 0.055)).unwrap();
    let (u, t) = (0.17, 1.0);
    let mm = over_approx_reach(&start, u, t, &p, &cfg).unwrap();
    let ball = lipschitz_ball_reach(State::new(0.6, 0.05), 0.005, u, t, &p, &cfg)
        .unwrap()
        .bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut inside = 0;
    for k in 0..500 {
        // the four corners first, then uniform samples
        let (s, i) = match k {
            0 => (start.lo.s, start.lo.i),
            1 => (start.hi.s, start.lo.i),
            2 => (start.lo.s, start.hi.i),
            3 => (start.hi.s, start.hi.i),
            _ => (
                rng.random_range(start.lo.s..=start.hi.s),
                rng.random_range(start.lo.i..=start.hi.i),
            ),
        };
        let (a, b) = common::flow(s, i, u, t, 1e-4);
        inside += (mm.contains(State::new(a, b), 1e-12)) as usize;
    }
    let nested = ball.contains_box(&mm, 0.0);
    let smaller = mm.area() < ball.area();
    Outcome {
        pass: inside == 500 && nested && smaller,
        detail: format!(
            "{inside}/500 endpoints in box, box in ball: {nested}, areas {:.3e} < {:.3e}",
            mm.area(),
            ball.area()
        ),
    }
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut nontrivial = 0;
    for _ in 0..200 {
        let a = common::random_arena(&mut rng);
        let safety = safety_game(&a);
        let want_safe = common::brute_safety(&a);
        let reach = reachability_game(&a, &safety.winning);
        let want_rank = common::brute_reach(&a, &want_safe);
        let want_win: Vec<bool> = want_rank.iter().map(Option::is_some).collect();
        let want_init: Vec<bool> = (0..a.succ.len())
            .map(|x| {
                a.initial[x]
                    && a.safe[x]
                    && (0..a.num_actions).any(|k| {
                        a.initial_ok[x][k]
                            && !a.succ0[x][k].is_empty()
                            && a.succ0[x][k].iter().all(|&y| want_win[y as usize])
                    })
            })
            .collect();
        nontrivial += (reach.winning.iter().filter(|&&b| b).count() > safety.winning.iter().filter(|&&b| b).count()) as usize;
        if safety.winning != want_safe
            || reach.winning != want_win
            || reach.ranks.ranks != want_rank
            || reach.initial != want_init
        {
            mismatches += 1;
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches over 200 models ({nontrivial} with a nontrivial attractor)"),
    }
}

// ---------------------------------------------------------------- 4

fn related_successor(model: &SymbolicModel, succ: &[u32], x: State) -> bool {
    let rel = Relation::new(RelationKind::R, *model.grid());
    succ.iter().any(|&j| rel.contains(model.states[j as usize], x))
}

fn criterion_4(model: &SymbolicModel) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = *model.grid();
    let np = model.num_pairs();
    let actionable: Vec<(usize, usize)> = (0..model.states.len())
        .flat_map(|x| (0..np).map(move |a| (x, a)))
        .filter(|&(x, a)| !model.trans[x][a].is_empty())
        .collect();
    let mut violations = 0;
    for _ in 0..1000 {
        let (x, a) = actionable[rng.random_range(0..actionable.len())];
        let c = model.point(x);
        let s = c.s + rng.random_range(-0.5..=0.5) * g.eta_s;
        let (u, eps) = model.pair_values(a);
        match common::dense_event(s, c.i, u, eps, 1e-3, 1000.0) {
            Some((_, s1, i1)) if related_successor(model, &model.trans[x][a], State::new(s1, i1)) => {}
            _ => violations += 1,
        }
    }
    let initial: Vec<(usize, usize)> = (0..model.states.len())
        .filter(|&x| model.init[x])
        .flat_map(|x| (0..np).map(move |a| (x, a)))
        .filter(|&(x, a)| !model.trans0[x][a].is_empty() && model.label_l[x][a].is_determinate())
        .collect();
    let b = &model.config.bounds;
    let mut violations0 = 0;
    for _ in 0..500 {
        let (x, a) = initial[rng.random_range(0..initial.len())];
        let c = model.point(x);
        let s_lo = (c.s - g.eta_s / 2.0).max(b.s0_lower);
        let s_hi = (c.s + g.eta_s / 2.0).min(b.s0_upper);
        let i_lo = (c.i - g.eta_i / 2.0).max(b.i0_lower);
        let i_hi = (c.i + g.eta_i / 2.0).min(b.i0_upper);
        let (s, i) = (rng.random_range(s_lo..=s_hi), rng.random_range(i_lo..=i_hi));
        let (u, eps_t) = model.pair_values(a);
        let eps = match model.label_l[x][a] {
            Label::Increase => eps_t + (c.i - i),
            Label::Decrease => eps_t + (i - c.i),
            _ => unreachable!(),
        };
        match common::dense_event(s, i, u, eps, 1e-3, 1000.0) {
            Some((_, s1, i1)) if related_successor(model, &model.trans0[x][a], State::new(s1, i1)) => {}
            _ => violations0 += 1,
        }
    }
    Outcome {
        pass: violations == 0 && violations0 == 0,
        detail: format!("{violations}/1000 R violations, {violations0}/500 R0 violations"),
    }
}

// ---------------------------------------------------------------- 5 and 6

const REFERENCE_STARTS: [(f64, f64); 5] = [(0.50, 0.07), (0.65, 0.07), (0.80, 0.07), (0.80, 0.055), (0.80, 0.085)];
const SET_TOL: f64 = 1e-9;

fn in_xf(s: f64, i: f64) -> bool {
    s >= 0.60 - SET_TOL && i <= 0.05 + SET_TOL
}

/// Start of the final stay in `X_F`, if that stay reaches the end of the trace.
fn settle(trace: &SimulationTrace) -> Option<f64> {
    let last_out = trace.samples.iter().rposition(|x| !in_xf(x.s, x.i));
    match last_out {
        None => trace.samples.first().map(|x| x.t),
        Some(k) => trace.samples.get(k + 1).map(|x| x.t),
    }
}

fn criterion_5(model: &SymbolicModel, syn: &Synthesis, traces: &[SimulationTrace]) -> Outcome {
    let mut problems = Vec::new();
    let count = |v: &[bool]| v.iter().filter(|&&b| b).count();
    if count(&syn.terminal_set) == 0 {
        problems.push("empty X'_F".to_string());
    }
    let init = Synthesis::states_in(model, &syn.initial_set);
    if !check_initial_coverage(&model.config.bounds, &init, model.grid()).covered {
        problems.push("X'_0 does not cover X_0".into());
    }
    // independent scan of X_0 at a quarter of the grid resolution
    let g = model.grid();
    let b = &model.config.bounds;
    let steps = |lo: f64, hi: f64, h: f64| ((hi - lo) / h).round() as usize;
    let (ns, ni) = (steps(b.s0_lower, b.s0_upper, 0.0025), steps(b.i0_lower, b.i0_upper, 0.0025));
    for a in 0..=ns {
        for c in 0..=ni {
            let x = State::new(b.s0_lower + a as f64 * 0.0025, b.i0_lower + c as f64 * 0.0025);
            let hit = init.iter().any(|&t| {
                let p = g.point(t);
                (p.s - x.s).abs() <= g.eta_s / 2.0 + SET_TOL && (p.i - x.i).abs() <= g.eta_i / 2.0 + SET_TOL
            });
            if !hit {
                problems.push(format!("({:.4}, {:.4}) uncovered", x.s, x.i));
            }
        }
    }
    let mut entries = Vec::new();
    for (x0, tr) in REFERENCE_STARTS.iter().zip(traces) {
        let tag = format!("x0 = ({}, {})", x0.0, x0.1);
        if tr.failure.is_some() || tr.truncated {
            problems.push(format!("{tag}: failure {:?}, truncated {}", tr.failure, tr.truncated));
        }
        if tr.samples.last().is_none_or(|s| s.t < 1000.0 - 1e-6) {
            problems.push(format!("{tag}: trace ends early"));
        }
        if let Some(s) = tr.samples.iter().find(|s| s.s < 0.45 - SET_TOL || s.i > 0.10 + SET_TOL) {
            problems.push(format!("{tag}: leaves X_S at t = {}", s.t));
        }
        match settle(tr) {
            Some(t) => entries.push(format!("{t:.1}")),
            None => problems.push(format!("{tag}: does not settle in X_F")),
        }
        for e in tr.events.iter().skip(1) {
            let k = e.i / g.eta_i;
            if (k - k.round()).abs() > 1e-4 {
                problems.push(format!("{tag}: event I = {} off grid", e.i));
            }
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!(
                "|X'_F| = {}, |X'_0| = {}, X_0 covered, X_F entry times {}",
                count(&syn.terminal_set),
                count(&syn.initial_set),
                entries.join("/")
            )
        } else {
            problems.into_iter().take(5).collect::<Vec<_>>().join("; ")
        },
    }
}

fn criterion_6(model: &SymbolicModel, traces: &[SimulationTrace]) -> Outcome {
    let mut problems = Vec::new();
    for (x0, tr) in REFERENCE_STARTS.iter().zip(traces) {
        let tag = format!("x0 = ({}, {})", x0.0, x0.1);
        let rep = monitor(tr, &model.config.bounds, model.grid());
        if !rep.passed() {
            problems.push(format!("{tag}: monitor report failed"));
        }
        let ranks: Vec<u32> = tr
            .events
            .iter()
            .take_while(|e| e.phase != Phase::Terminal)
            .map(|e| e.rank.unwrap_or(u32::MAX))
            .chain(tr.events.iter().find(|e| e.phase == Phase::Terminal).and_then(|e| e.rank))
            .collect();
        if ranks.windows(2).any(|w| w[1] >= w[0]) {
            problems.push(format!("{tag}: ranks {ranks:?}"));
        }
        for w in tr.samples.windows(2) {
            if w[1].event == 0 && (w[1].u != w[0].u || w[1].eps != w[0].eps) {
                problems.push(format!("{tag}: input changes between events at t = {}", w[1].t));
                break;
            }
        }
        if let Some(s) = tr.samples.iter().find(|s| s.phase == Phase::Terminal && !in_xf(s.s, s.i)) {
            problems.push(format!("{tag}: terminal phase leaves X_F at t = {}", s.t));
        }
        if !tr.events.iter().any(|e| e.phase == Phase::Terminal) {
            problems.push(format!("{tag}: never switches to terminal"));
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            "ranks strictly decreasing, inputs piecewise constant, no terminal exits on all 5 traces".into()
        } else {
            problems.join("; ")
        },
    }
}

// ---------------------------------------------------------------- 7

struct Oracle<'a> {
    sel: &'a Selector<'a>,
    costs: Vec<(f64, f64, f64)>,
}

impl Oracle<'_> {
    /// Enumerate every choice sequence; records `(u₀, ε₀, cost)` per leaf.
    fn walk(&mut self, x: State, phase: Phase, deltas: &mut Vec<f64>, inputs: &mut Vec<f64>, first: Option<(f64, f64)>) {
        let s = self.sel;
        let sc = s.sel;
        let q = s.policy(x, phase).expect("policy state");
        let delta = *deltas.last().unwrap();
        for p in &q.pairs {
            let first = first.unwrap_or((p.u, p.eps));
            inputs.push(p.u);
            let closing = deltas.len() >= sc.max_depth || sc.lambda.powf(delta) < sc.tail_tol;
            let mut icfg = *s.integrator;
            icfg.horizon = s.event_limit(delta);
            let ev = if closing { None } else { concrete_event_time(x, p.u, p.eps, s.params, &icfg) };
            match ev {
                None => {
                    let j = common::discounted_cost(sc.lambda, sc.horizon_t, deltas, inputs);
                    self.costs.push((first.0, first.1, j));
                }
                Some(e) => {
                    deltas.push(delta + e.time);
                    let next = s.next_phase(e.state, phase);
                    self.walk(e.state, next, deltas, inputs, Some(first));
                    deltas.pop();
                }
            }
            inputs.pop();
        }
    }

    fn best(&self) -> (f64, f64, f64) {
        let min = self.costs.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        self.costs
            .iter()
            .filter(|c| c.2 <= min + 1e-9)
            .copied()
            .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
            .map(|(u, e, _)| (u, e, min))
            .unwrap()
    }
}

fn criterion_7(model: &SymbolicModel, syn: &Synthesis) -> Outcome {
    let ctrl = Controller::new(model, syn);
    let acfg = &model.config;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = *model.grid();
    let pick = |rng: &mut ChaCha8Rng, set: &[bool]| -> usize {
        let idx: Vec<usize> = (0..set.len()).filter(|&k| set[k]).collect();
        idx[rng.random_range(0..idx.len())]
    };
    let mut mismatches = Vec::new();
    let mut n_states = 0;
    while n_states < 50 {
        let depth = 1 + n_states % 4;
        let sel = SelectionConfig {
            max_depth: depth,
            ..SelectionConfig::default()
        };
        let selector = Selector::new(Controller::new(model, syn), sel, &acfg.params, &acfg.integrator);
        let (x, phase) = match n_states % 3 {
            0 => {
                let k = pick(&mut rng, &syn.initial_set);
                let c = model.point(k);
                let x = State::new(
                    c.s + rng.random_range(-0.5..=0.5) * g.eta_s,
                    c.i + rng.random_range(-0.5..=0.5) * g.eta_i,
                );
                if !ctrl.in_initial_domain(x) || ctrl.in_terminal_domain(x) {
                    continue;
                }
                (x, Phase::ReachInitial)
            }
            1 => {
                let k = pick(&mut rng, &syn.winning_set);
                let c = model.point(k);
                let x = State::new(c.s + rng.random_range(-0.5..=0.5) * g.eta_s, c.i);
                if ctrl.in_terminal_domain(x) || !ctrl.in_reach_domain(x) {
                    continue;
                }
                (x, Phase::Reach)
            }
            _ => {
                let k = pick(&mut rng, &syn.terminal_set);
                let c = model.point(k);
                (State::new(c.s + rng.random_range(-0.5..=0.5) * g.eta_s, c.i), Phase::Terminal)
            }
        };
        n_states += 1;
        let choice = selector.select_pair(x, phase).unwrap();
        let mut oracle = Oracle {
            sel: &selector,
            costs: Vec::new(),
        };
        oracle.walk(x, phase, &mut vec![0.0], &mut Vec::new(), None);
        let (u, e, j) = oracle.best();
        if choice.pair.u != u || (choice.pair.eps - e).abs() > 1e-12 || (choice.cost - j).abs() > 1e-9 {
            mismatches.push(format!(
                "({:.4}, {:.4}) {phase} depth {depth}: chose ({}, {:.4}) J={:.6}, oracle ({u}, {e:.4}) J={j:.6}",
                x.s, x.i, choice.pair.u, choice.pair.eps, choice.cost
            ));
        }
    }
    let sel = SelectionConfig::default();
    let ln = (1.0 / sel.lambda).ln();
    let mut closed_err: f64 = 0.0;
    for &u in &acfg.params.u_levels {
        let analytic = 1.0 / (u * ln);
        closed_err = closed_err.max((common::discounted_cost(sel.lambda, sel.horizon_t, &[0.0], &[u]) - analytic).abs());
        closed_err = closed_err.max((sirs_etc::runtime::sequence_cost(&sel, &[0.0], &[u]) - analytic).abs());
    }
    let known = [(0.26, 382.69), (0.17, 585.29)];
    let table_ok = known
        .iter()
        .all(|&(u, v)| (sirs_etc::runtime::sequence_cost(&sel, &[0.0], &[u]) - v).abs() <= 1e-2);
    Outcome {
        pass: mismatches.is_empty() && closed_err <= 1e-2 && table_ok,
        detail: if mismatches.is_empty() {
            format!("50/50 states match exhaustive enumeration (depth 1-4), closed-form error {closed_err:.1e}")
        } else {
            format!("{} mismatches: {}", mismatches.len(), mismatches[0])
        },
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // that does not mention this suite skips it.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance criterion".contains(a.as_str())) {
        return;
    }
    let mut all = true;

    let t = Instant::now();
    let o = criterion_1();
    all &= report(1, "decomposition", t.elapsed(), Duration::from_secs(10), o);

    let t = Instant::now();
    let o = criterion_2();
    all &= report(2, "reachability containment", t.elapsed(), Duration::from_secs(30), o);

    let t = Instant::now();
    let o = criterion_3();
    all &= report(3, "game oracle equivalence", t.elapsed(), Duration::from_secs(60), o);

    let t5 = Instant::now();
    let acfg = common::tokyo();
    let model = build_symbolic_model(&acfg, None).expect("model");
    let build_time = t5.elapsed();

    let t = Instant::now();
    let o = criterion_4(&model);
    all &= report(4, "sampled ASR soundness", t.elapsed(), Duration::from_secs(600), o);

    let t = Instant::now();
    let syn = synthesize(&model);
    let selector = Selector::new(
        Controller::new(&model, &syn),
        SelectionConfig::default(),
        &acfg.params,
        &acfg.integrator,
    );
    let traces: Vec<SimulationTrace> = REFERENCE_STARTS
        .iter()
        .map(|&(s, i)| simulate_closed_loop(State::new(s, i), &selector, 1000.0).unwrap_or_default())
        .collect();
    let o = criterion_5(&model, &syn, &traces);
    all &= report(5, "closed-loop reproduction", build_time + t.elapsed(), Duration::from_secs(1800), o);

    let t = Instant::now();
    let o = criterion_6(&model, &traces);
    all &= report(6, "monitor invariants", t.elapsed(), Duration::from_secs(60), o);

    let t = Instant::now();
    let o = criterion_7(&model, &syn);
    all &= report(7, "selection optimality", t.elapsed(), Duration::from_secs(600), o);

    if !all {
        std::process::exit(1);
    }
}
