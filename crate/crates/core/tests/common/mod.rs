#![allow(dead_code)]

//! Independent reference computations shared by the integration tests.

use sirs_etc::abstraction::AbstractionConfig;
use sirs_etc::config::RunConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sirs_etc::games::Arena;

pub const GAMMA: f64 = 0.15;
pub const XI: f64 = 0.02;

pub fn tokyo() -> AbstractionConfig {
    RunConfig::default().abstraction().unwrap()
}

/// SIRS vector field, written out independently of the library.
pub fn field(s: f64, i: f64, u: f64) -> (f64, f64) {
    (-u * s * i + XI * (1.0 - s - i), u * s * i - GAMMA * i)
}

pub fn rk4(s: f64, i: f64, u: f64, h: f64) -> (f64, f64) {
    let k1 = field(s, i, u);
    let k2 = field(s + 0.5 * h * k1.0, i + 0.5 * h * k1.1, u);
    let k3 = field(s + 0.5 * h * k2.0, i + 0.5 * h * k2.1, u);
    let k4 = field(s + h * k3.0, i + h * k3.1, u);
    (
        s + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        i + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Flow to time `t` with a fine fixed step.
pub fn flow(s: f64, i: f64, u: f64, t: f64, h: f64) -> (f64, f64) {
    let n = (t / h).floor() as usize;
    let (mut a, mut b) = (s, i);
    for _ in 0..n {
        (a, b) = rk4(a, b, u, h);
    }
    let rem = t - n as f64 * h;
    if rem > 0.0 {
        (a, b) = rk4(a, b, u, rem);
    }
    (a, b)
}

/// First `|I(t) − I(0)| = eps` by dense scan with linear interpolation.
pub fn dense_event(s: f64, i: f64, u: f64, eps: f64, h: f64, t_max: f64) -> Option<(f64, f64, f64)> {
    let (mut a, mut b) = (s, i);
    let mut t = 0.0;
    while t < t_max {
        let (a1, b1) = rk4(a, b, u, h);
        for level in [i + eps, i - eps] {
            let (g0, g1) = (b - level, b1 - level);
            if g0.signum() != g1.signum() || g1 == 0.0 {
                let w = g0 / (g0 - g1);
                return Some((t + w * h, a + w * (a1 - a), level));
            }
        }
        (a, b) = (a1, b1);
        t += h;
    }
    None
}

/// Cost of one choice sequence: `λ`-discounted integral of `1/u`.
pub fn discounted_cost(lambda: f64, horizon: f64, deltas: &[f64], inputs: &[f64]) -> f64 {
    let k = (1.0 / lambda).ln();
    let pw = |t: f64| if t.is_infinite() { 0.0 } else { lambda.powf(t) };
    let mut j = 0.0;
    for l in 0..deltas.len() {
        let end = if l + 1 < deltas.len() { deltas[l + 1] } else { horizon };
        j += (pw(deltas[l]) - pw(end)) / (k * inputs[l]);
    }
    j
}

/// Union of all controlled-invariant subsets of the target set.
pub fn brute_safety(a: &Arena) -> Vec<bool> {
    let n = a.succ.len();
    let mut union = vec![false; n];
    for mask in 0u32..(1 << n) {
        let inp = |x: usize| mask >> x & 1 == 1;
        let invariant = (0..n).filter(|&x| inp(x)).all(|x| {
            a.target[x]
                && (0..a.num_actions).any(|k| {
                    a.terminal_ok[x][k] && !a.succ[x][k].is_empty() && a.succ[x][k].iter().all(|&y| inp(y as usize))
                })
        });
        if invariant {
            for (x, u) in union.iter_mut().enumerate() {
                *u |= inp(x);
            }
        }
    }
    union
}

/// Least `k` such that `x` can be forced into `seed` within `k` steps.
pub fn brute_reach(a: &Arena, seed: &[bool]) -> Vec<Option<u32>> {
    let n = a.succ.len();
    let mut memo = vec![vec![None::<bool>; n + 1]; n];
    fn win(a: &Arena, seed: &[bool], x: usize, k: usize, memo: &mut Vec<Vec<Option<bool>>>) -> bool {
        if seed[x] {
            return true;
        }
        if k == 0 || !a.safe[x] {
            return false;
        }
        if let Some(v) = memo[x][k] {
            return v;
        }
        let mut v = false;
        for act in 0..a.num_actions {
            if a.reach_ok[x][act] && !a.succ[x][act].is_empty() {
                let all = a.succ[x][act].clone().into_iter().all(|y| win(a, seed, y as usize, k - 1, memo));
                if all {
                    v = true;
                    break;
                }
            }
        }
        memo[x][k] = Some(v);
        v
    }
    (0..n)
        .map(|x| (0..=n).find(|&k| win(a, seed, x, k, &mut memo)).map(|k| k as u32))
        .collect()
}

/// Random arena with at most 12 states and 4 actions.
pub fn random_arena(rng: &mut ChaCha8Rng) -> Arena {
    let n = rng.random_range(1..=12usize);
    let na = 4;
    // up to three successors, occasionally none
    let subset = |rng: &mut ChaCha8Rng, p: f64| -> Vec<u32> {
        let mut v: Vec<u32> = (0..rng.random_range(0..=3)).map(|_| rng.random_range(0..n as u32)).collect();
        if rng.random_bool(p) {
            v.push(rng.random_range(0..n as u32));
        }
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut a = Arena {
        num_actions: na,
        succ: Vec::new(),
        succ0: Vec::new(),
        terminal_ok: Vec::new(),
        reach_ok: Vec::new(),
        initial_ok: Vec::new(),
        safe: (0..n).map(|_| rng.random_bool(0.8)).collect(),
        target: Vec::new(),
        initial: Vec::new(),
    };
    a.target = (0..n).map(|x| a.safe[x] && rng.random_bool(0.6)).collect();
    a.initial = (0..n).map(|x| !a.target[x] && rng.random_bool(0.5)).collect();
    for x in 0..n {
        let density = rng.random_range(0.1..0.5);
        a.succ.push((0..na).map(|_| subset(rng, density)).collect());
        a.succ0.push(if a.initial[x] {
            (0..na).map(|_| subset(rng, density)).collect()
        } else {
            Vec::new()
        });
        a.terminal_ok.push((0..na).map(|_| rng.random_bool(0.85)).collect());
        a.reach_ok.push((0..na).map(|_| rng.random_bool(0.8)).collect());
        let r = a.reach_ok[x].clone();
        a.initial_ok.push((0..na).map(|k| a.initial[x] && r[k] && rng.random_bool(0.8)).collect());
    }
    a
}
