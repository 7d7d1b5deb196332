//! One line per acceptance criterion. Exits nonzero when any criterion fails.

mod common;

use std::time::Instant;

use common::{homogeneous, lattice_search, median, scenario};
use flround::convex::check_derivatives;
use flround::rigid::{ordering_from_rigid, rigid_to_session, solve_rigid, RigidOptions, RigidResult};
use flround::session::{
    enumerate_orderings, init_feasible, run_algorithm1, Algorithm1Options, Algorithm1Result, HbMode, Ordering,
    SessionProblem,
};
use flround::sim::{replay_schedule, run_policy, Policy, SimOptions};
use flround::transform::{cost_aux, cost_upper, supply_aux, supply_lower};
use flround::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, pass: bool, detail: String, started: Instant) {
        let secs = started.elapsed().as_secs_f64();
        println!("criterion {id:>2} [{}] {name}: {detail} ({secs:.1} s)", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }
}

/// Session and rigid solutions of one default-scenario seed.
struct Solved {
    sc: Scenario,
    rigid: RigidResult,
    session: Algorithm1Result,
}

fn solve_seed(seed: u64) -> Solved {
    let sc = scenario(seed, &[]);
    let rigid = solve_rigid(&sc, &RigidOptions::default()).unwrap();
    let o = ordering_from_rigid(&rigid.solution, &sc);
    let session = run_algorithm1(&sc, &o, &Algorithm1Options::default()).unwrap();
    Solved { sc, rigid, session }
}

/// Start point with every duration lengthened and every FL allocation
/// shrunk at random. HB allocations keep their reservation.
fn interior(st: &SessionProblem, x0: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let lay = st.layout();
    let s = lay.s;
    let span: f64 = x0[..=2 * s].iter().sum::<f64>() / (2 * s + 1) as f64;
    let mut x = x0.to_vec();
    for i in 0..=2 * s {
        x[i] += span * rng.random_range(0.1..1.0);
    }
    for j in 0..s {
        x[lay.k_dl(j)] *= rng.random_range(0.8..1.0);
        for l in j..s {
            x[lay.k_ul(j, l)] *= rng.random_range(0.8..1.0);
            x[lay.p_ul(j, l)] *= rng.random_range(0.8..1.0);
        }
    }
    x
}

fn transforms(rep: &mut Report) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut tight, mut bound) = (0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let x = 10f64.powf(rng.random_range(-6.0..3.0));
        let t = 10f64.powf(rng.random_range(-3.0..3.0));
        let y = 10f64.powf(rng.random_range(-6.0..3.0));
        let prod = x * t;
        tight = tight.max((supply_lower(x, t, supply_aux(x, t)) - prod).abs() / prod);
        bound = bound.max((supply_lower(x, t, y) - prod) / prod);

        let p = rng.random_range(1e-4..1.0);
        let prod = p * t;
        tight = tight.max((cost_upper(p, t, cost_aux(p, t)) - prod).abs() / prod);
        bound = bound.max((prod - cost_upper(p, t, y)) / prod);
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = tight <= 1e-9 && bound <= 1e-9 && secs < 1.0;
    rep.line(
        1,
        "transform identities",
        pass,
        format!("worst tightness error {tight:.2e}, worst bound violation {bound:.2e} over 1000 pairs (tol 1e-9 rel, limit 1 s)"),
        t0,
    );
}

fn chords(rep: &mut Report) {
    let t0 = Instant::now();
    let sc = scenario(1, &[]);
    let o = Ordering::identity(sc.num_fl());
    let st = SessionProblem::new(&sc, &o, HbMode::Aggregated).unwrap();
    let x0 = st.pack(&init_feasible(&sc, &o).unwrap());
    let prog = st.build(&st.aux_at(&x0).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let a: Vec<f64> = x0.iter().map(|v| v * 2f64.powf(rng.random_range(-1.0..1.0))).collect();
        let b: Vec<f64> = x0.iter().map(|v| v * 2f64.powf(rng.random_range(-1.0..1.0))).collect();
        let m: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
        let slack = |fa: f64, fb: f64, fm: f64| {
            let avg = 0.5 * (fa + fb);
            (avg - fm) / avg.abs().max(1.0)
        };
        worst = worst.min(slack(prog.objective_value(&a), prog.objective_value(&b), prog.objective_value(&m)));
        let (ga, gb, gm) = (prog.constraint_values(&a), prog.constraint_values(&b), prog.constraint_values(&m));
        for i in 0..gm.len() {
            worst = worst.min(slack(ga[i], gb[i], gm[i]));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst >= -1e-8 && secs < 30.0;
    rep.line(
        2,
        "subproblem convexity",
        pass,
        format!("worst midpoint slack {worst:.2e} over 200 chords, {} constraints (tol -1e-8, limit 30 s)", prog.constraints.len()),
        t0,
    );
}

fn convergence(rep: &mut Report, solved: &[Solved], started: Instant) {
    let mut worst_rise = f64::NEG_INFINITY;
    let mut most_iters = 0;
    let mut all_converged = true;
    for s in solved {
        let trace = &s.session.trace;
        for w in trace.windows(2) {
            worst_rise = worst_rise.max(w[1].objective - w[0].objective);
        }
        most_iters = most_iters.max(s.session.iterations);
        all_converged &= s.session.converged;
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst_rise <= 1e-7 && most_iters <= 15 && all_converged && secs < 300.0;
    rep.line(
        3,
        "monotone convergence",
        pass,
        format!(
            "largest objective rise {worst_rise:.2e} (tol 1e-7), most iterations {most_iters} (limit 15), all converged {all_converged}, seeds 1-10 (limit 300 s)"
        ),
        started,
    );
}

fn derivatives(rep: &mut Report) {
    let t0 = Instant::now();
    let sc = scenario(1, &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    let mut strict = true;
    for i in 0..20 {
        let perm = {
            let mut v: Vec<usize> = (0..sc.num_fl()).collect();
            for j in (1..v.len()).rev() {
                v.swap(j, rng.random_range(0..=j));
            }
            Ordering::new(v).unwrap()
        };
        let mode = if i % 2 == 0 { HbMode::Aggregated } else { HbMode::PerUe };
        let st = SessionProblem::new(&sc, &perm, mode).unwrap();
        let x0 = st.pack(&init_feasible(&sc, &perm).unwrap());
        // draw until the point is strictly feasible
        let found = (0..100).find_map(|_| {
            let x = interior(&st, &x0, &mut rng);
            let prog = st.build(&st.aux_at(&x).unwrap()).unwrap();
            prog.is_strictly_feasible(&x).then_some((x, prog))
        });
        let Some((x, prog)) = found else {
            strict = false;
            continue;
        };
        worst = worst.max(check_derivatives(&prog, &x, 1e-6));
    }
    let pass = worst <= 1e-5 && strict;
    rep.line(
        4,
        "derivative audit",
        pass,
        format!("worst relative gradient error {worst:.2e} (tol 1e-5) at 20 points, all strictly feasible {strict}"),
        t0,
    );
}

fn dominance(rep: &mut Report, solved: &[Solved]) {
    let t0 = Instant::now();
    let mut gains: Vec<f64> = solved
        .iter()
        .map(|s| (s.rigid.outcome.objective - s.session.outcome.objective) / s.rigid.outcome.objective)
        .collect();
    let worst = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let all = solved
        .iter()
        .all(|s| s.session.outcome.objective <= s.rigid.outcome.objective);
    let med = median(&mut gains);
    let pass = all && med > 0.0;
    rep.line(
        5,
        "restriction dominance",
        pass,
        format!("session <= rigid on all seeds {all}, smallest improvement {:.2}%, median {:.2}%", worst * 100.0, med * 100.0),
        t0,
    );
}

fn against_msr(rep: &mut Report, solved: &[Solved]) {
    let t0 = Instant::now();
    let mut worst_t = 0.0_f64;
    let mut ratios = Vec::new();
    for s in solved {
        let msr = run_policy(&s.sc, Policy::Msr, &SimOptions::default()).unwrap().outcome;
        let session = &s.session.outcome;
        worst_t = worst_t.max((session.latency - msr.latency).abs() / msr.latency);
        ratios.push(session.total_energy() / msr.total_energy());
    }
    let med = median(&mut ratios);
    let pass = worst_t <= 0.05 && med <= 0.8;
    rep.line(
        6,
        "energy against MSR",
        pass,
        format!("largest completion-time gap {:.2}% (tol 5%), median energy ratio {med:.3} (tol 0.8)", worst_t * 100.0),
        t0,
    );
}

fn ordering_rank(rep: &mut Report) {
    let t0 = Instant::now();
    let mut ranks = Vec::new();
    for seed in 1..=5 {
        let sc = scenario(seed, &[("S", 5.0)]);
        let rigid = solve_rigid(&sc, &RigidOptions::default()).unwrap();
        let o = ordering_from_rigid(&rigid.solution, &sc);
        let ranked = enumerate_orderings(&sc, 7, &Algorithm1Options::default()).unwrap();
        let rank = ranked.iter().position(|(r, _)| *r == o).map_or(usize::MAX, |p| p + 1);
        ranks.push(rank);
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = ranks.iter().all(|&r| r <= 36) && secs < 1800.0;
    rep.line(
        7,
        "rigid-based ordering",
        pass,
        format!("ranks of 120 for seeds 1-5: {ranks:?} (top 30% is rank <= 36, limit 1800 s)"),
        t0,
    );
}

fn replay(rep: &mut Report, solved: &[Solved]) {
    let t0 = Instant::now();
    let mut worst = f64::INFINITY;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    let mut schedules = 0;
    for s in solved {
        let dt = s.sc.radio.tti_len;
        let rigid = rigid_to_session(&s.rigid.solution, &s.sc).unwrap();
        for sch in [&s.session.schedule, &rigid] {
            let a = replay_schedule(sch, &s.sc, Some(dt)).unwrap();
            let b = replay_schedule(sch, &s.sc, Some(dt / 2.0)).unwrap();
            worst = worst.min(a.worst_slack);
            let ratio = a.worst_slack.min(0.0).abs() / b.worst_slack.min(0.0).abs();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            schedules += 1;
        }
    }
    // halving the slot should halve the error: a ratio of 2, within a factor of 3
    let pass = worst >= -0.01 && lo >= 2.0 / 3.0 && hi <= 6.0;
    rep.line(
        8,
        "slot replay",
        pass,
        format!(
            "{schedules} schedules, worst slack {:.4}% at 1 ms (tol -1%), error ratio on halving in [{lo:.2}, {hi:.2}] (allowed [0.67, 6])",
            worst * 100.0
        ),
        t0,
    );
}

fn homogeneity(rep: &mut Report) {
    let t0 = Instant::now();
    let gaps = |pairs: &[(&str, f64)]| -> Vec<f64> {
        (1..=3)
            .map(|seed| {
                let sc = homogeneous(scenario(seed, pairs));
                let rigid = solve_rigid(&sc, &RigidOptions::default()).unwrap();
                let o = ordering_from_rigid(&rigid.solution, &sc);
                let session = run_algorithm1(&sc, &o, &Algorithm1Options::default()).unwrap();
                (rigid.outcome.objective - session.outcome.objective).abs() / rigid.outcome.objective
            })
            .collect()
    };
    let with_hb = gaps(&[]);
    let worst = with_hb.iter().copied().fold(0.0, f64::max);
    rep.line(
        9,
        "homogeneity control",
        worst <= 0.02,
        format!(
            "identical FL UEs, default HB load, seeds 1-3: largest session/rigid gap {:.2}% (tol 2%)",
            worst * 100.0
        ),
        t0,
    );
    let without = gaps(&[("E", 0.0)]);
    let worst = without.iter().copied().fold(0.0, f64::max);
    println!("             note: the same control without HB UEs gives a largest gap of {:.2e}%", worst * 100.0);
}

fn lattice(rep: &mut Report) {
    let t0 = Instant::now();
    let sc = scenario(1, &[("S", 2.0), ("E", 1.0), ("K", 2.0), ("D", 1e5)]);
    let (oracle, _) = lattice_search(&sc);
    let best = Ordering::all(2)
        .iter()
        .map(|o| run_algorithm1(&sc, o, &Algorithm1Options::default()).unwrap().outcome.objective)
        .fold(f64::INFINITY, f64::min);
    let gap = (best - oracle).abs() / oracle;
    rep.line(
        10,
        "lattice oracle",
        gap <= 0.02,
        format!("algorithm {best:.6}, lattice {oracle:.6}, gap {:.4}% (tol 2%)", gap * 100.0),
        t0,
    );
}

fn main() {
    let mut rep = Report { failed: Vec::new() };
    transforms(&mut rep);
    chords(&mut rep);
    let started = Instant::now();
    let solved: Vec<Solved> = SEEDS.map(solve_seed).collect();
    convergence(&mut rep, &solved, started);
    derivatives(&mut rep);
    dominance(&mut rep, &solved);
    against_msr(&mut rep, &solved);
    ordering_rank(&mut rep);
    replay(&mut rep, &solved);
    homogeneity(&mut rep);
    lattice(&mut rep);
    if rep.failed.is_empty() {
        println!("all 10 criteria pass");
    } else {
        println!("{} of 10 criteria pass; failing: {:?}", 10 - rep.failed.len(), rep.failed);
        std::process::exit(1);
    }
}
