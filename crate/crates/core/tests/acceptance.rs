//! Acceptance suite. Runs every criterion in sequence, prints one line per
//! criterion and fails if any of them fails.

use std::io::Write;
use std::time::{Duration, Instant};

use fracflow::diagnostics::{
    dissipation_check, energy_identity_residual, mass, max_principle_check, DiagnosticsReport,
};
use fracflow::flow::{evolve_direct, picard_solve};
use fracflow::random::{random_connected_graph, rng, uniform_function, RandomGraphSpec};
use fracflow::{FlowConfig, FractionalKernel, Graph, QuadratureConfig, SpectralDecomposition, VertexFunction};
use nalgebra::DMatrix;
use rand::RngCore;

const S_GRID: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];
const P_GRID: [f64; 3] = [1.5, 2.0, 3.0];
const Q_GRID: [f64; 3] = [0.5, 1.0, 2.0];

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

fn kernel_graphs() -> Vec<Graph> {
    let mut r = rng(20_240_601);
    (0..50)
        .map(|_| {
            let n = 2 + (r.next_u64() % 11) as usize;
            random_connected_graph(&mut r, &RandomGraphSpec::new(n))
        })
        .collect()
}

struct FlowInstance {
    s: f64,
    p: f64,
    q: f64,
    graph: Graph,
    u0: VertexFunction,
}

fn flow_instances() -> Vec<FlowInstance> {
    let mut r = rng(7);
    (0..20)
        .map(|i| {
            let n = 2 + (r.next_u64() % 7) as usize;
            let graph = random_connected_graph(&mut r, &RandomGraphSpec::new(n));
            let u0 = uniform_function(&mut r, n, 0.5, 2.0);
            FlowInstance {
                s: S_GRID[i % 5],
                p: P_GRID[i % 3],
                q: Q_GRID[(i / 3) % 3],
                graph,
                u0,
            }
        })
        .collect()
}

fn off_diagonal(w: &DMatrix<f64>) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    let n = w.nrows();
    (0..n).flat_map(move |x| (0..n).filter(move |&y| y != x).map(move |y| (x, y, w[(x, y)])))
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    out.detail = format!("{} [{:.2?}]", out.detail, elapsed);
    if let Some(limit) = limit {
        if elapsed > limit {
            out.passed = false;
            out.detail = format!("{} exceeds {:?}", out.detail, limit);
        }
    }
    out
}

fn kernel_positivity(graphs: &[Graph]) -> Outcome {
    let mut min_ratio = f64::INFINITY;
    let mut worst_asym: f64 = 0.0;
    let mut ok = true;
    for g in graphs {
        let dec = SpectralDecomposition::new(g).expect("decomposition");
        for s in S_GRID {
            let w = match dec.kernel_weights(s) {
                Ok(w) => w,
                Err(e) => return Outcome::new(false, format!("s={s}: {e}")),
            };
            let max = w.amax();
            for (x, y, v) in off_diagonal(&w) {
                min_ratio = min_ratio.min(v / max);
                let asym = (v - w[(y, x)]).abs() / max;
                worst_asym = worst_asym.max(asym);
                ok &= v > 0.0 && asym <= 1e-12;
            }
        }
    }
    Outcome::new(ok, format!("min W/max W = {min_ratio:.3e}, max asymmetry = {worst_asym:.1e}"))
}

fn kernel_oracle(graphs: &[Graph]) -> Outcome {
    let cfg = QuadratureConfig::default();
    let mut worst: f64 = 0.0;
    for g in graphs {
        let dec = SpectralDecomposition::new(g).expect("decomposition");
        for s in S_GRID {
            let spectral = dec.kernel_weights(s).expect("spectral kernel");
            let oracle = match dec.kernel_weights_oracle(s, &cfg) {
                Ok(w) => w,
                Err(e) => return Outcome::new(false, format!("s={s}: {e}")),
            };
            for (x, y, v) in off_diagonal(&spectral) {
                worst = worst.max((v - oracle[(x, y)]).abs() / v.abs());
            }
        }
    }
    Outcome::new(worst <= 1e-6, format!("max relative deviation = {worst:.3e}"))
}

fn s_one_collapse(graphs: &[Graph]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for g in graphs {
        let dec = SpectralDecomposition::new(g).expect("decomposition");
        let w = g.weights();
        let dev = |k: &DMatrix<f64>| off_diagonal(k).map(|(x, y, v)| (v - w[(x, y)]).abs()).fold(0.0, f64::max);
        worst = worst.max(dev(&dec.power_kernel(1.0)) / w.amax());
        let near = dev(&dec.kernel_weights(0.999).expect("kernel"));
        let far = dev(&dec.kernel_weights(0.99).expect("kernel"));
        monotone &= near <= far;
    }
    Outcome::new(
        worst <= 1e-10 && monotone,
        format!("max |W_1 − w|/max w = {worst:.3e}, monotone approach = {monotone}"),
    )
}

fn integration_by_parts() -> Outcome {
    let mut r = rng(99);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = 2 + (r.next_u64() % 11) as usize;
        let g = random_connected_graph(&mut r, &RandomGraphSpec::new(n));
        let s = S_GRID[i % 5];
        let p = P_GRID[i % 3];
        let k = FractionalKernel::from_graph(&g, s).expect("kernel");
        let u = uniform_function(&mut r, n, -2.0, 2.0);
        let v = uniform_function(&mut r, n, -2.0, 2.0);
        let (res, lhs, rhs) = k.ibp_terms(&u, &v, p, 1e-12).expect("ibp");
        worst = worst.max(res / (lhs.abs() + rhs.abs() + 1.0));
    }
    Outcome::new(worst <= 1e-10, format!("max scaled residual = {worst:.3e}"))
}

fn p2_reduction() -> Outcome {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let n = 2 + (r.next_u64() % 11) as usize;
        let g = random_connected_graph(&mut r, &RandomGraphSpec::new(n));
        let k = FractionalKernel::from_graph(&g, S_GRID[i % 5]).expect("kernel");
        let u = uniform_function(&mut r, n, -3.0, 3.0);
        let a = k.frac_p_laplacian(&u, 2.0, 1e-12).expect("p-laplacian");
        let b = k.frac_laplacian(&u).expect("laplacian");
        worst = worst.max(a.sup_distance(&b));
    }
    Outcome::new(worst <= 1e-14, format!("max deviation = {worst:.1e}"))
}

fn maximum_principle_and_mass(instances: &[FlowInstance]) -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut worst_bound: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    for (i, inst) in instances.iter().enumerate() {
        let k = FractionalKernel::from_graph(&inst.graph, inst.s).expect("kernel");
        let cfg = FlowConfig::new(inst.s, inst.p, inst.q, 5.0);
        let traj = match evolve_direct(&k, &inst.u0, &cfg) {
            Ok(t) => t,
            Err(e) => {
                let o = Outcome::new(false, format!("instance {i}: {e}"));
                return (o, Outcome::new(false, format!("instance {i}: {e}")));
            }
        };
        worst_bound = worst_bound.max(max_principle_check(&traj, &inst.u0));
        let m0 = mass(&inst.graph, &inst.u0, inst.q).expect("mass");
        for st in &traj.states {
            let m = mass(&inst.graph, &st.u, inst.q).expect("mass");
            worst_mass = worst_mass.max((m - m0).abs() / m0);
        }
    }
    let elapsed = start.elapsed();
    let bound = Outcome::new(
        worst_bound <= 1e-9 && elapsed < Duration::from_secs(120),
        format!("max violation = {worst_bound:.1e} [{elapsed:.2?}]"),
    );
    let mass = Outcome::new(worst_mass <= 1e-8, format!("max relative mass drift = {worst_mass:.3e}"));
    (bound, mass)
}

fn k5_u0(seed: u64) -> VertexFunction {
    uniform_function(&mut rng(seed), 5, 0.5, 2.0)
}

fn energy_identity() -> Outcome {
    let g = Graph::complete(5);
    let k = FractionalKernel::from_graph(&g, 0.5).expect("kernel");
    let u0 = k5_u0(41);
    let residual = |dt: f64| {
        let cfg = FlowConfig::new(0.5, 2.0, 2.0, 1.0).with_dt_out(dt);
        let traj = evolve_direct(&k, &u0, &cfg).expect("solve");
        energy_identity_residual(&traj, &k, 2.0, 2.0).expect("residual")
    };
    let coarse = residual(1e-3);
    let fine = residual(5e-4);
    let ratio = coarse / fine;
    Outcome::new(
        coarse <= 1e-4 && ratio >= 3.5,
        format!("residual(1e-3) = {coarse:.3e}, halving ratio = {ratio:.2}"),
    )
}

// Resolving the dissipation integral after the fast initial transient needs a
// fine output grid; the p < 2 instances additionally need tight tolerances
// because explicit steps chatter around the steady state.
const DISSIPATION_DT_OUT: f64 = 5e-5;
const DISSIPATION_TOL: f64 = 1e-10;

fn dissipation_bound(instances: &[FlowInstance]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for (i, inst) in instances.iter().enumerate() {
        let k = FractionalKernel::from_graph(&inst.graph, inst.s).expect("kernel");
        let cfg = FlowConfig::new(inst.s, inst.p, inst.q, 20.0)
            .with_dt_out(DISSIPATION_DT_OUT)
            .with_tolerances(DISSIPATION_TOL, DISSIPATION_TOL);
        let traj = match evolve_direct(&k, &inst.u0, &cfg) {
            Ok(t) => t,
            Err(e) => return Outcome::new(false, format!("instance {i}: {e}")),
        };
        let d = dissipation_check(&traj, &k, inst.p, inst.q).expect("dissipation");
        let slack = 1e-6 * (d.rhs + 1.0);
        worst = worst.max((d.lhs - d.rhs) / slack);
        ok &= d.lhs <= d.rhs + slack;
    }
    Outcome::new(ok, format!("max (lhs − rhs)/slack = {worst:.3}"))
}

fn steady_state() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, g, seed) in [
        ("K2", Graph::complete(2), 3),
        ("P3", Graph::path(3), 4),
        ("K5", Graph::complete(5), 5),
    ] {
        let u0 = uniform_function(&mut rng(seed), g.n(), 0.5, 2.0);
        let k = FractionalKernel::from_graph(&g, 0.5).expect("kernel");
        let cfg = FlowConfig::new(0.5, 2.0, 2.0, 100.0);
        let traj = match evolve_direct(&k, &u0, &cfg) {
            Ok(t) => t,
            Err(e) => return Outcome::new(false, format!("{name}: {e}")),
        };
        let rep = DiagnosticsReport::compute(&traj, &k).expect("report");
        ok &= rep.steady_state_error <= 1e-6 && rep.final_gradient_energy <= 1e-8 && rep.final_time_derivative <= 1e-6;
        parts.push(format!(
            "{name}: err {:.1e} energy {:.1e} |u_t| {:.1e}",
            rep.steady_state_error, rep.final_gradient_energy, rep.final_time_derivative
        ));
    }
    Outcome::new(ok, parts.join("; "))
}

fn picard_equivalence() -> Outcome {
    let g = Graph::complete(5);
    let k = FractionalKernel::from_graph(&g, 0.5).expect("kernel");
    let u0 = k5_u0(10);
    let cfg = FlowConfig::new(0.5, 2.5, 1.5, 1.0);
    let direct = match evolve_direct(&k, &u0, &cfg) {
        Ok(t) => t,
        Err(e) => return Outcome::new(false, format!("direct: {e}")),
    };
    let picard = match picard_solve(&k, &u0, &cfg) {
        Ok(p) => p,
        Err(e) => return Outcome::new(false, format!("picard: {e}")),
    };
    let dist = picard.trajectory.sup_distance(&direct);
    let decreasing = picard.history.iter().skip(2).zip(picard.history.iter().skip(3)).all(|(a, b)| b < a);
    Outcome::new(
        dist <= 1e-5 && picard.iterations <= 100 && decreasing,
        format!(
            "sup distance = {dist:.3e}, iterations = {}, decreasing after 3 = {decreasing}",
            picard.iterations
        ),
    )
}

fn eigensolver(kernel_graphs: &[Graph], instances: &[FlowInstance]) -> Outcome {
    let mut worst_orth: f64 = 0.0;
    let mut worst_rec: f64 = 0.0;
    let mut r = rng(12);
    let graphs = kernel_graphs.iter().chain(instances.iter().map(|i| &i.graph));
    for g in graphs {
        let n = g.n();
        let dec = SpectralDecomposition::new(g).expect("decomposition");
        let mu = g.mu();
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|x| dec.phi(i, x) * dec.phi(j, x) * mu[x]).sum();
                let delta = if i == j { 1.0 } else { 0.0 };
                worst_orth = worst_orth.max((dot - delta).abs());
            }
        }
        let mut probes: Vec<Vec<f64>> = (0..n).map(|x| (0..n).map(|y| f64::from(x == y)).collect()).collect();
        probes.push(uniform_function(&mut r, n, -1.0, 1.0).into_vec());
        for u in &probes {
            let direct = g.laplacian_apply(u).expect("laplacian");
            let spectral = dec.apply_function(u, |l| l).expect("spectral");
            worst_rec = worst_rec.max(direct.sup_distance(&spectral) / direct.sup_norm());
        }
    }
    let closed = |g: Graph, expected: &[f64]| {
        let dec = SpectralDecomposition::new(&g).expect("decomposition");
        dec.eigenvalues().iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let closed_err = closed(Graph::complete(2), &[0.0, 2.0]).max(closed(Graph::path(3), &[0.0, 1.0, 3.0]));
    Outcome::new(
        worst_orth <= 1e-10 && worst_rec <= 1e-10 && closed_err <= 1e-12,
        format!("orthonormality {worst_orth:.1e}, reconstruction {worst_rec:.1e}, closed forms {closed_err:.1e}"),
    )
}

#[test]
fn acceptance() {
    let graphs = kernel_graphs();
    let instances = flow_instances();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();

    results.push((1, "kernel positivity and symmetry", timed(Some(Duration::from_secs(10)), || kernel_positivity(&graphs))));
    results.push((2, "kernel quadrature oracle", timed(Some(Duration::from_secs(60)), || kernel_oracle(&graphs))));
    results.push((3, "s = 1 collapse", timed(None, || s_one_collapse(&graphs))));
    results.push((4, "integration by parts", timed(None, integration_by_parts)));
    results.push((5, "p = 2 reduction", timed(None, p2_reduction)));
    let (bound, mass_outcome) = maximum_principle_and_mass(&instances);
    results.push((6, "maximum principle", bound));
    results.push((7, "energy identity", timed(None, energy_identity)));
    results.push((8, "dissipation bound", timed(None, || dissipation_bound(&instances))));
    results.push((9, "steady state and decay", timed(None, steady_state)));
    results.push((10, "picard vs direct", timed(None, picard_equivalence)));
    results.push((11, "mass conservation", mass_outcome));
    results.push((12, "eigensolver", timed(None, || eigensolver(&graphs, &instances))));

    results.sort_by_key(|r| r.0);
    // written to the raw stream so the verdicts appear even when output is captured
    let mut err = std::io::stderr().lock();
    for (id, name, out) in &results {
        let verdict = if out.passed { "PASS" } else { "FAIL" };
        writeln!(err, "[{verdict}] {id:>2} {name}: {}", out.detail).expect("stderr");
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
