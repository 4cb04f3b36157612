//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line.

use std::f64::consts::{E, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};

use edgeprune::dnn_verify::{
    bound_report, fcdnn16_sizes, fcdnn8_sizes, prune, unit_ball_input, verify_layer_bounds, Activation,
    DnnNetwork, PruneStrategy,
};
use edgeprune::harness::{run_sweep, Config, RunOptions};
use edgeprune::rd_bounds::{
    distortion_lower_bound, laplacian_scalar_rd, ln_gamma, parallel_laplacian_rate_bound, phi_of_one,
    waterfill_distortion,
};
use edgeprune::sca_solver::{
    grid_oracle, solve_benchmark, sca_optimize_with, upload_energy_slope, zeta_linearization, BenchmarkScheme,
    LocalPoint, Pins, ScaOptions, SolveStatus,
};
use edgeprune::system_model::{is_feasible, upload_delay, upload_energy, ModelProfile};
use edgeprune::weight_stats::{compare_fits, WeightSample};
use edgeprune::Scenario;

type Outcome = Result<String, String>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn default_config() -> Config {
    Config::load(&configs_dir().join("default.json")).expect("shipped config loads")
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn bound_trials() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut output_fail = Vec::new();
    let mut layer_fail = Vec::new();
    let mut trials = 0usize;
    let mut worst_gap = f64::INFINITY;
    for (name, sizes) in [("fcdnn8", fcdnn8_sizes()), ("fcdnn16", fcdnn16_sizes())] {
        let split = (sizes.len() - 1) / 2;
        for i in 0..1000u64 {
            let seed = 0x5eed_0000 + i;
            let net = DnnNetwork::random(&sizes, Activation::Relu, split, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11ce);
            let x = unit_ball_input(net.input_dim(), &mut rng);
            let rho = 0.1 * (1 + i % 9) as f64;
            let rho_server = 0.1 * (1 + (i / 9) % 9) as f64;
            let strat = if i % 2 == 0 {
                PruneStrategy::magnitude()
            } else {
                PruneStrategy::random(seed)
            };
            let pruned = prune(&net, rho, rho_server, &strat);
            let inputs = [x];
            let rep = bound_report(&net, &pruned, &inputs, rho, rho_server, strat).unwrap();
            worst_gap = worst_gap.min(rep.gap_factor);
            if !rep.holds {
                output_fail.push(format!("{name}#{i}"));
            }
            let layers = verify_layer_bounds(&net, &pruned, &inputs).unwrap();
            if layers.iter().any(|c| !c.pass) {
                layer_fail.push(format!("{name}#{i}"));
            }
            trials += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let output = if !output_fail.is_empty() {
        Err(format!("{} of {trials} trials violate the bound: {:?}", output_fail.len(), &output_fail[..output_fail.len().min(5)]))
    } else if secs > 120.0 {
        Err(format!("{trials} trials took {secs:.1} s (> 120 s)"))
    } else {
        Ok(format!("{trials} trials hold, smallest bound/actual {worst_gap:.3}, {secs:.1} s"))
    };
    let layers = if layer_fail.is_empty() {
        Ok(format!("{trials} trials, every layer inequality holds"))
    } else {
        Err(format!("{} of {trials} trials fail: {:?}", layer_fail.len(), &layer_fail[..layer_fail.len().min(5)]))
    };
    (output, layers)
}

fn stirling(x: f64) -> f64 {
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
}

fn phi_and_gamma() -> Outcome {
    let phi = phi_of_one(1.0);
    let want = (2.0 * E).log2();
    check((phi - want).abs() <= 1e-10, format!("phi_of_one(1) = {phi}, want {want}"))?;
    let mut worst: f64 = 0.0;
    for k in 0..=40 {
        let x = 1e4 * 10f64.powf(k as f64 / 10.0);
        let rel = ((ln_gamma(x) - stirling(x)) / stirling(x)).abs();
        worst = worst.max(rel);
    }
    check(worst <= 1e-6, format!("lgamma vs Stirling worst rel {worst:e}"))?;
    Ok(format!("|phi(1) - log2(2e)| = {:e}, lgamma worst rel {worst:e}", (phi - want).abs()))
}

fn profile(q: f64, s: f64, b: f64, h: f64) -> ModelProfile {
    ModelProfile {
        q_device_params: q,
        s_server_params: s,
        bits_per_param: b,
        n_flop_device: 1.0,
        n_flop_server: 1.0,
        theta_embedding_bits: 1.0,
        entropy_bits: h,
    }
}

fn dhat_values() -> Outcome {
    let d = distortion_lower_bound(1.0, 1.0, &profile(1.0, 1.0, 8.0, 0.0)).map_err(|e| e.to_string())?;
    // n = 2: n/(sqrt(pi) e) * 2^(-R/n) * (Gamma(1) / (2 Gamma(2)))^(1/n) with R = 16
    let oracle = 2.0 / (PI.sqrt() * E) * 2f64.powf(-8.0) * 0.5f64.sqrt();
    check(((d - oracle) / oracle).abs() <= 1e-6, format!("D_hat = {d:e}, oracle {oracle:e}"))?;
    check(
        ((d - 1.147e-3) / 1.147e-3).abs() <= 1e-3,
        format!("D_hat = {d:e} far from 1.147e-3"),
    )?;
    let big = distortion_lower_bound(0.5, 0.5, &profile(4e7, 6e7, 16.0, -3e9)).map_err(|e| e.to_string())?;
    check(big.is_finite() && big > 0.0, format!("D_hat at q+s = 1e8 is {big}"))?;
    Ok(format!("D_hat = {d:.6e} (oracle {oracle:.6e}); q+s = 1e8 gives {big:.4e}"))
}

/// Smallest total rate over distortion allocations on a grid of `steps`
/// cells of the budget, with every coordinate a multiple of the cell.
fn brute_force_rate(scales: &[f64], budget: f64, steps: usize) -> f64 {
    let h = budget / steps as f64;
    let table: Vec<Vec<f64>> = scales
        .iter()
        .map(|&l| (0..=steps).map(|k| laplacian_scalar_rd(l, k as f64 * h)).collect())
        .collect();
    fn rec(table: &[Vec<f64>], left: usize, acc: f64, best: &mut f64) {
        if acc >= *best {
            return;
        }
        if table.len() == 1 {
            *best = best.min(acc + table[0][left]);
            return;
        }
        for k in 0..=left {
            rec(&table[1..], left - k, acc + table[0][k], best);
        }
    }
    let mut best = f64::INFINITY;
    rec(&table, steps, 0.0, &mut best);
    best
}

fn parallel_laplacian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases = 0;
    let mut worst_excess: f64 = 0.0;
    for q in 1..=4usize {
        for _ in 0..3 {
            let scales: Vec<f64> = (0..q).map(|_| rng.random_range(0.5..20.0)).collect();
            let inv_sum: f64 = scales.iter().map(|l| 1.0 / l).sum();
            let sq = (q as f64).sqrt();
            // per-coordinate budgets sum to D sqrt(q); keep below saturation
            let frac = rng.random_range(0.1..0.8);
            let distortion = frac * inv_sum / sq;
            let res = parallel_laplacian_rate_bound(&scales, distortion).map_err(|e| e.to_string())?;
            let mu = res.mu_waterlevel.ok_or("no water level")?;
            let residual = ((waterfill_distortion(&scales, mu) - distortion) * sq).abs();
            check(
                residual <= 1e-12 * inv_sum,
                format!("q={q}: water-level residual {residual:e} > {:e}", 1e-12 * inv_sum),
            )?;
            let budget = distortion * sq;
            let steps = 1000;
            let h = budget / steps as f64;
            let brute = brute_force_rate(&scales, budget, steps);
            // rounding each optimal share down to the grid is a feasible grid point
            let tol: f64 = scales
                .iter()
                .map(|&l| {
                    let d = mu.min(1.0 / l);
                    laplacian_scalar_rd(l, (d - h).max(0.0)) - laplacian_scalar_rd(l, d)
                })
                .sum();
            check(
                brute >= res.value - 1e-9,
                format!("q={q}: brute force {brute} beats the bound {}", res.value),
            )?;
            check(
                brute - res.value <= tol + 1e-12,
                format!("q={q}: brute force {brute} vs bound {} exceeds one grid step ({tol:e})", res.value),
            )?;
            worst_excess = worst_excess.max((brute - res.value) / tol.max(f64::MIN_POSITIVE));
            cases += 1;
        }
    }
    Ok(format!("{cases} cases agree, worst gap {worst_excess:.3} grid steps"))
}

fn perturbed(base: &Scenario, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sc = base.clone();
    let mut f = || rng.random_range(0.8..=1.2);
    sc.qos.t_max *= f();
    sc.qos.e_max *= f();
    sc.model.n_flop_device *= f();
    sc.model.n_flop_server *= f();
    sc
}

fn sca_correctness() -> Outcome {
    let cfg = default_config();
    let base = cfg.scenario().map_err(|e| e.to_string())?;
    let opts = cfg.solver.clone();
    let mut scenarios = vec![base.clone()];
    scenarios.extend((0..10).map(|k| perturbed(&base, 100 + k)));
    let mut worst_ratio: f64 = 0.0;
    let (mut sca_max, mut oracle_max): (f64, f64) = (0.0, 0.0);
    for (k, sc) in scenarios.iter().enumerate() {
        let t = Instant::now();
        let tr = sca_optimize_with(sc, &opts).map_err(|e| format!("scenario {k}: {e}"))?;
        let sca_s = t.elapsed().as_secs_f64();
        check(tr.is_feasible(), format!("scenario {k}: SCA reports {:?}", tr.status))?;
        for w in tr.iterates.windows(2) {
            check(
                w[1].objective <= w[0].objective + 1e-9 * w[0].objective.abs().max(1.0),
                format!("scenario {k}: objective rises {} -> {}", w[0].objective, w[1].objective),
            )?;
        }
        for (j, it) in tr.iterates.iter().enumerate() {
            let rep = is_feasible(&it.decision, sc);
            check(
                rep.feasible_within(&sc.qos, 1e-9),
                format!("scenario {k}: iterate {j} infeasible {rep:?}"),
            )?;
        }
        let t = Instant::now();
        let oracle = grid_oracle(sc, 15, &Pins::default()).map_err(|e| e.to_string())?;
        let oracle_s = t.elapsed().as_secs_f64();
        let o = oracle.objective.ok_or(format!("scenario {k}: oracle found nothing feasible"))?;
        let obj = tr.objective().unwrap();
        check(obj <= 1.02 * o, format!("scenario {k}: SCA {obj:e} > 1.02 x oracle {o:e}"))?;
        check(sca_s <= 5.0, format!("scenario {k}: SCA took {sca_s:.2} s"))?;
        check(oracle_s <= 60.0, format!("scenario {k}: oracle took {oracle_s:.2} s"))?;
        worst_ratio = worst_ratio.max(obj / o);
        sca_max = sca_max.max(sca_s);
        oracle_max = oracle_max.max(oracle_s);
    }
    Ok(format!(
        "11 scenarios, worst SCA/oracle {worst_ratio:.4}, slowest SCA {sca_max:.3} s, slowest oracle {oracle_max:.2} s"
    ))
}

fn dominance() -> Outcome {
    let mut cells = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for file in ["default.json", "energy_sweep.json", "split_sweep.json"] {
        let cfg = Config::load(&configs_dir().join(file)).map_err(|e| e.to_string())?;
        let rows = run_sweep(&cfg, &RunOptions::default()).map_err(|e| e.to_string())?;
        let mut values: Vec<f64> = rows.iter().map(|r| r.axis_value).collect();
        values.dedup();
        for v in values {
            let cell: Vec<_> = rows.iter().filter(|r| r.axis_value == v).collect();
            let joint = cell
                .iter()
                .find(|r| r.scheme == BenchmarkScheme::Joint)
                .ok_or(format!("{file}: no joint row at {v}"))?;
            for r in cell.iter().filter(|r| r.scheme.is_restriction()) {
                let Some(ro) = r.objective else { continue };
                let jo = joint
                    .objective
                    .ok_or(format!("{file} {v}: {} feasible but joint is not", r.scheme))?;
                let excess = (jo - ro) / ro;
                worst = worst.max(excess);
                check(
                    excess <= 1e-9,
                    format!("{file} {v}: joint {jo:e} above {} {ro:e}", r.scheme),
                )?;
            }
            cells += 1;
        }
    }
    Ok(format!("{cells} cells, largest relative joint excess {worst:e}"))
}

fn write_config(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let text = std::fs::read_to_string(configs_dir().join("default.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edgeprune"))
}

fn infeasibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = default_config().scenario().map_err(|e| e.to_string())?;
    let upload_min = upload_delay(base.channel.p_max, base.model.theta_embedding_bits, &base.channel);
    let path = write_config(dir.path(), "short.json", |v| {
        v["qos"]["t_max"] = serde_json::json!(0.5 * upload_min);
    });
    let out = bin().arg("optimize").arg(&path).output().map_err(|e| e.to_string())?;
    let code = out.status.code();
    check(code == Some(2), format!("T0 below upload time: exit code {code:?}, want 2"))?;
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    check(report["status"] == "infeasible", format!("status {}", report["status"]))?;

    let mut sc = base.clone();
    sc.qos.t_max = 0.9 * sc.device.delay(sc.model.n_flop_device, sc.device.f_max);
    sc.qos.e_max *= 10.0;
    let opts = ScaOptions::default();
    let joint = solve_benchmark(BenchmarkScheme::Joint, &sc, &opts, None).map_err(|e| e.to_string())?;
    let pso = solve_benchmark(BenchmarkScheme::PruneServerOnly, &sc, &opts, None).map_err(|e| e.to_string())?;
    check(joint.is_feasible(), format!("joint under tight delay: {:?}", joint.status))?;
    check(
        pso.status == SolveStatus::Infeasible,
        format!("prune_server_only under tight delay: {:?}", pso.status),
    )?;
    Ok(format!(
        "exit code 2 at T0 = 0.5 x upload time; tight delay: joint {:.4e}, prune_server_only infeasible",
        joint.objective().unwrap()
    ))
}

fn linearization() -> Outcome {
    let base = default_config().scenario().map_err(|e| e.to_string())?;
    let (chan, theta, pmax) = (&base.channel, base.model.theta_embedding_bits, base.channel.p_max);
    let mut worst_fd: f64 = 0.0;
    let mut worst_tangent: f64 = 0.0;
    for frac in [0.05, 0.4, 0.9] {
        let p_k = frac * pmax;
        let lp = LocalPoint {
            p_k,
            rho_aux_k: 1.0,
            rho_server_aux_k: 1.0,
        };
        let (val, _) = zeta_linearization(p_k, &lp, &base).map_err(|e| e.to_string())?;
        let e_k = upload_energy(p_k, theta, chan);
        let tangent = ((val - e_k) / e_k).abs();
        worst_tangent = worst_tangent.max(tangent);
        check(tangent <= 1e-12, format!("p_k={p_k}: zeta(p_k) = {val:e} vs {e_k:e}"))?;

        let u = upload_energy_slope(p_k, theta, chan);
        let h = 1e-5 * p_k;
        let fd = (upload_energy(p_k + h, theta, chan) - upload_energy(p_k - h, theta, chan)) / (2.0 * h);
        let rel = ((u - fd) / fd).abs();
        worst_fd = worst_fd.max(rel);
        check(rel <= 1e-6, format!("p_k={p_k}: slope {u:e} vs finite difference {fd:e}"))?;

        for i in 1..=1000 {
            let p = pmax * i as f64 / 1000.0;
            let (z, _) = zeta_linearization(p, &lp, &base).map_err(|e| e.to_string())?;
            let e = upload_energy(p, theta, chan);
            check(z >= e * (1.0 - 1e-12), format!("p_k={p_k}: zeta({p}) = {z:e} < {e:e}"))?;
        }
    }
    Ok(format!(
        "3 local points, tangency rel {worst_tangent:e}, slope vs FD rel {worst_fd:e}, 3000 samples dominated"
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = configs_dir().join("default.json");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}.csv"));
        let st = bin()
            .args(["sweep", "--seed", "7", "--out"])
            .arg(&out)
            .arg(&cfg)
            .output()
            .map_err(|e| e.to_string())?;
        check(st.status.success(), format!("run {k} failed: {}", String::from_utf8_lossy(&st.stderr)))?;
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    check(outputs[0] == outputs[1], "CSV differs between runs")?;
    check(!outputs[0].is_empty(), "empty CSV")?;
    Ok(format!("two runs, {} identical bytes", outputs[0].len()))
}

fn fit_selection() -> Outcome {
    let n = 10_000;
    let trials = 1000;
    let mut correct = [0usize; 2];
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + t as u64);
        let loc = rng.random_range(-0.1..0.1);
        let scale = rng.random_range(0.01..1.0);
        // Laplace as a random-signed exponential
        let values: Vec<f64> = (0..n)
            .map(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                if rng.random::<bool>() { loc + scale * e } else { loc - scale * e }
            })
            .collect();
        if compare_fits(&WeightSample::new(values)).map_err(|e| e.to_string())?.prefers_laplace() {
            correct[0] += 1;
        }
        let gauss = Normal::new(loc, scale).unwrap();
        let values: Vec<f64> = (0..n).map(|_| gauss.sample(&mut rng)).collect();
        if !compare_fits(&WeightSample::new(values)).map_err(|e| e.to_string())?.prefers_laplace() {
            correct[1] += 1;
        }
    }
    let need = (0.99 * trials as f64).ceil() as usize;
    check(
        correct[0] >= need && correct[1] >= need,
        format!("laplace {}/{trials}, gaussian {}/{trials}", correct[0], correct[1]),
    )?;
    Ok(format!("laplace {}/{trials}, gaussian {}/{trials}", correct[0], correct[1]))
}

fn main() {
    let (output, layers) = bound_trials();
    let results: Vec<(&str, Outcome)> = vec![
        ("output distortion bound", output),
        ("layer inequalities", layers),
        ("phi(1) and lgamma", phi_and_gamma()),
        ("D_hat evaluation", dhat_values()),
        ("parallel Laplacian vs brute force", parallel_laplacian()),
        ("SCA correctness", sca_correctness()),
        ("benchmark dominance", dominance()),
        ("constructed infeasibility", infeasibility()),
        ("linearization", linearization()),
        ("determinism", determinism()),
        ("distribution fitting", fit_selection()),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(msg) => println!("criterion {:2} PASS {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:2} FAIL {name}: {msg}", i + 1)
            }
        }
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
