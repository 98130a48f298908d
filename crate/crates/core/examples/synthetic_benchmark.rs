use netprog_core::inference::*;
use netprog_core::model::*;
use netprog_core::network::*;
use netprog_core::simulate::*;
use std::time::Instant;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0; let mut da = 0.0; let mut db = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma).powi(2);
        db += (y - mb).powi(2);
    }
    num / (da.sqrt() * db.sqrt())
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_nodes: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(40);
    let n_controls: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(8);
    let n_subjects: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(30);
    let n_iter: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1500);
    let threads: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(2);

    let net = random_connected_network::<f64>(n_nodes, n_nodes / 2, 7).unwrap();
    let full = net.full_distances().unwrap();
    let cset = select_control_nodes(&net, &full, n_controls, 99).unwrap();
    println!("bandwidth {:.3}", cset.bandwidth());
    let rect = full.select_rows(cset.indices()).unwrap();
    let interp = build_interpolator(&rect, &cset).unwrap();

    // smooth targets in range, ridge-projected onto the kernel basis
    let mut basis = Vec::new();
    for k in 0..n_nodes { basis.extend_from_slice(interp.node_row(k)); }
    use netprog_core::rng;
    use rand::Rng;
    let mut r = rng::master(12345);
    let raw: Vec<f64> = (0..n_controls).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    let raw_field = interp.interpolate(&raw).unwrap();
    let (lo, hi) = raw_field.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let target_p: Vec<f64> = raw_field.iter().map(|&v| 1.7 + (v - lo) / (hi - lo).max(1e-9) * 1.7).collect();
    let beta_p = netprog_core::linalg::ridge_fit(&basis, &target_p, n_nodes, n_controls, 1e-6).unwrap();
    let raw2: Vec<f64> = (0..n_controls).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    let raw2_field = interp.interpolate(&raw2).unwrap();
    let (lo2, hi2) = raw2_field.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let target_v: Vec<f64> = raw2_field.iter().map(|&v| -0.12 + (v - lo2) / (hi2 - lo2).max(1e-9) * 0.08).collect();
    let beta_v = netprog_core::linalg::ridge_fit(&basis, &target_v, n_nodes, n_controls, 1e-6).unwrap();

    let population = PopulationParameters {
        t0: 72.0, beta_p, beta_v,
        noise_std: 0.10, hyper_xi_std: 0.3, hyper_tau_std: 3.0, hyper_w_std: 0.05,
    };
    let (p_true, v_true) = realize_fields(&population, &interp).unwrap();
    println!("p-field range [{:.3},{:.3}], v range [{:.4},{:.4}]",
        p_true.iter().cloned().fold(f64::INFINITY, f64::min), p_true.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        v_true.iter().cloned().fold(f64::INFINITY, f64::min), v_true.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    assert!(p_true.iter().all(|&p| p > 0.0));

    let spec = CohortSpec {
        n_subjects, visits: VisitCount::Fixed(5), baseline_age: (66.0, 74.0),
        visit_interval: 1.0, population: population.clone(), seed: 2024,
    };
    let cohort = simulate_cohort(&spec, &interp).unwrap();
    println!("cohort: {} subjects, {} visits, {} redrawn", cohort.dataset.num_subjects(), cohort.dataset.total_visits(), cohort.redrawn_visits);

    let config = SamplerConfig {
        n_iterations: n_iter, burn_in: (n_iter * 3) / 10, trace_interval: 50,
        seed: 7, threads, ..SamplerConfig::default()
    };
    let t = Instant::now();
    let fit_res = fit(&cohort.dataset, &interp, &config).unwrap();
    let dt = t.elapsed().as_secs_f64();
    println!("fit took {:.1}s  ({:.2} ms/iter)", dt, dt * 1000.0 / n_iter as f64);

    let pop_hat = &fit_res.population;
    let (p_hat, v_hat) = realize_fields(pop_hat, &interp).unwrap();
    let tau_true: Vec<f64> = cohort.individuals.iter().map(|i| i.tau).collect();
    let xi_true: Vec<f64> = cohort.individuals.iter().map(|i| i.xi).collect();
    let tau_hat: Vec<f64> = fit_res.individuals_mean.iter().map(|i| i.tau).collect();
    let xi_hat: Vec<f64> = fit_res.individuals_mean.iter().map(|i| i.xi).collect();
    println!("sigma_hat {:.4} (true 0.10)  t0_hat {:.2} (true 72)", pop_hat.noise_std, pop_hat.t0);
    println!("hyper: xi {:.3} (0.3) tau {:.3} (3.0) w {:.4} (0.05)", pop_hat.hyper_xi_std, pop_hat.hyper_tau_std, pop_hat.hyper_w_std);
    println!("corr p {:.4}  v {:.4}  tau {:.4}  xi {:.4}",
        pearson(&p_hat, &p_true), pearson(&v_hat, &v_true),
        pearson(&tau_hat, &tau_true), pearson(&xi_hat, &xi_true));
    let m = &fit_res.mean_acceptance;
    println!("post-burn-in mean acc: t0 {:.3} bp {:.3} bv {:.3} xt {:.3} w {:.3}", m.t0, m.beta_p, m.beta_v, m.xi_tau, m.w);
    let sc = &fit_res.final_proposal_scales;
    println!("frozen scales: t0 {:.4} bp {:.4} bv {:.5} xi {:.4} tau {:.4} w {:.5}", sc.t0, sc.beta_p, sc.beta_v, sc.xi, sc.tau, sc.w);
    for rec in fit_res.trace.iter().rev().take(3) {
        println!("it {:5}  sigma {:.4}  t0 {:.2}  acc t0 {:.2} bp {:.2} bv {:.2} xt {:.2} w {:.2}  ll {:.1}",
            rec.iteration, rec.sigma, rec.t0, rec.acceptance.t0, rec.acceptance.beta_p,
            rec.acceptance.beta_v, rec.acceptance.xi_tau, rec.acceptance.w, rec.log_likelihood);
    }
}
