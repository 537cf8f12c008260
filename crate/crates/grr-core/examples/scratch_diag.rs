use grr_core::bootstrap::{run_bootstrap, BootstrapConfig};
use grr_core::cqr::grr_asymptotic_variance;
use grr_core::loss::{convexity_probe, Dataset};
use grr_core::noise::Normal;
use grr_core::optim::{fit, stage_two, FitOptions, StageTwoConfig};
use grr_core::score::{optimal_generator, ScoreGenerator};
use grr_core::sim::{design_covariance, gen_design, NoiseModel};
use ndarray::{array, Array1, Array2};
use rayon::prelude::*;
use std::time::Instant;

fn main() {
    let which: String = std::env::args().nth(1).unwrap_or_default();

    if which.is_empty() || which == "variance" {
        // Theorem-1 check: WRR normal n=4000 p=2 rho=0.7 R=500
        let t = Instant::now();
        let n = 4000; let p = 2;
        let zs: Vec<f64> = (0..500).into_par_iter().map(|r| {
            let x = gen_design::<f64>(n, p, 0.7, 1000 + r as u64).unwrap();
            let beta_star = Array1::from_elem(p, 1.0);
            let y = x.dot(&beta_star) + NoiseModel::Normal.sample::<f64>(n, 5000 + r as u64);
            let data = Dataset::new(x, y).unwrap();
            let f = fit(&data, &ScoreGenerator::wilcoxon(), &FitOptions::default()).unwrap();
            (n as f64).sqrt() * (f.beta[0] - 1.0)
        }).collect();
        let mean = zs.iter().sum::<f64>() / 500.0;
        let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / 499.0;
        let sigma = design_covariance::<f64>(p, 0.7);
        let want = grr_asymptotic_variance(&ScoreGenerator::wilcoxon(), &Normal, &sigma, &array![1.0, 0.0]).unwrap();
        println!("variance check: empirical {:.4} theory {:.4} ratio {:.3} ({:.0?})", var, want, var / want, t.elapsed());
    }

    if which.is_empty() || which == "phase" {
        // stage-two phase transition on Cauchy n=2000 p=5
        let n = 2000; let p = 5;
        let x = gen_design::<f64>(n, p, 0.7, 42).unwrap();
        let beta_star = Array1::from_elem(p, 1.0);
        let y = x.dot(&beta_star) + NoiseModel::Cauchy.sample::<f64>(n, 43).map(|v| *v);
        let data = Dataset::new(x, y).unwrap();
        let orc = optimal_generator::<f64>(&grr_core::noise::Cauchy).unwrap();
        let table = orc.score_table(n).unwrap();
        // offset init at distance 1 in a fixed direction
        let dir = {
            let raw: Array1<f64> = array![1.0, -0.5, 0.25, -0.7, 0.4];
            let norm = raw.dot(&raw).sqrt();
            raw / norm
        };
        let init = &beta_star + &dir;
        let eta: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.2);
        let out = stage_two(&init, &data, &table, &StageTwoConfig::new(150, eta)).unwrap();
        let errs: Vec<f64> = out.trace.iterates.iter().map(|b| {
            let d = &Array1::from_vec(b.clone()) - &beta_star;
            d.dot(&d).sqrt()
        }).collect();
        let ratio = (errs[30] / errs[0]).powf(1.0 / 30.0);
        let min_to = |t: usize| errs[..=t].iter().cloned().fold(f64::INFINITY, f64::min);
        let m100 = min_to(100); let m150 = min_to(150);
        println!("phase: err0 {:.3} err30 {:.4} err5 {:.4} geo-ratio {:.4} floor change {:.3}%",
                 errs[0], errs[30], errs[5], ratio, 100.0 * (m100 - m150) / m100);
    }

    if which.is_empty() || which == "probe" {
        // convexity probe on the wide mixture, univariate, n=10
        let x = Array2::from_shape_fn((10, 1), |(i, _)| (i as f64 - 4.5) / 2.0);
        let noise = grr_core::noise::GaussianMixture::<f64>::bimodal_wide();
        // seeded draws via the narrow sampler trick: sample standard normal ourselves
        use rand::{Rng, SeedableRng}; use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let eps = Array1::from_shape_fn(10, |_| {
            let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
            let pick: bool = rng.random();
            (if pick { 1.5 } else { -1.5 }) + z
        });
        let _ = noise;
        let y = x.column(0).to_owned() * 1.0 + eps;
        let data = Dataset::new(x, y).unwrap();
        let sin_table = ScoreGenerator::<f64>::sinusoidal().score_table(10).unwrap();
        let report = convexity_probe(&data, &sin_table, 10_000, 99).unwrap();
        println!("probe sinusoidal: {} violations, worst gap {:.2e}", report.violations, report.worst_gap);
        let wil_table = ScoreGenerator::<f64>::wilcoxon().score_table(10).unwrap();
        let report = convexity_probe(&data, &wil_table, 10_000, 99).unwrap();
        println!("probe wilcoxon: {} violations, worst gap {:.2e}", report.violations, report.worst_gap);
    }

    if which == "coverage" {
        // Theorem-2 coverage: mixture noise, wilcoxon scores, n=1000 p=5 B=1000, 200 outer
        let t = Instant::now();
        let n = 1000; let p = 5; let outer = 200;
        let hits: Vec<[bool; 5]> = (0..outer).into_par_iter().map(|r| {
            let x = gen_design::<f64>(n, p, 0.7, 30_000 + r as u64).unwrap();
            let beta_star = Array1::from_elem(p, 1.0);
            let y = x.dot(&beta_star) + NoiseModel::GaussianMixture.sample::<f64>(n, 60_000 + r as u64);
            let data = Dataset::new(x, y).unwrap();
            let gen = ScoreGenerator::<f64>::wilcoxon();
            let point = fit(&data, &gen, &FitOptions::default()).unwrap();
            let table = gen.score_table(n).unwrap();
            let cfg = BootstrapConfig::new(1000, 0.05, 90_000 + r as u64);
            let boot = run_bootstrap(&data, &table, &point, &cfg).unwrap();
            let mut h = [false; 5];
            for l in 0..p {
                let (lo, hi) = boot.intervals[l];
                h[l] = lo <= 1.0 && 1.0 <= hi;
            }
            h
        }).collect();
        for l in 0..5 {
            let c = hits.iter().filter(|h| h[l]).count() as f64 / outer as f64;
            println!("coverage coord {l}: {:.3}", c);
        }
        println!("coverage time {:.0?}", t.elapsed());
    }
}
