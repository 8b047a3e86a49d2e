use spatrisk::models::preset;
use spatrisk::quadrature::{integrate_carrying_error, integrate_with_breakpoints, QuadratureConfig};

fn mm2_inner(y1: f64, cfg: &QuadratureConfig) -> spatrisk::quadrature::Estimate {
    let mm2 = preset::mm2();
    let p = 1.0 / 0.35;
    let x1 = y1.powf(p);
    integrate_with_breakpoints(
        |y2: f64| mm2.cov_kernel(0.25, x1, y2.powf(p)).unwrap(),
        0.0,
        f64::INFINITY,
        &[y1],
        cfg,
    )
    .unwrap()
}

#[test]
fn probe_inner_refs() {
    let refs: [(f64, f64); 6] = [
        (0.3, 1.13575282482340e-14),
        (0.5, 2.79983273758356e-4),
        (4.0, 4.77528191511375e-2),
        (8.0, 1.42045459129083e-2),
        (20.0, 2.51154284292692e-3),
        (100.0, 1.06480032235566e-4),
    ];
    let base = QuadratureConfig::default().conservative().tightened(0.5);
    for (y1, want) in refs {
        let mut cfg = base;
        cfg.abs_tol /= 1.0 + y1;
        let est = mm2_inner(y1, &cfg);
        println!(
            "inner({y1}): act_err {:+.3e} rel {:+.2e} claimed {:.3e} evals {}",
            est.value - want,
            (est.value - want) / want,
            est.error,
            est.evaluations
        );
    }
}

#[test]
fn probe_outer_pieces() {
    let pieces: [(f64, f64, f64); 6] = [
        (0.0, 0.8, 0.00519698388896),
        (0.8, 2.5, 0.21101230809992),
        (2.5, 10.0, 0.22974286778721),
        (10.0, 60.0, 0.08286128750143),
        (60.0, 1000.0, 0.01674546235454),
        (1000.0, f64::INFINITY, 1.128601140377e-3),
    ];
    let cfg = QuadratureConfig::default().conservative();
    let inner_base = cfg.tightened(0.5);
    for (lo, hi, want) in pieces {
        let est = integrate_carrying_error(
            |y1: f64| {
                let mut icfg = inner_base;
                icfg.abs_tol /= 1.0 + y1;
                let e = mm2_inner(y1, &icfg);
                (e.value, e.error)
            },
            lo,
            hi,
            &[],
            &cfg,
        )
        .unwrap();
        println!(
            "piece [{lo},{hi}): act_err {:+.3e} claimed {:.3e} evals {}",
            est.value - want,
            est.error,
            est.evaluations
        );
    }
}

#[test]
fn probe_full_q() {
    use spatrisk::risk::{damage_covariance_with, CovarianceForm, DamageExponent};
    let mm2 = preset::mm2();
    let nu = DamageExponent::new(0.35).unwrap();
    let want = 0.546687510773128;
    for f in [1.0, 0.1] {
        let cfg = QuadratureConfig::default().tightened(f);
        let est =
            damage_covariance_with(&mm2, 0.25, nu, CovarianceForm::Substituted, &cfg).unwrap();
        println!(
            "full q (f={f}): act_err {:+.3e} claimed {:.3e} evals {}",
            est.value - want,
            est.error,
            est.evaluations
        );
    }
}

#[test]
fn probe_teg_throughput() {
    use spatrisk::geometry::Region;
    use spatrisk::models::preset;
    use spatrisk::risk::DamageExponent;
    use spatrisk::simulation::{mc_risk, SimulationConfig};

    let nu = DamageExponent::new(0.2).unwrap();
    let cfg = SimulationConfig::new(50, Region::square(1.0).unwrap(), 200, 99).unwrap();
    let t0 = std::time::Instant::now();
    let est = mc_risk(&preset::teg(), &cfg, nu).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "TEG n=50 m=200: {:.3} s total, {:.2} ms/replicate",
        dt,
        1000.0 * dt / 200.0
    );
    println!(
        "variance {:.6e} +- {:.2e}, mean {:.6} +- {:.2e}",
        est.variance,
        est.variance_se.unwrap(),
        est.mean_damage,
        est.mean_damage_se
    );
}
