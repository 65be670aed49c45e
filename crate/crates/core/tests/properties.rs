use ccc_core::freq::LinkTransfer;
use ccc_core::gp::{sample_gp, GpConfig, MaternKernel};
use ccc_core::harness::{generate_corpus, ExperimentConfig};
use ccc_core::traffic::truck::{simulate_linear_from, simulate_nonlinear_from};
use ccc_core::traffic::{simulate_ovm_chain, ControllerParams, HumanParams, IntegratorSettings, PlantParams, PolicyParams};
use ccc_core::trajectory::SpeedTrajectory;

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn lead(seed: u64, duration: f64, vehicle: usize) -> SpeedTrajectory<f64> {
    let config = GpConfig {
        kernel: MaternKernel::new(1.0, 5.0, 2.5).unwrap(),
        mean_speed: 25.0,
        duration,
        dt: 0.1,
        seed,
    };
    sample_gp(&config, vehicle).unwrap()
}

#[test]
fn gp_draws_have_kernel_mean_and_variance() {
    let (mut sum, mut sq, mut lag, mut n, mut nl) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for seed in 0..200 {
        let traj = lead(seed, 500.0, 1);
        let v = traj.speed(1).unwrap();
        for (k, &x) in v.iter().enumerate() {
            sum += x - 25.0;
            sq += (x - 25.0) * (x - 25.0);
            n += 1;
            if k + 50 < v.len() {
                lag += (x - 25.0) * (v[k + 50] - 25.0);
                nl += 1;
            }
        }
    }
    let kernel = MaternKernel::new(1.0, 5.0, 2.5).unwrap();
    assert!((sum / n as f64).abs() < 0.03, "mean offset {}", sum / n as f64);
    assert!((sq / n as f64 - 1.0).abs() < 0.05, "variance {}", sq / n as f64);
    let r5 = lag / nl as f64;
    assert!((r5 - kernel.eval(5.0)).abs() < 0.05, "R(5) {r5} vs {}", kernel.eval(5.0));
}

#[test]
fn second_differences_stay_bounded_as_the_step_halves() {
    let kernel = MaternKernel::new(1.0, 5.0, 2.5).unwrap();
    let var_second_diff = |dt: f64| {
        let (mut sum, mut n) = (0.0, 0usize);
        for seed in 0..40 {
            let config = GpConfig { kernel, mean_speed: 25.0, duration: 500.0, dt, seed };
            let v = sample_gp(&config, 1).unwrap().speed(1).unwrap().to_vec();
            for w in v.windows(3) {
                let d = (w[2] - 2.0 * w[1] + w[0]) / (dt * dt);
                sum += d * d;
                n += 1;
            }
        }
        sum / n as f64
    };
    let vars: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&dt| var_second_diff(dt)).collect();
    for w in vars.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.5..=2.0).contains(&ratio), "{vars:?}");
    }
}

#[test]
fn human_chain_amplifies_towards_the_truck() {
    let data = generate_corpus(&ExperimentConfig::default()).unwrap();
    let amplified = data
        .iter()
        .filter(|d| {
            let t = &d.trajectory;
            std_dev(t.speed(1).unwrap()) > std_dev(t.speed(8).unwrap())
        })
        .count();
    assert!(amplified * 10 >= data.len() * 9, "{amplified}/{}", data.len());
}

#[test]
fn chain_speeds_converge_under_step_refinement() {
    let human = HumanParams::reference();
    // first collision-free draw, as the corpus generator would keep
    let (coarse, fine) = (0..100)
        .find_map(|seed| {
            let head = lead(seed, 500.0, human.chain_length);
            let coarse = simulate_ovm_chain(&head, &human, 25.0, IntegratorSettings { step: 0.01 }).ok()?;
            let fine = simulate_ovm_chain(&head, &human, 25.0, IntegratorSettings { step: 0.005 }).ok()?;
            Some((coarse, fine))
        })
        .expect("no collision-free draw");
    for i in 1..human.chain_length {
        let worst = coarse
            .speed(i)
            .unwrap()
            .iter()
            .zip(fine.speed(i).unwrap())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst < 1e-3, "vehicle {i}: {worst}");
    }
}

#[test]
fn energy_converges_under_step_refinement() {
    let traj = lead(4, 500.0, 1);
    let ctrl = ControllerParams::acc(0.4, 0.5, PolicyParams::truck());
    let plant = PlantParams::default();
    let coarse = simulate_nonlinear_from(&traj, &plant, &ctrl, 25.0, IntegratorSettings { step: 0.01 }).unwrap();
    let fine = simulate_nonlinear_from(&traj, &plant, &ctrl, 25.0, IntegratorSettings { step: 0.005 }).unwrap();
    let (a, b) = (coarse.report.w.unwrap(), fine.report.w.unwrap());
    assert!(((a - b) / b).abs() < 0.005, "w {a} vs {b}");
}

#[test]
fn sinusoid_gain_matches_link_transfer() {
    let omega = 0.5;
    let dt = 0.1;
    let n = 20_000;
    let v: Vec<f64> = (0..n).map(|k| 25.0 + (omega * k as f64 * dt).sin()).collect();
    let traj = SpeedTrajectory::new(0.0, dt).unwrap().with_speed(1, v).unwrap();
    let sigma = 0.6;
    let ctrl = ControllerParams::acc(0.4, 0.5, PolicyParams::truck());
    let run = simulate_linear_from(&traj, &ctrl, sigma, 25.0, IntegratorSettings::default()).unwrap();
    // project the settled second half onto sin and cos
    let (mut s, mut c) = (0.0, 0.0);
    let tail = n / 2..n;
    for k in tail.clone() {
        let t = k as f64 * dt;
        s += run.speed[k] * (omega * t).sin();
        c += run.speed[k] * (omega * t).cos();
    }
    let m = tail.len() as f64;
    let amplitude = 2.0 * (s * s + c * c).sqrt() / m;
    let expected = LinkTransfer::new(&ctrl, sigma).unwrap().response(1, omega).unwrap().norm();
    assert!(((amplitude - expected) / expected).abs() < 0.01, "{amplitude} vs {expected}");
}
