use proptest::prelude::*;
use spikelab::model::{ContinuousSpec, ExpOu, GridSpec, JumpLaw, ModelSpec, SpikeParams};
use spikelab::rng::{derive, Purpose};
use spikelab::simulate::{sample_jump_records, simulate_spot_seeded, spike_values_from_truth};

fn law() -> JumpLaw {
    JumpLaw::mixture(&[0.4, 0.6], &[1.0 / 15.0, 1.0 / 10.0], &[-1.0, 1.0]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jump_records_are_sorted_and_off_grid(
        lambda in 0.5f64..200.0,
        n in 2usize..5000,
        horizon in 0.1f64..3.0,
        seed in any::<u64>(),
    ) {
        let params = SpikeParams::new(lambda, 10.0, law()).unwrap();
        let grid = GridSpec::new(n, horizon).unwrap();
        let truth = sample_jump_records(&params, &grid, &mut derive(seed, 0, Purpose::Jumps));
        for j in &truth {
            prop_assert!(j.time > 0.0 && j.time <= horizon);
            prop_assert!(grid.index_of(j.time).is_none() || grid.time(grid.index_of(j.time).unwrap()) != j.time);
            prop_assert!(j.size != 0.0);
        }
        prop_assert!(truth.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn spike_path_decays_exactly_between_jumps(
        lambda in 0.5f64..50.0,
        beta in 0.1f64..5e4,
        n in 10usize..3000,
        seed in any::<u64>(),
    ) {
        let params = SpikeParams::new(lambda, beta, law()).unwrap();
        let grid = GridSpec::unit(n).unwrap();
        let truth = sample_jump_records(&params, &grid, &mut derive(seed, 0, Purpose::Jumps));
        let z = spike_values_from_truth(&truth, beta, &grid);
        let decay = (-beta * grid.mesh()).exp();
        prop_assert_eq!(z[0], 0.0);
        for i in 1..=n {
            if truth.iter().all(|j| grid.interval_of(j.time) != i) {
                prop_assert_eq!(z[i].to_bits(), (z[i - 1] * decay).to_bits());
            }
        }
    }

    #[test]
    fn observed_is_sum_of_parts_and_reproducible(
        lambda in 0.5f64..50.0,
        beta in 1.0f64..5e4,
        seed in any::<u64>(),
        rep in 0u64..1000,
    ) {
        let model = ModelSpec {
            continuous: ContinuousSpec::ExpOu(ExpOu { reversion: 100.0, vol: 2.0, initial: 1.0 }),
            spikes: SpikeParams::new(lambda, beta, law()).unwrap(),
        };
        let grid = GridSpec::unit(500).unwrap();
        let a = simulate_spot_seeded(&model, &grid, seed, rep).unwrap();
        for i in 0..=grid.n() {
            prop_assert_eq!(a.observed.values()[i], a.continuous.values()[i] + a.spike.values()[i]);
        }
        prop_assert_eq!(spike_values_from_truth(&a.truth, beta, &grid), a.spike.values().to_vec());
        prop_assert_eq!(&a, &simulate_spot_seeded(&model, &grid, seed, rep).unwrap());
    }
}

#[test]
fn jump_count_is_poisson_on_average() {
    let params = SpikeParams::new(12.0, 10.0, law()).unwrap();
    let grid = GridSpec::unit(10).unwrap();
    let mut rng = derive(5, 0, Purpose::Jumps);
    let counts: Vec<f64> = (0..20_000)
        .map(|_| sample_jump_records(&params, &grid, &mut rng).len() as f64)
        .collect();
    let m = spikelab::stats::mean(&counts);
    let v = spikelab::stats::variance(&counts);
    let se = (12.0f64 / counts.len() as f64).sqrt();
    assert!((m - 12.0).abs() < 4.0 * se, "mean {m}");
    assert!((v / m - 1.0).abs() < 0.05, "dispersion {}", v / m);
}

#[test]
fn jump_times_are_uniform() {
    let params = SpikeParams::new(50.0, 10.0, law()).unwrap();
    let grid = GridSpec::unit(100).unwrap();
    let mut rng = derive(6, 0, Purpose::Jumps);
    let times: Vec<f64> = (0..200)
        .flat_map(|_| sample_jump_records(&params, &grid, &mut rng))
        .map(|j| j.time)
        .collect();
    let ks = spikelab::stats::ks_test(&times, |t| t.clamp(0.0, 1.0));
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn exp_ou_stationary_log_variance() {
    // log X^c started at 0 has variance σ²(1 - e^{-2κt}) / (2κ) at time t.
    let spec = ExpOu { reversion: 100.0, vol: 2.0, initial: 1.0 };
    let grid = GridSpec::unit(50).unwrap();
    let logs: Vec<f64> = (0..20_000u64)
        .map(|r| {
            let mut rng = derive(7, r, Purpose::Continuous);
            spikelab::simulate::simulate_exp_ou(&spec, &grid, &mut rng).unwrap().values()[50].ln()
        })
        .collect();
    let theory = 4.0 * (1.0 - (-200.0f64).exp()) / 200.0;
    let v = spikelab::stats::variance(&logs);
    let se = theory * (2.0 / logs.len() as f64).sqrt();
    assert!((v - theory).abs() < 4.0 * se, "{v} vs {theory}");
}
