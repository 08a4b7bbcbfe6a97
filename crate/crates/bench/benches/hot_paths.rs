//! Criterion benchmarks for the per-TTI hot paths: fading updates, TB
//! assembly, Q-network inference, the minibatch training step, and the
//! whole simulation loop with and without learning.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use drxsim_core::config::ExperimentConfig;
use drxsim_core::mac::{assemble_tb, process_feedback, DlQueue, Sdu};
use drxsim_core::phy::{step_channel, ChannelState};
use drxsim_core::policy::{ActionSpace, PolicyEngine, PolicyKind, RlPolicy};
use drxsim_core::rl::{
    DqnTrainer, EncodedState, OutputActivation, QNetwork, Transition, STATE_DIM,
};
use drxsim_core::runner::run_traced_episode;
use drxsim_core::seeds::{stream, StreamId};
use drxsim_core::sim::{SimOptions, Simulation};

fn bench_channel(c: &mut Criterion) {
    let mut g = c.benchmark_group("phy");
    g.throughput(Throughput::Elements(1));
    g.bench_function("step_channel", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = ChannelState::init(&mut rng);
        b.iter(|| step_channel(&mut st, 0.99, &mut rng));
    });
    g.finish();
}

fn bench_mac(c: &mut Criterion) {
    c.bench_function("mac/assemble_and_ack", |b| {
        b.iter_batched(
            || {
                let mut q = DlQueue::new();
                for i in 0..8 {
                    q.enqueue(Sdu::new(i, 0, 1_000_000));
                }
                q
            },
            |mut q| {
                let mut tti = 1;
                while !q.is_empty() {
                    let tb = assemble_tb(&q, 0, 249_079, None, tti);
                    process_feedback(&mut q, &tb, true);
                    tti += 1;
                }
                q
            },
            BatchSize::SmallInput,
        );
    });
}

fn bench_qnet(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = QNetwork::new(STATE_DIM, 40, 7, OutputActivation::Linear, &mut rng);
    let x: Vec<f64> = (0..STATE_DIM).map(|i| (i as f64 * 0.17).sin().abs()).collect();
    c.bench_function("rl/q_forward", |b| {
        let mut h = vec![0.0; 40];
        let mut q = vec![0.0; 7];
        b.iter(|| net.forward_into(&x, &mut h, &mut q));
    });

    c.bench_function("rl/train_step_batch256", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut online = QNetwork::new(STATE_DIM, 40, 2, OutputActivation::Linear, &mut rng);
        let mut trainer = DqnTrainer::new(
            &online,
            100_000,
            256,
            1.0,
            1e-3,
            100,
            ChaCha8Rng::seed_from_u64(4),
        );
        for i in 0..4096 {
            let mut s = EncodedState::zeroed();
            s.x[i % STATE_DIM] = 0.7;
            trainer.erm.push(Transition {
                s,
                a: i % 2,
                r: (i % 17) as f64 * 0.1,
                s_next: s,
                terminal: i % 59 == 0,
            });
        }
        b.iter(|| trainer.train_step(&mut online).unwrap());
    });
}

fn bench_sim(c: &mut Criterion) {
    let mut g = c.benchmark_group("sim");
    g.sample_size(10);

    g.bench_function("timers_episode_8000ttis", |b| {
        let cfg = ExperimentConfig::default();
        b.iter(|| run_traced_episode(&cfg, PolicyKind::TimersOnly, None, 1, 0).unwrap());
    });

    g.bench_function("training_episode_2000ttis", |b| {
        let cfg = ExperimentConfig {
            ttis_per_episode: 2000,
            train_num_ues: 1,
            ..Default::default()
        };
        b.iter_batched(
            || {
                let mut init = stream(7, StreamId::WeightInit);
                let net = QNetwork::new(STATE_DIM, 40, 2, OutputActivation::Linear, &mut init);
                let trainer = DqnTrainer::new(
                    &net,
                    cfg.erm_capacity,
                    cfg.batch_size,
                    cfg.gamma,
                    cfg.learning_rate,
                    cfg.target_sync_period,
                    stream(7, StreamId::ReplaySampling),
                );
                let engine = PolicyEngine::Rl(Box::new(RlPolicy::new(
                    net,
                    0.3,
                    stream(7, StreamId::Exploration),
                    Some(trainer),
                )));
                let sim = Simulation::new(
                    &cfg,
                    1,
                    99,
                    ActionSpace::new(2).unwrap(),
                    SimOptions { drx_enabled: true, trace: false, enforce_queue_cap: false },
                )
                .unwrap();
                (sim, engine)
            },
            |(mut sim, mut engine)| {
                sim.run_to_end(&mut engine).unwrap();
                sim.finish(&mut engine)
            },
            BatchSize::PerIteration,
        );
    });
    g.finish();
}

criterion_group!(benches, bench_channel, bench_mac, bench_qnet, bench_sim);
criterion_main!(benches);
