use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use r2p_core::backend::{MockBackend, MockReply};
use r2p_core::corpus::{Dataset, ProfileEntry, TaskInstance, TaskKind};
use r2p_core::harness::{run_experiment_with, ExperimentConfig};
use r2p_core::metrics::rouge_scores;
use r2p_core::par::{self, Execution};
use r2p_core::pipeline::Strategy;
use r2p_core::retrieval::{select_context, Bm25Params, ContextStrategy};
use r2p_core::rng::SplitMix64;

fn sentence(rng: &mut SplitMix64, len: usize) -> String {
    (0..len)
        .map(|_| format!("w{}", rng.below(400)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn instances(count: usize, profile_len: usize) -> Vec<TaskInstance> {
    let mut rng = SplitMix64::new(17);
    (0..count)
        .map(|i| TaskInstance {
            instance_id: format!("i{i}"),
            user_id: format!("u{i}"),
            task: TaskKind::Lamp3,
            input_text: sentence(&mut rng, 40),
            profile: (0..profile_len)
                .map(|j| {
                    ProfileEntry::new(
                        TaskKind::Lamp3,
                        format!("p{j}"),
                        [("score", "3".to_string()), ("text", sentence(&mut rng, 60))],
                    )
                })
                .collect(),
            gold: "3".into(),
        })
        .collect()
}

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel { workers: 4 }),
];

fn bm25_batch(c: &mut Criterion) {
    let data = instances(200, 150);
    let mut g = c.benchmark_group("bm25_select_k4");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                par::map(&data, exec, |inst| {
                    select_context(&inst.profile, &inst.input_text, ContextStrategy::Bm25, 4, None, Bm25Params::default())
                        .unwrap()
                })
            })
        });
    }
    g.finish();
}

fn rouge_batch(c: &mut Criterion) {
    let mut rng = SplitMix64::new(3);
    let pairs: Vec<(String, String)> = (0..1000)
        .map(|_| (sentence(&mut rng, 30), sentence(&mut rng, 30)))
        .collect();
    let mut g = c.benchmark_group("rouge_1000_pairs");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| rouge_scores(&pairs, exec))
        });
    }
    g.finish();
}

fn mock_harness(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("bench.jsonl");
    let ds = Dataset::new(TaskKind::Lamp3, instances(100, 60)).unwrap();
    ds.write_jsonl(std::fs::File::create(&dataset).unwrap()).unwrap();
    let mock = MockBackend::constant(MockReply::with_tokens("<think>User Profile Integration.</think>3", 5));
    let mut g = c.benchmark_group("harness_r2p_100_instances");
    g.sample_size(10);
    for (name, workers) in [("sequential", 1), ("parallel", 4)] {
        g.bench_function(name, |b| {
            b.iter_batched(
                || tempfile::tempdir().unwrap(),
                |out| {
                    let mut cfg = ExperimentConfig::new(TaskKind::Lamp3, Strategy::R2p, &dataset, out.path());
                    cfg.k = 4;
                    cfg.reps = 1;
                    cfg.workers = workers;
                    run_experiment_with(&cfg, &mock).unwrap()
                },
                BatchSize::PerIteration,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, bm25_batch, rouge_batch, mock_harness);
criterion_main!(benches);
