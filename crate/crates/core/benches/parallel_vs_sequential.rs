use bayesdrop::data::{standardize, with_bias, DropoutSpec};
use bayesdrop::harness::{run_generalization, ExperimentConfig};
use bayesdrop::logreg::{GammaPrior, LogregModel};
use bayesdrop::scenario::synthetic_classification;
use bayesdrop::svb::{estimate_g_c, SvbConfig, SvbProblem, VariationalState};
use bayesdrop::{Execution, RngStream};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn generalization(c: &mut Criterion) {
    let mut group = c.benchmark_group("generalization_100_reps");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = ExperimentConfig {
            replicates: 100,
            exec,
            ..ExperimentConfig::generalization()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_generalization(&cfg).unwrap())
        });
    }
    group.finish();
}

fn svb_estimate(c: &mut Criterion) {
    let base = standardize(&synthetic_classification(250, 7, RngStream::new(1, 0))).unwrap();
    let x = with_bias(base.x());
    let model = LogregModel::new(&x, base.y(), 0.0, GammaPrior::default()).unwrap();
    let problem = SvbProblem {
        likelihood: &model,
        prior: GammaPrior::default(),
        dropout: DropoutSpec::new(0.3, [0]).unwrap(),
    };
    let state = VariationalState::standard(x.ncols(), true);
    let mut group = c.benchmark_group("svb_estimate_g_c_s100");
    for (name, exec) in MODES {
        let cfg = SvbConfig {
            exec,
            ..SvbConfig::with_iterations(10, 100)
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_g_c(&state, &problem, &cfg, RngStream::new(2, 0)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, generalization, svb_estimate);
criterion_main!(benches);
