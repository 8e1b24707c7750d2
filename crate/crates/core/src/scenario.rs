//! Synthetic data generators for the regression and classification studies.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::RngStream;

/// Observations per split in the regression scenarios.
pub const SCENARIO_ROWS: usize = 20;
/// Inner dimension of the low-rank design `X = R L`.
pub const SCENARIO_RANK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Under,
    Determined,
    Over,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Under, Scenario::Determined, Scenario::Over];

    pub fn n_features(self) -> usize {
        match self {
            Scenario::Under => 10,
            Scenario::Determined => 20,
            Scenario::Over => 40,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Under => "under",
            Scenario::Determined => "determined",
            Scenario::Over => "over",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Default,
    Junk,
    Shift,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Default, Condition::Junk, Condition::Shift];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Default => "default",
            Condition::Junk => "junk",
            Condition::Shift => "shift",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinRegScenario {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: DVector<f64>,
    /// Random projection with unit-length columns shared by train and test.
    pub projection: DMatrix<f64>,
}

fn normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Draws one replicate of the linear-regression generalization design.
///
/// Weights come from the prior with unit scale, responses carry unit noise.
/// Under covariate shift each column is multiplied by a standard normal draw
/// after the responses are generated; train and test share the multipliers.
pub fn generate_linreg_scenario(
    scenario: Scenario,
    condition: Condition,
    stream: RngStream,
) -> LinRegScenario {
    let mut rng = stream.rng();
    let p = scenario.n_features();
    let mut projection = normal_matrix(SCENARIO_RANK, p, &mut rng);
    for mut col in projection.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    let mut truth = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    if condition == Condition::Junk {
        truth
            .rows_mut(SCENARIO_RANK.min(p), p - SCENARIO_RANK.min(p))
            .fill(0.0);
    }

    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let x = normal_matrix(SCENARIO_ROWS, SCENARIO_RANK, rng) * &projection;
        let noise = DVector::from_fn(SCENARIO_ROWS, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * &truth + noise;
        (x, y)
    };
    let (mut x_train, y_train) = draw(&mut rng);
    let (mut x_test, y_test) = draw(&mut rng);

    if condition == Condition::Shift {
        for j in 0..p {
            let m: f64 = rng.sample(StandardNormal);
            x_train.column_mut(j).scale_mut(m);
            x_test.column_mut(j).scale_mut(m);
        }
    }

    LinRegScenario {
        train: Dataset::from_parts(x_train, y_train).expect("finite by construction"),
        test: Dataset::from_parts(x_test, y_test).expect("finite by construction"),
        truth,
        projection,
    }
}

/// Stand-in for a small QSPR table: 19 rows, 7 strongly correlated covariates,
/// each positively correlated with the response. Covariates that come out
/// negatively correlated are sign-flipped, mirroring how such tables are prepared.
pub fn qspr_surrogate(stream: RngStream) -> Dataset {
    const N: usize = 19;
    const P: usize = 7;
    let mut rng = stream.rng();
    let latent: Vec<f64> = (0..N).map(|_| rng.sample(StandardNormal)).collect();
    let loadings: Vec<f64> = (0..P).map(|k| 0.6 + 0.05 * k as f64).collect();
    let mut x = DMatrix::from_fn(N, P, |i, j| {
        let e: f64 = rng.sample(StandardNormal);
        loadings[j] * latent[i] + 0.35 * e
    });
    let coef = [1.0, 0.5, -0.3, 0.8, 0.2, 0.4, 0.6];
    let y = DVector::from_fn(N, |i, _| {
        let e: f64 = rng.sample(StandardNormal);
        (0..P).map(|j| coef[j] * x[(i, j)]).sum::<f64>() + 0.5 * e
    });
    let yc = &y - DVector::repeat(N, y.mean());
    for j in 0..P {
        let c = x.column(j).map(|v| v) - DVector::repeat(N, x.column(j).mean());
        if c.dot(&yc) < 0.0 {
            x.column_mut(j).neg_mut();
        }
    }
    let names = (0..P).map(|j| format!("descriptor{j}")).collect();
    Dataset::new(x, y, names).expect("finite by construction")
}

/// Row/column shapes of the benchmark classification tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableShape {
    pub name: &'static str,
    pub n: usize,
    pub p: usize,
}

pub const CLASSIFICATION_SHAPES: [TableShape; 5] = [
    TableShape {
        name: "australian",
        n: 690,
        p: 15,
    },
    TableShape {
        name: "german",
        n: 1000,
        p: 25,
    },
    TableShape {
        name: "heart",
        n: 270,
        p: 14,
    },
    TableShape {
        name: "pima",
        n: 532,
        p: 8,
    },
    TableShape {
        name: "ripley",
        n: 250,
        p: 7,
    },
];

pub fn classification_shape(name: &str) -> Option<TableShape> {
    CLASSIFICATION_SHAPES
        .iter()
        .copied()
        .find(|s| s.name == name)
}

/// Binary labels from a logistic model on i.i.d. standard normal covariates.
/// Every covariate carries signal; the linear predictor has standard deviation
/// of about 2, which leaves the classes overlapping.
pub fn synthetic_classification(n: usize, p: usize, stream: RngStream) -> Dataset {
    let mut rng = stream.rng();
    let x = normal_matrix(n, p, &mut rng);
    let raw: DVector<f64> = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
    let w = if p > 0 {
        raw.scale(2.0 / raw.norm())
    } else {
        raw
    };
    let eta = &x * &w;
    let y = eta.map(|e| {
        let prob = 1.0 / (1.0 + (-e).exp());
        if rng.random::<f64>() < prob {
            1.0
        } else {
            0.0
        }
    });
    Dataset::from_parts(x, y).expect("finite by construction")
}
