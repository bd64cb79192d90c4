//! Seeded monthly panels where each target is driven by three
//! alternative series that only the knowledge graph points to.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::experiment::TargetSpec;
use super::panel::{AliasMap, Month, TimeSeriesPanel};
use crate::kgraph::{build_graph, KnowledgeGraph};
use crate::lexicon::Polarity;
use crate::triples::RdfTriple;

pub const BASELINE_COLUMNS: [&str; 12] = [
    "real_gdp",
    "nominal_investment",
    "nominal_consumption",
    "m2",
    "nominal_imports",
    "nominal_exports",
    "repo_7d",
    "deposit_rate_1y",
    "nominal_gdp",
    "gdp_deflator",
    "cpi",
    "investment_price",
];

struct Driven {
    label: &'static str,
    entity: &'static str,
    column: &'static str,
    level: f64,
    noise: f64,
    /// (entity, column, level, loading, delay in months)
    drivers: [(&'static str, &'static str, f64, f64, usize); 3],
}

const TARGETS: [Driven; 2] = [
    Driven {
        label: "inflation",
        entity: "inflation",
        column: "cpi",
        level: 100.0,
        noise: 0.25,
        drivers: [
            ("pork price", "pork_price", 20.0, 1.0, 9),
            ("crude oil price", "oil_price", 60.0, 0.8, 10),
            ("m1 money supply", "m1", 40.0, -0.7, 12),
        ],
    },
    Driven {
        label: "investment",
        entity: "investment",
        column: "nominal_investment",
        level: 400.0,
        noise: 1.0,
        drivers: [
            ("fiscal expenditure", "fiscal_expenditure", 150.0, 4.0, 9),
            ("loan rate", "loan_rate_1y", 6.0, -3.0, 11),
            ("refinery capacity", "refinery_capacity", 80.0, 2.5, 12),
        ],
    },
];

/// Persistence of the driver processes.
const RHO: f64 = 0.95;
const BURN_IN: usize = 60;

pub struct SyntheticData {
    pub baseline: TimeSeriesPanel,
    pub alternative: TimeSeriesPanel,
    pub graph: KnowledgeGraph,
    pub aliases: AliasMap,
    pub targets: Vec<TargetSpec>,
}

fn ar1(rng: &mut ChaCha8Rng, len: usize, rho: f64) -> Vec<f64> {
    let eps = Normal::new(0.0, 1.0).expect("unit normal");
    let mut z = 0.0;
    (0..len + BURN_IN)
        .map(|_| {
            z = rho * z + eps.sample(rng);
            z
        })
        .collect()
}

fn round(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Panels over 1970-01..=2019-06 (594 months).
pub fn generate(seed: u64) -> SyntheticData {
    let start = Month::new(1970, 1).expect("valid month");
    let len = start.months_until(Month::new(2019, 6).expect("valid month")) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    let mut baseline = TimeSeriesPanel::new(start, len);
    let mut alternative = TimeSeriesPanel::new(start, len);
    let mut targets = Vec::new();
    let mut target_series = Vec::new();
    for t in &TARGETS {
        let mut y = vec![t.level; len + BURN_IN];
        for (_, column, level, loading, delay) in t.drivers {
            let z = ar1(&mut rng, len, RHO);
            for i in delay..len + BURN_IN {
                y[i] += loading * z[i - delay];
            }
            let observed = z[BURN_IN..].iter().map(|v| Some(round(level + v))).collect();
            alternative.add_column(column, observed).expect("fresh column");
        }
        for v in y.iter_mut() {
            *v += t.noise * noise.sample(&mut rng);
        }
        target_series.push((t.column, y[BURN_IN..].to_vec()));
        targets.push(TargetSpec {
            label: t.label.into(),
            entity: t.entity.into(),
            column: t.column.into(),
        });
    }
    for name in BASELINE_COLUMNS {
        let values: Vec<Option<f64>> = match target_series.iter().find(|(c, _)| *c == name) {
            Some((_, y)) => y.iter().map(|v| Some(round(*v))).collect(),
            None => {
                let level = 50.0 + 10.0 * baseline.column_names().len() as f64;
                ar1(&mut rng, len, 0.9)[BURN_IN..]
                    .iter()
                    .map(|v| Some(round(level + v)))
                    .collect()
            }
        };
        baseline.add_column(name, values).expect("fresh column");
    }
    let months: Vec<Month> = alternative.months().collect();
    let festival = months.iter().map(|m| Some(if m.month() == 2 { 1.0 } else { 0.0 })).collect();
    alternative
        .add_column("spring_festival", festival)
        .expect("fresh column");
    // Linked in the graph but only observed from 2000 on.
    let late = ar1(&mut rng, len, 0.9);
    let epu = months
        .iter()
        .zip(&late[BURN_IN..])
        .map(|(m, v)| (m.year() >= 2000).then(|| round(100.0 + 5.0 * v)))
        .collect();
    alternative.add_column("epu_index", epu).expect("fresh column");

    let mut triples = Vec::new();
    let mut link = |s: &str, p: Polarity, o: &str| {
        triples.push(RdfTriple {
            subject: s.into(),
            relation: p.as_str().into(),
            polarity: p,
            object: o.into(),
            provenance: Vec::new(),
        })
    };
    for t in &TARGETS {
        for (entity, _, _, loading, _) in t.drivers {
            let p = if loading > 0.0 { Polarity::Increase } else { Polarity::Decrease };
            link(entity, p, t.entity);
        }
        link("spring festival", Polarity::Increase, t.entity);
    }
    link("m2 money supply", Polarity::Increase, "inflation");
    link("housing price", Polarity::Increase, "inflation");
    link("economic policy uncertainty", Polarity::Decrease, "investment");
    link("deposit rate", Polarity::Increase, "loan rate");
    let centers: Vec<String> = TARGETS.iter().map(|t| t.entity.to_string()).collect();
    let graph = build_graph(&triples, &centers);

    let mut aliases = AliasMap::default();
    for t in &TARGETS {
        aliases.insert(t.entity, t.column.into());
        for (entity, column, ..) in t.drivers {
            aliases.insert(entity, column.into());
        }
    }
    aliases.insert("m2 money supply", "m2".into());
    aliases.insert("spring festival", "spring_festival".into());
    aliases.insert("economic policy uncertainty", "epu_index".into());
    aliases.insert("deposit rate", "deposit_rate_1y".into());

    SyntheticData {
        baseline,
        alternative,
        graph,
        aliases,
        targets,
    }
}
