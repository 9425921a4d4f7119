//! Experiment recipes: a human-editable TOML file describing a batch of runs
//! (typically a spacing ladder over one domain and table, or a test matrix)
//! and the statistical tests to evaluate on them.
//!
//! Recipe-level `domain` and `table` provide defaults that individual runs
//! may override. Omitted table entries fall back to the uniform rule values,
//! so a recipe can state only the probabilities it changes; rows must still
//! sum to one, which forces e.g. `b1 = 0.55` to come with `b2 = 0.45`.

use crate::engine::{EngineError, RunConfig};
use crate::geometry::Domain;
use crate::transition::TransitionTable;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecipeError {
    #[error("recipe parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("recipe invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn third() -> f64 {
    1.0 / 3.0
}
fn half() -> f64 {
    0.5
}

/// Transition table as written in a recipe: any omitted entry takes the
/// uniform rule's value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    #[serde(default = "third")]
    pub a1: f64,
    #[serde(default = "third")]
    pub a2: f64,
    #[serde(default = "third")]
    pub a3: f64,
    #[serde(default = "half")]
    pub b1: f64,
    #[serde(default = "half")]
    pub b2: f64,
    #[serde(default = "half")]
    pub c1: f64,
    #[serde(default = "half")]
    pub c2: f64,
    #[serde(default = "half")]
    pub d1: f64,
    #[serde(default = "half")]
    pub d2: f64,
}

impl Default for TableSpec {
    fn default() -> Self {
        TableSpec {
            a1: third(),
            a2: third(),
            a3: third(),
            b1: half(),
            b2: half(),
            c1: half(),
            c2: half(),
            d1: half(),
            d2: half(),
        }
    }
}

impl TableSpec {
    pub fn to_table(self) -> TransitionTable {
        TransitionTable {
            a1: self.a1,
            a2: self.a2,
            a3: self.a3,
            b1: self.b1,
            b2: self.b2,
            c1: self.c1,
            c2: self.c2,
            d1: self.d1,
            d2: self.d2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub id: String,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
}

fn default_threshold() -> f64 {
    crate::analysis::DEFAULT_COLLAPSE_THRESHOLD
}
fn default_bootstrap() -> usize {
    crate::analysis::DEFAULT_BOOTSTRAP_REPLICATES
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestSpec {
    /// Rescale the listed runs' curves by spacing and require agreement.
    Collapse {
        runs: Vec<String>,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    /// Per-domain L1 ratio of two tables, with bootstrap intervals; runs_x
    /// and runs_y are aligned by position, one pair per domain.
    Ratio {
        runs_x: Vec<String>,
        runs_y: Vec<String>,
        #[serde(default = "default_bootstrap")]
        bootstrap: usize,
    },
    /// Compare L1-normalized curves of the listed runs.
    Shape {
        runs: Vec<String>,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
}

impl TestSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TestSpec::Collapse { .. } => "collapse",
            TestSpec::Ratio { .. } => "ratio",
            TestSpec::Shape { .. } => "shape",
        }
    }

    pub fn referenced_runs(&self) -> Vec<&String> {
        match self {
            TestSpec::Collapse { runs, .. } | TestSpec::Shape { runs, .. } => {
                runs.iter().collect()
            }
            TestSpec::Ratio { runs_x, runs_y, .. } => runs_x.iter().chain(runs_y).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub name: String,
    pub master_seed: u64,
    pub n_bins: usize,
    pub n_samples: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableSpec>,
    #[serde(default, rename = "run")]
    pub runs: Vec<RunSpec>,
    #[serde(default, rename = "test", skip_serializing_if = "Vec::is_empty")]
    pub tests: Vec<TestSpec>,
}

impl Recipe {
    pub fn parse(text: &str) -> Result<Recipe, RecipeError> {
        Ok(toml::from_str(text)?)
    }

    /// Canonical text form. Serialization is a fixed point: parsing the
    /// output and serializing again reproduces it byte for byte.
    pub fn canonical_string(&self) -> String {
        toml::to_string_pretty(self).expect("recipe serializes")
    }

    /// Expand into one validated RunConfig per run, in recipe order.
    /// `n_workers` is an execution concern, not part of the recipe.
    pub fn resolve(&self, n_workers: usize) -> Result<Vec<(String, RunConfig)>, RecipeError> {
        if self.name.is_empty() {
            return Err(RecipeError::Invalid("recipe has no name".into()));
        }
        if self.runs.is_empty() {
            return Err(RecipeError::Invalid("recipe defines no runs".into()));
        }
        let mut out = Vec::with_capacity(self.runs.len());
        for run in &self.runs {
            if run.id.is_empty() {
                return Err(RecipeError::Invalid("run with empty id".into()));
            }
            if out.iter().any(|(id, _)| id == &run.id) {
                return Err(RecipeError::Invalid(format!("duplicate run id {:?}", run.id)));
            }
            let domain = run.domain.or(self.domain).ok_or_else(|| {
                RecipeError::Invalid(format!("run {:?} has no domain and no default", run.id))
            })?;
            let table = run.table.or(self.table).unwrap_or_default().to_table();
            let cfg = RunConfig {
                domain,
                table,
                delta: run.delta,
                n_samples: run.n_samples.unwrap_or(self.n_samples),
                n_bins: run.n_bins.unwrap_or(self.n_bins),
                master_seed: run.master_seed.unwrap_or(self.master_seed),
                n_workers,
            };
            cfg.validate()
                .map_err(|e| RecipeError::Invalid(format!("run {:?}: {e}", run.id)))?;
            out.push((run.id.clone(), cfg));
        }
        for (k, test) in self.tests.iter().enumerate() {
            for id in test.referenced_runs() {
                if !out.iter().any(|(run_id, _)| run_id == id) {
                    return Err(RecipeError::Invalid(format!(
                        "test {} ({}) references unknown run {:?}",
                        k,
                        test.kind_name(),
                        id
                    )));
                }
            }
            if let TestSpec::Ratio { runs_x, runs_y, .. } = test {
                if runs_x.len() != runs_y.len() || runs_x.is_empty() {
                    return Err(RecipeError::Invalid(format!(
                        "test {k} (ratio) needs equally many x and y runs, one pair per domain"
                    )));
                }
            }
        }
        Ok(out)
    }
}

/// Recipes shipped with the binary, reproducing the reference experiments at
/// desk scale.
pub const EMBEDDED_RECIPES: &[(&str, &str)] = &[
    ("fig3", include_str!("../recipes/fig3.toml")),
    ("fig4", include_str!("../recipes/fig4.toml")),
    ("fig5", include_str!("../recipes/fig5.toml")),
    ("fig6", include_str!("../recipes/fig6.toml")),
    ("fig7", include_str!("../recipes/fig7.toml")),
    ("fig8", include_str!("../recipes/fig8.toml")),
    ("table1", include_str!("../recipes/table1.toml")),
];

pub fn embedded_recipe(name: &str) -> Option<&'static str> {
    EMBEDDED_RECIPES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "mini"
master_seed = 7
n_bins = 100
n_samples = 1000

[domain]
kind = "disk"
center_x = 0.3
center_y = -0.25
radius = 1.0

[table]
a1 = 0.9
a2 = 0.05
a3 = 0.05

[[run]]
id = "d04"
delta = 0.04

[[run]]
id = "d02"
delta = 0.02

[[test]]
kind = "collapse"
runs = ["d04", "d02"]
"#;

    #[test]
    fn parses_and_resolves() {
        let r = Recipe::parse(MINIMAL).unwrap();
        let runs = r.resolve(0).unwrap();
        assert_eq!(runs.len(), 2);
        let (id, cfg) = &runs[0];
        assert_eq!(id, "d04");
        assert_eq!(cfg.delta, 0.04);
        assert_eq!(cfg.table.a1, 0.9);
        // Unstated rows keep the uniform values.
        assert_eq!(cfg.table.b1, 0.5);
        assert_eq!(cfg.table.d2, 0.5);
        assert!(matches!(cfg.domain, Domain::Disk(_)));
        assert_eq!(cfg.n_samples, 1000);
        match &r.tests[0] {
            TestSpec::Collapse { runs, threshold } => {
                assert_eq!(runs.len(), 2);
                assert_eq!(*threshold, 3.0);
            }
            other => panic!("wrong test kind {other:?}"),
        }
    }

    #[test]
    fn serialization_is_a_fixed_point() {
        let r = Recipe::parse(MINIMAL).unwrap();
        let canon = r.canonical_string();
        let reparsed = Recipe::parse(&canon).unwrap();
        assert_eq!(reparsed, r);
        assert_eq!(reparsed.canonical_string(), canon);
    }

    #[test]
    fn partial_table_rows_must_still_sum_to_one() {
        // b1 changed without b2: the row sums to 1.05 and must be rejected.
        let text = MINIMAL.replace("a1 = 0.9", "b1 = 0.55\na1 = 0.9");
        let r = Recipe::parse(&text).unwrap();
        let err = r.resolve(0).unwrap_err();
        assert!(matches!(err, RecipeError::Invalid(_)), "{err}");
    }

    #[test]
    fn run_overrides_and_validation() {
        let text = r#"
name = "multi"
master_seed = 1
n_bins = 50
n_samples = 500

[[run]]
id = "disk"
delta = 0.04
domain = { kind = "disk", center_x = 0.3, center_y = -0.25, radius = 1.0 }

[[run]]
id = "strip"
delta = 0.02
n_samples = 900
master_seed = 42
domain = { kind = "strip", top = 0.6, bottom = -0.4 }
table = { a1 = 0.1, a2 = 0.45, a3 = 0.45 }
"#;
        let r = Recipe::parse(text).unwrap();
        let runs = r.resolve(3).unwrap();
        assert!(matches!(runs[1].1.domain, Domain::Strip(_)));
        assert_eq!(runs[1].1.n_samples, 900);
        assert_eq!(runs[1].1.master_seed, 42);
        assert_eq!(runs[1].1.table.a1, 0.1);
        assert_eq!(runs[0].1.master_seed, 1);
        assert_eq!(runs[0].1.n_workers, 3);
    }

    #[test]
    fn rejects_bad_recipes() {
        // No runs.
        let empty = "name = \"x\"\nmaster_seed = 1\nn_bins = 10\nn_samples = 10\n";
        assert!(matches!(
            Recipe::parse(empty).unwrap().resolve(0),
            Err(RecipeError::Invalid(_))
        ));
        // Unknown field.
        assert!(Recipe::parse(&format!("{empty}\nbogus = 3\n")).is_err());
        // Run without any domain.
        let no_domain = format!("{empty}\n[[run]]\nid = \"a\"\ndelta = 0.04\n");
        assert!(matches!(
            Recipe::parse(&no_domain).unwrap().resolve(0),
            Err(RecipeError::Invalid(_))
        ));
        // Duplicate ids.
        let dup = MINIMAL.replace("id = \"d02\"", "id = \"d04\"");
        assert!(Recipe::parse(&dup).unwrap().resolve(0).is_err());
        // Test referencing a missing run.
        let dangling = MINIMAL.replace("runs = [\"d04\", \"d02\"]", "runs = [\"d04\", \"nope\"]");
        assert!(Recipe::parse(&dangling).unwrap().resolve(0).is_err());
    }

    #[test]
    fn embedded_recipes_parse_and_resolve() {
        for (name, text) in EMBEDDED_RECIPES {
            let r = Recipe::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&r.name, name);
            let runs = r.resolve(0).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!runs.is_empty());
            // Canonical form is stable for shipped recipes too.
            let canon = r.canonical_string();
            assert_eq!(Recipe::parse(&canon).unwrap(), r);
        }
        assert!(embedded_recipe("fig4").is_some());
        assert!(embedded_recipe("nope").is_none());

        // The ladder recipes share the spacing ladder and differ in table or
        // domain; the ratio recipe pairs runs per domain.
        let fig7 = Recipe::parse(embedded_recipe("fig7").unwrap()).unwrap();
        let runs = fig7.resolve(0).unwrap();
        for (_, cfg) in &runs {
            assert_eq!(cfg.table.b1, 0.55);
            assert_eq!(cfg.table.b2, 0.45);
            assert!(!cfg.table.is_symmetric());
        }
        let fig8 = Recipe::parse(embedded_recipe("fig8").unwrap()).unwrap();
        for (_, cfg) in fig8.resolve(0).unwrap() {
            assert!(matches!(cfg.domain, Domain::Strip(_)));
            assert!(!cfg.table.is_symmetric());
        }
    }
}
