//! Plain-text (TOML) network descriptions.
//!
//! ```toml
//! queues = ["q1", "q2"]
//!
//! [[routes]]
//! id = "r1"
//! path = ["q1", "q2"]
//! rate = 0.5
//!
//! [capacity]
//! kind = "matrix"          # or "graph" / "schedules"
//! data = [[1.0, 0.0], [0.0, 1.0]]
//! ```
//!
//! For `kind = "graph"`, `data` lists edges as pairs of queue names; for
//! `kind = "schedules"`, it lists 0/1 (or integer) service vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::InterferenceGraph;
use crate::network::{Capacity, CapacityPolytope, NetworkSpec, Route};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub queues: Vec<String>,
    #[serde(default)]
    pub routes: Vec<RouteConfig>,
    pub capacity: CapacityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    pub id: String,
    pub path: Vec<String>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CapacityConfig {
    Matrix {
        data: Vec<Vec<f64>>,
        #[serde(default)]
        labels: Option<Vec<String>>,
    },
    Graph {
        data: Vec<(String, String)>,
    },
    Schedules {
        data: Vec<Vec<u32>>,
    },
}

impl NetworkConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn to_spec(&self) -> Result<NetworkSpec> {
        let index = |field: String, name: &str| {
            self.queues
                .iter()
                .position(|q| q == name)
                .ok_or_else(|| Error::Config(format!("{field}: unknown queue {name:?}")))
        };
        let mut routes = Vec::with_capacity(self.routes.len());
        for (i, r) in self.routes.iter().enumerate() {
            let path = r.path.iter().map(|q| index(format!("routes[{i}].path"), q)).collect::<Result<Vec<_>>>()?;
            if !(r.rate.is_finite() && r.rate > 0.0) {
                return Err(Error::Config(format!("routes[{i}].rate: must be positive, got {}", r.rate)));
            }
            routes.push(Route::new(r.id.clone(), path, r.rate));
        }
        let capacity = match &self.capacity {
            CapacityConfig::Matrix { data, labels } => Capacity::Matrix(match labels {
                Some(l) => CapacityPolytope::with_labels(data.clone(), l.clone())?,
                None => CapacityPolytope::new(data.clone())?,
            }),
            CapacityConfig::Graph { data } => {
                let edges = data
                    .iter()
                    .enumerate()
                    .map(|(i, (a, b))| {
                        let field = format!("capacity.data[{i}]");
                        Ok((index(field.clone(), a)?, index(field, b)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Capacity::Graph(InterferenceGraph::new(self.queues.len(), &edges)?)
            }
            CapacityConfig::Schedules { data } => Capacity::Schedules(data.clone()),
        };
        NetworkSpec::new(self.queues.clone(), routes, capacity)
    }

    /// Configuration describing `spec`.
    pub fn from_spec(spec: &NetworkSpec) -> Self {
        let name = |j: usize| spec.queues()[j].clone();
        let capacity = match spec.capacity() {
            Capacity::Matrix(p) => {
                CapacityConfig::Matrix { data: p.rows().to_vec(), labels: Some(p.labels().to_vec()) }
            }
            Capacity::Graph(g) => {
                CapacityConfig::Graph { data: g.edges().into_iter().map(|(a, b)| (name(a), name(b))).collect() }
            }
            Capacity::Schedules(s) => CapacityConfig::Schedules { data: s.clone() },
        };
        Self {
            queues: spec.queues().to_vec(),
            routes: spec
                .routes()
                .iter()
                .map(|r| RouteConfig {
                    id: r.id.clone(),
                    path: r.path.iter().map(|&j| name(j)).collect(),
                    rate: r.rate,
                })
                .collect(),
            capacity,
        }
    }
}

/// Parses a TOML network description into a validated spec.
pub fn parse_network(text: &str) -> Result<NetworkSpec> {
    NetworkConfig::parse(text)?.to_spec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{example, example_names};

    const TANDEM: &str = r#"
queues = ["q1", "q2"]

[[routes]]
id = "r1"
path = ["q1", "q2"]
rate = 0.5

[capacity]
kind = "matrix"
data = [[1.0, 0.0], [0.0, 1.0]]
"#;

    #[test]
    fn parses_tandem() {
        let spec = parse_network(TANDEM).unwrap();
        assert_eq!(spec.num_queues(), 2);
        assert_eq!(spec.routes()[0].path, vec![0, 1]);
    }

    #[test]
    fn parses_graph_capacity() {
        let text = r#"
queues = ["a", "b", "c"]
routes = [{ id = "x", path = ["a"], rate = 0.2 }]
[capacity]
kind = "graph"
data = [["a", "b"], ["b", "c"]]
"#;
        let spec = parse_network(text).unwrap();
        assert_eq!(spec.polytope().unwrap().num_pools(), 2);
    }

    #[test]
    fn missing_rate_names_the_field() {
        let text = TANDEM.replace("rate = 0.5\n", "");
        let err = parse_network(&text).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("rate"), "{err}");
    }

    #[test]
    fn unknown_queue_names_the_field() {
        let text = TANDEM.replace(r#"path = ["q1", "q2"]"#, r#"path = ["q1", "q9"]"#);
        let err = parse_network(&text).unwrap_err();
        assert!(err.to_string().contains("routes[0].path"), "{err}");
    }

    #[test]
    fn repeated_visits_are_rejected() {
        let text = TANDEM.replace(r#"path = ["q1", "q2"]"#, r#"path = ["q1", "q1"]"#);
        assert!(parse_network(&text).is_err());
    }

    #[test]
    fn examples_round_trip() {
        for name in example_names() {
            let spec = example(name).unwrap();
            let text = toml::to_string(&NetworkConfig::from_spec(&spec)).unwrap();
            assert_eq!(parse_network(&text).unwrap(), spec, "{name}");
        }
    }
}
