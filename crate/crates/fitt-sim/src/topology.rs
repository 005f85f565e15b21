//! Topology construction: the meshed multi-AS generator used by the
//! evaluation scenarios, the small five-router/six-client tree, and fully
//! custom graphs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scenario::ConfigError;

fn default_true() -> bool {
    true
}
fn default_ases() -> usize {
    4
}
fn default_edges_per_as() -> usize {
    3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterSpec {
    pub id: String,
    #[serde(default = "default_true")]
    pub fitt: bool,
    #[serde(default)]
    pub edge: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub delay_ms: Option<f64>,
}

/// Static route seed for custom graphs; auto-derived routes cover producer
/// prefixes, these add anything extra.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub node: String,
    pub prefix: String,
    pub via: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologySpec {
    /// `ases` gateway routers in a full mesh, each fronting
    /// `edges_per_as` edge routers that clients attach to.
    FourAsMesh {
        #[serde(default = "default_ases")]
        ases: usize,
        #[serde(default = "default_edges_per_as")]
        edges_per_as: usize,
    },
    /// The small tree: r1 at the server, r2/r4/r5 as client edges.
    Fig5Toy,
    Custom {
        routers: Vec<RouterSpec>,
        #[serde(default)]
        links: Vec<LinkSpec>,
        #[serde(default)]
        routes: Vec<RouteSpec>,
    },
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec::FourAsMesh {
            ases: default_ases(),
            edges_per_as: default_edges_per_as(),
        }
    }
}

/// Resolved router graph, before endpoints are attached.
#[derive(Clone, Debug)]
pub struct TopologyPlan {
    pub routers: Vec<RouterSpec>,
    pub links: Vec<LinkSpec>,
    pub routes: Vec<RouteSpec>,
    /// Client attachment ring, in placement order.
    pub edge_order: Vec<String>,
    /// AS index -> gateway router id, for `as:K` attachments.
    pub as_gateways: BTreeMap<usize, String>,
}

impl TopologySpec {
    pub fn plan(&self, fitt_enabled: bool) -> Result<TopologyPlan, ConfigError> {
        match self {
            TopologySpec::FourAsMesh { ases, edges_per_as } => {
                if *ases < 2 || *edges_per_as < 1 {
                    return Err(ConfigError::new(
                        "topology",
                        "mesh needs at least 2 ASes and 1 edge router per AS",
                    ));
                }
                let mut routers = Vec::new();
                let mut links = Vec::new();
                let mut edge_order = Vec::new();
                let mut as_gateways = BTreeMap::new();
                for a in 0..*ases {
                    let core = format!("core{a}");
                    routers.push(RouterSpec {
                        id: core.clone(),
                        fitt: fitt_enabled,
                        edge: false,
                    });
                    as_gateways.insert(a, core);
                }
                for a in 0..*ases {
                    for b in (a + 1)..*ases {
                        links.push(LinkSpec {
                            a: format!("core{a}"),
                            b: format!("core{b}"),
                            delay_ms: None,
                        });
                    }
                }
                for a in 0..*ases {
                    for e in 0..*edges_per_as {
                        let id = format!("edge{a}_{e}");
                        routers.push(RouterSpec {
                            id: id.clone(),
                            fitt: fitt_enabled,
                            edge: true,
                        });
                        links.push(LinkSpec {
                            a: format!("core{a}"),
                            b: id.clone(),
                            delay_ms: None,
                        });
                        edge_order.push(id);
                    }
                }
                Ok(TopologyPlan {
                    routers,
                    links,
                    routes: Vec::new(),
                    edge_order,
                    as_gateways,
                })
            }
            TopologySpec::Fig5Toy => {
                let edge = |id: &str| RouterSpec {
                    id: id.to_string(),
                    fitt: fitt_enabled,
                    edge: true,
                };
                let relay = |id: &str| RouterSpec {
                    id: id.to_string(),
                    fitt: fitt_enabled,
                    edge: false,
                };
                let link = |a: &str, b: &str| LinkSpec {
                    a: a.to_string(),
                    b: b.to_string(),
                    delay_ms: None,
                };
                Ok(TopologyPlan {
                    routers: vec![relay("r1"), edge("r2"), relay("r3"), edge("r4"), edge("r5")],
                    links: vec![
                        link("r1", "r2"),
                        link("r1", "r3"),
                        link("r2", "r3"),
                        link("r3", "r4"),
                        link("r3", "r5"),
                    ],
                    routes: Vec::new(),
                    edge_order: vec!["r2".into(), "r4".into(), "r5".into()],
                    as_gateways: BTreeMap::new(),
                })
            }
            TopologySpec::Custom {
                routers,
                links,
                routes,
            } => {
                if routers.is_empty() {
                    return Err(ConfigError::new("topology.routers", "at least one router"));
                }
                let mut seen = BTreeMap::new();
                for (i, r) in routers.iter().enumerate() {
                    if seen.insert(r.id.clone(), i).is_some() {
                        return Err(ConfigError::new(
                            format!("topology.routers[{i}].id"),
                            format!("duplicate router id {:?}", r.id),
                        ));
                    }
                }
                for (i, l) in links.iter().enumerate() {
                    for end in [&l.a, &l.b] {
                        if !seen.contains_key(end) {
                            return Err(ConfigError::new(
                                format!("topology.links[{i}]"),
                                format!("unknown router {end:?}"),
                            ));
                        }
                    }
                }
                let edge_order = routers
                    .iter()
                    .filter(|r| r.edge)
                    .map(|r| r.id.clone())
                    .collect();
                Ok(TopologyPlan {
                    routers: routers.clone(),
                    links: links.clone(),
                    routes: routes.clone(),
                    edge_order,
                    as_gateways: BTreeMap::new(),
                })
            }
        }
    }
}

/// Where an endpoint plugs into the router graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Attach {
    /// Round-robin across the edge-router ring.
    Spread,
    /// The gateway router of one AS (mesh topologies only).
    As(usize),
    /// A specific router by id.
    Node(String),
}

impl Attach {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        if text == "spread" {
            return Ok(Attach::Spread);
        }
        if let Some(idx) = text.strip_prefix("as:") {
            let idx = idx
                .parse()
                .map_err(|_| ConfigError::new(path, format!("bad AS index in {text:?}")))?;
            return Ok(Attach::As(idx));
        }
        if let Some(node) = text.strip_prefix("node:") {
            return Ok(Attach::Node(node.to_string()));
        }
        Err(ConfigError::new(
            path,
            format!("attach must be \"spread\", \"as:<k>\" or \"node:<id>\", got {text:?}"),
        ))
    }
}
