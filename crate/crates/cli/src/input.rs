use consensus_robustness::io::read_stochastic;
use consensus_robustness::topology::generate;
use consensus_robustness::{Error, StochasticMatrix, TopologyDescriptor, TopologyKind};
use serde::Serialize;

use crate::args::Source;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

pub fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

/// How the network was obtained, echoed into every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct InputInfo {
    pub source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

fn parse_edges(list: &str) -> Result<Vec<(usize, usize)>, Failure> {
    let mut edges = Vec::new();
    for pair in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parsed = pair
            .split_once('-')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        let Some((a, b)) = parsed else {
            return usage(format!("--edges: cannot parse '{pair}', expected i-j"));
        };
        for e in [(a, b), (b, a)] {
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
    }
    Ok(edges)
}

/// Descriptor for `--family` (n taken from `--n`, or 0 for sweeps).
pub fn family_descriptor(src: &Source) -> Result<TopologyDescriptor, Failure> {
    let Some(name) = src.family.as_deref() else {
        return usage("--family is required here");
    };
    let (lazy, base) = match name.strip_prefix("lazy-") {
        Some(rest) => (true, rest),
        None => (false, name),
    };
    let n = src.n.unwrap_or(0);
    let mut desc = if base == "random-flocking" {
        let Some(p) = src.p else {
            return usage("random-flocking needs --p");
        };
        TopologyDescriptor::random_flocking(n, p, src.seed.unwrap_or(0))
    } else {
        let kind: TopologyKind = match base.parse() {
            Ok(k) => k,
            Err(_) => return usage(format!("unknown family '{name}'")),
        };
        if src.p.is_some() || src.seed.is_some() {
            return usage("--p and --seed only apply to random-flocking");
        }
        let mut d = TopologyDescriptor::new(kind, n);
        if kind == TopologyKind::Flocking {
            let Some(list) = src.edges.as_deref() else {
                return usage("flocking needs --edges (or use random-flocking)");
            };
            d.edges = Some(parse_edges(list)?);
        }
        d
    };
    if src.edges.is_some() && desc.edges.is_none() {
        return usage("--edges only applies to the flocking family");
    }
    desc.lazy = lazy;
    desc.self_loops = src.self_loops;
    Ok(desc)
}

fn check_single_source(src: &Source) -> Result<(), Failure> {
    let given = [src.family.is_some(), src.descriptor.is_some(), src.matrix_file.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    if given != 1 {
        return usage("give exactly one of --family, --descriptor, --matrix-file");
    }
    if src.family.is_none() && (src.n.is_some() || src.p.is_some() || src.seed.is_some() || src.edges.is_some()) {
        return usage("--n, --p, --seed and --edges only apply with --family");
    }
    Ok(())
}

/// Descriptor for sweep-style commands, which take the family but not `--n`.
pub fn sweep_family(src: &Source) -> Result<TopologyDescriptor, Failure> {
    if src.matrix_file.is_some() {
        return usage("sweeps need --family or --descriptor, not --matrix-file");
    }
    if src.family.is_some() && src.descriptor.is_some() {
        return usage("give only one of --family, --descriptor");
    }
    if src.n.is_some() {
        return usage("--n conflicts with --ns");
    }
    match &src.descriptor {
        Some(line) => Ok(line.parse()?),
        None => family_descriptor(src),
    }
}

/// Resolves a single network instance.
pub fn load(src: &Source) -> Result<(StochasticMatrix, InputInfo), Failure> {
    check_single_source(src)?;
    if let Some(path) = &src.matrix_file {
        let a = read_stochastic(path)?;
        let info = InputInfo {
            source: "matrix_file",
            descriptor: None,
            path: Some(path.display().to_string()),
        };
        return Ok((a, info));
    }
    let (desc, source) = match &src.descriptor {
        Some(line) => (line.parse::<TopologyDescriptor>()?, "descriptor"),
        None => {
            if src.n.is_none() {
                return usage("--family needs --n");
            }
            (family_descriptor(src)?, "family")
        }
    };
    let a = generate(&desc)?;
    let info = InputInfo {
        source,
        descriptor: Some(desc.to_string()),
        path: None,
    };
    Ok((a, info))
}
