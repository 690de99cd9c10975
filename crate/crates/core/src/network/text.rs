//! Canonical whitespace-separated network format.
//!
//! ```text
//! # comment
//! B id x y z r [volume]
//! A i j [distance] [contact_area]
//! ```
//!
//! Ball ids may be sparse; they are remapped to dense 0-based indices and the
//! original ids are kept in [`PoreNetwork::external_ids`]. When the file has
//! no `A` records at all, arcs are derived from ball tangency.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{compute_contact_area, derive_tangency_arcs, AdjacencyArc, BallNode, PoreNetwork};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NetworkFormat {
    #[default]
    Text,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Factor applied to the min-radius disk for arcs without an explicit area.
    pub contact_factor: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            contact_factor: 1.0,
        }
    }
}

pub fn load_network(path: impl AsRef<Path>, format: NetworkFormat) -> Result<PoreNetwork> {
    load_network_with(path, format, LoadOptions::default())
}

pub fn load_network_with(
    path: impl AsRef<Path>,
    format: NetworkFormat,
    options: LoadOptions,
) -> Result<PoreNetwork> {
    match format {
        NetworkFormat::Text => read_network(BufReader::new(File::open(path)?), options),
    }
}

struct PendingArc {
    line: usize,
    i: i64,
    j: i64,
    distance: Option<f64>,
    area: Option<f64>,
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from {tok:?}"),
    })
}

pub fn read_network<R: BufRead>(reader: R, options: LoadOptions) -> Result<PoreNetwork> {
    let mut nodes = Vec::new();
    let mut external_ids = Vec::new();
    let mut index: HashMap<i64, usize> = HashMap::new();
    let mut pending = Vec::new();

    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        match toks[0] {
            "B" => {
                if !(toks.len() == 6 || toks.len() == 7) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("ball record needs 5 or 6 fields, got {}", toks.len() - 1),
                    });
                }
                let id: i64 = parse_num(toks[1], line_no, "ball id")?;
                let x = parse_num(toks[2], line_no, "x")?;
                let y = parse_num(toks[3], line_no, "y")?;
                let z = parse_num(toks[4], line_no, "z")?;
                let r = parse_num(toks[5], line_no, "radius")?;
                let mut ball = BallNode::new(nodes.len(), [x, y, z], r);
                if toks.len() == 7 {
                    ball.volume = parse_num(toks[6], line_no, "volume")?;
                }
                if index.insert(id, nodes.len()).is_some() {
                    return Err(Error::Validation(format!("duplicate ball id {id} (line {line_no})")));
                }
                nodes.push(ball);
                external_ids.push(id);
            }
            "A" => {
                if !(3..=5).contains(&toks.len()) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("arc record needs 2 to 4 fields, got {}", toks.len() - 1),
                    });
                }
                pending.push(PendingArc {
                    line: line_no,
                    i: parse_num(toks[1], line_no, "arc endpoint")?,
                    j: parse_num(toks[2], line_no, "arc endpoint")?,
                    distance: toks
                        .get(3)
                        .map(|t| parse_num(t, line_no, "distance"))
                        .transpose()?,
                    area: toks
                        .get(4)
                        .map(|t| parse_num(t, line_no, "contact area"))
                        .transpose()?,
                });
            }
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown record type {other:?}"),
                })
            }
        }
    }

    for ball in &nodes {
        if !(ball.radius > 0.0) {
            return Err(Error::Validation(format!(
                "ball {} has non-positive radius {}",
                external_ids[ball.id], ball.radius
            )));
        }
    }

    let arcs = if pending.is_empty() {
        derive_tangency_arcs(&nodes, options.contact_factor)?
    } else {
        let mut arcs = Vec::with_capacity(pending.len());
        for p in pending {
            let lookup = |id: i64| {
                index.get(&id).copied().ok_or_else(|| {
                    Error::Validation(format!(
                        "arc on line {} references unknown ball {id}",
                        p.line
                    ))
                })
            };
            let (i, j) = (lookup(p.i)?, lookup(p.j)?);
            let distance = p.distance.unwrap_or_else(|| nodes[i].distance_to(&nodes[j]));
            let contact_area = match p.area {
                Some(a) => a,
                None => compute_contact_area(nodes[i].radius, nodes[j].radius, options.contact_factor)?,
            };
            arcs.push(AdjacencyArc {
                i,
                j,
                distance,
                contact_area,
            });
        }
        arcs
    };

    PoreNetwork::with_external_ids(nodes, arcs, external_ids)
}

/// Writes the canonical form: every field explicit, shortest round-trip float
/// formatting, original ball ids.
pub fn write_network<W: Write>(net: &PoreNetwork, mut w: W) -> Result<()> {
    writeln!(w, "# ball network: {} balls, {} arcs", net.node_count(), net.arc_count())?;
    let ids = net.external_ids();
    for n in net.nodes() {
        writeln!(
            w,
            "B {} {} {} {} {} {}",
            ids[n.id], n.center[0], n.center[1], n.center[2], n.radius, n.volume
        )?;
    }
    for a in net.arcs() {
        writeln!(
            w,
            "A {} {} {} {}",
            ids[a.i], ids[a.j], a.distance, a.contact_area
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_network(net: &PoreNetwork, path: impl AsRef<Path>) -> Result<()> {
    write_network(net, BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<PoreNetwork> {
        read_network(s.as_bytes(), LoadOptions::default())
    }

    #[test]
    fn two_node_file_fills_distance() {
        let net = parse("B 0 0 0 0 1\nB 1 0 0 3 1\nA 0 1\n").unwrap();
        assert_eq!(net.arc_count(), 1);
        assert_eq!(net.arcs()[0].distance, 3.0);
        assert!((net.arcs()[0].contact_area - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn dangling_endpoint_is_rejected() {
        let err = parse("B 0 0 0 0 1\nB 1 0 0 3 1\nA 0 99\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("# header\nB 0 0 0 0 1\nB 1 0 zero 3 1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(parse("Q 1 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("B 0 0 0\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn non_positive_radius_is_rejected() {
        assert!(matches!(parse("B 0 0 0 0 0\n"), Err(Error::Validation(_))));
        assert!(matches!(parse("B 0 0 0 0 -1\n"), Err(Error::Validation(_))));
    }

    #[test]
    fn duplicate_arc_is_rejected() {
        let err = parse("B 0 0 0 0 1\nB 1 0 0 2 1\nA 0 1\nA 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn sparse_ids_are_remapped() {
        let net = parse("B 10 0 0 0 1\nB 42 0 0 2 1 7.5\nA 42 10 2 0.5\n").unwrap();
        assert_eq!(net.external_ids(), &[10, 42]);
        assert_eq!((net.arcs()[0].i, net.arcs()[0].j), (0, 1));
        assert_eq!(net.node(1).volume, 7.5);
        assert_eq!(net.arcs()[0].contact_area, 0.5);
    }

    #[test]
    fn missing_arcs_are_derived_from_tangency() {
        let net = parse("B 0 0 0 0 1\nB 1 0 0 2 1\nB 2 0 0 10 1\n").unwrap();
        assert_eq!(net.arc_count(), 1);
    }

    #[test]
    fn canonical_output_round_trips() {
        let net = parse("B 3 0.1 0.2 0.3 1.5\nB 7 0.1 0.2 3.3 1.5\nA 3 7\n").unwrap();
        let mut first = Vec::new();
        write_network(&net, &mut first).unwrap();
        let again = read_network(first.as_slice(), LoadOptions::default()).unwrap();
        let mut second = Vec::new();
        write_network(&again, &mut second).unwrap();
        assert_eq!(first, second);
    }
}
