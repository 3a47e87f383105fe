use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::annotate::Annotation;
use super::manifold::SingularityKind;
use super::sample::{AnnotatedCloud, SampleMode};
use crate::error::{Error, Result};
use crate::numeric::fmt17;

fn header_line(c: &AnnotatedCloud) -> String {
    format!(
        "# ambient_dim={} intrinsic_dim={} seed={} mode={}",
        c.ambient_dim(),
        c.intrinsic_dim(),
        c.seed,
        c.mode
    )
}

/// Writes the cloud as CSV: a `#` metadata line, then one row per point.
/// Annotation columns are written only for annotated clouds and left empty
/// for regular points.
pub fn write_cloud_csv<W: Write>(c: &AnnotatedCloud, mut out: W) -> Result<()> {
    writeln!(out, "{}", header_line(c))?;
    let n = c.ambient_dim();
    let d = c.intrinsic_dim();
    let mut cols: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    cols.push("piece".into());
    let has_params = c.params(0).is_some() || (c.is_empty() && c.mode != SampleMode::External);
    if has_params {
        cols.extend((1..=d).map(|k| format!("u{k}")));
    }
    if c.has_annotations() {
        cols.push("kind".into());
        cols.push("r_ambient".into());
        for prefix in ["x0", "n1", "n2"] {
            cols.extend((1..=n).map(|k| format!("{prefix}_{k}")));
        }
        cols.push("theta".into());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&cols)?;
    for i in 0..c.len() {
        let mut row: Vec<String> = c.point(i).iter().map(|v| fmt17(*v)).collect();
        row.push(c.piece_of(i).to_string());
        if let Some(u) = c.params(i) {
            row.extend(u.iter().map(|v| fmt17(*v)));
        }
        if let Some(a) = c.annotation(i) {
            if a.regular {
                row.extend(std::iter::repeat_n(String::new(), 3 + 3 * n));
            } else {
                row.push(a.kind.map(|k| k.as_str().to_string()).unwrap_or_default());
                row.push(fmt17(a.r_ambient));
                row.extend(a.x0.iter().map(|v| fmt17(*v)));
                row.extend(a.n1.iter().map(|v| fmt17(*v)));
                match &a.n2 {
                    Some(n2) => row.extend(n2.iter().map(|v| fmt17(*v))),
                    None => row.extend(std::iter::repeat_n(String::new(), n)),
                }
                row.push(a.theta.map(fmt17).unwrap_or_default());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

struct Meta {
    ambient_dim: usize,
    intrinsic_dim: usize,
    seed: u64,
    mode: SampleMode,
}

fn parse_meta(line: &str) -> Result<Meta> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("cloud CSV must start with a `# ambient_dim=… intrinsic_dim=…` line".into()))?;
    let mut ambient = None;
    let mut intrinsic = None;
    let mut seed = 0;
    let mut mode = SampleMode::External;
    for tok in body.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad metadata token `{tok}`")))?;
        let bad = |_| Error::Parse(format!("bad value in `{tok}`"));
        match k {
            "ambient_dim" => ambient = Some(v.parse::<usize>().map_err(bad)?),
            "intrinsic_dim" => intrinsic = Some(v.parse::<usize>().map_err(bad)?),
            "seed" => seed = v.parse::<u64>().map_err(bad)?,
            "mode" => mode = v.parse()?,
            _ => {}
        }
    }
    Ok(Meta {
        ambient_dim: ambient.ok_or_else(|| Error::Parse("missing ambient_dim".into()))?,
        intrinsic_dim: intrinsic.ok_or_else(|| Error::Parse("missing intrinsic_dim (external clouds must declare d)".into()))?,
        seed,
        mode,
    })
}

fn num(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("`{field}` is not a number ({what})")))
}

/// Reads a cloud written by [`write_cloud_csv`] or an external cloud with
/// only coordinate (and optionally `piece`) columns.
pub fn read_cloud_csv<R: Read>(input: R) -> Result<AnnotatedCloud> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let meta = parse_meta(&first)?;
    let n = meta.ambient_dim;
    let d = meta.intrinsic_dim;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let xs: Vec<usize> = (1..=n)
        .map(|k| col(&format!("x{k}")).ok_or_else(|| Error::Parse(format!("missing column x{k}"))))
        .collect::<Result<_>>()?;
    let piece_col = col("piece");
    let us: Option<Vec<usize>> = (1..=d).map(|k| col(&format!("u{k}"))).collect();
    let kind_col = col("kind");
    let vec_cols = |prefix: &str| -> Option<Vec<usize>> { (1..=n).map(|k| col(&format!("{prefix}_{k}"))).collect() };
    let ann_cols = match (kind_col, col("r_ambient"), vec_cols("x0"), vec_cols("n1"), vec_cols("n2"), col("theta")) {
        (Some(k), Some(r), Some(x0), Some(n1), Some(n2), Some(th)) => Some((k, r, x0, n1, n2, th)),
        _ => None,
    };

    let mut coords = Vec::new();
    let mut pieces = Vec::new();
    let mut params = Vec::new();
    let mut annotations = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        for &c in &xs {
            coords.push(num(&rec[c], "coordinate")?);
        }
        if let Some(c) = piece_col {
            pieces.push(rec[c].trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad piece id `{}`", &rec[c])))?);
        } else {
            pieces.push(0);
        }
        if let Some(us) = &us {
            for &c in us {
                params.push(num(&rec[c], "parameter")?);
            }
        }
        if let Some((k, r, x0, n1, n2, th)) = &ann_cols {
            let kind = rec[*k].trim();
            if kind.is_empty() {
                annotations.push(Annotation::unattached());
                continue;
            }
            let read = |cols: &Vec<usize>| -> Result<Vec<f64>> { cols.iter().map(|&c| num(&rec[c], "annotation")).collect() };
            let n2v = if rec[n2[0]].trim().is_empty() { None } else { Some(read(n2)?) };
            let theta = if rec[*th].trim().is_empty() { None } else { Some(num(&rec[*th], "theta")?) };
            annotations.push(Annotation {
                regular: false,
                kind: Some(SingularityKind::parse(kind)?),
                singularity: None,
                x0: read(x0)?,
                r_ambient: num(&rec[*r], "r_ambient")?,
                n1: read(n1)?,
                n2: n2v,
                theta,
            });
        }
    }
    let mut cloud = AnnotatedCloud::external(n, d, coords, Some(pieces))?;
    let params = us.map(|_| params);
    let annotations = ann_cols.map(|_| annotations);
    cloud = AnnotatedCloud::assemble(
        n,
        d,
        cloud.coords().to_vec(),
        cloud.pieces().to_vec(),
        params,
        annotations,
        meta.seed,
        meta.mode,
    );
    Ok(cloud)
}

#[derive(Serialize, Deserialize)]
struct CloudJson {
    ambient_dim: usize,
    intrinsic_dim: usize,
    seed: u64,
    mode: SampleMode,
    points: Vec<PointJson>,
}

#[derive(Serialize, Deserialize)]
struct PointJson {
    x: Vec<f64>,
    piece: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotation: Option<AnnotationJson>,
}

#[derive(Serialize, Deserialize)]
struct AnnotationJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<SingularityKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_ambient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
}

/// JSON mirror of the CSV layout.
pub fn write_cloud_json<W: Write>(c: &AnnotatedCloud, out: W) -> Result<()> {
    let points = (0..c.len())
        .map(|i| PointJson {
            x: c.point(i).to_vec(),
            piece: c.piece_of(i),
            u: c.params(i).map(|u| u.to_vec()),
            annotation: c.annotation(i).map(|a| {
                if a.regular {
                    AnnotationJson { kind: None, r_ambient: None, x0: None, n1: None, n2: None, theta: None }
                } else {
                    AnnotationJson {
                        kind: a.kind,
                        r_ambient: Some(a.r_ambient),
                        x0: Some(a.x0.clone()),
                        n1: Some(a.n1.clone()),
                        n2: a.n2.clone(),
                        theta: a.theta,
                    }
                }
            }),
        })
        .collect();
    let doc = CloudJson {
        ambient_dim: c.ambient_dim(),
        intrinsic_dim: c.intrinsic_dim(),
        seed: c.seed,
        mode: c.mode,
        points,
    };
    serde_json::to_writer_pretty(out, &doc)?;
    Ok(())
}

pub fn read_cloud_json<R: Read>(input: R) -> Result<AnnotatedCloud> {
    let doc: CloudJson = serde_json::from_reader(input)?;
    let n = doc.ambient_dim;
    let d = doc.intrinsic_dim;
    let mut coords = Vec::new();
    let mut pieces = Vec::new();
    let mut params = Vec::new();
    let mut annotations = Vec::new();
    let has_u = doc.points.first().is_some_and(|p| p.u.is_some());
    let has_a = doc.points.first().is_some_and(|p| p.annotation.is_some());
    for p in doc.points {
        if p.x.len() != n {
            return Err(Error::Parse("point with wrong number of coordinates".into()));
        }
        coords.extend(p.x);
        pieces.push(p.piece);
        if has_u {
            params.extend(p.u.ok_or_else(|| Error::Parse("parameters missing on some points".into()))?);
        }
        if has_a {
            let a = p.annotation.ok_or_else(|| Error::Parse("annotation missing on some points".into()))?;
            annotations.push(match a.kind {
                None => Annotation::unattached(),
                Some(kind) => Annotation {
                    regular: false,
                    kind: Some(kind),
                    singularity: None,
                    x0: a.x0.unwrap_or_default(),
                    r_ambient: a.r_ambient.unwrap_or(f64::INFINITY),
                    n1: a.n1.unwrap_or_default(),
                    n2: a.n2,
                    theta: a.theta,
                },
            });
        }
    }
    AnnotatedCloud::external(n, d, coords.clone(), Some(pieces.clone()))?;
    Ok(AnnotatedCloud::assemble(
        n,
        d,
        coords,
        pieces,
        has_u.then_some(params),
        has_a.then_some(annotations),
        doc.seed,
        doc.mode,
    ))
}
