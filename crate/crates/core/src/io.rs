//! Template, statistics and attribute-label files.
//!
//! Templates are stored one per line as `subject_id,sample_id,v1,...,vn`
//! with every value printed to 9 significant digits.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{DistributionStats, Template};

/// Formats a value with 9 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_templates(templates: &[Template]) -> String {
    let mut out = String::new();
    for t in templates {
        out.push_str(&t.subject_id);
        out.push(',');
        out.push_str(&t.sample_id);
        for v in &t.values {
            out.push(',');
            out.push_str(&format_value(*v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_templates(text: &str, path: Option<&Path>) -> Result<Vec<Template>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.map(Path::to_path_buf),
        line,
        message,
    };
    let mut templates = Vec::new();
    let mut seen = HashSet::new();
    let mut dim: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let subject = fields.next().unwrap_or_default().trim();
        let sample = fields
            .next()
            .ok_or_else(|| err(line_no, "missing sample_id field".into()))?
            .trim();
        if subject.is_empty() || sample.is_empty() {
            return Err(err(line_no, "empty subject_id or sample_id".into()));
        }
        let values = fields
            .enumerate()
            .map(|(i, f)| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(line_no, format!("value {} is not a finite number: {f:?}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;

        match dim {
            None => {
                if values.len() < 2 {
                    return Err(err(
                        line_no,
                        format!("expected at least 2 values, found {}", values.len()),
                    ));
                }
                dim = Some(values.len());
            }
            Some(n) if n != values.len() => {
                return Err(err(
                    line_no,
                    format!("expected {n} values, found {}", values.len()),
                ));
            }
            Some(_) => {}
        }
        if !seen.insert((subject.to_owned(), sample.to_owned())) {
            return Err(err(
                line_no,
                format!("duplicate record ({subject}, {sample})"),
            ));
        }
        templates.push(Template {
            subject_id: subject.to_owned(),
            sample_id: sample.to_owned(),
            values,
        });
    }
    Ok(templates)
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<Template>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_templates(&text, Some(path))
}

pub fn save_templates(templates: &[Template], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, write_templates(templates).as_bytes())
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<DistributionStats> {
    let stats: DistributionStats = serde_json::from_str(&fs::read_to_string(path)?)?;
    stats.validate()?;
    Ok(stats)
}

pub fn save_stats(stats: &DistributionStats, path: impl AsRef<Path>) -> Result<()> {
    save_json(stats, path)
}

/// `subject_id,label` lines, label 0 or 1.
pub fn save_attributes(attributes: &BTreeMap<String, bool>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (subject, label) in attributes {
        out.push_str(&format!("{subject},{}\n", u8::from(*label)));
    }
    write_atomic(path, out.as_bytes())
}

pub fn load_attributes(path: impl AsRef<Path>) -> Result<BTreeMap<String, bool>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: &str| Error::Parse {
            path: Some(path.to_path_buf()),
            line: idx + 1,
            message: message.to_owned(),
        };
        let (subject, label) = line
            .split_once(',')
            .ok_or_else(|| parse_err("expected subject_id,label"))?;
        let label = match label.trim() {
            "0" => false,
            "1" => true,
            _ => return Err(parse_err("label must be 0 or 1")),
        };
        if out.insert(subject.trim().to_owned(), label).is_some() {
            return Err(parse_err("duplicate subject"));
        }
    }
    Ok(out)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn save_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, to_json_string(value)?.as_bytes())
}

/// Writes to a sibling temporary file, then renames over the target.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Vec<Template> {
        (0..n)
            .map(|i| {
                Template::new(
                    format!("s{}", i / 2),
                    format!("{}", i % 2),
                    vec![i as f64 * 0.1 - 0.35, 1.0 / (i as f64 + 3.0), -2.5e-7],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn round_trip_to_printed_precision() {
        let ts = sample(10);
        let back = parse_templates(&write_templates(&ts), None).unwrap();
        assert_eq!(back.len(), ts.len());
        for (a, b) in ts.iter().zip(&back) {
            assert_eq!((&a.subject_id, &a.sample_id), (&b.subject_id, &b.sample_id));
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(format_value(*x), format_value(*y));
                assert!((x - y).abs() <= 5e-9 * x.abs());
            }
        }
        // Once rounded, the representation is a fixed point.
        let again = parse_templates(&write_templates(&back), None).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn short_line_names_the_line() {
        let text = "a,0,1.0,2.0,3.0\na,1,1.0,2.0\n";
        match parse_templates(text, None) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("expected 3"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_duplicates_are_rejected() {
        assert!(matches!(
            parse_templates("a,0,1.0,x\n", None),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_templates("a,0,1.0,2.0\na,0,3.0,4.0\n", None),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_templates("a,0,1.0,inf\n", None).is_err());
        assert!(parse_templates("a\n", None).is_err());
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_templates("", None).unwrap().is_empty());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        fs::write(&p, "").unwrap();
        assert!(load_templates(&p).unwrap().is_empty());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let ts = parse_templates(&write_templates(&sample(4)), None).unwrap();
        save_templates(&ts, &p).unwrap();
        assert_eq!(load_templates(&p).unwrap(), ts);

        let stats = DistributionStats::new(vec![0.5, -0.25], vec![0.1, 0.0]).unwrap();
        let sp = dir.path().join("stats.json");
        save_stats(&stats, &sp).unwrap();
        assert_eq!(load_stats(&sp).unwrap(), stats);
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sp).unwrap()).unwrap();
        assert_eq!(json["dim"], 2);

        let mut attrs = BTreeMap::new();
        attrs.insert("s1".to_owned(), true);
        attrs.insert("s0".to_owned(), false);
        let ap = dir.path().join("attrs.csv");
        save_attributes(&attrs, &ap).unwrap();
        assert_eq!(load_attributes(&ap).unwrap(), attrs);

        // No temporary files are left behind.
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert!(names.iter().all(|n| !n.starts_with('.')), "{names:?}");
    }
}
