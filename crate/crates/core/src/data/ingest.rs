//! File formats and their readers/writers.
//!
//! Embeddings and traits travel as CSV with exact headers
//! (`user_id,e0,...` / `user_id,t0,...`); response patterns as a JSON array
//! of `{user_id, counts: {category: int}}`. Parsers report the offending
//! line or record in every error. Exported floats use the shortest
//! representation that round-trips, so export(ingest(file)) reproduces a
//! file we wrote byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::{DataError, UserDataset};
use crate::analysis::{Category, CategoryCounts, ResponsePattern};
use crate::matrix::Matrix;

fn read(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn expected_header(prefix: &str, d: usize) -> String {
    let mut h = String::from("user_id");
    for j in 0..d {
        let _ = write!(h, ",{prefix}{j}");
    }
    h
}

/// Splits CSV text into trimmed lines, rejecting empty input. Line numbers
/// in errors are 1-based positions in the file.
fn csv_lines(text: &str) -> Result<Vec<&str>, DataError> {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    if lines.iter().all(|l| l.is_empty()) {
        return Err(DataError::EmptyInput);
    }
    Ok(lines)
}

/// Parses a `user_id,<prefix>0,...` CSV into ids and a row-per-user matrix.
/// The column count is inferred from the header; every data row must match.
fn parse_wide_csv(text: &str, prefix: &str) -> Result<(Vec<String>, Matrix), DataError> {
    let lines = csv_lines(text)?;
    let header = lines[0];
    let fields: Vec<&str> = header.split(',').collect();
    let ok = fields.len() >= 2
        && fields[0] == "user_id"
        && fields[1..]
            .iter()
            .enumerate()
            .all(|(j, f)| f.strip_prefix(prefix) == Some(j.to_string().as_str()));
    if !ok {
        return Err(DataError::Header {
            expected: format!("user_id,{prefix}0,...,{prefix}{{D-1}}"),
            found: header.to_string(),
        });
    }
    let d = fields.len() - 1;

    let mut ids = Vec::new();
    let mut seen = BTreeSet::new();
    let mut values = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        if line.is_empty() && i == lines.len() - 1 {
            break;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(DataError::Ragged {
                line: lineno,
                expected: d + 1,
                found: fields.len(),
            });
        }
        let id = fields[0];
        if !super::valid_id(id) {
            return Err(DataError::BadId(id.to_string()));
        }
        if !seen.insert(id.to_string()) {
            return Err(DataError::DuplicateId {
                id: id.to_string(),
                position: lineno,
            });
        }
        for (j, f) in fields[1..].iter().enumerate() {
            let v: f64 = f.parse().unwrap_or(f64::NAN);
            if !v.is_finite() {
                return Err(DataError::Float {
                    line: lineno,
                    column: j + 2,
                    value: f.to_string(),
                });
            }
            values.push(v);
        }
        ids.push(id.to_string());
    }
    let rows = ids.len();
    Ok((ids, Matrix::from_vec(rows, d, values)))
}

pub fn parse_embeddings_csv(text: &str) -> Result<(Vec<String>, Matrix), DataError> {
    parse_wide_csv(text, "e")
}

pub fn parse_traits_csv(text: &str) -> Result<(Vec<String>, Matrix), DataError> {
    parse_wide_csv(text, "t")
}

/// Parses the patterns JSON array. Unknown categories and non-integer
/// counts are rejected with the 1-based record index; categories missing
/// from a record count as zero.
pub fn parse_patterns_json(text: &str) -> Result<Vec<ResponsePattern>, DataError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DataError::Json {
        detail: e.to_string(),
    })?;
    let records = value.as_array().ok_or_else(|| DataError::Json {
        detail: "top level must be an array of pattern records".to_string(),
    })?;
    let structure = |record: usize, detail: &str| DataError::Json {
        detail: format!("record {record}: {detail}"),
    };

    let mut out = Vec::with_capacity(records.len());
    let mut seen = BTreeSet::new();
    for (i, rec) in records.iter().enumerate() {
        let record = i + 1;
        let obj = rec
            .as_object()
            .ok_or_else(|| structure(record, "expected an object"))?;
        for key in obj.keys() {
            if key != "user_id" && key != "counts" {
                return Err(structure(record, &format!("unexpected field \"{key}\"")));
            }
        }
        let user_id = obj
            .get("user_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| structure(record, "missing string field \"user_id\""))?
            .to_string();
        if !super::valid_id(&user_id) {
            return Err(DataError::BadId(user_id));
        }
        if !seen.insert(user_id.clone()) {
            return Err(DataError::DuplicateId {
                id: user_id,
                position: record,
            });
        }
        let counts_obj = obj
            .get("counts")
            .and_then(|v| v.as_object())
            .ok_or_else(|| structure(record, "missing object field \"counts\""))?;
        let mut counts = CategoryCounts::default();
        for (key, v) in counts_obj {
            let category = Category::ALL
                .into_iter()
                .find(|c| c.as_str() == key)
                .ok_or_else(|| DataError::UnknownCategory {
                    record,
                    category: key.clone(),
                })?;
            let n = v.as_u64().ok_or_else(|| DataError::BadCount {
                record,
                category: key.clone(),
                value: v.to_string(),
            })?;
            match category {
                Category::StronglyAgree => counts.strongly_agree = n,
                Category::Agree => counts.agree = n,
                Category::Neither => counts.neither = n,
                Category::Disagree => counts.disagree = n,
                Category::StronglyDisagree => counts.strongly_disagree = n,
            }
        }
        out.push(ResponsePattern { user_id, counts });
    }
    Ok(out)
}

pub fn ingest_embeddings(path: &Path) -> Result<(Vec<String>, Matrix), DataError> {
    parse_embeddings_csv(&read(path)?)
}

pub fn ingest_traits(path: &Path) -> Result<(Vec<String>, Matrix), DataError> {
    parse_traits_csv(&read(path)?)
}

pub fn ingest_patterns(path: &Path) -> Result<Vec<ResponsePattern>, DataError> {
    parse_patterns_json(&read(path)?)
}

/// Joins parsed pieces into a validated dataset. Pattern and trait files
/// must cover exactly the users present in the embeddings: an extra id is
/// an unknown-user error, a missing one a missing-coverage error.
pub fn assemble_dataset(
    user_ids: Vec<String>,
    embeddings: Matrix,
    patterns: Option<Vec<ResponsePattern>>,
    traits: Option<(Vec<String>, Matrix)>,
) -> Result<UserDataset, DataError> {
    let mut ds = UserDataset::new(user_ids, embeddings)?;
    let index: BTreeMap<&str, usize> = ds
        .user_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    if let Some(patterns) = patterns {
        let mut slots: Vec<Option<ResponsePattern>> = vec![None; ds.n_users()];
        for p in patterns {
            let &i = index
                .get(p.user_id.as_str())
                .ok_or_else(|| DataError::UnknownUser {
                    what: "patterns",
                    id: p.user_id.clone(),
                })?;
            slots[i] = Some(p);
        }
        let mut aligned = Vec::with_capacity(ds.n_users());
        for (i, slot) in slots.into_iter().enumerate() {
            aligned.push(slot.ok_or_else(|| DataError::MissingPattern(ds.user_ids[i].clone()))?);
        }
        ds.patterns = Some(aligned);
    }

    if let Some((trait_ids, trait_rows)) = traits {
        let mut slots: Vec<Option<usize>> = vec![None; ds.n_users()];
        for (r, id) in trait_ids.iter().enumerate() {
            let &i = index
                .get(id.as_str())
                .ok_or_else(|| DataError::UnknownUser {
                    what: "traits",
                    id: id.clone(),
                })?;
            slots[i] = Some(r);
        }
        let mut aligned = Matrix::zeros(ds.n_users(), trait_rows.cols());
        for (i, slot) in slots.into_iter().enumerate() {
            let r = slot.ok_or_else(|| DataError::MissingTraits(ds.user_ids[i].clone()))?;
            aligned.row_mut(i).copy_from_slice(trait_rows.row(r));
        }
        ds.ground_truth_traits = Some(aligned);
    }

    ds.validate()?;
    Ok(ds)
}

/// Reads and joins an embeddings CSV with optional pattern and trait files.
pub fn load_dataset(
    embeddings_path: &Path,
    patterns_path: Option<&Path>,
    traits_path: Option<&Path>,
) -> Result<UserDataset, DataError> {
    let (ids, embeddings) = ingest_embeddings(embeddings_path)?;
    let patterns = patterns_path.map(ingest_patterns).transpose()?;
    let traits = traits_path.map(ingest_traits).transpose()?;
    assemble_dataset(ids, embeddings, patterns, traits)
}

fn wide_csv(prefix: &str, ids: &[String], x: &Matrix) -> String {
    let mut out = expected_header(prefix, x.cols());
    out.push('\n');
    for (id, row) in ids.iter().zip(x.iter_rows()) {
        out.push_str(id);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn embeddings_to_csv(ids: &[String], embeddings: &Matrix) -> String {
    wide_csv("e", ids, embeddings)
}

pub fn traits_to_csv(ids: &[String], traits: &Matrix) -> String {
    wide_csv("t", ids, traits)
}

pub fn patterns_to_json(patterns: &[ResponsePattern]) -> String {
    let mut s = serde_json::to_string_pretty(patterns).expect("patterns serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};

    #[test]
    fn two_user_csv_round_trip() {
        let text = "user_id,e0,e1\nu1,0.5,-1.25\nu2,3,4.75\n";
        let (ids, m) = parse_embeddings_csv(text).unwrap();
        assert_eq!(ids, vec!["u1", "u2"]);
        assert_eq!(m.rows(), 2);
        assert_eq!(m.cols(), 2);
        assert_eq!(m[(0, 1)], -1.25);
        assert_eq!(embeddings_to_csv(&ids, &m), text);
    }

    #[test]
    fn header_must_match_exactly() {
        for bad in [
            "id,e0\nu,1\n",
            "user_id,e1,e2\nu,1,2\n",
            "user_id\nu\n",
            "user_id,t0\nu,1\n",
        ] {
            assert!(
                matches!(parse_embeddings_csv(bad), Err(DataError::Header { .. })),
                "{bad:?}"
            );
        }
        assert!(matches!(
            parse_embeddings_csv(""),
            Err(DataError::EmptyInput)
        ));
    }

    #[test]
    fn ragged_and_float_errors_carry_positions() {
        let ragged = "user_id,e0,e1\nu1,1.0\n";
        assert!(matches!(
            parse_embeddings_csv(ragged),
            Err(DataError::Ragged {
                line: 2,
                expected: 3,
                found: 2
            })
        ));
        let bad_float = "user_id,e0,e1\nu1,1.0,2.0\nu2,oops,2.0\n";
        match parse_embeddings_csv(bad_float).unwrap_err() {
            DataError::Float {
                line,
                column,
                value,
            } => {
                assert_eq!((line, column), (3, 2));
                assert_eq!(value, "oops");
            }
            other => panic!("unexpected {other:?}"),
        }
        let nan = "user_id,e0\nu1,NaN\n";
        assert!(matches!(
            parse_embeddings_csv(nan),
            Err(DataError::Float { line: 2, .. })
        ));
        let dup = "user_id,e0\nu1,1\nu1,2\n";
        assert!(matches!(
            parse_embeddings_csv(dup),
            Err(DataError::DuplicateId { position: 3, .. })
        ));
    }

    #[test]
    fn crlf_is_tolerated() {
        let text = "user_id,e0\r\nu1,1.5\r\n";
        let (ids, m) = parse_embeddings_csv(text).unwrap();
        assert_eq!(ids, vec!["u1"]);
        assert_eq!(m[(0, 0)], 1.5);
    }

    #[test]
    fn patterns_json_errors_carry_record_numbers() {
        let unknown = r#"[{"user_id":"u1","counts":{"agre":3}}]"#;
        match parse_patterns_json(unknown).unwrap_err() {
            DataError::UnknownCategory { record, category } => {
                assert_eq!(record, 1);
                assert_eq!(category, "agre");
            }
            other => panic!("unexpected {other:?}"),
        }
        let fractional =
            r#"[{"user_id":"u1","counts":{"agree":1}},{"user_id":"u2","counts":{"agree":2.5}}]"#;
        match parse_patterns_json(fractional).unwrap_err() {
            DataError::BadCount {
                record, category, ..
            } => {
                assert_eq!(record, 2);
                assert_eq!(category, "agree");
            }
            other => panic!("unexpected {other:?}"),
        }
        let negative = r#"[{"user_id":"u1","counts":{"agree":-1}}]"#;
        assert!(matches!(
            parse_patterns_json(negative),
            Err(DataError::BadCount { record: 1, .. })
        ));
        let dup = r#"[{"user_id":"u1","counts":{}},{"user_id":"u1","counts":{}}]"#;
        assert!(matches!(
            parse_patterns_json(dup),
            Err(DataError::DuplicateId { position: 2, .. })
        ));
        let not_array = r#"{"user_id":"u1"}"#;
        assert!(matches!(
            parse_patterns_json(not_array),
            Err(DataError::Json { .. })
        ));
    }

    #[test]
    fn missing_categories_default_to_zero() {
        let text = r#"[{"user_id":"u1","counts":{"strongly_agree":4}}]"#;
        let patterns = parse_patterns_json(text).unwrap();
        assert_eq!(patterns[0].counts.strongly_agree, 4);
        assert_eq!(patterns[0].counts.total(), 4);
    }

    #[test]
    fn join_requires_exact_coverage() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let m = Matrix::zeros(2, 1);
        let p = |id: &str| ResponsePattern {
            user_id: id.to_string(),
            counts: CategoryCounts::default(),
        };

        let unknown = assemble_dataset(ids.clone(), m.clone(), Some(vec![p("a"), p("z")]), None);
        assert!(matches!(
            unknown,
            Err(DataError::UnknownUser {
                what: "patterns",
                ..
            })
        ));

        let missing = assemble_dataset(ids.clone(), m.clone(), Some(vec![p("a")]), None);
        match missing.unwrap_err() {
            DataError::MissingPattern(id) => assert_eq!(id, "b"),
            other => panic!("unexpected {other:?}"),
        }

        // Out-of-order inputs are realigned to embedding order.
        let ds = assemble_dataset(ids, m, Some(vec![p("b"), p("a")]), None).unwrap();
        assert_eq!(ds.patterns.unwrap()[0].user_id, "a");
    }

    #[test]
    fn synthetic_export_ingest_export_is_byte_stable() {
        let config = SynthConfig {
            n_users: 12,
            n_questions: 9,
            embed_dim: 6,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&config, 5).unwrap();
        let traits = ds.ground_truth_traits.as_ref().unwrap();
        let e_csv = embeddings_to_csv(&ds.user_ids, &ds.embeddings);
        let p_json = patterns_to_json(ds.patterns.as_ref().unwrap());
        let t_csv = traits_to_csv(&ds.user_ids, traits);

        let (ids2, emb2) = parse_embeddings_csv(&e_csv).unwrap();
        let patterns2 = parse_patterns_json(&p_json).unwrap();
        let traits2 = parse_traits_csv(&t_csv).unwrap();
        let ds2 = assemble_dataset(ids2, emb2, Some(patterns2), Some(traits2)).unwrap();

        assert_eq!(ds2, ds);
        assert_eq!(embeddings_to_csv(&ds2.user_ids, &ds2.embeddings), e_csv);
        assert_eq!(patterns_to_json(ds2.patterns.as_ref().unwrap()), p_json);
        assert_eq!(
            traits_to_csv(&ds2.user_ids, ds2.ground_truth_traits.as_ref().unwrap()),
            t_csv
        );
    }

    #[test]
    fn load_dataset_reports_missing_file_path() {
        let err = load_dataset(Path::new("/nonexistent/embeddings.csv"), None, None).unwrap_err();
        match err {
            DataError::Io { path, .. } => assert!(path.contains("embeddings.csv")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
