//! CSV tables and `.classes` catalog sidecars.
//!
//! Table layout: header `id,label,f0,...,f{D-1}`, one sample per line, label
//! empty for unlabelled samples. Floats are written with the shortest
//! representation that parses back to the same bits.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::{ClassCatalog, DataTable, Sample};
use crate::{Error, Result};

fn sidecar_path(table_path: &Path) -> PathBuf {
    table_path.with_extension("classes")
}

pub fn read_catalog(path: &Path) -> Result<ClassCatalog> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let names = first.trim_end_matches(['\n', '\r']).split(',');
    ClassCatalog::new(names).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        line: 1,
        message: e.to_string(),
    })
}

pub fn write_catalog(path: &Path, catalog: &ClassCatalog) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "{}", catalog.names().join(",")).map_err(|e| Error::io(path, e))
}

/// Reads a table, taking the catalog from the `.classes` sidecar next to it
/// when present and falling back to the nine histology classes otherwise.
pub fn read_table(path: &Path) -> Result<DataTable> {
    let sidecar = sidecar_path(path);
    let catalog = if sidecar.exists() {
        read_catalog(&sidecar)?
    } else {
        ClassCatalog::histology()
    };
    read_table_with_catalog(path, catalog)
}

pub fn read_table_with_catalog(path: &Path, catalog: ClassCatalog) -> Result<DataTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_table(file, &path.display().to_string(), catalog)
}

/// Writes `table` to `path` and its catalog to the sidecar.
pub fn write_table(path: &Path, table: &DataTable) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    format_table(file, table).map_err(|e| Error::io(path, e))?;
    write_catalog(&sidecar_path(path), table.catalog())
}

pub(crate) fn format_table<W: Write>(out: W, table: &DataTable) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..table.dim()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for s in table.samples() {
        let mut row = Vec::with_capacity(table.dim() + 2);
        row.push(s.id.to_string());
        row.push(
            s.label
                .and_then(|l| table.catalog().name(l))
                .unwrap_or("")
                .to_string(),
        );
        row.extend(s.features.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

pub(crate) fn parse_table<R: Read>(
    input: R,
    source_name: &str,
    catalog: ClassCatalog,
) -> Result<DataTable> {
    let parse_err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let dim = header.len().saturating_sub(2);
    let header_ok = dim >= 1
        && &header[0] == "id"
        && &header[1] == "label"
        && (0..dim).all(|i| header[i + 2] == *format!("f{i}"));
    if !header_ok {
        return Err(parse_err(
            1,
            "header must be `id,label,f0,...,f{D-1}` with D >= 1".into(),
        ));
    }

    let mut samples = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != dim + 2 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", dim + 2, record.len()),
            ));
        }
        let id: u64 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid sample id {:?}", &record[0])))?;
        let label = match &record[1] {
            "" => None,
            name => Some(
                catalog
                    .index_of(name)
                    .ok_or_else(|| parse_err(line, format!("unknown class {name:?}")))?,
            ),
        };
        let features = (0..dim)
            .map(|i| {
                let raw = &record[i + 2];
                raw.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(line, format!("invalid feature f{i} {raw:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(Sample::new(id, features, label));
    }
    DataTable::new(catalog, dim, samples).map_err(|e| parse_err(0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<DataTable> {
        parse_table(text.as_bytes(), "mem", ClassCatalog::histology())
    }

    #[test]
    fn parses_named_label_by_catalog_order() {
        let t = parse("id,label,f0,f1\n7,TUM,0.1,0.2\n").unwrap();
        assert_eq!(t.samples()[0], Sample::new(7, vec![0.1, 0.2], Some(8)));
    }

    #[test]
    fn empty_label_is_unlabelled() {
        let t = parse("id,label,f0\n1,,3.5\n2,ADI,-1\n").unwrap();
        assert_eq!(t.samples()[0].label, None);
        assert_eq!(t.samples()[1].label, Some(0));
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("id,label,f0,f1\n1,ADI,0,0\n2,XYZ,0.1,0.2\n", 3),
            ("id,label,f0,f1\n1,ADI,0\n", 2),
            ("id,label,f0,f1\n1,ADI,0,abc\n", 2),
            ("id,label,f0,f1\n1,ADI,0,NaN\n", 2),
            ("id,label,f0,f1\nx,ADI,0,1\n", 2),
            ("id,lbl,f0\n", 1),
            ("id,label\n", 1),
        ];
        for (text, want) in cases {
            match parse(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip_three_samples() {
        let cat = ClassCatalog::new(["a", "b"]).unwrap();
        let table = DataTable::new(
            cat.clone(),
            2,
            vec![
                Sample::new(0, vec![0.1, -2.5e-7], Some(1)),
                Sample::new(5, vec![1.0 / 3.0, 1e300], None),
                Sample::new(9, vec![0.0, -0.0], Some(0)),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        format_table(&mut buf, &table).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,label,f0,f1\n0,b,"));
        assert!(text.contains("\n5,,"));
        let back = parse_table(text.as_bytes(), "mem", cat).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn file_round_trip_uses_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let cat = ClassCatalog::new(["x", "y", "z"]).unwrap();
        let table = DataTable::new(cat, 1, vec![Sample::new(1, vec![2.0], Some(2))]).unwrap();
        write_table(&path, &table).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("t.classes")).unwrap(),
            "x,y,z\n"
        );
        assert_eq!(read_table(&path).unwrap(), table);
    }
}
