use std::io::Cursor;
use std::path::PathBuf;

use ddsindy::ingest::{
    align, load_cases_csv, monthly_mean, parse_isdlite, read_isdlite_file, read_table, read_table_file, write_table,
    write_table_file, HourlyRecord, MonthlySeries,
};
use ddsindy::timeseries::YearMonth;
use ddsindy::TimeSeriesTable;
use proptest::prelude::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

// independently computed from the generator of the golden file
const GOLDEN: [(u32, Option<f64>); 4] = [(1, Some(-3.385422343324253)), (2, None), (3, Some(9.9)), (4, Some(10.0))];

fn check_golden(series: &MonthlySeries) {
    assert_eq!(series.start, YearMonth::new(2015, 1).unwrap());
    assert_eq!(series.len(), 4);
    for (i, (month, expected)) in GOLDEN.iter().enumerate() {
        assert_eq!(series.month(i).month, *month);
        match (series.values[i], expected) {
            (Some(got), Some(want)) => assert!((got - want).abs() <= 1e-12, "month {month}: {got} vs {want}"),
            (None, None) => {}
            (got, want) => panic!("month {month}: {got:?} vs {want:?}"),
        }
    }
    assert!((series.coverage[0] - 734.0 / 744.0).abs() < 1e-15);
    assert!((series.coverage[1] - 201.0 / 672.0).abs() < 1e-15);
    assert_eq!(series.coverage[2], 0.5);
    assert_eq!(series.coverage[3], 1.0);
}

#[test]
fn golden_isd_file_parses_to_known_means() {
    let parsed = read_isdlite_file(&data("isd_sample.txt")).unwrap();
    assert_eq!(parsed.records.len(), 2508);
    assert_eq!(parsed.malformed.iter().map(|m| m.0).collect::<Vec<_>>(), vec![470, 471]);
    let sample = parsed.records.iter().find(|r| (r.month, r.day, r.hour) == (1, 15, 6)).unwrap();
    assert_eq!(sample.air_temp, Some(-12.3));
    assert_eq!(parsed.records.iter().filter(|r| r.air_temp.is_none()).count(), 10 + 672 - 201);
    check_golden(&monthly_mean(&parsed.records, 0.5).unwrap());
}

#[test]
fn gzip_variant_is_identical() {
    let plain = read_isdlite_file(&data("isd_sample.txt")).unwrap();
    let gz = read_isdlite_file(&data("isd_sample.txt.gz")).unwrap();
    assert_eq!(plain, gz);
    check_golden(&monthly_mean(&gz.records, 0.5).unwrap());
}

#[test]
fn coverage_floor_is_configurable() {
    let parsed = read_isdlite_file(&data("isd_sample.txt")).unwrap();
    let loose = monthly_mean(&parsed.records, 0.25).unwrap();
    assert!((loose.values[1].unwrap() - 2.4701492537313468).abs() < 1e-12);
    let strict = monthly_mean(&parsed.records, 0.6).unwrap();
    assert_eq!(strict.values[2], None);
}

#[test]
fn well_formed_neighbours_of_malformed_lines_survive() {
    let text = "2011 01 15 05   10\nbroken\n2011 01 15 bad 5\n2011 01 15 06 -0123\n";
    let parsed = parse_isdlite(Cursor::new(text)).unwrap();
    assert_eq!(parsed.records.len(), 2);
    assert_eq!(parsed.records[1], HourlyRecord { year: 2011, month: 1, day: 15, hour: 6, air_temp: Some(-12.3) });
    assert_eq!(parsed.malformed.len(), 2);
}

#[test]
fn mostly_malformed_input_is_a_format_error() {
    let text = "2011 01 15 05   10\nbroken\nalso broken\n";
    assert!(matches!(parse_isdlite(Cursor::new(text)), Err(ddsindy::Error::Format { .. })));
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(read_isdlite_file(&data("nope.txt")), Err(ddsindy::Error::Io(_))));
}

#[test]
fn case_csv_examples() {
    let s = load_cases_csv(Cursor::new("date,cases\n2011-01,0\n2011-02,3\n")).unwrap();
    assert_eq!(s.start, YearMonth::new(2011, 1).unwrap());
    assert_eq!(s.values, vec![Some(0.0), Some(3.0)]);
    let s = load_cases_csv(Cursor::new("date,cases\n2011-01,2\n2011-03,1\n")).unwrap();
    assert_eq!(s.values, vec![Some(2.0), None, Some(1.0)]);
    match load_cases_csv(Cursor::new("date,cases\n2011-03,0\n2011-04,-1\n")) {
        Err(ddsindy::Error::Format { line, .. }) => assert_eq!(line, Some(3)),
        other => panic!("{other:?}"),
    }
    assert!(load_cases_csv(Cursor::new("date,cases\n2011-03,0\n2011-03,1\n")).is_err());
    assert!(load_cases_csv(Cursor::new("date,cases\n2011-03,two\n")).is_err());
    assert!(load_cases_csv(Cursor::new("month,cases\n2011-03,2\n")).is_err());
}

fn series(start: (i32, u32), values: Vec<Option<f64>>) -> MonthlySeries {
    let coverage = values.iter().map(|v| if v.is_some() { 1.0 } else { 0.0 }).collect();
    MonthlySeries { start: YearMonth::new(start.0, start.1).unwrap(), values, coverage }
}

#[test]
fn alignment_examples() {
    let t = series((2010, 1), (0..156).map(|i| Some(i as f64)).collect());
    let c = series((2011, 1), (0..144).map(|i| Some(i as f64 * 2.0)).collect());
    let table = align(&[("C".into(), c.clone()), ("T".into(), t)]).unwrap();
    assert_eq!(table.len(), 144);
    assert_eq!(table.start_month(), Some(YearMonth::new(2011, 1).unwrap()));
    assert_eq!(table.column("T").unwrap()[0], 12.0);

    // one gap in T mid-2015: the longer side (after) wins
    let mut values: Vec<Option<f64>> = (0..144).map(|i| Some(i as f64)).collect();
    values[53] = None;
    let table = align(&[("C".into(), c.clone()), ("T".into(), series((2011, 1), values))]).unwrap();
    assert_eq!(table.len(), 144 - 54);
    assert_eq!(table.start_month(), Some(YearMonth::new(2015, 7).unwrap()));

    let disjoint = series((2030, 1), (0..50).map(|i| Some(i as f64)).collect());
    assert!(matches!(align(&[("C".into(), c), ("T".into(), disjoint)]), Err(ddsindy::Error::InsufficientData(_))));
}

#[test]
fn table_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let table = TimeSeriesTable::monthly(
        vec![("C", vec![1.0, 0.1 + 0.2, 1e-300]), ("T", vec![-0.0, f64::MAX, 2.5e-8])],
        YearMonth::new(2019, 11).unwrap(),
    )
    .unwrap();
    write_table_file(&table, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("t,C,T\n2019-11,"));
    assert!(text.contains("\n2020-01,"));
    assert_eq!(read_table_file(&path).unwrap(), table);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e6f64..1e6]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn serialize_then_ingest_is_exact(
        columns in proptest::collection::vec(proptest::collection::vec(finite(), 12), 1..5),
        year in 1900i32..2100, month in 1u32..=12, calendar in proptest::bool::ANY,
        t0 in -100.0f64..100.0, dt in 0.01f64..10.0,
    ) {
        let named: Vec<(String, Vec<f64>)> = columns.into_iter().enumerate().map(|(i, v)| (format!("c{i}"), v)).collect();
        let table = if calendar {
            TimeSeriesTable::monthly(named, YearMonth::new(year, month).unwrap()).unwrap()
        } else {
            TimeSeriesTable::new(named, t0, dt).unwrap()
        };
        let mut buffer = Vec::new();
        write_table(&table, &mut buffer).unwrap();
        let back = read_table(Cursor::new(&buffer)).unwrap();
        for (a, b) in back.columns().iter().zip(table.columns()) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        if calendar {
            prop_assert_eq!(back, table);
        } else {
            prop_assert_eq!(back.len(), table.len());
            prop_assert_eq!(back.t0(), table.t0());
        }
    }

    #[test]
    fn monthly_means_ignore_record_order(
        temps in proptest::collection::vec(proptest::option::weighted(0.9, -400i32..400), 24 * 60),
        shuffle in any::<u64>(),
    ) {
        let records: Vec<HourlyRecord> = temps
            .iter()
            .enumerate()
            .map(|(i, t)| HourlyRecord {
                year: 2016,
                month: 1 + (i / (24 * 30)) as u32,
                day: 1 + ((i / 24) % 29) as u32,
                hour: (i % 24) as u32,
                air_temp: t.map(|v| v as f64 / 10.0),
            })
            .collect();
        let mut permuted = records.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(shuffle);
        rand::seq::SliceRandom::shuffle(permuted.as_mut_slice(), &mut rng);
        let a = monthly_mean(&records, 0.0);
        let b = monthly_mean(&permuted, 0.0);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "order changed the outcome"),
        }
    }

    #[test]
    fn aligned_tables_have_no_gaps(
        a in proptest::collection::vec(proptest::option::weighted(0.97, 0.0f64..100.0), 30..120),
        b in proptest::collection::vec(proptest::option::weighted(0.97, 0.0f64..100.0), 30..120),
        offset in 0u32..12,
    ) {
        let sa = series((2010, 1), a);
        let sb = series((2010, 1 + offset), b);
        if let Ok(table) = align(&[("A".into(), sa.clone()), ("B".into(), sb.clone())]) {
            prop_assert!(table.len() >= 24);
            for i in 0..table.len() {
                let month = table.month_of(i).unwrap();
                prop_assert_eq!(Some(table.column("A").unwrap()[i]), sa.get(month));
                prop_assert_eq!(Some(table.column("B").unwrap()[i]), sb.get(month));
            }
        }
    }
}
