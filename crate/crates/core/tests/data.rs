mod common;

use sdcda::data::{self, Domain, DomainDataset, DomainShift, Generator, Manifest, MatrixFormat, ScenarioSpec, Setting, SyntheticSpec};
use sdcda::{Error, Tensor};

fn nearest_centroid_accuracy(train: &DomainDataset, test: &DomainDataset) -> f64 {
    let k = train.classes.unwrap();
    let dim = train.features.row_len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    let labels = train.labels.as_ref().unwrap();
    for (i, &y) in labels.iter().enumerate() {
        for (s, v) in sums[y].iter_mut().zip(train.features.row(i)) {
            *s += v;
        }
        counts[y] += 1;
    }
    let centroids: Vec<Vec<f64>> =
        sums.iter().zip(&counts).map(|(s, &c)| s.iter().map(|v| v / c as f64).collect()).collect();
    let test_labels = test.labels.as_ref().unwrap();
    let mut hits = 0;
    for (i, &y) in test_labels.iter().enumerate() {
        let x = test.features.row(i);
        let dist = |c: &Vec<f64>| c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let pred = (0..k).min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b]))).unwrap();
        hits += usize::from(pred == y);
    }
    hits as f64 / test_labels.len() as f64
}

/// A source-trained classifier loses accuracy on the shifted target.
#[test]
fn default_shift_opens_a_transfer_gap() {
    let mut src_acc = 0.0;
    let mut tgt_acc = 0.0;
    for seed in 0..5 {
        let spec = SyntheticSpec { classes: 2, samples_per_class: 250, seed, ..SyntheticSpec::default() };
        let (s, t) = data::synth_domains(&spec).unwrap();
        src_acc += nearest_centroid_accuracy(&s, &s);
        tgt_acc += nearest_centroid_accuracy(&s, &t);
    }
    assert!(tgt_acc < src_acc, "target {tgt_acc} vs source {src_acc}");
}

#[test]
fn synthetic_generation_is_seeded() {
    let spec = SyntheticSpec { samples_per_class: 20, ..SyntheticSpec::default() };
    let (a, b) = data::synth_domains(&spec).unwrap();
    let (c, d) = data::synth_domains(&spec).unwrap();
    assert_eq!(a.digest(), c.digest());
    assert_eq!(b.digest(), d.digest());
    assert_eq!(a.domain, Domain::Source);
    assert_eq!(b.domain, Domain::Target);
    assert_eq!(a.class_counts(), vec![20; 4]);
    let other = data::synth_domains(&SyntheticSpec { seed: 1, ..spec }).unwrap().0;
    assert_ne!(a.digest(), other.digest());
}

#[test]
fn two_moons_needs_two_classes() {
    let spec = SyntheticSpec { generator: Generator::TwoMoons, classes: 3, ..SyntheticSpec::default() };
    assert!(matches!(data::synth_domains(&spec), Err(Error::Config(_))));
    let spec = SyntheticSpec { generator: Generator::TwoMoons, classes: 2, samples_per_class: 30, ..SyntheticSpec::default() };
    let (s, t) = data::synth_domains(&spec).unwrap();
    assert_eq!(s.len(), 60);
    assert_eq!(t.len(), 60);
}

#[test]
fn shift_rotates_then_translates_the_plane() {
    let shift = DomainShift { rotation: std::f64::consts::FRAC_PI_2, translation: vec![1.0, 0.0], scale: vec![] };
    let mut x = vec![1.0, 0.0, 5.0];
    shift.apply(&mut x);
    assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    assert_eq!(x[2], 5.0);
    assert!(DomainShift::none().is_identity());
}

#[test]
fn i2i_ratios_reverse_on_the_target() {
    let spec = ScenarioSpec::standard(Setting::I2I, 4, 0);
    assert_eq!(spec.source_ratios, vec![1.0, 0.1, 0.05, 0.05]);
    assert_eq!(spec.target_ratios, vec![0.05, 0.05, 0.1, 1.0]);
    let b2i = ScenarioSpec::standard(Setting::B2I, 4, 0);
    assert_eq!(b2i.source_ratios, vec![1.0; 4]);
    let i2b = ScenarioSpec::standard(Setting::I2B, 4, 0);
    assert_eq!(i2b.target_ratios, vec![1.0; 4]);
}

#[test]
fn keep_counts_round_half_up() {
    assert_eq!(data::keep_count(0.1, 1000), 100);
    assert_eq!(data::keep_count(0.05, 30), 2);
    assert_eq!(data::keep_count(0.25, 10), 3);
    assert_eq!(data::keep_count(1.0, 7), 7);
}

#[test]
fn settings_parse_and_print() {
    for s in Setting::ALL {
        assert_eq!(s.to_string().parse::<Setting>().unwrap(), s);
    }
    assert!("x2y".parse::<Setting>().is_err());
}

fn sample(labeled: bool) -> DomainDataset {
    let f = Tensor::new(vec![4, 3], (0..12).map(|v| v as f64 * 0.5 - 1.0).collect()).unwrap();
    if labeled {
        DomainDataset::labeled(f, vec![0, 2, 1, 2], 3, Domain::Target).unwrap()
    } else {
        DomainDataset::unlabeled(f, Domain::Source)
    }
}

#[test]
fn csv_and_binary_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for labeled in [true, false] {
        let ds = sample(labeled);
        let csv = dir.path().join(format!("d{labeled}.csv"));
        data::save_csv(&ds, &csv).unwrap();
        assert_eq!(data::load_matrix(&csv, MatrixFormat::Csv).unwrap(), ds);
        let bin = dir.path().join(format!("d{labeled}.bin"));
        data::save_binary(&ds, &bin).unwrap();
        assert_eq!(data::load_matrix(&bin, MatrixFormat::Binary).unwrap(), ds);
    }
}

#[test]
fn image_rows_gain_a_channel() {
    let m = Manifest { shape: Some(vec![2, 3]), ..Manifest::default() };
    let ds = data::parse_csv("1,2,3,4,5,6\n6,5,4,3,2,1\n", &m).unwrap();
    assert_eq!(ds.features.shape(), &[2, 1, 2, 3]);
}

#[test]
fn csv_labels_are_one_based() {
    let m = Manifest { label_column: true, class_count: Some(2), ..Manifest::default() };
    let ds = data::parse_csv("0.5,1\n0.1,2\n", &m).unwrap();
    assert_eq!(ds.labels, Some(vec![0, 1]));
    let err = data::parse_csv("0.5,1\n0.1,3\n", &m).unwrap_err();
    assert!(err.to_string().contains("row 2"), "{err}");
    assert!(data::parse_csv("0.5,0\n", &m).is_err());
}

#[test]
fn manifest_round_trip_and_unknown_keys() {
    let m = Manifest { shape: Some(vec![18, 18]), label_column: true, class_count: Some(10), header: true, domain: Some(Domain::Target) };
    assert_eq!(Manifest::parse(&m.render()).unwrap(), m);
    assert!(Manifest::parse("# comment\nshape=4\n").is_ok());
    assert!(Manifest::parse("colour=blue\n").is_err());
    assert!(Manifest::parse("shape=0x3\n").is_err());
}

#[test]
fn missing_file_is_an_io_error() {
    let err = data::load_matrix(std::path::Path::new("/nonexistent/x.csv"), MatrixFormat::Csv).unwrap_err();
    assert!(matches!(err, Error::Io(_)));
}

#[test]
fn class_count_table_is_one_based() {
    let t = data::count_table(&[3, 0, 5]);
    assert_eq!(t.get(&1), Some(&3));
    assert_eq!(t.get(&3), Some(&5));
}
