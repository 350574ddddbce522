use std::fmt::Write as _;
use std::fs;

use fut_core::dataset::{DataSource, Split};
use fut_core::model::{presets, Architecture};
use fut_core::train::{fit, AdamConfig, FitConfig, LrSchedule};
use fut_core::{Error, Example64, Model};
use fut_data::*;
use image::{Rgb, RgbImage};

/// Beijing-layout CSV with `n` hourly rows; every 17th pm2.5 cell is `NA`.
fn beijing_csv(n: usize) -> String {
    let mut s = String::from("No,year,month,day,hour,pm2.5,DEWP,TEMP,PRES,cbwd,Iws,Is,Ir\n");
    for i in 0..n {
        let (day, hour) = (1 + i / 24, i % 24);
        let pm = if i % 17 == 5 { "NA".to_string() } else { format!("{}", 80 + (i * 13) % 90) };
        let t = i as f64;
        writeln!(
            s,
            "{},2010,1,{day},{hour},{pm},{:.1},{:.1},{:.1},NW,{:.2},0,{}",
            i + 1,
            -10.0 + (t / 5.0).sin() * 4.0,
            -3.0 + (t / 7.0).cos() * 5.0,
            1020.0 + (t / 11.0).sin() * 6.0,
            1.0 + (i % 9) as f64 * 0.7,
            i % 3
        )
        .unwrap();
    }
    s
}

#[test]
fn csv_to_trained_forecaster() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("beijing.csv");
    fs::write(&path, beijing_csv(240)).unwrap();
    let (table, report) = ingest_timeseries_csv(&path).unwrap();
    assert_eq!(table.len(), 240);
    assert_eq!(report.repaired.len(), (0..240).filter(|i| i % 17 == 5).count());
    assert!(report.repaired.iter().all(|r| r.columns == ["pm2.5"]));

    let prepared = prepare_series(&table, &WindowSpec::default(), &SplitFractions::default()).unwrap();
    let src = &prepared.source;
    assert_eq!((src.train.len(), src.val.len(), src.test.len()), (168 - 24, 48 - 24, 0));

    let mut template = presets::fot9();
    template.hyper.layers = 1;
    let spec = template.spec().unwrap();
    let mut model = Model::<f64>::build(&spec, 1).unwrap();
    let cfg = FitConfig::new(2, 64, 1, AdamConfig::new(LrSchedule::Constant { lr: 1e-3 }));
    let report = fit(&mut model, src, &cfg).unwrap().report;
    assert_eq!(report.epochs.len(), 2);
    assert!(report.best_val_loss.is_finite());
    assert!(report.test.is_none());
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(ingest_timeseries_csv("/nonexistent/beijing.csv"), Err(Error::Io { .. })));
}

#[test]
fn image_directory_to_examples() {
    let dir = tempfile::tempdir().unwrap();
    for (c, name) in ["tomato_blight", "apple_scab", "corn_rust"].iter().enumerate() {
        let class = dir.path().join(name);
        fs::create_dir(&class).unwrap();
        for i in 0..10u8 {
            RgbImage::from_fn(144, 144, |x, _| Rgb([(c * 80) as u8, i * 20, x as u8]))
                .save(class.join(format!("{i:02}.png")))
                .unwrap();
        }
    }
    let set = ingest_images(dir.path(), IMAGE_SIZE).unwrap();
    assert_eq!(set.classes, ["apple_scab", "corn_rust", "tomato_blight"]);
    let src = ImageSource::from_set(set, &SplitFractions::default(), 7, true).unwrap();
    assert_eq!((src.train.len(), src.val.len(), src.test.len()), (21, 6, 3));
    let train: Vec<Example64> = src.examples(Split::Train, 0, false).unwrap();
    for ex in &train {
        assert_eq!(ex.inputs["image"].dims(), &[72, 72, 3]);
        assert!(ex.inputs["image"].data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn fusion_source_trains_a_multitask_model() {
    let f = SplitFractions::default();
    let windows = LinearWindows {
        samples: 40,
        window: 6,
        features: 2,
        outputs: 2,
        noise: 0.05,
    }
    .generate(1)
    .unwrap();
    let images = QuadrantImages {
        samples: 24,
        size: 8,
        classes: 4,
        noise: 0.05,
    }
    .generate(2)
    .unwrap();
    let src = FusionSource {
        images: ImageSource::from_samples(images, &f, 3, true).unwrap(),
        windows: WindowSource::from_windows(windows, &f).unwrap(),
        seed: 4,
    };
    let spec = presets::micro(Architecture::MultiTask).spec().unwrap();
    let cfg = FitConfig::new(2, 8, 1, AdamConfig::new(LrSchedule::Constant { lr: 1e-2 }));
    let run = || {
        let mut model = Model::<f64>::build(&spec, 1).unwrap();
        fit(&mut model, &src, &cfg).unwrap().report.metrics_csv()
    };
    assert_eq!(run(), run());
}
