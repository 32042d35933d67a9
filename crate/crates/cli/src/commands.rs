use std::fs;
use std::path::{Path, PathBuf};

use roadseg::cam::{
    cam_map, image_saliency_batch, normalize_saliency, upsample_bilinear, FilterBank, GapTrainConfig, SaliencySource,
};
use roadseg::evalcost::{distant_cost, evaluate, mixed_cost, supervised_cost, CostModel, MiouMode};
use roadseg::experiment::{classifier_images, target_corpus, train_classifier, NON_ROAD_CLASS, ROAD_CLASS};
use roadseg::fusion::{weak_label_pipeline, Denominator, FusionConfig};
use roadseg::manifest::Manifest;
use roadseg::selftrain::{
    mix_ground_truth, self_train, BaselineConfig, BaselineSegmenter, SceneConfig, SelfTrainConfig,
};
use roadseg::superpixel::component_stats;
use roadseg::sweep::{run_sweep, write_iou_csv, write_sweep_csv, SweepGrid, SweepSettings};
use roadseg::{
    load_image, load_mask, read_fmap, save_image, save_mask, segment, write_fmap, ClassWeights, Execution, FeatureMaps,
    Image, LabelMap, SaliencyMap, SegmentationMask, SuperpixelConfig,
};

use crate::params::{input, invalid, output, value, InputError, Params, Spec};

pub type CmdResult = Result<(), Box<dyn std::error::Error>>;

pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    pub specs: &'static [Spec],
    pub run: fn(&mut Params, Execution) -> CmdResult,
}

pub const COMMANDS: &[Command] = &[
    Command {
        name: "synth",
        about: "Render synthetic road scenes with ground truth",
        specs: SYNTH,
        run: synth,
    },
    Command {
        name: "superpixel",
        about: "Graph-based superpixel segmentation",
        specs: SUPERPIXEL,
        run: superpixel,
    },
    Command {
        name: "train-gap",
        about: "Train the GAP classifier head on road and non-road images",
        specs: TRAIN_GAP,
        run: train_gap,
    },
    Command {
        name: "saliency",
        about: "Class activation saliency from images or external feature maps",
        specs: SALIENCY,
        run: saliency,
    },
    Command {
        name: "fuse",
        about: "Fuse saliency with superpixels into weak road masks",
        specs: FUSE,
        run: fuse,
    },
    Command {
        name: "eval",
        about: "Road IoU of predicted masks against ground truth",
        specs: EVAL,
        run: eval,
    },
    Command {
        name: "selftrain",
        about: "Iterative self-training of the baseline segmenter from weak masks",
        specs: SELFTRAIN,
        run: selftrain,
    },
    Command {
        name: "cost",
        about: "Annotation cost arithmetic",
        specs: COST,
        run: cost,
    },
    Command {
        name: "sweep",
        about: "Grid sweep over k, tau and theta",
        specs: SWEEP,
        run: sweep,
    },
];

pub fn find(name: &str) -> Option<&'static Command> {
    COMMANDS.iter().find(|c| c.name == name)
}

pub fn is_known_key(key: &str) -> bool {
    COMMANDS.iter().any(|c| c.specs.iter().any(|s| s.key == key))
}

const SYNTH: &[Spec] = &[
    output("out", "output directory"),
    value("n", Some("16"), "number of road scenes"),
    value(
        "classifier-images",
        Some("0"),
        "road and road-free scenes per class for train-gap",
    ),
    value("width", Some("128"), "scene width"),
    value("height", Some("128"), "scene height"),
    value("noise", Some("6"), "texture noise std-dev in 8-bit levels"),
    value("shadows", Some("0"), "maximum shadow patches per scene"),
    value("seed", Some("42"), "corpus seed"),
];

const SUPERPIXEL: &[Spec] = &[
    input("images", "image file or directory"),
    output("out", "output directory"),
    value("k", Some("500"), "granularity"),
    value("sigma", Some("0.8"), "Gaussian pre-smoothing"),
    value("min-size", Some("20"), "minimum component size"),
    value("seed", Some("0"), "seed (recorded only; segmentation is deterministic)"),
];

const TRAIN_GAP: &[Spec] = &[
    input("positives", "directory of road images"),
    input("negatives", "directory of road-free images"),
    output("out", "output directory"),
    value("channels", Some("64"), "filter bank channels"),
    value("stride", Some("8"), "feature stride"),
    value("filter-seed", Some("42"), "filter bank seed"),
    value("lr", Some("0.5"), "learning rate"),
    value("epochs", Some("100"), "epochs"),
    value("batch-size", Some("8"), "mini-batch size"),
    value("l2", Some("0.001"), "weight decay"),
    value("seed", Some("42"), "shuffling seed"),
];

const SALIENCY: &[Spec] = &[
    input("weights", "class weights FMAP"),
    output("out", "output directory"),
    input("images", "image file or directory (uses the random filter bank)"),
    input("features", "FMAP feature file or directory (replaces images)"),
    value("width", None, "output width when reading features"),
    value("height", None, "output height when reading features"),
    value("class", Some("1"), "class index"),
    value("channels", Some("64"), "filter bank channels"),
    value("stride", Some("8"), "feature stride"),
    value("filter-seed", Some("42"), "filter bank seed"),
];

const FUSE: &[Spec] = &[
    input("images", "image file or directory"),
    input("saliency", "saliency FMAP/PGM file or directory, matched by file stem"),
    output("out", "output directory"),
    value("k", Some("500"), "granularity"),
    value("sigma", Some("0.8"), "Gaussian pre-smoothing"),
    value("min-size", Some("20"), "minimum component size"),
    value("tau", Some("0.75"), "saliency threshold"),
    value("theta", Some("0.01"), "overlap threshold"),
    value("denominator", Some("salient-area"), "salient-area or superpixel"),
    value("seed", Some("0"), "seed"),
];

const EVAL: &[Spec] = &[
    input("pred", "predicted mask file or directory"),
    input("gt", "ground-truth mask file or directory, matched by file stem"),
    output("out", "optional output directory for iou.csv"),
    value(
        "gt-labels",
        Some("default"),
        "default, cityscapes or a map such as 7:road,*:other",
    ),
    value("miou-mode", Some("dataset"), "dataset or per-image"),
];

const SELFTRAIN: &[Spec] = &[
    input("images", "image directory"),
    input("weak", "weak mask directory, matched by file stem"),
    output("out", "output directory"),
    input("gt", "optional ground truth for evaluation"),
    input("train-gt", "optional ground truth mixed into the training masks"),
    value("gt-fraction", Some("0"), "share of training masks replaced by train-gt"),
    value("gt-labels", Some("default"), "label map for gt and train-gt"),
    value("iterations", Some("3"), "self-training rounds"),
    value("seed", Some("42"), "base seed"),
    value("miou-mode", Some("dataset"), "dataset or per-image"),
    value("pixels-per-image", Some("400"), "training pixels sampled per image"),
    value("baseline-epochs", Some("15"), "epochs per round"),
];

const COST: &[Spec] = &[
    output("out", "optional output directory for the manifest"),
    value("images", Some("2975"), "images to annotate"),
    value("gt-fraction", Some("0"), "share of images also given pixel masks"),
    value("keyword-labels", Some("2"), "keyword labels selected"),
    value("classes-checked", Some("205"), "scene classes checked"),
    value("sec-per-mask", Some("79"), "seconds per pixel mask"),
    value("sec-per-keyword-label", Some("60"), "seconds per keyword label"),
    value("sec-per-class-check", Some("10"), "seconds per class check"),
];

const SWEEP: &[Spec] = &[
    input("images", "image directory"),
    input("saliency", "saliency directory, matched by file stem"),
    input("gt", "ground-truth directory, matched by file stem"),
    output("out", "output directory"),
    value("gt-labels", Some("default"), "label map for gt"),
    value("ks", Some("100,500,1000"), "comma-separated k values"),
    value(
        "thresholds",
        Some("0.9:0.01,0.9:0.1,0.75:0.25,0.5:0.5"),
        "comma-separated tau:theta pairs",
    ),
    value("sigma", Some("0.8"), "Gaussian pre-smoothing"),
    value("min-size", Some("20"), "minimum component size"),
    value("denominator", Some("salient-area"), "salient-area or superpixel"),
    value("miou-mode", Some("dataset"), "dataset or per-image"),
    value("seed", Some("0"), "seed"),
];

const IMAGE_EXTS: &[&str] = &["png", "ppm", "pgm"];
const SALIENCY_EXTS: &[&str] = &["fmap", "pgm", "png"];

/// `(stem, path)` for a single file or every matching file in a directory,
/// sorted by stem.
fn collect(key: &str, path: &Path, exts: &[&str]) -> Result<Vec<(String, PathBuf)>, InputError> {
    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    if path.is_file() {
        return Ok(vec![(stem(path), path.to_path_buf())]);
    }
    let entries = fs::read_dir(path).map_err(|e| invalid(key, format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| invalid(key, e))?.path();
        let ext = p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
        if p.is_file() && ext.is_some_and(|e| exts.contains(&e.as_str())) {
            out.push((stem(&p), p));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(invalid(
            key,
            format!("no {} files in {}", exts.join("/"), path.display()),
        ));
    }
    Ok(out)
}

/// Looks up each stem of `keys` in `files`.
fn aligned(key: &str, stems: &[String], files: &[(String, PathBuf)]) -> Result<Vec<PathBuf>, InputError> {
    stems
        .iter()
        .map(|s| {
            files
                .iter()
                .find(|(t, _)| t == s)
                .map(|(_, p)| p.clone())
                .ok_or_else(|| invalid(key, format!("no file for `{s}`")))
        })
        .collect()
}

fn load_images(files: &[(String, PathBuf)]) -> roadseg::Result<Vec<Image>> {
    files.iter().map(|(_, p)| load_image(p)).collect()
}

fn label_map(p: &Params) -> Result<LabelMap, Box<dyn std::error::Error>> {
    Ok(match p.required("gt-labels")? {
        "default" => LabelMap::default(),
        "cityscapes" => LabelMap::cityscapes_label_ids(),
        spec => LabelMap::parse(spec).map_err(|e| invalid("gt-labels", e))?,
    })
}

fn superpixel_config(p: &Params) -> Result<SuperpixelConfig, Box<dyn std::error::Error>> {
    let cfg = SuperpixelConfig {
        k: p.parse("k")?,
        sigma: p.parse("sigma")?,
        min_size: p.parse("min-size")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn miou_mode(p: &Params) -> roadseg::Result<MiouMode> {
    MiouMode::parse(p.raw("miou-mode").unwrap_or("dataset"))
}

fn filter_bank(p: &Params) -> Result<FilterBank, Box<dyn std::error::Error>> {
    Ok(FilterBank::random(
        p.parse("channels")?,
        p.parse("stride")?,
        p.parse("filter-seed")?,
    )?)
}

/// Saliency is stored as single-channel FMAP at image resolution.
fn saliency_to_fmap(sm: &SaliencyMap) -> FeatureMaps {
    let values = sm.values().iter().map(|&v| v as f32).collect();
    FeatureMaps::new(1, sm.height(), sm.width(), values).expect("valid shape")
}

fn load_saliency(path: &Path) -> roadseg::Result<SaliencyMap> {
    let is_fmap = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("fmap"));
    if is_fmap {
        let fm = read_fmap(path)?;
        if fm.channels() != 1 {
            return Err(roadseg::Error::ShapeMismatch(format!(
                "saliency {} has {} channels, expected 1",
                path.display(),
                fm.channels()
            )));
        }
        let values = fm.values().iter().map(|&v| f64::from(v)).collect();
        SaliencyMap::new(fm.width(), fm.height(), values)
    } else {
        // 8-bit preview: gray level / 255
        let img = load_image(path)?;
        let values = (0..img.height())
            .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
            .map(|(x, y)| f64::from(img.get(x, y)[0]) / 255.0)
            .collect();
        SaliencyMap::new(img.width(), img.height(), values)
    }
}

fn saliency_preview(sm: &SaliencyMap) -> Vec<u8> {
    sm.values()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

fn write_manifest(p: &Params, dir: &Path) -> roadseg::Result<()> {
    p.manifest().write(dir.join("manifest.txt"))
}

fn synth(p: &mut Params, exec: Execution) -> CmdResult {
    let out = p.output_dir("out")?;
    let scene = SceneConfig {
        width: p.parse("width")?,
        height: p.parse("height")?,
        seed: 0,
        noise: p.parse("noise")?,
        shadows: p.parse("shadows")?,
    };
    scene.validate()?;
    let seed: u64 = p.parse("seed")?;
    let corpus = target_corpus(p.parse("n")?, &scene, seed, exec)?;
    for sub in ["images", "gt"] {
        fs::create_dir_all(out.join(sub)).map_err(|e| roadseg::Error::io(out.join(sub), e))?;
    }
    for (i, (img, gt)) in corpus.images.iter().zip(&corpus.gts).enumerate() {
        save_image(img, out.join("images").join(format!("{i:04}.png")))?;
        save_mask(gt, out.join("gt").join(format!("{i:04}.pgm")))?;
    }
    let n_cls: usize = p.parse("classifier-images")?;
    if n_cls > 0 {
        for sub in ["positives", "negatives"] {
            fs::create_dir_all(out.join(sub)).map_err(|e| roadseg::Error::io(out.join(sub), e))?;
        }
        for (i, (img, label)) in classifier_images(n_cls, &scene, seed, exec)?.iter().enumerate() {
            let sub = if *label == ROAD_CLASS { "positives" } else { "negatives" };
            save_image(img, out.join(sub).join(format!("{:04}.png", i / 2)))?;
        }
    }
    println!("wrote {} scenes to {}", corpus.images.len(), out.display());
    write_manifest(p, &out)?;
    Ok(())
}

fn superpixel(p: &mut Params, exec: Execution) -> CmdResult {
    let files = collect("images", &p.input_path("images")?, IMAGE_EXTS)?;
    let out = p.output_dir("out")?;
    let cfg = superpixel_config(p)?;
    let seed: u64 = p.parse("seed")?;
    let images = load_images(&files)?;
    let maps = exec.try_map(&images, |img| segment(img, &cfg, seed))?;
    for ((stem, _), sp) in files.iter().zip(&maps) {
        sp.save_debug_pgm(out.join(format!("{stem}.pgm")))?;
        let path = out.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(roadseg::Error::from)?;
        w.write_record(["id", "size", "x_min", "y_min", "x_max", "y_max"])
            .map_err(roadseg::Error::from)?;
        for s in component_stats(sp) {
            w.write_record(
                [
                    s.id,
                    s.size as u32,
                    s.bbox.x_min as u32,
                    s.bbox.y_min as u32,
                    s.bbox.x_max as u32,
                    s.bbox.y_max as u32,
                ]
                .map(|v| v.to_string()),
            )
            .map_err(roadseg::Error::from)?;
        }
        w.flush().map_err(|e| roadseg::Error::io(&path, e))?;
        println!("{stem}: {} components", sp.num_components());
    }
    write_manifest(p, &out)?;
    Ok(())
}

fn train_gap(p: &mut Params, exec: Execution) -> CmdResult {
    let pos = collect("positives", &p.input_path("positives")?, IMAGE_EXTS)?;
    let neg = collect("negatives", &p.input_path("negatives")?, IMAGE_EXTS)?;
    let out = p.output_dir("out")?;
    let bank = filter_bank(p)?;
    let cfg = GapTrainConfig {
        learning_rate: p.parse("lr")?,
        epochs: p.parse("epochs")?,
        batch_size: p.parse("batch-size")?,
        seed: p.parse("seed")?,
        l2: p.parse("l2")?,
    };
    cfg.validate()?;
    let mut data = Vec::with_capacity(pos.len() + neg.len());
    for (files, label) in [(&pos, ROAD_CLASS), (&neg, NON_ROAD_CLASS)] {
        for img in load_images(files)? {
            data.push((img, label));
        }
    }
    let (trained, accuracy) = train_classifier(&data, &bank, &cfg, exec)?;
    trained.weights.write(out.join("weights.fmap"))?;
    println!("training accuracy {accuracy:.4}, final loss {:.6}", trained.final_loss);
    let mut m = p.manifest();
    m.set("result.accuracy", format!("{accuracy:.6}"));
    m.set("result.final-loss", format!("{:.6}", trained.final_loss));
    m.write(out.join("manifest.txt"))?;
    Ok(())
}

fn saliency(p: &mut Params, exec: Execution) -> CmdResult {
    let weights = ClassWeights::read(p.input_path("weights")?)?;
    let out = p.output_dir("out")?;
    let class: usize = p.parse("class")?;
    let source = SaliencySource::Class(class);
    let (stems, maps): (Vec<String>, Vec<SaliencyMap>) =
        match (p.input_path_opt("images")?, p.input_path_opt("features")?) {
            (Some(images), None) => {
                let files = collect("images", &images, IMAGE_EXTS)?;
                let bank = filter_bank(p)?;
                let imgs = load_images(&files)?;
                let maps = image_saliency_batch(&imgs, &bank, &weights, source, exec)?;
                (files.into_iter().map(|(s, _)| s).collect(), maps)
            }
            (None, Some(features)) => {
                let files = collect("features", &features, &["fmap"])?;
                let (w, h): (usize, usize) = (p.parse("width")?, p.parse("height")?);
                let maps = exec.try_map(&files, |(_, path)| {
                    let fm = read_fmap(path)?;
                    upsample_bilinear(&normalize_saliency(&cam_map(&fm, &weights, class)?), w, h)
                })?;
                (files.into_iter().map(|(s, _)| s).collect(), maps)
            }
            _ => return Err(InputError("exactly one of `images` and `features` must be given".into()).into()),
        };
    for (stem, sm) in stems.iter().zip(&maps) {
        write_fmap(&saliency_to_fmap(sm), out.join(format!("{stem}.fmap")))?;
        roadseg::io::save_gray(
            sm.width(),
            sm.height(),
            &saliency_preview(sm),
            out.join(format!("{stem}.pgm")),
        )?;
    }
    println!("wrote {} saliency maps to {}", maps.len(), out.display());
    write_manifest(p, &out)?;
    Ok(())
}

fn fuse(p: &mut Params, exec: Execution) -> CmdResult {
    let files = collect("images", &p.input_path("images")?, IMAGE_EXTS)?;
    let sal_files = collect("saliency", &p.input_path("saliency")?, SALIENCY_EXTS)?;
    let stems: Vec<String> = files.iter().map(|(s, _)| s.clone()).collect();
    let sal_paths = if sal_files.len() == 1 && files.len() == 1 {
        vec![sal_files[0].1.clone()]
    } else {
        aligned("saliency", &stems, &sal_files)?
    };
    let out = p.output_dir("out")?;
    let spcfg = superpixel_config(p)?;
    let fcfg = FusionConfig {
        tau: p.parse("tau")?,
        theta: p.parse("theta")?,
        denominator: Denominator::parse(p.required("denominator")?)?,
    };
    fcfg.validate()?;
    let seed: u64 = p.parse("seed")?;
    let jobs: Vec<usize> = (0..files.len()).collect();
    let fused = exec.try_map(&jobs, |&i| {
        let img = load_image(&files[i].1)?;
        let sm = load_saliency(&sal_paths[i])?;
        weak_label_pipeline(&img, &sm, &spcfg, &fcfg, seed)
    })?;
    for (stem, f) in stems.iter().zip(&fused) {
        save_mask(&f.mask, out.join(format!("{stem}.pgm")))?;
        if let Some(w) = f.warning {
            eprintln!("warning: {stem}: {w}");
        }
    }
    println!("wrote {} masks to {}", fused.len(), out.display());
    write_manifest(p, &out)?;
    Ok(())
}

fn eval(p: &mut Params, _exec: Execution) -> CmdResult {
    let preds = collect("pred", &p.input_path("pred")?, IMAGE_EXTS)?;
    let gts = collect("gt", &p.input_path("gt")?, IMAGE_EXTS)?;
    let stems: Vec<String> = preds.iter().map(|(s, _)| s.clone()).collect();
    let gt_paths = if preds.len() == 1 && gts.len() == 1 {
        vec![gts[0].1.clone()]
    } else {
        aligned("gt", &stems, &gts)?
    };
    let lm = label_map(p)?;
    let mode = miou_mode(p)?;
    let pred_masks: Vec<SegmentationMask> = preds
        .iter()
        .map(|(_, f)| load_mask(f, &LabelMap::default()))
        .collect::<roadseg::Result<_>>()?;
    let gt_masks: Vec<SegmentationMask> = gt_paths
        .iter()
        .map(|f| load_mask(f, &lm))
        .collect::<roadseg::Result<_>>()?;
    let (counts, m) = evaluate(&pred_masks, &gt_masks, mode)?;
    println!(
        "mIOU {:.6}{}",
        m.value,
        if m.empty_union { " (empty union)" } else { "" }
    );
    if p.raw("out").is_some() {
        let out = p.output_dir("out")?;
        let file = fs::File::create(out.join("iou.csv")).map_err(|e| roadseg::Error::io(out.join("iou.csv"), e))?;
        write_iou_csv(&stems, &counts, file)?;
        let mut man = p.manifest();
        man.set("result.miou", format!("{:.6}", m.value));
        man.write(out.join("manifest.txt"))?;
    }
    Ok(())
}

fn selftrain(p: &mut Params, exec: Execution) -> CmdResult {
    let files = collect("images", &p.input_path("images")?, IMAGE_EXTS)?;
    let stems: Vec<String> = files.iter().map(|(s, _)| s.clone()).collect();
    let weak_paths = aligned("weak", &stems, &collect("weak", &p.input_path("weak")?, IMAGE_EXTS)?)?;
    let out = p.output_dir("out")?;
    let lm = label_map(p)?;
    let load_gt = |key: &str| -> Result<Option<Vec<SegmentationMask>>, Box<dyn std::error::Error>> {
        match p.input_path_opt(key)? {
            Some(dir) => {
                let paths = aligned(key, &stems, &collect(key, &dir, IMAGE_EXTS)?)?;
                Ok(Some(
                    paths
                        .iter()
                        .map(|f| load_mask(f, &lm))
                        .collect::<roadseg::Result<_>>()?,
                ))
            }
            None => Ok(None),
        }
    };
    let eval_gt = load_gt("gt")?;
    let train_gt = load_gt("train-gt")?;
    let images = load_images(&files)?;
    let mut weak: Vec<SegmentationMask> = weak_paths
        .iter()
        .map(|f| load_mask(f, &LabelMap::default()))
        .collect::<roadseg::Result<_>>()?;
    let seed: u64 = p.parse("seed")?;
    let fraction: f64 = p.parse("gt-fraction")?;
    if fraction > 0.0 {
        let gt = train_gt.ok_or_else(|| invalid("gt-fraction", "needs `train-gt`"))?;
        let mixed = mix_ground_truth(&weak, &gt, fraction, seed)?;
        println!(
            "replaced {} of {} weak masks with ground truth",
            mixed.gt_count(),
            weak.len()
        );
        weak = mixed.masks;
    }
    let segmenter = BaselineSegmenter::new(BaselineConfig {
        pixels_per_image: p.parse("pixels-per-image")?,
        epochs: p.parse("baseline-epochs")?,
        ..BaselineConfig::default()
    });
    let cfg = SelfTrainConfig {
        iterations: p.parse("iterations")?,
        seed,
        eval_gt,
        miou_mode: miou_mode(p)?,
    };
    let run = self_train(&images, &weak, &segmenter, &cfg, exec)?;
    run.write(&out)?;
    for (i, m) in run.mious().iter().enumerate() {
        match m {
            Some(v) => println!("iteration {i}: mIOU {v:.6}"),
            None => println!("iteration {i}: done"),
        }
    }
    // command parameters first, then the per-iteration records
    let recorded = Manifest::read(out.join("manifest.txt"))?;
    let mut man = p.manifest();
    for (k, v) in recorded.entries() {
        if k.starts_with("iteration.") {
            man.set(k.clone(), v);
        }
    }
    man.write(out.join("manifest.txt"))?;
    Ok(())
}

fn cost(p: &mut Params, _exec: Execution) -> CmdResult {
    let cm = CostModel {
        sec_per_mask: p.parse("sec-per-mask")?,
        sec_per_keyword_label: p.parse("sec-per-keyword-label")?,
        sec_per_class_check: p.parse("sec-per-class-check")?,
        ..CostModel::default()
    };
    cm.validate()?;
    let n: u64 = p.parse("images")?;
    let (kw, classes): (u64, u64) = (p.parse("keyword-labels")?, p.parse("classes-checked")?);
    let fraction: f64 = p.parse("gt-fraction")?;
    let full = supervised_cost(n, &cm);
    let distant = distant_cost(kw, classes, &cm);
    println!("ground truth:    {} s = {:.1} h", full.seconds, full.hours);
    println!("distant labels:  {} s = {:.1} h", distant.seconds, distant.hours);
    if fraction > 0.0 {
        let mixed = mixed_cost(n, fraction, kw, classes, &cm)?;
        println!(
            "labels + {:.0}% gt: {} s = {:.1} h",
            fraction * 100.0,
            mixed.seconds,
            mixed.hours
        );
    }
    if p.raw("out").is_some() {
        let out = p.output_dir("out")?;
        write_manifest(p, &out)?;
    }
    Ok(())
}

fn parse_pairs(s: &str) -> Result<Vec<(f64, f64)>, InputError> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (a, b) = t
                .split_once(':')
                .ok_or_else(|| invalid("thresholds", format!("{t:?} is not tau:theta")))?;
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid("thresholds", format!("{t:?}: {e}")))
            };
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

fn sweep(p: &mut Params, exec: Execution) -> CmdResult {
    let files = collect("images", &p.input_path("images")?, IMAGE_EXTS)?;
    let stems: Vec<String> = files.iter().map(|(s, _)| s.clone()).collect();
    let sal_paths = aligned(
        "saliency",
        &stems,
        &collect("saliency", &p.input_path("saliency")?, SALIENCY_EXTS)?,
    )?;
    let gt_paths = aligned("gt", &stems, &collect("gt", &p.input_path("gt")?, IMAGE_EXTS)?)?;
    let out = p.output_dir("out")?;
    let lm = label_map(p)?;
    let grid = SweepGrid::new(p.list("ks")?, parse_pairs(p.required("thresholds")?)?)?;
    let settings = SweepSettings {
        superpixel: SuperpixelConfig {
            k: grid.ks[0],
            sigma: p.parse("sigma")?,
            min_size: p.parse("min-size")?,
        },
        denominator: Denominator::parse(p.required("denominator")?)?,
        mode: miou_mode(p)?,
        seed: p.parse("seed")?,
    };
    settings.superpixel.validate()?;
    let images = load_images(&files)?;
    let saliency: Vec<SaliencyMap> = sal_paths.iter().map(|f| load_saliency(f)).collect::<Result<_, _>>()?;
    let gts: Vec<SegmentationMask> = gt_paths
        .iter()
        .map(|f| load_mask(f, &lm))
        .collect::<roadseg::Result<_>>()?;
    let rows = run_sweep(&images, &saliency, &gts, &grid, &settings, exec)?;
    let path = out.join("sweep.csv");
    write_sweep_csv(
        &rows,
        fs::File::create(&path).map_err(|e| roadseg::Error::io(&path, e))?,
    )?;
    if let Some(best) = rows.first() {
        println!(
            "{} cells; best k={} tau={} theta={} mIOU {}",
            rows.len(),
            best.k,
            best.tau,
            best.theta,
            best.miou
                .as_ref()
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|e| e.clone())
        );
    }
    write_manifest(p, &out)?;
    Ok(())
}
