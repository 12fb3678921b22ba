use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use tinydeploy::container::{StoredTensor, TensorData, TensorFile};
use tinydeploy::detect::{
    decode_fomo, decode_ssd, evaluate_map, generate_anchors, nms, read_records, AnchorSpec, Detection, FomoGrid, GroundTruth,
    ImageDetection, MapReport, Record,
};
use tinydeploy::exec::{quantize_input, run_fakequant, run_float, run_int8};
use tinydeploy::graph::model_file::load_model;
use tinydeploy::graph::{count_macs, count_params, infer_shapes, Graph};
use tinydeploy::perfmodel::{
    estimate_battery_days, estimate_inference_energy, estimate_latency, frame_rate_hz, BatteryEstimate, DutyCycle, EnergyReport, Engine,
    PerfProfile,
};
use tinydeploy::planner::{plan_graph, MemoryPlan, Precision, KIB};
use tinydeploy::profile::{read_profile, DeviceProfile};
use tinydeploy::quant::{collect_calibration_stats, derive_qparams, quantize_graph, QuantOp, SchemePolicy};
use tinydeploy::weights::{bias_id, random_inputs, random_weights, weight_id, weights_from_file};
use tinydeploy::Error;

use crate::args::{Duty, Head};
use crate::CliError;

/// What a command produced: the report and an optional file artifact.
pub struct Outcome {
    pub report: Value,
    pub artifact: Option<Artifact>,
}

pub enum Artifact {
    Text(String),
    Tensors(TensorFile),
}

impl Outcome {
    fn report(report: Value) -> Self {
        Outcome { report, artifact: None }
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn mmac_of(graph: &Graph) -> Result<f64, Error> {
    Ok(count_macs(graph)?.total as f64 / 1e6)
}

fn shape_str(graph: &Graph) -> String {
    let s = graph.input_shape;
    format!("{}x{}x{}", s.width, s.height, s.channels)
}

pub fn analyze(model: &Path) -> Result<Outcome, CliError> {
    let graph = load_model(model)?;
    let shapes = infer_shapes(&graph).map_err(Error::from)?;
    let macs = count_macs(&graph).map_err(Error::from)?;
    let params = count_params(&graph).map_err(Error::from)?;
    let layers: Vec<Value> = graph
        .layers
        .iter()
        .zip(&shapes.layers)
        .zip(macs.per_layer.iter().zip(&params.per_layer))
        .map(|((l, s), (m, p))| {
            json!({
                "id": l.id,
                "kind": l.kind.to_string(),
                "output_hwc": s.to_string(),
                "macs": m.value,
                "params": p.value,
            })
        })
        .collect();
    let conv_like = graph.layers.iter().filter(|l| l.kind.has_weights()).count();
    Ok(Outcome::report(json!({
        "command": "analyze",
        "model": graph.name,
        "input": shape_str(&graph),
        "layers_total": graph.layers.len(),
        "weighted_layers": conv_like,
        "params": params.total,
        "macs": macs.total,
        "mmac": macs.total as f64 / 1e6,
        "params_m": params.total as f64 / 1e6,
        "layers": layers,
    })))
}

fn load_weights(graph: &Graph, path: Option<&Path>, seed: u64) -> Result<tinydeploy::weights::Weights, Error> {
    let shapes = infer_shapes(graph)?;
    match path {
        Some(p) => {
            let file = TensorFile::read(p)?;
            weights_from_file(graph, &shapes, &file).map_err(|e| Error::Schema { path: p.to_path_buf(), message: e.to_string() })
        }
        None => Ok(random_weights(graph, &shapes, seed)),
    }
}

pub fn quantize(model: &Path, weights: Option<&Path>, calib: Option<&Path>, seed: u64, calib_count: usize) -> Result<Outcome, CliError> {
    let graph = load_model(model)?;
    let w = load_weights(&graph, weights, seed)?;
    let inputs = match calib {
        Some(p) => {
            let file = TensorFile::read(p)?;
            file.tensors
                .iter()
                .map(|t| t.to_activation())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::Schema { path: p.to_path_buf(), message: e.to_string() })?
        }
        None => random_inputs(graph.input_shape, calib_count, 0.0, 1.0, seed),
    };
    let stats = collect_calibration_stats(&graph, &w, &inputs).map_err(Error::from)?;
    let qparams = derive_qparams(&stats, &SchemePolicy::default()).map_err(Error::from)?;
    let qgraph = quantize_graph(&graph, &w, &qparams).map_err(Error::from)?;

    let probe = &inputs[0];
    let float = run_float(&graph, &w, probe).map_err(Error::from)?;
    let fake = run_fakequant(&graph, &w, &qparams, probe).map_err(Error::from)?;
    let int8 = run_int8(&qgraph, &quantize_input(qgraph.input_params(), probe)).map_err(Error::from)?;
    let out_id = &graph.layers.last().expect("validated graph").id;
    let out_scale = qparams[out_id].scale;
    let (f, q, i) = (&float.output().values.data, &fake.output().values.data, &int8.output().values.data);
    let max_steps = q.iter().zip(i).map(|(a, b)| (a - b).abs() as f64 / out_scale).fold(0.0, f64::max);
    let mean_abs = f.iter().zip(q).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / f.len().max(1) as f64;

    let mut tensors = TensorFile::new();
    let mut layers = Vec::new();
    for (layer, ql) in graph.layers.iter().zip(&qgraph.layers) {
        let (op, multiplier) = match &ql.op {
            QuantOp::Linear { weight, bias, requant } => {
                let shape = w[&layer.id].shape.clone();
                tensors.push(StoredTensor { id: weight_id(&layer.id), shape, data: TensorData::I8(weight.clone()) });
                tensors.push(StoredTensor { id: bias_id(&layer.id), shape: vec![bias.len()], data: TensorData::I32(bias.clone()) });
                ("linear", Some(*requant))
            }
            QuantOp::Lut { .. } => ("lut", None),
            QuantOp::MaxPool { rescale } => ("max_pool", Some(*rescale)),
            QuantOp::AvgPool { requant } => ("avg_pool", Some(*requant)),
            QuantOp::Add { .. } => ("add", None),
            QuantOp::Concat { .. } => ("concat", None),
        };
        let qp = qparams[&layer.id];
        layers.push(json!({
            "id": layer.id,
            "op": op,
            "scale": qp.scale,
            "zero_point": qp.zero_point,
            "mantissa": multiplier.map(|m| m.mantissa),
            "shift": multiplier.map(|m| m.shift),
        }));
    }
    let weight_params: BTreeMap<&String, _> = qparams.iter().filter(|(k, _)| k.ends_with(".weight")).collect();
    Ok(Outcome {
        report: json!({
            "command": "quantize",
            "model": graph.name,
            "weights": weights.map_or("random".to_string(), |p| p.display().to_string()),
            "calibration": {
                "source": calib.map_or("random".to_string(), |p| p.display().to_string()),
                "inputs": inputs.len(),
                "seed": seed,
            },
            "input": to_value(qparams["input"]),
            "layers": layers,
            "weights_qparams": to_value(weight_params),
            "check": {
                "output": out_id,
                "output_scale": out_scale,
                "int8_vs_fakequant_max_steps": max_steps,
                "float_vs_fakequant_mean_abs": mean_abs,
            },
        }),
        artifact: Some(Artifact::Tensors(tensors)),
    })
}

#[derive(Serialize)]
struct PlanSummary<'a> {
    model: &'a str,
    profile: &'a str,
    peak_kb: f64,
    deployable: bool,
    #[serde(flatten)]
    plan: &'a MemoryPlan,
}

pub fn plan(model: &Path, profile: &Path, precision: Precision) -> Result<Outcome, CliError> {
    let graph = load_model(model)?;
    let device = read_profile(profile)?;
    let plan = plan_graph(&graph, precision, &device).map_err(Error::from)?;
    let summary = PlanSummary {
        model: &graph.name,
        profile: &device.name,
        peak_kb: plan.peak_bytes as f64 / KIB as f64,
        deployable: plan.verdict.as_ref().is_some_and(|v| v.is_deployable()),
        plan: &plan,
    };
    let mut report = to_value(&summary);
    report.as_object_mut().expect("object").insert("command".into(), json!("plan"));
    Ok(Outcome::report(report))
}

fn engine_for(device: &DeviceProfile, engine: Option<Engine>, precision: Precision) -> Result<Engine, CliError> {
    engine.or_else(|| device.default_engine(precision)).ok_or_else(|| {
        CliError::Lib(Error::from(tinydeploy::perfmodel::PerfError::InvalidProfile(format!(
            "profile `{}` has no perf entry for {precision}",
            device.name
        ))))
    })
}

fn reference_checks(device: &DeviceProfile, battery: &BatteryEstimate, radio: bool) -> Value {
    to_value(device.reference_checks(battery, radio))
}

struct Projection {
    latency_ms: f64,
    energy: EnergyReport,
    battery: Option<BatteryEstimate>,
}

fn project(device: &DeviceProfile, perf: &PerfProfile, mmac: f64, duty: &DutyCycle) -> Result<Projection, Error> {
    let latency_ms = estimate_latency(mmac, perf);
    let (energy, battery) = match &device.power {
        Some(budget) => {
            let energy = estimate_inference_energy(latency_ms, perf, budget, duty.radio_enabled);
            let battery = estimate_battery_days(budget, duty, energy.total_mj)?;
            (energy, Some(battery))
        }
        None => {
            let mj = perf.active_power_mw * latency_ms / 1000.0;
            let energy = EnergyReport {
                items: vec![tinydeploy::perfmodel::EnergyItem { component: "compute".into(), mj }],
                total_mj: mj,
                compute_source: tinydeploy::perfmodel::ComputeSource::PowerTimesLatency,
                power_latency_mj: mj,
            };
            (energy, None)
        }
    };
    Ok(Projection { latency_ms, energy, battery })
}

pub fn estimate(
    profile: &Path,
    engine: Option<Engine>,
    precision: Precision,
    model: Option<&Path>,
    mmac: Option<f64>,
    duty: &Duty,
) -> Result<Outcome, CliError> {
    let device = read_profile(profile)?;
    let engine = engine_for(&device, engine, precision)?;
    let perf = device.perf_for(engine, precision).map_err(Error::from)?;
    let (workload, source) = match (model, mmac) {
        (Some(p), _) => {
            let g = load_model(p)?;
            (mmac_of(&g)?, g.name)
        }
        (None, Some(m)) => (m, "--mmac".to_string()),
        (None, None) => match perf.calibration.as_slice() {
            [only] => (only.mmac, "calibration point".to_string()),
            _ => return Err(CliError::Usage("this profile needs --model or --mmac to fix the workload".into())),
        },
    };
    let duty_cycle = DutyCycle { inferences_per_day: duty.duty, radio_enabled: duty.radio_enabled() };
    let p = project(&device, perf, workload, &duty_cycle)?;
    let checks = p.battery.as_ref().map(|b| reference_checks(&device, b, duty_cycle.radio_enabled)).unwrap_or_else(|| json!([]));
    Ok(Outcome::report(json!({
        "command": "estimate",
        "profile": device.name,
        "engine": engine,
        "precision": precision,
        "configuration": device.selected_configuration().map(|c| c.name.clone()),
        "workload": {"mmac": workload, "source": source},
        "latency_ms": p.latency_ms,
        "frame_rate_hz": frame_rate_hz(p.latency_ms),
        "active_power_mw": perf.active_power_mw,
        "duty": to_value(duty_cycle),
        "energy": to_value(&p.energy),
        "battery": p.battery.map(to_value),
        "reference_checks": checks,
    })))
}

fn schema(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Schema { path: path.to_path_buf(), message: e.to_string() }
}

/// Groups raw-output records by the `<image>/` prefix of their ids.
fn group_by_image(file: &TensorFile) -> Vec<(String, BTreeMap<String, &StoredTensor>)> {
    let mut groups: Vec<(String, BTreeMap<String, &StoredTensor>)> = Vec::new();
    for t in &file.tensors {
        let (image, name) = t.id.rsplit_once('/').map_or(("0", t.id.as_str()), |(a, b)| (a, b));
        match groups.iter_mut().find(|(id, _)| id == image) {
            Some((_, m)) => {
                m.insert(name.to_string(), t);
            }
            None => groups.push((image.to_string(), BTreeMap::from([(name.to_string(), t)]))),
        }
    }
    groups
}

fn f64s(path: &Path, t: &StoredTensor) -> Result<Vec<f64>, Error> {
    Ok(t.as_f32().map_err(|e| schema(path, e))?.iter().map(|&v| v as f64).collect())
}

#[allow(clippy::too_many_arguments)]
pub fn detect(
    head: Head,
    raw: &Path,
    anchors: Option<&Path>,
    model: Option<&Path>,
    image_size: Option<(usize, usize)>,
    iou_thr: f64,
    score_thr: f64,
    top_k: usize,
) -> Result<Outcome, CliError> {
    let graph = model.map(load_model).transpose()?;
    let size = image_size.or_else(|| graph.as_ref().map(|g| (g.input_shape.width, g.input_shape.height)));
    let file = TensorFile::read(raw)?;
    let groups = group_by_image(&file);
    let mut records = Vec::new();
    let mut images = Vec::new();
    match head {
        Head::Ssd => {
            let anchors_path = anchors.ok_or_else(|| CliError::Usage("--head ssd requires --anchors".into()))?;
            let (w, h) = size.ok_or_else(|| CliError::Usage("--head ssd requires --image-size or --model".into()))?;
            let text = std::fs::read_to_string(anchors_path).map_err(|e| Error::io(anchors_path, e))?;
            let spec: AnchorSpec = serde_json::from_str(&text).map_err(|e| schema(anchors_path, e))?;
            let priors = generate_anchors(&spec).map_err(|e| schema(anchors_path, e))?;
            for (image, tensors) in &groups {
                let need = |n: &str| tensors.get(n).copied().ok_or_else(|| schema(raw, format!("image `{image}`: missing `{n}` tensor")));
                let boxes = f64s(raw, need("boxes")?)?;
                let scores = f64s(raw, need("scores")?)?;
                let dets = decode_ssd(&boxes, &scores, &priors, spec.variances, (w as f64, h as f64)).map_err(|e| schema(raw, e))?;
                let kept = nms(&dets, iou_thr, score_thr, top_k);
                images.push(json!({"image_id": image, "candidates": dets.len(), "detections": kept.len()}));
                records.extend(kept.iter().map(|d| record(image, d)));
            }
        }
        Head::Fomo => {
            for (image, tensors) in &groups {
                let (t, logits) = match (tensors.get("scores"), tensors.get("logits")) {
                    (Some(t), _) => (*t, false),
                    (None, Some(t)) => (*t, true),
                    _ => return Err(schema(raw, format!("image `{image}`: missing `scores` or `logits` tensor")).into()),
                };
                let &[gh, gw, c] = t.shape.as_slice() else {
                    return Err(schema(raw, format!("`{}` must be rank 3", t.id)).into());
                };
                let stride = fomo_stride(graph.as_ref(), size, gh);
                let values = f64s(raw, t)?;
                let grid =
                    if logits { FomoGrid::from_logits(gh, gw, stride, c, &values) } else { FomoGrid::new(gh, gw, stride, c, values) }
                        .map_err(|e| schema(raw, e))?;
                let mut found = decode_fomo(&grid, score_thr);
                found.sort_by(|a, b| b.detection.score.total_cmp(&a.detection.score));
                found.truncate(top_k);
                images.push(json!({"image_id": image, "grid": format!("{gh}x{gw}"), "stride": stride, "detections": found.len()}));
                records.extend(found.iter().map(|d| {
                    let mut r = record(image, &d.detection);
                    r["centroid"] = json!([d.centroid.0, d.centroid.1]);
                    r
                }));
            }
        }
    }
    let jsonl: Vec<Record> = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.as_object_mut().expect("object").remove("centroid");
            serde_json::from_value(r).expect("detection records round-trip")
        })
        .collect();
    Ok(Outcome {
        report: json!({
            "command": "detect",
            "head": match head { Head::Ssd => "ssd", Head::Fomo => "fomo" },
            "iou_thr": iou_thr,
            "score_thr": score_thr,
            "top_k": top_k,
            "images": images,
            "detections": records,
        }),
        artifact: Some(Artifact::Text(tinydeploy::detect::records_to_jsonl(&jsonl))),
    })
}

fn fomo_stride(graph: Option<&Graph>, size: Option<(usize, usize)>, gh: usize) -> usize {
    if let Some(s) = graph.and_then(|g| g.metadata.get("stride")).and_then(Value::as_u64) {
        return s as usize;
    }
    match size {
        Some((_, h)) if gh > 0 && h % gh == 0 => h / gh,
        _ => 8,
    }
}

fn record(image: &str, d: &Detection) -> Value {
    json!({"image_id": image, "class_id": d.class_id, "box": d.bbox, "score": d.score})
}

fn load_eval(detections: &Path, ground_truth: &Path, iou_thr: f64) -> Result<MapReport, Error> {
    let dets: Vec<ImageDetection> = read_records(detections)?
        .iter()
        .enumerate()
        .map(|(i, r)| r.detection(i + 1))
        .collect::<Result<_, _>>()
        .map_err(|e| schema(detections, e))?;
    let gts: Vec<GroundTruth> = read_records(ground_truth)?.iter().map(Record::ground_truth).collect();
    Ok(evaluate_map(&dets, &gts, iou_thr)?)
}

pub fn eval(detections: &Path, ground_truth: &Path, iou_thr: f64) -> Result<Outcome, CliError> {
    let report = load_eval(detections, ground_truth, iou_thr)?;
    let mut v = to_value(&report);
    v.as_object_mut().expect("object").insert("command".into(), json!("eval"));
    Ok(Outcome::report(v))
}

#[derive(Serialize)]
struct ModelRow {
    model: String,
    input: String,
    params: u64,
    mmac: f64,
}

#[derive(Serialize)]
struct SurveyRow {
    model: String,
    input: String,
    profile: String,
    precision: Precision,
    engine: Option<Engine>,
    memory_kb: f64,
    deployable: bool,
    latency_ms: Option<f64>,
    frame_rate_hz: Option<f64>,
    power_mw: Option<f64>,
    energy_mj: Option<f64>,
    battery_days: Option<u64>,
}

fn survey_pair(graph: &Graph, device: &DeviceProfile, precisions: &[Precision], duty: &DutyCycle) -> Result<Vec<SurveyRow>, Error> {
    let mmac = mmac_of(graph)?;
    let mut rows = Vec::new();
    for &precision in precisions {
        let plan = plan_graph(graph, precision, device)?;
        let deployable = plan.verdict.as_ref().is_some_and(|v| v.is_deployable());
        let base = SurveyRow {
            model: graph.name.clone(),
            input: shape_str(graph),
            profile: device.name.clone(),
            precision,
            engine: None,
            memory_kb: plan.peak_bytes as f64 / KIB as f64,
            deployable,
            latency_ms: None,
            frame_rate_hz: None,
            power_mw: None,
            energy_mj: None,
            battery_days: None,
        };
        let perfs: Vec<&PerfProfile> = device.perf.iter().filter(|p| p.precision == precision).collect();
        if !deployable || perfs.is_empty() {
            rows.push(base);
            continue;
        }
        for perf in perfs {
            let p = project(device, perf, mmac, duty)?;
            rows.push(SurveyRow {
                engine: Some(perf.engine),
                latency_ms: Some(p.latency_ms),
                frame_rate_hz: Some(frame_rate_hz(p.latency_ms)),
                power_mw: Some(perf.active_power_mw),
                energy_mj: Some(p.energy.total_mj),
                battery_days: p.battery.map(|b| b.days),
                model: base.model.clone(),
                input: base.input.clone(),
                profile: base.profile.clone(),
                ..base
            });
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
pub fn report(
    models: &[PathBuf],
    profiles: &[PathBuf],
    precisions: &[Precision],
    duty: &Duty,
    detections: Option<&Path>,
    ground_truth: Option<&Path>,
    iou_thr: f64,
) -> Result<Outcome, CliError> {
    let graphs: Vec<Graph> = models.iter().map(load_model).collect::<Result<_, _>>()?;
    let devices: Vec<DeviceProfile> = profiles.iter().map(read_profile).collect::<Result<_, _>>()?;
    let duty_cycle = DutyCycle { inferences_per_day: duty.duty, radio_enabled: duty.radio_enabled() };

    let mut pairs: BTreeMap<(String, String), Vec<SurveyRow>> = BTreeMap::new();
    type PairResult = ((String, String), Result<Vec<SurveyRow>, Error>);
    let results: Vec<PairResult> = std::thread::scope(|s| {
        let handles: Vec<_> = graphs
            .iter()
            .flat_map(|g| devices.iter().map(move |d| (g, d)))
            .map(|(g, d)| {
                let key = (g.name.clone(), d.name.clone());
                (key, s.spawn(move || survey_pair(g, d, precisions, &duty_cycle)))
            })
            .collect();
        handles.into_iter().map(|(k, h)| (k, h.join().expect("survey worker panicked"))).collect()
    });
    for (key, rows) in results {
        pairs.insert(key, rows?);
    }

    let mut model_rows: Vec<ModelRow> = graphs
        .iter()
        .map(|g| Ok(ModelRow { model: g.name.clone(), input: shape_str(g), params: count_params(g)?.total, mmac: mmac_of(g)? }))
        .collect::<Result<_, Error>>()?;
    model_rows.sort_by(|a, b| a.model.cmp(&b.model));

    let mut battery = Vec::new();
    for d in &devices {
        if let Some(budget) = &d.power {
            if let Ok(engine) = engine_for(d, None, Precision::I8) {
                let perf = d.perf_for(budget.compute_engine.unwrap_or(engine), Precision::I8).map_err(Error::from)?;
                let Some(point) = perf.calibration.first() else { continue };
                let mmac = point.mmac;
                let p = project(d, perf, mmac, &duty_cycle)?;
                let b = p.battery.expect("budget present");
                battery.push(json!({
                    "profile": d.name,
                    "engine": perf.engine,
                    "mmac": mmac,
                    "energy_mj": p.energy.total_mj,
                    "days": b.days,
                    "exact_days": b.exact_days,
                    "checks": reference_checks(d, &b, duty_cycle.radio_enabled),
                }));
            }
        }
    }
    battery.sort_by(|a, b| a["profile"].as_str().cmp(&b["profile"].as_str()));

    let evaluation = match (detections, ground_truth) {
        (Some(d), Some(g)) => Some(to_value(load_eval(d, g, iou_thr)?)),
        _ => None,
    };
    let rows: Vec<SurveyRow> = pairs.into_values().flatten().collect();
    Ok(Outcome::report(json!({
        "command": "report",
        "duty": to_value(duty_cycle),
        "models": to_value(model_rows),
        "deployments": to_value(rows),
        "battery": battery,
        "evaluation": evaluation,
    })))
}
