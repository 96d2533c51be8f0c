//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! with its wall time; the binary exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mssr_core::agents::prompts::tag_content;
use mssr_core::agents::{minimality_ablation, Decision, EpisodeConfig, EpisodeTrace, ForcedReason};
use mssr_core::backends::{DistractibleReasoner, ImageRef, OracleVision, ScriptedPerception, ScriptedReasoner, SyntheticProvider};
use mssr_core::dsl::{
    execute, parse, pretty_print, restore, snapshot, Call, Environment, Expr, Handle, HandleKind, Program, Provenance,
    StatementKind, ToolError, ToolRegistry, Value,
};
use mssr_core::geometry::{
    back_project_pixel, compose_yaw_pitch_roll, decompose_yaw_pitch_roll, default_up, fit_plane_pca,
    project_point, rotate_about_axis, CameraIntrinsics, CameraPose, GroundPlane, Mat3, Mat4, UpConvention, Vec3,
    YawPitchRoll, DEFAULT_GIMBAL_BAND_DEG,
};
use mssr_core::harness::{
    export_annotations, cited_keys, run_benchmark, AnnotationFilter, HarnessError, RuleFilter, RunConfig, RunOutput, VisionProfile,
};
use mssr_core::labels::CompassLabel;
use mssr_core::perception::{
    calibrate_frame, direction_label, reconstruct, sog_canonical_view, sog_coarse_candidates, sog_fine_candidates,
    sog_ground_direction, sog_overlay, CandidateStage, DirectionCandidateSet, GroundConfig, ViewKind,
    DEFAULT_ARROW_LENGTH,
};
use mssr_core::scene_sim::{SceneCamera, SceneObject, Shape, SyntheticScene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure!(took < budget, "took {took:.2?}, budget {budget:?}");
    Ok(())
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if let Some(u) = v.try_normalize(1e-3) {
            return u;
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
    let axis = nalgebra::Unit::new_normalize(unit(rng));
    nalgebra::Rotation3::from_axis_angle(&axis, rng.random_range(-3.1..3.1)).into_inner()
}

/// Angle between two directions from the clamped dot product.
fn angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    (a.normalize().dot(&b.normalize())).clamp(-1.0, 1.0).acos().to_degrees()
}

// 1. Geometry suite.
fn geometry_suite() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let mut worst_round_trip = 0.0f64;
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(32..1024u32), rng.random_range(32..1024u32));
        let intr = CameraIntrinsics::new(
            rng.random_range(50.0..900.0),
            rng.random_range(50.0..900.0),
            w as f64 / 2.0 + rng.random_range(-5.0..5.0),
            h as f64 / 2.0 + rng.random_range(-5.0..5.0),
            w,
            h,
        )
        .map_err(|e| e.to_string())?;
        let pose = CameraPose::new(random_rotation(&mut rng), unit(&mut rng) * rng.random_range(0.0..10.0))
            .map_err(|e| e.to_string())?;
        let (u, v, d) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64), rng.random_range(0.1..50.0));
        let p = back_project_pixel(u, v, d, &intr, &pose).map_err(|e| e.to_string())?;
        // Pinhole model written out by hand.
        let cam = Vec3::new((u - intr.cx) / intr.fx * d, (v - intr.cy) / intr.fy * d, d);
        let expected = pose.rotation * cam + pose.translation;
        worst_round_trip = worst_round_trip.max((p - expected).norm());
        let (u2, v2, d2) = project_point(&p, &intr, &pose).ok_or("projected point behind camera")?;
        worst_round_trip = worst_round_trip.max((u2 - u).abs()).max((v2 - v).abs()).max((d2 - d).abs());
    }
    ensure!(worst_round_trip < 1e-9, "back-projection round trip error {worst_round_trip:e}");

    let up = UpConvention::default();
    let mut worst_exact = 0.0f64;
    let mut worst_noisy = 0.0f64;
    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    for _ in 0..50 {
        let tilt = rng.random_range(0.0..30.0);
        let normal = rotate_about_axis(&default_up(), &unit(&mut rng).cross(&default_up()).normalize(), tilt);
        let plane = GroundPlane::new(normal, rng.random_range(-2.0..2.0)).map_err(|e| e.to_string())?;
        let u_axis = normal.cross(&Vec3::x()).try_normalize(1e-6).unwrap_or_else(|| normal.cross(&Vec3::z()).normalize());
        let v_axis = normal.cross(&u_axis);
        let origin = -normal * plane.offset;
        let sample = |rng: &mut ChaCha8Rng| origin + u_axis * rng.random_range(-3.0..3.0) + v_axis * rng.random_range(-3.0..3.0);
        let exact: Vec<Vec3> = (0..200).map(|_| sample(&mut rng)).collect();
        let fit = fit_plane_pca(&exact, &up).map_err(|e| e.to_string())?;
        worst_exact = worst_exact.max(angle_deg(&fit.normal, &normal).to_radians());
        let noisy: Vec<Vec3> = (0..500)
            .map(|_| sample(&mut rng) + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)))
            .collect();
        let fit = fit_plane_pca(&noisy, &up).map_err(|e| e.to_string())?;
        worst_noisy = worst_noisy.max(angle_deg(&fit.normal, &normal));
    }
    ensure!(worst_exact < 1e-6, "exact plane normal error {worst_exact:e} rad");
    ensure!(worst_noisy < 1.0, "noisy plane normal error {worst_noisy:.3} deg");

    let mut worst_euler = 0.0f64;
    for _ in 0..1000 {
        let ypr = YawPitchRoll {
            translation: unit(&mut rng) * rng.random_range(0.0..5.0),
            yaw: rng.random_range(-180.0..180.0),
            pitch: rng.random_range(-85.0..85.0),
            roll: rng.random_range(-180.0..180.0),
        };
        let t = compose_yaw_pitch_roll(&ypr);
        let back = decompose_yaw_pitch_roll(&t, DEFAULT_GIMBAL_BAND_DEG).map_err(|e| e.to_string())?;
        let again = compose_yaw_pitch_roll(&back);
        worst_euler = worst_euler.max((again.matrix - t.matrix).abs().max());
    }
    ensure!(worst_euler < 1e-6, "Euler re-composition error {worst_euler:e}");
    within_budget(start, Duration::from_secs(10))?;
    Ok(format!(
        "round trip {worst_round_trip:.1e}, exact normal {worst_exact:.1e} rad, noisy normal {worst_noisy:.3} deg, euler {worst_euler:.1e}"
    ))
}

/// Compass label by bearing: the clockwise angle from north, rounded to the
/// nearest label sector.
fn bearing_label(north: &Vec3, east: &Vec3, up: &Vec3, offset: &Vec3, granularity: u32) -> CompassLabel {
    let flat = offset - up * up.dot(offset);
    let bearing = flat.dot(east).atan2(flat.dot(north)).to_degrees().rem_euclid(360.0);
    let ring8 = [
        CompassLabel::North,
        CompassLabel::Northeast,
        CompassLabel::East,
        CompassLabel::Southeast,
        CompassLabel::South,
        CompassLabel::Southwest,
        CompassLabel::West,
        CompassLabel::Northwest,
    ];
    let step = 360.0 / granularity as f64;
    let sector = ((bearing / step).round() as usize) % granularity as usize;
    ring8[sector * (8 / granularity as usize)]
}

// 2. Calibration and labeling.
fn calibration_labeling() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for _ in 0..1000 {
        let axis = unit(&mut rng).cross(&default_up()).normalize();
        let normal = rotate_about_axis(&default_up(), &axis, rng.random_range(0.0..25.0));
        let ground = GroundPlane::new(normal, rng.random_range(-1.0..1.0)).map_err(|e| e.to_string())?;
        let point = |rng: &mut ChaCha8Rng| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-2.0..0.5), rng.random_range(-5.0..5.0));
        let (anchor, target) = (point(&mut rng), point(&mut rng));
        let stated = CompassLabel::ALL[rng.random_range(0..8)];
        let Ok(frame) = calibrate_frame(&anchor, &target, stated, &ground) else { continue };
        let checks = [
            (frame.north.norm() - 1.0).abs(),
            (frame.east.norm() - 1.0).abs(),
            frame.north.dot(&frame.east).abs(),
            frame.north.dot(&frame.up).abs(),
            frame.east.dot(&frame.up).abs(),
            (frame.south + frame.north).norm(),
            (frame.west + frame.east).norm(),
            (frame.up - ground.normal).norm(),
        ];
        worst = checks.iter().fold(worst, |m, &c| m.max(c));
        ensure!(
            direction_label(&frame, &anchor, &target, 8).map_err(|e| e.to_string())? == stated,
            "calibration premise {stated:?} not reproduced"
        );
        let probe = point(&mut rng);
        for granularity in [4, 8] {
            let Ok(got) = direction_label(&frame, &anchor, &probe, granularity) else { continue };
            let expected = bearing_label(&frame.north, &frame.east, &frame.up, &(probe - anchor), granularity);
            ensure!(got == expected, "granularity {granularity}: got {got:?}, bearing oracle says {expected:?}");
            compared += 1;
        }
    }
    ensure!(worst < 1e-9, "frame identity error {worst:e}");
    ensure!(compared >= 1900, "only {compared} label comparisons ran");
    within_budget(start, Duration::from_secs(5))?;
    Ok(format!("identity error {worst:.1e}, {compared} labels match the bearing oracle"))
}

fn sog_scene(facing: Vec3) -> SyntheticScene {
    let intr = CameraIntrinsics::centered(128, 128, 100.0).expect("intrinsics");
    let cameras = [Vec3::new(0.0, -1.5, -4.0), Vec3::new(3.0, -1.2, -3.0), Vec3::new(-3.5, -1.3, -2.0)]
        .into_iter()
        .map(|eye| SceneCamera {
            intrinsics: intr,
            pose: CameraPose::look_at(eye, Vec3::new(0.0, -0.3, 0.5), default_up()).expect("pose"),
        })
        .collect();
    let objects = vec![
        SceneObject {
            name: "cabinet".into(),
            shape: Shape::Box { half_extents: Vec3::new(0.3, 0.4, 0.25) },
            center: Vec3::new(0.0, -0.4, 0.0),
            facing: Some(facing),
        },
        SceneObject { name: "ball".into(), shape: Shape::Sphere { radius: 0.25 }, center: Vec3::new(1.2, -0.25, 1.0), facing: None },
    ];
    SyntheticScene::from_parts(objects, cameras, 5).expect("scene")
}

// 3. SOG bound.
fn sog_bound() -> Check {
    let start = Instant::now();
    let base = sog_scene(Vec3::z());
    let recon = reconstruct(&ImageRef::indexed(3), &SyntheticProvider::new(base.clone()), &GroundConfig::default())
        .map_err(|e| e.to_string())?;
    let query = "the facing direction of the cabinet";
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        for az in 0..360 {
            let truth = rotate_about_axis(&Vec3::z(), &default_up(), az as f64);
            let mut scene = base.clone();
            scene.objects[0].facing = Some(truth);
            let vision = OracleVision::new(scene);
            let out = sog_ground_direction(query, "cabinet", &recon, &vision, seed, DEFAULT_ARROW_LENGTH)
                .map_err(|e| format!("seed {seed} azimuth {az}: {e}"))?;
            let err = angle_deg(&out.direction, &truth);
            worst = worst.max(err);
            ensure!(err <= 11.25 + 1e-6, "seed {seed} azimuth {az}: error {err:.4} deg");
            if az % 30 == 0 {
                let again = sog_ground_direction(query, "cabinet", &recon, &vision, seed, DEFAULT_ARROW_LENGTH)
                    .map_err(|e| e.to_string())?;
                ensure!(again == out, "seed {seed} azimuth {az}: repeated run differs");
            }
        }
    }
    within_budget(start, Duration::from_secs(30))?;
    Ok(format!("1800 cases, worst error {worst:.4} deg"))
}

// 4. Canonical view on a grazing scene.
fn canonical_view() -> Check {
    let intr = CameraIntrinsics::centered(320, 240, 260.0).map_err(|e| e.to_string())?;
    let ground = GroundPlane::y_zero();
    let anchor = Vec3::new(0.4, -0.02, 6.0);
    // Eye 25 cm above the floor, looking almost along it.
    let pose = CameraPose::look_at(Vec3::new(0.0, -0.25, 0.0), anchor, default_up()).map_err(|e| e.to_string())?;
    let canonical = sog_canonical_view(&intr, &pose, &anchor, &ground).map_err(|e| e.to_string())?;
    let drift = ((canonical.center() - anchor).norm() - (pose.center() - anchor).norm()).abs();
    ensure!(drift < 1e-9, "anchor distance changed by {drift:e}");

    let mut sets: Vec<DirectionCandidateSet> = (0..4).map(|s| sog_coarse_candidates(&anchor, &ground, s)).collect();
    sets.push(sog_fine_candidates(&rotate_about_axis(&Vec3::z(), &default_up(), 30.0), &anchor, &ground));
    let mut summary = Vec::new();
    for set in &sets {
        let situated = sog_overlay(set, &intr, &pose, DEFAULT_ARROW_LENGTH, ViewKind::Situated).map_err(|e| e.to_string())?;
        let elevated = sog_overlay(set, &intr, &canonical, DEFAULT_ARROW_LENGTH, ViewKind::Canonical).map_err(|e| e.to_string())?;
        let (a, b) = (situated.min_pairwise_separation(), elevated.min_pairwise_separation());
        let stage = if set.stage == CandidateStage::Fine { "fine" } else { "coarse" };
        ensure!(b > a, "{stage} arrows: separation {a:.2} deg situated vs {b:.2} deg canonical");
        summary.push(format!("{stage} {a:.1}->{b:.1}"));
    }
    Ok(format!("distance drift {drift:.1e}; min separation (deg) {}", summary.join(", ")))
}

/// Records every registry call and answers with a fixed value per op.
#[derive(Default)]
struct RecordingRegistry {
    calls: Vec<String>,
}

impl ToolRegistry for RecordingRegistry {
    fn call(&mut self, module: &str, op: &str, args: &[Value]) -> Result<Value, ToolError> {
        self.calls.push(format!("{module}.{op}/{}", args.len()));
        Ok(Value::Number(self.calls.len() as f64))
    }
}

/// Calls a program makes, in evaluation order: arguments before the call.
fn expected_calls(program: &Program) -> Vec<String> {
    fn expr(e: &Expr, out: &mut Vec<String>) {
        match e {
            Expr::Call(c) => call(c, out),
            Expr::List(items) => items.iter().for_each(|i| expr(i, out)),
            _ => {}
        }
    }
    fn call(c: &Call, out: &mut Vec<String>) {
        c.args.iter().for_each(|a| expr(a, out));
        out.push(format!("{}.{}/{}", c.module, c.op, c.args.len()));
    }
    let mut out = Vec::new();
    for s in &program.statements {
        match &s.kind {
            StatementKind::Assign { call: c, .. } | StatementKind::Call(c) => call(c, &mut out),
            StatementKind::Emit { expr: e, .. } => expr(e, &mut out),
        }
    }
    out
}

fn kind_matrix() -> Environment {
    let prov = |op: &str| Some(Provenance { module: "perception".into(), op: op.into(), args: vec!["\"x\"".into()], turn: 2 });
    let candidates = DirectionCandidateSet {
        anchor_point: Vec3::new(0.1, -0.2, 3.0),
        up: default_up(),
        vectors: vec![Vec3::x(), Vec3::z(), -Vec3::x()],
        stage: CandidateStage::Fine,
        labels: vec!["1".into(), "2".into(), "3".into()],
    };
    let values = vec![
        Value::Number(-0.0),
        Value::Number(f64::NAN),
        Value::Number(1e-300),
        Value::Str("quote \" newline \n unicode \u{00e9}".into()),
        Value::Bool(true),
        Value::Bool(false),
        Value::Vec3(Vec3::new(1.0, f64::INFINITY, -2.5)),
        Value::Matrix(Mat4::from_fn(|r, c| (r * 4 + c) as f64 / 7.0)),
        Value::Label("northeast".into()),
        Value::Descriptors(BTreeMap::from([("forward".into(), 1.5), ("rotate_right".into(), -30.0)])),
        Value::Candidates(candidates),
        Value::Handle(Handle { kind: HandleKind::Reconstruction, id: 0 }),
        Value::Handle(Handle { kind: HandleKind::Frame, id: u32::MAX }),
        Value::Absent,
        Value::List(vec![]),
        Value::List(vec![Value::Absent, Value::List(vec![Value::Number(2.0), Value::Str(String::new())])]),
    ];
    let mut env = Environment::new();
    for _ in 0..3 {
        env.begin_turn();
    }
    for (i, v) in values.into_iter().enumerate() {
        let origin = if i % 2 == 0 { prov(v.kind_name()) } else { None };
        env.bind(format!("v{i:02}_{}", v.kind_name()), v, origin);
    }
    env
}

// 5. DSL.
fn dsl_suite() -> Check {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dsl");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dsl"))
        .collect();
    files.sort();
    ensure!(files.len() >= 20, "only {} corpus programs", files.len());
    let mut total_calls = 0;
    for path in &files {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let src = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let program = parse(&src).map_err(|e| format!("{name}: {e}"))?;
        let printed = pretty_print(&program);
        let reparsed = parse(&printed).map_err(|e| format!("{name}: printed form does not parse: {e}"))?;
        ensure!(reparsed.kinds() == program.kinds(), "{name}: structure changed through the printer");
        ensure!(pretty_print(&reparsed) == printed, "{name}: printer is not idempotent");

        let mut env = Environment::new();
        env.bind("preexisting", Value::Label("kept".into()), None);
        let before = snapshot(&env);
        let mut registry = RecordingRegistry::default();
        let result = execute(&program, &mut env, &mut registry);
        ensure!(result.error.is_none(), "{name}: {:?}", result.error);
        ensure!(registry.calls == expected_calls(&program), "{name}: calls {:?}", registry.calls);
        total_calls += registry.calls.len();
        let assigned: BTreeSet<&str> = program
            .statements
            .iter()
            .filter_map(|s| match &s.kind {
                StatementKind::Assign { name, .. } => Some(name.as_str()),
                _ => None,
            })
            .collect();
        let bound: BTreeSet<&str> = env.names().filter(|n| *n != "preexisting").collect();
        ensure!(bound == assigned, "{name}: bindings {bound:?} but assignments {assigned:?}");
        ensure!(env.get("preexisting") == Some(&Value::Label("kept".into())), "{name}: untouched binding changed");
        let emitted: Vec<&str> = result.emitted.iter().map(|e| e.key.as_str()).collect();
        ensure!(emitted == program.emit_keys(), "{name}: emitted {emitted:?}");
        let restored = restore(&before).map_err(|e| e.to_string())?;
        ensure!(restored.names().eq(["preexisting"]), "{name}: earlier snapshot was affected");
    }

    let env = kind_matrix();
    let bytes = snapshot(&env);
    let back = restore(&bytes).map_err(|e| e.to_string())?;
    ensure!(snapshot(&back) == bytes, "snapshot of the restored kind matrix differs");
    ensure!(back.turn() == env.turn(), "turn counter lost");
    for name in env.names() {
        let (a, b) = (env.get(name).unwrap(), back.get(name).unwrap());
        let same = match (a, b) {
            (Value::Number(x), Value::Number(y)) => x.to_bits() == y.to_bits(),
            _ => a == b,
        };
        ensure!(same, "{name}: {a:?} restored as {b:?}");
        ensure!(env.origin(name) == back.origin(name), "{name}: provenance changed");
    }
    let kinds: BTreeSet<&str> = env.names().filter_map(|n| env.get(n)).map(Value::kind_name).collect();
    ensure!(kinds.len() == 11, "kind matrix covers {} kinds", kinds.len());
    Ok(format!("{} programs, {total_calls} registry calls all accounted for, {} kinds restored", files.len(), kinds.len()))
}

fn oracle_config(workers: usize, seed: u64) -> RunConfig {
    RunConfig { episode: EpisodeConfig { rng_seed: seed, ..EpisodeConfig::default() }, workers, vision: VisionProfile::Oracle }
}

// 6. End-to-end oracle benchmark.
fn oracle_benchmark(bench: &mssr_core::harness::Benchmark) -> Result<(String, RunOutput), String> {
    let start = Instant::now();
    let backends = common::scripted();
    let cats: BTreeSet<&str> = bench.items.iter().map(|i| i.category.as_str()).collect();
    ensure!(bench.items.len() == 50, "{} questions generated", bench.items.len());
    ensure!(cats.len() == 4, "categories present: {cats:?}");
    let single = run_benchmark(bench, &oracle_config(1, 7), &backends).map_err(|e| e.to_string())?;
    let pooled = run_benchmark(bench, &oracle_config(8, 7), &backends).map_err(|e| e.to_string())?;
    let repeat = run_benchmark(bench, &oracle_config(8, 7), &backends).map_err(|e| e.to_string())?;
    let report = &single.report;
    let wrong: Vec<&str> = report.items.iter().filter(|i| !i.correct).map(|i| i.id.as_str()).collect();
    ensure!(wrong.is_empty(), "accuracy {:.3}, wrong: {wrong:?}", report.accuracy);
    ensure!(report.mean_iterations <= 3.0, "mean iterations {:.2}", report.mean_iterations);
    ensure!(single.report.without_timings() == pooled.report.without_timings(), "1 vs 8 workers differ");
    ensure!(pooled.report.without_timings() == repeat.report.without_timings(), "repeated seeded runs differ");
    within_budget(start, Duration::from_secs(60))?;
    let msg = format!(
        "accuracy {:.1}%, mean iterations {:.2}, reports identical across workers and repeats",
        100.0 * report.accuracy,
        report.mean_iterations
    );
    Ok((msg, single))
}

// 7. Curation contract, checked on the recorded prompts.
fn curation_contract(bench: &mssr_core::harness::Benchmark) -> Check {
    let config = EpisodeConfig { rng_seed: 7, ..EpisodeConfig::default() };
    let mut prompts_checked = 0;
    let mut pruned_total = 0;
    for index in 0..bench.items.len() {
        let rec = common::run_recorded(bench, index, &config, Arc::new(ScriptedPerception), Arc::new(ScriptedReasoner));
        let t = &rec.trace;
        let id = &t.question.id;
        for it in &t.iterations {
            let before = common::sorted_keys(&it.set_before);
            let after = common::sorted_keys(&it.set_after);
            ensure!(after.iter().all(|k| before.contains(k)), "{id} iteration {}: curation added keys", it.index);
            let removed: Vec<&String> = before.iter().filter(|k| !after.contains(k)).collect();
            ensure!(removed.len() == it.pruned.len(), "{id} iteration {}: pruned list mismatch", it.index);
            pruned_total += removed.len();
        }

        // Perception prompts: one per iteration, showing the set carried in.
        let pa: Vec<Vec<String>> = rec.perception.prompts().iter().filter_map(|p| common::prompt_keys(p)).collect();
        ensure!(pa.len() == t.iterations.len(), "{id}: {} perception prompts for {} iterations", pa.len(), t.iterations.len());
        for (n, keys) in pa.iter().enumerate() {
            let carried = if n == 0 { Vec::new() } else { common::sorted_keys(&t.iterations[n - 1].set_after) };
            ensure!(*keys == carried, "{id}: perception prompt {} shows {keys:?}, active set is {carried:?}", n + 1);
        }

        // Reasoning prompts: curate shows the set before curation, decide the
        // set after it, answer the final set.
        let mut current: Option<usize> = None;
        let mut seen_answer = false;
        for prompt in rec.reasoning.prompts() {
            let Some(keys) = common::prompt_keys(&prompt) else { continue };
            prompts_checked += 1;
            let mode = tag_content(&prompt, "mode").unwrap_or_default().trim().to_string();
            let expected = match mode.as_str() {
                "curate" => {
                    let n = current.map_or(0, |c| c + 1);
                    current = Some(n);
                    common::sorted_keys(&t.iterations.get(n).ok_or("more curate prompts than iterations")?.set_before)
                }
                "decide" => common::sorted_keys(&t.iterations[current.ok_or("decide before any curate")?].set_after),
                "answer" | "forced" => {
                    seen_answer = true;
                    common::sorted_keys(&t.final_set)
                }
                other => return Err(format!("{id}: unexpected mode '{other}'")),
            };
            ensure!(keys == expected, "{id}: {mode} prompt shows {keys:?}, expected {expected:?}");
            // A key pruned earlier may only reappear after the perception agent re-emits it.
            if let Some(c) = current {
                for earlier in &t.iterations[..c] {
                    for k in &earlier.pruned {
                        let re_emitted = t.iterations[c].set_before.iter().any(|i| &i.key == k);
                        ensure!(!keys.contains(k) || re_emitted, "{id}: pruned key {k} resurfaced in a {mode} prompt");
                    }
                }
            }
        }
        ensure!(seen_answer, "{id}: no answer prompt recorded");
        let last_decide = rec
            .reasoning
            .prompts()
            .iter()
            .filter(|p| tag_content(p, "mode").is_some_and(|m| m.trim() == "decide"))
            .filter_map(|p| common::prompt_keys(p))
            .last()
            .ok_or("no decide prompt")?;
        ensure!(last_decide == common::sorted_keys(&t.final_set), "{id}: final decide prompt differs from the final set");
    }
    ensure!(pruned_total > 0, "no episode pruned anything, so the contract was not exercised");
    Ok(format!("{} episodes, {prompts_checked} reasoning prompts, {pruned_total} pruned items never resurfaced", bench.items.len()))
}

const DISTRACTION_CAPACITY: usize = 8;

// 8. Minimality ablation.
fn minimality(bench: &mssr_core::harness::Benchmark) -> Check {
    let run = run_benchmark(bench, &oracle_config(8, 11), &common::scripted()).map_err(|e| e.to_string())?;
    let traces: Vec<EpisodeTrace> = run.traces.into_iter().flatten().collect();
    let table = minimality_ablation(&traces, &DistractibleReasoner { capacity: DISTRACTION_CAPACITY }, &EpisodeConfig::default())
        .map_err(|e| e.to_string())?;
    let rows = &table.rows;
    let shape: Vec<String> = rows.iter().map(|r| format!("{:.1} items {:.1}%", r.mean_size, 100.0 * r.accuracy)).collect();
    ensure!(rows.len() == 3, "{} rows", rows.len());
    ensure!(table.episodes >= 5, "only {} three-iteration episodes", table.episodes);
    for w in rows.windows(2) {
        ensure!(w[1].mean_size <= w[0].mean_size, "sets grow: {shape:?}");
        ensure!(w[1].accuracy >= w[0].accuracy, "accuracy drops as sets shrink: {shape:?}");
    }
    ensure!(rows[2].mean_size < rows[0].mean_size, "sets never shrink: {shape:?}");
    ensure!(rows[2].accuracy > rows[0].accuracy, "flat trend, distraction never triggered: {shape:?}");
    Ok(format!("{} episodes; {}", table.episodes, shape.join(" -> ")))
}

// 9. Iteration-cap ablation.
fn iteration_cap(bench: &mssr_core::harness::Benchmark, full: &RunOutput) -> Result<(String, RunOutput), String> {
    let needs_second: Vec<&str> = bench
        .items
        .iter()
        .filter(|i| matches!(i.category.as_str(), "direction" | "facing"))
        .map(|i| i.id.as_str())
        .collect();
    let share = needs_second.len() as f64 / bench.items.len() as f64;
    ensure!(share >= 0.3, "only {:.0}% of items need a targeted request", 100.0 * share);
    for (item, trace) in bench.items.iter().zip(&full.traces) {
        let n = trace.as_ref().ok_or("missing trace")?.iteration_count();
        if needs_second.contains(&item.id.as_str()) {
            ensure!(n >= 2, "{} was constructed to need a second request but finished in {n}", item.id);
        }
    }

    let mut config = oracle_config(8, 7);
    config.episode.max_iterations = 1;
    let capped = run_benchmark(bench, &config, &common::scripted()).map_err(|e| e.to_string())?;
    for t in capped.traces.iter() {
        let t = t.as_ref().ok_or("missing trace")?;
        ensure!(t.iteration_count() == 1, "{}: {} iterations under cap 1", t.question.id, t.iteration_count());
        ensure!(!t.iterations[0].pa_replies.is_empty(), "{}: no perception turn", t.question.id);
    }
    let (a1, a4) = (capped.report.accuracy, full.report.accuracy);
    ensure!(a1 < a4, "cap 1 accuracy {a1:.3} is not below cap 4 accuracy {a4:.3}");
    let msg = format!(
        "{:.0}% need a second request; accuracy {:.1}% at cap 1 vs {:.1}% at cap 4",
        100.0 * share,
        100.0 * a1,
        100.0 * a4
    );
    Ok((msg, capped))
}

// 10. Annotation export.
fn annotation_export(bench: &mssr_core::harness::Benchmark, oracle: &RunOutput, capped: &RunOutput) -> Check {
    let filter = AnnotationFilter::Rules(RuleFilter::default());
    let records = export_annotations(&bench.items, &oracle.traces, &filter, 1.0, 3).map_err(|e| e.to_string())?;
    let by_id: BTreeMap<&str, &EpisodeTrace> =
        oracle.traces.iter().flatten().map(|t| (t.question.id.as_str(), t)).collect();
    let mut citations = 0;
    for r in &records {
        let trace = by_id[r.id.as_str()];
        let final_keys: BTreeSet<&str> = trace.final_set.iter().map(|i| i.key.as_str()).collect();
        for line in r.cot.lines().filter(|l| l.contains("[evidence:")) {
            let cited = cited_keys(line);
            ensure!(!cited.is_empty(), "{}: unparseable citation in '{line}'", r.id);
            for k in cited {
                ensure!(final_keys.contains(k.as_str()), "{}: cites {k}, not in the final set", r.id);
                citations += 1;
            }
        }
    }
    ensure!(citations > 0, "no citations emitted");

    let rules = RuleFilter::default();
    let forced: Vec<&EpisodeTrace> = oracle.traces.iter().chain(&capped.traces).flatten().filter(|t| t.forced.is_some()).collect();
    ensure!(!forced.is_empty(), "no forced traces to filter");
    for t in &forced {
        ensure!(rules.rejects(t).is_some(), "{}: forced trace passed the rule filter", t.question.id);
    }
    let forced_correct = forced.iter().filter(|t| t.question.answer.as_deref() == Some(t.final_answer.as_str())).count();
    let capped_ids: BTreeSet<&str> = match export_annotations(&bench.items, &capped.traces, &filter, 1.0, 3) {
        Ok(recs) => recs.into_iter().map(|r| bench.items.iter().find(|i| i.id == r.id).unwrap().id.as_str()).collect(),
        Err(HarnessError::EmptyAfterFilter) => BTreeSet::new(),
        Err(e) => return Err(e.to_string()),
    };
    for t in capped.traces.iter().flatten() {
        if matches!(t.forced, Some(ForcedReason::IterationCap | ForcedReason::Fallback)) {
            ensure!(!capped_ids.contains(t.question.id.as_str()), "{}: forced trace exported", t.question.id);
        }
        if capped_ids.contains(t.question.id.as_str()) {
            ensure!(
                matches!(t.iterations.last().and_then(|i| i.decision.as_ref()), Some(Decision::Decide { .. })),
                "{}: exported without a decide",
                t.question.id
            );
        }
    }
    Ok(format!(
        "{} records, {citations} citations all in final sets; {} forced traces ({forced_correct} correct by chance) rejected",
        records.len(),
        forced.len()
    ))
}

fn run(name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(detail) => {
            println!("PASS  {name:<34} {ms:>9.1} ms  {detail}");
            true
        }
        Err(why) => {
            println!("FAIL  {name:<34} {ms:>9.1} ms  {why}");
            false
        }
    }
}

fn main() {
    let bench = common::synthetic(50, 1);
    let mut oracle: Option<RunOutput> = None;
    let mut capped: Option<RunOutput> = None;
    let mut results = vec![
        run("1 geometry suite", geometry_suite),
        run("2 calibration and labeling", calibration_labeling),
        run("3 orientation grounding bound", sog_bound),
        run("4 canonical view", canonical_view),
        run("5 command language", dsl_suite),
        run("6 end-to-end oracle benchmark", || {
            oracle_benchmark(&bench).map(|(msg, out)| {
                oracle = Some(out);
                msg
            })
        }),
        run("7 curation contract", || curation_contract(&bench)),
        run("8 minimality ablation", || minimality(&common::synthetic(120, 100))),
    ];
    results.push(run("9 iteration-cap ablation", || {
        let full = oracle.as_ref().ok_or("criterion 6 produced no run")?;
        iteration_cap(&bench, full).map(|(msg, out)| {
            capped = Some(out);
            msg
        })
    }));
    results.push(run("10 annotation export", || {
        let full = oracle.as_ref().ok_or("criterion 6 produced no run")?;
        let capped = capped.as_ref().ok_or("criterion 9 produced no run")?;
        annotation_export(&bench, full, capped)
    }));
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
