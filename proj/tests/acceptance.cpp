// One pass/fail line per acceptance criterion; exits nonzero if any fails.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "l3s/checkpoint.hpp"
#include "l3s/evalkit.hpp"
#include "l3s/guidance.hpp"
#include "l3s/raster.hpp"
#include "l3s/scene_io.hpp"
#include "l3s/sketch.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "unit_binaries.hpp"

using namespace l3s;
using support::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

int failures = 0;

void report(int id, bool pass, double seconds, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("[%s] criterion %d (%.1fs): %s\n", pass ? "PASS" : "FAIL", id, seconds, detail.c_str());
  std::fflush(stdout);
}

std::string p(const std::filesystem::path& path) { return path.string(); }

void cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  if (cli::run(args, out, err) != 0) throw std::runtime_error("l3s " + args[0] + " failed: " + err.str());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// 1 ---------------------------------------------------------------------------

struct FdTally {
  std::size_t checked = 0, passed = 0;
  double worst = 0.0;
  void add(const oracle::FdReport& r) {
    checked += r.checked;
    passed += r.passed;
    worst = std::max(worst, r.worst);
  }
  void add(const FdTally& o) {
    checked += o.checked;
    passed += o.passed;
    worst = std::max(worst, o.worst);
  }
  double fraction() const { return checked ? static_cast<double>(passed) / checked : 0.0; }
};

FdTally fd_splat(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int w = 32, h = 32;
  SplatConfig cfg;
  Mat pts(64, 3);
  std::uniform_real_distribution<double> x(2.0, w - 2.0), d(1.0, 3.0);
  for (int i = 0; i < 64; ++i) pts.row(i) << x(rng), x(rng), d(rng);
  const Mat weights = oracle::random_mat(rng, h, w, -1.0, 1.0);
  const double peak = oracle::splat_sum(pts, w, h, cfg.deblur_beta, cfg.sigma_min).maxCoeff();
  Tape tape;
  Var v = tape.parameter(pts);
  tape.backward(sum(tape, mul(tape, splat_points(tape, v, w, h, cfg), tape.constant(weights))));
  auto f = [&](const Mat& q) {
    return (oracle::splat_sum(q, w, h, cfg.deblur_beta, cfg.sigma_min).array() * weights.array()).sum() / peak;
  };
  FdTally t;
  t.add(oracle::finite_differences(f, pts, tape.grad(v), 1e-4, 1e-3));
  return t;
}

FdTally fd_strokes(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int w = 32, h = 32;
  StrokeRasterConfig cfg;
  const Mat curves = oracle::random_mat(rng, 8, 8, 2.0, 30.0);
  const Mat weights = oracle::random_mat(rng, h, w, -1.0, 1.0);
  Tape tape;
  Var v = tape.parameter(curves);
  tape.backward(sum(tape, mul(tape, raster_strokes(tape, v, w, h, cfg), tape.constant(weights))));
  auto f = [&](const Mat& c) {
    return (oracle::stroke_image(c, w, h, cfg.stroke_width, cfg.softness, cfg.polyline_segments).array() *
            weights.array())
        .sum();
  };
  FdTally t;
  t.add(oracle::finite_differences(f, curves, tape.grad(v), 1e-4, 1e-3));
  return t;
}

SketchModel random_sketch(int strokes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SketchModel m;
  m.canonical = oracle::random_mat(rng, 4 * strokes, 3, -0.4, 0.4);
  m.anchors = Mat(strokes, 3);
  for (int i = 0; i < strokes; ++i) m.anchors.row(i) = m.canonical.row(4 * i);
  m.encoder.spatial_frequencies = 2;
  m.encoder.temporal_frequencies = 2;
  m.encoder.box_half_extent = 1.0;
  const int in = m.encoder.input_dim();
  m.net_rotation = mlp_init({in, 8, 2, -1, 4}, seed + 1, false);
  m.net_translation = mlp_init({in, 8, 2, -1, 3}, seed + 2, false);
  m.net_local = mlp_init({in, 8, 2, -1, 3}, seed + 3, false);
  for (Mlp* net : {&m.net_rotation, &m.net_translation, &m.net_local}) net->layers.back().weight *= 0.5;
  return m;
}

// Deformation with suppression, projection, stroke raster and the robust frame
// loss; gradients with respect to the canonical strokes and the translation
// head.
FdTally fd_chain(std::uint64_t seed, DistanceBackend kind) {
  const int size = 32;
  const Camera cam = Camera::look_at({0, -2.5, 0.3}, {0, 0, 0}, {0, 0, 1}, 0.9 * size, 0.9 * size, 0.5 * size,
                                     0.5 * size, size, size);
  StrokeRasterConfig rc;
  rc.stroke_width = 2.0;
  const GrayImage frame = render_sketch(random_sketch(3, seed + 100), 0.6, cam, rc);
  const SketchModel m = random_sketch(3, seed);
  ImageDistanceConfig backend;
  backend.kind = kind;
  SketchConfig cfg;
  cfg.w_frame = 1.0;
  const double t = 0.35;
  auto loss = [&](Tape& tape, const SketchModel& model, bool trainable) {
    const SketchBinding b = bind_sketch(tape, model, trainable, trainable, false);
    const SketchPose pose = sketch_forward(tape, model, b, t);
    return std::pair{b, sketch_frame_loss(tape, render_sketch(tape, cam, pose.points, rc), frame, backend, cfg)};
  };
  Tape tape;
  auto [b, l] = loss(tape, m, true);
  tape.backward(l);
  FdTally tally;
  const Mat gc = tape.grad(b.canonical);
  tally.add(oracle::finite_differences(
      [&](const Mat& x) {
        SketchModel mm = m;
        mm.canonical = x;
        Tape t2;
        return t2.item(loss(t2, mm, false).second);
      },
      m.canonical, gc, 1e-4, 1e-3));
  const Mat gw = tape.grad(b.translation.params[b.translation.params.size() - 2]);
  tally.add(oracle::finite_differences(
      [&](const Mat& x) {
        SketchModel mm = m;
        mm.net_translation.layers.back().weight = x;
        Tape t2;
        return t2.item(loss(t2, mm, false).second);
      },
      m.net_translation.layers.back().weight, gw, 1e-4, 1e-3));
  return tally;
}

void criterion1() {
  const auto start = Clock::now();
  FdTally splat, strokes, chain;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    splat.add(fd_splat(s));
    strokes.add(fd_strokes(s));
    for (auto kind : {DistanceBackend::pixel_robust, DistanceBackend::pyramid_gradient}) chain.add(fd_chain(s, kind));
  }
  const double secs = since(start);
  const bool pass = splat.fraction() >= 0.95 && strokes.fraction() >= 0.95 && chain.fraction() >= 0.95 && secs <= 60;
  report(1, pass, secs,
         "gradient oracles: splat " + fmt(100 * splat.fraction()) + "% of " + std::to_string(splat.checked) +
             ", strokes " + fmt(100 * strokes.fraction()) + "% of " + std::to_string(strokes.checked) +
             ", full chain " + fmt(100 * chain.fraction()) + "% of " + std::to_string(chain.checked) +
             " within 1e-3 (need >= 95%, <= 60 s)");
}

// 2 ---------------------------------------------------------------------------

double rigid_value(const Mat& a, const Mat& b) {
  Tape tape;
  std::vector<int> rows(a.rows());
  for (int i = 0; i < a.rows(); ++i) rows[i] = i;
  return tape.item(rigid_loss(tape, tape.constant(a), tape.constant(b), rows));
}

void criterion2() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  double worst_q = 0.0, worst_t = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<Vec3> src;
    for (int k = 0; k < 4 + i % 9; ++k) src.emplace_back(d(rng), d(rng), d(rng));
    const Quaternion q = quat_canonicalize(oracle::random_unit_quaternion(rng));
    const Vec3 t(d(rng), d(rng), d(rng));
    const Mat3 r = oracle::rodrigues(q.w, q.x, q.y, q.z);
    std::vector<Vec3> dst;
    for (const Vec3& s : src) dst.push_back(r * s + t);
    const RigidAlignment a = horn_align(src, dst);
    worst_q = std::max(worst_q, quat_distance(a.rotation, q));
    worst_t = std::max(worst_t, (a.translation - t).norm());
  }
  const Mat cloud = oracle::random_mat(rng, 16, 3, -1.0, 1.0);
  Mat shifted = cloud;
  shifted.col(0).array() += 1.0;
  Mat turned(cloud.rows(), 3);
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) turned.row(i) << -cloud(i, 1), cloud(i, 0), cloud(i, 2);
  const double lt = rigid_value(cloud, shifted), lr = rigid_value(cloud, turned);
  const double secs = since(start);
  const bool pass = worst_q <= 1e-9 && worst_t <= 1e-9 && std::abs(lt - 1.0) <= 1e-6 && std::abs(lr - 1.0) <= 1e-6 &&
                    secs <= 5;
  report(2, pass, secs,
         "Horn alignment: 100 pairs, worst quaternion " + fmt(worst_q) + ", translation " + fmt(worst_t) +
             " (<= 1e-9); rigid loss translation " + fmt(lt) + ", 90-degree turn " + fmt(lr) + " (1 +- 1e-6)");
}

// 3 ---------------------------------------------------------------------------

void criterion3(const TempDir& dir) {
  const auto start = Clock::now();
  SyntheticSpec spec;
  spec.preset = SyntheticPreset::rigid_rotor;
  spec.seed = 1;
  const auto scene_dir = dir / "rotor";
  cli({"synth", "--preset", "rigid_rotor", "--strokes", "6", "--frames", "16", "--views", "20", "--size", "128",
       "--seed", "1", "--out", p(scene_dir)});
  cli({"guide", "--manifest", p(scene_dir / "manifest.json"), "--out", p(dir / "rotor.l3sg"), "--points", "2000",
       "--scale", "0.25", "--desk", "--backend", "pixel_robust", "--iters", "2000", "--seed", "1"});
  cli({"sketch", "--manifest", p(scene_dir / "manifest.json"), "--guidance", p(dir / "rotor.l3sg"), "--out",
       p(dir / "rotor.l3ss"), "--strokes", "8", "--coarse-iters", "2000", "--fine-iters", "2000", "--seed", "1"});

  const GuidanceModel guidance = load_guidance(dir / "rotor.l3sg");
  const SketchModel final_model = load_sketch(dir / "rotor.l3ss");
  SketchConfig scfg;
  scfg.stroke_count = 8;
  scfg.seed = 1;
  const SketchModel init = init_sketch(guidance, scfg);
  const auto gt = make_synthetic_scene(spec).sampled();
  const auto frozen = sample_strokes(sketch_at(final_model, 0.0));
  int halved = 0, beats = 0;
  double mean_final = 0.0, mean_init = 0.0, mean_frozen = 0.0;
  for (const auto& frame : gt) {
    const double cf = chamfer_distance(sample_strokes(sketch_at(final_model, frame.t)), frame.points);
    const double ci = chamfer_distance(sample_strokes(sketch_at(init, frame.t)), frame.points);
    const double cb = chamfer_distance(frozen, frame.points);
    halved += cf <= 0.5 * ci;
    beats += cf <= cb;
    mean_final += cf / gt.size();
    mean_init += ci / gt.size();
    mean_frozen += cb / gt.size();
  }
  const double secs = since(start);
  const int n = static_cast<int>(gt.size());
  const bool pass = halved >= 0.9 * n && beats >= 0.8 * n && secs <= 900;
  report(3, pass, secs,
         "synthetic recovery: final <= 0.5x init on " + std::to_string(halved) + "/" + std::to_string(n) +
             " frames (need 90%), <= frozen baseline on " + std::to_string(beats) + "/" + std::to_string(n) +
             " (need 80%); mean Chamfer final " + fmt(mean_final) + ", init " + fmt(mean_init) + ", frozen " +
             fmt(mean_frozen));
}

// 4 ---------------------------------------------------------------------------

void criterion4(const TempDir& dir) {
  const auto start = Clock::now();
  const auto scene_dir = dir / "static";
  cli({"synth", "--preset", "static", "--frames", "8", "--views", "8", "--size", "128", "--seed", "1", "--out",
       p(scene_dir)});
  cli({"guide", "--manifest", p(scene_dir / "manifest.json"), "--out", p(dir / "static.l3sg"), "--points", "1000",
       "--desk", "--backend", "pixel_robust", "--iters", "1000", "--seed", "1"});
  const std::vector<std::string> sketch = {"sketch",         "--manifest", p(scene_dir / "manifest.json"),
                                           "--guidance",     p(dir / "static.l3sg"), "--strokes", "8",
                                           "--coarse-iters", "500", "--fine-iters", "500", "--seed", "1"};
  auto with = [&](std::vector<std::string> args, std::initializer_list<std::string> extra) {
    args.insert(args.end(), extra);
    return args;
  };
  cli(with(sketch, {"--out", p(dir / "static.l3ss")}));
  cli(with(sketch, {"--out", p(dir / "static_nosup.l3ss"), "--no-suppression"}));
  const std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};
  const double drift = static_drift(load_sketch(dir / "static.l3ss"), times);
  const double ablated = static_drift(load_sketch(dir / "static_nosup.l3ss"), times);
  const double secs = since(start);
  report(4, drift <= 0.05, secs,
         "suppression on the static preset: drift " + fmt(drift) + " (<= 0.05); without suppression " +
             fmt(ablated) + " (reported only)");
}

// 5 ---------------------------------------------------------------------------

void criterion5(const TempDir& dir) {
  const auto start = Clock::now();
  const char* names[3] = {"full", "no temporal", "no rigid"};
  double mean[3] = {0, 0, 0};
  bool rigid_ok = true;
  std::string per_seed;
  for (int seed = 1; seed <= 3; ++seed) {
    SyntheticSpec spec;
    spec.preset = SyntheticPreset::rigid_rotor;
    spec.frames = 16;
    spec.views = 8;
    spec.seed = seed;
    const auto scene_dir = dir / ("ablate" + std::to_string(seed));
    cli({"synth", "--preset", "rigid_rotor", "--frames", "16", "--views", "8", "--size", "128", "--seed",
         std::to_string(seed), "--out", p(scene_dir)});
    const auto gt = make_synthetic_scene(spec).sampled();
    double vel[3];
    for (int v = 0; v < 3; ++v) {
      const auto out = dir / ("ablate" + std::to_string(seed) + "_" + std::to_string(v) + ".l3sg");
      std::vector<std::string> args = {"guide", "--manifest", p(scene_dir / "manifest.json"), "--out", p(out),
                                       "--points", "1000", "--iters", "1000", "--desk", "--backend",
                                       "pixel_robust", "--seed", std::to_string(seed)};
      if (v == 1) args.push_back("--no-temporal");
      if (v == 2) args.push_back("--no-rigid");
      cli(args);
      const GuidanceModel m = load_guidance(out);
      std::vector<TimedPoints> cloud;
      for (const auto& frame : gt) cloud.push_back({frame.t, deform_points(m, frame.t)});
      vel[v] = motion_velocity_distance(cloud, gt);
      mean[v] += vel[v] / 3;
    }
    rigid_ok = rigid_ok && vel[2] >= 0.95 * vel[0];
    per_seed += " seed " + std::to_string(seed) + ": " + fmt(vel[0]) + "/" + fmt(vel[1]) + "/" + fmt(vel[2]) + ";";
  }
  const double secs = since(start);
  const bool pass = mean[1] >= mean[0] && rigid_ok;
  report(5, pass, secs,
         std::string("regularizer ablations, guidance velocity distance mean ") + names[0] + " " + fmt(mean[0]) +
             ", " + names[1] + " " + fmt(mean[1]) + " (needs >= full), " + names[2] + " " + fmt(mean[2]) +
             " (never < 0.95x full);" + per_seed);
}

// 6 ---------------------------------------------------------------------------

void criterion6() {
  const auto start = Clock::now();
  std::vector<std::string> binaries;
  std::stringstream ss(L3S_UNIT_BINARIES);
  std::string item;
  while (std::getline(ss, item, '|'))
    if (!item.empty()) binaries.push_back(item);
  std::string failed;
  for (const auto& b : binaries) {
    const std::string cmd = "\"" + b + "\" > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) failed += " " + std::filesystem::path(b).filename().string();
  }
  const double secs = since(start);
  report(6, failed.empty() && secs <= 120, secs,
         "invariant suites: " + std::to_string(binaries.size()) + " unit binaries" +
             (failed.empty() ? " all passed" : ", failed:" + failed) + " (<= 120 s)");
}

// 7 ---------------------------------------------------------------------------

void criterion7() {
  const auto start = Clock::now();
  const nlohmann::json j = cli::config_snapshot(GuidanceConfig{}, SketchConfig{});
  const auto& g = j["guidance"];
  const auto& s = j["sketch"];
  struct Check {
    const char* name;
    double got, want;
  };
  const Check checks[] = {
      {"w_f", g["w_frame"], 0.1},
      {"w_t", g["w_temporal"], 0.05},
      {"w_r", g["w_rigid"], 1e-4},
      {"lambda_s", s["w_frame"], 0.01},
      {"lambda_t", s["w_temporal"], 0.01},
      {"lambda_r", s["w_rigid_reg"], 1e-3},
      {"lambda_l", s["w_local_reg"], 1e-3},
      {"alpha", g["robust"]["alpha"], 1.0},
      {"c", g["robust"]["scale"], 0.1},
      {"sketch alpha", s["robust"]["alpha"], 1.0},
      {"sketch c", s["robust"]["scale"], 0.1},
      {"a", s["suppression"]["a"], 100.0},
      {"b", s["suppression"]["b"], 0.05},
      {"r", s["base_radius"], 0.02},
      {"delta", s["min_spacing"], 1e-3},
      {"point_count", g["point_count"], 10000},
      {"mu", g["splat"]["scale_mu"], 10.0},
      {"beta", g["splat"]["deblur_beta"], 0.5},
      {"L spatial", g["spatial_frequencies"], 10},
      {"L temporal", g["temporal_frequencies"], 10},
  };
  std::string bad;
  for (const auto& c : checks)
    if (c.got != c.want) bad += std::string(" ") + c.name + "=" + fmt(c.got);
  report(7, bad.empty(), since(start),
         "default constants: " + std::to_string(std::size(checks)) + " values" +
             (bad.empty() ? " match" : ", mismatched:" + bad));
}

}  // namespace

int main() {
  TempDir dir("acceptance");
  auto guarded = [](int id, auto&& fn) {
    const auto start = Clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, since(start), std::string("error: ") + e.what());
    }
  };
  guarded(1, criterion1);
  guarded(2, criterion2);
  guarded(3, [&] { criterion3(dir); });
  guarded(4, [&] { criterion4(dir); });
  guarded(5, [&] { criterion5(dir); });
  guarded(6, criterion6);
  guarded(7, criterion7);
  std::printf("%d of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
