#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "l3s/checkpoint.hpp"
#include "l3s/scene_io.hpp"
#include "support.hpp"

using namespace l3s;
using nlohmann::json;
using support::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string p(const std::filesystem::path& path) { return path.string(); }

json read_json(const std::filesystem::path& path) { return json::parse(support::read_file(path)); }

// Tiny rotor scene shared by the training commands.
void make_scene(const TempDir& dir) {
  const Result r = run({"synth", "--preset", "rigid_rotor", "--strokes", "2", "--frames", "3", "--views", "2",
                        "--size", "32", "--seed", "4", "--out", p(dir / "scene")});
  REQUIRE(r.code == 0);
}

std::vector<std::string> guide_args(const TempDir& dir, const std::string& out) {
  return {"guide", "--manifest", p(dir / "scene/manifest.json"), "--out", p(dir / out), "--points", "40",
          "--iters", "6", "--scale", "0.5", "--desk", "--seed", "2", "--deterministic"};
}

std::vector<std::string> sketch_args(const TempDir& dir, const std::string& guidance, const std::string& out) {
  return {"sketch",         "--manifest", p(dir / "scene/manifest.json"), "--guidance", p(dir / guidance),
          "--out",          p(dir / out), "--strokes", "2", "--coarse-iters", "3", "--fine-iters", "3",
          "--deterministic"};
}

}  // namespace

TEST_CASE("config snapshot holds the published defaults") {
  const Result r = run({"config"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  const json& g = j["guidance"];
  const json& s = j["sketch"];
  CHECK(g["w_frame"].get<double>() == 0.1);
  CHECK(g["w_temporal"].get<double>() == 0.05);
  CHECK(g["w_rigid"].get<double>() == 1e-4);
  CHECK(g["point_count"].get<int>() == 10000);
  CHECK(g["splat"]["scale_mu"].get<double>() == 10.0);
  CHECK(g["splat"]["deblur_beta"].get<double>() == 0.5);
  CHECK(g["spatial_frequencies"].get<int>() == 10);
  CHECK(g["temporal_frequencies"].get<int>() == 10);
  CHECK(g["robust"]["alpha"].get<double>() == 1.0);
  CHECK(g["robust"]["scale"].get<double>() == 0.1);
  CHECK(g["lr_points"].get<double>() == 1e-3);
  CHECK(g["lr_mlp"].get<double>() == 5e-4);
  CHECK(g["resolution_scale"].get<double>() == 0.25);
  CHECK(s["w_frame"].get<double>() == 0.01);
  CHECK(s["w_temporal"].get<double>() == 0.01);
  CHECK(s["w_rigid_reg"].get<double>() == 1e-3);
  CHECK(s["w_local_reg"].get<double>() == 1e-3);
  CHECK(s["robust"]["alpha"].get<double>() == 1.0);
  CHECK(s["robust"]["scale"].get<double>() == 0.1);
  CHECK(s["suppression"]["a"].get<double>() == 100.0);
  CHECK(s["suppression"]["b"].get<double>() == 0.05);
  CHECK(s["suppression"]["enabled"].get<bool>());
  CHECK(s["base_radius"].get<double>() == 0.02);
  CHECK(s["min_spacing"].get<double>() == 1e-3);
  CHECK(s["coarse_scale"].get<double>() == 0.5);
  CHECK(s["fine_scale"].get<double>() == 1.0);
  CHECK(s["lr_rigid"].get<double>() == 5e-4);
  CHECK(s["lr_strokes"].get<double>() == 1e-3);
  CHECK(s["lr_local"].get<double>() == 1e-3);
}

TEST_CASE("synth writes frames and ground truth") {
  TempDir dir("cli_synth");
  const Result r = run({"synth", "--preset", "static", "--frames", "4", "--views", "2", "--size", "64", "--seed",
                        "1", "--out", p(dir / "d")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("frames 8") != std::string::npos);
  int pngs = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "d/frames")) pngs += e.path().extension() == ".png";
  CHECK(pngs == 8);
  CHECK(std::filesystem::exists(dir / "d/gt_strokes.json"));
  CHECK(std::filesystem::exists(dir / "d/gt_points/t003.ply"));
  const SceneManifest m = load_manifest(dir / "d/manifest.json");
  CHECK(m.frames.size() == 8);
  CHECK(load_image(m.image_path(0)).width() == 64);
  const json record = read_json(dir / "d/manifest.run.json");
  CHECK(record["command"] == "synth");
  CHECK(record["config"]["preset"] == "static");

  const Result again = run({"synth", "--preset", "static", "--frames", "4", "--views", "2", "--size", "64", "--seed",
                            "1", "--out", p(dir / "e")});
  REQUIRE(again.code == 0);
  CHECK(support::read_file(dir / "d/frames/t002_v01.png") == support::read_file(dir / "e/frames/t002_v01.png"));
  CHECK(support::read_file(dir / "d/gt_strokes.json") == support::read_file(dir / "e/gt_strokes.json"));
}

TEST_CASE("eval on identical inputs") {
  TempDir dir("cli_eval");
  REQUIRE(run({"synth", "--preset", "rigid_rotor", "--frames", "3", "--views", "1", "--size", "16", "--out",
               p(dir / "d")})
              .code == 0);
  const Result c = run({"eval", "chamfer", "--pred", p(dir / "d/gt_points/t001.ply"), "--gt",
                        p(dir / "d/gt_points/t001.ply")});
  CHECK(c.code == 0);
  CHECK(c.out == "chamfer 0.000000\n");
  const Result seq = run({"eval", "chamfer", "--pred", p(dir / "d/gt_strokes.json"), "--gt",
                          p(dir / "d/gt_strokes.json")});
  CHECK(seq.out == "chamfer 0.000000\n");
  const Result v = run({"eval", "velocity", "--pred", p(dir / "d/gt_strokes.json"), "--gt",
                        p(dir / "d/gt_strokes.json")});
  CHECK(v.code == 0);
  CHECK(v.out == "velocity 0.000000\n");
  const Result moved = run({"eval", "chamfer", "--pred", p(dir / "d/gt_points/t000.ply"), "--gt",
                            p(dir / "d/gt_points/t002.ply")});
  CHECK(moved.code == 0);
  CHECK(moved.out != "chamfer 0.000000\n");
}

TEST_CASE("error exit codes") {
  TempDir dir("cli_errors");
  const Result missing = run({"guide", "--manifest", p(dir / "absent.json"), "--out", p(dir / "g.l3sg")});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("absent.json") != std::string::npos);

  CHECK(run({"guide", "--bogus-flag"}).code == 1);
  CHECK(run({}).code == 1);
  CHECK(run({"synth", "--preset", "tornado", "--out", p(dir / "x")}).code == 1);
  CHECK(run({"guide", "--manifest", "m.json", "--out", "g", "--config", p(dir / "none.json")}).code == 2);
  support::write_file(dir / "list.json", "[1, 2]");
  CHECK(run({"guide", "--manifest", "m.json", "--out", "g", "--config", p(dir / "list.json")}).code == 1);
  CHECK(run({"eval", "drift", "--pred", p(dir / "none.l3ss")}).code == 2);
}

TEST_CASE("guide and sketch pipeline") {
  TempDir dir("cli_pipeline");
  make_scene(dir);

  const Result g1 = run(guide_args(dir, "g1.l3sg"));
  REQUIRE(g1.code == 0);
  CHECK(g1.out.find("final_loss ") != std::string::npos);
  const Result g2 = run(guide_args(dir, "g2.l3sg"));
  REQUIRE(g2.code == 0);
  CHECK(support::read_file(dir / "g1.l3sg") == support::read_file(dir / "g2.l3sg"));
  CHECK(load_guidance(dir / "g1.l3sg").point_count() == 40);

  const json record = read_json(dir / "g1.run.json");
  CHECK(record["command"] == "guide");
  CHECK(record["deterministic"].get<bool>());
  CHECK(record["threads"].get<int>() == 1);
  CHECK(record["config"]["point_count"].get<int>() == 40);
  CHECK(record["config"]["w_frame"].get<double>() == 0.1);

  auto sk = sketch_args(dir, "g1.l3sg", "s1.l3ss");
  sk.insert(sk.end(), {"--animation", p(dir / "anim.json")});
  const Result s1 = run(sk);
  REQUIRE(s1.code == 0);
  REQUIRE(run(sketch_args(dir, "g1.l3sg", "s2.l3ss")).code == 0);
  CHECK(support::read_file(dir / "s1.l3ss") == support::read_file(dir / "s2.l3ss"));
  CHECK(load_sketch(dir / "s1.l3ss").stroke_count() == 2);
  const AnimationFile anim = load_animation(dir / "anim.json");
  CHECK(anim.times.size() == 3);
  CHECK(anim.strokes.front().size() == 2);
  CHECK(read_json(dir / "s1.run.json")["config"]["stroke_count"].get<int>() == 2);

  const Result r = run({"render", "--sketch", p(dir / "s1.l3ss"), "--manifest", p(dir / "scene/manifest.json"),
                        "--all", "--view", "1", "--out", p(dir / "renders")});
  REQUIRE(r.code == 0);
  int svgs = 0, pngs = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "renders")) {
    svgs += e.path().extension() == ".svg";
    pngs += e.path().extension() == ".png";
  }
  CHECK(svgs == 3);
  CHECK(pngs == 3);

  const Result drift = run({"eval", "drift", "--pred", p(dir / "s1.l3ss")});
  CHECK(drift.code == 0);
  CHECK(drift.out.rfind("drift ", 0) == 0);
  const Result vel = run({"eval", "velocity", "--pred", p(dir / "s1.l3ss"), "--gt", p(dir / "scene/gt_strokes.json")});
  CHECK(vel.code == 0);
  CHECK(vel.out.rfind("velocity ", 0) == 0);
}

TEST_CASE("config file supplies defaults and flags win") {
  TempDir dir("cli_config");
  make_scene(dir);
  support::write_file(dir / "opts.json", R"({"points": 30, "iters": 2, "desk": true, "w-rigid": 0.5})");
  const Result r = run({"guide", "--config", p(dir / "opts.json"), "--manifest", p(dir / "scene/manifest.json"),
                        "--out", p(dir / "g.l3sg"), "--points", "24", "--scale", "0.5"});
  REQUIRE(r.code == 0);
  const json cfg = read_json(dir / "g.run.json")["config"];
  CHECK(cfg["point_count"].get<int>() == 24);
  CHECK(cfg["iterations"].get<int>() == 2);
  CHECK(cfg["desk_network"].get<bool>());
  CHECK(cfg["w_rigid"].get<double>() == 0.5);
  CHECK(load_guidance(dir / "g.l3sg").point_count() == 24);
}

TEST_CASE("ablation flags zero their weights") {
  TempDir dir("cli_ablation");
  make_scene(dir);
  auto args = guide_args(dir, "g.l3sg");
  args.insert(args.end(), {"--no-temporal", "--no-rigid"});
  REQUIRE(run(args).code == 0);
  const json cfg = read_json(dir / "g.run.json")["config"];
  CHECK(cfg["w_temporal"].get<double>() == 0.0);
  CHECK(cfg["w_rigid"].get<double>() == 0.0);
}

TEST_CASE("dnerf import command") {
  TempDir dir("cli_dnerf");
  std::filesystem::create_directories(dir / "data/train");
  save_png(GrayImage::filled(20, 10, 0.2), dir / "data/train/r_0.png");
  support::write_file(dir / "data/transforms_train.json",
                      R"({"camera_angle_x": 0.69, "frames": [{"file_path": "./train/r_0", "time": 0.5,
                          "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,3],[0,0,0,1]]}]})");
  const Result r = run({"import-dnerf", "--transforms", p(dir / "data/transforms_train.json"), "--out",
                        p(dir / "manifest.json")});
  REQUIRE(r.code == 0);
  const SceneManifest m = load_manifest(dir / "manifest.json");
  REQUIRE(m.frames.size() == 1);
  CHECK(m.frames[0].image_path == "data/train/r_0.png");
  CHECK(m.frames[0].t == 0.5);
  CHECK(m.frames[0].camera.width == 20);
}
