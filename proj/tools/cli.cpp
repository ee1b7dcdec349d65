#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "l3s/checkpoint.hpp"
#include "l3s/error.hpp"
#include "l3s/evalkit.hpp"
#include "l3s/parallel.hpp"
#include "l3s/scene_io.hpp"

namespace l3s::cli {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

// Appends keys from a JSON object as flags unless the command line already
// sets them.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (has_flag(args, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      args.push_back(flag);
      args.push_back(value.dump());
    } else {
      throw ConfigError(path + ": value of '" + key + "' must be a string, number or boolean");
    }
  }
  return args;
}

std::filesystem::path run_record_path(const std::filesystem::path& output) {
  return output.parent_path() / (output.stem().string() + ".run.json");
}

void write_run_record(const std::filesystem::path& output, const std::string& command,
                      const std::vector<std::string>& args, json config, bool deterministic, double seconds) {
  json j;
  j["tool"] = "l3s";
  j["version"] = kVersion;
  j["command"] = command;
  j["args"] = args;
  j["threads"] = thread_count();
  j["deterministic"] = deterministic;
  j["seconds"] = seconds;
  j["config"] = std::move(config);
  const auto path = run_record_path(output);
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

ImageDistanceConfig make_backend(const std::string& name, const std::string& features) {
  ImageDistanceConfig cfg;
  cfg.kind = distance_backend_from_string(name);
  if (cfg.kind == DistanceBackend::external_features) {
    if (features.empty()) throw ConfigError("backend external_features needs --features <dir>");
    cfg.features = std::make_shared<FeatureStore>(load_feature_store(features));
  }
  cfg.validate();
  return cfg;
}

json robust_json(const RobustParams& r) { return {{"alpha", r.alpha}, {"scale", r.scale}}; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::vector<double> parse_times(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad time value '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("no times given");
  return out;
}

using Sequence = std::vector<TimedPoints>;

std::vector<double> times_of(const Sequence& seq) {
  std::vector<double> t;
  for (const auto& s : seq) t.push_back(s.t);
  return t;
}

// Points per time from a PLY (one step), an animation JSON or a sketch
// checkpoint. Checkpoints are evaluated at `times` (default: t = 0).
Sequence load_sequence(const std::filesystem::path& path, const std::vector<double>& times, int samples) {
  const std::string ext = path.extension().string();
  if (ext == ".ply") {
    std::optional<double> t;
    std::vector<Vec3> pts = read_ply(path, &t);
    return {{t.value_or(0.0), std::move(pts)}};
  }
  if (ext == ".json") {
    const AnimationFile a = load_animation(path);
    Sequence seq;
    for (std::size_t k = 0; k < a.times.size(); ++k) seq.push_back({a.times[k], sample_strokes(a.strokes[k], samples)});
    if (!times.empty() && times_of(seq) != times) throw ConfigError(path.string() + ": time stamps differ from --gt");
    return seq;
  }
  const SketchModel model = load_sketch(path);
  Sequence seq;
  for (double t : times.empty() ? std::vector<double>{0.0} : times) {
    seq.push_back({t, sample_strokes(sketch_at(model, t), samples)});
  }
  return seq;
}

}  // namespace

json config_snapshot(const GuidanceConfig& g, const SketchConfig& s) {
  json j;
  j["guidance"] = {{"point_count", g.point_count},
                   {"w_frame", g.w_frame},
                   {"w_temporal", g.w_temporal},
                   {"w_rigid", g.w_rigid},
                   {"iterations", g.iterations},
                   {"reset_at", g.reset_at},
                   {"lr_points", g.lr_points},
                   {"lr_mlp", g.lr_mlp},
                   {"resolution_scale", g.resolution_scale},
                   {"rigid_subsample", g.rigid_subsample},
                   {"seed", g.seed},
                   {"desk_network", g.desk_network},
                   {"spatial_frequencies", g.spatial_frequencies},
                   {"temporal_frequencies", g.temporal_frequencies},
                   {"splat", {{"scale_mu", g.splat.scale_mu}, {"deblur_beta", g.splat.deblur_beta},
                              {"sigma_min", g.splat.sigma_min}}},
                   {"robust", robust_json(g.robust)}};
  j["sketch"] = {{"stroke_count", s.stroke_count},
                 {"base_radius", s.base_radius},
                 {"min_spacing", s.min_spacing},
                 {"w_frame", s.w_frame},
                 {"w_temporal", s.w_temporal},
                 {"w_rigid_reg", s.w_rigid_reg},
                 {"w_local_reg", s.w_local_reg},
                 {"coarse_iterations", s.coarse_iterations},
                 {"fine_iterations", s.fine_iterations},
                 {"coarse_scale", s.coarse_scale},
                 {"fine_scale", s.fine_scale},
                 {"lr_strokes", s.lr_strokes},
                 {"lr_rigid", s.lr_rigid},
                 {"lr_local", s.lr_local},
                 {"seed", s.seed},
                 {"suppression", {{"a", s.suppression.a}, {"b", s.suppression.b},
                                  {"enabled", s.suppression.enabled}}},
                 {"raster", {{"stroke_width", s.raster.stroke_width}, {"softness", s.raster.softness},
                             {"polyline_segments", s.raster.polyline_segments}}},
                 {"robust", robust_json(s.robust)},
                 {"embedding", {{"kind", to_string(s.embedding.kind)}, {"grid", s.embedding.grid},
                                {"bins", s.embedding.bins}}}};
  return j;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Turns posed video frames into 3D Bezier stroke animations.", "l3s"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  int threads = 0;
  bool deterministic = false;
  bool verbose = false;
  std::string config_path;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file with option defaults (flags win)");
    sub->add_option("--threads", threads, "Worker threads (default: L3S_THREADS or 1)")->check(CLI::NonNegativeNumber);
    sub->add_flag("--deterministic", deterministic, "Pin to one worker thread");
    sub->add_flag("-v,--verbose", verbose, "Progress on stderr");
  };

  // synth
  SyntheticSpec synth;
  std::string synth_preset = "rigid_rotor", synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic scene with ground truth");
  synth_cmd->add_option("--preset", synth_preset, "rigid_rotor, bender or static")->capture_default_str();
  synth_cmd->add_option("--strokes", synth.strokes)->capture_default_str();
  synth_cmd->add_option("--frames", synth.frames, "Time steps")->capture_default_str();
  synth_cmd->add_option("--views", synth.views)->capture_default_str();
  synth_cmd->add_option("--size,--res", synth.resolution, "Image size in pixels")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  add_common(synth_cmd);

  // guide
  GuidanceConfig gcfg;
  std::string guide_manifest, guide_out, guide_backend = "pyramid_gradient", guide_features;
  bool no_temporal = false, no_rigid = false;
  auto* guide_cmd = app.add_subcommand("guide", "Optimize the dynamic guidance point cloud");
  guide_cmd->add_option("--manifest", guide_manifest)->required();
  guide_cmd->add_option("--out", guide_out, "Guidance checkpoint (.l3sg)")->required();
  guide_cmd->add_option("--points", gcfg.point_count)->capture_default_str();
  guide_cmd->add_option("--iters", gcfg.iterations)->capture_default_str();
  guide_cmd->add_option("--seed", gcfg.seed)->capture_default_str();
  guide_cmd->add_option("--scale", gcfg.resolution_scale, "Resolution relative to the frames")->capture_default_str();
  guide_cmd->add_option("--reset-at", gcfg.reset_at)->capture_default_str();
  guide_cmd->add_option("--lr-points", gcfg.lr_points)->capture_default_str();
  guide_cmd->add_option("--lr-mlp", gcfg.lr_mlp)->capture_default_str();
  guide_cmd->add_option("--w-frame", gcfg.w_frame)->capture_default_str();
  guide_cmd->add_option("--w-temporal", gcfg.w_temporal)->capture_default_str();
  guide_cmd->add_option("--w-rigid", gcfg.w_rigid)->capture_default_str();
  guide_cmd->add_option("--backend", guide_backend, "pixel_robust, pyramid_gradient or external_features")
      ->capture_default_str();
  guide_cmd->add_option("--features", guide_features, "Directory of frame_<i>.l3sf probe files");
  guide_cmd->add_flag("--desk", gcfg.desk_network, "Small 4x64 network");
  guide_cmd->add_flag("--no-temporal", no_temporal, "Drop the velocity term");
  guide_cmd->add_flag("--no-rigid", no_rigid, "Drop the rigidity term");
  add_common(guide_cmd);

  // sketch
  SketchConfig scfg;
  std::string sketch_manifest, sketch_guidance, sketch_out, sketch_backend = "pyramid_gradient", sketch_features,
                                                             sketch_embedding = "orientation_histogram",
                                                             sketch_animation;
  bool no_suppression = false;
  auto* sketch_cmd = app.add_subcommand("sketch", "Fit 3D strokes and their motion");
  sketch_cmd->add_option("--manifest", sketch_manifest)->required();
  sketch_cmd->add_option("--guidance", sketch_guidance, "Guidance checkpoint (.l3sg)")->required();
  sketch_cmd->add_option("--out", sketch_out, "Sketch checkpoint (.l3ss)")->required();
  sketch_cmd->add_option("--strokes", scfg.stroke_count)->capture_default_str();
  sketch_cmd->add_option("--coarse-iters", scfg.coarse_iterations)->capture_default_str();
  sketch_cmd->add_option("--fine-iters", scfg.fine_iterations)->capture_default_str();
  sketch_cmd->add_option("--coarse-scale", scfg.coarse_scale)->capture_default_str();
  sketch_cmd->add_option("--fine-scale", scfg.fine_scale)->capture_default_str();
  sketch_cmd->add_option("--seed", scfg.seed)->capture_default_str();
  sketch_cmd->add_option("--w-temporal", scfg.w_temporal)->capture_default_str();
  sketch_cmd->add_option("--stroke-width", scfg.raster.stroke_width)->capture_default_str();
  sketch_cmd->add_option("--backend", sketch_backend)->capture_default_str();
  sketch_cmd->add_option("--features", sketch_features);
  sketch_cmd->add_option("--embedding", sketch_embedding, "orientation_histogram or external")->capture_default_str();
  sketch_cmd->add_flag("--no-suppression", no_suppression);
  sketch_cmd->add_option("--animation", sketch_animation, "Also export the animation JSON here");
  add_common(sketch_cmd);

  // render
  std::string render_sketch_path, render_manifest, render_out;
  bool render_all = false, render_svg = false, render_png = false, render_ply = false;
  int render_view = 0;
  double render_t = -1.0, render_scale = 1.0, render_width = StrokeRasterConfig{}.stroke_width;
  auto* render_cmd = app.add_subcommand("render", "Render a trained sketch");
  render_cmd->add_option("--sketch", render_sketch_path)->required();
  render_cmd->add_option("--manifest", render_manifest, "Manifest supplying cameras and times")->required();
  auto* t_opt = render_cmd->add_option("--t", render_t, "Time to render (default 0)");
  render_cmd->add_flag("--all", render_all, "Render every manifest time")->excludes(t_opt);
  render_cmd->add_option("--view", render_view, "Camera: frames tagged with this view, else this frame index")
      ->capture_default_str();
  render_cmd->add_option("--scale", render_scale)->capture_default_str();
  render_cmd->add_option("--stroke-width", render_width)->capture_default_str();
  render_cmd->add_flag("--svg", render_svg);
  render_cmd->add_flag("--png", render_png);
  render_cmd->add_flag("--ply", render_ply, "Curve samples in scene space");
  render_cmd->add_option("--out", render_out, "Output directory")->required();
  add_common(render_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Metrics");
  eval_cmd->require_subcommand(1);
  std::string ev_pred, ev_gt, drift_times = "0,0.25,0.5,0.75,1";
  int ev_samples = 32;
  auto add_eval = [&](const char* name, const char* help, bool needs_gt) {
    auto* sub = eval_cmd->add_subcommand(name, help);
    sub->add_option("--pred", ev_pred, "PLY, animation JSON or sketch checkpoint")->required();
    auto* gt = sub->add_option("--gt", ev_gt, "PLY or animation JSON");
    if (needs_gt) gt->required();
    sub->add_option("--samples", ev_samples, "Curve samples per stroke")->capture_default_str();
    add_common(sub);
    return sub;
  };
  auto* chamfer_cmd = add_eval("chamfer", "Chamfer distance (mean over times for sequences)", true);
  auto* velocity_cmd = add_eval("velocity", "Motion velocity distance", true);
  auto* drift_cmd = add_eval("drift", "Largest control-point excursion of a sketch checkpoint", false);
  drift_cmd->add_option("--times", drift_times, "Comma-separated times")->capture_default_str();

  // import-dnerf
  std::string dn_transforms, dn_images, dn_out;
  auto* dnerf_cmd = app.add_subcommand("import-dnerf", "Convert a D-NeRF transforms file to a manifest");
  dnerf_cmd->add_option("--transforms", dn_transforms)->required();
  dnerf_cmd->add_option("--images", dn_images, "Image root (default: the transforms directory)");
  dnerf_cmd->add_option("--out", dn_out, "Manifest path")->required();
  add_common(dnerf_cmd);

  // config
  auto* config_cmd = app.add_subcommand("config", "Print the default configuration");

  std::vector<std::string> args;
  try {
    args = merge_config(raw_args);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  auto log = [&](const std::string& msg) {
    if (verbose) err << msg << "\n";
  };

  try {
    if (deterministic) threads = 1;
    set_thread_count(threads);
    Timer timer;

    if (*config_cmd) {
      out << config_snapshot(GuidanceConfig{}, SketchConfig{}).dump(2) << "\n";
      return 0;
    }

    if (*synth_cmd) {
      synth.preset = synthetic_preset_from_string(synth_preset);
      const SyntheticScene scene = write_synthetic_scene(synth, synth_out);
      const std::filesystem::path manifest = std::filesystem::path(synth_out) / "manifest.json";
      json cfg = {{"preset", synth_preset}, {"strokes", synth.strokes}, {"frames", synth.frames},
                  {"views", synth.views},   {"resolution", synth.resolution}, {"seed", synth.seed}};
      write_run_record(manifest, "synth", raw_args, cfg, deterministic, timer.seconds());
      out << "frames " << scene.manifest.frames.size() << "\n";
      out << "manifest " << manifest.string() << "\n";
      return 0;
    }

    if (*guide_cmd) {
      if (no_temporal) gcfg.w_temporal = 0.0;
      if (no_rigid) gcfg.w_rigid = 0.0;
      const SceneManifest manifest = load_manifest(guide_manifest);
      const ImageDistanceConfig backend = make_backend(guide_backend, guide_features);
      std::vector<double> totals;
      GuidanceTrainOptions opts;
      opts.on_step = [&](const GuidanceStep& s) {
        totals.push_back(s.total);
        if (verbose && (s.iteration % 100 == 0 || s.reset)) {
          err << "guide it=" << s.iteration << " loss=" << s.total << " frame=" << s.frame
              << " temporal=" << s.temporal << " rigid=" << s.rigid << (s.reset ? " (reset)" : "") << "\n";
        }
      };
      const GuidanceModel model = train_guidance(manifest, gcfg, backend, opts);
      save_guidance(model, guide_out);
      json cfg = config_snapshot(gcfg, scfg)["guidance"];
      cfg["backend"] = guide_backend;
      write_run_record(guide_out, "guide", raw_args, cfg, deterministic, timer.seconds());
      if (!totals.empty()) {
        const std::size_t tail = std::max<std::size_t>(1, totals.size() / 10);
        double acc = 0.0;
        for (std::size_t i = totals.size() - tail; i < totals.size(); ++i) acc += totals[i];
        out << "final_loss " << fmt(acc / tail) << "\n";
      }
      out << "checkpoint " << guide_out << "\n";
      return 0;
    }

    if (*sketch_cmd) {
      if (no_suppression) scfg.suppression.enabled = false;
      scfg.embedding.kind = embedding_kind_from_string(sketch_embedding);
      if (scfg.embedding.kind == EmbeddingKind::external_embedding) {
        if (sketch_features.empty()) throw ConfigError("embedding external needs --features <dir>");
        scfg.embedding.features = std::make_shared<FeatureStore>(load_feature_store(sketch_features));
      }
      const SceneManifest manifest = load_manifest(sketch_manifest);
      const GuidanceModel guidance = load_guidance(sketch_guidance);
      const ImageDistanceConfig backend = make_backend(sketch_backend, sketch_features);
      std::vector<double> totals;
      SketchTrainOptions opts;
      opts.on_step = [&](const SketchStep& s) {
        totals.push_back(s.total);
        if (verbose && s.iteration % 100 == 0) {
          err << "sketch " << (s.stage == SketchStage::coarse ? "coarse" : "fine") << " it=" << s.iteration
              << " loss=" << s.total << " frame=" << s.frame << " temporal=" << s.temporal
              << " reg=" << s.regularizer << "\n";
        }
      };
      log("loaded " + std::to_string(manifest.frames.size()) + " frames");
      const SketchModel model = train_sketch(manifest, guidance, scfg, backend, opts);
      save_sketch(model, sketch_out);
      json cfg = config_snapshot(gcfg, scfg)["sketch"];
      cfg["backend"] = sketch_backend;
      write_run_record(sketch_out, "sketch", raw_args, cfg, deterministic, timer.seconds());
      if (!totals.empty()) {
        const std::size_t tail = std::max<std::size_t>(1, totals.size() / 10);
        double acc = 0.0;
        for (std::size_t i = totals.size() - tail; i < totals.size(); ++i) acc += totals[i];
        out << "final_loss " << fmt(acc / tail) << "\n";
      }
      if (!sketch_animation.empty()) {
        AnimationFile anim;
        anim.times = manifest.unique_times();
        for (double t : anim.times) anim.strokes.push_back(sketch_at(model, t));
        anim.suppression_a = model.suppression.a;
        anim.suppression_b = model.suppression.b;
        anim.suppression_enabled = model.suppression.enabled;
        export_animation(anim, sketch_animation);
        out << "animation " << sketch_animation << "\n";
      }
      out << "checkpoint " << sketch_out << "\n";
      return 0;
    }

    if (*render_cmd) {
      if (!render_svg && !render_png && !render_ply) render_svg = render_png = true;
      const SketchModel model = load_sketch(render_sketch_path);
      const SceneManifest manifest = load_manifest(render_manifest, false);
      int frame = -1;
      for (std::size_t i = 0; i < manifest.frames.size() && frame < 0; ++i) {
        if (manifest.frames[i].view == render_view) frame = static_cast<int>(i);
      }
      if (frame < 0 && render_view >= 0 && render_view < static_cast<int>(manifest.frames.size())) frame = render_view;
      if (frame < 0) throw ConfigError("--view " + std::to_string(render_view) + " matches no manifest frame");
      const Camera cam = manifest.frames[frame].camera.scaled(render_scale);
      StrokeRasterConfig raster;
      raster.stroke_width = render_width;
      raster = raster.scaled(render_scale);
      std::vector<double> times = render_all ? manifest.unique_times() : std::vector<double>{std::max(render_t, 0.0)};
      if (times.back() > 1.0) throw ConfigError("--t must lie in [0, 1]");
      const std::filesystem::path dir(render_out);
      std::filesystem::create_directories(dir);
      for (double t : times) {
        char stem[64];
        std::snprintf(stem, sizeof stem, "render_t%.4f_v%d", t, render_view);
        const std::vector<Stroke3D> strokes = sketch_at(model, t);
        if (render_svg) {
          std::vector<Bezier2D> curves;
          for (const Stroke3D& s : strokes) {
            bool visible = true;
            for (const Vec3& p : s.control_points) visible = visible && project(cam, p).depth > kMinDepth;
            if (visible) curves.push_back(project_curve(cam, s));
          }
          const auto path = dir / (std::string(stem) + ".svg");
          export_svg(curves, cam.width, cam.height, raster.stroke_width, path);
          out << "svg " << path.string() << "\n";
        }
        if (render_png) {
          const auto path = dir / (std::string(stem) + ".png");
          save_png(render_sketch(model, t, cam, raster), path);
          out << "png " << path.string() << "\n";
        }
        if (render_ply) {
          const auto path = dir / (std::string(stem) + ".ply");
          write_ply(sample_strokes(strokes), path, t);
          out << "ply " << path.string() << "\n";
        }
      }
      return 0;
    }

    if (*chamfer_cmd) {
      const Sequence pred = load_sequence(ev_pred, {}, ev_samples);
      const Sequence gt = load_sequence(ev_gt, {}, ev_samples);
      if (pred.size() == 1 && gt.size() == 1) {
        out << "chamfer " << fmt(chamfer_distance(pred[0].points, gt[0].points)) << "\n";
        return 0;
      }
      const Sequence aligned = load_sequence(ev_pred, times_of(gt), ev_samples);
      if (aligned.size() != gt.size()) throw ConfigError("eval chamfer: sequences have different lengths");
      double total = 0.0;
      for (std::size_t k = 0; k < gt.size(); ++k) {
        const double c = chamfer_distance(aligned[k].points, gt[k].points);
        log("chamfer t=" + fmt(gt[k].t) + " " + fmt(c));
        total += c;
      }
      out << "chamfer " << fmt(total / gt.size()) << "\n";
      return 0;
    }

    if (*velocity_cmd) {
      const Sequence gt = load_sequence(ev_gt, {}, ev_samples);
      const Sequence pred = load_sequence(ev_pred, times_of(gt), ev_samples);
      out << "velocity " << fmt(motion_velocity_distance(pred, gt)) << "\n";
      return 0;
    }

    if (*drift_cmd) {
      const SketchModel model = load_sketch(ev_pred);
      out << "drift " << fmt(static_drift(model, parse_times(drift_times))) << "\n";
      return 0;
    }

    if (*dnerf_cmd) {
      const std::filesystem::path transforms(dn_transforms);
      const std::filesystem::path images = dn_images.empty() ? transforms.parent_path() : std::filesystem::path(dn_images);
      SceneManifest m = import_dnerf(transforms, images);
      // Store image paths relative to the manifest location.
      const std::filesystem::path out_dir = std::filesystem::absolute(dn_out).parent_path();
      for (std::size_t i = 0; i < m.frames.size(); ++i) {
        const auto abs = std::filesystem::absolute(m.image_path(i)).lexically_normal();
        m.frames[i].image_path = abs.lexically_relative(out_dir).generic_string();
      }
      save_manifest(m, dn_out);
      out << "frames " << m.frames.size() << "\n";
      out << "manifest " << dn_out << "\n";
      return 0;
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace l3s::cli
