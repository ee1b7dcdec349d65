#include "l3s/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>
#include <png.h>

#include "json.hpp"
#include "l3s/error.hpp"

namespace l3s {

using nlohmann::json;

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
}

json parse_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

// Typed field access with messages that name the owner.
const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  return obj.at(key);
}

double number(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(where + ": '" + key + "' must be finite");
  return d;
}

int integer(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number_integer()) throw ConfigError(where + ": '" + key + "' must be an integer");
  return v.get<int>();
}

Vec3 vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(where + ": expected an array of 3 numbers");
  Vec3 out;
  for (int k = 0; k < 3; ++k) {
    if (!v[k].is_number()) throw ConfigError(where + ": expected an array of 3 numbers");
    out(k) = v[k].get<double>();
  }
  return out;
}

json camera_json(const Camera& c) {
  json ext = json::array();
  for (int r = 0; r < 4; ++r) ext.push_back({c.extrinsic(r, 0), c.extrinsic(r, 1), c.extrinsic(r, 2), c.extrinsic(r, 3)});
  return {{"width", c.width}, {"height", c.height}, {"fx", c.fx}, {"fy", c.fy},
          {"cx", c.cx},       {"cy", c.cy},         {"extrinsic", ext}};
}

Camera camera_from_json(const json& j, const std::string& where) {
  Camera c;
  c.width = integer(j, "width", where);
  c.height = integer(j, "height", where);
  c.fx = number(j, "fx", where);
  c.fy = number(j, "fy", where);
  c.cx = number(j, "cx", where);
  c.cy = number(j, "cy", where);
  const json& ext = field(j, "extrinsic", where);
  if (!ext.is_array() || ext.size() != 4) throw ConfigError(where + ": 'extrinsic' must be a 4x4 array");
  for (int r = 0; r < 4; ++r) {
    if (!ext[r].is_array() || ext[r].size() != 4) throw ConfigError(where + ": 'extrinsic' must be a 4x4 array");
    for (int k = 0; k < 4; ++k) {
      if (!ext[r][k].is_number()) throw ConfigError(where + ": 'extrinsic' entries must be numbers");
      c.extrinsic(r, k) = ext[r][k].get<double>();
    }
  }
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

std::string fmt3(double v) {
  if (std::abs(v) < 0.0005) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

bool FrameRecord::operator==(const FrameRecord& o) const {
  return image_path == o.image_path && t == o.t && view == o.view && camera.extrinsic == o.camera.extrinsic &&
         camera.fx == o.camera.fx && camera.fy == o.camera.fy && camera.cx == o.camera.cx &&
         camera.cy == o.camera.cy && camera.width == o.camera.width && camera.height == o.camera.height;
}

std::filesystem::path SceneManifest::image_path(std::size_t frame) const {
  const std::filesystem::path p(frames.at(frame).image_path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<double> SceneManifest::unique_times() const {
  std::vector<double> t;
  for (const auto& f : frames) t.push_back(f.t);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

SceneManifest load_manifest(const std::filesystem::path& path, bool check_images) {
  const json j = parse_json(path);
  const std::string where = path.string();
  SceneManifest m;
  m.base_dir = path.parent_path();
  m.version = integer(j, "version", where);
  if (m.version != SceneManifest::kVersion) {
    throw ConfigError(where + ": unsupported manifest version " + std::to_string(m.version));
  }
  if (j.contains("scene_box") && !j.at("scene_box").is_null()) {
    const json& b = j.at("scene_box");
    Box3 box{vec3(field(b, "min", where + ": scene_box"), where + ": scene_box.min"),
             vec3(field(b, "max", where + ": scene_box"), where + ": scene_box.max")};
    if (!(box.max.array() > box.min.array()).all()) throw ConfigError(where + ": scene_box is empty");
    m.scene_box = box;
  }
  const json& frames = field(j, "frames", where);
  if (!frames.is_array() || frames.empty()) throw ConfigError(where + ": 'frames' must be a non-empty array");
  double last_t = -1.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string fw = where + ": frame " + std::to_string(i);
    const json& fj = frames[i];
    FrameRecord rec;
    const json& img = field(fj, "image", fw);
    if (!img.is_string() || img.get<std::string>().empty()) throw ConfigError(fw + ": 'image' must be a path");
    rec.image_path = img.get<std::string>();
    rec.t = number(fj, "t", fw);
    if (rec.t < 0.0 || rec.t > 1.0) throw ConfigError(fw + ": 't' must lie in [0, 1]");
    if (rec.t < last_t) throw ConfigError(fw + ": frames must be ordered by time");
    last_t = rec.t;
    if (fj.contains("view")) rec.view = integer(fj, "view", fw);
    rec.camera = camera_from_json(field(fj, "camera", fw), fw + ": camera");
    m.frames.push_back(std::move(rec));
    if (check_images && !std::filesystem::exists(m.image_path(i))) {
      throw IoError(fw + ": image not found: " + m.image_path(i).string());
    }
  }
  return m;
}

void save_manifest(const SceneManifest& m, const std::filesystem::path& path) {
  json j;
  j["version"] = m.version;
  if (m.scene_box) {
    j["scene_box"] = {{"min", {m.scene_box->min.x(), m.scene_box->min.y(), m.scene_box->min.z()}},
                      {"max", {m.scene_box->max.x(), m.scene_box->max.y(), m.scene_box->max.z()}}};
  }
  json frames = json::array();
  for (const auto& f : m.frames) {
    json fj = {{"image", f.image_path}, {"t", f.t}, {"camera", camera_json(f.camera)}};
    if (f.view >= 0) fj["view"] = f.view;
    frames.push_back(std::move(fj));
  }
  j["frames"] = std::move(frames);
  write_text(path, j.dump(1) + "\n");
}

Mat4 dnerf_axis_flip() { return Eigen::Vector4d(1.0, -1.0, -1.0, 1.0).asDiagonal(); }

SceneManifest import_dnerf(const std::filesystem::path& transforms_json, const std::filesystem::path& image_dir) {
  const json j = parse_json(transforms_json);
  const std::string where = transforms_json.string();
  const double angle_x = number(j, "camera_angle_x", where);
  if (!(angle_x > 0.0 && angle_x < 3.14)) throw ConfigError(where + ": camera_angle_x out of range");
  const json& frames = field(j, "frames", where);
  if (!frames.is_array() || frames.empty()) throw ConfigError(where + ": 'frames' must be a non-empty array");

  SceneManifest m;
  m.base_dir = image_dir;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string fw = where + ": frame " + std::to_string(i);
    const json& fj = frames[i];
    const json& fp = field(fj, "file_path", fw);
    if (!fp.is_string()) throw ConfigError(fw + ": 'file_path' must be a string");
    std::filesystem::path rel(fp.get<std::string>());
    if (!rel.has_extension()) rel += ".png";
    rel = rel.lexically_normal();
    const std::filesystem::path full = rel.is_absolute() ? rel : image_dir / rel;
    const GrayImage img = load_image(full);

    const json& tm = field(fj, "transform_matrix", fw);
    if (!tm.is_array() || tm.size() != 4) throw ConfigError(fw + ": 'transform_matrix' must be 4x4");
    Mat4 c2w;
    for (int r = 0; r < 4; ++r) {
      if (!tm[r].is_array() || tm[r].size() != 4) throw ConfigError(fw + ": 'transform_matrix' must be 4x4");
      for (int k = 0; k < 4; ++k) c2w(r, k) = tm[r][k].get<double>();
    }
    FrameRecord rec;
    rec.image_path = rel.generic_string();
    rec.t = fj.contains("time") ? number(fj, "time", fw) : 0.0;
    const double w = img.width(), h = img.height();
    const double f = 0.5 * w / std::tan(0.5 * angle_x);
    rec.camera.extrinsic = (c2w * dnerf_axis_flip()).inverse();
    // Re-orthonormalize to absorb float noise in the source matrices.
    Eigen::JacobiSVD<Mat3> svd(rec.camera.extrinsic.topLeftCorner<3, 3>(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    rec.camera.extrinsic.topLeftCorner<3, 3>() = svd.matrixU() * svd.matrixV().transpose();
    rec.camera.extrinsic.row(3) << 0, 0, 0, 1;
    rec.camera.fx = f;
    rec.camera.fy = f;
    rec.camera.cx = 0.5 * w;
    rec.camera.cy = 0.5 * h;
    rec.camera.width = img.width();
    rec.camera.height = img.height();
    try {
      rec.camera.validate();
    } catch (const DomainError& e) {
      throw ConfigError(fw + ": " + e.what());
    }
    if (rec.t < 0.0 || rec.t > 1.0) throw ConfigError(fw + ": 'time' must lie in [0, 1]");
    m.frames.push_back(std::move(rec));
  }
  std::stable_sort(m.frames.begin(), m.frames.end(),
                   [](const FrameRecord& a, const FrameRecord& b) { return a.t < b.t; });
  return m;
}

FrameSet load_frames(const SceneManifest& manifest, double scale) {
  if (!(scale > 0.0)) throw DomainError("load_frames: scale must be positive");
  FrameSet fs;
  for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
    const FrameRecord& rec = manifest.frames[i];
    GrayImage img = load_image(manifest.image_path(i));
    if (img.width() != rec.camera.width || img.height() != rec.camera.height) {
      throw ConfigError("frame " + std::to_string(i) + ": image is " + std::to_string(img.width()) + "x" +
                        std::to_string(img.height()) + " but the camera expects " + std::to_string(rec.camera.width) +
                        "x" + std::to_string(rec.camera.height));
    }
    Camera cam = scale == 1.0 ? rec.camera : rec.camera.scaled(scale);
    if (cam.width != img.width() || cam.height != img.height()) img = resize_area(img, cam.width, cam.height);
    fs.images.push_back(std::move(img));
    fs.cameras.push_back(cam);
    fs.times.push_back(rec.t);
    fs.source_index.push_back(static_cast<int>(i));
  }
  const std::size_t distinct = manifest.unique_times().size();
  fs.dt = distinct > 1 ? 1.0 / static_cast<double>(distinct - 1) : 0.0;
  return fs;
}

Box3 estimate_scene_box(const SceneManifest& manifest) {
  if (manifest.scene_box) return *manifest.scene_box;
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const auto& f : manifest.frames) {
    const Vec3 d = f.camera.forward();
    const Mat3 proj = Mat3::Identity() - d * d.transpose();
    a += proj;
    b += proj * f.camera.center();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(a);
  if (manifest.frames.empty() || !(eig.eigenvalues()(0) > 1e-6 * eig.eigenvalues()(2))) return Box3{};
  const Vec3 center = a.ldlt().solve(b);
  double radius = std::numeric_limits<double>::infinity();
  for (const auto& f : manifest.frames) {
    const Vec3 rel = center - f.camera.center();
    const double depth = rel.dot(f.camera.forward());
    if (!(depth > 0.0)) return Box3{};
    const double half_fov = std::atan(0.5 * std::min(f.camera.width / f.camera.fx, f.camera.height / f.camera.fy));
    radius = std::min(radius, depth * std::sin(half_fov));
  }
  if (!(radius > 0.0) || !std::isfinite(radius)) return Box3{};
  return Box3{center - Vec3::Constant(radius), center + Vec3::Constant(radius)};
}

void save_png(const GrayImage& image, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw DomainError("save_png: bit depth must be 8 or 16");
  if (image.width() < 1 || image.height() < 1) throw DomainError("save_png: empty image");
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  const std::size_t n = static_cast<std::size_t>(image.width()) * image.height();
  int ok = 0;
  if (bit_depth == 8) {
    img.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(n);
    for (std::size_t i = 0; i < n; ++i) {
      buf[i] = static_cast<png_byte>(std::lround(std::clamp(image.pixels.data()[i], 0.0, 1.0) * 255.0));
    }
    ok = png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr);
  } else {
    img.format = PNG_FORMAT_LINEAR_Y;
    std::vector<png_uint_16> buf(n);
    for (std::size_t i = 0; i < n; ++i) {
      buf[i] = static_cast<png_uint_16>(std::lround(std::clamp(image.pixels.data()[i], 0.0, 1.0) * 65535.0));
    }
    ok = png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr);
  }
  if (!ok) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

GrayImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  const bool wide = (img.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool alpha = (img.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  Mat px(h, w);
  auto finish = [&](int ok) {
    if (!ok) {
      const std::string msg = img.message;
      png_image_free(&img);
      throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }
  };
  auto luma = [](double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; };
  if (wide) {
    // 16-bit data is passed through unchanged; alpha comes premultiplied.
    img.format = color ? PNG_FORMAT_LINEAR_RGB_ALPHA : PNG_FORMAT_LINEAR_Y_ALPHA;
    const int ch = color ? 4 : 2;
    std::vector<png_uint_16> buf(n * ch);
    finish(png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr));
    for (std::size_t i = 0; i < n; ++i) {
      const png_uint_16* p = &buf[i * ch];
      const double a = p[ch - 1] / 65535.0;
      const double v = color ? luma(p[0] / 65535.0, p[1] / 65535.0, p[2] / 65535.0) : p[0] / 65535.0;
      px.data()[i] = v + (1.0 - a);
    }
  } else {
    img.format = PNG_FORMAT_RGBA;
    std::vector<png_byte> buf(n * 4);
    finish(png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr));
    for (std::size_t i = 0; i < n; ++i) {
      const png_byte* p = &buf[i * 4];
      const double a = p[3] / 255.0;
      const double v = color ? luma(p[0] / 255.0, p[1] / 255.0, p[2] / 255.0) : p[0] / 255.0;
      px.data()[i] = alpha ? a * v + (1.0 - a) : v;
    }
  }
  px = px.cwiseMax(0.0).cwiseMin(1.0);
  return GrayImage(std::move(px));
}

std::string svg_document(const std::vector<Bezier2D>& strokes, int width, int height, double stroke_width) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  s << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  for (const Bezier2D& c : strokes) {
    const auto& p = c.control_points;
    s << "<path d=\"M " << fmt3(p[0].x()) << ' ' << fmt3(p[0].y()) << " C " << fmt3(p[1].x()) << ' '
      << fmt3(p[1].y()) << ", " << fmt3(p[2].x()) << ' ' << fmt3(p[2].y()) << ", " << fmt3(p[3].x()) << ' '
      << fmt3(p[3].y()) << "\" fill=\"none\" stroke=\"black\" stroke-width=\"" << fmt3(stroke_width)
      << "\" stroke-linecap=\"round\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void export_svg(const std::vector<Bezier2D>& strokes, int width, int height, double stroke_width,
                const std::filesystem::path& path) {
  write_text(path, svg_document(strokes, width, height, stroke_width));
}

void export_animation(const AnimationFile& a, const std::filesystem::path& path) {
  if (a.times.size() != a.strokes.size()) throw DomainError("export_animation: times and poses differ in length");
  json j;
  j["format"] = "l3s-animation";
  j["version"] = AnimationFile::kVersion;
  j["suppression"] = {{"a", a.suppression_a}, {"b", a.suppression_b}, {"enabled", a.suppression_enabled}};
  j["stroke_count"] = a.strokes.empty() ? 0 : a.strokes.front().size();
  json frames = json::array();
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    json strokes = json::array();
    for (const Stroke3D& s : a.strokes[k]) {
      json cps = json::array();
      for (const Vec3& p : s.control_points) cps.push_back({p.x(), p.y(), p.z()});
      strokes.push_back(std::move(cps));
    }
    frames.push_back({{"t", a.times[k]}, {"strokes", std::move(strokes)}});
  }
  j["frames"] = std::move(frames);
  write_text(path, j.dump() + "\n");
}

AnimationFile load_animation(const std::filesystem::path& path) {
  const json j = parse_json(path);
  const std::string where = path.string();
  const json& fmt = field(j, "format", where);
  if (!fmt.is_string() || fmt.get<std::string>() != "l3s-animation") throw ConfigError(where + ": not an animation file");
  if (integer(j, "version", where) != AnimationFile::kVersion) throw ConfigError(where + ": unsupported version");
  AnimationFile a;
  const json& sup = field(j, "suppression", where);
  a.suppression_a = number(sup, "a", where + ": suppression");
  a.suppression_b = number(sup, "b", where + ": suppression");
  const json& en = field(sup, "enabled", where + ": suppression");
  if (!en.is_boolean()) throw ConfigError(where + ": suppression.enabled must be a boolean");
  a.suppression_enabled = en.get<bool>();
  const int count = integer(j, "stroke_count", where);
  const json& frames = field(j, "frames", where);
  if (!frames.is_array()) throw ConfigError(where + ": 'frames' must be an array");
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const std::string fw = where + ": frame " + std::to_string(k);
    a.times.push_back(number(frames[k], "t", fw));
    const json& strokes = field(frames[k], "strokes", fw);
    if (!strokes.is_array() || static_cast<int>(strokes.size()) != count) {
      throw ConfigError(fw + ": expected " + std::to_string(count) + " strokes");
    }
    std::vector<Stroke3D> pose(strokes.size());
    for (std::size_t s = 0; s < strokes.size(); ++s) {
      if (!strokes[s].is_array() || strokes[s].size() != 4) throw ConfigError(fw + ": strokes need 4 control points");
      for (int c = 0; c < 4; ++c) pose[s].control_points[c] = vec3(strokes[s][c], fw);
    }
    a.strokes.push_back(std::move(pose));
  }
  return a;
}

void write_ply(const std::vector<Vec3>& points, const std::filesystem::path& path, std::optional<double> time) {
  std::ostringstream s;
  s << "ply\nformat ascii 1.0\n";
  if (time) s << "comment time " << fmt17(*time) << "\n";
  s << "element vertex " << points.size() << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  for (const Vec3& p : points) s << fmt17(p.x()) << ' ' << fmt17(p.y()) << ' ' << fmt17(p.z()) << "\n";
  write_text(path, s.str());
}

std::vector<Vec3> read_ply(const std::filesystem::path& path, std::optional<double>* time) {
  std::istringstream in(read_text(path));
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw ConfigError(where + ": not a PLY file");
  std::size_t count = 0;
  int properties = 0;
  bool ascii = false, in_vertex = false;
  if (time) time->reset();
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") break;
    if (key == "format") {
      std::string kind;
      ls >> kind;
      ascii = kind == "ascii";
    } else if (key == "comment") {
      std::string word;
      double t = 0.0;
      if (ls >> word && word == "time" && ls >> t && time) *time = t;
    } else if (key == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (key == "property" && in_vertex) {
      ++properties;
    }
  }
  if (!ascii) throw ConfigError(where + ": only ASCII PLY is supported");
  if (properties < 3) throw ConfigError(where + ": vertices need x, y, z");
  std::vector<Vec3> pts(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw IoError(where + ": truncated vertex list");
    std::istringstream ls(line);
    if (!(ls >> pts[i].x() >> pts[i].y() >> pts[i].z())) throw ConfigError(where + ": bad vertex line " + std::to_string(i));
  }
  return pts;
}

}  // namespace l3s
