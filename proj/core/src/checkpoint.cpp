#include "l3s/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "l3s/error.hpp"

namespace l3s {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  void magic(const char* m) { bytes_.insert(bytes_.end(), m, m + 4); }
  void u32(std::uint32_t v) { put(to_little(v)); }
  void i32(std::int32_t v) { put(to_little(v)); }
  void f32(double v) { put(to_little(static_cast<float>(v))); }
  void mat(const Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) f32(m.data()[i]);
  }
  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) {
      std::error_code ec;
      std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw IoError("cannot write " + path.string());
  }

 private:
  template <class T>
  void put(T v) {
    const char* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : where_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + where_);
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  void expect_magic(const char* m, const char* what) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) throw ConfigError(where_ + ": not a " + what + " file");
    pos_ += 4;
  }
  std::uint32_t u32() { return to_little(get<std::uint32_t>()); }
  std::int32_t i32() { return to_little(get<std::int32_t>()); }
  double f32() { return static_cast<double>(to_little(get<float>())); }
  Mat mat(Eigen::Index rows, Eigen::Index cols) {
    need(static_cast<std::size_t>(rows * cols) * 4);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f32();
    return m;
  }
  void expect_end() const {
    if (pos_ != bytes_.size()) throw ConfigError(where_ + ": trailing bytes after payload");
  }
  const std::string& where() const { return where_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError(where_ + ": truncated file");
  }
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string where_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kCheckpointVersion = 1;

void write_encoder(Writer& w, const EncoderConfig& e) {
  w.u32(static_cast<std::uint32_t>(e.spatial_frequencies));
  w.u32(static_cast<std::uint32_t>(e.temporal_frequencies));
  for (int k = 0; k < 3; ++k) w.f32(e.box_center(k));
  w.f32(e.box_half_extent);
}

EncoderConfig read_encoder(Reader& r) {
  EncoderConfig e;
  e.spatial_frequencies = static_cast<int>(r.u32());
  e.temporal_frequencies = static_cast<int>(r.u32());
  for (int k = 0; k < 3; ++k) e.box_center(k) = r.f32();
  e.box_half_extent = r.f32();
  try {
    e.validate();
  } catch (const Error& ex) {
    throw ConfigError(r.where() + ": " + ex.what());
  }
  return e;
}

void write_net(Writer& w, const Mlp& net) {
  w.u32(static_cast<std::uint32_t>(net.shape.input_dim));
  w.u32(static_cast<std::uint32_t>(net.shape.width));
  w.u32(static_cast<std::uint32_t>(net.shape.depth));
  w.i32(net.shape.skip_layer);
  w.u32(static_cast<std::uint32_t>(net.shape.output_dim));
  for (const Mat* m : net.parameters()) w.mat(*m);
}

Mlp read_net(Reader& r) {
  MlpShape s;
  s.input_dim = static_cast<int>(r.u32());
  s.width = static_cast<int>(r.u32());
  s.depth = static_cast<int>(r.u32());
  s.skip_layer = r.i32();
  s.output_dim = static_cast<int>(r.u32());
  try {
    s.validate();
  } catch (const Error& ex) {
    throw ConfigError(r.where() + ": " + ex.what());
  }
  Mlp net = mlp_init(s, 0, true);
  for (Mat* m : net.parameters()) *m = r.mat(m->rows(), m->cols());
  return net;
}

std::uint32_t read_count(Reader& r, std::uint32_t limit, const char* what) {
  const std::uint32_t n = r.u32();
  if (n == 0 || n > limit) throw ConfigError(r.where() + ": implausible " + what + " count " + std::to_string(n));
  return n;
}

}  // namespace

void save_guidance(const GuidanceModel& model, const std::filesystem::path& path) {
  Writer w;
  w.magic("L3SG");
  w.u32(kCheckpointVersion);
  write_encoder(w, model.encoder);
  write_net(w, model.deform_net);
  w.u32(static_cast<std::uint32_t>(model.canonical_points.rows()));
  w.mat(model.canonical_points);
  w.save(path);
}

GuidanceModel load_guidance(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic("L3SG", "guidance checkpoint");
  if (r.u32() != kCheckpointVersion) throw ConfigError(r.where() + ": unsupported checkpoint version");
  GuidanceModel m;
  m.encoder = read_encoder(r);
  m.deform_net = read_net(r);
  if (m.deform_net.shape.input_dim != m.encoder.input_dim() || m.deform_net.shape.output_dim != 3) {
    throw ConfigError(r.where() + ": network shape does not match the encoder");
  }
  const std::uint32_t n = read_count(r, 1u << 26, "point");
  m.canonical_points = r.mat(n, 3);
  r.expect_end();
  return m;
}

void save_sketch(const SketchModel& model, const std::filesystem::path& path) {
  Writer w;
  w.magic("L3SS");
  w.u32(kCheckpointVersion);
  write_encoder(w, model.encoder);
  w.f32(model.suppression.a);
  w.f32(model.suppression.b);
  w.u32(model.suppression.enabled ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(model.stroke_count()));
  w.mat(model.canonical);
  w.mat(model.anchors);
  write_net(w, model.net_rotation);
  write_net(w, model.net_translation);
  write_net(w, model.net_local);
  w.save(path);
}

SketchModel load_sketch(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic("L3SS", "sketch checkpoint");
  if (r.u32() != kCheckpointVersion) throw ConfigError(r.where() + ": unsupported checkpoint version");
  SketchModel m;
  m.encoder = read_encoder(r);
  m.suppression.a = r.f32();
  m.suppression.b = r.f32();
  m.suppression.enabled = r.u32() != 0;
  const std::uint32_t n = read_count(r, 1u << 20, "stroke");
  m.canonical = r.mat(4 * static_cast<Eigen::Index>(n), 3);
  m.anchors = r.mat(n, 3);
  m.net_rotation = read_net(r);
  m.net_translation = read_net(r);
  m.net_local = read_net(r);
  const int in = m.encoder.input_dim();
  if (m.net_rotation.shape.output_dim != 4 || m.net_translation.shape.output_dim != 3 ||
      m.net_local.shape.output_dim != 3 || m.net_rotation.shape.input_dim != in ||
      m.net_translation.shape.input_dim != in || m.net_local.shape.input_dim != in) {
    throw ConfigError(r.where() + ": network shapes do not match the encoder");
  }
  r.expect_end();
  return m;
}

void write_feature_file(const std::vector<Mat>& probes, const std::filesystem::path& path) {
  Writer w;
  w.magic("L3SF");
  w.u32(static_cast<std::uint32_t>(probes.size()));
  for (const Mat& p : probes) {
    w.u32(2);
    w.u32(static_cast<std::uint32_t>(p.rows()));
    w.u32(static_cast<std::uint32_t>(p.cols()));
    w.mat(p);
  }
  w.save(path);
}

std::vector<Mat> read_feature_file(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic("L3SF", "feature");
  const std::uint32_t count = r.u32();
  if (count > (1u << 20)) throw ConfigError(r.where() + ": implausible tensor count");
  std::vector<Mat> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t ndims = r.u32();
    if (ndims != 2) throw ConfigError(r.where() + ": tensor " + std::to_string(i) + " must be 2-D");
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows == 0 || cols == 0 || rows > 65536 || cols > 65536) {
      throw ConfigError(r.where() + ": tensor " + std::to_string(i) + " has bad dimensions");
    }
    out.push_back(r.mat(rows, cols));
  }
  r.expect_end();
  return out;
}

FeatureStore load_feature_store(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("feature directory not found: " + dir.string());
  FeatureStore store;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() != ".l3sf" || name.rfind("frame_", 0) != 0) continue;
    const std::string digits = entry.path().stem().string().substr(6);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
    store.probes[std::stoi(digits)] = read_feature_file(entry.path());
  }
  if (store.probes.empty()) throw ConfigError(dir.string() + ": no frame_<index>.l3sf files");
  return store;
}

}  // namespace l3s
