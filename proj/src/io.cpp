#include "gocc/io.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

namespace gocc {

namespace {

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    require(out_.good(), "cannot open for writing: " + path);
  }
  void u8(std::uint8_t v) { buf_.push_back(char(v)); }
  void u16(std::uint16_t v) {
    buf_.push_back(char(v & 0xff));
    buf_.push_back(char(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(char((v >> (8 * i)) & 0xff));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void magic(const char m[4]) { buf_.insert(buf_.end(), m, m + 4); }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void finish() {
    out_.write(buf_.data(), std::streamsize(buf_.size()));
    out_.flush();
    require(out_.good(), "write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open for reading: " + path);
    in.seekg(0, std::ios::end);
    buf_.resize(std::size_t(in.tellg()));
    in.seekg(0);
    in.read(buf_.data(), std::streamsize(buf_.size()));
    require(in.good(), "read failed: " + path);
  }
  std::uint8_t u8() { return std::uint8_t(take(1)[0]); }
  std::uint16_t u16() {
    const char* p = take(2);
    return std::uint16_t(std::uint8_t(p[0])) | (std::uint16_t(std::uint8_t(p[1])) << 8);
  }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(p[i])) << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  void expect_magic(const char m[4]) {
    const char* p = take(4);
    require(std::memcmp(p, m, 4) == 0,
            path_ + ": bad magic (expected " + std::string(m, 4) + ")");
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  const char* take(std::size_t n) {
    require(pos_ + n <= buf_.size(), path_ + ": truncated file");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  std::string path_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void save_grid(const std::string& path, const SemanticGrid& grid, GridPayload kind) {
  grid.spec.validate();
  const std::size_t v = grid.spec.voxel_count();
  Writer w(path);
  w.magic("GVOX");
  w.u32(kFormatVersion);
  for (int k = 0; k < 3; ++k) w.u32(std::uint32_t(grid.spec.dims[k]));
  for (int k = 0; k < 3; ++k) w.f32(float(grid.spec.min_corner[k]));
  w.f32(float(grid.spec.voxel_size));
  w.u8(std::uint8_t(kind));
  switch (kind) {
    case GridPayload::labels:
      require(grid.labels.size() == v, "grid labels missing");
      for (std::uint16_t l : grid.labels) w.u16(l);
      break;
    case GridPayload::occupancy:
      require(grid.occupancy.size() == v, "grid occupancy missing");
      for (real x : grid.occupancy) w.f32(float(x));
      break;
    case GridPayload::occupancy_probs: {
      require(grid.occupancy.size() == v, "grid occupancy missing");
      require(grid.num_classes > 0 && grid.class_probs.size() == v * grid.num_classes,
              "grid class probs missing");
      for (real x : grid.occupancy) w.f32(float(x));
      for (real x : grid.class_probs) w.f32(float(x));
      break;
    }
  }
  w.finish();
}

SemanticGrid load_grid(const std::string& path) {
  Reader r(path);
  r.expect_magic("GVOX");
  require(r.u32() == kFormatVersion, path + ": unsupported grid version");
  SemanticGrid grid;
  for (int k = 0; k < 3; ++k) grid.spec.dims[k] = int(r.u32());
  for (int k = 0; k < 3; ++k) grid.spec.min_corner[k] = double(r.f32());
  grid.spec.voxel_size = double(r.f32());
  grid.spec.validate();
  const std::size_t v = grid.spec.voxel_count();
  const auto kind = GridPayload(r.u8());
  switch (kind) {
    case GridPayload::labels:
      grid.labels.resize(v);
      for (auto& l : grid.labels) l = r.u16();
      break;
    case GridPayload::occupancy:
      grid.occupancy.resize(v);
      for (auto& x : grid.occupancy) x = real(r.f32());
      break;
    case GridPayload::occupancy_probs: {
      grid.occupancy.resize(v);
      for (auto& x : grid.occupancy) x = real(r.f32());
      const std::size_t rest = r.remaining();
      require(rest % (4 * v) == 0, path + ": class-prob payload size mismatch");
      grid.num_classes = rest / (4 * v);
      grid.class_probs.resize(v * grid.num_classes);
      for (auto& x : grid.class_probs) x = real(r.f32());
      break;
    }
    default:
      fail(path + ": unknown grid payload kind");
  }
  return grid;
}

void save_gaussians(const std::string& path, const GaussianSet& set, std::size_t num_classes) {
  set.validate();
  Writer w(path);
  w.magic("GOCC");
  w.u32(kFormatVersion);
  w.u32(std::uint32_t(set.size()));
  w.u32(std::uint32_t(num_classes));
  w.u32(std::uint32_t(set.channel_width));
  for (const auto& g : set.gaussians) {
    require(g.logits.size() == num_classes, "gaussian logits length mismatch");
    for (int k = 0; k < 3; ++k) w.f32(float(g.mean[k]));
    for (int k = 0; k < 3; ++k) w.f32(float(g.scale[k]));
    for (int k = 0; k < 4; ++k) w.f32(float(g.rotation[k]));
    w.f32(float(g.opacity));
    for (double l : g.logits) w.f32(float(l));
  }
  for (real q : set.queries) w.f32(float(q));
  w.finish();
}

GaussianSet load_gaussians(const std::string& path) {
  Reader r(path);
  r.expect_magic("GOCC");
  require(r.u32() == kFormatVersion, path + ": unsupported gaussian-set version");
  const std::size_t p = r.u32();
  const std::size_t c = r.u32();
  const std::size_t d = r.u32();
  GaussianSet set;
  set.channel_width = d;
  set.gaussians.resize(p);
  for (auto& g : set.gaussians) {
    for (int k = 0; k < 3; ++k) g.mean[k] = double(r.f32());
    for (int k = 0; k < 3; ++k) g.scale[k] = double(r.f32());
    for (int k = 0; k < 4; ++k) g.rotation[k] = double(r.f32());
    g.opacity = double(r.f32());
    g.logits.resize(c);
    for (auto& l : g.logits) l = double(r.f32());
  }
  set.queries.resize(p * d);
  for (auto& q : set.queries) q = real(r.f32());
  return set;
}

std::string gaussians_to_json(const GaussianSet& set, std::size_t num_classes) {
  set.validate();
  nlohmann::json j;
  j["version"] = kFormatVersion;
  j["channel_width"] = set.channel_width;
  nlohmann::json gs = nlohmann::json::array();
  for (const auto& g : set.gaussians) {
    require(g.logits.size() == num_classes, "gaussian logits length mismatch");
    nlohmann::json e;
    e["mean"] = {g.mean[0], g.mean[1], g.mean[2]};
    e["scale"] = {g.scale[0], g.scale[1], g.scale[2]};
    e["rotation"] = {g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]};
    e["opacity"] = g.opacity;
    e["logits"] = g.logits;
    gs.push_back(std::move(e));
  }
  j["gaussians"] = std::move(gs);
  j["queries"] = set.queries;
  return j.dump(2);
}

GaussianSet gaussians_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  GaussianSet set;
  set.channel_width = j.at("channel_width").get<std::size_t>();
  for (const auto& e : j.at("gaussians")) {
    SemanticGaussian g;
    for (int k = 0; k < 3; ++k) {
      g.mean[k] = e.at("mean").at(k).get<double>();
      g.scale[k] = e.at("scale").at(k).get<double>();
    }
    for (int k = 0; k < 4; ++k) g.rotation[k] = e.at("rotation").at(k).get<double>();
    g.opacity = e.at("opacity").get<double>();
    g.logits = e.at("logits").get<std::vector<double>>();
    set.gaussians.push_back(std::move(g));
  }
  set.queries = j.at("queries").get<std::vector<real>>();
  return set;
}

void save_checkpoint(const std::string& path, const NamedTensorFile& file) {
  Writer w(path);
  w.magic("GFWT");
  w.u32(kFormatVersion);
  w.u32(std::uint32_t(file.tensors.size()));
  for (const auto& [name, tensor] : file.tensors) {
    w.u32(std::uint32_t(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(std::uint32_t(tensor.rank()));
    for (std::size_t d : tensor.shape()) w.u32(std::uint32_t(d));
    for (real v : tensor.values()) w.f32(float(v));
  }
  w.finish();
}

NamedTensorFile load_checkpoint(const std::string& path) {
  Reader r(path);
  r.expect_magic("GFWT");
  require(r.u32() == kFormatVersion, path + ": unsupported checkpoint version");
  const std::size_t count = r.u32();
  NamedTensorFile file;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t name_len = r.u32();
    std::string name(r.take(name_len), name_len);
    const std::size_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<real> values(n);
    for (auto& v : values) v = real(r.f32());
    file.tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  return file;
}

void save_points(const std::string& path, const std::vector<Vec3>& points,
                 const std::vector<std::uint16_t>& classes) {
  require(points.size() == classes.size(), "save_points: size mismatch");
  Writer w(path);
  w.magic("GPTS");
  w.u32(kFormatVersion);
  w.u32(std::uint32_t(points.size()));
  for (const auto& p : points) {
    for (int k = 0; k < 3; ++k) w.f32(float(p[k]));
  }
  for (std::uint16_t c : classes) w.u16(c);
  w.finish();
}

void load_points(const std::string& path, std::vector<Vec3>& points,
                 std::vector<std::uint16_t>& classes) {
  Reader r(path);
  r.expect_magic("GPTS");
  require(r.u32() == kFormatVersion, path + ": unsupported point file version");
  const std::size_t k = r.u32();
  points.resize(k);
  classes.resize(k);
  for (auto& p : points) {
    for (int i = 0; i < 3; ++i) p[i] = double(r.f32());
  }
  for (auto& c : classes) c = r.u16();
}

void save_feature_blob(const std::string& path, const Tensor& level) {
  Writer w(path);
  for (real v : level.values()) w.f32(float(v));
  w.finish();
}

Tensor load_feature_blob(const std::string& path, std::size_t c, std::size_t h, std::size_t w) {
  Reader r(path);
  require(r.remaining() == c * h * w * 4, path + ": feature blob size mismatch");
  std::vector<real> values(c * h * w);
  for (auto& v : values) v = real(r.f32());
  return Tensor::from({c, h, w}, std::move(values));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open for reading: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open for writing: " + path);
  out << content;
  require(out.good(), "write failed: " + path);
}

}  // namespace gocc
