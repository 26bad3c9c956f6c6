#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "siamnet/errors.hpp"
#include "siamnet/network.hpp"

namespace siamnet {
namespace {

constexpr char kMagic[4] = {'S', 'N', 'E', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::byte> take() { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}
  void need(std::size_t n, const char* what) {
    if (pos_ + n > in_.size()) {
      throw FormatError(std::string("model file truncated while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::span<const std::byte> raw(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

void write_header(Writer& w, const NetworkParams& params) {
  const NetConfig& cfg = params.config;
  w.bytes(kMagic, 4);
  w.u32(kModelFormatVersion);
  w.u8(static_cast<std::uint8_t>(params.mode));
  w.u32(static_cast<std::uint32_t>(cfg.image_height));
  w.u32(static_cast<std::uint32_t>(cfg.image_width));
  w.u32(static_cast<std::uint32_t>(cfg.parts.part_height));
  for (std::size_t off : cfg.parts.offsets) w.u32(static_cast<std::uint32_t>(off));
  w.f64(cfg.norm.k0);
  w.f64(cfg.norm.alpha);
  w.f64(cfg.norm.beta);
  w.u32(static_cast<std::uint32_t>(cfg.norm.radius));

  std::uint32_t tensors = 0;
  params.for_each([&](const std::string&, const Tensor&) { ++tensors; });
  w.u32(tensors);
  params.for_each([&](const std::string&, const Tensor& t) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  });
}

}  // namespace

std::size_t serialized_header_size(const NetworkParams& params) {
  Writer w;
  write_header(w, params);
  return w.size();
}

std::vector<std::byte> serialize(const NetworkParams& params) {
  Writer w;
  write_header(w, params);
  params.for_each([&](const std::string&, const Tensor& t) {
    for (double v : t.data()) w.f64(v);
  });
  return w.take();
}

NetworkParams deserialize(std::span<const std::byte> bytes) {
  Reader r(bytes);
  auto magic = r.raw(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("bad magic: not a SNET model file");
  const std::uint32_t version = r.u32("version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  const std::uint8_t mode_byte = r.u8("mode");
  if (mode_byte > 1) throw FormatError("unknown network mode " + std::to_string(mode_byte));

  NetworkParams net;
  net.mode = static_cast<Mode>(mode_byte);
  NetConfig& cfg = net.config;
  cfg.image_height = r.u32("image height");
  cfg.image_width = r.u32("image width");
  cfg.parts.part_height = r.u32("part height");
  for (auto& off : cfg.parts.offsets) off = r.u32("part offset");
  cfg.norm.k0 = r.f64("norm k0");
  cfg.norm.alpha = r.f64("norm alpha");
  cfg.norm.beta = r.f64("norm beta");
  cfg.norm.radius = r.u32("norm radius");

  const std::uint32_t tensors = r.u32("tensor count");
  const std::size_t sets = net.mode == Mode::General ? 1 : 2;
  const std::size_t per_set = 2 + 4 * kNumParts;
  if (tensors != sets * per_set) {
    throw FormatError("shape table lists " + std::to_string(tensors) + " tensors, expected " +
                      std::to_string(sets * per_set));
  }
  std::vector<Shape> shapes(tensors);
  for (auto& s : shapes) {
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank == 0 || rank > 4) throw FormatError("shape table: invalid rank " + std::to_string(rank));
    s.resize(rank);
    for (auto& d : s) d = r.u32("tensor dim");
  }
  // Architecture follows from the first set's shapes: c1 [K1,C,k1,k1],
  // c3 [K3,K1,k3,k3], f5 [D, flat].
  if (shapes[0].size() != 4 || shapes[2].size() != 4 || shapes[2 + 2 * kNumParts].size() != 2) {
    throw FormatError("shape table mismatch: unexpected tensor ranks");
  }
  cfg.c1_channels = shapes[0][0];
  cfg.in_channels = shapes[0][1];
  cfg.c1_kernel = shapes[0][2];
  cfg.c3_channels = shapes[2][0];
  cfg.c3_kernel = shapes[2][2];
  cfg.feature_dim = shapes[2 + 2 * kNumParts][0];
  try {
    cfg.validate();
  } catch (const UsageError& e) {
    throw FormatError(std::string("model geometry invalid: ") + e.what());
  }

  NetworkParams proto;
  proto.config = cfg;
  proto.mode = net.mode;
  proto.sets.resize(sets);
  NetworkParams layout = zeros_like(proto);
  std::size_t i = 0;
  layout.for_each([&](const std::string& name, const Tensor& t) {
    if (shapes[i] != t.shape()) {
      throw FormatError("shape table mismatch at " + name + ": " + shape_string(shapes[i]) +
                        " vs expected " + shape_string(t.shape()));
    }
    ++i;
  });

  const std::size_t count = layout.parameter_count();
  if (r.remaining() < 8 * count) {
    throw FormatError("model file truncated: " + std::to_string(r.remaining()) +
                      " payload bytes, expected " + std::to_string(8 * count));
  }
  if (r.remaining() > 8 * count) {
    throw FormatError("model file has " + std::to_string(r.remaining() - 8 * count) +
                      " trailing bytes");
  }
  net.sets = std::move(layout.sets);
  net.for_each([&](const std::string&, Tensor& t) {
    for (double& v : t.data()) v = r.f64("parameters");
  });
  return net;
}

void save_model(const NetworkParams& params, const std::filesystem::path& path) {
  const auto bytes = serialize(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open model file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing model file: " + path.string());
}

NetworkParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace siamnet
