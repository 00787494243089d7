#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "emplace/model.hpp"

namespace emplace::model {

static_assert(std::endian::native == std::endian::little,
              "token-grid and checkpoint I/O assume a little-endian host");

namespace {

constexpr std::uint32_t kGridVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::size_t remaining() const { return b_.size() - pos_; }
  bool has(std::size_t n) const { return remaining() >= n; }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, b_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  float f32() {
    float v;
    std::memcpy(&v, b_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  bool magic(const char* m) {
    if (!has(4) || std::memcmp(b_.data() + pos_, m, 4) != 0) return false;
    pos_ += 4;
    return true;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GridFileError(GridFileErrc::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw GridFileError(GridFileErrc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw GridFileError(GridFileErrc::io, "short write to " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_token_grid(const TokenGrid& grid) {
  if (grid.cls.size() != grid.patches.dim()) {
    throw GridFileError(GridFileErrc::shape_mismatch, "cls length differs from patch dim");
  }
  if (!all_finite(grid)) throw GridFileError(GridFileErrc::non_finite, "token grid has non-finite values");
  Writer w;
  w.bytes("TGRD", 4);
  w.u32(kGridVersion);
  w.u32(static_cast<std::uint32_t>(grid.patches.grid_w()));
  w.u32(static_cast<std::uint32_t>(grid.patches.grid_h()));
  w.u32(static_cast<std::uint32_t>(grid.patches.dim()));
  for (float v : grid.cls) w.f32(v);
  for (float v : grid.patches.data()) w.f32(v);
  return w.take();
}

TokenGrid decode_token_grid(std::span<const std::uint8_t> bytes, const raster::PatchGeometry* expected) {
  Reader r(bytes);
  if (!r.magic("TGRD")) throw GridFileError(GridFileErrc::bad_magic, "not a token-grid file");
  if (!r.has(16)) throw GridFileError(GridFileErrc::payload_length, "truncated token-grid header");
  const std::uint32_t version = r.u32();
  if (version != kGridVersion) {
    throw GridFileError(GridFileErrc::bad_version, "unsupported token-grid version " + std::to_string(version));
  }
  const std::uint32_t gw = r.u32();
  const std::uint32_t gh = r.u32();
  const std::uint32_t d = r.u32();
  if (expected && (gw != expected->grid_w || gh != expected->grid_h)) {
    throw GridFileError(GridFileErrc::shape_mismatch,
                        "token grid is " + std::to_string(gw) + "x" + std::to_string(gh) + ", expected " +
                            std::to_string(expected->grid_w) + "x" + std::to_string(expected->grid_h));
  }
  const std::size_t count = static_cast<std::size_t>(d) * (1 + static_cast<std::size_t>(gw) * gh);
  if (r.remaining() != count * 4) {
    throw GridFileError(GridFileErrc::payload_length,
                        "token-grid payload has " + std::to_string(r.remaining()) + " bytes, header implies " +
                            std::to_string(count * 4));
  }
  TokenGrid g;
  g.cls.resize(d);
  for (auto& v : g.cls) v = r.f32();
  g.patches = VectorGrid(gw, gh, d);
  for (auto& v : g.patches.data()) v = r.f32();
  if (!all_finite(g)) throw GridFileError(GridFileErrc::non_finite, "token grid has non-finite values");
  return g;
}

void save_token_grid(const TokenGrid& grid, const std::filesystem::path& path) {
  spill(path, encode_token_grid(grid));
}

TokenGrid load_token_grid(const std::filesystem::path& path, const raster::PatchGeometry* expected) {
  const auto bytes = slurp(path);
  try {
    return decode_token_grid(bytes, expected);
  } catch (const GridFileError& e) {
    throw GridFileError(e.code(), path.string() + ": " + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes("EMPW", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.kind));
  w.u32(static_cast<std::uint32_t>(ckpt.shape.size()));
  for (auto s : ckpt.shape) w.u32(s);
  w.u32(static_cast<std::uint32_t>(ckpt.values.size()));
  for (double v : ckpt.values) {
    if (!std::isfinite(v)) throw GridFileError(GridFileErrc::non_finite, "checkpoint has non-finite values");
    w.f32(static_cast<float>(v));
  }
  spill(path, w.take());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  Reader r(bytes);
  if (!r.magic("EMPW")) throw GridFileError(GridFileErrc::bad_magic, path.string() + ": not a checkpoint");
  if (!r.has(12)) throw GridFileError(GridFileErrc::payload_length, path.string() + ": truncated header");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw GridFileError(GridFileErrc::bad_version, path.string() + ": unsupported checkpoint version");
  }
  Checkpoint c;
  c.kind = static_cast<CheckpointKind>(r.u32());
  const std::uint32_t rank = r.u32();
  if (!r.has(4ull * rank + 4)) throw GridFileError(GridFileErrc::payload_length, path.string() + ": truncated shape");
  for (std::uint32_t i = 0; i < rank; ++i) c.shape.push_back(r.u32());
  const std::uint32_t count = r.u32();
  if (r.remaining() != 4ull * count) {
    throw GridFileError(GridFileErrc::payload_length, path.string() + ": payload length mismatch");
  }
  c.values.resize(count);
  for (auto& v : c.values) {
    v = r.f32();
    if (!std::isfinite(v)) throw GridFileError(GridFileErrc::non_finite, path.string() + ": non-finite value");
  }
  return c;
}

void save_encoder(const ToyEncoder& enc, const std::filesystem::path& path) {
  Checkpoint c;
  c.kind = CheckpointKind::toy_encoder;
  c.shape = {static_cast<std::uint32_t>(enc.dim()), static_cast<std::uint32_t>(enc.feature_dim())};
  c.values.assign(enc.params().begin(), enc.params().end());
  save_checkpoint(c, path);
}

ToyEncoder load_encoder(const std::filesystem::path& path) {
  const Checkpoint c = load_checkpoint(path);
  if (c.kind != CheckpointKind::toy_encoder || c.shape.size() != 2) {
    throw GridFileError(GridFileErrc::shape_mismatch, path.string() + ": not a toy-encoder checkpoint");
  }
  ToyEncoder enc(c.shape[0], c.shape[1]);
  if (c.values.size() != enc.num_params()) {
    throw GridFileError(GridFileErrc::shape_mismatch, path.string() + ": parameter count mismatch");
  }
  std::copy(c.values.begin(), c.values.end(), enc.params().begin());
  return enc;
}

}  // namespace emplace::model
