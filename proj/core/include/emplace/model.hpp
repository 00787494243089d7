#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "emplace/error.hpp"
#include "emplace/raster.hpp"

namespace emplace::model {

/// grid_w x grid_h cells holding one dim-vector each, stored row-major by
/// (row, col) exactly as in the token-grid file.
class VectorGrid {
 public:
  VectorGrid() = default;
  VectorGrid(std::size_t grid_w, std::size_t grid_h, std::size_t dim)
      : w_(grid_w), h_(grid_h), dim_(dim), data_(grid_w * grid_h * dim, 0.0f) {}

  std::size_t grid_w() const noexcept { return w_; }
  std::size_t grid_h() const noexcept { return h_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t cells() const noexcept { return w_ * h_; }

  std::span<float> at(std::size_t col, std::size_t row) {
    return {data_.data() + (row * w_ + col) * dim_, dim_};
  }
  std::span<const float> at(std::size_t col, std::size_t row) const {
    return {data_.data() + (row * w_ + col) * dim_, dim_};
  }
  /// Cell by flat row-major index.
  std::span<const float> cell(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  /// Output column j holds input column (j + k) mod grid_w, the token-space
  /// counterpart of raster::hrotate.
  VectorGrid rotated_columns(std::ptrdiff_t k) const;

  friend bool operator==(const VectorGrid&, const VectorGrid&) = default;

 private:
  std::size_t w_ = 0;
  std::size_t h_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

/// Encoder output: one pooled cls vector plus the patch-token grid.
struct TokenGrid {
  std::vector<float> cls;
  VectorGrid patches;

  std::size_t dim() const noexcept { return patches.dim(); }
  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

bool all_finite(const TokenGrid& g);

/// Per patch: channel means, channel standard deviations (population), mean
/// absolute horizontal and vertical forward difference of the channel-mean
/// intensity, all on a [0, 1] intensity scale. For RGB that is 8 values.
VectorGrid patch_features(const raster::Panorama& img, const raster::PatchGeometry& geom);
std::size_t feature_dim(std::size_t channels);

/// Wraps a feature grid as a TokenGrid whose cls is the mean patch vector.
TokenGrid as_token_grid(VectorGrid grid);

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual TokenGrid encode(const TokenGrid& input) const = 0;
};

/// For grids computed elsewhere (e.g. a ViT exporter): returns them unchanged.
class PassthroughEncoder final : public Encoder {
 public:
  TokenGrid encode(const TokenGrid& input) const override { return input; }
};

/// Desk-scale trainable encoder:
///   token_i = tanh(W_p * feature_i + b_p)
///   cls     = W_c * mean_i(token_i) + b_c
/// Parameters live in one flat vector laid out as [W_p | b_p | W_c | b_c],
/// row-major matrices, so optimizers can treat them as a single span.
class ToyEncoder final : public Encoder {
 public:
  ToyEncoder(std::size_t dim, std::size_t feature_dim);
  /// Gaussian W_p ~ N(0, 1/f), W_c ~ N(0, 1/d), zero biases.
  static ToyEncoder random(std::size_t dim, std::size_t feature_dim, std::uint64_t seed);

  std::size_t dim() const noexcept { return d_; }
  std::size_t feature_dim() const noexcept { return f_; }
  std::size_t num_params() const noexcept { return theta_.size(); }

  std::span<double> params() noexcept { return theta_; }
  std::span<const double> params() const noexcept { return theta_; }

  double& wp(std::size_t i, std::size_t j) { return theta_[i * f_ + j]; }
  double& bp(std::size_t i) { return theta_[d_ * f_ + i]; }
  double& wc(std::size_t i, std::size_t j) { return theta_[d_ * f_ + d_ + i * d_ + j]; }
  double& bc(std::size_t i) { return theta_[d_ * f_ + d_ + d_ * d_ + i]; }
  double wp(std::size_t i, std::size_t j) const { return theta_[i * f_ + j]; }
  double bp(std::size_t i) const { return theta_[d_ * f_ + i]; }
  double wc(std::size_t i, std::size_t j) const { return theta_[d_ * f_ + d_ + i * d_ + j]; }
  double bc(std::size_t i) const { return theta_[d_ * f_ + d_ + d_ * d_ + i]; }

  /// Double-precision activations kept for the backward pass.
  struct Forward {
    std::vector<double> tokens;  ///< cells x d
    std::vector<double> mean;    ///< d
    std::vector<double> cls;     ///< d
  };

  Forward forward(const VectorGrid& features) const;
  /// Accumulates dL/dtheta into `grad` given dL/dcls.
  void backward(const VectorGrid& features, const Forward& fw, std::span<const double> grad_cls,
                std::span<double> grad) const;

  TokenGrid encode(const TokenGrid& input) const override;
  TokenGrid encode_features(const VectorGrid& features) const;

 private:
  std::size_t d_;
  std::size_t f_;
  std::vector<double> theta_;
};

/// Errors raised by the token-grid and checkpoint readers/writers.
enum class GridFileErrc { io, bad_magic, bad_version, payload_length, shape_mismatch, non_finite };

class GridFileError : public DataError {
 public:
  GridFileError(GridFileErrc code, const std::string& what) : DataError(what), code_(code) {}
  GridFileErrc code() const noexcept { return code_; }

 private:
  GridFileErrc code_;
};

/// "TGRD" token-grid file: u32 version=1, u32 grid_w, u32 grid_h, u32 d, then
/// little-endian f32 cls (d) and patches row-major (grid_h x grid_w x d).
void save_token_grid(const TokenGrid& grid, const std::filesystem::path& path);
/// When `expected` is given the header grid must match it.
TokenGrid load_token_grid(const std::filesystem::path& path,
                          const raster::PatchGeometry* expected = nullptr);
std::vector<std::uint8_t> encode_token_grid(const TokenGrid& grid);
TokenGrid decode_token_grid(std::span<const std::uint8_t> bytes,
                            const raster::PatchGeometry* expected = nullptr);

/// "EMPW" parameter checkpoint: u32 version=1, u32 kind, u32 rank, u32 dims
/// [rank], u32 count, f32 payload[count].
enum class CheckpointKind : std::uint32_t { toy_encoder = 1, discrete_head = 2 };

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::toy_encoder;
  std::vector<std::uint32_t> shape;
  std::vector<double> values;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_encoder(const ToyEncoder& enc, const std::filesystem::path& path);
ToyEncoder load_encoder(const std::filesystem::path& path);

}  // namespace emplace::model
