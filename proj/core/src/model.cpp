#include "emplace/model.hpp"

#include <cmath>

#include "emplace/error.hpp"
#include "emplace/rng.hpp"

namespace emplace::model {

VectorGrid VectorGrid::rotated_columns(std::ptrdiff_t k) const {
  if (w_ == 0) return *this;
  const auto w = static_cast<std::ptrdiff_t>(w_);
  const auto shift = static_cast<std::size_t>(((k % w) + w) % w);
  VectorGrid out(w_, h_, dim_);
  for (std::size_t r = 0; r < h_; ++r) {
    for (std::size_t c = 0; c < w_; ++c) {
      const auto src = at((c + shift) % w_, r);
      std::copy(src.begin(), src.end(), out.at(c, r).begin());
    }
  }
  return out;
}

bool all_finite(const TokenGrid& g) {
  for (float v : g.cls) {
    if (!std::isfinite(v)) return false;
  }
  for (float v : g.patches.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::size_t feature_dim(std::size_t channels) { return 2 * channels + 2; }

VectorGrid patch_features(const raster::Panorama& img, const raster::PatchGeometry& geom) {
  if (img.width() != geom.image_width() || img.height() != geom.image_height()) {
    throw DataError("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                    " does not match the " + std::to_string(geom.grid_w) + "x" +
                    std::to_string(geom.grid_h) + " patch grid");
  }
  const std::size_t c = img.channels();
  const std::size_t p = geom.patch_px;
  VectorGrid out(geom.grid_w, geom.grid_h, feature_dim(c));
  const double n = static_cast<double>(p * p);
  std::vector<double> intensity(p * p);
  for (std::size_t pr = 0; pr < geom.grid_h; ++pr) {
    for (std::size_t pc = 0; pc < geom.grid_w; ++pc) {
      auto f = out.at(pc, pr);
      const std::size_t x0 = pc * p;
      const std::size_t y0 = pr * p;
      std::fill(intensity.begin(), intensity.end(), 0.0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            const double v = img.at(x0 + x, y0 + y, ch) / 255.0;
            sum += v;
            intensity[y * p + x] += v / static_cast<double>(c);
          }
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            const double dv = img.at(x0 + x, y0 + y, ch) / 255.0 - mean;
            ss += dv * dv;
          }
        }
        f[ch] = static_cast<float>(mean);
        f[c + ch] = static_cast<float>(std::sqrt(ss / n));
      }
      double gx = 0.0;
      double gy = 0.0;
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x + 1 < p; ++x) {
          gx += std::abs(intensity[y * p + x + 1] - intensity[y * p + x]);
          gy += std::abs(intensity[(x + 1) * p + y] - intensity[x * p + y]);
        }
      }
      const double pairs = static_cast<double>(p * (p - 1));
      f[2 * c] = static_cast<float>(p > 1 ? gx / pairs : 0.0);
      f[2 * c + 1] = static_cast<float>(p > 1 ? gy / pairs : 0.0);
    }
  }
  return out;
}

TokenGrid as_token_grid(VectorGrid grid) {
  TokenGrid g;
  std::vector<double> mean(grid.dim(), 0.0);
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    const auto v = grid.cell(i);
    for (std::size_t a = 0; a < grid.dim(); ++a) mean[a] += v[a];
  }
  g.cls.resize(grid.dim());
  for (std::size_t a = 0; a < grid.dim(); ++a) {
    g.cls[a] = static_cast<float>(grid.cells() ? mean[a] / static_cast<double>(grid.cells()) : 0.0);
  }
  g.patches = std::move(grid);
  return g;
}

ToyEncoder::ToyEncoder(std::size_t dim, std::size_t feature_dim)
    : d_(dim), f_(feature_dim), theta_(dim * feature_dim + dim + dim * dim + dim, 0.0) {
  if (dim == 0 || feature_dim == 0) throw ConfigError("encoder dimensions must be positive");
}

ToyEncoder ToyEncoder::random(std::size_t dim, std::size_t feature_dim, std::uint64_t seed) {
  ToyEncoder enc(dim, feature_dim);
  Rng rng(seed);
  const double sp = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  const double sc = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < feature_dim; ++j) enc.wp(i, j) = rng.normal(0.0, sp);
  }
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) enc.wc(i, j) = rng.normal(0.0, sc);
  }
  return enc;
}

ToyEncoder::Forward ToyEncoder::forward(const VectorGrid& features) const {
  if (features.dim() != f_) {
    throw DataError("feature dim " + std::to_string(features.dim()) + " does not match encoder input " +
                    std::to_string(f_));
  }
  const std::size_t n = features.cells();
  Forward fw;
  fw.tokens.resize(n * d_);
  fw.mean.assign(d_, 0.0);
  fw.cls.resize(d_);
  const double* w = theta_.data();
  const double* b = theta_.data() + d_ * f_;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = features.cell(i);
    double* t = fw.tokens.data() + i * d_;
    for (std::size_t a = 0; a < d_; ++a) {
      double z = b[a];
      const double* wr = w + a * f_;
      for (std::size_t j = 0; j < f_; ++j) z += wr[j] * x[j];
      t[a] = std::tanh(z);
      fw.mean[a] += t[a];
    }
  }
  if (n > 0) {
    for (auto& m : fw.mean) m /= static_cast<double>(n);
  }
  for (std::size_t a = 0; a < d_; ++a) {
    double z = bc(a);
    for (std::size_t k = 0; k < d_; ++k) z += wc(a, k) * fw.mean[k];
    fw.cls[a] = z;
  }
  return fw;
}

void ToyEncoder::backward(const VectorGrid& features, const Forward& fw,
                          std::span<const double> grad_cls, std::span<double> grad) const {
  if (grad_cls.size() != d_ || grad.size() != theta_.size()) {
    throw DataError("gradient buffer shape mismatch");
  }
  double* g_wp = grad.data();
  double* g_bp = grad.data() + d_ * f_;
  double* g_wc = grad.data() + d_ * f_ + d_;
  double* g_bc = grad.data() + d_ * f_ + d_ + d_ * d_;

  std::vector<double> g_mean(d_, 0.0);
  for (std::size_t a = 0; a < d_; ++a) {
    g_bc[a] += grad_cls[a];
    for (std::size_t k = 0; k < d_; ++k) {
      g_wc[a * d_ + k] += grad_cls[a] * fw.mean[k];
      g_mean[k] += wc(a, k) * grad_cls[a];
    }
  }
  const std::size_t n = features.cells();
  if (n == 0) return;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> gz(d_);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = features.cell(i);
    const double* t = fw.tokens.data() + i * d_;
    for (std::size_t a = 0; a < d_; ++a) {
      gz[a] = g_mean[a] * inv_n * (1.0 - t[a] * t[a]);
      g_bp[a] += gz[a];
      double* gw = g_wp + a * f_;
      for (std::size_t j = 0; j < f_; ++j) gw[j] += gz[a] * x[j];
    }
  }
}

TokenGrid ToyEncoder::encode_features(const VectorGrid& features) const {
  const Forward fw = forward(features);
  TokenGrid out;
  out.cls.assign(fw.cls.begin(), fw.cls.end());
  out.patches = VectorGrid(features.grid_w(), features.grid_h(), d_);
  auto dst = out.patches.data();
  for (std::size_t i = 0; i < fw.tokens.size(); ++i) dst[i] = static_cast<float>(fw.tokens[i]);
  return out;
}

TokenGrid ToyEncoder::encode(const TokenGrid& input) const { return encode_features(input.patches); }

}  // namespace emplace::model
