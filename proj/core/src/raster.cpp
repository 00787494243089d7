#include "emplace/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "emplace/error.hpp"

namespace emplace::raster {

Panorama::Panorama(std::size_t width, std::size_t height, std::size_t channels, double heading)
    : width_(width),
      height_(height),
      channels_(channels),
      heading_(heading),
      pixels_(width * height * channels, 0) {
  if (width == 0 || height == 0 || channels == 0) {
    throw DataError("panorama dimensions must be positive");
  }
}

PatchGeometry PatchGeometry::for_image(std::size_t width, std::size_t height, std::size_t patch_px) {
  if (patch_px == 0 || width % patch_px != 0 || height % patch_px != 0) {
    throw ConfigError("image " + std::to_string(width) + "x" + std::to_string(height) +
                      " does not divide into " + std::to_string(patch_px) + "-px patches");
  }
  return {patch_px, width / patch_px, height / patch_px};
}

std::ptrdiff_t heading_shift_px(double heading, std::size_t width) {
  return static_cast<std::ptrdiff_t>(std::lround(heading / 360.0 * static_cast<double>(width)));
}

Panorama hrotate(const Panorama& img, std::ptrdiff_t shift_px) {
  const auto w = static_cast<std::ptrdiff_t>(img.width());
  if (w == 0) return img;
  const auto shift = static_cast<std::size_t>(((shift_px % w) + w) % w);
  if (shift == 0) return img;
  Panorama out(img.width(), img.height(), img.channels(), img.heading());
  const std::size_t c = img.channels();
  const std::size_t row_bytes = img.width() * c;
  const auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t r = 0; r < img.height(); ++r) {
    const auto* in = src.data() + r * row_bytes;
    auto* o = dst.data() + r * row_bytes;
    std::copy(in + shift * c, in + row_bytes, o);
    std::copy(in, in + shift * c, o + (row_bytes - shift * c));
  }
  return out;
}

Panorama cut_and_flip(const Panorama& img, std::size_t cut_col) {
  if (cut_col >= img.width()) throw DataError("cut column outside the image");
  return hrotate(img, static_cast<std::ptrdiff_t>(cut_col));
}

void apply_masks(Panorama& img, std::span<const MaskRect> masks) {
  const auto w = static_cast<long long>(img.width());
  for (const auto& m : masks) {
    if (m.width_px == 0) continue;
    const double center = m.center_rel_col * static_cast<double>(w);
    const long long first = std::llround(center - static_cast<double>(m.width_px) / 2.0);
    for (long long k = 0; k < static_cast<long long>(m.width_px) && k < w; ++k) {
      const auto col = static_cast<std::size_t>((((first + k) % w) + w) % w);
      for (std::size_t r = 0; r < img.height(); ++r) {
        for (std::size_t ch = 0; ch < img.channels(); ++ch) img.at(col, r, ch) = 0;
      }
    }
  }
}

Panorama preprocess(const Panorama& raw, const PreprocessConfig& cfg) {
  if (cfg.crop_bottom_px >= raw.height()) {
    throw DataError("crop of " + std::to_string(cfg.crop_bottom_px) +
                    " rows leaves no image (height " + std::to_string(raw.height()) + ")");
  }
  const std::size_t h = raw.height() - cfg.crop_bottom_px;
  Panorama cropped(raw.width(), h, raw.channels(), raw.heading());
  const std::size_t bytes = raw.width() * raw.channels() * h;
  std::copy_n(raw.pixels().begin(), bytes, cropped.pixels().begin());

  Panorama out = cfg.rotate_by_heading
                     ? hrotate(cropped, heading_shift_px(raw.heading(), raw.width()))
                     : std::move(cropped);
  apply_masks(out, cfg.masks);
  out.set_heading(0.0);
  return out;
}

namespace {

/// Weights of each source index contributing to every destination index
/// under exact box filtering.
struct Footprint {
  std::size_t first;
  std::vector<double> weights;
};

std::vector<Footprint> box_footprints(std::size_t src, std::size_t dst) {
  std::vector<Footprint> out(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t d = 0; d < dst; ++d) {
    // Compute bounds in units of 1/dst to stay exact when the ratio is integral.
    const std::size_t lo_num = d * src;        // lo = lo_num / dst
    const std::size_t hi_num = (d + 1) * src;  // hi = hi_num / dst
    const std::size_t first = lo_num / dst;
    const std::size_t last = (hi_num + dst - 1) / dst;  // exclusive
    out[d].first = first;
    for (std::size_t s = first; s < last; ++s) {
      const std::size_t a = std::max(lo_num, s * dst);
      const std::size_t b = std::min(hi_num, (s + 1) * dst);
      out[d].weights.push_back(static_cast<double>(b - a) / static_cast<double>(dst) / scale);
    }
  }
  return out;
}

}  // namespace

Panorama downsize(const Panorama& img, std::size_t out_w, std::size_t out_h, std::size_t patch_px) {
  if (out_w == 0 || out_h == 0 || patch_px == 0 || out_w % patch_px != 0 || out_h % patch_px != 0) {
    throw ConfigError("output size " + std::to_string(out_w) + "x" + std::to_string(out_h) +
                      " does not divide into " + std::to_string(patch_px) + "-px patches");
  }
  if (out_w > img.width() || out_h > img.height()) {
    throw ConfigError("downsize cannot enlarge an image");
  }
  const auto fx = box_footprints(img.width(), out_w);
  const auto fy = box_footprints(img.height(), out_h);
  const std::size_t c = img.channels();

  // Horizontal pass into a float buffer, then vertical.
  std::vector<double> tmp(out_w * img.height() * c, 0.0);
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t x = 0; x < out_w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < fx[x].weights.size(); ++k) {
          acc += fx[x].weights[k] * img.at(fx[x].first + k, r, ch);
        }
        tmp[(r * out_w + x) * c + ch] = acc;
      }
    }
  }
  Panorama out(out_w, out_h, c, img.heading());
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < fy[y].weights.size(); ++k) {
          acc += fy[y].weights[k] * tmp[((fy[y].first + k) * out_w + x) * c + ch];
        }
        out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
  return out;
}

}  // namespace emplace::raster
