#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace emplace::raster {

/// 8-bit interleaved raster whose horizontal axis is periodic: column
/// `width` is column 0 again.
class Panorama {
 public:
  Panorama() = default;
  Panorama(std::size_t width, std::size_t height, std::size_t channels, double heading = 0.0);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t channels() const noexcept { return channels_; }
  double heading() const noexcept { return heading_; }
  void set_heading(double h) noexcept { heading_ = h; }

  std::uint8_t& at(std::size_t col, std::size_t row, std::size_t ch) {
    return pixels_[(row * width_ + col) * channels_ + ch];
  }
  std::uint8_t at(std::size_t col, std::size_t row, std::size_t ch) const {
    return pixels_[(row * width_ + col) * channels_ + ch];
  }
  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  friend bool operator==(const Panorama& a, const Panorama& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.channels_ == b.channels_ &&
           a.pixels_ == b.pixels_;
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t channels_ = 0;
  double heading_ = 0.0;
  std::vector<std::uint8_t> pixels_;
};

struct PatchGeometry {
  std::size_t patch_px = 14;
  std::size_t grid_w = 50;
  std::size_t grid_h = 15;

  std::size_t image_width() const noexcept { return grid_w * patch_px; }
  std::size_t image_height() const noexcept { return grid_h * patch_px; }
  std::size_t num_patches() const noexcept { return grid_w * grid_h; }
  /// Patch tokens plus the cls token.
  std::size_t seq_len() const noexcept { return num_patches() + 1; }

  /// Throws ConfigError unless both dimensions divide by patch_px.
  static PatchGeometry for_image(std::size_t width, std::size_t height, std::size_t patch_px = 14);
};

/// Full-height black rectangle centred at a relative column position.
struct MaskRect {
  double center_rel_col = 0.0;
  std::size_t width_px = 40;
};

struct PreprocessConfig {
  std::size_t crop_bottom_px = 800;
  bool rotate_by_heading = true;
  std::vector<MaskRect> masks{{0.0, 40}, {0.5, 40}};
};

/// Column shift (in pixels) that brings a panorama with `heading` to heading 0.
std::ptrdiff_t heading_shift_px(double heading, std::size_t width);

/// Circular column shift: output column j is input column (j + shift) mod W.
Panorama hrotate(const Panorama& img, std::ptrdiff_t shift_px);

/// Columns [cut, W) followed by [0, cut). Same permutation as hrotate(img, cut).
Panorama cut_and_flip(const Panorama& img, std::size_t cut_col);

/// Blacks out every mask rectangle (wrapping across the seam).
void apply_masks(Panorama& img, std::span<const MaskRect> masks);

/// Crop the bottom rows, rotate to a common heading, black out the antenna.
Panorama preprocess(const Panorama& raw, const PreprocessConfig& cfg = {});

/// Exact area-averaging resampler.
Panorama downsize(const Panorama& img, std::size_t out_w, std::size_t out_h,
                  std::size_t patch_px = 14);

Panorama read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Panorama& img);

/// Raw fixture: "PANO", u32 W, u32 H, u8 C (little-endian), row-major bytes.
Panorama read_raw(const std::filesystem::path& path);
void write_raw(const std::filesystem::path& path, const Panorama& img);

/// Dispatches on extension: ".png" or ".pano".
Panorama read_image(const std::filesystem::path& path);

}  // namespace emplace::raster
