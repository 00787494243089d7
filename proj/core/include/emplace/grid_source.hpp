#pragma once

#include <cstddef>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "emplace/model.hpp"
#include "emplace/raster.hpp"

namespace emplace::model {

/// Resolves a panorama id to its input grid (features for the toy encoder,
/// or externally computed tokens). A missing image yields nullopt.
class GridSource {
 public:
  virtual ~GridSource() = default;
  virtual std::optional<TokenGrid> load(const std::string& image_id) const = 0;
};

class MemoryGridSource final : public GridSource {
 public:
  void put(const std::string& id, TokenGrid grid) { grids_[id] = std::move(grid); }
  std::optional<TokenGrid> load(const std::string& image_id) const override;
  std::size_t size() const noexcept { return grids_.size(); }

 private:
  std::map<std::string, TokenGrid> grids_;
};

struct RasterInputConfig {
  raster::PreprocessConfig preprocess;
  std::size_t out_w = 700;
  std::size_t out_h = 210;
  std::size_t patch_px = 14;
};

/// Looks for <dir>/<id>.tgrd, then <dir>/<id>.png and <dir>/<id>.pano.
/// Rasters already at analysis resolution go straight to patch_features;
/// larger ones are preprocessed (crop, heading rotation, masks) and
/// downsized first. The heading comes from `headings` when present.
class DirectoryGridSource final : public GridSource {
 public:
  DirectoryGridSource(std::filesystem::path dir, RasterInputConfig cfg = {});
  void set_headings(std::map<std::string, double> headings) { headings_ = std::move(headings); }
  std::optional<TokenGrid> load(const std::string& image_id) const override;

 private:
  std::filesystem::path dir_;
  RasterInputConfig cfg_;
  raster::PatchGeometry geom_;
  std::map<std::string, double> headings_;
};

/// LRU cache in front of another source. Safe for concurrent readers.
class CachedGridSource final : public GridSource {
 public:
  CachedGridSource(const GridSource& inner, std::size_t capacity) : inner_(inner), capacity_(capacity) {}
  std::optional<TokenGrid> load(const std::string& image_id) const override;

 private:
  const GridSource& inner_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  mutable std::list<std::pair<std::string, std::optional<TokenGrid>>> lru_;
  mutable std::unordered_map<std::string, decltype(lru_)::iterator> index_;
};

}  // namespace emplace::model
