#include "emplace/grid_source.hpp"

#include "emplace/error.hpp"

namespace emplace::model {

std::optional<TokenGrid> MemoryGridSource::load(const std::string& image_id) const {
  auto it = grids_.find(image_id);
  if (it == grids_.end()) return std::nullopt;
  return it->second;
}

DirectoryGridSource::DirectoryGridSource(std::filesystem::path dir, RasterInputConfig cfg)
    : dir_(std::move(dir)),
      cfg_(std::move(cfg)),
      geom_(raster::PatchGeometry::for_image(cfg_.out_w, cfg_.out_h, cfg_.patch_px)) {}

std::optional<TokenGrid> DirectoryGridSource::load(const std::string& image_id) const {
  const auto tgrd = dir_ / (image_id + ".tgrd");
  if (std::filesystem::exists(tgrd)) return load_token_grid(tgrd, &geom_);
  for (const char* ext : {".png", ".pano"}) {
    const auto path = dir_ / (image_id + ext);
    if (!std::filesystem::exists(path)) continue;
    raster::Panorama img = raster::read_image(path);
    if (img.width() != geom_.image_width() || img.height() != geom_.image_height()) {
      auto it = headings_.find(image_id);
      img.set_heading(it == headings_.end() ? 0.0 : it->second);
      img = raster::downsize(raster::preprocess(img, cfg_.preprocess), cfg_.out_w, cfg_.out_h,
                             cfg_.patch_px);
    }
    return as_token_grid(patch_features(img, geom_));
  }
  return std::nullopt;
}

std::optional<TokenGrid> CachedGridSource::load(const std::string& image_id) const {
  {
    std::lock_guard lock(mu_);
    auto it = index_.find(image_id);
    if (it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
  }
  auto grid = inner_.load(image_id);
  std::lock_guard lock(mu_);
  if (capacity_ == 0 || index_.count(image_id)) return grid;
  lru_.emplace_front(image_id, grid);
  index_[image_id] = lru_.begin();
  if (lru_.size() > capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
  }
  return grid;
}

}  // namespace emplace::model
