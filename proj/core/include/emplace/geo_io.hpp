#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "emplace/geo.hpp"

namespace emplace::geo {

/// Where panorama metadata comes from. Only local dumps are implemented.
class PanoramaSource {
 public:
  virtual ~PanoramaSource() = default;
  virtual std::vector<PanoramaMeta> fetch() const = 0;
};

/// panoramas.csv with header id,timestamp,lat,lon,heading,height (any column order).
class CsvPanoramaSource final : public PanoramaSource {
 public:
  CsvPanoramaSource(std::filesystem::path path, BoundingBox bbox) : path_(std::move(path)), bbox_(bbox) {}
  std::vector<PanoramaMeta> fetch() const override;

 private:
  std::filesystem::path path_;
  BoundingBox bbox_;
};

/// One JSON object per line with the same fields as the CSV.
class JsonlPanoramaSource final : public PanoramaSource {
 public:
  JsonlPanoramaSource(std::filesystem::path path, BoundingBox bbox) : path_(std::move(path)), bbox_(bbox) {}
  std::vector<PanoramaMeta> fetch() const override;

 private:
  std::filesystem::path path_;
  BoundingBox bbox_;
};

/// Placeholder for the municipal panorama API; fetch() always throws.
class RemoteApiPanoramaSource final : public PanoramaSource {
 public:
  explicit RemoteApiPanoramaSource(std::string endpoint) : endpoint_(std::move(endpoint)) {}
  std::vector<PanoramaMeta> fetch() const override;

 private:
  std::string endpoint_;
};

/// Picks the CSV or JSONL reader from the file extension.
std::unique_ptr<PanoramaSource> open_panorama_dump(const std::filesystem::path& path,
                                                   const BoundingBox& bbox);

void write_panoramas_csv(const std::filesystem::path& path, const std::vector<PanoramaMeta>& pts);

/// JSON list of {region_id, area_id, ring:[[lat,lon],...]}.
std::vector<RegionPolygon> read_regions(const std::filesystem::path& path, double dilation_m = 5.0);
void write_regions(const std::filesystem::path& path, const std::vector<RegionPolygon>& regions);

/// Water mask: either a list of rings or a list of {ring:[...]} objects.
std::vector<RegionPolygon> read_water_mask(const std::filesystem::path& path);

std::string cluster_to_json_line(const Cluster& c);
Cluster cluster_from_json_line(const std::string& line);
void write_clusters_jsonl(const std::filesystem::path& path, const std::vector<Cluster>& clusters);
std::vector<Cluster> read_clusters_jsonl(const std::filesystem::path& path);

}  // namespace emplace::geo
