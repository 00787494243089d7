#include "emplace/geo_io.hpp"

#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "emplace/error.hpp"
#include "json_util.hpp"

namespace emplace::geo {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    std::size_t start = 0;
    while (start < field.size() && field[start] == ' ') ++start;
    out.push_back(field.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("unparseable " + what + " '" + s + "'");
  }
}

json meta_to_json(const PanoramaMeta& m) {
  return json{{"id", m.id},
              {"timestamp", m.timestamp.iso()},
              {"lat", m.position.lat},
              {"lon", m.position.lon},
              {"heading", m.heading},
              {"height", m.height}};
}

PanoramaMeta meta_from_json(const json& j) {
  PanoramaMeta m;
  m.id = j.at("id").get<std::string>();
  m.timestamp = Date::parse(j.at("timestamp").get<std::string>());
  m.position = {j.at("lat").get<double>(), j.at("lon").get<double>()};
  m.heading = j.value("heading", 0.0);
  m.height = j.value("height", 0.0);
  m.region_id = j.value("region_id", std::string());
  m.area_id = j.value("area_id", std::string());
  return m;
}

std::vector<LatLon> ring_from_json(const json& ring) {
  std::vector<LatLon> out;
  for (const auto& v : ring) {
    if (!v.is_array() || v.size() != 2) throw DataError("ring vertex must be [lat, lon]");
    out.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  return out;
}

}  // namespace

std::vector<PanoramaMeta> CsvPanoramaSource::fetch() const {
  std::ifstream in(path_);
  if (!in) throw DataError("cannot open panorama metadata " + path_.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty panorama metadata " + path_.string());
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"id", "timestamp", "lat", "lon", "heading", "height"}) {
    if (!col.count(required)) {
      throw DataError(std::string("panorama metadata lacks column '") + required + "'");
    }
  }
  std::vector<PanoramaMeta> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() < header.size()) {
      throw DataError(path_.string() + ":" + std::to_string(lineno) + ": too few fields");
    }
    PanoramaMeta m;
    m.id = f[col["id"]];
    m.timestamp = Date::parse(f[col["timestamp"]]);
    m.position = {to_double(f[col["lat"]], "lat"), to_double(f[col["lon"]], "lon")};
    m.heading = to_double(f[col["heading"]], "heading");
    m.height = to_double(f[col["height"]], "height");
    out.push_back(validated(std::move(m), bbox_));
  }
  return out;
}

std::vector<PanoramaMeta> JsonlPanoramaSource::fetch() const {
  std::vector<PanoramaMeta> out;
  for (const auto& j : detail::read_jsonl(path_)) {
    try {
      out.push_back(validated(meta_from_json(j), bbox_));
    } catch (const json::exception& e) {
      throw DataError(path_.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<PanoramaMeta> RemoteApiPanoramaSource::fetch() const {
  throw ConfigError("live panorama API access is not available (endpoint " + endpoint_ +
                    "); use a local CSV/JSONL dump");
}

std::unique_ptr<PanoramaSource> open_panorama_dump(const std::filesystem::path& path,
                                                   const BoundingBox& bbox) {
  if (path.extension() == ".jsonl") return std::make_unique<JsonlPanoramaSource>(path, bbox);
  return std::make_unique<CsvPanoramaSource>(path, bbox);
}

void write_panoramas_csv(const std::filesystem::path& path, const std::vector<PanoramaMeta>& pts) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id,timestamp,lat,lon,heading,height\n";
  char buf[160];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof buf, ",%s,%.9f,%.9f,%.3f,%.3f\n", p.timestamp.iso().c_str(),
                  p.position.lat, p.position.lon, p.heading, p.height);
    out << p.id << buf;
  }
}

std::vector<RegionPolygon> read_regions(const std::filesystem::path& path, double dilation_m) {
  const json doc = detail::read_json(path);
  if (!doc.is_array()) throw DataError(path.string() + ": expected a list of regions");
  std::vector<RegionPolygon> out;
  try {
    for (const auto& r : doc) {
      RegionPolygon poly;
      poly.region_id = r.at("region_id").get<std::string>();
      poly.area_id = r.value("area_id", std::string(kUnassigned));
      poly.ring = ring_from_json(r.at("ring"));
      poly.dilation_m = dilation_m;
      if (!(ring_area_m2(poly) > 0.0)) {
        throw DataError("region " + poly.region_id + " has zero area");
      }
      out.push_back(std::move(poly));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

void write_regions(const std::filesystem::path& path, const std::vector<RegionPolygon>& regions) {
  json doc = json::array();
  for (const auto& r : regions) {
    json ring = json::array();
    for (const auto& v : r.ring) ring.push_back({v.lat, v.lon});
    doc.push_back({{"region_id", r.region_id}, {"area_id", r.area_id}, {"ring", ring}});
  }
  detail::write_json(path, doc);
}

std::vector<RegionPolygon> read_water_mask(const std::filesystem::path& path) {
  const json doc = detail::read_json(path);
  if (!doc.is_array()) throw DataError(path.string() + ": expected a list of water rings");
  std::vector<RegionPolygon> out;
  try {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      RegionPolygon poly;
      poly.region_id = "water-" + std::to_string(i);
      poly.ring = ring_from_json(doc[i].is_object() ? doc[i].at("ring") : doc[i]);
      poly.dilation_m = 0.0;
      out.push_back(std::move(poly));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

std::string cluster_to_json_line(const Cluster& c) {
  json members = json::array();
  for (const auto& m : c.members) members.push_back(meta_to_json(m));
  const json j{{"cluster_id", c.cluster_id},
               {"center", {c.center.lat, c.center.lon}},
               {"radius_m", c.radius_m},
               {"region_id", c.region_id},
               {"area_id", c.area_id},
               {"members", members}};
  return j.dump();
}

Cluster cluster_from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    Cluster c;
    c.cluster_id = j.at("cluster_id").get<std::string>();
    c.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
    c.radius_m = j.value("radius_m", 1.0);
    c.region_id = j.value("region_id", std::string(kUnassigned));
    c.area_id = j.value("area_id", std::string(kUnassigned));
    for (const auto& m : j.at("members")) {
      auto meta = meta_from_json(m);
      meta.region_id = c.region_id;
      meta.area_id = c.area_id;
      c.members.push_back(std::move(meta));
    }
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed cluster record: ") + e.what());
  }
}

void write_clusters_jsonl(const std::filesystem::path& path, const std::vector<Cluster>& clusters) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& c : clusters) out << cluster_to_json_line(c) << '\n';
}

std::vector<Cluster> read_clusters_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Cluster> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(cluster_from_json_line(line));
  }
  return out;
}

}  // namespace emplace::geo
