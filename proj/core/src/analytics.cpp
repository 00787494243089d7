#include "emplace/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "emplace/error.hpp"
#include "json_util.hpp"

namespace emplace::analytics {

using nlohmann::json;

std::vector<RegionStats> aggregate(const std::vector<detect::Detection>& detections,
                                   const std::vector<geo::Cluster>& clusters) {
  std::map<std::string, std::string> region_of;
  std::map<std::string, RegionStats> by_region;
  for (const auto& c : clusters) {
    region_of[c.cluster_id] = c.region_id;
    auto& s = by_region[c.region_id];
    s.region_id = c.region_id;
    ++s.n_clusters;
  }
  for (const auto& d : detections) {
    const auto it = region_of.find(d.cluster_id);
    if (it == region_of.end()) throw DataError("detection refers to unknown cluster " + d.cluster_id);
    auto& s = by_region[it->second];
    (d.kind == detect::DetectionKind::large ? s.n_large : s.n_small)++;
  }
  std::vector<RegionStats> out;
  out.reserve(by_region.size());
  for (auto& [id, s] : by_region) {
    s.rate_large = static_cast<double>(s.n_large) / static_cast<double>(s.n_clusters);
    s.rate_small = static_cast<double>(s.n_small) / static_cast<double>(s.n_clusters);
    out.push_back(s);
  }
  return out;
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw NumericalError("incomplete beta needs positive shape parameters");
  if (!(x >= 0.0 && x <= 1.0)) throw NumericalError("incomplete beta argument outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  constexpr double tiny = 1e-300;
  constexpr double tol = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    f *= d * c;

    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::fabs(delta - 1.0) < tol) return std::exp(log_front) * f / a;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

double t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw NumericalError("t distribution needs positive degrees of freedom");
  if (std::isinf(t)) return 0.0;
  if (std::isnan(t)) throw NumericalError("t statistic is NaN");
  return incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

Regression ols_regression(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DataError("regression inputs differ in length");
  if (x.size() < 3) throw DataError("regression needs at least 3 points");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DataError("regression inputs must be finite");
  }
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); })) {
    throw DataError("regression rejected: x is constant");
  }
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }

  Regression r;
  r.n = x.size();
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); })) {
    r.slope = 0.0;
    r.intercept = y.front();
    r.r2 = 0.0;
    r.p_value = 1.0;
    return r;
  }
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (r.slope * x[i] + r.intercept);
    ss_res += e * e;
  }
  r.r2 = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  const double dof = n - 2.0;
  const double se = std::sqrt(ss_res / dof / sxx);
  if (se == 0.0) {
    r.p_value = 0.0;
  } else {
    r.p_value = t_two_sided_p(r.slope / se, dof);
  }
  return r;
}

double bias_dispersion(const std::map<std::string, double>& per_area_accuracy) {
  if (per_area_accuracy.size() < 2) throw DataError("bias dispersion needs at least two areas");
  double mean = 0.0;
  for (const auto& [_, a] : per_area_accuracy) mean += a;
  mean /= static_cast<double>(per_area_accuracy.size());
  double ss = 0.0;
  for (const auto& [_, a] : per_area_accuracy) ss += (a - mean) * (a - mean);
  return std::sqrt(ss / static_cast<double>(per_area_accuracy.size()));
}

IndicatorTable read_indicator_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty indicator table " + path.string());
  IndicatorTable out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (comma == std::string::npos) throw DataError(where + ": expected region_id,value");
    const std::string id = line.substr(0, comma);
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw DataError(where + ": value is not a number");
    }
    if (!std::isfinite(v)) throw DataError(where + ": value is not finite");
    if (!out.emplace(id, v).second) throw DataError(where + ": duplicate region " + id);
  }
  return out;
}

void write_indicator_csv(const std::filesystem::path& path, const IndicatorTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "region_id,value\n" << std::setprecision(17);
  for (const auto& [id, v] : table) out << id << ',' << v << '\n';
}

RegressionBlock regress(const std::vector<RegionStats>& stats, const IndicatorTable& indicator,
                        detect::DetectionKind kind, Target target) {
  RegressionBlock b;
  b.kind = detect::kind_name(kind);
  b.target = target;
  for (const auto& s : stats) {
    const auto it = indicator.find(s.region_id);
    if (it == indicator.end()) continue;
    const bool large = kind == detect::DetectionKind::large;
    double y = 0.0;
    if (target == Target::rate) {
      y = large ? s.rate_large : s.rate_small;
    } else {
      y = static_cast<double>(large ? s.n_large : s.n_small);
    }
    b.x.push_back(it->second);
    b.y.push_back(y);
  }
  b.fit = ols_regression(b.x, b.y);
  return b;
}

Analysis analyze(const std::vector<detect::Detection>& detections, const std::vector<geo::Cluster>& clusters,
                 const IndicatorTable& indicator) {
  Analysis a;
  a.regions = aggregate(detections, clusters);
  for (auto kind : {detect::DetectionKind::large, detect::DetectionKind::small}) {
    for (auto target : {Target::rate, Target::count}) a.blocks.push_back(regress(a.regions, indicator, kind, target));
  }
  return a;
}

void write_analysis_json(const std::filesystem::path& path, const Analysis& a) {
  json regions = json::array();
  for (const auto& s : a.regions) {
    regions.push_back({{"region_id", s.region_id},
                       {"n_clusters", s.n_clusters},
                       {"n_large", s.n_large},
                       {"n_small", s.n_small},
                       {"rate_large", s.rate_large},
                       {"rate_small", s.rate_small}});
  }
  json blocks = json::array();
  for (const auto& b : a.blocks) {
    blocks.push_back({{"kind", b.kind},
                      {"target", b.target == Target::rate ? "rate" : "count"},
                      {"n", b.fit.n},
                      {"slope", b.fit.slope},
                      {"intercept", b.fit.intercept},
                      {"r2", b.fit.r2},
                      {"p_value", b.fit.p_value}});
  }
  detail::write_json(path, json{{"regions", regions}, {"regression", blocks}});
}

void write_scatter_svg(const std::filesystem::path& path, const RegressionBlock& block,
                       const std::string& x_label) {
  constexpr double W = 480, H = 320, M = 40;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (std::size_t i = 0; i < block.x.size(); ++i) {
    x0 = std::min(x0, block.x[i]);
    x1 = std::max(x1, block.x[i]);
    y0 = std::min(y0, block.y[i]);
    y1 = std::max(y1, block.y[i]);
  }
  if (block.x.empty()) x0 = y0 = 0.0, x1 = y1 = 1.0;
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  auto px = [&](double v) { return M + (v - x0) / (x1 - x0) * (W - 2 * M); };
  auto py = [&](double v) { return H - M - (v - y0) / (y1 - y0) * (H - 2 * M); };

  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\"" << H - M
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < block.x.size(); ++i) {
    s << "<circle cx=\"" << px(block.x[i]) << "\" cy=\"" << py(block.y[i]) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  s << "<line x1=\"" << px(x0) << "\" y1=\"" << py(block.fit.slope * x0 + block.fit.intercept) << "\" x2=\""
    << px(x1) << "\" y2=\"" << py(block.fit.slope * x1 + block.fit.intercept)
    << "\" stroke=\"firebrick\" stroke-width=\"2\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label
    << "</text>\n";
  s << "<text x=\"" << M << "\" y=\"" << M - 12 << "\" font-size=\"12\">" << block.kind << " "
    << (block.target == Target::rate ? "rate" : "count") << "  R2=" << std::setprecision(3) << block.fit.r2
    << "</text>\n";
  s << "</svg>\n";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << s.str();
}

}  // namespace emplace::analytics
