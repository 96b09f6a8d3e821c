#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "terrain/objective.hpp"

namespace terrain {

using json = nlohmann::json;

bool MetricReport::has_errors() const {
  return std::any_of(rows.begin(), rows.end(), [](const SceneMetrics &r) { return r.error.has_value(); });
}

MetricReport assemble_report(std::vector<SceneMetrics> scenes, const std::vector<double> &edges) {
  MetricReport report;
  report.edges = edges;
  report.rows = std::move(scenes);
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const SceneMetrics &a, const SceneMetrics &b) { return a.scene_id < b.scene_id; });
  return report;
}

std::vector<double> round_preserving_sum(const std::vector<double> &values, int decimals) {
  const double scale = std::pow(10.0, decimals);
  std::vector<long long> units(values.size());
  std::vector<double> remainders(values.size());
  double exact_total = 0.0;
  long long floor_total = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double scaled = values[i] * scale;
    units[i] = static_cast<long long>(std::floor(scaled));
    remainders[i] = scaled - static_cast<double>(units[i]);
    exact_total += scaled;
    floor_total += units[i];
  }
  long long missing = std::llround(exact_total) - floor_total;
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; i < order.size() && missing > 0; ++i, --missing)
    ++units[order[i]];
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<double>(units[i]) / scale;
  return out;
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string edge_label(double e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", e);
  return buf;
}

} // namespace

std::string report_to_json(const MetricReport &report) {
  json j;
  j["histogram_edges"] = report.edges;
  j["rows"] = json::array();
  for (const auto &r : report.rows) {
    json row = {{"scene_id", r.scene_id}};
    if (r.error) {
      row["error"] = *r.error;
    } else {
      row["acc"] = r.acc;
      row["cd_pt"] = r.cd_pt;
      row["histogram"] = r.histogram.percentages;
      row["n_pred"] = r.n_pred;
      row["n_gt"] = r.n_gt;
    }
    j["rows"].push_back(std::move(row));
  }
  return j.dump(1) + "\n";
}

std::string report_to_table(const MetricReport &report) {
  std::vector<std::string> header{"scene", "acc", "cd_pt"};
  for (double e : report.edges)
    header.push_back("<" + edge_label(e));
  header.push_back(">=" + edge_label(report.edges.back()));

  std::vector<std::vector<std::string>> cells{header};
  for (const auto &r : report.rows) {
    std::vector<std::string> row{r.scene_id};
    if (r.error) {
      row.push_back("error: " + *r.error);
    } else {
      row.push_back(fixed(r.acc, 2));
      row.push_back(fixed(r.cd_pt, 3));
      for (double p : round_preserving_sum(r.histogram.percentages, 2))
        row.push_back(fixed(p, 2));
    }
    cells.push_back(std::move(row));
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto &row : cells)
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c)
      width[c] = std::max(width[c], row[c].size());

  std::ostringstream os;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    const auto &row = cells[r];
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0)
        os << " | ";
      const std::size_t w = c < width.size() ? width[c] : 0;
      if (c == 0 || row.size() < header.size())
        os << row[c] << std::string(w > row[c].size() && c + 1 < row.size() ? w - row[c].size() : 0, ' ');
      else
        os << std::string(w - row[c].size(), ' ') << row[c];
    }
    os << "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c)
        total += width[c] + (c > 0 ? 3 : 0);
      os << std::string(total, '-') << "\n";
    }
  }
  return os.str();
}

} // namespace terrain
