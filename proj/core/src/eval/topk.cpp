#include "vcgan/eval/topk.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "vcgan/error.hpp"

namespace vcgan::eval {

double chance_baseline(int n_speakers, int k) {
  if (n_speakers < 1 || k < 1) {
    throw Error(ErrorCode::kInvalidArgument, "chance baseline needs M >= 1 and K >= 1");
  }
  return 100.0 * std::min(k, n_speakers) / n_speakers;
}

TopKReport topk_report(const std::vector<Trial>& trials, const std::vector<GroupKey>& cells, int n_speakers,
                       const std::vector<int>& ks) {
  if (ks.empty()) throw Error(ErrorCode::kInvalidArgument, "no K requested");
  TopKReport r;
  r.ks = ks;
  r.n_speakers = n_speakers;
  for (int k : ks) r.chance.push_back(chance_baseline(n_speakers, k));
  for (const GroupKey& cell : cells) {
    TopKRow row{cell, 0, std::nullopt};
    std::vector<int> hits(ks.size(), 0);
    for (const Trial& t : trials) {
      if (!(t.group == cell)) continue;
      if (t.rank < 1 || t.rank > n_speakers) {
        throw Error(ErrorCode::kInvalidArgument, "rank " + std::to_string(t.rank) + " outside [1, M]");
      }
      ++row.trials;
      for (std::size_t i = 0; i < ks.size(); ++i) hits[i] += t.rank <= ks[i];
    }
    if (row.trials > 0) {
      std::vector<double> acc;
      for (int h : hits) acc.push_back(100.0 * h / row.trials);
      row.accuracy = std::move(acc);
    }
    r.rows.push_back(std::move(row));
  }
  return r;
}

std::string report_to_json(const TopKReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j{{"source_group", row.group.source_group},
                     {"target_group", row.group.target_group},
                     {"target_gender", std::string(1, row.group.target_gender)},
                     {"trials", row.trials}};
    j["accuracy"] = row.accuracy ? nlohmann::json(*row.accuracy) : nlohmann::json(nullptr);
    rows.push_back(std::move(j));
  }
  return nlohmann::json{{"ks", r.ks}, {"n_speakers", r.n_speakers}, {"chance", r.chance}, {"rows", rows}}.dump(2);
}

std::string report_to_text(const TopKReport& r) {
  std::ostringstream os;
  char buf[64];
  os << "source  target  gender  trials";
  for (int k : r.ks) {
    std::snprintf(buf, sizeof(buf), "  top-%-3d", k);
    os << buf;
  }
  os << '\n';
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof(buf), "%-6s  %-6s  %-6c  %6d", row.group.source_group.c_str(),
                  row.group.target_group.c_str(), row.group.target_gender, row.trials);
    os << buf;
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      if (row.accuracy) {
        std::snprintf(buf, sizeof(buf), "  %7.1f", (*row.accuracy)[i]);
      } else {
        std::snprintf(buf, sizeof(buf), "  %7s", "n/a");
      }
      os << buf;
    }
    os << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%-30s", ("chance (M=" + std::to_string(r.n_speakers) + ")").c_str());
  os << buf;
  for (double c : r.chance) {
    std::snprintf(buf, sizeof(buf), "  %7.1f", c);
    os << buf;
  }
  os << '\n';
  return os.str();
}

}  // namespace vcgan::eval
