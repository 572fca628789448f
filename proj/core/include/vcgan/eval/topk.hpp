#pragma once

#include <optional>
#include <string>
#include <vector>

namespace vcgan::eval {

inline const std::vector<int> kDefaultKs{1, 3, 5, 10, 20};

// 100 * min(K, M) / M. Throws InvalidArgument for M < 1 or K < 1.
double chance_baseline(int n_speakers, int k);

struct GroupKey {
  std::string source_group;  // "in" or "out"
  std::string target_group;
  char target_gender = '?';

  bool operator==(const GroupKey&) const = default;
};

struct Trial {
  GroupKey group;
  int rank = 0;  // 1-based
};

struct TopKRow {
  GroupKey group;
  int trials = 0;
  // Percent per K; absent (not zero) when the cell has no trial.
  std::optional<std::vector<double>> accuracy;
};

struct TopKReport {
  std::vector<int> ks;
  int n_speakers = 0;
  std::vector<TopKRow> rows;
  std::vector<double> chance;
};

// One row per requested cell, in the order given. accuracy@K is the share of
// the cell's trials with rank <= K.
TopKReport topk_report(const std::vector<Trial>& trials, const std::vector<GroupKey>& cells, int n_speakers,
                       const std::vector<int>& ks = kDefaultKs);

std::string report_to_json(const TopKReport& report);
std::string report_to_text(const TopKReport& report);

}  // namespace vcgan::eval
