#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace carfluents::oracle {

struct SuiteRow {
  std::string name;
  int cases = 0;
  int passed = 0;
  double max_err = 0.0;
  double millis = 0.0;
  bool ok = false;
  std::string note;
};

/// Brute-force equivalence checks: distance transform, tree inference, the
/// part-root loop, proposal linking, score-feature duality and VLAD
/// aggregation, at the sizes and counts the acceptance criteria pin down.
std::vector<SuiteRow> run_oracle_suite(std::uint64_t seed);

void write_suite_csv(const std::vector<SuiteRow>& rows, const std::string& path);
bool suite_all_passed(const std::vector<SuiteRow>& rows);

}  // namespace carfluents::oracle
