#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

namespace bmpc {

struct BenchOptions {
  std::string suite;  // conv-comm | sigmoid | softmax-kl | softmax-comm | sin
  std::uint64_t seed = 1;
  bool long_run = false;
  // conv-comm: account the bilinear rows without real data as well.
  bool accounting_only = false;
};

inline constexpr double kMiB = 1024.0 * 1024.0;

// {"suite": ..., "rows": [...]} with one object per measured configuration.
nlohmann::json run_bench(const BenchOptions& options);

// Flattens rows to CSV with the union of keys as header (sorted).
std::string rows_to_csv(const nlohmann::json& rows);

}  // namespace bmpc
