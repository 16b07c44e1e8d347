#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace bmpc {

// Float references. Everything here is double precision and independent of
// the ring code.
double float_sigmoid(double x);
double float_sin(double x);
// Row-wise softmax of a (rows, classes) matrix, shifted by the row maximum.
std::vector<double> float_softmax(std::span<const double> x, std::size_t rows,
                                  std::size_t classes);

// sum p ln(p / q) with q clamped to >= clamp and renormalized.
double kl_divergence(std::span<const double> p, std::span<const double> q, double clamp);
// Mean of row-wise KL over a (rows, classes) batch.
double mean_kl(std::span<const double> p, std::span<const double> q, std::size_t rows,
               std::size_t classes, double clamp);

// Mann-Whitney AUC; ties count one half.
double auc(std::span<const double> scores, std::span<const double> labels);

struct MetricReport {
  std::string metric;  // max_abs_err | KL | AUC
  std::string inputs;
  double value = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

}  // namespace bmpc
