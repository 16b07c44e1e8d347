#include "bmpc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bmpc/error.hpp"

namespace bmpc {

double float_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double float_sin(double x) { return std::sin(x); }

std::vector<double> float_softmax(std::span<const double> x, std::size_t rows,
                                  std::size_t classes) {
  if (x.size() != rows * classes) throw ShapeError("float_softmax: size mismatch");
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * classes;
    double* o = out.data() + r * classes;
    const double mx = *std::max_element(in, in + classes);
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < classes; ++j) o[j] /= sum;
  }
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q, double clamp) {
  if (p.size() != q.size() || p.empty()) throw ShapeError("kl_divergence: dimension mismatch");
  std::vector<double> qc(q.begin(), q.end());
  for (auto& v : qc) v = std::max(v, clamp);
  const double qs = std::accumulate(qc.begin(), qc.end(), 0.0);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / (qc[i] / qs));
  }
  return std::max(kl, 0.0);
}

double mean_kl(std::span<const double> p, std::span<const double> q, std::size_t rows,
               std::size_t classes, double clamp) {
  if (p.size() != rows * classes || q.size() != rows * classes) {
    throw ShapeError("mean_kl: size mismatch");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    total += kl_divergence(p.subspan(r * classes, classes), q.subspan(r * classes, classes), clamp);
  }
  return total / static_cast<double>(rows);
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: size mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Average ranks over ties, then the Mann-Whitney U of the positives.
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = avg;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 0.5) {
      pos += 1;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw ShapeError("auc: need both classes");
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

nlohmann::json MetricReport::to_json() const {
  return {{"metric", metric}, {"inputs", inputs}, {"value", value},
          {"samples", samples}, {"seed", seed}};
}

}  // namespace bmpc
