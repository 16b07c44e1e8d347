#include "bmpc/bench.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "bmpc/error.hpp"
#include "bmpc/metrics.hpp"
#include "bmpc/nonlinear.hpp"
#include "bmpc/party.hpp"
#include "bmpc/proto_bm.hpp"

namespace bmpc {
namespace {

const RingParams kPaperRing{64, 14};

SharePair random_shares(const Shape& shape, int scale, std::mt19937_64& rng,
                        const RingParams& p) {
  FixedTensor t(shape, scale);
  for (auto& w : t.words()) w = reduce(rng(), p);
  return share(t, rng, p);
}

nlohmann::json stats_row(const CommStats& s) {
  const auto off = s.total_bits(Phase::kOffline), on = s.total_bits(Phase::kOnline);
  return {{"offline_bits", off},
          {"online_bits", on},
          {"online_rounds", s.rounds(Phase::kOnline)},
          {"total_bytes", static_cast<double>(off + on) / 8.0},
          {"total_mb", static_cast<double>(off + on) / 8.0 / kMiB}};
}

// ---------------------------------------------------------------- conv-comm

nlohmann::json conv_comm(const BenchOptions& o) {
  const ConvShape g{128, 12, 12, 20, 5, 5, 50};
  const auto p = kPaperRing;
  const BilinearSpec specs[] = {BilinearSpec::conv2d_fwd(g), BilinearSpec::conv2d_bwd_input(g),
                                BilinearSpec::conv2d_bwd_filter(g)};
  nlohmann::json rows = nlohmann::json::array();
  std::mt19937_64 rng(o.seed);
  for (const auto& spec : specs) {
    const auto a = random_shares(spec.shape_a(), 0, rng, p);
    const auto b = random_shares(spec.shape_b(), 0, rng, p);
    std::array<FixedTensor, 2> c;
    Party::Options opts;
    opts.accounting_only = o.accounting_only;
    const auto stf = run_local_sim(p, o.seed, [&](Party& party) {
      party.keep(c, bm_multiply(party, spec, party.input(a), party.input(b)).c);
    }, opts);

    nlohmann::json r = stats_row(stf.merged);
    r["op"] = to_string(spec.kind());
    r["method"] = "bilinear";
    r["closed_offline_bits"] = bm_closed_form_bits(spec, Phase::kOffline, p);
    r["closed_online_bits"] = bm_closed_form_bits(spec, Phase::kOnline, p);
    if (!o.accounting_only) {
      const auto expect = eval(spec, reconstruct(a.first, a.second, p),
                               reconstruct(b.first, b.second, p), p);
      r["exact"] = reconstruct(c[0], c[1], p) == expect;
    }

    Party::Options acc;
    acc.accounting_only = true;
    const auto base = run_local_sim(p, o.seed, [&](Party& party) {
      im2col_baseline_multiply(party, spec, party.input(a), party.input(b));
    }, acc);
    nlohmann::json br = stats_row(base.merged);
    br["op"] = to_string(spec.kind());
    br["method"] = "im2col";
    br["closed_offline_bits"] = im2col_closed_form_bits(spec, Phase::kOffline, p);
    br["closed_online_bits"] = im2col_closed_form_bits(spec, Phase::kOnline, p);

    const double stf_total = r["total_bytes"].get<double>();
    const double base_total = br["total_bytes"].get<double>();
    r["savings_pct"] = 100.0 * (1.0 - stf_total / base_total);
    rows.push_back(std::move(r));
    rows.push_back(std::move(br));
  }
  return rows;
}

// ---------------------------------------------------------------- sigmoid

template <class Fn>
std::pair<std::vector<double>, CommStats> run_elementwise(const std::vector<double>& xs,
                                                         std::uint64_t seed, Fn&& fn) {
  const auto p = kPaperRing;
  std::mt19937_64 rng(seed);
  const auto x = share(encode(xs, {xs.size()}, p, static_cast<int>(p.f)), rng, p);
  std::array<FixedTensor, 2> out;
  const auto sim = run_local_sim(p, seed, [&](Party& party) {
    party.keep(out, fn(party, party.input(x)));
  });
  return {decode(reconstruct(out[0], out[1], p), p), sim.merged};
}

nlohmann::json sigmoid_suite(const BenchOptions& o) {
  const auto p = kPaperRing;
  std::vector<double> grid;
  for (int i = -512; i <= 512; ++i) grid.push_back(i / 64.0);
  const std::size_t N = grid.size();
  nlohmann::json rows = nlohmann::json::array();

  auto fourier = [](Party& party, const FixedTensor& x) { return sigmoid_fourier(party, x).value; };
  auto cheb = [](Party& party, const FixedTensor& x) { return sigmoid_chebyshev(party, x); };
  const std::vector<double> far = {12.0, -12.0, 16.0, -16.0};

  for (const std::string method : {"fourier", "chebyshev"}) {
    const bool is_f = method == "fourier";
    auto [vals, stats] = is_f ? run_elementwise(grid, o.seed, fourier)
                              : run_elementwise(grid, o.seed, cheb);
    double err = 0.0;
    for (std::size_t i = 0; i < N; ++i) err = std::max(err, std::fabs(vals[i] - float_sigmoid(grid[i])));
    auto [fv, fstats] = is_f ? run_elementwise(far, o.seed + 1, fourier)
                             : run_elementwise(far, o.seed + 1, cheb);
    nlohmann::json r;
    r["method"] = method;
    r["elements"] = N;
    r["online_rounds"] = stats.rounds(Phase::kOnline);
    r["offline_bits_per_elem"] = static_cast<double>(stats.total_bits(Phase::kOffline)) / N;
    r["online_bits_per_elem"] = static_cast<double>(stats.total_bits(Phase::kOnline)) / N;
    r["max_abs_err"] = err;
    r["err_at_12"] = std::fabs(fv[0] - float_sigmoid(12.0));
    r["value_at_12"] = fv[0];
    r["value_at_16"] = fv[2];
    r["value_at_minus_16"] = fv[3];
    rows.push_back(std::move(r));
  }
  (void)p;
  return rows;
}

// ---------------------------------------------------------------- softmax

std::vector<double> gaussian(std::size_t count, std::uint64_t seed) {
  boost::random::mt19937_64 rng(seed);
  boost::random::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(count);
  for (auto& x : v) x = nd(rng);
  return v;
}

nlohmann::json softmax_kl(const BenchOptions& o) {
  const auto p = kPaperRing;
  std::vector<std::size_t> sizes = {10, 100, 1000};
  if (o.long_run) sizes.push_back(10000);
  const std::size_t B = 128;
  const double clamp = std::ldexp(1.0, -static_cast<int>(p.f));
  nlohmann::json rows = nlohmann::json::array();
  for (const auto m : sizes) {
    const auto xs = gaussian(B * m, o.seed + m);
    std::mt19937_64 rng(o.seed);
    const auto x = share(encode(xs, {B, m}, p, static_cast<int>(p.f)), rng, p);
    std::array<FixedTensor, 2> out;
    const auto sim = run_local_sim(p, o.seed, [&](Party& party) {
      party.keep(out, softmax_protocol(party, party.input(x)));
    });
    const auto q = decode(reconstruct(out[0], out[1], p), p);
    const auto ref = float_softmax(xs, B, m);
    const std::vector<double> uniform(B * m, 1.0 / static_cast<double>(m));
    double dev = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += q[r * m + j];
      dev = std::max(dev, std::fabs(s - 1.0));
    }
    rows.push_back({{"classes", m},
                    {"batch", B},
                    {"steps", 16},
                    {"online_rounds", sim.merged.rounds(Phase::kOnline)},
                    {"mean_kl", mean_kl(ref, q, B, m, clamp)},
                    {"uniform_kl", mean_kl(ref, uniform, B, m, clamp)},
                    {"max_sum_dev", dev}});
  }
  return rows;
}

nlohmann::json softmax_comm(const BenchOptions& o) {
  const auto p = kPaperRing;
  nlohmann::json rows = nlohmann::json::array();
  for (const std::size_t B : {std::size_t{1}, std::size_t{128}}) {
    const std::size_t m = 10;
    const unsigned steps = 16;
    std::mt19937_64 rng(o.seed);
    const auto x = share(encode(gaussian(B * m, o.seed), {B, m}, p, static_cast<int>(p.f)), rng, p);
    // Online bits sent by each compute party after every Euler step.
    std::array<std::vector<std::uint64_t>, 2> snap;
    const auto sim = run_local_sim(p, o.seed, [&](Party& party) {
      SoftmaxOptions so;
      so.steps = steps;
      auto& mine = snap[std::min(party.index(), 1)];
      if (party.online() && !party.is_dealer()) {
        mine.assign(1, party.endpoint().stats().total_bits(Phase::kOnline));
        so.on_iteration = [&](unsigned, const FixedTensor&) {
          mine.push_back(party.endpoint().stats().total_bits(Phase::kOnline));
        };
      }
      softmax_protocol(party, party.input(x), so);
    });
    std::vector<std::uint64_t> per_iter(steps);
    for (unsigned t = 0; t < steps; ++t) {
      per_iter[t] = (snap[0][t + 1] - snap[0][t]) + (snap[1][t + 1] - snap[1][t]);
    }
    bool steady = true;
    for (unsigned t = 1; t < steps; ++t) steady = steady && per_iter[t] == per_iter[1];
    rows.push_back({{"classes", m},
                    {"rows", B},
                    {"steps", steps},
                    {"online_rounds", sim.merged.rounds(Phase::kOnline)},
                    {"closed_rounds", softmax_rounds(steps)},
                    {"first_iteration_bits", per_iter[0]},
                    {"steady_bits_per_iteration", per_iter[1]},
                    {"steady_constant", steady},
                    {"closed_steady_bits", softmax_step_bits(B, m, p)},
                    {"one_time_bits", per_iter[0] - per_iter[1]},
                    {"closed_one_time_bits", softmax_one_time_bits(B, m, p)},
                    {"total_online_bits", sim.merged.total_bits(Phase::kOnline)},
                    {"offline_bits", sim.merged.total_bits(Phase::kOffline)}});
  }
  return rows;
}

// ---------------------------------------------------------------- sin

nlohmann::json sin_suite(const BenchOptions& o) {
  const auto p = kPaperRing;
  const unsigned m = 5;
  static constexpr int kFreq[] = {1, 2, 3, 4, 5};
  boost::random::mt19937_64 rng(o.seed);
  boost::random::uniform_real_distribution<double> u(-16.0, 16.0);
  std::vector<double> xs(10000);
  for (auto& x : xs) x = u(rng);
  std::mt19937_64 srng(o.seed);
  const auto x = share(encode(xs, {xs.size()}, p, static_cast<int>(p.f)), srng, p);
  std::array<std::array<FixedTensor, 2>, 5> out;
  const auto sim = run_local_sim(p, o.seed, [&](Party& party) {
    auto w = sin_protocol(party, party.input(x), kFreq, m);
    for (std::size_t j = 0; j < 5; ++j) party.keep(out[j], w[j]);
  });
  double err = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    const auto v = decode(reconstruct(out[j][0], out[j][1], p), p);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      err = std::max(err, std::fabs(v[i] - float_sin(2.0 * std::numbers::pi * kFreq[j] * xs[i] / 32.0)));
    }
  }
  const double N = static_cast<double>(xs.size());
  nlohmann::json rows = nlohmann::json::array();
  rows.push_back({{"m", m},
                  {"f", p.f},
                  {"frequencies", 5},
                  {"elements", xs.size()},
                  {"online_rounds", sim.merged.rounds(Phase::kOnline)},
                  {"online_bits_per_elem", static_cast<double>(sim.merged.total_bits(Phase::kOnline)) / N},
                  {"offline_bits_per_elem", static_cast<double>(sim.merged.total_bits(Phase::kOffline)) / N},
                  {"max_abs_err", err}});
  return rows;
}

}  // namespace

nlohmann::json run_bench(const BenchOptions& o) {
  nlohmann::json rows;
  if (o.suite == "conv-comm") {
    rows = conv_comm(o);
  } else if (o.suite == "sigmoid") {
    rows = sigmoid_suite(o);
  } else if (o.suite == "softmax-kl") {
    rows = softmax_kl(o);
  } else if (o.suite == "softmax-comm") {
    rows = softmax_comm(o);
  } else if (o.suite == "sin") {
    rows = sin_suite(o);
  } else {
    throw ConfigError("unknown bench suite '" + o.suite + "'");
  }
  return {{"suite", o.suite}, {"seed", o.seed}, {"rows", rows}};
}

std::string rows_to_csv(const nlohmann::json& rows) {
  std::set<std::string> keys;
  for (const auto& r : rows) {
    for (auto it = r.begin(); it != r.end(); ++it) keys.insert(it.key());
  }
  std::ostringstream os;
  bool first = true;
  for (const auto& k : keys) {
    os << (first ? "" : ",") << k;
    first = false;
  }
  os << "\n";
  for (const auto& r : rows) {
    first = true;
    for (const auto& k : keys) {
      os << (first ? "" : ",");
      first = false;
      if (!r.contains(k)) continue;
      const auto& v = r[k];
      os << (v.is_string() ? v.get<std::string>() : v.dump());
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace bmpc
