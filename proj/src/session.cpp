#include "bmpc/session.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <cmath>
#include <fstream>
#include <random>

#include "bmpc/error.hpp"
#include "bmpc/metrics.hpp"
#include "bmpc/nn_train.hpp"
#include "bmpc/nonlinear.hpp"

namespace bmpc {

nlohmann::json JobConfig::to_json() const {
  return {{"kind", kind},     {"data", data},   {"rows", rows},
          {"features", features}, {"iterations", iterations}, {"batch", batch},
          {"lr", lr},         {"seed", seed}};
}

JobConfig parse_job_config(const nlohmann::json& j) {
  JobConfig c;
  try {
    c.kind = j.value("kind", c.kind);
    c.data = j.value("data", c.data);
    c.rows = j.value("rows", c.rows);
    c.features = j.value("features", c.features);
    c.iterations = j.value("iterations", c.iterations);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("job: ") + e.what());
  }
  if (c.kind != "lr" && c.kind != "cnn-toy") {
    throw ConfigError("job.kind must be 'lr' or 'cnn-toy', got '" + c.kind + "'");
  }
  if (c.batch == 0 || c.iterations == 0) throw ConfigError("job.batch and job.iterations must be positive");
  if (!(c.lr > 0.0)) throw ConfigError("job.lr must be positive");
  return c;
}

SessionConfig parse_session_config(const nlohmann::json& j) {
  SessionConfig c;
  try {
    const int party = j.at("party").get<int>();
    if (party < 0 || party > 2) throw ConfigError("party must be 0, 1 or 2");
    c.party = party_from_index(party);
    c.mode = j.value("mode", c.mode);
    if (c.mode != "sockets" && c.mode != "local-sim") {
      throw ConfigError("mode must be 'sockets' or 'local-sim'");
    }
    if (j.contains("peers")) {
      const auto& peers = j.at("peers");
      if (!peers.is_array() || peers.size() != 3) throw ConfigError("peers must list three endpoints");
      for (int i = 0; i < 3; ++i) {
        c.peers[i].host = peers[i].value("host", std::string("127.0.0.1"));
        c.peers[i].port = peers[i].at("port").get<std::uint16_t>();
      }
    } else if (c.mode == "sockets") {
      throw ConfigError("sockets mode needs a peers list");
    }
    if (j.contains("ring")) {
      c.ring.n = j["ring"].value("n", c.ring.n);
      c.ring.f = j["ring"].value("f", c.ring.f);
    }
    c.ring.validate();
    if (j.contains("keys")) {
      const auto& k = j.at("keys");
      if (k.contains("prf0")) c.prf0_hex = k.at("prf0").get<std::string>();
      if (k.contains("prf1")) c.prf1_hex = k.at("prf1").get<std::string>();
    }
    if (j.contains("seed")) c.key_seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("job")) c.job = parse_job_config(j.at("job"));
    c.out = j.value("out", std::string());
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  // Validates presence and format of the keys this party needs.
  if (c.party != PartyId::kP1 && !c.key0()) throw ConfigError("missing keys.prf0 (or seed)");
  if (c.party != PartyId::kP0 && !c.key1()) throw ConfigError("missing keys.prf1 (or seed)");
  return c;
}

SessionConfig load_session_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_session_config(j);
}

std::optional<PrfKey> SessionConfig::key0() const {
  if (party == PartyId::kP1) return std::nullopt;
  if (prf0_hex) return PrfKey::from_hex(*prf0_hex, KeyPair::kP0P2);
  if (key_seed) return PrfKey::derive(*key_seed, KeyPair::kP0P2);
  return std::nullopt;
}

std::optional<PrfKey> SessionConfig::key1() const {
  if (party == PartyId::kP0) return std::nullopt;
  if (prf1_hex) return PrfKey::from_hex(*prf1_hex, KeyPair::kP1P2);
  if (key_seed) return PrfKey::derive(*key_seed, KeyPair::kP1P2);
  return std::nullopt;
}

std::array<std::uint64_t, 3> session_digests(const SessionConfig& cfg) {
  const std::string common = std::string(kProtocolVersion) + "|n=" + std::to_string(cfg.ring.n) +
                             "|f=" + std::to_string(cfg.ring.f) + "|" + cfg.job.to_json().dump();
  auto digest = [&](const std::string& extra) { return derive_stream_id("handshake", 0, common + extra); };
  std::array<std::uint64_t, 3> d{};
  const int me = index_of(cfg.party);
  for (int j = 0; j < 3; ++j) {
    if (j == me) continue;
    if (me == 2 || j == 2) {
      const auto k = (me == 0 || j == 0) ? cfg.key0() : cfg.key1();
      d[j] = digest("|key=" + std::to_string(k->fingerprint()));
    } else {
      d[j] = digest("");
    }
  }
  return d;
}

// ---------------------------------------------------------------- jobs

namespace {

FixedTensor encode_vec(const std::vector<double>& v, Shape shape, const RingParams& p) {
  return encode(v, shape, p, static_cast<int>(p.f));
}

// Three stripe orientations on an 8x8 grid: horizontal, vertical, diagonal.
Dataset make_toy_images(std::size_t rows, std::size_t side, std::uint64_t seed) {
  boost::random::mt19937_64 rng(seed);
  boost::random::normal_distribution<double> noise(0.0, 0.1);
  boost::random::uniform_int_distribution<std::size_t> pos(0, side - 1);
  Dataset ds;
  ds.rows = rows;
  ds.cols = side * side;
  ds.X.assign(rows * side * side, -0.5);
  ds.y.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t cls = r % 3;
    const std::size_t at = pos(rng);
    ds.y[r] = static_cast<double>(cls);
    double* img = ds.X.data() + r * side * side;
    for (std::size_t a = 0; a < side; ++a) {
      std::size_t i = 0, j = 0;
      if (cls == 0) { i = at; j = a; }
      if (cls == 1) { i = a; j = at; }
      if (cls == 2) { i = a; j = (a + at) % side; }
      img[i * side + j] = 0.5;
    }
    for (std::size_t k = 0; k < side * side; ++k) img[k] += noise(rng);
  }
  return ds;
}

SharePair share_with(const FixedTensor& t, std::mt19937_64& rng, const RingParams& p) {
  return share(t, rng, p);
}

TrainingJob make_lr_job(const JobConfig& cfg, const RingParams& ring) {
  const auto ds = cfg.data == "synthetic" ? make_blobs(cfg.rows, cfg.features, cfg.seed)
                                          : load_csv(cfg.data, true);
  const std::size_t n = ds.rows, d = ds.cols, B = std::min(cfg.batch, ds.rows);
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  auto xs = std::make_shared<SharePair>(share_with(encode_vec(ds.X, {n, d}, ring), rng, ring));
  auto ys = std::make_shared<SharePair>(share_with(encode_vec(ds.y, {n}, ring), rng, ring));
  auto ws = std::make_shared<SharePair>(
      share_with(encode_vec(glorot_uniform(d, 1, d, cfg.seed + 1), {d}, ring), rng, ring));
  const auto order = shuffled_order(n, cfg.seed + 2);

  TrainingJob tj;
  tj.metrics = std::make_shared<std::array<nlohmann::json, 2>>();
  auto metrics = tj.metrics;
  tj.job = [=](Party& p) {
    const auto X = p.input(*xs);
    const auto y = p.input(*ys);
    auto w = p.input(*ws);
    std::vector<std::size_t> idx(B);
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
      for (std::size_t i = 0; i < B; ++i) idx[i] = order[(t * B + i) % n];
      w = lr_train_step(p, take_rows(X, idx), take_rows(y, idx), w, cfg.lr);
    }
    const auto model = open(p, w);
    if (!p.computing() || p.is_dealer()) return;
    const auto wd = decode(model, p.params());
    std::vector<double> scores(n);
    std::size_t warnings = 0;
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += ds.X[r * d + k] * wd[k];
      scores[r] = s;
      if (std::fabs(s) > 8.0) ++warnings;
    }
    (*metrics)[p.index()] = {{"kind", "lr"},
                             {"iterations", cfg.iterations},
                             {"auc", auc(scores, ds.y)},
                             {"domain_warnings", warnings},
                             {"weights", wd}};
  };
  return tj;
}

TrainingJob make_cnn_job(const JobConfig& cfg, const RingParams& ring) {
  CnnShape shape;
  shape.batch = cfg.batch;
  const std::size_t side = shape.height;
  Dataset ds;
  if (cfg.data == "synthetic") {
    ds = make_toy_images(std::max<std::size_t>(cfg.rows, cfg.batch), side, cfg.seed);
  } else {
    ds = load_csv(cfg.data, false);
    if (ds.cols != side * side) throw ConfigError("cnn-toy data needs 64 feature columns");
    for (double l : ds.y) {
      if (l != 0.0 && l != 1.0 && l != 2.0) throw ParseError("cnn-toy labels must be 0, 1 or 2");
    }
  }
  const std::size_t n = ds.rows, M = shape.classes, H = shape.hidden();
  std::vector<double> onehot(n * M, 0.0);
  for (std::size_t r = 0; r < n; ++r) onehot[r * M + static_cast<std::size_t>(ds.y[r])] = 1.0;

  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  auto xs = std::make_shared<SharePair>(share_with(encode_vec(ds.X, {n, side, side, 1}, ring), rng, ring));
  auto os = std::make_shared<SharePair>(share_with(encode_vec(onehot, {n, M}, ring), rng, ring));
  const auto g = shape.conv();
  auto ks = std::make_shared<SharePair>(share_with(
      encode_vec(glorot_uniform(g.r * g.s * g.C, g.r * g.s * g.D, g.r * g.s * g.D, cfg.seed + 1),
                 g.filter_shape(), ring),
      rng, ring));
  auto wsh = std::make_shared<SharePair>(
      share_with(encode_vec(glorot_uniform(H, M, H * M, cfg.seed + 3), {H, M}, ring), rng, ring));
  const auto order = shuffled_order(n, cfg.seed + 2);

  TrainingJob tj;
  tj.metrics = std::make_shared<std::array<nlohmann::json, 2>>();
  auto metrics = tj.metrics;
  tj.job = [=](Party& p) {
    const auto X = p.input(*xs);
    const auto Y = p.input(*os);
    CnnModel model{p.input(*ks), p.input(*wsh)};
    std::vector<std::size_t> idx(shape.batch);
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
      for (std::size_t i = 0; i < shape.batch; ++i) idx[i] = order[(t * shape.batch + i) % n];
      model = cnn_train_step(p, shape, take_rows(X, idx), take_rows(Y, idx), model, cfg.lr).model;
    }
    const auto K = open(p, model.K);
    const auto W = open(p, model.W);
    if (!p.computing() || p.is_dealer()) return;
    // Plaintext forward pass with the opened model.
    const auto kd = decode(K, p.params());
    const auto wd = decode(W, p.params());
    ConvShape one = g;
    one.B = 1;
    const auto conv = BilinearSpec::conv2d_fwd(one);
    const auto dense = BilinearSpec::matmul(1, H, M);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < n; ++r) {
      auto z = eval_real(conv, std::span(ds.X).subspan(r * side * side, side * side), kd);
      for (auto& v : z) v = fourier_sigmoid_real(v);
      const auto logits = eval_real(dense, z, wd);
      const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
      if (static_cast<double>(best) == ds.y[r]) ++correct;
    }
    (*metrics)[p.index()] = {{"kind", "cnn-toy"},
                             {"iterations", cfg.iterations},
                             {"train_accuracy", static_cast<double>(correct) / static_cast<double>(n)}};
  };
  return tj;
}

}  // namespace

TrainingJob make_training_job(const JobConfig& job, const RingParams& ring) {
  if (job.kind == "lr") return make_lr_job(job, ring);
  if (job.kind == "cnn-toy") return make_cnn_job(job, ring);
  throw ConfigError("unknown job kind '" + job.kind + "'");
}

nlohmann::json run_party_sockets(const SessionConfig& cfg) {
  auto tj = make_training_job(cfg.job, cfg.ring);
  auto links = connect_mesh(cfg.party, cfg.peers, std::chrono::milliseconds(cfg.timeout_ms));
  Endpoint ep(cfg.party, std::move(links));
  ep.set_timeout(std::chrono::milliseconds(cfg.timeout_ms));
  handshake(ep, session_digests(cfg));
  Party party(cfg.party, ep, cfg.ring, cfg.key0(), cfg.key1(), {});
  try {
    run_job(party, tj.job);
  } catch (...) {
    ep.close();
    throw;
  }
  nlohmann::json report;
  report["party"] = to_string(cfg.party);
  report["stats"] = ep.stats().to_json();
  if (!party.is_dealer()) report["metrics"] = (*tj.metrics)[party.index()];
  return report;
}

nlohmann::json run_training_local(const JobConfig& job, const RingParams& ring,
                                  std::uint64_t key_seed) {
  auto tj = make_training_job(job, ring);
  const auto sim = run_local_sim(ring, key_seed, tj.job);
  nlohmann::json report;
  report["job"] = job.to_json();
  report["stats"] = sim.merged.to_json();
  report["metrics"] = (*tj.metrics)[0];
  return report;
}

}  // namespace bmpc
