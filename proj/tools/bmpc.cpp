// Command-line driver: party runner, benchmarks, training demos, reports.
//
// Exit codes: 0 ok, 2 config, 3 handshake, 4 transport, 5 protocol, 1 other.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bmpc/bench.hpp"
#include "bmpc/error.hpp"
#include "bmpc/session.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kHandshake = 3, kTransport = 4, kProtocol = 5 };

void emit(const nlohmann::json& doc, const std::string& out, const std::string& format) {
  std::string text;
  if (format == "csv" && doc.contains("rows")) {
    text = bmpc::rows_to_csv(doc["rows"]);
  } else {
    text = doc.dump(2) + "\n";
  }
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out);
  if (!f) throw bmpc::ConfigError("cannot write " + out);
  f << text;
}

int run(int argc, char** argv) {
  CLI::App app{"Three-party bilinear-triple MPC toolkit"};
  app.require_subcommand(1);

  std::string config_path, mode = "sockets", suite, out, format = "json";
  std::uint64_t seed = 1;
  bool long_run = false, accounting_only = false;
  std::vector<std::string> inputs;
  bmpc::JobConfig job;
  unsigned ring_n = 64, ring_f = 14;

  auto* run_party = app.add_subcommand("run-party", "join a session described by a JSON config");
  run_party->add_option("--config", config_path, "session config")->required();
  run_party->add_option("--mode", mode, "sockets | local-sim")
      ->check(CLI::IsMember({"sockets", "local-sim"}));
  run_party->add_option("--out", out, "report path (overrides config)");

  auto* bench = app.add_subcommand("bench", "run a benchmark suite in local-sim mode");
  bench->add_option("--suite", suite, "benchmark suite")
      ->required()
      ->check(CLI::IsMember({"conv-comm", "sigmoid", "softmax-kl", "softmax-comm", "sin"}));
  bench->add_option("--seed", seed, "seed");
  bench->add_flag("--long", long_run, "include the largest configurations");
  bench->add_flag("--accounting-only", accounting_only, "zero-filled payloads for every row");
  bench->add_option("--out", out, "output path (stdout if omitted)");
  bench->add_option("--format", format, "json | csv")->check(CLI::IsMember({"json", "csv"}));

  std::vector<CLI::App*> trainers;
  for (const char* name : {"train-lr", "train-cnn-toy"}) {
    auto* t = app.add_subcommand(name, std::string("secure training demo (") + name + ")");
    t->add_option("--mode", mode, "local-sim")->check(CLI::IsMember({"local-sim"}));
    t->add_option("--data", job.data, "CSV path or 'synthetic'");
    t->add_option("--iterations", job.iterations, "SGD steps");
    t->add_option("--batch", job.batch, "batch size");
    t->add_option("--lr", job.lr, "learning rate");
    t->add_option("--seed", seed, "seed");
    t->add_option("--ring-n", ring_n, "ring bit width");
    t->add_option("--ring-f", ring_f, "fractional bits");
    t->add_option("--out", out, "report path");
    trainers.push_back(t);
  }

  auto* merge = app.add_subcommand("report-merge", "merge per-party CommStats reports");
  merge->add_option("inputs", inputs, "party report files")->required();
  merge->add_option("--out", out, "output path");

  CLI11_PARSE(app, argc, argv);

  if (*run_party) {
    auto cfg = bmpc::load_session_config(config_path);
    if (run_party->count("--mode")) cfg.mode = mode;
    if (!out.empty()) cfg.out = out;
    nlohmann::json report;
    if (cfg.mode == "local-sim") {
      report = bmpc::run_training_local(cfg.job, cfg.ring, cfg.key_seed.value_or(seed));
    } else {
      report = bmpc::run_party_sockets(cfg);
    }
    emit(report, cfg.out, "json");
    return kOk;
  }
  if (*bench) {
    bmpc::BenchOptions o{suite, seed, long_run, accounting_only};
    emit(bmpc::run_bench(o), out, format);
    return kOk;
  }
  for (auto* t : trainers) {
    if (!*t) continue;
    job.kind = t == trainers[0] ? "lr" : "cnn-toy";
    if (t == trainers[1] && !t->count("--batch")) job.batch = 8;
    if (t == trainers[1] && !t->count("--lr")) job.lr = 0.1;
    job.seed = seed;
    job = bmpc::parse_job_config(job.to_json());
    bmpc::RingParams ring{ring_n, ring_f};
    ring.validate();
    emit(bmpc::run_training_local(job, ring, seed), out, "json");
    return kOk;
  }
  if (*merge) {
    std::vector<bmpc::CommStats> parts;
    for (const auto& path : inputs) {
      std::ifstream f(path);
      if (!f) throw bmpc::ConfigError("cannot open " + path);
      nlohmann::json j;
      try {
        f >> j;
      } catch (const nlohmann::json::exception& e) {
        throw bmpc::ParseError(path + ": " + e.what());
      }
      parts.push_back(bmpc::CommStats::from_json(j.contains("stats") ? j["stats"] : j));
    }
    nlohmann::json doc;
    doc["stats"] = bmpc::CommStats::merge(parts).to_json();
    emit(doc, out, "json");
    return kOk;
  }
  return kOther;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const bmpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const bmpc::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const bmpc::HandshakeError& e) {
    std::cerr << "handshake error: " << e.what() << "\n";
    return kHandshake;
  } catch (const bmpc::TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kTransport;
  } catch (const bmpc::PhaseError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kProtocol;
  } catch (const bmpc::ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kProtocol;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
