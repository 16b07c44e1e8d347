#include <gtest/gtest.h>

#include "bmpc/error.hpp"
#include "bmpc/nn_train.hpp"
#include "bmpc/session.hpp"

using namespace bmpc;

namespace {

nlohmann::json base_config(int party) {
  return {{"party", party},
          {"peers", {{{"port", 31000}}, {{"port", 31001}}, {{"port", 31002}}}},
          {"ring", {{"n", 64}, {"f", 14}}},
          {"keys",
           {{"prf0", "000102030405060708090a0b0c0d0e0f"},
            {"prf1", "101112131415161718191a1b1c1d1e1f"}}},
          {"job", {{"kind", "lr"}, {"iterations", 2}, {"batch", 16}, {"rows", 64}}}};
}

}  // namespace

TEST(Session, ParsesConfig) {
  const auto c = parse_session_config(base_config(2));
  EXPECT_EQ(c.party, PartyId::kP2);
  EXPECT_EQ(c.peers[1].port, 31001);
  EXPECT_EQ(c.peers[1].host, "127.0.0.1");
  EXPECT_EQ(c.job.iterations, 2u);
  EXPECT_TRUE(c.key0());
  EXPECT_TRUE(c.key1());
}

TEST(Session, KeysLimitedToEntitlement) {
  const auto c0 = parse_session_config(base_config(0));
  EXPECT_TRUE(c0.key0());
  EXPECT_FALSE(c0.key1());
  auto j = base_config(1);
  j["keys"].erase("prf1");
  EXPECT_THROW(parse_session_config(j), ConfigError);
  auto j0 = base_config(0);
  j0["keys"].erase("prf1");
  EXPECT_NO_THROW(parse_session_config(j0));
}

TEST(Session, RejectsBadFields) {
  auto j = base_config(0);
  j["party"] = 3;
  EXPECT_THROW(parse_session_config(j), ConfigError);
  j = base_config(0);
  j["ring"]["n"] = 48;
  EXPECT_THROW(parse_session_config(j), ConfigError);
  j = base_config(0);
  j["mode"] = "carrier-pigeon";
  EXPECT_THROW(parse_session_config(j), ConfigError);
  j = base_config(0);
  j.erase("peers");
  EXPECT_THROW(parse_session_config(j), ConfigError);
  j = base_config(0);
  j["job"]["kind"] = "svm";
  EXPECT_THROW(parse_session_config(j), ConfigError);
  j = base_config(0);
  j["job"]["lr"] = -1.0;
  EXPECT_THROW(parse_session_config(j), ConfigError);
  j = base_config(0);
  j["keys"]["prf0"] = "xyz";
  EXPECT_THROW(parse_session_config(j), ConfigError);
}

TEST(Session, DigestsAgreeOnlyWhenConfigsMatch) {
  std::array<SessionConfig, 3> c;
  for (int i = 0; i < 3; ++i) c[i] = parse_session_config(base_config(i));
  std::array<std::array<std::uint64_t, 3>, 3> d;
  for (int i = 0; i < 3; ++i) d[i] = session_digests(c[i]);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) EXPECT_EQ(d[i][j], d[j][i]);

  auto j1 = base_config(1);
  j1["ring"]["f"] = 12;
  EXPECT_NE(session_digests(parse_session_config(j1))[0], d[0][1]);

  auto j2 = base_config(2);
  j2["keys"]["prf0"] = "ff0102030405060708090a0b0c0d0e0f";
  const auto bad = session_digests(parse_session_config(j2));
  EXPECT_NE(bad[0], d[0][2]);
  EXPECT_EQ(bad[1], d[1][2]);
}

TEST(Session, LocalTrainingReport) {
  JobConfig job;
  job.rows = 200;
  job.features = 4;
  job.iterations = 5;
  job.batch = 32;
  job.lr = 0.1;
  const auto r = run_training_local(job, {64, 14}, 1);
  EXPECT_EQ(r["metrics"]["kind"], "lr");
  EXPECT_GT(r["metrics"]["auc"].get<double>(), 0.5);
  EXPECT_EQ(r["stats"]["rounds"]["online"], 5 * kLrStepRounds + 1);
}
