#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "diskill/config.hpp"
#include "diskill/serialization.hpp"
#include "test_util.hpp"

using namespace diskill;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("diskill_test_" + name)).string();
}

}  // namespace

TEST_CASE("param store round trip is exact") {
  std::mt19937_64 rng(1);
  ParamStore s;
  s.put("a", Mat::Random(3, 4) * 1e6);
  s.put_vec("b", testutil::random_vec(5, rng, 1e-7));
  s.put_scalar("c", -0.1);
  s.put("empty", Mat(0, 0));
  s.put_meta("note", "two words here");
  const auto t = ParamStore::from_text(s.to_text());
  CHECK(t.get("a") == s.get("a"));
  CHECK(t.get_vec("b") == s.get_vec("b"));
  CHECK(t.get_scalar("c") == -0.1);
  CHECK(t.get("empty").size() == 0);
  CHECK(t.meta("note") == "two words here");
  CHECK(t.to_text() == s.to_text());
  CHECK_THROWS_AS(t.get("missing"), CheckpointError);
  CHECK_THROWS_AS(t.meta("missing"), CheckpointError);
}

TEST_CASE("format_double round trips") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = nd(rng) * std::pow(10.0, static_cast<int>(nd(rng) * 50));
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("altered or truncated text is rejected") {
  ParamStore s;
  s.put("w", Mat::Constant(2, 2, 1.5));
  const std::string text = s.to_text();
  std::string flipped = text;
  flipped[flipped.find("1.5")] = '2';
  CHECK_THROWS_AS(ParamStore::from_text(flipped), CheckpointError);
  CHECK_THROWS_AS(ParamStore::from_text(text.substr(0, text.size() / 2)), CheckpointError);
  CHECK_THROWS_AS(ParamStore::from_text(""), CheckpointError);
  CHECK_THROWS_AS(ParamStore::load(tmp_path("does_not_exist")), CheckpointError);
}

TEST_CASE("save writes atomically and load reads back") {
  const std::string path = tmp_path("store.txt");
  ParamStore s;
  s.put_scalar("x", 3.0);
  s.save(path);
  s.put_scalar("x", 4.0);
  s.save(path);
  CHECK(ParamStore::load(path).get_scalar("x") == 4.0);
  for (const auto& entry : std::filesystem::directory_iterator(std::filesystem::path(path).parent_path()))
    CHECK(entry.path().string().find("diskill_test_store.txt.") == std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("networks survive a store round trip") {
  std::mt19937_64 rng(3);
  const auto net = DenseNet::orthogonal({3, 5, 2}, rng, 1.4, 0.01);
  ParamStore s;
  put_net(s, "n", net);
  const auto back = get_net(ParamStore::from_text(s.to_text()), "n");
  CHECK(back.layer_dims() == net.layer_dims());
  CHECK(back.flat_params() == net.flat_params());
}

TEST_CASE("fnv1a64 known values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("config text round trip") {
  for (auto cfg : {default_reacher5_config(), desk_reacher2_config(), desk_gate_config()}) {
    cfg.run.seed = 77;
    cfg.model.expert_hidden = {16, 4};
    cfg.update.alpha = 0.123456789012345;
    const auto back = TrainConfig::parse(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());
    CHECK(back.model_hash() == cfg.model_hash());
  }
}

TEST_CASE("config parsing rejects bad input") {
  const std::string base = desk_reacher2_config().to_text();
  CHECK_THROWS_AS(TrainConfig::parse(base + "\n[update]\nunknown_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("[nosection]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("[update]\nalpha = abc\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("[update]\nalpha = -1\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("[model]\nnum_experts = 0\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::load(tmp_path("missing.cfg")), ConfigError);
  // comments and blank lines are fine; unspecified keys keep defaults
  const auto cfg = TrainConfig::parse("# hello\n\n[model]\nnum_experts = 3 # three\n");
  CHECK(cfg.model.num_experts == 3);
  CHECK(cfg.update.beta == UpdateConfig{}.beta);
}

TEST_CASE("model hash ignores run bookkeeping but not learning settings") {
  auto a = desk_reacher2_config();
  auto b = a;
  b.run.max_iterations = 5;
  b.run.log_path = "x.csv";
  b.run.checkpoint_every = 3;
  b.run.threads = 7;
  CHECK(a.model_hash() == b.model_hash());
  b.run.seed = 1;
  CHECK(a.model_hash() != b.model_hash());
  b = a;
  b.update.beta = 7.0;
  CHECK(a.model_hash() != b.model_hash());
  b = a;
  b.env.kind = "gate";
  CHECK(a.model_hash() != b.model_hash());
}
