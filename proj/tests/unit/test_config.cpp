#include <doctest.h>

#include "cvos/config.hpp"

using namespace cvos;

TEST_CASE("serialised configs parse back to the same configuration") {
  RunConfig c;
  set_config_value(c, "alpha", "3.25");
  set_config_value(c, "strategy", "prev");
  set_config_value(c, "erf_target", "4");
  set_config_value(c, "gc", "off");
  set_config_value(c, "lr", "0.1");
  c.sync();
  const std::string text = serialize_config(c);
  const RunConfig back = parse_config_text(text);
  CHECK(serialize_config(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(back.correction.alpha == 3.25);
  CHECK(back.inference.correction.alpha == 3.25);
  CHECK(back.inference.strategy == RefStrategy::prev);
  CHECK(back.erf.target_frame == 3);
  CHECK_FALSE(back.inference.gc);
  CHECK(back.train.lr == 0.1);
}

TEST_CASE("every key appears once in the snapshot") {
  const std::string text = serialize_config(RunConfig{});
  const std::string padded = "\n" + text;
  for (const std::string& k : config_keys()) {
    const auto first = padded.find("\n" + k + " = ");
    CHECK(first != std::string::npos);
    CHECK(padded.find("\n" + k + " = ", first + 1) == std::string::npos);
  }
}

TEST_CASE("comments and blank lines are ignored") {
  const RunConfig c = parse_config_text("# header\n\nseed = 5   # trailing\n  epochs=3\n");
  CHECK(c.seed == 5);
  CHECK(c.train.seed == 5);
  CHECK(c.synth.seed == 5);
  CHECK(c.train.epochs == 3);
}

TEST_CASE("errors carry the source line") {
  CHECK_THROWS_WITH_AS(parse_config_text("seed = 1\nbogus = 2\n", "cfg.txt"), doctest::Contains("cfg.txt:2:"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("epochs = -1\n", "a"), doctest::Contains("a:1:"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("epochs\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("alpha = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("n_val = 20\n"), ConfigError);
}

TEST_CASE("hash changes with any value") {
  RunConfig a, b;
  set_config_value(b, "n_iters", "11");
  CHECK(config_hash(a) != config_hash(b));
}
