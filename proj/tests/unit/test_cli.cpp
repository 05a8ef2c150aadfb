#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cvos/cli.hpp"

using namespace cvos;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = cli_dispatch(args, o, e);
  return {code, o.str(), e.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cvos_cli_" + name);
  fs::remove_all(p);
  return p;
}

const std::vector<std::string> kSmall{"--n_videos", "3", "--n_val", "1", "--frames_per_video", "6",
                                      "--height", "32", "--width", "40", "--enc1", "4", "--enc2", "6",
                                      "--key_dim", "4", "--value_dim", "4", "--dec_dim", "4"};

std::vector<std::string> with_small(std::vector<std::string> a) {
  a.insert(a.end(), kSmall.begin(), kSmall.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"synth"}).code == kExitUsage);  // --out is required
  const fs::path d = scratch("usage");
  CHECK(run({"synth", "--out", d.string(), "--no_such_key", "1"}).code == kExitUsage);
  CHECK(run({"eval", "--out", d.string(), "--ckpt", "x", "--gc", "maybe"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("runtime failures exit with 1 and finalise the manifest") {
  const fs::path d = scratch("fail");
  const Outcome o = run({"eval", "--out", d.string(), "--ckpt", (d / "missing").string()});
  CHECK(o.code == kExitFailure);
  const auto j = nlohmann::json::parse(slurp(d / "run.json"));
  CHECK(j["status"] == "failed");
  CHECK(j["command"] == "eval");
  fs::remove_all(d);
}

TEST_CASE("synth is byte-for-byte reproducible") {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  REQUIRE(run(with_small({"synth", "--seed", "7", "--out", a.string()})).code == kExitOk);
  REQUIRE(run(with_small({"synth", "--seed", "7", "--out", b.string()})).code == kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "run.json") continue;
    const fs::path rel = fs::relative(e.path(), a);
    CHECK(slurp(e.path()) == slurp(b / rel));
    ++files;
  }
  CHECK(files > 10);
  const auto j = nlohmann::json::parse(slurp(a / "run.json"));
  CHECK(j["status"] == "ok");
  CHECK(j["seed"] == 7);
  CHECK(slurp(a / "config.txt").find("seed = 7") != std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("train, eval and infer chain through the file system") {
  const fs::path data = scratch("chain_data"), ck = scratch("chain_ck"), ev = scratch("chain_eval"),
                 inf = scratch("chain_infer");
  REQUIRE(run(with_small({"synth", "--out", data.string()})).code == kExitOk);
  const Outcome t = run(with_small({"train", "--data", data.string(), "--out", ck.string(), "--epochs", "2",
                                    "--batch_size", "1"}));
  REQUIRE(t.code == kExitOk);
  CHECK(fs::exists(ck / "manifest.txt"));
  CHECK(slurp(ck / "loss_history.csv").rfind("epoch,loss,forward,cycle,clips\n", 0) == 0);

  // Flags override the config file.
  const fs::path cfg = ck / "override.txt";
  std::ofstream(cfg) << "n_iters = 1\ngc = off\n";
  auto eval_args = with_small({"eval", "--data", data.string(), "--ckpt", ck.string(), "--out", ev.string(),
                               "--config", cfg.string(), "--gc", "on"});
  REQUIRE(run(eval_args).code == kExitOk);
  const std::string snap = slurp(ev / "config.txt");
  CHECK(snap.find("gc = on") != std::string::npos);
  CHECK(snap.find("n_iters = 1") != std::string::npos);
  const std::string report = slurp(ev / "report.csv");
  CHECK(report.rfind("video,object,J,F,JF,frames\n", 0) == 0);
  REQUIRE(run(eval_args).code == kExitOk);
  CHECK(slurp(ev / "report.csv") == report);

  REQUIRE(run(with_small({"infer", "--data", data.string(), "--ckpt", ck.string(), "--out", inf.string(),
                          "--n_iters", "1"})).code == kExitOk);
  CHECK(fs::exists(inf / "Annotations" / "synth_002" / "00005.png"));

  const fs::path erf = scratch("chain_erf");
  REQUIRE(run(with_small({"erf", "--data", data.string(), "--ckpt", ck.string(), "--out", erf.string(),
                          "--ref-frames", "4", "--m_iters", "2"})).code == kExitOk);
  std::istringstream rows(slurp(erf / "erf.csv"));
  std::string line;
  std::getline(rows, line);
  CHECK(line == "video,object,ref_frame,target_frame,inside,outside");
  int n = 0;
  while (std::getline(rows, line)) {
    ++n;
    CHECK(line.find(",4,1,") != std::string::npos);
    CHECK(line.back() != ',');  // every synthetic frame is annotated, so both columns are filled
  }
  CHECK(n >= 1);
  CHECK(fs::exists(erf / "erf" / "synth_002_obj1_ref4.png"));
  fs::remove_all(erf);

  // Widths that do not match the checkpoint are rejected.
  CHECK(run({"eval", "--data", data.string(), "--ckpt", ck.string(), "--out", ev.string()}).code == kExitFailure);
  for (const auto& p : {data, ck, ev, inf}) fs::remove_all(p);
}
