#include <doctest.h>

#include <fstream>
#include <sstream>

#include "modx/cli.hpp"
#include "modx/config.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "modx");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = modx::parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

const std::vector<std::string> kTiny{"--samples_per_domain", "120", "--n_phases", "2", "--pretrain_epochs", "1",
                                     "--epochs_per_phase", "1", "--batch_size", "16", "--hidden_dim", "8",
                                     "--embed_dim", "4"};

std::vector<std::string> with_tiny(std::vector<std::string> head) {
  head.insert(head.end(), kTiny.begin(), kTiny.end());
  return head;
}

}  // namespace

TEST_CASE("help exits 0 and lists subcommands") {
  const Outcome o = run({"--help"});
  CHECK(o.code == 0);
  for (const char* s : {"generate", "train", "analyze", "sweep", "demo-rotation", "report"}) {
    CHECK(o.out.find(s) != std::string::npos);
  }
}

TEST_CASE("usage errors exit 2 with usage text") {
  Outcome o = run({"train", "--bogus"});
  CHECK(o.code == 2);
  CHECK(o.err.find("error") != std::string::npos);
  CHECK(o.err.find("Usage") != std::string::npos);
  CHECK(run({}).code == 2);
  CHECK(run({"train", "--n_phases", "0"}).code == 2);
  CHECK(run({"train", "--strategy", "nope"}).code == 2);
  CHECK(run({"train", "--config", "/nonexistent.cfg"}).code == 2);
}

TEST_CASE("runtime failures exit 1") {
  const Outcome o = run({"report", (fs::temp_directory_path() / "modx_no_such_dir").string()});
  CHECK(o.code == 1);
  CHECK(o.err.find("error") != std::string::npos);
}

TEST_CASE("demo-rotation prints the flip verdict") {
  const fs::path dir = fresh_dir("modx_test_cli_demo");
  fs::create_directories(dir);
  const Outcome o = run({"demo-rotation", "--json", (dir / "demo.json").string()});
  CHECK(o.code == 0);
  CHECK(o.out.find("FLIPPED") != std::string::npos);
  CHECK(fs::exists(dir / "demo.json"));
  fs::remove_all(dir);
}

TEST_CASE("flags override the config file and the resolved config is echoed") {
  const fs::path dir = fresh_dir("modx_test_cli_cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "run.cfg") << "# test\nalpha = 5\nseed = 9\n";
  const fs::path out_dir = dir / "gen";
  const Outcome o = run(with_tiny({"generate", "--config", (dir / "run.cfg").string(), "--seed", "4",
                                   "--output-dir", out_dir.string()}));
  REQUIRE(o.code == 0);
  const modx::ExperimentConfig c = modx::load_config_file(out_dir / "config.resolved");
  CHECK(c.seed == 4);
  CHECK(c.alpha == 5.0);
  CHECK(c.n_phases == 2);
  CHECK(fs::exists(out_dir / "phase_2.csv"));
  fs::remove_all(dir);
}

TEST_CASE("generate is byte-identical for a fixed seed") {
  const fs::path a = fresh_dir("modx_test_gen_a"), b = fresh_dir("modx_test_gen_b");
  REQUIRE(run(with_tiny({"generate", "--output_dir", a.string()})).code == 0);
  REQUIRE(run(with_tiny({"generate", "--output_dir", b.string()})).code == 0);
  for (const char* f : {"domain0_train.csv", "domain0_test.csv", "domain1_test.csv", "phase_1.csv", "phase_2.csv"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
    CHECK_FALSE(slurp(a / f).empty());
  }
  CHECK(run({"generate"}).code == 2);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("train, report and analyze round trip through the filesystem") {
  const fs::path dir = fresh_dir("modx_test_cli_train");
  const Outcome t = run(with_tiny({"train", "--strategy", "modx", "--output-dir", dir.string()}));
  REQUIRE(t.code == 0);
  CHECK(t.out.find("Retrieval R@K") != std::string::npos);
  const Outcome r = run({"report", dir.string(), "--json", (dir / "report.json").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(r.out == run({"report", "--run-dir", dir.string()}).out);

  const fs::path gen = dir / "gen";
  REQUIRE(run(with_tiny({"generate", "--output-dir", gen.string()})).code == 0);
  const Outcome a = run({"analyze", "--old", (dir / "phase_0" / "snapshot.bin").string(), "--new",
                         (dir / "phase_2" / "snapshot.bin").string(), "--data", (gen / "domain0_test.csv").string(),
                         "--output-dir", dir.string()});
  CHECK(a.code == 0);
  CHECK(a.out.find("RAM") != std::string::npos);
  CHECK(fs::exists(dir / "analysis.json"));
  fs::remove_all(dir);
}

TEST_CASE("sweep accepts a comma separated alpha list") {
  const Outcome o = run(with_tiny({"sweep", "--alphas", "0,20"}));
  CHECK(o.code == 0);
  CHECK(o.out.find("a=0") != std::string::npos);
  CHECK(o.out.find("a=20") != std::string::npos);
}
