#include <doctest.h>

#include <fstream>

#include "modx/errors.hpp"
#include "modx/report.hpp"

using namespace modx;

namespace fs = std::filesystem;

namespace {

ExperimentConfig small_run(Strategy s, std::size_t phases) {
  ExperimentConfig c;
  c.data.samples_per_domain = 150;
  c.n_phases = phases;
  c.pretrain_epochs = 2;
  c.epochs_per_phase = 1;
  c.joint_epochs = 1;
  c.batch_size = 16;
  c.hidden_dim = 12;
  c.embed_dim = 6;
  c.strategy = s;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("report re-renders byte-identically from stored records") {
  const fs::path dir = fresh_dir("modx_test_report");
  ExperimentConfig c = small_run(Strategy::modx, 2);
  c.output_dir = (dir / "modx").string();
  const RunResult r = run_experiment(c);
  c.strategy = Strategy::ct;
  c.output_dir = (dir / "ct").string();
  run_experiment(c);

  const RenderedReport a = render_report(dir);
  const RenderedReport b = render_report(dir);
  CHECK(a.text == b.text);
  CHECK(a.summary.dump() == b.summary.dump());
  REQUIRE(a.summary["runs"].size() == 2);
  CHECK(a.summary["runs"][0]["run"] == "ct");
  CHECK(a.summary["runs"][1]["strategy"] == "modx");
  CHECK(a.summary["runs"][1]["phases"].size() == 3);

  // The in-memory records render the same text as the loaded ones.
  const RenderedReport single = render_report(dir / "modx");
  const RenderedReport live = render_report(std::vector<RunRecords>{{".", r.records}});
  CHECK(single.text == live.text);
  CHECK(single.text.find("Retrieval R@K (%) by phase") != std::string::npos);
  CHECK(single.text.find("SAM change vs previous phase") != std::string::npos);
  CHECK(single.text.find("(15,20]") != std::string::npos);
  CHECK(single.text.find("(20,180]") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("report on an empty or missing directory throws MissingRecords") {
  const fs::path dir = fresh_dir("modx_test_report_empty");
  CHECK_THROWS_AS(render_report(dir), MissingRecords);
  CHECK_THROWS_AS(render_report(dir / "absent"), MissingRecords);
  CHECK_THROWS_AS(render_report(std::vector<RunRecords>{}), MissingRecords);
  fs::remove_all(dir);
}

TEST_CASE("malformed record.json is an IoError") {
  const fs::path dir = fresh_dir("modx_test_report_bad");
  fs::create_directories(dir / "phase_0");
  std::ofstream(dir / "phase_0" / "record.json") << "{ not json";
  CHECK_THROWS_AS(render_report(dir), IoError);
  fs::remove_all(dir);
}

TEST_CASE("RAM histogram labels") {
  const auto h = make_histogram(std::vector<double>{0.0, 17.0, 90.0}, bins::ram());
  CHECK(h.bin_labels() == std::vector<std::string>{"[0,15]", "(15,20]", "(20,25]", "(25,30]", "(30,180]"});
  const auto s = make_histogram(std::vector<double>{1.0}, bins::sam());
  CHECK(s.bin_labels().front() == "[0,5]");
}

TEST_CASE("single-phase joint run renders one retrieval row and no drift tables") {
  const fs::path dir = fresh_dir("modx_test_report_joint");
  ExperimentConfig c = small_run(Strategy::joint, 2);
  c.output_dir = dir.string();
  run_experiment(c);
  const RenderedReport r = render_report(dir);
  REQUIRE(r.summary["runs"].size() == 1);
  CHECK(r.summary["runs"][0]["run"] == ".");
  CHECK(r.summary["runs"][0]["phases"].size() == 1);
  CHECK(r.text.find("SAM") == std::string::npos);
  // title, two header lines, one phase row, blank line
  CHECK(std::count(r.text.begin(), r.text.end(), '\n') == 5);
  fs::remove_all(dir);
}
