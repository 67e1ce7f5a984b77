#include "modx/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "modx/errors.hpp"

namespace modx {

namespace {

namespace fs = std::filesystem;

bool is_phase_dir(const fs::directory_entry& e) {
  return e.is_directory() && e.path().filename().string().starts_with("phase_") &&
         fs::exists(e.path() / "record.json");
}

std::vector<fs::path> sorted_children(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PhaseRecord> load_records(const fs::path& dir) {
  std::vector<PhaseRecord> records;
  for (const auto& p : sorted_children(dir)) {
    const fs::directory_entry e(p);
    if (!is_phase_dir(e)) continue;
    std::ifstream in(p / "record.json", std::ios::binary);
    if (!in) throw IoError("cannot read " + (p / "record.json").string());
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(in);
      records.push_back(record_from_json(j));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError("malformed " + (p / "record.json").string() + ": " + ex.what());
    }
  }
  std::sort(records.begin(), records.end(),
            [](const PhaseRecord& a, const PhaseRecord& b) { return a.phase < b.phase; });
  return records;
}

std::vector<std::string> domains_of(const std::vector<PhaseRecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) {
    for (const auto& e : r.evals) {
      if (std::find(out.begin(), out.end(), e.domain) == out.end()) out.push_back(e.domain);
    }
  }
  return out;
}

void render_retrieval(std::ostringstream& out, const RunRecords& run) {
  char buf[96];
  const auto domains = domains_of(run.records);
  const std::vector<std::size_t>& ks = run.records.front().evals.empty() ? kDefaultKs : run.records.front().evals.front().report.ks;
  const int block = static_cast<int>(ks.size()) * 7;
  out << "Retrieval R@K (%) by phase, run " << run.label << " (strategy " << run.records.front().strategy << ")\n";
  std::snprintf(buf, sizeof buf, "%-6s", "phase");
  out << buf;
  for (const auto& d : domains) {
    for (const char* dir : {"i2t", "t2i"}) {
      std::snprintf(buf, sizeof buf, " | %-*s", block, (d + " " + dir).c_str());
      out << buf;
    }
  }
  out << '\n';
  std::snprintf(buf, sizeof buf, "%-6s", "");
  out << buf;
  for (std::size_t i = 0; i < 2 * domains.size(); ++i) {
    out << " | ";
    for (std::size_t k : ks) {
      std::snprintf(buf, sizeof buf, "%7s", ("R@" + std::to_string(k)).c_str());
      out << buf;
    }
  }
  out << '\n';
  for (const auto& r : run.records) {
    std::snprintf(buf, sizeof buf, "%-6zu", r.phase);
    out << buf;
    for (const auto& d : domains) {
      const auto it = std::find_if(r.evals.begin(), r.evals.end(), [&](const DomainEval& e) { return e.domain == d; });
      for (int dir = 0; dir < 2; ++dir) {
        out << " | ";
        for (std::size_t i = 0; i < ks.size(); ++i) {
          if (it == r.evals.end() || i >= it->report.ks.size()) {
            std::snprintf(buf, sizeof buf, "%7s", "-");
          } else {
            const auto& series = dir == 0 ? it->report.image_to_text : it->report.text_to_image;
            std::snprintf(buf, sizeof buf, "%7.1f", 100.0 * series[i]);
          }
          out << buf;
        }
      }
    }
    out << '\n';
  }
  out << '\n';
}

void render_diagnostics(std::ostringstream& out, const RunRecords& run) {
  std::vector<std::string> sam_names, ram_names, imav_names;
  std::vector<AngleHistogram> sam_rows, ram_rows, imav_rows;
  for (const auto& r : run.records) {
    if (!r.diagnostics) continue;
    const auto& d = *r.diagnostics;
    const std::string p = "phase " + std::to_string(r.phase);
    sam_names.push_back(p + " vision");
    sam_rows.push_back(d.sam_vision);
    sam_names.push_back(p + " language");
    sam_rows.push_back(d.sam_language);
    ram_names.push_back(p + " vision");
    ram_rows.push_back(d.ram_vision);
    ram_names.push_back(p + " language");
    ram_rows.push_back(d.ram_language);
    if (d.imav) {
      imav_names.push_back(p + " (" + std::to_string(d.imav_samples) + " samples)");
      imav_rows.push_back(*d.imav);
    }
  }
  if (sam_rows.empty()) return;
  out << render_histogram_table("SAM change vs previous phase, run " + run.label, sam_names, sam_rows, "dtheta") << '\n';
  out << render_histogram_table("RAM vs previous phase, run " + run.label, ram_names, ram_rows, "theta") << '\n';
  if (!imav_rows.empty()) {
    out << render_histogram_table("ImAV vs previous phase, run " + run.label, imav_names, imav_rows, "dtheta") << '\n';
  }
}

}  // namespace

std::vector<RunRecords> load_runs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingRecords("no run directory at " + dir.string());
  std::vector<RunRecords> runs;
  auto own = load_records(dir);
  if (!own.empty()) {
    runs.push_back({".", std::move(own)});
    return runs;
  }
  for (const auto& p : sorted_children(dir)) {
    if (!fs::is_directory(p)) continue;
    auto records = load_records(p);
    if (!records.empty()) runs.push_back({p.filename().string(), std::move(records)});
  }
  if (runs.empty()) throw MissingRecords("no phase records under " + dir.string());
  return runs;
}

RenderedReport render_report(const std::vector<RunRecords>& runs) {
  if (runs.empty()) throw MissingRecords("no runs to report");
  std::ostringstream out;
  nlohmann::ordered_json summary;
  nlohmann::ordered_json run_list = nlohmann::ordered_json::array();
  for (const auto& run : runs) {
    if (run.records.empty()) throw MissingRecords("run " + run.label + " has no records");
    render_retrieval(out, run);
    render_diagnostics(out, run);
    nlohmann::ordered_json rj;
    rj["run"] = run.label;
    rj["strategy"] = run.records.front().strategy;
    nlohmann::ordered_json phases = nlohmann::ordered_json::array();
    for (const auto& r : run.records) {
      nlohmann::ordered_json pj;
      pj["phase"] = r.phase;
      for (const auto& e : r.evals) pj["retrieval"][e.domain] = to_json(e.report);
      pj["final_epoch_loss"] = r.epoch_losses.empty() ? nlohmann::ordered_json(nullptr)
                                                      : nlohmann::ordered_json(r.epoch_losses.back());
      phases.push_back(pj);
    }
    rj["phases"] = phases;
    run_list.push_back(rj);
  }
  summary["runs"] = run_list;
  return {out.str(), summary};
}

RenderedReport render_report(const fs::path& dir) { return render_report(load_runs(dir)); }

}  // namespace modx
