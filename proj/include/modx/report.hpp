#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "modx/experiment.hpp"

namespace modx {

struct RunRecords {
  std::string label;  // run directory name relative to the report root, "." for the root itself
  std::vector<PhaseRecord> records;  // ascending phase
};

/// Loads every phase_*/record.json under `dir`. A directory holding phase_*
/// entries is one run; otherwise each immediate subdirectory that does is a
/// run, in name order. Throws MissingRecords when nothing is found.
std::vector<RunRecords> load_runs(const std::filesystem::path& dir);

struct RenderedReport {
  std::string text;
  nlohmann::ordered_json summary;
};

RenderedReport render_report(const std::vector<RunRecords>& runs);
RenderedReport render_report(const std::filesystem::path& dir);

}  // namespace modx
