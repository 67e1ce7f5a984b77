#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "modx/numeric.hpp"

namespace modx {

/// Paired raw vision/language feature rows. Used both for whole phase
/// datasets and for single training batches.
struct PhaseDataset {
  Matrix vision_inputs;    // n x vision_dim
  Matrix language_inputs;  // n x language_dim
  std::vector<std::int64_t> sample_ids;
  std::vector<std::string> domains;  // per-row domain tag

  std::size_t size() const { return sample_ids.size(); }
  bool empty() const { return sample_ids.empty(); }

  // Throws ShapeMismatch if row counts disagree or ids repeat.
  void validate() const;

  PhaseDataset subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const PhaseDataset&, const PhaseDataset&) = default;
};

using PhaseBatch = PhaseDataset;

// Rows of a followed by rows of b.
PhaseDataset concat(const PhaseDataset& a, const PhaseDataset& b);

}  // namespace modx
