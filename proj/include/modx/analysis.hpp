#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "modx/dataset.hpp"
#include "modx/encoder.hpp"
#include "modx/losses.hpp"
#include "modx/numeric.hpp"

namespace modx {

/// Degree-binned angle distribution. The first bin is closed [e0, e1], later
/// bins are half-open (e_k, e_{k+1}]; values beyond the last edge are counted
/// in the last bin.
struct AngleHistogram {
  std::vector<double> bin_edges_deg;
  std::vector<std::size_t> counts;
  std::vector<double> fractions;

  std::size_t total() const;
  std::vector<std::string> bin_labels() const;
};

namespace bins {
// {0, 5, 10, 15, 20, 180}: intra-modal topology and inter-modal variation tables.
std::vector<double> sam();
// {0, 15, 20, 25, 30, 180}: rotation tables.
std::vector<double> ram();
}  // namespace bins

AngleHistogram make_histogram(std::span<const double> angles_deg, std::span<const double> edges);

// Pairwise angles within one modality, in degrees.
Matrix sam(const UnitEmbeddings& e);

// Histogram of |SAM_i - SAM_j| over unordered pairs a < b.
AngleHistogram sam_delta_hist(const UnitEmbeddings& e_i, const UnitEmbeddings& e_j, std::span<const double> edges);

// Angle between each sample's embedding under two snapshots.
std::vector<double> ram(const UnitEmbeddings& e_i, const UnitEmbeddings& e_j);

enum class RetrievalDirection { image_to_text, both };

struct ImavResult {
  AngleHistogram histogram;
  std::vector<std::size_t> contributing;  // sample rows in the correctly retrieved set
  std::vector<double> angle_changes_deg;
};

/// Change of each sample's own vision-language angle between two snapshots,
/// restricted to samples the old snapshot retrieves correctly. Throws
/// EmptyCorrectSet when no sample qualifies.
ImavResult imav_from_embeddings(const UnitEmbeddings& v_old, const UnitEmbeddings& l_old, const UnitEmbeddings& v_new,
                                const UnitEmbeddings& l_new, std::span<const double> edges,
                                RetrievalDirection direction = RetrievalDirection::image_to_text);

ImavResult imav(const DualEncoderSnapshot& old, const DualEncoderSnapshot& next, const PhaseDataset& data,
                std::span<const double> edges, RetrievalDirection direction = RetrievalDirection::image_to_text);

struct RetrievalReport {
  std::vector<std::size_t> ks;
  std::vector<double> image_to_text;
  std::vector<double> text_to_image;

  double i2t(std::size_t k) const;
  double t2i(std::size_t k) const;
  friend bool operator==(const RetrievalReport&, const RetrievalReport&) = default;
};

// Recall of the diagonal within the top K of each row (image to text) and
// column (text to image). Ties rank the lower index first; K is clipped to n.
RetrievalReport recall_at_k(const ContrastiveMatrix& m, std::span<const std::size_t> ks);
RetrievalReport recall_at_k(const Matrix& m, std::span<const std::size_t> ks);

inline const std::vector<std::size_t> kDefaultKs{1, 5, 10};

RetrievalReport evaluate_retrieval(const DualEncoderSnapshot& snapshot, const PhaseDataset& data,
                                   std::span<const std::size_t> ks = kDefaultKs);

/// Numerical check that one orthogonal map applied to the language side
/// alone can break retrieval of a correctly retrieved sample while fixing a
/// misretrieved one, and that the same map on both sides changes nothing.
struct RotationDemoReport {
  std::size_t dim = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t attempts = 0;
  std::size_t correct_sample = 0;     // row argmax on the diagonal before
  std::size_t misretrieved_sample = 1;
  Matrix before;
  Matrix after;  // language side mapped by -I
  std::vector<std::size_t> argmax_before;
  std::vector<std::size_t> argmax_after;
  double rotation_orthogonality_error = 0.0;  // max |R^T R - I|
  bool every_entry_negated = false;
  bool correct_sample_flipped = false;
  bool misretrieved_sample_fixed = false;
  bool both_sides_unchanged = false;  // -I on both modalities, exact
  bool random_rotation_both_sides_same_retrieval = false;
};

// Throws ConstructionFailure if no valid instance is found within the
// internal resample bound.
RotationDemoReport rotation_flip_demo(std::size_t dim, std::size_t n, std::uint64_t seed);

nlohmann::ordered_json to_json(const AngleHistogram& h);
nlohmann::ordered_json to_json(const RetrievalReport& r);
nlohmann::ordered_json to_json(const Matrix& m);
nlohmann::ordered_json to_json(const RotationDemoReport& r);
AngleHistogram histogram_from_json(const nlohmann::ordered_json& j);
RetrievalReport retrieval_from_json(const nlohmann::ordered_json& j);

// Fixed-width text renderings.
std::string render_histogram_table(const std::string& title, const std::vector<std::string>& row_names,
                                   const std::vector<AngleHistogram>& rows, const std::string& quantity = "theta");
std::string render_demo(const RotationDemoReport& r);

}  // namespace modx
