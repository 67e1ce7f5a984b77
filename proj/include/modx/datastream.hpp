#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "modx/dataset.hpp"
#include "modx/numeric.hpp"

namespace modx {

/// Generator for one synthetic domain.
///
/// Each sample draws a latent z = normalize(domain_mean + latent_noise * g)
/// on the unit sphere of R^latent_dim, then observes it through two fixed
/// linear maps (one per modality) plus independent modality noise. The maps
/// depend only on map_seed, so domains sharing map_seed share the maps and
/// differ only in where their latents concentrate.
struct DomainSpec {
  std::size_t latent_dim = 16;
  std::size_t vision_dim = 48;
  std::size_t language_dim = 40;
  std::vector<double> domain_mean;  // unit vector in latent space
  double latent_noise = 0.1;
  double modality_noise = 0.05;
  std::uint64_t seed = 0;      // sample noise
  std::uint64_t map_seed = 0;  // modality maps
  std::string domain_tag = "domain0";
  std::int64_t id_base = 0;    // sample ids are id_base + row

  void validate() const;
};

struct ModalityMaps {
  Matrix vision;    // vision_dim x latent_dim, orthonormal columns
  Matrix language;  // language_dim x latent_dim, orthonormal columns
};

ModalityMaps modality_maps(const DomainSpec& spec);

// Latent vectors (n x latent_dim, unit rows) that generate_domain would use.
Matrix sample_latents(const DomainSpec& spec, std::size_t n);

PhaseDataset generate_domain(const DomainSpec& spec, std::size_t n);

// Unit means e_0 and cos(angle) e_0 + sin(angle) e_1.
std::pair<std::vector<double>, std::vector<double>> domain_means_at_angle(std::size_t latent_dim, double angle_deg);

// Seeded shuffle into `n_phases` contiguous near-equal slices; earlier slices
// take the remainder. Throws TooFewSamples.
std::vector<PhaseDataset> split_phases(const PhaseDataset& d, std::size_t n_phases, std::uint64_t seed);

struct TrainTestSplit {
  PhaseDataset train;
  PhaseDataset test;
};

// Seeded split holding out round(test_fraction * n) rows.
TrainTestSplit holdout_split(const PhaseDataset& d, double test_fraction, std::uint64_t seed);

/// Rehearsal memory holding an equal share of rows from every phase seen.
class ReplayBuffer {
 public:
  struct Group {
    std::size_t phase = 0;
    PhaseDataset rows;
  };

  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const;
  const std::vector<Group>& groups() const { return groups_; }
  PhaseDataset contents() const;

 private:
  friend ReplayBuffer buffer_update(ReplayBuffer buf, const PhaseDataset& phase, std::size_t phase_tag,
                                    std::uint64_t seed);
  std::size_t capacity_;
  std::vector<Group> groups_;
};

// Adds a uniformly sampled share of `phase` and trims older phases so each
// holds floor(capacity / phases_seen) rows.
ReplayBuffer buffer_update(ReplayBuffer buf, const PhaseDataset& phase, std::size_t phase_tag, std::uint64_t seed);

/// CSV layout: header `id,domain,v_0..v_{dv-1},l_0..l_{dl-1}`, one row per
/// sample, reals printed with 17 significant digits.
void write_dataset_csv(const PhaseDataset& d, std::ostream& out);
PhaseDataset read_dataset_csv(std::istream& in);
void save_dataset_csv(const PhaseDataset& d, const std::filesystem::path& path);
PhaseDataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace modx
