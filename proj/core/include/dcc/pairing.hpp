#pragma once

#include "dcc/augment.hpp"
#include "dcc/skeleton.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace dcc {

/// Groups sequence indices by performance_id; views within a group are
/// ordered by camera_id. Groups appear in order of first occurrence.
class PerformanceIndex {
 public:
  explicit PerformanceIndex(const Dataset& dataset);

  std::size_t size() const { return groups_.size(); }
  const std::vector<std::size_t>& views(std::size_t group) const { return groups_.at(group); }

 private:
  std::vector<std::vector<std::size_t>> groups_;
};

/// Number of unordered view pairs (i <= j) over n views: (n^2 + n) / 2.
std::size_t pair_space_size(std::size_t n_views);

/// The r-th unordered pair (i, j), i <= j, in row-major order over the
/// upper triangle including the diagonal.
std::pair<std::size_t, std::size_t> unordered_pair(std::size_t r, std::size_t n_views);

/// Sequence indices of a positive pair for one performance. With multiview
/// the camera pair is uniform over all unordered pairs; otherwise a single
/// view is drawn and paired with itself.
std::pair<std::size_t, std::size_t> sample_pair_indices(const PerformanceIndex& index, std::size_t group,
                                                        bool multiview, Rng& rng);

/// Draws a positive pair and augments each element independently.
std::pair<SkeletonSequence, SkeletonSequence> sample_positive_pair(const Dataset& dataset,
                                                                   const PerformanceIndex& index, std::size_t group,
                                                                   bool multiview, const AugmentationConfig& cfg,
                                                                   Rng& rng);

}  // namespace dcc
