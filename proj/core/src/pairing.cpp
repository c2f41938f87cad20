#include "dcc/pairing.hpp"

#include "dcc/errors.hpp"

#include <algorithm>
#include <unordered_map>

namespace dcc {

PerformanceIndex::PerformanceIndex(const Dataset& dataset) {
  std::unordered_map<int, std::size_t> slot;
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    const int perf = dataset.sequences[i].performance_id;
    auto [it, inserted] = slot.emplace(perf, groups_.size());
    if (inserted) groups_.emplace_back();
    groups_[it->second].push_back(i);
  }
  for (auto& g : groups_) {
    std::stable_sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
      return dataset.sequences[a].camera_id < dataset.sequences[b].camera_id;
    });
  }
}

std::size_t pair_space_size(std::size_t n_views) { return (n_views * n_views + n_views) / 2; }

std::pair<std::size_t, std::size_t> unordered_pair(std::size_t r, std::size_t n_views) {
  if (r >= pair_space_size(n_views)) throw ShapeError("unordered_pair: index out of range");
  for (std::size_t i = 0; i < n_views; ++i) {
    const std::size_t row = n_views - i;
    if (r < row) return {i, i + r};
    r -= row;
  }
  return {0, 0};
}

std::pair<std::size_t, std::size_t> sample_pair_indices(const PerformanceIndex& index, std::size_t group,
                                                        bool multiview, Rng& rng) {
  if (group >= index.size()) throw ShapeError("sample_pair: performance index out of range");
  const auto& views = index.views(group);
  if (views.empty()) throw ShapeError("sample_pair: performance has no views");
  if (multiview) {
    std::uniform_int_distribution<std::size_t> pick(0, pair_space_size(views.size()) - 1);
    const auto [i, j] = unordered_pair(pick(rng), views.size());
    return {views[i], views[j]};
  }
  std::uniform_int_distribution<std::size_t> pick(0, views.size() - 1);
  const auto v = views[pick(rng)];
  return {v, v};
}

std::pair<SkeletonSequence, SkeletonSequence> sample_positive_pair(const Dataset& dataset,
                                                                   const PerformanceIndex& index, std::size_t group,
                                                                   bool multiview, const AugmentationConfig& cfg,
                                                                   Rng& rng) {
  const auto [a, b] = sample_pair_indices(index, group, multiview, rng);
  auto first = prepare_train(dataset.sequences[a], dataset.topology, cfg, rng);
  auto second = prepare_train(dataset.sequences[b], dataset.topology, cfg, rng);
  return {std::move(first), std::move(second)};
}

}  // namespace dcc
