#include <algorithm>
#include <numeric>

#include "edima/rng.hpp"
#include "forest_builder.hpp"

namespace edima {

Label DecisionTree::predict(const FeatureRow& raw) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(raw[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                       : n.right);
  }
  const auto& leaf = nodes[i];
  return leaf.counts[1] >= leaf.counts[0] ? Label::Malicious : Label::Benign;
}

namespace {

std::vector<std::size_t> draw_bootstrap(Rng& rng, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;  // weighted child Gini
};

double gini(double c0, double c1) {
  const double n = c0 + c1;
  return 1.0 - (c0 * c0 + c1 * c1) / (n * n);
}

// Best Gini split on one feature; feature == -1 when the feature is constant
// over the node.
Split best_split_on(std::span<const FeatureRow> x, std::span<const Label> y,
                    const std::vector<std::size_t>& idx, int feature) {
  std::vector<std::pair<double, std::size_t>> vals;
  vals.reserve(idx.size());
  std::array<double, 2> total{};
  for (auto i : idx) {
    const auto c = label_index(y[i]);
    vals.emplace_back(x[i][static_cast<std::size_t>(feature)], c);
    total[c] += 1.0;
  }
  std::sort(vals.begin(), vals.end());

  Split best;
  const double n = static_cast<double>(vals.size());
  std::array<double, 2> left{};
  for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
    left[vals[i].second] += 1.0;
    const double a = vals[i].first;
    const double b = vals[i + 1].first;
    if (!(a < b)) continue;
    const double nl = static_cast<double>(i + 1);
    const double nr = n - nl;
    const double imp =
        (nl * gini(left[0], left[1]) + nr * gini(total[0] - left[0], total[1] - left[1])) / n;
    if (best.feature < 0 || imp < best.impurity) {
      double mid = a + (b - a) / 2.0;
      if (!(mid < b)) mid = a;
      best = {feature, mid, imp};
    }
  }
  return best;
}

DecisionTree grow_tree(std::span<const FeatureRow> x, std::span<const Label> y,
                       std::vector<std::size_t> sample, int max_features, Rng& rng) {
  DecisionTree tree;
  tree.nodes.emplace_back();
  std::vector<std::pair<int, std::vector<std::size_t>>> pending;
  pending.emplace_back(0, std::move(sample));

  while (!pending.empty()) {
    auto [node_id, idx] = std::move(pending.back());
    pending.pop_back();

    std::array<std::uint32_t, 2> counts{};
    for (auto i : idx) ++counts[label_index(y[i])];
    tree.nodes[static_cast<std::size_t>(node_id)].counts = counts;
    if (idx.size() < 2 || counts[0] == 0 || counts[1] == 0) continue;

    std::array<int, kNumFeatures> order{};
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(rng.below(i + 1))]);

    // Examine max_features candidates; if all are constant here, keep
    // drawing from the rest of the permutation until one splits.
    Split best;
    for (std::size_t j = 0; j < order.size(); ++j) {
      if (j >= static_cast<std::size_t>(max_features) && best.feature >= 0) break;
      const auto s = best_split_on(x, y, idx, order[j]);
      if (s.feature >= 0 && (best.feature < 0 || s.impurity < best.impurity)) best = s;
    }
    if (best.feature < 0) continue;  // identical feature rows with mixed labels

    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (x[i][static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(i);
    }
    const int left_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left_id;
    node.right = left_id + 1;
    pending.emplace_back(left_id + 1, std::move(right));
    pending.emplace_back(left_id, std::move(left));
  }
  return tree;
}

}  // namespace

std::vector<std::vector<std::size_t>> forest_bootstrap_indices(std::size_t n, int trees,
                                                               std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(static_cast<std::size_t>(std::max(trees, 0)));
  for (int t = 0; t < trees; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    out.push_back(draw_bootstrap(rng, n));
  }
  return out;
}

namespace detail {

ForestParams build_forest(std::span<const FeatureRow> x, std::span<const Label> y,
                          int trees, int max_features, std::uint64_t seed) {
  ForestParams forest;
  forest.max_features = max_features;
  forest.trees.reserve(static_cast<std::size_t>(trees));
  // Each tree owns a stream derived from (seed, tree index), so trees are
  // independent of construction order.
  for (int t = 0; t < trees; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    auto sample = draw_bootstrap(rng, x.size());
    forest.trees.push_back(grow_tree(x, y, std::move(sample), max_features, rng));
  }
  return forest;
}

}  // namespace detail
}  // namespace edima
