#ifndef SIGFX_CART_HPP
#define SIGFX_CART_HPP

#include "sigfx/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace sigfx {

struct CartOptions {
  /// Features examined per split; 0 means all of them.
  int max_features = 0;
  int min_samples_split = 2;
  /// 0 means unlimited.
  int max_depth = 0;
};

/// Binary classification tree grown with the Gini criterion. A sample goes
/// left when x[feature] <= threshold.
class DecisionTree {
public:
  struct Node {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
  };

  int predict(const double* x) const noexcept
  {
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& nd = nodes_[static_cast<std::size_t>(i)];
      i = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes_[static_cast<std::size_t>(i)].label;
  }

  Labels predict(const Matrix& X) const
  {
    Labels out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index r = 0; r < X.rows(); ++r)
      out[static_cast<std::size_t>(r)] = predict(X.row(r).data());
    return out;
  }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t leaf_count() const noexcept
  {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
  }

  /// Grows a tree on the rows listed in `samples` (repeats allowed, as in a
  /// bootstrap draw). Candidate features are visited in random order until
  /// `max_features` non-constant ones have been evaluated.
  static DecisionTree fit(const Matrix& X, std::span<const int> y, std::vector<Eigen::Index> samples,
                          const CartOptions& opt, std::mt19937_64& rng)
  {
    if (samples.empty())
      throw Error("DecisionTree::fit: no samples");
    const int p = static_cast<int>(X.cols());
    const int mtry = opt.max_features > 0 ? std::min(opt.max_features, p) : p;

    DecisionTree tree;
    struct Task {
      int node;
      std::size_t begin, end;
      int depth;
    };
    std::vector<Task> stack;
    tree.nodes_.push_back({});
    stack.push_back({0, 0, samples.size(), 0});

    std::vector<int> features(static_cast<std::size_t>(p));
    std::iota(features.begin(), features.end(), 0);
    std::vector<std::pair<double, int>> column;

    while (!stack.empty()) {
      const Task task = stack.back();
      stack.pop_back();
      const auto first = samples.begin() + static_cast<std::ptrdiff_t>(task.begin);
      const auto last = samples.begin() + static_cast<std::ptrdiff_t>(task.end);
      const auto m = static_cast<long>(task.end - task.begin);
      long positives = 0;
      for (auto it = first; it != last; ++it)
        positives += y[static_cast<std::size_t>(*it)];
      tree.nodes_[static_cast<std::size_t>(task.node)].label = 2 * positives > m ? 1 : 0;

      const bool pure = positives == 0 || positives == m;
      const bool depth_capped = opt.max_depth > 0 && task.depth >= opt.max_depth;
      if (pure || m < opt.min_samples_split || depth_capped)
        continue;

      int best_feature = -1;
      double best_threshold = 0.0;
      double best_cost = std::numeric_limits<double>::infinity();
      int visited = 0;
      for (int remaining = p; remaining > 0 && visited < mtry; --remaining) {
        std::uniform_int_distribution<int> pick(0, remaining - 1);
        const int slot = pick(rng);
        std::swap(features[static_cast<std::size_t>(slot)], features[static_cast<std::size_t>(remaining - 1)]);
        const int f = features[static_cast<std::size_t>(remaining - 1)];

        column.clear();
        for (auto it = first; it != last; ++it)
          column.emplace_back(X(*it, f), y[static_cast<std::size_t>(*it)]);
        std::sort(column.begin(), column.end());
        if (column.front().first == column.back().first)
          continue; // constant in this node
        ++visited;

        long left_pos = 0;
        for (long i = 0; i + 1 < m; ++i) {
          left_pos += column[static_cast<std::size_t>(i)].second;
          const double v = column[static_cast<std::size_t>(i)].first;
          const double next = column[static_cast<std::size_t>(i + 1)].first;
          if (!(v < next))
            continue;
          const double nl = static_cast<double>(i + 1);
          const double nr = static_cast<double>(m - i - 1);
          const double lp = static_cast<double>(left_pos);
          const double rp = static_cast<double>(positives - left_pos);
          // n * gini = n - (pos^2 + neg^2) / n, summed over both children
          const double cost = (nl - (lp * lp + (nl - lp) * (nl - lp)) / nl) +
                              (nr - (rp * rp + (nr - rp) * (nr - rp)) / nr);
          if (cost < best_cost) {
            best_cost = cost;
            best_feature = f;
            double thr = v + (next - v) / 2.0;
            if (!(thr < next))
              thr = v;
            best_threshold = thr;
          }
        }
      }
      if (best_feature < 0)
        continue; // every feature constant

      const auto mid = std::stable_partition(
          first, last, [&](Eigen::Index r) { return X(r, best_feature) <= best_threshold; });
      const auto split = static_cast<std::size_t>(mid - samples.begin());
      const int left = static_cast<int>(tree.nodes_.size());
      tree.nodes_.push_back({});
      tree.nodes_.push_back({});
      auto& nd = tree.nodes_[static_cast<std::size_t>(task.node)];
      nd.feature = best_feature;
      nd.threshold = best_threshold;
      nd.left = left;
      nd.right = left + 1;
      stack.push_back({left + 1, split, task.end, task.depth + 1});
      stack.push_back({left, task.begin, split, task.depth + 1});
    }
    return tree;
  }

  nlohmann::json to_json() const
  {
    auto arr = nlohmann::json::array();
    for (const auto& n : nodes_)
      arr.push_back({n.feature, n.threshold, n.left, n.right, n.label});
    return {{"nodes", std::move(arr)}, {"node_format", {"feature", "threshold", "left", "right", "label"}}};
  }

private:
  std::vector<Node> nodes_;
};

/// Mode of binary votes; an even split resolves to 0.
inline int majority_vote(std::span<const int> votes)
{
  long ones = 0;
  for (int v : votes)
    ones += v != 0;
  return 2 * ones > static_cast<long>(votes.size()) ? 1 : 0;
}

} // namespace sigfx

#endif // SIGFX_CART_HPP
