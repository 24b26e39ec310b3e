#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

namespace neurocal {

/// Static kd-tree answering k-nearest-neighbour distance queries under the
/// Euclidean metric.
class KdTree {
public:
  explicit KdTree(const Eigen::MatrixXd& points) : dim_(static_cast<int>(points.cols())), n_(points.rows()) {
    data_.resize(static_cast<std::size_t>(n_ * dim_));
    for (Eigen::Index i = 0; i < n_; ++i)
      for (int k = 0; k < dim_; ++k) data_[static_cast<std::size_t>(i * dim_ + k)] = points(i, k);
    index_.resize(static_cast<std::size_t>(n_));
    for (Eigen::Index i = 0; i < n_; ++i) index_[static_cast<std::size_t>(i)] = i;
    if (n_ > 0) build(0, n_);
  }

  Eigen::Index size() const { return n_; }

  /// Distance from q to its k-th nearest stored point, skipping the point
  /// with index `exclude` (pass -1 to keep all).
  double kth_distance(const double* q, int k, Eigen::Index exclude = -1) const {
    Heap heap;
    search(0, q, k, exclude, heap);
    return std::sqrt(heap.top());
  }

private:
  struct Node {
    Eigen::Index begin, end;
    int axis;
    double split;
    std::int64_t left = -1, right = -1;
  };
  using Heap = std::priority_queue<double>;
  static constexpr Eigen::Index kLeaf = 12;

  const double* point(Eigen::Index i) const { return data_.data() + i * dim_; }

  std::int64_t build(Eigen::Index begin, Eigen::Index end) {
    const auto id = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back({begin, end, -1, 0.0});
    if (end - begin <= kLeaf) return id;
    int axis = 0;
    double best = -1.0;
    for (int k = 0; k < dim_; ++k) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (Eigen::Index i = begin; i < end; ++i) {
        const double v = point(index_[static_cast<std::size_t>(i)])[k];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best) {
        best = hi - lo;
        axis = k;
      }
    }
    if (best <= 0.0) return id; // all points coincide
    const Eigen::Index mid = begin + (end - begin) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](Eigen::Index a, Eigen::Index b) { return point(a)[axis] < point(b)[axis]; });
    const double split = point(index_[static_cast<std::size_t>(mid)])[axis];
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.axis = axis;
    node.split = split;
    node.left = left;
    node.right = right;
    return id;
  }

  static void offer(Heap& heap, double d2, int k) {
    if (static_cast<int>(heap.size()) < k) {
      heap.push(d2);
    } else if (d2 < heap.top()) {
      heap.pop();
      heap.push(d2);
    }
  }

  static double bound(const Heap& heap, int k) {
    return static_cast<int>(heap.size()) < k ? std::numeric_limits<double>::infinity() : heap.top();
  }

  void search(std::int64_t id, const double* q, int k, Eigen::Index exclude, Heap& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (Eigen::Index i = node.begin; i < node.end; ++i) {
        const Eigen::Index p = index_[static_cast<std::size_t>(i)];
        if (p == exclude) continue;
        const double* x = point(p);
        double d2 = 0.0;
        for (int c = 0; c < dim_; ++c) d2 += (x[c] - q[c]) * (x[c] - q[c]);
        offer(heap, d2, k);
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const auto near = diff < 0.0 ? node.left : node.right;
    const auto far = diff < 0.0 ? node.right : node.left;
    search(near, q, k, exclude, heap);
    if (diff * diff <= bound(heap, k)) search(far, q, k, exclude, heap);
  }

  int dim_;
  Eigen::Index n_;
  std::vector<double> data_;
  std::vector<Eigen::Index> index_;
  std::vector<Node> nodes_;
};

} // namespace neurocal
