#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "neurocal/errors.hpp"

namespace neurocal {

/// Primal network simplex for the balanced, uncapacitated transportation
/// problem on a complete bipartite graph: sources 0..n-1 with integer supply,
/// sinks 0..m-1 with integer demand, dense row-major costs.
///
/// Spanning-tree bookkeeping (thread/parent/successor-count lists, block
/// search pivoting, artificial root) follows the classic LEMON design.
class TransportSimplex {
public:
  enum class Status { optimal, infeasible };

  TransportSimplex(std::span<const std::int64_t> supply, std::span<const std::int64_t> demand,
                   std::span<const double> cost)
      : n_(static_cast<int>(supply.size())), m_(static_cast<int>(demand.size())) {
    if (n_ == 0 || m_ == 0) throw ConfigurationError("transport problem needs nonempty marginals");
    if (cost.size() != supply.size() * demand.size()) throw ConfigurationError("cost matrix has the wrong size");
    std::int64_t s = 0, d = 0;
    for (auto v : supply) {
      if (v < 0) throw ConfigurationError("supplies must be nonnegative");
      s += v;
    }
    for (auto v : demand) {
      if (v < 0) throw ConfigurationError("demands must be nonnegative");
      d += v;
    }
    if (s != d) throw ConfigurationError("transport problem is unbalanced");

    node_num_ = n_ + m_;
    arc_num_ = n_ * m_;
    all_arc_num_ = arc_num_ + node_num_;
    root_ = node_num_;

    source_.resize(static_cast<std::size_t>(all_arc_num_));
    target_.resize(static_cast<std::size_t>(all_arc_num_));
    cost_.resize(static_cast<std::size_t>(all_arc_num_));
    flow_.assign(static_cast<std::size_t>(all_arc_num_), 0);
    state_.assign(static_cast<std::size_t>(all_arc_num_), kStateLower);
    for (int i = 0, e = 0; i < n_; ++i) {
      for (int j = 0; j < m_; ++j, ++e) {
        source_[e] = i;
        target_[e] = n_ + j;
        cost_[e] = cost[static_cast<std::size_t>(e)];
        if (!std::isfinite(cost_[e])) throw ConfigurationError("transport costs must be finite");
      }
    }
    supply_.resize(static_cast<std::size_t>(node_num_ + 1));
    for (int i = 0; i < n_; ++i) supply_[i] = supply[static_cast<std::size_t>(i)];
    for (int j = 0; j < m_; ++j) supply_[n_ + j] = -demand[static_cast<std::size_t>(j)];
    supply_[root_] = 0;
  }

  Status run() {
    init();
    initial_pivots();
    while (find_entering_arc()) {
      find_join_node();
      if (!find_leaving_arc()) return Status::infeasible;
      change_flow();
      update_tree_structure();
      update_potential();
    }
    for (int e = arc_num_; e < all_arc_num_; ++e)
      if (flow_[e] != 0) return Status::infeasible;
    return Status::optimal;
  }

  /// Sum of flow * cost over the original arcs.
  double total_cost() const {
    long double sum = 0.0L;
    for (int e = 0; e < arc_num_; ++e)
      if (flow_[e] != 0) sum += static_cast<long double>(flow_[e]) * cost_[e];
    return static_cast<double>(sum);
  }

  std::int64_t flow(int i, int j) const { return flow_[static_cast<std::size_t>(i) * m_ + j]; }

  /// Node potentials of the final tree (sources first, then sinks).
  double potential(int node) const { return pi_[node]; }

private:
  static constexpr std::int8_t kStateTree = 0;
  static constexpr std::int8_t kStateLower = 1;
  static constexpr int kDirUp = 1;
  static constexpr int kDirDown = -1;
  static constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();
  static constexpr double kEpsilon = 64.0 * std::numeric_limits<double>::epsilon();

  void init() {
    double max_cost = 0.0;
    for (int e = 0; e < arc_num_; ++e) max_cost = std::max(max_cost, std::abs(cost_[e]));
    art_cost_ = (max_cost + 1.0) * node_num_;

    const auto nodes = static_cast<std::size_t>(node_num_ + 1);
    parent_.assign(nodes, 0);
    pred_.assign(nodes, 0);
    thread_.assign(nodes, 0);
    rev_thread_.assign(nodes, 0);
    succ_num_.assign(nodes, 0);
    last_succ_.assign(nodes, 0);
    pred_dir_.assign(nodes, 0);
    pi_.assign(nodes, 0.0);

    block_size_ = std::max(10, static_cast<int>(std::sqrt(static_cast<double>(arc_num_))));
    next_arc_ = 0;

    parent_[root_] = -1;
    pred_[root_] = -1;
    thread_[root_] = 0;
    rev_thread_[0] = root_;
    succ_num_[root_] = node_num_ + 1;
    last_succ_[root_] = root_ - 1;
    pi_[root_] = 0.0;

    for (int u = 0, e = arc_num_; u != node_num_; ++u, ++e) {
      parent_[u] = root_;
      pred_[u] = e;
      thread_[u] = u + 1;
      rev_thread_[u + 1] = u;
      succ_num_[u] = 1;
      last_succ_[u] = u;
      state_[e] = kStateTree;
      if (supply_[u] >= 0) {
        pred_dir_[u] = kDirUp;
        pi_[u] = 0.0;
        source_[e] = u;
        target_[e] = root_;
        flow_[e] = supply_[u];
        cost_[e] = 0.0;
      } else {
        pred_dir_[u] = kDirDown;
        pi_[u] = art_cost_;
        source_[e] = root_;
        target_[e] = u;
        flow_[e] = -supply_[u];
        cost_[e] = art_cost_;
      }
    }
  }

  double reduced_cost(int e) const { return cost_[e] + pi_[source_[e]] - pi_[target_[e]]; }

  bool negative(int e, double c) const {
    const double scale = std::max({std::abs(pi_[source_[e]]), std::abs(pi_[target_[e]]), std::abs(cost_[e])});
    return c < -kEpsilon * scale;
  }

  // Cheapest incoming arc for every sink, pivoted in before the main loop.
  void initial_pivots() {
    for (int j = 0; j < m_; ++j) {
      if (supply_[n_ + j] == 0) continue;
      int best = -1;
      double best_cost = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n_; ++i) {
        const int e = i * m_ + j;
        if (cost_[e] < best_cost) {
          best_cost = cost_[e];
          best = e;
        }
      }
      in_arc_ = best;
      const double c = state_[in_arc_] * reduced_cost(in_arc_);
      if (!(c < 0.0) || !negative(in_arc_, c)) continue;
      find_join_node();
      if (!find_leaving_arc()) continue;
      change_flow();
      update_tree_structure();
      update_potential();
    }
  }

  bool find_entering_arc() {
    double min = 0.0;
    int cnt = block_size_;
    int e = next_arc_;
    bool found = false;
    auto visit = [&](int a) {
      const double c = state_[a] * reduced_cost(a);
      if (c < min && negative(a, c)) {
        min = c;
        in_arc_ = a;
        found = true;
      }
    };
    for (; e != arc_num_; ++e) {
      visit(e);
      if (--cnt == 0) {
        if (found) {
          next_arc_ = e + 1 == arc_num_ ? 0 : e + 1;
          return true;
        }
        cnt = block_size_;
      }
    }
    for (e = 0; e != next_arc_; ++e) {
      visit(e);
      if (--cnt == 0) {
        if (found) {
          next_arc_ = e + 1;
          return true;
        }
        cnt = block_size_;
      }
    }
    if (!found) return false;
    next_arc_ = e == arc_num_ ? 0 : e;
    return true;
  }

  void find_join_node() {
    int u = source_[in_arc_], v = target_[in_arc_];
    while (u != v) {
      if (succ_num_[u] < succ_num_[v])
        u = parent_[u];
      else
        v = parent_[v];
    }
    join_ = u;
  }

  // All arcs are uncapacitated: only arcs whose flow would decrease bound
  // the step length.
  bool find_leaving_arc() {
    const int first = source_[in_arc_];
    const int second = target_[in_arc_];
    delta_ = kInf;
    int result = 0;
    for (int u = first; u != join_; u = parent_[u]) {
      if (pred_dir_[u] != kDirUp) continue;
      const std::int64_t d = flow_[pred_[u]];
      if (d < delta_) {
        delta_ = d;
        u_out_ = u;
        result = 1;
      }
    }
    for (int u = second; u != join_; u = parent_[u]) {
      if (pred_dir_[u] != kDirDown) continue;
      const std::int64_t d = flow_[pred_[u]];
      if (d <= delta_) {
        delta_ = d;
        u_out_ = u;
        result = 2;
      }
    }
    if (result == 0) return false;
    if (result == 1) {
      u_in_ = first;
      v_in_ = second;
    } else {
      u_in_ = second;
      v_in_ = first;
    }
    return true;
  }

  void change_flow() {
    if (delta_ > 0) {
      const std::int64_t val = delta_;
      flow_[in_arc_] += val;
      for (int u = source_[in_arc_]; u != join_; u = parent_[u]) flow_[pred_[u]] -= pred_dir_[u] * val;
      for (int u = target_[in_arc_]; u != join_; u = parent_[u]) flow_[pred_[u]] += pred_dir_[u] * val;
    }
    state_[in_arc_] = kStateTree;
    state_[pred_[u_out_]] = kStateLower;
  }

  void update_tree_structure() {
    const int old_rev_thread = rev_thread_[u_out_];
    const int old_succ_num = succ_num_[u_out_];
    const int old_last_succ = last_succ_[u_out_];
    v_out_ = parent_[u_out_];

    if (u_in_ == u_out_) {
      parent_[u_in_] = v_in_;
      pred_[u_in_] = in_arc_;
      pred_dir_[u_in_] = u_in_ == source_[in_arc_] ? kDirUp : kDirDown;
      if (thread_[v_in_] != u_out_) {
        int after = thread_[old_last_succ];
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
        after = thread_[v_in_];
        thread_[v_in_] = u_out_;
        rev_thread_[u_out_] = v_in_;
        thread_[old_last_succ] = after;
        rev_thread_[after] = old_last_succ;
      }
    } else {
      const int thread_continue = old_rev_thread == v_in_ ? thread_[old_last_succ] : thread_[v_in_];

      // Re-hang the stem nodes between u_in and u_out.
      int stem = u_in_;
      int par_stem = v_in_;
      int next_stem;
      int last = last_succ_[u_in_];
      int before, after = thread_[last];
      thread_[v_in_] = u_in_;
      dirty_revs_.clear();
      dirty_revs_.push_back(v_in_);
      while (stem != u_out_) {
        next_stem = parent_[stem];
        thread_[last] = next_stem;
        dirty_revs_.push_back(last);

        before = rev_thread_[stem];
        thread_[before] = after;
        rev_thread_[after] = before;

        parent_[stem] = par_stem;
        par_stem = stem;
        stem = next_stem;

        last = last_succ_[stem] == last_succ_[par_stem] ? rev_thread_[par_stem] : last_succ_[stem];
        after = thread_[last];
      }
      parent_[u_out_] = par_stem;
      thread_[last] = thread_continue;
      rev_thread_[thread_continue] = last;
      last_succ_[u_out_] = last;

      if (old_rev_thread != v_in_) {
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
      }
      for (int u : dirty_revs_) rev_thread_[thread_[u]] = u;

      int tmp_sc = 0;
      const int tmp_ls = last_succ_[u_out_];
      for (int u = u_out_, p = parent_[u]; u != u_in_; u = p, p = parent_[u]) {
        pred_[u] = pred_[p];
        pred_dir_[u] = -pred_dir_[p];
        tmp_sc += succ_num_[u] - succ_num_[p];
        succ_num_[u] = tmp_sc;
        last_succ_[p] = tmp_ls;
      }
      pred_[u_in_] = in_arc_;
      pred_dir_[u_in_] = u_in_ == source_[in_arc_] ? kDirUp : kDirDown;
      succ_num_[u_in_] = old_succ_num;
    }

    const int up_limit_out = last_succ_[join_] == v_in_ ? join_ : -1;
    const int last_succ_out = last_succ_[u_out_];
    for (int u = v_in_; u != -1 && last_succ_[u] == v_in_; u = parent_[u]) last_succ_[u] = last_succ_out;

    if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
      for (int u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u])
        last_succ_[u] = old_rev_thread;
    } else if (last_succ_out != old_last_succ) {
      for (int u = v_out_; u != up_limit_out && last_succ_[u] == old_last_succ; u = parent_[u])
        last_succ_[u] = last_succ_out;
    }

    for (int u = v_in_; u != join_; u = parent_[u]) succ_num_[u] += old_succ_num;
    for (int u = v_out_; u != join_; u = parent_[u]) succ_num_[u] -= old_succ_num;
  }

  void update_potential() {
    const double sigma = pi_[v_in_] - pi_[u_in_] - pred_dir_[u_in_] * cost_[in_arc_];
    const int end = thread_[last_succ_[u_in_]];
    for (int u = u_in_; u != end; u = thread_[u]) pi_[u] += sigma;
  }

  int n_, m_;
  int node_num_ = 0, arc_num_ = 0, all_arc_num_ = 0, root_ = 0;
  double art_cost_ = 0.0;

  std::vector<int> source_, target_;
  std::vector<double> cost_;
  std::vector<std::int64_t> flow_;
  std::vector<std::int8_t> state_;
  std::vector<std::int64_t> supply_;

  std::vector<int> parent_, pred_, thread_, rev_thread_, succ_num_, last_succ_, pred_dir_;
  std::vector<double> pi_;
  std::vector<int> dirty_revs_;

  int block_size_ = 10, next_arc_ = 0;
  int in_arc_ = 0, join_ = 0, u_in_ = 0, v_in_ = 0, u_out_ = 0, v_out_ = 0;
  std::int64_t delta_ = 0;
};

} // namespace neurocal
