#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <vector>

#include "stagdid/error.hpp"

namespace stagdid {

// Weighted dominance sums s_j = sum_i a_i 1{x_i <= u_j} (componentwise) for
// fixed data points x_i and query points u_j. The geometry is preprocessed
// once; each application costs O((n + q) log n) for one or two coordinates
// and O(n q) otherwise.
class DominanceSum {
 public:
  DominanceSum(const Eigen::MatrixXd& points, const Eigen::MatrixXd& queries)
      : n_(points.rows()), q_(queries.rows()), dim_(points.cols()) {
    if (queries.cols() != dim_) throw Error("pretest", "query points and data points differ in dimension");
    if (dim_ == 1) prepare_1d(points, queries);
    else if (dim_ == 2) prepare_2d(points, queries);
    else if (dim_ > 2) prepare_dense(points, queries);
  }

  Eigen::Index n_points() const { return n_; }
  Eigen::Index n_queries() const { return q_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& a) const {
    Eigen::VectorXd out(q_);
    apply_into(a.data(), out.data());
    return out;
  }

  // Applies the operator to every column of `a` (n x c), giving q x c.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& a) const {
    if (dim_ > 2 && indicator_.size() > 0) return indicator_ * a;
    Eigen::MatrixXd out(q_, a.cols());
    for (Eigen::Index c = 0; c < a.cols(); ++c) apply_into(a.col(c).data(), out.col(c).data());
    return out;
  }

 private:
  void apply_into(const double* a, double* out) const {
    if (dim_ == 0) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < n_; ++i) total += a[i];
      std::fill(out, out + q_, total);
    } else if (dim_ == 1) {
      std::vector<double> prefix(static_cast<std::size_t>(n_) + 1, 0.0);
      for (Eigen::Index r = 0; r < n_; ++r) prefix[r + 1] = prefix[r] + a[order_[r]];
      for (Eigen::Index j = 0; j < q_; ++j) out[j] = prefix[counts_[j]];
    } else if (dim_ == 2) {
      std::vector<double> tree(static_cast<std::size_t>(n_) + 1, 0.0);
      Eigen::Index inserted = 0;
      for (Eigen::Index s = 0; s < q_; ++s) {
        const Eigen::Index j = query_order_[s];
        for (; inserted < counts_[j]; ++inserted) {
          const Eigen::Index i = order_[inserted];
          for (Eigen::Index pos = slot_[i]; pos <= n_; pos += pos & -pos) tree[pos] += a[i];
        }
        double sum = 0.0;
        for (Eigen::Index pos = prefix_[j]; pos > 0; pos -= pos & -pos) sum += tree[pos];
        out[j] = sum;
      }
    } else if (indicator_.size() > 0) {
      Eigen::Map<const Eigen::VectorXd> av(a, n_);
      Eigen::Map<Eigen::VectorXd>(out, q_).noalias() = indicator_ * av;
    } else {
      for (Eigen::Index j = 0; j < q_; ++j) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i)
          if ((points_.row(i).array() <= queries_.row(j).array()).all()) sum += a[i];
        out[j] = sum;
      }
    }
  }

  void prepare_1d(const Eigen::MatrixXd& x, const Eigen::MatrixXd& u) {
    order_ = sorted_order(x.col(0));
    std::vector<double> sorted(static_cast<std::size_t>(n_));
    for (Eigen::Index r = 0; r < n_; ++r) sorted[r] = x(order_[r], 0);
    counts_.resize(static_cast<std::size_t>(q_));
    for (Eigen::Index j = 0; j < q_; ++j)
      counts_[j] = std::upper_bound(sorted.begin(), sorted.end(), u(j, 0)) - sorted.begin();
  }

  // Sweep over the first coordinate with a Fenwick tree over the ranks of the second.
  void prepare_2d(const Eigen::MatrixXd& x, const Eigen::MatrixXd& u) {
    order_ = sorted_order(x.col(0));
    std::vector<double> first(static_cast<std::size_t>(n_));
    for (Eigen::Index r = 0; r < n_; ++r) first[r] = x(order_[r], 0);
    std::vector<double> second(x.col(1).data(), x.col(1).data() + n_);
    std::sort(second.begin(), second.end());
    slot_.resize(static_cast<std::size_t>(n_));
    for (Eigen::Index i = 0; i < n_; ++i)
      slot_[i] = (std::lower_bound(second.begin(), second.end(), x(i, 1)) - second.begin()) + 1;
    query_order_ = sorted_order(u.col(0));
    counts_.resize(static_cast<std::size_t>(q_));
    prefix_.resize(static_cast<std::size_t>(q_));
    for (Eigen::Index j = 0; j < q_; ++j) {
      counts_[j] = std::upper_bound(first.begin(), first.end(), u(j, 0)) - first.begin();
      prefix_[j] = std::upper_bound(second.begin(), second.end(), u(j, 1)) - second.begin();
    }
  }

  void prepare_dense(const Eigen::MatrixXd& x, const Eigen::MatrixXd& u) {
    if (static_cast<double>(q_) * static_cast<double>(n_) > kMaxDenseEntries) {
      points_ = x;
      queries_ = u;
      return;
    }
    indicator_.resize(q_, n_);
    for (Eigen::Index j = 0; j < q_; ++j)
      for (Eigen::Index i = 0; i < n_; ++i)
        indicator_(j, i) = (x.row(i).array() <= u.row(j).array()).all() ? 1.0 : 0.0;
  }

  static std::vector<Eigen::Index> sorted_order(const Eigen::VectorXd& v) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
    return order;
  }

  static constexpr double kMaxDenseEntries = 2.5e7;

  Eigen::Index n_;
  Eigen::Index q_;
  Eigen::Index dim_;
  std::vector<Eigen::Index> order_;
  std::vector<Eigen::Index> query_order_;
  std::vector<Eigen::Index> counts_;
  std::vector<Eigen::Index> prefix_;
  std::vector<Eigen::Index> slot_;
  Eigen::MatrixXd indicator_;
  Eigen::MatrixXd points_;
  Eigen::MatrixXd queries_;
};

}  // namespace stagdid
