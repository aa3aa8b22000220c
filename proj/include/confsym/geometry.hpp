#pragma once

// Coordinate-chart pseudo-Riemannian geometry: chart, declared abstract
// functions, metric components, inverse metric and determinant.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "confsym/expr.hpp"

namespace confsym {

struct FunctionDecl {
  std::string name;
  std::vector<std::string> args;  // empty: constant parameter
};

class Geometry;
using GeometryPtr = std::shared_ptr<const Geometry>;

class Geometry : public std::enable_shared_from_this<Geometry> {
 public:
  static GeometryPtr create(std::vector<std::string> coords, std::vector<FunctionDecl> functions,
                            std::vector<Expr> metric_lower, std::string signature = "") {
    auto g = std::shared_ptr<Geometry>(new Geometry());
    int n = static_cast<int>(coords.size());
    if (n < 3) throw Error(Errc::DimensionTooSmall, "dimension must be at least 3");
    if (static_cast<int>(metric_lower.size()) != n * n)
      throw Error(Errc::Internal, "metric component count mismatch");
    g->n_ = n;
    g->coords_ = std::move(coords);
    g->functions_ = std::move(functions);
    g->signature_ = std::move(signature);
    for (const auto& c : g->coords_) g->coord_exprs_.push_back(Expr::coordinate(c));
    g->g_ = std::move(metric_lower);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (!(g->g_[i * n + j] - g->g_[j * n + i]).is_zero())
          throw Error(Errc::AsymmetricMetric, "metric is not symmetric at entry (" +
                                                  std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
    g->det_ = det_expr(g->g_, n);
    if (g->det_.is_zero())
      throw Error(Errc::DegenerateMetric, "metric determinant is identically zero");
    g->ginv_.resize(n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        Expr cof = cofactor(g->g_, n, j, i);
        g->ginv_[i * n + j] = cof / g->det_;
      }
    return g;
  }

  int dim() const { return n_; }
  const std::vector<std::string>& coords() const { return coords_; }
  const std::vector<FunctionDecl>& functions() const { return functions_; }
  const std::string& signature() const { return signature_; }

  const Expr& metric(int i, int j) const { return g_[i * n_ + j]; }
  const Expr& inverse_metric(int i, int j) const { return ginv_[i * n_ + j]; }
  const Expr& det() const { return det_; }

  // |det g| as an expression; negative-signature charts carry the sign flip
  Expr abs_det() const {
    int minus = 0;
    for (char c : signature_)
      if (c == '-') ++minus;
    return (minus % 2) ? -det_ : det_;
  }
  Expr sqrt_abs_det() const { return Expr::sqrt(abs_det()); }

  // d_i log sqrt|det g| = (1/2) (d_i det)/det; rational, used by divergence forms
  Expr dlog_sqrt_det(int i) const { return det_.diff(coords_[i]) / (2 * det_); }

  Expr diff(const Expr& e, int i) const { return e.diff(coords_[i]); }

  // opaque per-geometry caches (curvature pack lives here)
  template <typename T, typename F>
  std::shared_ptr<const T> cached(const std::string& key, F&& compute) const {
    std::lock_guard lk(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return std::static_pointer_cast<const T>(it->second);
    auto value = std::shared_ptr<const T>(compute());
    cache_.emplace(key, value);
    return value;
  }

 private:
  Geometry() = default;

  static Expr det_expr(const std::vector<Expr>& m, int n) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    Expr total;
    // Leibniz expansion; n is small (3 or 4 in practice)
    std::vector<int> perm(idx);
    std::vector<bool> used(n, false);
    std::vector<int> stack;
    Expr acc(1L);
    std::function<void(int, int)> rec = [&](int row, int sign) {
      if (row == n) {
        Expr p(sign == 1 ? 1L : -1L);
        for (int i = 0; i < n; ++i) p = p * m[i * n + stack[i]];
        total = total + p;
        return;
      }
      for (int j = 0; j < n; ++j) {
        if (used[j]) continue;
        int s = sign;
        for (int k : stack)
          if (k > j) s = -s;
        used[j] = true;
        stack.push_back(j);
        rec(row + 1, s);
        stack.pop_back();
        used[j] = false;
      }
    };
    rec(0, 1);
    return total;
  }

  static Expr cofactor(const std::vector<Expr>& m, int n, int row, int col) {
    std::vector<Expr> sub;
    sub.reserve((n - 1) * (n - 1));
    for (int i = 0; i < n; ++i) {
      if (i == row) continue;
      for (int j = 0; j < n; ++j) {
        if (j == col) continue;
        sub.push_back(m[i * n + j]);
      }
    }
    Expr d = det_expr(sub, n - 1);
    return ((row + col) % 2) ? -d : d;
  }

  int n_ = 0;
  std::vector<std::string> coords_;
  std::vector<Expr> coord_exprs_;
  std::vector<FunctionDecl> functions_;
  std::string signature_;
  std::vector<Expr> g_, ginv_;
  Expr det_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<const void>> cache_;
};

}  // namespace confsym
