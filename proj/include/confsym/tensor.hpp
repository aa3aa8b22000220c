#pragma once

// Dense symbolic tensor fields with per-slot variance and a conformal density
// weight tag, realized in the |Vol_g| trivialization (the volume density is
// parallel, so the covariant derivative of the component array is classical).

#include <algorithm>
#include <numeric>
#include <vector>

#include "confsym/geometry.hpp"

namespace confsym {

class TensorField {
 public:
  TensorField() = default;
  TensorField(GeometryPtr geom, std::vector<bool> up, Rational weight = 0)
      : geom_(std::move(geom)), up_(std::move(up)), weight_(std::move(weight)) {
    std::size_t sz = 1;
    for (size_t i = 0; i < up_.size(); ++i) sz *= geom_->dim();
    c_.assign(sz, Expr());
  }

  static TensorField scalar(GeometryPtr geom, Expr value, Rational weight = 0) {
    TensorField t(std::move(geom), {}, std::move(weight));
    t.c_[0] = std::move(value);
    return t;
  }

  int rank() const { return static_cast<int>(up_.size()); }
  int dim() const { return geom_->dim(); }
  const GeometryPtr& geometry() const { return geom_; }
  const std::vector<bool>& variance() const { return up_; }
  const Rational& weight() const { return weight_; }
  TensorField& set_weight(Rational w) {
    weight_ = std::move(w);
    return *this;
  }

  const std::vector<Expr>& components() const { return c_; }
  std::vector<Expr>& components() { return c_; }

  std::size_t flat(const std::vector<int>& idx) const {
    std::size_t f = 0;
    for (int i : idx) f = f * dim() + static_cast<std::size_t>(i);
    return f;
  }
  const Expr& at(const std::vector<int>& idx) const { return c_[flat(idx)]; }
  Expr& at(const std::vector<int>& idx) { return c_[flat(idx)]; }

  bool is_zero() const {
    for (const auto& e : c_)
      if (!e.is_zero()) return false;
    return true;
  }

  template <typename F>
  void for_each_index(F&& f) const {
    std::vector<int> idx(rank(), 0);
    std::size_t total = c_.size();
    for (std::size_t k = 0; k < total; ++k) {
      std::size_t rem = k;
      for (int i = rank() - 1; i >= 0; --i) {
        idx[i] = static_cast<int>(rem % dim());
        rem /= dim();
      }
      f(idx, k);
    }
  }

 private:
  GeometryPtr geom_;
  std::vector<bool> up_;
  Rational weight_ = 0;
  std::vector<Expr> c_;
};

inline void check_compatible(const TensorField& a, const TensorField& b) {
  if (a.geometry() != b.geometry() || a.variance() != b.variance() || a.weight() != b.weight())
    throw Error(Errc::Internal, "tensor shape/weight mismatch");
}

inline TensorField operator+(const TensorField& a, const TensorField& b) {
  check_compatible(a, b);
  TensorField r = a;
  for (size_t i = 0; i < r.components().size(); ++i)
    r.components()[i] = r.components()[i] + b.components()[i];
  return r;
}

inline TensorField operator-(const TensorField& a, const TensorField& b) {
  check_compatible(a, b);
  TensorField r = a;
  for (size_t i = 0; i < r.components().size(); ++i)
    r.components()[i] = r.components()[i] - b.components()[i];
  return r;
}

inline TensorField operator*(const Expr& s, const TensorField& t) {
  TensorField r = t;
  for (auto& e : r.components()) e = s * e;
  return r;
}

inline TensorField operator*(const Rational& s, const TensorField& t) { return Expr(s) * t; }

inline TensorField outer(const TensorField& a, const TensorField& b) {
  if (a.geometry() != b.geometry()) throw Error(Errc::Internal, "tensor geometry mismatch");
  std::vector<bool> up = a.variance();
  up.insert(up.end(), b.variance().begin(), b.variance().end());
  TensorField r(a.geometry(), up, a.weight() + b.weight());
  r.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
    std::vector<int> ia(idx.begin(), idx.begin() + a.rank());
    std::vector<int> ib(idx.begin() + a.rank(), idx.end());
    r.components()[k] = a.at(ia) * b.at(ib);
  });
  return r;
}

// plain contraction of one upper and one lower slot
inline TensorField contract(const TensorField& t, int s1, int s2) {
  if (t.variance()[s1] == t.variance()[s2])
    throw Error(Errc::MixedVariance, "plain trace needs one upper and one lower slot");
  int n = t.dim();
  std::vector<bool> up;
  for (int i = 0; i < t.rank(); ++i)
    if (i != s1 && i != s2) up.push_back(t.variance()[i]);
  TensorField r(t.geometry(), up, t.weight());
  r.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
    std::vector<int> full(t.rank());
    Expr sum;
    for (int c = 0; c < n; ++c) {
      int p = 0;
      for (int i = 0; i < t.rank(); ++i) full[i] = (i == s1 || i == s2) ? c : idx[p++];
      sum = sum + t.at(full);
    }
    r.components()[k] = sum;
  });
  return r;
}

// raise/lower one slot; the conformal-metric bookkeeping shifts the weight
inline TensorField raise_slot(const TensorField& t, int slot) {
  if (t.variance()[slot]) throw Error(Errc::MixedVariance, "slot already upper");
  const auto& G = *t.geometry();
  int n = t.dim();
  std::vector<bool> up = t.variance();
  up[slot] = true;
  TensorField r(t.geometry(), up, t.weight() + Rational(2, n));
  r.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
    Expr sum;
    std::vector<int> src = idx;
    for (int c = 0; c < n; ++c) {
      src[slot] = c;
      sum = sum + G.inverse_metric(idx[slot], c) * t.at(src);
    }
    r.components()[k] = sum;
  });
  return r;
}

inline TensorField lower_slot(const TensorField& t, int slot) {
  if (!t.variance()[slot]) throw Error(Errc::MixedVariance, "slot already lower");
  const auto& G = *t.geometry();
  int n = t.dim();
  std::vector<bool> up = t.variance();
  up[slot] = false;
  TensorField r(t.geometry(), up, t.weight() - Rational(2, n));
  r.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
    Expr sum;
    std::vector<int> src = idx;
    for (int c = 0; c < n; ++c) {
      src[slot] = c;
      sum = sum + G.metric(idx[slot], c) * t.at(src);
    }
    r.components()[k] = sum;
  });
  return r;
}

// metric trace over two same-variance slots
inline TensorField metric_trace(const TensorField& t, int s1, int s2) {
  if (t.variance()[s1] != t.variance()[s2])
    throw Error(Errc::MixedVariance, "metric trace needs same-variance slots");
  return contract(t.variance()[s1] ? lower_slot(t, s1) : raise_slot(t, s1), s1, s2);
}

namespace detail {

inline void permutations_of(std::vector<int> base, std::vector<std::vector<int>>& out) {
  std::sort(base.begin(), base.end());
  do out.push_back(base);
  while (std::next_permutation(base.begin(), base.end()));
}

inline int permutation_sign(const std::vector<int>& from, const std::vector<int>& to) {
  // sign of the permutation mapping positions of `from` onto `to`
  std::vector<int> perm(from.size());
  std::vector<bool> used(from.size(), false);
  for (size_t i = 0; i < from.size(); ++i)
    for (size_t j = 0; j < to.size(); ++j)
      if (!used[j] && to[j] == from[i]) {
        perm[i] = static_cast<int>(j);
        used[j] = true;
        break;
      }
  int sign = 1;
  std::vector<bool> seen(perm.size(), false);
  for (size_t i = 0; i < perm.size(); ++i) {
    if (seen[i]) continue;
    int len = 0;
    for (size_t j = i; !seen[j]; j = static_cast<size_t>(perm[j])) {
      seen[j] = true;
      ++len;
    }
    if (len % 2 == 0) sign = -sign;
  }
  return sign;
}

}  // namespace detail

// average over permutations of the listed slots (sign for antisymmetrization)
inline TensorField sym_impl(const TensorField& t, const std::vector<int>& slots, bool anti) {
  for (int s : slots)
    if (t.variance()[s] != t.variance()[slots[0]])
      throw Error(Errc::MixedVariance, "symmetrized slots must share variance");
  std::vector<std::vector<int>> perms;
  detail::permutations_of(slots, perms);
  TensorField r(t.geometry(), t.variance(), t.weight());
  Rational inv(1, static_cast<long>(perms.size()));
  r.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
    Expr sum;
    for (const auto& p : perms) {
      std::vector<int> src = idx;
      for (size_t i = 0; i < slots.size(); ++i) src[slots[i]] = idx[p[i]];
      Expr term = t.at(src);
      if (anti) {
        int sgn = detail::permutation_sign(slots, p);
        if (sgn < 0) term = -term;
      }
      sum = sum + term;
    }
    r.components()[k] = Expr(inv) * sum;
  });
  return r;
}

inline TensorField symmetrize(const TensorField& t, const std::vector<int>& slots) {
  return sym_impl(t, slots, false);
}
inline TensorField antisymmetrize(const TensorField& t, const std::vector<int>& slots) {
  return sym_impl(t, slots, true);
}
inline TensorField symmetrize_all(const TensorField& t) {
  std::vector<int> slots(t.rank());
  std::iota(slots.begin(), slots.end(), 0);
  return symmetrize(t, slots);
}

// trace-free projection over <= 3 symmetric same-variance slots (spectators allowed)
inline TensorField tracefree_project(const TensorField& t, const std::vector<int>& slots) {
  if (slots.size() > 3) throw Error(Errc::RankUnsupported, "trace-free projection capped at rank 3");
  if (slots.size() <= 1) return t;
  for (int s : slots)
    if (t.variance()[s] != t.variance()[slots[0]])
      throw Error(Errc::MixedVariance, "projection slots must share variance");
  const auto& G = *t.geometry();
  int n = t.dim();
  bool up = t.variance()[slots[0]];
  auto metric_at = [&](int i, int j) { return up ? G.metric(i, j) : G.inverse_metric(i, j); };
  auto inv_metric_at = [&](int i, int j) { return up ? G.inverse_metric(i, j) : G.metric(i, j); };

  if (slots.size() == 2) {
    // T - (tr T / n) g
    TensorField r = t;
    r.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
      Expr tr;
      std::vector<int> src = idx;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          src[slots[0]] = a;
          src[slots[1]] = b;
          tr = tr + metric_at(a, b) * t.at(src);
        }
      r.components()[k] =
          t.at(idx) - Expr(Rational(1, n)) * inv_metric_at(idx[slots[0]], idx[slots[1]]) * tr;
    });
    return r;
  }

  // rank-3 block: S - (3/(n+2)) g_((s1 s2) v_(s3)) with v the metric trace
  TensorField r = t;
  r.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
    // v_c = g^{ab} T_{ab c(spectators)} over the slot triple
    auto trace_v = [&](int cval) {
      Expr v;
      std::vector<int> src = idx;
      src[slots[2]] = cval;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          src[slots[0]] = a;
          src[slots[1]] = b;
          v = v + metric_at(a, b) * t.at(src);
        }
      return v;
    };
    int i0 = idx[slots[0]], i1 = idx[slots[1]], i2 = idx[slots[2]];
    Expr corr = inv_metric_at(i0, i1) * trace_v(i2) + inv_metric_at(i1, i2) * trace_v(i0) +
                inv_metric_at(i2, i0) * trace_v(i1);
    r.components()[k] = t.at(idx) - Expr(Rational(1, n + 2)) * corr;
  });
  return r;
}

}  // namespace confsym
