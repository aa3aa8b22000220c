#pragma once

// Fiberwise-polynomial symbols on the cotangent bundle, stored as symmetric
// all-upper component tensors with a density weight tag.

#include <string>
#include <vector>

#include "confsym/curvature.hpp"

namespace confsym {

class PolySymbol {
 public:
  PolySymbol() = default;
  PolySymbol(TensorField comps, Rational weight = 0)
      : comps_(std::move(comps)), weight_(std::move(weight)) {
    for (bool u : comps_.variance())
      if (!u) throw Error(Errc::MixedVariance, "symbol components must be all-upper");
  }

  static PolySymbol scalar(GeometryPtr g, Expr value, Rational weight = 0) {
    return PolySymbol(TensorField::scalar(std::move(g), std::move(value)), std::move(weight));
  }

  int degree() const { return comps_.rank(); }
  const Rational& weight() const { return weight_; }
  const TensorField& components() const { return comps_; }
  TensorField& components() { return comps_; }
  const GeometryPtr& geometry() const { return comps_.geometry(); }
  bool is_zero() const { return comps_.is_zero(); }

  PolySymbol symmetrized() const { return PolySymbol(symmetrize_all(comps_), weight_); }

  // rendering as a polynomial in p_i, for reports
  std::string to_p_string() const {
    const auto& names = geometry()->coords();
    std::string out;
    bool any = false;
    comps_.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
      std::vector<int> sorted = idx;
      std::sort(sorted.begin(), sorted.end());
      if (sorted != idx) return;  // one representative per multiset
      const Expr& base = comps_.components()[k];
      if (base.is_zero()) return;
      // multiplicity of this index multiset
      long mult = 1, fact = 1;
      for (int i = 2; i <= static_cast<int>(idx.size()); ++i) fact *= i;
      long dup = 1;
      for (size_t i = 1, run = 1; i <= sorted.size(); ++i) {
        if (i < sorted.size() && sorted[i] == sorted[i - 1]) ++run;
        else {
          for (size_t r = 2; r <= run; ++r) dup *= static_cast<long>(r);
          run = 1;
        }
      }
      mult = fact / dup;
      Expr coeff = Expr(Rational(mult)) * base;
      std::string term = "(" + coeff.to_string() + ")";
      for (int i : sorted) term += "*p_" + names[i];
      out += (any ? " + " : "") + term;
      any = true;
    });
    return any ? out : "0";
  }

 private:
  TensorField comps_;
  Rational weight_ = 0;
};

inline PolySymbol operator+(const PolySymbol& a, const PolySymbol& b) {
  if (a.weight() != b.weight()) throw Error(Errc::WeightMismatch, "symbol weights differ");
  return PolySymbol(a.components() + b.components(), a.weight());
}
inline PolySymbol operator-(const PolySymbol& a, const PolySymbol& b) {
  if (a.weight() != b.weight()) throw Error(Errc::WeightMismatch, "symbol weights differ");
  return PolySymbol(a.components() - b.components(), a.weight());
}
inline PolySymbol operator*(const Expr& s, const PolySymbol& a) {
  return PolySymbol(s * a.components(), a.weight());
}

// H = g^{ij} p_i p_j
inline PolySymbol hamiltonian_symbol(const GeometryPtr& G) {
  int n = G->dim();
  TensorField t(G, {true, true});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t.at({i, j}) = G->inverse_metric(i, j);
  return PolySymbol(std::move(t));
}

// canonical Poisson bracket, coordinate formula on component tensors
inline PolySymbol poisson(const PolySymbol& s1, const PolySymbol& s2) {
  if (s1.weight() != 0 || s2.weight() != 0)
    throw Error(Errc::WeightedOperand, "poisson bracket requires weight-0 symbols");
  const auto& G = s1.geometry();
  int n = G->dim();
  int k1 = s1.degree(), k2 = s2.degree();
  int kr = k1 + k2 - 1;
  if (kr < 0) return PolySymbol::scalar(G, Expr());
  TensorField out(G, std::vector<bool>(kr, true));
  // (d_{p_i} S1)(d_{x^i} S2): k1 * S1^{i a..} d_i S2^{b..}, then symmetrize
  out.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
    Expr sum;
    for (int i = 0; i < n; ++i) {
      if (k1 > 0) {
        std::vector<int> ia(idx.begin(), idx.begin() + (k1 - 1));
        ia.insert(ia.begin(), i);
        std::vector<int> ib(idx.begin() + (k1 - 1), idx.end());
        Expr d2 = G->diff(s2.components().at(ib), i);
        sum = sum + Expr(Rational(k1)) * s1.components().at(ia) * d2;
      }
      if (k2 > 0) {
        std::vector<int> ja(idx.begin(), idx.begin() + (k2 - 1));
        ja.insert(ja.begin(), i);
        std::vector<int> jb(idx.begin() + (k2 - 1), idx.end());
        Expr d1 = G->diff(s1.components().at(jb), i);
        sum = sum - Expr(Rational(k2)) * s2.components().at(ja) * d1;
      }
    }
    out.components()[k] = sum;
  });
  return PolySymbol(symmetrize_all(out));
}

// full symmetrized covariant derivative with the new slot raised
inline TensorField killing_residual(const PolySymbol& K) {
  if (K.weight() != 0) throw Error(Errc::WeightedOperand, "killing test requires weight 0");
  TensorField D = covariant_derivative(K.components());
  return symmetrize_all(raise_slot(D, 0));
}

inline bool is_killing(const PolySymbol& K) { return killing_residual(K).is_zero(); }

// conformal Killing operator G: S^k_0 -> S^{k+1}_{2/n}
inline PolySymbol conformal_killing_op(const PolySymbol& S) {
  if (S.weight() != 0) throw Error(Errc::WeightedOperand, "G requires a weight-0 symbol");
  if (S.degree() + 1 > 3)
    throw Error(Errc::RankUnsupported, "trace-free projection capped at rank 3");
  TensorField grad = symmetrize_all(raise_slot(covariant_derivative(S.components()), 0));
  std::vector<int> slots(grad.rank());
  std::iota(slots.begin(), slots.end(), 0);
  TensorField proj = tracefree_project(grad, slots);
  proj.set_weight(0);
  return PolySymbol(std::move(proj), Rational(2, S.geometry()->dim()));
}

// trace decomposition: S = Pi0(S) + H * S'; membership in the ideal (H)
inline bool in_ideal_H(const PolySymbol& S) {
  if (S.weight() != 0) throw Error(Errc::WeightedOperand, "ideal test requires weight 0");
  if (S.degree() < 2) throw Error(Errc::DegreeTooLow, "ideal test needs degree >= 2");
  if (S.degree() > 3) throw Error(Errc::RankUnsupported, "ideal test capped at degree 3");
  std::vector<int> slots(S.degree());
  std::iota(slots.begin(), slots.end(), 0);
  return tracefree_project(S.symmetrized().components(), slots).is_zero();
}

}  // namespace confsym
