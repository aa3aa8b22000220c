#pragma once

// Curvature apparatus: Christoffel symbols, Riemann/Ricci/scalar curvature,
// Schouten, Weyl, Cotton-York, covariant derivatives, conformal rescaling and
// the transformation-law residual suite.
//
// Conventions. [nabla_a, nabla_b] v^c = R_ab^c_d v^d; Ric_bd = R_ab^a_d;
// P = (Ric - Sc g/(2(n-1)))/(n-2); A_abc = 2 nabla_[b P_c]a (P-index first);
// C_ab^c_d = R - 2 delta^c_[a P_b]d - 2 g_d[b P_a]^c.

#include <string>
#include <utility>
#include <vector>

#include "confsym/tensor.hpp"

namespace confsym {

struct CurvaturePack {
  TensorField christoffel;  // Gamma^i_jk, slots (up, down, down)
  TensorField riemann;      // R_ab^c_d, slots (down, down, up, down)
  TensorField ricci;        // Ric_ab
  Expr scalar;              // Sc
  TensorField schouten;     // P_ab
  Expr j_scalar;            // J = Sc/(2(n-1))
  TensorField weyl;         // C_ab^c_d, slots (down, down, up, down)
  TensorField cotton;       // A_abc = nabla_b P_ca - nabla_c P_ba
  Expr det;                 // det g
  Expr sqrt_abs_det;        // sqrt|det g|
};

// covariant derivative, new lower slot in front: (nabla T)_a... = nabla_a T...
inline TensorField covariant_derivative(const TensorField& t);

namespace detail {

inline TensorField compute_christoffel(const GeometryPtr& G) {
  int n = G->dim();
  TensorField Gamma(G, {true, false, false});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = j; k < n; ++k) {
        Expr sum;
        for (int l = 0; l < n; ++l)
          sum = sum + G->inverse_metric(i, l) *
                          (G->diff(G->metric(l, j), k) + G->diff(G->metric(l, k), j) -
                           G->diff(G->metric(j, k), l));
        Expr val = sum / 2;
        Gamma.at({i, j, k}) = val;
        Gamma.at({i, k, j}) = val;
      }
  return Gamma;
}

inline const CurvaturePack& pack(const GeometryPtr& G);

}  // namespace detail

inline const TensorField& christoffel(const GeometryPtr& G) { return detail::pack(G).christoffel; }
inline const TensorField& riemann(const GeometryPtr& G) { return detail::pack(G).riemann; }
inline const TensorField& ricci(const GeometryPtr& G) { return detail::pack(G).ricci; }
inline const Expr& scalar_curvature(const GeometryPtr& G) { return detail::pack(G).scalar; }
inline std::pair<TensorField, Expr> schouten(const GeometryPtr& G) {
  const auto& p = detail::pack(G);
  return {p.schouten, p.j_scalar};
}
inline const TensorField& weyl(const GeometryPtr& G) { return detail::pack(G).weyl; }
inline const TensorField& cotton_york(const GeometryPtr& G) { return detail::pack(G).cotton; }
inline const CurvaturePack& curvature(const GeometryPtr& G) { return detail::pack(G); }

inline TensorField covariant_derivative(const TensorField& t) {
  const auto& G = t.geometry();
  int n = t.dim();
  const TensorField& Gamma = christoffel(G);
  std::vector<bool> up{false};
  up.insert(up.end(), t.variance().begin(), t.variance().end());
  TensorField r(G, up, t.weight());
  r.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
    int a = idx[0];
    std::vector<int> rest(idx.begin() + 1, idx.end());
    Expr sum = G->diff(t.at(rest), a);
    for (int s = 0; s < t.rank(); ++s) {
      std::vector<int> src = rest;
      for (int e = 0; e < n; ++e) {
        src[s] = e;
        if (t.variance()[s]) sum = sum + Gamma.at({rest[s], a, e}) * t.at(src);
        else sum = sum - Gamma.at({e, a, rest[s]}) * t.at(src);
      }
    }
    r.components()[k] = sum;
  });
  return r;
}

inline TensorField coordinate_gradient(const GeometryPtr& G, const Expr& f) {
  TensorField r(G, {false});
  for (int i = 0; i < G->dim(); ++i) r.at({i}) = G->diff(f, i);
  return r;
}

namespace detail {

inline CurvaturePack* compute_pack(const GeometryPtr& G) {
  auto out = new CurvaturePack();
  int n = G->dim();
  out->christoffel = compute_christoffel(G);
  const TensorField& Ga = out->christoffel;

  TensorField R(G, {false, false, true, false});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          if (a == b) continue;  // antisymmetric pair, diagonal stays zero
          Expr sum = G->diff(Ga.at({c, b, d}), a) - G->diff(Ga.at({c, a, d}), b);
          for (int e = 0; e < n; ++e)
            sum = sum + Ga.at({c, a, e}) * Ga.at({e, b, d}) - Ga.at({c, b, e}) * Ga.at({e, a, d});
          R.at({a, b, c, d}) = sum;
        }
  out->riemann = R;

  TensorField Ric(G, {false, false});
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d) {
      Expr sum;
      for (int a = 0; a < n; ++a) sum = sum + R.at({a, b, a, d});
      Ric.at({b, d}) = sum;
    }
  out->ricci = Ric;

  Expr Sc;
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d) Sc = Sc + G->inverse_metric(b, d) * Ric.at({b, d});
  out->scalar = Sc;

  TensorField P(G, {false, false});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      P.at({a, b}) = (Ric.at({a, b}) - Sc * G->metric(a, b) / (2 * (n - 1))) / (n - 2);
  out->schouten = P;
  out->j_scalar = Sc / (2 * (n - 1));

  // C_ab^c_d = R_ab^c_d - (delta^c_a P_bd - delta^c_b P_ad) - (g_db P_a^c - g_da P_b^c)
  TensorField Pup = raise_slot(P, 1);  // P_a^c (weight tag irrelevant here)
  TensorField C(G, {false, false, true, false});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          Expr v = R.at({a, b, c, d});
          if (c == a) v = v - P.at({b, d});
          if (c == b) v = v + P.at({a, d});
          v = v - G->metric(d, b) * Pup.at({a, c}) + G->metric(d, a) * Pup.at({b, c});
          C.at({a, b, c, d}) = v;
        }
  out->weyl = C;

  // A_abc = nabla_b P_ca - nabla_c P_ba
  TensorField DP = covariant_derivative(P);  // (nabla_r P)_{r s t}
  TensorField A(G, {false, false, false});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) A.at({a, b, c}) = DP.at({b, c, a}) - DP.at({c, b, a});
  out->cotton = A;

  out->det = G->det();
  out->sqrt_abs_det = G->sqrt_abs_det();
  return out;
}

inline const CurvaturePack& pack(const GeometryPtr& G) {
  auto p = G->cached<CurvaturePack>("curvature", [&] { return compute_pack(G); });
  return *p;
}

}  // namespace detail

// ghat = e^{2 Upsilon} g over the same chart
inline GeometryPtr conformal_rescale(const GeometryPtr& G, const Expr& upsilon) {
  int n = G->dim();
  Expr factor = Expr::exp(2 * upsilon);
  std::vector<Expr> gh(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gh[i * n + j] = factor * G->metric(i, j);
  return Geometry::create(G->coords(), G->functions(), std::move(gh), G->signature());
}

// ghat = factor * g (factor positive on the chart); equivalent to
// Upsilon = log(factor)/2 and exact under the exp/log rewrite
inline GeometryPtr conformal_rescale_by_factor(const GeometryPtr& G, const Expr& factor) {
  return conformal_rescale(G, Expr::log(factor) / 2);
}

struct ResidualReport {
  struct Item {
    std::string name;
    bool ok;
    std::string detail;
  };
  std::vector<Item> items;
  bool all_ok() const {
    for (auto& i : items)
      if (!i.ok) return false;
    return true;
  }
};

// reinterpret components over a conformally related geometry for comparisons
inline TensorField rhs_same_geom(const TensorField& t, const GeometryPtr& Gh) {
  TensorField r(Gh, t.variance(), t.weight());
  r.components() = t.components();
  return r;
}

// residuals of the conformal transformation laws for ghat = e^{2 Upsilon} g.
// J and the mixed-variance Weyl derivative carry conformal weight 2/n, so the
// hatted components pick up an e^{2 Upsilon} factor in the comparison.
inline ResidualReport transform_residuals(const GeometryPtr& G, const Expr& upsilon) {
  ResidualReport rep;
  int n = G->dim();
  GeometryPtr Gh = conformal_rescale(G, upsilon);
  const auto& pk = curvature(G);
  const auto& pkh = curvature(Gh);
  Expr e2u = Expr::exp(2 * upsilon);

  TensorField Ua = coordinate_gradient(G, upsilon);
  TensorField DU = covariant_derivative(Ua);  // nabla_a Upsilon_b
  TensorField Uup = raise_slot(Ua, 0);
  Expr U2;
  for (int i = 0; i < n; ++i) U2 = U2 + Uup.at({i}) * Ua.at({i});
  Expr divU;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) divU = divU + G->inverse_metric(a, b) * DU.at({a, b});

  auto push = [&](const std::string& name, bool ok, std::string detail = "") {
    rep.items.push_back({name, ok, std::move(detail)});
  };

  {
    // Phat_ab = P_ab - nabla_a U_b + U_a U_b - (1/2) U^r U_r g_ab
    bool ok = true;
    for (int a = 0; a < n && ok; ++a)
      for (int b = 0; b < n && ok; ++b) {
        Expr rhs = pk.schouten.at({a, b}) - DU.at({a, b}) + Ua.at({a}) * Ua.at({b}) -
                   U2 * G->metric(a, b) / 2;
        ok = (pkh.schouten.at({a, b}) - rhs).is_zero();
      }
    push("schouten_transform", ok);
  }
  {
    // e^{2U} Jhat = J - div U - (n-2)/2 U^2
    Expr rhs = pk.j_scalar - divU - Expr(Rational(n - 2, 2)) * U2;
    push("j_transform", (e2u * pkh.j_scalar - rhs).is_zero());
  }
  {
    // Ahat_abc = A_abc + U_r C_bc^r_a
    bool ok = true;
    for (int a = 0; a < n && ok; ++a)
      for (int b = 0; b < n && ok; ++b)
        for (int c = 0; c < n && ok; ++c) {
          Expr corr;
          for (int r = 0; r < n; ++r) corr = corr + Ua.at({r}) * pk.weyl.at({b, c, r, a});
          ok = (pkh.cotton.at({a, b, c}) - pk.cotton.at({a, b, c}) - corr).is_zero();
        }
    push("cotton_transform", ok);
  }
  {
    // Chat_ab^c_d = C_ab^c_d
    push("weyl_invariance", (pkh.weyl - rhs_same_geom(pk.weyl, Gh)).is_zero());
  }
  {
    // nabla-hat_(a Phat_bc)0 = [nabla_(a P_bc) - nabla_(a nabla_b U_c)
    //   + 6 U_(a nabla_b U_c) - 4 U_(a U_b U_c) - 4 U_(a P_bc)]0
    TensorField DPh = covariant_derivative(pkh.schouten);
    TensorField lhs = tracefree_project(symmetrize_all(DPh), {0, 1, 2});
    TensorField DP = covariant_derivative(pk.schouten);
    TensorField DDU = covariant_derivative(DU);
    TensorField rhs_raw(G, {false, false, false});
    rhs_raw.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
      int a = idx[0], b = idx[1], c = idx[2];
      rhs_raw.components()[k] = DP.at({a, b, c}) - DDU.at({a, b, c}) +
                                6 * Ua.at({a}) * DU.at({b, c}) -
                                4 * Ua.at({a}) * Ua.at({b}) * Ua.at({c}) -
                                4 * Ua.at({a}) * pk.schouten.at({b, c});
    });
    TensorField rhs = tracefree_project(symmetrize_all(rhs_raw), {0, 1, 2});
    push("schouten_derivative_transform", (lhs - rhs_same_geom(rhs, Gh)).is_zero());
  }
  {
    // e^{2U} nabla-hat_a Jhat = nabla_a J - nabla_a div U - (n-2) U^r nabla_r U_a
    //   + 2 U_a div U - 2 U_a J + (n-2) U_a U^r U_r
    bool ok = true;
    for (int a = 0; a < n && ok; ++a) {
      Expr lhs = e2u * Gh->diff(pkh.j_scalar, a);
      Expr t3;
      for (int r = 0; r < n; ++r) t3 = t3 + Uup.at({r}) * DU.at({r, a});
      Expr rhs = G->diff(pk.j_scalar, a) - G->diff(divU, a) - Expr(Rational(n - 2)) * t3 +
                 2 * Ua.at({a}) * divU - 2 * Ua.at({a}) * pk.j_scalar +
                 Expr(Rational(n - 2)) * Ua.at({a}) * U2;
      ok = (lhs - rhs).is_zero();
    }
    push("j_derivative_transform", ok);
  }
  {
    // e^{2U} nabla-hat_(a C_b^d_c)0^e = [nabla_(a C_b^d_c)^e - 4 U_(a C_b^d_c)^e
    //   + 2 U_r delta_(a^(d C_b^e)_c)^r]0 ; C-form C_b^d_c^e raised on slots 2,4
    auto cform = [&](const GeometryPtr& geo, const TensorField& C) {
      // C_b^d_c^e: all-down Weyl (lower stored slot 3) with slots 2 and 4 raised
      TensorField alldown = lower_slot(C, 2);
      TensorField up24(geo, {false, true, false, true});
      int nn = geo->dim();
      up24.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
        Expr sum;
        for (int p = 0; p < nn; ++p)
          for (int q = 0; q < nn; ++q)
            sum = sum + geo->inverse_metric(idx[1], p) * geo->inverse_metric(idx[3], q) *
                            alldown.at({idx[0], p, idx[2], q});
        up24.components()[k] = sum;
      });
      return up24;
    };
    TensorField Cfg = cform(G, pk.weyl);
    TensorField Cfh = cform(Gh, pkh.weyl);
    TensorField DCh = covariant_derivative(Cfh);  // slots (r, b, ^d, c, ^e)
    TensorField DCg = covariant_derivative(Cfg);
    // symmetrize+project over the three lower slots (0,1,3) with spectators (2,4)
    auto sympi = [&](TensorField T, const GeometryPtr& geo) {
      T = symmetrize(T, {0, 1, 3});
      (void)geo;
      return tracefree_project(T, {0, 1, 3});
    };
    TensorField extra(G, {false, false, true, false, true});
    int nn = n;
    extra.for_each_index([&](const std::vector<int>& idx, std::size_t k) {
      int a = idx[0], b = idx[1], d = idx[2], c = idx[3], e = idx[4];
      Expr sum = -4 * Ua.at({a}) * Cfg.at({b, d, c, e});
      for (int r = 0; r < nn; ++r) {
        Expr ur = Uup.at({r});
        if (a == d) sum = sum + ur * Cfg.at({b, e, c, r});
        if (a == e) sum = sum + ur * Cfg.at({b, d, c, r});
      }
      extra.components()[k] = sum;
    });
    TensorField lhs = sympi(e2u * DCh, Gh);
    TensorField rhs = sympi(DCg + extra, G);
    push("weyl_derivative_transform", (lhs - rhs_same_geom(rhs, Gh)).is_zero());
  }
  return rep;
}

}  // namespace confsym
