#pragma once

// Exact symbolic scalars: rational functions of coordinates, abstract-function
// derivatives and guarded exp/log/sqrt atoms, kept in a canonical
// numerator / factored-denominator normal form with a decidable zero test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "confsym/error.hpp"

namespace confsym {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;
using GenId = std::uint32_t;

inline std::string rational_to_string(const Rational& r) {
  std::ostringstream os;
  os << numerator(r);
  if (denominator(r) != 1) os << "/" << denominator(r);
  return os.str();
}

inline double rational_to_double(const Rational& r) { return r.convert_to<double>(); }

enum class GenKind : std::uint8_t { Coordinate, Function, Atom };
enum class AtomKind : std::uint8_t { Exp, Log, Sqrt };

inline const char* atom_name(AtomKind k) {
  switch (k) {
    case AtomKind::Exp: return "exp";
    case AtomKind::Log: return "log";
    case AtomKind::Sqrt: return "sqrt";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Monomials and sparse polynomials over the generator set.

struct Monomial {
  // (generator, exponent) pairs, sorted by generator id, exponents > 0.
  std::vector<std::pair<GenId, std::uint32_t>> v;

  std::uint64_t total_degree() const {
    std::uint64_t d = 0;
    for (auto& [g, e] : v) d += e;
    return d;
  }
  bool empty() const { return v.empty(); }

  friend bool operator==(const Monomial& a, const Monomial& b) { return a.v == b.v; }

  // graded-lex order: total degree first, then earlier generators dominate.
  static int cmp(const Monomial& a, const Monomial& b) {
    auto da = a.total_degree(), db = b.total_degree();
    if (da != db) return da < db ? -1 : 1;
    size_t i = 0, j = 0;
    while (i < a.v.size() && j < b.v.size()) {
      if (a.v[i].first != b.v[j].first)
        return a.v[i].first < b.v[j].first ? 1 : -1;  // extra power of an earlier gen => larger
      if (a.v[i].second != b.v[j].second) return a.v[i].second > b.v[j].second ? 1 : -1;
      ++i, ++j;
    }
    if (i < a.v.size()) return 1;
    if (j < b.v.size()) return -1;
    return 0;
  }
  friend bool operator<(const Monomial& a, const Monomial& b) { return cmp(a, b) < 0; }

  std::size_t hash() const {
    std::size_t h = 1469598103934665603ull;
    for (auto& [g, e] : v) {
      h = (h ^ g) * 1099511628211ull;
      h = (h ^ e) * 1099511628211ull;
    }
    return h;
  }

  Monomial operator*(const Monomial& o) const {
    Monomial r;
    r.v.reserve(v.size() + o.v.size());
    size_t i = 0, j = 0;
    while (i < v.size() || j < o.v.size()) {
      if (j == o.v.size() || (i < v.size() && v[i].first < o.v[j].first)) r.v.push_back(v[i++]);
      else if (i == v.size() || o.v[j].first < v[i].first) r.v.push_back(o.v[j++]);
      else {
        r.v.emplace_back(v[i].first, v[i].second + o.v[j].second);
        ++i, ++j;
      }
    }
    return r;
  }

  // exact division a / b, failing when some exponent would go negative
  std::optional<Monomial> divide(const Monomial& o) const {
    Monomial r;
    size_t i = 0, j = 0;
    while (i < v.size() || j < o.v.size()) {
      if (j == o.v.size()) { r.v.push_back(v[i++]); continue; }
      if (i == v.size()) return std::nullopt;
      if (v[i].first < o.v[j].first) { r.v.push_back(v[i++]); continue; }
      if (v[i].first > o.v[j].first) return std::nullopt;
      if (v[i].second < o.v[j].second) return std::nullopt;
      if (v[i].second > o.v[j].second) r.v.emplace_back(v[i].first, v[i].second - o.v[j].second);
      ++i, ++j;
    }
    return r;
  }

  std::uint32_t exponent_of(GenId g) const {
    for (auto& [gg, e] : v)
      if (gg == g) return e;
    return 0;
  }
};

struct Poly {
  // terms sorted by monomial order, descending; no zero coefficients
  std::vector<std::pair<Monomial, Rational>> t;

  bool is_zero() const { return t.empty(); }
  bool is_constant() const { return t.empty() || (t.size() == 1 && t[0].first.empty()); }
  Rational constant_value() const { return t.empty() ? Rational(0) : t[0].second; }

  static Poly zero() { return {}; }
  static Poly constant(const Rational& c) {
    Poly p;
    if (c != 0) p.t.emplace_back(Monomial{}, c);
    return p;
  }
  static Poly generator(GenId g) {
    Poly p;
    Monomial m;
    m.v.emplace_back(g, 1);
    p.t.emplace_back(std::move(m), Rational(1));
    return p;
  }

  friend bool operator==(const Poly& a, const Poly& b) { return a.t == b.t; }

  std::size_t hash() const {
    std::size_t h = 14695981039346656037ull;
    for (auto& [m, c] : t) {
      h ^= m.hash() + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      h ^= std::hash<std::string>{}(rational_to_string(c));
    }
    return h;
  }

  friend Poly operator+(const Poly& a, const Poly& b) {
    Poly r;
    r.t.reserve(a.t.size() + b.t.size());
    size_t i = 0, j = 0;
    while (i < a.t.size() || j < b.t.size()) {
      if (j == b.t.size()) { r.t.push_back(a.t[i++]); continue; }
      if (i == a.t.size()) { r.t.push_back(b.t[j++]); continue; }
      int c = Monomial::cmp(a.t[i].first, b.t[j].first);
      if (c > 0) r.t.push_back(a.t[i++]);
      else if (c < 0) r.t.push_back(b.t[j++]);
      else {
        Rational s = a.t[i].second + b.t[j].second;
        if (s != 0) r.t.emplace_back(a.t[i].first, std::move(s));
        ++i, ++j;
      }
    }
    return r;
  }

  Poly neg() const {
    Poly r = *this;
    for (auto& [m, c] : r.t) c = -c;
    return r;
  }
  friend Poly operator-(const Poly& a, const Poly& b) { return a + b.neg(); }

  Poly scaled(const Rational& s) const {
    if (s == 0) return {};
    Poly r = *this;
    for (auto& [m, c] : r.t) c *= s;
    return r;
  }

  friend Poly operator*(const Poly& a, const Poly& b) {
    if (a.is_zero() || b.is_zero()) return {};
    if (a.is_constant()) return b.scaled(a.constant_value());
    if (b.is_constant()) return a.scaled(b.constant_value());
    struct H {
      std::size_t operator()(const Monomial& m) const { return m.hash(); }
    };
    std::unordered_map<Monomial, Rational, H> acc;
    acc.reserve(a.t.size() * b.t.size());
    for (auto& [ma, ca] : a.t)
      for (auto& [mb, cb] : b.t) acc[ma * mb] += ca * cb;
    Poly r;
    r.t.reserve(acc.size());
    for (auto& [m, c] : acc)
      if (c != 0) r.t.emplace_back(m, c);
    std::sort(r.t.begin(), r.t.end(),
              [](const auto& x, const auto& y) { return Monomial::cmp(x.first, y.first) > 0; });
    return r;
  }

  Poly pow(std::uint32_t k) const {
    Poly r = Poly::constant(1);
    Poly base = *this;
    while (k) {
      if (k & 1) r = r * base;
      base = (k >>= 1) ? base * base : base;
    }
    return r;
  }

  // exact multivariate division; nullopt when not divisible
  std::optional<Poly> divide_exact(const Poly& d) const {
    if (d.is_zero()) return std::nullopt;
    if (d.is_constant()) return scaled(Rational(1) / d.constant_value());
    Poly rem = *this, q;
    const auto& dl = d.t.front();
    while (!rem.is_zero()) {
      auto m = rem.t.front().first.divide(dl.first);
      if (!m) return std::nullopt;
      Rational c = rem.t.front().second / dl.second;
      Poly term;
      term.t.emplace_back(*m, c);
      q = q + term;
      rem = rem - term * d;
    }
    return q;
  }

  std::vector<GenId> generators() const {
    std::vector<GenId> out;
    for (auto& [m, c] : t)
      for (auto& [g, e] : m.v) out.push_back(g);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  // polynomial partial derivative with respect to one generator
  Poly partial(GenId g) const {
    Poly r;
    for (auto& [m, c] : t) {
      auto e = m.exponent_of(g);
      if (!e) continue;
      Monomial m2;
      for (auto& [gg, ee] : m.v) {
        if (gg == g) {
          if (ee > 1) m2.v.emplace_back(gg, ee - 1);
        } else m2.v.emplace_back(gg, ee);
      }
      Poly term;
      term.t.emplace_back(std::move(m2), c * e);
      r = r + term;
    }
    return r;
  }
};

// ---------------------------------------------------------------------------
// Generator registry (process-wide, thread-safe, deterministic per run).

class Expr;

struct GenData {
  GenKind kind;
  std::string name;                 // coordinate or function name
  std::vector<std::string> args;    // function argument coordinate names
  std::vector<std::uint32_t> deriv; // multi-index aligned with args
  AtomKind atom = AtomKind::Exp;
  std::shared_ptr<const void> atom_arg;  // ExprRep of the atom argument
};

namespace detail {

struct ExprRep {
  Poly num;
  std::vector<std::pair<Poly, std::uint32_t>> den;  // monic factors, sorted, merged
  std::size_t h = 0;

  void rehash() {
    h = num.hash();
    for (auto& [p, e] : den) {
      h ^= p.hash() * 31 + e;
      h = h * 1099511628211ull + 0x9e37;
    }
  }
  friend bool operator==(const ExprRep& a, const ExprRep& b) {
    return a.h == b.h && a.num == b.num && a.den == b.den;
  }
};

class GenTable {
 public:
  static GenTable& instance() {
    static GenTable t;
    return t;
  }

  GenId coordinate(const std::string& name) {
    std::unique_lock lk(mu_);
    auto it = coord_.find(name);
    if (it != coord_.end()) return it->second;
    GenId id = add_locked({GenKind::Coordinate, name, {}, {}, AtomKind::Exp, nullptr});
    coord_.emplace(name, id);
    return id;
  }

  GenId function(const std::string& name, const std::vector<std::string>& args,
                 const std::vector<std::uint32_t>& deriv) {
    std::string key = name;
    for (auto d : deriv) key += "," + std::to_string(d);
    std::unique_lock lk(mu_);
    auto it = func_.find(key);
    if (it != func_.end()) return it->second;
    GenId id = add_locked({GenKind::Function, name, args, deriv, AtomKind::Exp, nullptr});
    func_.emplace(std::move(key), id);
    return id;
  }

  GenId atom(AtomKind k, std::shared_ptr<const ExprRep> arg) {
    std::unique_lock lk(mu_);
    auto range = atom_.equal_range(arg->h * 4 + static_cast<std::size_t>(k));
    for (auto it = range.first; it != range.second; ++it) {
      const auto& gd = gens_[it->second];
      if (gd.atom == k && *std::static_pointer_cast<const ExprRep>(gd.atom_arg) == *arg)
        return it->second;
    }
    GenId id = add_locked({GenKind::Atom, atom_name(k), {}, {}, k, arg});
    atom_.emplace(arg->h * 4 + static_cast<std::size_t>(k), id);
    return id;
  }

  const GenData& info(GenId id) const {
    std::shared_lock lk(mu_);
    return gens_[id];
  }

  std::optional<GenId> find_coordinate(const std::string& name) const {
    std::shared_lock lk(mu_);
    auto it = coord_.find(name);
    if (it == coord_.end()) return std::nullopt;
    return it->second;
  }

 private:
  GenId add_locked(GenData gd) {
    gens_.push_back(std::move(gd));
    return static_cast<GenId>(gens_.size() - 1);
  }

  mutable std::shared_mutex mu_;
  std::deque<GenData> gens_;
  std::map<std::string, GenId> coord_;
  std::map<std::string, GenId> func_;
  std::unordered_multimap<std::size_t, GenId> atom_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Numeric evaluation context.

struct PolyRealization {
  // dense-ish polynomial in the function's own arguments
  struct Term {
    double coeff;
    std::vector<int> exps;
  };
  std::vector<Term> terms;

  double eval(const std::vector<std::uint32_t>& deriv, const std::vector<double>& args) const {
    double total = 0;
    for (const auto& tm : terms) {
      double c = tm.coeff;
      bool dead = false;
      for (size_t i = 0; i < tm.exps.size() && !dead; ++i) {
        int e = tm.exps[i];
        std::uint32_t d = i < deriv.size() ? deriv[i] : 0;
        if (static_cast<int>(d) > e) { dead = true; break; }
        for (std::uint32_t k = 0; k < d; ++k) c *= (e - static_cast<int>(k));
        int rem = e - static_cast<int>(d);
        for (int k = 0; k < rem; ++k) c *= args[i];
      }
      if (!dead) total += c;
    }
    return total;
  }
};

struct NumericContext {
  std::map<std::string, double> point;                  // coordinate values
  std::map<std::string, PolyRealization> realizations;  // abstract functions
};

// ---------------------------------------------------------------------------
// Expr: immutable, always in canonical normal form.

class Expr {
 public:
  Expr() : rep_(zero_rep()) {}
  Expr(long n) : Expr(Rational(n)) {}
  Expr(int n) : Expr(Rational(n)) {}
  explicit Expr(const Rational& q) { rep_ = make(Poly::constant(q), {}); }

  static Expr coordinate(const std::string& name) {
    return from_poly(Poly::generator(detail::GenTable::instance().coordinate(name)));
  }
  static Expr function(const std::string& name, const std::vector<std::string>& args) {
    return from_poly(Poly::generator(detail::GenTable::instance().function(
        name, args, std::vector<std::uint32_t>(args.size(), 0))));
  }
  static Expr rational(long num, long den) { return Expr(Rational(num, den)); }

  bool is_zero() const { return rep_->num.is_zero(); }
  bool is_rational() const { return rep_->num.is_constant() && rep_->den.empty(); }
  Rational rational_value() const {
    if (!is_rational()) throw Error(Errc::Internal, "expression is not a rational constant");
    return rep_->num.constant_value();
  }
  bool is_one() const { return is_rational() && rational_value() == 1; }

  std::size_t hash() const { return rep_->h; }
  friend bool operator==(const Expr& a, const Expr& b) {
    return a.rep_ == b.rep_ || *a.rep_ == *b.rep_;
  }

  // identical by construction: Expr values are already canonical
  Expr normalized() const { return *this; }

  friend Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    // common denominator by factor multiset union
    auto den = merge_dens(a.rep_->den, b.rep_->den);
    Poly na = a.rep_->num * den_quotient(den, a.rep_->den);
    Poly nb = b.rep_->num * den_quotient(den, b.rep_->den);
    return Expr(make(na + nb, std::move(den)));
  }
  friend Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }
  Expr operator-() const {
    if (is_zero()) return *this;
    return Expr(make(rep_->num.neg(), rep_->den));
  }

  friend Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_zero() || b.is_zero()) return Expr();
    auto den = merge_dens(a.rep_->den, b.rep_->den, /*add_exps=*/true);
    return Expr(make(a.rep_->num * b.rep_->num, std::move(den)));
  }

  Expr inverse() const {
    if (is_zero()) throw Error(Errc::GuardViolation, "division by zero expression");
    Poly num = Poly::constant(1);
    for (auto& [p, e] : rep_->den) num = num * p.pow(e);
    std::vector<std::pair<Poly, std::uint32_t>> den;
    if (!rep_->num.is_constant()) den.emplace_back(rep_->num, 1);
    else num = num.scaled(Rational(1) / rep_->num.constant_value());
    return Expr(make(std::move(num), std::move(den)));
  }
  friend Expr operator/(const Expr& a, const Expr& b) { return a * b.inverse(); }

  Expr pow(long k) const {
    if (k == 0) return Expr(1L);
    if (k < 0) return inverse().pow(-k);
    Poly num = rep_->num.pow(static_cast<std::uint32_t>(k));
    auto den = rep_->den;
    for (auto& [p, e] : den) e *= static_cast<std::uint32_t>(k);
    return Expr(make(std::move(num), std::move(den)));
  }

  Expr pow(const Rational& r) const;  // integer or half-integer exponents

  // --- differentiation ----------------------------------------------------

  Expr diff(const std::string& coord) const {
    auto cid = detail::GenTable::instance().find_coordinate(coord);
    if (!cid) throw Error(Errc::UndeclaredSymbol, "unknown coordinate " + coord);
    return diff_gen(*cid);
  }

  Expr diff_gen(GenId coord) const {
    Expr dnum = poly_derivative(rep_->num, coord);
    if (rep_->den.empty()) return dnum;
    // (N/D)' = N'/D - sum_i e_i N p_i' / (p_i D), denominators kept factored
    Expr invD(make(Poly::constant(1), rep_->den));
    Expr total = dnum * invD;
    for (auto& [p, e] : rep_->den) {
      Expr dp = poly_derivative(p, coord);
      if (dp.is_zero()) continue;
      DenVec dpi{{p, 1}};
      total = total - Expr(Rational(e)) * from_rep(rep_) * dp * Expr(make(Poly::constant(1), dpi));
    }
    return total;
  }

  // --- substitution ---------------------------------------------------------

  // bindings: base function name -> replacement (expression over the chart);
  // entries for derived symbols may be supplied and are checked for consistency.
  Expr substitute(const std::map<std::string, Expr>& bindings) const;

  // --- numeric evaluation ---------------------------------------------------

  double eval_numeric(const NumericContext& ctx) const {
    double n = eval_poly(rep_->num, ctx);
    double d = 1.0;
    for (auto& [p, e] : rep_->den) {
      double pv = eval_poly(p, ctx);
      for (std::uint32_t k = 0; k < e; ++k) d *= pv;
    }
    if (std::abs(d) < 1e-300) throw Error(Errc::NonFinite, "denominator vanishes at point");
    double v = n / d;
    if (!std::isfinite(v)) throw Error(Errc::NonFinite, "evaluation overflow");
    return v;
  }

  // --- printing ---------------------------------------------------------------

  std::string to_string() const {
    if (is_zero()) return "0";
    std::string num = poly_to_string(rep_->num);
    if (rep_->den.empty()) return num;
    std::string den;
    bool first = true;
    for (auto& [p, e] : rep_->den) {
      if (!first) den += "*";
      first = false;
      den += "(" + poly_to_string(p) + ")";
      if (e > 1) den += "^" + std::to_string(e);
    }
    return "(" + num + ")/(" + den + ")";
  }

  // Atoms.
  static Expr exp(const Expr& u);
  static Expr log(const Expr& u);
  static Expr sqrt(const Expr& u);

  const detail::ExprRep& rep() const { return *rep_; }
  static Expr from_rep(std::shared_ptr<const detail::ExprRep> r) { return Expr(std::move(r)); }

 private:
  explicit Expr(std::shared_ptr<const detail::ExprRep> r) : rep_(std::move(r)) {}

  static std::shared_ptr<const detail::ExprRep> zero_rep() {
    static const auto z = [] {
      auto r = std::make_shared<detail::ExprRep>();
      r->rehash();
      return r;
    }();
    return z;
  }

  static Expr from_poly(Poly p) { return Expr(make(std::move(p), {})); }

  Expr den_expr() const {
    Expr d(1L);
    for (auto& [p, e] : rep_->den) d = d * from_poly(p).pow(e);
    return d;
  }

  using DenVec = std::vector<std::pair<Poly, std::uint32_t>>;

  static DenVec merge_dens(const DenVec& a, const DenVec& b, bool add_exps = false) {
    DenVec out = a;
    for (auto& [p, e] : b) {
      bool found = false;
      for (auto& [q, f] : out)
        if (q == p) {
          f = add_exps ? f + e : std::max(f, e);
          found = true;
          break;
        }
      if (!found) out.emplace_back(p, e);
    }
    return out;
  }

  // product over factors of (full / partial) exponent gaps
  static Poly den_quotient(const DenVec& full, const DenVec& part) {
    Poly q = Poly::constant(1);
    for (auto& [p, e] : full) {
      std::uint32_t have = 0;
      for (auto& [pp, ee] : part)
        if (pp == p) { have = ee; break; }
      if (e > have) q = q * p.pow(e - have);
    }
    return q;
  }

  static bool poly_has_heavy_sqrt(const Poly& p) {
    auto& tab = detail::GenTable::instance();
    for (auto& [m, c] : p.t)
      for (auto& [g, e] : m.v)
        if (e >= 2 && tab.info(g).kind == GenKind::Atom && tab.info(g).atom == AtomKind::Sqrt)
          return true;
    return false;
  }

  static bool den_needs_sqrt_fix(const DenVec& den) {
    auto& tab = detail::GenTable::instance();
    for (auto& [p, e] : den) {
      if (poly_has_heavy_sqrt(p)) return true;
      if (e >= 2 && p.t.size() == 1 && p.t[0].first.v.size() == 1) {
        GenId g = p.t[0].first.v[0].first;
        if (tab.info(g).kind == GenKind::Atom && tab.info(g).atom == AtomKind::Sqrt) return true;
      }
    }
    return false;
  }

  // canonicalization: sqrt-power reduction, denominator cancellation,
  // constant-factor folding, monic denominators
  static std::shared_ptr<const detail::ExprRep> make(Poly num, DenVec den) {
    if (poly_has_heavy_sqrt(num) || den_needs_sqrt_fix(den))
      return reduce_sqrt(std::move(num), std::move(den));
    if (num.is_zero()) return zero_rep();

    DenVec keep;
    for (auto& [p, e] : den) {
      if (p.is_constant()) {
        Rational c = p.constant_value();
        if (c == 0) throw Error(Errc::GuardViolation, "zero denominator factor");
        Rational scale = 1;
        for (std::uint32_t k = 0; k < e; ++k) scale /= c;
        num = num.scaled(scale);
        continue;
      }
      keep.emplace_back(p, e);
    }
    // cancel factors dividing the numerator
    for (auto& [p, e] : keep) {
      while (e > 0) {
        auto q = num.divide_exact(p);
        if (!q) break;
        num = std::move(*q);
        --e;
      }
    }
    keep.erase(std::remove_if(keep.begin(), keep.end(), [](auto& f) { return f.second == 0; }),
               keep.end());
    if (num.is_zero()) return zero_rep();
    // monic denominator factors; compensation goes into the numerator
    for (auto& [p, e] : keep) {
      Rational lc = p.t.front().second;
      if (lc != 1) {
        p = p.scaled(Rational(1) / lc);
        Rational scale = 1;
        for (std::uint32_t k = 0; k < e; ++k) scale /= lc;
        num = num.scaled(scale);
      }
    }
    std::sort(keep.begin(), keep.end(), [](const auto& x, const auto& y) {
      if (x.first.t.size() != y.first.t.size()) return x.first.t.size() < y.first.t.size();
      if (!(x.first == y.first)) {
        // deterministic order on distinct polys: compare term lists
        const auto& xt = x.first.t;
        const auto& yt = y.first.t;
        for (size_t i = 0; i < std::min(xt.size(), yt.size()); ++i) {
          int c = Monomial::cmp(xt[i].first, yt[i].first);
          if (c) return c > 0;
          if (xt[i].second != yt[i].second) return xt[i].second < yt[i].second;
        }
      }
      return false;
    });
    // merge equal factors that may have appeared twice
    DenVec merged;
    for (auto& f : keep) {
      if (!merged.empty() && merged.back().first == f.first) merged.back().second += f.second;
      else merged.push_back(std::move(f));
    }
    auto r = std::make_shared<detail::ExprRep>();
    r->num = std::move(num);
    r->den = std::move(merged);
    r->rehash();
    return r;
  }

  // rewrite sqrt(u)^2 -> u term by term, then re-normalize
  static std::shared_ptr<const detail::ExprRep> reduce_sqrt(Poly num, DenVec den) {
    auto& tab = detail::GenTable::instance();
    auto reduce_poly = [&](const Poly& p) -> Expr {
      Expr acc;
      for (auto& [m, c] : p.t) {
        Monomial rest;
        Expr factor(1L);
        for (auto& [g, e] : m.v) {
          const auto& gd = tab.info(g);
          if (e >= 2 && gd.kind == GenKind::Atom && gd.atom == AtomKind::Sqrt) {
            auto arg = Expr::from_rep(std::static_pointer_cast<const detail::ExprRep>(gd.atom_arg));
            factor = factor * arg.pow(static_cast<long>(e / 2));
            if (e % 2) rest.v.emplace_back(g, 1);
          } else rest.v.emplace_back(g, e);
        }
        Poly pm;
        pm.t.emplace_back(std::move(rest), c);
        acc = acc + Expr(make_plain(std::move(pm))) * factor;
      }
      return acc;
    };
    Expr out = reduce_poly(num);
    for (auto& [p, e] : den) {
      if (e >= 2 && p.t.size() == 1 && p.t[0].first.v.size() == 1 &&
          tab.info(p.t[0].first.v[0].first).kind == GenKind::Atom &&
          tab.info(p.t[0].first.v[0].first).atom == AtomKind::Sqrt) {
        GenId g = p.t[0].first.v[0].first;
        auto arg = Expr::from_rep(
            std::static_pointer_cast<const detail::ExprRep>(tab.info(g).atom_arg));
        out = out / arg.pow(static_cast<long>(e / 2));
        if (e % 2) out = out / Expr(make_plain(Poly::generator(g)));
      } else if (poly_has_heavy_sqrt(p)) {
        out = out / reduce_poly(p).pow(static_cast<long>(e));
      } else {
        DenVec one{{p, e}};
        out = out * Expr(make(Poly::constant(1), std::move(one)));
      }
    }
    return out.rep_;
  }

  static std::shared_ptr<const detail::ExprRep> make_plain(Poly num) {
    if (num.is_zero()) return zero_rep();
    auto r = std::make_shared<detail::ExprRep>();
    r->num = std::move(num);
    r->rehash();
    return r;
  }

  static Expr poly_derivative(const Poly& p, GenId coord);
  static Expr gen_derivative(GenId g, GenId coord);
  static double eval_poly(const Poly& p, const NumericContext& ctx);
  static double eval_gen(GenId g, const NumericContext& ctx);
  static std::string poly_to_string(const Poly& p);
  static std::string gen_to_string(GenId g);

  std::shared_ptr<const detail::ExprRep> rep_;

  friend class ExprSubst;
};

inline Expr operator+(const Expr& a, long b) { return a + Expr(b); }
inline Expr operator+(long a, const Expr& b) { return Expr(a) + b; }
inline Expr operator-(const Expr& a, long b) { return a - Expr(b); }
inline Expr operator-(long a, const Expr& b) { return Expr(a) - b; }
inline Expr operator*(const Expr& a, long b) { return a * Expr(b); }
inline Expr operator*(long a, const Expr& b) { return Expr(a) * b; }
inline Expr operator/(const Expr& a, long b) { return a / Expr(b); }
inline Expr operator/(long a, const Expr& b) { return Expr(a) / b; }

inline bool is_zero(const Expr& e) { return e.is_zero(); }

// sum with a single normalization pass per denominator group
inline Expr expr_sum(const std::vector<Expr>& terms) {
  Expr acc;
  for (const auto& t : terms) acc = acc + t;
  return acc;
}

// --- atoms -------------------------------------------------------------------

inline Expr Expr::exp(const Expr& u) {
  if (u.is_zero()) return Expr(1L);
  // exp(q * log v) -> v^q for rational q with denominator 1 or 2
  const auto& r = u.rep();
  if (r.den.empty() && r.num.t.size() == 1 && r.num.t[0].first.v.size() == 1 &&
      r.num.t[0].first.v[0].second == 1) {
    GenId g = r.num.t[0].first.v[0].first;
    const auto& gd = detail::GenTable::instance().info(g);
    if (gd.kind == GenKind::Atom && gd.atom == AtomKind::Log) {
      Rational q = r.num.t[0].second;
      if (denominator(q) == 1 || denominator(q) == 2) {
        auto v = Expr::from_rep(std::static_pointer_cast<const detail::ExprRep>(gd.atom_arg));
        return v.pow(q);
      }
    }
  }
  return from_poly(Poly::generator(detail::GenTable::instance().atom(AtomKind::Exp, u.rep_)));
}

inline Expr Expr::log(const Expr& u) {
  if (u.is_zero()) throw Error(Errc::GuardViolation, "log of zero");
  if (u.is_one()) return Expr();
  return from_poly(Poly::generator(detail::GenTable::instance().atom(AtomKind::Log, u.rep_)));
}

inline Expr Expr::sqrt(const Expr& u) {
  if (u.is_zero()) return Expr();
  if (u.is_rational()) {
    Rational q = u.rational_value();
    if (q > 0) {
      BigInt ns = boost::multiprecision::sqrt(numerator(q));
      BigInt ds = boost::multiprecision::sqrt(denominator(q));
      if (ns * ns == numerator(q) && ds * ds == denominator(q)) return Expr(Rational(ns, ds));
    }
    if (q < 0) throw Error(Errc::GuardViolation, "sqrt of negative constant");
  }
  return from_poly(Poly::generator(detail::GenTable::instance().atom(AtomKind::Sqrt, u.rep_)));
}

inline Expr Expr::pow(const Rational& r) const {
  if (denominator(r) == 1) return pow(r.convert_to<long>());
  if (denominator(r) == 2) {
    BigInt p = numerator(r);
    if (p < 0) return inverse().pow(-r);
    long pi = p.convert_to<long>();
    return pow(pi / 2) * (pi % 2 ? Expr::sqrt(*this) : Expr(1L));
  }
  throw Error(Errc::GuardViolation, "unsupported rational exponent " + rational_to_string(r));
}

inline Expr Expr::gen_derivative(GenId g, GenId coord) {
  if (g == coord) return Expr(1L);
  auto& tab = detail::GenTable::instance();
  const auto& gd = tab.info(g);
  switch (gd.kind) {
    case GenKind::Coordinate:
      return Expr();
    case GenKind::Function: {
      const auto& cname = tab.info(coord).name;
      for (size_t i = 0; i < gd.args.size(); ++i) {
        if (gd.args[i] == cname) {
          auto d2 = gd.deriv;
          ++d2[i];
          return from_poly(Poly::generator(tab.function(gd.name, gd.args, d2)));
        }
      }
      return Expr();
    }
    case GenKind::Atom: {
      auto arg = Expr::from_rep(std::static_pointer_cast<const detail::ExprRep>(gd.atom_arg));
      Expr darg = arg.diff_gen(coord);
      if (darg.is_zero()) return Expr();
      Expr self = from_poly(Poly::generator(g));
      switch (gd.atom) {
        case AtomKind::Exp: return darg * self;
        case AtomKind::Log: return darg / arg;
        case AtomKind::Sqrt: return darg * self / (2 * arg);  // u' sqrt(u)/(2u)
      }
    }
  }
  return Expr();
}

inline Expr Expr::poly_derivative(const Poly& p, GenId coord) {
  Expr total;
  for (GenId g : p.generators()) {
    Expr dg = gen_derivative(g, coord);
    if (dg.is_zero()) continue;
    total = total + from_rep(make_plain(p.partial(g))) * dg;
  }
  return total;
}

inline double Expr::eval_gen(GenId g, const NumericContext& ctx) {
  auto& tab = detail::GenTable::instance();
  const auto& gd = tab.info(g);
  switch (gd.kind) {
    case GenKind::Coordinate: {
      auto it = ctx.point.find(gd.name);
      if (it == ctx.point.end())
        throw Error(Errc::MissingRealization, "no value for coordinate " + gd.name);
      return it->second;
    }
    case GenKind::Function: {
      auto it = ctx.realizations.find(gd.name);
      if (it == ctx.realizations.end())
        throw Error(Errc::MissingRealization, "no realization for function " + gd.name);
      std::vector<double> args;
      for (const auto& a : gd.args) {
        auto pt = ctx.point.find(a);
        if (pt == ctx.point.end())
          throw Error(Errc::MissingRealization, "no value for coordinate " + a);
        args.push_back(pt->second);
      }
      return it->second.eval(gd.deriv, args);
    }
    case GenKind::Atom: {
      auto arg = Expr::from_rep(std::static_pointer_cast<const detail::ExprRep>(gd.atom_arg));
      double v = arg.eval_numeric(ctx);
      switch (gd.atom) {
        case AtomKind::Exp: return std::exp(v);
        case AtomKind::Log:
          if (v <= 0) throw Error(Errc::GuardViolation, "log of non-positive value");
          return std::log(v);
        case AtomKind::Sqrt:
          if (v < 0) throw Error(Errc::GuardViolation, "sqrt of negative value");
          return std::sqrt(v);
      }
    }
  }
  throw Error(Errc::Internal, "unreachable");
}

inline double Expr::eval_poly(const Poly& p, const NumericContext& ctx) {
  double total = 0;
  for (auto& [m, c] : p.t) {
    double v = rational_to_double(c);
    for (auto& [g, e] : m.v) {
      double gv = eval_gen(g, ctx);
      for (std::uint32_t k = 0; k < e; ++k) v *= gv;
    }
    total += v;
  }
  return total;
}

inline std::string Expr::gen_to_string(GenId g) {
  auto& tab = detail::GenTable::instance();
  const auto& gd = tab.info(g);
  switch (gd.kind) {
    case GenKind::Coordinate: return gd.name;
    case GenKind::Function: {
      bool plain = true;
      for (auto d : gd.deriv) plain = plain && d == 0;
      std::string args;
      for (size_t i = 0; i < gd.args.size(); ++i) args += (i ? "," : "") + gd.args[i];
      if (plain) return gd.name + "(" + args + ")";
      std::string mi;
      for (size_t i = 0; i < gd.deriv.size(); ++i) mi += (i ? "," : "") + std::to_string(gd.deriv[i]);
      return "D[" + gd.name + ",(" + mi + ")](" + args + ")";
    }
    case GenKind::Atom: {
      auto arg = Expr::from_rep(std::static_pointer_cast<const detail::ExprRep>(gd.atom_arg));
      return std::string(atom_name(gd.atom)) + "(" + arg.to_string() + ")";
    }
  }
  return "?";
}

inline std::string Expr::poly_to_string(const Poly& p) {
  if (p.is_zero()) return "0";
  std::string out;
  bool first = true;
  for (auto& [m, c] : p.t) {
    Rational cc = c;
    if (first) {
      if (cc < 0) { out += "-"; cc = -cc; }
    } else {
      out += cc < 0 ? " - " : " + ";
      if (cc < 0) cc = -cc;
    }
    first = false;
    std::string term;
    bool coeff_one = (cc == 1) && !m.empty();
    if (!coeff_one) term += rational_to_string(cc);
    for (auto& [g, e] : m.v) {
      if (!term.empty()) term += "*";
      std::string gs = gen_to_string(g);
      term += gs;
      if (e > 1) term += "^" + std::to_string(e);
    }
    out += term;
  }
  return out;
}

// --- substitution ------------------------------------------------------------

class ExprSubst {
 public:
  explicit ExprSubst(const std::map<std::string, Expr>& bindings) : bindings_(bindings) {}

  Expr apply(const Expr& e) {
    Expr num = apply_poly(e.rep().num);
    Expr den(1L);
    for (auto& [p, k] : e.rep().den) den = den * apply_poly(p).pow(static_cast<long>(k));
    return num / den;
  }

 private:
  Expr apply_poly(const Poly& p) {
    Expr total;
    for (auto& [m, c] : p.t) {
      Expr term{c};
      for (auto& [g, e] : m.v) term = term * gen_replacement(g).pow(static_cast<long>(e));
      total = total + term;
    }
    return total;
  }

  Expr gen_replacement(GenId g) {
    auto it = cache_.find(g);
    if (it != cache_.end()) return it->second;
    auto& tab = detail::GenTable::instance();
    const auto& gd = tab.info(g);
    Expr out;
    switch (gd.kind) {
      case GenKind::Coordinate: out = Expr::coordinate(gd.name); break;
      case GenKind::Function: {
        auto b = bindings_.find(gd.name);
        if (b == bindings_.end()) {
          out = Expr::from_rep(Expr::make_plain(Poly::generator(g)));
        } else {
          Expr v = b->second;
          for (size_t i = 0; i < gd.deriv.size(); ++i)
            for (std::uint32_t k = 0; k < gd.deriv[i]; ++k) v = v.diff(gd.args[i]);
          out = v;
        }
        break;
      }
      case GenKind::Atom: {
        auto arg = Expr::from_rep(std::static_pointer_cast<const detail::ExprRep>(gd.atom_arg));
        Expr sub = apply(arg);
        switch (gd.atom) {
          case AtomKind::Exp: out = Expr::exp(sub); break;
          case AtomKind::Log: out = Expr::log(sub); break;
          case AtomKind::Sqrt: out = Expr::sqrt(sub); break;
        }
        break;
      }
    }
    cache_.emplace(g, out);
    return out;
  }

  const std::map<std::string, Expr>& bindings_;
  std::map<GenId, Expr> cache_;
};

inline Expr Expr::substitute(const std::map<std::string, Expr>& bindings) const {
  ExprSubst s(bindings);
  return s.apply(*this);
}

// Derived-symbol bindings, e.g. {"u",(1)} -> expr, must agree with the base
// binding differentiated; the simultaneous substitution itself only ever needs
// the base bindings because the closure is generated internally.
struct DerivedBinding {
  std::string name;
  std::vector<std::string> args;
  std::vector<std::uint32_t> deriv;
  Expr value;
};

inline Expr substitute_checked(const Expr& e, const std::map<std::string, Expr>& base,
                               const std::vector<DerivedBinding>& derived) {
  for (const auto& d : derived) {
    auto it = base.find(d.name);
    if (it == base.end())
      throw Error(Errc::InconsistentBinding,
                  "derived symbol of " + d.name + " bound without a base binding");
    Expr v = it->second;
    for (size_t i = 0; i < d.deriv.size(); ++i)
      for (std::uint32_t k = 0; k < d.deriv[i]; ++k) v = v.diff(d.args[i]);
    if (!(v - d.value).is_zero())
      throw Error(Errc::InconsistentBinding,
                  "binding for a derivative of " + d.name + " conflicts with its base");
  }
  return e.substitute(base);
}

}  // namespace confsym
