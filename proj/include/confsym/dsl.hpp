#pragma once

// Geometry-definition language: line-oriented block sections
// (manifold / functions / metric / symbol / scalar), '#' comments,
// 1-based coordinate-name indices.

#include <cctype>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "confsym/symbols.hpp"

namespace confsym {

struct SymbolDecl {
  std::string name;
  int degree = 0;
  std::vector<Expr> comps;  // dense n^degree, symmetric
};

struct GeometrySpec {
  int n = 0;
  std::vector<std::string> coords;
  std::vector<FunctionDecl> functions;
  std::string signature;
  std::string metric_name;
  std::vector<Expr> metric;  // lower components, n*n
  std::map<std::string, SymbolDecl> symbols;
  std::map<std::string, Expr> scalars;

  GeometryPtr geometry() const {
    return Geometry::create(coords, functions, metric, signature);
  }
  PolySymbol symbol(const std::string& name) const {
    auto it = symbols.find(name);
    if (it == symbols.end()) throw Error(Errc::UnknownSymbol, "no symbol named " + name);
    const auto& d = it->second;
    TensorField t(geometry(), std::vector<bool>(d.degree, true));
    t.components() = d.comps;
    return PolySymbol(std::move(t));
  }
};

namespace dsl {

struct Token {
  enum Kind { Ident, Int, Punct, End } kind = End;
  std::string text;
  long value = 0;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : s_(src) { advance(); }

  const Token& peek() const { return tok_; }
  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(Errc::Syntax, msg + " at line " + std::to_string(tok_.line) + ", column " +
                                  std::to_string(tok_.col));
  }

 private:
  void advance() {
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
        continue;
      }
      if (c == '\n') {
        ++line_;
        colbase_ = ++pos_;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
        continue;
      }
      break;
    }
    tok_ = {};
    tok_.line = line_;
    tok_.col = static_cast<int>(pos_ - colbase_) + 1;
    if (pos_ >= s_.size()) {
      tok_.kind = Token::End;
      return;
    }
    char c = s_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t b = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      tok_.kind = Token::Ident;
      tok_.text = s_.substr(b, pos_ - b);
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t b = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      tok_.kind = Token::Int;
      tok_.text = s_.substr(b, pos_ - b);
      tok_.value = std::stol(tok_.text);
      return;
    }
    static const std::string punct = "+-*/^()[]{},;=\"";
    if (punct.find(c) != std::string::npos) {
      tok_.kind = Token::Punct;
      tok_.text = std::string(1, c);
      ++pos_;
      return;
    }
    throw Error(Errc::Syntax, std::string("unexpected character '") + c + "' at line " +
                                  std::to_string(line_));
  }

  const std::string& s_;
  size_t pos_ = 0, colbase_ = 0;
  int line_ = 1;
  Token tok_;
};

// environment the expression parser resolves identifiers against
struct Env {
  const std::vector<std::string>* coords = nullptr;
  const std::vector<FunctionDecl>* functions = nullptr;

  std::optional<int> coordinate(const std::string& name) const {
    for (size_t i = 0; coords && i < coords->size(); ++i)
      if ((*coords)[i] == name) return static_cast<int>(i);
    return std::nullopt;
  }
  const FunctionDecl* function(const std::string& name) const {
    if (!functions) return nullptr;
    for (const auto& f : *functions)
      if (f.name == name) return &f;
    return nullptr;
  }
};

class ExprParser {
 public:
  ExprParser(Lexer& lx, const Env& env) : lx_(lx), env_(env) {}

  Expr parse() { return parse_sum(); }

 private:
  Expr parse_sum() {
    Expr v = parse_product();
    while (lx_.peek().kind == Token::Punct && (lx_.peek().text == "+" || lx_.peek().text == "-")) {
      std::string op = lx_.next().text;
      Expr rhs = parse_product();
      v = (op == "+") ? v + rhs : v - rhs;
    }
    return v;
  }

  Expr parse_product() {
    Expr v = parse_unary();
    while (lx_.peek().kind == Token::Punct && (lx_.peek().text == "*" || lx_.peek().text == "/")) {
      std::string op = lx_.next().text;
      Expr rhs = parse_unary();
      v = (op == "*") ? v * rhs : v / rhs;
    }
    return v;
  }

  // unary minus binds looser than '^': -r^2 reads as -(r^2)
  Expr parse_unary() {
    if (lx_.peek().kind == Token::Punct && lx_.peek().text == "-") {
      lx_.next();
      return -parse_unary();
    }
    if (lx_.peek().kind == Token::Punct && lx_.peek().text == "+") {
      lx_.next();
      return parse_unary();
    }
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_primary();
    if (lx_.peek().kind == Token::Punct && lx_.peek().text == "^") {
      lx_.next();
      Expr e = parse_unary();
      if (!e.is_rational()) lx_.fail("exponent must be a rational constant");
      return base.pow(e.rational_value());
    }
    return base;
  }

  void expect(const std::string& p) {
    if (lx_.peek().kind != Token::Punct || lx_.peek().text != p)
      lx_.fail("expected '" + p + "'");
    lx_.next();
  }

  Expr parse_primary() {
    const Token& t = lx_.peek();
    if (t.kind == Token::Int) {
      long v = lx_.next().value;
      return Expr(v);
    }
    if (t.kind == Token::Punct && t.text == "(") {
      lx_.next();
      Expr v = parse_sum();
      expect(")");
      return v;
    }
    if (t.kind == Token::Ident) {
      Token id = lx_.next();
      const std::string& name = id.text;
      if (name == "exp" || name == "log" || name == "sqrt") {
        expect("(");
        Expr a = parse_sum();
        expect(")");
        if (name == "exp") return Expr::exp(a);
        if (name == "log") return Expr::log(a);
        return Expr::sqrt(a);
      }
      if (name == "D") {
        // D[f,(k1,...)](args)
        expect("[");
        if (lx_.peek().kind != Token::Ident) lx_.fail("expected function name in D[...]");
        std::string fname = lx_.next().text;
        const FunctionDecl* fd = env_.function(fname);
        if (!fd)
          throw Error(Errc::UndeclaredSymbol, "undeclared function " + fname + " at line " +
                                                  std::to_string(id.line));
        expect(",");
        expect("(");
        std::vector<std::uint32_t> deriv;
        while (true) {
          if (lx_.peek().kind != Token::Int) lx_.fail("expected derivative order");
          deriv.push_back(static_cast<std::uint32_t>(lx_.next().value));
          if (lx_.peek().kind == Token::Punct && lx_.peek().text == ",") {
            lx_.next();
            continue;
          }
          break;
        }
        expect(")");
        expect("]");
        if (deriv.size() != fd->args.size()) lx_.fail("derivative multi-index arity mismatch");
        if (lx_.peek().kind == Token::Punct && lx_.peek().text == "(") {
          lx_.next();
          for (size_t i = 0; i < fd->args.size(); ++i) {
            if (lx_.peek().kind != Token::Ident || lx_.peek().text != fd->args[i])
              lx_.fail("argument list must match the declaration of " + fname);
            lx_.next();
            if (i + 1 < fd->args.size()) expect(",");
          }
          expect(")");
        }
        Expr base = Expr::function(fname, fd->args);
        for (size_t i = 0; i < deriv.size(); ++i)
          for (std::uint32_t k = 0; k < deriv[i]; ++k) base = base.diff(fd->args[i]);
        return base;
      }
      if (auto ci = env_.coordinate(name)) return Expr::coordinate(name);
      if (const FunctionDecl* fd = env_.function(name)) {
        if (lx_.peek().kind == Token::Punct && lx_.peek().text == "(") {
          lx_.next();
          for (size_t i = 0; i < fd->args.size(); ++i) {
            if (lx_.peek().kind != Token::Ident || lx_.peek().text != fd->args[i])
              lx_.fail("argument list must match the declaration of " + name);
            lx_.next();
            if (i + 1 < fd->args.size()) expect(",");
          }
          expect(")");
        }
        return Expr::function(name, fd->args);
      }
      throw Error(Errc::UndeclaredSymbol, "undeclared symbol " + name + " at line " +
                                              std::to_string(id.line) + ", column " +
                                              std::to_string(id.col));
    }
    lx_.fail("expected an expression");
    return Expr();
  }

  Lexer& lx_;
  const Env& env_;
};

}  // namespace dsl

inline Expr parse_expr(const std::string& text, const GeometrySpec& env) {
  dsl::Lexer lx(text);
  dsl::Env e{&env.coords, &env.functions};
  dsl::ExprParser p(lx, e);
  Expr out = p.parse();
  if (lx.peek().kind != dsl::Token::End) lx.fail("trailing input after expression");
  return out;
}

inline GeometrySpec parse_geometry(const std::string& text) {
  dsl::Lexer lx(text);
  GeometrySpec spec;
  bool have_manifold = false, have_metric = false;

  auto expect_punct = [&](const std::string& p) {
    if (lx.peek().kind != dsl::Token::Punct || lx.peek().text != p)
      lx.fail("expected '" + p + "'");
    lx.next();
  };
  auto expect_ident = [&]() {
    if (lx.peek().kind != dsl::Token::Ident) lx.fail("expected identifier");
    return lx.next().text;
  };
  auto expect_int = [&]() {
    if (lx.peek().kind != dsl::Token::Int) lx.fail("expected integer");
    return lx.next().value;
  };

  dsl::Env env{&spec.coords, &spec.functions};

  while (lx.peek().kind != dsl::Token::End) {
    std::string section = expect_ident();
    if (section == "manifold") {
      expect_punct("{");
      while (!(lx.peek().kind == dsl::Token::Punct && lx.peek().text == "}")) {
        std::string key = expect_ident();
        expect_punct("=");
        if (key == "dim") {
          spec.n = static_cast<int>(expect_int());
        } else if (key == "coords") {
          expect_punct("[");
          while (true) {
            spec.coords.push_back(expect_ident());
            if (lx.peek().kind == dsl::Token::Punct && lx.peek().text == ",") {
              lx.next();
              continue;
            }
            break;
          }
          expect_punct("]");
        } else if (key == "signature") {
          expect_punct("\"");
          std::string sig;
          while (lx.peek().kind == dsl::Token::Punct &&
                 (lx.peek().text == "+" || lx.peek().text == "-"))
            sig += lx.next().text;
          expect_punct("\"");
          spec.signature = sig;
        } else {
          lx.fail("unknown manifold attribute '" + key + "'");
        }
        expect_punct(";");
      }
      expect_punct("}");
      if (spec.n < 3) throw Error(Errc::DimensionTooSmall, "dimension must be at least 3");
      if (static_cast<int>(spec.coords.size()) != spec.n)
        throw Error(Errc::Syntax, "coords list does not match dim");
      have_manifold = true;
    } else if (section == "functions") {
      if (!have_manifold) lx.fail("functions block before manifold");
      expect_punct("{");
      while (!(lx.peek().kind == dsl::Token::Punct && lx.peek().text == "}")) {
        FunctionDecl fd;
        fd.name = expect_ident();
        if (lx.peek().kind == dsl::Token::Punct && lx.peek().text == "(") {
          lx.next();
          while (!(lx.peek().kind == dsl::Token::Punct && lx.peek().text == ")")) {
            std::string arg = expect_ident();
            dsl::Env tmp{&spec.coords, nullptr};
            if (!tmp.coordinate(arg))
              throw Error(Errc::UndeclaredSymbol, "function argument " + arg + " is not a coordinate");
            fd.args.push_back(arg);
            if (lx.peek().kind == dsl::Token::Punct && lx.peek().text == ",") lx.next();
          }
          expect_punct(")");
        }
        expect_punct(";");
        spec.functions.push_back(std::move(fd));
      }
      expect_punct("}");
    } else if (section == "metric") {
      if (!have_manifold) lx.fail("metric block before manifold");
      spec.metric_name = expect_ident();
      spec.metric.assign(static_cast<size_t>(spec.n) * spec.n, Expr());
      std::vector<bool> set(static_cast<size_t>(spec.n) * spec.n, false);
      expect_punct("{");
      while (!(lx.peek().kind == dsl::Token::Punct && lx.peek().text == "}")) {
        std::string nm = expect_ident();
        if (nm != spec.metric_name) lx.fail("metric entry name must be " + spec.metric_name);
        expect_punct("[");
        long i = expect_int();
        expect_punct(",");
        long j = expect_int();
        expect_punct("]");
        expect_punct("=");
        dsl::ExprParser p(lx, env);
        Expr v = p.parse();
        expect_punct(";");
        if (i < 1 || i > spec.n || j < 1 || j > spec.n) lx.fail("metric index out of range");
        size_t a = static_cast<size_t>(i - 1) * spec.n + (j - 1);
        size_t b = static_cast<size_t>(j - 1) * spec.n + (i - 1);
        if (set[a] && !(spec.metric[a] - v).is_zero())
          throw Error(Errc::AsymmetricMetric, "conflicting metric entries at (" +
                                                  std::to_string(i) + "," + std::to_string(j) + ")");
        spec.metric[a] = v;
        set[a] = true;
        if (a != b) {
          if (set[b] && !(spec.metric[b] - v).is_zero())
            throw Error(Errc::AsymmetricMetric, "conflicting metric entries at (" +
                                                    std::to_string(j) + "," + std::to_string(i) + ")");
          spec.metric[b] = v;
          set[b] = true;
        }
      }
      expect_punct("}");
      have_metric = true;
    } else if (section == "symbol") {
      if (!have_manifold) lx.fail("symbol block before manifold");
      SymbolDecl sd;
      sd.name = expect_ident();
      std::string kw = expect_ident();
      if (kw != "degree") lx.fail("expected 'degree'");
      sd.degree = static_cast<int>(expect_int());
      if (sd.degree < 0 || sd.degree > 3) lx.fail("symbol degree must be 0..3");
      size_t count = 1;
      for (int r = 0; r < sd.degree; ++r) count *= static_cast<size_t>(spec.n);
      sd.comps.assign(count, Expr());
      expect_punct("{");
      while (!(lx.peek().kind == dsl::Token::Punct && lx.peek().text == "}")) {
        std::string nm = expect_ident();
        if (nm != sd.name) lx.fail("symbol entry name must be " + sd.name);
        std::vector<long> idx;
        if (sd.degree > 0) {
          expect_punct("[");
          for (int r = 0; r < sd.degree; ++r) {
            idx.push_back(expect_int());
            if (r + 1 < sd.degree) expect_punct(",");
          }
          expect_punct("]");
        }
        expect_punct("=");
        dsl::ExprParser p(lx, env);
        Expr v = p.parse();
        expect_punct(";");
        std::vector<int> zero_based;
        for (long x : idx) {
          if (x < 1 || x > spec.n) lx.fail("symbol index out of range");
          zero_based.push_back(static_cast<int>(x - 1));
        }
        // assign all permutations (components are symmetric)
        std::sort(zero_based.begin(), zero_based.end());
        do {
          size_t flat = 0;
          for (int x : zero_based) flat = flat * spec.n + static_cast<size_t>(x);
          sd.comps[flat] = v;
        } while (std::next_permutation(zero_based.begin(), zero_based.end()));
      }
      expect_punct("}");
      spec.symbols[sd.name] = std::move(sd);
    } else if (section == "scalar") {
      if (!have_manifold) lx.fail("scalar block before manifold");
      std::string nm = expect_ident();
      expect_punct("=");
      dsl::ExprParser p(lx, env);
      Expr v = p.parse();
      expect_punct(";");
      spec.scalars[nm] = v;
    } else {
      lx.fail("unknown section '" + section + "'");
    }
  }
  if (!have_manifold) throw Error(Errc::Syntax, "missing manifold block");
  if (!have_metric) throw Error(Errc::Syntax, "missing metric block");
  // validation: delegate to Geometry::create (symmetry, degeneracy, dimension)
  spec.geometry();
  return spec;
}

inline std::string print_geometry(const GeometrySpec& spec) {
  std::ostringstream os;
  os << "manifold {\n  dim = " << spec.n << ";\n  coords = [";
  for (size_t i = 0; i < spec.coords.size(); ++i) os << (i ? ", " : "") << spec.coords[i];
  os << "];\n";
  if (!spec.signature.empty()) os << "  signature = \"" << spec.signature << "\";\n";
  os << "}\n";
  if (!spec.functions.empty()) {
    os << "functions {\n";
    for (const auto& f : spec.functions) {
      os << "  " << f.name << "(";
      for (size_t i = 0; i < f.args.size(); ++i) os << (i ? "," : "") << f.args[i];
      os << ");\n";
    }
    os << "}\n";
  }
  os << "metric " << spec.metric_name << " {\n";
  for (int i = 0; i < spec.n; ++i)
    for (int j = i; j < spec.n; ++j) {
      const Expr& v = spec.metric[static_cast<size_t>(i) * spec.n + j];
      if (!v.is_zero())
        os << "  " << spec.metric_name << "[" << i + 1 << "," << j + 1 << "] = " << v.to_string()
           << ";\n";
    }
  os << "}\n";
  for (const auto& [name, sd] : spec.symbols) {
    os << "symbol " << name << " degree " << sd.degree << " {\n";
    TensorField tmp;  // index iteration helper
    std::vector<int> idx(sd.degree, 0);
    size_t total = sd.comps.size();
    for (size_t k = 0; k < total; ++k) {
      size_t rem = k;
      for (int r = sd.degree - 1; r >= 0; --r) {
        idx[r] = static_cast<int>(rem % spec.n);
        rem /= spec.n;
      }
      if (!std::is_sorted(idx.begin(), idx.end())) continue;
      if (sd.comps[k].is_zero()) continue;
      os << "  " << name;
      if (sd.degree > 0) {
        os << "[";
        for (int r = 0; r < sd.degree; ++r) os << (r ? "," : "") << idx[r] + 1;
        os << "]";
      }
      os << " = " << sd.comps[k].to_string() << ";\n";
    }
    os << "}\n";
  }
  for (const auto& [name, e] : spec.scalars)
    os << "scalar " << name << " = " << e.to_string() << ";\n";
  return os.str();
}

}  // namespace confsym
