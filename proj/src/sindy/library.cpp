#include <cmath>
#include <functional>

#include "shredlab/errors.hpp"
#include "shredlab/sindy.hpp"

namespace shredlab::sindy {

void LibrarySpec::validate() const {
  if (poly_order < 1) throw ConfigError("library: poly_order must be >= 1");
  if (fourier_k < 0) throw ConfigError("library: fourier_k must be >= 0");
}

void to_json(nlohmann::json& j, const LibrarySpec& s) {
  j = {{"include_bias", s.include_bias}, {"poly_order", s.poly_order}, {"fourier_k", s.fourier_k}};
}

void from_json(const nlohmann::json& j, LibrarySpec& s) {
  s.include_bias = j.value("include_bias", true);
  s.poly_order = j.value("poly_order", 1);
  s.fourier_k = j.value("fourier_k", 0);
  s.validate();
}

std::string subscripted(const std::string& base, int index) {
  static const char* digits[] = {"₀", "₁", "₂", "₃", "₄", "₅", "₆", "₇", "₈", "₉"};
  std::string out = base;
  for (char c : std::to_string(index)) out += digits[c - '0'];
  return out;
}

std::string LibraryTerm::name() const {
  switch (kind) {
    case Kind::bias:
      return "1";
    case Kind::monomial: {
      std::string s;
      for (std::size_t a = 0; a < exponents.size(); ++a) {
        if (exponents[a] == 0) continue;
        s += subscripted("z", static_cast<int>(a));
        if (exponents[a] > 1) s += "^" + std::to_string(exponents[a]);
      }
      return s;
    }
    case Kind::sine:
    case Kind::cosine: {
      const std::string arg = (frequency == 1 ? "" : std::to_string(frequency)) + subscripted("z", variable);
      return (kind == Kind::sine ? "sin(" : "cos(") + arg + ")";
    }
  }
  return {};
}

std::vector<LibraryTerm> library_terms(const LibrarySpec& spec, std::size_t k) {
  spec.validate();
  std::vector<LibraryTerm> terms;
  if (spec.include_bias) terms.push_back({LibraryTerm::Kind::bias, {}, 0, 0});

  // Degree-d monomials as non-decreasing index tuples, lexicographic.
  const int kk = static_cast<int>(k);
  for (int degree = 1; degree <= spec.poly_order; ++degree) {
    std::vector<int> idx(static_cast<std::size_t>(degree), 0);
    std::function<void(int, int)> rec = [&](int pos, int start) {
      if (pos == degree) {
        LibraryTerm t;
        t.kind = LibraryTerm::Kind::monomial;
        t.exponents.assign(k, 0);
        for (int i : idx) ++t.exponents[static_cast<std::size_t>(i)];
        terms.push_back(std::move(t));
        return;
      }
      for (int v = start; v < kk; ++v) {
        idx[static_cast<std::size_t>(pos)] = v;
        rec(pos + 1, v);
      }
    };
    rec(0, 0);
  }

  for (int j = 1; j <= spec.fourier_k; ++j) {
    for (int a = 0; a < kk; ++a) terms.push_back({LibraryTerm::Kind::sine, {}, a, j});
    for (int a = 0; a < kk; ++a) terms.push_back({LibraryTerm::Kind::cosine, {}, a, j});
  }
  return terms;
}

std::size_t library_width(const LibrarySpec& spec, std::size_t k) {
  return library_terms(spec, k).size();
}

namespace {

template <typename T>
T term_value(const LibraryTerm& term, const T* z) {
  switch (term.kind) {
    case LibraryTerm::Kind::bias:
      return T(1);
    case LibraryTerm::Kind::monomial: {
      T v(1);
      for (std::size_t a = 0; a < term.exponents.size(); ++a) {
        for (int e = 0; e < term.exponents[a]; ++e) v *= z[a];
      }
      return v;
    }
    case LibraryTerm::Kind::sine:
      return std::sin(static_cast<T>(term.frequency) * z[term.variable]);
    case LibraryTerm::Kind::cosine:
      return std::cos(static_cast<T>(term.frequency) * z[term.variable]);
  }
  return T(0);
}

// ∂term/∂z_a
template <typename T>
T term_partial(const LibraryTerm& term, const T* z, std::size_t a) {
  switch (term.kind) {
    case LibraryTerm::Kind::bias:
      return T(0);
    case LibraryTerm::Kind::monomial: {
      const int ea = term.exponents[a];
      if (ea == 0) return T(0);
      T v = static_cast<T>(ea);
      for (std::size_t b = 0; b < term.exponents.size(); ++b) {
        const int e = term.exponents[b] - (b == a ? 1 : 0);
        for (int i = 0; i < e; ++i) v *= z[b];
      }
      return v;
    }
    case LibraryTerm::Kind::sine:
      if (static_cast<std::size_t>(term.variable) != a) return T(0);
      return static_cast<T>(term.frequency) * std::cos(static_cast<T>(term.frequency) * z[a]);
    case LibraryTerm::Kind::cosine:
      if (static_cast<std::size_t>(term.variable) != a) return T(0);
      return -static_cast<T>(term.frequency) * std::sin(static_cast<T>(term.frequency) * z[a]);
  }
  return T(0);
}

}  // namespace

template <typename T>
Matrix<T> eval_library(const Matrix<T>& z, const LibrarySpec& spec) {
  const auto terms = library_terms(spec, static_cast<std::size_t>(z.cols()));
  Matrix<T> out(z.rows(), static_cast<Eigen::Index>(terms.size()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const T* row = z.data() + i * z.cols();
    for (std::size_t c = 0; c < terms.size(); ++c) out(i, static_cast<Eigen::Index>(c)) = term_value(terms[c], row);
  }
  return out;
}

template <typename T>
Var eval_library(Tape<T>& tape, Var z, const LibrarySpec& spec) {
  const Matrix<T> zv = tape.value(z);
  Matrix<T> theta = eval_library(zv, spec);
  auto terms = library_terms(spec, static_cast<std::size_t>(zv.cols()));
  return tape.custom({z}, std::move(theta), [z, zv, terms](Tape<T>& t, const Matrix<T>& g) {
    Matrix<T> dz = Matrix<T>::Zero(zv.rows(), zv.cols());
    for (Eigen::Index i = 0; i < zv.rows(); ++i) {
      const T* row = zv.data() + i * zv.cols();
      for (std::size_t c = 0; c < terms.size(); ++c) {
        const T gc = g(i, static_cast<Eigen::Index>(c));
        if (gc == T(0)) continue;
        for (Eigen::Index a = 0; a < zv.cols(); ++a) {
          dz(i, a) += gc * term_partial(terms[c], row, static_cast<std::size_t>(a));
        }
      }
    }
    t.accumulate(z, dz);
  });
}

template Matrix<float> eval_library(const Matrix<float>&, const LibrarySpec&);
template Matrix<double> eval_library(const Matrix<double>&, const LibrarySpec&);
template Var eval_library(Tape<float>&, Var, const LibrarySpec&);
template Var eval_library(Tape<double>&, Var, const LibrarySpec&);

}  // namespace shredlab::sindy
