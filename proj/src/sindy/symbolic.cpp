#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "shredlab/errors.hpp"
#include "shredlab/sindy.hpp"

namespace shredlab::sindy {

namespace {

std::string format_coeff(double c, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, c);
  return buf;
}

double round_to(double v, int precision) {
  return std::stod(format_coeff(v, precision));
}

// Strip a leading Unicode-subscripted label ("L₀", "H₁₂") and return its index.
bool parse_label(const std::string& line, const std::string& letter, int& index) {
  if (line.rfind(letter, 0) != 0) return false;
  std::string digits;
  std::size_t i = letter.size();
  // Subscript digits are the 3-byte sequences E2 82 80..89.
  while (i + 2 < line.size() && static_cast<unsigned char>(line[i]) == 0xE2 &&
         static_cast<unsigned char>(line[i + 1]) == 0x82) {
    const int d = static_cast<unsigned char>(line[i + 2]) - 0x80;
    if (d < 0 || d > 9) break;
    digits += static_cast<char>('0' + d);
    i += 3;
  }
  if (digits.empty() || i != line.size()) return false;
  index = std::stoi(digits);
  return true;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::string kDot = "·";

SymbolicTerm parse_term(const std::string& token) {
  SymbolicTerm term;
  const auto pos = token.find(kDot);
  if (pos == std::string::npos) {
    term.monomial = "1";
    term.coeff = std::stod(token);
  } else {
    term.coeff = std::stod(token.substr(0, pos));
    term.monomial = token.substr(pos + kDot.size());
  }
  return term;
}

SymbolicEquation parse_equation(const std::string& line) {
  const auto eq = line.find(" = ");
  if (eq == std::string::npos) throw ConfigError("parse_system: equation without ' = ': " + line);
  SymbolicEquation out;
  out.lhs = trim(line.substr(0, eq));
  std::string rhs = trim(line.substr(eq + 3));
  if (rhs == "0") return out;

  // Terms are joined by " + c" or " -c" (sign attached to negative coefficients).
  std::vector<std::string> tokens;
  std::size_t start = 0;
  for (std::size_t i = 1; i + 1 < rhs.size(); ++i) {
    if (rhs[i] == ' ' && (rhs[i + 1] == '-' || (rhs[i + 1] == '+' && i + 2 < rhs.size() && rhs[i + 2] == ' '))) {
      tokens.push_back(rhs.substr(start, i - start));
      start = rhs[i + 1] == '+' ? i + 3 : i + 1;
    }
  }
  tokens.push_back(rhs.substr(start));
  for (const auto& tok : tokens) out.terms.push_back(parse_term(trim(tok)));
  return out;
}

}  // namespace

HeadSystem make_head_system(int layer, int head, const Matrix<double>& xi, const Matrix<double>& mask,
                            const LibrarySpec& spec, int precision) {
  const auto k = static_cast<std::size_t>(xi.cols());
  const auto terms = library_terms(spec, k);
  if (static_cast<std::size_t>(xi.rows()) != terms.size()) {
    throw ConfigError("make_head_system: xi has " + std::to_string(xi.rows()) + " rows, library has " +
                      std::to_string(terms.size()) + " terms");
  }
  if (mask.rows() != xi.rows() || mask.cols() != xi.cols()) {
    throw ConfigError("make_head_system: mask shape does not match xi");
  }
  HeadSystem hs{layer, head, {}};
  for (std::size_t a = 0; a < k; ++a) {
    SymbolicEquation eq;
    eq.lhs = subscripted("ż", static_cast<int>(a));
    for (std::size_t c = 0; c < terms.size(); ++c) {
      const auto r = static_cast<Eigen::Index>(c);
      const auto col = static_cast<Eigen::Index>(a);
      if (mask(r, col) == 0.0) continue;
      eq.terms.push_back({round_to(xi(r, col), precision), terms[c].name()});
    }
    hs.equations.push_back(std::move(eq));
  }
  return hs;
}

std::string format_equation(const SymbolicEquation& eq, int precision) {
  std::string out = eq.lhs + " = ";
  if (eq.terms.empty()) return out + "0";
  for (std::size_t i = 0; i < eq.terms.size(); ++i) {
    const auto& t = eq.terms[i];
    std::string c = format_coeff(t.coeff, precision);
    if (i > 0) out += c.front() == '-' ? " " : " + ";
    out += c;
    if (t.monomial != "1") out += kDot + t.monomial;
  }
  return out;
}

std::string format_system(const SymbolicSystem& system) {
  std::ostringstream os;
  int current_layer = -1;
  for (const auto& h : system.heads) {
    if (h.layer != current_layer) {
      os << subscripted("L", h.layer) << "\n";
      current_layer = h.layer;
    }
    os << "  " << subscripted("H", h.head) << "\n";
    for (const auto& eq : h.equations) os << "    " << format_equation(eq, system.precision) << "\n";
  }
  return os.str();
}

SymbolicSystem parse_system(const std::string& text) {
  SymbolicSystem sys;
  std::istringstream is(text);
  std::string raw;
  int layer = -1;
  while (std::getline(is, raw)) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    int idx = 0;
    if (parse_label(line, "L", idx)) {
      layer = idx;
    } else if (parse_label(line, "H", idx)) {
      if (layer < 0) throw ConfigError("parse_system: head block before any layer label");
      sys.heads.push_back({layer, idx, {}});
    } else {
      if (sys.heads.empty()) throw ConfigError("parse_system: equation outside a head block: " + line);
      sys.heads.back().equations.push_back(parse_equation(line));
    }
  }
  return sys;
}

nlohmann::json system_to_json(const SymbolicSystem& system) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& h : system.heads) {
    nlohmann::json eqs = nlohmann::json::array();
    for (const auto& eq : h.equations) {
      nlohmann::json terms = nlohmann::json::array();
      for (const auto& t : eq.terms) terms.push_back({{"coeff", t.coeff}, {"monomial", t.monomial}});
      eqs.push_back({{"lhs", eq.lhs}, {"terms", terms}});
    }
    out.push_back({{"layer", h.layer}, {"head", h.head}, {"equations", eqs}});
  }
  return out;
}

SymbolicSystem system_from_json(const nlohmann::json& j) {
  SymbolicSystem sys;
  for (const auto& h : j) {
    HeadSystem hs{h.at("layer").get<int>(), h.at("head").get<int>(), {}};
    for (const auto& e : h.at("equations")) {
      SymbolicEquation eq;
      eq.lhs = e.at("lhs").get<std::string>();
      for (const auto& t : e.at("terms")) {
        eq.terms.push_back({t.at("coeff").get<double>(), t.at("monomial").get<std::string>()});
      }
      hs.equations.push_back(std::move(eq));
    }
    sys.heads.push_back(std::move(hs));
  }
  return sys;
}

std::pair<Matrix<double>, Matrix<double>> head_to_xi(const HeadSystem& head, const LibrarySpec& spec,
                                                     std::size_t k) {
  const auto terms = library_terms(spec, k);
  std::map<std::string, Eigen::Index> row_of;
  for (std::size_t c = 0; c < terms.size(); ++c) row_of[terms[c].name()] = static_cast<Eigen::Index>(c);
  if (head.equations.size() != k) {
    throw ConfigError("head_to_xi: expected " + std::to_string(k) + " equations, got " +
                      std::to_string(head.equations.size()));
  }
  const auto ell = static_cast<Eigen::Index>(terms.size());
  Matrix<double> xi = Matrix<double>::Zero(ell, static_cast<Eigen::Index>(k));
  Matrix<double> mask = Matrix<double>::Zero(ell, static_cast<Eigen::Index>(k));
  for (std::size_t a = 0; a < k; ++a) {
    for (const auto& t : head.equations[a].terms) {
      auto it = row_of.find(t.monomial);
      if (it == row_of.end()) throw ConfigError("head_to_xi: unknown library term '" + t.monomial + "'");
      xi(it->second, static_cast<Eigen::Index>(a)) = t.coeff;
      mask(it->second, static_cast<Eigen::Index>(a)) = 1.0;
    }
  }
  return {xi, mask};
}

}  // namespace shredlab::sindy
