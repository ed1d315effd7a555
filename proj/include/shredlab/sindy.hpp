#pragma once

// Function libraries, forward-Euler latent rollout, SINDy loss, pruning and
// the symbolic (printed) form of learned latent ODEs.

#include <string>
#include <vector>

#include <json.hpp>

#include "shredlab/nn/tape.hpp"

namespace shredlab::sindy {

using nn::Matrix;
using nn::Tape;
using nn::Var;

/// Library Θ: optional bias, all monomials up to poly_order, then
/// sin(j·z_a), cos(j·z_a) for j = 1..fourier_k.
struct LibrarySpec {
  bool include_bias = true;
  int poly_order = 1;
  int fourier_k = 0;

  void validate() const;
  bool operator==(const LibrarySpec&) const = default;
};

void to_json(nlohmann::json& j, const LibrarySpec& s);
void from_json(const nlohmann::json& j, LibrarySpec& s);

struct LibraryTerm {
  enum class Kind { bias, monomial, sine, cosine };
  Kind kind = Kind::bias;
  std::vector<int> exponents;  // monomial: one exponent per input column
  int variable = 0;            // sine/cosine: input column
  int frequency = 0;           // sine/cosine: j

  /// Display name, e.g. "1", "z₀", "z₀²"... see README for the exact grammar.
  std::string name() const;
};

/// Column order: [bias?] [degree 1: z₀..z_{k-1}] [degree 2, lexicographic] ...
/// [sin(1·z), cos(1·z)] ... [sin(K·z), cos(K·z)].
std::vector<LibraryTerm> library_terms(const LibrarySpec& spec, std::size_t k);
std::size_t library_width(const LibrarySpec& spec, std::size_t k);

template <typename T>
Matrix<T> eval_library(const Matrix<T>& z, const LibrarySpec& spec);

/// Differentiable Θ(Z): [n x k] -> [n x ℓ].
template <typename T>
Var eval_library(Tape<T>& tape, Var z, const LibrarySpec& spec);

/// k_steps explicit Euler sub-steps of ż = Θ(z) Ξ with step h, applied to every
/// row of z independently. Throws NumericalError naming the sub-step on divergence.
template <typename T>
Matrix<T> euler_rollout(const Matrix<T>& z, const Matrix<T>& xi, const LibrarySpec& spec, T h_step,
                        int k_steps);

template <typename T>
Var euler_rollout(Tape<T>& tape, Var z, Var xi, const LibrarySpec& spec, T h_step, int k_steps);

/// mean_t ||z_{t+1} - rollout(z_t)||² + λ_reg ||Ξ||² over a [T x k] trajectory.
template <typename T>
Var sindy_loss(Tape<T>& tape, Var trajectory, Var xi, const LibrarySpec& spec, T h_step, int k_steps,
               T lambda_reg);

/// Same loss with explicitly paired rows (prev[i] -> next[i]); used for batched trajectories.
template <typename T>
Var sindy_pair_loss(Tape<T>& tape, Var prev, Var next, Var xi, const LibrarySpec& spec, T h_step,
                    int k_steps, T lambda_reg);

/// Plain evaluation (no gradient) of sindy_loss.
template <typename T>
T sindy_loss_value(const Matrix<T>& trajectory, const Matrix<T>& xi, const LibrarySpec& spec,
                   T h_step, int k_steps, T lambda_reg);

/// Ξ with its prune mask and Euler step metadata.
struct SindyCoefficients {
  Matrix<double> xi;    // [ℓ x k]
  Matrix<double> mask;  // 1 = active, 0 = pruned
  double h_step = 0.2;
  int k_steps = 5;

  static SindyCoefficients dense(Matrix<double> xi, double h_step = 0.2, int k_steps = 5);
  void validate() const;
};

/// Hard threshold: |ξ| < τ becomes pruned (mask 0, value 0). Monotone.
template <typename T>
void prune_in_place(Matrix<T>& values, Matrix<T>& mask, T threshold);

SindyCoefficients prune(SindyCoefficients coeffs, double threshold);

// Symbolic form

struct SymbolicTerm {
  double coeff = 0.0;
  std::string monomial;  // "1" for the constant term
};

struct SymbolicEquation {
  std::string lhs;  // e.g. "ż₀"
  std::vector<SymbolicTerm> terms;
};

struct HeadSystem {
  int layer = 0;
  int head = 0;
  std::vector<SymbolicEquation> equations;
};

struct SymbolicSystem {
  std::vector<HeadSystem> heads;
  int precision = 3;
};

/// Equations ż_a = Σ_c ξ[c, a] · Θ_c for every unpruned entry of one head.
HeadSystem make_head_system(int layer, int head, const Matrix<double>& xi, const Matrix<double>& mask,
                            const LibrarySpec& spec, int precision = 3);

std::string format_equation(const SymbolicEquation& eq, int precision = 3);
std::string format_system(const SymbolicSystem& system);
SymbolicSystem parse_system(const std::string& text);

nlohmann::json system_to_json(const SymbolicSystem& system);
SymbolicSystem system_from_json(const nlohmann::json& j);

/// Inverse of make_head_system: coefficient matrix and mask over the library columns.
std::pair<Matrix<double>, Matrix<double>> head_to_xi(const HeadSystem& head, const LibrarySpec& spec,
                                                     std::size_t k);

/// "z" / "ż" with Unicode subscript index, e.g. subscripted("z", 12) == "z₁₂".
std::string subscripted(const std::string& base, int index);

}  // namespace shredlab::sindy
