#include <algorithm>
#include <cmath>
#include <sstream>

#include "shredlab/errors.hpp"
#include "shredlab/nn/grad_check.hpp"
#include "shredlab/rng.hpp"

namespace shredlab::nn {

double GradCheckReport::max_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " (tol " << tolerance << ")";
  for (const auto& e : entries) os << "\n  " << e.name << ": " << e.max_rel_error;
  return os.str();
}

namespace {

template <typename T>
double probe(const Block<T>& block, const std::vector<Matrix<T>>& inputs, const Matrix<T>& proj,
             const std::string& where) {
  Tape<T> tape(false);
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.constant(x));
  const Var out = block(tape, vars);
  const double loss = static_cast<double>(tape.value(out).cwiseProduct(proj).sum());
  if (!std::isfinite(loss)) throw NumericalError("grad_check: non-finite loss while perturbing " + where);
  return loss;
}

template <typename T>
double rel_error(const Matrix<T>& analytic, const Matrix<T>& numeric) {
  const double diff = static_cast<double>((analytic - numeric).cwiseAbs().maxCoeff());
  const double scale = std::max(static_cast<double>(numeric.cwiseAbs().maxCoeff()), 1e-6);
  return diff / scale;
}

}  // namespace

template <typename T>
GradCheckReport grad_check(const Block<T>& block, ParamStore<T>& params,
                           const std::vector<Matrix<T>>& inputs, const GradCheckOptions& options) {
  // Analytic pass.
  params.zero_grad();
  Tape<T> tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.input(x));
  const Var out = block(tape, vars);
  const Matrix<T>& y = tape.value(out);

  Rng rng(options.seed ^ 0x6A09E667F3BCC909ULL);
  Matrix<T> proj(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = static_cast<T>(rng.uniform(-1.0, 1.0));
  const Var loss = tape.sum(tape.mul(out, tape.constant(proj)));
  if (!std::isfinite(static_cast<double>(tape.value(loss)(0, 0)))) {
    throw NumericalError("grad_check: non-finite loss at the unperturbed point");
  }
  tape.backward(loss);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  const T eps = static_cast<T>(options.eps);

  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter<T>& param = params[p];
    Matrix<T> numeric = Matrix<T>::Zero(param.value.rows(), param.value.cols());
    for (Eigen::Index i = 0; i < param.value.size(); ++i) {
      if (param.mask && param.mask->data()[i] == T(0)) continue;
      const T saved = param.value.data()[i];
      const std::string where = param.name + "[" + std::to_string(i) + "]";
      param.value.data()[i] = saved + eps;
      const double up = probe(block, inputs, proj, where);
      param.value.data()[i] = saved - eps;
      const double down = probe(block, inputs, proj, where);
      param.value.data()[i] = saved;
      numeric.data()[i] = static_cast<T>((up - down) / (2.0 * options.eps));
    }
    report.entries.push_back({param.name, rel_error<T>(param.grad, numeric)});
  }

  if (options.check_inputs) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      std::vector<Matrix<T>> perturbed = inputs;
      Matrix<T> numeric = Matrix<T>::Zero(inputs[k].rows(), inputs[k].cols());
      for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
        const std::string where = "input[" + std::to_string(k) + "][" + std::to_string(i) + "]";
        perturbed[k].data()[i] = inputs[k].data()[i] + eps;
        const double up = probe(block, perturbed, proj, where);
        perturbed[k].data()[i] = inputs[k].data()[i] - eps;
        const double down = probe(block, perturbed, proj, where);
        perturbed[k].data()[i] = inputs[k].data()[i];
        numeric.data()[i] = static_cast<T>((up - down) / (2.0 * options.eps));
      }
      report.entries.push_back({"input[" + std::to_string(k) + "]", rel_error<T>(tape.grad(vars[k]), numeric)});
    }
  }

  report.passed = report.max_error() < options.tolerance;
  return report;
}

template GradCheckReport grad_check<float>(const Block<float>&, ParamStore<float>&,
                                           const std::vector<Matrix<float>>&, const GradCheckOptions&);
template GradCheckReport grad_check<double>(const Block<double>&, ParamStore<double>&,
                                            const std::vector<Matrix<double>>&,
                                            const GradCheckOptions&);

}  // namespace shredlab::nn
