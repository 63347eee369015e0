#include "ssm/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ssm/errors.hpp"

namespace ssm::num {

namespace {

double evaluate(const LossFn& loss_fn, const ParamStore& params) {
  Tape tape;
  const double v = loss_fn(tape, params).value()[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss_fn, const ParamStore& params, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw ArgumentError("grad_check: eps must lie in [1e-6, 1e-3]");
  Tape tape;
  Var loss = loss_fn(tape, params);
  if (loss.value().size() != 1 || !std::isfinite(loss.value()[0])) throw NumericError("grad_check: non-finite loss");
  tape.backward(loss);
  const ParamStore analytic = tape.gradients(params);

  GradCheckReport report;
  ParamStore probe = params;
  for (const auto& [name, value] : params) {
    Tensor& slot = probe.get(name);
    const Tensor& g = analytic.get(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = slot[i];
      slot[i] = orig + eps;
      const double up = evaluate(loss_fn, probe);
      slot[i] = orig - eps;
      const double down = evaluate(loss_fn, probe);
      slot[i] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double rel = std::abs(g[i] - fd) / std::max(1.0, std::abs(fd));
      if (report.checked++ == 0 || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace ssm::num
