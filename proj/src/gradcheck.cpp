#include "affect/gradcheck.hpp"

#include <cmath>
#include <vector>

namespace affect {

GradCheckResult finite_difference_check(const LossBuilder& build, std::span<BasicTensor<double>* const> wrt,
                                        double h) {
  if (!(h > 0.0)) throw RangeError("finite_difference_check: step must be positive");
  for (auto* t : wrt) t->zero_grad();
  {
    Tape<double> tape;
    tape.backward(build(tape));
  }
  std::vector<std::vector<double>> analytic;
  for (auto* t : wrt) analytic.push_back(t->grad());

  auto evaluate = [&] {
    Tape<double> tape;
    return tape.value(build(tape))[0];
  };

  GradCheckResult result;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto& x = *wrt[ti];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + h;
      const double up = evaluate();
      x[i] = saved - h;
      const double down = evaluate();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[ti][i];
      const double rel = std::abs(a - numeric) / (std::abs(a) + 1e-8);
      ++result.checked;
      if (rel > result.max_rel_error || result.checked == 1) {
        result.max_rel_error = std::max(rel, result.max_rel_error);
        result.tensor_index = ti;
        result.element = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult finite_difference_check(const std::function<Var(Tape<double>&, Var)>& f,
                                        const BasicTensor<double>& x, double h) {
  BasicTensor<double> probe = x;
  BasicTensor<double>* targets[] = {&probe};
  return finite_difference_check([&](Tape<double>& tape) { return f(tape, tape.parameter(probe)); }, targets,
                                 h);
}

}  // namespace affect
