#pragma once

// Small dense NLPs from generic lambdas, differentiated with dual numbers.
// Objective: f(span<const S>) -> S.  Constraints: c(span<const S>, span<S>),
// equalities first. Intended for tests and small auxiliary problems.

#include <utility>
#include <vector>

#include "kiteopt/diffkit.hpp"
#include "kiteopt/ipsolve.hpp"

namespace kiteopt::ip {

template <class Objective, class Constraints>
class LambdaNlp final : public NlpProblem {
 public:
  LambdaNlp(int n, int num_eq, int num_ineq, std::vector<double> lower, std::vector<double> upper, Objective f,
            Constraints c)
      : n_(n),
        me_(num_eq),
        mi_(num_ineq),
        lower_(std::move(lower)),
        upper_(std::move(upper)),
        f_(n, std::move(f)),
        c_(n, num_eq + num_ineq, std::move(c)),
        pattern_(diff::SparsityPattern::dense(num_eq + num_ineq, n)) {
    if (static_cast<int>(lower_.size()) != n || static_cast<int>(upper_.size()) != n) {
      throw LayoutError("LambdaNlp: bound vectors must have n entries");
    }
  }

  int num_variables() const override { return n_; }
  int num_equalities() const override { return me_; }
  int num_inequalities() const override { return mi_; }
  void bounds(std::span<double> lo, std::span<double> hi) const override {
    std::copy(lower_.begin(), lower_.end(), lo.begin());
    std::copy(upper_.begin(), upper_.end(), hi.begin());
  }
  double objective(std::span<const double> z) const override { return f_.evaluate(z); }
  void gradient(std::span<const double> z, std::span<double> g) const override {
    const auto v = diff::gradient(f_, z);
    std::copy(v.begin(), v.end(), g.begin());
  }
  void constraints(std::span<const double> z, std::span<double> out) const override { c_.evaluate(z, out); }
  const diff::SparsityPattern& jacobian_pattern() const override { return pattern_; }
  void jacobian(std::span<const double> z, std::span<double> values) const override {
    const auto v = diff::jacobian(c_, z, pattern_);
    std::copy(v.begin(), v.end(), values.begin());
  }

 private:
  int n_, me_, mi_;
  std::vector<double> lower_, upper_;
  diff::LambdaScalarFunction<Objective> f_;
  diff::LambdaVectorFunction<Constraints> c_;
  diff::SparsityPattern pattern_;
};

template <class Objective, class Constraints>
LambdaNlp<Objective, Constraints> make_lambda_nlp(int n, int num_eq, int num_ineq, std::vector<double> lower,
                                                  std::vector<double> upper, Objective f, Constraints c) {
  return LambdaNlp<Objective, Constraints>(n, num_eq, num_ineq, std::move(lower), std::move(upper), std::move(f),
                                           std::move(c));
}

}  // namespace kiteopt::ip
