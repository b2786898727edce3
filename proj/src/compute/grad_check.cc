#include "aflab/compute/grad_check.h"

#include <algorithm>
#include <cmath>

namespace aflab {

double RelativeError(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

void Record(GradCheckReport& report, double analytic, double numeric, const GradCheckOptions& options,
            const std::string& where) {
  ++report.checked;
  const double rel = RelativeError(analytic, numeric, options.floor);
  report.max_absolute_error = std::max(report.max_absolute_error, std::abs(analytic - numeric));
  if (rel > report.max_relative_error) {
    report.max_relative_error = rel;
    report.worst_entry = where + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
  }
  if (!(rel < options.tolerance)) report.passed = false;
}

double Evaluate(const InputScalarFn& fn, const std::vector<Tensor>& inputs) {
  Graph g(false);
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.Constant(t));
  return fn(g, vars).scalar();
}

}  // namespace

GradCheckReport CheckInputGradients(const InputScalarFn& fn, const std::vector<Tensor>& inputs,
                                    const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Graph g(true);
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(g.Input(t));
    Var out = fn(g, vars);
    g.Backward(out);
    for (const Var& v : vars) analytic.push_back(g.has_grad(v.id()) ? v.grad() : Tensor::ZerosLike(v.value()));
  }
  GradCheckReport report;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = inputs[i].at(j);
      probe[i].at(j) = orig + options.step;
      const double plus = Evaluate(fn, probe);
      probe[i].at(j) = orig - options.step;
      const double minus = Evaluate(fn, probe);
      probe[i].at(j) = orig;
      const double numeric = (plus - minus) / (2.0 * options.step);
      Record(report, analytic[i].at(j), numeric, options, "input " + std::to_string(i) + "[" + std::to_string(j) + "]");
    }
  }
  return report;
}

GradCheckReport CheckParameterGradients(const ParamScalarFn& fn, const ParameterList& params,
                                        const GradCheckOptions& options) {
  ZeroGrads(params);
  {
    Graph g(true);
    g.Backward(fn(g));
  }
  std::vector<Tensor> analytic;
  for (const Parameter* p : params) analytic.push_back(p->grad);
  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double orig = p.value.at(j);
      p.value.at(j) = orig + options.step;
      double plus;
      {
        Graph g(false);
        plus = fn(g).scalar();
      }
      p.value.at(j) = orig - options.step;
      double minus;
      {
        Graph g(false);
        minus = fn(g).scalar();
      }
      p.value.at(j) = orig;
      const double numeric = (plus - minus) / (2.0 * options.step);
      Record(report, analytic[i].at(j), numeric, options, p.name + "[" + std::to_string(j) + "]");
    }
  }
  ZeroGrads(params);
  return report;
}

}  // namespace aflab
