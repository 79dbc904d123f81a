#include "msn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace msn {

namespace {

double eval_scalar(const GraphFn& fn, const std::vector<Tensor<double>>& inputs) {
    std::vector<NodePtr<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(make_leaf(t, false));
    NodePtr<double> out = fn(leaves);
    if (out->value.numel() != 1)
        throw ShapeError("grad_check: graph function must return a scalar node");
    return out->value[0];
}

}  // namespace

GradCheckReport grad_check(const std::string& name, std::vector<Tensor<double>> inputs,
                           const GraphFn& fn, double step, double tolerance) {
    // Analytic pass.
    std::vector<NodePtr<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(make_leaf(t, true));
    NodePtr<double> out = fn(leaves);
    if (out->value.numel() != 1)
        throw ShapeError("grad_check: graph function must return a scalar node");
    backward(out);

    GradCheckReport report;
    report.name = name;
    report.tolerance = tolerance;

    for (size_t i = 0; i < inputs.size(); ++i) {
        const Tensor<double>& analytic = leaves[i]->grad_ready
                                             ? leaves[i]->grad
                                             : Tensor<double>::zeros(inputs[i].shape());
        for (int64_t j = 0; j < inputs[i].numel(); ++j) {
            const double saved = inputs[i][j];
            inputs[i][j] = saved + step;
            const double up = eval_scalar(fn, inputs);
            inputs[i][j] = saved - step;
            const double down = eval_scalar(fn, inputs);
            inputs[i][j] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            report.max_rel_err = std::max(report.max_rel_err, std::abs(a - numeric) / denom);
            ++report.coords_checked;
        }
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

}  // namespace msn
