#pragma once

#include <functional>
#include <string>
#include <vector>

#include "msn/autodiff.hpp"

namespace msn {

struct GradCheckReport {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    int64_t coords_checked = 0;
};

/// Builds a scalar graph from double-precision leaves and compares every
/// analytic input gradient against central differences (f(x+h)-f(x-h))/2h.
/// `fn` must be a pure function of the leaf values.
using GraphFn = std::function<NodePtr<double>(const std::vector<NodePtr<double>>&)>;

GradCheckReport grad_check(const std::string& name, std::vector<Tensor<double>> inputs,
                           const GraphFn& fn, double step = 1e-5, double tolerance = 1e-4);

}  // namespace msn
