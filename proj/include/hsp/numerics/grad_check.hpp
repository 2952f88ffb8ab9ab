#pragma once

#include <functional>
#include <span>

#include "hsp/numerics/tensor.hpp"

namespace hsp::num {

struct GradCheckReport {
    double max_relative_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;  // flat index across all checked values
    std::size_t checked = 0;
    bool pass = false;
};

// Compares the reverse-mode gradient of `fn` at `point` with central
// differences, elementwise. Relative error uses max(|analytic|, |numeric|, floor)
// as denominator, so entries below `floor` are effectively held to an absolute
// tolerance of rtol * floor; passes iff the maximum is below `rtol`. `point` must be
// float64. Throws CheckInvalidError if `fn` is not deterministic.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                           double h = 1e-5, double rtol = 1e-4, double floor = 1e-8);

// Same check over a set of float64 leaf parameters perturbed in place. `loss`
// re-evaluates the objective from the current parameter values.
GradCheckReport grad_check_parameters(const std::function<Tensor()>& loss,
                                      std::span<Tensor> parameters, double h = 1e-5,
                                      double rtol = 1e-4, double floor = 1e-8);

}  // namespace hsp::num
