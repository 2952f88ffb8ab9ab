#include "hsp/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hsp/errors.hpp"

namespace hsp::num {

namespace {

double eval_scalar(const std::function<Tensor()>& loss) {
    NoGradGuard guard;
    Tensor value = loss();
    if (value.numel() != 1) {
        throw UsageError("grad_check: objective must be scalar, got " + shape_str(value.shape()));
    }
    return value.item();
}

void require_f64(const Tensor& t) {
    if (t.dtype() != DType::f64) {
        throw UsageError("grad_check requires float64 values");
    }
}

}  // namespace

GradCheckReport grad_check_parameters(const std::function<Tensor()>& loss,
                                      std::span<Tensor> parameters, double h, double rtol,
                                      double floor) {
    for (Tensor& p : parameters) {
        require_f64(p);
        if (!p.is_leaf()) throw UsageError("grad_check: parameters must be leaves");
        p.zero_grad();
        p.set_requires_grad(true);
    }

    const double first = eval_scalar(loss);
    const double second = eval_scalar(loss);
    if (std::memcmp(&first, &second, sizeof(double)) != 0) {
        throw CheckInvalidError("grad_check: objective is not deterministic (" +
                                std::to_string(first) + " vs " + std::to_string(second) + ")");
    }

    backward(loss());

    GradCheckReport report;
    std::size_t flat = 0;
    for (Tensor& p : parameters) {
        const std::vector<double> analytic = p.grad_vector();
        auto values = p.mutable_data<double>();
        for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
            const double original = values[i];
            values[i] = original + h;
            const double plus = eval_scalar(loss);
            values[i] = original - h;
            const double minus = eval_scalar(loss);
            values[i] = original;
            const double numeric = (plus - minus) / (2.0 * h);
            const double abs_err = std::abs(analytic[i] - numeric);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
            const double rel = abs_err / denom;
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst_index = flat;
            }
            ++report.checked;
        }
    }
    report.pass = report.max_relative_error < rtol;
    return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                           double h, double rtol, double floor) {
    require_f64(point);
    Tensor x = point.detach();
    Tensor params[] = {x};
    return grad_check_parameters([&] { return fn(params[0]); }, params, h, rtol, floor);
}

}  // namespace hsp::num
