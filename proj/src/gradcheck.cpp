#include "vr/gradcheck.hpp"

#include <cmath>

#include "vr/common.hpp"

namespace vr {

std::vector<double> finite_diff_gradient(const std::function<double(const Tensor&)>& f,
                                         const Tensor& x, double step) {
    if (!(step > 0.0)) throw ValueError("finite_diff_gradient: step must be positive");
    std::vector<double> grad(x.values().size());
    Tensor probe = Tensor::from(x.shape(), x.values());
    for (size_t i = 0; i < grad.size(); ++i) {
        const double orig = probe.values()[i];
        probe.values()[i] = orig + step;
        const double fp = f(probe);
        probe.values()[i] = orig - step;
        const double fm = f(probe);
        probe.values()[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("finite_diff_gradient: non-finite function value");
        }
        grad[i] = (fp - fm) / (2.0 * step);
    }
    return grad;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                          double floor) {
    if (a.size() != b.size()) throw ValueError("max_relative_error: length mismatch");
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace vr
