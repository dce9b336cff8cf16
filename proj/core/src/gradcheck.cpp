#include "peghole/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace peghole::neuro {

GradCheckReport grad_check(ParamStore& store,
                           const std::function<double()>& loss_fn,
                           const std::function<double()>& loss_and_grad_fn,
                           double tolerance, double h) {
    GradCheckReport report;
    report.tolerance = tolerance;

    store.zero_grads();
    const double loss = loss_and_grad_fn();
    if (!std::isfinite(loss)) throw std::runtime_error("grad_check: non-finite loss");

    for (auto& p : store.params()) {
        GradCheckReport::Entry entry;
        entry.name = p->name;
        for (size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + h;
            const double lp = loss_fn();
            p->value.data[i] = saved - h;
            const double lm = loss_fn();
            p->value.data[i] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw std::runtime_error("grad_check: non-finite perturbed loss");
            const double fd = (lp - lm) / (2.0 * h);
            const double an = p->grad.data[i];
            const double rel =
                std::abs(an - fd) / std::max(std::abs(an) + std::abs(fd), 1e-8);
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace peghole::neuro
