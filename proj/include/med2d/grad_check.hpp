#pragma once

#include <functional>
#include <vector>

#include "med2d/ops.hpp"

// Central finite-difference gradient checking. Always runs in f64: checking
// in f32 produces false failures near sensible tolerances.

namespace med2d {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
};

// f builds a scalar from the given leaves on a fresh tape. Analytic gradients
// come from one backward pass; each selected coordinate is then re-evaluated
// at x +/- eps. When max_coords_per_input > 0, a deterministic random subset
// of coordinates is checked per input (for whole-model checks where the full
// sweep would be quadratic).
inline GradCheckReport grad_check_many(
    const std::function<Var(Tape64&, const std::vector<Var>&)>& f,
    std::vector<Tensor64> inputs, double eps, double tol, int max_coords_per_input = -1,
    uint64_t seed = 0) {
    if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be > 0");
    if (!(tol > 0.0)) throw std::invalid_argument("grad_check: tol must be > 0");

    const auto eval = [&](const std::vector<Tensor64>& xs, bool want_grads,
                          std::vector<Tensor64>* grads) -> double {
        Tape64 tape;
        std::vector<Var> vars;
        vars.reserve(xs.size());
        for (const auto& x : xs) vars.push_back(tape.leaf(x));
        Var out = f(tape, vars);
        if (tape.value(out).numel() != 1)
            throw std::invalid_argument("grad_check: function output must be scalar, got shape " +
                                        shape_str(tape.value(out).shape));
        const double y = tape.value(out)[0];
        if (want_grads) {
            tape.backward(out);
            grads->clear();
            for (size_t k = 0; k < vars.size(); ++k) {
                const Tensor64* g = tape.grad_if(vars[k]);
                grads->push_back(g ? *g : Tensor64::zeros(xs[k].shape));
            }
        }
        return y;
    };

    std::vector<Tensor64> analytic;
    eval(inputs, true, &analytic);

    GradCheckReport report;
    Rng pick(mix_seed(seed, 0x6772616463686bULL));
    for (size_t k = 0; k < inputs.size(); ++k) {
        const int64_t n = inputs[k].numel();
        std::vector<int64_t> coords;
        if (max_coords_per_input > 0 && n > max_coords_per_input) {
            for (int i = 0; i < max_coords_per_input; ++i)
                coords.push_back(static_cast<int64_t>(pick.next_u64() % static_cast<uint64_t>(n)));
        } else {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        }
        for (int64_t i : coords) {
            const double saved = inputs[k][i];
            inputs[k][i] = saved + eps;
            const double fp = eval(inputs, false, nullptr);
            inputs[k][i] = saved - eps;
            const double fm = eval(inputs, false, nullptr);
            inputs[k][i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[k][i];
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            report.max_rel_err = std::max(report.max_rel_err, rel);
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

inline GradCheckReport grad_check(const std::function<Var(Tape64&, Var)>& f, Tensor64 x,
                                  double eps = 1e-5, double tol = 1e-4, int max_coords = -1,
                                  uint64_t seed = 0) {
    return grad_check_many(
        [&f](Tape64& t, const std::vector<Var>& vs) { return f(t, vs[0]); }, {std::move(x)}, eps,
        tol, max_coords, seed);
}

}  // namespace med2d
