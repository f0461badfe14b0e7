#pragma once

#include "sloc/refinement.h"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace sloc::detail {

// Levenberg-Marquardt with multiplicative damping. `eval(state, H, g)` fills
// the Gauss-Newton Hessian and gradient; `cost(state)`
// returns the cost only (+inf for invalid states); `retract(state, delta)`
// applies a tangent step. Only steps that lower the cost are accepted, so the
// cost history is monotone.
template <int D, typename State, typename Eval, typename Cost, typename Retract>
State levenberg_marquardt(State x, Eval &&eval, Cost &&cost, Retract &&retract, const RefinementOptions &opt,
                          RefinementSummary &summary) {
    using Mat = Eigen::Matrix<double, D, D>;
    using Vec = Eigen::Matrix<double, D, 1>;
    Mat H;
    Vec g;
    // The history records cost(); eval() only supplies H and g, so both
    // accept/reject decisions and the history use the same function.
    double current = cost(x);
    eval(x, H, g);
    summary.refined = true;
    summary.initial_cost = current;
    summary.cost_history = {current};
    summary.converged = false;
    double lambda = 1e-4;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (current <= 0.0 || g.norm() <= 1e-300) {
            summary.converged = true;
            break;
        }
        bool accepted = false;
        for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
            Mat A = H;
            A.diagonal() += lambda * H.diagonal().cwiseMax(1e-12);
            const Vec delta = A.ldlt().solve(-g);
            if (!delta.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const State candidate = retract(x, delta);
            const double c = cost(candidate);
            if (c < current) {
                const double decrease = current - c;
                x = candidate;
                current = c;
                eval(x, H, g);
                summary.cost_history.push_back(current);
                lambda = std::max(lambda * 0.1, 1e-12);
                accepted = true;
                if (decrease <= opt.function_tolerance * c || delta.norm() <= opt.step_tolerance)
                    summary.converged = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted) {
            // No descent direction left at machine precision.
            summary.converged = true;
            break;
        }
        if (summary.converged) {
            ++it;
            break;
        }
    }
    summary.iterations = it;
    summary.final_cost = current;
    return x;
}

} // namespace sloc::detail
