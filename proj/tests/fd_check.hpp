// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient checking with a step-halving validity guard.
// Estimates at step h and h/2 must agree before a point counts as smooth;
// disagreement flags a kink or branch crossing (weight-max switches, cutoff
// and near-plane crossings, blend reordering) and the entry is skipped rather
// than silently compared. Callers assert that the skip fraction stays small.
#pragma once

#include <cmath>
#include <functional>
#include <string>

namespace splatir::testing {

struct FdReport {
    int checked = 0;
    int skipped = 0;
    int failed = 0;
    double worst_rel = 0.0;
    std::string worst_label;

    double skip_fraction() const {
        const int total = checked + skipped;
        return total == 0 ? 0.0 : static_cast<double>(skipped) / total;
    }
};

struct FdOptions {
    double step = 1e-4;
    double rel_tol = 1e-3;
    double abs_tol = 1e-9;
    double smooth_rel = 0.02;  // max drift allowed between the h and h/2 estimates
};

/// Checks one analytic derivative against central differences of `eval` taken
/// by perturbing `*param` in place. Restores the original value afterwards.
inline void fd_check_entry(FdReport& rep, const std::function<double()>& eval, double* param,
                           double analytic, const FdOptions& opt, const std::string& label) {
    const double saved = *param;
    auto central = [&](double h) {
        *param = saved + h;
        const double fp = eval();
        *param = saved - h;
        const double fm = eval();
        *param = saved;
        return (fp - fm) / (2.0 * h);
    };
    const double g1 = central(opt.step);
    const double g2 = central(opt.step * 0.5);

    const double scale = std::max({std::abs(g1), std::abs(g2), 1.0});
    if (!std::isfinite(g1) || !std::isfinite(g2) ||
        std::abs(g1 - g2) > opt.smooth_rel * scale + opt.abs_tol) {
        ++rep.skipped;  // non-smooth at this point; not a valid comparison
        return;
    }

    // Richardson extrapolation cancels the O(h^2) term of the central
    // difference, leaving an O(h^4) reference for smooth points.
    const double fd = (4.0 * g2 - g1) / 3.0;

    ++rep.checked;
    const double err = std::abs(analytic - fd);
    const double tol = std::max(opt.abs_tol, opt.rel_tol * std::max(std::abs(analytic), std::abs(fd)));
    const double rel = err / std::max(1e-300, std::max(std::abs(analytic), std::abs(fd)));
    if (err > tol) {
        ++rep.failed;
        if (rel > rep.worst_rel) {
            rep.worst_rel = rel;
            rep.worst_label = label;
        }
    }
}

}  // namespace splatir::testing
