// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "splatir/losses.hpp"

namespace splatir {

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InputError("psnr: image shapes differ");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return 99.0;
    return std::clamp(10.0 * std::log10(1.0 / mse), 0.0, 99.0);
}

double ssim(const Image& a, const Image& b) { return loss_ssim(a, b); }

double normal_mae_deg(const Image& normals_a, const Image& normals_b, const Image& mask) {
    if (!normals_a.same_shape(normals_b)) throw InputError("normal_mae_deg: shapes differ");
    if (mask.width() != normals_a.width() || mask.height() != normals_a.height())
        throw InputError("normal_mae_deg: mask resolution mismatch");
    double sum = 0.0;
    int count = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y, 0) <= 0.5) continue;
            const Vec3 na = normals_a.rgb(x, y);
            const Vec3 nb = normals_b.rgb(x, y);
            const double la = na.norm(), lb = nb.norm();
            if (la < 1e-12 || lb < 1e-12) {
                sum += 90.0;  // a degenerate normal is maximally uninformative
                ++count;
                continue;
            }
            const double c = std::clamp(na.dot(nb) / (la * lb), -1.0, 1.0);
            sum += std::acos(c) * 180.0 / kPi;
            ++count;
        }
    }
    if (count == 0) throw InputError("normal_mae_deg: mask selects no pixels");
    return sum / count;
}

}  // namespace splatir
