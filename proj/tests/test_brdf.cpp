// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "fd_check.hpp"
#include "splatir/brdf.hpp"

using namespace splatir;

namespace {

ShadePoint default_point() {
    ShadePoint p;
    p.normal = Vec3(0, 0, 1);
    p.omega_o = Vec3(0, 0, 1);
    p.albedo = Vec3(0.9, 0.9, 0.9);
    p.metallic = 0.0;
    p.roughness = 0.5;
    return p;
}

}  // namespace

TEST_CASE("diffuse lobe is (1-m) albedo / pi") {
    ShadePoint p = default_point();
    BRDFSample s = eval_brdf(p, Vec3(0, 0, 1));
    CHECK(s.diffuse.x() == doctest::Approx(0.9 / kPi).epsilon(1e-12));
    CHECK(s.cos_i == doctest::Approx(1.0));

    p.metallic = 1.0;
    s = eval_brdf(p, Vec3(0, 0, 1));
    CHECK(s.diffuse.norm() == 0.0);

    p.metallic = 0.25;
    s = eval_brdf(p, Vec3(0, 0, 1));
    CHECK(s.diffuse.y() == doctest::Approx(0.75 * 0.9 / kPi).epsilon(1e-12));
}

TEST_CASE("back-lit points return a zero sample") {
    ShadePoint p = default_point();
    BRDFSample s = eval_brdf(p, Vec3(0, 0, -1));
    CHECK(s.diffuse.norm() == 0.0);
    CHECK(s.specular.norm() == 0.0);
    CHECK(s.cos_i == 0.0);
}

TEST_CASE("normal-incidence specular has the closed dielectric form") {
    // wi = wo = n = h: nh = hv = 1, D = 1/(pi a^2), Smith term 1, denom 4,
    // Fresnel collapses to F0 = 0.04 for a dielectric.
    ShadePoint p = default_point();
    BRDFSample s = eval_brdf(p, Vec3(0, 0, 1));
    const double a = 0.25;  // roughness^2
    CHECK(s.specular.x() == doctest::Approx(0.04 / (4.0 * kPi * a * a)).epsilon(1e-9));

    // Fully metallic with white albedo: F0 = 1.
    p.metallic = 1.0;
    p.albedo = Vec3(1, 1, 1);
    s = eval_brdf(p, Vec3(0, 0, 1));
    CHECK(s.specular.x() == doctest::Approx(1.0 / (4.0 * kPi * a * a)).epsilon(1e-9));
}

TEST_CASE("specular lobe is reciprocal") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        ShadePoint p;
        p.normal = Vec3(0, 0, 1);
        Vec3 wi(gauss(rng), gauss(rng), std::abs(gauss(rng)) + 0.05);
        Vec3 wo(gauss(rng), gauss(rng), std::abs(gauss(rng)) + 0.05);
        wi.normalize();
        wo.normalize();
        p.omega_o = wo;
        p.albedo = Vec3(0.6, 0.5, 0.4);
        p.metallic = 0.3;
        p.roughness = 0.2 + 0.6 * std::abs(gauss(rng)) / 3.0;
        const BRDFSample fwd = eval_brdf(p, wi);
        p.omega_o = wi;
        const BRDFSample swp = eval_brdf(p, wo);
        CHECK((fwd.specular - swp.specular).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("hemispherical energy: white furnace and Lambertian integral") {
    // 64x64 midpoint quadrature over the upper hemisphere.
    const int nt = 64, np = 64;
    auto integrate = [&](const ShadePoint& p, bool specular) {
        Vec3 total = Vec3::Zero();
        for (int it = 0; it < nt; ++it) {
            const double theta = (it + 0.5) * (kPi / 2.0) / nt;
            for (int ip = 0; ip < np; ++ip) {
                const double phi = (ip + 0.5) * (2.0 * kPi) / np;
                const Vec3 wi(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                              std::cos(theta));
                const BRDFSample s = eval_brdf(p, wi);
                const double dw = std::sin(theta) * (kPi / 2.0 / nt) * (2.0 * kPi / np);
                total += (specular ? s.specular : s.diffuse) * s.cos_i * dw;
            }
        }
        return total;
    };

    ShadePoint lam = default_point();
    lam.albedo = Vec3(0.7, 0.5, 0.3);
    const Vec3 ed = integrate(lam, false);
    CHECK(ed.x() == doctest::Approx(0.7).epsilon(0.01));
    CHECK(ed.y() == doctest::Approx(0.5).epsilon(0.01));
    CHECK(ed.z() == doctest::Approx(0.3).epsilon(0.01));

    ShadePoint metal = default_point();
    metal.metallic = 1.0;
    metal.albedo = Vec3(1, 1, 1);
    for (double r : {0.3, 0.5, 0.8}) {
        metal.roughness = r;
        const Vec3 es = integrate(metal, true);
        CHECK(es.maxCoeff() <= 1.05);  // never gains energy
        CHECK(es.minCoeff() >= 0.5);   // and most of it is accounted for
    }
}

TEST_CASE("brdf gradients match central differences") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    testing::FdReport rep;
    testing::FdOptions opt;
    opt.step = 1e-5;

    for (int trial = 0; trial < 40; ++trial) {
        ShadePoint p;
        p.normal = Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();
        Vec3 wi = (p.normal + 0.8 * Vec3(gauss(rng), gauss(rng), gauss(rng))).normalized();
        p.omega_o = (p.normal + 0.8 * Vec3(gauss(rng), gauss(rng), gauss(rng))).normalized();
        p.albedo = Vec3(uni(rng), uni(rng), uni(rng));
        p.metallic = uni(rng);
        p.roughness = 0.05 + 0.9 * uni(rng);
        const Vec3 wd(uni(rng), uni(rng), uni(rng));
        const Vec3 ws(uni(rng), uni(rng), uni(rng));
        const double wc = uni(rng);

        auto eval = [&]() {
            const BRDFSample s = eval_brdf(p, wi);
            return wd.dot(s.diffuse) + ws.dot(s.specular) + wc * s.cos_i;
        };
        const BRDFGrads g = eval_brdf_backward(p, wi, wd, ws, wc);
        const std::string tag = "trial " + std::to_string(trial);
        for (int c = 0; c < 3; ++c) {
            testing::fd_check_entry(rep, eval, &p.albedo[c], g.d_albedo[c], opt, tag + " albedo");
            testing::fd_check_entry(rep, eval, &p.normal[c], g.d_normal[c], opt, tag + " normal");
            testing::fd_check_entry(rep, eval, &p.omega_o[c], g.d_omega_o[c], opt, tag + " wo");
        }
        testing::fd_check_entry(rep, eval, &p.metallic, g.d_metallic, opt, tag + " metallic");
        testing::fd_check_entry(rep, eval, &p.roughness, g.d_roughness, opt, tag + " roughness");
    }
    CHECK_MESSAGE(rep.failed == 0, rep.worst_label, " rel err ", rep.worst_rel);
    CHECK(rep.checked >= 350);
    CHECK(rep.skip_fraction() < 0.1);
}
