// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/brdf.hpp"

#include <cmath>

namespace splatir {

namespace {

// Shared geometry of one evaluation; forward and backward use the same code so
// branch decisions (back-lit, degenerate half vector) always agree.
struct BrdfCtx {
    double ci = 0.0, co = 0.0;    // incident / outgoing cosines
    Vec3 h = Vec3::Zero();        // half vector
    double hlen = 0.0;            // |omega_i + omega_o|
    double nh = 0.0, hv = 0.0;    // n.h and h.omega_o
    double a = 0.0;               // GGX alpha = max(r, floor)^2
    double t = 0.0;               // GGX denominator core: nh^2 (a^2-1) + 1
    double D = 0.0;               // normal distribution
    double lam_i = 0.0, lam_o = 0.0;
    double G2 = 0.0;              // height-correlated Smith
    double denom = 0.0;           // max(4 ci co, clamp)
    bool denom_clamped = false;
    Vec3 F0 = Vec3::Zero(), F = Vec3::Zero();
    double one_minus_hv5 = 0.0;   // (1 - hv)^5
    bool specular_live = false;   // all positivity conditions met
    bool lit = false;             // ci > 0
};

double lambda_smith(double x, double a) {
    // x is a cosine in (0, 1]; q = a^2 (1 - x^2) / x^2.
    const double q = a * a * (1.0 / (x * x) - 1.0);
    return 0.5 * (std::sqrt(1.0 + q) - 1.0);
}

double lambda_smith_dx(double x, double a) {
    const double q = a * a * (1.0 / (x * x) - 1.0);
    return (1.0 / (4.0 * std::sqrt(1.0 + q))) * (-2.0 * a * a / (x * x * x));
}

double lambda_smith_da(double x, double a) {
    const double q = a * a * (1.0 / (x * x) - 1.0);
    return (1.0 / (4.0 * std::sqrt(1.0 + q))) * (2.0 * a * (1.0 / (x * x) - 1.0));
}

BrdfCtx make_ctx(const ShadePoint& p, const Vec3& wi) {
    BrdfCtx c;
    c.ci = p.normal.dot(wi);
    if (c.ci <= 0.0) return c;  // back-lit: everything stays zero
    c.lit = true;
    c.co = p.normal.dot(p.omega_o);

    const Vec3 s = wi + p.omega_o;
    c.hlen = s.norm();
    if (c.hlen < 1e-9 || c.co <= 0.0) return c;  // grazing-out or degenerate half vector
    c.h = s / c.hlen;
    c.nh = p.normal.dot(c.h);
    c.hv = c.h.dot(p.omega_o);
    if (c.nh <= 0.0) return c;

    c.a = std::max(p.roughness, kRoughnessFloor);
    c.a *= c.a;
    c.t = c.nh * c.nh * (c.a * c.a - 1.0) + 1.0;
    c.D = c.a * c.a / (kPi * c.t * c.t);
    c.lam_i = lambda_smith(c.ci, c.a);
    c.lam_o = lambda_smith(c.co, c.a);
    c.G2 = 1.0 / (1.0 + c.lam_i + c.lam_o);
    const double raw_denom = 4.0 * c.ci * c.co;
    c.denom_clamped = raw_denom < kSpecularDenomClamp;
    c.denom = c.denom_clamped ? kSpecularDenomClamp : raw_denom;
    c.F0 = Vec3::Constant(kDielectricF0 * (1.0 - p.metallic)) + p.metallic * p.albedo;
    const double omh = std::clamp(1.0 - c.hv, 0.0, 1.0);
    c.one_minus_hv5 = omh * omh * omh * omh * omh;
    c.F = c.F0 + (Vec3::Ones() - c.F0) * c.one_minus_hv5;
    c.specular_live = true;
    return c;
}

}  // namespace

BRDFSample eval_brdf(const ShadePoint& p, const Vec3& wi) {
    BRDFSample out;
    const BrdfCtx c = make_ctx(p, wi);
    if (!c.lit) return out;
    out.cos_i = std::min(c.ci, 1.0);
    out.diffuse = (1.0 - p.metallic) / kPi * p.albedo;
    if (c.specular_live) out.specular = c.D * c.G2 / c.denom * c.F;
    return out;
}

BRDFGrads eval_brdf_backward(const ShadePoint& p, const Vec3& wi, const Vec3& up_d,
                             const Vec3& up_s, double up_cos) {
    BRDFGrads g;
    const BrdfCtx c = make_ctx(p, wi);
    if (!c.lit) return g;

    // Diffuse lobe and the cosine output.
    g.d_albedo = (1.0 - p.metallic) / kPi * up_d;
    g.d_metallic = -p.albedo.dot(up_d) / kPi;
    if (c.ci < 1.0) g.d_normal += up_cos * wi;

    if (!c.specular_live) return g;

    const double K = c.D * c.G2 / c.denom;  // scalar factor multiplying F

    // Fresnel: F = F0 + (1 - F0)(1-hv)^5, F0 = lerp(0.04, albedo, m).
    const double dF_dF0 = 1.0 - c.one_minus_hv5;
    for (int ch = 0; ch < 3; ++ch) {
        g.d_albedo[ch] += up_s[ch] * K * dF_dF0 * p.metallic;
        g.d_metallic += up_s[ch] * K * dF_dF0 * (p.albedo[ch] - kDielectricF0);
    }
    const double sF = up_s.dot(c.F);           // upstream contracted with F
    const double sOneMinusF0 = up_s.dot(Vec3::Ones() - c.F0);
    const double omh = 1.0 - c.hv;
    const double g_hv = -5.0 * omh * omh * omh * omh * K * sOneMinusF0;

    // GGX D: dD/da = D (2/a - 4 a nh^2 / t); dD/dnh = -4 D nh (a^2-1) / t.
    const double dD_da = c.D * (2.0 / c.a - 4.0 * c.a * c.nh * c.nh / c.t);
    const double dD_dnh = -4.0 * c.D * c.nh * (c.a * c.a - 1.0) / c.t;

    // Smith G2 = 1 / (1 + lam_i + lam_o).
    const double dG2_dlam = -c.G2 * c.G2;
    const double dG2_da = dG2_dlam * (lambda_smith_da(c.ci, c.a) + lambda_smith_da(c.co, c.a));
    const double dG2_dci = dG2_dlam * lambda_smith_dx(c.ci, c.a);
    const double dG2_dco = dG2_dlam * lambda_smith_dx(c.co, c.a);

    const double common = sF / c.denom;  // d(fs)/dX = common * d(D G2)/dX - ...
    double g_a = common * (c.G2 * dD_da + c.D * dG2_da);
    const double g_nh = common * c.G2 * dD_dnh;
    double g_ci = common * c.D * dG2_dci;
    double g_co = common * c.D * dG2_dco;
    if (!c.denom_clamped) {
        const double dK_ddenom = -sF * c.D * c.G2 / (c.denom * c.denom);
        g_ci += dK_ddenom * 4.0 * c.co;
        g_co += dK_ddenom * 4.0 * c.ci;
    }

    // a = max(r, floor)^2.
    const double r_eff = std::max(p.roughness, kRoughnessFloor);
    g.d_roughness = (p.roughness >= kRoughnessFloor) ? g_a * 2.0 * r_eff : 0.0;

    // Geometry chains: ci = n.wi, co = n.wo, nh = n.h, hv = h.wo,
    // h = (wi+wo)/|wi+wo| so dh/dwo = (I - h h^T)/|s|.
    g.d_normal += g_ci * wi + g_co * p.omega_o + g_nh * c.h;
    const Vec3 Pn = (p.normal - c.h * c.nh) / c.hlen;  // (I - h h^T) n / |s|
    const Vec3 Pwo = (p.omega_o - c.h * c.hv) / c.hlen;
    g.d_omega_o += g_co * p.normal + g_nh * Pn + g_hv * (c.h + Pwo);
    return g;
}

}  // namespace splatir
