#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "svfit/material.hpp"

using namespace svfit;

TEST(DecodeNormal, FlatAndBoundary) {
    auto n = decode_normal(0.0, 0.0);
    EXPECT_DOUBLE_EQ(n.x, 0.0);
    EXPECT_DOUBLE_EQ(n.y, 0.0);
    EXPECT_DOUBLE_EQ(n.z, 1.0);
    auto b = decode_normal(1.0, 0.0);
    EXPECT_NEAR(b.x, 1.0, 1e-12);
    EXPECT_NEAR(b.z, 0.0, 1e-12);
}

TEST(DecodeNormal, OutsideDiskIsProjected) {
    auto n = decode_normal(0.9, 0.9);
    auto ref = oracle::normal_from_xy(0.9, 0.9);
    EXPECT_NEAR(n.x, ref[0], 1e-12);
    EXPECT_NEAR(n.y, ref[1], 1e-12);
    EXPECT_NEAR(n.z, ref[2], 1e-12);
    EXPECT_NEAR(n.x, 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(DecodeNormal, AlwaysUnitAndUpward) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 10000; ++i) {
        auto n = decode_normal(u(rng), u(rng));
        EXPECT_NEAR(length(n), 1.0, 1e-6);
        EXPECT_GE(n.z, 0.0);
    }
}

TEST(Ggx, ClosedFormValues) {
    EXPECT_NEAR(ggx_ndf(1.0, 1.0), 1.0 / kPi, 1e-12);
    EXPECT_NEAR(ggx_ndf(0.0, 0.5), 0.25 / kPi, 1e-12);
    EXPECT_NEAR(ggx_ndf(0.9, 0.25), oracle::ggx_d(0.9, 0.25), 1e-10);
}

TEST(Ggx, ProjectedAreaNormalizes) {
    std::mt19937_64 rng(11);
    for (double alpha : {0.1, 0.3, 1.0}) {
        double est = oracle::ggx_projected_integral(alpha, 1000000, rng);
        EXPECT_NEAR(est, 1.0, 0.02) << "alpha=" << alpha;
        // The library's D must agree with the oracle pointwise too.
        for (double mu : {0.05, 0.5, 0.99}) EXPECT_NEAR(ggx_ndf(mu, alpha), oracle::ggx_d(mu, alpha), 1e-9);
    }
}

TEST(Smith, Limits) {
    for (double a : {0.05, 0.5, 1.0}) EXPECT_NEAR(smith_g(1.0, 1.0, a), 1.0, 1e-12);
    for (double c : {0.1, 0.5, 1.0}) EXPECT_NEAR(smith_g(c, c, 1e-9), 1.0, 1e-9);
    double ref = oracle::ggx_g1(0.5, 0.3) * oracle::ggx_g1(0.7, 0.3);
    EXPECT_NEAR(smith_g(0.5, 0.7, 0.3), ref, 1e-12);
}

TEST(Fresnel, Schlick) {
    Vec3d f0{0.2, 0.5, 0.9};
    auto a = fresnel_schlick(1.0, f0);
    EXPECT_DOUBLE_EQ(a.x, 0.2);
    EXPECT_DOUBLE_EQ(a.z, 0.9);
    auto b = fresnel_schlick(0.0, f0);
    EXPECT_DOUBLE_EQ(b.x, 1.0);
    EXPECT_DOUBLE_EQ(b.y, 1.0);
    auto c = fresnel_schlick(0.5, Vec3d{0.04, 0.04, 0.04});
    EXPECT_NEAR(c.x, 0.07, 1e-15);
}

namespace {

ShadingPoint<double> random_point(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto hemi = [&] {
        double z = 0.05 + 0.95 * u(rng), phi = 2 * kPi * u(rng);
        double r = std::sqrt(1 - z * z);
        return Vec3d{r * std::cos(phi), r * std::sin(phi), z};
    };
    ShadingPoint<double> p;
    p.albedo = {u(rng), u(rng), u(rng)};
    p.specular = {u(rng), u(rng), u(rng)};
    p.roughness = kRoughnessMin + (1 - kRoughnessMin) * u(rng);
    p.normal = decode_normal(0.6 * (u(rng) - 0.5), 0.6 * (u(rng) - 0.5));
    p.wi = hemi();
    p.wo = hemi();
    return p;
}

}  // namespace

TEST(Brdf, LambertianAndSpecularPeak) {
    ShadingPoint<double> p;
    p.albedo = {0.3, 0.6, 0.9};
    p.specular = {0, 0, 0};
    p.roughness = 0.5;
    p.normal = p.wi = p.wo = {0, 0, 1};
    auto f = brdf_eval(p);
    EXPECT_NEAR(f.x, 0.3 / kPi, 1e-12);
    EXPECT_NEAR(f.z, 0.9 / kPi, 1e-12);

    p.albedo = {0, 0, 0};
    p.specular = {0.04, 0.5, 1.0};
    for (double r : {0.1, 0.4, 0.9}) {
        p.roughness = r;
        double a = r * r;
        auto s = brdf_eval(p);
        EXPECT_NEAR(s.x, 0.04 / (4 * kPi * a * a), 1e-9 * s.x);
        EXPECT_NEAR(s.y, 0.5 / (4 * kPi * a * a), 1e-9 * s.y);
    }
}

TEST(Brdf, MatchesScalarOracle) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 2000; ++i) {
        auto p = random_point(rng);
        auto f = brdf_eval(p);
        auto ref = oracle::brdf({p.albedo.x, p.albedo.y, p.albedo.z}, {p.normal.x, p.normal.y, p.normal.z},
                                p.roughness, {p.specular.x, p.specular.y, p.specular.z}, {p.wi.x, p.wi.y, p.wi.z},
                                {p.wo.x, p.wo.y, p.wo.z});
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(f[c], ref[c], 1e-6 * std::max(1.0, std::abs(ref[c])));
    }
}

TEST(Brdf, ReciprocalNonNegativeFinite) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 5000; ++i) {
        auto p = random_point(rng);
        auto f = brdf_eval(p);
        std::swap(p.wi, p.wo);
        auto g = brdf_eval(p);
        for (int c = 0; c < 3; ++c) {
            EXPECT_LT(std::abs(f[c] - g[c]), 1e-9);
            EXPECT_GE(f[c], 0.0);
            EXPECT_TRUE(std::isfinite(f[c]));
        }
    }
}

TEST(Brdf, BelowHorizonIsBlack) {
    ShadingPoint<double> p;
    p.albedo = {1, 1, 1};
    p.specular = {1, 1, 1};
    p.roughness = 0.5;
    p.normal = {0, 0, 1};
    p.wi = {0, 0, -1};
    p.wo = {0, 0, 1};
    auto f = brdf_eval(p);
    EXPECT_EQ(f.x, 0.0);
}

TEST(SvbrdfMaps, InvariantChecks) {
    auto m = SvbrdfMaps<double>::constant(4, 3, {0.5, 0.5, 0.5}, 0.0, 0.0, 0.5, {0.04, 0.04, 0.04});
    EXPECT_EQ(SvbrdfMaps<double>::kChannels, 9);
    EXPECT_TRUE(check_invariants(m));
    std::string why;
    m.at(SvbrdfMaps<double>::kRoughness, 1, 1) = 0.001;
    EXPECT_FALSE(check_invariants(m, &why));
    EXPECT_NE(why.find("roughness"), std::string::npos);
    m.at(SvbrdfMaps<double>::kRoughness, 1, 1) = 0.5;
    m.at(SvbrdfMaps<double>::kNormal, 0, 0) = 0.9;
    m.at(SvbrdfMaps<double>::kNormal + 1, 0, 0) = 0.9;
    EXPECT_FALSE(check_invariants(m, &why));
    m.at(SvbrdfMaps<double>::kNormal, 0, 0) = NAN;
    EXPECT_FALSE(check_invariants(m, &why));
}
