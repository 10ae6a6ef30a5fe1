#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "svfit/eval.hpp"
#include "svfit/inversion.hpp"

using namespace svfit;

namespace {

SvbrdfMaps<double> random_maps(int res, std::uint64_t seed, double spread = 1.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, spread);
    std::vector<double> raw(9 * static_cast<std::size_t>(res) * res);
    for (auto& v : raw) v = nd(rng);
    return to_maps(range_map(ad::Tensor<double>::from({1, 9, res, res}, raw)));
}

std::vector<CaptureView> with_images(std::vector<CaptureView> views, const SvbrdfMaps<double>& m) {
    for (auto& v : views) v.image = render(m, v).cast<float>();
    return views;
}

}  // namespace

TEST(MapRmse, TrivialCases) {
    auto a = random_maps(6, 1);
    auto e = map_rmse(a, a);
    EXPECT_EQ(e.albedo, 0.0);
    EXPECT_EQ(e.normal_deg, 0.0);
    EXPECT_EQ(e.overall, 0.0);
    auto flat = SvbrdfMaps<double>::constant(4, 4, {0.5, 0.5, 0.5}, 0.0, 0.0, 0.3, {0.04, 0.04, 0.04});
    auto tilt = SvbrdfMaps<double>::constant(4, 4, {0.5, 0.5, 0.5}, std::sqrt(0.5), 0.0, 0.3, {0.04, 0.04, 0.04});
    EXPECT_NEAR(map_rmse(flat, tilt).normal_deg, 45.0, 1e-9);
    EXPECT_NEAR(map_rmse(flat, tilt).normal_channel, std::sqrt(0.25), 1e-12);
    EXPECT_THROW(map_rmse(a, random_maps(5, 1)), std::invalid_argument);
}

TEST(MapRmse, MatchesLoopOracle) {
    auto a = random_maps(7, 2), b = random_maps(7, 3);
    auto e = map_rmse(a, b);
    double sa = 0, sr = 0, ss = 0, sall = 0, sang = 0;
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
            for (int c = 0; c < 9; ++c) {
                double d = a.at(c, y, x) - b.at(c, y, x);
                sall += d * d;
                if (c < 3) sa += d * d;
                if (c == 5) sr += d * d;
                if (c >= 6) ss += d * d;
            }
            auto na = oracle::normal_from_xy(a.at(3, y, x), a.at(4, y, x));
            auto nb = oracle::normal_from_xy(b.at(3, y, x), b.at(4, y, x));
            double c = std::clamp(na[0] * nb[0] + na[1] * nb[1] + na[2] * nb[2], -1.0, 1.0);
            double ang = std::acos(c) * 180 / 3.141592653589793;
            sang += ang * ang;
        }
    EXPECT_NEAR(e.albedo, std::sqrt(sa / (3 * 49)), 1e-12);
    EXPECT_NEAR(e.roughness, std::sqrt(sr / 49), 1e-12);
    EXPECT_NEAR(e.specular, std::sqrt(ss / (3 * 49)), 1e-12);
    EXPECT_NEAR(e.overall, std::sqrt(sall / (9 * 49)), 1e-12);
    EXPECT_NEAR(e.normal_deg, std::sqrt(sang / 49), 1e-6);
}

TEST(EvalFit, GroundTruthScoresZeroAndOverlapRefused) {
    auto fx = FeatureExtractor<double>::random();
    auto m = random_maps(8, 4);
    auto grid = with_images(capture_grid(1.0, 3.0, 8), m);
    std::vector<CaptureView> fit(grid.begin(), grid.begin() + 5), novel(grid.begin() + 5, grid.end());
    auto r = eval_fit(m, &m, fit, novel, fx);
    EXPECT_TRUE(r.has_ground_truth);
    EXPECT_EQ(r.maps.overall, 0.0);
    EXPECT_EQ(r.fit_view_rmse.size(), 5u);
    EXPECT_EQ(r.novel_view_rmse.size(), 4u);
    EXPECT_LT(r.fit_rmse(), 1e-6);
    EXPECT_LT(r.novel_rmse(), 1e-6);
    EXPECT_LT(r.novel_feature_distance, 1e-8);
    auto overlap = novel;
    overlap.push_back(fit[2]);
    EXPECT_THROW(eval_fit(m, &m, fit, overlap, fx), std::invalid_argument);
}

TEST(EvalFit, ReportRoundTrip) {
    auto fx = FeatureExtractor<double>::random();
    auto m = random_maps(8, 5), other = random_maps(8, 6);
    auto grid = with_images(capture_grid(1.0, 3.0, 8), m);
    auto r = eval_fit(other, &m, {grid[0], grid[1]}, {grid[4]}, fx);
    EXPECT_GT(r.novel_rmse(), 0.0);
    EXPECT_GT(r.novel_feature_distance, 0.0);
    auto back = EvalReport::from_text(r.to_text());
    EXPECT_EQ(back.to_text(), r.to_text());
    EXPECT_TRUE(back.has_ground_truth);
    EXPECT_EQ(back.novel_view_rmse[0].first, "grid_4");
    EXPECT_THROW(EvalReport::from_text("bogus=1\n"), std::runtime_error);
}

TEST(EvalFit, MoreInputViewsGeneralizeBetter) {
    // Direct fits of a glossy 16x16 material: one view vs nine views, scored
    // on two held-out lights.
    auto fx = FeatureExtractor<double>::random();
    auto truth = random_maps(16, 7, 0.6);
    for (auto& r : truth.plane(SvbrdfMaps<double>::kRoughness)) r = 0.25;
    auto grid = with_images(capture_grid(1.0, 3.0, 16), truth);
    std::vector<CaptureView> novel = with_images(
        {make_collocated_view(0.8, 3.0, 16, 0.25, -0.3), make_collocated_view(1.2, 3.0, 16, -0.4, 0.1)}, truth);
    novel[0].id = "novel_0";
    novel[1].id = "novel_1";
    FitConfig cfg;
    cfg.iterations = 300;
    LossConfig loss;
    auto one = fit_direct(std::vector<CaptureView>{grid[4]}, neutral_maps<double>(16, 16), cfg, loss, fx);
    auto nine = fit_direct(grid, neutral_maps<double>(16, 16), cfg, loss, fx);
    auto r1 = eval_fit(one.maps, &truth, {grid[4]}, novel, fx);
    auto r9 = eval_fit(nine.maps, &truth, grid, novel, fx);
    EXPECT_LE(r9.novel_rmse(), r1.novel_rmse());
}

TEST(Morph, EndpointsInvariantsAndBaselineDiffers) {
    auto g = GeneratorWeights<double>::init(GeneratorConfig::tiny(), 9);
    auto a = sample_material(g, 1), b = sample_material(g, 2);
    auto view = make_collocated_view(1.0, 3.0, a.maps.width());
    auto m = morph(g, a.latent, b.latent, 5, view);
    ASSERT_EQ(m.latent.size(), 5u);
    EXPECT_EQ(map_rmse(m.latent.front(), a.maps).overall, 0.0);
    EXPECT_EQ(map_rmse(m.latent.back(), b.maps).overall, 0.0);
    EXPECT_EQ(map_rmse(m.pixel.front(), a.maps).overall, 0.0);
    for (const auto& x : m.latent) EXPECT_TRUE(check_invariants(x));
    for (const auto& x : m.pixel) EXPECT_TRUE(check_invariants(x));
    EXPECT_GT(map_rmse(m.latent[2], m.pixel[2]).overall, 0.0);
    EXPECT_EQ(m.latent_renders.size(), 5u);
    EXPECT_THROW(morph(g, a.latent, b.latent, 1, view), std::invalid_argument);
    auto bad = b.latent;
    bad.noise.pop_back();
    EXPECT_THROW(morph(g, a.latent, bad, 3, view), ad::ShapeError);
}
