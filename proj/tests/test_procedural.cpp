#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "svfit/procedural.hpp"

using namespace svfit;

TEST(Dataset, EmptyAndDeterministic) {
    ProceduralDatasetConfig cfg;
    cfg.count = 0;
    EXPECT_TRUE(generate_procedural_dataset(cfg).empty());
    cfg.count = 12;
    cfg.resolution = 32;
    auto a = generate_procedural_dataset(cfg), b = generate_procedural_dataset(cfg);
    ASSERT_EQ(a.size(), 12u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].family, b[i].family);
        for (std::size_t k = 0; k < a[i].maps.data().size(); ++k) ASSERT_EQ(a[i].maps.data()[k], b[i].maps.data()[k]);
    }
}

TEST(Dataset, ConfigValidation) {
    ProceduralDatasetConfig cfg;
    cfg.resolution = 48;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.resolution = 64;
    cfg.mix = {0.5, 0.5, 0.5, -0.5};
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.mix = {0.5, 0.2, 0.2, 0.2};
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Dataset, InvariantsAndFamilyStatistics) {
    ProceduralDatasetConfig cfg;
    cfg.count = 1000;
    cfg.resolution = 32;
    cfg.seed = 5;
    auto data = generate_procedural_dataset(cfg);
    double sum[4] = {0, 0, 0, 0};
    int cnt[4] = {0, 0, 0, 0};
    for (const auto& s : data) {
        std::string why;
        ASSERT_TRUE(check_invariants(s.maps, &why)) << family_name(s.family) << ": " << why;
        double r = 0;
        for (float v : s.maps.plane(SvbrdfMaps<float>::kRoughness)) r += v;
        sum[static_cast<int>(s.family)] += r / s.maps.pixels();
        ++cnt[static_cast<int>(s.family)];
    }
    double mean[4];
    for (int f = 0; f < 4; ++f) {
        ASSERT_GT(cnt[f], 100) << family_name(static_cast<Family>(f));
        mean[f] = sum[f] / cnt[f];
    }
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b)
            EXPECT_GT(std::abs(mean[a] - mean[b]), 0.05)
                << family_name(static_cast<Family>(a)) << " vs " << family_name(static_cast<Family>(b));
}

TEST(Augment, IdentityAndBlendEndpoints) {
    std::mt19937_64 rng(3);
    auto a = generate_family(Family::tiles, 16, rng);
    auto b = generate_family(Family::blobs, 16, rng);
    AugmentParams id;
    auto same = apply_augment(a, id);
    for (std::size_t i = 0; i < a.data().size(); ++i) EXPECT_NEAR(same.data()[i], a.data()[i], 1e-6);
    auto first = apply_augment(a, id, &b);  // blend weight 1 keeps the first parent
    for (std::size_t i = 0; i < a.data().size(); ++i) EXPECT_NEAR(first.data()[i], a.data()[i], 1e-6);
}

TEST(Augment, BlendedMapsAreValid) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 50; ++i) {
        auto a = generate_family(static_cast<Family>(i % 4), 16, rng);
        auto b = generate_family(static_cast<Family>((i + 1) % 4), 16, rng);
        auto m = augment(a, 100 + i, &b, {.min_crop = 0.5, .rotate = true, .blend_prob = 1.0});
        std::string why;
        ASSERT_TRUE(check_invariants(m, &why)) << why;
    }
}

TEST(Augment, RotationCarriesNormals) {
    // A tilted plane: rotating the image by 90 degrees must rotate the stored
    // normal the same way as the recomputed height-field normal.
    const int res = 16;
    SvbrdfMaps<float> m = SvbrdfMaps<float>::constant(res, res, {0.5f, 0.5f, 0.5f}, 0.3f, 0.0f, 0.5f,
                                                      {0.04f, 0.04f, 0.04f});
    AugmentParams p;
    p.rotation = 1;
    auto r = apply_augment(m, p);
    // Source normal leans toward +x. A pixel at output (u,v) reads source
    // (v, 1-u), so source +x becomes output -y on the surface.
    EXPECT_NEAR(r.at(3, 5, 5), 0.0, 1e-6);
    EXPECT_NEAR(r.at(4, 5, 5), -0.3, 1e-6);
    p.rotation = 0;
    p.flip = true;
    auto f = apply_augment(m, p);
    EXPECT_NEAR(f.at(3, 5, 5), -0.3, 1e-6);
}
