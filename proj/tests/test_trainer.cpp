#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "svfit/trainer.hpp"

using namespace svfit;
using ad::Tensor;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.generator = GeneratorConfig::tiny();
    cfg.discriminator = DiscriminatorConfig::mirror(cfg.generator);
    cfg.dataset.count = 64;
    cfg.dataset.resolution = cfg.generator.resolution();
    cfg.batch = 4;
    cfg.steps = 10;
    cfg.seed = 3;
    return cfg;
}

DiscriminatorWeights<double> tiny_disc(std::uint64_t seed) {
    DiscriminatorConfig c;
    c.resolution = 8;
    c.channels = {4, 5};
    c.hidden = 6;
    return DiscriminatorWeights<double>::init(c, seed);
}

std::vector<float> flat(const std::vector<Tensor<float>>& ps) {
    std::vector<float> v;
    for (const auto& p : ps) v.insert(v.end(), p.data().begin(), p.data().end());
    return v;
}

}  // namespace

TEST(Discriminator, ShapesAndErrors) {
    auto d = tiny_disc(1);
    std::mt19937_64 rng(1);
    auto x = gradcheck::randn({3, 9, 8, 8}, rng, 1.0, false);
    EXPECT_EQ(disc_forward(d, x).shape(), (ad::Shape{3, 1, 1, 1}));
    EXPECT_THROW(disc_forward(d, gradcheck::randn({1, 9, 16, 16}, rng, 1.0, false)), ad::ShapeError);
    DiscriminatorConfig bad;
    bad.resolution = 32;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(R1, ValueMatchesFiniteDifferenceInputGradient) {
    auto d = tiny_disc(2);
    std::mt19937_64 rng(2);
    auto x = gradcheck::randn({2, 9, 8, 8}, rng, 0.5, false);
    double r1 = r1_penalty(d, x, 0.0);
    // Oracle: central differences of sum_n D(x_n) in every input coordinate.
    d.set_requires_grad(false);
    double sq = 0;
    std::vector<double> base(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto p = base, q = base;
        p[i] += 1e-6;
        q[i] -= 1e-6;
        double fp = ad::sum(disc_forward(d, Tensor<double>::from(x.shape(), p))).item();
        double fq = ad::sum(disc_forward(d, Tensor<double>::from(x.shape(), q))).item();
        double g = (fp - fq) / 2e-6;
        sq += g * g;
    }
    d.set_requires_grad(true);
    EXPECT_NEAR(r1, sq / 2, 1e-6 * sq);
}

TEST(R1, FusedParameterGradientMatchesFiniteDifferences) {
    auto d = tiny_disc(3);
    std::mt19937_64 rng(3);
    auto x = gradcheck::randn({2, 9, 8, 8}, rng, 0.5, false);
    for (auto p : d.parameters()) p.zero_grad();
    r1_penalty(d, x, 1.0);
    auto params = d.parameters();
    std::mt19937_64 pick(5);
    int probes = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        // Biases do not enter the input gradient of a piecewise-linear D.
        std::vector<double> g(params[k].size(), 0.0);
        if (params[k].has_grad()) g.assign(params[k].grad().begin(), params[k].grad().end());
        for (int t = 0; t < 6; ++t) {
            std::size_t i = pick() % params[k].size();
            auto p = params[k];
            double orig = p.data()[i];
            p.mutable_data()[i] = orig + 1e-5;
            double fp = r1_penalty(d, x, 0.0);
            p.mutable_data()[i] = orig - 1e-5;
            double fm = r1_penalty(d, x, 0.0);
            p.mutable_data()[i] = orig;
            double fd = (fp - fm) / 2e-5;
            EXPECT_NEAR(g[i], fd, 1e-3 * std::max(std::abs(fd), 1e-2 * r1_penalty(d, x, 0.0)))
                << "param " << k << " element " << i;
            ++probes;
        }
    }
    EXPECT_GE(probes, 30);
}

TEST(GanStep, UpdatesBothNetworks) {
    auto cfg = tiny_config();
    auto st = TrainState::init(cfg);
    auto data = generate_procedural_dataset(cfg.dataset);
    auto g0 = flat(st.gen.parameters()), d0 = flat(st.disc.parameters());
    auto real = real_batch(data, cfg.batch, cfg.dataset.augment, st.rng);
    auto log = gan_train_step(st, cfg, real);
    EXPECT_TRUE(std::isfinite(log.loss_g));
    EXPECT_TRUE(std::isfinite(log.loss_d));
    auto g1 = flat(st.gen.parameters()), d1 = flat(st.disc.parameters());
    double dg = 0, dd = 0;
    for (std::size_t i = 0; i < g0.size(); ++i) dg += std::pow(g1[i] - g0[i], 2);
    for (std::size_t i = 0; i < d0.size(); ++i) dd += std::pow(d1[i] - d0[i], 2);
    EXPECT_GT(dg, 0.0);
    EXPECT_GT(dd, 0.0);
    EXPECT_EQ(st.step, 1);
}

TEST(GanStep, NonFiniteAborts) {
    auto cfg = tiny_config();
    auto st = TrainState::init(cfg);
    auto data = generate_procedural_dataset(cfg.dataset);
    st.disc.out_b.mutable_data()[0] = NAN;
    auto real = real_batch(data, cfg.batch, cfg.dataset.augment, st.rng);
    try {
        gan_train_step(st, cfg, real);
        FAIL() << "expected a divergence error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
    }
}

TEST(GanStep, StrongR1ShrinksInputGradients) {
    auto cfg = tiny_config();
    cfg.r1_gamma = 1000;
    cfg.r1_interval = 1;
    cfg.dataset.count = 8;
    cfg.steps = 200;
    cfg.log_every = 1;
    std::vector<double> r1;
    train(cfg, nullptr, [&](const StepLog& l) { r1.push_back(l.r1); });
    ASSERT_EQ(r1.size(), 200u);
    double early = 0, late = 0;
    for (int i = 0; i < 10; ++i) {
        early += r1[i];
        late += r1[190 + i];
    }
    EXPECT_LT(late, early);
}

TEST(Train, SmokeMetricsAndResume) {
    auto dir = std::filesystem::temp_directory_path() / "svfit_train_test";
    std::filesystem::create_directories(dir);
    auto cfg = tiny_config();
    cfg.steps = 100;
    cfg.metrics_path = (dir / "metrics.csv").string();
    std::filesystem::remove(cfg.metrics_path);
    auto full = train(cfg);
    std::ifstream is(cfg.metrics_path);
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) {
        ++lines;
        int commas = static_cast<int>(std::count(line.begin(), line.end(), ','));
        ASSERT_EQ(commas, 3) << line;
        std::istringstream ls(line);
        double v;
        char c;
        ls >> v;
        for (int k = 0; k < 3; ++k) {
            ls >> c >> v;
            ASSERT_TRUE(std::isfinite(v)) << line;
        }
    }
    EXPECT_EQ(lines, 100);

    // 20 straight steps vs 10 + checkpoint + reload + 10.
    auto c2 = tiny_config();
    c2.steps = 20;
    auto straight = train(c2);
    c2.steps = 10;
    c2.checkpoint_path = (dir / "ckpt.svt").string();
    c2.checkpoint_every = 10;
    train(c2);
    auto resumed = load_checkpoint(c2, c2.checkpoint_path);
    EXPECT_EQ(resumed.step, 10);
    c2.steps = 20;
    c2.checkpoint_path.clear();
    auto finished = train(c2, &resumed);
    auto a = flat(straight.gen.parameters()), b = flat(finished.gen.parameters());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << i;
    auto da = flat(straight.disc.parameters()), db = flat(finished.disc.parameters());
    for (std::size_t i = 0; i < da.size(); ++i) ASSERT_EQ(da[i], db[i]) << i;
    std::filesystem::remove_all(dir);
}
