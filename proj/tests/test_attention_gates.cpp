#include <gtest/gtest.h>
#include <torch/torch.h>

#include "oracles.hpp"
#include "pagty/attention_gates.hpp"

using namespace pagty;

namespace {

void silence_psi(AttentionGate& ag) {
    torch::NoGradGuard ng;
    ag->psi->weight.zero_();
    ag->psi->bias.zero_();
}

DualAttentionGateSpec level1_spec() {
    DualAttentionGateSpec s;
    s.pyramid_channels = 64;
    s.main_channels = 64;
    s.transformer_channels = 64;
    s.target_resolution = {112, 112};
    return s;
}

}  // namespace

TEST(AttentionGate, OutputMatchesFeatureShape) {
    torch::manual_seed(0);
    AttentionGate ag(AttentionGateSpec{64, 64, 32});
    auto r = ag->forward_with_alpha(torch::randn({2, 64, 56, 56}), torch::randn({2, 64, 56, 56}));
    EXPECT_EQ(r.out.sizes(), (std::vector<std::int64_t>{2, 64, 56, 56}));
    EXPECT_EQ(r.alpha.sizes(), (std::vector<std::int64_t>{2, 1, 56, 56}));
}

TEST(AttentionGate, ZeroPsiHalvesFeatures) {
    torch::manual_seed(1);
    AttentionGate ag(AttentionGateSpec{8, 16, 4});
    silence_psi(ag);
    auto x = torch::randn({1, 16, 9, 9});
    auto r = ag->forward_with_alpha(torch::randn({1, 8, 9, 9}), x);
    EXPECT_TRUE(torch::equal(r.alpha, torch::full_like(r.alpha, 0.5)));
    EXPECT_TRUE(torch::allclose(r.out, 0.5 * x, 0.0, 0.0));
}

TEST(AttentionGate, CoefficientsStrictlyInsideUnitInterval) {
    torch::manual_seed(2);
    AttentionGate ag(AttentionGateSpec{12, 10, 0});
    EXPECT_EQ(ag->spec().resolved_inter_channels(), 8);
    for (int i = 0; i < 100; ++i) {
        auto x = torch::randn({2, 10, 7, 5});
        auto r = ag->forward_with_alpha(torch::randn({2, 12, 7, 5}), x);
        ASSERT_GT(r.alpha.min().item<float>(), 0.0f);
        ASSERT_LT(r.alpha.max().item<float>(), 1.0f);
        ASSERT_LE((r.out.abs() - x.abs()).max().item<float>(), 0.0f);
    }
}

TEST(AttentionGate, PsiBiasDrivesCoefficientToExtremes) {
    torch::manual_seed(3);
    AttentionGate ag(AttentionGateSpec{4, 4, 4});
    auto g = torch::randn({1, 4, 6, 6}), x = torch::randn({1, 4, 6, 6});
    std::vector<float> means;
    for (float bias : {-20.f, 0.f, 20.f}) {
        {
            torch::NoGradGuard ng;
            ag->psi->weight.zero_();
            ag->psi->bias.fill_(bias);
        }
        means.push_back(ag->forward_with_alpha(g, x).alpha.mean().item<float>());
    }
    EXPECT_LT(means[0], 1e-6f);
    EXPECT_FLOAT_EQ(means[1], 0.5f);
    EXPECT_GT(means[2], 1.0f - 1e-6f);
}

TEST(AttentionGate, SpatialMismatchIsShapeError) {
    AttentionGate ag(AttentionGateSpec{8, 8, 4});
    EXPECT_THROW(ag->forward(torch::randn({1, 8, 28, 28}), torch::randn({1, 8, 56, 56})), ShapeError);
    EXPECT_THROW(ag->forward(torch::randn({2, 8, 28, 28}), torch::randn({1, 8, 28, 28})), ShapeError);
    EXPECT_THROW(ag->forward(torch::randn({1, 5, 28, 28}), torch::randn({1, 8, 28, 28})), ConfigError);
}

TEST(DualAttentionGate, LevelOneExample) {
    torch::manual_seed(4);
    DualAttentionGate dag(level1_spec());
    auto y = dag->forward(torch::randn({2, 64, 112, 112}), torch::randn({2, 64, 112, 112}),
                          torch::randn({2, 64, 56, 56}));
    EXPECT_EQ(y.sizes(), (std::vector<std::int64_t>{2, 128, 112, 112}));
}

TEST(DualAttentionGate, DownsamplingUsesTwoByTwoMaxPool) {
    torch::manual_seed(5);
    auto spec = level1_spec();
    spec.pyramid_channels = spec.main_channels = spec.transformer_channels = 2;
    spec.target_resolution = {4, 4};
    DualAttentionGate dag(spec);
    silence_psi(dag->ag1);
    silence_psi(dag->ag2);
    auto main = torch::randn({1, 2, 8, 8});
    auto y = dag->forward(torch::randn({1, 2, 4, 4}), main, torch::randn({1, 2, 4, 4}));
    auto c = main.contiguous();
    for (int ch = 0; ch < 2; ++ch) {
        std::vector<float> plane(c[0][ch].data_ptr<float>(), c[0][ch].data_ptr<float>() + 64);
        const auto pooled = oracle::maxpool2x2(plane, 8, 8);
        auto got = y[0][ch].contiguous();
        for (int i = 0; i < 16; ++i) ASSERT_EQ(got.data_ptr<float>()[i], 0.5f * pooled[i]) << ch << "," << i;
    }
}

TEST(DualAttentionGate, ChannelArithmetic) {
    for (auto [m, t] : {std::pair<int, int>{64, 64}, {128, 64}, {32, 320}, {16, 8}}) {
        DualAttentionGateSpec s;
        s.pyramid_channels = 16;
        s.main_channels = m;
        s.transformer_channels = t;
        s.target_resolution = {8, 8};
        DualAttentionGate dag(s);
        auto y = dag->forward(torch::randn({1, 16, 8, 8}), torch::randn({1, m, 8, 8}), torch::randn({1, t, 4, 4}));
        EXPECT_EQ(y.size(1), m + t);
        EXPECT_EQ(s.out_channels(), m + t);
    }
}

TEST(DualAttentionGate, GradientsReachAllThreeInputs) {
    torch::manual_seed(6);
    DualAttentionGateSpec s;
    s.pyramid_channels = 4;
    s.main_channels = 6;
    s.transformer_channels = 8;
    s.target_resolution = {8, 8};
    DualAttentionGate dag(s);
    auto p = torch::randn({2, 4, 8, 8}, torch::requires_grad());
    auto m = torch::randn({2, 6, 16, 16}, torch::requires_grad());
    auto t = torch::randn({2, 8, 4, 4}, torch::requires_grad());
    dag->forward(p, m, t).sum().backward();
    for (auto* v : {&p, &m, &t}) {
        ASSERT_TRUE(v->grad().defined());
        EXPECT_GT(v->grad().abs().sum().item<float>(), 0.0f);
    }
}

TEST(DualAttentionGate, NonIntegerRatioWarns) {
    log::quiet() = true;
    DualAttentionGateSpec s;
    s.pyramid_channels = s.main_channels = s.transformer_channels = 2;
    s.target_resolution = {6, 6};
    DualAttentionGate dag(s);
    const auto before = log::warning_count().load();
    auto y = dag->forward(torch::randn({1, 2, 6, 6}), torch::randn({1, 2, 6, 6}), torch::randn({1, 2, 4, 4}));
    EXPECT_EQ(y.sizes(), (std::vector<std::int64_t>{1, 4, 6, 6}));
    EXPECT_EQ(log::warning_count().load(), before + 1);
    log::quiet() = false;
}

TEST(Resample, IdentityAndIntegerFactors) {
    auto x = torch::randn({1, 3, 8, 8});
    EXPECT_TRUE(resample_to(x, {8, 8}).is_same(x));
    const auto before = log::warning_count().load();
    EXPECT_EQ(resample_to(x, {2, 2}).sizes(), (std::vector<std::int64_t>{1, 3, 2, 2}));
    EXPECT_EQ(resample_to(x, {32, 32}).sizes(), (std::vector<std::int64_t>{1, 3, 32, 32}));
    EXPECT_EQ(log::warning_count().load(), before);
    auto up = resample_to(torch::ones({1, 1, 2, 2}), {4, 4});
    EXPECT_TRUE(torch::allclose(up, torch::ones({1, 1, 4, 4})));
}

TEST(DualAttentionGate, BatchMismatchIsShapeError) {
    DualAttentionGate dag(level1_spec());
    EXPECT_THROW(dag->forward(torch::randn({2, 64, 112, 112}), torch::randn({1, 64, 112, 112}),
                              torch::randn({1, 64, 56, 56})),
                 ShapeError);
}

TEST(DualAttentionGate, Section33WiringGatesTransformerWithPyramid) {
    torch::manual_seed(7);
    DualAttentionGateSpec s;
    s.pyramid_channels = 5;
    s.main_channels = 6;
    s.transformer_channels = 7;
    s.target_resolution = {4, 4};
    s.wiring = DagWiring::pyramid_gates;
    DualAttentionGate dag(s);
    EXPECT_EQ(dag->ag2->spec().gate_channels, 5);
    auto p = torch::randn({1, 5, 4, 4});
    auto m = torch::randn({1, 6, 4, 4});
    auto t = torch::randn({1, 7, 4, 4});
    auto y = dag->forward(p, m, t);
    auto want = dag->ag2->forward(p, t);
    EXPECT_TRUE(torch::equal(y.slice(1, 6, 13), want));

    s.wiring = DagWiring::main_gates;
    EXPECT_EQ(DualAttentionGate(s)->ag2->spec().gate_channels, 6);
    EXPECT_THROW(parse_dag_wiring("other"), ConfigError);
}

TEST(DualAttentionGate, AblatedInputs) {
    DualAttentionGateSpec s;
    s.pyramid_channels = 4;
    s.main_channels = 6;
    s.transformer_channels = 8;
    s.target_resolution = {4, 4};

    auto no_pyr = s;
    no_pyr.use_pyramid = false;
    DualAttentionGate a(no_pyr);
    EXPECT_FALSE(a->ag1);
    auto m = torch::randn({1, 6, 4, 4});
    auto y = a->forward(torch::Tensor(), m, torch::randn({1, 8, 4, 4}));
    EXPECT_EQ(y.size(1), 14);
    EXPECT_TRUE(torch::equal(y.slice(1, 0, 6), m));

    auto no_trans = s;
    no_trans.use_transformer = false;
    DualAttentionGate b(no_trans);
    EXPECT_FALSE(b->ag2);
    EXPECT_EQ(b->forward(torch::randn({1, 4, 4, 4}), m, torch::Tensor()).size(1), 6);

    auto neither = s;
    neither.use_pyramid = neither.use_transformer = false;
    EXPECT_THROW(DualAttentionGate{neither}, ConfigError);
}
