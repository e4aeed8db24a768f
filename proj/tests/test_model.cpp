#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "pagty/checkpoint.hpp"
#include "pagty/loss.hpp"
#include "pagty/model.hpp"
#include "pagty/train.hpp"

using namespace pagty;

namespace {

ModelConfig with_flags(ModelConfig c, bool pyr, bool pvt, bool vit) {
    c.flags = {pyr, pvt, vit};
    return c;
}

std::int64_t params_of(const ModelConfig& c) {
    auto m = build_model(c);
    return parameter_count(m);
}

bool has_name_containing(const std::vector<std::string>& names, const std::string& needle) {
    for (const auto& n : names)
        if (n.find(needle) != std::string::npos) return true;
    return false;
}

std::string serialize(const Checkpoint& ck) {
    std::ostringstream os(std::ios::binary);
    write_checkpoint(os, ck);
    return os.str();
}

}  // namespace

TEST(Model, ToyForwardShape) {
    torch::manual_seed(0);
    auto m = build_model(ModelConfig::toy());
    torch::NoGradGuard ng;
    EXPECT_EQ(m->forward(torch::randn({1, 3, 64, 64})).sizes(), (std::vector<std::int64_t>{1, 3, 64, 64}));
}

TEST(Model, FullScaleNineClasses) {
    torch::manual_seed(1);
    auto m = build_model(ModelConfig::full(9));
    m->eval();
    torch::NoGradGuard ng;
    EXPECT_EQ(m->forward(torch::randn({2, 3, 224, 224})).sizes(), (std::vector<std::int64_t>{2, 9, 224, 224}));
}

TEST(Model, SoftmaxSumsToOne) {
    torch::manual_seed(2);
    auto m = build_model(ModelConfig::toy(3));
    torch::NoGradGuard ng;
    auto p = torch::softmax(m->forward(torch::randn({2, 3, 64, 64})).to(torch::kFloat64), 1).sum(1);
    EXPECT_LE((p - 1.0).abs().max().item<double>(), 1e-6);
}

TEST(Model, OtherInputSizesAndChannels) {
    auto c = ModelConfig::toy(2);
    c.input_size = {96, 128};
    c.in_channels = 1;
    auto m = build_model(c);
    torch::NoGradGuard ng;
    EXPECT_EQ(m->forward(torch::randn({1, 1, 96, 128})).sizes(), (std::vector<std::int64_t>{1, 2, 96, 128}));
    EXPECT_THROW(m->forward(torch::randn({1, 1, 64, 64})), ShapeError);
}

TEST(Model, InvalidConfigsRejected) {
    auto c = ModelConfig::toy();
    c.input_size = {80, 64};
    EXPECT_THROW(build_model(c), ConfigError);
    c = ModelConfig::toy();
    c.num_classes = 0;
    EXPECT_THROW(build_model(c), ConfigError);
    EXPECT_THROW(build_model(with_flags(ModelConfig::toy(), false, false, true)), ConfigError);
    c = ModelConfig::toy();
    c.vit.heads = 3;
    EXPECT_THROW(build_model(c), ConfigError);
}

TEST(Loss, PeakedLogitsGiveSmallLoss) {
    auto target = torch::randint(0, 3, {2, 8, 8}, torch::kLong);
    auto logits = torch::nn::functional::one_hot(target, 3).permute({0, 3, 1, 2}).to(torch::kFloat32) * 40.0;
    EXPECT_LT(compute_loss(logits, target).item<double>(), 0.01);
}

TEST(Loss, UniformLogitsCrossEntropyIsLn2) {
    auto target = torch::tensor({0, 1, 0, 1}, torch::kLong).reshape({1, 2, 2});
    auto terms = compute_loss_terms(torch::zeros({1, 2, 2, 2}), target);
    EXPECT_NEAR(terms.cross_entropy.item<double>(), std::log(2.0), 1e-6);
}

TEST(Loss, DiceTermMatchesDefinition) {
    auto target = torch::tensor({0, 1, 1, 1}, torch::kLong).reshape({1, 2, 2});
    auto one_hot = torch::nn::functional::one_hot(target, 2).permute({0, 3, 1, 2}).to(torch::kFloat64);
    EXPECT_DOUBLE_EQ(soft_dice_loss(one_hot, one_hot, 1.0).item<double>(), 0.0);
    // uniform probabilities: class 0 (2*0.5+1)/(2+1+1) = 0.5, class 1 (2*1.5+1)/(2+3+1) = 2/3
    auto uniform = torch::full({1, 2, 2, 2}, 0.5, torch::kFloat64);
    EXPECT_NEAR(soft_dice_loss(uniform, one_hot, 1.0).item<double>(), 1.0 - (0.5 + 2.0 / 3.0) / 2.0, 1e-12);
}

TEST(Loss, OutOfRangeTargetIsDataError) {
    auto target = torch::tensor({0, 3, 1, 1}, torch::kLong).reshape({1, 2, 2});
    EXPECT_THROW(compute_loss(torch::zeros({1, 3, 2, 2}), target), DataError);
    EXPECT_THROW(compute_loss(torch::zeros({1, 3, 2, 2}), torch::zeros({1, 4, 4}, torch::kLong)), ShapeError);
}

TEST(Ablation, ParameterCountsStrictlyDecrease) {
    const auto base = ModelConfig::toy();
    const auto all = params_of(base);
    EXPECT_GT(all, params_of(with_flags(base, false, true, true)));
    EXPECT_GT(all, params_of(with_flags(base, true, false, true)));
    EXPECT_GT(all, params_of(with_flags(base, true, true, false)));
    EXPECT_GT(params_of(with_flags(base, true, true, false)), 0);
}

TEST(Ablation, FourRowsBuildAndRun) {
    torch::NoGradGuard ng;
    for (const auto& [label, flags] : ablation_rows()) {
        auto c = ModelConfig::toy();
        c.flags = flags;
        auto m = build_model(c);
        EXPECT_EQ(m->forward(torch::randn({1, 3, 64, 64})).sizes(), (std::vector<std::int64_t>{1, 3, 64, 64})) << label;
    }
}

TEST(Ablation, DisabledBranchParametersAbsent) {
    auto no_pyr = build_model(with_flags(ModelConfig::toy(), false, true, true));
    auto names = parameter_names(*no_pyr);
    EXPECT_FALSE(has_name_containing(names, "pconvb"));
    EXPECT_FALSE(has_name_containing(names, "ag_pyramid_main"));
    EXPECT_TRUE(has_name_containing(names, "ag_main_transformer"));

    auto no_pvt = build_model(with_flags(ModelConfig::toy(), true, false, true));
    names = parameter_names(*no_pvt);
    EXPECT_FALSE(has_name_containing(names, "encoder.pvt."));
    EXPECT_FALSE(has_name_containing(names, "ag_main_transformer"));
    EXPECT_TRUE(has_name_containing(names, "pconvb1"));

    auto no_vit = build_model(with_flags(ModelConfig::toy(), true, true, false));
    names = parameter_names(*no_vit);
    EXPECT_FALSE(has_name_containing(names, "encoder.vit."));

    auto all = parameter_names(*build_model(ModelConfig::toy()));
    for (const char* n : {"encoder.vit.", "encoder.pvt.", "pconvb4", "ag_pyramid_main", "ag_main_transformer"})
        EXPECT_TRUE(has_name_containing(all, n)) << n;
}

TEST(Ablation, NoPyramidResizeWhenPyramidOff) {
    auto m = build_model(with_flags(ModelConfig::toy(), false, true, true));
    torch::NoGradGuard ng;
    auto [logits, enc] = m->forward_with_features(torch::randn({1, 3, 64, 64}));
    EXPECT_FALSE(enc.pyramid.has_value());
    EXPECT_TRUE(m->encoder->pconvb.empty());
}

TEST(Gradients, EveryLiveParameterReceivesGradientForAllRows) {
    for (const auto& [label, flags] : ablation_rows()) {
        torch::manual_seed(3);
        auto c = ModelConfig::toy();
        c.flags = flags;
        auto m = build_model(c);
        auto logits = m->forward(torch::randn({2, 3, 64, 64}));
        compute_loss(logits, torch::randint(0, 3, {2, 64, 64}, torch::kLong)).backward();
        for (const auto& p : m->named_parameters()) {
            ASSERT_TRUE(p.value().grad().defined()) << label << ": " << p.key();
            EXPECT_TRUE(torch::isfinite(p.value().grad()).all().item<bool>()) << label << ": " << p.key();
        }
    }
}

TEST(SkipModes, TwoLevelsWiring) {
    auto c = ModelConfig::toy();
    c.skip_mode = SkipMode::two_levels;
    EXPECT_EQ(decoder_skip_channels(c, 0), 0);
    EXPECT_EQ(decoder_skip_channels(c, 1), 16);
    EXPECT_EQ(decoder_skip_channels(c, 2), 32);
    EXPECT_EQ(decoder_skip_channels(c, 3), 0);
    auto m = build_model(c);
    torch::NoGradGuard ng;
    EXPECT_EQ(m->forward(torch::randn({1, 3, 64, 64})).sizes(), (std::vector<std::int64_t>{1, 3, 64, 64}));
    EXPECT_LT(parameter_count(m), params_of(ModelConfig::toy()));
}

TEST(SkipModes, DualFeatureChannels) {
    auto c = ModelConfig::toy();
    EXPECT_EQ(decoder_skip_channels(c, 0), 16);
    EXPECT_EQ(decoder_skip_channels(c, 1), (16 + 16) + 16);
    EXPECT_EQ(decoder_skip_channels(c, 3), (32 + 64) + 64);
}

TEST(Normalization, InputStatsBuffersApplied) {
    auto c = ModelConfig::toy();
    c.input_mean = {0.5, 0.5, 0.5};
    c.input_std = {0.25, 0.25, 0.25};
    torch::manual_seed(4);
    auto with_stats = build_model(c);
    auto plain_cfg = ModelConfig::toy();
    torch::manual_seed(4);
    auto plain = build_model(plain_cfg);
    with_stats->eval();
    plain->eval();
    torch::NoGradGuard ng;
    auto x = torch::rand({1, 3, 64, 64});
    EXPECT_TRUE(torch::allclose(with_stats->forward(x), plain->forward((x - 0.5) / 0.25), 1e-5, 1e-5));
}

TEST(Checkpoint, RoundTripIsBitExact) {
    torch::manual_seed(5);
    auto c = ModelConfig::toy();
    c.input_mean = {0.1, 0.2, 0.3};
    c.input_std = {1.0, 2.0, 3.0};
    auto m = build_model(c);
    {
        // move batch-norm statistics away from their defaults
        auto x = torch::randn({2, 3, 64, 64});
        torch::NoGradGuard ng;
        m->forward(x);
    }
    m->eval();
    auto ck = capture(m, 7);
    ck.metadata = {{"note", "x"}};
    ck.rng_state = "rng";
    const auto path = std::filesystem::temp_directory_path() / "pagty_test_roundtrip.ckpt";
    save_checkpoint(ck, path);
    auto loaded = load_checkpoint(path);
    EXPECT_EQ(loaded.config, c);
    EXPECT_EQ(loaded.epoch, 7);
    EXPECT_EQ(loaded.metadata, ck.metadata);
    auto m2 = model_from_checkpoint(loaded);
    m2->eval();
    torch::NoGradGuard ng;
    auto x = torch::randn({2, 3, 64, 64});
    EXPECT_TRUE(torch::equal(m->forward(x), m2->forward(x)));
    EXPECT_EQ(serialize(capture(m2, 7)).size(), serialize(capture(m, 7)).size());
    auto a = capture(m, 7), b = capture(m2, 7);
    EXPECT_EQ(serialize(a), serialize(b));
    std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptInputsAreDataErrors) {
    auto m = build_model(ModelConfig::toy());
    const auto bytes = serialize(capture(m));
    {
        std::istringstream is("NOTACKPT" + bytes.substr(8));
        EXPECT_THROW(read_checkpoint(is), DataError);
    }
    {
        std::istringstream is(bytes.substr(0, bytes.size() / 2));
        EXPECT_THROW(read_checkpoint(is), DataError);
    }
    {
        auto ck = capture(m);
        ck.arrays.pop_back();
        EXPECT_THROW(model_from_checkpoint(ck), DataError);
    }
    {
        auto ck = capture(m);
        ck.arrays.front().value = torch::zeros({1});
        EXPECT_THROW(model_from_checkpoint(ck), DataError);
    }
    EXPECT_THROW(load_checkpoint("/nonexistent/pagty.ckpt"), DataError);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
    auto c = ModelConfig::toy();
    c.flags.vit = false;
    c.dag_wiring = DagWiring::pyramid_gates;
    c.skip_mode = SkipMode::two_levels;
    auto j = to_json(c);
    EXPECT_EQ(model_config_from_json(j), c);
    EXPECT_EQ(canonical_text(to_json(model_config_from_json(j))), canonical_text(j));
    j["extra"] = 1;
    EXPECT_THROW(model_config_from_json(j), ConfigError);
    EXPECT_THROW(model_config_from_json({{"skip_mode", "three"}}), ConfigError);
    EXPECT_THROW(model_config_from_json({{"base_width", "wide"}}), ConfigError);
    EXPECT_THROW(model_config_from_json({{"flags", {{"cnn", false}}}}), ConfigError);
}

TEST(Config, ChannelSchedules) {
    auto f = ModelConfig::full();
    EXPECT_EQ(f.level_width(1), 64);
    EXPECT_EQ(f.level_width(4), 512);
    EXPECT_EQ(f.token_grid(), (Size2{14, 14}));
    EXPECT_EQ(f.bottleneck_concat_channels(), 768);
    EXPECT_EQ(ModelConfig::toy().token_grid(), (Size2{4, 4}));
}
