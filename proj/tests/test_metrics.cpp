#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pagty/metrics.hpp"

using namespace pagty::metrics;

namespace {

BinaryMask from_bits(unsigned bits, int h = 3, int w = 3) {
    BinaryMask m(h, w);
    for (int i = 0; i < h * w; ++i) m.px[i] = (bits >> i) & 1u;
    return m;
}

BinaryMask single_pixel(int h, int w, int y, int x) {
    BinaryMask m(h, w);
    m.at(y, x) = 1;
    return m;
}

LabelMap label_map(int h, int w, std::initializer_list<std::int32_t> values) {
    LabelMap m(h, w);
    std::copy(values.begin(), values.end(), m.labels.begin());
    return m;
}

}  // namespace

TEST(Dice, IdenticalNonEmptyIsOne) {
    auto a = from_bits(0b101010101);
    EXPECT_EQ(dice(a, a), 1.0);
}

TEST(Dice, DisjointIsZero) {
    EXPECT_EQ(dice(from_bits(0b000000111), from_bits(0b111000000)), 0.0);
}

TEST(Dice, HalfOverlapIsHalf) {
    // |A| = |B| = 4, |A∩B| = 2
    BinaryMask a(4, 4), b(4, 4);
    a.at(0, 0) = a.at(0, 1) = a.at(0, 2) = a.at(0, 3) = 1;
    b.at(0, 2) = b.at(0, 3) = b.at(1, 0) = b.at(1, 1) = 1;
    EXPECT_DOUBLE_EQ(dice(a, b), 0.5);
    EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 3.0);
}

TEST(Dice, BothEmptyIsOne) {
    BinaryMask a(5, 5);
    EXPECT_EQ(dice(a, a), 1.0);
    EXPECT_EQ(iou(a, a), 1.0);
}

TEST(Dice, ShapeMismatchThrows) {
    EXPECT_THROW(dice(BinaryMask(3, 3), BinaryMask(3, 4)), pagty::ShapeError);
    EXPECT_THROW(iou(BinaryMask(3, 3), BinaryMask(4, 3)), pagty::ShapeError);
    EXPECT_THROW(hd95(BinaryMask(3, 3), BinaryMask(4, 3)), pagty::ShapeError);
}

TEST(Iou, IdenticalIsOne) {
    auto a = from_bits(0b011011000);
    EXPECT_EQ(iou(a, a), 1.0);
}

// All 2^9 x 2^9 pairs of 3x3 masks against a pixel-counting oracle, compared as the
// exact same rational formed from integer counts.
TEST(Oracle, ExhaustiveThreeByThreeDiceIouF1) {
    for (unsigned ab = 0; ab < 512; ++ab) {
        const auto a = from_bits(ab);
        for (unsigned bb = 0; bb < 512; ++bb) {
            const auto b = from_bits(bb);
            const auto c = oracle::count(a, b);
            const double want_dice = c.a + c.b == 0 ? 1.0 : double(2 * c.both) / double(c.a + c.b);
            const auto uni = c.a + c.b - c.both;
            const double want_iou = uni == 0 ? 1.0 : double(c.both) / double(uni);
            ASSERT_EQ(dice(a, b), want_dice) << ab << "," << bb;
            ASSERT_EQ(iou(a, b), want_iou) << ab << "," << bb;

            LabelMap pa(3, 3), gb(3, 3);
            for (int i = 0; i < 9; ++i) {
                pa.labels[i] = a.px[i];
                gb.labels[i] = b.px[i];
            }
            ASSERT_EQ(f1_micro({pa}, {gb}, 1), want_dice) << ab << "," << bb;
        }
    }
}

TEST(Property, IouDiceIdentity) {
    std::mt19937 rng(1234);
    std::uniform_int_distribution<int> side(1, 16);
    std::uniform_real_distribution<double> dens(0.05, 0.9);
    for (int trial = 0; trial < 1000; ++trial) {
        const int h = side(rng), w = side(rng);
        auto a = oracle::random_mask(rng, h, w, dens(rng));
        auto b = oracle::random_mask(rng, h, w, dens(rng));
        const double d = dice(a, b), j = iou(a, b);
        ASSERT_NEAR(j, d / (2.0 - d), 1e-12);
        ASSERT_EQ(dice(a, b), dice(b, a));
        ASSERT_EQ(iou(a, b), iou(b, a));
    }
}

TEST(F1Micro, SingleIdenticalImageIsOne) {
    auto m = label_map(2, 2, {0, 1, 1, 0});
    EXPECT_EQ(f1_micro({m}, {m}, 1), 1.0);
}

// Image 1: gt and pred share a single pixel (Dice 1). Image 2: gt has 8 pixels, pred none
// (Dice 0). Mean per-image Dice is 0.5; pooled counts are TP=1, FP=0, FN=8, so
// F1 = 2/(2+0+8) = 0.2.
TEST(F1Micro, DivergesFromMeanPerImageDice) {
    LabelMap g1(4, 4), p1(4, 4), g2(4, 4), p2(4, 4);
    g1.labels[5] = p1.labels[5] = 1;
    for (int i = 0; i < 8; ++i) g2.labels[i] = 1;

    const double per_image_mean = 0.5 * (dice(binarize(p1, 1), binarize(g1, 1)) + dice(binarize(p2, 1), binarize(g2, 1)));
    EXPECT_EQ(per_image_mean, 0.5);
    EXPECT_DOUBLE_EQ(f1_micro({p1, p2}, {g1, g2}, 1), 0.2);
}

TEST(F1Micro, AllBackgroundPredictionIsZero) {
    LabelMap g(4, 4), p(4, 4);
    g.labels[3] = g.labels[7] = 1;
    EXPECT_EQ(f1_micro({p, p}, {g, g}, 1), 0.0);
}

TEST(F1Micro, EmptyListThrows) {
    EXPECT_THROW(f1_micro({}, {}, 1), pagty::DataError);
}

TEST(Hd95, IdenticalMasksAreZero) {
    auto a = from_bits(0b110011001, 3, 3);
    EXPECT_EQ(hd95(a, a), 0.0);
}

TEST(Hd95, SinglePixelsAtDistanceFive) {
    auto a = single_pixel(10, 10, 1, 1), b = single_pixel(10, 10, 4, 5);
    EXPECT_EQ(hd95(a, b), 5.0);
}

TEST(Hd95, EmptyConventions) {
    BinaryMask empty(6, 8);
    auto one = single_pixel(6, 8, 2, 2);
    EXPECT_EQ(hd95(empty, empty), 0.0);
    const auto r = hd95_detail(one, empty);
    EXPECT_TRUE(r.one_empty);
    EXPECT_DOUBLE_EQ(r.value, 10.0);  // hypot(6, 8)
}

TEST(Hd95, MatchesBruteForceOracle) {
    std::mt19937 rng(99);
    std::uniform_int_distribution<int> side(1, 16);
    std::uniform_real_distribution<double> dens(0.02, 0.6);
    for (int trial = 0; trial < 200; ++trial) {
        const int h = side(rng), w = side(rng);
        auto a = oracle::random_mask(rng, h, w, dens(rng));
        auto b = oracle::random_mask(rng, h, w, dens(rng));
        ASSERT_EQ(hd95(a, b), oracle::brute_hausdorff_percentile(a, b, 0.95)) << "trial " << trial;
    }
}

TEST(Hd95, AnisotropicSpacingMatchesOracle) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto a = oracle::random_mask(rng, 12, 9, 0.15);
        auto b = oracle::random_mask(rng, 12, 9, 0.15);
        ASSERT_NEAR(hd95(a, b, {2.5, 0.7}), oracle::brute_hausdorff_percentile(a, b, 0.95, 2.5, 0.7), 1e-9);
    }
}

TEST(Hd95, SymmetricAndBoundedByHausdorff) {
    std::mt19937 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        auto a = oracle::random_mask(rng, 16, 16, 0.1);
        auto b = oracle::random_mask(rng, 16, 16, 0.1);
        ASSERT_EQ(hd95(a, b), hd95(b, a));
        ASSERT_LE(hd95(a, b), hausdorff_percentile(a, b, 1.0).value);
    }
}

TEST(Percentile, LinearInterpolation) {
    EXPECT_DOUBLE_EQ(percentile_sorted({1, 2, 3, 4}, 0.95), 3.85);
    EXPECT_DOUBLE_EQ(percentile_sorted({7}, 0.95), 7.0);
    EXPECT_DOUBLE_EQ(percentile_sorted({0, 10}, 0.5), 5.0);
}

TEST(DistanceTransform, ExactSquaredDistances) {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto m = oracle::random_mask(rng, 11, 13, 0.08);
        if (m.empty()) m.at(5, 5) = 1;
        const auto d = squared_distance_transform(m);
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 13; ++x) {
                double best = 1e300;
                for (int v = 0; v < 11; ++v)
                    for (int u = 0; u < 13; ++u)
                        if (m.at(v, u)) best = std::min(best, double((y - v) * (y - v) + (x - u) * (x - u)));
                ASSERT_EQ(d[y * 13 + x], best);
            }
    }
}

TEST(MaskBatch, OutOfRangeIdThrows) {
    MaskBatch b{{label_map(1, 2, {0, 3})}, 3};
    EXPECT_THROW(b.validate(), pagty::DataError);
}

TEST(Evaluate, PerfectPredictionsScoreOneAndZero) {
    MaskBatch g{{label_map(2, 3, {0, 1, 2, 2, 1, 0}), label_map(2, 3, {1, 1, 0, 0, 0, 2})}, 3};
    auto r = evaluate_masks(g, g);
    ASSERT_EQ(r.per_class.size(), 2u);
    for (const auto& [cls, m] : r.per_class) {
        EXPECT_EQ(m.dsc, 1.0);
        EXPECT_EQ(m.iou, 1.0);
        EXPECT_EQ(m.f1, 1.0);
        EXPECT_EQ(m.hd95, 0.0);
    }
    EXPECT_EQ(r.mean_dsc, 1.0);
    EXPECT_EQ(r.mean_hd95, 0.0);
}

TEST(Evaluate, MeansAreOverForegroundClasses) {
    MaskBatch g{{label_map(1, 4, {0, 1, 2, 2})}, 3};
    MaskBatch p{{label_map(1, 4, {0, 1, 0, 0})}, 3};
    auto r = evaluate_masks(p, g);
    EXPECT_EQ(r.per_class.at(1).dsc, 1.0);
    EXPECT_EQ(r.per_class.at(2).dsc, 0.0);
    EXPECT_DOUBLE_EQ(r.mean_dsc, 0.5);
    EXPECT_EQ(r.hd95_empty_flags, 1u);
}

TEST(Evaluate, ClassCountMismatchAndEmptyThrow) {
    MaskBatch g{{label_map(1, 2, {0, 1})}, 2};
    MaskBatch p{{label_map(1, 2, {0, 1})}, 3};
    EXPECT_THROW(evaluate_masks(p, g), pagty::DataError);
    EXPECT_THROW(evaluate_masks(MaskBatch{{}, 2}, MaskBatch{{}, 2}), pagty::DataError);
}

namespace {

MetricsReport report_with(double dsc, double hd) {
    MetricsReport r;
    r.num_classes = 2;
    r.per_class[1] = {dsc, dsc / (2 - dsc), dsc, hd};
    r.recompute_means();
    return r;
}

}  // namespace

TEST(Aggregate, SingleReportIsItselfWithZeroStd) {
    auto r = aggregate({report_with(0.7, 3.0)}, AggregationScheme::mean_per_image);
    EXPECT_DOUBLE_EQ(r.mean_dsc, 0.7);
    EXPECT_DOUBLE_EQ(r.fold_stats.at("mean_dsc").std, 0.0);
}

TEST(Aggregate, MeanAndPopulationStd) {
    auto r = aggregate({report_with(0.8, 1.0), report_with(0.9, 3.0)}, AggregationScheme::mean_per_image);
    EXPECT_NEAR(r.mean_dsc, 0.85, 1e-12);
    EXPECT_NEAR(r.fold_stats.at("mean_dsc").mean, 0.85, 1e-12);
    EXPECT_NEAR(r.fold_stats.at("mean_dsc").std, 0.05, 1e-12);
    EXPECT_NEAR(r.fold_stats.at("mean_hd95").std, 1.0, 1e-12);
}

TEST(Aggregate, ThreeRunsOfFiveFoldReducesRunMeans) {
    // run r, fold f: dsc = 0.5 + 0.1 r + 0.01 f  ->  run means 0.52, 0.62, 0.72
    std::vector<MetricsReport> leaves;
    for (int run = 0; run < 3; ++run)
        for (int fold = 0; fold < 5; ++fold) leaves.push_back(report_with(0.5 + 0.1 * run + 0.01 * fold, 1.0));
    auto r = aggregate(leaves, AggregationScheme::three_runs_of_five_fold);
    EXPECT_NEAR(r.mean_dsc, 0.62, 1e-12);
    EXPECT_NEAR(r.fold_stats.at("mean_dsc").std, std::sqrt(2.0 / 3.0) * 0.1, 1e-12);

    std::vector<MetricsReport> five(leaves.begin(), leaves.begin() + 5);
    auto f = aggregate(five, AggregationScheme::five_fold);
    EXPECT_NEAR(f.mean_dsc, 0.52, 1e-12);
    EXPECT_NEAR(f.fold_stats.at("mean_dsc").std, std::sqrt(0.0002), 1e-12);
}

TEST(Aggregate, Errors) {
    EXPECT_THROW(aggregate({}, AggregationScheme::mean_per_image), pagty::DataError);
    auto a = report_with(0.5, 1.0);
    auto b = report_with(0.5, 1.0);
    b.num_classes = 3;
    b.per_class[2] = {};
    EXPECT_THROW(aggregate({a, b}, AggregationScheme::mean_per_image), pagty::DataError);
    EXPECT_THROW(aggregate({a, a}, AggregationScheme::five_fold), pagty::DataError);
    EXPECT_THROW(parse_scheme("ten_fold"), pagty::ConfigError);
}

TEST(Emission, CsvHeaderAndRows) {
    auto r = report_with(0.5, 2.0);
    const auto csv = to_csv(r);
    EXPECT_EQ(csv, "class,dsc,iou,f1,hd95\n"
                   "1,0.500000,0.333333,0.500000,2.000000\n"
                   "mean,0.500000,0.333333,0.500000,2.000000\n");
    EXPECT_NE(to_text(r).find("mean_dsc: 0.500000"), std::string::npos);
}
