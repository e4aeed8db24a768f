#pragma once

// Segmentation metrics: Dice (DSC), IoU, micro-averaged pixel F1 (F1-S) and the 95th
// percentile Hausdorff distance (HD95), plus aggregation over images, folds and runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pagty/errors.hpp"

namespace pagty::metrics {

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> px;  // row-major, nonzero = foreground

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), px(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t& at(int y, int x) { return px[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return px[static_cast<std::size_t>(y) * width + x]; }
    bool empty() const {
        return std::none_of(px.begin(), px.end(), [](std::uint8_t v) { return v != 0; });
    }
};

struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> labels;  // row-major class ids

    LabelMap() = default;
    LabelMap(int h, int w) : height(h), width(w), labels(static_cast<std::size_t>(h) * w, 0) {}
};

/// Batch of label maps sharing a class count; every id lies in [0, num_classes).
struct MaskBatch {
    std::vector<LabelMap> data;
    int num_classes = 2;

    void validate() const {
        if (num_classes < 1) throw DataError("MaskBatch: num_classes must be >= 1");
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& m = data[i];
            if (m.labels.size() != static_cast<std::size_t>(m.height) * m.width)
                throw DataError("MaskBatch: map " + std::to_string(i) + " has inconsistent size");
            for (auto v : m.labels)
                if (v < 0 || v >= num_classes)
                    throw DataError("MaskBatch: map " + std::to_string(i) + " contains class id " +
                                    std::to_string(v) + " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
};

inline BinaryMask binarize(const LabelMap& m, int cls) {
    BinaryMask b(m.height, m.width);
    for (std::size_t i = 0; i < m.labels.size(); ++i) b.px[i] = m.labels[i] == cls ? 1 : 0;
    return b;
}

inline void check_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (a.height != b.height || a.width != b.width)
        throw ShapeError(std::string(what) + ": mask shapes differ (" + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
}

struct PixelCounts {
    std::int64_t tp = 0, fp = 0, fn = 0;

    PixelCounts& operator+=(const PixelCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
};

inline PixelCounts count_pixels(const BinaryMask& pred, const BinaryMask& gt) {
    check_same_shape(pred, gt, "count_pixels");
    PixelCounts c;
    for (std::size_t i = 0; i < pred.px.size(); ++i) {
        const bool p = pred.px[i] != 0, g = gt.px[i] != 0;
        c.tp += p && g;
        c.fp += p && !g;
        c.fn += !p && g;
    }
    return c;
}

/// 2|A∩B| / (|A|+|B|); 1 when both masks are empty.
inline double dice(const BinaryMask& pred, const BinaryMask& gt) {
    const auto c = count_pixels(pred, gt);
    const auto denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 1.0 : static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

/// |A∩B| / |A∪B|; 1 when both masks are empty.
inline double iou(const BinaryMask& pred, const BinaryMask& gt) {
    const auto c = count_pixels(pred, gt);
    const auto uni = c.tp + c.fp + c.fn;
    return uni == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(uni);
}

/// Micro-averaged pixel F1 of class `cls`: TP/FP/FN pooled over every image.
inline double f1_micro(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts, int cls) {
    if (preds.empty()) throw DataError("f1_micro: empty mask list");
    if (preds.size() != gts.size()) throw DataError("f1_micro: prediction and ground-truth lists differ in length");
    PixelCounts total;
    for (std::size_t i = 0; i < preds.size(); ++i) total += count_pixels(binarize(preds[i], cls), binarize(gts[i], cls));
    const auto denom = 2 * total.tp + total.fp + total.fn;
    return denom == 0 ? 1.0 : static_cast<double>(2 * total.tp) / static_cast<double>(denom);
}

struct Spacing {
    double y = 1.0;
    double x = 1.0;
};

namespace detail {

constexpr double kFar = 1e30;

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), in place over `f` with
// sample spacing `s`: out[p] = min_q ((p - q) s)^2 + f[q].
inline void edt_1d(std::vector<double>& f, double s, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    if (n == 0) return;
    d.resize(n);
    v.resize(n);
    z.resize(n + 1);
    const double s2 = s * s;
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    auto intersect = [&](int q, int r) {
        return ((f[q] + s2 * q * q) - (f[r] + s2 * r * r)) / (2.0 * s2 * (q - r));
    };
    for (int q = 1; q < n; ++q) {
        double inter = intersect(q, v[k]);
        while (inter <= z[k]) {
            --k;
            inter = intersect(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = inter;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int p = 0; p < n; ++p) {
        while (z[k + 1] < p) ++k;
        const double dp = (p - v[k]) * s;
        d[p] = dp * dp + f[v[k]];
    }
    f.swap(d);
}

}  // namespace detail

/// Exact squared Euclidean distance from every pixel to the nearest foreground pixel
/// of `mask`. Requires a non-empty mask.
inline std::vector<double> squared_distance_transform(const BinaryMask& mask, Spacing spacing = {}) {
    const int H = mask.height, W = mask.width;
    std::vector<double> dist(static_cast<std::size_t>(H) * W);
    for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = mask.px[i] ? 0.0 : detail::kFar;
    std::vector<double> f, d, z;
    std::vector<int> v;
    f.resize(H);
    for (int x = 0; x < W; ++x) {
        f.resize(H);
        for (int y = 0; y < H; ++y) f[y] = dist[static_cast<std::size_t>(y) * W + x];
        detail::edt_1d(f, spacing.y, d, v, z);
        for (int y = 0; y < H; ++y) dist[static_cast<std::size_t>(y) * W + x] = f[y];
    }
    for (int y = 0; y < H; ++y) {
        f.assign(dist.begin() + static_cast<std::ptrdiff_t>(y) * W, dist.begin() + static_cast<std::ptrdiff_t>(y + 1) * W);
        detail::edt_1d(f, spacing.x, d, v, z);
        std::copy(f.begin(), f.end(), dist.begin() + static_cast<std::ptrdiff_t>(y) * W);
    }
    return dist;
}

/// Linear-interpolation percentile (q in [0,1]) of an ascending-sorted sample.
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

/// Pooled directed nearest-neighbour distances A->B and B->A, ascending.
inline std::vector<double> pooled_surface_distances(const BinaryMask& a, const BinaryMask& b, Spacing spacing = {}) {
    check_same_shape(a, b, "hausdorff");
    const auto da = squared_distance_transform(a, spacing);
    const auto db = squared_distance_transform(b, spacing);
    std::vector<double> out;
    for (std::size_t i = 0; i < a.px.size(); ++i) {
        if (a.px[i]) out.push_back(std::sqrt(db[i]));
        if (b.px[i]) out.push_back(std::sqrt(da[i]));
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct HausdorffResult {
    double value = 0.0;
    bool one_empty = false;  // value is the image diagonal
};

inline double image_diagonal(int height, int width, Spacing spacing) {
    return std::hypot(height * spacing.y, width * spacing.x);
}

/// q-th percentile Hausdorff distance. Both empty: 0. Exactly one empty: image diagonal.
inline HausdorffResult hausdorff_percentile(const BinaryMask& pred, const BinaryMask& gt, double q,
                                            Spacing spacing = {}) {
    check_same_shape(pred, gt, "hausdorff");
    const bool pe = pred.empty(), ge = gt.empty();
    if (pe && ge) return {0.0, false};
    if (pe || ge) return {image_diagonal(pred.height, pred.width, spacing), true};
    return {percentile_sorted(pooled_surface_distances(pred, gt, spacing), q), false};
}

inline HausdorffResult hd95_detail(const BinaryMask& pred, const BinaryMask& gt, Spacing spacing = {}) {
    return hausdorff_percentile(pred, gt, 0.95, spacing);
}

inline double hd95(const BinaryMask& pred, const BinaryMask& gt, Spacing spacing = {}) {
    return hd95_detail(pred, gt, spacing).value;
}

// ---------------------------------------------------------------------------
// Reports

struct ClassMetrics {
    double dsc = 0, iou = 0, f1 = 0, hd95 = 0;
};

struct MetricStat {
    double mean = 0;
    double std = 0;
};

struct MetricsReport {
    int num_classes = 0;
    std::map<int, ClassMetrics> per_class;  // foreground classes only
    double mean_dsc = 0, mean_iou = 0, mean_f1 = 0, mean_hd95 = 0;
    std::size_t images = 0;
    std::size_t hd95_empty_flags = 0;            // pairs where exactly one mask was empty
    std::map<std::string, MetricStat> fold_stats;  // filled by aggregate()

    void recompute_means() {
        mean_dsc = mean_iou = mean_f1 = mean_hd95 = 0;
        if (per_class.empty()) return;
        for (const auto& [_, m] : per_class) {
            mean_dsc += m.dsc;
            mean_iou += m.iou;
            mean_f1 += m.f1;
            mean_hd95 += m.hd95;
        }
        const double n = static_cast<double>(per_class.size());
        mean_dsc /= n;
        mean_iou /= n;
        mean_f1 /= n;
        mean_hd95 /= n;
    }
};

/// Foreground classes: 1..C-1 (class 0 is background); a single-class task scores class 0.
inline std::vector<int> foreground_classes(int num_classes) {
    std::vector<int> c;
    for (int k = num_classes > 1 ? 1 : 0; k < num_classes; ++k) c.push_back(k);
    return c;
}

/// Per-class DSC/IoU/HD95 are averaged over images whose ground truth contains the class
/// (all images when none does); F1 pools pixel counts over every image.
inline MetricsReport evaluate_masks(const MaskBatch& preds, const MaskBatch& gts, Spacing spacing = {}) {
    if (gts.data.empty()) throw DataError("evaluate: empty mask list");
    if (preds.data.size() != gts.data.size()) throw DataError("evaluate: prediction/ground-truth count mismatch");
    if (preds.num_classes != gts.num_classes)
        throw DataError("evaluate: class count mismatch (" + std::to_string(preds.num_classes) + " vs " +
                        std::to_string(gts.num_classes) + ")");
    preds.validate();
    gts.validate();
    MetricsReport r;
    r.num_classes = gts.num_classes;
    r.images = gts.data.size();
    for (int cls : foreground_classes(gts.num_classes)) {
        std::vector<std::size_t> idx;
        std::vector<BinaryMask> pb, gb;
        PixelCounts pooled;
        for (std::size_t i = 0; i < gts.data.size(); ++i) {
            pb.push_back(binarize(preds.data[i], cls));
            gb.push_back(binarize(gts.data[i], cls));
            pooled += count_pixels(pb.back(), gb.back());
            if (!gb.back().empty()) idx.push_back(i);
        }
        if (idx.empty()) {
            idx.resize(gts.data.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
        }
        ClassMetrics m;
        for (auto i : idx) {
            m.dsc += dice(pb[i], gb[i]);
            m.iou += iou(pb[i], gb[i]);
            const auto h = hd95_detail(pb[i], gb[i], spacing);
            m.hd95 += h.value;
            r.hd95_empty_flags += h.one_empty;
        }
        const double n = static_cast<double>(idx.size());
        m.dsc /= n;
        m.iou /= n;
        m.hd95 /= n;
        const auto denom = 2 * pooled.tp + pooled.fp + pooled.fn;
        m.f1 = denom == 0 ? 1.0 : static_cast<double>(2 * pooled.tp) / static_cast<double>(denom);
        r.per_class[cls] = m;
    }
    r.recompute_means();
    return r;
}

enum class AggregationScheme { mean_per_image, five_fold, three_runs_of_five_fold };

inline AggregationScheme parse_scheme(const std::string& s) {
    if (s == "mean_per_image") return AggregationScheme::mean_per_image;
    if (s == "five_fold") return AggregationScheme::five_fold;
    if (s == "three_runs_of_five_fold") return AggregationScheme::three_runs_of_five_fold;
    throw ConfigError("scheme: unknown value '" + s +
                      "' (expected mean_per_image|five_fold|three_runs_of_five_fold)");
}

namespace detail {

inline MetricStat mean_std(const std::vector<double>& v) {
    MetricStat s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(var / static_cast<double>(v.size()));
    return s;
}

/// Flattened named view of a report's metric values.
inline std::map<std::string, double> metric_values(const MetricsReport& r) {
    std::map<std::string, double> v{{"mean_dsc", r.mean_dsc},
                                    {"mean_iou", r.mean_iou},
                                    {"mean_f1", r.mean_f1},
                                    {"mean_hd95", r.mean_hd95}};
    for (const auto& [cls, m] : r.per_class) {
        const auto p = "class" + std::to_string(cls) + ".";
        v[p + "dsc"] = m.dsc;
        v[p + "iou"] = m.iou;
        v[p + "f1"] = m.f1;
        v[p + "hd95"] = m.hd95;
    }
    return v;
}

/// Unweighted mean of reports (per-class fields and means).
inline MetricsReport average(const std::vector<MetricsReport>& reports) {
    MetricsReport out;
    out.num_classes = reports.front().num_classes;
    for (const auto& r : reports) {
        out.images += r.images;
        out.hd95_empty_flags += r.hd95_empty_flags;
        for (const auto& [cls, m] : r.per_class) {
            auto& o = out.per_class[cls];
            o.dsc += m.dsc;
            o.iou += m.iou;
            o.f1 += m.f1;
            o.hd95 += m.hd95;
        }
    }
    const double n = static_cast<double>(reports.size());
    for (auto& [_, m] : out.per_class) {
        m.dsc /= n;
        m.iou /= n;
        m.f1 /= n;
        m.hd95 /= n;
    }
    out.recompute_means();
    return out;
}

}  // namespace detail

/// mean_per_image / five_fold: mean and population std over the given reports.
/// three_runs_of_five_fold: reports are run-major (run 0 folds 0..4, run 1, ...); each
/// run is reduced to its fold mean, then mean and std are taken over the run means.
inline MetricsReport aggregate(const std::vector<MetricsReport>& reports, AggregationScheme scheme) {
    if (reports.empty()) throw DataError("aggregate: empty report list");
    for (const auto& r : reports)
        if (r.num_classes != reports.front().num_classes || r.per_class.size() != reports.front().per_class.size())
            throw DataError("aggregate: reports have mixed class counts");

    std::vector<MetricsReport> leaves;
    switch (scheme) {
        case AggregationScheme::mean_per_image: leaves = reports; break;
        case AggregationScheme::five_fold:
            if (reports.size() != 5)
                throw DataError("aggregate: five_fold expects 5 fold reports, got " + std::to_string(reports.size()));
            leaves = reports;
            break;
        case AggregationScheme::three_runs_of_five_fold:
            if (reports.size() != 15)
                throw DataError("aggregate: three_runs_of_five_fold expects 15 fold reports, got " +
                                std::to_string(reports.size()));
            for (std::size_t run = 0; run < 3; ++run)
                leaves.push_back(detail::average({reports.begin() + static_cast<std::ptrdiff_t>(run * 5),
                                                  reports.begin() + static_cast<std::ptrdiff_t>(run * 5 + 5)}));
            break;
    }

    auto out = detail::average(leaves);
    std::map<std::string, std::vector<double>> columns;
    for (const auto& r : leaves)
        for (const auto& [k, v] : detail::metric_values(r)) columns[k].push_back(v);
    for (const auto& [k, v] : columns) out.fold_stats[k] = detail::mean_std(v);
    return out;
}

// ---------------------------------------------------------------------------
// Emission

inline std::string format_number(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << v;
    return os.str();
}

/// CSV with header `class,dsc,iou,f1,hd95`, one row per foreground class and a `mean` row.
inline std::string to_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << "class,dsc,iou,f1,hd95\n";
    for (const auto& [cls, m] : r.per_class)
        os << cls << ',' << format_number(m.dsc) << ',' << format_number(m.iou) << ',' << format_number(m.f1)
           << ',' << format_number(m.hd95) << '\n';
    os << "mean," << format_number(r.mean_dsc) << ',' << format_number(r.mean_iou) << ','
       << format_number(r.mean_f1) << ',' << format_number(r.mean_hd95) << '\n';
    return os.str();
}

inline std::string to_text(const MetricsReport& r) {
    std::ostringstream os;
    os << "num_classes: " << r.num_classes << '\n';
    os << "images: " << r.images << '\n';
    os << "hd95_empty_flags: " << r.hd95_empty_flags << '\n';
    for (const auto& [cls, m] : r.per_class)
        os << "class " << cls << ": dsc=" << format_number(m.dsc) << " iou=" << format_number(m.iou)
           << " f1=" << format_number(m.f1) << " hd95=" << format_number(m.hd95) << '\n';
    os << "mean_dsc: " << format_number(r.mean_dsc) << '\n';
    os << "mean_iou: " << format_number(r.mean_iou) << '\n';
    os << "mean_f1: " << format_number(r.mean_f1) << '\n';
    os << "mean_hd95: " << format_number(r.mean_hd95) << '\n';
    for (const auto& [k, s] : r.fold_stats)
        os << "fold " << k << ": " << format_number(s.mean) << " +- " << format_number(s.std) << '\n';
    return os.str();
}

}  // namespace pagty::metrics
