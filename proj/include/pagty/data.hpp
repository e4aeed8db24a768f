#pragma once

// Dataset layout scanning, grouped k-fold splitting, the training augmentation policy,
// image/mask loading, and a deterministic synthetic-shapes dataset generator.
//
// On-disk layout:
//   root/images/<stem>.<ext>   8- or 16-bit images (png, tif, bmp, jpg)
//   root/masks/<stem>.png      8-bit class-id masks
//   root/groups.csv            optional: stem,group_id[,split]

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pagty/errors.hpp"
#include "pagty/rng.hpp"

namespace pagty::data {

namespace fs = std::filesystem;

enum class Split { train, val, test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw DataError("unknown split '" + s + "' (expected train|val|test)");
}

struct SampleRecord {
    std::string stem;
    fs::path image_path;
    fs::path mask_path;
    std::string group_id;
    Split split = Split::train;
};

/// Directory and extension conventions; every field can be overridden from JSON.
struct LayoutManifest {
    std::string images_dir = "images";
    std::string masks_dir = "masks";
    std::vector<std::string> image_extensions{".png", ".tif", ".tiff", ".bmp", ".jpg", ".jpeg"};
    std::vector<std::string> mask_extensions{".png"};
    std::string groups_file = "groups.csv";

    static LayoutManifest from_json(const nlohmann::json& j) {
        LayoutManifest m;
        try {
            if (j.contains("images_dir")) j.at("images_dir").get_to(m.images_dir);
            if (j.contains("masks_dir")) j.at("masks_dir").get_to(m.masks_dir);
            if (j.contains("image_extensions")) j.at("image_extensions").get_to(m.image_extensions);
            if (j.contains("mask_extensions")) j.at("mask_extensions").get_to(m.mask_extensions);
            if (j.contains("groups_file")) j.at("groups_file").get_to(m.groups_file);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("layout manifest: ") + e.what());
        }
        return m;
    }
};

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// stem -> path for every file with an accepted extension; duplicates are an error.
inline std::map<std::string, fs::path> index_dir(const fs::path& dir, const std::vector<std::string>& exts,
                                                 const char* what) {
    if (!fs::is_directory(dir)) throw DataError(std::string("dataset: missing ") + what + " directory " + dir.string());
    std::map<std::string, fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto ext = lower(e.path().extension().string());
        if (std::find(exts.begin(), exts.end(), ext) == exts.end()) continue;
        const auto stem = e.path().stem().string();
        auto [it, inserted] = out.emplace(stem, e.path());
        if (!inserted)
            throw DataError(std::string("dataset: ambiguous stem '") + stem + "' in " + what + " (" +
                            it->second.filename().string() + " and " + e.path().filename().string() + ")");
    }
    return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        cells.push_back(cell);
    }
    return cells;
}

}  // namespace detail

struct ScanResult {
    std::vector<SampleRecord> records;
    std::vector<std::string> unmatched_masks;  // masks without an image
};

/// Pairs images with masks by stem. Records come back in lexicographic stem order.
inline ScanResult scan_dataset_detailed(const fs::path& root, const LayoutManifest& layout = {}) {
    const auto images = detail::index_dir(root / layout.images_dir, layout.image_extensions, "images");
    const auto masks = detail::index_dir(root / layout.masks_dir, layout.mask_extensions, "masks");

    std::map<std::string, std::pair<std::string, Split>> groups;
    const auto groups_path = root / layout.groups_file;
    if (fs::exists(groups_path)) {
        std::ifstream in(groups_path);
        if (!in) throw DataError("dataset: cannot read " + groups_path.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto cells = detail::split_csv_line(line);
            if (cells.empty() || (cells.size() == 1 && cells[0].empty())) continue;
            if (lineno == 1 && cells[0] == "stem") continue;
            if (cells.size() < 2)
                throw DataError(groups_path.string() + ":" + std::to_string(lineno) + ": expected stem,group_id[,split]");
            Split split = cells.size() >= 3 && !cells[2].empty() ? parse_split(cells[2]) : Split::train;
            groups[cells[0]] = {cells[1], split};
        }
    }

    ScanResult result;
    for (const auto& [stem, img] : images) {
        auto m = masks.find(stem);
        if (m == masks.end()) throw DataError("dataset: image '" + stem + "' has no mask in " + layout.masks_dir + "/");
        for (const auto* p : {&img, &m->second}) {
            std::ifstream probe(*p, std::ios::binary);
            if (!probe) throw DataError("dataset: unreadable file " + p->string());
        }
        SampleRecord r{stem, img, m->second, stem, Split::train};
        if (auto g = groups.find(stem); g != groups.end()) {
            r.group_id = g->second.first;
            r.split = g->second.second;
        }
        result.records.push_back(std::move(r));
    }
    for (const auto& [stem, _] : masks)
        if (!images.count(stem)) result.unmatched_masks.push_back(stem);
    return result;
}

inline std::vector<SampleRecord> scan_dataset(const fs::path& root, const LayoutManifest& layout = {}) {
    auto r = scan_dataset_detailed(root, layout);
    for (const auto& s : r.unmatched_masks) log::warn("dataset: mask '" + s + "' has no matching image");
    return std::move(r.records);
}

inline std::vector<SampleRecord> filter_split(const std::vector<SampleRecord>& records, Split split) {
    std::vector<SampleRecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                 [&](const SampleRecord& r) { return r.split == split; });
    return out;
}

// ---------------------------------------------------------------------------
// Folds

struct FoldAssignment {
    int k = 5;
    int runs = 1;
    /// fold_of[run][record index] in [0, k)
    std::vector<std::vector<int>> fold_of;
    /// groups[run][fold] = group ids assigned to the fold
    std::vector<std::vector<std::vector<std::string>>> groups;

    std::vector<std::size_t> records_in(int run, int fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of[run].size(); ++i)
            if (fold_of[run][i] == fold) out.push_back(i);
        return out;
    }

    friend bool operator==(const FoldAssignment&, const FoldAssignment&) = default;
};

/// Grouped k-fold split, `runs` independent seeded shuffles. Groups are dealt
/// round-robin after shuffling, so fold sizes differ by at most one group.
inline FoldAssignment make_folds(const std::vector<SampleRecord>& records, int k = 5, int runs = 3,
                                 std::uint64_t seed = 0) {
    if (k < 2) throw ConfigError("make_folds: k must be >= 2");
    if (runs < 1) throw ConfigError("make_folds: runs must be >= 1");
    std::set<std::string> unique;
    for (const auto& r : records) unique.insert(r.group_id);
    if (static_cast<int>(unique.size()) < k)
        throw DataError("make_folds: " + std::to_string(unique.size()) + " groups cannot fill " + std::to_string(k) +
                        " folds");

    FoldAssignment fa;
    fa.k = k;
    fa.runs = runs;
    for (int run = 0; run < runs; ++run) {
        std::vector<std::string> order(unique.begin(), unique.end());
        Rng rng(derive_seed(seed, 0xF01D, static_cast<std::uint64_t>(run)));
        rng.shuffle(order.begin(), order.end());
        std::map<std::string, int> fold_of_group;
        std::vector<std::vector<std::string>> per_fold(k);
        for (std::size_t i = 0; i < order.size(); ++i) {
            const int f = static_cast<int>(i % static_cast<std::size_t>(k));
            fold_of_group[order[i]] = f;
            per_fold[f].push_back(order[i]);
        }
        std::vector<int> assignment;
        for (const auto& r : records) assignment.push_back(fold_of_group.at(r.group_id));
        fa.fold_of.push_back(std::move(assignment));
        fa.groups.push_back(std::move(per_fold));
    }
    return fa;
}

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentationPolicy {
    double rotate_p = 0.10;
    double max_angle_deg = 35.0;
    double hflip_p = 0.20;
    double vflip_p = 0.20;
    std::uint64_t rng_seed = 0;

    void validate() const {
        for (double p : {rotate_p, hflip_p, vflip_p})
            if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation: probabilities must lie in [0, 1]");
        if (!(max_angle_deg >= 0.0)) throw ConfigError("augmentation: max_angle_deg must be >= 0");
    }

    static AugmentationPolicy none() { return {0.0, 0.0, 0.0, 0.0, 0}; }
};

/// Uniform variates driving one augmentation: rotate?, angle, hflip?, vflip?.
struct AugmentDraw {
    double rotate = 1.0;
    double angle = 0.5;
    double hflip = 1.0;
    double vflip = 1.0;
};

/// The per-sample stream: a pure function of (policy seed, epoch, sample index).
inline AugmentDraw draw_for(const AugmentationPolicy& policy, std::uint64_t epoch, std::uint64_t sample) {
    Rng rng(derive_seed(policy.rng_seed, epoch, sample));
    AugmentDraw d;
    d.rotate = rng.uniform();
    d.angle = rng.uniform();
    d.hflip = rng.uniform();
    d.vflip = rng.uniform();
    return d;
}

struct AugmentDecision {
    bool rotate = false;
    double angle_deg = 0.0;
    bool hflip = false;
    bool vflip = false;
};

inline AugmentDecision decide(const AugmentationPolicy& policy, const AugmentDraw& draw) {
    AugmentDecision d;
    d.rotate = draw.rotate < policy.rotate_p;
    d.angle_deg = (2.0 * draw.angle - 1.0) * policy.max_angle_deg;
    d.hflip = draw.hflip < policy.hflip_p;
    d.vflip = draw.vflip < policy.vflip_p;
    return d;
}

/// Rotate (about the centre; bilinear image, nearest mask, zero fill), then horizontal
/// flip, then vertical flip. The mask never gains class ids.
inline std::pair<cv::Mat, cv::Mat> augment(const cv::Mat& image, const cv::Mat& mask, const AugmentationPolicy& policy,
                                           const AugmentDraw& draw) {
    if (image.rows != mask.rows || image.cols != mask.cols)
        throw ShapeError("augment: image and mask sizes differ");
    const auto d = decide(policy, draw);
    cv::Mat img = image.clone(), msk = mask.clone();
    if (d.rotate && d.angle_deg != 0.0) {
        const cv::Point2f center((img.cols - 1) * 0.5f, (img.rows - 1) * 0.5f);
        const cv::Mat rot = cv::getRotationMatrix2D(center, d.angle_deg, 1.0);
        cv::Mat ri, rm;
        cv::warpAffine(img, ri, rot, img.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar::all(0));
        cv::warpAffine(msk, rm, rot, msk.size(), cv::INTER_NEAREST, cv::BORDER_CONSTANT, cv::Scalar::all(0));
        img = ri;
        msk = rm;
    }
    if (d.hflip) {
        cv::flip(img, img, 1);
        cv::flip(msk, msk, 1);
    }
    if (d.vflip) {
        cv::flip(img, img, 0);
        cv::flip(msk, msk, 0);
    }
    return {img, msk};
}

// ---------------------------------------------------------------------------
// Loading

/// Reads an image as float32 in [0, 1] with `channels` channels (grayscale is replicated,
/// colour is converted to RGB order; a 3->1 request averages to gray).
inline cv::Mat load_image(const fs::path& path, int channels) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw DataError("cannot read image " + path.string());
    double scale = 1.0;
    switch (raw.depth()) {
        case CV_8U: scale = 1.0 / 255.0; break;
        case CV_16U: scale = 1.0 / 65535.0; break;
        case CV_32F: scale = 1.0; break;
        default: throw DataError("unsupported image depth in " + path.string());
    }
    cv::Mat f;
    raw.convertTo(f, CV_32F, scale);
    if (f.channels() == 4) cv::cvtColor(f, f, cv::COLOR_BGRA2BGR);
    if (f.channels() == 3) {
        if (channels == 1) cv::cvtColor(f, f, cv::COLOR_BGR2GRAY);
        else cv::cvtColor(f, f, cv::COLOR_BGR2RGB);
    }
    if (f.channels() == channels) return f;
    if (f.channels() == 1) {
        std::vector<cv::Mat> planes(static_cast<std::size_t>(channels), f);
        cv::Mat out;
        cv::merge(planes, out);
        return out;
    }
    throw DataError("image " + path.string() + " has " + std::to_string(f.channels()) +
                    " channels; cannot map to " + std::to_string(channels));
}

/// Reads an 8-bit class-id mask and checks ids against `num_classes`.
inline cv::Mat load_mask(const fs::path& path, int num_classes) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw DataError("cannot read mask " + path.string());
    if (m.channels() != 1) throw DataError("mask " + path.string() + " must be single-channel");
    if (m.depth() != CV_8U) {
        cv::Mat c;
        m.convertTo(c, CV_8U);
        m = c;
    }
    double lo = 0, hi = 0;
    cv::minMaxLoc(m, &lo, &hi);
    if (hi >= num_classes)
        throw DataError("mask " + path.string() + " contains class id " + std::to_string(static_cast<int>(hi)) +
                        " >= num_classes " + std::to_string(num_classes));
    return m;
}

struct Sample {
    std::string stem;
    cv::Mat image;  // CV_32FC(n), [0,1]
    cv::Mat mask;   // CV_8U
};

inline Sample load_sample(const SampleRecord& r, int channels, int num_classes) {
    Sample s{r.stem, load_image(r.image_path, channels), load_mask(r.mask_path, num_classes)};
    if (s.image.size() != s.mask.size())
        throw DataError("sample '" + r.stem + "': image and mask sizes differ");
    return s;
}

/// Per-channel mean and (population) standard deviation over all pixels of `samples`.
inline std::pair<std::vector<double>, std::vector<double>> channel_stats(const std::vector<Sample>& samples) {
    if (samples.empty()) throw DataError("channel_stats: no samples");
    const int c = samples.front().image.channels();
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    double n = 0;
    for (const auto& s : samples) {
        std::vector<cv::Mat> planes;
        cv::split(s.image, planes);
        for (int k = 0; k < c; ++k) {
            sum[k] += cv::sum(planes[k])[0];
            sq[k] += planes[k].dot(planes[k]);
        }
        n += static_cast<double>(s.image.total());
    }
    std::vector<double> mean(c), sd(c);
    for (int k = 0; k < c; ++k) {
        mean[k] = sum[k] / n;
        sd[k] = std::sqrt(std::max(sq[k] / n - mean[k] * mean[k], 0.0));
        if (sd[k] < 1e-6) sd[k] = 1.0;
    }
    return {mean, sd};
}

// ---------------------------------------------------------------------------
// Synthetic shapes

struct SyntheticSpec {
    int n_images = 20;
    int height = 64;
    int width = 64;
    int classes = 3;  // including background
    int min_shapes = 1;
    int max_shapes = 3;
    std::uint64_t seed = 7;

    void validate() const {
        if (n_images < 1) throw ConfigError("synthetic: n_images must be >= 1");
        if (height < 8 || width < 8) throw ConfigError("synthetic: image size must be at least 8x8");
        if (classes < 2 || classes > 255) throw ConfigError("synthetic: classes must lie in 2..255");
        if (min_shapes < 1 || max_shapes < min_shapes)
            throw ConfigError("synthetic: need 1 <= min_shapes <= max_shapes");
    }
};

/// Intensity band [lo, hi] of class `cls` (0 = background).
inline std::pair<int, int> intensity_band(int cls, int classes) {
    if (cls == 0) return {0, 50};
    const int span = 190 / (classes - 1);
    const int lo = 60 + (cls - 1) * span;
    return {lo, lo + std::max(span / 3, 1)};
}

/// Renders one image/mask pair. Odd classes are ellipses, even classes rectangles;
/// image `index` always contains class 1 + index % (classes - 1).
inline std::pair<cv::Mat, cv::Mat> render_synthetic(const SyntheticSpec& spec, int index) {
    Rng rng(derive_seed(spec.seed, 0x5A11, static_cast<std::uint64_t>(index)));
    cv::Mat image(spec.height, spec.width, CV_8U), mask(spec.height, spec.width, CV_8U, cv::Scalar(0));
    const auto [blo, bhi] = intensity_band(0, spec.classes);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) image.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(rng.between(blo, bhi));

    const int n = static_cast<int>(rng.between(spec.min_shapes, spec.max_shapes));
    const int min_side = std::min(spec.height, spec.width);
    for (int s = 0; s < n; ++s) {
        const int cls = s == 0 ? 1 + index % (spec.classes - 1) : static_cast<int>(rng.between(1, spec.classes - 1));
        const int rh = static_cast<int>(rng.between(std::max(2, min_side / 10), std::max(3, min_side / 4)));
        const int rw = static_cast<int>(rng.between(std::max(2, min_side / 10), std::max(3, min_side / 4)));
        const int cy = static_cast<int>(rng.between(rh, spec.height - 1 - rh));
        const int cx = static_cast<int>(rng.between(rw, spec.width - 1 - rw));
        cv::Mat shape(spec.height, spec.width, CV_8U, cv::Scalar(0));
        if (cls % 2 == 1) cv::ellipse(shape, {cx, cy}, {rw, rh}, 0.0, 0.0, 360.0, cv::Scalar(255), cv::FILLED, cv::LINE_8);
        else cv::rectangle(shape, {cx - rw, cy - rh}, {cx + rw, cy + rh}, cv::Scalar(255), cv::FILLED, cv::LINE_8);
        const auto [lo, hi] = intensity_band(cls, spec.classes);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                if (shape.at<std::uint8_t>(y, x)) {
                    mask.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(cls);
                    image.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(rng.between(lo, hi));
                }
    }
    return {image, mask};
}

inline std::string synthetic_stem(int index) {
    std::ostringstream os;
    os << "synth_" << std::setw(4) << std::setfill('0') << index;
    return os.str();
}

/// Writes images/, masks/ and groups.csv under `out_dir`. Refuses a non-empty directory
/// unless `overwrite` is set. Output is byte-identical for identical specs.
inline void generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir, bool overwrite = false) {
    spec.validate();
    if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
        if (!overwrite) throw IoError("generate_synthetic: " + out_dir.string() + " exists and is not empty");
        fs::remove_all(out_dir / "images");
        fs::remove_all(out_dir / "masks");
        fs::remove(out_dir / "groups.csv");
    }
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "masks");
    const std::vector<int> png{cv::IMWRITE_PNG_COMPRESSION, 6};
    std::ofstream groups(out_dir / "groups.csv");
    groups << "stem,group_id\n";
    for (int i = 0; i < spec.n_images; ++i) {
        auto [image, mask] = render_synthetic(spec, i);
        const auto stem = synthetic_stem(i);
        if (!cv::imwrite((out_dir / "images" / (stem + ".png")).string(), image, png) ||
            !cv::imwrite((out_dir / "masks" / (stem + ".png")).string(), mask, png))
            throw IoError("generate_synthetic: failed writing " + stem);
        groups << stem << ',' << stem << '\n';
    }
    if (!groups) throw IoError("generate_synthetic: failed writing groups.csv");
}

}  // namespace pagty::data
