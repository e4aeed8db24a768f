#pragma once

// Training loop, evaluation and prediction runners, and the four-row ablation driver.

#include <torch/torch.h>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pagty/checkpoint.hpp"
#include "pagty/config.hpp"
#include "pagty/data.hpp"
#include "pagty/errors.hpp"
#include "pagty/loss.hpp"
#include "pagty/metrics.hpp"
#include "pagty/model.hpp"
#include "pagty/rng.hpp"

namespace pagty {

struct TrainConfig {
    int epochs = 100;
    double lr = 0.1;
    std::string optimizer = "adam";
    int batch_size = 16;
    std::uint64_t seed = 0;
    std::string device = "cpu";
    int eval_every = 1;
    int workers = 1;
    bool cosine_decay = false;
    double target_dsc = 0.0;  // stop once validation mean DSC reaches this (0 = never)
    data::AugmentationPolicy augmentation{};
    LossWeights loss{};

    void validate() const {
        if (epochs < 1) throw ConfigError("train.epochs: must be >= 1");
        if (!(lr > 0)) throw ConfigError("train.lr: must be > 0");
        if (optimizer != "adam") throw ConfigError("train.optimizer: only 'adam' is supported");
        if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
        if (eval_every < 1) throw ConfigError("train.eval_every: must be >= 1");
        if (workers < 1) throw ConfigError("train.workers: must be >= 1");
        if (target_dsc < 0 || target_dsc > 1) throw ConfigError("train.target_dsc: must lie in [0, 1]");
        augmentation.validate();
    }
};

inline nlohmann::json to_json(const TrainConfig& t) {
    return {
        {"epochs", t.epochs},
        {"lr", t.lr},
        {"optimizer", t.optimizer},
        {"batch_size", t.batch_size},
        {"seed", t.seed},
        {"device", t.device},
        {"eval_every", t.eval_every},
        {"workers", t.workers},
        {"cosine_decay", t.cosine_decay},
        {"target_dsc", t.target_dsc},
        {"augmentation", {{"rotate_p", t.augmentation.rotate_p},
                          {"max_angle_deg", t.augmentation.max_angle_deg},
                          {"hflip_p", t.augmentation.hflip_p},
                          {"vflip_p", t.augmentation.vflip_p}}},
        {"loss", {{"cross_entropy", t.loss.cross_entropy}, {"dice", t.loss.dice}, {"dice_smooth", t.loss.dice_smooth}}},
    };
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig t = {}) {
    using detail::read_field;
    detail::check_keys(j, {"epochs", "lr", "optimizer", "batch_size", "seed", "device", "eval_every", "workers",
                           "cosine_decay", "target_dsc", "augmentation", "loss"},
                       "train");
    read_field(j, "epochs", t.epochs);
    read_field(j, "lr", t.lr);
    read_field(j, "optimizer", t.optimizer);
    read_field(j, "batch_size", t.batch_size);
    read_field(j, "seed", t.seed);
    read_field(j, "device", t.device);
    read_field(j, "eval_every", t.eval_every);
    read_field(j, "workers", t.workers);
    read_field(j, "cosine_decay", t.cosine_decay);
    read_field(j, "target_dsc", t.target_dsc);
    if (j.contains("augmentation")) {
        const auto& a = j.at("augmentation");
        detail::check_keys(a, {"rotate_p", "max_angle_deg", "hflip_p", "vflip_p"}, "augmentation");
        read_field(a, "rotate_p", t.augmentation.rotate_p, "augmentation.");
        read_field(a, "max_angle_deg", t.augmentation.max_angle_deg, "augmentation.");
        read_field(a, "hflip_p", t.augmentation.hflip_p, "augmentation.");
        read_field(a, "vflip_p", t.augmentation.vflip_p, "augmentation.");
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        detail::check_keys(l, {"cross_entropy", "dice", "dice_smooth"}, "loss");
        read_field(l, "cross_entropy", t.loss.cross_entropy, "loss.");
        read_field(l, "dice", t.loss.dice, "loss.");
        read_field(l, "dice_smooth", t.loss.dice_smooth, "loss.");
    }
    return t;
}

/// `PAGTY_DEVICE` overrides the configured hint. CUDA falls back to CPU when unavailable.
inline torch::Device resolve_device(const std::string& hint) {
    std::string name = hint;
    if (const char* env = std::getenv("PAGTY_DEVICE"); env && *env) name = env;
    if (name == "cpu" || name.empty()) return torch::kCPU;
    if (name.rfind("cuda", 0) == 0) {
        if (torch::cuda::is_available()) return torch::Device(name);
        log::warn("device '" + name + "' requested but CUDA is unavailable; using cpu");
        return torch::kCPU;
    }
    throw ConfigError("device: unknown device '" + name + "'");
}

// ---------------------------------------------------------------------------
// Tensor conversion

/// HxWxC float image -> [C,H,W] tensor.
inline torch::Tensor image_to_tensor(const cv::Mat& image) {
    cv::Mat c = image.isContinuous() ? image : image.clone();
    return torch::from_blob(c.data, {c.rows, c.cols, c.channels()}, torch::kFloat32).permute({2, 0, 1}).clone();
}

inline torch::Tensor mask_to_tensor(const cv::Mat& mask) {
    cv::Mat c = mask.isContinuous() ? mask : mask.clone();
    return torch::from_blob(c.data, {c.rows, c.cols}, torch::kUInt8).to(torch::kLong);
}

inline metrics::LabelMap tensor_to_label_map(const torch::Tensor& t) {
    auto c = t.to(torch::kCPU).to(torch::kInt32).contiguous();
    metrics::LabelMap m(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)));
    std::copy_n(c.data_ptr<std::int32_t>(), m.labels.size(), m.labels.begin());
    return m;
}

inline metrics::LabelMap mat_to_label_map(const cv::Mat& mask) {
    metrics::LabelMap m(mask.rows, mask.cols);
    for (int y = 0; y < mask.rows; ++y)
        for (int x = 0; x < mask.cols; ++x)
            m.labels[static_cast<std::size_t>(y) * mask.cols + x] = mask.at<std::uint8_t>(y, x);
    return m;
}

/// Loads records and resizes every sample to the model input size.
inline std::vector<data::Sample> load_samples(const std::vector<data::SampleRecord>& records, const ModelConfig& config) {
    std::vector<data::Sample> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        auto s = data::load_sample(r, static_cast<int>(config.in_channels), static_cast<int>(config.num_classes));
        const cv::Size target(static_cast<int>(config.input_size.w), static_cast<int>(config.input_size.h));
        if (s.image.size() != target) {
            cv::resize(s.image, s.image, target, 0, 0, cv::INTER_LINEAR);
            cv::resize(s.mask, s.mask, target, 0, 0, cv::INTER_NEAREST);
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const auto w = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(workers), n));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(w);
    for (std::size_t t = 0; t < w; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += w) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct Batch {
    torch::Tensor images;  // [B,C,H,W]
    torch::Tensor masks;   // [B,H,W] long
};

/// Stacks samples `idx`, augmenting each with its (epoch, sample index) stream when
/// a policy is given.
inline Batch make_batch(const std::vector<data::Sample>& samples, const std::vector<std::size_t>& idx,
                        const data::AugmentationPolicy* policy, std::uint64_t epoch, int workers) {
    std::vector<torch::Tensor> images(idx.size()), masks(idx.size());
    parallel_for(idx.size(), workers, [&](std::size_t k) {
        const auto& s = samples[idx[k]];
        if (policy) {
            auto [im, mk] = data::augment(s.image, s.mask, *policy, data::draw_for(*policy, epoch, idx[k]));
            images[k] = image_to_tensor(im);
            masks[k] = mask_to_tensor(mk);
        } else {
            images[k] = image_to_tensor(s.image);
            masks[k] = mask_to_tensor(s.mask);
        }
    });
    return {torch::stack(images), torch::stack(masks)};
}

// ---------------------------------------------------------------------------
// Inference and evaluation

/// Argmax class maps for every sample, in eval mode, batched.
inline std::vector<metrics::LabelMap> predict_label_maps(PagTransYnet& model, const std::vector<data::Sample>& samples,
                                                         int batch_size = 8, torch::Device device = torch::kCPU) {
    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();
    std::vector<metrics::LabelMap> out;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
        auto batch = make_batch(samples, idx, nullptr, 0, 1);
        auto pred = model->forward(batch.images.to(device)).argmax(1).to(torch::kCPU);
        for (std::int64_t b = 0; b < pred.size(0); ++b) out.push_back(tensor_to_label_map(pred[b]));
    }
    model->train(was_training);
    return out;
}

inline metrics::MaskBatch ground_truth(const std::vector<data::Sample>& samples, int num_classes) {
    metrics::MaskBatch gts;
    gts.num_classes = num_classes;
    for (const auto& s : samples) gts.data.push_back(mat_to_label_map(s.mask));
    return gts;
}

/// Scores externally supplied predictions against the samples' masks.
inline metrics::MetricsReport evaluate_predictions(const std::vector<metrics::LabelMap>& preds,
                                                   const std::vector<data::Sample>& samples, int num_classes) {
    if (samples.empty()) throw DataError("evaluate: empty test list");
    return metrics::evaluate_masks({preds, num_classes}, ground_truth(samples, num_classes));
}

inline metrics::MetricsReport evaluate_model(PagTransYnet& model, const std::vector<data::Sample>& samples,
                                             torch::Device device = torch::kCPU) {
    if (samples.empty()) throw DataError("evaluate: empty test list");
    const auto classes = static_cast<int>(model->config().num_classes);
    return evaluate_predictions(predict_label_maps(model, samples, 8, device), samples, classes);
}

/// Loads the checkpoint, checks its class count against `num_classes`, and scores it.
inline metrics::MetricsReport evaluate(const Checkpoint& ck, const std::vector<data::Sample>& samples, int num_classes,
                                       torch::Device device = torch::kCPU) {
    if (ck.config.num_classes != num_classes)
        throw DataError("evaluate: checkpoint has " + std::to_string(ck.config.num_classes) +
                        " classes, dataset has " + std::to_string(num_classes));
    auto model = model_from_checkpoint(ck);
    model->to(device);
    return evaluate_model(model, samples, device);
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
    int epoch = 0;
    double loss = 0;
    double lr = 0;
    bool evaluated = false;
    double val_dsc = 0;
    double val_hd95 = 0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_dsc = -1;
    Checkpoint best;
    Checkpoint last;
    PagTransYnet model{nullptr};
};

inline std::string history_csv(const std::vector<EpochRecord>& h) {
    std::ostringstream os;
    os << "epoch,loss,lr,val_mean_dsc,val_mean_hd95\n";
    for (const auto& e : h) {
        os << e.epoch << ',' << metrics::format_number(e.loss) << ',' << e.lr << ',';
        if (e.evaluated) os << metrics::format_number(e.val_dsc) << ',' << metrics::format_number(e.val_hd95);
        else os << ',';
        os << '\n';
    }
    return os.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << text;
    os.flush();
    if (!os) throw IoError("cannot write " + path.string());
}

struct TrainOptions {
    std::optional<std::filesystem::path> out_dir;  // best.ckpt, last.ckpt, history.csv
    std::function<void(const EpochRecord&)> on_epoch;
    nlohmann::json metadata = nlohmann::json::object();
};

/// Adam on CE + Dice with the augmentation policy; validation after every `eval_every`
/// epochs keeps the best-by-mean-DSC snapshot. Reproducible for a fixed seed with
/// single-threaded intra-op execution.
inline TrainResult train(ModelConfig model_config, const TrainConfig& tc, const std::vector<data::Sample>& train_set,
                         const std::vector<data::Sample>& val_set, const TrainOptions& opts = {}) {
    tc.validate();
    if (train_set.empty()) throw DataError("train: empty training set");
    const auto& eval_set = val_set.empty() ? train_set : val_set;
    if (model_config.input_mean.empty()) {
        auto [mean, sd] = data::channel_stats(train_set);
        model_config.input_mean = mean;
        model_config.input_std = sd;
    }
    model_config.validate();
    const auto device = resolve_device(tc.device);

    torch::manual_seed(tc.seed);
    TrainResult result;
    result.model = build_model(model_config);
    auto& model = result.model;
    model->to(device);
    torch::optim::Adam optim(model->parameters(), torch::optim::AdamOptions(tc.lr));

    auto policy = tc.augmentation;
    policy.rng_seed = derive_seed(tc.seed, 0xA06);
    Rng order_rng(derive_seed(tc.seed, 0x0D3));

    auto meta = opts.metadata;
    meta["train"] = to_json(tc);
    auto snapshot = [&](int epoch) {
        auto ck = capture(model, epoch);
        ck.rng_state = order_rng.state();
        std::ostringstream os;
        torch::serialize::OutputArchive archive;
        optim.save(archive);
        archive.save_to(os);
        ck.optimizer_state = os.str();
        ck.metadata = meta;
        return ck;
    };

    if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir);
    std::vector<std::size_t> order(train_set.size());
    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        double lr = tc.lr;
        if (tc.cosine_decay)
            lr = tc.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * (epoch - 1) / static_cast<double>(tc.epochs)));
        for (auto& g : optim.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);

        std::iota(order.begin(), order.end(), std::size_t{0});
        order_rng.shuffle(order.begin(), order.end());
        model->train();
        double loss_sum = 0;
        std::size_t seen = 0;
        int batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size), ++batch_index) {
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + tc.batch_size)));
            auto batch = make_batch(train_set, idx, &policy, static_cast<std::uint64_t>(epoch), tc.workers);
            optim.zero_grad();
            auto logits = model->forward(batch.images.to(device));
            auto loss = compute_loss(logits, batch.masks.to(device), tc.loss);
            const double value = loss.item<double>();
            if (!std::isfinite(value)) {
                std::ostringstream os;
                os << "train: non-finite loss at epoch " << epoch << ", batch " << batch_index << " (lr " << lr << ")";
                throw NumericError(os.str());
            }
            loss.backward();
            optim.step();
            loss_sum += value * static_cast<double>(idx.size());
            seen += idx.size();
        }

        EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), lr};
        const bool eval_now = epoch % tc.eval_every == 0 || epoch == tc.epochs;
        if (eval_now) {
            auto report = evaluate_model(model, eval_set, device);
            rec.evaluated = true;
            rec.val_dsc = report.mean_dsc;
            rec.val_hd95 = report.mean_hd95;
            if (rec.val_dsc > result.best_dsc) {
                result.best_dsc = rec.val_dsc;
                result.best_epoch = epoch;
                meta["best_val_dsc"] = rec.val_dsc;
                meta["best_epoch"] = epoch;
                result.best = snapshot(epoch);
                if (opts.out_dir) save_checkpoint(result.best, *opts.out_dir / "best.ckpt");
            }
        }
        result.history.push_back(rec);
        if (opts.on_epoch) opts.on_epoch(rec);
        const bool done = epoch == tc.epochs || (tc.target_dsc > 0 && rec.evaluated && rec.val_dsc >= tc.target_dsc);
        if (opts.out_dir && (eval_now || done)) {
            save_checkpoint(snapshot(epoch), *opts.out_dir / "last.ckpt");
            write_text_file(*opts.out_dir / "history.csv", history_csv(result.history));
        }
        if (done) break;
    }
    result.last = snapshot(result.history.back().epoch);
    return result;
}

// ---------------------------------------------------------------------------
// Prediction

inline std::array<cv::Vec3b, 8> class_palette() {
    return {cv::Vec3b{0, 0, 0},     cv::Vec3b{0, 0, 255},   cv::Vec3b{0, 255, 0},   cv::Vec3b{255, 0, 0},
            cv::Vec3b{0, 255, 255}, cv::Vec3b{255, 0, 255}, cv::Vec3b{255, 255, 0}, cv::Vec3b{255, 255, 255}};
}

struct PredictResult {
    cv::Mat mask;          // CV_8U class ids at the original size
    cv::Mat overlay;       // BGR
    Size2 padded{};        // size after padding to a multiple of 32
    bool padded_input = false;
    bool resized_input = false;  // padded size differed from the model input size
};

inline std::int64_t round_up(std::int64_t v, std::int64_t m) { return (v + m - 1) / m * m; }

/// Predicts a class map for an HxWxC float image. Sizes not divisible by 32 are padded
/// (edge replication) and cropped back; a padded size that differs from the model's input
/// size is resized in and out bilinearly.
inline PredictResult predict_image(PagTransYnet& model, const cv::Mat& image, torch::Device device = torch::kCPU) {
    torch::NoGradGuard no_grad;
    model->eval();
    const auto& cfg = model->config();
    PredictResult r;
    const int h = image.rows, w = image.cols;
    r.padded = {round_up(h, 32), round_up(w, 32)};
    r.padded_input = r.padded.h != h || r.padded.w != w;
    cv::Mat padded = image;
    if (r.padded_input)
        cv::copyMakeBorder(image, padded, 0, static_cast<int>(r.padded.h - h), 0, static_cast<int>(r.padded.w - w),
                           cv::BORDER_REPLICATE);
    auto x = image_to_tensor(padded).unsqueeze(0);
    r.resized_input = r.padded != cfg.input_size;
    if (r.resized_input) x = bilinear_resize(x, cfg.input_size);
    auto logits = model->forward(x.to(device)).to(torch::kCPU);
    if (r.resized_input) logits = bilinear_resize(logits, r.padded);
    auto labels = logits.argmax(1)[0].slice(0, 0, h).slice(1, 0, w).to(torch::kUInt8).contiguous();
    r.mask = cv::Mat(h, w, CV_8U, labels.data_ptr<std::uint8_t>()).clone();

    cv::Mat gray;
    if (image.channels() == 1) gray = image;
    else {
        std::vector<cv::Mat> planes;
        cv::split(image, planes);
        gray = planes[0];
    }
    cv::Mat base8;
    gray.convertTo(base8, CV_8U, 255.0);
    cv::cvtColor(base8, r.overlay, cv::COLOR_GRAY2BGR);
    const auto palette = class_palette();
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
            const int c = r.mask.at<std::uint8_t>(y, xx);
            if (c == 0) continue;
            auto& px = r.overlay.at<cv::Vec3b>(y, xx);
            const auto& col = palette[static_cast<std::size_t>(c) % palette.size()];
            for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>((px[k] + col[k]) / 2);
        }
    return r;
}

/// Writes `<out_path>` (class-id PNG) and `<out_path stem>_overlay.png` next to it.
inline PredictResult predict(const Checkpoint& ck, const std::filesystem::path& image_path,
                             const std::filesystem::path& out_path, torch::Device device = torch::kCPU) {
    auto model = model_from_checkpoint(ck);
    model->to(device);
    auto image = data::load_image(image_path, static_cast<int>(ck.config.in_channels));
    auto r = predict_image(model, image, device);
    if (r.padded_input)
        log::info("predict: padded " + std::to_string(image.rows) + "x" + std::to_string(image.cols) + " to " +
                  to_string(r.padded) + " and cropped back");
    if (r.resized_input) log::info("predict: resized " + to_string(r.padded) + " to model input " + to_string(ck.config.input_size));
    if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
    const auto overlay_path = out_path.parent_path() / (out_path.stem().string() + "_overlay.png");
    if (!cv::imwrite(out_path.string(), r.mask) || !cv::imwrite(overlay_path.string(), r.overlay))
        throw IoError("predict: cannot write " + out_path.string());
    return r;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
    std::string label;
    AblationFlags flags;
    std::int64_t parameters = 0;
    double dsc = 0;
    double hd95 = 0;
    double f1 = 0;
};

/// The four rows in table order: no pyramid, no PVT, no ViT, full model.
inline std::array<std::pair<std::string, AblationFlags>, 4> ablation_rows() {
    return {{{"(1) No Pyramid Path", {false, true, true}},
             {"(2) No PVT", {true, false, true}},
             {"(3) No ViT", {true, true, false}},
             {"(4) PAG-TransYnet", {true, true, true}}}};
}

inline std::string ablation_table_csv(const std::vector<AblationRow>& rows, bool with_f1) {
    std::ostringstream os;
    os << "architecture,pyr,pvt,vit,parameters," << (with_f1 ? "f1," : "") << "dsc,hd95\n";
    for (const auto& r : rows) {
        os << r.label << ',' << (r.flags.pyr ? "yes" : "no") << ',' << (r.flags.pvt ? "yes" : "no") << ','
           << (r.flags.vit ? "yes" : "no") << ',' << r.parameters << ',';
        if (with_f1) os << metrics::format_number(r.f1) << ',';
        os << metrics::format_number(r.dsc) << ',' << metrics::format_number(r.hd95) << '\n';
    }
    return os.str();
}

/// Trains and evaluates each row under identical seeds. `train_rows = false` only
/// builds the models (parameter accounting).
inline std::vector<AblationRow> run_ablation(const ModelConfig& base, const TrainConfig& tc,
                                             const std::vector<data::Sample>& train_set,
                                             const std::vector<data::Sample>& val_set, bool train_rows = true) {
    std::vector<AblationRow> rows;
    for (const auto& [label, flags] : ablation_rows()) {
        auto cfg = base;
        cfg.flags = flags;
        AblationRow row{label, flags};
        {
            torch::manual_seed(tc.seed);
            auto m = build_model(cfg);
            row.parameters = parameter_count(m);
        }
        if (train_rows) {
            auto res = train(cfg, tc, train_set, val_set);
            auto model = model_from_checkpoint(res.best.arrays.empty() ? res.last : res.best);
            const auto report = evaluate_model(model, val_set.empty() ? train_set : val_set, resolve_device(tc.device));
            row.dsc = report.mean_dsc;
            row.hd95 = report.mean_hd95;
            row.f1 = report.mean_f1;
            log::info(label + ": dsc " + metrics::format_number(row.dsc) + " hd95 " + metrics::format_number(row.hd95));
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace pagty
