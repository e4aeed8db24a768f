// pagty: command-line front end (train, eval, predict, ablate, gen-synthetic, verify).

#include <torch/torch.h>

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pagty/pagty.hpp"

namespace fs = std::filesystem;
using namespace pagty;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::optional<int> workers;
};

struct Settings {
    ModelConfig model = ModelConfig::toy();
    TrainConfig train;
    data::LayoutManifest layout;
    bool model_from_file = false;
};

Settings load_settings(const Globals& g) {
    Settings s;
    if (!g.config_path.empty()) {
        std::ifstream in(g.config_path);
        if (!in) throw ConfigError("config: cannot open " + g.config_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config: " + g.config_path + " is not valid JSON: " + e.what());
        }
        pagty::detail::check_keys(j, {"preset", "model", "train", "layout"}, "config");
        const std::string preset = j.value("preset", std::string("toy"));
        if (preset == "toy") s.model = ModelConfig::toy();
        else if (preset == "full") s.model = ModelConfig::full();
        else throw ConfigError("preset: unknown value '" + preset + "' (expected toy|full)");
        if (j.contains("model")) {
            s.model = model_config_from_json(j.at("model"), s.model);
            s.model_from_file = true;
        }
        if (j.contains("train")) s.train = train_config_from_json(j.at("train"), s.train);
        if (j.contains("layout")) s.layout = data::LayoutManifest::from_json(j.at("layout"));
    }
    if (g.seed) s.train.seed = *g.seed;
    if (g.workers) s.train.workers = *g.workers;
    s.model.validate();
    s.train.validate();
    return s;
}

nlohmann::json settings_json(const ModelConfig& m, const TrainConfig& t) {
    return {{"model", to_json(m)}, {"train", to_json(t)}};
}

std::vector<data::SampleRecord> pick_split(const std::vector<data::SampleRecord>& all, const std::string& split) {
    if (split == "all") return all;
    if (split == "auto") {
        for (auto s : {data::Split::test, data::Split::val}) {
            auto r = data::filter_split(all, s);
            if (!r.empty()) return r;
        }
        return all;
    }
    return data::filter_split(all, data::parse_split(split));
}

int cmd_gen_synthetic(const Globals& g, data::SyntheticSpec spec, bool overwrite) {
    if (g.seed) spec.seed = *g.seed;
    data::generate_synthetic(spec, g.out_dir, overwrite);
    std::cout << "wrote " << spec.n_images << " image/mask pairs to " << g.out_dir << "\n";
    return 0;
}

int cmd_train(const Globals& g, const std::string& data_root) {
    auto s = load_settings(g);
    const auto records = data::scan_dataset(data_root, s.layout);
    auto train_recs = data::filter_split(records, data::Split::train);
    const auto val_recs = data::filter_split(records, data::Split::val);
    if (train_recs.empty()) throw DataError("train: no records in the train split under " + data_root);
    const auto train_set = load_samples(train_recs, s.model);
    const auto val_set = load_samples(val_recs, s.model);

    TrainOptions opts;
    opts.out_dir = fs::path(g.out_dir);
    std::vector<std::string> val_stems;
    for (const auto& r : val_recs) val_stems.push_back(r.stem);
    opts.metadata = {{"data_root", data_root}, {"val_stems", val_stems}, {"train_size", train_recs.size()}};
    opts.on_epoch = [](const EpochRecord& e) {
        std::ostringstream os;
        os << "epoch " << e.epoch << " loss " << metrics::format_number(e.loss);
        if (e.evaluated) os << " val_dsc " << metrics::format_number(e.val_dsc);
        log::info(os.str());
    };
    auto res = train(s.model, s.train, train_set, val_set, opts);
    write_text_file(fs::path(g.out_dir) / "config.json", canonical_text(settings_json(res.last.config, s.train)) + "\n");
    std::cout << "epochs: " << res.history.size() << "\n"
              << "best_epoch: " << res.best_epoch << "\n"
              << "best_val_dsc: " << metrics::format_number(res.best_dsc) << "\n"
              << "checkpoints: " << (fs::path(g.out_dir) / "best.ckpt").string() << ", "
              << (fs::path(g.out_dir) / "last.ckpt").string() << "\n";
    return 0;
}

int cmd_eval(const Globals& g, const std::vector<std::string>& checkpoints, const std::string& data_root,
             const std::string& split, const std::string& scheme_name, int num_classes_opt) {
    auto s = load_settings(g);
    const auto scheme = metrics::parse_scheme(scheme_name);
    const auto device = resolve_device(s.train.device);
    const auto records = pick_split(data::scan_dataset(data_root, s.layout), split);
    if (records.empty()) throw DataError("eval: no records selected from " + data_root);

    std::vector<metrics::MetricsReport> reports;
    for (const auto& path : checkpoints) {
        const auto ck = load_checkpoint(path);
        int classes = static_cast<int>(ck.config.num_classes);
        if (num_classes_opt > 0) classes = num_classes_opt;
        else if (s.model_from_file) classes = static_cast<int>(s.model.num_classes);
        auto shape_cfg = ck.config;
        shape_cfg.num_classes = classes;
        const auto samples = load_samples(records, shape_cfg);
        reports.push_back(evaluate(ck, samples, classes, device));
        log::info("evaluated " + path);
    }
    auto report = reports.size() == 1 && scheme == metrics::AggregationScheme::mean_per_image
                      ? reports.front()
                      : metrics::aggregate(reports, scheme);
    fs::create_directories(g.out_dir);
    write_text_file(fs::path(g.out_dir) / "metrics.csv", metrics::to_csv(report));
    write_text_file(fs::path(g.out_dir) / "metrics.txt", metrics::to_text(report));
    std::cout << metrics::to_text(report);
    return 0;
}

int cmd_predict(const Globals& g, const std::string& checkpoint, const std::string& input, std::string output) {
    auto s = load_settings(g);
    const auto ck = load_checkpoint(checkpoint);
    if (output.empty()) output = (fs::path(g.out_dir) / (fs::path(input).stem().string() + "_mask.png")).string();
    auto r = predict(ck, input, output, resolve_device(s.train.device));
    std::cout << "mask: " << output << "\n"
              << "overlay: " << (fs::path(output).parent_path() / (fs::path(output).stem().string() + "_overlay.png")).string()
              << "\n";
    if (r.padded_input) std::cout << "padded to " << to_string(r.padded) << " and cropped back\n";
    return 0;
}

int cmd_ablate(const Globals& g, const std::string& data_root, bool params_only) {
    auto s = load_settings(g);
    std::vector<data::Sample> train_set, val_set;
    if (!params_only) {
        const auto records = data::scan_dataset(data_root, s.layout);
        auto train_recs = data::filter_split(records, data::Split::train);
        if (train_recs.empty()) throw DataError("ablate: no records in the train split under " + data_root);
        train_set = load_samples(train_recs, s.model);
        val_set = load_samples(data::filter_split(records, data::Split::val), s.model);
    }
    const auto rows = run_ablation(s.model, s.train, train_set, val_set, !params_only);
    const auto csv = ablation_table_csv(rows, s.model.num_classes > 2);
    fs::create_directories(g.out_dir);
    write_text_file(fs::path(g.out_dir) / "ablation.csv", csv);
    std::cout << csv;
    return 0;
}

// Quick self-check of the core invariants on small inputs.
int cmd_verify(const Globals& g) {
    auto s = load_settings(g);
    torch::manual_seed(s.train.seed);
    int failed = 0;
    auto check = [&](const std::string& name, bool ok) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
        failed += !ok;
    };

    check("dconvb_parameter_count", count_parameters(*DConvB(3, 16)) == 2896);

    {
        AttentionGate ag(AttentionGateSpec{8, 8, 0});
        torch::NoGradGuard ng;
        bool ok = true;
        for (int i = 0; i < 20; ++i) {
            auto a = ag->forward_with_alpha(torch::randn({1, 8, 6, 6}), torch::randn({1, 8, 6, 6})).alpha;
            ok = ok && a.min().item<float>() > 0 && a.max().item<float>() < 1;
        }
        ag->psi->weight.zero_();
        auto x = torch::randn({1, 8, 6, 6});
        ok = ok && torch::allclose(ag->forward(torch::randn({1, 8, 6, 6}), x), 0.5 * x, 0, 1e-6);
        check("attention_gate_bounds", ok);
    }

    {
        bool ok = true;
        std::int64_t all = 0;
        for (const auto& [label, flags] : ablation_rows()) {
            auto c = s.model;
            c.flags = flags;
            auto m = build_model(c);
            m->eval();
            torch::NoGradGuard ng;
            auto y = m->forward(torch::rand({1, c.in_channels, c.input_size.h, c.input_size.w}));
            ok = ok && y.sizes() == torch::IntArrayRef({1, c.num_classes, c.input_size.h, c.input_size.w});
            ok = ok && (torch::softmax(y.to(torch::kFloat64), 1).sum(1) - 1).abs().max().item<double>() < 1e-6;
            if (flags == AblationFlags{}) all = parameter_count(m);
        }
        for (const auto& [label, flags] : ablation_rows()) {
            auto c = s.model;
            c.flags = flags;
            auto m = build_model(c);
            if (!(flags == AblationFlags{})) ok = ok && parameter_count(m) < all;
        }
        check("model_shapes_and_ablation_accounting", ok);
    }

    {
        auto m = build_model(s.model);
        m->eval();
        std::stringstream buf;
        write_checkpoint(buf, capture(m, 0));
        auto m2 = model_from_checkpoint(read_checkpoint(buf));
        m2->eval();
        torch::NoGradGuard ng;
        auto x = torch::rand({1, s.model.in_channels, s.model.input_size.h, s.model.input_size.w});
        check("checkpoint_roundtrip", torch::equal(m->forward(x), m2->forward(x)));
    }

    {
        Rng rng(s.train.seed);
        bool ok = true;
        for (int t = 0; t < 200; ++t) {
            metrics::BinaryMask a(8, 8), b(8, 8);
            for (auto& p : a.px) p = rng.uniform() < 0.3;
            for (auto& p : b.px) p = rng.uniform() < 0.3;
            const double d = metrics::dice(a, b), j = metrics::iou(a, b);
            ok = ok && std::abs(j - d / (2 - d)) < 1e-12 && metrics::hd95(a, b) == metrics::hd95(b, a);
        }
        check("metric_identities", ok);
    }

    {
        data::AugmentationPolicy p;
        p.rng_seed = s.train.seed;
        int hf = 0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) hf += data::decide(p, data::draw_for(p, 0, static_cast<std::uint64_t>(i))).hflip;
        check("augmentation_rate", std::abs(hf / double(n) - 0.2) <= 3 * std::sqrt(0.16 / n));
    }

    std::cout << (failed ? "verify: " + std::to_string(failed) + " check(s) failed" : std::string("verify: ok")) << "\n";
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pagty: tri-branch segmentation network with dual attention gates"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config_path, "JSON config with optional preset/model/train/layout sections");
    app.add_option("--seed", g.seed, "Random seed (overrides train.seed)");
    app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
    app.add_option("--workers", g.workers, "Data-loading worker threads")->check(CLI::PositiveNumber);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

    std::string data_root;

    auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic shapes dataset to --out-dir");
    data::SyntheticSpec spec;
    bool overwrite = false;
    gen->add_option("--n-images", spec.n_images, "Number of image/mask pairs")->capture_default_str();
    gen->add_option("--height", spec.height)->capture_default_str();
    gen->add_option("--width", spec.width)->capture_default_str();
    gen->add_option("--classes", spec.classes, "Class count including background")->capture_default_str();
    gen->add_flag("--overwrite", overwrite, "Replace an existing dataset");

    auto* tr = app.add_subcommand("train", "Train a model; writes best.ckpt, last.ckpt, history.csv");
    tr->add_option("--data", data_root, "Dataset root (images/, masks/, optional groups.csv)")->required();

    auto* ev = app.add_subcommand("eval", "Score checkpoints on a dataset split");
    std::vector<std::string> checkpoints;
    std::string split = "auto", scheme = "mean_per_image";
    int num_classes = 0;
    ev->add_option("--checkpoint", checkpoints, "Checkpoint file(s); several are aggregated by --scheme")->required();
    ev->add_option("--data", data_root, "Dataset root")->required();
    ev->add_option("--split", split, "auto|all|train|val|test")->capture_default_str();
    ev->add_option("--scheme", scheme, "mean_per_image|five_fold|three_runs_of_five_fold")->capture_default_str();
    ev->add_option("--num-classes", num_classes, "Dataset class count (default: from config or checkpoint)");

    auto* pr = app.add_subcommand("predict", "Predict a class mask and overlay for one image");
    std::string checkpoint, input, output;
    pr->add_option("--checkpoint", checkpoint)->required();
    pr->add_option("--input", input)->required();
    pr->add_option("--output", output, "Mask path (default: <out-dir>/<stem>_mask.png)");

    auto* ab = app.add_subcommand("ablate", "Train and score the four ablation rows");
    bool params_only = false;
    ab->add_option("--data", data_root, "Dataset root");
    ab->add_flag("--params-only", params_only, "Only report parameter counts");

    auto* ve = app.add_subcommand("verify", "Run the invariant self-checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ExitCode::config);
    }

    log::quiet() = !verbose;
    torch::set_num_threads(std::max(1, g.workers.value_or(1)));
    try {
        if (gen->parsed()) return cmd_gen_synthetic(g, spec, overwrite);
        if (tr->parsed()) return cmd_train(g, data_root);
        if (ev->parsed()) return cmd_eval(g, checkpoints, data_root, split, scheme, num_classes);
        if (pr->parsed()) return cmd_predict(g, checkpoint, input, output);
        if (ab->parsed()) {
            if (data_root.empty() && !params_only) throw ConfigError("ablate: --data is required unless --params-only");
            return cmd_ablate(g, data_root, params_only);
        }
        if (ve->parsed()) return cmd_verify(g);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(exit_code_for(e));
    }
    return 0;
}
