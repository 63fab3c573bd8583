// SPDX-License-Identifier: Apache-2.0
// maven: train, evaluate and compare the model variants from a config file.
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>

#include "fetch.hpp"
#include "maven/experiment.hpp"

namespace fs = std::filesystem;
using namespace maven;

namespace {

struct Common {
    fs::path config;
    std::optional<std::uint64_t> seed;
    fs::path out;
    bool overwrite = false;
    std::optional<std::size_t> repeats;
};

ExperimentConfig load(const Common& c) {
    ExperimentConfig cfg = validate_config(c.config);
    if (c.seed) cfg.train.seed = *c.seed;
    if (!c.out.empty()) cfg.out_dir = c.out;
    if (c.repeats) cfg.repeats = *c.repeats;
    return cfg;
}

int cmd_train(const Common& c) {
    ExperimentConfig cfg = load(c);
    const fs::path out = resolve_out_dir(cfg);
    prepare_output_dir(out, c.overwrite);
    const LoadedData data = load_experiment_data(cfg);
    {
        std::ofstream f(out / "config.txt");
        f << render_config(cfg);
    }
    TrainResult r = train(data.train, cfg.model, cfg.train, TrainOptions{out, &std::cout});
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "wrote " << (out / "history.csv").string() << " and " << r.checkpoints.size() << " checkpoint(s)\n";
    return 0;
}

int cmd_run(const Common& c) {
    const ReportBundle b = run_experiment(load(c), RunOptions{c.overwrite, &std::cout});
    std::cout << generative_table_header() << '\n' << generative_table_row(b) << '\n';
    std::cout << classification_table_header(b.class_names) << '\n' << classification_table_row(b) << '\n';
    return b.exit_code();
}

int cmd_eval(const Common& c, const fs::path& checkpoint) {
    ExperimentConfig cfg = load(c);
    const LoadedData data = load_experiment_data(cfg);
    ModelState state = load_model(checkpoint);
    const MetricReport r = evaluate_model(state, data, cfg.eval, cfg.train.seed);
    const std::string json = r.to_json();
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        const fs::path path = c.out / "metrics.json";
        if (fs::exists(path) && !c.overwrite) throw ExperimentError(path.string() + " exists; pass --overwrite");
        std::ofstream(path) << json;
        std::cout << "wrote " << path.string() << '\n';
    } else {
        std::cout << json;
    }
    return 0;
}

int cmd_sweep(const Common& c) {
    const auto bundles = run_sweep(load(c), RunOptions{c.overwrite, &std::cout});
    std::cout << generative_table_header() << '\n';
    for (const auto& b : bundles) std::cout << generative_table_row(b) << '\n';
    std::cout << classification_table_header(bundles.front().class_names) << '\n';
    for (const auto& b : bundles) std::cout << classification_table_row(b) << '\n';
    const bool any_ok = std::any_of(bundles.begin(), bundles.end(), [](const auto& b) { return b.exit_code() == 0; });
    return any_ok ? 0 : 1;
}

// A sample source is either a text file of numbers or a directory of images
// (searched recursively; each image contributes its mean intensity mapped to [-1, 1]).
std::vector<double> read_samples(const fs::path& p) {
    std::vector<double> out;
    if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(p)) {
            if (e.is_regular_file()) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const cv::Mat img = cv::imread(f.string(), cv::IMREAD_UNCHANGED);
            if (img.empty()) continue;
            const cv::Scalar m = cv::mean(img);
            double s = 0.0;
            for (int ch = 0; ch < img.channels(); ++ch) s += m[ch];
            out.push_back(s / img.channels() / 127.5 - 1.0);
        }
    } else {
        std::ifstream in(p);
        if (!in) throw std::runtime_error("cannot open " + p.string());
        double v;
        while (in >> v) out.push_back(v);
    }
    if (out.empty()) throw std::runtime_error("no samples read from " + p.string());
    return out;
}

int cmd_plot(const Common& c, const fs::path& real, const fs::path& fake, const fs::path& checkpoint, std::size_t bins) {
    std::vector<double> r, f;
    if (!checkpoint.empty()) {
        ExperimentConfig cfg = load(c);
        const LoadedData data = load_experiment_data(cfg);
        ModelState state = load_model(checkpoint);
        Rng rng(cfg.train.seed);
        r = project(data.train->images, cfg.eval.projection);
        f = project(sample_images(state, data.train->size(), rng), cfg.eval.projection);
    } else {
        r = read_samples(real);
        f = read_samples(fake);
    }
    const fs::path stem = c.out.empty() ? fs::path("density") : c.out;
    if (!stem.parent_path().empty()) fs::create_directories(stem.parent_path());
    for (const auto& p : emit_density_histogram(r, f, bins, stem)) std::cout << "wrote " << p.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"maven: multi-discriminator VAE-GAN training and evaluation"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* opt = sub->add_option("--config", common.config, "experiment config (key = value)");
        if (needs_config) opt->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "base seed (overrides the config)");
        sub->add_option("--out", common.out, "output directory (overrides the config and MAVEN_OUT_ROOT)");
        sub->add_flag("--overwrite", common.overwrite, "replace an existing output directory");
        sub->add_option("--repeats", common.repeats, "number of repeated-seed runs");
    };

    auto* train_cmd = app.add_subcommand("train", "train one model: history.csv and checkpoints");
    add_common(train_cmd);
    auto* run_cmd = app.add_subcommand("run", "train and evaluate one model over repeated seeds");
    add_common(run_cmd);
    fs::path checkpoint;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint: FID, DDD, accuracy, per-class F1");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
    auto* sweep_cmd = app.add_subcommand("sweep", "run the eight-model comparison grid");
    add_common(sweep_cmd);

    fs::path real, fake, plot_ckpt;
    std::size_t bins = 50;
    auto* plot_cmd = app.add_subcommand("plot-density", "overlaid density histograms of real and generated samples");
    add_common(plot_cmd, false);
    plot_cmd->add_option("--real", real, "image directory or text file of scalars");
    plot_cmd->add_option("--fake", fake, "image directory or text file of scalars");
    plot_cmd->add_option("--checkpoint", plot_ckpt, "generate fake samples from this checkpoint (needs --config)");
    plot_cmd->add_option("--bins", bins, "histogram bins")->check(CLI::Range(std::size_t{2}, std::size_t{100000}));

    std::string dataset;
    fs::path dest = "data";
    std::string url_override;
    auto* fetch_cmd = app.add_subcommand("fetch-data", "download benchmark data and verify checksums");
    fetch_cmd->add_option("dataset", dataset, "cifar10 or svhn")->required();
    fetch_cmd->add_option("--dest", dest, "destination directory");
    fetch_cmd->add_option("--mirror", url_override, "base URL replacing the default host (file names unchanged)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train_cmd) return cmd_train(common);
        if (*run_cmd) return cmd_run(common);
        if (*eval_cmd) return cmd_eval(common, checkpoint);
        if (*sweep_cmd) return cmd_sweep(common);
        if (*plot_cmd) {
            if (plot_ckpt.empty() && (real.empty() || fake.empty())) {
                std::cerr << "plot-density: give --real and --fake, or --config with --checkpoint\n";
                return 2;
            }
            if (!plot_ckpt.empty() && common.config.empty()) {
                std::cerr << "plot-density: --checkpoint needs --config\n";
                return 2;
            }
            return cmd_plot(common, real, fake, plot_ckpt, bins);
        }
        if (*fetch_cmd) {
            for (auto a : fetch::dataset_artifacts(dataset)) {
                if (!url_override.empty()) a.url = url_override + "/" + a.file;
                fetch::fetch_artifact(a, dest, std::cout);
            }
            return 0;
        }
    } catch (const ConfigErrors& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
