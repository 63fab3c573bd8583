// SPDX-License-Identifier: Apache-2.0
#include "maven/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace maven {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text, std::vector<fs::path>& files) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.close();
    if (!out) throw ExperimentError("cannot write " + path.string());
    files.push_back(path);
}

}  // namespace

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::cifar10: return "cifar10";
        case DatasetKind::svhn: return "svhn";
        case DatasetKind::folder: return "folder";
        case DatasetKind::glyphs: return "glyphs";
        case DatasetKind::ring: return "ring";
    }
    return "glyphs";
}

std::string ExperimentConfig::model_label() const {
    switch (model.kind) {
        case ModelKind::dcgan: return "DC-GAN";
        case ModelKind::vaegan: return "VAE-GAN";
        case ModelKind::maven: break;
    }
    return std::string("MAVEN-") + (model.ensemble.mode == EnsembleMode::mean ? "mean" : "rand") +
           " K=" + std::to_string(model.ensemble.k);
}

// ---------------------------------------------------------------- config parsing

ConfigErrors::ConfigErrors(std::vector<ConfigIssue> issues)
    : std::runtime_error([&] {
          std::string msg = "invalid configuration:";
          for (const auto& i : issues) {
              msg += "\n  ";
              if (i.line > 0) msg += "line " + std::to_string(i.line) + ": ";
              if (!i.key.empty()) msg += "'" + i.key + "': ";
              msg += i.message;
          }
          return msg;
      }()),
      issues_(std::move(issues)) {}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) {
        throw std::invalid_argument("expected a finite number, got '" + v + "'");
    }
    return out;
}

template <typename F>
auto parse_list(const std::string& v, F item) {
    std::vector<decltype(item(std::string{}))> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(item(trim(part)));
    if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
    return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"model", [](auto& c, const auto& v) { c.model.kind = model_kind_from_string(v); }},
        {"seed", [](auto& c, const auto& v) { c.train.seed = parse_size(v); }},
        {"repeats", [](auto& c, const auto& v) { c.repeats = parse_size(v); }},
        {"output.dir", [](auto& c, const auto& v) { c.out_dir = v; }},
        {"ensemble.k", [](auto& c, const auto& v) { c.model.ensemble.k = parse_size(v); }},
        {"ensemble.mode", [](auto& c, const auto& v) { c.model.ensemble.mode = ensemble_mode_from_string(v); }},
        {"ensemble.weights", [](auto& c, const auto& v) { c.model.ensemble.weights = parse_list(v, parse_real); }},
        {"network.latent_dim", [](auto& c, const auto& v) { c.model.network.latent_dim = parse_size(v); }},
        {"network.widths", [](auto& c, const auto& v) { c.model.network.widths = parse_list(v, parse_size); }},
        {"network.leaky_relu_alpha", [](auto& c, const auto& v) { c.model.network.leaky_relu_alpha = parse_real(v); }},
        {"network.dropout_rate", [](auto& c, const auto& v) { c.model.network.dropout_rate = parse_real(v); }},
        {"dataset.kind",
         [](auto& c, const auto& v) {
             static const std::map<std::string, DatasetKind> kinds = {{"cifar10", DatasetKind::cifar10},
                                                                      {"svhn", DatasetKind::svhn},
                                                                      {"folder", DatasetKind::folder},
                                                                      {"glyphs", DatasetKind::glyphs},
                                                                      {"ring", DatasetKind::ring}};
             const auto it = kinds.find(v);
             if (it == kinds.end()) throw std::invalid_argument("dataset.kind must be cifar10, svhn, folder, glyphs or ring");
             c.dataset.kind = it->second;
         }},
        {"dataset.path", [](auto& c, const auto& v) { c.dataset.path = v; }},
        {"dataset.image_size", [](auto& c, const auto& v) { c.dataset.image_size = parse_size(v); }},
        {"dataset.channels", [](auto& c, const auto& v) { c.dataset.channels = parse_size(v); }},
        {"dataset.train_count", [](auto& c, const auto& v) { c.dataset.train_count = parse_size(v); }},
        {"dataset.test_count", [](auto& c, const auto& v) { c.dataset.test_count = parse_size(v); }},
        {"dataset.side", [](auto& c, const auto& v) { c.dataset.side = parse_size(v); }},
        {"dataset.noise", [](auto& c, const auto& v) { c.dataset.noise = parse_real(v); }},
        {"dataset.modes", [](auto& c, const auto& v) { c.dataset.modes = parse_size(v); }},
        {"dataset.radius", [](auto& c, const auto& v) { c.dataset.radius = parse_real(v); }},
        {"dataset.sigma", [](auto& c, const auto& v) { c.dataset.sigma = parse_real(v); }},
        {"dataset.seed", [](auto& c, const auto& v) { c.dataset.seed = parse_size(v); }},
        {"train.batch_size", [](auto& c, const auto& v) { c.train.batch_size = parse_size(v); }},
        {"train.epochs", [](auto& c, const auto& v) { c.train.epochs = parse_size(v); }},
        {"train.samples_per_epoch", [](auto& c, const auto& v) { c.train.samples_per_epoch = parse_size(v); }},
        {"train.labeled_fraction", [](auto& c, const auto& v) { c.train.labeled_fraction = parse_real(v); }},
        {"train.lr_g", [](auto& c, const auto& v) { c.train.lr_g = parse_real(v); }},
        {"train.lr_d", [](auto& c, const auto& v) { c.train.lr_d = parse_real(v); }},
        {"train.lr_e", [](auto& c, const auto& v) { c.train.lr_e = parse_real(v); }},
        {"train.beta1", [](auto& c, const auto& v) { c.train.adam_beta1 = parse_real(v); }},
        {"train.checkpoint_interval", [](auto& c, const auto& v) { c.train.checkpoint_interval = parse_size(v); }},
        {"eval.samples", [](auto& c, const auto& v) { c.eval.samples = parse_size(v); }},
        {"eval.fid_repeats", [](auto& c, const auto& v) { c.eval.fid_repeats = parse_size(v); }},
        {"eval.ddd_weights",
         [](auto& c, const auto& v) {
             const auto w = parse_list(v, parse_real);
             if (w.size() != 4) throw std::invalid_argument("eval.ddd_weights needs exactly 4 values");
             std::copy(w.begin(), w.end(), c.eval.ddd_weights.begin());
         }},
        {"eval.projection",
         [](auto& c, const auto& v) {
             if (v == "image_mean") c.eval.projection = Projection::image_mean;
             else if (v == "flattened") c.eval.projection = Projection::flattened;
             else throw std::invalid_argument("eval.projection must be image_mean or flattened");
         }},
        {"eval.histogram_bins", [](auto& c, const auto& v) { c.eval.histogram_bins = parse_size(v); }},
        {"eval.embedder_seed", [](auto& c, const auto& v) { c.eval.embedder_seed = parse_size(v); }},
        {"sweep.k_values", [](auto& c, const auto& v) { c.sweep_k = parse_list(v, parse_size); }},
    };
    return table;
}

// Keys that only make sense with an encoder.
const std::set<std::string> kEncoderKeys = {"train.lr_e"};

}  // namespace

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
    ExperimentConfig cfg;
    std::vector<ConfigIssue> issues;
    std::map<std::string, std::size_t> seen;  // key -> line
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(std::string_view(raw).substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            issues.push_back({line_no, "", "expected 'key = value'"});
            continue;
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) {
            issues.push_back({line_no, key, "unknown key"});
            continue;
        }
        if (seen.contains(key)) {
            issues.push_back({line_no, key, "duplicate key (first set on line " + std::to_string(seen[key]) + ")"});
            continue;
        }
        seen[key] = line_no;
        try {
            it->second(cfg, value);
        } catch (const std::exception& e) {
            issues.push_back({line_no, key, e.what()});
        }
    }

    auto line_of = [&](const std::string& key) { return seen.contains(key) ? seen[key] : std::size_t{0}; };
    if (cfg.model.kind == ModelKind::dcgan) {
        for (const auto& k : kEncoderKeys) {
            if (seen.contains(k)) issues.push_back({line_of(k), k, "model dcgan has no encoder; remove this key"});
        }
    }
    auto& ens = cfg.model.ensemble;
    if (cfg.model.kind != ModelKind::maven && ens.k > 1) {
        issues.push_back({line_of("ensemble.k"), "ensemble.k", "only model maven supports more than one discriminator"});
    }
    if (!seen.contains("ensemble.weights")) ens.weights.assign(ens.k, 1.0);
    try {
        ens.validate();
    } catch (const std::exception& e) {
        issues.push_back({line_of("ensemble.weights"), "ensemble", e.what()});
    }
    try {
        cfg.train.validate();
    } catch (const std::exception& e) {
        issues.push_back({0, "train", e.what()});
    }
    if (cfg.repeats == 0) issues.push_back({line_of("repeats"), "repeats", "must be >= 1"});
    if (cfg.eval.fid_repeats == 0) issues.push_back({line_of("eval.fid_repeats"), "eval.fid_repeats", "must be >= 1"});
    if (cfg.eval.histogram_bins < 2) issues.push_back({line_of("eval.histogram_bins"), "eval.histogram_bins", "must be >= 2"});
    {
        double s = 0.0;
        bool in_range = true;
        for (double w : cfg.eval.ddd_weights) {
            s += w;
            in_range = in_range && w > 0.0 && w < 1.0;
        }
        if (!in_range || std::abs(s - 1.0) > 1e-9) {
            issues.push_back({line_of("eval.ddd_weights"), "eval.ddd_weights", "weights must lie in (0, 1) and sum to 1"});
        }
    }
    if (cfg.sweep_k.empty() || std::any_of(cfg.sweep_k.begin(), cfg.sweep_k.end(), [](auto k) { return k < 1; })) {
        issues.push_back({line_of("sweep.k_values"), "sweep.k_values", "values must be >= 1"});
    }
    if (cfg.dataset.channels != 1 && cfg.dataset.channels != 3) {
        issues.push_back({line_of("dataset.channels"), "dataset.channels", "must be 1 or 3"});
    }
    const auto kind = cfg.dataset.kind;
    if (kind == DatasetKind::cifar10 || kind == DatasetKind::svhn || kind == DatasetKind::folder) {
        if (cfg.dataset.path.empty()) {
            issues.push_back({0, "dataset.path", "required for dataset " + to_string(kind)});
        } else {
            if (cfg.dataset.path.is_relative() && !base_dir.empty()) cfg.dataset.path = base_dir / cfg.dataset.path;
            if (!fs::exists(cfg.dataset.path)) {
                issues.push_back({line_of("dataset.path"), "dataset.path", "path does not exist: " + cfg.dataset.path.string()});
            }
        }
    }
    if (!cfg.out_dir.empty() && cfg.out_dir.is_relative() && !base_dir.empty()) cfg.out_dir = base_dir / cfg.out_dir;
    if (!issues.empty()) throw ConfigErrors(std::move(issues));
    return cfg;
}

ExperimentConfig validate_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigErrors({{0, "", "cannot open config file " + path.string()}});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::string render_config(const ExperimentConfig& c) {
    auto list = [](const auto& v, auto fmt) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
        return s;
    };
    auto num = [](double v) { return format_double(v); };
    auto sz = [](std::size_t v) { return std::to_string(v); };
    std::ostringstream os;
    os << "model = " << to_string(c.model.kind) << '\n'
       << "seed = " << c.train.seed << '\n'
       << "repeats = " << c.repeats << '\n';
    if (!c.out_dir.empty()) os << "output.dir = " << c.out_dir.string() << '\n';
    os << "ensemble.k = " << c.model.ensemble.k << '\n'
       << "ensemble.mode = " << to_string(c.model.ensemble.mode) << '\n'
       << "ensemble.weights = " << list(c.model.ensemble.weights, num) << '\n'
       << "network.latent_dim = " << c.model.network.latent_dim << '\n'
       << "network.widths = " << list(c.model.network.widths, sz) << '\n'
       << "network.leaky_relu_alpha = " << num(c.model.network.leaky_relu_alpha) << '\n'
       << "network.dropout_rate = " << num(c.model.network.dropout_rate) << '\n'
       << "dataset.kind = " << to_string(c.dataset.kind) << '\n';
    if (!c.dataset.path.empty()) os << "dataset.path = " << c.dataset.path.string() << '\n';
    os << "dataset.image_size = " << c.dataset.image_size << '\n'
       << "dataset.channels = " << c.dataset.channels << '\n'
       << "dataset.train_count = " << c.dataset.train_count << '\n'
       << "dataset.test_count = " << c.dataset.test_count << '\n'
       << "dataset.side = " << c.dataset.side << '\n'
       << "dataset.noise = " << num(c.dataset.noise) << '\n'
       << "dataset.modes = " << c.dataset.modes << '\n'
       << "dataset.radius = " << num(c.dataset.radius) << '\n'
       << "dataset.sigma = " << num(c.dataset.sigma) << '\n'
       << "dataset.seed = " << c.dataset.seed << '\n'
       << "train.batch_size = " << c.train.batch_size << '\n'
       << "train.epochs = " << c.train.epochs << '\n'
       << "train.samples_per_epoch = " << c.train.samples_per_epoch << '\n'
       << "train.labeled_fraction = " << num(c.train.labeled_fraction) << '\n'
       << "train.lr_g = " << num(c.train.lr_g) << '\n'
       << "train.lr_d = " << num(c.train.lr_d) << '\n';
    if (c.model.uses_encoder()) os << "train.lr_e = " << num(c.train.lr_e) << '\n';
    os << "train.beta1 = " << num(c.train.adam_beta1) << '\n'
       << "train.checkpoint_interval = " << c.train.checkpoint_interval << '\n'
       << "eval.samples = " << c.eval.samples << '\n'
       << "eval.fid_repeats = " << c.eval.fid_repeats << '\n'
       << "eval.ddd_weights = " << list(c.eval.ddd_weights, num) << '\n'
       << "eval.projection = " << (c.eval.projection == Projection::image_mean ? "image_mean" : "flattened") << '\n'
       << "eval.histogram_bins = " << c.eval.histogram_bins << '\n'
       << "eval.embedder_seed = " << c.eval.embedder_seed << '\n'
       << "sweep.k_values = " << list(c.sweep_k, sz) << '\n';
    return os.str();
}

// ---------------------------------------------------------------- data

LoadedData load_experiment_data(ExperimentConfig& cfg) {
    const auto& d = cfg.dataset;
    DatasetSplit train, test;
    switch (d.kind) {
        case DatasetKind::cifar10:
            train = load_cifar10(d.path, "train");
            test = load_cifar10(d.path, "test");
            break;
        case DatasetKind::svhn:
            train = load_svhn(d.path, "train");
            test = load_svhn(d.path, "test");
            break;
        case DatasetKind::folder:
            train = load_image_folder(d.path / "train", d.image_size, d.channels);
            test = load_image_folder(d.path / "test", d.image_size, d.channels);
            if (train.class_names != test.class_names) throw DataError("folder: train/ and test/ class folders differ");
            break;
        case DatasetKind::glyphs:
            train = make_glyphs(d.train_count, d.side, d.noise, d.seed, "train");
            test = make_glyphs(d.test_count, d.side, d.noise, d.seed + 1, "test");
            break;
        case DatasetKind::ring: {
            // Raw coordinates are scaled so the ring sits inside the generator's tanh range.
            const double scale = 1.0 / (1.25 * d.radius);
            train = scale_images(make_toy_ring(d.modes, std::max<std::size_t>(1, d.train_count / d.modes), d.radius,
                                               d.sigma, d.seed), scale);
            test = scale_images(make_toy_ring(d.modes, std::max<std::size_t>(1, d.test_count / d.modes), d.radius,
                                              d.sigma, d.seed + 1), scale);
            test.split = "test";
            break;
        }
    }
    cfg.model.network.image_shape = train.image_shape();
    cfg.model.network.n_classes = train.n_classes();
    cfg.model.network.validate();
    return {std::make_shared<const DatasetSplit>(std::move(train)), std::make_shared<const DatasetSplit>(std::move(test))};
}

// ---------------------------------------------------------------- reports

namespace {

json moments_json(const MomentSummary& m) {
    return json{{"mean", m.m1}, {"variance", m.m2}, {"skewness", m.m3}, {"excess_kurtosis", m.m4}, {"count", m.count}};
}

MomentSummary moments_from(const json& j) {
    MomentSummary m;
    m.m1 = j.at("mean").get<double>();
    m.m2 = j.at("variance").get<double>();
    m.m3 = j.at("skewness").get<double>();
    m.m4 = j.at("excess_kurtosis").get<double>();
    m.count = j.at("count").get<std::size_t>();
    return m;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

std::string MetricReport::to_json() const {
    json j{{"repeat", repeat}, {"seed", seed}, {"ok", ok}};
    if (!ok) j["error"] = error;
    if (ok) {
        j["fid"] = {{"values", fid_values}, {"mean", fid_mean}, {"std", fid_std}};
        j["ddd"] = ddd;
        j["moments_real"] = moments_json(real_moments);
        j["moments_fake"] = moments_json(fake_moments);
        j["accuracy"] = accuracy;
        j["f1"] = f1;
    }
    j["warnings"] = warnings;
    return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
    const json j = json::parse(text);
    MetricReport r;
    r.repeat = j.at("repeat").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ok = j.at("ok").get<bool>();
    if (j.contains("error")) r.error = j.at("error").get<std::string>();
    if (r.ok) {
        r.fid_values = j.at("fid").at("values").get<std::vector<double>>();
        r.fid_mean = j.at("fid").at("mean").get<double>();
        r.fid_std = j.at("fid").at("std").get<double>();
        r.ddd = j.at("ddd").get<double>();
        r.real_moments = moments_from(j.at("moments_real"));
        r.fake_moments = moments_from(j.at("moments_fake"));
        r.accuracy = j.at("accuracy").get<double>();
        r.f1 = j.at("f1").get<std::vector<double>>();
    }
    if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
}

Aggregate aggregate_reports(const std::vector<MetricReport>& reports) {
    Aggregate a;
    std::vector<double> fid, ddd, acc;
    std::vector<std::vector<double>> f1;
    for (const auto& r : reports) {
        if (!r.ok) continue;
        ++a.succeeded;
        fid.push_back(r.fid_mean);
        ddd.push_back(r.ddd);
        acc.push_back(r.accuracy);
        f1.push_back(r.f1);
    }
    std::tie(a.fid_mean, a.fid_std) = mean_std(fid);
    std::tie(a.ddd_mean, a.ddd_std) = mean_std(ddd);
    std::tie(a.accuracy_mean, a.accuracy_std) = mean_std(acc);
    if (!f1.empty()) {
        a.f1_mean.assign(f1.front().size(), 0.0);
        for (const auto& row : f1) {
            for (std::size_t c = 0; c < row.size() && c < a.f1_mean.size(); ++c) a.f1_mean[c] += row[c];
        }
        for (double& v : a.f1_mean) v /= static_cast<double>(f1.size());
    }
    return a;
}

// ---------------------------------------------------------------- tables

std::string generative_table_header() { return "model,FID,DDD,fid_mean,fid_std,ddd_mean,ddd_std,repeats_ok"; }

std::string generative_table_row(const ReportBundle& b) {
    const auto& a = b.aggregate;
    return b.model + "," + fixed(a.fid_mean, 3) + "±" + fixed(a.fid_std, 3) + "," + fixed(a.ddd_mean, 3) + "," +
           format_double(a.fid_mean) + "," + format_double(a.fid_std) + "," + format_double(a.ddd_mean) + "," +
           format_double(a.ddd_std) + "," + std::to_string(a.succeeded);
}

std::string classification_table_header(const std::vector<std::string>& class_names) {
    std::string h = "model,accuracy (repeated-seed mean)";
    for (const auto& c : class_names) h += ",F1 " + c;
    return h;
}

std::string classification_table_row(const ReportBundle& b) {
    std::string row = b.model + "," + fixed(b.aggregate.accuracy_mean, 3);
    for (std::size_t c = 0; c < b.class_names.size(); ++c) {
        row += "," + fixed(c < b.aggregate.f1_mean.size() ? b.aggregate.f1_mean[c] : 0.0, 3);
    }
    return row;
}

// ---------------------------------------------------------------- density histograms

std::vector<double> project(const Tensor& images, Projection p) {
    return p == Projection::image_mean ? per_image_means(images) : flattened_pixels(images);
}

DensityHistogram compute_density_histogram(std::span<const double> real, std::span<const double> fake,
                                           std::size_t bins) {
    if (bins < 2) throw std::invalid_argument("density histogram: bins must be >= 2");
    if (real.empty() || fake.empty()) throw std::invalid_argument("density histogram: both sample sets must be non-empty");
    double lo = real.front(), hi = real.front();
    for (auto set : {real, fake}) {
        for (double v : set) {
            if (!std::isfinite(v)) throw std::invalid_argument("density histogram: non-finite sample");
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    DensityHistogram h;
    h.edges.resize(bins + 1);
    const double w = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + w * static_cast<double>(i);
    h.edges.back() = hi;
    auto fill = [&](std::span<const double> xs, std::vector<double>& out) {
        std::vector<std::size_t> counts(bins, 0);
        for (double v : xs) {
            auto b = static_cast<std::size_t>(std::floor((v - lo) / w));
            ++counts[std::min(b, bins - 1)];
        }
        out.resize(bins);
        for (std::size_t i = 0; i < bins; ++i) {
            out[i] = static_cast<double>(counts[i]) / (static_cast<double>(xs.size()) * h.width(i));
        }
    };
    fill(real, h.density_real);
    fill(fake, h.density_fake);
    return h;
}

double histogram_overlap(const DensityHistogram& h) {
    double s = 0.0;
    for (std::size_t i = 0; i < h.bins(); ++i) s += std::min(h.density_real[i], h.density_fake[i]) * h.width(i);
    return s;
}

namespace {

void render_histogram_png(const DensityHistogram& h, const fs::path& path) {
    constexpr int W = 640, H = 400, L = 50, R = 20, T = 30, B = 40;
    cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
    double peak = 0.0;
    for (std::size_t i = 0; i < h.bins(); ++i) peak = std::max({peak, h.density_real[i], h.density_fake[i]});
    if (peak <= 0.0) peak = 1.0;
    const double span = h.edges.back() - h.edges.front();
    auto px = [&](double x) { return L + static_cast<int>(std::lround((x - h.edges.front()) / span * (W - L - R))); };
    auto py = [&](double d) { return H - B - static_cast<int>(std::lround(d / peak * (H - T - B))); };
    auto draw = [&](const std::vector<double>& dens, const cv::Scalar& color) {
        cv::Mat layer = img.clone();
        for (std::size_t i = 0; i < h.bins(); ++i) {
            cv::rectangle(layer, cv::Point(px(h.edges[i]), py(dens[i])), cv::Point(px(h.edges[i + 1]), H - B), color,
                          cv::FILLED);
        }
        cv::addWeighted(layer, 0.45, img, 0.55, 0.0, img);
    };
    draw(h.density_real, cv::Scalar(180, 110, 30));  // BGR: blue
    draw(h.density_fake, cv::Scalar(30, 130, 240));  // orange
    cv::line(img, {L, H - B}, {W - R, H - B}, cv::Scalar(0, 0, 0), 1);
    cv::line(img, {L, T}, {L, H - B}, cv::Scalar(0, 0, 0), 1);
    const auto font = cv::FONT_HERSHEY_SIMPLEX;
    cv::putText(img, fixed(h.edges.front(), 2), {L - 10, H - B + 20}, font, 0.4, cv::Scalar(0, 0, 0));
    cv::putText(img, fixed(h.edges.back(), 2), {W - R - 40, H - B + 20}, font, 0.4, cv::Scalar(0, 0, 0));
    cv::putText(img, fixed(peak, 2), {4, T + 4}, font, 0.4, cv::Scalar(0, 0, 0));
    cv::rectangle(img, {W - 150, 10}, {W - 138, 22}, cv::Scalar(180, 110, 30), cv::FILLED);
    cv::putText(img, "real", {W - 132, 21}, font, 0.45, cv::Scalar(0, 0, 0));
    cv::rectangle(img, {W - 80, 10}, {W - 68, 22}, cv::Scalar(30, 130, 240), cv::FILLED);
    cv::putText(img, "fake", {W - 62, 21}, font, 0.45, cv::Scalar(0, 0, 0));
    if (!cv::imwrite(path.string(), img)) throw ExperimentError("cannot write " + path.string());
}

}  // namespace

std::vector<fs::path> emit_density_histogram(std::span<const double> real, std::span<const double> fake,
                                             std::size_t bins, const fs::path& stem) {
    const DensityHistogram h = compute_density_histogram(real, fake, bins);
    std::ostringstream csv;
    csv << "bin_left,bin_right,density_real,density_fake\n";
    for (std::size_t i = 0; i < h.bins(); ++i) {
        csv << format_double(h.edges[i]) << ',' << format_double(h.edges[i + 1]) << ','
            << format_double(h.density_real[i]) << ',' << format_double(h.density_fake[i]) << '\n';
    }
    std::vector<fs::path> files;
    fs::path csv_path = stem;
    csv_path += ".csv";
    fs::path png_path = stem;
    png_path += ".png";
    write_text(csv_path, csv.str(), files);
    render_histogram_png(h, png_path);
    files.push_back(png_path);
    return files;
}

// ---------------------------------------------------------------- evaluation and runs

fs::path resolve_out_dir(const ExperimentConfig& cfg) {
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* root = std::getenv("MAVEN_OUT_ROOT"); root && *root) return fs::path(root);
    return fs::path("runs");
}

void prepare_output_dir(const fs::path& dir, bool overwrite) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw ExperimentError(dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir)) {
            if (!overwrite) {
                throw ExperimentError("output directory " + dir.string() + " is not empty; pass --overwrite to replace it");
            }
            fs::remove_all(dir);
        }
    }
    fs::create_directories(dir);
}

MetricReport evaluate_model(ModelState& state, const LoadedData& data, const EvalSpec& eval, std::uint64_t seed,
                            std::vector<double>* real_projection_out, std::vector<double>* fake_projection_out) {
    MetricReport r;
    r.seed = seed;
    const DatasetSplit& train = *data.train;
    const DatasetSplit& test = *data.test;
    Rng rng(seed ^ 0x5851f42d4c957f2dull);
    const std::size_t n = eval.samples == 0 ? train.size() : eval.samples;

    RandomConvEmbedder embedder(train.image_shape(), eval.embedder_seed);
    const GaussianStats real_stats = compute_gaussian_stats(embed_all(embedder, train.images));
    std::vector<double> fake_proj;
    for (std::size_t i = 0; i < eval.fid_repeats; ++i) {
        const Tensor fake = sample_images(state, n, rng);
        r.fid_values.push_back(compute_fid(real_stats, compute_gaussian_stats(embed_all(embedder, fake))));
        if (i == 0) fake_proj = project(fake, eval.projection);
    }
    std::tie(r.fid_mean, r.fid_std) = mean_std(r.fid_values);

    const std::vector<double> real_proj = project(train.images, eval.projection);
    r.real_moments = compute_moment_summary(real_proj);
    r.fake_moments = compute_moment_summary(fake_proj);
    r.ddd = compute_ddd(r.real_moments, r.fake_moments, eval.ddd_weights);

    const auto preds = predict_classes(classify(state, test.images));
    r.accuracy = accuracy(preds, test.labels);
    r.f1 = f1_per_class(confusion_counts(preds, test.labels, test.n_classes()));
    r.ok = true;
    if (real_projection_out) *real_projection_out = real_proj;
    if (fake_projection_out) *fake_projection_out = std::move(fake_proj);
    return r;
}

namespace {

std::vector<fs::path> files_under(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

json aggregate_json(const ReportBundle& b) {
    const auto& a = b.aggregate;
    return json{{"model", b.model},
                {"repeats", b.reports.size()},
                {"succeeded", a.succeeded},
                {"fid", {{"mean", a.fid_mean}, {"std", a.fid_std}}},
                {"ddd", {{"mean", a.ddd_mean}, {"std", a.ddd_std}}},
                {"accuracy", {{"mean", a.accuracy_mean}, {"std", a.accuracy_std}}},
                {"f1_mean", a.f1_mean},
                {"class_names", b.class_names}};
}

std::string repeat_dir_name(std::size_t r) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "repeat_%02zu", r);
    return buf;
}

}  // namespace

ReportBundle run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    ExperimentConfig cfg = config;
    const fs::path out = resolve_out_dir(cfg);
    prepare_output_dir(out, options.overwrite);
    const LoadedData data = load_experiment_data(cfg);
    cfg.model.validate();

    ReportBundle bundle;
    bundle.model = cfg.model_label();
    bundle.class_names = data.train->class_names;
    auto guarded_write = [&](const fs::path& p, const std::string& text) {
        try {
            write_text(p, text, bundle.files);
        } catch (const std::exception& e) {
            bundle.artifacts_ok = false;
            if (options.progress) *options.progress << "error: " << e.what() << '\n';
        }
    };
    guarded_write(out / "config.txt", render_config(cfg));

    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const fs::path dir = out / repeat_dir_name(r);
        fs::create_directories(dir);
        MetricReport report;
        report.repeat = r;
        report.seed = cfg.train.seed + r;
        if (options.progress) *options.progress << bundle.model << " repeat " << r + 1 << '/' << cfg.repeats
                                                << " seed " << report.seed << std::endl;
        try {
            TrainingConfig tc = cfg.train;
            tc.seed = report.seed;
            TrainResult run = train(data.train, cfg.model, tc, TrainOptions{dir, options.progress});
            std::vector<double> real_proj, fake_proj;
            report = evaluate_model(run.state, data, cfg.eval, report.seed, &real_proj, &fake_proj);
            report.repeat = r;
            report.warnings = run.warnings;
            for (const auto& f : files_under(dir)) bundle.files.push_back(f);
            try {
                for (auto& f : emit_density_histogram(real_proj, fake_proj, cfg.eval.histogram_bins, dir / "density")) {
                    bundle.files.push_back(f);
                }
            } catch (const std::exception& e) {
                bundle.artifacts_ok = false;
                report.warnings.push_back(std::string("density histogram not written: ") + e.what());
            }
        } catch (const std::exception& e) {
            report.ok = false;
            report.error = e.what();
            for (const auto& f : files_under(dir)) bundle.files.push_back(f);
            if (options.progress) *options.progress << "repeat " << r + 1 << " failed: " << e.what() << std::endl;
        }
        guarded_write(dir / "metrics.json", report.to_json());
        bundle.reports.push_back(std::move(report));
    }

    bundle.aggregate = aggregate_reports(bundle.reports);
    guarded_write(out / "aggregate.json", aggregate_json(bundle).dump(2) + "\n");
    guarded_write(out / "table_generative.csv", generative_table_header() + "\n" + generative_table_row(bundle) + "\n");
    guarded_write(out / "table_classification.csv",
                  classification_table_header(bundle.class_names) + "\n" + classification_table_row(bundle) + "\n");

    json listing = json::array();
    const fs::path bundle_path = out / "bundle.json";
    bundle.files.push_back(bundle_path);
    std::sort(bundle.files.begin(), bundle.files.end());
    bundle.files.erase(std::unique(bundle.files.begin(), bundle.files.end()), bundle.files.end());
    for (const auto& f : bundle.files) listing.push_back(fs::relative(f, out).generic_string());
    json meta{{"model", bundle.model}, {"exit_code", bundle.exit_code()}, {"files", listing}};
    std::vector<fs::path> sink;
    try {
        write_text(bundle_path, meta.dump(2) + "\n", sink);
    } catch (const std::exception&) {
        bundle.artifacts_ok = false;
    }
    return bundle;
}

// ---------------------------------------------------------------- sweep

std::vector<ExperimentConfig> sweep_grid(const ExperimentConfig& base) {
    const fs::path root = resolve_out_dir(base);
    std::vector<ExperimentConfig> grid;
    auto add = [&](ModelKind kind, std::size_t k, EnsembleMode mode, const std::string& slug) {
        ExperimentConfig c = base;
        c.model.kind = kind;
        c.model.ensemble = EnsembleConfig::uniform(k, mode);
        c.out_dir = root / slug;
        grid.push_back(std::move(c));
    };
    add(ModelKind::dcgan, 1, EnsembleMode::mean, "dcgan");
    add(ModelKind::vaegan, 1, EnsembleMode::mean, "vaegan");
    for (auto mode : {EnsembleMode::mean, EnsembleMode::random}) {
        for (std::size_t k : base.sweep_k) {
            add(ModelKind::maven, k, mode, std::string("maven-") + (mode == EnsembleMode::mean ? "mean" : "rand") + "-k" +
                                               std::to_string(k));
        }
    }
    return grid;
}

std::vector<ReportBundle> run_sweep(const ExperimentConfig& base, const RunOptions& options) {
    const fs::path root = resolve_out_dir(base);
    prepare_output_dir(root, options.overwrite);
    std::vector<ReportBundle> bundles;
    for (const auto& cfg : sweep_grid(base)) {
        bundles.push_back(run_experiment(cfg, RunOptions{true, options.progress}));
    }
    std::string gen = generative_table_header() + "\n";
    std::string cls = classification_table_header(bundles.front().class_names) + "\n";
    for (const auto& b : bundles) {
        gen += generative_table_row(b) + "\n";
        cls += classification_table_row(b) + "\n";
    }
    std::vector<fs::path> files;
    write_text(root / "table_generative.csv", gen, files);
    write_text(root / "table_classification.csv", cls, files);
    return bundles;
}

}  // namespace maven
