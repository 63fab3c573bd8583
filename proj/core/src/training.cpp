// SPDX-License-Identifier: Apache-2.0
#include "maven/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace maven {

namespace fs = std::filesystem;

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::dcgan: return "dcgan";
        case ModelKind::vaegan: return "vaegan";
        case ModelKind::maven: return "maven";
    }
    return "maven";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "dcgan") return ModelKind::dcgan;
    if (s == "vaegan") return ModelKind::vaegan;
    if (s == "maven") return ModelKind::maven;
    throw std::invalid_argument("model must be one of dcgan, vaegan, maven; got '" + s + "'");
}

void ModelSpec::validate() const {
    network.validate();
    ensemble.validate();
    if (kind != ModelKind::maven && ensemble.k != 1) {
        throw std::invalid_argument("model " + to_string(kind) + " uses a single discriminator; ensemble.k must be 1");
    }
}

std::size_t TrainingConfig::steps_per_epoch(std::size_t dataset_size) const {
    const std::size_t m = samples_per_epoch == 0 ? dataset_size : samples_per_epoch;
    return batch_size == 0 ? 0 : m / batch_size;
}

void TrainingConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("training: batch_size must be >= 1");
    if (samples_per_epoch != 0 && samples_per_epoch < batch_size) {
        throw std::invalid_argument("training: samples_per_epoch must be >= batch_size (steps = m / B >= 1)");
    }
    if (!(lr_g > 0.0 && lr_d > 0.0 && lr_e > 0.0)) throw std::invalid_argument("training: learning rates must be positive");
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
        throw std::invalid_argument("training: labeled_fraction must lie in (0, 1]");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw std::invalid_argument("training: adam_beta1 must lie in [0, 1)");
}

// ---------------------------------------------------------------- ModelState

namespace {

constexpr std::uint64_t kStreamSalt = 0x9e3779b97f4a7c15ull;

AdamSettings adam_settings(double lr, double beta1) { return AdamSettings{lr, beta1, 0.999, 1e-8}; }

std::vector<double> flatten(std::vector<Param*> params, std::vector<Buffer*> buffers, bool with_buffers) {
    std::vector<double> out;
    for (Param* p : params) out.insert(out.end(), p->value.storage().begin(), p->value.storage().end());
    if (with_buffers) {
        for (Buffer* b : buffers) out.insert(out.end(), b->value.storage().begin(), b->value.storage().end());
    }
    return out;
}

}  // namespace

ModelState::ModelState(ModelSpec spec, std::optional<Encoder> e, Generator g, std::vector<Discriminator> d,
                       const AdamSettings& se, const AdamSettings& sg, const AdamSettings& sd)
    : spec_(std::move(spec)), encoder(std::move(e)), generator(std::move(g)), discriminators(std::move(d)),
      opt_g(generator.params(), sg) {
    if (encoder) opt_e.emplace(encoder->params(), se);
    for (auto& disc : discriminators) opt_d.emplace_back(disc.params(), sd);
}

ModelState ModelState::build(ModelSpec spec, const TrainingConfig& cfg) {
    spec.validate();
    Rng init(cfg.seed);
    std::optional<Encoder> e;
    if (spec.uses_encoder()) e.emplace(spec.network, init);
    Generator g(spec.network, init);
    std::vector<Discriminator> d;
    for (std::size_t k = 0; k < spec.ensemble.k; ++k) d.emplace_back(spec.network, init);
    ModelState s(std::move(spec), std::move(e), std::move(g), std::move(d), adam_settings(cfg.lr_e, cfg.adam_beta1),
                 adam_settings(cfg.lr_g, cfg.adam_beta1), adam_settings(cfg.lr_d, cfg.adam_beta1));
    s.rng = Rng(cfg.seed ^ kStreamSalt);
    return s;
}

ModelState::ModelState(ModelSpec spec, const TrainingConfig& cfg) : ModelState(build(std::move(spec), cfg)) {}

ModelState ModelState::clone() const {
    ModelState c(spec_, encoder, generator, discriminators, opt_e ? opt_e->settings() : AdamSettings{},
                 opt_g.settings(), opt_d.empty() ? AdamSettings{} : opt_d.front().settings());
    auto copy_moments = [](const Adam& from, Adam& to) {
        Adam tmp = from;
        to.first_moments() = tmp.first_moments();
        to.second_moments() = tmp.second_moments();
        to.set_steps_taken(from.steps_taken());
    };
    if (opt_e) copy_moments(*opt_e, *c.opt_e);
    copy_moments(opt_g, c.opt_g);
    for (std::size_t k = 0; k < opt_d.size(); ++k) copy_moments(opt_d[k], c.opt_d[k]);
    c.epoch = epoch;
    c.step = step;
    c.rng = rng;
    c.warnings = warnings;
    return c;
}

std::vector<double> ModelState::encoder_snapshot(bool with_buffers) {
    if (!encoder) return {};
    return flatten(encoder->params(), encoder->buffers(), with_buffers);
}

std::vector<double> ModelState::generator_snapshot(bool with_buffers) {
    return flatten(generator.params(), generator.buffers(), with_buffers);
}

std::vector<double> ModelState::discriminator_snapshot(std::size_t k, bool with_buffers) {
    auto& d = discriminators.at(k);
    return flatten(d.params(), d.buffers(), with_buffers);
}

// ---------------------------------------------------------------- batch source

StreamBatchSource::StreamBatchSource(const SemiSupervisedView& view, std::size_t batch_size, std::uint64_t seed)
    : real_(view, batch_size, StreamKind::any, seed) {
    if (view.labeled_count() > 0) labeled_.emplace(view, batch_size, StreamKind::labeled, seed + 1);
}

ImageBatch StreamBatchSource::next_labeled() {
    if (!labeled_) return {};
    return labeled_->next();
}

// ---------------------------------------------------------------- train_step

namespace {

void warn_once(ModelState& state, const std::string& msg) {
    if (std::find(state.warnings.begin(), state.warnings.end(), msg) == state.warnings.end()) {
        state.warnings.push_back(msg);
    }
}

void require_finite(double v, const std::string& component, const std::string& where) {
    if (!std::isfinite(v)) {
        throw TrainingError("non-finite loss in component '" + component + "' during " + where);
    }
}

Tensor noise(Rng& rng, std::size_t n, std::size_t dim) { return rng.normal_tensor({n, dim}); }

/// Discriminators that feed the generator and encoder this step, with their ensemble weights.
struct Feedback {
    std::vector<std::size_t> members;
    std::vector<double> weights;

    double feature_weight(std::size_t i) const { return weights[i] / static_cast<double>(members.size()); }
};

Feedback choose_feedback(ModelState& state) {
    const auto& ens = state.spec().ensemble;
    if (ens.mode == EnsembleMode::random) {
        const std::size_t k = draw_discriminator(state.k(), state.rng);
        return {{k}, {1.0}};
    }
    Feedback fb;
    for (std::size_t k = 0; k < state.k(); ++k) fb.members.push_back(k);
    fb.weights = ens.weights;
    return fb;
}

/// Supervised + unsupervised update of one discriminator. Returns its loss components.
LossBreakdown update_discriminator(ModelState& state, std::size_t k, BatchSource& source, const Tensor* fake2) {
    const auto latent = state.spec().network.latent_dim;
    Rng& rng = state.rng;
    const PassContext frozen = PassContext::train(rng, false);
    const PassContext active = PassContext::train(rng, true);

    // Fresh noise and fresh real minibatches for every discriminator.
    const ImageBatch real = source.next_real();
    const ImageBatch labeled = source.next_labeled();
    const Tensor z = noise(rng, real.images.dim(0), latent);
    const Tensor fake1 = state.generator.generate(z, frozen);

    Discriminator& d = state.discriminators[k];
    d.zero_grad();
    LossBreakdown lb;
    const Tensor none;
    if (labeled.labels.empty()) {
        warn_once(state, "empty labeled batch: supervised discriminator term skipped");
    } else {
        const auto out = d.discriminate(labeled.images, active);
        const auto g = d_supervised_loss_grad(out.logits, labeled.labels);
        lb.d_supervised = g.value;
        d.backward(g.grad, none, true);
    }
    {
        const auto out = d.discriminate(real.images, active);
        const auto g = d_real_loss_grad(out.logits);
        lb.d_real = g.value;
        d.backward(g.grad, none, true);
    }
    {
        const auto out = d.discriminate(fake1, active);
        const auto g = d_fake_loss_grad(out.logits);
        lb.d_fake1 = g.value;
        d.backward(g.grad, none, true);
    }
    if (fake2) {
        const auto out = d.discriminate(*fake2, active);
        const auto g = d_fake_loss_grad(out.logits);
        lb.d_fake2 = g.value;
        d.backward(g.grad, none, true);
    }
    const std::string where = "update of discriminator " + std::to_string(k + 1);
    const std::pair<const char*, double> parts[] = {
        {"d_supervised", lb.d_supervised}, {"d_real", lb.d_real}, {"d_fake1", lb.d_fake1}, {"d_fake2", lb.d_fake2}};
    for (const auto& [name, v] : parts) require_finite(v, name, where);
    state.opt_d[k].step();
    return lb;
}

struct AdversarialPass {
    double adversarial = 0.0;
    double feature = 0.0;
    Tensor grad_images;
};

/// Runs the feedback discriminators on `fake` (frozen) and returns the ensemble adversarial
/// loss, the weighted feature-matching loss against `real_features`, and d(loss)/d(fake).
AdversarialPass adversarial_feedback(ModelState& state, const Feedback& fb, const Tensor& fake,
                                     const std::vector<Tensor>* real_features, bool adversarial) {
    const PassContext frozen = PassContext::train(state.rng, false);
    std::vector<DiscriminatorOutput> outs;
    for (std::size_t k : fb.members) outs.push_back(state.discriminators[k].discriminate(fake, frozen));

    AdversarialPass pass;
    std::vector<Tensor> logit_grads;
    if (adversarial) {
        std::vector<Tensor> logits;
        for (const auto& o : outs) logits.push_back(o.logits);
        auto eg = ensemble_adversarial_loss_grad(logits, fb.weights);
        pass.adversarial = eg.value;
        logit_grads = std::move(eg.grads);
    } else {
        for (const auto& o : outs) logit_grads.emplace_back(o.logits.shape());
    }
    pass.grad_images = Tensor(fake.shape());
    for (std::size_t i = 0; i < fb.members.size(); ++i) {
        Tensor feat_grad;
        if (real_features) {
            auto fg = feature_matching_loss_grad((*real_features)[i], outs[i].features);
            pass.feature += fb.feature_weight(i) * fg.value;
            fg.grad_fake *= fb.feature_weight(i);
            feat_grad = std::move(fg.grad_fake);
        }
        pass.grad_images += state.discriminators[fb.members[i]].backward(logit_grads[i], feat_grad, false);
    }
    return pass;
}

std::vector<Tensor> real_features(ModelState& state, const Feedback& fb, const Tensor& images) {
    const PassContext frozen = PassContext::train(state.rng, false);
    std::vector<Tensor> out;
    for (std::size_t k : fb.members) out.push_back(state.discriminators[k].discriminate(images, frozen).features);
    return out;
}

}  // namespace

LossBreakdown train_step(ModelState& state, BatchSource& source, const TrainingConfig& cfg,
                         const StepObserver& observer) {
    (void)cfg;
    auto notify = [&](StepPhase phase, std::size_t k) {
        if (observer) observer(phase, k, state);
    };
    const auto latent = state.spec().network.latent_dim;
    const bool with_encoder = state.encoder.has_value();
    Rng& rng = state.rng;
    LossBreakdown lb;

    // The step's anchor batch: feature statistics for G and, through E then G, the fake2 batch.
    const ImageBatch anchor = source.next_real();
    std::optional<Tensor> fake2;
    Tensor z_rec;
    if (with_encoder) {
        const PassContext frozen = PassContext::train(rng, false);
        const EncoderOutput enc = state.encoder->encode(anchor.images, frozen);
        z_rec = reparameterize(enc, noise(rng, anchor.images.dim(0), latent));
        fake2 = state.generator.generate(z_rec, frozen);
    }

    // (1) discriminators, each on its own noise and real minibatches.
    const double inv_k = 1.0 / static_cast<double>(state.k());
    for (std::size_t k = 0; k < state.k(); ++k) {
        notify(StepPhase::before_discriminator, k);
        const LossBreakdown dk = update_discriminator(state, k, source, fake2 ? &*fake2 : nullptr);
        lb.d_supervised += inv_k * dk.d_supervised;
        lb.d_real += inv_k * dk.d_real;
        lb.d_fake1 += inv_k * dk.d_fake1;
        lb.d_fake2 += inv_k * dk.d_fake2;
        notify(StepPhase::after_discriminator, k);
    }

    // (2) generator against the ensemble feedback, discriminators frozen.
    const Feedback fb = choose_feedback(state);
    {
        state.generator.zero_grad();
        const auto f_real = real_features(state, fb, anchor.images);
        const Tensor z = noise(rng, anchor.images.dim(0), latent);
        const Tensor fake1 = state.generator.generate(z, PassContext::train(rng, true));
        const auto p1 = adversarial_feedback(state, fb, fake1, &f_real, true);
        lb.g_feature = p1.feature;
        lb.g_fake1 = p1.adversarial;
        state.generator.backward(p1.grad_images, true);
        if (with_encoder) {
            const Tensor recon = state.generator.generate(z_rec, PassContext::train(rng, true));
            const auto p2 = adversarial_feedback(state, fb, recon, nullptr, true);
            lb.g_fake2 = p2.adversarial;
            state.generator.backward(p2.grad_images, true);
        }
        require_finite(lb.g_feature, "g_feature", "generator update");
        require_finite(lb.g_fake1, "g_fake1", "generator update");
        require_finite(lb.g_fake2, "g_fake2", "generator update");
        state.opt_g.step();
    }
    notify(StepPhase::after_generator, 0);

    // (3) encoder on a fresh real minibatch, generator and discriminators frozen.
    if (with_encoder) {
        Encoder& e = *state.encoder;
        e.zero_grad();
        const ImageBatch real = source.next_real();
        const EncoderOutput enc = e.encode(real.images, PassContext::train(rng, true));
        const KlGrad kl = kl_loss_grad(enc);
        const Tensor eps = noise(rng, real.images.dim(0), latent);
        const Tensor z = reparameterize(enc, eps);
        const Tensor recon = state.generator.generate(z, PassContext::train(rng, false));
        const auto f_real = real_features(state, fb, real.images);
        const auto pass = adversarial_feedback(state, fb, recon, &f_real, false);
        lb.e_kl = kl.value;
        lb.e_feature = pass.feature;
        require_finite(lb.e_kl, "e_kl", "encoder update");
        require_finite(lb.e_feature, "e_feature", "encoder update");
        const Tensor dz = state.generator.backward(pass.grad_images, false);
        EncoderOutput g = reparameterize_backward(enc, eps, dz);
        g.mu += kl.grad.mu;
        g.log_sigma_sq += kl.grad.log_sigma_sq;
        e.backward(g, true);
        state.opt_e->step();
    }
    notify(StepPhase::after_encoder, 0);

    ++state.step;
    return lb;
}

// ---------------------------------------------------------------- VAE-GAN reference

LossBreakdown vaegan_reference_step(ModelState& state, BatchSource& source, const TrainingConfig&) {
    if (state.k() != 1 || !state.encoder) throw std::invalid_argument("vaegan_reference_step: needs K = 1 and an encoder");
    const auto latent = state.spec().network.latent_dim;
    Rng& rng = state.rng;
    Encoder& e = *state.encoder;
    Generator& g = state.generator;
    Discriminator& d = state.discriminators.front();
    const Tensor none;
    LossBreakdown lb;

    const ImageBatch anchor = source.next_real();
    const EncoderOutput enc0 = e.encode(anchor.images, PassContext::train(rng, false));
    const Tensor z_rec = reparameterize(enc0, rng.normal_tensor({anchor.images.dim(0), latent}));
    const Tensor fake2 = g.generate(z_rec, PassContext::train(rng, false));

    {  // discriminator
        const ImageBatch real = source.next_real();
        const ImageBatch labeled = source.next_labeled();
        const Tensor z = rng.normal_tensor({real.images.dim(0), latent});
        const Tensor fake1 = g.generate(z, PassContext::train(rng, false));
        d.zero_grad();
        if (!labeled.labels.empty()) {
            auto out = d.discriminate(labeled.images, PassContext::train(rng, true));
            auto lg = d_supervised_loss_grad(out.logits, labeled.labels);
            lb.d_supervised = lg.value;
            d.backward(lg.grad, none, true);
        }
        auto out = d.discriminate(real.images, PassContext::train(rng, true));
        auto lg = d_real_loss_grad(out.logits);
        lb.d_real = lg.value;
        d.backward(lg.grad, none, true);
        out = d.discriminate(fake1, PassContext::train(rng, true));
        lg = d_fake_loss_grad(out.logits);
        lb.d_fake1 = lg.value;
        d.backward(lg.grad, none, true);
        out = d.discriminate(fake2, PassContext::train(rng, true));
        lg = d_fake_loss_grad(out.logits);
        lb.d_fake2 = lg.value;
        d.backward(lg.grad, none, true);
        state.opt_d.front().step();
    }
    if (state.spec().ensemble.mode == EnsembleMode::random) (void)draw_discriminator(1, rng);
    {  // generator
        g.zero_grad();
        const Tensor f_real = d.discriminate(anchor.images, PassContext::train(rng, false)).features;
        const Tensor z = rng.normal_tensor({anchor.images.dim(0), latent});
        const Tensor fake1 = g.generate(z, PassContext::train(rng, true));
        auto out = d.discriminate(fake1, PassContext::train(rng, false));
        auto adv = g_adversarial_loss_grad(out.logits);
        auto fm = feature_matching_loss_grad(f_real, out.features);
        lb.g_fake1 = adv.value;
        lb.g_feature = fm.value;
        g.backward(d.backward(adv.grad, fm.grad_fake, false), true);
        const Tensor recon = g.generate(z_rec, PassContext::train(rng, true));
        out = d.discriminate(recon, PassContext::train(rng, false));
        adv = g_adversarial_loss_grad(out.logits);
        lb.g_fake2 = adv.value;
        g.backward(d.backward(adv.grad, none, false), true);
        state.opt_g.step();
    }
    {  // encoder
        e.zero_grad();
        const ImageBatch real = source.next_real();
        const EncoderOutput enc = e.encode(real.images, PassContext::train(rng, true));
        const KlGrad kl = kl_loss_grad(enc);
        const Tensor eps = rng.normal_tensor({real.images.dim(0), latent});
        const Tensor recon = g.generate(reparameterize(enc, eps), PassContext::train(rng, false));
        const Tensor f_real = d.discriminate(real.images, PassContext::train(rng, false)).features;
        const auto out = d.discriminate(recon, PassContext::train(rng, false));
        const auto fm = feature_matching_loss_grad(f_real, out.features);
        lb.e_kl = kl.value;
        lb.e_feature = fm.value;
        const Tensor dz = g.backward(d.backward(Tensor(out.logits.shape()), fm.grad_fake, false), false);
        EncoderOutput grad = reparameterize_backward(enc, eps, dz);
        grad.mu += kl.grad.mu;
        grad.log_sigma_sq += kl.grad.log_sigma_sq;
        e.backward(grad, true);
        state.opt_e->step();
    }
    ++state.step;
    return lb;
}

// ---------------------------------------------------------------- history

std::string history_csv_header() {
    std::string h = "step,epoch";
    for (const auto& n : LossBreakdown::column_names()) h += "," + n;
    return h;
}

std::string history_csv_line(const HistoryRow& row) {
    std::ostringstream os;
    os << row.step << ',' << row.epoch << std::setprecision(17);
    for (double v : row.losses.column_values()) os << ',' << v;
    return os.str();
}

void write_history_csv(const fs::path& path, const std::vector<HistoryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw TrainingError("cannot write history " + path.string());
    out << history_csv_header() << '\n';
    for (const auto& r : rows) out << history_csv_line(r) << '\n';
    if (!out) throw TrainingError("failed writing history " + path.string());
}

// ---------------------------------------------------------------- save / load

namespace {

using nlohmann::json;

std::vector<TensorRef> optimizer_refs(Adam& opt, std::vector<Param*> params) {
    std::vector<TensorRef> refs;
    for (std::size_t i = 0; i < params.size(); ++i) {
        refs.push_back({params[i]->name + ".m", &opt.first_moments()[i], "adam_m"});
        refs.push_back({params[i]->name + ".v", &opt.second_moments()[i], "adam_v"});
    }
    return refs;
}

json adam_json(const Adam& a) {
    return json{{"lr", a.settings().lr}, {"beta1", a.settings().beta1}, {"beta2", a.settings().beta2},
                {"eps", a.settings().eps}, {"steps", a.steps_taken()}};
}

}  // namespace

void save_model(ModelState& state, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw CheckpointError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
    const auto& net = state.spec().network;
    if (state.encoder) {
        save_tensors(dir / "encoder", "encoder", net, state.encoder->layer_names(),
                     tensor_refs(state.encoder->params(), state.encoder->buffers()));
        save_tensors(dir / "encoder_adam", "encoder_adam", net, {}, optimizer_refs(*state.opt_e, state.encoder->params()));
    }
    save_tensors(dir / "generator", "generator", net, state.generator.layer_names(),
                 tensor_refs(state.generator.params(), state.generator.buffers()));
    save_tensors(dir / "generator_adam", "generator_adam", net, {}, optimizer_refs(state.opt_g, state.generator.params()));
    json d_opts = json::array();
    for (std::size_t k = 0; k < state.k(); ++k) {
        auto& d = state.discriminators[k];
        const std::string name = "discriminator_" + std::to_string(k + 1);
        save_tensors(dir / name, name, net, d.layer_names(), tensor_refs(d.params(), d.buffers()));
        save_tensors(dir / (name + "_adam"), name + "_adam", net, {}, optimizer_refs(state.opt_d[k], d.params()));
        d_opts.push_back(adam_json(state.opt_d[k]));
    }
    const auto& spec = state.spec();
    json meta{{"format", "maven-state-v1"},
              {"model", to_string(spec.kind)},
              {"ensemble", {{"k", spec.ensemble.k}, {"mode", to_string(spec.ensemble.mode)}, {"weights", spec.ensemble.weights}}},
              {"epoch", state.epoch},
              {"step", state.step},
              {"rng", state.rng.serialize()},
              {"optimizer_g", adam_json(state.opt_g)},
              {"optimizer_d", d_opts}};
    if (state.opt_e) meta["optimizer_e"] = adam_json(*state.opt_e);
    std::ofstream out(dir / "state.json");
    if (!out) throw CheckpointError("cannot write " + (dir / "state.json").string());
    out << meta.dump(2) << '\n';
    if (!out) throw CheckpointError("failed writing " + (dir / "state.json").string());
}

ModelState load_model(const fs::path& dir) {
    std::ifstream in(dir / "state.json");
    if (!in) throw CheckpointError("cannot open " + (dir / "state.json").string());
    json meta;
    try {
        meta = json::parse(in);
    } catch (const json::exception& e) {
        throw CheckpointError("malformed " + (dir / "state.json").string() + ": " + e.what());
    }
    ModelSpec spec;
    spec.kind = model_kind_from_string(meta.at("model").get<std::string>());
    spec.network = read_manifest_config(dir / "generator");
    spec.ensemble.k = meta.at("ensemble").at("k").get<std::size_t>();
    spec.ensemble.mode = ensemble_mode_from_string(meta.at("ensemble").at("mode").get<std::string>());
    spec.ensemble.weights = meta.at("ensemble").at("weights").get<std::vector<double>>();

    TrainingConfig cfg;
    cfg.lr_g = meta.at("optimizer_g").at("lr").get<double>();
    cfg.adam_beta1 = meta.at("optimizer_g").at("beta1").get<double>();
    if (!meta.at("optimizer_d").empty()) cfg.lr_d = meta.at("optimizer_d").at(0).at("lr").get<double>();
    if (meta.contains("optimizer_e")) cfg.lr_e = meta.at("optimizer_e").at("lr").get<double>();
    ModelState state(spec, cfg);

    if (state.encoder) {
        load_tensors(dir / "encoder", "encoder", tensor_refs(state.encoder->params(), state.encoder->buffers()));
        load_tensors(dir / "encoder_adam", "encoder_adam", optimizer_refs(*state.opt_e, state.encoder->params()));
        state.opt_e->set_steps_taken(meta.at("optimizer_e").at("steps").get<std::uint64_t>());
    }
    load_tensors(dir / "generator", "generator", tensor_refs(state.generator.params(), state.generator.buffers()));
    load_tensors(dir / "generator_adam", "generator_adam", optimizer_refs(state.opt_g, state.generator.params()));
    state.opt_g.set_steps_taken(meta.at("optimizer_g").at("steps").get<std::uint64_t>());
    for (std::size_t k = 0; k < state.k(); ++k) {
        auto& d = state.discriminators[k];
        const std::string name = "discriminator_" + std::to_string(k + 1);
        load_tensors(dir / name, name, tensor_refs(d.params(), d.buffers()));
        load_tensors(dir / (name + "_adam"), name + "_adam", optimizer_refs(state.opt_d[k], d.params()));
        state.opt_d[k].set_steps_taken(meta.at("optimizer_d").at(k).at("steps").get<std::uint64_t>());
    }
    state.epoch = meta.at("epoch").get<std::uint64_t>();
    state.step = meta.at("step").get<std::uint64_t>();
    state.rng.deserialize(meta.at("rng").get<std::string>());
    return state;
}

// ---------------------------------------------------------------- train

TrainResult train(std::shared_ptr<const DatasetSplit> data, const ModelSpec& spec, const TrainingConfig& cfg,
                  const TrainOptions& options) {
    cfg.validate();
    spec.validate();
    data->validate();
    if (data->image_shape() != spec.network.image_shape) {
        throw ConfigError("dataset images " + shape_to_string(data->images.shape()) +
                          " do not match the configured image shape");
    }
    if (data->n_classes() != spec.network.n_classes) {
        throw ConfigError("dataset has " + std::to_string(data->n_classes()) + " classes, network expects " +
                          std::to_string(spec.network.n_classes));
    }
    const SemiSupervisedView view = mask_labels(data, cfg.labeled_fraction, cfg.seed);
    StreamBatchSource source(view, cfg.batch_size, cfg.seed + 17);
    TrainResult result{ModelState(spec, cfg), {}, {}, view.warnings};
    ModelState& state = result.state;
    const std::size_t steps = cfg.steps_per_epoch(data->size());
    if (cfg.epochs > 0 && steps == 0) throw ConfigError("training: floor(m / B) is zero; lower the batch size");

    std::optional<fs::path> ckpt_root;
    if (options.out_dir) {
        fs::create_directories(*options.out_dir);
        ckpt_root = *options.out_dir / "checkpoints";
    }
    auto flush_history = [&] {
        if (options.out_dir) write_history_csv(*options.out_dir / "history.csv", result.history);
    };
    auto checkpoint = [&](const std::string& tag) {
        if (!ckpt_root) return;
        const fs::path dir = *ckpt_root / tag;
        try {
            save_model(state, dir);
        } catch (const std::exception& e) {
            flush_history();
            throw TrainingError(std::string("checkpoint failed, history flushed: ") + e.what());
        }
        result.checkpoints.push_back(dir);
    };

    const auto start = std::chrono::steady_clock::now();
    for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
        LossBreakdown sum;
        for (std::size_t s = 0; s < steps; ++s) {
            const LossBreakdown lb = train_step(state, source, cfg);
            result.history.push_back({state.step, ep + 1, lb});
            const auto v = lb.column_values();
            sum.d_supervised += lb.d_supervised;
            sum.d_real += lb.d_real;
            sum.d_fake1 += lb.d_fake1;
            sum.d_fake2 += lb.d_fake2;
            sum.g_feature += lb.g_feature;
            sum.g_fake1 += lb.g_fake1;
            sum.g_fake2 += lb.g_fake2;
            sum.e_kl += lb.e_kl;
            sum.e_feature += lb.e_feature;
            (void)v;
        }
        state.epoch = ep + 1;
        if (options.progress) {
            const double inv = 1.0 / static_cast<double>(steps);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            *options.progress << "epoch " << (ep + 1) << '/' << cfg.epochs << std::fixed << std::setprecision(4)
                              << "  L_D " << sum.d_total() * inv << "  L_G " << sum.g_total() * inv << "  L_E "
                              << sum.e_total() * inv << std::setprecision(1) << "  elapsed " << secs << "s"
                              << std::defaultfloat << std::endl;
        }
        if (cfg.checkpoint_interval > 0 && (ep + 1) % cfg.checkpoint_interval == 0 && ep + 1 < cfg.epochs) {
            std::ostringstream tag;
            tag << "epoch_" << std::setw(4) << std::setfill('0') << (ep + 1);
            checkpoint(tag.str());
        }
    }
    flush_history();
    checkpoint("final");
    for (const auto& w : state.warnings) result.warnings.push_back(w);
    return result;
}

// ---------------------------------------------------------------- inference helpers

Tensor classify(ModelState& state, const Tensor& images, std::size_t chunk) {
    const auto& w = state.spec().ensemble.weights;
    const double wsum = [&] {
        double s = 0.0;
        for (double x : w) s += x;
        return s;
    }();
    const std::size_t n = images.rows();
    const std::size_t outputs = state.spec().network.n_classes + 1;
    Tensor probs(Shape{n, outputs});
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk);
        const Tensor part = images.slice_rows(begin, end);
        for (std::size_t k = 0; k < state.k(); ++k) {
            if (w[k] == 0.0) continue;
            const Tensor p = class_probabilities(state.discriminators[k].discriminate(part, PassContext::inference()).logits);
            for (std::size_t r = 0; r < p.rows(); ++r) {
                for (std::size_t j = 0; j < outputs; ++j) probs.at(begin + r, j) += (w[k] / wsum) * p.at(r, j);
            }
        }
    }
    return probs;
}

Tensor sample_images(ModelState& state, std::size_t count, Rng& rng, std::size_t chunk) {
    const auto latent = state.spec().network.latent_dim;
    std::vector<Tensor> parts;
    for (std::size_t begin = 0; begin < count; begin += chunk) {
        const std::size_t n = std::min(chunk, count - begin);
        parts.push_back(state.generator.generate(rng.normal_tensor({n, latent}), PassContext::inference()));
    }
    if (parts.empty()) {
        const auto& s = state.spec().network.image_shape;
        return Tensor(s.batch(0));
    }
    return concat_rows(parts);
}

}  // namespace maven
