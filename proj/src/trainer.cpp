#include "udean/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "udean/checkpoint.hpp"
#include "udean/error.hpp"
#include "udean/random.hpp"

namespace udean {

std::string_view to_string(TrainMode m) {
    return m == TrainMode::Unsupervised ? "unsupervised" : "supervised_baseline";
}

TrainMode parse_train_mode(std::string_view text) {
    if (text == "unsupervised") return TrainMode::Unsupervised;
    if (text == "supervised_baseline") return TrainMode::SupervisedBaseline;
    throw ConfigError("unknown training mode '" + std::string(text) + "' (expected unsupervised or supervised_baseline)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(lr_min >= 0.0 && lr_min <= lr_max)) throw ConfigError("learning rates must satisfy 0 <= lr_min <= lr_max");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0))
        throw ConfigError("invalid ADAM hyperparameters");
    if (iterations_per_epoch < 0 || validation_volumes < 0)
        throw ConfigError("iterations_per_epoch and validation_volumes must be non-negative");
}

double cosine_lr(int64_t t, int64_t T, double lr_max, double lr_min) {
    if (T <= 0) return lr_max;
    const double progress = static_cast<double>(t) / static_cast<double>(T);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

ForwardBundle forward_step(const torch::Tensor& y_s, const torch::Tensor& x_t, ComponentSet& c) {
    if (y_s.dim() != 5 || x_t.dim() != 5) throw ShapeError("forward_step expects (N, 1, x, y, z) patches");
    const auto& s = c.config.scale;
    if (y_s.size(2) != x_t.size(2) * s.sx || y_s.size(3) != x_t.size(3) * s.sy || y_s.size(4) != x_t.size(4) * s.sz)
        throw ShapeError("HR patch " + c10::str(y_s.sizes()) + " is not LR patch " + c10::str(x_t.sizes()) +
                         " times scale " + s.to_string());
    ForwardBundle b;
    b.y_s = y_s;
    b.x_t = x_t;
    b.f_s = c.extractor(y_s);
    b.x_st = c.lr_decoder(b.f_s);
    b.f_sts = c.lr_encoder(b.x_st);
    b.y_sts = c.sr_decoder(b.f_sts);
    b.f_t = c.lr_encoder(x_t);
    b.x_hat_t = c.lr_decoder(b.f_t);
    b.y_hat_s = c.sr_decoder(b.f_s);
    return b;
}

Optimizers::Optimizers(ComponentSet& c, const TrainConfig& cfg) {
    auto options = [&] {
        return torch::optim::AdamOptions(cfg.lr_max).betas({cfg.adam_beta1, cfg.adam_beta2}).eps(cfg.adam_eps);
    };
    generators = std::make_unique<torch::optim::Adam>(
        cfg.mode == TrainMode::SupervisedBaseline ? c.inference_parameters() : c.generator_parameters(), options());
    lr_discriminator = std::make_unique<torch::optim::Adam>(c.lr_discriminator->parameters(), options());
    feature_discriminator = std::make_unique<torch::optim::Adam>(c.feature_discriminator->parameters(), options());
}

void Optimizers::set_lr(double lr) {
    for (auto* opt : {generators.get(), lr_discriminator.get(), feature_discriminator.get()})
        for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

namespace {

double finite_or_abort(const torch::Tensor& t, const char* name) {
    const double v = t.item<double>();
    if (!std::isfinite(v)) throw NumericAbort(std::string("non-finite loss component '") + name + "' (" + std::to_string(v) + ")");
    return v;
}

/// Freezes a set of parameters for the lifetime of the guard.
class FreezeGuard {
public:
    explicit FreezeGuard(std::vector<torch::Tensor> params) : params_(std::move(params)) {
        for (auto& p : params_) p.set_requires_grad(false);
    }
    ~FreezeGuard() {
        for (auto& p : params_) p.set_requires_grad(true);
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    std::vector<torch::Tensor> params_;
};

}  // namespace

DiscriminatorLosses discriminator_step(const ForwardBundle& b, ComponentSet& c, Optimizers& opt,
                                       const TrainConfig& cfg, UpdateCounters* counters) {
    DiscriminatorLosses out;
    if (cfg.da_image_enabled) {
        opt.lr_discriminator->zero_grad();
        auto lrd = loss::disc_lr(c.lr_discriminator(b.x_t), c.lr_discriminator(b.x_st.detach()));
        out.lrd = finite_or_abort(lrd, "lrd");
        lrd.backward();
        opt.lr_discriminator->step();
    }
    if (cfg.da_feature_enabled) {
        opt.feature_discriminator->zero_grad();
        auto fd = loss::disc_feature(c.feature_discriminator(b.f_s.detach()),
                                     c.feature_discriminator(b.f_t.detach()));
        out.fd = finite_or_abort(fd, "fd");
        fd.backward();
        opt.feature_discriminator->step();
    }
    if (counters) ++counters->discriminator_passes;
    return out;
}

GeneratorObjective generator_objective(const ForwardBundle& b, ComponentSet& c, const loss::LossWeights& w,
                                       const TrainConfig& cfg, const SsimOptions& ssim) {
    const auto& s = c.config.scale;
    const auto zero = torch::zeros({}, b.y_s.options());
    // The LR discriminator only scores outputs when it is being trained.
    const bool lr_disc = cfg.da_image_enabled;
    const bool hr_adv = lr_disc && cfg.hr_adversarial;
    const torch::Tensor none;

    GeneratorObjective g;
    g.terms.i_cyc =
        loss::image_cycle(b.y_sts, b.y_s, hr_adv ? c.lr_discriminator(kspace_truncate(b.y_sts, s)) : none, w, ssim)
            .value;
    g.terms.f_cyc = loss::feature_cycle(b.f_sts, b.f_s);
    g.terms.hr_con =
        loss::hr_consistency(b.y_hat_s, b.y_s, hr_adv ? c.lr_discriminator(kspace_truncate(b.y_hat_s, s)) : none, w,
                             ssim)
            .value;
    g.terms.lr_con = loss::lr_consistency(b.x_hat_t, b.x_t, lr_disc ? c.lr_discriminator(b.x_hat_t) : none, w, ssim).value;
    g.terms.da = cfg.da_image_enabled ? loss::da_image(c.lr_discriminator(b.x_st), c.lr_discriminator(b.x_t)) : zero;
    g.terms.fa = cfg.da_feature_enabled
                     ? loss::da_feature(c.feature_discriminator(b.f_t), c.feature_discriminator(b.f_s))
                     : zero;
    g.total = loss::weighted_total(g.terms, w);
    return g;
}

loss::LossReport generator_step(const ForwardBundle& b, ComponentSet& c, const loss::LossWeights& w,
                                Optimizers& opt, const TrainConfig& cfg, UpdateCounters* counters) {
    FreezeGuard frozen(c.parameters({ComponentId::LrDiscriminator, ComponentId::FeatureDiscriminator}));
    opt.generators->zero_grad();
    const auto g = generator_objective(b, c, w, cfg);
    loss::GeneratorTerms<double> terms;
    terms.i_cyc = finite_or_abort(g.terms.i_cyc, "i_cyc");
    terms.f_cyc = finite_or_abort(g.terms.f_cyc, "f_cyc");
    terms.hr_con = finite_or_abort(g.terms.hr_con, "hr_con");
    terms.lr_con = finite_or_abort(g.terms.lr_con, "lr_con");
    terms.da = finite_or_abort(g.terms.da, "da");
    terms.fa = finite_or_abort(g.terms.fa, "fa");
    g.total.backward();
    opt.generators->step();
    if (counters) ++counters->generator_passes;
    return loss::make_report(terms, w);
}

loss::LossReport supervised_step(const torch::Tensor& x_lr, const torch::Tensor& y_hr, ComponentSet& c,
                                 const loss::LossWeights& w, Optimizers& opt, UpdateCounters* counters) {
    opt.generators->zero_grad();
    const auto sr = c.sr_decoder(c.lr_encoder(x_lr));
    loss::LossWeights no_adv = w;
    no_adv.beta = 0.0;
    const auto value = loss::image_cycle(sr, y_hr, torch::Tensor(), no_adv).value;
    loss::GeneratorTerms<double> terms;
    terms.i_cyc = finite_or_abort(value, "supervised");
    (w.lambda1 * value).backward();
    opt.generators->step();
    if (counters) ++counters->generator_passes;
    return loss::make_report(terms, w);
}

uint64_t parameter_hash(const std::vector<torch::Tensor>& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        const auto t = p.detach().cpu().contiguous();
        const auto* bytes = static_cast<const unsigned char*>(t.data_ptr());
        for (size_t i = 0; i < t.nbytes(); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

TrainData load_train_data(const DatasetManifest& m) {
    m.validate();
    TrainData d;
    for (const auto* e : m.select(Group::Source, Role::HR)) {
        d.source_ids.push_back(e->participant_id);
        d.source_hr.push_back(load_volume(e->volume_path));
    }
    for (const auto* e : m.select(Group::Target, Role::LR)) {
        d.target_ids.push_back(e->participant_id);
        d.target_lr.push_back(load_volume(e->volume_path));
    }
    for (const auto& id : m.participants(Group::Validation)) {
        const auto* lr = m.find(id, Group::Validation, Role::LR);
        const auto* hr = m.find(id, Group::Validation, Role::HR);
        if (!lr || !hr) throw ConfigError("validation participant " + id + " lacks an LR or HR volume");
        d.validation.push_back({id, load_volume(lr->volume_path), load_volume(hr->volume_path)});
    }
    if (d.source_hr.empty() || d.target_lr.empty()) throw ConfigError("manifest has no source HR or target LR volumes");
    return d;
}

std::string format_log_line(const IterationLog& log) {
    nlohmann::ordered_json j;
    j["iteration"] = log.iteration;
    j["epoch"] = log.epoch;
    j["lr"] = log.lr;
    const auto& t = log.report.terms;
    j["i_cyc"] = t.i_cyc;
    j["f_cyc"] = t.f_cyc;
    j["hr_con"] = t.hr_con;
    j["lr_con"] = t.lr_con;
    j["da"] = t.da;
    j["fa"] = t.fa;
    j["total"] = log.report.total;
    j["lrd"] = log.report.lrd ? nlohmann::ordered_json(*log.report.lrd) : nlohmann::ordered_json(nullptr);
    j["fd"] = log.report.fd ? nlohmann::ordered_json(*log.report.fd) : nlohmann::ordered_json(nullptr);
    return j.dump();
}

namespace {

torch::Tensor stack_patches(const std::vector<VolumeImage>& patches, torch::Dtype dtype) {
    std::vector<torch::Tensor> ts;
    ts.reserve(patches.size());
    for (const auto& p : patches) ts.push_back(to_tensor(p, dtype));
    return torch::stack(ts).unsqueeze(1);
}

/// Draws one batch. Unsupervised: HR patches from random source volumes and,
/// independently, LR patches from random target volumes. Supervised: both
/// from the same participant at coordinate-linked origins.
struct BatchSampler {
    const TrainData& data;
    PatchSpec one;
    int64_t batch;
    std::vector<int64_t> paired_target;  // supervised: target index per source index
    std::mt19937_64 rng;

    BatchSampler(const TrainData& d, const PatchSpec& spec, int64_t batch_size, TrainMode mode, uint64_t seed)
        : data(d), one(spec), batch(batch_size), rng(seed) {
        one.batch_size = 1;
        if (mode == TrainMode::SupervisedBaseline) {
            for (const auto& id : d.source_ids) {
                auto it = std::find(d.target_ids.begin(), d.target_ids.end(), id);
                if (it == d.target_ids.end())
                    throw ConfigError("supervised baseline needs a target LR volume for source participant " + id +
                                      " (use misaligned mode)");
                paired_target.push_back(it - d.target_ids.begin());
            }
        }
    }

    std::pair<std::vector<VolumeImage>, std::vector<VolumeImage>> unsupervised() {
        std::vector<VolumeImage> hr, lr;
        for (int64_t b = 0; b < batch; ++b) {
            const auto& src = data.source_hr[static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(data.source_hr.size()) - 1))];
            hr.push_back(std::move(sample_hr_patches(src, one, rng).front()));
        }
        for (int64_t b = 0; b < batch; ++b) {
            const auto& tgt = data.target_lr[static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(data.target_lr.size()) - 1))];
            lr.push_back(std::move(sample_patches(tgt, nullptr, one, rng).front().lr));
        }
        return {std::move(hr), std::move(lr)};
    }

    std::pair<std::vector<VolumeImage>, std::vector<VolumeImage>> supervised() {
        std::vector<VolumeImage> hr, lr;
        for (int64_t b = 0; b < batch; ++b) {
            const auto i = uniform_int(rng, 0, static_cast<int64_t>(data.source_hr.size()) - 1);
            const auto& src = data.source_hr[static_cast<size_t>(i)];
            const auto& tgt = data.target_lr[static_cast<size_t>(paired_target[static_cast<size_t>(i)])];
            auto pair = std::move(sample_patches(tgt, &src, one, rng).front());
            lr.push_back(std::move(pair.lr));
            hr.push_back(std::move(*pair.hr));
        }
        return {std::move(hr), std::move(lr)};
    }
};

ValidationRow validate_epoch(const TrainData& data, const ComponentSet& c, const TrainConfig& cfg,
                             const PatchSpec& spec, int64_t epoch) {
    std::vector<EvalCase> cases = data.validation;
    if (cfg.validation_volumes > 0 && static_cast<int64_t>(cases.size()) > cfg.validation_volumes)
        cases.resize(static_cast<size_t>(cfg.validation_volumes));
    const StitchPlan plan = StitchPlan::overlapping(spec.lr_shape);
    std::vector<EvalRecord> records;
    for (const auto& vc : cases) {
        const VolumeImage sr = reconstruct(vc.lr, c, plan);
        const Psnr p = psnr(sr, vc.hr);
        records.push_back({vc.volume_id, "udean", ssim_metric(sr, vc.hr), p.db, p.infinite});
    }
    ValidationRow row;
    row.epoch = epoch;
    if (!records.empty()) {
        const auto s = summarize(records).front();
        row.ssim_mean = s.ssim_mean;
        row.ssim_std = s.ssim_std;
        row.psnr_mean = s.psnr_mean;
        row.psnr_std = s.psnr_std;
    }
    return row;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

}  // namespace

TrainHistory train(const TrainData& data, ComponentSet& c, const TrainConfig& cfg, const loss::LossWeights& w,
                   const PatchSpec& spec, const TrainOptions& options) {
    cfg.validate();
    w.validate();
    if (spec.scale != c.config.scale)
        throw ConfigError("patch scale " + spec.scale.to_string() + " differs from network scale " +
                          c.config.scale.to_string());
    const bool supervised = cfg.mode == TrainMode::SupervisedBaseline;
    const int64_t per_epoch = cfg.iterations_per_epoch > 0
                                  ? cfg.iterations_per_epoch
                                  : static_cast<int64_t>(supervised ? data.source_hr.size() : data.target_lr.size());
    const int64_t total_iterations = cfg.epochs * per_epoch;
    const auto dtype = c.lr_encoder->parameters().front().scalar_type();

    const bool persist = !options.run_dir.empty();
    std::ofstream loss_log, val_csv;
    if (persist) {
        std::filesystem::create_directories(options.run_dir / "checkpoints");
        std::filesystem::remove(options.run_dir / kCompleteMarker);
        loss_log.open(options.run_dir / kLossLogFile, std::ios::trunc);
        val_csv.open(options.run_dir / kValidationFile, std::ios::trunc);
        if (!loss_log || !val_csv) throw IoError("cannot open logs in " + options.run_dir.string());
        val_csv << "epoch,ssim_mean,ssim_std,psnr_mean,psnr_std\n" << std::setprecision(10) << std::fixed;
    }

    BatchSampler sampler(data, spec, cfg.batch_size, cfg.mode, derive_seed(cfg.seed, 1));
    Optimizers opt(c, cfg);
    UpdateCounters counters;
    const auto gen_params = c.generator_parameters();
    const auto disc_params = c.parameters({ComponentId::LrDiscriminator, ComponentId::FeatureDiscriminator});

    TrainHistory history;
    double best_ssim = -std::numeric_limits<double>::infinity();
    int64_t t = 0;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int64_t i = 0; i < per_epoch; ++i, ++t) {
            IterationLog log;
            log.iteration = t;
            log.epoch = epoch;
            log.lr = cosine_lr(t, total_iterations, cfg.lr_max, cfg.lr_min);
            opt.set_lr(log.lr);
            if (supervised) {
                auto [hr, lr] = sampler.supervised();
                log.report = supervised_step(stack_patches(lr, dtype), stack_patches(hr, dtype), c, w, opt, &counters);
                if (counters.discriminator_passes != 0 || counters.generator_passes != t + 1)
                    throw Error("update alternation violated in supervised mode at iteration " + std::to_string(t));
            } else {
                auto [hr, lr] = sampler.unsupervised();
                const auto bundle = forward_step(stack_patches(hr, dtype), stack_patches(lr, dtype), c);

                const uint64_t gen_before = cfg.check_isolation ? parameter_hash(gen_params) : 0;
                const auto d = discriminator_step(bundle, c, opt, cfg, &counters);
                if (cfg.check_isolation && parameter_hash(gen_params) != gen_before)
                    throw Error("discriminator step changed generator parameters at iteration " + std::to_string(t));
                if (counters.discriminator_passes != t + 1 || counters.generator_passes != t)
                    throw Error("update alternation violated before the generator pass of iteration " + std::to_string(t));

                const uint64_t disc_before = cfg.check_isolation ? parameter_hash(disc_params) : 0;
                log.report = generator_step(bundle, c, w, opt, cfg, &counters);
                if (cfg.check_isolation && parameter_hash(disc_params) != disc_before)
                    throw Error("generator step changed discriminator parameters at iteration " + std::to_string(t));
                if (counters.generator_passes != t + 1)
                    throw Error("update alternation violated after iteration " + std::to_string(t));
                log.report.lrd = d.lrd;
                log.report.fd = d.fd;
            }
            if (persist) loss_log << format_log_line(log) << '\n' << std::flush;
            if (options.on_iteration) options.on_iteration(log);
            history.iterations.push_back(std::move(log));
        }

        const ValidationRow row = validate_epoch(data, c, cfg, spec, epoch);
        history.validation.push_back(row);
        if (persist) {
            val_csv << row.epoch << ',' << row.ssim_mean << ',' << row.ssim_std << ',' << row.psnr_mean << ','
                    << row.psnr_std << '\n'
                    << std::flush;
            const nlohmann::json meta{{"epoch", epoch},
                                      {"iteration", t},
                                      {"mode", to_string(cfg.mode)},
                                      {"validation_ssim", row.ssim_mean},
                                      {"validation_psnr", row.psnr_mean}};
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03lld.ckpt", static_cast<long long>(epoch));
            const auto ckpt = options.run_dir / "checkpoints" / (cfg.keep_epoch_checkpoints ? name : "last.ckpt");
            save_checkpoint(ckpt, c, meta);
            history.checkpoints.push_back(ckpt);
            if (row.ssim_mean > best_ssim || history.best_epoch < 0) {
                best_ssim = row.ssim_mean;
                history.best_epoch = epoch;
                std::filesystem::copy_file(ckpt, options.run_dir / kBestCheckpoint,
                                           std::filesystem::copy_options::overwrite_existing);
                write_text(options.run_dir / "best.json",
                           nlohmann::json{{"epoch", epoch}, {"checkpoint", ckpt.filename().string()},
                                          {"validation_ssim", row.ssim_mean}}
                                   .dump(2) +
                               "\n");
            }
        } else if (row.ssim_mean > best_ssim || history.best_epoch < 0) {
            best_ssim = row.ssim_mean;
            history.best_epoch = epoch;
        }
    }
    history.complete = true;
    if (persist) write_text(options.run_dir / kCompleteMarker, "epochs " + std::to_string(cfg.epochs) + "\n");
    return history;
}

}  // namespace udean
