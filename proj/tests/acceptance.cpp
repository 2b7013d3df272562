// Acceptance runner: one PASS/FAIL line per criterion.
//
//   udean_acceptance [--only A1,A5] [--work DIR]
//
// A6 and A7 share a work directory: A7 reads the checkpoint A6 trained.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "oracles.hpp"
#include "udean/checkpoint.hpp"
#include "udean/config.hpp"
#include "udean/error.hpp"
#include "udean/losses.hpp"
#include "udean/pipeline.hpp"

using namespace udean;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

/// Collects named sub-checks; the first few failures go into the detail line.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (!ok) {
            ++failed_;
            if (failures_.size() < 4) failures_.push_back(what);
        }
    }
    void near(double got, double want, double tol, const std::string& what) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s: got %.15g want %.15g", what.c_str(), got, want);
        expect(std::abs(got - want) <= tol, buf);
    }
    [[nodiscard]] Outcome outcome(const std::string& summary) const {
        Outcome o;
        o.pass = failed_ == 0;
        o.detail = std::to_string(total_ - failed_) + "/" + std::to_string(total_) + " checks; " + summary;
        for (const auto& f : failures_) o.detail += "; " + f;
        return o;
    }

private:
    int total_ = 0, failed_ = 0;
    std::vector<std::string> failures_;
};

struct Context {
    fs::path work;
    fs::path source;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, a);
    return buf;
}

// ---------------------------------------------------------------------------
// A1: loss examples and the generator-total decomposition.

Outcome a1(const Context&) {
    using namespace loss;
    Checks k;
    for (auto dtype : {torch::kFloat32, torch::kFloat64}) {
        const double tol = dtype == torch::kFloat32 ? 1e-6 : 1e-12;
        const std::string p = dtype == torch::kFloat32 ? "f32 " : "f64 ";
        auto full = [&](double v) { return torch::full({2, 1, 8, 8, 3}, v, dtype); };
        auto val = [](const torch::Tensor& t) { return t.item<double>(); };
        auto scalar = [&](double v) { return torch::tensor(v, dtype); };
        torch::manual_seed(1);
        const auto y = torch::rand({2, 1, 16, 16, 3}, dtype);
        const LossWeights w;

        k.near(val(l1(y, y)), 0, tol, p + "l1 identity");
        k.near(val(l1(torch::tensor({1.0, 0.0}, dtype), torch::zeros({2}, dtype))), 0.5, tol, p + "l1 [1,0]");
        k.near(val(l1(y + 0.25, y)), 0.25, tol, p + "l1 offset");
        k.near(val(ssim_loss(y, y)), 0, tol, p + "ssim_loss identity");
        k.near(val(ssim_loss_from_ssim(torch::zeros({2}, dtype))), 1, tol, p + "ssim_loss at 0");
        k.near(val(ssim_loss_from_ssim(torch::full({2}, 0.5, dtype))), 0.75, tol, p + "ssim_loss at 0.5");
        k.near(val(adv_gen(full(1))), 0, tol, p + "adv 1");
        k.near(val(adv_gen(full(0))), 1, tol, p + "adv 0");
        k.near(val(adv_gen(full(0.5))), 0.25, tol, p + "adv 0.5");
        k.near(val(combine(scalar(0.1), scalar(0.2), scalar(0.3), w)), 0.203, tol, p + "cycle composition");
        k.near(val(image_cycle(y, y, full(1), w).value), 0, tol, p + "cycle perfect");
        LossWeights nb = w;
        nb.beta = 0;
        k.near(val(combine(scalar(0.1), scalar(0.2), scalar(0.3), nb)), 0.2, tol, p + "beta 0");
        k.near(val(hr_consistency(y, y, full(1), w).value), 0, tol, p + "hr_con perfect");
        k.near(val(lr_consistency(y, y, full(1), w).value), 0, tol, p + "lr_con perfect");
        const auto f = torch::rand({2, 8, 4, 4, 3}, dtype);
        k.near(val(feature_cycle(f, f)), 0, tol, p + "f_cyc identity");
        k.near(val(feature_cycle(f + 0.2, f)), 0.2, tol, p + "f_cyc offset");
        bool threw = false;
        try {
            feature_cycle(f, f.slice(4, 0, 2));
        } catch (const std::exception&) {
            threw = true;
        }
        k.expect(threw, p + "f_cyc shape mismatch");
        for (auto fn : {&da_image, &da_feature}) {
            k.near(val(fn(full(0.5), full(0.5))), 0, tol, p + "da equilibrium");
            k.near(val(fn(full(1), full(0))), 1, tol, p + "da 1/0");
            k.near(val(fn(full(0.5), full(1))), 0.5, tol, p + "da 0.5/1");
        }
        for (auto fn : {&disc_lr, &disc_feature}) {
            k.near(val(fn(full(1), full(0))), 0, tol, p + "disc perfect");
            k.near(val(fn(full(0.5), full(0.5))), 0.5, tol, p + "disc 0.5");
            k.near(val(fn(full(0), full(1))), 2, tol, p + "disc fooled");
        }
        GeneratorTerms<torch::Tensor> ones{scalar(1), scalar(1), scalar(1), scalar(1), scalar(1), scalar(1)};
        k.near(val(weighted_total(ones, w)), 3.3, tol, p + "total of ones");
        GeneratorTerms<torch::Tensor> zeros{scalar(0), scalar(0), scalar(0), scalar(0), scalar(0), scalar(0)};
        k.near(val(weighted_total(zeros, w)), 0, tol, p + "total of zeros");
    }
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        loss::LossWeights w{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
        const double c[6] = {u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
        const auto r = loss::make_report({c[0], c[1], c[2], c[3], c[4], c[5]}, w);
        const double dot = w.lambda1 * c[0] + w.lambda2 * c[1] + w.lambda3 * c[2] + w.lambda4 * c[3] +
                           w.lambda5 * c[4] + w.lambda6 * c[5];
        worst = std::max(worst, std::abs(r.total - dot));
    }
    k.expect(worst <= 1e-12, "decomposition error " + fmt("%.3g", worst));
    return k.outcome("decomposition max error " + fmt("%.3g", worst));
}

// ---------------------------------------------------------------------------
// A2: K-space truncation against the direct DFT sum.

Outcome a2(const Context&) {
    Checks k;
    std::mt19937_64 rng(2024);
    double worst = 0, worst_lin = 0, worst_mean = 0;
    for (const auto& s : {ScaleFactor{2, 2, 2}, ScaleFactor{2, 2, 1}}) {
        for (int i = 0; i < 20; ++i) {
            const auto v = oracle::random_volume({8, 8, 4}, rng);
            const auto got = kspace_truncate(v, s);
            const auto ref = oracle::kspace_truncate(v, s.sx, s.sy, s.sz);
            double err = 0, scale = 0;
            for (size_t j = 0; j < ref.data.size(); ++j) {
                err = std::max(err, std::abs(got.data[j] - ref.data[j]));
                scale = std::max(scale, std::abs(ref.data[j]));
            }
            worst = std::max(worst, err / scale);
            worst_mean = std::max(worst_mean, std::abs(got.mean() - v.mean()));

            const auto w2 = oracle::random_volume({8, 8, 4}, rng);
            VolumeImage mix(v.shape);
            for (size_t j = 0; j < mix.data.size(); ++j) mix.data[j] = 0.3 * v.data[j] + 1.9 * w2.data[j];
            const auto tm = kspace_truncate(mix, s), tw = kspace_truncate(w2, s);
            for (size_t j = 0; j < tm.data.size(); ++j)
                worst_lin = std::max(worst_lin, std::abs(tm.data[j] - (0.3 * got.data[j] + 1.9 * tw.data[j])));
        }
    }
    k.expect(worst <= 1e-9, "oracle relative error " + fmt("%.3g", worst));
    k.expect(worst_lin <= 1e-9, "linearity error " + fmt("%.3g", worst_lin));
    k.expect(worst_mean <= 1e-9, "mean preservation error " + fmt("%.3g", worst_mean));
    return k.outcome("40 volumes, oracle rel err " + fmt("%.3g", worst) + ", linearity " + fmt("%.3g", worst_lin) +
                     ", mean " + fmt("%.3g", worst_mean));
}

// ---------------------------------------------------------------------------
// A3: SSIM against the brute-force window oracle.

Outcome a3(const Context&) {
    Checks k;
    std::mt19937_64 rng(77);
    double worst = 0, worst_sym = 0, worst_self = 0;
    for (int i = 0; i < 10; ++i) {
        const auto x = oracle::random_volume({32, 32, 3}, rng);
        auto y = oracle::random_volume({32, 32, 3}, rng);
        // Mix in x so the pairs span a range of similarities.
        for (size_t j = 0; j < y.data.size(); ++j) y.data[j] = (i / 10.0) * x.data[j] + (1 - i / 10.0) * y.data[j];
        worst = std::max(worst, std::abs(ssim_metric(x, y) - oracle::ssim(x, y)));
        worst_sym = std::max(worst_sym, std::abs(ssim_metric(x, y) - ssim_metric(y, x)));
        worst_self = std::max(worst_self, std::abs(ssim_metric(x, x) - 1.0));
    }
    k.expect(worst <= 1e-9, "oracle error " + fmt("%.3g", worst));
    k.expect(worst_sym <= 1e-12, "symmetry error " + fmt("%.3g", worst_sym));
    k.expect(worst_self <= 1e-12, "SSIM(x,x) error " + fmt("%.3g", worst_self));
    return k.outcome("10 pairs, oracle err " + fmt("%.3g", worst) + ", symmetry " + fmt("%.3g", worst_sym) +
                     ", self " + fmt("%.3g", worst_self));
}

// ---------------------------------------------------------------------------
// A4: gradient checks.

double jvp_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x0) {
    torch::manual_seed(17);
    auto v = torch::randn_like(x0);
    v = v / v.norm();  // unit direction
    auto x = x0.clone().set_requires_grad(true);
    auto y = f(x);
    const auto r = torch::randn_like(y);
    const double ad = (torch::autograd::grad({(y * r).sum()}, {x})[0] * v).sum().item<double>();
    torch::NoGradGuard guard;
    const double eps = 1e-3;
    const double fd =
        ((f(x0 + eps * v) * r).sum().item<double>() - (f(x0 - eps * v) * r).sum().item<double>()) / (2 * eps);
    return std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-12});
}

Outcome a4(const Context&) {
    using namespace loss;
    Checks k;
    torch::manual_seed(3);
    const auto x0 = torch::rand({1, 1, 8, 8, 3}, torch::kFloat64);
    const auto y = torch::rand({1, 1, 8, 8, 3}, torch::kFloat64);
    const auto d0 = torch::rand({1, 1, 8, 8, 3}, torch::kFloat64) * 2 - 0.5;
    const double eps = 1e-4;
    const SsimOptions small{.window = 7};
    const LossWeights w;
    const auto xf = x0.flatten(), yf = y.flatten(), df = d0.flatten();
    auto l1_kink = [&](int64_t i) { return std::abs(xf[i].item<double>() - yf[i].item<double>()) < 2 * eps; };
    auto half_kink = [&](int64_t i) { return std::abs(df[i].item<double>() - 0.5) < 2 * eps; };
    std::string worst_list;
    auto check = [&](const std::string& name, const std::function<torch::Tensor(const torch::Tensor&)>& f,
                     const torch::Tensor& at, const std::function<bool(int64_t)>& kink) {
        const auto r = oracle::finite_difference_check(f, at, eps, 20, 11, kink);
        k.expect(r.checked == 20 && r.worst_relative < 1e-3, name + " rel " + fmt("%.3g", r.worst_relative));
        worst_list += name + "=" + fmt("%.2g", r.worst_relative) + " ";
    };
    check("l1", [&](const torch::Tensor& x) { return l1(x, y); }, x0, l1_kink);
    check("ssim", [&](const torch::Tensor& x) { return ssim_loss(x, y, small); }, x0, {});
    check("adv", [&](const torch::Tensor& x) { return adv_gen(x); }, d0, {});
    check("cycle", [&](const torch::Tensor& x) { return image_cycle(x, y, d0, w, small).value; }, x0, l1_kink);
    check("cycle-adv", [&](const torch::Tensor& d) { return image_cycle(x0, y, d, w, small).value; }, d0, {});
    check("da", [&](const torch::Tensor& d) { return da_image(d, y); }, d0, half_kink);
    check("disc-real", [&](const torch::Tensor& d) { return disc_lr(d, y); }, d0, {});
    check("disc-fake", [&](const torch::Tensor& d) { return disc_lr(y, d); }, d0, {});

    for (const auto& s : {ScaleFactor{2, 2, 2}, ScaleFactor{2, 2, 1}}) {
        NetworkConfig cfg;
        cfg.feat_channels = 8;
        cfg.n_groups = 2;
        cfg.n_blocks = 2;
        cfg.reduction = 4;
        cfg.disc_base_channels = 4;
        cfg.scale = s;
        ComponentSet c(cfg, 5);
        c.to(torch::kFloat64);
        torch::manual_seed(6);
        const auto lr = torch::rand({1, 1, 8, 8, 3}, torch::kFloat64);
        const auto hr = torch::rand({1, 1, 8 * s.sx, 8 * s.sy, 3 * s.sz}, torch::kFloat64);
        const auto f = torch::rand({1, 8, 8, 8, 3}, torch::kFloat64);
        const std::string tag = " " + s.to_string();
        const std::pair<std::string, double> jvps[] = {
            {"extractor", jvp_error([&](const torch::Tensor& x) { return c.extractor->forward(x); }, hr)},
            {"lr_encoder", jvp_error([&](const torch::Tensor& x) { return c.lr_encoder->forward(x); }, lr)},
            {"lr_decoder", jvp_error([&](const torch::Tensor& x) { return c.lr_decoder->forward(x); }, f)},
            {"sr_decoder", jvp_error([&](const torch::Tensor& x) { return c.sr_decoder->forward(x); }, f)},
            {"lr_discriminator", jvp_error([&](const torch::Tensor& x) { return c.lr_discriminator->forward(x); }, lr)},
            {"feature_discriminator",
             jvp_error([&](const torch::Tensor& x) { return c.feature_discriminator->forward(x); }, f)},
        };
        double worst = 0;
        for (const auto& [name, e] : jvps) {
            k.expect(e < 1e-2, name + tag + " JVP rel " + fmt("%.3g", e));
            worst = std::max(worst, e);
        }
        worst_list += "JVP" + tag + "=" + fmt("%.2g", worst) + " ";
    }
    return k.outcome(worst_list);
}

// ---------------------------------------------------------------------------
// Shared helpers for the training criteria.

ExperimentConfig load_config(const Context& ctx, const std::string& name) {
    ExperimentConfig cfg = load_experiment_config(ctx.source / "configs" / name);
    cfg.resolve();
    return cfg;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// A5: smoke training.

Outcome a5(const Context& ctx) {
    Checks k;
    const auto base = load_config(ctx, "acceptance_smoke.json");
    std::string summary;
    for (uint64_t seed : {0ULL, 1ULL, 2ULL}) {
        auto cfg = base;
        cfg.seed = seed;
        cfg.train.seed = seed;
        cfg.paths.data_dir = ctx.work / "a5" / ("seed" + std::to_string(seed)) / "data";
        cfg.paths.run_dir = ctx.work / "a5" / ("seed" + std::to_string(seed)) / "run";
        prepare_data(cfg);
        TrainHistory h;
        try {
            h = run_training(cfg);
        } catch (const std::exception& e) {
            k.expect(false, "seed " + std::to_string(seed) + ": " + e.what());
            continue;
        }
        const auto& it = h.iterations;
        k.expect(it.size() == 200, "seed " + std::to_string(seed) + " ran " + std::to_string(it.size()) + " iterations");
        if (it.size() < 30) continue;
        double head = 0;
        for (size_t i = 0; i < 10; ++i) head += it[i].report.total;
        head /= 10;
        std::vector<double> tail;
        for (size_t i = it.size() - 20; i < it.size(); ++i) tail.push_back(it[i].report.total);
        const double drop = 1.0 - median(tail) / head;
        bool finite = true;
        for (const auto& l : it)
            finite = finite && l.report.lrd && l.report.fd && std::isfinite(*l.report.lrd) && std::isfinite(*l.report.fd);
        k.expect(drop >= 0.30, "seed " + std::to_string(seed) + " drop " + fmt("%.3f", drop));
        k.expect(finite, "seed " + std::to_string(seed) + " discriminator loss not finite");
        summary += "seed " + std::to_string(seed) + " drop " + fmt("%.1f%%", 100 * drop) + " ";
    }
    return k.outcome(summary + "(median of last 20 vs mean of first 10; isolation/alternation asserted every step)");
}

// ---------------------------------------------------------------------------
// A6: degradation-shift ordering.

struct A6Variant {
    std::string tag;
    std::function<void(ExperimentConfig&)> adjust;
};

fs::path a6_run(const Context& ctx, const std::string& tag) { return ctx.work / "a6" / tag; }

Outcome a6(const Context& ctx) {
    Checks k;
    const auto base = load_config(ctx, "acceptance_desk.json");
    auto with_paths = [&](ExperimentConfig cfg, const std::string& tag) {
        cfg.paths.data_dir = ctx.work / "a6" / "data";
        cfg.paths.run_dir = a6_run(ctx, tag);
        return cfg;
    };
    const std::vector<A6Variant> variants{
        {"udean", [](ExperimentConfig&) {}},
        {"image_only", [](ExperimentConfig& c) { c.train.da_feature_enabled = false; }},
        {"feature_only", [](ExperimentConfig& c) { c.train.da_image_enabled = false; }},
        {"supervised", [](ExperimentConfig& c) { c.train.mode = TrainMode::SupervisedBaseline; }},
    };
    const auto data_cfg = with_paths(base, "udean");
    if (data_cfg.data.mode != PairingMode::Misaligned) return {false, "A6 config must use misaligned pairs"};
    prepare_data(data_cfg);
    for (const auto& v : variants) {
        auto cfg = with_paths(base, v.tag);
        v.adjust(cfg);
        const auto t0 = std::chrono::steady_clock::now();
        run_training(cfg);
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "A6 %s trained in %.0f s\n", v.tag.c_str(), sec);
    }
    std::vector<std::pair<std::string, fs::path>> extra;
    for (size_t i = 1; i < variants.size(); ++i)
        extra.emplace_back(variants[i].tag, a6_run(ctx, variants[i].tag) / kBestCheckpoint);
    auto eval_cfg = data_cfg;
    const auto records = run_evaluate(eval_cfg, a6_run(ctx, "udean") / kBestCheckpoint, extra);
    std::map<std::string, MethodSummary> s;
    for (const auto& row : summarize(records)) s[row.method] = row;
    k.expect(s.count("tricubic") && s.count("udean") && s.count("supervised"), "missing method rows");
    if (!s.count("tricubic") || !s.count("udean")) return k.outcome("evaluation incomplete");
    k.expect(s["udean"].count == 8, "test set has " + std::to_string(s["udean"].count) + " volumes");
    const auto& tri = s["tricubic"];
    const auto& ud = s["udean"];
    k.expect(ud.ssim_mean > tri.ssim_mean, "udean SSIM not above tricubic");
    k.expect(ud.psnr_mean > tri.psnr_mean, "udean PSNR not above tricubic");
    k.expect(ud.ssim_mean > s["supervised"].ssim_mean, "udean SSIM not above supervised");
    k.expect(ud.psnr_mean > s["supervised"].psnr_mean, "udean PSNR not above supervised");
    for (const char* ab : {"image_only", "feature_only"}) {
        k.expect(s[ab].ssim_mean >= tri.ssim_mean, std::string(ab) + " SSIM below tricubic");
        k.expect(s[ab].psnr_mean >= tri.psnr_mean, std::string(ab) + " PSNR below tricubic");
    }
    std::string table;
    for (const auto& [name, row] : s)
        table += name + " " + fmt("%.4f", row.ssim_mean) + "/" + fmt("%.2f", row.psnr_mean) + "dB ";
    return k.outcome("SSIM/PSNR: " + table);
}

// ---------------------------------------------------------------------------
// A7: feature alignment.

Outcome a7(const Context& ctx) {
    Checks k;
    auto cfg = load_config(ctx, "acceptance_desk.json");
    cfg.paths.data_dir = ctx.work / "a6" / "data";
    cfg.paths.run_dir = a6_run(ctx, "udean");
    const auto ckpt = a6_run(ctx, "udean") / kBestCheckpoint;
    if (!fs::exists(ckpt) || !fs::exists(a6_run(ctx, "udean") / kCompleteMarker))
        return {false, "no completed A6 run under " + a6_run(ctx, "udean").string() + " (run A6 first)"};
    const auto before = run_dump_features(cfg, std::nullopt, ctx.work / "a7" / "before");
    const auto after = run_dump_features(cfg, ckpt, ctx.work / "a7" / "after");
    k.expect(before.separability >= 0.80, "untrained separability " + fmt("%.3f", before.separability));
    k.expect(after.separability <= 0.65, "trained separability " + fmt("%.3f", after.separability));
    return k.outcome("held-out accuracy before " + fmt("%.3f", before.separability) + ", after " +
                     fmt("%.3f", after.separability) + " (" + std::to_string(cfg.eval.feature_patches) +
                     " patches per domain)");
}

// ---------------------------------------------------------------------------
// A8: inference-path isolation.

Outcome a8(const Context&) {
    Checks k;
    NetworkConfig cfg;
    cfg.feat_channels = 16;
    cfg.n_groups = 2;
    cfg.n_blocks = 2;
    cfg.reduction = 4;
    cfg.disc_base_channels = 16;
    ComponentSet c(cfg, 1);
    const auto lr = kspace_truncate(make_phantom({64, 64, 12}, 3), cfg.scale);

    std::map<ComponentId, uint64_t> hashes;
    for (auto id : ComponentSet::kAll) hashes[id] = parameter_hash(c.module(id)->parameters());
    // Gradient hooks count any backward use; forward counters any forward use.
    std::map<ComponentId, int> grads;
    std::vector<torch::Tensor> all;
    for (auto id : ComponentSet::kAll)
        for (auto& p : c.module(id)->parameters()) {
            p.register_hook([&grads, id](const torch::Tensor& g) {
                ++grads[id];
                return g;
            });
        }
    c.reset_forward_calls();
    const auto sr = reconstruct(lr, c, StitchPlan::overlapping({16, 16, 3}));
    k.expect(sr.shape == lr.shape * cfg.scale, "output shape " + to_string(sr.shape));
    std::string touched;
    for (auto id : ComponentSet::kAll) {
        const bool inference = id == ComponentId::LrEncoder || id == ComponentId::SrDecoder;
        const auto calls = c.forward_calls(id);
        k.expect(inference ? calls > 0 : calls == 0,
                 std::string(to_string(id)) + " forward calls " + std::to_string(calls));
        k.expect(grads[id] == 0, std::string(to_string(id)) + " received gradients");
        k.expect(parameter_hash(c.module(id)->parameters()) == hashes[id], std::string(to_string(id)) + " changed");
        if (calls > 0) touched += std::string(to_string(id)) + " ";
    }
    const auto inf = count_parameters(c, ParameterSubset::Inference);
    const auto total = count_parameters(c, ParameterSubset::All);
    k.expect(inf < total, "inference count not below total");
    ComponentSet full(NetworkConfig{}, 0);
    const double full_inf = static_cast<double>(count_parameters(full, ParameterSubset::Inference)) / 1e6;
    return k.outcome("touched: " + touched + "; params inference " + std::to_string(inf) + " < all " +
                     std::to_string(total) + "; default config inference " + fmt("%.3f", full_inf) +
                     " M (reference " + fmt("%.3f", kReferenceInferenceParamsMillions) + " M)");
}

// ---------------------------------------------------------------------------
// A9: pipeline determinism through the CLI.

int run_cli(const std::string& args, const fs::path& root, const fs::path& log) {
    const std::string cmd = "UDEAN_OUTPUT_ROOT=" + root.string() + " " + UDEAN_CLI_PATH + " " + args + " > " +
                            log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::map<std::string, double>> read_log(const fs::path& p) {
    std::vector<std::map<std::string, double>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        std::map<std::string, double> row;
        for (const auto& [key, v] : j.items())
            if (v.is_number()) row[key] = v.get<double>();
        rows.push_back(row);
    }
    return rows;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome a9(const Context& ctx) {
    Checks k;
    const auto config = (ctx.source / "configs" / "tiny.json").string();
    std::array<fs::path, 2> roots{ctx.work / "a9" / "first", ctx.work / "a9" / "second"};
    for (const auto& root : roots) {
        fs::remove_all(root);
        fs::create_directories(root);
        for (const char* cmd : {"prepare-data", "train", "evaluate"}) {
            const int code = run_cli(std::string(cmd) + " --config " + config, root, root / (std::string(cmd) + ".log"));
            k.expect(code == 0, std::string(cmd) + " exited " + std::to_string(code) + " in " + root.string());
        }
    }
    const auto a = read_log(roots[0] / "tiny" / "run" / kLossLogFile);
    const auto b = read_log(roots[1] / "tiny" / "run" / kLossLogFile);
    k.expect(!a.empty() && a.size() == b.size(), "loss logs differ in length");
    double worst = 0;
    for (size_t i = 0; i < std::min(a.size(), b.size()); ++i)
        for (const auto& [key, v] : a[i]) {
            const auto it = b[i].find(key);
            if (it == b[i].end()) {
                k.expect(false, "missing key " + key);
                continue;
            }
            worst = std::max(worst, std::abs(v - it->second) / std::max(std::abs(v), 1e-30));
        }
    k.expect(worst <= 1e-6, "loss logs differ by " + fmt("%.3g", worst));
    const auto m0 = slurp(roots[0] / "tiny" / "run" / "metrics" / "metrics.csv");
    const auto m1 = slurp(roots[1] / "tiny" / "run" / "metrics" / "metrics.csv");
    k.expect(!m0.empty() && m0 == m1, "metric CSVs differ");
    return k.outcome(std::to_string(a.size()) + " log lines, max relative difference " + fmt("%.3g", worst) +
                     ", metric CSVs " + (m0 == m1 ? "identical" : "different"));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string only;
    std::string work = (fs::current_path() / "acceptance_work").string();
    app.add_option("--only", only, "comma-separated criteria, e.g. A1,A6");
    app.add_option("--work", work, "scratch directory for training criteria");
    CLI11_PARSE(app, argc, argv);
    torch::set_num_threads(1);

    const Context ctx{fs::absolute(work), UDEAN_SOURCE_DIR};
    fs::create_directories(ctx.work);
    const std::vector<std::pair<std::string, std::pair<std::function<Outcome(const Context&)>, double>>> criteria{
        {"A1", {a1, 10}},  {"A2", {a2, 30}},   {"A3", {a3, 30}},  {"A4", {a4, 300}}, {"A5", {a5, 600}},
        {"A6", {a6, 3600}}, {"A7", {a7, 300}}, {"A8", {a8, 60}}, {"A9", {a9, 900}},
    };
    std::set<std::string> selected;
    std::stringstream ss(only);
    for (std::string id; std::getline(ss, id, ',');)
        if (!id.empty()) selected.insert(id);

    bool all_pass = true;
    for (const auto& [id, entry] : criteria) {
        if (!selected.empty() && !selected.count(id)) continue;
        const auto& [fn, budget] = entry;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn(ctx);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (sec > budget) {
            o.pass = false;
            o.detail += "; runtime over budget";
        }
        std::printf("%s %s (%.1f s of %.0f s) %s\n", id.c_str(), o.pass ? "PASS" : "FAIL", sec, budget, o.detail.c_str());
        std::fflush(stdout);
        all_pass = all_pass && o.pass;
    }
    return all_pass ? 0 : 1;
}
