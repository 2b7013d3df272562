// Command-line front end: prepare-data, train, infer, evaluate, report,
// dump-features. Exit codes: 0 success, 2 configuration error, 3 numeric
// abort, 1 anything else.

#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "udean/checkpoint.hpp"
#include "udean/config.hpp"
#include "udean/error.hpp"
#include "udean/pipeline.hpp"
#include "udean/report.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
    std::string config;
    std::optional<uint64_t> seed;
    std::optional<std::string> scale;
    std::optional<std::string> mode;
    std::optional<int64_t> phantom;
    std::string checkpoint;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "experiment config (JSON)");
    cmd->add_option("--seed", o.seed, "override the experiment seed");
    cmd->add_option("--scale", o.scale, "scale factor")->check(CLI::IsMember({"2x2x1", "2x2x2"}));
    cmd->add_option("--mode", o.mode, "pairing mode")->check(CLI::IsMember({"unpaired", "misaligned"}));
    cmd->add_option("--phantom", o.phantom, "generate N synthetic phantom participants");
}

udean::ExperimentConfig resolve_config(const Overrides& o) {
    udean::ExperimentConfig cfg = o.config.empty() ? udean::ExperimentConfig{} : udean::load_experiment_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.scale) cfg.scale = udean::ScaleFactor::parse(*o.scale);
    if (o.mode) cfg.data.mode = udean::parse_pairing_mode(*o.mode);
    if (o.phantom) cfg.data.phantom_count = *o.phantom;
    cfg.resolve();
    torch::set_num_threads(static_cast<int>(cfg.threads));
    return cfg;
}

std::filesystem::path checkpoint_or_best(const Overrides& o, const udean::ExperimentConfig& cfg) {
    return o.checkpoint.empty() ? cfg.run_dir() / udean::kBestCheckpoint : std::filesystem::path(o.checkpoint);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised degradation-adaptation super-resolution for 3D MRI"};
    app.require_subcommand(1);
    Overrides o;

    auto* prepare = app.add_subcommand("prepare-data", "build LR/HR volumes and the dataset manifest");
    add_common(prepare, o);

    auto* train = app.add_subcommand("train", "run adversarial training");
    add_common(train, o);

    auto* infer = app.add_subcommand("infer", "super-resolve one LR volume");
    add_common(infer, o);
    std::string input, output;
    infer->add_option("--checkpoint", o.checkpoint, "checkpoint (default: run_dir/checkpoints/best.ckpt)");
    infer->add_option("--input", input, "LR volume")->required();
    infer->add_option("--output", output, "SR volume to write")->required();

    auto* evaluate = app.add_subcommand("evaluate", "score the test group against tricubic");
    add_common(evaluate, o);
    std::vector<std::string> extra;
    evaluate->add_option("--checkpoint", o.checkpoint, "checkpoint (default: run_dir/checkpoints/best.ckpt)");
    evaluate->add_option("--compare", extra, "additional TAG=CHECKPOINT rows");

    auto* report = app.add_subcommand("report", "plots and summary for a run directory");
    add_common(report, o);
    std::string run_dir;
    report->add_option("--run-dir", run_dir, "run directory (default: from config)");

    auto* dump = app.add_subcommand("dump-features", "write f_s / f_t feature maps for embedding");
    add_common(dump, o);
    std::string out_dir;
    dump->add_option("--checkpoint", o.checkpoint, "checkpoint (default: untrained network)");
    dump->add_option("--out", out_dir, "output directory (default: run_dir/features)");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = resolve_config(o);
        if (*prepare) {
            const auto m = udean::prepare_data(cfg);
            std::printf("wrote %zu manifest entries to %s\n", m.entries.size(), cfg.manifest_path().c_str());
        } else if (*train) {
            udean::TrainOptions options;
            options.on_iteration = [](const udean::IterationLog& log) {
                if (log.iteration % 50 == 0)
                    std::printf("epoch %lld iter %lld lr %.3g total %.5f\n", static_cast<long long>(log.epoch),
                                static_cast<long long>(log.iteration), log.lr, log.report.total);
            };
            const auto h = udean::run_training(cfg, options);
            std::printf("trained %zu iterations; best epoch %lld\n", h.iterations.size(),
                        static_cast<long long>(h.best_epoch));
        } else if (*infer) {
            const auto sr = udean::run_infer(cfg, checkpoint_or_best(o, cfg), input, output);
            std::printf("wrote %s volume %s\n", udean::to_string(sr.shape).c_str(), output.c_str());
        } else if (*evaluate) {
            std::vector<std::pair<std::string, std::filesystem::path>> rows;
            for (const auto& e : extra) {
                const auto eq = e.find('=');
                if (eq == std::string::npos) throw udean::ConfigError("--compare expects TAG=CHECKPOINT, got " + e);
                rows.emplace_back(e.substr(0, eq), e.substr(eq + 1));
            }
            const auto records = udean::run_evaluate(cfg, checkpoint_or_best(o, cfg), rows);
            for (const auto& s : udean::summarize(records))
                std::printf("%-12s SSIM %.4f +- %.4f  PSNR %.3f +- %.3f dB (n=%lld)\n", s.method.c_str(), s.ssim_mean,
                            s.ssim_std, s.psnr_mean, s.psnr_std, static_cast<long long>(s.count));
        } else if (*report) {
            const auto r = udean::write_report(run_dir.empty() ? cfg.run_dir() : std::filesystem::path(run_dir));
            std::printf("%s report: %lld iterations, %lld epochs; summary at %s\n",
                        r.complete ? "complete" : "INCOMPLETE", static_cast<long long>(r.iterations),
                        static_cast<long long>(r.epochs_validated), r.summary.c_str());
        } else if (*dump) {
            std::optional<std::filesystem::path> ckpt;
            if (!o.checkpoint.empty()) ckpt = o.checkpoint;
            const auto dir = out_dir.empty() ? cfg.run_dir() / "features" : std::filesystem::path(out_dir);
            const auto r = udean::run_dump_features(cfg, ckpt, dir);
            std::printf("dumped %lld f_s and %lld f_t maps to %s; linear separability %.3f\n",
                        static_cast<long long>(r.dump.f_s.size(0)), static_cast<long long>(r.dump.f_t.size(0)),
                        dir.c_str(), r.separability);
        }
    } catch (const udean::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const udean::NumericAbort& e) {
        std::fprintf(stderr, "numeric abort: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
