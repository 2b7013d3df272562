#include "udean/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "udean/checkpoint.hpp"
#include "udean/error.hpp"

namespace udean {

std::string_view to_string(NormalizationScope s) {
    return s == NormalizationScope::PerVolume ? "per-volume" : "per-dataset";
}

NormalizationScope parse_normalization_scope(std::string_view text) {
    if (text == "per-volume") return NormalizationScope::PerVolume;
    if (text == "per-dataset") return NormalizationScope::PerDataset;
    throw ConfigError("unknown normalization scope '" + std::string(text) + "' (expected per-volume or per-dataset)");
}

void ExperimentConfig::resolve() {
    network.scale = scale;
    train.seed = seed;
    if (threads < 1) throw ConfigError("threads must be at least 1");
    network.validate();
    train.validate();
    loss.validate();
    if (!scale.supported()) throw ConfigError("unsupported scale " + scale.to_string());
    for (int a = 0; a < 3; ++a) {
        if (lr_patch[a] < 1) throw ConfigError("patch.lr_shape must be positive");
        if (data.phantom_count > 0 && data.phantom_shape[a] % scale.as_shape()[a] != 0)
            throw ConfigError("data.phantom_shape " + to_string(data.phantom_shape) + " is not divisible by scale " +
                              scale.to_string());
    }
    for (double r : {data.deformation.rot_max_deg, data.deformation.trans_max_vox, data.deformation.shrink_max_vox})
        if (!(r >= 0.0 && r <= 2.0)) throw ConfigError("deformation ranges must lie in [0, 2]");
    stitch_plan().validate();
    if (!(eval.error_map_scale > 0.0)) throw ConfigError("eval.error_map_scale must be positive");
    if (eval.feature_patches < 2) throw ConfigError("eval.feature_patches must be at least 2");
}

PatchSpec ExperimentConfig::patch_spec() const { return {lr_patch, scale, train.batch_size}; }

SsimOptions ExperimentConfig::ssim_options() const {
    SsimOptions o;
    o.window = eval.ssim_window;
    o.sigma = eval.ssim_sigma;
    return o;
}

StitchPlan ExperimentConfig::stitch_plan() const { return {lr_patch, eval.stitch_stride}; }

std::filesystem::path output_root() {
    const char* env = std::getenv(kOutputRootEnv);
    return env && *env ? std::filesystem::path(env) : std::filesystem::current_path();
}

namespace {

std::filesystem::path under_root(const std::filesystem::path& p) { return p.is_absolute() ? p : output_root() / p; }

}  // namespace

std::filesystem::path ExperimentConfig::data_dir() const { return under_root(paths.data_dir); }
std::filesystem::path ExperimentConfig::run_dir() const { return under_root(paths.run_dir); }
std::filesystem::path ExperimentConfig::manifest_path() const { return data_dir() / "manifest.txt"; }

// ---------------------------------------------------------------------------

namespace {

using ojson = nlohmann::ordered_json;

ojson shape_json(const Shape3& s) { return ojson::array({s[0], s[1], s[2]}); }

/// Walks one JSON object, binding known keys and rejecting the rest.
class Section {
public:
    Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("'" + path_ + "' must be an object");
    }

    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
    }

    Section(const Section&) = delete;
    Section& operator=(const Section&) = delete;

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config key '" + qualified(key) + "': " + e.what());
        }
    }

    void shape(const char* key, Shape3& out) {
        std::vector<int64_t> v;
        get(key, v);
        if (!j_.contains(key)) return;
        if (v.size() != 3) throw ConfigError("config key '" + qualified(key) + "' needs three integers");
        out = {v[0], v[1], v[2]};
    }

    void path(const char* key, std::filesystem::path& out) {
        std::string s = out.string();
        get(key, s);
        out = s;
    }

    template <typename Parse>
    void parsed(const char* key, Parse parse) {
        std::string s;
        get(key, s);
        if (!j_.contains(key)) return;
        try {
            parse(s);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError("config key '" + qualified(key) + "': " + e.what());
        }
    }

    Section child(const char* key) {
        seen_.insert(key);
        return Section(j_.contains(key) ? j_.at(key) : empty(), qualified(key));
    }

private:
    static const nlohmann::json& empty() {
        static const nlohmann::json e = nlohmann::json::object();
        return e;
    }
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
    ojson j;
    j["seed"] = c.seed;
    j["scale"] = c.scale.to_string();
    j["threads"] = c.threads;
    j["paths"] = {{"input_dir", c.paths.input_dir.string()},
                  {"data_dir", c.paths.data_dir.string()},
                  {"run_dir", c.paths.run_dir.string()}};
    j["data"] = {{"mode", to_string(c.data.mode)},
                 {"phantom_count", c.data.phantom_count},
                 {"phantom_shape", shape_json(c.data.phantom_shape)},
                 {"counts",
                  {{"source", c.data.counts.source},
                   {"target", c.data.counts.target},
                   {"validation", c.data.counts.validation},
                   {"test", c.data.counts.test}}},
                 {"normalization", to_string(c.data.normalization)},
                 {"deformation",
                  {{"rot_max_deg", c.data.deformation.rot_max_deg},
                   {"trans_max_vox", c.data.deformation.trans_max_vox},
                   {"shrink_max_vox", c.data.deformation.shrink_max_vox}}}};
    j["network"] = {{"feat_channels", c.network.feat_channels},
                    {"n_groups", c.network.n_groups},
                    {"n_blocks", c.network.n_blocks},
                    {"reduction", c.network.reduction},
                    {"disc_base_channels", c.network.disc_base_channels},
                    {"disc_stages", c.network.disc_stages},
                    {"leaky_slope", c.network.leaky_slope}};
    const auto& t = c.train;
    j["train"] = {{"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"adam_beta1", t.adam_beta1},
                  {"adam_beta2", t.adam_beta2},
                  {"adam_eps", t.adam_eps},
                  {"lr_max", t.lr_max},
                  {"lr_min", t.lr_min},
                  {"mode", to_string(t.mode)},
                  {"da_image_enabled", t.da_image_enabled},
                  {"da_feature_enabled", t.da_feature_enabled},
                  {"hr_adversarial", t.hr_adversarial},
                  {"iterations_per_epoch", t.iterations_per_epoch},
                  {"validation_volumes", t.validation_volumes},
                  {"keep_epoch_checkpoints", t.keep_epoch_checkpoints},
                  {"check_isolation", t.check_isolation}};
    const auto& w = c.loss;
    j["loss"] = {{"alpha", w.alpha},     {"beta", w.beta},       {"lambda1", w.lambda1}, {"lambda2", w.lambda2},
                 {"lambda3", w.lambda3}, {"lambda4", w.lambda4}, {"lambda5", w.lambda5}, {"lambda6", w.lambda6}};
    j["patch"] = {{"lr_shape", shape_json(c.lr_patch)}};
    j["eval"] = {{"stitch_stride", shape_json(c.eval.stitch_stride)},
                 {"error_map_scale", c.eval.error_map_scale},
                 {"feature_patches", c.eval.feature_patches},
                 {"ssim_window", c.eval.ssim_window},
                 {"ssim_sigma", c.eval.ssim_sigma}};
    return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    {
        Section root(j, "");
        root.get("seed", c.seed);
        root.parsed("scale", [&](const std::string& s) { c.scale = ScaleFactor::parse(s); });
        root.get("threads", c.threads);
        {
            auto p = root.child("paths");
            p.path("input_dir", c.paths.input_dir);
            p.path("data_dir", c.paths.data_dir);
            p.path("run_dir", c.paths.run_dir);
        }
        {
            auto d = root.child("data");
            d.parsed("mode", [&](const std::string& s) { c.data.mode = parse_pairing_mode(s); });
            d.get("phantom_count", c.data.phantom_count);
            d.shape("phantom_shape", c.data.phantom_shape);
            {
                auto n = d.child("counts");
                n.get("source", c.data.counts.source);
                n.get("target", c.data.counts.target);
                n.get("validation", c.data.counts.validation);
                n.get("test", c.data.counts.test);
            }
            d.parsed("normalization", [&](const std::string& s) { c.data.normalization = parse_normalization_scope(s); });
            {
                auto r = d.child("deformation");
                r.get("rot_max_deg", c.data.deformation.rot_max_deg);
                r.get("trans_max_vox", c.data.deformation.trans_max_vox);
                r.get("shrink_max_vox", c.data.deformation.shrink_max_vox);
            }
        }
        {
            auto n = root.child("network");
            n.get("feat_channels", c.network.feat_channels);
            n.get("n_groups", c.network.n_groups);
            n.get("n_blocks", c.network.n_blocks);
            n.get("reduction", c.network.reduction);
            n.get("disc_base_channels", c.network.disc_base_channels);
            n.get("disc_stages", c.network.disc_stages);
            n.get("leaky_slope", c.network.leaky_slope);
        }
        {
            auto t = root.child("train");
            t.get("epochs", c.train.epochs);
            t.get("batch_size", c.train.batch_size);
            t.get("adam_beta1", c.train.adam_beta1);
            t.get("adam_beta2", c.train.adam_beta2);
            t.get("adam_eps", c.train.adam_eps);
            t.get("lr_max", c.train.lr_max);
            t.get("lr_min", c.train.lr_min);
            t.parsed("mode", [&](const std::string& s) { c.train.mode = parse_train_mode(s); });
            t.get("da_image_enabled", c.train.da_image_enabled);
            t.get("da_feature_enabled", c.train.da_feature_enabled);
            t.get("hr_adversarial", c.train.hr_adversarial);
            t.get("iterations_per_epoch", c.train.iterations_per_epoch);
            t.get("validation_volumes", c.train.validation_volumes);
            t.get("keep_epoch_checkpoints", c.train.keep_epoch_checkpoints);
            t.get("check_isolation", c.train.check_isolation);
        }
        {
            auto w = root.child("loss");
            w.get("alpha", c.loss.alpha);
            w.get("beta", c.loss.beta);
            w.get("lambda1", c.loss.lambda1);
            w.get("lambda2", c.loss.lambda2);
            w.get("lambda3", c.loss.lambda3);
            w.get("lambda4", c.loss.lambda4);
            w.get("lambda5", c.loss.lambda5);
            w.get("lambda6", c.loss.lambda6);
        }
        {
            auto p = root.child("patch");
            p.shape("lr_shape", c.lr_patch);
        }
        {
            auto e = root.child("eval");
            e.shape("stitch_stride", c.eval.stitch_stride);
            e.get("error_map_scale", c.eval.error_map_scale);
            e.get("feature_patches", c.eval.feature_patches);
            e.get("ssim_window", c.eval.ssim_window);
            e.get("ssim_sigma", c.eval.ssim_sigma);
        }
    }
    c.resolve();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

void save_experiment_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json(cfg).dump(2) << '\n';
}

}  // namespace udean
