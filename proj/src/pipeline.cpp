#include "udean/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

#include "udean/checkpoint.hpp"
#include "udean/error.hpp"
#include "udean/random.hpp"

namespace udean {

namespace {

std::vector<std::pair<std::string, VolumeImage>> read_inputs(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, VolumeImage>> out;
    if (cfg.data.phantom_count > 0) {
        for (int64_t i = 0; i < cfg.data.phantom_count; ++i) {
            char id[32];
            std::snprintf(id, sizeof(id), "p%03lld", static_cast<long long>(i));
            out.emplace_back(id, make_phantom(cfg.data.phantom_shape,
                                              derive_seed(cfg.seed, kSeedPhantomBase + static_cast<uint64_t>(i))));
        }
        return out;
    }
    const auto dir = cfg.paths.input_dir;
    if (dir.empty() || !std::filesystem::is_directory(dir))
        throw ConfigError("no inputs: set data.phantom_count or point paths.input_dir at HR volumes");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (ext == ".nii" || ext == ".raw" || ext == ".f32") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no .nii/.raw volumes in " + dir.string());
    for (const auto& f : files) out.emplace_back(f.stem().string(), load_volume(f));
    return out;
}

}  // namespace

DatasetManifest prepare_data(const ExperimentConfig& cfg) {
    auto inputs = read_inputs(cfg);
    std::vector<std::string> ids;
    for (const auto& [id, v] : inputs) ids.push_back(id);
    DatasetManifest m = split_groups(ids, cfg.data.counts, derive_seed(cfg.seed, kSeedSplit), cfg.data.mode);

    if (cfg.data.normalization == NormalizationScope::PerVolume) {
        for (auto& [id, v] : inputs) v = normalize_unit_range(std::move(v));
    } else {
        std::vector<VolumeImage> all;
        for (auto& [id, v] : inputs) all.push_back(std::move(v));
        all = normalize_unit_range_shared(std::move(all));
        for (size_t i = 0; i < all.size(); ++i) inputs[i].second = std::move(all[i]);
    }

    const auto dir = cfg.data_dir();
    std::filesystem::create_directories(dir / "hr");
    std::filesystem::create_directories(dir / "lr");
    std::ofstream deformations;
    if (cfg.data.mode == PairingMode::Misaligned) {
        std::filesystem::create_directories(dir / "hr_source");
        deformations.open(dir / "deformations.tsv", std::ios::trunc);
        deformations << "participant\trot_hf_deg\trot_lr_deg\ttrans_hf_vox\ttrans_lr_vox\tshrink_ap_vox\tshrink_lr_vox\n"
                     << std::setprecision(10);
    }

    std::map<std::string, std::pair<std::filesystem::path, std::filesystem::path>> hr_lr;
    std::map<std::string, std::filesystem::path> source_hr;
    const auto source_ids = m.participants(Group::Source);
    for (size_t i = 0; i < inputs.size(); ++i) {
        const auto& [id, hr] = inputs[i];
        // Only participants the split actually uses are written.
        bool used = false;
        for (const auto& e : m.entries) used = used || e.participant_id == id;
        if (!used) continue;
        for (int a = 0; a < 3; ++a)
            if (hr.shape[a] < cfg.lr_patch[a] * cfg.scale.as_shape()[a])
                throw ConfigError("volume " + id + " of shape " + to_string(hr.shape) + " is smaller than the HR patch");
        const VolumeImage lr = kspace_truncate(hr, cfg.scale);
        const auto hr_path = dir / "hr" / (id + ".nii");
        const auto lr_path = dir / "lr" / (id + ".nii");
        save_volume(hr, hr_path);
        save_volume(lr, lr_path);
        hr_lr[id] = {hr_path, lr_path};
        if (std::find(source_ids.begin(), source_ids.end(), id) == source_ids.end()) continue;
        if (cfg.data.mode == PairingMode::Misaligned) {
            // LR comes from the undistorted volume; only the source HR copy moves.
            const auto d = sample_deformation(cfg.data.deformation,
                                              derive_seed(cfg.seed, kSeedDeformationBase + static_cast<uint64_t>(i)));
            const auto path = dir / "hr_source" / (id + ".nii");
            save_volume(apply_misalignment(hr, d), path);
            source_hr[id] = path;
            deformations << id << '\t' << d.rot_hf_deg << '\t' << d.rot_lr_deg << '\t' << d.trans_hf_vox << '\t'
                         << d.trans_lr_vox << '\t' << d.shrink_ap_vox << '\t' << d.shrink_lr_vox << '\n';
        } else {
            source_hr[id] = hr_path;
        }
    }
    for (auto& e : m.entries) {
        if (e.group == Group::Source) e.volume_path = source_hr.at(e.participant_id);
        else e.volume_path = e.role == Role::HR ? hr_lr.at(e.participant_id).first : hr_lr.at(e.participant_id).second;
    }
    save_manifest(m, cfg.manifest_path());
    return m;
}

ComponentSet build_components(const ExperimentConfig& cfg) {
    return ComponentSet(cfg.network, derive_seed(cfg.seed, kSeedNetwork));
}

TrainHistory run_training(const ExperimentConfig& cfg, const TrainOptions& extra) {
    const DatasetManifest m = load_manifest(cfg.manifest_path());
    const TrainData data = load_train_data(m);
    ComponentSet c = build_components(cfg);
    TrainOptions options = extra;
    options.run_dir = cfg.run_dir();
    std::filesystem::create_directories(options.run_dir);
    save_experiment_config(cfg, options.run_dir / "config.json");
    return train(data, c, cfg.train, cfg.loss, cfg.patch_spec(), options);
}

ComponentSet load_compatible(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint) {
    const CheckpointInfo info = read_checkpoint_info(checkpoint);
    require_compatible(info.network, cfg.network);
    return load_checkpoint(checkpoint);
}

VolumeImage run_infer(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                      const std::filesystem::path& input, const std::filesystem::path& output) {
    ComponentSet c = load_compatible(cfg, checkpoint);
    const VolumeImage lr = load_volume(input);
    const VolumeImage sr = reconstruct(lr, c, cfg.stitch_plan());
    if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
    save_volume(sr, output);
    return sr;
}

std::vector<EvalCase> load_test_cases(const DatasetManifest& m) {
    std::vector<EvalCase> cases;
    for (const auto& id : m.participants(Group::Test)) {
        const auto* lr = m.find(id, Group::Test, Role::LR);
        const auto* hr = m.find(id, Group::Test, Role::HR);
        if (!lr || !hr) throw ConfigError("test participant " + id + " lacks an LR or HR volume");
        cases.push_back({id, load_volume(lr->volume_path), load_volume(hr->volume_path)});
    }
    if (cases.empty()) throw ConfigError("manifest has no test group");
    return cases;
}

std::vector<EvalRecord> run_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                                     const std::vector<std::pair<std::string, std::filesystem::path>>& extra) {
    // Check every checkpoint before any compute.
    std::vector<std::pair<std::string, std::filesystem::path>> all{{"udean", checkpoint}};
    all.insert(all.end(), extra.begin(), extra.end());
    for (const auto& [tag, path] : all) require_compatible(read_checkpoint_info(path).network, cfg.network);

    const auto cases = load_test_cases(load_manifest(cfg.manifest_path()));
    std::vector<std::shared_ptr<ComponentSet>> models;
    std::vector<EvalMethod> methods;
    for (const auto& [tag, path] : all) {
        auto c = std::make_shared<ComponentSet>(load_checkpoint(path));
        models.push_back(c);
        const StitchPlan plan = cfg.stitch_plan();
        methods.push_back({tag, [c, plan](const VolumeImage& lr) { return reconstruct(lr, *c, plan); }});
    }
    const auto records = evaluate(cases, methods, cfg.scale, cfg.ssim_options());

    const auto dir = cfg.run_dir() / "metrics";
    write_metrics_csv(records, dir / "metrics.csv");
    write_summary_csv(summarize(records), dir / "summary.csv");
    for (const auto& vc : cases) {
        const auto err = error_map(reconstruct(vc.lr, *models.front(), cfg.stitch_plan()), vc.hr);
        export_error_slices(err, dir / "error_maps", vc.volume_id + "_udean", cfg.eval.error_map_scale);
    }
    return records;
}

std::pair<torch::Tensor, torch::Tensor> feature_patches(const ExperimentConfig& cfg, const DatasetManifest& m) {
    const TrainData data = load_train_data(m);
    std::mt19937_64 rng(derive_seed(cfg.seed, kSeedFeaturePatches));
    PatchSpec one = cfg.patch_spec();
    one.batch_size = 1;
    std::vector<torch::Tensor> hr, lr;
    for (int64_t k = 0; k < cfg.eval.feature_patches; ++k) {
        const auto& src = data.source_hr[static_cast<size_t>(k) % data.source_hr.size()];
        hr.push_back(to_tensor(sample_hr_patches(src, one, rng).front()));
        const auto& tgt = data.target_lr[static_cast<size_t>(k) % data.target_lr.size()];
        lr.push_back(to_tensor(sample_patches(tgt, nullptr, one, rng).front().lr));
    }
    return {torch::stack(hr).unsqueeze(1), torch::stack(lr).unsqueeze(1)};
}

FeatureReport run_dump_features(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
                                const std::filesystem::path& out_dir) {
    if (checkpoint) require_compatible(read_checkpoint_info(*checkpoint).network, cfg.network);
    const ComponentSet c = checkpoint ? load_checkpoint(*checkpoint) : build_components(cfg);
    const auto [hr, lr] = feature_patches(cfg, load_manifest(cfg.manifest_path()));
    FeatureReport r;
    r.dump = compute_features(c, hr, lr);
    dump_features(r.dump, out_dir);
    r.separability = linear_separability(pooled_features(r.dump.f_s), pooled_features(r.dump.f_t),
                                         derive_seed(cfg.seed, kSeedClassifier));
    std::ofstream(out_dir / "separability.txt") << std::setprecision(10) << r.separability << '\n';
    return r;
}

}  // namespace udean
