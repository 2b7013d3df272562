#include "doctest_torch.hpp"

#include <filesystem>
#include <fstream>
#include <limits>

#include "udean/checkpoint.hpp"
#include "udean/error.hpp"
#include "udean/trainer.hpp"

using namespace udean;

namespace {

NetworkConfig tiny_network() {
    NetworkConfig cfg;
    cfg.feat_channels = 8;
    cfg.n_groups = 1;
    cfg.n_blocks = 2;
    cfg.reduction = 4;
    cfg.disc_base_channels = 4;
    return cfg;
}

struct Fixture {
    ComponentSet c{tiny_network(), 3};
    torch::Tensor y_s, x_t;
    Fixture() {
        torch::manual_seed(4);
        y_s = torch::rand({2, 1, 32, 32, 6});
        x_t = torch::rand({2, 1, 16, 16, 3});
    }
};

TrainData tiny_data(int n = 4) {
    TrainData d;
    for (int i = 0; i < n; ++i) {
        const auto id = "p" + std::to_string(i);
        const auto hr = make_phantom({48, 48, 8}, static_cast<uint64_t>(i));
        d.source_ids.push_back(id);
        d.source_hr.push_back(hr);
        d.target_ids.push_back(id);
        d.target_lr.push_back(kspace_truncate(make_phantom({48, 48, 8}, static_cast<uint64_t>(100 + i)), ScaleFactor{}));
    }
    const auto hr = make_phantom({48, 48, 8}, 50);
    d.validation.push_back({"v0", kspace_truncate(hr, ScaleFactor{}), hr});
    return d;
}

TrainConfig tiny_train() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.iterations_per_epoch = 3;
    cfg.lr_max = 1e-3;
    return cfg;
}

const PatchSpec kSpec{{16, 16, 3}, ScaleFactor{}, 2};

}  // namespace

TEST_CASE("cosine learning rate endpoints and midpoint") {
    CHECK(cosine_lr(0, 1000, 1e-4, 1e-8) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(cosine_lr(1000, 1000, 1e-4, 1e-8) == doctest::Approx(1e-8).epsilon(1e-12));
    CHECK(cosine_lr(500, 1000, 1e-4, 1e-8) == doctest::Approx(5.0005e-5).epsilon(1e-12));
    TrainConfig bad;
    bad.lr_min = 1e-3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("train mode names round trip") {
    CHECK(parse_train_mode("supervised_baseline") == TrainMode::SupervisedBaseline);
    CHECK(to_string(TrainMode::Unsupervised) == "unsupervised");
    CHECK_THROWS_AS(parse_train_mode("semi"), ConfigError);
}

TEST_CASE("forward_step produces every training-graph symbol with contract shapes") {
    Fixture f;
    const auto b = forward_step(f.y_s, f.x_t, f.c);
    CHECK(b.x_st.sizes() == f.x_t.sizes());
    CHECK(b.y_sts.sizes() == f.y_s.sizes());
    CHECK(b.y_hat_s.sizes() == f.y_s.sizes());
    CHECK(b.x_hat_t.sizes() == f.x_t.sizes());
    CHECK(b.f_s.sizes() == b.f_t.sizes());
    CHECK(b.f_sts.sizes() == b.f_s.sizes());
    torch::NoGradGuard guard;
    const auto again = forward_step(f.y_s, f.x_t, f.c);
    CHECK(torch::equal(again.y_sts, b.y_sts));
    CHECK(torch::equal(again.x_hat_t, b.x_hat_t));
}

TEST_CASE("discriminator and generator steps leave each other's parameters untouched") {
    Fixture f;
    TrainConfig cfg;
    Optimizers opt(f.c, cfg);
    const auto gens = f.c.generator_parameters();
    const auto discs = f.c.parameters({ComponentId::LrDiscriminator, ComponentId::FeatureDiscriminator});
    const auto b = forward_step(f.y_s, f.x_t, f.c);
    const auto g0 = parameter_hash(gens), d0 = parameter_hash(discs);
    UpdateCounters counters;
    const auto d = discriminator_step(b, f.c, opt, cfg, &counters);
    CHECK(d.lrd.has_value());
    CHECK(d.fd.has_value());
    CHECK(parameter_hash(gens) == g0);
    const auto d1 = parameter_hash(discs);
    CHECK(d1 != d0);
    // Fake inputs are detached: no gradient reached a generator parameter.
    for (const auto& p : gens) CHECK((!p.grad().defined() || p.grad().abs().max().item<double>() == 0.0));
    generator_step(b, f.c, loss::LossWeights{}, opt, cfg, &counters);
    CHECK(parameter_hash(discs) == d1);
    CHECK(parameter_hash(gens) != g0);
    for (const auto& p : discs) CHECK(p.requires_grad());
    CHECK(counters.discriminator_passes == 1);
    CHECK(counters.generator_passes == 1);
}

TEST_CASE("repeated discriminator steps on a fixed bundle lower the LR discriminator loss") {
    Fixture f;
    TrainConfig cfg;
    cfg.lr_max = 1e-3;
    Optimizers opt(f.c, cfg);
    const auto b = forward_step(f.y_s, f.x_t, f.c);
    std::vector<double> lrd;
    for (int i = 0; i < 50; ++i) lrd.push_back(*discriminator_step(b, f.c, opt, cfg).lrd);
    double head = 0, tail = 0;
    for (int i = 0; i < 10; ++i) {
        head += lrd[static_cast<size_t>(i)];
        tail += lrd[static_cast<size_t>(40 + i)];
    }
    CHECK(tail < head);
}

TEST_CASE("adaptation switches disable the matching discriminator and loss term") {
    Fixture f;
    for (int which = 0; which < 2; ++which) {
        TrainConfig cfg;
        (which == 0 ? cfg.da_image_enabled : cfg.da_feature_enabled) = false;
        Optimizers opt(f.c, cfg);
        const auto lr_disc = parameter_hash(f.c.lr_discriminator->parameters());
        const auto f_disc = parameter_hash(f.c.feature_discriminator->parameters());
        const auto b = forward_step(f.y_s, f.x_t, f.c);
        const auto d = discriminator_step(b, f.c, opt, cfg);
        const auto r = generator_step(b, f.c, loss::LossWeights{}, opt, cfg);
        if (which == 0) {
            CHECK_FALSE(d.lrd.has_value());
            CHECK(parameter_hash(f.c.lr_discriminator->parameters()) == lr_disc);
            CHECK(r.terms.da == 0.0);
            CHECK(r.terms.fa > 0.0);
        } else {
            CHECK_FALSE(d.fd.has_value());
            CHECK(parameter_hash(f.c.feature_discriminator->parameters()) == f_disc);
            CHECK(r.terms.fa == 0.0);
            CHECK(r.terms.da > 0.0);
        }
    }
}

TEST_CASE("perfect reconstructions without weighted adaptation terms give zero loss and zero gradient") {
    Fixture f;
    torch::manual_seed(8);
    auto y = torch::rand({1, 1, 32, 32, 6}, torch::kFloat64).set_requires_grad(true);
    auto x = torch::rand({1, 1, 16, 16, 3}, torch::kFloat64).set_requires_grad(true);
    auto feat = torch::rand({1, 8, 16, 16, 3}, torch::kFloat64).set_requires_grad(true);
    f.c.to(torch::kFloat64);
    ForwardBundle b{y, x, feat, x, feat, y, feat, x, y};
    loss::LossWeights w;
    w.lambda2 = w.lambda5 = w.lambda6 = 0.0;
    TrainConfig cfg;
    cfg.da_image_enabled = false;
    cfg.da_feature_enabled = false;
    const auto g = generator_objective(b, f.c, w, cfg);
    CHECK(g.total.item<double>() == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    const auto grads = torch::autograd::grad({g.total}, {y, x}, {}, false, false, true);
    for (const auto& gr : grads) CHECK((!gr.defined() || gr.abs().max().item<double>() < 1e-12));
}

TEST_CASE("a non-finite component aborts with its name") {
    Fixture f;
    TrainConfig cfg;
    Optimizers opt(f.c, cfg);
    auto b = forward_step(f.y_s, f.x_t, f.c);
    b.x_hat_t = b.x_hat_t + std::numeric_limits<float>::quiet_NaN();
    try {
        generator_step(b, f.c, loss::LossWeights{}, opt, cfg);
        FAIL("expected NumericAbort");
    } catch (const NumericAbort& e) {
        CHECK(std::string(e.what()).find("lr_con") != std::string::npos);
    }
}

TEST_CASE("checkpoint round trip reproduces the forward step bitwise") {
    Fixture f;
    const auto dir = std::filesystem::temp_directory_path() / "udean_test_ckpt";
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "a.ckpt", f.c, {{"epoch", 3}});
    CheckpointInfo info;
    auto loaded = load_checkpoint(dir / "a.ckpt", &info);
    CHECK(info.major == kCheckpointMajor);
    CHECK(info.metadata["epoch"] == 3);
    CHECK(info.network == f.c.config);
    torch::NoGradGuard guard;
    const auto a = forward_step(f.y_s, f.x_t, f.c);
    const auto b = forward_step(f.y_s, f.x_t, loaded);
    CHECK(torch::equal(a.y_sts, b.y_sts));
    CHECK(torch::equal(a.x_hat_t, b.x_hat_t));
    CHECK(torch::equal(a.f_s, b.f_s));
    auto wider = tiny_network();
    wider.feat_channels = 16;
    CHECK_THROWS_AS(require_compatible(info.network, wider), ConfigError);
}

TEST_CASE("a checkpoint with a different major version is refused") {
    Fixture f;
    const auto path = std::filesystem::temp_directory_path() / "udean_test_ckpt" / "major.ckpt";
    std::filesystem::create_directories(path.parent_path());
    save_checkpoint(path, f.c);
    {
        std::fstream io(path, std::ios::in | std::ios::out | std::ios::binary);
        io.seekp(8);
        const uint32_t major = kCheckpointMajor + 1;
        io.write(reinterpret_cast<const char*>(&major), 4);
    }
    CHECK_THROWS(read_checkpoint_info(path));
}

TEST_CASE("training is deterministic and follows the cosine schedule") {
    const auto data = tiny_data();
    const auto cfg = tiny_train();
    ComponentSet a(tiny_network(), 1), b(tiny_network(), 1);
    const auto ha = train(data, a, cfg, loss::LossWeights{}, kSpec);
    const auto hb = train(data, b, cfg, loss::LossWeights{}, kSpec);
    REQUIRE(ha.iterations.size() == 6);
    REQUIRE(ha.validation.size() == 2);
    CHECK(ha.complete);
    for (size_t i = 0; i < ha.iterations.size(); ++i) {
        CHECK(ha.iterations[i].report.total == hb.iterations[i].report.total);
        CHECK(ha.iterations[i].lr == cosine_lr(static_cast<int64_t>(i), 6, cfg.lr_max, cfg.lr_min));
        CHECK(ha.iterations[i].report.lrd.has_value());
    }
    CHECK(ha.validation[1].ssim_mean == hb.validation[1].ssim_mean);
}

TEST_CASE("training writes logs, checkpoints and a completion marker") {
    const auto dir = std::filesystem::temp_directory_path() / "udean_test_run";
    std::filesystem::remove_all(dir);
    ComponentSet c(tiny_network(), 1);
    TrainOptions options;
    options.run_dir = dir;
    int64_t seen = 0;
    options.on_iteration = [&](const IterationLog&) { ++seen; };
    const auto h = train(tiny_data(), c, tiny_train(), loss::LossWeights{}, kSpec, options);
    CHECK(seen == 6);
    CHECK(std::filesystem::exists(dir / kCompleteMarker));
    CHECK(std::filesystem::exists(dir / kBestCheckpoint));
    CHECK(std::filesystem::exists(dir / "checkpoints" / "epoch_001.ckpt"));
    std::ifstream log(dir / kLossLogFile);
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) ++lines;
    CHECK(lines == 6);
    CHECK(h.checkpoints.size() == 2);
}

TEST_CASE("the supervised baseline trains only the inference path") {
    const auto data = tiny_data();
    auto cfg = tiny_train();
    cfg.mode = TrainMode::SupervisedBaseline;
    ComponentSet c(tiny_network(), 1);
    const auto untouched = c.parameters({ComponentId::Extractor, ComponentId::LrDecoder, ComponentId::LrDiscriminator,
                                         ComponentId::FeatureDiscriminator});
    const auto before = parameter_hash(untouched);
    const auto inference = parameter_hash(c.inference_parameters());
    const auto h = train(data, c, cfg, loss::LossWeights{}, kSpec);
    CHECK(parameter_hash(untouched) == before);
    CHECK(parameter_hash(c.inference_parameters()) != inference);
    CHECK_FALSE(h.iterations.front().report.lrd.has_value());

    auto unpaired = data;
    unpaired.target_ids[0] = "other";
    ComponentSet d(tiny_network(), 1);
    CHECK_THROWS_AS(train(unpaired, d, cfg, loss::LossWeights{}, kSpec), ConfigError);
}
