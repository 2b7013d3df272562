#include "doctest_torch.hpp"

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "udean/error.hpp"
#include "udean/inference.hpp"

using namespace udean;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("udean_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

NetworkConfig tiny_network() {
    NetworkConfig cfg;
    cfg.feat_channels = 8;
    cfg.n_groups = 1;
    cfg.n_blocks = 1;
    cfg.reduction = 4;
    cfg.disc_base_channels = 4;
    return cfg;
}

/// Nearest-neighbour upsampling stand-in for the decoder.
torch::Tensor nearest(const torch::Tensor& x) {
    return x.repeat_interleave(2, 2).repeat_interleave(2, 3).repeat_interleave(2, 4);
}

VolumeImage offset(const VolumeImage& v, double d) {
    VolumeImage out = v;
    for (auto& x : out.data) x += d;
    return out;
}

}  // namespace

TEST_CASE("stitching a nearest-upsampling stub over a constant volume is constant") {
    const VolumeImage lr({40, 36, 5}, 0.6);
    for (const auto& plan : {StitchPlan::overlapping({16, 16, 3}), StitchPlan::tiled({16, 16, 3})}) {
        const auto out = stitch(lr, ScaleFactor{}, plan, nearest);
        CHECK(out.shape == Shape3{80, 72, 10});
        for (double d : out.data) CHECK(d == doctest::Approx(0.6).epsilon(1e-6));  // float32 patches
    }
}

TEST_CASE("stitch plans cover every voxel and reject bad strides") {
    CHECK(window_origins(40, 16, 8) == std::vector<int64_t>{0, 8, 16, 24});
    CHECK(window_origins(37, 16, 16) == std::vector<int64_t>{0, 16, 21});
    StitchPlan bad{{16, 16, 3}, {17, 8, 1}};
    CHECK_THROWS(bad.validate());
    CHECK_THROWS_AS(stitch(VolumeImage({8, 8, 3}), ScaleFactor{}, StitchPlan::overlapping({16, 16, 3}), nearest),
                    ShapeError);
}

TEST_CASE("reconstruct touches only the inference path and stays in range") {
    ComponentSet c(tiny_network(), 2);
    c.reset_forward_calls();
    const auto lr = kspace_truncate(make_phantom({48, 48, 8}, 1), ScaleFactor{});
    const auto sr = reconstruct(lr, c, StitchPlan::overlapping({16, 16, 3}));
    CHECK(sr.shape == Shape3{48, 48, 8});
    CHECK(c.forward_calls(ComponentId::LrEncoder) > 0);
    CHECK(c.forward_calls(ComponentId::SrDecoder) > 0);
    CHECK(c.forward_calls(ComponentId::Extractor) == 0);
    CHECK(c.forward_calls(ComponentId::LrDecoder) == 0);
    CHECK(c.forward_calls(ComponentId::LrDiscriminator) == 0);
    CHECK(c.forward_calls(ComponentId::FeatureDiscriminator) == 0);
    const auto [lo, hi] = sr.min_max();
    CHECK(lo >= 0.0);
    CHECK(hi <= 1.0);
}

TEST_CASE("half-patch and full-patch strides agree on a smooth phantom") {
    ComponentSet c(tiny_network(), 2);
    const auto lr = kspace_truncate(make_phantom({64, 64, 12}, 3), ScaleFactor{});
    const auto a = reconstruct(lr, c, StitchPlan::overlapping({16, 16, 3}));
    const auto b = reconstruct(lr, c, StitchPlan::tiled({16, 16, 3}));
    double mae = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) mae += std::abs(a.data[i] - b.data[i]);
    CHECK(mae / static_cast<double>(a.data.size()) < 0.02);
}

TEST_CASE("psnr examples and monotonicity") {
    const VolumeImage y({8, 8, 4}, 0.5);
    CHECK(psnr(offset(y, 0.1), y).db == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(psnr(offset(y, 0.01), y).db == doctest::Approx(40.0).epsilon(1e-9));
    const auto same = psnr(y, y);
    CHECK(same.infinite);
    double previous = std::numeric_limits<double>::infinity();
    for (double amp = 0.01; amp < 0.5; amp += 0.03) {
        const double db = psnr(offset(y, amp), y).db;
        CHECK(db < previous);
        previous = db;
    }
}

TEST_CASE("ssim_metric matches the brute-force window oracle") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 3; ++i) {
        const auto x = oracle::random_volume({32, 32, 3}, rng);
        const auto y = oracle::random_volume({32, 32, 3}, rng);
        CHECK(std::abs(ssim_metric(x, y) - oracle::ssim(x, y)) < 1e-9);
        CHECK(ssim_metric(x, y) == ssim_metric(y, x));
        CHECK(ssim_metric(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SsimOptions small;
    small.window = 7;
    const auto x = oracle::random_volume({12, 10, 2}, rng), y = oracle::random_volume({12, 10, 2}, rng);
    CHECK(std::abs(ssim_metric(x, y, small) - oracle::ssim(x, y, 7)) < 1e-9);
}

TEST_CASE("ssim of two constants follows the closed form") {
    const double c = 0.3, d = 0.2;
    const double C1 = 1e-4, C2 = 9e-4;
    const double expected = ((2 * c * (c + d) + C1) * C2) / ((c * c + (c + d) * (c + d) + C1) * C2);
    const VolumeImage x({16, 16, 2}, c), y({16, 16, 2}, c + d);
    CHECK(ssim_metric(x, y) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(oracle::ssim(x, y) == doctest::Approx(expected).epsilon(1e-9));
    CHECK_THROWS_AS(ssim_metric(VolumeImage({8, 16, 2}), VolumeImage({8, 16, 2})), ShapeError);
}

TEST_CASE("error maps and their slice export") {
    const auto hr = make_phantom({16, 16, 3}, 4);
    for (double d : error_map(hr, hr).data) CHECK(d == 0.0);
    for (double d : error_map(offset(hr, 0.1), hr).data) CHECK(d == doctest::Approx(0.1).epsilon(1e-12));

    const auto err = error_map(offset(hr, 0.05), hr);
    const auto a = scratch("err_a"), b = scratch("err_b");
    const auto files_a = export_error_slices(err, a, "v", 0.2);
    const auto files_b = export_error_slices(err, b, "v", 0.2);
    REQUIRE(files_a.size() == 3);
    CHECK(files_a[0].filename().string().find("0.2") != std::string::npos);
    for (size_t i = 0; i < files_a.size(); ++i) CHECK(slurp(files_a[i]) == slurp(files_b[i]));
}

TEST_CASE("evaluation always includes tricubic and summaries recompute") {
    std::vector<EvalCase> cases;
    for (uint64_t i = 0; i < 3; ++i) {
        const auto hr = make_phantom({24, 24, 4}, i);
        cases.push_back({"v" + std::to_string(i), kspace_truncate(hr, ScaleFactor{}), hr});
    }
    const auto records = evaluate(cases, {}, ScaleFactor{});
    REQUIRE(records.size() == 3);
    CHECK(records.front().method == kTricubicTag);
    const auto s = summarize(records).front();
    double mean = 0, sq = 0;
    for (const auto& r : records) mean += r.ssim;
    mean /= 3;
    for (const auto& r : records) sq += (r.ssim - mean) * (r.ssim - mean);
    CHECK(s.ssim_mean == mean);
    CHECK(s.ssim_std == std::sqrt(sq / 3));

    const auto single = summarize({records.front()}).front();
    CHECK(single.ssim_std == 0.0);
    CHECK(single.psnr_std == 0.0);

    const auto dir = scratch("metrics");
    write_metrics_csv(records, dir / "m.csv");
    const auto back = read_metrics_csv(dir / "m.csv");
    REQUIRE(back.size() == records.size());
    CHECK(back[1].volume_id == records[1].volume_id);
    CHECK(back[1].ssim == doctest::Approx(records[1].ssim).epsilon(1e-9));
}

TEST_CASE("feature dumps have matching shapes and are deterministic") {
    ComponentSet c(tiny_network(), 6);
    torch::manual_seed(1);
    const auto hr = torch::rand({3, 1, 16, 16, 6});
    const auto lr = torch::rand({3, 1, 8, 8, 3});
    const auto d = compute_features(c, hr, lr);
    CHECK(d.f_s.sizes() == d.f_t.sizes());
    CHECK(torch::equal(compute_features(c, hr, lr).f_s, d.f_s));
    const auto a = scratch("feat_a"), b = scratch("feat_b");
    dump_features(d, a);
    dump_features(d, b);
    CHECK(slurp(a / "features.tsv") == slurp(b / "features.tsv"));
    CHECK(std::filesystem::file_size(a / "f_s_0000.f32") == static_cast<uintmax_t>(8 * 8 * 8 * 3 * 4));
    CHECK(slurp(a / "f_t_0002.f32") == slurp(b / "f_t_0002.f32"));
    CHECK(pooled_features(d.f_s).sizes() == std::vector<int64_t>{3, 8});
}

TEST_CASE("linear separability is 1 for shifted clusters and near chance for identical ones") {
    torch::manual_seed(2);
    const auto a = torch::randn({60, 4}, torch::kFloat64);
    const auto b = torch::randn({60, 4}, torch::kFloat64) + 4.0;
    CHECK(linear_separability(a, b, 1) == 1.0);
    const auto same = torch::randn({200, 4}, torch::kFloat64);
    const auto same2 = torch::randn({200, 4}, torch::kFloat64);
    CHECK(linear_separability(same, same2, 1) < 0.65);
}
