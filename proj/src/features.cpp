#include <fstream>

#include "udean/error.hpp"
#include "udean/inference.hpp"
#include "udean/random.hpp"

namespace udean {

FeatureDump compute_features(const ComponentSet& c, const torch::Tensor& hr_patches, const torch::Tensor& lr_patches) {
    torch::NoGradGuard guard;
    const auto dtype = c.extractor->parameters().front().scalar_type();
    ConvEncoder extractor = c.extractor, encoder = c.lr_encoder;
    FeatureDump d;
    d.f_s = extractor->forward(hr_patches.to(dtype));
    d.f_t = encoder->forward(lr_patches.to(dtype));
    if (!d.f_s.sizes().slice(1).equals(d.f_t.sizes().slice(1)))
        throw ShapeError("feature maps differ in shape: f_s " + c10::str(d.f_s.sizes()) + ", f_t " +
                         c10::str(d.f_t.sizes()));
    return d;
}

void dump_features(const FeatureDump& dump, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "features.tsv", std::ios::trunc);
    if (!index) throw IoError("cannot write " + (dir / "features.tsv").string());
    index << "name\tdomain\tshape_cxyz\tfile\n";
    auto write_set = [&](const torch::Tensor& maps, const char* domain) {
        for (int64_t i = 0; i < maps.size(0); ++i) {
            // (C, x, y, z) with x fastest inside each channel, matching raw volumes.
            const auto m = maps[i].to(torch::kFloat32).permute({0, 3, 2, 1}).contiguous();
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%04lld", domain, static_cast<long long>(i));
            const std::string file = std::string(name) + ".f32";
            std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
            out.write(static_cast<const char*>(m.data_ptr()), static_cast<std::streamsize>(m.nbytes()));
            if (!out) throw IoError("cannot write " + (dir / file).string());
            index << name << '\t' << domain << '\t' << maps.size(1) << 'x' << maps.size(2) << 'x' << maps.size(3)
                  << 'x' << maps.size(4) << '\t' << file << '\n';
        }
    };
    write_set(dump.f_s, "f_s");
    write_set(dump.f_t, "f_t");
}

torch::Tensor pooled_features(const torch::Tensor& maps) { return maps.mean({2, 3, 4}); }

double linear_separability(const torch::Tensor& a, const torch::Tensor& b, uint64_t seed) {
    if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(1))
        throw ShapeError("linear_separability expects two (N, D) sets of equal width");
    std::mt19937_64 rng(seed);
    auto split = [&](const torch::Tensor& rows) {
        std::vector<int64_t> order(static_cast<size_t>(rows.size(0)));
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
        for (size_t k = order.size(); k > 1; --k)
            std::swap(order[k - 1], order[static_cast<size_t>(uniform_int(rng, 0, static_cast<int64_t>(k) - 1))]);
        const auto idx = torch::tensor(order, torch::kInt64);
        const int64_t half = rows.size(0) / 2;
        return std::pair{rows.index_select(0, idx.slice(0, 0, half)), rows.index_select(0, idx.slice(0, half))};
    };
    const auto [a_train, a_test] = split(a.to(torch::kFloat64));
    const auto [b_train, b_test] = split(b.to(torch::kFloat64));
    const auto x_train = torch::cat({a_train, b_train});
    const auto y_train = torch::cat({torch::ones(a_train.size(0)), torch::zeros(b_train.size(0))}).to(torch::kFloat64);
    const auto x_test = torch::cat({a_test, b_test});
    const auto y_test = torch::cat({torch::ones(a_test.size(0)), torch::zeros(b_test.size(0))}).to(torch::kFloat64);

    const auto mean = x_train.mean(0);
    const auto sd = x_train.std(0, /*unbiased=*/false).clamp_min(1e-12);
    const auto xs = (x_train - mean) / sd;
    const auto xt = (x_test - mean) / sd;

    auto w = torch::zeros({xs.size(1)}, torch::TensorOptions().dtype(torch::kFloat64).requires_grad(true));
    auto bias = torch::zeros({1}, torch::TensorOptions().dtype(torch::kFloat64).requires_grad(true));
    torch::optim::LBFGS opt({w, bias}, torch::optim::LBFGSOptions(1.0).max_iter(200).line_search_fn("strong_wolfe"));
    constexpr double kRidge = 1e-3;
    auto closure = [&] {
        opt.zero_grad();
        const auto logits = torch::mv(xs, w) + bias;
        auto loss = torch::binary_cross_entropy_with_logits(logits, y_train) + kRidge * w.pow(2).sum();
        loss.backward();
        return loss;
    };
    opt.step(closure);

    torch::NoGradGuard guard;
    const auto predicted = ((torch::mv(xt, w) + bias) > 0).to(torch::kFloat64);
    return (predicted == y_test).to(torch::kFloat64).mean().item<double>();
}

}  // namespace udean
