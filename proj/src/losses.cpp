#include "udean/losses.hpp"

#include "udean/error.hpp"

namespace udean::loss {

void LossWeights::validate() const {
    for (double v : {alpha, beta, lambda1, lambda2, lambda3, lambda4, lambda5, lambda6})
        if (!(v >= 0.0)) throw ConfigError("loss weights must be non-negative");
}

LossReport make_report(const GeneratorTerms<double>& terms, const LossWeights& w) {
    LossReport r;
    r.terms = terms;
    r.total = weighted_total(terms, w);
    return r;
}

namespace {

void require_same_shape(const torch::Tensor& x, const torch::Tensor& y, const char* what) {
    if (!x.sizes().equals(y.sizes()))
        throw ShapeError(std::string(what) + ": shape " + c10::str(x.sizes()) + " vs " + c10::str(y.sizes()));
}

torch::Tensor abs_dev_from_half(const torch::Tensor& d) { return (d - 0.5).abs().mean(); }

}  // namespace

torch::Tensor l1(const torch::Tensor& x, const torch::Tensor& y) {
    require_same_shape(x, y, "l1");
    return (x - y).abs().mean();
}

torch::Tensor ssim_loss_from_ssim(const torch::Tensor& ssim) { return (1.0 - ssim * ssim).abs().mean(); }

torch::Tensor ssim_loss(const torch::Tensor& x, const torch::Tensor& y, const SsimOptions& opt) {
    require_same_shape(x, y, "ssim_loss");
    return ssim_loss_from_ssim(ssim_per_sample(x, y, opt));
}

torch::Tensor adv_gen(const torch::Tensor& d_out) { return (d_out - 1.0).pow(2).mean(); }

torch::Tensor combine(const torch::Tensor& l1_term, const torch::Tensor& ssim_term, const torch::Tensor& adv_term,
                      const LossWeights& w) {
    auto value = l1_term + w.alpha * ssim_term;
    if (adv_term.defined()) value = value + w.beta * adv_term;
    return value;
}

namespace {

CompositeLoss composite(const torch::Tensor& out, const torch::Tensor& ref, const torch::Tensor& d_out,
                        const LossWeights& w, const SsimOptions& opt) {
    CompositeLoss c;
    c.l1 = l1(out, ref);
    c.ssim = ssim_loss(out, ref, opt);
    if (d_out.defined()) c.adv = adv_gen(d_out);
    c.value = combine(c.l1, c.ssim, c.adv, w);
    return c;
}

}  // namespace

CompositeLoss image_cycle(const torch::Tensor& y_sts, const torch::Tensor& y_s, const torch::Tensor& d_out,
                          const LossWeights& w, const SsimOptions& opt) {
    return composite(y_sts, y_s, d_out, w, opt);
}

torch::Tensor feature_cycle(const torch::Tensor& f_sts, const torch::Tensor& f_s) {
    require_same_shape(f_sts, f_s, "feature_cycle");
    return l1(f_sts, f_s);
}

CompositeLoss hr_consistency(const torch::Tensor& y_hat_s, const torch::Tensor& y_s, const torch::Tensor& d_out,
                             const LossWeights& w, const SsimOptions& opt) {
    return composite(y_hat_s, y_s, d_out, w, opt);
}

CompositeLoss lr_consistency(const torch::Tensor& x_hat_t, const torch::Tensor& x_t, const torch::Tensor& d_out,
                             const LossWeights& w, const SsimOptions& opt) {
    return composite(x_hat_t, x_t, d_out, w, opt);
}

torch::Tensor da_image(const torch::Tensor& d_st, const torch::Tensor& d_t) {
    return abs_dev_from_half(d_st) + abs_dev_from_half(d_t);
}

torch::Tensor da_feature(const torch::Tensor& d_ft, const torch::Tensor& d_fs) {
    return abs_dev_from_half(d_ft) + abs_dev_from_half(d_fs);
}

torch::Tensor disc_lr(const torch::Tensor& d_real_xt, const torch::Tensor& d_fake_xst) {
    return (d_real_xt - 1.0).pow(2).mean() + d_fake_xst.pow(2).mean();
}

torch::Tensor disc_feature(const torch::Tensor& d_on_fs, const torch::Tensor& d_on_ft) {
    return (d_on_fs - 1.0).pow(2).mean() + d_on_ft.pow(2).mean();
}

}  // namespace udean::loss
