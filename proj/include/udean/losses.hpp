#pragma once

#include <optional>

#include <torch/torch.h>

#include "udean/ssim.hpp"

namespace udean::loss {

struct LossWeights {
    double alpha = 0.5;
    double beta = 0.01;
    double lambda1 = 1.0;  // image cycle
    double lambda2 = 0.1;  // feature cycle
    double lambda3 = 1.0;  // HR consistency
    double lambda4 = 1.0;  // LR consistency
    double lambda5 = 0.1;  // image-space adaptation
    double lambda6 = 0.1;  // feature-space adaptation

    /// Throws ConfigError on a negative weight.
    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

/// The six generator components in the order they are weighted.
template <typename T>
struct GeneratorTerms {
    T i_cyc{}, f_cyc{}, hr_con{}, lr_con{}, da{}, fa{};
};

/// Weighted generator objective. Shared by the tensor path used for training
/// and the scalar path used for reporting so both sum in the same order.
template <typename T>
T weighted_total(const GeneratorTerms<T>& c, const LossWeights& w) {
    return w.lambda1 * c.i_cyc + w.lambda2 * c.f_cyc + w.lambda3 * c.hr_con + w.lambda4 * c.lr_con +
           w.lambda5 * c.da + w.lambda6 * c.fa;
}

struct LossReport {
    GeneratorTerms<double> terms;
    double total = 0.0;
    std::optional<double> lrd;
    std::optional<double> fd;
};

/// Builds a report whose total is weighted_total of the given components.
LossReport make_report(const GeneratorTerms<double>& terms, const LossWeights& w);

/// Mean absolute difference over every element. Throws ShapeError on mismatch.
torch::Tensor l1(const torch::Tensor& x, const torch::Tensor& y);

/// Mean over the batch of |1 - SSIM^2|, SSIM taken per sample.
torch::Tensor ssim_loss(const torch::Tensor& x, const torch::Tensor& y, const SsimOptions& opt = {});
/// Same reduction applied to precomputed per-sample SSIM values.
torch::Tensor ssim_loss_from_ssim(const torch::Tensor& ssim);

/// Least-squares generator term: mean of (d - 1)^2.
torch::Tensor adv_gen(const torch::Tensor& d_out);

/// One composite reconstruction term and the three pieces it is made of.
struct CompositeLoss {
    torch::Tensor value;
    torch::Tensor l1, ssim, adv;
};

/// l1 + alpha * ssim + beta * adv. An undefined `adv` drops the last term.
torch::Tensor combine(const torch::Tensor& l1_term, const torch::Tensor& ssim_term, const torch::Tensor& adv_term,
                      const LossWeights& w);

/// Image cycle: reconstruction of y_s after the HR -> LR -> SR round trip.
/// `d_out` may be undefined, which removes the adversarial term.
CompositeLoss image_cycle(const torch::Tensor& y_sts, const torch::Tensor& y_s, const torch::Tensor& d_out,
                          const LossWeights& w, const SsimOptions& opt = {});
/// Feature cycle: l1 between the re-encoded and original source features.
torch::Tensor feature_cycle(const torch::Tensor& f_sts, const torch::Tensor& f_s);
CompositeLoss hr_consistency(const torch::Tensor& y_hat_s, const torch::Tensor& y_s, const torch::Tensor& d_out,
                             const LossWeights& w, const SsimOptions& opt = {});
CompositeLoss lr_consistency(const torch::Tensor& x_hat_t, const torch::Tensor& x_t, const torch::Tensor& d_out,
                             const LossWeights& w, const SsimOptions& opt = {});

/// Adaptation terms pull both realness maps to the 0.5 equilibrium:
/// mean|a - 0.5| + mean|b - 0.5|.
torch::Tensor da_image(const torch::Tensor& d_st, const torch::Tensor& d_t);
torch::Tensor da_feature(const torch::Tensor& d_ft, const torch::Tensor& d_fs);

/// Least-squares discriminator objectives on raw outputs with labels 1/0.
torch::Tensor disc_lr(const torch::Tensor& d_real_xt, const torch::Tensor& d_fake_xst);
torch::Tensor disc_feature(const torch::Tensor& d_on_fs, const torch::Tensor& d_on_ft);

}  // namespace udean::loss
