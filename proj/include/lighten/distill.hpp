#pragma once

#include <cstdint>
#include <vector>

#include "lighten/toy_vit.hpp"

namespace lighten {

inline constexpr double kDefaultDistillTemperature = 4.0;

/// (1/B) sum over every attn and mlp feature pair of |F_s - F_t|_F^2, with B
/// the number of pairs present.
double block_loss(const BlockFeatures& student, const BlockFeatures& teacher);

/// Mean over samples (rows) of 0.5 KL(softmax(ys/tau) || softmax(yt/tau))
/// + 0.5 CE(ys, label).
double logit_loss(const Matrix& y_student, const Matrix& y_teacher,
                  const std::vector<std::int32_t>& labels, double tau = kDefaultDistillTemperature);

/// The two terms of logit_loss separately (already halved).
struct LogitLossTerms {
    double kl = 0.0;
    double ce = 0.0;
    double total() const noexcept { return kl + ce; }
};
LogitLossTerms logit_loss_terms(const Matrix& y_student, const Matrix& y_teacher,
                                const std::vector<std::int32_t>& labels, double tau);

/// Top-1 accuracy of argmax(logits) against labels.
double accuracy(const Matrix& logits, const std::vector<std::int32_t>& labels);
double evaluate(const ToyViT& model, const Dataset& data, const LinearExecutor* executor = nullptr);

/// block_loss averaged over the dataset, student vs teacher forward passes.
double dataset_block_loss(const ToyViT& student, const ToyViT& teacher, const Dataset& data,
                          const LinearExecutor* student_executor = nullptr);

}  // namespace lighten
