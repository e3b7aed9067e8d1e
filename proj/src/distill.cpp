#include "lighten/distill.hpp"

#include <algorithm>
#include <cmath>

#include "lighten/error.hpp"

namespace lighten {
namespace {

void add_pairs(const std::vector<Matrix>& s, const std::vector<Matrix>& t, const char* what,
               double& sum, std::size_t& pairs) {
    if (s.size() != t.size()) {
        throw DimensionError(std::string("block_loss: ") + what + " feature counts differ (" +
                             std::to_string(s.size()) + " vs " + std::to_string(t.size()) + ")");
    }
    for (std::size_t b = 0; b < s.size(); ++b) {
        if (s[b].rows() != t[b].rows() || s[b].cols() != t[b].cols()) {
            throw DimensionError(std::string("block_loss: ") + what + " block " + std::to_string(b) +
                                 " shapes " + s[b].shape_string() + " vs " + t[b].shape_string());
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < s[b].size(); ++i) {
            const double d = s[b].data()[i] - t[b].data()[i];
            acc += d * d;
        }
        sum += acc;
        ++pairs;
    }
}

// log softmax of row `r` of y / tau.
std::vector<double> log_softmax(const Matrix& y, std::size_t r, double tau) {
    const auto row = y.row(r);
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : row) peak = std::max(peak, v / tau);
    double z = 0.0;
    for (double v : row) z += std::exp(v / tau - peak);
    const double lz = peak + std::log(z);
    std::vector<double> out(row.size());
    for (std::size_t c = 0; c < row.size(); ++c) out[c] = row[c] / tau - lz;
    return out;
}

}  // namespace

double block_loss(const BlockFeatures& student, const BlockFeatures& teacher) {
    double sum = 0.0;
    std::size_t pairs = 0;
    add_pairs(student.attn, teacher.attn, "attn", sum, pairs);
    add_pairs(student.mlp, teacher.mlp, "mlp", sum, pairs);
    if (pairs == 0) throw InvalidArgument("block_loss: no feature pairs");
    return sum / static_cast<double>(pairs);
}

LogitLossTerms logit_loss_terms(const Matrix& y_student, const Matrix& y_teacher,
                                const std::vector<std::int32_t>& labels, double tau) {
    if (!(tau > 0.0)) throw InvalidArgument("logit_loss: tau must be positive");
    if (y_student.rows() != y_teacher.rows() || y_student.cols() != y_teacher.cols())
        throw DimensionError("logit_loss: logits " + y_student.shape_string() + " vs " +
                             y_teacher.shape_string());
    if (labels.size() != y_student.rows()) throw DimensionError("logit_loss: one label per sample required");
    if (y_student.rows() == 0) throw InvalidArgument("logit_loss: no samples");
    if (!y_student.all_finite() || !y_teacher.all_finite())
        throw NumericError("logit_loss: non-finite logits");

    LogitLossTerms terms;
    for (std::size_t r = 0; r < y_student.rows(); ++r) {
        const auto label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= y_student.cols())
            throw InvalidArgument("logit_loss: label " + std::to_string(label) + " out of range");
        const auto ls = log_softmax(y_student, r, tau);
        const auto lt = log_softmax(y_teacher, r, tau);
        double kl = 0.0;
        for (std::size_t c = 0; c < ls.size(); ++c) kl += std::exp(ls[c]) * (ls[c] - lt[c]);
        terms.kl += 0.5 * kl;
        terms.ce += -0.5 * log_softmax(y_student, r, 1.0)[static_cast<std::size_t>(label)];
    }
    const auto n = static_cast<double>(y_student.rows());
    terms.kl /= n;
    terms.ce /= n;
    return terms;
}

double logit_loss(const Matrix& y_student, const Matrix& y_teacher,
                  const std::vector<std::int32_t>& labels, double tau) {
    return logit_loss_terms(y_student, y_teacher, labels, tau).total();
}

double accuracy(const Matrix& logits, const std::vector<std::int32_t>& labels) {
    if (logits.rows() == 0) throw InvalidArgument("accuracy: empty dataset");
    if (labels.size() != logits.rows()) throw DimensionError("accuracy: one label per sample required");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r)
        if (static_cast<std::int64_t>(argmax_row(logits, r)) == labels[r]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

double evaluate(const ToyViT& model, const Dataset& data, const LinearExecutor* executor) {
    return accuracy(dataset_logits(model, data, executor), data.labels);
}

double dataset_block_loss(const ToyViT& student, const ToyViT& teacher, const Dataset& data,
                          const LinearExecutor* student_executor) {
    if (data.size() == 0) throw InvalidArgument("dataset_block_loss: empty dataset");
    ForwardOptions so;
    so.executor = student_executor;
    double sum = 0.0;
    for (const auto& x : data.inputs)
        sum += block_loss(forward(student, x, so).features, forward(teacher, x).features);
    return sum / static_cast<double>(data.size());
}

}  // namespace lighten
