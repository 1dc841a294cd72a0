#include "fairfed/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace fairfed {

void ModelShape::validate() const {
    if (input_dim < 1 || hidden_dim < 1) {
        throw std::invalid_argument("model shape dimensions must be >= 1");
    }
}

ModelParams::ModelParams(ModelShape shape) : shape_(shape), values_(shape.parameter_count(), 0.0) {
    shape_.validate();
}

ModelParams::ModelParams(ModelShape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
    shape_.validate();
    if (values_.size() != shape_.parameter_count()) {
        throw std::invalid_argument("parameter vector length " + std::to_string(values_.size()) +
                                    " does not match shape (" + std::to_string(shape_.parameter_count()) + ")");
    }
}

void ModelParams::check_compatible(const ModelParams& other) const {
    if (!(shape_ == other.shape_) || values_.size() != other.values_.size()) {
        throw std::invalid_argument("model parameter shapes differ");
    }
}

ModelParams& ModelParams::operator+=(const ModelParams& other) {
    check_compatible(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

ModelParams& ModelParams::operator-=(const ModelParams& other) {
    check_compatible(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

ModelParams& ModelParams::operator*=(double scale) {
    for (auto& v : values_) v *= scale;
    return *this;
}

bool ModelParams::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void LocalTrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || epochs < 0 || batch_size < 1) {
        throw std::invalid_argument("invalid local training config");
    }
}

ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
    ModelParams params(shape);
    std::mt19937_64 rng(seed);
    const auto h = shape.hidden_dim;
    const auto d = shape.input_dim;
    const double limit1 = std::sqrt(6.0 / static_cast<double>(d + h));
    const double limit2 = std::sqrt(6.0 / static_cast<double>(h + ModelShape::output_dim));
    std::uniform_real_distribution<double> layer1(-limit1, limit1);
    std::uniform_real_distribution<double> layer2(-limit2, limit2);
    auto v = params.values();
    for (std::size_t i = 0; i < h * d; ++i) v[i] = layer1(rng);
    const std::size_t w2_begin = h * d + h;
    for (std::size_t j = 0; j < h; ++j) v[w2_begin + j] = layer2(rng);
    return params;
}

namespace {

double sigmoid(double z) {
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_features(const ModelParams& params, const Matrix& features) {
    if (features.cols != params.shape().input_dim) {
        throw std::invalid_argument("feature dimension " + std::to_string(features.cols) +
                                    " does not match model input_dim " +
                                    std::to_string(params.shape().input_dim));
    }
}

// Forward pass for a single row; fills hidden activations and returns the output logit.
double forward_row(const ModelParams& params, std::span<const double> x, std::span<double> hidden) {
    const auto d = params.shape().input_dim;
    const auto w1 = params.w1();
    const auto b1 = params.b1();
    const auto w2 = params.w2();
    double z2 = params.b2();
    for (std::size_t j = 0; j < hidden.size(); ++j) {
        const double* wj = w1.data() + j * d;
        double z = b1[j];
        for (std::size_t i = 0; i < d; ++i) z += wj[i] * x[i];
        hidden[j] = std::tanh(z);
        z2 += w2[j] * hidden[j];
    }
    return z2;
}

template <typename RowRange>
LossAndGrad weighted_bce(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                         std::span<const double> weights, const RowRange& rows) {
    check_features(params, features);
    if (labels.size() != features.rows || weights.size() != features.rows) {
        throw std::invalid_argument("labels/weights length must equal the number of feature rows");
    }
    const auto d = params.shape().input_dim;
    const auto h = params.shape().hidden_dim;
    const std::size_t b1_off = h * d;
    const std::size_t w2_off = b1_off + h;
    const std::size_t b2_off = w2_off + h;

    LossAndGrad out{0.0, Gradient(params.shape())};
    auto g = out.grad.values();
    const auto w2 = params.w2();
    std::vector<double> hidden(h);

    double weight_sum = 0.0;
    for (std::size_t r : rows) {
        const double w = weights[r];
        if (w == 0.0) continue;
        weight_sum += w;
        const auto x = features.row(r);
        const double z2 = forward_row(params, x, hidden);
        const double p = sigmoid(z2);
        const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
        const int y = labels[r];
        out.loss += -w * (y ? std::log(pc) : std::log(1.0 - pc));

        // d loss / d z2; the clamp has zero derivative outside its range.
        const double dz2 = (p == pc) ? w * (p - static_cast<double>(y)) : 0.0;
        if (dz2 == 0.0) continue;
        g[b2_off] += dz2;
        for (std::size_t j = 0; j < h; ++j) {
            g[w2_off + j] += dz2 * hidden[j];
            const double dz1 = dz2 * w2[j] * (1.0 - hidden[j] * hidden[j]);
            g[b1_off + j] += dz1;
            double* gj = g.data() + j * d;
            for (std::size_t i = 0; i < d; ++i) gj[i] += dz1 * x[i];
        }
    }
    if (!(weight_sum > 0.0)) {
        throw std::invalid_argument("sample weights sum to zero");
    }
    out.loss /= weight_sum;
    out.grad *= 1.0 / weight_sum;
    return out;
}

struct AllRows {
    std::size_t n;
    struct iterator {
        std::size_t i;
        std::size_t operator*() const { return i; }
        iterator& operator++() {
            ++i;
            return *this;
        }
        bool operator!=(const iterator& o) const { return i != o.i; }
    };
    iterator begin() const { return {0}; }
    iterator end() const { return {n}; }
};

}  // namespace

std::vector<double> predict_proba(const ModelParams& params, const Matrix& features) {
    check_features(params, features);
    std::vector<double> out(features.rows);
    std::vector<double> hidden(params.shape().hidden_dim);
    for (std::size_t r = 0; r < features.rows; ++r) {
        out[r] = sigmoid(forward_row(params, features.row(r), hidden));
    }
    return out;
}

LossAndGrad loss_and_grad(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                          std::span<const double> sample_weights) {
    return weighted_bce(params, features, labels, sample_weights, AllRows{features.rows});
}

LossAndGrad loss_and_grad(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                          std::span<const double> sample_weights, std::span<const std::size_t> rows) {
    for (auto r : rows) {
        if (r >= features.rows) throw std::out_of_range("batch row index out of range");
    }
    return weighted_bce(params, features, labels, sample_weights, rows);
}

ModelParams apply_step(const ModelParams& params, const Gradient& grad, double lr) {
    if (!(params.shape() == grad.shape())) {
        throw std::invalid_argument("gradient shape does not match parameters");
    }
    ModelParams out = params;
    auto v = out.values();
    const auto g = grad.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    return out;
}

}  // namespace fairfed
