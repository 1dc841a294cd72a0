#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fairfed {

/// Dense row-major feature matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Shape of the one-hidden-layer network. The output layer always has a single unit.
struct ModelShape {
    std::size_t input_dim = 1;
    std::size_t hidden_dim = 10;
    static constexpr std::size_t output_dim = 1;

    std::size_t parameter_count() const {
        return input_dim * hidden_dim + hidden_dim + hidden_dim * output_dim + output_dim;
    }
    void validate() const;
    bool operator==(const ModelShape&) const = default;
};

/// Flat parameter vector in canonical order: W1 (hidden x input, row-major), b1, W2, b2.
///
/// Every aggregation rule is element-wise arithmetic on this layout, so all
/// clients of a federation must share one ModelShape.
class ModelParams {
public:
    ModelParams() = default;
    explicit ModelParams(ModelShape shape);
    ModelParams(ModelShape shape, std::vector<double> values);

    const ModelShape& shape() const { return shape_; }
    std::size_t size() const { return values_.size(); }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    // Views into the canonical layout.
    std::span<const double> w1() const { return values().subspan(0, shape_.hidden_dim * shape_.input_dim); }
    std::span<const double> b1() const { return values().subspan(w1_end(), shape_.hidden_dim); }
    std::span<const double> w2() const { return values().subspan(w1_end() + shape_.hidden_dim, shape_.hidden_dim); }
    double b2() const { return values_.back(); }

    ModelParams& operator+=(const ModelParams& other);
    ModelParams& operator-=(const ModelParams& other);
    ModelParams& operator*=(double scale);
    friend ModelParams operator+(ModelParams a, const ModelParams& b) { return a += b; }
    friend ModelParams operator-(ModelParams a, const ModelParams& b) { return a -= b; }
    friend ModelParams operator*(double s, ModelParams a) { return a *= s; }

    bool all_finite() const;
    bool operator==(const ModelParams&) const = default;

private:
    std::size_t w1_end() const { return shape_.hidden_dim * shape_.input_dim; }
    void check_compatible(const ModelParams& other) const;

    ModelShape shape_{};
    std::vector<double> values_;
};

/// Gradient of the loss with respect to ModelParams, same layout.
using Gradient = ModelParams;

struct LocalTrainConfig {
    double learning_rate = 0.01;
    int epochs = 10;
    std::size_t batch_size = 10;

    void validate() const;
};

struct LossAndGrad {
    double loss = 0.0;
    Gradient grad;
};

inline constexpr double kProbabilityClamp = 1e-12;

/// Glorot-uniform weights, zero biases.
ModelParams init_params(const ModelShape& shape, std::uint64_t seed);

std::vector<double> predict_proba(const ModelParams& params, const Matrix& features);

/// Weighted mean binary cross-entropy and its exact gradient.
/// Probabilities are clamped to [kProbabilityClamp, 1 - kProbabilityClamp] before the log.
LossAndGrad loss_and_grad(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                          std::span<const double> sample_weights);

/// Same, restricted to the given row indices (a mini-batch).
LossAndGrad loss_and_grad(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                          std::span<const double> sample_weights, std::span<const std::size_t> rows);

ModelParams apply_step(const ModelParams& params, const Gradient& grad, double lr);

}  // namespace fairfed
