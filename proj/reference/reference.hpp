#pragma once

// Straight-line serial reference implementations used as oracles by the
// tests and as the baseline side of the benchmark. These deliberately do
// not share code with the hydrodeep kernels they are checked against.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hydrodeep/model.hpp"
#include "hydrodeep/train.hpp"

namespace hdref {

double nse(std::span<const double> observed, std::span<const double> simulated);

double rmse(std::span<const double> observed, std::span<const double> simulated);

/// Textbook Adam update of one flat parameter vector, in place.
void adam_update(std::vector<double>& theta, const std::vector<double>& grad,
                 std::vector<double>& m, std::vector<double>& v, double learning_rate,
                 double beta1, double beta2, double epsilon, std::uint64_t t);

/// One LSTM step from the gate equations. Weights are row-major with the
/// gate blocks ordered input, forget, cell, output.
struct LstmStep {
    std::vector<double> h;
    std::vector<double> c;
};
LstmStep lstm_single_step(std::span<const double> w_input, std::span<const double> w_recur,
                          std::span<const double> bias, std::span<const double> x,
                          std::span<const double> h_prev, std::span<const double> c_prev,
                          std::size_t hidden, std::size_t inputs);

/// Direct evaluation of the valid-padding 1-D convolution sum.
std::vector<double> conv1d_apply(std::span<const double> kernel, std::span<const double> bias,
                                 std::span<const double> input, std::size_t c_out,
                                 std::size_t c_in, std::size_t k, std::size_t t_in);

/// Direct dense layer evaluation (optionally with relu).
std::vector<double> dense_apply(std::span<const double> weight, std::span<const double> bias,
                                std::span<const double> input, std::size_t d_out,
                                std::size_t d_in, bool relu);

/// Serial counterpart of hydrodeep::batch_gradients: same per-sample passes,
/// accumulated one sample at a time with no parallel machinery. Returns the
/// batch MSE.
double batch_gradients_serial(const hydrodeep::Model& model,
                              std::span<const hydrodeep::WindowedSample> samples,
                              std::span<const std::size_t> indices,
                              hydrodeep::ModelGrads& out,
                              const hydrodeep::GradRequest& request = {});

}  // namespace hdref
