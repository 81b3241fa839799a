#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hydrodeep/tensor.hpp"

namespace hydrodeep {

enum class Activation { identity, relu };

/// 1-D convolution, valid padding, stride 1.
/// kernel [C_out x C_in x K], bias [C_out].
struct Conv1dParams {
    Tensor kernel;
    Tensor bias;

    std::size_t out_channels() const { return kernel.dims()[0]; }
    std::size_t in_channels() const { return kernel.dims()[1]; }
    std::size_t kernel_size() const { return kernel.dims()[2]; }
};

/// Single LSTM layer. Gate blocks are stacked in the fixed order
/// input, forget, cell, output along the 4H axis; this ordering is part
/// of the checkpoint format and must not change.
/// w_input [4H x C_in], w_recur [4H x H], bias [4H].
struct LstmParams {
    Tensor w_input;
    Tensor w_recur;
    Tensor bias;

    std::size_t hidden_size() const { return w_recur.dims()[1]; }
    std::size_t in_channels() const { return w_input.dims()[1]; }
};

/// Fully connected layer. weight [D_out x D_in], bias [D_out].
struct DenseParams {
    Tensor weight;
    Tensor bias;

    std::size_t out_size() const { return weight.dims()[0]; }
    std::size_t in_size() const { return weight.dims()[1]; }
};

void validate_conv1d(const Conv1dParams& p);
void validate_lstm(const LstmParams& p);
void validate_dense(const DenseParams& p);

/// out[c,t] = bias[c] + sum_{c',k} kernel[c,c',k] * input[c',t+k],
/// input [C_in x T], output [C_out x (T-K+1)]. Requires T >= K.
Tensor conv1d_forward(const Tensor& input, const Conv1dParams& p);

struct LstmOutput {
    Tensor hidden;   // [H x T]
    Tensor h_final;  // [H], equals last column of hidden
    Tensor c_final;  // [H]
};

/// Standard LSTM recurrence with sigmoid gates and tanh cell/output
/// nonlinearity over seq [C_in x T].
LstmOutput lstm_forward(const Tensor& seq, const LstmParams& p, const Tensor& h0,
                        const Tensor& c0);

/// out = activation(W * input + b), input [D_in], output [D_out].
Tensor dense_forward(const Tensor& input, const DenseParams& p, Activation act);

// ---------------------------------------------------------------------------
// Backward passes. Forward state is captured by *_run and consumed by
// *_backward; calling backward with a cache whose valid flag is unset throws.
// ---------------------------------------------------------------------------

/// Parameter gradients keyed by the parameter names of the layer, plus the
/// gradient with respect to the layer input.
struct GradBundle {
    std::vector<std::pair<std::string, Tensor>> params;
    Tensor input;

    const Tensor& param(const std::string& name) const;
};

struct Conv1dCache {
    Tensor input;
    Tensor output;
    bool valid = false;
};

struct DenseCache {
    Tensor input;
    Tensor pre_activation;
    Tensor output;
    Activation activation = Activation::identity;
    bool valid = false;
};

struct LstmCache {
    Tensor seq;   // [C x T]
    Tensor h0;
    Tensor c0;
    Tensor gate_i, gate_f, gate_g, gate_o;  // each [H x T]
    Tensor cell;                            // [H x T]
    Tensor cell_tanh;                       // [H x T]
    Tensor hidden;                          // [H x T]
    std::vector<double> scratch;            // forward working buffer
    bool valid = false;
};

Conv1dCache conv1d_run(const Tensor& input, const Conv1dParams& p);
DenseCache dense_run(const Tensor& input, const DenseParams& p, Activation act);
LstmCache lstm_run(const Tensor& seq, const LstmParams& p, const Tensor& h0,
                   const Tensor& c0);

// In-place variants reusing caller-owned cache buffers; used on the training
// hot path so steady-state forward/backward passes do not allocate.
void conv1d_run(const Tensor& input, const Conv1dParams& p, Conv1dCache& cache);
void dense_run(const Tensor& input, const DenseParams& p, Activation act, DenseCache& cache);
void lstm_run(const Tensor& seq, const LstmParams& p, const Tensor& h0, const Tensor& c0,
              LstmCache& cache);

// Accumulating backward kernels. Parameter gradients are added (+=) into the
// given tensors; a null pointer skips that gradient. d_input, when requested,
// is reset and overwritten. Shapes are trusted, not revalidated.
void conv1d_backward_acc(const Conv1dParams& p, const Conv1dCache& cache,
                         const Tensor& upstream, Tensor* d_kernel, Tensor* d_bias,
                         Tensor* d_input);
void dense_backward_acc(const DenseParams& p, const DenseCache& cache, const Tensor& upstream,
                        Tensor* d_weight, Tensor* d_bias, Tensor* d_input);
void lstm_backward_acc(const LstmParams& p, const LstmCache& cache, const Tensor& upstream,
                       Tensor* d_w_input, Tensor* d_w_recur, Tensor* d_bias, Tensor* d_input);

GradBundle conv1d_backward(const Conv1dParams& p, const Conv1dCache& cache,
                           const Tensor& upstream);
GradBundle dense_backward(const DenseParams& p, const DenseCache& cache,
                          const Tensor& upstream);
/// `upstream` matches the hidden sequence [H x T]; gradients w.r.t. the final
/// cell state are taken as zero.
GradBundle lstm_backward(const LstmParams& p, const LstmCache& cache,
                         const Tensor& upstream);

// ---------------------------------------------------------------------------
// Generic layer interface used by the gradient-check harness.
// ---------------------------------------------------------------------------

using LayerParams = std::variant<Conv1dParams, LstmParams, DenseParams>;
using LayerCache = std::variant<Conv1dCache, LstmCache, DenseCache>;

/// Forward pass keeping the state needed for backward. Dense layers use
/// `dense_act`; LSTM layers start from zero h0/c0.
LayerCache layer_run(const LayerParams& layer, const Tensor& input,
                     Activation dense_act = Activation::identity);

/// Primary output of a cached forward pass (conv output, hidden sequence,
/// or dense output).
const Tensor& layer_output(const LayerCache& cache);

GradBundle layer_backward(const LayerParams& layer, const LayerCache& cache,
                          const Tensor& upstream);

/// Optional fault injection for gradient-check self-tests: scales one entry
/// of the flattened analytic parameter gradient.
struct GradFault {
    bool enabled = false;
    std::size_t flat_index = 0;
    double scale = 1.5;
};

/// Compares every analytic parameter and input gradient of the layer against
/// central finite differences of the sum-of-outputs loss, returning the
/// maximum relative error with denominator max(|a|, |b|, 1e-8).
double grad_check(const LayerParams& layer, const Tensor& input, double epsilon,
                  Activation dense_act = Activation::identity,
                  const GradFault& fault = {});

}  // namespace hydrodeep
