#include "hydrodeep/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hydrodeep {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

[[noreturn]] void shape_error(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

void validate_conv1d(const Conv1dParams& p) {
    if (p.kernel.rank() != 3) {
        shape_error("conv1d: kernel must be rank 3 [C_out x C_in x K], got " +
                    shape_string(p.kernel.dims()));
    }
    if (p.bias.rank() != 1 || p.bias.dims()[0] != p.kernel.dims()[0]) {
        shape_error("conv1d: bias shape " + shape_string(p.bias.dims()) +
                    " must equal kernel C_out " + std::to_string(p.kernel.dims()[0]));
    }
}

void validate_lstm(const LstmParams& p) {
    if (p.w_recur.rank() != 2 || p.w_recur.dims()[0] != 4 * p.w_recur.dims()[1]) {
        shape_error("lstm: w_recur must be [4H x H], got " + shape_string(p.w_recur.dims()));
    }
    const std::size_t four_h = p.w_recur.dims()[0];
    if (p.w_input.rank() != 2 || p.w_input.dims()[0] != four_h) {
        shape_error("lstm: w_input shape " + shape_string(p.w_input.dims()) +
                    " must have 4H = " + std::to_string(four_h) + " rows");
    }
    if (p.bias.rank() != 1 || p.bias.dims()[0] != four_h) {
        shape_error("lstm: bias shape " + shape_string(p.bias.dims()) +
                    " must equal 4H = " + std::to_string(four_h));
    }
}

void validate_dense(const DenseParams& p) {
    if (p.weight.rank() != 2) {
        shape_error("dense: weight must be rank 2 [D_out x D_in], got " +
                    shape_string(p.weight.dims()));
    }
    if (p.bias.rank() != 1 || p.bias.dims()[0] != p.weight.dims()[0]) {
        shape_error("dense: bias shape " + shape_string(p.bias.dims()) +
                    " must equal weight D_out " + std::to_string(p.weight.dims()[0]));
    }
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

void conv1d_run(const Tensor& input, const Conv1dParams& p, Conv1dCache& cache) {
    validate_conv1d(p);
    const std::size_t c_out = p.out_channels();
    const std::size_t c_in = p.in_channels();
    const std::size_t k = p.kernel_size();
    if (input.rank() != 2) {
        shape_error("conv1d: input must be rank 2 [C_in x T], got " +
                    shape_string(input.dims()));
    }
    if (input.dims()[0] != c_in) {
        shape_error("conv1d: input channel count " + std::to_string(input.dims()[0]) +
                    " does not match kernel input channels " + std::to_string(c_in));
    }
    const std::size_t t_in = input.dims()[1];
    if (t_in < k) {
        shape_error("conv1d: input length " + std::to_string(t_in) +
                    " shorter than kernel size " + std::to_string(k));
    }
    const std::size_t t_out = t_in - k + 1;

    cache.input = input;
    cache.output.reset({c_out, t_out});
    const double* in = cache.input.data();
    const double* ker = p.kernel.data();
    double* o = cache.output.data();
    for (std::size_t c = 0; c < c_out; ++c) {
        double* orow = o + c * t_out;
        const double b = p.bias[c];
        for (std::size_t t = 0; t < t_out; ++t) orow[t] = b;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            const double* krow = ker + (c * c_in + ci) * k;
            const double* irow = in + ci * t_in;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double w = krow[kk];
                const double* ish = irow + kk;
                for (std::size_t t = 0; t < t_out; ++t) orow[t] += w * ish[t];
            }
        }
    }
    cache.valid = true;
}

Conv1dCache conv1d_run(const Tensor& input, const Conv1dParams& p) {
    Conv1dCache cache;
    conv1d_run(input, p, cache);
    return cache;
}

Tensor conv1d_forward(const Tensor& input, const Conv1dParams& p) {
    Conv1dCache cache;
    conv1d_run(input, p, cache);
    return std::move(cache.output);
}

void dense_run(const Tensor& input, const DenseParams& p, Activation act, DenseCache& cache) {
    validate_dense(p);
    const std::size_t d_out = p.out_size();
    const std::size_t d_in = p.in_size();
    if (input.rank() != 1 || input.dims()[0] != d_in) {
        shape_error("dense: input shape " + shape_string(input.dims()) +
                    " does not match weight input size " + std::to_string(d_in));
    }
    cache.input = input;
    cache.activation = act;
    cache.pre_activation.reset({d_out});
    cache.output.reset({d_out});
    const double* w = p.weight.data();
    const double* x = cache.input.data();
    for (std::size_t o = 0; o < d_out; ++o) {
        const double* wrow = w + o * d_in;
        double acc = p.bias[o];
        for (std::size_t i = 0; i < d_in; ++i) acc += wrow[i] * x[i];
        cache.pre_activation[o] = acc;
        cache.output[o] = (act == Activation::relu && acc < 0.0) ? 0.0 : acc;
    }
    cache.valid = true;
}

DenseCache dense_run(const Tensor& input, const DenseParams& p, Activation act) {
    DenseCache cache;
    dense_run(input, p, act, cache);
    return cache;
}

Tensor dense_forward(const Tensor& input, const DenseParams& p, Activation act) {
    DenseCache cache;
    dense_run(input, p, act, cache);
    return std::move(cache.output);
}

void lstm_run(const Tensor& seq, const LstmParams& p, const Tensor& h0, const Tensor& c0,
              LstmCache& cache) {
    validate_lstm(p);
    const std::size_t h = p.hidden_size();
    const std::size_t c_in = p.in_channels();
    if (seq.rank() != 2) {
        shape_error("lstm: input must be rank 2 [C_in x T], got " + shape_string(seq.dims()));
    }
    if (seq.dims()[0] != c_in) {
        shape_error("lstm: input channel count " + std::to_string(seq.dims()[0]) +
                    " does not match w_input channels " + std::to_string(c_in));
    }
    if (h0.rank() != 1 || h0.dims()[0] != h || c0.rank() != 1 || c0.dims()[0] != h) {
        shape_error("lstm: h0/c0 must have shape [H] with H = " + std::to_string(h));
    }
    const std::size_t t_len = seq.dims()[1];

    cache.seq = seq;
    cache.h0 = h0;
    cache.c0 = c0;
    cache.gate_i.reset({h, t_len});
    cache.gate_f.reset({h, t_len});
    cache.gate_g.reset({h, t_len});
    cache.gate_o.reset({h, t_len});
    cache.cell.reset({h, t_len});
    cache.cell_tanh.reset({h, t_len});
    cache.hidden.reset({h, t_len});

    cache.scratch.resize(c_in + 2 * h + 4 * h);
    double* x = cache.scratch.data();
    double* h_prev = x + c_in;
    double* c_prev = h_prev + h;
    double* z = c_prev + h;
    std::copy(h0.data(), h0.data() + h, h_prev);
    std::copy(c0.data(), c0.data() + h, c_prev);

    const double* wi = p.w_input.data();
    const double* wr = p.w_recur.data();
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t c = 0; c < c_in; ++c) x[c] = seq[c * t_len + t];
        for (std::size_t j = 0; j < 4 * h; ++j) {
            const double* wirow = wi + j * c_in;
            const double* wrrow = wr + j * h;
            double acc = p.bias[j];
            for (std::size_t c = 0; c < c_in; ++c) acc += wirow[c] * x[c];
            for (std::size_t u = 0; u < h; ++u) acc += wrrow[u] * h_prev[u];
            z[j] = acc;
        }
        for (std::size_t j = 0; j < h; ++j) {
            const double gi = sigmoid(z[j]);
            const double gf = sigmoid(z[h + j]);
            const double gg = std::tanh(z[2 * h + j]);
            const double go = sigmoid(z[3 * h + j]);
            const double ct = gf * c_prev[j] + gi * gg;
            const double tct = std::tanh(ct);
            const double ht = go * tct;
            const std::size_t at = j * t_len + t;
            cache.gate_i[at] = gi;
            cache.gate_f[at] = gf;
            cache.gate_g[at] = gg;
            cache.gate_o[at] = go;
            cache.cell[at] = ct;
            cache.cell_tanh[at] = tct;
            cache.hidden[at] = ht;
            c_prev[j] = ct;
            h_prev[j] = ht;
        }
    }
    cache.valid = true;
}

LstmCache lstm_run(const Tensor& seq, const LstmParams& p, const Tensor& h0,
                   const Tensor& c0) {
    LstmCache cache;
    lstm_run(seq, p, h0, c0, cache);
    return cache;
}

LstmOutput lstm_forward(const Tensor& seq, const LstmParams& p, const Tensor& h0,
                        const Tensor& c0) {
    LstmCache cache = lstm_run(seq, p, h0, c0);
    const std::size_t h = p.hidden_size();
    const std::size_t t_len = seq.dims()[1];
    LstmOutput out;
    out.h_final.reset({h});
    out.c_final.reset({h});
    for (std::size_t j = 0; j < h; ++j) {
        out.h_final[j] = cache.hidden[j * t_len + (t_len - 1)];
        out.c_final[j] = cache.cell[j * t_len + (t_len - 1)];
    }
    out.hidden = std::move(cache.hidden);
    return out;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

const Tensor& GradBundle::param(const std::string& name) const {
    for (const auto& [n, t] : params) {
        if (n == name) return t;
    }
    throw std::invalid_argument("gradient bundle has no parameter named '" + name + "'");
}

void conv1d_backward_acc(const Conv1dParams& p, const Conv1dCache& cache,
                         const Tensor& upstream, Tensor* d_kernel, Tensor* d_bias,
                         Tensor* d_input) {
    if (!cache.valid) {
        throw std::invalid_argument("conv1d backward: forward cache missing");
    }
    const std::size_t c_out = p.out_channels();
    const std::size_t c_in = p.in_channels();
    const std::size_t k = p.kernel_size();
    const std::size_t t_in = cache.input.dims()[1];
    const std::size_t t_out = t_in - k + 1;
    if (upstream.dims() != std::vector<std::size_t>{c_out, t_out}) {
        shape_error("conv1d backward: upstream shape " + shape_string(upstream.dims()) +
                    " does not match output shape " + shape_string({c_out, t_out}));
    }
    if (d_input) d_input->reset_zero(cache.input.dims());

    const double* up = upstream.data();
    const double* in = cache.input.data();
    const double* ker = p.kernel.data();
    for (std::size_t c = 0; c < c_out; ++c) {
        const double* urow = up + c * t_out;
        if (d_bias) {
            double bsum = 0.0;
            for (std::size_t t = 0; t < t_out; ++t) bsum += urow[t];
            (*d_bias)[c] += bsum;
        }
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            const double* krow = ker + (c * c_in + ci) * k;
            const double* irow = in + ci * t_in;
            double* dkrow = d_kernel ? d_kernel->data() + (c * c_in + ci) * k : nullptr;
            double* dirow = d_input ? d_input->data() + ci * t_in : nullptr;
            for (std::size_t kk = 0; kk < k; ++kk) {
                if (dkrow) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < t_out; ++t) acc += urow[t] * irow[t + kk];
                    dkrow[kk] += acc;
                }
                if (dirow) {
                    const double w = krow[kk];
                    for (std::size_t t = 0; t < t_out; ++t) dirow[t + kk] += w * urow[t];
                }
            }
        }
    }
}

GradBundle conv1d_backward(const Conv1dParams& p, const Conv1dCache& cache,
                           const Tensor& upstream) {
    GradBundle g;
    g.params.emplace_back("kernel", Tensor(p.kernel.dims()));
    g.params.emplace_back("bias", Tensor(p.bias.dims()));
    conv1d_backward_acc(p, cache, upstream, &g.params[0].second, &g.params[1].second,
                        &g.input);
    return g;
}

void dense_backward_acc(const DenseParams& p, const DenseCache& cache, const Tensor& upstream,
                        Tensor* d_weight, Tensor* d_bias, Tensor* d_input) {
    if (!cache.valid) {
        throw std::invalid_argument("dense backward: forward cache missing");
    }
    const std::size_t d_out = p.out_size();
    const std::size_t d_in = p.in_size();
    if (upstream.rank() != 1 || upstream.dims()[0] != d_out) {
        shape_error("dense backward: upstream shape " + shape_string(upstream.dims()) +
                    " does not match output size " + std::to_string(d_out));
    }
    if (d_input) d_input->reset_zero(cache.input.dims());

    const double* x = cache.input.data();
    const double* w = p.weight.data();
    for (std::size_t o = 0; o < d_out; ++o) {
        double delta = upstream[o];
        if (cache.activation == Activation::relu && cache.pre_activation[o] <= 0.0) {
            delta = 0.0;
        }
        if (delta == 0.0) continue;
        if (d_bias) (*d_bias)[o] += delta;
        if (d_weight) {
            double* dwrow = d_weight->data() + o * d_in;
            for (std::size_t i = 0; i < d_in; ++i) dwrow[i] += delta * x[i];
        }
        if (d_input) {
            const double* wrow = w + o * d_in;
            double* di = d_input->data();
            for (std::size_t i = 0; i < d_in; ++i) di[i] += delta * wrow[i];
        }
    }
}

GradBundle dense_backward(const DenseParams& p, const DenseCache& cache,
                          const Tensor& upstream) {
    GradBundle g;
    g.params.emplace_back("weight", Tensor(p.weight.dims()));
    g.params.emplace_back("bias", Tensor(p.bias.dims()));
    dense_backward_acc(p, cache, upstream, &g.params[0].second, &g.params[1].second,
                       &g.input);
    return g;
}

void lstm_backward_acc(const LstmParams& p, const LstmCache& cache, const Tensor& upstream,
                       Tensor* d_w_input, Tensor* d_w_recur, Tensor* d_bias, Tensor* d_input) {
    if (!cache.valid) {
        throw std::invalid_argument("lstm backward: forward cache missing");
    }
    const std::size_t h = p.hidden_size();
    const std::size_t c_in = p.in_channels();
    const std::size_t t_len = cache.seq.dims()[1];
    if (upstream.dims() != std::vector<std::size_t>{h, t_len}) {
        shape_error("lstm backward: upstream shape " + shape_string(upstream.dims()) +
                    " does not match hidden shape " + shape_string({h, t_len}));
    }
    if (d_input) d_input->reset_zero(cache.seq.dims());

    std::vector<double> dh_next(h, 0.0);
    std::vector<double> dc_next(h, 0.0);
    std::vector<double> dz(4 * h);
    std::vector<double> x(c_in);
    std::vector<double> h_prev(h);

    const double* wi = p.w_input.data();
    const double* wr = p.w_recur.data();
    for (std::size_t ti = t_len; ti-- > 0;) {
        for (std::size_t c = 0; c < c_in; ++c) x[c] = cache.seq[c * t_len + ti];
        for (std::size_t j = 0; j < h; ++j) {
            h_prev[j] = (ti == 0) ? cache.h0[j] : cache.hidden[j * t_len + (ti - 1)];
        }
        for (std::size_t j = 0; j < h; ++j) {
            const std::size_t at = j * t_len + ti;
            const double gi = cache.gate_i[at];
            const double gf = cache.gate_f[at];
            const double gg = cache.gate_g[at];
            const double go = cache.gate_o[at];
            const double tct = cache.cell_tanh[at];
            const double c_prev = (ti == 0) ? cache.c0[j] : cache.cell[at - 1];

            const double dh = upstream[at] + dh_next[j];
            const double d_go = dh * tct;
            const double dc = dh * go * (1.0 - tct * tct) + dc_next[j];
            const double d_gi = dc * gg;
            const double d_gf = dc * c_prev;
            const double d_gg = dc * gi;

            dz[j] = d_gi * gi * (1.0 - gi);
            dz[h + j] = d_gf * gf * (1.0 - gf);
            dz[2 * h + j] = d_gg * (1.0 - gg * gg);
            dz[3 * h + j] = d_go * go * (1.0 - go);
            dc_next[j] = dc * gf;
        }
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        for (std::size_t j = 0; j < 4 * h; ++j) {
            const double d = dz[j];
            if (d_bias) (*d_bias)[j] += d;
            if (d_w_input) {
                double* dwirow = d_w_input->data() + j * c_in;
                for (std::size_t c = 0; c < c_in; ++c) dwirow[c] += d * x[c];
            }
            if (d_input) {
                const double* wirow = wi + j * c_in;
                for (std::size_t c = 0; c < c_in; ++c) {
                    (*d_input)[c * t_len + ti] += d * wirow[c];
                }
            }
            if (d_w_recur) {
                double* dwrrow = d_w_recur->data() + j * h;
                for (std::size_t u = 0; u < h; ++u) dwrrow[u] += d * h_prev[u];
            }
            const double* wrrow = wr + j * h;
            for (std::size_t u = 0; u < h; ++u) dh_next[u] += d * wrrow[u];
        }
    }
}

GradBundle lstm_backward(const LstmParams& p, const LstmCache& cache,
                         const Tensor& upstream) {
    GradBundle g;
    g.params.emplace_back("w_input", Tensor(p.w_input.dims()));
    g.params.emplace_back("w_recur", Tensor(p.w_recur.dims()));
    g.params.emplace_back("bias", Tensor(p.bias.dims()));
    lstm_backward_acc(p, cache, upstream, &g.params[0].second, &g.params[1].second,
                      &g.params[2].second, &g.input);
    return g;
}

// ---------------------------------------------------------------------------
// Generic layer interface + gradient check
// ---------------------------------------------------------------------------

LayerCache layer_run(const LayerParams& layer, const Tensor& input, Activation dense_act) {
    if (const auto* conv = std::get_if<Conv1dParams>(&layer)) {
        return conv1d_run(input, *conv);
    }
    if (const auto* lstm = std::get_if<LstmParams>(&layer)) {
        const std::size_t h = lstm->hidden_size();
        return lstm_run(input, *lstm, Tensor({h}), Tensor({h}));
    }
    return dense_run(input, std::get<DenseParams>(layer), dense_act);
}

const Tensor& layer_output(const LayerCache& cache) {
    if (const auto* conv = std::get_if<Conv1dCache>(&cache)) return conv->output;
    if (const auto* lstm = std::get_if<LstmCache>(&cache)) return lstm->hidden;
    return std::get<DenseCache>(cache).output;
}

GradBundle layer_backward(const LayerParams& layer, const LayerCache& cache,
                          const Tensor& upstream) {
    if (const auto* conv = std::get_if<Conv1dParams>(&layer)) {
        return conv1d_backward(*conv, std::get<Conv1dCache>(cache), upstream);
    }
    if (const auto* lstm = std::get_if<LstmParams>(&layer)) {
        return lstm_backward(*lstm, std::get<LstmCache>(cache), upstream);
    }
    return dense_backward(std::get<DenseParams>(layer), std::get<DenseCache>(cache),
                          upstream);
}

namespace {

double sum_of_outputs(const LayerParams& layer, const Tensor& input, Activation act) {
    LayerCache cache = layer_run(layer, input, act);
    const Tensor& out = layer_output(cache);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i];
    return s;
}

std::vector<Tensor*> mutable_params(LayerParams& layer) {
    if (auto* conv = std::get_if<Conv1dParams>(&layer)) return {&conv->kernel, &conv->bias};
    if (auto* lstm = std::get_if<LstmParams>(&layer)) {
        return {&lstm->w_input, &lstm->w_recur, &lstm->bias};
    }
    auto& dense = std::get<DenseParams>(layer);
    return {&dense.weight, &dense.bias};
}

double relative_error(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
    return std::fabs(a - b) / denom;
}

}  // namespace

double grad_check(const LayerParams& layer, const Tensor& input, double epsilon,
                  Activation dense_act, const GradFault& fault) {
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("grad_check: epsilon must be positive");
    }

    LayerCache cache = layer_run(layer, input, dense_act);
    const Tensor& out = layer_output(cache);
    Tensor upstream(out.dims());
    upstream.fill(1.0);
    GradBundle analytic = layer_backward(layer, cache, upstream);

    if (fault.enabled) {
        std::size_t remaining = fault.flat_index;
        for (auto& [name, grad] : analytic.params) {
            if (remaining < grad.size()) {
                grad[remaining] *= fault.scale;
                break;
            }
            remaining -= grad.size();
        }
    }

    double max_err = 0.0;
    LayerParams probe = layer;
    std::vector<Tensor*> tensors = mutable_params(probe);
    for (std::size_t pi = 0; pi < tensors.size(); ++pi) {
        Tensor& t = *tensors[pi];
        const Tensor& grad = analytic.params[pi].second;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t[i];
            t[i] = saved + epsilon;
            const double hi = sum_of_outputs(probe, input, dense_act);
            t[i] = saved - epsilon;
            const double lo = sum_of_outputs(probe, input, dense_act);
            t[i] = saved;
            const double fd = (hi - lo) / (2.0 * epsilon);
            max_err = std::max(max_err, relative_error(grad[i], fd));
        }
    }

    Tensor probe_input = input;
    for (std::size_t i = 0; i < probe_input.size(); ++i) {
        const double saved = probe_input[i];
        probe_input[i] = saved + epsilon;
        const double hi = sum_of_outputs(layer, probe_input, dense_act);
        probe_input[i] = saved - epsilon;
        const double lo = sum_of_outputs(layer, probe_input, dense_act);
        probe_input[i] = saved;
        const double fd = (hi - lo) / (2.0 * epsilon);
        max_err = std::max(max_err, relative_error(analytic.input[i], fd));
    }
    return max_err;
}

}  // namespace hydrodeep
