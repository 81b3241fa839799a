#include "hydrodeep/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hydrodeep {

namespace {

Tensor random_tensor(std::vector<std::size_t> dims, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

LayerParams random_conv_layer(Rng& rng, Tensor* input) {
    const std::size_t c_in = 1 + rng.below(4);
    const std::size_t c_out = 1 + rng.below(4);
    const std::size_t k = 1 + rng.below(3);
    const std::size_t t = k + rng.below(8 - k + 1);
    Conv1dParams p;
    p.kernel = random_tensor({c_out, c_in, k}, rng);
    p.bias = random_tensor({c_out}, rng);
    if (input) *input = random_tensor({c_in, t}, rng);
    return p;
}

LayerParams random_lstm_layer(Rng& rng, Tensor* input) {
    const std::size_t h = 1 + rng.below(6);
    const std::size_t c_in = 1 + rng.below(4);
    const std::size_t t = 1 + rng.below(6);
    LstmParams p;
    p.w_input = random_tensor({4 * h, c_in}, rng);
    p.w_recur = random_tensor({4 * h, h}, rng);
    p.bias = random_tensor({4 * h}, rng);
    if (input) *input = random_tensor({c_in, t}, rng);
    return p;
}

LayerParams random_dense_layer(Rng& rng, Tensor* input) {
    const std::size_t d_in = 1 + rng.below(8);
    const std::size_t d_out = 1 + rng.below(8);
    DenseParams p;
    p.weight = random_tensor({d_out, d_in}, rng);
    p.bias = random_tensor({d_out}, rng);
    if (input) *input = random_tensor({d_in}, rng);
    return p;
}

WindowedSample random_sample(std::size_t grids, Rng& rng) {
    WindowedSample s;
    s.history = random_tensor({grids, 2, 7}, rng, 0.0, 1.0);
    s.target_day = random_tensor({grids, 2}, rng, 0.0, 1.0);
    s.label = rng.uniform();
    return s;
}

ArchSpec random_tiny_arch(Rng& rng) {
    ArchSpec arch;
    arch.variant = ModelVariant::hydrodeep;
    const std::size_t n_conv = 1 + rng.below(2);
    arch.conv_layers.clear();
    for (std::size_t i = 0; i < n_conv; ++i) {
        arch.conv_layers.push_back({1 + rng.below(3), 2 + rng.below(2)});
    }
    arch.lstm_layers = {1 + rng.below(4)};
    if (rng.bernoulli(0.3)) arch.lstm_layers.push_back(1 + rng.below(3));
    arch.target_branch_units = 1 + rng.below(3);
    arch.head_units = {1 + rng.below(4), 1};
    arch.validate();
    return arch;
}

double model_grad_check(const Model& model, const WindowedSample& sample, double epsilon) {
    ModelCache cache;
    model_forward_cached(model, sample, cache);
    ModelGrads grads = ModelGrads::shaped_like(model);
    model_backward(model, sample, cache, 1.0, grads);

    Model probe = model;
    const std::vector<ParamRef> refs = param_refs(probe);
    double max_err = 0.0;
    for (std::size_t p = 0; p < refs.size(); ++p) {
        Tensor& t = *refs[p].tensor;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t[i];
            t[i] = saved + epsilon;
            const double hi = model_forward(probe, sample);
            t[i] = saved - epsilon;
            const double lo = model_forward(probe, sample);
            t[i] = saved;
            const double fd = (hi - lo) / (2.0 * epsilon);
            const double a = grads.tensors[p][i];
            const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-8});
            max_err = std::max(max_err, std::fabs(a - fd) / denom);
        }
    }
    return max_err;
}

double GradcheckSummary::worst() const {
    return std::max({conv_max, lstm_max, dense_max, model_max});
}

GradcheckSummary run_gradcheck_suite(std::uint64_t seed, std::size_t configs_per_kind,
                                     std::size_t model_configs, double epsilon) {
    GradcheckSummary summary;
    for (std::size_t i = 0; i < configs_per_kind; ++i) {
        Tensor input;
        {
            Rng rng(derive_seed(seed, i, 1));
            const LayerParams layer = random_conv_layer(rng, &input);
            summary.conv_max = std::max(summary.conv_max, grad_check(layer, input, epsilon));
        }
        {
            Rng rng(derive_seed(seed, i, 2));
            const LayerParams layer = random_lstm_layer(rng, &input);
            summary.lstm_max = std::max(summary.lstm_max, grad_check(layer, input, epsilon));
        }
        {
            Rng rng(derive_seed(seed, i, 3));
            const LayerParams layer = random_dense_layer(rng, &input);
            const Activation act = (i % 2 == 0) ? Activation::relu : Activation::identity;
            summary.dense_max =
                std::max(summary.dense_max, grad_check(layer, input, epsilon, act));
        }
    }
    for (std::size_t i = 0; i < model_configs; ++i) {
        Rng rng(derive_seed(seed, i, 4));
        const ArchSpec arch = random_tiny_arch(rng);
        const Model model = build_model(arch, rng.next_u64());
        const WindowedSample sample = random_sample(2, rng);
        summary.model_max =
            std::max(summary.model_max, model_grad_check(model, sample, epsilon));
    }
    return summary;
}

}  // namespace hydrodeep
