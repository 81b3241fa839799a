#include "hydrodeep/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hydrodeep/metrics.hpp"
#include "hydrodeep/rng.hpp"

namespace hydrodeep {

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) {
        throw std::invalid_argument("train config: learning rate must be >= 0");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("train config: beta1/beta2 must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) throw std::invalid_argument("train config: epsilon must be > 0");
    validate_group_set(freeze);
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw std::invalid_argument("mse_loss: length mismatch, " +
                                    std::to_string(pred.size()) + " vs " +
                                    std::to_string(target.size()));
    }
    if (pred.empty()) throw std::invalid_argument("mse_loss: empty batch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

AdamState AdamState::init(const Model& model) {
    AdamState state;
    for (const ConstParamRef& ref : param_refs(model)) {
        state.m.emplace_back(ref.tensor->size(), 0.0);
        state.v.emplace_back(ref.tensor->size(), 0.0);
    }
    return state;
}

namespace {

void adam_step_refs(const std::vector<ParamRef>& refs, const ModelGrads& grads,
                    AdamState& state, const TrainConfig& config, std::uint64_t t) {
    if (t < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
    if (grads.tensors.size() != refs.size() || state.m.size() != refs.size()) {
        throw std::invalid_argument("adam_step: gradient/state tensor count mismatch");
    }
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    for (std::size_t p = 0; p < refs.size(); ++p) {
        if (config.freeze.contains(std::string(refs[p].group))) continue;
        Tensor& theta = *refs[p].tensor;
        const Tensor& g = grads.tensors[p];
        if (!theta.same_shape(g)) {
            throw std::invalid_argument("adam_step: gradient shape mismatch for " +
                                        refs[p].name);
        }
        std::vector<double>& m = state.m[p];
        std::vector<double>& v = state.v[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

}  // namespace

void adam_step(Model& model, const ModelGrads& grads, AdamState& state,
               const TrainConfig& config, std::uint64_t t) {
    config.validate();
    const std::vector<ParamRef> refs = param_refs(model);
    adam_step_refs(refs, grads, state, config, t);
}

double batch_gradients(const Model& model, std::span<const WindowedSample> samples,
                       std::span<const std::size_t> indices, ModelGrads& out,
                       const GradRequest& request, BatchWorkspace& ws) {
    if (indices.empty()) throw std::invalid_argument("batch_gradients: empty batch");
    const std::size_t b = indices.size();
    if (ws.caches.size() < b) ws.caches.resize(b);
    while (ws.grads.size() < b) ws.grads.push_back(ModelGrads::shaped_like(model));
    if (ws.sq_err.size() < b) ws.sq_err.resize(b);
    const double upstream_scale = 2.0 / static_cast<double>(b);

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(b); ++i) {
        const WindowedSample& s = samples[indices[i]];
        const double pred = model_forward_cached(model, s, ws.caches[i]);
        const double err = pred - s.label;
        ws.sq_err[i] = err * err;
        ws.grads[i].zero();
        model_backward(model, s, ws.caches[i], upstream_scale * err, ws.grads[i], request);
    }

    // Reduce in sample order so thread count never changes results.
    out.zero();
    double sq_err = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        out.add(ws.grads[i]);
        sq_err += ws.sq_err[i];
    }
    return sq_err / static_cast<double>(b);
}

double batch_gradients(const Model& model, std::span<const WindowedSample> samples,
                       std::span<const std::size_t> indices, ModelGrads& out,
                       const GradRequest& request) {
    BatchWorkspace ws;
    return batch_gradients(model, samples, indices, out, request, ws);
}

TrainReport train(Model& model, std::span<const WindowedSample> samples,
                  const TrainConfig& config) {
    config.validate();
    if (samples.empty()) throw std::invalid_argument("train: no samples");

    TrainReport report;
    report.config = config;
    const auto t0 = std::chrono::steady_clock::now();

    if (config.iterations > 0) {
        const std::size_t n = samples.size();
        const std::size_t bs = std::min(config.batch_size, n);
        const GradRequest request = GradRequest::from_frozen(config.freeze);
        const std::vector<ParamRef> refs = param_refs(model);
        AdamState state = AdamState::init(model);

        BatchWorkspace ws;
        ModelGrads grads = ModelGrads::shaped_like(model);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});

        std::uint64_t step = 0;
        for (std::size_t iter = 0; iter < config.iterations; ++iter) {
            Rng rng(derive_seed(config.seed, iter));
            rng.shuffle(order);
            double epoch_sq_err = 0.0;
            for (std::size_t start = 0; start < n; start += bs) {
                const std::size_t b = std::min(bs, n - start);
                const double batch_mse = batch_gradients(
                    model, samples, std::span<const std::size_t>(order).subspan(start, b),
                    grads, request, ws);
                epoch_sq_err += batch_mse * static_cast<double>(b);
                ++step;
                adam_step_refs(refs, grads, state, config, step);
            }
            report.iteration_loss.push_back(epoch_sq_err / static_cast<double>(n));
        }
    }

    const auto t1 = std::chrono::steady_clock::now();
    report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    return report;
}

// ---------------------------------------------------------------------------
// Random hyperparameter search
// ---------------------------------------------------------------------------

void SearchSpace::validate() const {
    if (trials < 1) throw std::invalid_argument("search space: trial budget must be >= 1");
    if (conv_options.empty() || lstm_options.empty() || target_branch_options.empty() ||
        head_options.empty() || batch_options.empty()) {
        throw std::invalid_argument("search space: every option list must be non-empty");
    }
    if (!(log10_lr_min <= log10_lr_max)) {
        throw std::invalid_argument("search space: learning-rate range is empty");
    }
}

SearchSpace SearchSpace::default_space() {
    SearchSpace space;
    space.conv_options = {{{4, 3}, {8, 3}}, {{6, 3}, {12, 3}}, {{8, 3}, {16, 3}}, {{8, 5}}};
    space.lstm_options = {{8}, {16}, {24}};
    space.target_branch_options = {2, 4, 8};
    space.head_options = {{8, 1}, {12, 1}, {16, 1}};
    space.batch_options = {16, 32, 64};
    return space;
}

SearchResult random_search(const SearchSpace& space,
                           std::span<const WindowedSample> train_samples,
                           std::span<const WindowedSample> validation_samples,
                           const NormStats& stats) {
    space.validate();
    if (train_samples.empty() || validation_samples.empty()) {
        throw std::invalid_argument("random_search: empty train or validation samples");
    }

    SearchResult result;
    result.trials.resize(space.trials);
    for (std::size_t i = 0; i < space.trials; ++i) {
        // Pre-split streams: the draw for trial i never depends on other trials.
        Rng rng(derive_seed(space.seed, 1000 + i));
        SearchTrial& trial = result.trials[i];
        trial.arch.variant = ModelVariant::hydrodeep;
        trial.arch.conv_layers = space.conv_options[rng.below(space.conv_options.size())];
        trial.arch.lstm_layers = space.lstm_options[rng.below(space.lstm_options.size())];
        trial.arch.target_branch_units =
            space.target_branch_options[rng.below(space.target_branch_options.size())];
        trial.arch.head_units = space.head_options[rng.below(space.head_options.size())];
        trial.arch.validate();

        trial.config.iterations = space.trial_iterations;
        trial.config.batch_size = space.batch_options[rng.below(space.batch_options.size())];
        trial.config.learning_rate =
            std::pow(10.0, rng.uniform(space.log10_lr_min, space.log10_lr_max));
        trial.config.seed = derive_seed(space.seed, 3000 + i);
        trial.model_seed = derive_seed(space.seed, 2000 + i);

        Model model = build_model(trial.arch, trial.model_seed);
        train(model, train_samples, trial.config);
        trial.validation_nse = evaluate(model, validation_samples, stats).nse;
    }

    result.best_index = 0;
    for (std::size_t i = 1; i < space.trials; ++i) {
        if (result.trials[i].validation_nse > result.trials[result.best_index].validation_nse) {
            result.best_index = i;
        }
    }
    return result;
}

}  // namespace hydrodeep
