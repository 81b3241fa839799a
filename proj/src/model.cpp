#include "hydrodeep/model.hpp"

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "hydrodeep/rng.hpp"

namespace hydrodeep {

std::string_view to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::hydrodeep: return "hydrodeep";
        case ModelVariant::cnn_only: return "cnn_only";
        case ModelVariant::lstm_only: return "lstm_only";
    }
    return "?";
}

ModelVariant variant_from_string(const std::string& s) {
    if (s == "hydrodeep") return ModelVariant::hydrodeep;
    if (s == "cnn_only") return ModelVariant::cnn_only;
    if (s == "lstm_only") return ModelVariant::lstm_only;
    throw std::invalid_argument("unknown model variant '" + s +
                                "', expected hydrodeep|cnn_only|lstm_only");
}

namespace {

constexpr std::size_t kWindowDays = 7;
constexpr std::size_t kInputChannels = 2;  // weighted precip, runoff

}  // namespace

void ArchSpec::validate() const {
    for (const ConvLayerSpec& c : conv_layers) {
        if (c.out_channels < 1 || c.kernel_size < 1) {
            throw std::invalid_argument("arch: conv layers need out_channels and kernel >= 1");
        }
    }
    for (std::size_t h : lstm_layers) {
        if (h < 1) throw std::invalid_argument("arch: lstm hidden sizes must be >= 1");
    }
    if (target_branch_units < 1) {
        throw std::invalid_argument("arch: target_branch_units must be >= 1");
    }
    if (head_units.empty() || head_units.back() != 1) {
        throw std::invalid_argument("arch: head must end in one output unit");
    }
    for (std::size_t u : head_units) {
        if (u < 1) throw std::invalid_argument("arch: head widths must be >= 1");
    }
    switch (variant) {
        case ModelVariant::hydrodeep:
            if (conv_layers.empty() || lstm_layers.empty()) {
                throw std::invalid_argument(
                    "arch: hydrodeep variant needs at least one conv and one lstm layer");
            }
            break;
        case ModelVariant::cnn_only:
            if (conv_layers.empty() || !lstm_layers.empty()) {
                throw std::invalid_argument(
                    "arch: cnn_only variant needs conv layers and no lstm layers");
            }
            break;
        case ModelVariant::lstm_only:
            if (!conv_layers.empty() || lstm_layers.empty()) {
                throw std::invalid_argument(
                    "arch: lstm_only variant needs lstm layers and no conv layers");
            }
            break;
    }
    std::size_t shrink = 0;
    for (const ConvLayerSpec& c : conv_layers) shrink += c.kernel_size - 1;
    if (shrink + 1 > kWindowDays) {
        throw std::invalid_argument("arch: conv kernels consume the whole " +
                                    std::to_string(kWindowDays) + "-day window (lose " +
                                    std::to_string(shrink) + " steps)");
    }
}

std::size_t ArchSpec::conv_steps_out() const {
    std::size_t t = kWindowDays;
    for (const ConvLayerSpec& c : conv_layers) t -= c.kernel_size - 1;
    return t;
}

std::size_t ArchSpec::sequence_channels() const {
    if (conv_layers.empty()) return kInputChannels;
    return conv_layers.back().out_channels;
}

std::size_t ArchSpec::sequence_steps() const { return conv_steps_out(); }

std::size_t ArchSpec::head_input_size() const {
    if (variant == ModelVariant::cnn_only) {
        return sequence_channels() * sequence_steps() + target_branch_units;
    }
    return lstm_layers.back() + target_branch_units;
}

std::size_t ArchSpec::param_count() const {
    std::size_t n = 0;
    std::size_t c_in = kInputChannels;
    for (const ConvLayerSpec& c : conv_layers) {
        n += c.out_channels * (c_in * c.kernel_size + 1);
        c_in = c.out_channels;
    }
    std::size_t seq_c = sequence_channels();
    for (std::size_t h : lstm_layers) {
        n += 4 * h * (seq_c + h + 1);
        seq_c = h;
    }
    n += target_branch_units * (kInputChannels + 1);
    std::size_t in = head_input_size();
    for (std::size_t u : head_units) {
        n += u * (in + 1);
        in = u;
    }
    return n;
}

std::string ArchSpec::canonical_text() const {
    std::string out = "variant=";
    out += to_string(variant);
    out += ";conv=";
    for (std::size_t i = 0; i < conv_layers.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(conv_layers[i].out_channels) + "x" +
               std::to_string(conv_layers[i].kernel_size);
    }
    out += ";lstm=";
    for (std::size_t i = 0; i < lstm_layers.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(lstm_layers[i]);
    }
    out += ";target_branch=" + std::to_string(target_branch_units);
    out += ";head=";
    for (std::size_t i = 0; i < head_units.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(head_units[i]);
    }
    return out;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t at = s.find(sep, start);
        if (at == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, at - start));
        start = at + 1;
    }
}

std::size_t parse_size(const std::string& s, const char* what) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE) {
        throw std::invalid_argument(std::string("arch text: malformed ") + what + " '" + s +
                                    "'");
    }
    return static_cast<std::size_t>(v);
}

}  // namespace

ArchSpec ArchSpec::from_canonical_text(const std::string& text) {
    ArchSpec arch;
    arch.head_units.clear();
    bool seen[5] = {};
    for (const std::string& part : split(text, ';')) {
        const std::size_t eq = part.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("arch text: missing '=' in '" + part + "'");
        }
        const std::string key = part.substr(0, eq);
        const std::string value = part.substr(eq + 1);
        if (key == "variant") {
            arch.variant = variant_from_string(value);
            seen[0] = true;
        } else if (key == "conv") {
            seen[1] = true;
            if (value.empty()) continue;
            for (const std::string& item : split(value, ',')) {
                const std::size_t x = item.find('x');
                if (x == std::string::npos) {
                    throw std::invalid_argument("arch text: conv layer '" + item +
                                                "' is not CHANNELSxKERNEL");
                }
                arch.conv_layers.push_back(
                    {parse_size(item.substr(0, x), "conv channels"),
                     parse_size(item.substr(x + 1), "conv kernel")});
            }
        } else if (key == "lstm") {
            seen[2] = true;
            if (value.empty()) continue;
            for (const std::string& item : split(value, ',')) {
                arch.lstm_layers.push_back(parse_size(item, "lstm width"));
            }
        } else if (key == "target_branch") {
            arch.target_branch_units = parse_size(value, "target_branch units");
            seen[3] = true;
        } else if (key == "head") {
            seen[4] = true;
            for (const std::string& item : split(value, ',')) {
                arch.head_units.push_back(parse_size(item, "head width"));
            }
        } else {
            throw std::invalid_argument("arch text: unknown key '" + key + "'");
        }
    }
    for (bool s : seen) {
        if (!s) throw std::invalid_argument("arch text: missing required key in '" + text + "'");
    }
    arch.validate();
    return arch;
}

ArchSpec ArchSpec::default_arch() {
    ArchSpec arch;
    arch.variant = ModelVariant::hydrodeep;
    arch.conv_layers = {{6, 3}, {12, 3}};  // 7 -> 5 -> 3 timesteps
    arch.lstm_layers = {16};
    arch.target_branch_units = 4;
    arch.head_units = {12, 1};
    return arch;
}

// ---------------------------------------------------------------------------
// Parameter enumeration
// ---------------------------------------------------------------------------

namespace {

template <typename ModelT, typename Fn>
void visit_params(ModelT& m, Fn&& fn) {
    for (std::size_t i = 0; i < m.conv.size(); ++i) {
        const std::string base = "conv." + std::to_string(i) + ".";
        fn(base + "kernel", kGroupConv, m.conv[i].kernel);
        fn(base + "bias", kGroupConv, m.conv[i].bias);
    }
    for (std::size_t i = 0; i < m.lstm.size(); ++i) {
        const std::string base = "lstm." + std::to_string(i) + ".";
        fn(base + "w_input", kGroupLstm, m.lstm[i].w_input);
        fn(base + "w_recur", kGroupLstm, m.lstm[i].w_recur);
        fn(base + "bias", kGroupLstm, m.lstm[i].bias);
    }
    fn("target_branch.0.weight", kGroupTargetBranch, m.target_branch.weight);
    fn("target_branch.0.bias", kGroupTargetBranch, m.target_branch.bias);
    for (std::size_t i = 0; i < m.head.size(); ++i) {
        const std::string base = "head." + std::to_string(i) + ".";
        fn(base + "weight", kGroupHead, m.head[i].weight);
        fn(base + "bias", kGroupHead, m.head[i].bias);
    }
}

}  // namespace

std::vector<ParamRef> param_refs(Model& m) {
    std::vector<ParamRef> refs;
    visit_params(m, [&](std::string name, std::string_view group, Tensor& t) {
        refs.push_back({std::move(name), group, &t});
    });
    return refs;
}

std::vector<ConstParamRef> param_refs(const Model& m) {
    std::vector<ConstParamRef> refs;
    visit_params(m, [&](std::string name, std::string_view group, const Tensor& t) {
        refs.push_back({std::move(name), group, &t});
    });
    return refs;
}

void validate_group_set(const std::set<std::string>& groups) {
    for (const std::string& g : groups) {
        if (g != kGroupConv && g != kGroupLstm && g != kGroupTargetBranch && g != kGroupHead) {
            throw std::invalid_argument("unknown parameter group '" + g +
                                        "', expected conv|lstm|target_branch|head");
        }
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace {

Model make_shell(const ArchSpec& arch) {
    arch.validate();
    Model m;
    m.arch = arch;
    std::size_t c_in = kInputChannels;
    for (const ConvLayerSpec& c : arch.conv_layers) {
        Conv1dParams p;
        p.kernel = Tensor({c.out_channels, c_in, c.kernel_size});
        p.bias = Tensor({c.out_channels});
        m.conv.push_back(std::move(p));
        c_in = c.out_channels;
    }
    std::size_t seq_c = arch.sequence_channels();
    for (std::size_t h : arch.lstm_layers) {
        LstmParams p;
        p.w_input = Tensor({4 * h, seq_c});
        p.w_recur = Tensor({4 * h, h});
        p.bias = Tensor({4 * h});
        m.lstm.push_back(std::move(p));
        seq_c = h;
    }
    m.target_branch.weight = Tensor({arch.target_branch_units, kInputChannels});
    m.target_branch.bias = Tensor({arch.target_branch_units});
    std::size_t in = arch.head_input_size();
    for (std::size_t u : arch.head_units) {
        DenseParams p;
        p.weight = Tensor({u, in});
        p.bias = Tensor({u});
        m.head.push_back(std::move(p));
        in = u;
    }
    return m;
}

void init_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
}

}  // namespace

Model build_model(const ArchSpec& arch, std::uint64_t seed) {
    Model m = make_shell(arch);
    m.build_seed = seed;
    Rng rng(seed);
    std::size_t c_in = kInputChannels;
    for (std::size_t i = 0; i < m.conv.size(); ++i) {
        const std::size_t c_out = arch.conv_layers[i].out_channels;
        const std::size_t k = arch.conv_layers[i].kernel_size;
        init_uniform(m.conv[i].kernel, c_in * k, c_out * k, rng);
        c_in = c_out;
    }
    std::size_t seq_c = arch.sequence_channels();
    for (std::size_t i = 0; i < m.lstm.size(); ++i) {
        const std::size_t h = arch.lstm_layers[i];
        init_uniform(m.lstm[i].w_input, seq_c, 4 * h, rng);
        init_uniform(m.lstm[i].w_recur, h, 4 * h, rng);
        // Forget-gate block starts open.
        for (std::size_t j = 0; j < h; ++j) m.lstm[i].bias[h + j] = 1.0;
        seq_c = h;
    }
    init_uniform(m.target_branch.weight, kInputChannels, arch.target_branch_units, rng);
    std::size_t in = arch.head_input_size();
    for (std::size_t i = 0; i < m.head.size(); ++i) {
        init_uniform(m.head[i].weight, in, arch.head_units[i], rng);
        in = arch.head_units[i];
    }
    return m;
}

ModelGrads ModelGrads::shaped_like(const Model& m) {
    ModelGrads g;
    for (const ConstParamRef& ref : param_refs(m)) {
        g.tensors.emplace_back(ref.tensor->dims());
    }
    return g;
}

void ModelGrads::zero() {
    for (Tensor& t : tensors) t.fill(0.0);
}

void ModelGrads::add(const ModelGrads& other) {
    if (other.tensors.size() != tensors.size()) {
        throw std::invalid_argument("gradient accumulation: tensor count mismatch");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        Tensor& dst = tensors[i];
        const Tensor& src = other.tensors[i];
        if (!dst.same_shape(src)) {
            throw std::invalid_argument("gradient accumulation: shape mismatch at tensor " +
                                        std::to_string(i));
        }
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
}

GradRequest GradRequest::from_frozen(const std::set<std::string>& frozen) {
    validate_group_set(frozen);
    GradRequest r;
    r.conv = !frozen.contains(std::string(kGroupConv));
    r.lstm = !frozen.contains(std::string(kGroupLstm));
    r.target_branch = !frozen.contains(std::string(kGroupTargetBranch));
    r.head = !frozen.contains(std::string(kGroupHead));
    return r;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

void check_sample(const WindowedSample& sample) {
    if (sample.history.rank() != 3 || sample.history.dims()[1] != kInputChannels ||
        sample.history.dims()[2] != kWindowDays) {
        throw std::invalid_argument("sample history must be [L x 2 x 7], got " +
                                    shape_string(sample.history.dims()));
    }
    const std::size_t l = sample.history.dims()[0];
    if (sample.target_day.dims() != std::vector<std::size_t>{l, kInputChannels}) {
        throw std::invalid_argument("sample target_day must be [L x 2], got " +
                                    shape_string(sample.target_day.dims()));
    }
}

void relu_into(const Tensor& pre, Tensor& post) {
    post.reset(pre.dims());
    for (std::size_t i = 0; i < pre.size(); ++i) {
        const double v = pre[i];
        post[i] = v < 0.0 ? 0.0 : v;
    }
}

// Gradient tensor indices within ModelGrads (param_refs order).
struct GradIndex {
    std::size_t n_conv;
    std::size_t n_lstm;

    std::size_t conv_kernel(std::size_t i) const { return 2 * i; }
    std::size_t conv_bias(std::size_t i) const { return 2 * i + 1; }
    std::size_t lstm_w_input(std::size_t j) const { return 2 * n_conv + 3 * j; }
    std::size_t lstm_w_recur(std::size_t j) const { return 2 * n_conv + 3 * j + 1; }
    std::size_t lstm_bias(std::size_t j) const { return 2 * n_conv + 3 * j + 2; }
    std::size_t tb_weight() const { return 2 * n_conv + 3 * n_lstm; }
    std::size_t tb_bias() const { return 2 * n_conv + 3 * n_lstm + 1; }
    std::size_t head_weight(std::size_t k) const { return 2 * n_conv + 3 * n_lstm + 2 + 2 * k; }
    std::size_t head_bias(std::size_t k) const { return 2 * n_conv + 3 * n_lstm + 3 + 2 * k; }
};

}  // namespace

double model_forward_cached(const Model& m, const WindowedSample& sample, ModelCache& cache) {
    check_sample(sample);
    const std::size_t l = sample.history.dims()[0];
    const std::size_t n_conv = m.conv.size();
    const ModelVariant variant = m.arch.variant;
    cache.grid_count = l;

    if (variant == ModelVariant::lstm_only) {
        // Per-day grid mean of the raw channels.
        cache.features.reset_zero({kInputChannels, kWindowDays});
        for (std::size_t g = 0; g < l; ++g) {
            const double* hist = sample.history.data() + g * kInputChannels * kWindowDays;
            for (std::size_t i = 0; i < kInputChannels * kWindowDays; ++i) {
                cache.features[i] += hist[i];
            }
        }
        const double inv_l = 1.0 / static_cast<double>(l);
        for (std::size_t i = 0; i < cache.features.size(); ++i) cache.features[i] *= inv_l;
    } else {
        cache.conv.resize(l * n_conv);
        cache.conv_post.resize(l * n_conv);
        for (std::size_t g = 0; g < l; ++g) {
            const double* hist = sample.history.data() + g * kInputChannels * kWindowDays;
            cache.grid_input.reset({kInputChannels, kWindowDays});
            std::copy(hist, hist + kInputChannels * kWindowDays, cache.grid_input.data());
            const Tensor* cur = &cache.grid_input;
            for (std::size_t j = 0; j < n_conv; ++j) {
                Conv1dCache& cc = cache.conv[g * n_conv + j];
                conv1d_run(*cur, m.conv[j], cc);
                Tensor& post = cache.conv_post[g * n_conv + j];
                relu_into(cc.output, post);
                cur = &post;
            }
            if (g == 0) {
                cache.features.reset_zero(cur->dims());
            }
            for (std::size_t i = 0; i < cur->size(); ++i) cache.features[i] += (*cur)[i];
        }
        const double inv_l = 1.0 / static_cast<double>(l);
        for (std::size_t i = 0; i < cache.features.size(); ++i) cache.features[i] *= inv_l;
    }

    const Tensor* seq_out = &cache.features;
    if (variant != ModelVariant::cnn_only) {
        const std::size_t n_lstm = m.lstm.size();
        cache.lstm.resize(n_lstm);
        cache.lstm_h0.resize(n_lstm);
        cache.lstm_c0.resize(n_lstm);
        const Tensor* seq = &cache.features;
        for (std::size_t j = 0; j < n_lstm; ++j) {
            const std::size_t h = m.lstm[j].hidden_size();
            cache.lstm_h0[j].reset_zero({h});
            cache.lstm_c0[j].reset_zero({h});
            lstm_run(*seq, m.lstm[j], cache.lstm_h0[j], cache.lstm_c0[j], cache.lstm[j]);
            seq = &cache.lstm[j].hidden;
        }
        seq_out = seq;
    }

    // Target-day branch, shared across grids, mean-aggregated.
    const std::size_t u = m.arch.target_branch_units;
    cache.target_branch.resize(l);
    cache.tb_mean.reset_zero({u});
    for (std::size_t g = 0; g < l; ++g) {
        cache.tb_input.reset({kInputChannels});
        cache.tb_input[0] = sample.target_day[g * 2];
        cache.tb_input[1] = sample.target_day[g * 2 + 1];
        dense_run(cache.tb_input, m.target_branch, Activation::relu, cache.target_branch[g]);
        const Tensor& out = cache.target_branch[g].output;
        for (std::size_t i = 0; i < u; ++i) cache.tb_mean[i] += out[i];
    }
    const double inv_l = 1.0 / static_cast<double>(l);
    for (std::size_t i = 0; i < u; ++i) cache.tb_mean[i] *= inv_l;

    // Concatenate sequence summary with the target branch.
    cache.head_input.reset({m.arch.head_input_size()});
    std::size_t at = 0;
    if (variant == ModelVariant::cnn_only) {
        for (std::size_t i = 0; i < cache.features.size(); ++i) {
            cache.head_input[at++] = cache.features[i];
        }
    } else {
        const Tensor& hidden = *seq_out;
        const std::size_t h = hidden.dims()[0];
        const std::size_t t_len = hidden.dims()[1];
        for (std::size_t j = 0; j < h; ++j) {
            cache.head_input[at++] = hidden[j * t_len + (t_len - 1)];
        }
    }
    for (std::size_t i = 0; i < u; ++i) cache.head_input[at++] = cache.tb_mean[i];

    const std::size_t n_head = m.head.size();
    cache.head.resize(n_head);
    const Tensor* hin = &cache.head_input;
    for (std::size_t k = 0; k < n_head; ++k) {
        const Activation act = (k + 1 < n_head) ? Activation::relu : Activation::identity;
        dense_run(*hin, m.head[k], act, cache.head[k]);
        hin = &cache.head[k].output;
    }
    cache.prediction = (*hin)[0];
    cache.valid = true;
    return cache.prediction;
}

double model_forward(const Model& m, const WindowedSample& sample) {
    ModelCache cache;
    return model_forward_cached(m, sample, cache);
}

void model_backward(const Model& m, const WindowedSample& sample, const ModelCache& cache,
                    double upstream, ModelGrads& grads, const GradRequest& request) {
    if (!cache.valid) {
        throw std::invalid_argument("model_backward: forward cache missing");
    }
    check_sample(sample);
    const std::size_t l = cache.grid_count;
    const double inv_l = 1.0 / static_cast<double>(l);
    const ModelVariant variant = m.arch.variant;
    const std::size_t n_conv = m.conv.size();
    const std::size_t n_lstm = m.lstm.size();
    const std::size_t n_head = m.head.size();
    const GradIndex gi{n_conv, n_lstm};

    const bool need_conv = request.conv && n_conv > 0;
    const bool need_lstm = request.lstm && n_lstm > 0;
    const bool need_tb = request.target_branch;
    const bool need_head = request.head;
    const bool below_head = need_tb || need_lstm || need_conv;
    if (!below_head && !need_head) return;

    // Head chain.
    Tensor d_cur({1});
    d_cur[0] = upstream;
    Tensor d_prev;
    for (std::size_t k = n_head; k-- > 0;) {
        const bool want_input = (k > 0) || below_head;
        dense_backward_acc(m.head[k], cache.head[k], d_cur,
                           need_head ? &grads.tensors[gi.head_weight(k)] : nullptr,
                           need_head ? &grads.tensors[gi.head_bias(k)] : nullptr,
                           want_input ? &d_prev : nullptr);
        if (!want_input) break;
        std::swap(d_cur, d_prev);
    }
    if (!below_head) return;
    // d_cur now holds the head-input gradient.

    const std::size_t u = m.arch.target_branch_units;
    const std::size_t seq_part = m.arch.head_input_size() - u;

    if (need_tb) {
        // Mean aggregation: every grid sees the same upstream slice / L.
        Tensor d_tb({u});
        for (std::size_t i = 0; i < u; ++i) d_tb[i] = d_cur[seq_part + i] * inv_l;
        for (std::size_t g = 0; g < l; ++g) {
            dense_backward_acc(m.target_branch, cache.target_branch[g], d_tb,
                               &grads.tensors[gi.tb_weight()], &grads.tensors[gi.tb_bias()],
                               nullptr);
        }
    }

    const bool conv_path = need_conv && variant != ModelVariant::lstm_only;
    Tensor d_features;
    bool have_d_features = false;

    if (variant == ModelVariant::cnn_only) {
        if (conv_path) {
            d_features.reset(cache.features.dims());
            std::copy(d_cur.data(), d_cur.data() + seq_part, d_features.data());
            have_d_features = true;
        }
    } else if (need_lstm || conv_path) {
        // Upstream reaches only the last hidden state of the top layer.
        const std::size_t h_top = m.lstm.back().hidden_size();
        const std::size_t t_len = cache.lstm.back().hidden.dims()[1];
        Tensor d_hidden({h_top, t_len});
        for (std::size_t j = 0; j < h_top; ++j) {
            d_hidden[j * t_len + (t_len - 1)] = d_cur[j];
        }
        Tensor d_seq;
        for (std::size_t j = n_lstm; j-- > 0;) {
            const bool want_input = (j > 0) || conv_path;
            lstm_backward_acc(m.lstm[j], cache.lstm[j], d_hidden,
                              need_lstm ? &grads.tensors[gi.lstm_w_input(j)] : nullptr,
                              need_lstm ? &grads.tensors[gi.lstm_w_recur(j)] : nullptr,
                              need_lstm ? &grads.tensors[gi.lstm_bias(j)] : nullptr,
                              want_input ? &d_seq : nullptr);
            if (!want_input) break;
            std::swap(d_hidden, d_seq);
        }
        if (conv_path) {
            d_features = std::move(d_hidden);
            have_d_features = true;
        }
    }

    if (conv_path && have_d_features) {
        for (std::size_t i = 0; i < d_features.size(); ++i) d_features[i] *= inv_l;
        Tensor d_pre;
        Tensor d_in;
        for (std::size_t g = 0; g < l; ++g) {
            const Tensor* d_post = &d_features;
            for (std::size_t j = n_conv; j-- > 0;) {
                const Conv1dCache& cc = cache.conv[g * n_conv + j];
                d_pre.reset(cc.output.dims());
                for (std::size_t i = 0; i < d_pre.size(); ++i) {
                    d_pre[i] = cc.output[i] > 0.0 ? (*d_post)[i] : 0.0;
                }
                const bool want_input = j > 0;
                conv1d_backward_acc(m.conv[j], cc, d_pre, &grads.tensors[gi.conv_kernel(j)],
                                    &grads.tensors[gi.conv_bias(j)],
                                    want_input ? &d_in : nullptr);
                d_post = &d_in;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'H', 'D', 'C', '1'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    std::size_t at = 0;

    void need(std::size_t n) const {
        if (at + n > buf.size()) {
            throw CheckpointError("truncated checkpoint: wanted " + std::to_string(n) +
                                  " bytes at offset " + std::to_string(at) + ", file has " +
                                  std::to_string(buf.size()));
        }
    }
    std::uint16_t u16() {
        need(2);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + at);
        at += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32() {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + at);
        at += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) |
               (static_cast<std::uint32_t>(p[3]) << 24);
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[at++]);
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + at);
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        at += 8;
        return std::bit_cast<double>(bits);
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(at, n);
        at += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const Model& m, const std::filesystem::path& path) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put_u16(buf, kVersion);
    const std::string arch = m.arch.canonical_text();
    put_u32(buf, static_cast<std::uint32_t>(arch.size()));
    buf += arch;

    const auto refs = param_refs(m);
    put_u32(buf, static_cast<std::uint32_t>(refs.size()));
    for (const ConstParamRef& ref : refs) {
        put_u16(buf, static_cast<std::uint16_t>(ref.name.size()));
        buf += ref.name;
        buf.push_back(static_cast<char>(ref.tensor->rank()));
        for (std::size_t d : ref.tensor->dims()) {
            put_u32(buf, static_cast<std::uint32_t>(d));
        }
        for (std::size_t i = 0; i < ref.tensor->size(); ++i) put_f64(buf, (*ref.tensor)[i]);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw CheckpointError("failed writing checkpoint: " + path.string());
    }
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint: " + path.string());
    }
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{buf};

    r.need(sizeof(kMagic));
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError("bad checkpoint magic in " + path.string() +
                              ", expected 'HDC1'");
    }
    r.at = sizeof(kMagic);
    const std::uint16_t version = r.u16();
    if (version != kVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                              ", expected " + std::to_string(kVersion));
    }

    const std::uint32_t arch_len = r.u32();
    const std::string arch_text = r.bytes(arch_len);
    ArchSpec arch;
    try {
        arch = ArchSpec::from_canonical_text(arch_text);
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("invalid architecture text: ") + e.what());
    }

    Model m = make_shell(arch);
    auto refs = param_refs(m);
    const std::uint32_t count = r.u32();
    if (count != refs.size()) {
        throw CheckpointError("checkpoint shape inconsistency: " + std::to_string(count) +
                              " parameter tensors, architecture expects " +
                              std::to_string(refs.size()));
    }
    for (ParamRef& ref : refs) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.bytes(name_len);
        if (name != ref.name) {
            throw CheckpointError("checkpoint shape inconsistency: parameter '" + name +
                                  "' where '" + ref.name + "' was expected");
        }
        const std::uint8_t rank = r.u8();
        if (rank != ref.tensor->rank()) {
            throw CheckpointError("checkpoint shape inconsistency: '" + name + "' has rank " +
                                  std::to_string(rank) + ", expected " +
                                  std::to_string(ref.tensor->rank()));
        }
        std::vector<std::size_t> dims(rank);
        for (std::uint8_t d = 0; d < rank; ++d) dims[d] = r.u32();
        if (dims != ref.tensor->dims()) {
            throw CheckpointError("checkpoint shape inconsistency: '" + name + "' has shape " +
                                  shape_string(dims) + ", expected " +
                                  shape_string(ref.tensor->dims()));
        }
        for (std::size_t i = 0; i < ref.tensor->size(); ++i) {
            const double v = r.f64();
            if (!std::isfinite(v)) {
                throw CheckpointError("non-finite parameter value in '" + name + "'");
            }
            (*ref.tensor)[i] = v;
        }
    }
    if (r.at != buf.size()) {
        throw CheckpointError("trailing bytes after checkpoint payload (" +
                              std::to_string(buf.size() - r.at) + " extra)");
    }
    return m;
}

}  // namespace hydrodeep
