#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hydrodeep/dataset.hpp"
#include "hydrodeep/layers.hpp"

namespace hydrodeep {

enum class ModelVariant { hydrodeep, cnn_only, lstm_only };

std::string_view to_string(ModelVariant v);
ModelVariant variant_from_string(const std::string& s);

struct ConvLayerSpec {
    std::size_t out_channels = 0;
    std::size_t kernel_size = 0;
};

/// Network topology. The seven-day window must survive the valid-padding
/// convolution stack and the head must end in a single output unit.
struct ArchSpec {
    ModelVariant variant = ModelVariant::hydrodeep;
    std::vector<ConvLayerSpec> conv_layers;
    std::vector<std::size_t> lstm_layers;
    std::size_t target_branch_units = 4;
    std::vector<std::size_t> head_units;

    void validate() const;

    /// Timesteps left after the conv stack: 7 - sum(K_i - 1).
    std::size_t conv_steps_out() const;
    /// Channel count of the sequence entering the LSTM stack (or flattened
    /// into the head for the cnn_only variant).
    std::size_t sequence_channels() const;
    std::size_t sequence_steps() const;
    std::size_t head_input_size() const;
    /// Closed-form total parameter count.
    std::size_t param_count() const;

    /// Canonical single-line text form, e.g.
    /// "variant=hydrodeep;conv=6x3,12x3;lstm=16;target_branch=4;head=12,1".
    std::string canonical_text() const;
    static ArchSpec from_canonical_text(const std::string& text);

    static ArchSpec default_arch();
};

/// The assembled network: conv/lstm/target_branch/head parameter groups.
/// The conv stack and the target branch are shared across grids and grid
/// features are mean-aggregated, so one model accepts watersheds of any
/// grid count.
struct Model {
    ArchSpec arch;
    std::uint64_t build_seed = 0;
    std::vector<Conv1dParams> conv;
    std::vector<LstmParams> lstm;
    DenseParams target_branch;
    std::vector<DenseParams> head;
};

/// The four parameter-group prefixes; freeze masks address these.
inline constexpr std::string_view kGroupConv = "conv";
inline constexpr std::string_view kGroupLstm = "lstm";
inline constexpr std::string_view kGroupTargetBranch = "target_branch";
inline constexpr std::string_view kGroupHead = "head";

struct ParamRef {
    std::string name;
    std::string_view group;
    Tensor* tensor;
};
struct ConstParamRef {
    std::string name;
    std::string_view group;
    const Tensor* tensor;
};

/// Canonical enumeration of all parameter tensors; order is fixed and is
/// the checkpoint serialization order.
std::vector<ParamRef> param_refs(Model& m);
std::vector<ConstParamRef> param_refs(const Model& m);

/// Throws if `groups` contains anything but the four known prefixes.
void validate_group_set(const std::set<std::string>& groups);

/// Seeded fan-based uniform initialization; biases zero except the LSTM
/// forget-gate block, which starts at 1.
Model build_model(const ArchSpec& arch, std::uint64_t seed);

/// Gradients for every model parameter, aligned with param_refs order.
struct ModelGrads {
    std::vector<Tensor> tensors;

    static ModelGrads shaped_like(const Model& m);
    void zero();
    void add(const ModelGrads& other);
};

/// Reusable forward state for one sample; resized on demand so a workspace
/// instance can be reused across samples without reallocating.
struct ModelCache {
    std::vector<Conv1dCache> conv;   // [grid * n_conv + layer]
    std::vector<Tensor> conv_post;   // post-relu outputs, same indexing
    Tensor features;                 // sequence entering the LSTM stack
    std::vector<Tensor> lstm_h0, lstm_c0;
    std::vector<LstmCache> lstm;
    std::vector<DenseCache> target_branch;  // per grid
    Tensor tb_mean;
    Tensor head_input;
    std::vector<DenseCache> head;
    Tensor grid_input;  // scratch
    Tensor tb_input;    // scratch
    std::size_t grid_count = 0;
    double prediction = 0.0;
    bool valid = false;
};

/// Which parameter groups need gradients; lets finetuning with frozen
/// groups skip the corresponding backward work.
struct GradRequest {
    bool conv = true;
    bool lstm = true;
    bool target_branch = true;
    bool head = true;

    static GradRequest from_frozen(const std::set<std::string>& frozen);
};

/// Predicted discharge (normalized units) for one sample.
double model_forward(const Model& m, const WindowedSample& sample);

/// Forward pass retaining state for model_backward.
double model_forward_cached(const Model& m, const WindowedSample& sample, ModelCache& cache);

/// Accumulates d(upstream * prediction)/d(params) into `grads` for every
/// requested group. `cache` must come from model_forward_cached on the same
/// model and sample.
void model_backward(const Model& m, const WindowedSample& sample, const ModelCache& cache,
                    double upstream, ModelGrads& grads, const GradRequest& request = {});

// ---------------------------------------------------------------------------
// Checkpoint format (binary, little-endian):
//   magic "HDC1" | u16 version | u32 arch text length + canonical arch text |
//   u32 parameter tensor count | per tensor: u16 name length + name,
//   u8 rank, u32 per dim, f64 row-major values.
// ---------------------------------------------------------------------------

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void save_checkpoint(const Model& m, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace hydrodeep
