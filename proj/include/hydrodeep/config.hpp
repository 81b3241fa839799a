#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hydrodeep/model.hpp"
#include "hydrodeep/synth.hpp"
#include "hydrodeep/train.hpp"

namespace hydrodeep {

/// Flat `key = value` run configuration. Keys are validated against the
/// documented schema at parse time; unknown keys are rejected. Blank lines
/// and lines starting with '#' are ignored.
class RunConfig {
public:
    static RunConfig parse_file(const std::filesystem::path& path);
    static RunConfig parse_text(const std::string& text, const std::string& origin);

    /// `key = value` lines in first-seen order; parse(serialize()) is the
    /// identity on the key-value map.
    std::string serialize() const;

    /// FNV-1a hash of the serialized form, as "0x..." hex.
    std::string hash() const;

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;  // throws if missing
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Seeds are always explicit: throws "missing required key" if absent.
    std::uint64_t get_seed(const std::string& key) const;

    /// --seed override: rewrites every *.seed key.
    void override_seeds(std::uint64_t seed);

    const std::vector<std::pair<std::string, std::string>>& entries() const {
        return entries_;
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;

    const std::string* find(const std::string& key) const;
    void set(const std::string& key, const std::string& value);
};

/// One declared synthetic target watershed.
struct TargetDecl {
    std::size_t index = 0;
    std::string name;
    std::size_t grids = 0;
    std::string kind;  // "related" or "distant"
};

/// Source-watershed spec assembled from the synth.* keys.
SynthSpec source_spec_from_config(const RunConfig& config);

/// Declared synth.target.<i>.* entries, ordered by index.
std::vector<TargetDecl> target_decls_from_config(const RunConfig& config);

/// Spec for one declared target, derived from the source spec via the
/// related/distant perturbation rules.
SynthSpec target_spec_from_config(const RunConfig& config, const TargetDecl& decl);

ArchSpec arch_from_config(const RunConfig& config);

/// train.* keys; seed comes from train.seed.
TrainConfig train_config_from_config(const RunConfig& config);

/// Same optimizer settings but transfer.seed; iteration count is
/// transfer.iterations.
TrainConfig transfer_config_from_config(const RunConfig& config);

std::size_t transfer_iterations_from_config(const RunConfig& config);

/// Target names for cmd_transfer: transfer.targets if set (comma-separated),
/// otherwise the declared synth targets.
std::vector<std::string> transfer_target_names(const RunConfig& config);

}  // namespace hydrodeep
