#include "hydrodeep/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <stdexcept>

namespace hydrodeep {

namespace {

const char* const kKnownKeys[] = {
    "synth.seed",
    "synth.days",
    "synth.source.name",
    "synth.source.grids",
    "synth.climate.mean_precip_mm",
    "synth.climate.seasonal_amplitude",
    "synth.climate.seasonal_phase_days",
    "synth.climate.storm_rate",
    "synth.climate.storm_scale_mm",
    "synth.soil.capacity_mm",
    "synth.soil.threshold",
    "synth.soil.quickflow",
    "synth.soil.baseflow",
    "synth.routing.delay_per_unit",
    "synth.routing.noise",
    "arch.variant",
    "arch.conv",
    "arch.lstm",
    "arch.target_branch",
    "arch.head",
    "arch.seed",
    "train.iterations",
    "train.batch_size",
    "train.learning_rate",
    "train.beta1",
    "train.beta2",
    "train.epsilon",
    "train.seed",
    "transfer.iterations",
    "transfer.seed",
    "transfer.targets",
    "transfer.parallel_cells",
    "paths.run_dir",
};

// synth.target.<i>.name|grids|kind
bool is_target_key(const std::string& key, std::size_t* index, std::string* field) {
    const std::string prefix = "synth.target.";
    if (key.rfind(prefix, 0) != 0) return false;
    const std::size_t dot = key.find('.', prefix.size());
    if (dot == std::string::npos) return false;
    const std::string idx = key.substr(prefix.size(), dot - prefix.size());
    if (idx.empty() || !std::all_of(idx.begin(), idx.end(),
                                    [](unsigned char c) { return std::isdigit(c); })) {
        return false;
    }
    const std::string f = key.substr(dot + 1);
    if (f != "name" && f != "grids" && f != "kind") return false;
    if (index) *index = std::strtoull(idx.c_str(), nullptr, 10);
    if (field) *field = f;
    return true;
}

bool is_known_key(const std::string& key) {
    for (const char* k : kKnownKeys) {
        if (key == k) return true;
    }
    return is_target_key(key, nullptr, nullptr);
}

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text, const std::string& origin) {
    RunConfig config;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        std::string line = text.substr(start, nl == std::string::npos ? nl : nl - start);
        start = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": expected 'key = value', got '" + stripped + "'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": empty key");
        }
        if (!is_known_key(key)) {
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": unknown key '" + key + "'");
        }
        if (config.find(key)) {
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": duplicate key '" + key + "'");
        }
        config.entries_.emplace_back(key, value);
    }
    return config;
}

RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open config file " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_text(text, path.string());
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& [key, value] : entries_) {
        out += key;
        out += " = ";
        out += value;
        out += '\n';
    }
    return out;
}

std::string RunConfig::hash() const {
    const std::string bytes = serialize();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const std::string* RunConfig::find(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return &v;
    }
    return nullptr;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

bool RunConfig::has(const std::string& key) const { return find(key) != nullptr; }

std::string RunConfig::get_string(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw std::invalid_argument("config: missing required key '" + key + "'");
    return *v;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(v->c_str(), &end);
    if (end == v->c_str() || *end != '\0' || errno == ERANGE) {
        throw std::invalid_argument("config: key '" + key + "' has malformed number '" + *v +
                                    "'");
    }
    return x;
}

std::size_t RunConfig::get_size(const std::string& key, std::size_t fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    errno = 0;
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v->c_str(), &end, 10);
    if (end == v->c_str() || *end != '\0' || errno == ERANGE) {
        throw std::invalid_argument("config: key '" + key + "' has malformed integer '" + *v +
                                    "'");
    }
    return static_cast<std::size_t>(x);
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    if (*v == "true") return true;
    if (*v == "false") return false;
    throw std::invalid_argument("config: key '" + key + "' must be true or false, got '" + *v +
                                "'");
}

std::uint64_t RunConfig::get_seed(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw std::invalid_argument("config: missing required key '" + key + "'");
    errno = 0;
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v->c_str(), &end, 10);
    if (end == v->c_str() || *end != '\0' || errno == ERANGE) {
        throw std::invalid_argument("config: key '" + key + "' has malformed seed '" + *v +
                                    "'");
    }
    return x;
}

void RunConfig::override_seeds(std::uint64_t seed) {
    const std::string value = std::to_string(seed);
    set("synth.seed", value);
    set("arch.seed", value);
    set("train.seed", value);
    set("transfer.seed", value);
}

// ---------------------------------------------------------------------------
// Derived objects
// ---------------------------------------------------------------------------

SynthSpec source_spec_from_config(const RunConfig& config) {
    SynthSpec spec;
    spec.name = config.get_string("synth.source.name", "source");
    spec.grid_count = config.get_size("synth.source.grids", 29);
    spec.seed = config.get_seed("synth.seed");
    spec.days = config.get_size("synth.days", 6200);
    spec.climate.mean_precip_mm = config.get_double("synth.climate.mean_precip_mm", 3.0);
    spec.climate.seasonal_amplitude =
        config.get_double("synth.climate.seasonal_amplitude", 0.4);
    spec.climate.seasonal_phase_days =
        config.get_double("synth.climate.seasonal_phase_days", 90.0);
    spec.climate.storm_rate_per_day = config.get_double("synth.climate.storm_rate", 0.04);
    spec.climate.storm_scale_mm = config.get_double("synth.climate.storm_scale_mm", 4.0);
    spec.soil.capacity_mm = config.get_double("synth.soil.capacity_mm", 150.0);
    spec.soil.threshold = config.get_double("synth.soil.threshold", 0.4);
    spec.soil.quickflow_coeff = config.get_double("synth.soil.quickflow", 0.3);
    spec.soil.baseflow_coeff = config.get_double("synth.soil.baseflow", 0.05);
    spec.routing.delay_days_per_unit = config.get_double("synth.routing.delay_per_unit", 0.2);
    spec.routing.gauge_noise_frac = config.get_double("synth.routing.noise", 0.05);
    spec.validate();
    return spec;
}

std::vector<TargetDecl> target_decls_from_config(const RunConfig& config) {
    std::map<std::size_t, TargetDecl> by_index;
    for (const auto& [key, value] : config.entries()) {
        std::size_t index = 0;
        std::string field;
        if (!is_target_key(key, &index, &field)) continue;
        TargetDecl& decl = by_index[index];
        decl.index = index;
        if (field == "name") {
            decl.name = value;
        } else if (field == "grids") {
            errno = 0;
            char* end = nullptr;
            const unsigned long long g = std::strtoull(value.c_str(), &end, 10);
            if (end == value.c_str() || *end != '\0' || errno == ERANGE || g == 0) {
                throw std::invalid_argument("config: key '" + key +
                                            "' has malformed grid count '" + value + "'");
            }
            decl.grids = static_cast<std::size_t>(g);
        } else {
            decl.kind = value;
        }
    }
    std::vector<TargetDecl> decls;
    for (auto& [index, decl] : by_index) {
        if (decl.name.empty()) {
            throw std::invalid_argument("config: synth.target." + std::to_string(index) +
                                        ".name is missing");
        }
        if (decl.grids == 0) {
            throw std::invalid_argument("config: synth.target." + std::to_string(index) +
                                        ".grids is missing");
        }
        if (decl.kind != "related" && decl.kind != "distant") {
            throw std::invalid_argument("config: synth.target." + std::to_string(index) +
                                        ".kind must be related or distant, got '" + decl.kind +
                                        "'");
        }
        decls.push_back(std::move(decl));
    }
    return decls;
}

SynthSpec target_spec_from_config(const RunConfig& config, const TargetDecl& decl) {
    const SynthSpec source = source_spec_from_config(config);
    const std::uint64_t seed = derive_seed(source.seed, 0x7461ULL + decl.index);
    if (decl.kind == "related") {
        return make_related(source, decl.name, decl.grids, seed);
    }
    return make_distant(source, decl.name, decl.grids, seed);
}

ArchSpec arch_from_config(const RunConfig& config) {
    const std::string text = "variant=" + config.get_string("arch.variant", "hydrodeep") +
                             ";conv=" + config.get_string("arch.conv", "6x3,12x3") +
                             ";lstm=" + config.get_string("arch.lstm", "16") +
                             ";target_branch=" +
                             std::to_string(config.get_size("arch.target_branch", 4)) +
                             ";head=" + config.get_string("arch.head", "12,1");
    return ArchSpec::from_canonical_text(text);
}

namespace {

TrainConfig optimizer_from_config(const RunConfig& config) {
    TrainConfig tc;
    tc.batch_size = config.get_size("train.batch_size", 32);
    tc.learning_rate = config.get_double("train.learning_rate", 1e-3);
    tc.beta1 = config.get_double("train.beta1", 0.9);
    tc.beta2 = config.get_double("train.beta2", 0.999);
    tc.epsilon = config.get_double("train.epsilon", 1e-8);
    return tc;
}

}  // namespace

TrainConfig train_config_from_config(const RunConfig& config) {
    TrainConfig tc = optimizer_from_config(config);
    tc.iterations = config.get_size("train.iterations", 300);
    tc.seed = config.get_seed("train.seed");
    tc.validate();
    return tc;
}

TrainConfig transfer_config_from_config(const RunConfig& config) {
    TrainConfig tc = optimizer_from_config(config);
    tc.iterations = transfer_iterations_from_config(config);
    tc.seed = config.get_seed("transfer.seed");
    tc.validate();
    return tc;
}

std::size_t transfer_iterations_from_config(const RunConfig& config) {
    return config.get_size("transfer.iterations", 20);
}

std::vector<std::string> transfer_target_names(const RunConfig& config) {
    std::vector<std::string> names;
    if (config.has("transfer.targets")) {
        const std::string list = config.get_string("transfer.targets");
        std::size_t start = 0;
        while (start <= list.size()) {
            const std::size_t comma = list.find(',', start);
            const std::string item =
                trim(list.substr(start, comma == std::string::npos ? comma : comma - start));
            if (!item.empty()) names.push_back(item);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (names.empty()) {
            throw std::invalid_argument("config: transfer.targets is empty");
        }
        return names;
    }
    for (const TargetDecl& decl : target_decls_from_config(config)) {
        names.push_back(decl.name);
    }
    if (names.empty()) {
        throw std::invalid_argument(
            "config: no transfer targets (set transfer.targets or synth.target.*)");
    }
    return names;
}

}  // namespace hydrodeep
