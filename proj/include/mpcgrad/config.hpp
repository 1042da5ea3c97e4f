#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mpcgrad/types.hpp"

namespace mpcgrad {

enum class ExperimentKind { Fig1, Fig3, Lemma2Scaling, Theorem2Moments, RmpcLimit, SolverCorpus };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Fig1: return "fig1";
        case ExperimentKind::Fig3: return "fig3";
        case ExperimentKind::Lemma2Scaling: return "lemma2_scaling";
        case ExperimentKind::Theorem2Moments: return "theorem2_moments";
        case ExperimentKind::RmpcLimit: return "rmpc_limit";
        case ExperimentKind::SolverCorpus: return "solver_corpus";
    }
    return "?";
}

inline ExperimentKind parse_experiment(const std::string& name) {
    if (name == "fig1") return ExperimentKind::Fig1;
    if (name == "fig3") return ExperimentKind::Fig3;
    if (name == "lemma2_scaling") return ExperimentKind::Lemma2Scaling;
    if (name == "theorem2_moments") return ExperimentKind::Theorem2Moments;
    if (name == "rmpc_limit") return ExperimentKind::RmpcLimit;
    if (name == "solver_corpus") return ExperimentKind::SolverCorpus;
    throw ConfigError("unknown experiment '" + name + "'");
}

namespace config_detail {

enum class ValueType { Int, Real, Bool, Str, RealList };

struct SchemaEntry {
    ValueType type;
    std::string default_value;
};

using Schema = std::map<std::string, SchemaEntry>;

inline Schema schema_for(ExperimentKind kind) {
    Schema s;
    s["seed"] = {ValueType::Int, "20240801"};
    switch (kind) {
        case ExperimentKind::Fig1:
            s["theta"] = {ValueType::Real, "0.5"};
            s["eta_bar"] = {ValueType::Real, "0.05"};
            s["grid_points"] = {ValueType::Int, "201"};
            s["draws_per_state"] = {ValueType::Int, "2000"};
            s["horizon"] = {ValueType::Int, "20"};  // not fixed by the benchmark
            s["terminal_constraint"] = {ValueType::Bool, "true"};
            s["tighten_terminal"] = {ValueType::Bool, "true"};
            s["slack_weight"] = {ValueType::Real, "1000.0"};
            s["norm_smoothing"] = {ValueType::Real, "1e-9"};
            s["dp_state_points"] = {ValueType::Int, "401"};
            s["dp_action_points"] = {ValueType::Int, "401"};
            s["dp_tol"] = {ValueType::Real, "1e-9"};
            break;
        case ExperimentKind::Fig3:
            s["theta0"] = {ValueType::Real, "0.1"};
            s["eta_bar"] = {ValueType::Real, "0.05"};        // not fixed by the benchmark
            s["iterations"] = {ValueType::Int, "8"};         // not fixed by the benchmark
            s["step_size"] = {ValueType::Real, "0.001"};     // not fixed by the benchmark
            s["batch_trajectories"] = {ValueType::Int, "32"};
            s["trajectory_length"] = {ValueType::Int, "150"};
            s["samples_per_trajectory"] = {ValueType::Int, "5"};
            s["q_rollouts"] = {ValueType::Int, "2"};
            s["rollout_horizon"] = {ValueType::Int, "150"};
            s["oracle_delta"] = {ValueType::Real, "0.001"};
            s["oracle_rollouts"] = {ValueType::Int, "64"};
            s["policy_kind"] = {ValueType::Str, "rmpc"};
            s["slack_weight"] = {ValueType::Real, "1000.0"};
            break;
        case ExperimentKind::Lemma2Scaling:
            s["theta"] = {ValueType::Real, "0.5"};
            s["radii"] = {ValueType::RealList, "0.2,0.1,0.05,0.025"};
            s["grid_points"] = {ValueType::Int, "41"};
            s["draws"] = {ValueType::Int, "10000"};
            s["horizon"] = {ValueType::Int, "20"};
            s["terminal_constraint"] = {ValueType::Bool, "true"};
            s["tighten_terminal"] = {ValueType::Bool, "true"};
            s["slack_weight"] = {ValueType::Real, "1000.0"};
            s["norm_smoothing"] = {ValueType::Real, "1e-9"};
            break;
        case ExperimentKind::Theorem2Moments:
            s["theta"] = {ValueType::Real, "0.5"};
            s["eta_bars"] = {ValueType::RealList, "0.1,0.05,0.01"};
            s["states"] = {ValueType::RealList, "0.85,0.9,0.95"};
            s["draws"] = {ValueType::Int, "100000"};
            s["horizon"] = {ValueType::Int, "20"};
            s["terminal_constraint"] = {ValueType::Bool, "true"};
            s["tighten_terminal"] = {ValueType::Bool, "true"};
            s["slack_weight"] = {ValueType::Real, "1000.0"};
            s["norm_smoothing"] = {ValueType::Real, "1e-9"};
            break;
        case ExperimentKind::RmpcLimit:
            s["theta"] = {ValueType::Real, "0.5"};
            s["eta_bars"] = {ValueType::RealList, "0.1,0.05,0.025,0.0125"};
            s["grid_points"] = {ValueType::Int, "201"};
            s["horizon"] = {ValueType::Int, "20"};
            s["terminal_constraint"] = {ValueType::Bool, "true"};
            s["tighten_terminal"] = {ValueType::Bool, "true"};
            s["slack_weight"] = {ValueType::Real, "1000.0"};
            s["norm_smoothing"] = {ValueType::Real, "1e-9"};
            break;
        case ExperimentKind::SolverCorpus:
            break;
    }
    return s;
}

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

inline void check_value(const std::string& key, const SchemaEntry& entry, const std::string& raw) {
    const std::string v = trim(raw);
    auto fail = [&](const char* what) {
        throw ConfigError("key '" + key + "': expected " + what + ", got '" + raw + "'");
    };
    switch (entry.type) {
        case ValueType::Int: {
            char* end = nullptr;
            (void)std::strtoll(v.c_str(), &end, 10);
            if (v.empty() || *end != '\0') fail("an integer");
            break;
        }
        case ValueType::Real: {
            char* end = nullptr;
            (void)std::strtod(v.c_str(), &end);
            if (v.empty() || *end != '\0') fail("a real number");
            break;
        }
        case ValueType::Bool:
            if (v != "true" && v != "false" && v != "0" && v != "1") fail("a boolean");
            break;
        case ValueType::Str:
            break;
        case ValueType::RealList: {
            std::stringstream ss(v);
            std::string item;
            int count = 0;
            while (std::getline(ss, item, ',')) {
                char* end = nullptr;
                const std::string t = trim(item);
                (void)std::strtod(t.c_str(), &end);
                if (t.empty() || *end != '\0') fail("a comma-separated list of reals");
                ++count;
            }
            if (count == 0) fail("a nonempty list of reals");
            break;
        }
    }
}

}  // namespace config_detail

/// Typed flat key-value configuration of one experiment. Values come from
/// (in increasing precedence) schema defaults, a config file, --set overrides
/// and the --seed flag; unknown keys are rejected.
class ExperimentConfig {
public:
    static ExperimentConfig load(
        ExperimentKind kind, const std::optional<std::string>& path = std::nullopt,
        const std::vector<std::pair<std::string, std::string>>& overrides = {},
        std::optional<std::uint64_t> seed_override = std::nullopt) {
        ExperimentConfig cfg;
        cfg.kind_ = kind;
        cfg.schema_ = config_detail::schema_for(kind);
        for (const auto& [key, entry] : cfg.schema_) cfg.values_[key] = entry.default_value;

        if (path) {
            std::ifstream in(*path);
            if (!in) throw ConfigError("cannot read config file '" + *path + "'");
            std::string line;
            int line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                const auto hash = line.find('#');
                if (hash != std::string::npos) line = line.substr(0, hash);
                line = config_detail::trim(line);
                if (line.empty()) continue;
                const auto eq = line.find('=');
                if (eq == std::string::npos)
                    throw ConfigError("config line " + std::to_string(line_no) +
                                      ": expected key = value");
                cfg.set(config_detail::trim(line.substr(0, eq)),
                        config_detail::trim(line.substr(eq + 1)));
            }
        }
        for (const auto& [key, value] : overrides) cfg.set(key, value);
        if (seed_override) cfg.values_["seed"] = std::to_string(*seed_override);
        return cfg;
    }

    [[nodiscard]] ExperimentKind kind() const { return kind_; }
    [[nodiscard]] std::uint64_t seed() const {
        return static_cast<std::uint64_t>(std::strtoull(values_.at("seed").c_str(), nullptr, 10));
    }
    [[nodiscard]] long long get_int(const std::string& key) const {
        require(key, config_detail::ValueType::Int);
        return std::strtoll(values_.at(key).c_str(), nullptr, 10);
    }
    [[nodiscard]] double get_real(const std::string& key) const {
        require(key, config_detail::ValueType::Real);
        return std::strtod(values_.at(key).c_str(), nullptr);
    }
    [[nodiscard]] bool get_bool(const std::string& key) const {
        require(key, config_detail::ValueType::Bool);
        const std::string& v = values_.at(key);
        return v == "true" || v == "1";
    }
    [[nodiscard]] std::string get_str(const std::string& key) const {
        require(key, config_detail::ValueType::Str);
        return values_.at(key);
    }
    [[nodiscard]] std::vector<double> get_list(const std::string& key) const {
        require(key, config_detail::ValueType::RealList);
        std::vector<double> out;
        std::stringstream ss(values_.at(key));
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(std::strtod(item.c_str(), nullptr));
        return out;
    }

    void set(const std::string& key, const std::string& value) {
        if (key == "experiment") {
            if (parse_experiment(config_detail::trim(value)) != kind_)
                throw ConfigError("config file is for experiment '" + value + "', not '" +
                                  to_string(kind_) + "'");
            return;
        }
        const auto it = schema_.find(key);
        if (it == schema_.end())
            throw ConfigError("unknown key '" + key + "' for experiment " + to_string(kind_));
        config_detail::check_value(key, it->second, value);
        values_[key] = config_detail::trim(value);
    }

    /// Every run writes the fully resolved configuration next to its outputs.
    void write_resolved(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path);
        out << "# resolved configuration\n";
        out << "experiment = " << to_string(kind_) << "\n";
        for (const auto& [key, value] : values_) out << key << " = " << value << "\n";
    }

private:
    void require(const std::string& key, config_detail::ValueType type) const {
        const auto it = schema_.find(key);
        if (it == schema_.end() || it->second.type != type)
            throw ConfigError("config key '" + key + "' missing or of unexpected type");
    }

    ExperimentKind kind_ = ExperimentKind::SolverCorpus;
    config_detail::Schema schema_;
    std::map<std::string, std::string> values_;
};

}  // namespace mpcgrad
